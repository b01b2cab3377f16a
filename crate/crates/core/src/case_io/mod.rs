//! Static network cases, synthetic dynamic data and the initialization
//! power flow.

mod builtin;
mod parse;
mod powerflow;
mod synth;

use serde::{Deserialize, Serialize};

use crate::protection::RelayConfig;

pub use builtin::{builtin_case, smib_case, BuiltinCase};
pub use parse::{parse_case, parse_json_case, parse_matpower_case, to_json, NATIVE_FORMAT_VERSION};
pub use powerflow::{solve_power_flow, PowerFlowOptions, PowerFlowSolution};
pub use synth::{assign_flow_based_ratings, synthesize_dynamics, SynthesisOptions};

/// Current limit given to branches whose source data carries no rating.
pub const UNRATED_LIMIT: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    #[serde(rename = "pv")]
    PV,
    #[serde(rename = "pq")]
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: u32,
    pub kind: BusKind,
    /// MW
    pub p_load: f64,
    /// MVAr
    pub q_load: f64,
    /// pu on the system base
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub base_kv: f64,
    pub vm0: f64,
    /// degrees
    pub va0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// Heating limit I_c in pu current.
    pub current_limit: f64,
    #[serde(default = "default_status")]
    pub status: BranchStatus,
}

fn default_status() -> BranchStatus {
    BranchStatus::In
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernorParams {
    /// Droop on the machine rating.
    pub r_droop: f64,
    pub t_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExciterParams {
    pub k_a: f64,
    pub t_a: f64,
    pub efd_min: f64,
    pub efd_max: f64,
}

/// Two-axis machine data on the machine's own MVA rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineDynamics {
    pub rating_mva: f64,
    /// Inertia constant, s.
    pub h: f64,
    /// Damping, pu torque per pu speed.
    pub d: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    pub governor: Option<GovernorParams>,
    pub exciter: ExciterParams,
    pub is_condenser: bool,
}

/// A generating unit or synchronous condenser: power-flow set-points plus
/// (after synthesis) its dynamic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    /// 1-based unit number; reported as `G{id}`.
    pub id: u32,
    pub bus: u32,
    /// MW
    pub p_gen: f64,
    /// MVAr
    pub q_gen: f64,
    pub v_set: f64,
    pub mbase: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<MachineDynamics>,
}

impl MachineParams {
    pub fn label(&self) -> String {
        format!("G{}", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDefinition {
    #[serde(default = "default_version")]
    pub version: u32,
    pub base_mva: f64,
    #[serde(default = "default_f_nominal")]
    pub f_nominal: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub machines: Vec<MachineParams>,
    #[serde(default)]
    pub relays: RelayConfig,
}

fn default_version() -> u32 {
    NATIVE_FORMAT_VERSION
}

fn default_f_nominal() -> f64 {
    60.0
}

impl CaseDefinition {
    /// Index of the bus with the given id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_index(&self, id: u32) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn machine_index(&self, id: u32) -> Option<usize> {
        self.machines.iter().position(|m| m.id == id)
    }

    /// Total system demand in MW.
    pub fn total_demand_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    /// True when every machine carries dynamic data.
    pub fn has_dynamics(&self) -> bool {
        self.machines.iter().all(|m| m.dynamics.is_some())
    }

    /// Checks cross references and basic record invariants.
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::Semantic;
        if !(self.base_mva > 0.0) {
            return Err(Semantic(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        if !(self.f_nominal > 0.0) {
            return Err(Semantic("f_nominal must be positive".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(Semantic(format!("duplicate bus id {}", b.id)));
            }
            if !(b.vm0 > 0.0) {
                return Err(Semantic(format!("bus {} has nonpositive vm0", b.id)));
            }
            if !b.p_load.is_finite() || !b.q_load.is_finite() {
                return Err(Semantic(format!("bus {} has non-finite load", b.id)));
            }
        }
        for br in &self.branches {
            for end in [br.from_bus, br.to_bus] {
                if !ids.contains(&end) {
                    return Err(Semantic(format!(
                        "branch {} references missing bus {}",
                        br.id, end
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Semantic(format!("branch {} is a self loop", br.id)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Semantic(format!("branch {} has zero impedance", br.id)));
            }
            if !(br.current_limit > 0.0) {
                return Err(Semantic(format!(
                    "branch {} has nonpositive current limit",
                    br.id
                )));
            }
        }
        for m in &self.machines {
            if !ids.contains(&m.bus) {
                return Err(Semantic(format!(
                    "machine {} references missing bus {}",
                    m.id, m.bus
                )));
            }
            if let Some(d) = &m.dynamics {
                let ok = d.h > 0.0
                    && d.td0_p > 0.0
                    && d.tq0_p > 0.0
                    && d.exciter.t_a > 0.0
                    && d.xd >= d.xd_p
                    && d.xd_p > 0.0
                    && d.xq >= d.xq_p
                    && d.xq_p > 0.0
                    && d.rating_mva > 0.0
                    && d.governor.map_or(true, |g| g.t_g > 0.0 && g.r_droop > 0.0);
                if !ok {
                    return Err(Semantic(format!(
                        "machine {} has invalid dynamic data",
                        m.id
                    )));
                }
                if d.is_condenser && d.governor.is_some() {
                    return Err(Semantic(format!("condenser {} carries a governor", m.id)));
                }
            }
        }
        self.relays.validate()?;
        Ok(())
    }
}
