//! Cascade runners: the trapezoidal reference, plain backward Euler, backward
//! Euler with the predictor-corrector loop, and the partitioned RK4
//! comparator. All four share one event engine.

mod output;
mod pc;
mod sim;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case_io::{solve_power_flow, CaseDefinition, PowerFlowOptions, PowerFlowSolution};
use crate::dae::{init_machines, MachineInit, MachineModel};
use crate::error::{Error, Result};
use crate::integrators::{IntegratorConfig, Method};
use crate::modal::{DetectionConfig, InstabilityVerdict, SettleConfig};
use crate::protection::{Event, Target};

pub use output::{end_state_json, events_jsonl, timeline_csv, write_outputs};
pub use pc::{analyze_tiers, TierAnalysis};
pub(crate) use sim::{Context, Sim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMethod {
    Tm,
    Bem,
    BemPc,
    Rk4,
}

impl RunMethod {
    pub fn name(self) -> &'static str {
        match self {
            RunMethod::Tm => "tm",
            RunMethod::Bem => "bem",
            RunMethod::BemPc => "bem_pc",
            RunMethod::Rk4 => "rk4",
        }
    }

    /// Integrator driving the cascade.
    pub fn integrator(self) -> Method {
        match self {
            RunMethod::Tm => Method::Tm,
            RunMethod::Bem | RunMethod::BemPc => Method::Bem,
            RunMethod::Rk4 => Method::Rk4,
        }
    }

    /// Whether the ground-truth style measured SPS is armed.
    fn measured_sps(self) -> bool {
        matches!(self, RunMethod::Tm | RunMethod::Rk4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopConfig {
    /// Speed-variation window, s.
    pub window: f64,
    /// Largest machine speed spread over the window that counts as settled, pu.
    pub threshold: f64,
    /// Simulated-time cap, s.
    pub t_end: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            window: 5.0,
            threshold: 1e-5,
            t_end: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcConfig {
    pub max_rounds: usize,
    pub settle: SettleConfig,
    pub detection: DetectionConfig,
    /// Machines tripped per unstable island by the functional SPS.
    pub sps_machines: usize,
    /// When non-empty the SPS trips these branch ids instead of machines.
    pub sps_lines: Vec<u32>,
    /// Predictor worker threads; 0 or 1 runs serially.
    pub workers: usize,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            settle: SettleConfig::default(),
            detection: DetectionConfig::default(),
            sps_machines: 2,
            sps_lines: Vec::new(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: RunMethod,
    /// Integrator settings; the method's defaults when absent.
    pub integrator: Option<IntegratorConfig>,
    /// Bus ids disconnected at `outage_time`.
    pub initial_outages: Vec<u32>,
    pub outage_time: f64,
    pub stop: StopConfig,
    pub pc: PcConfig,
    /// Wall-clock budget in seconds; the run stops early when exceeded.
    pub wall_budget: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: RunMethod::Tm,
            integrator: None,
            initial_outages: Vec::new(),
            outage_time: 3.0,
            stop: StopConfig::default(),
            pc: PcConfig::default(),
            wall_budget: None,
        }
    }
}

impl RunConfig {
    pub fn new(method: RunMethod, initial_outages: Vec<u32>) -> Self {
        Self {
            method,
            initial_outages,
            ..Self::default()
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        self.integrator
            .clone()
            .unwrap_or_else(|| IntegratorConfig::for_method(self.method.integrator()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Settled,
    /// No energized island is left.
    Collapsed,
    /// Newton failed twice at the smallest step.
    Nonconverged,
    TimeLimit,
    WallBudget,
    /// The predictor-corrector needed more rounds than allowed.
    RoundCap,
}

impl Termination {
    /// Counted as a collapse in Monte-Carlo statistics.
    pub fn is_collapse(self) -> bool {
        matches!(self, Termination::Collapsed | Termination::Nonconverged)
    }
}

/// One row of the tier timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRecord {
    pub tier: usize,
    pub t: f64,
    /// Branches out of service or de-energized, cumulative.
    pub lines_out: usize,
    pub demand_served_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndState {
    pub t: f64,
    pub bus_energized: Vec<bool>,
    /// Voltage magnitude per bus, pu (0 when de-energized).
    pub vm: Vec<f64>,
    /// Voltage angle in the island's COI frame, degrees.
    pub va_deg: Vec<f64>,
    /// Electrical frequency of the bus's island, Hz (0 when de-energized).
    pub bus_freq_hz: Vec<f64>,
    pub machine_on: Vec<bool>,
    pub line_on: Vec<bool>,
    pub island_freq_hz: Vec<f64>,
    pub demand_total_mw: f64,
    pub demand_served_mw: f64,
}

impl EndState {
    pub fn demand_loss_pct(&self) -> f64 {
        if self.demand_total_mw <= 0.0 {
            0.0
        } else {
            100.0 * (self.demand_total_mw - self.demand_served_mw) / self.demand_total_mw
        }
    }

    pub fn lines_out(&self) -> usize {
        self.line_on.iter().filter(|on| !**on).count()
    }

    pub fn machines_out(&self) -> usize {
        self.machine_on.iter().filter(|on| !**on).count()
    }
}

/// A predictor-corrector round that found an unstable tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcRound {
    pub round: usize,
    pub tier: usize,
    pub t_f: f64,
    pub verdicts: Vec<InstabilityVerdict>,
    /// Case indices of the SPS targets scheduled at `t_f + sps_delay`.
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Wall time spent integrating the cascade, s.
    pub cascade_s: f64,
    /// Wall time spent settling and eigen-analysing tiers, s.
    pub predictor_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeRun {
    pub method: RunMethod,
    /// Event targets carry case element ids.
    pub events: Vec<Event>,
    pub tiers: Vec<TierRecord>,
    pub end_state: EndState,
    pub termination: Termination,
    /// Branch ids out after the initial outage tier.
    pub initial_line_outages: Vec<u32>,
    /// Branch ids lost afterwards.
    pub dependent_line_outages: Vec<u32>,
    pub pc_rounds: Vec<PcRound>,
    pub steps: usize,
    pub runtime_s: f64,
    pub timings: Timings,
}

impl CascadeRun {
    /// True when nothing happened beyond the initial outages.
    pub fn resilient(&self) -> bool {
        self.dependent_line_outages.is_empty() && self.events.iter().all(|e| e.tier == 0)
    }
}

/// A case ready to simulate: dynamics present, power flow solved and machine
/// set-points initialized.
#[derive(Debug, Clone)]
pub struct PreparedCase {
    pub case: CaseDefinition,
    pub pf: PowerFlowSolution,
    pub machines: Vec<MachineModel>,
    pub inits: Vec<MachineInit>,
}

impl PreparedCase {
    pub fn new(case: CaseDefinition) -> Result<Self> {
        case.validate()?;
        if !case.has_dynamics() {
            return Err(Error::Semantic(
                "every machine needs dynamic data (see synthesize_dynamics)".into(),
            ));
        }
        let pf = solve_power_flow(&case, &PowerFlowOptions::default())?;
        let (machines, inits) = init_machines(&case, &pf);
        Ok(Self {
            case,
            pf,
            machines,
            inits,
        })
    }
}

fn check_outages(case: &CaseDefinition, cfg: &RunConfig) -> Result<()> {
    for id in &cfg.initial_outages {
        if case.bus_index(*id).is_none() {
            return Err(Error::InvalidArgument(format!(
                "initial outage names unknown bus {id}"
            )));
        }
    }
    cfg.integrator_config().validate()?;
    case.relays.validate()
}

/// Runs one cascade with the method named in `cfg`.
pub fn run_cascade(prep: &PreparedCase, cfg: &RunConfig) -> Result<CascadeRun> {
    check_outages(&prep.case, cfg)?;
    match cfg.method {
        RunMethod::BemPc => pc::run_bem_pc(prep, cfg),
        _ => run_plain(prep, cfg),
    }
}

fn run_plain(prep: &PreparedCase, cfg: &RunConfig) -> Result<CascadeRun> {
    let start = Instant::now();
    let ctx = Context::new(prep, cfg);
    let mut sim = Sim::new(&ctx, false);
    let termination = sim.run();
    let elapsed = start.elapsed().as_secs_f64();
    let timings = Timings {
        cascade_s: elapsed,
        predictor_s: 0.0,
    };
    Ok(sim.finish(termination, Vec::new(), elapsed, timings))
}
