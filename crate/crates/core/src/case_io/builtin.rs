use super::{
    parse_matpower_case, BranchRecord, BranchStatus, BusKind, BusRecord, CaseDefinition,
    ExciterParams, MachineDynamics, MachineParams, NATIVE_FORMAT_VERSION,
};
use crate::protection::RelayConfig;

/// Bundled IEEE test systems (static power-flow data only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinCase {
    Ieee9,
    Ieee39,
    Ieee118,
}

impl BuiltinCase {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinCase::Ieee9 => "case9",
            BuiltinCase::Ieee39 => "case39",
            BuiltinCase::Ieee118 => "case118",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "case9" | "ieee9" => Some(BuiltinCase::Ieee9),
            "case39" | "ieee39" => Some(BuiltinCase::Ieee39),
            "case118" | "ieee118" => Some(BuiltinCase::Ieee118),
            _ => None,
        }
    }

    fn text(self) -> &'static str {
        match self {
            BuiltinCase::Ieee9 => include_str!("../../data/case9.m"),
            BuiltinCase::Ieee39 => include_str!("../../data/case39.m"),
            BuiltinCase::Ieee118 => include_str!("../../data/case118.m"),
        }
    }
}

pub fn builtin_case(which: BuiltinCase) -> CaseDefinition {
    parse_matpower_case(which.text()).expect("bundled case data is valid")
}

/// A small machine exporting 0.8 pu into a machine with a hundred times its
/// rating and far more inertia, which acts as a stiff source. The export
/// runs over a direct line and a parallel path through bus 3, so outaging
/// bus 3 weakens the tie. `d` is the small machine's damping on its own rating. Neither
/// machine has a governor, so damping comes from `d` and the field dynamics.
pub fn smib_case(d: f64) -> CaseDefinition {
    let bus = |id, kind| BusRecord {
        id,
        kind,
        p_load: 0.0,
        q_load: 0.0,
        g_shunt: 0.0,
        b_shunt: 0.0,
        base_kv: 230.0,
        vm0: 1.0,
        va0: 0.0,
    };
    let line = |id, from_bus, to_bus, x| BranchRecord {
        id,
        from_bus,
        to_bus,
        r: 0.0,
        x,
        b_charging: 0.0,
        current_limit: super::UNRATED_LIMIT,
        status: BranchStatus::In,
    };
    let exciter = ExciterParams {
        k_a: 50.0,
        t_a: 0.02,
        efd_min: -6.0,
        efd_max: 6.0,
    };
    let stiff = MachineDynamics {
        rating_mva: 10_000.0,
        h: 20.0,
        d: 2.0,
        xd: 1.8,
        xq: 1.7,
        xd_p: 0.3,
        xq_p: 0.3,
        td0_p: 8.0,
        tq0_p: 0.4,
        governor: None,
        exciter,
        is_condenser: false,
    };
    let small = MachineDynamics {
        rating_mva: 100.0,
        h: 3.5,
        d,
        xd: 1.8,
        xq: 1.7,
        xd_p: 0.3,
        xq_p: 0.3,
        td0_p: 8.0,
        tq0_p: 0.4,
        governor: None,
        exciter,
        is_condenser: false,
    };
    CaseDefinition {
        version: NATIVE_FORMAT_VERSION,
        base_mva: 100.0,
        f_nominal: 60.0,
        buses: vec![
            bus(1, BusKind::Slack),
            bus(2, BusKind::PV),
            bus(3, BusKind::PQ),
        ],
        branches: vec![line(1, 1, 2, 0.4), line(2, 2, 3, 0.2), line(3, 3, 1, 0.2)],
        machines: vec![
            MachineParams {
                id: 1,
                bus: 1,
                p_gen: -80.0,
                q_gen: 0.0,
                v_set: 1.0,
                mbase: 10_000.0,
                dynamics: Some(stiff),
            },
            MachineParams {
                id: 2,
                bus: 2,
                p_gen: 80.0,
                q_gen: 0.0,
                v_set: 1.0,
                mbase: 100.0,
                dynamics: Some(small),
            },
        ],
        relays: RelayConfig::default(),
    }
}
