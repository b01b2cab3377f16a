use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    solve_power_flow, CaseDefinition, ExciterParams, GovernorParams, MachineDynamics,
    PowerFlowOptions, PowerFlowSolution,
};
use crate::network::{branch_currents, Topology};

/// Controls for [`synthesize_dynamics`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthesisOptions {
    pub seed: u64,
    /// Machine id -> damping override (may be negative).
    pub damping_overrides: BTreeMap<u32, f64>,
}

impl SynthesisOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            damping_overrides: BTreeMap::new(),
        }
    }

    pub fn with_damping(mut self, machine_id: u32, d: f64) -> Self {
        self.damping_overrides.insert(machine_id, d);
        self
    }
}

/// Machines whose solved active output is below this are condensers.
const CONDENSER_P_PU: f64 = 1e-3;
pub(crate) const EFD_LIMIT: f64 = 6.0;

/// Draws two-axis machine, exciter and governor data for every machine.
///
/// Ratings come from the initialization power flow when it converges and
/// from the case set-points otherwise: 1.25 times the apparent power, with a
/// floor of 10% of the system base.
pub fn synthesize_dynamics(case: &CaseDefinition, opts: &SynthesisOptions) -> CaseDefinition {
    let base = case.base_mva;
    let pf = solve_power_flow(case, &PowerFlowOptions::default()).ok();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = case.clone();
    for (k, m) in out.machines.iter_mut().enumerate() {
        let (p, q) = match &pf {
            Some(sol) => (sol.p_gen[k] * base, sol.q_gen[k] * base),
            None => (m.p_gen, m.q_gen),
        };
        let rating = (1.25 * p.hypot(q)).max(0.1 * base);
        let is_condenser = p.abs() < CONDENSER_P_PU * base;
        // Draw every field for every machine so one machine's class never
        // shifts another machine's parameters.
        let h = rng.gen_range(2.5..=6.5);
        let xd = rng.gen_range(1.0..=2.3);
        let xd_p = rng.gen_range(0.15..=0.4);
        let td0_p = rng.gen_range(4.0..=9.0);
        let tq0_p = rng.gen_range(0.5..=1.5);
        let d = rng.gen_range(0.0..=2.0);
        let k_a = rng.gen_range(50.0..=200.0);
        let t_g = rng.gen_range(0.2..=0.7);
        m.dynamics = Some(MachineDynamics {
            rating_mva: rating,
            h,
            d: opts.damping_overrides.get(&m.id).copied().unwrap_or(d),
            xd,
            xq: 0.9 * xd,
            xd_p,
            xq_p: xd_p,
            td0_p,
            tq0_p,
            governor: (!is_condenser).then_some(GovernorParams { r_droop: 0.05, t_g }),
            exciter: ExciterParams {
                k_a,
                t_a: 0.02,
                efd_min: -EFD_LIMIT,
                efd_max: EFD_LIMIT,
            },
            is_condenser,
        });
    }
    out
}

/// Replaces every branch current limit with `margin` times its base-case
/// current magnitude (at least `floor` pu). Used for cases that ship
/// without thermal ratings.
pub fn assign_flow_based_ratings(
    case: &CaseDefinition,
    pf: &PowerFlowSolution,
    margin: f64,
    floor: f64,
) -> CaseDefinition {
    let mut out = case.clone();
    let topo = Topology::from_case(case);
    for k in 0..case.branches.len() {
        let br = &case.branches[k];
        let f = case.bus_index(br.from_bus).expect("validated");
        let t = case.bus_index(br.to_bus).expect("validated");
        let i0 = if topo.branch_in[k] {
            let (a, b) = branch_currents(case, k, pf.voltage(f), pf.voltage(t));
            a.norm().max(b.norm())
        } else {
            0.0
        };
        out.branches[k].current_limit = (margin * i0).max(floor);
    }
    out
}
