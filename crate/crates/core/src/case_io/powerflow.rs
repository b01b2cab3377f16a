use num_complex::Complex64;

use super::{BusKind, CaseDefinition};
use crate::error::{Error, Result};
use crate::network::{build_ybus, find_islands, Topology};
use crate::sparse::{inf_norm, LuSolver, Triplets};

#[derive(Debug, Clone, Copy)]
pub struct PowerFlowOptions {
    /// Mismatch tolerance, pu.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    /// radians
    pub va: Vec<f64>,
    /// Per machine, pu on the system base.
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub converged: bool,
    pub mismatch_inf_norm: f64,
    pub iterations: usize,
}

impl PowerFlowSolution {
    pub fn voltage(&self, bus: usize) -> Complex64 {
        Complex64::from_polar(self.vm[bus], self.va[bus])
    }
}

/// Polar Newton power flow. Generator reactive limits are not enforced.
/// PV buses without an in-service machine are treated as PQ.
pub fn solve_power_flow(
    case: &CaseDefinition,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    let n = case.buses.len();
    let topo = Topology::from_case(case);
    let y = build_ybus(case, &topo);
    let base = case.base_mva;

    let mut has_machine = vec![false; n];
    let mut vm = case.buses.iter().map(|b| b.vm0).collect::<Vec<_>>();
    let mut va = case
        .buses
        .iter()
        .map(|b| b.va0.to_radians())
        .collect::<Vec<_>>();
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (i, b) in case.buses.iter().enumerate() {
        p_spec[i] -= b.p_load / base;
        q_spec[i] -= b.q_load / base;
    }
    for m in &case.machines {
        let i = case.bus_index(m.bus).expect("validated");
        if !has_machine[i] {
            vm[i] = m.v_set;
        }
        has_machine[i] = true;
        p_spec[i] += m.p_gen / base;
        q_spec[i] += m.q_gen / base;
    }
    let kind: Vec<BusKind> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| match b.kind {
            BusKind::PV if !has_machine[i] => BusKind::PQ,
            k => k,
        })
        .collect();

    let islands = find_islands(case, &topo);
    for isl in &islands.islands {
        let slacks = isl
            .buses
            .iter()
            .filter(|&&b| kind[b] == BusKind::Slack)
            .count();
        if slacks != 1 {
            return Err(Error::Semantic(format!(
                "connected component containing bus {} has {slacks} slack buses",
                case.buses[isl.buses[0]].id
            )));
        }
    }

    // Unknown ordering: angles of non-slack buses, then magnitudes of PQ buses.
    let ang: Vec<usize> = (0..n).filter(|&i| kind[i] != BusKind::Slack).collect();
    let mag: Vec<usize> = (0..n).filter(|&i| kind[i] == BusKind::PQ).collect();
    let mut ang_pos = vec![usize::MAX; n];
    let mut mag_pos = vec![usize::MAX; n];
    for (k, &i) in ang.iter().enumerate() {
        ang_pos[i] = k;
    }
    for (k, &i) in mag.iter().enumerate() {
        mag_pos[i] = ang.len() + k;
    }
    let dim = ang.len() + mag.len();

    let mismatch = |vm: &[f64], va: &[f64]| -> (Vec<Complex64>, Vec<Complex64>, Vec<f64>) {
        let v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(vm[i], va[i]))
            .collect();
        let ibus = y.mul(&v);
        let mut f = vec![0.0; dim];
        for &i in &ang {
            let s = v[i] * ibus[i].conj();
            f[ang_pos[i]] = s.re - p_spec[i];
            if kind[i] == BusKind::PQ {
                f[mag_pos[i]] = s.im - q_spec[i];
            }
        }
        (v, ibus, f)
    };

    let mut solver = LuSolver::new();
    let mut iterations = 0;
    let (mut v, mut ibus, mut f) = mismatch(&vm, &va);
    let mut norm = inf_norm(&f);
    while norm > opts.tol {
        if iterations >= opts.max_iter || !norm.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations,
                mismatch: norm,
            });
        }
        iterations += 1;
        // dS_i/dva_j = j V_i conj(Ibus_i) delta_ij - j V_i conj(Y_ij V_j)
        // dS_i/dvm_j = V_i conj(Y_ij V_j/|V_j|) + conj(Ibus_i) V_i/|V_i| delta_ij
        let mut jac = Triplets::new(dim, dim);
        for &i in &ang {
            let vi = v[i];
            for &(j, yij) in &y.rows[i] {
                let t = vi * (yij * v[j]).conj();
                let mut ds_da = Complex64::new(0.0, -1.0) * t;
                let mut ds_dm = vi * (yij * v[j] / vm[j]).conj();
                if i == j {
                    ds_da += Complex64::new(0.0, 1.0) * vi * ibus[i].conj();
                    ds_dm += ibus[i].conj() * vi / vm[i];
                }
                let rows = [
                    (ang_pos[i], ds_da.re, ds_dm.re),
                    (mag_pos[i], ds_da.im, ds_dm.im),
                ];
                for (r, da, dm) in rows {
                    if r == usize::MAX {
                        continue;
                    }
                    if ang_pos[j] != usize::MAX {
                        jac.push(r, ang_pos[j], da);
                    }
                    if mag_pos[j] != usize::MAX {
                        jac.push(r, mag_pos[j], dm);
                    }
                }
            }
        }
        let lu = solver.factor(&jac, "power-flow Jacobian")?;
        let mut dx: Vec<f64> = f.iter().map(|x| -x).collect();
        lu.solve_in_place(&mut dx, "power-flow Jacobian")?;
        for &i in &ang {
            va[i] += dx[ang_pos[i]];
        }
        for &i in &mag {
            vm[i] += dx[mag_pos[i]];
        }
        (v, ibus, f) = mismatch(&vm, &va);
        norm = inf_norm(&f);
    }

    // Machine outputs: slack P shared in proportion to scheduled output (or
    // equally when none is scheduled); Q shared equally at each bus.
    let mut p_gen: Vec<f64> = case.machines.iter().map(|m| m.p_gen / base).collect();
    let mut q_gen = vec![0.0; case.machines.len()];
    for i in 0..n {
        let at: Vec<usize> = case
            .machines
            .iter()
            .enumerate()
            .filter(|(_, m)| case.bus_index(m.bus) == Some(i))
            .map(|(k, _)| k)
            .collect();
        if at.is_empty() {
            continue;
        }
        let s = v[i] * ibus[i].conj();
        let b = &case.buses[i];
        let q_total = s.im + b.q_load / base;
        for &k in &at {
            q_gen[k] = q_total / at.len() as f64;
        }
        if kind[i] == BusKind::Slack {
            let p_total = s.re + b.p_load / base;
            let sched: f64 = at.iter().map(|&k| p_gen[k]).sum();
            for &k in &at {
                p_gen[k] = if sched.abs() > 1e-12 {
                    p_total * p_gen[k] / sched
                } else {
                    p_total / at.len() as f64
                };
            }
        }
    }

    Ok(PowerFlowSolution {
        vm,
        va,
        p_gen,
        q_gen,
        converged: true,
        mismatch_inf_norm: norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{builtin_case, parse_case, BuiltinCase};

    fn two_bus(p_load: f64) -> CaseDefinition {
        let text = format!(
            "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 230;\n2 1 {p_load} 0 0 0 1 1 0 230;\n];\n\
             mpc.gen = [\n1 0 0 100 -100 1.0 100 1;\n];\nmpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1;\n];\n"
        );
        parse_case(&text).unwrap()
    }

    #[test]
    fn zero_injection_is_flat() {
        let sol = solve_power_flow(&two_bus(0.0), &PowerFlowOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.vm, vec![1.0, 1.0]);
        assert_eq!(sol.va, vec![0.0, 0.0]);
    }

    #[test]
    fn two_bus_angle_matches_grid_search() {
        // 1 pu at bus 2, z = j0.1: P = |V1||V2| sin(-θ2)/x with |V2| from Q balance.
        let sol = solve_power_flow(&two_bus(100.0), &PowerFlowOptions::default()).unwrap();
        // Brute-force the two real equations on a fine grid, then polish by
        // bisection on the angle with |V2| from the reactive balance.
        let q_res = |vm: f64, th: f64| (vm * vm - vm * th.cos()) / 0.1;
        let p_res = |vm: f64, th: f64| vm * th.sin() / 0.1 + 1.0;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 0..2000 {
            let th = -0.5 + 0.5 * a as f64 / 2000.0;
            for b in 0..400 {
                let vm = 0.9 + 0.2 * b as f64 / 400.0;
                let r = p_res(vm, th).abs() + q_res(vm, th).abs();
                if r < best.0 {
                    best = (r, vm, th);
                }
            }
        }
        assert!((sol.vm[1] - best.1).abs() < 1e-3);
        assert!((sol.va[1] - best.2).abs() < 1e-3);
        // With |V2| pinned at 1 the textbook angle is asin(-0.1); the solved
        // magnitude sits a little below 1 so the angle is slightly larger.
        assert!(sol.va[1] < (-0.1f64).asin());
        assert!(sol.mismatch_inf_norm <= 1e-8);
        assert!((sol.p_gen[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn beyond_transfer_limit_diverges() {
        // P_max = |V1||V2|/x = 10 pu = 1000 MW
        match solve_power_flow(&two_bus(1200.0), &PowerFlowOptions::default()) {
            Err(Error::PowerFlowDiverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn ieee_cases_converge() {
        for which in [
            BuiltinCase::Ieee9,
            BuiltinCase::Ieee39,
            BuiltinCase::Ieee118,
        ] {
            let case = builtin_case(which);
            let sol = solve_power_flow(&case, &PowerFlowOptions::default()).unwrap();
            assert!(sol.mismatch_inf_norm <= 1e-8, "{which:?}");
            let gen: f64 = sol.p_gen.iter().sum();
            assert!(
                gen * case.base_mva > case.total_demand_mw(),
                "{which:?} losses must be positive"
            );
        }
    }
}
