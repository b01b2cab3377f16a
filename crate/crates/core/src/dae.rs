//! Island DAE model in the island's center-of-inertia (COI) frame.
//!
//! Differential states per machine, at offset `6k`: `E_q'`, `E_d'`, rotor
//! angle θ relative to the COI, speed deviation Δω̄ relative to the COI,
//! exciter output `E_fd` and mechanical power `P_m`. Two island aggregates
//! follow: δ_COI and Δω_COI. Algebraic variables are the bus voltages
//! stacked as `[re; im]`. All quantities are per unit on the system base.

use num_complex::Complex64;

use crate::case_io::{CaseDefinition, MachineParams, PowerFlowSolution};
use crate::network::{AdmittanceMatrix, Island};
use crate::sparse::Triplets;

pub const STATES_PER_MACHINE: usize = 6;
pub const EQ: usize = 0;
pub const ED: usize = 1;
pub const THETA: usize = 2;
pub const DW: usize = 3;
pub const EFD: usize = 4;
pub const PM: usize = 5;

/// Below this magnitude constant-power loads become constant impedance.
pub const LOAD_LOW_VOLTAGE: f64 = 0.4;

/// A differential-algebraic system `x' = f(x, V)`, `0 = g(x, V)`.
pub trait DaeSystem {
    fn n_diff(&self) -> usize;
    fn n_alg(&self) -> usize;
    fn eval_f(&self, x: &[f64], v: &[f64], out: &mut [f64]);
    fn eval_g(&self, x: &[f64], v: &[f64], out: &mut [f64]);
    /// Partial derivatives of f and g. Implementations must push the same
    /// sparsity pattern for every (x, V) so factorizations can be reused.
    fn partials(&self, x: &[f64], v: &[f64], p: &mut Partials);
    /// A differential row left out of step-size control, typically a pure
    /// integrator whose ramp any implicit method follows exactly.
    fn step_control_skip(&self) -> Option<usize> {
        None
    }
}

/// Partial derivatives of a [`DaeSystem`].
#[derive(Debug, Clone, Default)]
pub struct Partials {
    pub fx: Triplets,
    pub fv: Triplets,
    pub gx: Triplets,
    pub gv: Triplets,
}

impl Partials {
    pub fn reset(&mut self, n: usize, m2: usize) {
        for (t, r, c) in [
            (&mut self.fx, n, n),
            (&mut self.fv, n, m2),
            (&mut self.gx, m2, n),
            (&mut self.gv, m2, m2),
        ] {
            t.nrows = r;
            t.ncols = c;
            t.clear();
        }
    }
}

/// Machine data converted to the system base, with its control set-points.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    /// Index into the case machine list.
    pub index: usize,
    /// Local bus index inside the island.
    pub bus: usize,
    pub h: f64,
    pub d: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    /// (droop R on the system base, T_g)
    pub governor: Option<(f64, f64)>,
    pub k_a: f64,
    pub t_a: f64,
    pub efd_min: f64,
    pub efd_max: f64,
    pub is_condenser: bool,
    pub v_ref: f64,
    pub p_ref: f64,
}

impl MachineModel {
    /// Converts rating-base data; set-points are filled in by initialization.
    pub fn from_params(index: usize, bus: usize, m: &MachineParams, base_mva: f64) -> Self {
        let d = m.dynamics.as_ref().expect("machine dynamics synthesized");
        let to_sys = d.rating_mva / base_mva;
        Self {
            index,
            bus,
            h: d.h * to_sys,
            d: d.d * to_sys,
            xd: d.xd / to_sys,
            xq: d.xq / to_sys,
            xd_p: d.xd_p / to_sys,
            xq_p: d.xq_p / to_sys,
            td0_p: d.td0_p,
            tq0_p: d.tq0_p,
            governor: d.governor.map(|g| (g.r_droop / to_sys, g.t_g)),
            k_a: d.exciter.k_a,
            t_a: d.exciter.t_a,
            efd_min: d.exciter.efd_min,
            efd_max: d.exciter.efd_max,
            is_condenser: d.is_condenser,
            v_ref: 1.0,
            p_ref: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadModel {
    pub bus: usize,
    /// Constant-power demand after shedding, pu.
    pub p: f64,
    pub q: f64,
}

/// Stator quantities of one machine and their gradients with respect to
/// `[E_q', E_d', θ, V_re, V_im]`.
#[derive(Debug, Clone, Copy)]
struct Stator {
    vt: f64,
    id: f64,
    iq: f64,
    pe: f64,
    ir: f64,
    ii: f64,
    g_id: [f64; 5],
    g_iq: [f64; 5],
    g_pe: [f64; 5],
    g_ir: [f64; 5],
    g_ii: [f64; 5],
    g_vt: [f64; 2],
}

fn stator(m: &MachineModel, eq: f64, ed: f64, th: f64, vr: f64, vi: f64) -> Stator {
    let (s, c) = th.sin_cos();
    let vd = vr * s - vi * c;
    let vq = vr * c + vi * s;
    let g_vd = [0.0, 0.0, vq, s, -c];
    let g_vq = [0.0, 0.0, -vd, c, s];
    let id = (eq - vq) / m.xd_p;
    let iq = (vd - ed) / m.xq_p;
    let mut g_id = [0.0; 5];
    let mut g_iq = [0.0; 5];
    let mut g_pe = [0.0; 5];
    let mut g_ir = [0.0; 5];
    let mut g_ii = [0.0; 5];
    for k in 0..5 {
        g_id[k] = (if k == 0 { 1.0 } else { 0.0 } - g_vq[k]) / m.xd_p;
        g_iq[k] = (g_vd[k] - if k == 1 { 1.0 } else { 0.0 }) / m.xq_p;
    }
    for k in 0..5 {
        g_pe[k] = g_vd[k] * id + vd * g_id[k] + g_vq[k] * iq + vq * g_iq[k];
        g_ir[k] = s * g_id[k] + c * g_iq[k];
        g_ii[k] = -c * g_id[k] + s * g_iq[k];
    }
    g_ir[2] += id * c - iq * s;
    g_ii[2] += id * s + iq * c;
    let vt = vr.hypot(vi);
    let g_vt = if vt > 1e-12 {
        [vr / vt, vi / vt]
    } else {
        [0.0, 0.0]
    };
    Stator {
        vt,
        id,
        iq,
        pe: vd * id + vq * iq,
        ir: id * s + iq * c,
        ii: -id * c + iq * s,
        g_id,
        g_iq,
        g_pe,
        g_ir,
        g_ii,
        g_vt,
    }
}

fn clamp_with_slope(v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if v < lo {
        (lo, 0.0)
    } else if v > hi {
        (hi, 0.0)
    } else {
        (v, 1.0)
    }
}

/// Load current injection `-conj(S/V)` with its 2x2 voltage Jacobian.
fn load_injection(l: &LoadModel, vr: f64, vi: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let v2 = vr * vr + vi * vi;
    let (p, q) = (l.p, l.q);
    let a = p * vr + q * vi;
    let b = p * vi - q * vr;
    if v2 >= LOAD_LOW_VOLTAGE * LOAD_LOW_VOLTAGE {
        let inv = 1.0 / v2;
        let inv2 = inv * inv;
        let i = [-a * inv, -b * inv];
        let j = [
            [
                -p * inv + 2.0 * vr * a * inv2,
                -q * inv + 2.0 * vi * a * inv2,
            ],
            [
                q * inv + 2.0 * vr * b * inv2,
                -p * inv + 2.0 * vi * b * inv2,
            ],
        ];
        (i, j)
    } else {
        let inv = 1.0 / (LOAD_LOW_VOLTAGE * LOAD_LOW_VOLTAGE);
        (
            [-a * inv, -b * inv],
            [[-p * inv, -q * inv], [q * inv, -p * inv]],
        )
    }
}

/// One energized island: machines, loads and network in local numbering.
#[derive(Debug, Clone)]
pub struct IslandModel {
    /// Global bus index of each local bus.
    pub buses: Vec<usize>,
    pub machines: Vec<MachineModel>,
    pub loads: Vec<LoadModel>,
    pub ybus: AdmittanceMatrix,
    yn: Triplets,
    pub omega_s: f64,
    pub h_total: f64,
}

impl IslandModel {
    /// Builds the model of `island`. `machines` carries the system-base data
    /// and set-points of every case machine; `load_fraction` is per bus.
    pub fn new(
        case: &CaseDefinition,
        island: &Island,
        ybus: AdmittanceMatrix,
        machines: &[MachineModel],
        load_fraction: &[f64],
    ) -> Self {
        assert_eq!(ybus.buses, island.buses);
        let mut local = std::collections::HashMap::new();
        for (l, &g) in island.buses.iter().enumerate() {
            local.insert(g, l);
        }
        let ms: Vec<MachineModel> = island
            .machines
            .iter()
            .map(|&k| {
                let g = case.bus_index(case.machines[k].bus).expect("validated");
                MachineModel {
                    bus: local[&g],
                    ..machines[k].clone()
                }
            })
            .collect();
        let base = case.base_mva;
        let loads = island
            .buses
            .iter()
            .enumerate()
            .filter_map(|(l, &g)| {
                let b = &case.buses[g];
                let f = load_fraction[g];
                (f > 0.0 && (b.p_load != 0.0 || b.q_load != 0.0)).then(|| LoadModel {
                    bus: l,
                    p: f * b.p_load / base,
                    q: f * b.q_load / base,
                })
            })
            .collect();
        let h_total = ms.iter().map(|m| m.h).sum();
        let yn = ybus.real_form();
        Self {
            buses: island.buses.clone(),
            machines: ms,
            loads,
            ybus,
            yn,
            omega_s: 2.0 * std::f64::consts::PI * case.f_nominal,
            h_total,
        }
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn coi_angle_index(&self) -> usize {
        STATES_PER_MACHINE * self.machines.len()
    }

    pub fn coi_speed_index(&self) -> usize {
        STATES_PER_MACHINE * self.machines.len() + 1
    }

    /// Rows of Δω̄ in the differential state vector, one per machine.
    pub fn speed_rows(&self) -> Vec<usize> {
        (0..self.machines.len())
            .map(|k| STATES_PER_MACHINE * k + DW)
            .collect()
    }

    /// Network current injections (machines plus loads), stacked.
    pub fn injections(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.n_buses();
        let mut i = vec![0.0; 2 * m];
        for (k, mm) in self.machines.iter().enumerate() {
            let o = STATES_PER_MACHINE * k;
            let st = stator(
                mm,
                x[o + EQ],
                x[o + ED],
                x[o + THETA],
                v[mm.bus],
                v[m + mm.bus],
            );
            i[mm.bus] += st.ir;
            i[m + mm.bus] += st.ii;
        }
        for l in &self.loads {
            let (il, _) = load_injection(l, v[l.bus], v[m + l.bus]);
            i[l.bus] += il[0];
            i[m + l.bus] += il[1];
        }
        i
    }

    /// Electrical power of each machine.
    pub fn electrical_power(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.n_buses();
        self.machines
            .iter()
            .enumerate()
            .map(|(k, mm)| {
                let o = STATES_PER_MACHINE * k;
                stator(
                    mm,
                    x[o + EQ],
                    x[o + ED],
                    x[o + THETA],
                    v[mm.bus],
                    v[m + mm.bus],
                )
                .pe
            })
            .collect()
    }

    /// Per-machine accelerations `(P_m - P_e - D Δω) / 2H` on absolute speed.
    fn accelerations(&self, x: &[f64], st: &[Stator]) -> Vec<f64> {
        let dw_coi = x[self.coi_speed_index()];
        self.machines
            .iter()
            .enumerate()
            .map(|(k, mm)| {
                let o = STATES_PER_MACHINE * k;
                (x[o + PM] - st[k].pe - mm.d * (x[o + DW] + dw_coi)) / (2.0 * mm.h)
            })
            .collect()
    }

    fn stators(&self, x: &[f64], v: &[f64]) -> Vec<Stator> {
        let m = self.n_buses();
        self.machines
            .iter()
            .enumerate()
            .map(|(k, mm)| {
                let o = STATES_PER_MACHINE * k;
                stator(
                    mm,
                    x[o + EQ],
                    x[o + ED],
                    x[o + THETA],
                    v[mm.bus],
                    v[m + mm.bus],
                )
            })
            .collect()
    }
}

impl DaeSystem for IslandModel {
    fn n_diff(&self) -> usize {
        STATES_PER_MACHINE * self.machines.len() + 2
    }

    /// δ_COI ramps forever at any off-nominal island frequency.
    fn step_control_skip(&self) -> Option<usize> {
        Some(self.coi_angle_index())
    }

    fn n_alg(&self) -> usize {
        2 * self.n_buses()
    }

    fn eval_f(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let st = self.stators(x, v);
        let acc = self.accelerations(x, &st);
        let mean_acc: f64 = self
            .machines
            .iter()
            .zip(&acc)
            .map(|(mm, a)| mm.h * a)
            .sum::<f64>()
            / self.h_total;
        let dw_coi = x[self.coi_speed_index()];
        for (k, mm) in self.machines.iter().enumerate() {
            let o = STATES_PER_MACHINE * k;
            let s = &st[k];
            let (efd, _) = clamp_with_slope(x[o + EFD], mm.efd_min, mm.efd_max);
            out[o + EQ] = (efd - x[o + EQ] - (mm.xd - mm.xd_p) * s.id) / mm.td0_p;
            out[o + ED] = (-x[o + ED] + (mm.xq - mm.xq_p) * s.iq) / mm.tq0_p;
            out[o + THETA] = self.omega_s * x[o + DW];
            out[o + DW] = acc[k] - mean_acc;
            out[o + EFD] = (-x[o + EFD] + mm.k_a * (mm.v_ref - s.vt)) / mm.t_a;
            out[o + PM] = match mm.governor {
                Some((r, tg)) => (-x[o + PM] + mm.p_ref - (x[o + DW] + dw_coi) / r) / tg,
                None => 0.0,
            };
        }
        out[self.coi_angle_index()] = self.omega_s * dw_coi;
        out[self.coi_speed_index()] = mean_acc;
    }

    /// `G = Y_N V - I(x, V)`
    fn eval_g(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let yv = self.ybus.real_form_mul(v);
        let i = self.injections(x, v);
        for k in 0..out.len() {
            out[k] = yv[k] - i[k];
        }
    }

    fn partials(&self, x: &[f64], v: &[f64], p: &mut Partials) {
        let n = self.n_diff();
        let m = self.n_buses();
        p.reset(n, 2 * m);
        let st = self.stators(x, v);
        let icoi = self.coi_speed_index();
        let ht = self.h_total;

        for (k, mm) in self.machines.iter().enumerate() {
            let o = STATES_PER_MACHINE * k;
            let s = &st[k];
            let (vr, vi) = (mm.bus, m + mm.bus);
            let cols = [o + EQ, o + ED, o + THETA];

            // E_q'
            let kd = (mm.xd - mm.xd_p) / mm.td0_p;
            let (_, slope) = clamp_with_slope(x[o + EFD], mm.efd_min, mm.efd_max);
            p.fx.push(o + EQ, o + EQ, -1.0 / mm.td0_p - kd * s.g_id[0]);
            p.fx.push(o + EQ, o + THETA, -kd * s.g_id[2]);
            p.fx.push(o + EQ, o + EFD, slope / mm.td0_p);
            p.fv.push(o + EQ, vr, -kd * s.g_id[3]);
            p.fv.push(o + EQ, vi, -kd * s.g_id[4]);

            // E_d'
            let kq = (mm.xq - mm.xq_p) / mm.tq0_p;
            p.fx.push(o + ED, o + ED, -1.0 / mm.tq0_p + kq * s.g_iq[1]);
            p.fx.push(o + ED, o + THETA, kq * s.g_iq[2]);
            p.fv.push(o + ED, vr, kq * s.g_iq[3]);
            p.fv.push(o + ED, vi, kq * s.g_iq[4]);

            // θ
            p.fx.push(o + THETA, o + DW, self.omega_s);

            // Δω̄_k = a_k - Σ w_j a_j, with coefficient (δ_kj - w_j) on a_j.
            let mut coi_col = 0.0;
            for (j, mj) in self.machines.iter().enumerate() {
                let c = if j == k { 1.0 } else { 0.0 } - mj.h / ht;
                let inv2h = c / (2.0 * mj.h);
                let oj = STATES_PER_MACHINE * j;
                let sj = &st[j];
                for (a, &col) in [oj + EQ, oj + ED, oj + THETA].iter().enumerate() {
                    p.fx.push(o + DW, col, -inv2h * sj.g_pe[a]);
                }
                p.fx.push(o + DW, oj + DW, -inv2h * mj.d);
                p.fx.push(o + DW, oj + PM, inv2h);
                p.fv.push(o + DW, mj.bus, -inv2h * sj.g_pe[3]);
                p.fv.push(o + DW, m + mj.bus, -inv2h * sj.g_pe[4]);
                coi_col -= inv2h * mj.d;
            }
            p.fx.push(o + DW, icoi, coi_col);

            // Exciter
            p.fx.push(o + EFD, o + EFD, -1.0 / mm.t_a);
            p.fv.push(o + EFD, vr, -mm.k_a * s.g_vt[0] / mm.t_a);
            p.fv.push(o + EFD, vi, -mm.k_a * s.g_vt[1] / mm.t_a);

            // Governor
            if let Some((r, tg)) = mm.governor {
                p.fx.push(o + PM, o + PM, -1.0 / tg);
                p.fx.push(o + PM, o + DW, -1.0 / (r * tg));
                p.fx.push(o + PM, icoi, -1.0 / (r * tg));
            }

            // Injection partials: G = Y_N V - I, so g = -dI.
            for (a, &col) in cols.iter().enumerate() {
                p.gx.push(vr, col, -s.g_ir[a]);
                p.gx.push(vi, col, -s.g_ii[a]);
            }
            p.gv.push(vr, vr, -s.g_ir[3]);
            p.gv.push(vr, vi, -s.g_ir[4]);
            p.gv.push(vi, vr, -s.g_ii[3]);
            p.gv.push(vi, vi, -s.g_ii[4]);
        }

        // COI aggregates: Δω_COI' = Σ (P_m - P_e - D Δω)_j / 2H_T
        p.fx.push(self.coi_angle_index(), icoi, self.omega_s);
        let mut coi_col = 0.0;
        for (j, mj) in self.machines.iter().enumerate() {
            let oj = STATES_PER_MACHINE * j;
            let sj = &st[j];
            let w = 1.0 / (2.0 * ht);
            for (a, &col) in [oj + EQ, oj + ED, oj + THETA].iter().enumerate() {
                p.fx.push(icoi, col, -w * sj.g_pe[a]);
            }
            p.fx.push(icoi, oj + DW, -w * mj.d);
            p.fx.push(icoi, oj + PM, w);
            p.fv.push(icoi, mj.bus, -w * sj.g_pe[3]);
            p.fv.push(icoi, m + mj.bus, -w * sj.g_pe[4]);
            coi_col -= w * mj.d;
        }
        p.fx.push(icoi, icoi, coi_col);

        for l in &self.loads {
            let (_, j) = load_injection(l, v[l.bus], v[m + l.bus]);
            let (r, i) = (l.bus, m + l.bus);
            p.gv.push(r, r, -j[0][0]);
            p.gv.push(r, i, -j[0][1]);
            p.gv.push(i, r, -j[1][0]);
            p.gv.push(i, i, -j[1][1]);
        }
        p.gv.extend_scaled(&self.yn, 0, 0, 1.0);
    }
}

/// Initial machine states in the network frame, from a power-flow solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineInit {
    pub delta: f64,
    pub eq: f64,
    pub ed: f64,
    pub efd: f64,
    pub pm: f64,
}

/// Back-solves machine states and set-points from the terminal voltage and
/// the machine's power output (both on the system base).
pub fn init_machine(m: &mut MachineModel, v: Complex64, p: f64, q: f64) -> MachineInit {
    let i = (Complex64::new(p, q) / v).conj();
    let e = v + Complex64::new(0.0, m.xq) * i;
    let delta = e.arg();
    // dq components: (V_d + j V_q) = V e^{-j(δ - π/2)}
    let rot = Complex64::from_polar(1.0, -(delta - std::f64::consts::FRAC_PI_2));
    let vdq = v * rot;
    let idq = i * rot;
    let (vq, id, iq) = (vdq.im, idq.re, idq.im);
    let ed = (m.xq - m.xq_p) * iq;
    let eq = vq + m.xd_p * id;
    let efd = eq + (m.xd - m.xd_p) * id;
    m.v_ref = efd / m.k_a + v.norm();
    let pm = if m.is_condenser {
        0.0
    } else {
        vdq.re * id + vq * iq
    };
    m.p_ref = pm;
    MachineInit {
        delta,
        eq,
        ed,
        efd,
        pm,
    }
}

/// System-base machine models for every case machine, with set-points
/// taken from the power flow, plus their network-frame initial states.
pub fn init_machines(
    case: &CaseDefinition,
    pf: &PowerFlowSolution,
) -> (Vec<MachineModel>, Vec<MachineInit>) {
    let mut models = Vec::with_capacity(case.machines.len());
    let mut inits = Vec::with_capacity(case.machines.len());
    for (k, mp) in case.machines.iter().enumerate() {
        let g = case.bus_index(mp.bus).expect("validated");
        let mut mm = MachineModel::from_params(k, g, mp, case.base_mva);
        let init = init_machine(&mut mm, pf.voltage(g), pf.p_gen[k], pf.q_gen[k]);
        models.push(mm);
        inits.push(init);
    }
    (models, inits)
}

/// Assembles an island state from network-frame machine states (absolute
/// angle δ and speed Δω per machine) and network-frame bus voltages.
pub fn frame_state(
    model: &IslandModel,
    machine_states: &[[f64; 6]],
    v_net: &[Complex64],
) -> (Vec<f64>, Vec<f64>) {
    let n = model.n_diff();
    let mut x = vec![0.0; n];
    let ht = model.h_total;
    let delta_coi: f64 = model
        .machines
        .iter()
        .zip(machine_states)
        .map(|(m, s)| m.h * s[THETA])
        .sum::<f64>()
        / ht;
    let dw_coi: f64 = model
        .machines
        .iter()
        .zip(machine_states)
        .map(|(m, s)| m.h * s[DW])
        .sum::<f64>()
        / ht;
    for (k, s) in machine_states.iter().enumerate() {
        let o = STATES_PER_MACHINE * k;
        x[o..o + 6].copy_from_slice(s);
        x[o + THETA] = s[THETA] - delta_coi;
        x[o + DW] = s[DW] - dw_coi;
    }
    x[model.coi_angle_index()] = delta_coi;
    x[model.coi_speed_index()] = dw_coi;
    let rot = Complex64::from_polar(1.0, -delta_coi);
    let v: Vec<Complex64> = v_net.iter().map(|&c| c * rot).collect();
    (x, crate::network::stack(&v))
}

/// Network-frame (absolute) machine states, inverse of [`frame_state`].
pub fn absolute_machine_states(model: &IslandModel, x: &[f64]) -> Vec<[f64; 6]> {
    let dc = x[model.coi_angle_index()];
    let wc = x[model.coi_speed_index()];
    (0..model.machines.len())
        .map(|k| {
            let o = STATES_PER_MACHINE * k;
            let mut s = [0.0; 6];
            s.copy_from_slice(&x[o..o + 6]);
            s[THETA] += dc;
            s[DW] += wc;
            s
        })
        .collect()
}

/// Network-frame complex bus voltages.
pub fn network_voltages(model: &IslandModel, x: &[f64], v: &[f64]) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, x[model.coi_angle_index()]);
    crate::network::unstack(v)
        .into_iter()
        .map(|c| c * rot)
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::case_io::{
        builtin_case, solve_power_flow, synthesize_dynamics, BuiltinCase, PowerFlowOptions,
        SynthesisOptions,
    };
    use crate::network::{build_ybus_subset, find_islands, BranchEnds, Topology};
    use crate::sparse::inf_norm;

    pub(crate) fn nine_bus() -> (IslandModel, Vec<f64>, Vec<f64>) {
        let case = synthesize_dynamics(
            &builtin_case(BuiltinCase::Ieee9),
            &SynthesisOptions::new(11),
        );
        let pf = solve_power_flow(&case, &PowerFlowOptions::default()).unwrap();
        let (models, inits) = init_machines(&case, &pf);
        let topo = Topology::from_case(&case);
        let part = find_islands(&case, &topo);
        let isl = &part.islands[0];
        let y = build_ybus_subset(&case, &topo, &BranchEnds::new(&case), &isl.buses);
        let model = IslandModel::new(&case, isl, y, &models, &topo.load_fraction);
        let states: Vec<[f64; 6]> = inits
            .iter()
            .map(|i| [i.eq, i.ed, i.delta, 0.0, i.efd, i.pm])
            .collect();
        let vnet: Vec<Complex64> = isl.buses.iter().map(|&b| pf.voltage(b)).collect();
        let (x, v) = frame_state(&model, &states, &vnet);
        (model, x, v)
    }

    #[test]
    fn power_flow_initialization_is_an_equilibrium() {
        let (model, x, v) = nine_bus();
        let mut f = vec![0.0; model.n_diff()];
        let mut g = vec![0.0; model.n_alg()];
        model.eval_f(&x, &v, &mut f);
        model.eval_g(&x, &v, &mut g);
        assert!(inf_norm(&f) < 1e-8, "f = {f:?}");
        assert!(inf_norm(&g) < 1e-6, "g = {g:?}");
        let hsum: f64 = model
            .machines
            .iter()
            .enumerate()
            .map(|(k, m)| m.h * x[6 * k + THETA])
            .sum();
        assert!(hsum.abs() < 1e-9 * model.h_total);
    }

    #[test]
    fn load_shed_scales_injection_and_low_voltage_law_is_continuous() {
        let l = LoadModel {
            bus: 0,
            p: 1.2,
            q: 0.4,
        };
        let half = LoadModel {
            p: 0.9,
            q: 0.3,
            ..l
        };
        let (a, _) = load_injection(&l, 0.9, 0.2);
        let (b, _) = load_injection(&half, 0.9, 0.2);
        assert!((b[0] - 0.75 * a[0]).abs() < 1e-15 && (b[1] - 0.75 * a[1]).abs() < 1e-15);
        let th = 0.3f64;
        let (vr, vi) = (LOAD_LOW_VOLTAGE * th.cos(), LOAD_LOW_VOLTAGE * th.sin());
        let (hi, _) = load_injection(&l, vr, vi);
        let (lo, _) = load_injection(&l, vr * (1.0 - 1e-12), vi * (1.0 - 1e-12));
        assert!((hi[0] - lo[0]).abs() < 1e-9 && (hi[1] - lo[1]).abs() < 1e-9);
    }

    #[test]
    fn angle_perturbation_touches_coupled_rows_only() {
        let (model, mut x, v) = nine_bus();
        let mut f0 = vec![0.0; model.n_diff()];
        model.eval_f(&x, &v, &mut f0);
        x[THETA] += 0.01;
        let mut f1 = vec![0.0; model.n_diff()];
        model.eval_f(&x, &v, &mut f1);
        for (r, (a, b)) in f0.iter().zip(&f1).enumerate() {
            let changed = (a - b).abs() > 1e-12;
            // Machine 0's field and speed rows, every relative-speed row
            // (through the COI mean) and the COI speed row are coupled.
            let coupled = r == EQ || r == ED || r % 6 == DW || r == model.coi_speed_index();
            if changed {
                assert!(coupled, "row {r} changed");
            }
        }
    }

    #[test]
    fn analytic_partials_match_central_differences() {
        let (model, x0, v0) = nine_bus();
        let n = model.n_diff();
        let m2 = model.n_alg();
        // Move off the equilibrium so every term is exercised.
        let mut x = x0.clone();
        let mut v = v0.clone();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += 0.01 * ((i * 7 % 5) as f64 - 2.0);
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi += 0.005 * ((i * 3 % 7) as f64 - 3.0);
        }
        let mut p = Partials::default();
        model.partials(&x, &v, &mut p);
        let (fx, fv, gx, gv) = (
            p.fx.to_dense(),
            p.fv.to_dense(),
            p.gx.to_dense(),
            p.gv.to_dense(),
        );
        let h = 1e-7;
        let eval = |x: &[f64], v: &[f64]| {
            let mut f = vec![0.0; n];
            let mut g = vec![0.0; m2];
            model.eval_f(x, v, &mut f);
            model.eval_g(x, v, &mut g);
            (f, g)
        };
        let mut worst = 0.0f64;
        for j in 0..n + m2 {
            let (mut xp, mut vp, mut xm, mut vm) = (x.clone(), v.clone(), x.clone(), v.clone());
            if j < n {
                xp[j] += h;
                xm[j] -= h;
            } else {
                vp[j - n] += h;
                vm[j - n] -= h;
            }
            let (fp, gp) = eval(&xp, &vp);
            let (fm, gm) = eval(&xm, &vm);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let an = if j < n { fx[i][j] } else { fv[i][j - n] };
                worst = worst.max((an - fd).abs() / an.abs().max(1.0));
            }
            for i in 0..m2 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                let an = if j < n { gx[i][j] } else { gv[i][j - n] };
                worst = worst.max((an - fd).abs() / an.abs().max(1.0));
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst:e}");
    }
}
