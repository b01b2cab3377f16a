//! Small-signal analysis of post-event equilibria.
//!
//! A backward-Euler run is allowed to settle on the equilibrium of one tier
//! (stable or not), the state matrix is recovered from the integrator's own
//! Jacobian blocks, and its spectrum is searched for growing oscillations.

use std::collections::VecDeque;
use std::fmt::Write as _;

use faer::linalg::solvers::Eigen;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dae::IslandModel;
use crate::error::{Error, Result};
use crate::integrators::{
    adapt_step_bem, assemble_jacobian, IntegratorConfig, JacobianBlocks, Method, Stepper,
};
use crate::sparse::LuSolver;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SettleConfig {
    /// Length of the speed-variation window, s.
    pub window: f64,
    /// Largest max-min machine speed spread inside the window, pu.
    pub threshold: f64,
    /// Simulated-time cap, s.
    pub t_cap: f64,
}

impl Default for SettleConfig {
    fn default() -> Self {
        Self {
            window: 5.0,
            threshold: 1e-6,
            t_cap: 120.0,
        }
    }
}

/// Thresholds for calling a mode oscillatory and unstable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Real-part threshold, 1/s.
    pub sigma_th: f64,
    /// Imaginary-part threshold, rad/s.
    pub omega_th: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            sigma_th: 1e-4,
            omega_th: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Simulated settling time, s.
    pub t_d: f64,
    pub settled: bool,
    pub blocks: JacobianBlocks,
}

/// Sliding window of machine speeds used by the settling rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeedWindow {
    samples: VecDeque<(f64, Vec<f64>)>,
    t_start: Option<f64>,
}

impl SpeedWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.t_start = None;
    }

    pub fn push(&mut self, t: f64, speeds: Vec<f64>, window: f64) {
        self.t_start.get_or_insert(t);
        self.samples.push_back((t, speeds));
        // Keep one sample at or before the window start.
        while self.samples.len() > 2 && self.samples[1].0 <= t - window {
            self.samples.pop_front();
        }
    }

    /// Largest per-machine spread over the last `window` seconds, or `None`
    /// while less than a full window has been observed.
    pub fn spread(&self, window: f64) -> Option<f64> {
        let (t_last, last) = self.samples.back()?;
        if t_last - self.t_start? < window - 1e-9 {
            return None;
        }
        let mut worst: f64 = 0.0;
        for k in 0..last.len() {
            let (lo, hi) = self
                .samples
                .iter()
                .map(|(_, s)| s[k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
                    (lo.min(w), hi.max(w))
                });
            worst = worst.max(hi - lo);
        }
        Some(worst)
    }
}

/// Absolute speed deviation of every machine of an island.
pub fn machine_speeds(model: &IslandModel, x: &[f64]) -> Vec<f64> {
    let wc = x[model.coi_speed_index()];
    model.speed_rows().into_iter().map(|r| x[r] + wc).collect()
}

/// Integrates the island with variable-step backward Euler and no relays
/// until machine speeds stop moving or the time cap is hit.
pub fn settle_equilibrium(
    model: &IslandModel,
    x0: &[f64],
    v0: &[f64],
    cfg: &IntegratorConfig,
    scfg: &SettleConfig,
) -> Result<EquilibriumResult> {
    let mut stepper = Stepper::new();
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut t = 0.0;
    let mut dt = cfg.dt_max;
    let mut last_dt = dt;
    let mut window = SpeedWindow::new();
    window.push(0.0, machine_speeds(model, &x), scfg.window);
    let mut failures_at_floor = 0;
    let mut settled = false;
    while t < scfg.t_cap {
        let r = stepper.step(model, &x, &v, None, dt, Method::Bem, cfg)?;
        if !r.converged {
            if dt <= cfg.dt_event {
                failures_at_floor += 1;
                if failures_at_floor >= 2 {
                    break;
                }
            }
            dt = (dt / 2.0).max(cfg.dt_event);
            continue;
        }
        failures_at_floor = 0;
        t += dt;
        last_dt = dt;
        x = r.x;
        v = r.v;
        window.push(t, machine_speeds(model, &x), scfg.window);
        if window
            .spread(scfg.window)
            .is_some_and(|s| s <= scfg.threshold)
        {
            settled = true;
            break;
        }
        dt = adapt_step_bem(dt, r.first_mismatch, cfg);
    }
    let blocks = assemble_jacobian(model, &x, &v, last_dt, Method::Bem);
    Ok(EquilibriumResult {
        x,
        v,
        t_d: t,
        settled,
        blocks,
    })
}

/// State matrix of the linearized model recovered from implicit-step
/// Jacobian blocks: A = P11 + P12 P22⁻¹ P21 with P11 = (I - J11)/(cΔt),
/// P12 = -J12/(cΔt), P21 = -J21, P22 = J22, where c is the implicit weight
/// of the method that produced the blocks.
pub fn build_a_matrix(blocks: &JacobianBlocks) -> Result<Mat<f64>> {
    if blocks.dt <= 0.0 {
        return Err(Error::InvalidArgument(
            "A matrix needs a positive step".into(),
        ));
    }
    let n = blocks.j11.nrows;
    let m2 = blocks.j22.nrows;
    let scale = 1.0 / (blocks.method.implicit_weight() * blocks.dt);
    let mut a = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] += scale;
    }
    for k in 0..blocks.j11.len() {
        a[(blocks.j11.rows[k], blocks.j11.cols[k])] -= scale * blocks.j11.vals[k];
    }
    if m2 == 0 {
        return Ok(a);
    }
    // X = P22⁻¹ P21 column by column, never forming the inverse.
    let mut xmat = Mat::<f64>::zeros(m2, n);
    for k in 0..blocks.j21.len() {
        xmat[(blocks.j21.rows[k], blocks.j21.cols[k])] -= blocks.j21.vals[k];
    }
    let lu = LuSolver::new().factor(&blocks.j22, "J22")?;
    lu.solve_columns(&mut xmat, "J22")?;
    for k in 0..blocks.j12.len() {
        let (i, j) = (blocks.j12.rows[k], blocks.j12.cols[k]);
        let p12 = -scale * blocks.j12.vals[k];
        for c in 0..n {
            a[(i, c)] += p12 * xmat[(j, c)];
        }
    }
    Ok(a)
}

/// Spectrum and right eigenvectors of a state matrix.
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    pub a: Mat<f64>,
    pub eigenvalues: Vec<Complex64>,
    /// One unit-norm right eigenvector per eigenvalue.
    pub vectors: Vec<Vec<Complex64>>,
    /// State rows holding machine speeds, in machine order.
    pub speed_rows: Vec<usize>,
}

impl LinearizedModel {
    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.a.ncols() {
            for i in 0..self.a.nrows() {
                s += self.a[(i, j)] * self.a[(i, j)];
            }
        }
        s.sqrt()
    }

    /// ||A v - λ v||₂ of mode `k`.
    pub fn residual(&self, k: usize) -> f64 {
        let n = self.a.nrows();
        let (lam, v) = (self.eigenvalues[k], &self.vectors[k]);
        let mut s = 0.0;
        for i in 0..n {
            let mut av = Complex64::new(0.0, 0.0);
            for j in 0..n {
                av += v[j] * self.a[(i, j)];
            }
            s += (av - lam * v[i]).norm_sqr();
        }
        s.sqrt()
    }

    /// Entries of mode `k` on the machine speed rows.
    pub fn speed_modeshape(&self, k: usize) -> Vec<Complex64> {
        self.speed_rows
            .iter()
            .map(|&r| self.vectors[k][r])
            .collect()
    }
}

/// Dense nonsymmetric eigendecomposition. Each eigenvector is scaled to unit
/// 2-norm and rotated so that its largest speed-row entry (largest entry
/// overall when there are no speed rows) is real and positive.
pub fn eigendecompose(a: Mat<f64>, speed_rows: &[usize]) -> Result<LinearizedModel> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument("state matrix must be square".into()));
    }
    for j in 0..n {
        for i in 0..n {
            if !a[(i, j)].is_finite() {
                return Err(Error::Eigen("state matrix has non-finite entries".into()));
            }
        }
    }
    let eig = Eigen::new_from_real(a.as_ref()).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for k in 0..n {
        let lam = s[k];
        eigenvalues.push(Complex64::new(lam.re, lam.im));
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(u[(i, k)].re, u[(i, k)].im))
            .collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let rows: Vec<usize> = if speed_rows.is_empty() {
            (0..n).collect()
        } else {
            speed_rows.to_vec()
        };
        let pivot = rows
            .iter()
            .copied()
            .fold(None, |best: Option<usize>, r| match best {
                Some(b) if v[b].norm() >= v[r].norm() => Some(b),
                _ => Some(r),
            });
        let phase = match pivot {
            Some(p) if v[p].norm() > 0.0 => v[p].conj() / v[p].norm(),
            _ => Complex64::new(1.0, 0.0),
        };
        if norm > 0.0 {
            for c in v.iter_mut() {
                *c = *c * phase / norm;
            }
        }
        vectors.push(v);
    }
    Ok(LinearizedModel {
        a,
        eigenvalues,
        vectors,
        speed_rows: speed_rows.to_vec(),
    })
}

/// A machine's share of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineShare {
    /// Case machine index.
    pub machine: usize,
    /// Speed modeshape magnitude, scaled so the largest in the mode is 1.
    pub magnitude: f64,
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryMode {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub freq_hz: f64,
    /// Machines sorted by decreasing magnitude.
    pub shares: Vec<MachineShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InstabilityVerdict {
    pub unstable: bool,
    pub modes: Vec<OscillatoryMode>,
    /// Case machine indices ordered by participation in the unstable modes.
    pub ranking: Vec<usize>,
}

/// Every mode with imaginary part above `omega_th` (upper half-plane member
/// of each pair), sorted by decreasing real part. `machines` maps machine
/// order to case machine index.
pub fn oscillatory_modes(
    lm: &LinearizedModel,
    machines: &[usize],
    omega_th: f64,
) -> Vec<OscillatoryMode> {
    let mut out: Vec<OscillatoryMode> = Vec::new();
    for (k, lam) in lm.eigenvalues.iter().enumerate() {
        if lam.im <= omega_th {
            continue;
        }
        let shape = lm.speed_modeshape(k);
        let top = shape.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut shares: Vec<MachineShare> = shape
            .iter()
            .zip(machines)
            .map(|(c, &m)| MachineShare {
                machine: m,
                magnitude: if top > 0.0 { c.norm() / top } else { 0.0 },
                phase_deg: c.arg().to_degrees(),
            })
            .collect();
        shares.sort_by(|a, b| {
            b.magnitude
                .total_cmp(&a.magnitude)
                .then(a.machine.cmp(&b.machine))
        });
        out.push(OscillatoryMode {
            lambda_re: lam.re,
            lambda_im: lam.im,
            freq_hz: lam.im / (2.0 * std::f64::consts::PI),
            shares,
        });
    }
    out.sort_by(|a, b| {
        b.lambda_re
            .total_cmp(&a.lambda_re)
            .then(a.lambda_im.total_cmp(&b.lambda_im))
    });
    out
}

/// Flags oscillatory instability and ranks the participating machines. A
/// machine's score is its largest normalized speed modeshape over all
/// unstable modes, so the dominant machine of each unstable mode ranks at
/// the top.
pub fn detect_and_rank(
    lm: &LinearizedModel,
    machines: &[usize],
    cfg: &DetectionConfig,
) -> InstabilityVerdict {
    let modes: Vec<OscillatoryMode> = oscillatory_modes(lm, machines, cfg.omega_th)
        .into_iter()
        .filter(|m| m.lambda_re > cfg.sigma_th)
        .collect();
    let mut score: Vec<(f64, usize)> = machines.iter().map(|&m| (0.0, m)).collect();
    for mode in &modes {
        for s in &mode.shares {
            let e = score
                .iter_mut()
                .find(|e| e.1 == s.machine)
                .expect("machine in map");
            e.0 = e.0.max(s.magnitude);
        }
    }
    score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let ranking = if modes.is_empty() {
        Vec::new()
    } else {
        score.into_iter().map(|(_, m)| m).collect()
    };
    InstabilityVerdict {
        unstable: !modes.is_empty(),
        modes,
        ranking,
    }
}

/// CSV rows `tier,lambda_re,lambda_im,freq_hz,machine,magnitude,phase_deg`
/// for the top `top_k` machines of every mode.
pub fn mode_report_csv(
    rows: &[(usize, Vec<OscillatoryMode>)],
    machine_label: impl Fn(usize) -> String,
    top_k: usize,
) -> String {
    let mut s = String::from("tier,lambda_re,lambda_im,freq_hz,machine,magnitude,phase_deg\n");
    for (tier, modes) in rows {
        for m in modes {
            for sh in m.shares.iter().take(top_k) {
                let _ = writeln!(
                    s,
                    "{tier},{:.6},{:.6},{:.6},{},{:.6},{:.2}",
                    m.lambda_re,
                    m.lambda_im,
                    m.freq_hz,
                    machine_label(sh.machine),
                    sh.magnitude,
                    sh.phase_deg
                );
            }
        }
    }
    s
}

/// Case machine index of every machine of an island, in model order.
pub fn island_machine_indices(model: &IslandModel) -> Vec<usize> {
    model.machines.iter().map(|m| m.index).collect()
}
