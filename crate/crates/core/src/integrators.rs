//! Implicit steppers (trapezoidal and backward Euler) solved simultaneously
//! by Newton's method, their step-size controllers, and the partitioned
//! explicit RK4 comparator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dae::{DaeSystem, Partials};
use crate::error::{Error, Result};
use crate::sparse::{inf_norm, LuSolver, Triplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Trapezoidal method.
    Tm,
    /// Backward Euler.
    Bem,
    /// Partitioned classical Runge-Kutta with algebraic re-solves.
    Rk4,
}

impl Method {
    /// Weight of the new-point derivative in the implicit formula.
    pub fn implicit_weight(self) -> f64 {
        match self {
            Method::Tm => 0.5,
            Method::Bem => 1.0,
            Method::Rk4 => panic!("RK4 is explicit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt_min: f64,
    pub dt_max: f64,
    /// Newton stopping tolerance on the infinity norm of [F; G].
    pub eps: f64,
    pub max_newton_iters: usize,
    /// Fixed steps taken right after every event.
    pub k_post_event: usize,
    /// Newton iteration count above which the next step falls back to `dt_event`.
    pub r_iter_threshold: usize,
    /// Backward-Euler step-control gain.
    pub tau: f64,
    pub dt_event: f64,
    /// Trapezoidal local-error target (relative to max(1, |x|)).
    pub lte_tol: f64,
    /// Fixed step of the RK4 comparator.
    pub rk4_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::bem()
    }
}

impl IntegratorConfig {
    pub fn bem() -> Self {
        Self {
            dt_min: 0.02,
            dt_max: 0.4,
            eps: 1e-4,
            max_newton_iters: 10,
            k_post_event: 6,
            r_iter_threshold: 7,
            tau: 0.05,
            dt_event: 0.002,
            lte_tol: 1e-4,
            rk4_dt: 0.002,
        }
    }

    pub fn tm() -> Self {
        Self {
            dt_min: 0.002,
            dt_max: 1.0,
            ..Self::bem()
        }
    }

    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Tm => Self::tm(),
            _ => Self::bem(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_max
            && self.dt_event > 0.0
            && self.eps > 0.0
            && self.tau > 0.0
            && self.lte_tol > 0.0
            && self.rk4_dt > 0.0
            && self.k_post_event >= 1
            && self.r_iter_threshold >= 1
            && self.max_newton_iters >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent integrator settings: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub mismatch_inf: f64,
    /// Infinity norm of the differential mismatch at the initial guess,
    /// without the row named by `DaeSystem::step_control_skip`.
    pub first_mismatch: f64,
    pub dt: f64,
}

/// Jacobian of the discretized system, in the block layout
/// [[J11, J12], [J21, J22]].
#[derive(Debug, Clone)]
pub struct JacobianBlocks {
    pub j11: Triplets,
    pub j12: Triplets,
    pub j21: Triplets,
    pub j22: Triplets,
    pub dt: f64,
    pub method: Method,
}

/// J11 = I - cΔt f_x, J12 = -cΔt f_V, J21 = g_x, J22 = g_V with c = 1 for
/// backward Euler and 1/2 for the trapezoidal method.
pub fn assemble_jacobian<S: DaeSystem>(
    sys: &S,
    x: &[f64],
    v: &[f64],
    dt: f64,
    method: Method,
) -> JacobianBlocks {
    let mut p = Partials::default();
    sys.partials(x, v, &mut p);
    blocks_from_partials(&p, sys.n_diff(), dt, method)
}

pub fn blocks_from_partials(p: &Partials, n: usize, dt: f64, method: Method) -> JacobianBlocks {
    let c = method.implicit_weight() * dt;
    let mut j11 = Triplets::with_capacity(n, n, n + p.fx.len());
    for i in 0..n {
        j11.push(i, i, 1.0);
    }
    j11.extend_scaled(&p.fx, 0, 0, -c);
    let mut j12 = Triplets::new(p.fv.nrows, p.fv.ncols);
    j12.extend_scaled(&p.fv, 0, 0, -c);
    JacobianBlocks {
        j11,
        j12,
        j21: p.gx.clone(),
        j22: p.gv.clone(),
        dt,
        method,
    }
}

/// Newton solver for one implicit step. Owns its factorization workspace.
#[derive(Default)]
pub struct Stepper {
    lu: LuSolver,
    partials: Partials,
    full: Triplets,
}

impl Stepper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances (x_n, V_n) by `dt`. `f_n` must be f(x_n, V_n) for the
    /// trapezoidal method. Newton failure is reported through
    /// `converged = false`; a singular Jacobian is an error.
    #[allow(clippy::too_many_arguments)]
    pub fn step<S: DaeSystem>(
        &mut self,
        sys: &S,
        x_n: &[f64],
        v_n: &[f64],
        f_n: Option<&[f64]>,
        dt: f64,
        method: Method,
        cfg: &IntegratorConfig,
    ) -> Result<StepResult> {
        let n = sys.n_diff();
        let m2 = sys.n_alg();
        let c = method.implicit_weight() * dt;
        let explicit_part: Vec<f64> = match (method, f_n) {
            (Method::Tm, Some(f)) => x_n.iter().zip(f).map(|(x, f)| x + c * f).collect(),
            (Method::Tm, None) => panic!("trapezoidal step needs f(x_n, V_n)"),
            _ => x_n.to_vec(),
        };
        let mut x = x_n.to_vec();
        let mut v = v_n.to_vec();
        let mut f = vec![0.0; n];
        let mut res = vec![0.0; n + m2];
        let mut first_mismatch = f64::NAN;
        let mut iterations = 0;
        loop {
            sys.eval_f(&x, &v, &mut f);
            for i in 0..n {
                res[i] = x[i] - explicit_part[i] - c * f[i];
            }
            sys.eval_g(&x, &v, &mut res[n..]);
            if first_mismatch.is_nan() {
                let skip = sys.step_control_skip();
                first_mismatch = res[..n]
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| Some(*i) != skip)
                    .fold(0.0, |m, (_, r)| m.max(r.abs()));
            }
            let norm = inf_norm(&res);
            // At least one Newton update unless the guess is exact: with an
            // absolute tolerance a tiny step could otherwise accept x_n.
            let done = norm == 0.0 || (iterations > 0 && norm <= cfg.eps);
            if done || iterations >= cfg.max_newton_iters || !norm.is_finite() {
                let converged = norm <= cfg.eps;
                return Ok(StepResult {
                    x,
                    v,
                    iterations,
                    converged,
                    mismatch_inf: norm,
                    first_mismatch,
                    dt,
                });
            }
            iterations += 1;
            sys.partials(&x, &v, &mut self.partials);
            self.assemble_full(n, m2, c);
            let lu = self.lu.factor(&self.full, "step Jacobian")?;
            for r in res.iter_mut() {
                *r = -*r;
            }
            lu.solve_in_place(&mut res, "step Jacobian")?;
            for i in 0..n {
                x[i] += res[i];
            }
            for i in 0..m2 {
                v[i] += res[n + i];
            }
        }
    }

    fn assemble_full(&mut self, n: usize, m2: usize, c: f64) {
        let p = &self.partials;
        let t = &mut self.full;
        t.nrows = n + m2;
        t.ncols = n + m2;
        t.clear();
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.extend_scaled(&p.fx, 0, 0, -c);
        t.extend_scaled(&p.fv, 0, n, -c);
        t.extend_scaled(&p.gx, n, 0, 1.0);
        t.extend_scaled(&p.gv, n, n, 1.0);
    }

    /// Solves g(x, V) = 0 for V by Newton on J22 alone.
    pub fn solve_algebraic<S: DaeSystem>(
        &mut self,
        sys: &S,
        x: &[f64],
        v0: &[f64],
        cfg: &IntegratorConfig,
    ) -> Result<(Vec<f64>, usize)> {
        let m2 = sys.n_alg();
        let mut v = v0.to_vec();
        let mut g = vec![0.0; m2];
        sys.eval_g(x, &v, &mut g);
        let mut norm = inf_norm(&g);
        let mut iterations = 0;
        // A re-solve may start far from the solution (right after a large
        // topology change), so full Newton steps are backtracked until the
        // mismatch decreases.
        let limit = 5 * cfg.max_newton_iters;
        loop {
            if norm <= cfg.eps {
                return Ok((v, iterations));
            }
            if iterations >= limit || !norm.is_finite() {
                return Err(Error::Singular("algebraic re-solve did not converge"));
            }
            iterations += 1;
            sys.partials(x, &v, &mut self.partials);
            let lu = self.lu.factor(&self.partials.gv, "J22")?;
            let mut dv: Vec<f64> = g.iter().map(|r| -r).collect();
            lu.solve_in_place(&mut dv, "J22")?;
            let mut alpha = 1.0;
            let mut trial = vec![0.0; m2];
            loop {
                for i in 0..m2 {
                    trial[i] = v[i] + alpha * dv[i];
                }
                sys.eval_g(x, &trial, &mut g);
                let n = inf_norm(&g);
                if n < norm || alpha < 1e-3 {
                    v.copy_from_slice(&trial);
                    norm = n;
                    break;
                }
                alpha *= 0.5;
            }
        }
    }

    /// One partitioned RK4 step: V is re-solved from the network equations
    /// at every stage before evaluating f. `v_n` must be consistent with
    /// `x_n`.
    pub fn step_rk4<S: DaeSystem>(
        &mut self,
        sys: &S,
        x_n: &[f64],
        v_n: &[f64],
        dt: f64,
        cfg: &IntegratorConfig,
    ) -> Result<StepResult> {
        let n = sys.n_diff();
        let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        sys.eval_f(x_n, v_n, &mut k[0]);
        let mut v = v_n.to_vec();
        let mut iterations = 0;
        for stage in 1..4 {
            let h = if stage == 3 { dt } else { dt / 2.0 };
            let xs: Vec<f64> = (0..n).map(|i| x_n[i] + h * k[stage - 1][i]).collect();
            let (vs, it) = self.solve_algebraic(sys, &xs, &v, cfg)?;
            iterations += it;
            v = vs;
            sys.eval_f(&xs, &v, &mut k[stage]);
        }
        let x: Vec<f64> = (0..n)
            .map(|i| x_n[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
            .collect();
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(Error::InvalidArgument("explicit RK4 step diverged".into()));
        }
        let (v, it) = self.solve_algebraic(sys, &x, &v, cfg)?;
        iterations += it;
        Ok(StepResult {
            x,
            v,
            iterations,
            converged: true,
            mismatch_inf: 0.0,
            first_mismatch: 0.0,
            dt,
        })
    }
}

/// Backward-Euler step control: Δt τ / ||F⁰||∞, clamped to the configured
/// bounds. An exactly zero mismatch gives the upper bound.
pub fn adapt_step_bem(dt: f64, first_mismatch: f64, cfg: &IntegratorConfig) -> f64 {
    if first_mismatch <= 0.0 {
        return cfg.dt_max;
    }
    (dt * cfg.tau / first_mismatch).clamp(cfg.dt_min, cfg.dt_max)
}

/// Local error estimate of a trapezoidal step: weighted distance between
/// the accepted point and an explicit first-order predictor. Values above 1
/// mean the step should be rejected.
pub fn lte_estimate(x_new: &[f64], x_n: &[f64], f_n: &[f64], dt: f64, tol: f64) -> f64 {
    x_new
        .iter()
        .zip(x_n)
        .zip(f_n)
        .map(|((&xn1, &xn), &f)| {
            let pred = xn + dt * f;
            (xn1 - pred).abs() / (tol * xn.abs().max(xn1.abs()).max(1.0))
        })
        .fold(0.0, f64::max)
}

/// Decision of the trapezoidal step controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TmStepDecision {
    Accept { next_dt: f64 },
    Reject { retry_dt: f64 },
}

/// Bounded-growth controller for the trapezoidal reference: reject and
/// halve above target, otherwise grow by at most 2x.
pub fn adapt_step_tm(lte: f64, dt: f64, cfg: &IntegratorConfig) -> TmStepDecision {
    if lte > 1.0 && dt > cfg.dt_min * (1.0 + 1e-9) {
        return TmStepDecision::Reject {
            retry_dt: (dt / 2.0).max(cfg.dt_min),
        };
    }
    let factor = if lte <= 0.0 {
        2.0
    } else {
        (0.9 / lte.sqrt()).clamp(0.5, 2.0)
    };
    TmStepDecision::Accept {
        next_dt: (dt * factor).clamp(cfg.dt_min, cfg.dt_max),
    }
}

/// The scalar test equation x' = λx written as a real 2-state system so
/// complex λ can be used. No algebraic variables.
#[derive(Debug, Clone, Copy)]
pub struct TestEquation {
    pub lambda: Complex64,
}

impl DaeSystem for TestEquation {
    fn n_diff(&self) -> usize {
        2
    }
    fn n_alg(&self) -> usize {
        0
    }
    fn eval_f(&self, x: &[f64], _v: &[f64], out: &mut [f64]) {
        let (a, b) = (self.lambda.re, self.lambda.im);
        out[0] = a * x[0] - b * x[1];
        out[1] = b * x[0] + a * x[1];
    }
    fn eval_g(&self, _x: &[f64], _v: &[f64], _out: &mut [f64]) {}
    fn partials(&self, _x: &[f64], _v: &[f64], p: &mut Partials) {
        p.reset(2, 0);
        let (a, b) = (self.lambda.re, self.lambda.im);
        p.fx.push(0, 0, a);
        p.fx.push(0, 1, -b);
        p.fx.push(1, 0, b);
        p.fx.push(1, 1, a);
    }
}

/// Numerically measured one-step amplification x_{n+1}/x_n of a method on
/// the test equation, for z = λΔt.
pub fn measured_amplification(method: Method, z: Complex64) -> Result<Complex64> {
    let dt = 1.0;
    let sys = TestEquation { lambda: z / dt };
    let cfg = IntegratorConfig {
        eps: 1e-14,
        ..IntegratorConfig::bem()
    };
    let x0 = [1.0, 0.0];
    let mut stepper = Stepper::new();
    let r = match method {
        Method::Rk4 => stepper.step_rk4(&sys, &x0, &[], dt, &cfg)?,
        _ => {
            let mut f0 = [0.0; 2];
            sys.eval_f(&x0, &[], &mut f0);
            stepper.step(&sys, &x0, &[], Some(&f0), dt, method, &cfg)?
        }
    };
    Ok(Complex64::new(r.x[0], r.x[1]))
}

/// Closed-form amplification factors.
pub fn amplification_tm(z: Complex64) -> Complex64 {
    (2.0 + z) / (2.0 - z)
}

pub fn amplification_bem(z: Complex64) -> Complex64 {
    1.0 / (1.0 - z)
}

pub fn amplification_rk4(z: Complex64) -> Complex64 {
    1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0
}
