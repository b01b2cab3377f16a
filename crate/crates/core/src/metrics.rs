//! Run comparison, path agreement and Monte-Carlo statistics.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{run_cascade, CascadeRun, PreparedCase, RunConfig, RunMethod, Termination};
use crate::error::{Error, Result};

/// Mean Jaccard overlap of dependent outage sets over contingencies. A
/// contingency where both sets are empty counts as full agreement.
pub fn path_agreement(pairs: &[(Vec<u32>, Vec<u32>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "path agreement needs at least one contingency".into(),
        ));
    }
    let total: f64 = pairs.iter().map(|(a, b)| jaccard(a, b)).sum();
    Ok(total / pairs.len() as f64)
}

fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let a: BTreeSet<u32> = a.iter().copied().collect();
    let b: BTreeSet<u32> = b.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub bus_status_errors: usize,
    pub machine_status_errors: usize,
    pub line_status_errors: usize,
    /// Over buses energized in both runs.
    pub max_vm_error: f64,
    pub max_va_error_deg: f64,
    pub max_freq_error_hz: f64,
    /// Path agreement of this single contingency.
    pub r: f64,
    /// Reference wall time over candidate wall time.
    pub runtime_ratio: f64,
}

impl ComparisonReport {
    pub fn status_errors(&self) -> usize {
        self.bus_status_errors + self.machine_status_errors + self.line_status_errors
    }
}

/// Compares the end states of two runs of the same case and contingency.
pub fn end_state_compare(
    reference: &CascadeRun,
    candidate: &CascadeRun,
) -> Result<ComparisonReport> {
    let (a, b) = (&reference.end_state, &candidate.end_state);
    if a.bus_energized.len() != b.bus_energized.len()
        || a.machine_on.len() != b.machine_on.len()
        || a.line_on.len() != b.line_on.len()
    {
        return Err(Error::Mismatch("runs come from different cases".into()));
    }
    if reference.initial_line_outages != candidate.initial_line_outages {
        return Err(Error::Mismatch(
            "runs start from different initial outages".into(),
        ));
    }
    let diff = |x: &[bool], y: &[bool]| x.iter().zip(y).filter(|(p, q)| p != q).count();
    let mut vm: f64 = 0.0;
    let mut va: f64 = 0.0;
    let mut fr: f64 = 0.0;
    for k in 0..a.bus_energized.len() {
        if a.bus_energized[k] && b.bus_energized[k] {
            vm = vm.max((a.vm[k] - b.vm[k]).abs());
            let d = (a.va_deg[k] - b.va_deg[k] + 180.0).rem_euclid(360.0) - 180.0;
            va = va.max(d.abs());
            fr = fr.max((a.bus_freq_hz[k] - b.bus_freq_hz[k]).abs());
        }
    }
    let r = jaccard(
        &reference.dependent_line_outages,
        &candidate.dependent_line_outages,
    );
    let runtime_ratio = if candidate.runtime_s > 0.0 {
        reference.runtime_s / candidate.runtime_s
    } else {
        f64::INFINITY
    };
    Ok(ComparisonReport {
        bus_status_errors: diff(&a.bus_energized, &b.bus_energized),
        machine_status_errors: diff(&a.machine_on, &b.machine_on),
        line_status_errors: diff(&a.line_on, &b.line_on),
        max_vm_error: vm,
        max_va_error_deg: va,
        max_freq_error_hz: fr,
        r,
        runtime_ratio,
    })
}

/// Draws `n` contingencies of `count` distinct bus ids each.
pub fn sample_outages(bus_ids: &[u32], count: usize, seed: u64, n: usize) -> Result<Vec<Vec<u32>>> {
    if count > bus_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {count} of {} buses",
            bus_ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let mut pick: Vec<u32> = sample(&mut rng, bus_ids.len(), count)
                .into_iter()
                .map(|i| bus_ids[i])
                .collect();
            pick.sort_unstable();
            pick
        })
        .collect())
}

/// `xs` with the fraction of `values` that are ≥ each x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCurve {
    pub xs: Vec<f64>,
    pub fraction: Vec<f64>,
}

impl DistributionCurve {
    pub fn new(values: &[f64], xs: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let fraction = xs
            .iter()
            .map(|&x| values.iter().filter(|&&v| v >= x - 1e-9).count() as f64 / n)
            .collect();
        Self { xs, fraction }
    }

    /// Largest vertical gap to another curve on the same grid.
    pub fn max_gap(&self, other: &Self) -> f64 {
        self.fraction
            .iter()
            .zip(&other.fraction)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-method digest of one Monte-Carlo case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub method: RunMethod,
    pub termination: Termination,
    pub demand_loss_pct: f64,
    pub dependent_line_outages: Vec<u32>,
    pub tiers: usize,
    pub pc_rounds: usize,
    pub t_final: f64,
    pub runtime_s: f64,
    pub cascade_s: f64,
    pub predictor_s: f64,
}

impl RunDigest {
    fn of(run: &CascadeRun) -> Self {
        Self {
            method: run.method,
            termination: run.termination,
            demand_loss_pct: run.end_state.demand_loss_pct(),
            dependent_line_outages: run.dependent_line_outages.clone(),
            tiers: run.tiers.len(),
            pc_rounds: run.pc_rounds.len(),
            t_final: run.end_state.t,
            runtime_s: run.runtime_s,
            cascade_s: run.timings.cascade_s,
            predictor_s: run.timings.predictor_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCase {
    pub outages: Vec<u32>,
    pub runs: Vec<RunDigest>,
    /// One report per candidate method, against the reference.
    pub reports: Vec<ComparisonReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: RunMethod,
    pub demand_loss_curve: DistributionCurve,
    pub line_outage_curve: DistributionCurve,
    pub resilient: usize,
    pub collapsed: usize,
    /// Cases where the predictor-corrector acted.
    pub corrected: usize,
    /// Path agreement against the reference (1 for the reference itself).
    pub mean_r: f64,
    pub median_r: f64,
    pub median_runtime_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub reference: RunMethod,
    pub cases: Vec<McCase>,
    pub methods: Vec<MethodSummary>,
    /// Resilient cases enter R as agreeing empty sets.
    pub r_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McOptions {
    pub n: usize,
    pub outage_count: usize,
    pub seed: u64,
    pub reference: RunMethod,
    pub candidates: Vec<RunMethod>,
    /// Threads running independent cases; 0 or 1 runs serially.
    pub workers: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n: 10,
            outage_count: 2,
            seed: 1,
            reference: RunMethod::Tm,
            candidates: vec![RunMethod::BemPc],
            workers: 0,
        }
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn run_case(prep: &PreparedCase, base: &RunConfig, opts: &McOptions, outages: Vec<u32>) -> McCase {
    let mut runs = Vec::new();
    let mut full = Vec::new();
    let methods = std::iter::once(opts.reference).chain(opts.candidates.iter().copied());
    for m in methods {
        let cfg = RunConfig {
            method: m,
            initial_outages: outages.clone(),
            ..base.clone()
        };
        match run_cascade(prep, &cfg) {
            Ok(r) => {
                runs.push(RunDigest::of(&r));
                full.push(r);
            }
            Err(e) => {
                return McCase {
                    outages,
                    runs,
                    reports: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        }
    }
    let reports = full[1..]
        .iter()
        .map(|c| end_state_compare(&full[0], c))
        .collect::<Result<Vec<_>>>();
    match reports {
        Ok(reports) => McCase {
            outages,
            runs,
            reports,
            error: None,
        },
        Err(e) => McCase {
            outages,
            runs,
            reports: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs `opts.n` random contingencies with every method and aggregates.
pub fn monte_carlo(
    prep: &PreparedCase,
    base: &RunConfig,
    opts: &McOptions,
) -> Result<MonteCarloSummary> {
    if opts.n == 0 {
        return Err(Error::InvalidArgument(
            "Monte-Carlo needs at least one case".into(),
        ));
    }
    let ids: Vec<u32> = prep.case.buses.iter().map(|b| b.id).collect();
    let contingencies = sample_outages(&ids, opts.outage_count, opts.seed, opts.n)?;
    let cases: Vec<McCase> = if opts.workers <= 1 {
        contingencies
            .into_iter()
            .map(|o| run_case(prep, base, opts, o))
            .collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<McCase>>> = Mutex::new(vec![None; contingencies.len()]);
        std::thread::scope(|s| {
            for _ in 0..opts.workers {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= contingencies.len() {
                        break;
                    }
                    let c = run_case(prep, base, opts, contingencies[k].clone());
                    slots.lock().expect("no worker panicked")[k] = Some(c);
                });
            }
        });
        slots
            .into_inner()
            .expect("no worker panicked")
            .into_iter()
            .map(|c| c.expect("every case ran"))
            .collect()
    };
    Ok(summarize(opts, cases))
}

/// Aggregates per-case results into curves and agreement statistics.
pub fn summarize(opts: &McOptions, cases: Vec<McCase>) -> MonteCarloSummary {
    let ok: Vec<&McCase> = cases.iter().filter(|c| c.error.is_none()).collect();
    let max_lines = ok
        .iter()
        .flat_map(|c| c.runs.iter())
        .map(|r| r.dependent_line_outages.len())
        .max()
        .unwrap_or(0);
    let loss_xs: Vec<f64> = (0..=100).map(f64::from).collect();
    let line_xs: Vec<f64> = (0..=max_lines).map(|k| k as f64).collect();
    let methods: Vec<RunMethod> = std::iter::once(opts.reference)
        .chain(opts.candidates.iter().copied())
        .collect();
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let digests: Vec<&RunDigest> = ok.iter().map(|c| &c.runs[mi]).collect();
            let loss: Vec<f64> = digests.iter().map(|d| d.demand_loss_pct).collect();
            let lines: Vec<f64> = digests
                .iter()
                .map(|d| d.dependent_line_outages.len() as f64)
                .collect();
            let (rs, ratios): (Vec<f64>, Vec<f64>) = if mi == 0 {
                (vec![1.0; ok.len()], vec![1.0; ok.len()])
            } else {
                ok.iter()
                    .map(|c| (c.reports[mi - 1].r, c.reports[mi - 1].runtime_ratio))
                    .unzip()
            };
            MethodSummary {
                method,
                demand_loss_curve: DistributionCurve::new(&loss, loss_xs.clone()),
                line_outage_curve: DistributionCurve::new(&lines, line_xs.clone()),
                resilient: digests
                    .iter()
                    .filter(|d| d.dependent_line_outages.is_empty() && d.tiers <= 1)
                    .count(),
                collapsed: digests
                    .iter()
                    .filter(|d| d.termination.is_collapse())
                    .count(),
                corrected: digests.iter().filter(|d| d.pc_rounds > 0).count(),
                mean_r: if rs.is_empty() {
                    f64::NAN
                } else {
                    rs.iter().sum::<f64>() / rs.len() as f64
                },
                median_r: median(&rs),
                median_runtime_ratio: median(&ratios),
            }
        })
        .collect();
    MonteCarloSummary {
        reference: opts.reference,
        cases,
        methods: summaries,
        r_convention: "contingencies without dependent outages in both runs count as R = 1".into(),
    }
}
