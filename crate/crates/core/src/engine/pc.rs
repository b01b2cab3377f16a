//! The predictor-corrector loop around plain backward Euler.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::sim::TierSnapshot;
use super::{CascadeRun, Context, PcRound, PreparedCase, RunConfig, Sim, Termination, Timings};
use crate::integrators::IntegratorConfig;
use crate::modal::{
    build_a_matrix, detect_and_rank, eigendecompose, island_machine_indices, oscillatory_modes,
    settle_equilibrium, InstabilityVerdict, OscillatoryMode,
};
use crate::protection::{schedule_sps, Target};

/// Predictor outcome for one island of one tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAnalysis {
    pub tier: usize,
    pub t: f64,
    /// Case machine indices of the island.
    pub machines: Vec<usize>,
    pub settled: bool,
    pub settle_time: f64,
    pub verdict: Option<InstabilityVerdict>,
    /// Every oscillatory mode, unstable or not.
    pub modes: Vec<OscillatoryMode>,
    pub error: Option<String>,
}

struct Job<'s> {
    tier: usize,
    t: f64,
    island: &'s super::sim::IslandSim,
}

fn analyze(job: &Job, icfg: &IntegratorConfig, cfg: &RunConfig) -> TierAnalysis {
    let model = &job.island.model;
    let machines = island_machine_indices(model);
    let mut out = TierAnalysis {
        tier: job.tier,
        t: job.t,
        machines: machines.clone(),
        settled: false,
        settle_time: 0.0,
        verdict: None,
        modes: Vec::new(),
        error: None,
    };
    let eq = match settle_equilibrium(model, &job.island.x, &job.island.v, icfg, &cfg.pc.settle) {
        Ok(eq) => eq,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.settled = eq.settled;
    out.settle_time = eq.t_d;
    if !eq.settled {
        return out;
    }
    let lm = match build_a_matrix(&eq.blocks).and_then(|a| eigendecompose(a, &model.speed_rows())) {
        Ok(lm) => lm,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.modes = oscillatory_modes(&lm, &machines, cfg.pc.detection.omega_th);
    out.verdict = Some(detect_and_rank(&lm, &machines, &cfg.pc.detection));
    out
}

fn is_unstable(a: &TierAnalysis) -> bool {
    a.verdict.as_ref().is_some_and(|v| v.unstable)
}

/// Runs the jobs serially (stopping after the first unstable tier, whose
/// remaining islands are still analysed) or on a worker pool. Both give the
/// same analyses for every tier up to and including the first unstable one.
fn run_jobs(
    jobs: &[Job],
    icfg: &IntegratorConfig,
    cfg: &RunConfig,
    early_stop: bool,
) -> Vec<TierAnalysis> {
    let workers = cfg.pc.workers;
    if workers <= 1 {
        let mut out = Vec::new();
        let mut stop_after: Option<usize> = None;
        for job in jobs {
            if stop_after.is_some_and(|t| job.tier > t) {
                break;
            }
            let a = analyze(job, icfg, cfg);
            if early_stop && is_unstable(&a) {
                stop_after.get_or_insert(job.tier);
            }
            out.push(a);
        }
        return out;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<TierAnalysis>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs.len() {
                    break;
                }
                let a = analyze(&jobs[k], icfg, cfg);
                results.lock().expect("no worker panicked")[k] = Some(a);
            });
        }
    });
    let all: Vec<TierAnalysis> = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|a| a.expect("every job ran"))
        .collect();
    if !early_stop {
        return all;
    }
    match all.iter().find(|a| is_unstable(a)).map(|a| a.tier) {
        Some(t) => all.into_iter().filter(|a| a.tier <= t).collect(),
        None => all,
    }
}

fn pending_targets(snap: &TierSnapshot) -> Vec<usize> {
    snap.state
        .relays
        .pending_sps
        .iter()
        .flat_map(|a| a.targets.iter())
        .filter_map(|t| match t {
            Target::Machine(g) => Some(*g as usize),
            _ => None,
        })
        .collect()
}

fn jobs_for<'s>(snaps: &'s [TierSnapshot]) -> Vec<Job<'s>> {
    let mut jobs = Vec::new();
    for snap in snaps {
        let skip = pending_targets(snap);
        for island in &snap.state.islands {
            if island
                .model
                .machines
                .iter()
                .any(|m| skip.contains(&m.index))
            {
                continue;
            }
            jobs.push(Job {
                tier: snap.tier,
                t: snap.state.t,
                island,
            });
        }
    }
    jobs
}

pub(super) fn run_bem_pc(prep: &PreparedCase, cfg: &RunConfig) -> crate::Result<CascadeRun> {
    let start = Instant::now();
    let ctx = Context::new(prep, cfg);
    let mut sim = Sim::new(&ctx, true);
    let mut timings = Timings::default();
    let mut rounds: Vec<PcRound> = Vec::new();
    // Snapshots before this position were already found stable.
    let mut analyzed = 0;
    let termination = loop {
        let ta = Instant::now();
        let term = sim.run();
        timings.cascade_s += ta.elapsed().as_secs_f64();
        let tp = Instant::now();
        let snaps = sim.snapshots.as_ref().expect("recording");
        let jobs = jobs_for(&snaps[analyzed..]);
        let results = run_jobs(&jobs, &ctx.icfg, cfg, true);
        timings.predictor_s += tp.elapsed().as_secs_f64();
        let Some(tier) = results.iter().find(|a| is_unstable(a)).map(|a| a.tier) else {
            break term;
        };
        if rounds.len() >= cfg.pc.max_rounds {
            break Termination::RoundCap;
        }
        let pos = snaps
            .iter()
            .position(|s| s.tier == tier)
            .expect("analysed tier has a snapshot");
        let snap = snaps[pos].clone();
        let verdicts: Vec<InstabilityVerdict> = results
            .iter()
            .filter(|a| a.tier == tier && is_unstable(a))
            .filter_map(|a| a.verdict.clone())
            .collect();
        let t_f = snap.state.t;
        sim.restore(&snap);
        let delay = sim.st.relays.config().sps_delay;
        let mut all_targets = Vec::new();
        for v in &verdicts {
            let targets: Vec<Target> = if cfg.pc.sps_lines.is_empty() {
                v.ranking
                    .iter()
                    .take(cfg.pc.sps_machines)
                    .map(|&g| Target::Machine(g as u32))
                    .collect()
            } else {
                cfg.pc
                    .sps_lines
                    .iter()
                    .filter_map(|id| prep.case.branch_index(*id))
                    .map(|k| Target::Line(k as u32))
                    .collect()
            };
            sim.st
                .relays
                .pending_sps
                .push(schedule_sps(&targets, t_f, delay)?);
            all_targets.extend(targets);
        }
        rounds.push(PcRound {
            round: rounds.len() + 1,
            tier,
            t_f,
            verdicts,
            targets: all_targets,
        });
        analyzed = pos + 1;
    };
    let runtime = start.elapsed().as_secs_f64();
    Ok(sim.finish(termination, rounds, runtime, timings))
}

/// Runs plain backward Euler and analyses every tier without acting on the
/// verdicts. Used for mode reports.
pub fn analyze_tiers(
    prep: &PreparedCase,
    cfg: &RunConfig,
) -> crate::Result<(CascadeRun, Vec<TierAnalysis>)> {
    super::check_outages(&prep.case, cfg)?;
    let start = Instant::now();
    let ctx = Context::new(prep, cfg);
    let mut sim = Sim::new(&ctx, true);
    let term = sim.run();
    let cascade_s = start.elapsed().as_secs_f64();
    let snaps = sim.snapshots.as_ref().expect("recording");
    let jobs = jobs_for(snaps);
    let results = run_jobs(&jobs, &ctx.icfg, cfg, false);
    let runtime = start.elapsed().as_secs_f64();
    let timings = Timings {
        cascade_s,
        predictor_s: runtime - cascade_s,
    };
    Ok((sim.finish(term, Vec::new(), runtime, timings), results))
}
