use std::fmt::Write as _;
use std::path::Path;

use super::CascadeRun;
use crate::error::Result;

/// One JSON object per event and line.
pub fn events_jsonl(run: &CascadeRun) -> String {
    let mut s = String::new();
    for e in &run.events {
        s.push_str(&serde_json::to_string(e).expect("events serialize"));
        s.push('\n');
    }
    s
}

pub fn end_state_json(run: &CascadeRun) -> String {
    #[derive(serde::Serialize)]
    struct Out<'a> {
        method: &'static str,
        termination: super::Termination,
        demand_loss_pct: f64,
        lines_out: usize,
        machines_out: usize,
        dependent_line_outages: &'a [u32],
        end_state: &'a super::EndState,
    }
    let out = Out {
        method: run.method.name(),
        termination: run.termination,
        demand_loss_pct: run.end_state.demand_loss_pct(),
        lines_out: run.end_state.lines_out(),
        machines_out: run.end_state.machines_out(),
        dependent_line_outages: &run.dependent_line_outages,
        end_state: &run.end_state,
    };
    serde_json::to_string_pretty(&out).expect("end state serializes")
}

/// `t,tier,lines_out,demand_loss_mw`, one row per tier.
pub fn timeline_csv(run: &CascadeRun) -> String {
    let mut s = String::from("t,tier,lines_out,demand_loss_mw\n");
    let total = run.end_state.demand_total_mw;
    for r in &run.tiers {
        let _ = writeln!(
            s,
            "{:.6},{},{},{:.4}",
            r.t,
            r.tier,
            r.lines_out,
            total - r.demand_served_mw
        );
    }
    s
}

/// Writes `events.jsonl`, `end_state.json` and `timeline.csv` into `dir`.
pub fn write_outputs(run: &CascadeRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("events.jsonl"), events_jsonl(run))?;
    std::fs::write(dir.join("end_state.json"), end_state_json(run))?;
    std::fs::write(dir.join("timeline.csv"), timeline_csv(run))?;
    Ok(())
}
