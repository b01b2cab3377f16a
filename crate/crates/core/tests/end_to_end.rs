mod common;

use std::fs;

use cascadesim::case_io::{builtin_case, to_json, BuiltinCase};
use cascadesim::engine::{
    run_cascade, write_outputs, PreparedCase, RunConfig, RunMethod, Termination,
};
use cascadesim::metrics::{end_state_compare, monte_carlo, McOptions, MonteCarloSummary};
use cascadesim::protection::{Event, EventKind, Target};
use cascadesim::runfile::RunFile;

#[test]
fn run_file_to_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(
        &path,
        r#"{
            "case": "ieee39",
            "synthesis": { "seed": 1 },
            "method": "bem_pc",
            "outages": [16, 17],
            "output_dir": "out"
        }"#,
    )
    .unwrap();
    let rf = RunFile::from_path(&path).unwrap();
    let case = rf.load_case().unwrap();
    let cfg = rf.run_config(&case).unwrap();
    let prep = PreparedCase::new(case).unwrap();
    let run = run_cascade(&prep, &cfg).unwrap();
    let out = rf.output_dir().unwrap();
    write_outputs(&run, &out).unwrap();

    let events: Vec<Event> = fs::read_to_string(out.join("events.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(events, run.events);
    let initial: Vec<Target> = events
        .iter()
        .filter(|e| e.kind == EventKind::InitialNodeOutage)
        .flat_map(|e| e.targets.clone())
        .collect();
    assert_eq!(initial, vec![Target::Bus(16), Target::Bus(17)]);
    assert_eq!(events[0].kind, EventKind::InitialNodeOutage);
    assert!(events
        .windows(2)
        .all(|w| w[0].t <= w[1].t && w[0].tier <= w[1].tier));

    let end: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("end_state.json")).unwrap()).unwrap();
    assert_eq!(end["method"], "bem_pc");
    let timeline = fs::read_to_string(out.join("timeline.csv")).unwrap();
    assert_eq!(timeline.lines().count(), run.tiers.len() + 1);
}

#[test]
fn case_file_path_resolves_next_to_the_run_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("cases")).unwrap();
    fs::write(
        dir.path().join("cases/nine.json"),
        to_json(&builtin_case(BuiltinCase::Ieee9)),
    )
    .unwrap();
    let path = dir.path().join("run.json");
    fs::write(
        &path,
        r#"{ "case": "cases/nine.json", "synthesis": { "seed": 3 }, "method": "tm", "outages": [8] }"#,
    )
    .unwrap();
    let rf = RunFile::from_path(&path).unwrap();
    let case = rf.load_case().unwrap();
    assert_eq!(case.buses.len(), 9);
    let prep = PreparedCase::new(case.clone()).unwrap();
    let run = run_cascade(&prep, &rf.run_config(&case).unwrap()).unwrap();
    assert_eq!(run.method, RunMethod::Tm);
    assert!(run.end_state.t >= 3.0);
}

#[test]
fn methods_agree_on_a_stable_contingency() {
    let prep = common::prepared(BuiltinCase::Ieee39, 1, &[]);
    let tm = run_cascade(&prep, &RunConfig::new(RunMethod::Tm, vec![16, 17])).unwrap();
    for method in [RunMethod::Bem, RunMethod::BemPc] {
        let other = run_cascade(&prep, &RunConfig::new(method, vec![16, 17])).unwrap();
        let report = end_state_compare(&tm, &other).unwrap();
        assert_eq!(report.status_errors(), 0, "{method:?}: {report:?}");
        assert_eq!(report.r, 1.0);
        assert!(report.max_vm_error < 1e-2, "{report:?}");
    }
}

#[test]
fn small_monte_carlo_summary() {
    let prep = common::prepared(BuiltinCase::Ieee9, 2, &[]);
    let opts = McOptions {
        n: 4,
        outage_count: 1,
        seed: 11,
        reference: RunMethod::Tm,
        candidates: vec![RunMethod::Bem, RunMethod::BemPc],
        workers: 2,
    };
    let summary = monte_carlo(&prep, &RunConfig::default(), &opts).unwrap();
    assert_eq!(summary.cases.len(), 4);
    assert_eq!(summary.methods.len(), 3);
    for c in &summary.cases {
        assert!(c.error.is_none(), "{:?}", c.error);
        assert_eq!(c.outages.len(), 1);
        assert_eq!(c.runs.len(), 3);
        for r in &c.reports {
            assert!((0.0..=1.0).contains(&r.r));
        }
    }
    for m in &summary.methods {
        let f = &m.demand_loss_curve.fraction;
        assert!(f.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.resilient + m.collapsed <= 4);
        assert!(!m.mean_r.is_nan());
    }
    // Worker pool and serial runs give the same statistics.
    let serial = monte_carlo(
        &prep,
        &RunConfig::default(),
        &McOptions { workers: 0, ..opts },
    )
    .unwrap();
    for (a, b) in summary.cases.iter().zip(&serial.cases) {
        assert_eq!(a.outages, b.outages);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.termination, y.termination);
            assert_eq!(x.dependent_line_outages, y.dependent_line_outages);
            assert_eq!(x.demand_loss_pct, y.demand_loss_pct);
        }
    }
    let json = serde_json::to_string(&summary).unwrap();
    let back: MonteCarloSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back.cases.len(), 4);
}

#[test]
fn wall_budget_stops_a_run() {
    let prep = common::prepared(BuiltinCase::Ieee39, 1, &[]);
    let cfg = RunConfig {
        wall_budget: Some(1e-4),
        ..RunConfig::new(RunMethod::Rk4, vec![16])
    };
    let run = run_cascade(&prep, &cfg).unwrap();
    assert_eq!(run.termination, Termination::WallBudget);
}
