//! Random two-bus outages on the 39-bus system, BEM-PC against the
//! trapezoidal reference.
//!
//! cargo run --release --example monte_carlo -- 20

use cascadesim::case_io::{builtin_case, synthesize_dynamics, BuiltinCase, SynthesisOptions};
use cascadesim::engine::{PreparedCase, RunConfig, RunMethod};
use cascadesim::metrics::{monte_carlo, McOptions};

fn main() -> cascadesim::Result<()> {
    let n = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let case = synthesize_dynamics(
        &builtin_case(BuiltinCase::Ieee39),
        &SynthesisOptions::new(1),
    );
    let prep = PreparedCase::new(case)?;
    let opts = McOptions {
        n,
        candidates: vec![RunMethod::BemPc, RunMethod::Bem],
        workers: std::thread::available_parallelism().map_or(1, |p| p.get()),
        ..McOptions::default()
    };
    let summary = monte_carlo(&prep, &RunConfig::default(), &opts)?;
    for m in &summary.methods {
        println!(
            "{:>6}: mean R {:.4}, median runtime ratio {:.2}, {} resilient, {} collapsed",
            m.method.name(),
            m.mean_r,
            m.median_runtime_ratio,
            m.resilient,
            m.collapsed
        );
    }
    let tm = &summary.methods[0];
    for m in &summary.methods[1..] {
        println!(
            "{:>6}: largest gap to TM, demand loss curve {:.3}, line outage curve {:.3}",
            m.method.name(),
            tm.demand_loss_curve.max_gap(&m.demand_loss_curve),
            tm.line_outage_curve.max_gap(&m.line_outage_curve)
        );
    }
    Ok(())
}
