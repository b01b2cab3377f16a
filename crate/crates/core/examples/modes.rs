//! Oscillatory modes of the 39-bus system with two negatively damped
//! machines, before and after the loss of bus 21.

use cascadesim::case_io::{builtin_case, synthesize_dynamics, BuiltinCase, SynthesisOptions};
use cascadesim::engine::{analyze_tiers, PreparedCase, RunConfig, RunMethod};
use cascadesim::modal::mode_report_csv;

fn main() -> cascadesim::Result<()> {
    let opts = SynthesisOptions::new(1)
        .with_damping(4, -3.0)
        .with_damping(5, -3.0);
    let case = synthesize_dynamics(&builtin_case(BuiltinCase::Ieee39), &opts);
    let prep = PreparedCase::new(case)?;
    let (run, analyses) = analyze_tiers(&prep, &RunConfig::new(RunMethod::Bem, vec![21]))?;
    println!(
        "{} tiers analyzed, run ended {:?}",
        analyses.len(),
        run.termination
    );
    let rows: Vec<_> = analyses.iter().map(|a| (a.tier, a.modes.clone())).collect();
    let ids: Vec<u32> = prep.case.machines.iter().map(|m| m.id).collect();
    print!("{}", mode_report_csv(&rows, |k| format!("G{}", ids[k]), 3));
    Ok(())
}
