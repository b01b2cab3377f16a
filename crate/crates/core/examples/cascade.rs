//! One cascade on the 39-bus system, written to out/cascade.

use cascadesim::case_io::{builtin_case, synthesize_dynamics, BuiltinCase, SynthesisOptions};
use cascadesim::engine::{run_cascade, write_outputs, PreparedCase, RunConfig, RunMethod};

fn main() -> cascadesim::Result<()> {
    let case = synthesize_dynamics(
        &builtin_case(BuiltinCase::Ieee39),
        &SynthesisOptions::new(1),
    );
    let prep = PreparedCase::new(case)?;
    let run = run_cascade(&prep, &RunConfig::new(RunMethod::BemPc, vec![16, 17]))?;
    for e in &run.events {
        println!(
            "{:>8.3} s  tier {}  {:?} {:?}",
            e.t, e.tier, e.kind, e.targets
        );
    }
    println!(
        "{:?} at t = {:.2} s: demand loss {:.2}%, {} lines out, {} steps, {:.3} s wall",
        run.termination,
        run.end_state.t,
        run.end_state.demand_loss_pct(),
        run.end_state.lines_out(),
        run.steps,
        run.runtime_s
    );
    write_outputs(&run, std::path::Path::new("out/cascade"))?;
    Ok(())
}
