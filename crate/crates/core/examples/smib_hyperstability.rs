//! A machine with negative damping against a stiff source. The trapezoidal
//! run shows the growing swing and trips, backward Euler settles, and the
//! predictor-corrector finds the unstable mode and matches the trapezoidal
//! outcome.

use cascadesim::case_io::smib_case;
use cascadesim::engine::{analyze_tiers, run_cascade, PreparedCase, RunConfig, RunMethod};

fn main() -> cascadesim::Result<()> {
    let prep = PreparedCase::new(smib_case(-3.0))?;
    for method in [RunMethod::Tm, RunMethod::Bem, RunMethod::BemPc] {
        let run = run_cascade(&prep, &RunConfig::new(method, vec![3]))?;
        println!(
            "{:>6}: {:?} at t = {:.2} s, machines out {}",
            method.name(),
            run.termination,
            run.end_state.t,
            run.end_state.machines_out()
        );
        for e in run.events.iter().skip(1) {
            println!("        {:.3} s {:?} {:?}", e.t, e.kind, e.targets);
        }
    }
    let (_, analyses) = analyze_tiers(&prep, &RunConfig::new(RunMethod::Bem, vec![3]))?;
    for a in &analyses {
        for m in &a.modes {
            println!(
                "tier {} mode {:+.4} ± {:.3}i ({:.2} Hz)",
                a.tier, m.lambda_re, m.lambda_im, m.freq_hz
            );
        }
    }
    Ok(())
}
