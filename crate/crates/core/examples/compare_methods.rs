//! Same contingency under every integrator, compared against the
//! trapezoidal reference.

use cascadesim::case_io::{builtin_case, synthesize_dynamics, BuiltinCase, SynthesisOptions};
use cascadesim::engine::{run_cascade, PreparedCase, RunConfig, RunMethod};
use cascadesim::metrics::end_state_compare;

fn main() -> cascadesim::Result<()> {
    let opts = SynthesisOptions::new(1)
        .with_damping(4, -3.0)
        .with_damping(5, -3.0);
    let prep = PreparedCase::new(synthesize_dynamics(
        &builtin_case(BuiltinCase::Ieee39),
        &opts,
    ))?;
    let reference = run_cascade(&prep, &RunConfig::new(RunMethod::Tm, vec![21]))?;
    for method in [RunMethod::Bem, RunMethod::BemPc, RunMethod::Rk4] {
        let run = run_cascade(&prep, &RunConfig::new(method, vec![21]))?;
        let r = end_state_compare(&reference, &run)?;
        println!(
            "{:>6}: R {:.3}, {} status errors, max |dV| {:.2e} pu, max |df| {:.2e} Hz, TM/{} runtime {:.1}x",
            method.name(),
            r.r,
            r.status_errors(),
            r.max_vm_error,
            r.max_freq_error_hz,
            method.name(),
            r.runtime_ratio
        );
    }
    Ok(())
}
