//! Measured one-step amplification of the integrators on x' = λx.
//!
//! Backward Euler damps oscillations that are growing in the continuous
//! system (|AF| < 1 for Re(λΔt) > 2), which is why it can hide an
//! instability that the trapezoidal method reproduces.

use cascadesim::integrators::{measured_amplification, Method};
use num_complex::Complex64;

fn main() -> cascadesim::Result<()> {
    println!(
        "{:>14} {:>10} {:>10} {:>10}",
        "λΔt", "|AF| TM", "|AF| BEM", "|AF| RK4"
    );
    for z in [
        Complex64::new(-1000.0, 0.0),
        Complex64::new(-10.0, 0.0),
        Complex64::new(-0.1, 2.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.05, 0.5),
        Complex64::new(0.5, 8.0),
        Complex64::new(3.0, 0.0),
    ] {
        let af = |m| measured_amplification(m, z).map(|a| a.norm());
        // The explicit step refuses to run away and reports an error.
        let rk4 = af(Method::Rk4).map_or("diverges".to_string(), |a| format!("{a:.3e}"));
        println!(
            "{:>14} {:>10.4} {:>10.4} {:>10}",
            format!("{:.2}{:+.2}i", z.re, z.im),
            af(Method::Tm)?,
            af(Method::Bem)?,
            rk4
        );
    }
    Ok(())
}
