//! Overcurrent delay curve and undervoltage load shedding on a lone bus.

use cascadesim::protection::{oc_delay, Measurements, RelayConfig, RelayState};

fn main() {
    for ratio in [1.05, 1.1, 1.5, 2.0, 5.0] {
        println!(
            "|I|/I_c = {ratio:<4}  trip after {:>7.2} s",
            oc_delay(ratio).unwrap()
        );
    }

    let cfg = RelayConfig::default();
    let mut relays = RelayState::new(&cfg, vec![], vec![true], 0, false);
    let meas = |t| Measurements {
        t,
        line_current: vec![],
        bus_voltage: vec![0.8],
        machine_speed: vec![],
    };
    let mut t = 0.0;
    relays.observe(meas(t), &[]);
    while t < 40.0 {
        t += 0.1;
        relays.observe(meas(t), &[]);
        if !relays.take_due(t).is_empty() {
            println!(
                "t = {t:5.1} s: shed, {:.1}% of the load left",
                100.0 * relays.remaining_fraction(0)
            );
        }
    }
}
