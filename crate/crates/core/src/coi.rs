//! Moving states between center-of-inertia frames when islands split.
//!
//! The network (real-imaginary) frame is shared by every island, so a split
//! goes through it: parent states are lifted to absolute angles and speeds,
//! then each child is re-framed on its own COI and its voltages re-solved.

use num_complex::Complex64;

use crate::dae::{absolute_machine_states, frame_state, network_voltages, IslandModel};
use crate::error::Result;
use crate::integrators::{IntegratorConfig, Stepper};

/// Network-frame snapshot of every machine and bus, indexed by case
/// machine and case bus.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTransfer {
    /// Absolute machine states (angle δ and speed Δω in the network frame).
    pub machines: Vec<Option<[f64; 6]>>,
    pub voltages: Vec<Option<Complex64>>,
}

impl FrameTransfer {
    pub fn new(n_machines: usize, n_buses: usize) -> Self {
        Self {
            machines: vec![None; n_machines],
            voltages: vec![None; n_buses],
        }
    }

    /// Lifts one parent island to the network frame.
    pub fn absorb(&mut self, model: &IslandModel, x: &[f64], v: &[f64]) {
        for (mm, s) in model.machines.iter().zip(absolute_machine_states(model, x)) {
            self.machines[mm.index] = Some(s);
        }
        for (&g, c) in model.buses.iter().zip(network_voltages(model, x, v)) {
            self.voltages[g] = Some(c);
        }
    }

    /// States of `child` in its own COI frame, with the parent voltages as
    /// they were. Buses never seen before start at 1 pu.
    pub fn frame_child(&self, child: &IslandModel) -> (Vec<f64>, Vec<f64>) {
        let states: Vec<[f64; 6]> = child
            .machines
            .iter()
            .map(|m| self.machines[m.index].expect("child machine belonged to a parent island"))
            .collect();
        let v: Vec<Complex64> = child
            .buses
            .iter()
            .map(|&g| self.voltages[g].unwrap_or(Complex64::new(1.0, 0.0)))
            .collect();
        frame_state(child, &states, &v)
    }
}

/// Re-frames `child` from the transfer snapshot and re-solves its network
/// voltages. An error means the child cannot satisfy its network equations
/// and is to be treated as collapsed.
pub fn reinitialize_child(
    child: &IslandModel,
    transfer: &FrameTransfer,
    stepper: &mut Stepper,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, v0) = transfer.frame_child(child);
    let (v, _) = stepper.solve_algebraic(child, &x, &v0, cfg)?;
    Ok((x, v))
}
