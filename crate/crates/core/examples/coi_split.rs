//! Split the 39-bus system in two and restart each island in its own
//! center-of-inertia frame.

use cascadesim::case_io::{builtin_case, synthesize_dynamics, BuiltinCase, SynthesisOptions};
use cascadesim::coi::{reinitialize_child, FrameTransfer};
use cascadesim::dae::{frame_state, IslandModel};
use cascadesim::engine::PreparedCase;
use cascadesim::integrators::{IntegratorConfig, Stepper};
use cascadesim::network::{build_ybus_subset, find_islands_with, BranchEnds, Topology};
use num_complex::Complex64;

fn models(prep: &PreparedCase, topo: &Topology) -> Vec<IslandModel> {
    let ends = BranchEnds::new(&prep.case);
    find_islands_with(&prep.case, topo, &ends)
        .energized()
        .map(|(_, isl)| {
            let y = build_ybus_subset(&prep.case, topo, &ends, &isl.buses);
            IslandModel::new(&prep.case, isl, y, &prep.machines, &topo.load_fraction)
        })
        .collect()
}

fn main() -> cascadesim::Result<()> {
    let case = synthesize_dynamics(
        &builtin_case(BuiltinCase::Ieee39),
        &SynthesisOptions::new(1),
    );
    let prep = PreparedCase::new(case)?;
    let topo = Topology::from_case(&prep.case);
    let parent = models(&prep, &topo).remove(0);
    let states: Vec<[f64; 6]> = parent
        .machines
        .iter()
        .map(|m| {
            let i = &prep.inits[m.index];
            [i.eq, i.ed, i.delta, 0.0, i.efd, i.pm]
        })
        .collect();
    let vnet: Vec<Complex64> = parent.buses.iter().map(|&b| prep.pf.voltage(b)).collect();
    let (x, v) = frame_state(&parent, &states, &vnet);
    println!(
        "parent: {} machines, δ_COI = {:.4} rad",
        parent.machines.len(),
        x[parent.coi_angle_index()]
    );

    let mut transfer = FrameTransfer::new(prep.case.machines.len(), prep.case.buses.len());
    transfer.absorb(&parent, &x, &v);
    let mut split = topo.clone();
    for (k, br) in prep.case.branches.iter().enumerate() {
        if matches!((br.from_bus, br.to_bus), (1, 2) | (8, 9)) {
            split.branch_in[k] = false;
        }
    }
    let mut stepper = Stepper::new();
    for child in models(&prep, &split) {
        let (xc, _) = reinitialize_child(&child, &transfer, &mut stepper, &IntegratorConfig::tm())?;
        println!(
            "child: {} buses, {} machines, H_T = {:.2}, δ_COI = {:.4} rad",
            child.n_buses(),
            child.machines.len(),
            child.h_total,
            xc[child.coi_angle_index()]
        );
    }
    Ok(())
}
