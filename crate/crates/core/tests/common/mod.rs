#![allow(dead_code)]

use cascadesim::case_io::{
    builtin_case, synthesize_dynamics, BuiltinCase, CaseDefinition, SynthesisOptions,
};
use cascadesim::dae::{frame_state, IslandModel};
use cascadesim::engine::PreparedCase;
use cascadesim::network::{build_ybus_subset, find_islands_with, BranchEnds, Island, Topology};
use num_complex::Complex64;

pub fn synthetic(which: BuiltinCase, seed: u64, damping: &[(u32, f64)]) -> CaseDefinition {
    let mut opts = SynthesisOptions::new(seed);
    for &(id, d) in damping {
        opts = opts.with_damping(id, d);
    }
    synthesize_dynamics(&builtin_case(which), &opts)
}

pub fn prepared(which: BuiltinCase, seed: u64, damping: &[(u32, f64)]) -> PreparedCase {
    PreparedCase::new(synthetic(which, seed, damping)).expect("synthetic case prepares")
}

/// Energized islands of `topo` with their models.
pub fn island_models(prep: &PreparedCase, topo: &Topology) -> Vec<(Island, IslandModel)> {
    let ends = BranchEnds::new(&prep.case);
    let part = find_islands_with(&prep.case, topo, &ends);
    part.energized()
        .map(|(_, isl)| {
            let y = build_ybus_subset(&prep.case, topo, &ends, &isl.buses);
            let model = IslandModel::new(&prep.case, isl, y, &prep.machines, &topo.load_fraction);
            (isl.clone(), model)
        })
        .collect()
}

/// The base-case island in its COI frame at the power-flow point.
pub fn initial_state(prep: &PreparedCase, model: &IslandModel) -> (Vec<f64>, Vec<f64>) {
    let states: Vec<[f64; 6]> = model
        .machines
        .iter()
        .map(|m| {
            let i = &prep.inits[m.index];
            [i.eq, i.ed, i.delta, 0.0, i.efd, i.pm]
        })
        .collect();
    let vnet: Vec<Complex64> = model.buses.iter().map(|&b| prep.pf.voltage(b)).collect();
    frame_state(model, &states, &vnet)
}
