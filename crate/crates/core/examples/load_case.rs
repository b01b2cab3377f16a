//! Load a bundled case, solve its power flow and print the generator dispatch.
//!
//! cargo run --example load_case -- case39

use cascadesim::case_io::{
    builtin_case, parse_case, solve_power_flow, BuiltinCase, PowerFlowOptions,
};

fn main() -> cascadesim::Result<()> {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "case9".into());
    let case = match BuiltinCase::from_name(&arg) {
        Some(which) => builtin_case(which),
        None => parse_case(&std::fs::read_to_string(&arg)?)?,
    };
    println!(
        "{}: {} buses, {} branches, {} machines, {:.1} MW demand",
        arg,
        case.buses.len(),
        case.branches.len(),
        case.machines.len(),
        case.total_demand_mw()
    );
    let pf = solve_power_flow(&case, &PowerFlowOptions::default())?;
    println!(
        "power flow converged in {} iterations (mismatch {:.1e})",
        pf.iterations, pf.mismatch_inf_norm
    );
    for m in &case.machines {
        let b = case.bus_index(m.bus).unwrap();
        println!(
            "  machine {:>3} at bus {:>3}: |V| {:.4} pu, angle {:>7.2} deg",
            m.id,
            m.bus,
            pf.vm[b],
            pf.va[b].to_degrees()
        );
    }
    Ok(())
}
