//! Remove buses from the 39-bus system and list the resulting islands.

use cascadesim::case_io::{builtin_case, BuiltinCase};
use cascadesim::network::{build_ybus, find_islands, Topology};

fn main() {
    let case = builtin_case(BuiltinCase::Ieee39);
    let mut topo = Topology::from_case(&case);
    for id in [16, 17] {
        let (lines, machines) = topo.remove_bus(&case, case.bus_index(id).unwrap());
        println!(
            "bus {id} out: {} branches and {} machines disconnected",
            lines.len(),
            machines.len()
        );
    }
    let part = find_islands(&case, &topo);
    for isl in &part.islands {
        let ids: Vec<u32> = isl.buses.iter().map(|&b| case.buses[b].id).collect();
        println!(
            "island of {} buses, {} machines, energized {}: {:?}",
            ids.len(),
            isl.machines.len(),
            isl.has_generation,
            ids
        );
    }
    let y = build_ybus(&case, &topo);
    println!("Ybus of the intact buses has dimension {}", y.dim());
}
