//! Admittance matrices, element status bookkeeping and island detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case_io::{BranchStatus, CaseDefinition};
use crate::sparse::Triplets;

/// Status of every switchable element. Removed buses take their machines,
/// loads and incident branches with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bus_in: Vec<bool>,
    pub branch_in: Vec<bool>,
    pub machine_in: Vec<bool>,
    /// Remaining fraction of each bus load, in [0, 1].
    pub load_fraction: Vec<f64>,
}

impl Topology {
    pub fn from_case(case: &CaseDefinition) -> Self {
        Self {
            bus_in: vec![true; case.buses.len()],
            branch_in: case
                .branches
                .iter()
                .map(|b| b.status == BranchStatus::In)
                .collect(),
            machine_in: vec![true; case.machines.len()],
            load_fraction: vec![1.0; case.buses.len()],
        }
    }

    pub fn branch_active(&self, case: &CaseDefinition, k: usize) -> bool {
        let br = &case.branches[k];
        self.branch_in[k]
            && self.bus_in[case.bus_index(br.from_bus).expect("validated")]
            && self.bus_in[case.bus_index(br.to_bus).expect("validated")]
    }

    /// Takes a bus out together with everything attached to it. Returns the
    /// branches and machines that were switched off by this call.
    pub fn remove_bus(&mut self, case: &CaseDefinition, bus: usize) -> (Vec<usize>, Vec<usize>) {
        let id = case.buses[bus].id;
        self.bus_in[bus] = false;
        self.load_fraction[bus] = 0.0;
        let mut branches = Vec::new();
        for (k, br) in case.branches.iter().enumerate() {
            if self.branch_in[k] && (br.from_bus == id || br.to_bus == id) {
                self.branch_in[k] = false;
                branches.push(k);
            }
        }
        let mut machines = Vec::new();
        for (k, m) in case.machines.iter().enumerate() {
            if self.machine_in[k] && m.bus == id {
                self.machine_in[k] = false;
                machines.push(k);
            }
        }
        (branches, machines)
    }
}

/// Resolved bus indices of every branch, computed once per case.
#[derive(Debug, Clone)]
pub struct BranchEnds {
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    /// Branches incident to each bus, ascending.
    pub incident: Vec<Vec<usize>>,
}

impl BranchEnds {
    pub fn new(case: &CaseDefinition) -> Self {
        let mut from = Vec::with_capacity(case.branches.len());
        let mut to = Vec::with_capacity(case.branches.len());
        let mut incident = vec![Vec::new(); case.buses.len()];
        for (k, br) in case.branches.iter().enumerate() {
            let f = case.bus_index(br.from_bus).expect("validated");
            let t = case.bus_index(br.to_bus).expect("validated");
            from.push(f);
            to.push(t);
            incident[f].push(k);
            incident[t].push(k);
        }
        Self { from, to, incident }
    }
}

pub fn series_admittance(r: f64, x: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(r, x)
}

/// Complex bus admittance matrix over a (possibly local) bus ordering, stored
/// row-wise with columns ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    /// Global bus index of each local row.
    pub buses: Vec<usize>,
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

/// Builds Y over every bus of the case (removed buses keep empty rows).
pub fn build_ybus(case: &CaseDefinition, topo: &Topology) -> AdmittanceMatrix {
    let all: Vec<usize> = (0..case.buses.len()).collect();
    build_ybus_subset(case, topo, &BranchEnds::new(case), &all)
}

/// Builds Y restricted to `buses`, indexed locally in the given order.
pub fn build_ybus_subset(
    case: &CaseDefinition,
    topo: &Topology,
    ends: &BranchEnds,
    buses: &[usize],
) -> AdmittanceMatrix {
    let local = local_map(case.buses.len(), buses);
    let rows = buses
        .iter()
        .map(|&g| row_entries(case, topo, ends, &local, g))
        .collect();
    AdmittanceMatrix {
        buses: buses.to_vec(),
        rows,
    }
}

fn local_map(n: usize, buses: &[usize]) -> Vec<Option<usize>> {
    let mut local = vec![None; n];
    for (l, &g) in buses.iter().enumerate() {
        local[g] = Some(l);
    }
    local
}

fn row_entries(
    case: &CaseDefinition,
    topo: &Topology,
    ends: &BranchEnds,
    local: &[Option<usize>],
    g: usize,
) -> Vec<(usize, Complex64)> {
    let mut row: Vec<(usize, Complex64)> = Vec::new();
    if !topo.bus_in[g] {
        return row;
    }
    let li = local[g].expect("bus in subset");
    let bus = &case.buses[g];
    let mut diag = Complex64::new(bus.g_shunt, bus.b_shunt);
    for &k in &ends.incident[g] {
        if !topo.branch_active(case, k) {
            continue;
        }
        let br = &case.branches[k];
        let y = series_admittance(br.r, br.x);
        diag += y + Complex64::new(0.0, br.b_charging / 2.0);
        let other = if ends.from[k] == g {
            ends.to[k]
        } else {
            ends.from[k]
        };
        let lj = local[other].expect("active branch stays inside the subset");
        row.push((lj, -y));
    }
    row.push((li, diag));
    row.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match merged.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => merged.push((c, v)),
        }
    }
    merged
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .iter()
            .find(|e| e.0 == j)
            .map_or(Complex64::new(0.0, 0.0), |e| e.1)
    }

    pub fn mul(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, y)| y * v[j]).sum())
            .collect()
    }

    /// Recomputes the rows of the given global buses from element data. Used
    /// after a branch trip; the result equals a full rebuild exactly.
    pub fn refresh_rows(
        &mut self,
        case: &CaseDefinition,
        topo: &Topology,
        ends: &BranchEnds,
        global_buses: &[usize],
    ) {
        let local = local_map(case.buses.len(), &self.buses);
        for &g in global_buses {
            if let Some(l) = local[g] {
                self.rows[l] = row_entries(case, topo, ends, &local, g);
            }
        }
    }

    /// Real-form expansion Y_N = [[G, -B], [B, G]] acting on [re; im].
    pub fn real_form(&self) -> Triplets {
        let m = self.dim();
        let nnz: usize = self.rows.iter().map(Vec::len).sum();
        let mut t = Triplets::with_capacity(2 * m, 2 * m, 4 * nnz);
        self.push_real_form(&mut t, 0);
        t
    }

    /// Appends the real form to `t` with both offsets equal to `off`.
    pub fn push_real_form(&self, t: &mut Triplets, off: usize) {
        let m = self.dim();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, y) in row {
                t.push(off + i, off + j, y.re);
                t.push(off + i, off + m + j, -y.im);
                t.push(off + m + i, off + j, y.im);
                t.push(off + m + i, off + m + j, y.re);
            }
        }
    }

    /// Y_N v for a stacked [re; im] vector, without forming Y_N.
    pub fn real_form_mul(&self, v: &[f64]) -> Vec<f64> {
        let m = self.dim();
        assert_eq!(v.len(), 2 * m);
        let mut out = vec![0.0; 2 * m];
        for (i, row) in self.rows.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for &(j, y) in row {
                re += y.re * v[j] - y.im * v[m + j];
                im += y.im * v[j] + y.re * v[m + j];
            }
            out[i] = re;
            out[m + i] = im;
        }
        out
    }
}

/// Stacks complex voltages into [re; im].
pub fn stack(v: &[Complex64]) -> Vec<f64> {
    v.iter()
        .map(|c| c.re)
        .chain(v.iter().map(|c| c.im))
        .collect()
}

pub fn unstack(v: &[f64]) -> Vec<Complex64> {
    let m = v.len() / 2;
    (0..m).map(|i| Complex64::new(v[i], v[m + i])).collect()
}

/// Sending- and receiving-end currents of a branch given its terminal
/// voltages.
pub fn branch_currents(
    case: &CaseDefinition,
    k: usize,
    v_from: Complex64,
    v_to: Complex64,
) -> (Complex64, Complex64) {
    let br = &case.branches[k];
    let y = series_admittance(br.r, br.x);
    let half_b = Complex64::new(0.0, br.b_charging / 2.0);
    let series = y * (v_from - v_to);
    (series + half_b * v_from, -series + half_b * v_to)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Island {
    /// Global bus indices, ascending.
    pub buses: Vec<usize>,
    pub branches: Vec<usize>,
    pub machines: Vec<usize>,
    pub has_generation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandPartition {
    pub islands: Vec<Island>,
    /// Island index of every bus; `None` for removed buses.
    pub bus_island: Vec<Option<usize>>,
}

impl IslandPartition {
    /// Islands without an in-service generating (non-condenser) machine are
    /// de-energized.
    pub fn energized(&self) -> impl Iterator<Item = (usize, &Island)> {
        self.islands
            .iter()
            .enumerate()
            .filter(|(_, i)| i.has_generation)
    }
}

/// Connected components over active branches, ordered by smallest bus.
pub fn find_islands(case: &CaseDefinition, topo: &Topology) -> IslandPartition {
    find_islands_with(case, topo, &BranchEnds::new(case))
}

pub fn find_islands_with(
    case: &CaseDefinition,
    topo: &Topology,
    ends: &BranchEnds,
) -> IslandPartition {
    let n = case.buses.len();
    let mut bus_island = vec![None; n];
    let mut islands = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if !topo.bus_in[start] || bus_island[start].is_some() {
            continue;
        }
        let id = islands.len();
        let mut buses = vec![start];
        bus_island[start] = Some(id);
        stack.push(start);
        while let Some(b) = stack.pop() {
            for &k in &ends.incident[b] {
                if !topo.branch_active(case, k) {
                    continue;
                }
                let other = if ends.from[k] == b {
                    ends.to[k]
                } else {
                    ends.from[k]
                };
                if bus_island[other].is_none() {
                    bus_island[other] = Some(id);
                    buses.push(other);
                    stack.push(other);
                }
            }
        }
        buses.sort_unstable();
        islands.push(Island {
            buses,
            branches: Vec::new(),
            machines: Vec::new(),
            has_generation: false,
        });
    }
    for k in 0..case.branches.len() {
        if topo.branch_active(case, k) {
            let id = bus_island[ends.from[k]].expect("active branch has live ends");
            islands[id].branches.push(k);
        }
    }
    for (k, m) in case.machines.iter().enumerate() {
        if !topo.machine_in[k] {
            continue;
        }
        let b = case.bus_index(m.bus).expect("validated");
        if let Some(id) = bus_island[b] {
            islands[id].machines.push(k);
            // Synchronous condensers cannot carry an island on their own.
            let condenser = m.dynamics.as_ref().is_some_and(|d| d.is_condenser);
            islands[id].has_generation |= !condenser;
        }
    }
    IslandPartition {
        islands,
        bus_island,
    }
}
