use std::time::{Duration, Instant};

use num_complex::Complex64;

use super::{
    CascadeRun, EndState, PcRound, PreparedCase, RunConfig, Termination, TierRecord, Timings,
};
use crate::case_io::CaseDefinition;
use crate::coi::{reinitialize_child, FrameTransfer};
use crate::dae::{
    frame_state, DaeSystem, IslandModel, MachineModel, DW, STATES_PER_MACHINE, THETA,
};
use crate::integrators::{
    adapt_step_bem, adapt_step_tm, lte_estimate, IntegratorConfig, Method, StepResult, Stepper,
    TmStepDecision,
};
use crate::modal::{machine_speeds, SpeedWindow};
use crate::network::{branch_currents, build_ybus_subset, find_islands_with, BranchEnds, Topology};
use crate::protection::{Event, EventKind, Measurements, RelayState, Target};

/// Read-only inputs shared by every segment of a run.
pub(crate) struct Context<'a> {
    pub case: &'a CaseDefinition,
    pub prep: &'a PreparedCase,
    pub cfg: &'a RunConfig,
    pub ends: BranchEnds,
    pub machines: &'a [MachineModel],
    pub method: Method,
    pub icfg: IntegratorConfig,
    measured_sps: bool,
}

impl<'a> Context<'a> {
    pub fn new(prep: &'a PreparedCase, cfg: &'a RunConfig) -> Self {
        Self {
            case: &prep.case,
            prep,
            cfg,
            ends: BranchEnds::new(&prep.case),
            machines: &prep.machines,
            method: cfg.method.integrator(),
            icfg: cfg.integrator_config(),
            measured_sps: cfg.method.measured_sps(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IslandSim {
    pub model: IslandModel,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// f(x, V) at the current point.
    pub f: Vec<f64>,
}

impl IslandSim {
    fn refresh_f(&mut self) {
        self.f.resize(self.model.n_diff(), 0.0);
        self.model.eval_f(&self.x, &self.v, &mut self.f);
    }
}

/// Everything that evolves during a run. Cloning it gives a tier snapshot
/// from which the run can be resumed exactly.
#[derive(Debug, Clone)]
pub(crate) struct SimState {
    pub t: f64,
    dt: f64,
    retry_dt: Option<f64>,
    forced_steps: usize,
    slow_next: bool,
    floor_failures: usize,
    pub topo: Topology,
    pub islands: Vec<IslandSim>,
    /// Island (position in `islands`) of every bus, for energized buses.
    bus_island: Vec<Option<usize>>,
    n_partitions: usize,
    pub relays: RelayState,
    pub events: Vec<Event>,
    pub tiers: Vec<TierRecord>,
    pub next_tier: usize,
    initial_applied: bool,
    line_out_after_initial: Option<Vec<bool>>,
    pending_oos: Vec<usize>,
    speeds: SpeedWindow,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct TierSnapshot {
    pub tier: usize,
    pub state: SimState,
}

pub(crate) struct Sim<'a> {
    ctx: &'a Context<'a>,
    pub st: SimState,
    steppers: Vec<Stepper>,
    pub snapshots: Option<Vec<TierSnapshot>>,
    deadline: Option<Instant>,
}

const TINY: f64 = 1e-9;

impl<'a> Sim<'a> {
    pub fn new(ctx: &'a Context<'a>, record_tiers: bool) -> Self {
        let case = ctx.case;
        let topo = Topology::from_case(case);
        let current_limit = case.branches.iter().map(|b| b.current_limit).collect();
        let uvls_bus = case.buses.iter().map(|b| b.p_load > 0.0).collect();
        let relays = RelayState::new(
            &case.relays,
            current_limit,
            uvls_bus,
            case.machines.len(),
            ctx.measured_sps,
        );
        let mut st = SimState {
            t: 0.0,
            dt: ctx.icfg.dt_event,
            retry_dt: None,
            forced_steps: 0,
            slow_next: false,
            floor_failures: 0,
            topo,
            islands: Vec::new(),
            bus_island: vec![None; case.buses.len()],
            n_partitions: 0,
            relays,
            events: Vec::new(),
            tiers: Vec::new(),
            next_tier: 0,
            initial_applied: false,
            line_out_after_initial: None,
            pending_oos: Vec::new(),
            speeds: SpeedWindow::new(),
            steps: 0,
        };
        // Initial islands straight from the power flow.
        let part = find_islands_with(case, &st.topo, &ctx.ends);
        st.n_partitions = part.islands.len();
        for (_, isl) in part.energized() {
            let y = build_ybus_subset(case, &st.topo, &ctx.ends, &isl.buses);
            let model = IslandModel::new(case, isl, y, ctx.machines, &st.topo.load_fraction);
            let states: Vec<[f64; 6]> = isl
                .machines
                .iter()
                .map(|&k| {
                    let i = &ctx.prep.inits[k];
                    [i.eq, i.ed, i.delta, 0.0, i.efd, i.pm]
                })
                .collect();
            let vnet: Vec<Complex64> = isl.buses.iter().map(|&b| ctx.prep.pf.voltage(b)).collect();
            let (x, v) = frame_state(&model, &states, &vnet);
            let mut is = IslandSim {
                model,
                x,
                v,
                f: Vec::new(),
            };
            is.refresh_f();
            st.islands.push(is);
        }
        let deadline = ctx
            .cfg
            .wall_budget
            .map(|s| Instant::now() + Duration::from_secs_f64(s));
        let mut sim = Self {
            ctx,
            st,
            steppers: Vec::new(),
            snapshots: record_tiers.then(Vec::new),
            deadline,
        };
        sim.reindex();
        let (m, island_of_machine, _) = sim.measure();
        sim.st.relays.observe(m, &island_of_machine);
        sim.push_speeds();
        sim
    }

    /// Resumes from a tier snapshot; later snapshots are dropped.
    pub fn restore(&mut self, snap: &TierSnapshot) {
        self.st = snap.state.clone();
        if let Some(s) = &mut self.snapshots {
            s.retain(|x| x.tier <= snap.tier);
        }
        self.reindex();
    }

    fn reindex(&mut self) {
        self.st.bus_island = vec![None; self.ctx.case.buses.len()];
        for (i, is) in self.st.islands.iter().enumerate() {
            for &b in &is.model.buses {
                self.st.bus_island[b] = Some(i);
            }
        }
        self.steppers = self.st.islands.iter().map(|_| Stepper::new()).collect();
    }

    /// Integrates until a stop condition holds.
    pub fn run(&mut self) -> Termination {
        loop {
            if let Some(t) = self.check_stop() {
                return t;
            }
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                return Termination::WallBudget;
            }
            let next = self.next_action_time();
            if next <= self.st.t + TINY {
                self.process_due();
                continue;
            }
            let icfg = &self.ctx.icfg;
            let base = match self.st.retry_dt.take() {
                Some(h) => h,
                None if self.ctx.method == Method::Rk4 => icfg.rk4_dt,
                None if self.st.forced_steps > 0 || self.st.slow_next => icfg.dt_event,
                None => self.st.dt,
            };
            let landing = self.st.t + base >= next - TINY;
            let h = if landing { next - self.st.t } else { base };
            match self.attempt(h) {
                None => {
                    if h <= icfg.dt_event * (1.0 + 1e-9) {
                        self.st.floor_failures += 1;
                        if self.st.floor_failures >= 2 {
                            return Termination::Nonconverged;
                        }
                    }
                    self.st.retry_dt = Some((h / 2.0).max(icfg.dt_event));
                }
                Some((results, lte)) => {
                    if self.ctx.method == Method::Tm {
                        if let TmStepDecision::Reject { retry_dt } = adapt_step_tm(lte, h, icfg) {
                            if self.st.forced_steps == 0 {
                                self.st.retry_dt = Some(retry_dt);
                                continue;
                            }
                        }
                    }
                    self.accept(results, h, lte, landing.then_some(next));
                }
            }
        }
    }

    /// Steps every island by `h`. `None` when any island fails.
    fn attempt(&mut self, h: f64) -> Option<(Vec<StepResult>, f64)> {
        let icfg = &self.ctx.icfg;
        let mut out = Vec::with_capacity(self.st.islands.len());
        let mut lte: f64 = 0.0;
        for (is, stepper) in self.st.islands.iter().zip(self.steppers.iter_mut()) {
            let r = match self.ctx.method {
                Method::Rk4 => stepper.step_rk4(&is.model, &is.x, &is.v, h, icfg),
                Method::Tm => {
                    stepper.step(&is.model, &is.x, &is.v, Some(&is.f), h, Method::Tm, icfg)
                }
                Method::Bem => stepper.step(&is.model, &is.x, &is.v, None, h, Method::Bem, icfg),
            };
            let r = match r {
                Ok(r) if r.converged => r,
                _ => return None,
            };
            if self.ctx.method == Method::Tm {
                lte = lte.max(lte_estimate(&r.x, &is.x, &is.f, h, icfg.lte_tol));
            }
            out.push(r);
        }
        Some((out, lte))
    }

    fn accept(&mut self, results: Vec<StepResult>, h: f64, lte: f64, landed_at: Option<f64>) {
        let icfg = &self.ctx.icfg;
        let mut first_mismatch: f64 = 0.0;
        let mut iterations = 0;
        for (is, r) in self.st.islands.iter_mut().zip(results) {
            first_mismatch = first_mismatch.max(r.first_mismatch);
            iterations = iterations.max(r.iterations);
            is.x = r.x;
            is.v = r.v;
            is.refresh_f();
        }
        self.st.floor_failures = 0;
        self.st.steps += 1;
        self.st.t = landed_at.unwrap_or(self.st.t + h);
        match self.ctx.method {
            Method::Bem => self.st.dt = adapt_step_bem(h, first_mismatch, icfg),
            // A truncated landing step says little about the natural step.
            Method::Tm if landed_at.is_none() => {
                if let TmStepDecision::Accept { next_dt } = adapt_step_tm(lte, h, icfg) {
                    self.st.dt = next_dt;
                }
            }
            _ => {}
        }
        self.st.slow_next = iterations > icfg.r_iter_threshold;
        self.st.forced_steps = self.st.forced_steps.saturating_sub(1);
        self.post_step();
    }

    fn post_step(&mut self) {
        let (m, island_of_machine, angles) = self.measure();
        self.st.relays.observe(m, &island_of_machine);
        self.st.pending_oos = self.st.relays.check_out_of_step(&angles);
        self.push_speeds();
        self.process_due();
    }

    fn push_speeds(&mut self) {
        let mut w = vec![f64::NAN; self.ctx.case.machines.len()];
        for is in &self.st.islands {
            for (mm, s) in is
                .model
                .machines
                .iter()
                .zip(machine_speeds(&is.model, &is.x))
            {
                w[mm.index] = s;
            }
        }
        let window = self.ctx.cfg.stop.window;
        self.st.speeds.push(self.st.t, w, window);
    }

    fn next_action_time(&self) -> f64 {
        let mut next = self.ctx.cfg.stop.t_end;
        if !self.st.initial_applied {
            next = next.min(self.ctx.cfg.outage_time);
        }
        if let Some(t) = self.st.relays.next_due() {
            next = next.min(t);
        }
        next
    }

    fn process_due(&mut self) {
        let t = self.st.t;
        let case = self.ctx.case;
        let mut actions: Vec<(EventKind, Target)> = Vec::new();
        if !self.st.initial_applied && t >= self.ctx.cfg.outage_time - TINY {
            self.st.initial_applied = true;
            for id in &self.ctx.cfg.initial_outages {
                let b = case.bus_index(*id).expect("checked before the run");
                actions.push((EventKind::InitialNodeOutage, Target::Bus(b as u32)));
            }
            if actions.is_empty() {
                self.st.line_out_after_initial = Some(self.line_out());
            }
        }
        actions.extend(
            self.st
                .relays
                .take_due(t)
                .into_iter()
                .map(|d| (d.kind, d.target)),
        );
        for g in std::mem::take(&mut self.st.pending_oos) {
            actions.push((EventKind::MachineTripOos, Target::Machine(g as u32)));
        }
        if !actions.is_empty() {
            actions.sort();
            actions.dedup();
            self.apply_tier(actions);
        }
    }

    /// Measurements at the current point plus the island of every machine
    /// and COI-relative rotor angles (NaN when not energized).
    fn measure(&self) -> (Measurements, Vec<Option<usize>>, Vec<f64>) {
        let case = self.ctx.case;
        let nb = case.buses.len();
        let mut vc: Vec<Option<Complex64>> = vec![None; nb];
        for is in &self.st.islands {
            let m = is.model.n_buses();
            for (l, &g) in is.model.buses.iter().enumerate() {
                vc[g] = Some(Complex64::new(is.v[l], is.v[m + l]));
            }
        }
        let line_current = (0..case.branches.len())
            .map(
                |k| match (vc[self.ctx.ends.from[k]], vc[self.ctx.ends.to[k]]) {
                    (Some(a), Some(b)) if self.st.topo.branch_active(case, k) => {
                        let (i1, i2) = branch_currents(case, k, a, b);
                        i1.norm().max(i2.norm())
                    }
                    _ => f64::NAN,
                },
            )
            .collect();
        let bus_voltage = vc
            .iter()
            .map(|c| c.map_or(f64::NAN, |c| c.norm()))
            .collect();
        let ng = case.machines.len();
        let mut speed = vec![f64::NAN; ng];
        let mut angle = vec![f64::NAN; ng];
        let mut island_of = vec![None; ng];
        for (i, is) in self.st.islands.iter().enumerate() {
            for (k, mm) in is.model.machines.iter().enumerate() {
                let o = STATES_PER_MACHINE * k;
                speed[mm.index] = is.x[o + DW];
                angle[mm.index] = is.x[o + THETA];
                island_of[mm.index] = Some(i);
            }
        }
        let m = Measurements {
            t: self.st.t,
            line_current,
            bus_voltage,
            machine_speed: speed,
        };
        (m, island_of, angle)
    }

    /// Out-of-service or de-energized status of every branch.
    fn line_out(&self) -> Vec<bool> {
        let case = self.ctx.case;
        (0..case.branches.len())
            .map(|k| {
                !self.st.topo.branch_active(case, k)
                    || self.st.bus_island[self.ctx.ends.from[k]].is_none()
            })
            .collect()
    }

    fn demand_served_mw(&self) -> f64 {
        self.st
            .islands
            .iter()
            .flat_map(|is| is.model.loads.iter())
            .map(|l| l.p)
            .sum::<f64>()
            * self.ctx.case.base_mva
    }

    /// Applies one tier of simultaneous actions (case indices) at the current
    /// time, re-partitions the network and re-frames every child island.
    fn apply_tier(&mut self, actions: Vec<(EventKind, Target)>) {
        let ctx = self.ctx;
        let case = ctx.case;
        let t = self.st.t;
        let tier = self.st.next_tier;
        let mut transfer = FrameTransfer::new(case.machines.len(), case.buses.len());
        for is in &self.st.islands {
            transfer.absorb(&is.model, &is.x, &is.v);
        }
        let mut logged: Vec<Event> = Vec::new();
        let island_of_bus = |b: usize| self.st.bus_island[b];
        let mut log = |kind, target, island| {
            logged.push(Event {
                t,
                tier,
                kind,
                targets: vec![target],
                island,
            })
        };
        let topo = &mut self.st.topo;
        let relays = &mut self.st.relays;
        for (kind, target) in actions {
            match (kind, target) {
                (EventKind::InitialNodeOutage, Target::Bus(b)) => {
                    let b = b as usize;
                    if topo.bus_in[b] {
                        let island = island_of_bus(b);
                        let (branches, _) = topo.remove_bus(case, b);
                        for k in branches {
                            relays.element_removed(Some(k), None);
                        }
                        relays.element_removed(None, Some(b));
                        log(kind, Target::Bus(case.buses[b].id), island);
                    }
                }
                (EventKind::LineTrip | EventKind::SpsTrip, Target::Line(k)) => {
                    let k = k as usize;
                    if topo.branch_active(case, k) {
                        let island = island_of_bus(ctx.ends.from[k]);
                        topo.branch_in[k] = false;
                        relays.element_removed(Some(k), None);
                        log(kind, Target::Line(case.branches[k].id), island);
                    }
                }
                (EventKind::UvlsShed, Target::Bus(b)) => {
                    let b = b as usize;
                    if topo.bus_in[b] && island_of_bus(b).is_some() {
                        topo.load_fraction[b] = relays.remaining_fraction(b);
                        log(kind, Target::Bus(case.buses[b].id), island_of_bus(b));
                    }
                }
                (EventKind::MachineTripOos | EventKind::SpsTrip, Target::Machine(g)) => {
                    let g = g as usize;
                    if topo.machine_in[g] {
                        let b = case.bus_index(case.machines[g].bus).expect("validated");
                        topo.machine_in[g] = false;
                        log(kind, Target::Machine(case.machines[g].id), island_of_bus(b));
                    }
                }
                _ => {}
            }
        }
        if logged.is_empty() {
            return;
        }
        let part = find_islands_with(case, &self.st.topo, &ctx.ends);
        if part.islands.len() > self.st.n_partitions {
            let targets = part
                .energized()
                .map(|(i, _)| Target::Island(i as u32))
                .collect();
            logged.push(Event {
                t,
                tier,
                kind: EventKind::IslandSplit,
                targets,
                island: None,
            });
        }
        self.st.n_partitions = part.islands.len();
        let mut islands = Vec::new();
        for (_, isl) in part.energized() {
            let y = build_ybus_subset(case, &self.st.topo, &ctx.ends, &isl.buses);
            let model = IslandModel::new(case, isl, y, ctx.machines, &self.st.topo.load_fraction);
            let mut stepper = Stepper::new();
            match reinitialize_child(&model, &transfer, &mut stepper, &ctx.icfg) {
                Ok((x, v)) => {
                    let mut is = IslandSim {
                        model,
                        x,
                        v,
                        f: Vec::new(),
                    };
                    is.refresh_f();
                    islands.push(is);
                }
                Err(_) => {
                    // The child cannot solve its network: it goes dark and
                    // its machines are lost with it.
                    for &k in &isl.machines {
                        self.st.topo.machine_in[k] = false;
                    }
                }
            }
        }
        self.st.islands = islands;
        self.reindex();
        self.st.events.extend(logged);
        self.st.relays.note_event(t);
        let (m, island_of_machine, _) = self.measure();
        self.st.relays.observe(m, &island_of_machine);
        self.st.pending_oos.clear();
        self.st.speeds.clear();
        self.push_speeds();
        self.st.forced_steps = ctx.icfg.k_post_event;
        self.st.dt = ctx.icfg.dt_event;
        self.st.retry_dt = None;
        let line_out = self.line_out();
        if self.st.line_out_after_initial.is_none() {
            self.st.line_out_after_initial = Some(line_out.clone());
        }
        self.st.tiers.push(TierRecord {
            tier,
            t,
            lines_out: line_out.iter().filter(|o| **o).count(),
            demand_served_mw: self.demand_served_mw(),
        });
        self.st.next_tier += 1;
        if let Some(s) = &mut self.snapshots {
            s.push(TierSnapshot {
                tier,
                state: self.st.clone(),
            });
        }
    }

    /// Violations that a relay would still act on.
    fn violation(&self) -> bool {
        let (m, _, _) = self.measure();
        let case = self.ctx.case;
        let cfg = self.st.relays.config();
        let over = m
            .line_current
            .iter()
            .zip(&case.branches)
            .any(|(i, b)| cfg.enable_oc && *i > b.current_limit);
        let under = m
            .bus_voltage
            .iter()
            .zip(&case.buses)
            .enumerate()
            .any(|(k, (v, b))| {
                cfg.enable_uvls
                    && b.p_load > 0.0
                    && *v < cfg.v_th
                    && self.st.relays.shed_count(k) < cfg.k_shed_max
            });
        over || under
    }

    fn check_stop(&self) -> Option<Termination> {
        if self.st.islands.is_empty() {
            return Some(Termination::Collapsed);
        }
        if self.st.t >= self.ctx.cfg.stop.t_end - TINY {
            return Some(Termination::TimeLimit);
        }
        if !self.st.initial_applied || self.st.relays.anything_pending() {
            return None;
        }
        let stop = &self.ctx.cfg.stop;
        match self.st.speeds.spread(stop.window) {
            Some(s) if s <= stop.threshold && !self.violation() => Some(Termination::Settled),
            _ => None,
        }
    }

    pub fn end_state(&self) -> EndState {
        let case = self.ctx.case;
        let nb = case.buses.len();
        let f0 = case.f_nominal;
        let mut es = EndState {
            t: self.st.t,
            bus_energized: vec![false; nb],
            vm: vec![0.0; nb],
            va_deg: vec![0.0; nb],
            bus_freq_hz: vec![0.0; nb],
            machine_on: vec![false; case.machines.len()],
            line_on: self.line_out().into_iter().map(|o| !o).collect(),
            island_freq_hz: Vec::new(),
            demand_total_mw: case.total_demand_mw(),
            demand_served_mw: self.demand_served_mw(),
        };
        for is in &self.st.islands {
            let m = is.model.n_buses();
            let f = f0 * (1.0 + is.x[is.model.coi_speed_index()]);
            es.island_freq_hz.push(f);
            for (l, &g) in is.model.buses.iter().enumerate() {
                let c = Complex64::new(is.v[l], is.v[m + l]);
                es.bus_energized[g] = true;
                es.vm[g] = c.norm();
                es.va_deg[g] = c.arg().to_degrees();
                es.bus_freq_hz[g] = f;
            }
            for mm in &is.model.machines {
                es.machine_on[mm.index] = true;
            }
        }
        es
    }

    pub fn finish(
        &self,
        termination: Termination,
        pc_rounds: Vec<PcRound>,
        runtime_s: f64,
        timings: Timings,
    ) -> CascadeRun {
        let case = self.ctx.case;
        let end = self.line_out();
        let after = self
            .st
            .line_out_after_initial
            .clone()
            .unwrap_or_else(|| vec![false; end.len()]);
        let ids = |pred: &dyn Fn(usize) -> bool| -> Vec<u32> {
            (0..end.len())
                .filter(|&k| pred(k))
                .map(|k| case.branches[k].id)
                .collect()
        };
        CascadeRun {
            method: self.ctx.cfg.method,
            events: self.st.events.clone(),
            tiers: self.st.tiers.clone(),
            end_state: self.end_state(),
            termination,
            initial_line_outages: ids(&|k| after[k]),
            dependent_line_outages: ids(&|k| end[k] && !after[k]),
            pc_rounds,
            steps: self.st.steps,
            runtime_s,
            timings,
        }
    }
}
