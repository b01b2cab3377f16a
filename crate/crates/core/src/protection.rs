//! Relay models: inverse-time overcurrent, undervoltage load shedding,
//! out-of-step and special protection schemes (SPS).
//!
//! Relays see the simulation through a fixed measurement grid. Values at the
//! grid instants are interpolated linearly between accepted integration
//! steps, so window contents do not depend on the step sizes an integrator
//! happens to choose.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelayConfig {
    /// Overcurrent averaging window, s.
    pub t_w_oc: f64,
    /// Overcurrent window update period, s.
    pub oc_update_period: f64,
    pub t_w_uvls: f64,
    /// Pickup time before a shed, s.
    pub t_tp_uvls: f64,
    pub lambda_shed: f64,
    pub v_th: f64,
    pub k_shed_max: u32,
    pub oc_freeze_after_event: f64,
    pub out_of_step_angle_th: f64,
    pub sps_delay: f64,
    /// Measurement grid spacing, s.
    pub sample_period: f64,
    /// Consecutive growing half-cycle swings that arm the measured SPS.
    pub sps_growth_swings: usize,
    /// Smallest speed swing (pu) the measured SPS reacts to.
    pub sps_min_swing: f64,
    /// Time after each event during which the measured SPS cannot arm, so
    /// the build-up of a decaying post-event transient is not read as
    /// growth, s.
    pub sps_holdoff: f64,
    /// Factor by which the newest swing must exceed every earlier swing
    /// since the event before the measured SPS arms.
    pub sps_envelope_margin: f64,
    pub enable_oc: bool,
    pub enable_uvls: bool,
    pub enable_out_of_step: bool,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            t_w_oc: 1.0,
            oc_update_period: 1.0,
            t_w_uvls: 3.0,
            t_tp_uvls: 3.0,
            lambda_shed: 0.25,
            v_th: 0.8645,
            k_shed_max: 5,
            oc_freeze_after_event: 1.0,
            out_of_step_angle_th: std::f64::consts::PI,
            sps_delay: 7.5,
            sample_period: 0.02,
            sps_growth_swings: 6,
            sps_min_swing: 5e-4,
            sps_holdoff: 5.0,
            sps_envelope_margin: 1.1,
            enable_oc: true,
            enable_uvls: true,
            enable_out_of_step: true,
        }
    }
}

impl RelayConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_w_oc", self.t_w_oc),
            ("oc_update_period", self.oc_update_period),
            ("t_w_uvls", self.t_w_uvls),
            ("t_tp_uvls", self.t_tp_uvls),
            ("oc_freeze_after_event", self.oc_freeze_after_event),
            ("out_of_step_angle_th", self.out_of_step_angle_th),
            ("sample_period", self.sample_period),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Semantic(format!(
                    "relay setting {name} must be positive"
                )));
            }
        }
        if !(self.sps_delay >= 0.0 && self.sps_holdoff >= 0.0 && self.sps_envelope_margin >= 1.0) {
            return Err(Error::Semantic(
                "sps_delay and sps_holdoff must be nonnegative and sps_envelope_margin at least 1"
                    .into(),
            ));
        }
        if !(self.lambda_shed > 0.0 && self.lambda_shed <= 1.0) {
            return Err(Error::Semantic("lambda_shed must lie in (0, 1]".into()));
        }
        if self.k_shed_max < 1 || self.sps_growth_swings < 2 {
            return Err(Error::Semantic(
                "k_shed_max >= 1 and sps_growth_swings >= 2 required".into(),
            ));
        }
        for (name, w) in [
            ("t_w_oc", self.t_w_oc),
            ("t_w_uvls", self.t_w_uvls),
            ("oc_update_period", self.oc_update_period),
        ] {
            let k = w / self.sample_period;
            if (k - k.round()).abs() > 1e-9 {
                return Err(Error::Semantic(format!(
                    "{name} must be a multiple of sample_period"
                )));
            }
        }
        Ok(())
    }

    fn samples(&self, span: f64) -> usize {
        (span / self.sample_period).round() as usize
    }
}

/// Inverse-time overcurrent delay, `None` at or below pickup.
pub fn oc_delay(ratio: f64) -> Option<f64> {
    (ratio > 1.0).then(|| 0.14 / (ratio.powf(0.02) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    InitialNodeOutage,
    LineTrip,
    UvlsShed,
    MachineTripOos,
    SpsTrip,
    IslandSplit,
}

impl EventKind {
    /// Whether this kind changes network topology (splits are consequences
    /// of other events, not causes).
    pub fn is_switching(self) -> bool {
        !matches!(self, EventKind::IslandSplit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Bus(u32),
    Line(u32),
    Machine(u32),
    Island(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub tier: usize,
    pub kind: EventKind,
    pub targets: Vec<Target>,
    /// Island (index at the time of the event) the targets belonged to.
    pub island: Option<usize>,
}

/// A relay or SPS action that has come due.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DueAction {
    pub kind: EventKind,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsAction {
    pub t_fire: f64,
    pub targets: Vec<Target>,
}

/// Queues an SPS action `delay` seconds after `t_now`.
pub fn schedule_sps(targets: &[Target], t_now: f64, delay: f64) -> Result<SpsAction> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument(
            "SPS action needs at least one target".into(),
        ));
    }
    Ok(SpsAction {
        t_fire: t_now + delay,
        targets: targets.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Countdown {
    delay: f64,
    progress: f64,
    last_update: f64,
    t_trip: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Window {
    buf: VecDeque<f64>,
    cap: usize,
    sum: f64,
}

impl Window {
    fn new(cap: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(cap),
            cap,
            sum: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        if self.buf.len() == self.cap {
            self.sum -= self.buf.pop_front().expect("full");
        }
        self.buf.push_back(v);
        self.sum += v;
    }

    fn mean(&self) -> Option<f64> {
        (!self.buf.is_empty()).then(|| self.sum / self.buf.len() as f64)
    }

    fn clear(&mut self) {
        self.buf.clear();
        self.sum = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SwingTracker {
    last: [f64; 2],
    seen: usize,
    extrema: Vec<f64>,
}

impl SwingTracker {
    fn new() -> Self {
        Self {
            last: [0.0; 2],
            seen: 0,
            extrema: Vec::new(),
        }
    }

    fn push(&mut self, v: f64) {
        if self.seen >= 2 {
            let d0 = self.last[1] - self.last[0];
            let d1 = v - self.last[1];
            if d0 * d1 < 0.0 {
                self.extrema.push(self.last[1]);
            }
        }
        self.last = [self.last[1], v];
        self.seen += 1;
    }

    /// Peak-to-peak size of the most recent completed swing.
    fn last_swing(&self) -> f64 {
        let e = &self.extrema;
        if e.len() < 2 {
            0.0
        } else {
            (e[e.len() - 1] - e[e.len() - 2]).abs()
        }
    }

    fn growing(&self, swings: usize, min_swing: f64, margin: f64) -> bool {
        let e = &self.extrema;
        if e.len() < swings + 1 {
            return false;
        }
        let all: Vec<f64> = e.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let (before, s) = all.split_at(all.len() - swings);
        // A decaying beat regrows for a while but never above its earlier
        // envelope; genuine growth eventually does.
        let last = s[s.len() - 1];
        s.iter().all(|&x| x > min_swing)
            && s.windows(2).all(|w| w[1] > w[0])
            && before.iter().all(|&x| margin * x < last)
    }

    fn reset(&mut self) {
        *self = Self::new();
    }
}

/// Measured quantities at one instant. Entries set to NaN are not
/// monitored (element out of service or de-energized).
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub t: f64,
    /// Branch current magnitude, pu.
    pub line_current: Vec<f64>,
    /// Bus voltage magnitude, pu.
    pub bus_voltage: Vec<f64>,
    /// Machine speed relative to its island's COI, pu.
    pub machine_speed: Vec<f64>,
}

/// Per-run relay bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayState {
    cfg: RelayConfig,
    current_limit: Vec<f64>,
    /// Buses carrying load (only those have UVLS).
    uvls_bus: Vec<bool>,
    next_sample: u64,
    samples_per_update: u64,
    prev: Option<Measurements>,
    oc_window: Vec<Window>,
    oc: Vec<Option<Countdown>>,
    uv_window: Vec<Window>,
    uv_pickup: Vec<Option<f64>>,
    shed_count: Vec<u32>,
    prev_abs_angle: Vec<f64>,
    swings: Vec<SwingTracker>,
    measured_sps: bool,
    last_event: Option<f64>,
    pub pending_sps: Vec<SpsAction>,
}

impl RelayState {
    /// `current_limit` per branch, `uvls_bus` per bus, `n_machines`.
    pub fn new(
        cfg: &RelayConfig,
        current_limit: Vec<f64>,
        uvls_bus: Vec<bool>,
        n_machines: usize,
        measured_sps: bool,
    ) -> Self {
        let n_oc = cfg.samples(cfg.t_w_oc);
        let n_uv = cfg.samples(cfg.t_w_uvls);
        Self {
            cfg: cfg.clone(),
            oc_window: vec![Window::new(n_oc); current_limit.len()],
            oc: vec![None; current_limit.len()],
            uv_window: vec![Window::new(n_uv); uvls_bus.len()],
            uv_pickup: vec![None; uvls_bus.len()],
            shed_count: vec![0; uvls_bus.len()],
            current_limit,
            uvls_bus,
            next_sample: 0,
            samples_per_update: cfg.samples(cfg.oc_update_period) as u64,
            prev: None,
            prev_abs_angle: vec![0.0; n_machines],
            swings: vec![SwingTracker::new(); n_machines],
            measured_sps,
            last_event: None,
            pending_sps: Vec::new(),
        }
    }

    pub fn config(&self) -> &RelayConfig {
        &self.cfg
    }

    pub fn shed_count(&self, bus: usize) -> u32 {
        self.shed_count[bus]
    }

    pub fn last_event(&self) -> Option<f64> {
        self.last_event
    }

    fn sample_time(&self, k: u64) -> f64 {
        k as f64 * self.cfg.sample_period
    }

    /// Feeds the measurements at the end of an accepted step (or right after
    /// an event). Grid instants in between are interpolated.
    pub fn observe(&mut self, m: Measurements, island_of_machine: &[Option<usize>]) {
        let prev = match self.prev.take() {
            Some(p) if p.t < m.t => p,
            Some(_) => {
                // Same instant (post-event values): restart interpolation here.
                self.prev = Some(m);
                return;
            }
            None => {
                if self.sample_time(self.next_sample) <= m.t + 1e-12 {
                    self.process_sample(&m, island_of_machine);
                    self.next_sample += 1;
                }
                self.prev = Some(m);
                return;
            }
        };
        loop {
            let ts = self.sample_time(self.next_sample);
            if ts > m.t + 1e-12 {
                break;
            }
            let w = ((ts - prev.t) / (m.t - prev.t)).clamp(0.0, 1.0);
            let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        if x.is_nan() || y.is_nan() {
                            *y
                        } else {
                            x + w * (y - x)
                        }
                    })
                    .collect()
            };
            let s = Measurements {
                t: ts,
                line_current: lerp(&prev.line_current, &m.line_current),
                bus_voltage: lerp(&prev.bus_voltage, &m.bus_voltage),
                machine_speed: lerp(&prev.machine_speed, &m.machine_speed),
            };
            self.process_sample(&s, island_of_machine);
            self.next_sample += 1;
        }
        self.prev = Some(m);
    }

    fn process_sample(&mut self, s: &Measurements, island_of_machine: &[Option<usize>]) {
        let ts = s.t;
        let frozen = self
            .last_event
            .is_some_and(|te| ts < te + self.cfg.oc_freeze_after_event - 1e-9);
        let update = self.next_sample % self.samples_per_update == 0 && self.next_sample > 0;
        if self.cfg.enable_oc {
            for (k, &i) in s.line_current.iter().enumerate() {
                if i.is_nan() {
                    self.oc_window[k].clear();
                    self.oc[k] = None;
                    continue;
                }
                self.oc_window[k].push(i);
                if !update || frozen {
                    continue;
                }
                let avg = self.oc_window[k].mean().expect("just pushed");
                match oc_delay(avg / self.current_limit[k]) {
                    Some(delay) => {
                        let cd = match self.oc[k].take() {
                            Some(mut cd) => {
                                cd.progress += (ts - cd.last_update) / cd.delay;
                                cd.delay = delay;
                                cd.last_update = ts;
                                cd
                            }
                            None => Countdown {
                                delay,
                                progress: 0.0,
                                last_update: ts,
                                t_trip: 0.0,
                            },
                        };
                        let t_trip = ts + (1.0 - cd.progress).max(0.0) * delay;
                        self.oc[k] = Some(Countdown { t_trip, ..cd });
                    }
                    None => self.oc[k] = None,
                }
            }
        }
        if self.cfg.enable_uvls {
            for (b, &v) in s.bus_voltage.iter().enumerate() {
                if !self.uvls_bus[b] || v.is_nan() {
                    self.uv_window[b].clear();
                    self.uv_pickup[b] = None;
                    continue;
                }
                self.uv_window[b].push(v);
                if self.shed_count[b] >= self.cfg.k_shed_max {
                    continue;
                }
                let avg = self.uv_window[b].mean().expect("just pushed");
                if avg < self.cfg.v_th {
                    if self.uv_pickup[b].is_none() {
                        self.uv_pickup[b] = Some(ts + self.cfg.t_tp_uvls);
                    }
                } else {
                    self.uv_pickup[b] = None;
                }
            }
        }
        if self.measured_sps && self.pending_sps.is_empty() {
            if let Some(te) = self.last_event {
                let armed = ts >= te + self.cfg.sps_holdoff;
                for (g, &w) in s.machine_speed.iter().enumerate() {
                    if w.is_nan() {
                        self.swings[g].reset();
                        continue;
                    }
                    self.swings[g].push(w);
                }
                let growing = (0..self.swings.len()).find(|&g| {
                    armed
                        && !s.machine_speed[g].is_nan()
                        && self.swings[g].growing(
                            self.cfg.sps_growth_swings,
                            self.cfg.sps_min_swing,
                            self.cfg.sps_envelope_margin,
                        )
                });
                if let Some(g) = growing {
                    let island = island_of_machine[g];
                    let mut ranked: Vec<(f64, usize)> = (0..self.swings.len())
                        .filter(|&j| !s.machine_speed[j].is_nan() && island_of_machine[j] == island)
                        .map(|j| (self.swings[j].last_swing(), j))
                        .collect();
                    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    let targets: Vec<Target> = ranked
                        .iter()
                        .take(2)
                        .map(|&(_, j)| Target::Machine(j as u32))
                        .collect();
                    let t_fire = (te + self.cfg.sps_delay).max(ts);
                    self.pending_sps.push(SpsAction { t_fire, targets });
                }
            }
        }
    }

    /// Out-of-step check on COI-relative rotor angles at an accepted step.
    /// Returns machine indices to trip now.
    pub fn check_out_of_step(&mut self, angles: &[f64]) -> Vec<usize> {
        let mut trips = Vec::new();
        for (g, &a) in angles.iter().enumerate() {
            if a.is_nan() {
                self.prev_abs_angle[g] = 0.0;
                continue;
            }
            let abs = a.abs();
            if self.cfg.enable_out_of_step
                && abs > self.cfg.out_of_step_angle_th
                && abs > self.prev_abs_angle[g]
            {
                trips.push(g);
            }
            self.prev_abs_angle[g] = abs;
        }
        trips
    }

    /// Earliest pending relay or SPS action time.
    pub fn next_due(&self) -> Option<f64> {
        let oc = self.oc.iter().flatten().map(|c| c.t_trip);
        let uv = self
            .uv_pickup
            .iter()
            .enumerate()
            .filter(|(b, _)| self.shed_count[*b] < self.cfg.k_shed_max)
            .filter_map(|(_, p)| *p);
        let sps = self.pending_sps.iter().map(|a| a.t_fire);
        oc.chain(uv)
            .chain(sps)
            .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))
    }

    /// True while any countdown, pickup or SPS action is pending.
    pub fn anything_pending(&self) -> bool {
        self.next_due().is_some()
    }

    /// Removes and returns every action due at or before `t`. Machine and
    /// bus targets are indices into the case element lists.
    pub fn take_due(&mut self, t: f64) -> Vec<DueAction> {
        let due = |x: f64| x <= t + 1e-9;
        let mut out = Vec::new();
        for (k, cd) in self.oc.iter_mut().enumerate() {
            if cd.as_ref().is_some_and(|c| due(c.t_trip)) {
                *cd = None;
                self.oc_window[k].clear();
                out.push(DueAction {
                    kind: EventKind::LineTrip,
                    target: Target::Line(k as u32),
                });
            }
        }
        for b in 0..self.uv_pickup.len() {
            if self.shed_count[b] < self.cfg.k_shed_max && self.uv_pickup[b].is_some_and(due) {
                self.uv_pickup[b] = None;
                self.shed_count[b] += 1;
                out.push(DueAction {
                    kind: EventKind::UvlsShed,
                    target: Target::Bus(b as u32),
                });
            }
        }
        let (fire, keep): (Vec<SpsAction>, Vec<SpsAction>) =
            self.pending_sps.drain(..).partition(|a| due(a.t_fire));
        self.pending_sps = keep;
        for a in fire {
            for &target in &a.targets {
                out.push(DueAction {
                    kind: EventKind::SpsTrip,
                    target,
                });
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Records that a tier was applied at `t`.
    pub fn note_event(&mut self, t: f64) {
        self.last_event = Some(t);
        for s in &mut self.swings {
            s.reset();
        }
    }

    /// Forgets relay state of elements that just went out of service.
    pub fn element_removed(&mut self, line: Option<usize>, bus: Option<usize>) {
        if let Some(k) = line {
            self.oc[k] = None;
            self.oc_window[k].clear();
        }
        if let Some(b) = bus {
            self.uv_pickup[b] = None;
            self.uv_window[b].clear();
        }
    }

    /// Remaining load fraction after the shed count at `bus`.
    pub fn remaining_fraction(&self, bus: usize) -> f64 {
        (1.0 - self.cfg.lambda_shed).powi(self.shed_count[bus] as i32)
    }

    /// True when the line currently has an active countdown.
    pub fn oc_active(&self, line: usize) -> bool {
        self.oc[line].is_some()
    }

    /// Scheduled trip time of a line, if counting down.
    pub fn oc_trip_time(&self, line: usize) -> Option<f64> {
        self.oc[line].as_ref().map(|c| c.t_trip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(limits: Vec<f64>, uv: Vec<bool>) -> RelayState {
        RelayState::new(&RelayConfig::default(), limits, uv, 0, false)
    }

    fn meas(t: f64, i: f64, v: f64) -> Measurements {
        Measurements {
            t,
            line_current: vec![i],
            bus_voltage: vec![v],
            machine_speed: vec![],
        }
    }

    #[test]
    fn oc_delay_formula_and_pickup() {
        assert!(oc_delay(1.0).is_none());
        assert!(oc_delay(0.7).is_none());
        let t = oc_delay(1.5).unwrap();
        assert!((t - 17.185).abs() < 1e-2, "{t}");
    }

    #[test]
    fn sustained_overload_trips_after_inverse_time_delay() {
        let mut r = state(vec![1.0], vec![false]);
        let delay = oc_delay(2.0).unwrap();
        let mut t = 0.0;
        r.observe(meas(0.0, 2.0, 1.0), &[]);
        let mut tripped = None;
        while t < 30.0 {
            t += 0.1;
            r.observe(meas(t, 2.0, 1.0), &[]);
            if let Some(due) = r.next_due() {
                if due <= t + 1e-9 {
                    tripped = Some(due);
                    assert_eq!(r.take_due(due).len(), 1);
                    break;
                }
            }
        }
        // Countdown starts at the first window update (t = 1 s).
        assert!((tripped.unwrap() - (1.0 + delay)).abs() < 1e-9);
    }

    #[test]
    fn cleared_overload_cancels_countdown() {
        let mut r = state(vec![1.0], vec![false]);
        r.observe(meas(0.0, 1.5, 1.0), &[]);
        for k in 1..=30 {
            r.observe(meas(k as f64 * 0.1, 1.5, 1.0), &[]);
        }
        assert!(r.oc_active(0));
        for k in 31..=400 {
            r.observe(meas(k as f64 * 0.1, 0.5, 1.0), &[]);
            assert!(r.take_due(k as f64 * 0.1).is_empty());
        }
        assert!(!r.oc_active(0));
    }

    #[test]
    fn oc_is_frozen_after_event() {
        let mut r = state(vec![1.0], vec![false]);
        r.observe(meas(0.0, 1.0, 1.0), &[]);
        r.observe(meas(0.5, 1.0, 1.0), &[]);
        r.note_event(0.5);
        // Heavy overload right after the event: the t = 1 s update falls in
        // the freeze interval and must not start a countdown.
        r.observe(meas(0.5, 3.0, 1.0), &[]);
        r.observe(meas(1.2, 3.0, 1.0), &[]);
        assert!(!r.oc_active(0));
        r.observe(meas(2.0, 3.0, 1.0), &[]);
        assert!(r.oc_active(0));
    }

    #[test]
    fn uvls_sheds_fraction_up_to_cap() {
        let mut r = state(vec![], vec![true]);
        r.observe(
            Measurements {
                t: 0.0,
                line_current: vec![],
                bus_voltage: vec![0.8],
                machine_speed: vec![],
            },
            &[],
        );
        let mut sheds = Vec::new();
        let mut t = 0.0;
        while t < 60.0 {
            t += 0.1;
            r.observe(
                Measurements {
                    t,
                    line_current: vec![],
                    bus_voltage: vec![0.8],
                    machine_speed: vec![],
                },
                &[],
            );
            for a in r.take_due(t) {
                assert_eq!(a.kind, EventKind::UvlsShed);
                sheds.push(t);
            }
        }
        assert_eq!(sheds.len(), 5);
        assert!((sheds[0] - 3.0).abs() < 0.11);
        assert!((r.remaining_fraction(0) - 0.75f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn brief_dip_does_not_shed() {
        let mut r = state(vec![], vec![true]);
        let mut t = 0.0;
        r.observe(
            Measurements {
                t,
                line_current: vec![],
                bus_voltage: vec![1.0],
                machine_speed: vec![],
            },
            &[],
        );
        while t < 20.0 {
            t += 0.02;
            let v = if (5.0..6.0).contains(&t) { 0.5 } else { 1.0 };
            r.observe(
                Measurements {
                    t,
                    line_current: vec![],
                    bus_voltage: vec![v],
                    machine_speed: vec![],
                },
                &[],
            );
            assert!(r.take_due(t).is_empty());
        }
    }

    #[test]
    fn out_of_step_needs_threshold_and_growth() {
        let mut r = state(vec![], vec![]);
        r.prev_abs_angle = vec![0.0];
        assert!(r.check_out_of_step(&[0.5]).is_empty());
        assert!(r.check_out_of_step(&[3.0]).is_empty());
        assert_eq!(r.check_out_of_step(&[3.2]), vec![0]);
        assert!(r.check_out_of_step(&[3.15]).is_empty());
    }

    #[test]
    fn schedule_sps_rejects_empty_and_adds_delay() {
        assert!(schedule_sps(&[], 1.0, 7.5).is_err());
        let a = schedule_sps(&[Target::Machine(3), Target::Machine(1)], 10.0, 7.5).unwrap();
        assert_eq!(a.t_fire, 17.5);
        let a = schedule_sps(&[Target::Line(3)], 10.0, 0.0).unwrap();
        assert_eq!(a.t_fire, 10.0);
    }

    #[test]
    fn growing_oscillation_arms_measured_sps() {
        let cfg = RelayConfig::default();
        let mut r = RelayState::new(&cfg, vec![], vec![], 3, true);
        r.note_event(0.0);
        let islands = [Some(0), Some(0), Some(0)];
        let mut t = 0.0f64;
        while t < 30.0 && r.pending_sps.is_empty() {
            t += 0.01;
            let g = 1e-3 * (0.15 * t).exp() * (2.5 * t).sin();
            r.observe(
                Measurements {
                    t,
                    line_current: vec![],
                    bus_voltage: vec![],
                    machine_speed: vec![g, -0.5 * g, 0.1 * g],
                },
                &islands,
            );
        }
        let a = &r.pending_sps[0];
        assert_eq!(a.targets, vec![Target::Machine(0), Target::Machine(1)]);
        assert!(a.t_fire >= cfg.sps_delay);
    }
}
