//! Scenario files and the quasi-static event loop.
//!
//! A run is a sequence of phasor steady states. The network is re-solved at
//! every scenario event and every relay trip; between those instants each
//! measurement point produces samples of the current steady state, and every
//! relay processes its own window once per sample. A trip at sample `n`
//! opens the relay's switch from sample `n + 1`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{FaultKind, FaultSpec};
use crate::network::{
    apply_switch_action, load_testbed, LineEnd, Mode, NetworkModel, NetworkState, RelayLocation,
    SourceKind, SwitchState,
};
use crate::phasor::{fortescue_compose, Phase, ThreePhaseSet};
use crate::relay::{isolate, Relay, RelayConfig, RelayState, Thresholds, TripEvent};
use crate::waveform::{check_sampling_rate, sample_at, sample_count, MeasurementSample};

/// Relay settings a scenario may override. Rated voltage and current always
/// come from the testbed (bus nominal voltage, line rated current).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_threshold_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_threshold_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presence_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debounce_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_cycles: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directional: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristic_angle_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_cycles: Option<f64>,
}

impl RelayOverrides {
    pub fn apply(&self, mut cfg: RelayConfig) -> RelayConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(x) = self.$f { cfg.$f = x; } )* };
        }
        set!(
            v_threshold_pct,
            i_threshold_pct,
            presence_ratio,
            debounce_samples,
            window_cycles,
            disturbance_tol,
            directional,
            characteristic_angle_deg,
            memory_cycles
        );
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Fault {
        kind: FaultKind,
        line: String,
        #[serde(default = "half")]
        fraction: f64,
        #[serde(default)]
        rf: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<Phase>>,
    },
    Switch { id: String, state: SwitchState },
    Load { id: String, state: SwitchState },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedTrip {
    pub relay: String,
    pub code: u8,
}

/// Declared outcome of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// The exact set of trips; any other trip is a mismatch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trips: Option<Vec<ExpectedTrip>>,
    /// Trips that must occur; other trips are allowed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub required_trips: Vec<ExpectedTrip>,
    /// Lines whose relays must not trip.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub no_trips_on: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_response_time: Option<f64>,
    /// Every fault must be de-energized before the run ends.
    #[serde(default)]
    pub faults_cleared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Testbed file, relative to the scenario file.
    pub testbed: PathBuf,
    pub mode: Mode,
    pub duration: f64,
    #[serde(default = "default_fs")]
    pub fs: f64,
    /// Calibrated thresholds file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<PathBuf>,
    #[serde(default)]
    pub relay: RelayOverrides,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectations>,
}

fn default_fs() -> f64 {
    10_000.0
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::ScenarioInvalid { path: path.into(), msg: msg.into() }
}

/// A scenario together with everything it references, ready to run.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub net: NetworkModel,
    pub thresholds: Option<Thresholds>,
}

impl LoadedScenario {
    pub fn new(scenario: Scenario, net: NetworkModel, thresholds: Option<Thresholds>) -> Result<Self> {
        let s = Self { scenario, net, thresholds };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        validate_scenario(&self.scenario, &self.net)
    }

    /// Relay settings for one location.
    pub fn relay_config(&self, loc: &RelayLocation) -> RelayConfig {
        let mut cfg = RelayConfig {
            v_rated: self.net.buses[loc.bus].nominal_voltage / 3f64.sqrt(),
            i_rated: self.net.lines[loc.line].rated_current,
            ..RelayConfig::default()
        };
        if let Some(t) = &self.thresholds {
            cfg = cfg.with_thresholds(t);
        }
        self.scenario.relay.apply(cfg)
    }

    /// Copy with every fault resistance replaced.
    pub fn with_rf(&self, rf: f64) -> Self {
        let mut s = self.clone();
        for ev in &mut s.scenario.events {
            if let Action::Fault { rf: r, .. } = &mut ev.action {
                *r = rf;
            }
        }
        s
    }
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| invalid(path.display().to_string(), e.to_string()))
}

pub fn read_thresholds(path: impl AsRef<Path>) -> Result<Thresholds> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| invalid(path.display().to_string(), e.to_string()))
}

/// Reads a scenario file and the testbed / thresholds it references.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario> {
    let path = path.as_ref();
    let scenario = read_scenario(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let net = load_testbed(dir.join(&scenario.testbed)).map_err(|e| match e {
        Error::Io(io) => invalid("testbed", format!("{}: {io}", scenario.testbed.display())),
        other => other,
    })?;
    let thresholds = match &scenario.thresholds {
        Some(p) => Some(read_thresholds(dir.join(p)).map_err(|e| match e {
            Error::Io(io) => invalid("thresholds", format!("{}: {io}", p.display())),
            other => other,
        })?),
        None => None,
    };
    LoadedScenario::new(scenario, net, thresholds)
}

pub fn validate_scenario(s: &Scenario, net: &NetworkModel) -> Result<()> {
    if !(s.duration > 0.0) {
        return Err(invalid("duration", format!("must be positive, got {}", s.duration)));
    }
    check_sampling_rate(s.fs, net.frequency).map_err(|e| invalid("fs", e.to_string()))?;
    let switches: BTreeSet<String> = net.switch_ids().into_iter().collect();
    let mut last_t = f64::NEG_INFINITY;
    for (k, ev) in s.events.iter().enumerate() {
        let at = |field: &str| format!("events[{k}].{field}");
        if !(ev.t >= 0.0 && ev.t < s.duration) {
            return Err(invalid(at("t"), format!("{} s is outside [0, {})", ev.t, s.duration)));
        }
        if ev.t < last_t {
            return Err(invalid(at("t"), "events must be sorted by time"));
        }
        last_t = ev.t;
        match &ev.action {
            Action::Fault { kind, line, fraction, rf, phases } => {
                if net.line_index(line).is_none() {
                    return Err(invalid(at("line"), format!("unknown line `{line}`")));
                }
                let spec = FaultSpec {
                    kind: *kind,
                    line_id: line.clone(),
                    fraction: *fraction,
                    rf: *rf,
                    t_on: ev.t,
                    phases: phases.clone(),
                };
                spec.validate().map_err(|m| invalid(at("action"), m))?;
            }
            Action::Switch { id, .. } => {
                if !switches.contains(id) {
                    return Err(invalid(at("id"), format!("unknown switch `{id}`")));
                }
            }
            Action::Load { id, .. } => {
                if !net.loads.iter().any(|l| &l.id == id) {
                    return Err(invalid(at("id"), format!("unknown load `{id}`")));
                }
            }
        }
    }
    if s.mode == Mode::GridConnected && !net.sources.iter().any(|x| x.kind == SourceKind::Grid) {
        return Err(invalid("mode", "grid_connected needs a grid source in the testbed"));
    }
    for loc in net.relays() {
        let mut cfg = RelayConfig {
            v_rated: net.buses[loc.bus].nominal_voltage / 3f64.sqrt(),
            i_rated: net.lines[loc.line].rated_current,
            ..RelayConfig::default()
        };
        cfg = s.relay.apply(cfg);
        cfg.validate().map_err(|m| invalid("relay", m))?;
    }
    if let Some(exp) = &s.expect {
        let required = exp.required_trips.iter().map(|t| ("required_trips", t));
        for (k, (field, t)) in exp.trips.iter().flatten().map(|t| ("trips", t)).chain(required).enumerate() {
            if net.relay(&t.relay).is_none() {
                return Err(invalid(format!("expect.{field}[{k}].relay"), format!("unknown relay `{}`", t.relay)));
            }
            if FaultKind::from_code(t.code).is_none() {
                return Err(invalid(format!("expect.{field}[{k}].code"), format!("code {} is not 1..4", t.code)));
            }
        }
        for line in &exp.no_trips_on {
            if net.line_index(line).is_none() {
                return Err(invalid("expect.no_trips_on", format!("unknown line `{line}`")));
            }
        }
    }
    Ok(())
}

/// Sampled record of one measurement point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub relay_id: String,
    pub line_id: String,
    pub end: LineEnd,
    pub samples: Vec<MeasurementSample>,
    /// Estimated `|I⁺|, |I⁻|, |I⁰|` per sample, amperes.
    pub i_seq: Vec<[f64; 3]>,
    /// Per-sample worst-phase `(V_er%, I_er%)`, minimum voltage error and
    /// maximum current error across the three phases.
    pub errors: Vec<(f64, f64)>,
}

impl PointRecord {
    pub fn file_stem(&self) -> String {
        let end = match self.end {
            LineEnd::From => "from",
            LineEnd::To => "to",
        };
        format!("{}_{}", self.line_id, end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub kind: FaultKind,
    pub line: String,
    pub fraction: f64,
    pub rf: f64,
    pub t_on: f64,
    /// Instant the fault stopped drawing current, if it did.
    pub t_clear: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationOutcome {
    pub met: bool,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub fs: f64,
    pub duration: f64,
    pub trips: Vec<TripEvent>,
    pub final_states: Vec<RelayState>,
    pub faults: Vec<FaultRecord>,
    pub waveform_files: Vec<PathBuf>,
    pub expectations: Option<ExpectationOutcome>,
    #[serde(skip)]
    pub points: Vec<PointRecord>,
}

impl RunReport {
    pub fn trips_on_line(&self, net: &NetworkModel, line: &str) -> Vec<&TripEvent> {
        self.trips
            .iter()
            .filter(|t| net.relay(&t.relay_id).map(|r| net.lines[r.line].id == line).unwrap_or(false))
            .collect()
    }

    pub fn expectations_met(&self) -> bool {
        self.expectations.as_ref().map(|e| e.met).unwrap_or(true)
    }
}

/// Options that change how a run is executed without editing the scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Sampling-rate override.
    pub fs: Option<f64>,
    /// Relays observe but never trip (used by calibration).
    pub observe_only: bool,
}

/// Phase voltage (V) and line-end current (A) at a relay location.
fn measure(net: &NetworkModel, state: &NetworkState, loc: &RelayLocation) -> (ThreePhaseSet, ThreePhaseSet) {
    let v = fortescue_compose(&state.bus_voltage[loc.bus]).scale(net.base.v_phase());
    let k = match loc.end {
        LineEnd::From => 0,
        LineEnd::To => 1,
    };
    let i = fortescue_compose(&state.line_current[loc.line][k]).scale(net.base.i_amp());
    (v, i)
}

struct Sim {
    net: NetworkModel,
    fault: Option<FaultSpec>,
    faults: Vec<FaultRecord>,
}

impl Sim {
    /// Solves the present topology. A fault whose line is isolated at both
    /// ends, or that has no source behind it, is cleared; steady states
    /// without an energized fault are re-dispatched.
    fn solve(&mut self, t: f64) -> Result<NetworkState> {
        if let Some(f) = &self.fault {
            let li = self.net.line_index(&f.line_id).expect("validated");
            let state = self.net.solve_state(Some(f))?;
            let live = state.fault.is_some() && !self.net.lines[li].is_isolated();
            if live {
                return Ok(state);
            }
            debug!("fault on {} cleared at {t:.6} s", f.line_id);
            if let Some(rec) = self.faults.last_mut() {
                rec.t_clear = Some(t);
            }
            self.fault = None;
        }
        self.net = self.net.redispatch()?;
        self.net.solve_state(None)
    }
}

/// Runs a loaded scenario.
pub fn run_scenario(ls: &LoadedScenario, opts: RunOptions) -> Result<RunReport> {
    let sc = &ls.scenario;
    let fs = opts.fs.unwrap_or(sc.fs);
    let f0 = ls.net.frequency;
    check_sampling_rate(fs, f0).map_err(|e| invalid("fs", e.to_string()))?;

    let mut net = ls.net.clone();
    let grid_switches: Vec<String> = net
        .sources
        .iter()
        .filter(|s| s.kind == SourceKind::Grid)
        .map(|s| s.switch_id.clone())
        .collect();
    let grid_state = match sc.mode {
        Mode::GridConnected => SwitchState::Closed,
        Mode::Islanded => SwitchState::Open,
    };
    for id in &grid_switches {
        net = apply_switch_action(&net, id, grid_state)?;
    }

    let locations = net.relays();
    let mut relays: Vec<Relay> = locations
        .iter()
        .map(|loc| Relay::new(loc.relay_id.clone(), ls.relay_config(loc), f0, fs))
        .collect();
    let mut sim = Sim { net, fault: None, faults: Vec::new() };
    let mut state = sim.solve(0.0)?;

    // steady pre-history so windows and directional memory are full at t = 0
    let lead = relays
        .iter()
        .map(|r| r.window_len() + (r.cfg.memory_cycles * fs / f0).round() as usize)
        .max()
        .unwrap_or(0);
    let mut buffers: Vec<Vec<MeasurementSample>> = Vec::with_capacity(locations.len());
    for (loc, relay) in locations.iter().zip(relays.iter_mut()) {
        let (v, i) = measure(&sim.net, &state, loc);
        let buf: Vec<MeasurementSample> = (0..lead)
            .map(|k| sample_at(&v, &i, f0, (k as f64 - lead as f64) / fs))
            .collect();
        let w = relay.window_len();
        for end in w..=buf.len() {
            relay.step(&buf[end - w..end], 0.0)?;
        }
        buffers.push(buf);
    }

    let n_total = sample_count(sc.duration, fs);
    let mut points: Vec<PointRecord> = locations
        .iter()
        .map(|loc| PointRecord {
            relay_id: loc.relay_id.clone(),
            line_id: sim.net.lines[loc.line].id.clone(),
            end: loc.end,
            samples: Vec::with_capacity(n_total),
            i_seq: Vec::with_capacity(n_total),
            errors: Vec::with_capacity(n_total),
        })
        .collect();

    let mut trips: Vec<TripEvent> = Vec::new();
    let mut pending: Vec<TripEvent> = Vec::new();
    let mut next_event = 0;
    let mut t_reference = 0.0;
    for n in 0..n_total {
        let t = n as f64 / fs;
        let mut dirty = false;
        for ev in pending.drain(..) {
            sim.net = isolate(&sim.net, &ev)?;
            dirty = true;
        }
        while next_event < sc.events.len() && sc.events[next_event].t * fs <= n as f64 + 1e-9 {
            let ev = &sc.events[next_event];
            next_event += 1;
            dirty = true;
            t_reference = ev.t;
            match &ev.action {
                Action::Fault { kind, line, fraction, rf, phases } => {
                    if sim.fault.is_some() {
                        // let isolation of the earlier fault take effect first
                        state = sim.solve(t)?;
                        if let Some(prev) = &sim.fault {
                            return Err(Error::SolveFailed(format!(
                                "fault on {line} at {} s while the fault on {} is still energized",
                                ev.t, prev.line_id
                            )));
                        }
                    }
                    let spec = FaultSpec {
                        kind: *kind,
                        line_id: line.clone(),
                        fraction: *fraction,
                        rf: *rf,
                        t_on: ev.t,
                        phases: phases.clone(),
                    };
                    info!("{} fault on {line} at {} s, rf = {rf} ohm", kind, ev.t);
                    sim.faults.push(FaultRecord {
                        kind: *kind,
                        line: line.clone(),
                        fraction: *fraction,
                        rf: *rf,
                        t_on: ev.t,
                        t_clear: None,
                    });
                    sim.fault = Some(spec);
                }
                Action::Switch { id, state: s } | Action::Load { id, state: s } => {
                    info!("switch {id} -> {s:?} at {} s", ev.t);
                    sim.net = apply_switch_action(&sim.net, id, *s)?;
                }
            }
        }
        if dirty {
            state = sim.solve(t)?;
        }
        if let Some(f) = &sim.fault {
            t_reference = f.t_on;
        }
        for (k, loc) in locations.iter().enumerate() {
            let (v, i) = measure(&sim.net, &state, loc);
            let sample = sample_at(&v, &i, f0, t);
            let buf = &mut buffers[k];
            buf.push(sample);
            let w = relays[k].window_len();
            let window = &buf[buf.len() - w..];
            let trip = relays[k].step(window, t_reference)?;
            let obs = relays[k].last_observation().expect("stepped");
            let p = &mut points[k];
            p.samples.push(sample);
            p.i_seq.push([obs.i_seq.pos.magnitude(), obs.i_seq.neg.magnitude(), obs.i_seq.zero.magnitude()]);
            p.errors.push((
                obs.detection.v_er_pct.iter().copied().fold(f64::INFINITY, f64::min),
                obs.detection.i_er_pct.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ));
            // keep the buffer short; only the window is ever read
            if buf.len() > 4 * w + 1024 {
                buf.drain(..buf.len() - w);
            }
            if let Some(ev) = trip {
                if opts.observe_only {
                    relays[k].state = RelayState::new(loc.relay_id.clone());
                    continue;
                }
                info!("{} trips at {:.4} s with code {}", ev.relay_id, ev.t_trip, ev.fault_code);
                pending.push(ev.clone());
                trips.push(ev);
            }
        }
    }
    if !pending.is_empty() {
        for ev in pending.drain(..) {
            sim.net = isolate(&sim.net, &ev)?;
        }
        sim.solve(sc.duration)?;
    }

    let mut report = RunReport {
        scenario: sc.name.clone(),
        mode: sc.mode,
        fs,
        duration: sc.duration,
        trips,
        final_states: relays.iter().map(|r| r.state.clone()).collect(),
        faults: sim.faults,
        waveform_files: Vec::new(),
        expectations: None,
        points,
    };
    if let Some(exp) = &sc.expect {
        report.expectations = Some(check_expectations(&report, exp, &ls.net));
    }
    Ok(report)
}

pub fn check_expectations(report: &RunReport, exp: &Expectations, net: &NetworkModel) -> ExpectationOutcome {
    let mut mismatches = Vec::new();
    if let Some(expected) = &exp.trips {
        let want: BTreeSet<(String, u8)> = expected.iter().map(|e| (e.relay.clone(), e.code)).collect();
        let got: BTreeSet<(String, u8)> =
            report.trips.iter().map(|t| (t.relay_id.clone(), t.fault_code)).collect();
        for (r, c) in want.difference(&got) {
            mismatches.push(format!("expected {r} to trip with code {c}"));
        }
        for (r, c) in got.difference(&want) {
            mismatches.push(format!("unexpected trip of {r} with code {c}"));
        }
    }
    for e in &exp.required_trips {
        if !report.trips.iter().any(|t| t.relay_id == e.relay && t.fault_code == e.code) {
            mismatches.push(format!("expected {} to trip with code {}", e.relay, e.code));
        }
    }
    for e in &exp.required_trips {
        if !report.trips.iter().any(|t| t.relay_id == e.relay && t.fault_code == e.code) {
            mismatches.push(format!("expected {} to trip with code {}", e.relay, e.code));
        }
    }
    for line in &exp.no_trips_on {
        for t in report.trips_on_line(net, line) {
            mismatches.push(format!("{} on {line} tripped at {:.4} s", t.relay_id, t.t_trip));
        }
    }
    if let Some(max) = exp.max_response_time {
        for t in &report.trips {
            if t.response_time > max + 1e-12 {
                mismatches.push(format!(
                    "{} responded in {:.4} s, limit {:.4} s",
                    t.relay_id, t.response_time, max
                ));
            }
        }
    }
    if exp.faults_cleared {
        for f in &report.faults {
            if f.t_clear.is_none() {
                mismatches.push(format!("{} fault on {} at {} s was never cleared", f.kind, f.line, f.t_on));
            }
        }
    }
    ExpectationOutcome { met: mismatches.is_empty(), mismatches }
}
