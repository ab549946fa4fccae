//! Threshold calibration from the two weakest islanded faults and the
//! no-fault switching set.
//!
//! Faulted extremes come from the steady fault state seen by the relays at
//! both ends of the faulted line, restricted to the faulted phases. No-fault
//! extremes come from full sampled runs with the relays observing only, so
//! the estimation transients around each switching instant are included.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{FaultKind, FaultSpec};
use crate::network::{apply_switch_action, LineEnd, Mode, NetworkModel, SourceKind, SwitchState};
use crate::phasor::fortescue_compose;
use crate::relay::{detect, RelayConfig, Thresholds};
use crate::scenario::{
    run_scenario, Action, LoadedScenario, RelayOverrides, RunOptions, Scenario, ScenarioEvent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFault {
    pub kind: FaultKind,
    pub line: String,
    pub rf: f64,
}

/// What to simulate during calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    pub faults: Vec<CalibrationFault>,
    /// Islanded run switching these loads in one after another.
    pub switched_loads: Vec<String>,
    /// Grid-connected run opening then reclosing the grid switch.
    pub grid_switch: Option<String>,
    pub fs: f64,
    pub relay: RelayOverrides,
}

impl CalibrationPlan {
    /// 20 Ω L-G on the first protected line and 20 Ω L-L-L-G on the last,
    /// both islanded; every load that starts disconnected is switched in;
    /// the grid switch is cycled.
    pub fn default_for(net: &NetworkModel) -> Self {
        let protected: Vec<&str> = net
            .lines
            .iter()
            .filter(|l| l.relay_from.is_some())
            .map(|l| l.id.as_str())
            .collect();
        let mut faults = Vec::new();
        if let (Some(first), Some(last)) = (protected.first(), protected.last()) {
            faults.push(CalibrationFault { kind: FaultKind::Lg, line: first.to_string(), rf: 20.0 });
            faults.push(CalibrationFault { kind: FaultKind::Lllg, line: last.to_string(), rf: 20.0 });
        }
        Self {
            faults,
            switched_loads: net
                .loads
                .iter()
                .filter(|l| !l.connected.is_closed())
                .map(|l| l.id.clone())
                .collect(),
            grid_switch: net
                .sources
                .iter()
                .find(|s| s.kind == SourceKind::Grid)
                .map(|s| s.switch_id.clone()),
            fs: 10_000.0,
            relay: RelayOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    fn empty() -> Self {
        Self { lo: f64::INFINITY, hi: f64::NEG_INFINITY }
    }

    fn add(&mut self, x: f64) {
        self.lo = self.lo.min(x);
        self.hi = self.hi.max(x);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub thresholds: Thresholds,
    pub nofault_v_pct: Range,
    pub nofault_i_pct: Range,
    pub fault_v_pct: Range,
    pub fault_i_pct: Range,
}

fn islanded(net: &NetworkModel) -> Result<NetworkModel> {
    let mut out = net.clone();
    for s in net.sources.iter().filter(|s| s.kind == SourceKind::Grid) {
        out = apply_switch_action(&out, &s.switch_id, SwitchState::Open)?;
    }
    out.redispatch()
}

fn fault_ranges(net: &NetworkModel, plan: &CalibrationPlan, v: &mut Range, i: &mut Range) -> Result<()> {
    let base = islanded(net)?;
    for f in &plan.faults {
        let li = base.line_index(&f.line).ok_or_else(|| Error::UnknownLine(f.line.clone()))?;
        let spec = FaultSpec::new(f.kind, &f.line, 0.5, f.rf);
        let state = base.solve_state(Some(&spec))?;
        let line = &base.lines[li];
        for end in [LineEnd::From, LineEnd::To] {
            let Some(relay_id) = line.relay(end) else { continue };
            let loc = base.relay(relay_id).expect("relay on line");
            let k = usize::from(end == LineEnd::To);
            let vm = fortescue_compose(&state.bus_voltage[loc.bus]).scale(base.base.v_phase());
            let im = fortescue_compose(&state.line_current[loc.line][k]).scale(base.base.i_amp());
            let cfg = RelayConfig {
                v_rated: base.buses[loc.bus].nominal_voltage / 3f64.sqrt(),
                i_rated: line.rated_current,
                ..RelayConfig::default()
            };
            let d = detect(&vm, &im, &cfg);
            for p in spec.faulted_phases() {
                v.add(d.v_er_pct[p.index()]);
                i.add(d.i_er_pct[p.index()]);
            }
        }
    }
    Ok(())
}

fn nofault_scenarios(plan: &CalibrationPlan) -> Vec<Scenario> {
    let mut out = Vec::new();
    let mk = |name: &str, mode: Mode, events: Vec<ScenarioEvent>| Scenario {
        name: name.into(),
        testbed: "".into(),
        mode,
        duration: 0.3,
        fs: plan.fs,
        thresholds: None,
        relay: plan.relay.clone(),
        events,
        expect: None,
    };
    if !plan.switched_loads.is_empty() {
        let events = plan
            .switched_loads
            .iter()
            .enumerate()
            .map(|(k, id)| ScenarioEvent {
                t: 0.04 * (k + 1) as f64,
                action: Action::Load { id: id.clone(), state: SwitchState::Closed },
            })
            .collect();
        out.push(mk("calibration-load-switching", Mode::Islanded, events));
    }
    if let Some(sw) = &plan.grid_switch {
        let events = vec![
            ScenarioEvent { t: 0.14, action: Action::Switch { id: sw.clone(), state: SwitchState::Open } },
            ScenarioEvent { t: 0.18, action: Action::Switch { id: sw.clone(), state: SwitchState::Closed } },
        ];
        out.push(mk("calibration-sectional-islanding", Mode::GridConnected, events));
    }
    out
}

/// Percentage-error envelopes of the calibration cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRanges {
    pub nofault_v_pct: Range,
    pub nofault_i_pct: Range,
    pub fault_v_pct: Range,
    pub fault_i_pct: Range,
}

pub fn calibration_ranges(net: &NetworkModel, plan: &CalibrationPlan) -> Result<CalibrationRanges> {
    let mut fv = Range::empty();
    let mut fi = Range::empty();
    fault_ranges(net, plan, &mut fv, &mut fi)?;

    let mut nv = Range::empty();
    let mut ni = Range::empty();
    for sc in nofault_scenarios(plan) {
        let ls = LoadedScenario::new(sc, net.clone(), None)?;
        let report = run_scenario(&ls, RunOptions { fs: None, observe_only: true })?;
        for p in &report.points {
            for &(v, i) in &p.errors {
                nv.add(v);
                ni.add(i);
            }
        }
    }
    Ok(CalibrationRanges {
        nofault_v_pct: nv,
        nofault_i_pct: ni,
        fault_v_pct: fv,
        fault_i_pct: fi,
    })
}

/// Chooses thresholds halfway between the no-fault and faulted extremes.
pub fn calibrate_thresholds(net: &NetworkModel, plan: &CalibrationPlan) -> Result<CalibrationReport> {
    let r = calibration_ranges(net, plan)?;
    let (nv, ni, fv, fi) = (r.nofault_v_pct, r.nofault_i_pct, r.fault_v_pct, r.fault_i_pct);
    if !(fv.lo.is_finite() && nv.lo.is_finite()) {
        return Err(Error::Config(vec!["calibration needs at least one fault and one no-fault case".into()]));
    }
    if ni.hi >= fi.lo {
        return Err(Error::NoSeparation {
            quantity: "current error",
            nofault_lo: ni.lo,
            nofault_hi: ni.hi,
            fault_lo: fi.lo,
            fault_hi: fi.hi,
        });
    }
    if nv.lo <= fv.hi {
        return Err(Error::NoSeparation {
            quantity: "voltage error",
            nofault_lo: nv.lo,
            nofault_hi: nv.hi,
            fault_lo: fv.lo,
            fault_hi: fv.hi,
        });
    }
    let thresholds = Thresholds {
        v_threshold_pct: 0.5 * (nv.lo + fv.hi),
        i_threshold_pct: 0.5 * (ni.hi + fi.lo),
    };
    if !(thresholds.i_threshold_pct > 0.0 && thresholds.v_threshold_pct < 0.0) {
        return Err(Error::Config(vec![format!(
            "separating thresholds ({:.3} %, {:.3} %) fall on the wrong side of rated; \
             check the line rated currents",
            thresholds.v_threshold_pct, thresholds.i_threshold_pct
        )]));
    }
    Ok(CalibrationReport {
        thresholds,
        nofault_v_pct: nv,
        nofault_i_pct: ni,
        fault_v_pct: fv,
        fault_i_pct: fi,
    })
}
