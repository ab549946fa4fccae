//! Local-measurement relay: percentage-error detection, sequence-current
//! fault classification, debounced tripping and static-switch isolation.
//!
//! A relay sees only the samples of its own measurement point. Current is
//! measured flowing from the bus into the protected line.

use std::collections::VecDeque;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{estimate_phasors, window_samples, MIN_WINDOW_SAMPLES};
use crate::network::{apply_switch_action, NetworkModel, SwitchState};
use crate::phasor::{fortescue_decompose, SequenceSet, ThreePhaseSet};
use crate::waveform::{instantaneous, MeasurementSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelayConfig {
    /// Rated phase voltage, volts RMS.
    pub v_rated: f64,
    /// Rated current, amperes RMS.
    pub i_rated: f64,
    /// Voltage condition holds when `V_er% <= v_threshold_pct` (negative).
    pub v_threshold_pct: f64,
    /// Current condition holds when `I_er% >= i_threshold_pct` (positive).
    pub i_threshold_pct: f64,
    /// A sequence current is present when above this fraction of `i_rated`.
    pub presence_ratio: f64,
    pub debounce_samples: usize,
    /// Phasor estimation window in fundamental cycles. After a waveform
    /// discontinuity the fit restarts on the post-disturbance samples and
    /// grows back to this length.
    pub window_cycles: f64,
    /// Relative residual, against rated peak, that marks a discontinuity.
    pub disturbance_tol: f64,
    /// Block pickup for faults behind the relay.
    pub directional: bool,
    /// Angle of the directional characteristic, degrees.
    pub characteristic_angle_deg: f64,
    /// Age of the pre-disturbance reference used by the directional element.
    pub memory_cycles: f64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            v_rated: 415.0 / 3f64.sqrt(),
            i_rated: 100.0,
            v_threshold_pct: -10.0,
            i_threshold_pct: 50.0,
            presence_ratio: 0.1,
            debounce_samples: 3,
            window_cycles: 1.0,
            disturbance_tol: 1e-6,
            directional: true,
            characteristic_angle_deg: 60.0,
            memory_cycles: 2.0,
        }
    }
}

impl RelayConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut errs = Vec::new();
        if !(self.v_rated > 0.0) {
            errs.push(format!("v_rated must be positive, got {}", self.v_rated));
        }
        if !(self.i_rated > 0.0) {
            errs.push(format!("i_rated must be positive, got {}", self.i_rated));
        }
        if !(self.v_threshold_pct < 0.0) {
            errs.push(format!("v_threshold_pct must be negative, got {}", self.v_threshold_pct));
        }
        if !(self.i_threshold_pct > 0.0) {
            errs.push(format!("i_threshold_pct must be positive, got {}", self.i_threshold_pct));
        }
        if !(self.presence_ratio > 0.0) {
            errs.push(format!("presence_ratio must be positive, got {}", self.presence_ratio));
        }
        if self.debounce_samples < 1 {
            errs.push("debounce_samples must be at least 1".to_string());
        }
        if !(self.window_cycles > 0.0) {
            errs.push(format!("window_cycles must be positive, got {}", self.window_cycles));
        }
        if !(self.disturbance_tol > 0.0) {
            errs.push(format!("disturbance_tol must be positive, got {}", self.disturbance_tol));
        }
        if !(self.memory_cycles >= 0.0) {
            errs.push(format!("memory_cycles must be non-negative, got {}", self.memory_cycles));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.join("; "))
        }
    }

    /// Copy with the thresholds replaced.
    pub fn with_thresholds(mut self, t: &Thresholds) -> Self {
        self.v_threshold_pct = t.v_threshold_pct;
        self.i_threshold_pct = t.i_threshold_pct;
        self
    }
}

/// The calibrated pair of detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub v_threshold_pct: f64,
    pub i_threshold_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayStatus {
    Monitoring,
    PickedUp,
    Tripped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayState {
    pub relay_id: String,
    pub status: RelayStatus,
    pub pickup_time: Option<f64>,
    pub trip_time: Option<f64>,
    pub fault_code: Option<u8>,
}

impl RelayState {
    pub fn new(relay_id: impl Into<String>) -> Self {
        Self {
            relay_id: relay_id.into(),
            status: RelayStatus::Monitoring,
            pickup_time: None,
            trip_time: None,
            fault_code: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripEvent {
    pub relay_id: String,
    pub t_trip: f64,
    pub fault_code: u8,
    pub response_time: f64,
    /// Set when the flagged-phase/sequence pattern matched no table row and
    /// the code is the nearest match by flagged-phase count.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unclassified: bool,
}

/// Per-phase outcome of the percentage-error test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub v_er_pct: [f64; 3],
    pub i_er_pct: [f64; 3],
    pub flags: [bool; 3],
}

impl Detection {
    pub fn any(&self) -> bool {
        self.flags.iter().any(|&f| f)
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// `V_er% = 100·(|V| − V_rated)/V_rated`, `I_er% = 100·(|I| − I_rated)/I_rated`;
/// a phase is flagged when both thresholds are crossed.
pub fn detect(v_est: &ThreePhaseSet, i_est: &ThreePhaseSet, cfg: &RelayConfig) -> Detection {
    let vm = v_est.magnitudes();
    let im = i_est.magnitudes();
    let mut d = Detection {
        v_er_pct: [0.0; 3],
        i_er_pct: [0.0; 3],
        flags: [false; 3],
    };
    for k in 0..3 {
        d.v_er_pct[k] = 100.0 * (vm[k] - cfg.v_rated) / cfg.v_rated;
        d.i_er_pct[k] = 100.0 * (im[k] - cfg.i_rated) / cfg.i_rated;
        d.flags[k] = d.v_er_pct[k] <= cfg.v_threshold_pct && d.i_er_pct[k] >= cfg.i_threshold_pct;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub code: u8,
    /// False when no row matched and `code` is the nearest guess.
    pub exact: bool,
}

/// Fault code from the number of flagged phases and the presence of
/// negative- and zero-sequence current.
pub fn classify(i_seq: &SequenceSet, flags: &[bool; 3], cfg: &RelayConfig) -> Classification {
    let n = flags.iter().filter(|&&f| f).count();
    let floor = cfg.presence_ratio * cfg.i_rated;
    let zero = i_seq.zero.magnitude() >= floor;
    let neg = i_seq.neg.magnitude() >= floor;
    let exact = match (n, neg, zero) {
        (1, _, true) => Some(1),
        (2, true, false) => Some(2),
        (2, _, true) => Some(3),
        (3, _, _) => Some(4),
        _ => None,
    };
    match exact {
        Some(code) => Classification { code, exact: true },
        None => Classification {
            code: match n {
                0 | 1 => 1,
                2 => 2,
                _ => 4,
            },
            exact: false,
        },
    }
}

/// What the relay estimated on its latest sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub v: ThreePhaseSet,
    pub i: ThreePhaseSet,
    pub i_seq: SequenceSet,
    pub detection: Detection,
    pub forward: bool,
}

/// A relay with its state machine and the directional memory.
#[derive(Debug, Clone)]
pub struct Relay {
    pub cfg: RelayConfig,
    pub state: RelayState,
    f0: f64,
    window: usize,
    delay: usize,
    history: VecDeque<(Complex64, Complex64)>,
    frozen: Option<(Complex64, Complex64)>,
    consecutive: usize,
    flags_seen: [bool; 3],
    /// Samples since the last discontinuity, capped at the window length.
    fresh: usize,
    last: Option<Observation>,
}

impl Relay {
    pub fn new(relay_id: impl Into<String>, cfg: RelayConfig, f0: f64, fs: f64) -> Self {
        let window = window_samples(cfg.window_cycles, f0, fs);
        let delay = (cfg.memory_cycles * fs / f0).round() as usize;
        Self {
            cfg,
            state: RelayState::new(relay_id),
            f0,
            window,
            delay,
            history: VecDeque::with_capacity(delay + 1),
            frozen: None,
            consecutive: 0,
            flags_seen: [false; 3],
            fresh: window,
            last: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.state.relay_id
    }

    /// Samples the relay needs in its estimation window.
    pub fn window_len(&self) -> usize {
        self.window
    }

    pub fn last_observation(&self) -> Option<&Observation> {
        self.last.as_ref()
    }

    /// Positive-sequence superimposed direction test against the delayed
    /// (or frozen) reference.
    fn forward(&self, v1: Complex64, i1: Complex64) -> bool {
        if !self.cfg.directional {
            return true;
        }
        let (v_ref, i_ref) = self
            .frozen
            .or_else(|| self.history.front().copied())
            .unwrap_or((v1, i1));
        let dv = v1 - v_ref;
        let di = i1 - i_ref;
        let rot = Complex64::from_polar(1.0, -self.cfg.characteristic_angle_deg.to_radians());
        (-dv * di.conj() * rot).re > 0.0
    }

    fn remember(&mut self, v1: Complex64, i1: Complex64) {
        self.history.push_back((v1, i1));
        while self.history.len() > self.delay + 1 {
            self.history.pop_front();
        }
    }

    /// True when `m` departs from the sinusoids of the previous fit.
    fn discontinuity(&self, prev: &Observation, m: &MeasurementSample) -> bool {
        let tv = self.cfg.disturbance_tol * std::f64::consts::SQRT_2 * self.cfg.v_rated;
        let ti = self.cfg.disturbance_tol * std::f64::consts::SQRT_2 * self.cfg.i_rated;
        let v = prev.v.as_array();
        let i = prev.i.as_array();
        let vs = [m.va, m.vb, m.vc];
        let is = [m.ia, m.ib, m.ic];
        (0..3).any(|k| {
            (vs[k] - instantaneous(v[k], self.f0, m.t)).abs() > tv
                || (is[k] - instantaneous(i[k], self.f0, m.t)).abs() > ti
        })
    }

    /// Fits the newest post-disturbance samples, or holds the previous
    /// estimate while too few of them exist.
    fn estimate(&mut self, window: &[MeasurementSample]) -> Result<(ThreePhaseSet, ThreePhaseSet)> {
        if let (Some(prev), Some(m)) = (&self.last, window.last()) {
            if self.fresh >= MIN_WINDOW_SAMPLES && self.discontinuity(prev, m) {
                self.fresh = 0;
            }
        }
        self.fresh = (self.fresh + 1).min(window.len());
        match &self.last {
            Some(prev) if self.fresh < MIN_WINDOW_SAMPLES => Ok((prev.v, prev.i)),
            Some(_) => estimate_phasors(&window[window.len() - self.fresh..], self.f0),
            None => estimate_phasors(window, self.f0),
        }
    }

    /// Processes the window ending at the newest sample. `t_reference` is the
    /// instant response time is measured from (the active fault inception).
    pub fn step(
        &mut self,
        window: &[MeasurementSample],
        t_reference: f64,
    ) -> Result<Option<TripEvent>> {
        let (v, i) = self.estimate(window)?;
        let t = window.last().map(|m| m.t).unwrap_or(0.0);
        let i_seq = fortescue_decompose(&i);
        let v1 = fortescue_decompose(&v).pos.0;
        let i1 = i_seq.pos.0;
        let detection = detect(&v, &i, &self.cfg);
        if detection.any() {
            if self.frozen.is_none() {
                self.frozen = Some(self.history.front().copied().unwrap_or((v1, i1)));
            }
        } else {
            self.frozen = None;
        }
        let forward = self.forward(v1, i1);
        self.remember(v1, i1);
        self.last = Some(Observation { v, i, i_seq, detection, forward });

        if self.state.status == RelayStatus::Tripped {
            return Ok(None);
        }
        if !(detection.any() && forward) {
            if self.state.status == RelayStatus::PickedUp {
                self.state.status = RelayStatus::Monitoring;
                self.state.pickup_time = None;
            }
            self.consecutive = 0;
            self.flags_seen = [false; 3];
            return Ok(None);
        }
        if self.state.status == RelayStatus::Monitoring {
            self.state.status = RelayStatus::PickedUp;
            self.state.pickup_time = Some(t);
        }
        self.consecutive += 1;
        for k in 0..3 {
            self.flags_seen[k] |= detection.flags[k];
        }
        if self.consecutive < self.cfg.debounce_samples {
            return Ok(None);
        }
        let class = classify(&i_seq, &self.flags_seen, &self.cfg);
        if !class.exact {
            warn!(
                "relay {}: flagged phases {:?} with |I-|={:.3} A, |I0|={:.3} A match no fault row; tripping with code {}",
                self.state.relay_id,
                self.flags_seen,
                i_seq.neg.magnitude(),
                i_seq.zero.magnitude(),
                class.code
            );
        }
        self.state.status = RelayStatus::Tripped;
        self.state.trip_time = Some(t);
        self.state.fault_code = Some(class.code);
        Ok(Some(TripEvent {
            relay_id: self.state.relay_id.clone(),
            t_trip: t,
            fault_code: class.code,
            response_time: (t - t_reference).max(0.0),
            unclassified: !class.exact,
        }))
    }
}

/// One processing step of `relay` on the window ending at the newest sample.
pub fn relay_step(
    relay: &mut Relay,
    window: &[MeasurementSample],
    t_reference: f64,
) -> Result<Option<TripEvent>> {
    relay.step(window, t_reference)
}

/// Opens the static switch driven by the tripping relay.
pub fn isolate(net: &NetworkModel, event: &TripEvent) -> Result<NetworkModel> {
    apply_switch_action(net, &event.relay_id, SwitchState::Open)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::{Phasor, ALPHA, ALPHA2};

    fn cfg() -> RelayConfig {
        RelayConfig {
            v_rated: 240.0,
            i_rated: 10.0,
            ..RelayConfig::default()
        }
    }

    fn balanced(m: f64) -> ThreePhaseSet {
        ThreePhaseSet::balanced(Phasor::new(m, 0.0))
    }

    #[test]
    fn nominal_operation_is_not_flagged() {
        let d = detect(&balanced(240.0), &balanced(10.0), &cfg());
        assert!(!d.any());
        assert!(d.v_er_pct.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn current_alone_never_flags() {
        let d = detect(&balanced(240.0 * 0.98), &balanced(11.5), &cfg());
        assert!((d.i_er_pct[0] - 15.0).abs() < 1e-9);
        assert!(!d.any());
        // even a huge current with healthy voltage
        assert!(!detect(&balanced(240.0), &balanced(1000.0), &cfg()).any());
    }

    #[test]
    fn deep_sag_with_overcurrent_flags() {
        let d = detect(&balanced(240.0 * 0.4), &balanced(50.0), &cfg());
        assert_eq!(d.count(), 3);
    }

    #[test]
    fn swell_never_satisfies_voltage_condition() {
        let d = detect(&balanced(300.0), &balanced(50.0), &cfg());
        assert!(!d.any());
    }

    #[test]
    fn classification_table() {
        let c = cfg();
        let big = Phasor::new(5.0, 0.0);
        let tiny = Phasor::new(0.01, 0.0);
        let lg = SequenceSet::new(big, big, big);
        assert_eq!(classify(&lg, &[true, false, false], &c), Classification { code: 1, exact: true });
        let ll = SequenceSet::new(big, -big, tiny);
        assert_eq!(classify(&ll, &[false, true, true], &c), Classification { code: 2, exact: true });
        let llg = SequenceSet::new(big, big, big);
        assert_eq!(classify(&llg, &[false, true, true], &c), Classification { code: 3, exact: true });
        let sym = SequenceSet::new(big, tiny, tiny);
        assert_eq!(classify(&sym, &[true, true, true], &c), Classification { code: 4, exact: true });
    }

    #[test]
    fn unmatched_pattern_falls_back_by_phase_count() {
        let c = cfg();
        let only_pos = SequenceSet::new(Phasor::new(5.0, 0.0), Phasor::ZERO, Phasor::ZERO);
        let r = classify(&only_pos, &[true, false, false], &c);
        assert_eq!(r, Classification { code: 1, exact: false });
        let r = classify(&only_pos, &[true, true, false], &c);
        assert_eq!(r, Classification { code: 2, exact: false });
    }

    #[test]
    fn classification_ignores_phase_labels() {
        let c = cfg();
        let s = SequenceSet::new(Phasor::new(5.0, 1.0), Phasor::new(-2.0, 1.0), Phasor::new(1.0, -3.0));
        // relabelling a->b->c rotates neg/zero phasors but keeps magnitudes
        let r = SequenceSet::new(s.pos * ALPHA, s.neg * ALPHA2, s.zero);
        for flags in [[true, false, false], [true, true, false], [true, true, true]] {
            let rotated = [flags[2], flags[0], flags[1]];
            assert_eq!(classify(&s, &flags, &c), classify(&r, &rotated, &c));
        }
    }

    #[test]
    fn config_validation() {
        assert!(RelayConfig::default().validate().is_ok());
        let bad = RelayConfig {
            v_threshold_pct: 5.0,
            i_threshold_pct: -1.0,
            debounce_samples: 0,
            ..RelayConfig::default()
        };
        let msg = bad.validate().unwrap_err();
        assert!(msg.contains("v_threshold_pct") && msg.contains("i_threshold_pct"));
        assert!(msg.contains("debounce_samples"));
    }
}
