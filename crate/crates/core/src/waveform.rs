//! Sampled three-phase waveforms built from piecewise phasor states.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasor::{Phasor, ThreePhaseSet};

/// Minimum samples per fundamental cycle accepted by the synthesizer.
pub const MIN_SAMPLES_PER_CYCLE: f64 = 20.0;

/// One instantaneous measurement at a relay location (volts, amperes).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub t: f64,
    pub va: f64,
    pub vb: f64,
    pub vc: f64,
    pub ia: f64,
    pub ib: f64,
    pub ic: f64,
}

impl MeasurementSample {
    pub fn voltages(&self) -> [f64; 3] {
        [self.va, self.vb, self.vc]
    }

    pub fn currents(&self) -> [f64; 3] {
        [self.ia, self.ib, self.ic]
    }
}

/// RMS phasors valid from `t_start` until the next segment begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasorSegment {
    pub t_start: f64,
    pub v: ThreePhaseSet,
    pub i: ThreePhaseSet,
}

/// `√2·|X|·cos(2π f0 t + ∠X)`.
pub fn instantaneous(x: Phasor, f0: f64, t: f64) -> f64 {
    let w = 2.0 * PI * f0;
    SQRT_2 * (x.0.re * (w * t).cos() - x.0.im * (w * t).sin())
}

/// Evaluates a voltage/current phasor pair at time `t`.
pub fn sample_at(v: &ThreePhaseSet, i: &ThreePhaseSet, f0: f64, t: f64) -> MeasurementSample {
    MeasurementSample {
        t,
        va: instantaneous(v.a, f0, t),
        vb: instantaneous(v.b, f0, t),
        vc: instantaneous(v.c, f0, t),
        ia: instantaneous(i.a, f0, t),
        ib: instantaneous(i.b, f0, t),
        ic: instantaneous(i.c, f0, t),
    }
}

pub fn check_sampling_rate(fs: f64, f0: f64) -> Result<()> {
    let min = MIN_SAMPLES_PER_CYCLE * f0;
    if !(fs >= min) {
        return Err(Error::BadSamplingRate { fs, min });
    }
    Ok(())
}

/// Number of samples in `duration` seconds at `fs`, rounded to the nearest
/// integer so that `0.3 s × 10 kHz` gives exactly 3000.
pub fn sample_count(duration: f64, fs: f64) -> usize {
    (duration * fs).round().max(0.0) as usize
}

/// Samples a piecewise-constant phasor description at `t = n / fs` for
/// `n = 0 .. duration·fs`. Segments must be sorted by `t_start`; the first
/// one applies before its own start time as well. Segments are stitched
/// without any transient between them.
pub fn synthesize_segments(
    segments: &[PhasorSegment],
    f0: f64,
    fs: f64,
    duration: f64,
) -> Result<Vec<MeasurementSample>> {
    check_sampling_rate(fs, f0)?;
    let n = sample_count(duration, fs);
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for idx in 0..n {
        let t = idx as f64 / fs;
        while k + 1 < segments.len() && t >= segments[k + 1].t_start {
            k += 1;
        }
        match segments.get(k) {
            Some(seg) => out.push(sample_at(&seg.v, &seg.i, f0, t)),
            None => out.push(MeasurementSample { t, ..Default::default() }),
        }
    }
    Ok(out)
}

/// Pre-fault / fault / post-clearance waveform at one measurement point.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_waveforms(
    pre: (&ThreePhaseSet, &ThreePhaseSet),
    fault: (&ThreePhaseSet, &ThreePhaseSet),
    post: (&ThreePhaseSet, &ThreePhaseSet),
    t_on: f64,
    t_clear: Option<f64>,
    f0: f64,
    fs: f64,
    duration: f64,
) -> Result<Vec<MeasurementSample>> {
    if !(duration > t_on) {
        return Err(Error::ScenarioInvalid {
            path: "duration".into(),
            msg: format!("duration {duration} s must exceed fault inception {t_on} s"),
        });
    }
    let mut segs = vec![
        PhasorSegment { t_start: 0.0, v: *pre.0, i: *pre.1 },
        PhasorSegment { t_start: t_on, v: *fault.0, i: *fault.1 },
    ];
    if let Some(tc) = t_clear {
        segs.push(PhasorSegment { t_start: tc, v: *post.0, i: *post.1 });
    }
    synthesize_segments(&segs, f0, fs, duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(xs: &[f64]) -> f64 {
        (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
    }

    #[test]
    fn rejects_low_sampling_rate() {
        let v = ThreePhaseSet::balanced(Phasor::new(230.0, 0.0));
        let err = synthesize_waveforms((&v, &v), (&v, &v), (&v, &v), 0.0, None, 50.0, 999.0, 0.1);
        assert!(matches!(err, Err(Error::BadSamplingRate { .. })));
    }

    #[test]
    fn steady_segment_rms_matches_phasor() {
        let v = ThreePhaseSet::balanced(Phasor::from_polar_deg(230.0, 17.0));
        let i = ThreePhaseSet::balanced(Phasor::from_polar_deg(12.5, -30.0));
        let s = synthesize_waveforms((&v, &i), (&v, &i), (&v, &i), 0.05, None, 50.0, 10_000.0, 0.1)
            .unwrap();
        assert_eq!(s.len(), 1000);
        let cycle: Vec<f64> = s[..200].iter().map(|m| m.vb).collect();
        assert!((rms(&cycle) - 230.0).abs() / 230.0 < 1e-3);
        let cycle: Vec<f64> = s[500..700].iter().map(|m| m.ic).collect();
        assert!((rms(&cycle) - 12.5).abs() / 12.5 < 1e-3);
    }

    #[test]
    fn segments_switch_at_event_instant() {
        let a = ThreePhaseSet::balanced(Phasor::new(100.0, 0.0));
        let b = ThreePhaseSet::balanced(Phasor::new(50.0, 0.0));
        let z = ThreePhaseSet::ZERO;
        let s = synthesize_waveforms((&a, &z), (&b, &z), (&a, &z), 0.02, Some(0.04), 50.0, 10_000.0, 0.06)
            .unwrap();
        // cos(2π·50·t) = 1 at whole cycles
        assert!((s[0].va - 100.0 * SQRT_2).abs() < 1e-9);
        assert!((s[200].va - 50.0 * SQRT_2).abs() < 1e-9);
        assert!((s[400].va - 100.0 * SQRT_2).abs() < 1e-9);
    }
}
