//! Fundamental-frequency phasor estimation from a sample window.
//!
//! Each channel is fitted with `a·cos(ωt) + b·sin(ωt)` by least squares,
//! using absolute sample times so the phasor angle shares the synthesizer's
//! time reference. Over a whole number of cycles the normal equations are
//! diagonal and the fit is the ordinary one-bin DFT correlation; for
//! shorter windows the 2×2 normalization keeps the estimate exact on a pure
//! sinusoid.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phasor::{Phasor, ThreePhaseSet};
use crate::waveform::MeasurementSample;

/// Fewest samples that give a well-posed fit.
pub const MIN_WINDOW_SAMPLES: usize = 4;

/// Window length in samples for `cycles` fundamental cycles at `fs`.
pub fn window_samples(cycles: f64, f0: f64, fs: f64) -> usize {
    ((cycles * fs / f0).round() as usize).max(MIN_WINDOW_SAMPLES)
}

/// Least-squares fit of one fundamental-frequency sinusoid per channel.
struct Basis {
    c: Vec<f64>,
    s: Vec<f64>,
    inv: [[f64; 2]; 2],
}

impl Basis {
    fn new(ts: impl Iterator<Item = f64>, f0: f64) -> Result<Self> {
        let w = 2.0 * PI * f0;
        let (c, s): (Vec<f64>, Vec<f64>) = ts.map(|t| ((w * t).cos(), (w * t).sin())).unzip();
        let n = c.len();
        if n < MIN_WINDOW_SAMPLES {
            return Err(Error::ShortWindow { got: n, need: MIN_WINDOW_SAMPLES });
        }
        let scc: f64 = c.iter().map(|x| x * x).sum();
        let sss: f64 = s.iter().map(|x| x * x).sum();
        let scs: f64 = c.iter().zip(&s).map(|(x, y)| x * y).sum();
        let det = scc * sss - scs * scs;
        if det.abs() <= 1e-12 * (scc * sss).max(f64::MIN_POSITIVE) {
            return Err(Error::ShortWindow { got: n, need: n + 1 });
        }
        Ok(Self {
            c,
            s,
            inv: [[sss / det, -scs / det], [-scs / det, scc / det]],
        })
    }

    fn fit(&self, xs: impl Iterator<Item = f64>) -> Phasor {
        let (mut pc, mut ps) = (0.0, 0.0);
        for ((x, c), s) in xs.zip(&self.c).zip(&self.s) {
            pc += x * c;
            ps += x * s;
        }
        let a = self.inv[0][0] * pc + self.inv[0][1] * ps;
        let b = self.inv[1][0] * pc + self.inv[1][1] * ps;
        // a·cos(ωt) + b·sin(ωt) = √2·Re{(a − jb)/√2 · e^{jωt}}
        Phasor(Complex64::new(a, -b) / SQRT_2)
    }
}

/// RMS voltage and current phasors over `window`.
pub fn estimate_phasors(
    window: &[MeasurementSample],
    f0: f64,
) -> Result<(ThreePhaseSet, ThreePhaseSet)> {
    let basis = Basis::new(window.iter().map(|m| m.t), f0)?;
    let v = ThreePhaseSet::new(
        basis.fit(window.iter().map(|m| m.va)),
        basis.fit(window.iter().map(|m| m.vb)),
        basis.fit(window.iter().map(|m| m.vc)),
    );
    let i = ThreePhaseSet::new(
        basis.fit(window.iter().map(|m| m.ia)),
        basis.fit(window.iter().map(|m| m.ib)),
        basis.fit(window.iter().map(|m| m.ic)),
    );
    Ok((v, i))
}

/// Single-channel variant: fits `xs` sampled at `t0 + k/fs`.
pub fn estimate_channel(xs: &[f64], t0: f64, fs: f64, f0: f64) -> Result<Phasor> {
    let basis = Basis::new((0..xs.len()).map(|k| t0 + k as f64 / fs), f0)?;
    Ok(basis.fit(xs.iter().copied()))
}
