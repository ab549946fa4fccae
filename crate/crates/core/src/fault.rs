//! Sequence-network fault solutions for the two-source equivalent.
//!
//! Sign convention: `i_fault` is the current *injected into the network* at
//! the fault point, so a bolted three-phase fault gives
//! `I_f⁺ = −V_fp⁺ / (Z₁⁺ ∥ Z₂⁺)`. `i_side1`/`i_side2` are the shares of
//! that injection flowing back through the `from` and `to` segments, and
//! the bus voltages are fault components `ΔV_k = Z_sk · I_k`, i.e. sags to be
//! added to the pre-fault voltage.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::TheveninPair;
use crate::phasor::{
    fortescue_compose, Phase, Phasor, Sequence, SequenceSet, ThreePhaseSet, ALPHA, ALPHA2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    #[serde(rename = "LG")]
    Lg,
    #[serde(rename = "LL")]
    Ll,
    #[serde(rename = "LLG")]
    Llg,
    #[serde(rename = "LLLG")]
    Lllg,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [FaultKind::Lg, FaultKind::Ll, FaultKind::Llg, FaultKind::Lllg];

    /// Identification code reported by the relays: L-G=1, L-L=2, L-L-G=3,
    /// L-L-L-G=4.
    pub fn code(self) -> u8 {
        match self {
            FaultKind::Lg => 1,
            FaultKind::Ll => 2,
            FaultKind::Llg => 3,
            FaultKind::Lllg => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<FaultKind> {
        FaultKind::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn phase_count(self) -> usize {
        match self {
            FaultKind::Lg => 1,
            FaultKind::Ll | FaultKind::Llg => 2,
            FaultKind::Lllg => 3,
        }
    }

    pub fn default_phases(self) -> Vec<Phase> {
        match self {
            FaultKind::Lg => vec![Phase::A],
            FaultKind::Ll | FaultKind::Llg => vec![Phase::B, Phase::C],
            FaultKind::Lllg => vec![Phase::A, Phase::B, Phase::C],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FaultKind::Lg => "L-G",
            FaultKind::Ll => "L-L",
            FaultKind::Llg => "L-L-G",
            FaultKind::Lllg => "L-L-L-G",
        }
    }
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A shunt fault on a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub line_id: String,
    /// Position along the line from its `from` bus, in `[0, 1]`.
    #[serde(default = "midpoint")]
    pub fraction: f64,
    /// Fault resistance in ohms.
    #[serde(default)]
    pub rf: f64,
    #[serde(default)]
    pub t_on: f64,
    #[serde(default)]
    pub phases: Option<Vec<Phase>>,
}

fn midpoint() -> f64 {
    0.5
}

impl FaultSpec {
    pub fn new(kind: FaultKind, line_id: impl Into<String>, fraction: f64, rf: f64) -> Self {
        Self {
            kind,
            line_id: line_id.into(),
            fraction,
            rf,
            t_on: 0.0,
            phases: None,
        }
    }

    pub fn at(mut self, t_on: f64) -> Self {
        self.t_on = t_on;
        self
    }

    pub fn with_phases(mut self, phases: Vec<Phase>) -> Self {
        self.phases = Some(phases);
        self
    }

    pub fn faulted_phases(&self) -> Vec<Phase> {
        let mut p = self.phases.clone().unwrap_or_else(|| self.kind.default_phases());
        p.sort();
        p.dedup();
        p
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.rf >= 0.0) || !self.rf.is_finite() {
            return Err(format!("rf must be a finite non-negative value, got {}", self.rf));
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(format!("fraction must lie in [0, 1], got {}", self.fraction));
        }
        let n = self.faulted_phases().len();
        if n != self.kind.phase_count() {
            return Err(format!(
                "{} fault needs {} faulted phase(s), got {}",
                self.kind,
                self.kind.phase_count(),
                n
            ));
        }
        Ok(())
    }

    /// Phase whose boundary condition anchors the sequence connection: the
    /// faulted phase for L-G, the healthy phase for L-L and L-L-G.
    fn reference_phase(&self) -> Phase {
        let phases = self.faulted_phases();
        match self.kind {
            FaultKind::Lg => phases[0],
            FaultKind::Ll | FaultKind::Llg => Phase::ALL
                .into_iter()
                .find(|p| !phases.contains(p))
                .unwrap_or(Phase::A),
            FaultKind::Lllg => Phase::A,
        }
    }
}

/// Fault-point and line-end sequence quantities (per-unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSolution {
    pub i_fault: SequenceSet,
    pub i_side1: SequenceSet,
    pub i_side2: SequenceSet,
    pub v_bus1: SequenceSet,
    pub v_bus2: SequenceSet,
    /// Pre-fault positive-sequence voltages at the two line-end buses.
    pub v_bus_prefault: [Phasor; 2],
    /// Pre-fault current from each line-end bus into the line.
    pub i_line_prefault: [Phasor; 2],
    pub deenergized: bool,
}

impl FaultSolution {
    fn deenergized(th: &TheveninPair) -> Self {
        Self {
            i_fault: SequenceSet::ZERO,
            i_side1: SequenceSet::ZERO,
            i_side2: SequenceSet::ZERO,
            v_bus1: SequenceSet::ZERO,
            v_bus2: SequenceSet::ZERO,
            v_bus_prefault: th.v_bus_prefault,
            i_line_prefault: th.i_line_prefault,
            deenergized: true,
        }
    }
}

fn div(num: Complex64, den: Complex64) -> Result<Complex64> {
    if den.norm() == 0.0 {
        Err(Error::ZeroImpedanceFault)
    } else {
        Ok(num / den)
    }
}

/// Sequence currents drawn by the fault for reference phase `a`.
fn drawn_currents(
    kind: FaultKind,
    v: Complex64,
    zp: Complex64,
    zn: Option<Complex64>,
    z0: Option<Complex64>,
    zf: Complex64,
) -> Result<[Complex64; 3]> {
    let zero = Complex64::new(0.0, 0.0);
    // a network with an open positive side but live negative side cannot
    // occur for passive networks; treat a missing negative path as open
    let zn = zn.unwrap_or(Complex64::new(f64::INFINITY, 0.0));
    if !zn.re.is_finite() && kind != FaultKind::Lllg {
        return Ok([zero; 3]);
    }
    Ok(match kind {
        FaultKind::Lllg => [div(v, zf + zp)?, zero, zero],
        FaultKind::Lg => match z0 {
            Some(z0) => {
                let i = div(v, zp + zn + z0 + zf * 3.0)?;
                [i, i, i]
            }
            None => [zero; 3],
        },
        FaultKind::Ll => {
            let i = div(v, zp + zn + zf)?;
            [i, -i, zero]
        }
        // fault resistance in each faulted phase, bolted to ground behind it
        FaultKind::Llg => {
            let zp = zp + zf;
            let zn = zn + zf;
            match z0 {
                Some(z0) => {
                    let z0 = z0 + zf;
                    let par = div(zn * z0, zn + z0)?;
                    let i1 = div(v, zp + par)?;
                    let i2 = -i1 * div(z0, zn + z0)?;
                    let i0 = -i1 * div(zn, zn + z0)?;
                    [i1, i2, i0]
                }
                // no ground return: the two phases short through 2·Zf
                None => {
                    let i = div(v, zp + zn)?;
                    [i, -i, zero]
                }
            }
        }
    })
}

/// Solves a shunt fault on the two-source equivalent.
///
/// The sequence networks are interconnected per fault kind: series through
/// `3Z_f` for L-G, positive against negative through `Z_f` for L-L, and
/// positive only for L-L-L-G. For L-L-G the resistance sits in each faulted
/// phase, so `Z_f` is added to every sequence network before the bolted
/// connection (negative ∥ zero across positive).
/// The fault current is shared between the sides with the current divider
/// and bus voltages follow from the transfer impedance between the fault
/// point and each bus.
pub fn solve_internal_fault(th: &TheveninPair, spec: &FaultSpec) -> Result<FaultSolution> {
    spec.validate()
        .map_err(|msg| Error::ScenarioInvalid { path: "fault".into(), msg })?;
    if !th.is_energized() {
        return Ok(FaultSolution::deenergized(th));
    }
    let zp = th.parallel(Sequence::Positive).expect("energized pair has a positive path");
    let zn = th.parallel(Sequence::Negative);
    let z0 = th.parallel(Sequence::Zero);
    let zf = Complex64::new(spec.rf / th.z_base, 0.0);
    let drawn = drawn_currents(spec.kind, th.vfp_prefault.0, zp, zn, z0, zf)?;

    // rotate from the reference-phase-a frame to the actual phases
    let (rot2, rot0) = match spec.reference_phase() {
        Phase::A => (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)),
        Phase::B => (ALPHA, ALPHA2),
        Phase::C => (ALPHA2, ALPHA),
    };
    let i_fault = SequenceSet::new(
        Phasor(-drawn[0]),
        Phasor(-drawn[1] * rot2),
        Phasor(-drawn[2] * rot0),
    );

    let mut sol = FaultSolution {
        i_fault,
        i_side1: SequenceSet::ZERO,
        i_side2: SequenceSet::ZERO,
        v_bus1: SequenceSet::ZERO,
        v_bus2: SequenceSet::ZERO,
        v_bus_prefault: th.v_bus_prefault,
        i_line_prefault: th.i_line_prefault,
        deenergized: false,
    };
    for seq in Sequence::ALL {
        let (k1, k2) = th.shares(seq);
        let i = i_fault.get(seq).0;
        let i1 = i * k1;
        let i2 = i * k2;
        sol.i_side1.set(seq, Phasor(i1));
        sol.i_side2.set(seq, Phasor(i2));
        if let Some(zt) = th.transfer(1, seq) {
            sol.v_bus1.set(seq, Phasor(zt * i));
        }
        if let Some(zt) = th.transfer(2, seq) {
            sol.v_bus2.set(seq, Phasor(zt * i));
        }
    }
    Ok(sol)
}

/// Through-current of a healthy line from its end-bus sequence voltages:
/// `Iⁱ = (V₁ⁱ − V₂ⁱ) / (Z_d1ⁱ + Z_d2ⁱ)`.
pub fn solve_external_fault(
    th_between: &TheveninPair,
    v1: &SequenceSet,
    v2: &SequenceSet,
) -> Result<SequenceSet> {
    let mut out = SequenceSet::ZERO;
    for seq in Sequence::ALL {
        let z = th_between.zd1.get(seq) + th_between.zd2.get(seq);
        if z.norm() == 0.0 {
            return Err(Error::ZeroLineImpedance(match seq {
                Sequence::Positive => "positive",
                Sequence::Negative => "negative",
                Sequence::Zero => "zero",
            }));
        }
        out.set(seq, Phasor((v1.get(seq).0 - v2.get(seq).0) / z));
    }
    Ok(out)
}

/// Phase voltage at bus `side` (1 or 2) and phase current flowing from that
/// bus into the faulted line, pre-fault plus fault component.
pub fn phase_quantities(sol: &FaultSolution, side: u8) -> (ThreePhaseSet, ThreePhaseSet) {
    let (k, dv, di) = if side == 1 {
        (0, sol.v_bus1, sol.i_side1)
    } else {
        (1, sol.v_bus2, sol.i_side2)
    };
    let v = SequenceSet::positive(sol.v_bus_prefault[k]) + dv;
    let i = SequenceSet::positive(sol.i_line_prefault[k]) - di;
    (fortescue_compose(&v), fortescue_compose(&i))
}

/// Phase currents drawn by the fault at the fault point.
pub fn fault_point_currents(sol: &FaultSolution) -> ThreePhaseSet {
    fortescue_compose(&(-sol.i_fault))
}
