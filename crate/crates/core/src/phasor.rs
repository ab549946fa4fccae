//! Complex phasors, three-phase containers and the Fortescue transform.
//!
//! All phasors are RMS. Angles are radians internally; the `*_deg` helpers
//! exist for configuration files and user-facing output.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The Fortescue operator `1∠120°`.
pub const ALPHA: Complex64 = Complex64::new(-0.5, 0.866_025_403_784_438_6);

/// `α²`, i.e. `1∠240°`.
pub const ALPHA2: Complex64 = Complex64::new(-0.5, -0.866_025_403_784_438_6);

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// An RMS phasor. Thin newtype over a complex number.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phasor(pub Complex64);

impl Phasor {
    pub const ZERO: Phasor = Phasor(Complex64::new(0.0, 0.0));

    pub fn new(re: f64, im: f64) -> Self {
        Phasor(Complex64::new(re, im))
    }

    /// Builds a phasor from magnitude and angle in radians. Negative
    /// magnitudes are folded into the angle so the stored magnitude is
    /// never negative.
    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        let (m, a) = if magnitude < 0.0 {
            (-magnitude, angle + PI)
        } else {
            (magnitude, angle)
        };
        Phasor(Complex64::from_polar(m, normalize_angle(a)))
    }

    pub fn from_polar_deg(magnitude: f64, angle_deg: f64) -> Self {
        Self::from_polar(magnitude, angle_deg.to_radians())
    }

    pub fn magnitude(self) -> f64 {
        self.0.norm()
    }

    /// Angle in `(-π, π]`. The zero phasor reports `0`.
    pub fn angle(self) -> f64 {
        if self.0 == Complex64::new(0.0, 0.0) {
            return 0.0;
        }
        let a = self.0.arg();
        if a <= -PI {
            PI
        } else {
            a
        }
    }

    pub fn angle_deg(self) -> f64 {
        self.angle().to_degrees()
    }

    pub fn scale(self, k: f64) -> Self {
        Phasor(self.0 * k)
    }
}

impl From<Complex64> for Phasor {
    fn from(c: Complex64) -> Self {
        Phasor(c)
    }
}

impl From<Phasor> for Complex64 {
    fn from(p: Phasor) -> Self {
        p.0
    }
}

impl Add for Phasor {
    type Output = Phasor;
    fn add(self, rhs: Phasor) -> Phasor {
        Phasor(self.0 + rhs.0)
    }
}

impl Sub for Phasor {
    type Output = Phasor;
    fn sub(self, rhs: Phasor) -> Phasor {
        Phasor(self.0 - rhs.0)
    }
}

impl Neg for Phasor {
    type Output = Phasor;
    fn neg(self) -> Phasor {
        Phasor(-self.0)
    }
}

impl Mul<Complex64> for Phasor {
    type Output = Phasor;
    fn mul(self, rhs: Complex64) -> Phasor {
        Phasor(self.0 * rhs)
    }
}

impl Mul<f64> for Phasor {
    type Output = Phasor;
    fn mul(self, rhs: f64) -> Phasor {
        Phasor(self.0 * rhs)
    }
}

/// Phase label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    /// Next phase in `a → b → c → a` order.
    pub fn rotate(self) -> Phase {
        match self {
            Phase::A => Phase::B,
            Phase::B => Phase::C,
            Phase::C => Phase::A,
        }
    }
}

/// Per-phase phasors of one physical quantity (all voltages or all
/// currents, never mixed).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreePhaseSet {
    pub a: Phasor,
    pub b: Phasor,
    pub c: Phasor,
}

impl ThreePhaseSet {
    pub const ZERO: ThreePhaseSet = ThreePhaseSet {
        a: Phasor::ZERO,
        b: Phasor::ZERO,
        c: Phasor::ZERO,
    };

    pub fn new(a: Phasor, b: Phasor, c: Phasor) -> Self {
        Self { a, b, c }
    }

    /// Balanced positive-sequence set with phase `a` equal to `a`.
    pub fn balanced(a: Phasor) -> Self {
        Self {
            a,
            b: a * ALPHA2,
            c: a * ALPHA,
        }
    }

    pub fn get(&self, phase: Phase) -> Phasor {
        match phase {
            Phase::A => self.a,
            Phase::B => self.b,
            Phase::C => self.c,
        }
    }

    pub fn set(&mut self, phase: Phase, value: Phasor) {
        match phase {
            Phase::A => self.a = value,
            Phase::B => self.b = value,
            Phase::C => self.c = value,
        }
    }

    pub fn as_array(&self) -> [Phasor; 3] {
        [self.a, self.b, self.c]
    }

    pub fn from_array(v: [Phasor; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn magnitudes(&self) -> [f64; 3] {
        [self.a.magnitude(), self.b.magnitude(), self.c.magnitude()]
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.a * k, self.b * k, self.c * k)
    }

    /// Relabels phases so that the old `a` becomes `b`, `b` becomes `c`
    /// and `c` becomes `a`.
    pub fn rotate_labels(&self) -> Self {
        Self::new(self.c, self.a, self.b)
    }
}

impl Add for ThreePhaseSet {
    type Output = ThreePhaseSet;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.a + rhs.a, self.b + rhs.b, self.c + rhs.c)
    }
}

impl Sub for ThreePhaseSet {
    type Output = ThreePhaseSet;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.a - rhs.a, self.b - rhs.b, self.c - rhs.c)
    }
}

/// Positive, negative and zero sequence components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceSet {
    pub pos: Phasor,
    pub neg: Phasor,
    pub zero: Phasor,
}

impl SequenceSet {
    pub const ZERO: SequenceSet = SequenceSet {
        pos: Phasor::ZERO,
        neg: Phasor::ZERO,
        zero: Phasor::ZERO,
    };

    pub fn new(pos: Phasor, neg: Phasor, zero: Phasor) -> Self {
        Self { pos, neg, zero }
    }

    pub fn positive(pos: Phasor) -> Self {
        Self {
            pos,
            ..Self::ZERO
        }
    }

    pub fn get(&self, seq: Sequence) -> Phasor {
        match seq {
            Sequence::Positive => self.pos,
            Sequence::Negative => self.neg,
            Sequence::Zero => self.zero,
        }
    }

    pub fn set(&mut self, seq: Sequence, value: Phasor) {
        match seq {
            Sequence::Positive => self.pos = value,
            Sequence::Negative => self.neg = value,
            Sequence::Zero => self.zero = value,
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.pos * k, self.neg * k, self.zero * k)
    }

    pub fn map(&self, mut f: impl FnMut(Sequence, Phasor) -> Phasor) -> Self {
        Self::new(
            f(Sequence::Positive, self.pos),
            f(Sequence::Negative, self.neg),
            f(Sequence::Zero, self.zero),
        )
    }
}

impl Add for SequenceSet {
    type Output = SequenceSet;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.pos + rhs.pos, self.neg + rhs.neg, self.zero + rhs.zero)
    }
}

impl Sub for SequenceSet {
    type Output = SequenceSet;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.pos - rhs.pos, self.neg - rhs.neg, self.zero - rhs.zero)
    }
}

impl Neg for SequenceSet {
    type Output = SequenceSet;
    fn neg(self) -> Self {
        Self::new(-self.pos, -self.neg, -self.zero)
    }
}

/// Sequence network selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sequence {
    Positive,
    Negative,
    Zero,
}

impl Sequence {
    pub const ALL: [Sequence; 3] = [Sequence::Positive, Sequence::Negative, Sequence::Zero];
}

/// Symmetrical components of a phase set:
/// `pos = (a + αb + α²c)/3`, `neg = (a + α²b + αc)/3`, `zero = (a + b + c)/3`.
pub fn fortescue_decompose(abc: &ThreePhaseSet) -> SequenceSet {
    let (a, b, c) = (abc.a.0, abc.b.0, abc.c.0);
    let third = 1.0 / 3.0;
    SequenceSet {
        pos: Phasor((a + ALPHA * b + ALPHA2 * c) * third),
        neg: Phasor((a + ALPHA2 * b + ALPHA * c) * third),
        zero: Phasor((a + b + c) * third),
    }
}

/// Inverse of [`fortescue_decompose`].
pub fn fortescue_compose(seq: &SequenceSet) -> ThreePhaseSet {
    let (p, n, z) = (seq.pos.0, seq.neg.0, seq.zero.0);
    ThreePhaseSet {
        a: Phasor(p + n + z),
        b: Phasor(ALPHA2 * p + ALPHA * n + z),
        c: Phasor(ALPHA * p + ALPHA2 * n + z),
    }
}
