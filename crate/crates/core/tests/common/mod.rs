//! Shared fixtures: random two-bus networks and an independent phase-domain
//! nodal solver with explicit fault branches.

#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use mgprot::fault::{FaultKind, FaultSpec};
use mgprot::network::{
    Bus, DistributionLine, Load, NetworkModel, PerUnitBase, SequenceImpedance, Source, SourceKind,
    SwitchState,
};
use mgprot::phasor::{Phase, Phasor, ThreePhaseSet, ALPHA, ALPHA2};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub const LINE: &str = "L";

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rand_z(rng: &mut impl Rng, r: (f64, f64), x: (f64, f64)) -> Complex64 {
    c(rng.gen_range(r.0..r.1), rng.gen_range(x.0..x.1))
}

fn source(id: &str, bus: usize, rng: &mut impl Rng, zero_path: bool) -> Source {
    let zp = rand_z(rng, (0.005, 0.3), (0.01, 0.8));
    let zn = if rng.gen_bool(0.5) { zp } else { rand_z(rng, (0.005, 0.3), (0.01, 0.8)) };
    let z0 = rand_z(rng, (0.005, 0.5), (0.01, 1.5));
    Source {
        id: id.into(),
        bus,
        emf: Phasor::from_polar_deg(rng.gen_range(0.9..1.1), rng.gen_range(-20.0..20.0)),
        internal: SequenceImpedance::new(zp, zn, z0),
        zero_path,
        kind: SourceKind::Der,
        switch_id: format!("SS-{id}"),
        connect_switch: SwitchState::Closed,
        rated_kva: 10.0,
        dispatched: false,
    }
}

/// A line between two sources, optionally loaded at either bus. The first
/// source always offers a zero-sequence path so that no sequence network
/// floats.
pub fn random_two_bus(rng: &mut impl Rng) -> NetworkModel {
    let base = PerUnitBase { s_va: 1e6, v_ll: 415.0 };
    let zp = rand_z(rng, (0.05, 1.0), (0.05, 1.0));
    let z0 = zp * rng.gen_range(2.0..4.0);
    let mut loads = Vec::new();
    for bus in 0..2 {
        if rng.gen_bool(0.5) {
            let y = c(rng.gen_range(0.01..0.2), -rng.gen_range(0.0..0.1));
            loads.push(Load {
                id: format!("LD{bus}"),
                bus,
                p_w: 0.0,
                pf: 1.0,
                admittance: y,
                grounded: rng.gen_bool(0.5),
                connected: SwitchState::Closed,
            });
        }
    }
    let second_grounded = rng.gen_bool(0.7);
    NetworkModel {
        name: "two-bus".into(),
        buses: vec![
            Bus { id: "B1".into(), nominal_voltage: 415.0 },
            Bus { id: "B2".into(), nominal_voltage: 415.0 },
        ],
        lines: vec![DistributionLine {
            id: LINE.into(),
            from_bus: 0,
            to_bus: 1,
            length_km: rng.gen_range(0.2..5.0),
            per_km: SequenceImpedance::new(zp, zp, z0),
            relay_from: Some("RA".into()),
            relay_to: Some("RB".into()),
            switch_from: SwitchState::Closed,
            switch_to: SwitchState::Closed,
            rated_current: 10.0,
        }],
        sources: vec![source("S1", 0, rng, true), source("S2", 1, rng, second_grounded)],
        loads,
        frequency: 50.0,
        base,
    }
}

/// Random phase selection valid for `kind`.
pub fn random_phases(kind: FaultKind, rng: &mut impl Rng) -> Vec<Phase> {
    let k = rng.gen_range(0..3);
    let p = Phase::ALL[k];
    match kind {
        FaultKind::Lg => vec![p],
        FaultKind::Ll | FaultKind::Llg => {
            let mut v = vec![p, Phase::ALL[(k + 1) % 3]];
            v.sort();
            v
        }
        FaultKind::Lllg => Phase::ALL.to_vec(),
    }
}

type M3 = [[Complex64; 3]; 3];

/// Phase-domain matrix of a sequence-diagonal quantity: `A·diag(d)·A⁻¹`.
fn phase_matrix(d: [Complex64; 3]) -> M3 {
    // d = [positive, negative, zero]
    let one = c(1.0, 0.0);
    let a = [[one, one, one], [ALPHA2, ALPHA, one], [ALPHA, ALPHA2, one]];
    let ainv = [
        [one / 3.0, ALPHA / 3.0, ALPHA2 / 3.0],
        [one / 3.0, ALPHA2 / 3.0, ALPHA / 3.0],
        [one / 3.0, one / 3.0, one / 3.0],
    ];
    let mut out = [[c(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * d[k] * ainv[k][j];
            }
        }
    }
    out
}

fn inv(z: Complex64) -> Complex64 {
    c(1.0, 0.0) / z
}

/// Phase-domain solution of the faulted two-bus network (per-unit).
pub struct PhaseSolution {
    pub v_bus: [ThreePhaseSet; 2],
    /// Current from each bus into the line.
    pub i_line: [ThreePhaseSet; 2],
    /// Phase currents drawn from the network by the fault.
    pub i_fault: ThreePhaseSet,
}

struct Mna {
    y: DMatrix<Complex64>,
    rhs: DVector<Complex64>,
    extra: Vec<(usize, Option<usize>)>,
}

impl Mna {
    fn new(n: usize) -> Self {
        Self { y: DMatrix::zeros(n, n), rhs: DVector::zeros(n), extra: Vec::new() }
    }

    fn block(&mut self, r: usize, cc: usize, m: &M3, sign: f64) {
        for i in 0..3 {
            for j in 0..3 {
                self.y[(r + i, cc + j)] += m[i][j] * sign;
            }
        }
    }

    /// Resistive branch between node `a` and node `b` (or ground).
    fn branch(&mut self, a: usize, b: Option<usize>, r: f64) {
        if r > 0.0 {
            let g = c(1.0 / r, 0.0);
            self.y[(a, a)] += g;
            if let Some(b) = b {
                self.y[(b, b)] += g;
                self.y[(a, b)] -= g;
                self.y[(b, a)] -= g;
            }
        } else {
            self.extra.push((a, b));
        }
    }

    /// Adds one current unknown per zero-resistance branch and solves.
    fn solve(self) -> DVector<Complex64> {
        let n = self.y.nrows();
        let m = n + self.extra.len();
        let mut y = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        y.view_mut((0, 0), (n, n)).copy_from(&self.y);
        rhs.rows_mut(0, n).copy_from(&self.rhs);
        let one = c(1.0, 0.0);
        for (k, &(a, b)) in self.extra.iter().enumerate() {
            let row = n + k;
            y[(a, row)] += one;
            y[(row, a)] += one;
            if let Some(b) = b {
                y[(b, row)] -= one;
                y[(row, b)] -= one;
            }
        }
        y.lu().solve(&rhs).expect("oracle matrix is regular")
    }
}

/// Solves the faulted network node by node in phase coordinates. Node
/// layout: bus 1 phases 0..3, bus 2 phases 3..6, fault point 6..9.
pub fn phase_domain_solve(net: &NetworkModel, spec: &FaultSpec) -> PhaseSolution {
    let zb = net.base.z_ohm();
    let line = &net.lines[0];
    let total = line.per_km.scale(line.length_km / zb);
    let near = total.scale(spec.fraction);
    let far = total - near;
    let y_seg = |z: SequenceImpedance| phase_matrix([inv(z.zp), inv(z.zn), inv(z.z0)]);
    let y1 = y_seg(near);
    let y2 = y_seg(far);

    let mut mna = Mna::new(9);
    let f = 6;
    for (bus_node, y) in [(0, &y1), (3, &y2)] {
        mna.block(bus_node, bus_node, y, 1.0);
        mna.block(f, f, y, 1.0);
        mna.block(bus_node, f, y, -1.0);
        mna.block(f, bus_node, y, -1.0);
    }
    for s in &net.sources {
        let z = s.internal;
        let y0 = if s.zero_path { inv(z.z0) } else { c(0.0, 0.0) };
        let ys = phase_matrix([inv(z.zp), inv(z.zn), y0]);
        let node = 3 * s.bus;
        mna.block(node, node, &ys, 1.0);
        let e = [s.emf.0, s.emf.0 * ALPHA2, s.emf.0 * ALPHA];
        for i in 0..3 {
            for j in 0..3 {
                mna.rhs[node + i] += ys[i][j] * e[j];
            }
        }
    }
    for l in &net.loads {
        let y0 = if l.grounded { l.admittance } else { c(0.0, 0.0) };
        let yl = phase_matrix([l.admittance, l.admittance, y0]);
        mna.block(3 * l.bus, 3 * l.bus, &yl, 1.0);
    }
    let rf = spec.rf / zb;
    let ph: Vec<usize> = spec.faulted_phases().iter().map(|p| p.index()).collect();
    match spec.kind {
        FaultKind::Lg | FaultKind::Llg | FaultKind::Lllg => {
            for &p in &ph {
                mna.branch(f + p, None, rf);
            }
        }
        FaultKind::Ll => mna.branch(f + ph[0], Some(f + ph[1]), rf),
    }
    let x = mna.solve();

    let set = |k: usize| ThreePhaseSet::new(Phasor(x[k]), Phasor(x[k + 1]), Phasor(x[k + 2]));
    let v1 = set(0);
    let v2 = set(3);
    let vf = set(6);
    let flow = |y: &M3, va: &ThreePhaseSet, vb: &ThreePhaseSet| {
        let d: Vec<Complex64> = (0..3).map(|k| va.as_array()[k].0 - vb.as_array()[k].0).collect();
        let mut out = [Phasor::ZERO; 3];
        for i in 0..3 {
            out[i] = Phasor((0..3).map(|j| y[i][j] * d[j]).sum());
        }
        ThreePhaseSet::from_array(out)
    };
    let i1 = flow(&y1, &v1, &vf);
    let i2 = flow(&y2, &v2, &vf);
    let i_fault = ThreePhaseSet::from_array(std::array::from_fn(|k| {
        Phasor(i1.as_array()[k].0 + i2.as_array()[k].0)
    }));
    PhaseSolution { v_bus: [v1, v2], i_line: [i1, i2], i_fault }
}

/// `‖a − b‖ / max(‖b‖, floor)` over the three phases.
pub fn rel_err(a: &ThreePhaseSet, b: &ThreePhaseSet, floor: f64) -> f64 {
    let (aa, bb) = (a.as_array(), b.as_array());
    let diff: f64 = (0..3).map(|k| (aa[k].0 - bb[k].0).norm_sqr()).sum::<f64>().sqrt();
    let norm: f64 = bb.iter().map(|p| p.0.norm_sqr()).sum::<f64>().sqrt();
    diff / norm.max(floor)
}
