//! Per-sequence nodal assembly, pre-fault dispatch, Thevenin reduction at a
//! fault point, and full-network states with a fault injected.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{line_total_impedance, NetworkModel, SequenceImpedance};
use crate::error::{Error, Result};
use crate::fault::{solve_internal_fault, FaultSolution, FaultSpec};
use crate::phasor::{Phasor, Sequence, SequenceSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Fraction clamp used when splitting a line for a fault node; a segment of
/// exactly zero length would need a zero-impedance branch.
const FRACTION_EPS: f64 = 1e-6;

/// Share of a unit fault-point injection below which a side counts as open.
const OPEN_SIDE_EPS: f64 = 1e-12;

/// Two-source equivalent of the network seen from a fault point.
///
/// `z1`/`z2` are the per-sequence impedances behind the fault point through
/// the `from` and `to` segments. `None` marks an open side (the ∞
/// impedance): no current returns through it. All values are per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheveninPair {
    pub z1: [Option<Complex64>; 3],
    pub z2: [Option<Complex64>; 3],
    /// Line segments between each bus and the fault point.
    pub zd1: SequenceImpedance,
    pub zd2: SequenceImpedance,
    /// Positive-sequence pre-fault voltage at the fault point.
    pub vfp_prefault: Phasor,
    /// Pre-fault positive-sequence voltage at the `from` and `to` buses.
    pub v_bus_prefault: [Phasor; 2],
    /// Pre-fault current flowing from each end bus into the line.
    pub i_line_prefault: [Phasor; 2],
    /// Impedance base in ohms, used to convert the fault resistance.
    pub z_base: f64,
    /// Transfer impedance from the fault point to the `from` and `to` bus
    /// per sequence: the bus voltage produced by a unit injection at the
    /// fault point. `None` falls back to the source impedance behind the bus.
    #[serde(default)]
    pub z_bus: [[Option<Complex64>; 3]; 2],
}

fn seq_index(seq: Sequence) -> usize {
    match seq {
        Sequence::Positive => 0,
        Sequence::Negative => 1,
        Sequence::Zero => 2,
    }
}

impl TheveninPair {
    pub fn side1(&self, seq: Sequence) -> Option<Complex64> {
        self.z1[seq_index(seq)]
    }

    pub fn side2(&self, seq: Sequence) -> Option<Complex64> {
        self.z2[seq_index(seq)]
    }

    /// `Z₁ ∥ Z₂`, or `None` when both sides are open.
    pub fn parallel(&self, seq: Sequence) -> Option<Complex64> {
        match (self.side1(seq), self.side2(seq)) {
            (Some(a), Some(b)) => Some(a * b / (a + b)),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        }
    }

    /// Current-divider shares `(k1, k2)` of a fault-point injection.
    pub fn shares(&self, seq: Sequence) -> (Complex64, Complex64) {
        match (self.side1(seq), self.side2(seq)) {
            (Some(a), Some(b)) => (b / (a + b), a / (a + b)),
            (Some(_), None) => (ONE, ZERO),
            (None, Some(_)) => (ZERO, ONE),
            (None, None) => (ZERO, ZERO),
        }
    }

    /// Source impedance behind bus `side` (`Z_sk = Z_k − Z_dk`).
    pub fn source_behind(&self, side: usize, seq: Sequence) -> Option<Complex64> {
        match side {
            1 => self.side1(seq).map(|z| z - self.zd1.get(seq)),
            _ => self.side2(seq).map(|z| z - self.zd2.get(seq)),
        }
    }

    /// Fault-component bus voltage per unit of fault-point injection.
    pub fn transfer(&self, side: usize, seq: Sequence) -> Option<Complex64> {
        let k = seq_index(seq);
        let zt = if side == 1 { self.z_bus[0][k] } else { self.z_bus[1][k] };
        zt.or_else(|| {
            let (k1, k2) = self.shares(seq);
            let share = if side == 1 { k1 } else { k2 };
            self.source_behind(side, seq).map(|z| z * share)
        })
    }

    pub fn is_energized(&self) -> bool {
        self.parallel(Sequence::Positive).is_some() && self.vfp_prefault.magnitude() > 0.0
    }
}

/// One sequence network as nodal branches and shunts.
#[derive(Debug, Clone)]
pub(crate) struct SeqNet {
    pub n: usize,
    pub branches: Vec<(usize, usize, Complex64)>,
    pub shunt: Vec<Complex64>,
}

impl SeqNet {
    fn new(n: usize) -> Self {
        Self {
            n,
            branches: Vec::new(),
            shunt: vec![ZERO; n],
        }
    }

    fn add_branch(&mut self, a: usize, b: usize, z: Complex64) {
        self.branches.push((a, b, ONE / z));
    }

    fn add_shunt(&mut self, node: usize, y: Complex64) {
        self.shunt[node] += y;
    }

    /// Connected-component label per node.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b, _) in &self.branches {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..self.n).map(|i| find(&mut parent, i)).collect()
    }

    /// Nodes whose component has at least one shunt to ground.
    fn grounded_nodes(&self) -> Vec<bool> {
        let comp = self.components();
        let mut grounded_comp = vec![false; self.n];
        for i in 0..self.n {
            if self.shunt[i] != ZERO {
                grounded_comp[comp[i]] = true;
            }
        }
        (0..self.n).map(|i| grounded_comp[comp[i]]).collect()
    }

    /// Solves `Y v = i`. Nodes in floating components get zero voltage.
    pub fn solve(&self, inj: &[Complex64]) -> Result<Vec<Complex64>> {
        let grounded = self.grounded_nodes();
        let mut map = vec![usize::MAX; self.n];
        let mut m = 0;
        for i in 0..self.n {
            if grounded[i] {
                map[i] = m;
                m += 1;
            }
        }
        let mut v = vec![ZERO; self.n];
        if m == 0 {
            return Ok(v);
        }
        let mut y = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..self.n {
            if grounded[i] {
                y[(map[i], map[i])] += self.shunt[i];
            }
        }
        for &(a, b, yb) in &self.branches {
            if !grounded[a] {
                continue;
            }
            let (ia, ib) = (map[a], map[b]);
            y[(ia, ia)] += yb;
            y[(ib, ib)] += yb;
            y[(ia, ib)] -= yb;
            y[(ib, ia)] -= yb;
        }
        let rhs = DVector::from_iterator(
            m,
            (0..self.n).filter(|&i| grounded[i]).map(|i| inj[i]),
        );
        let x = y
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SolveFailed("singular admittance matrix".into()))?;
        if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::SolveFailed("non-finite node voltage".into()));
        }
        for i in 0..self.n {
            if grounded[i] {
                v[i] = x[map[i]];
            }
        }
        Ok(v)
    }
}

/// Fault node placement used during assembly.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FaultPoint {
    pub line: usize,
    pub fraction: f64,
}

impl FaultPoint {
    fn clamped(&self) -> f64 {
        self.fraction.clamp(FRACTION_EPS, 1.0 - FRACTION_EPS)
    }
}

impl NetworkModel {
    fn z_base(&self) -> f64 {
        self.base.z_ohm()
    }

    /// Per-unit segment impedances of `line` split at the fault point.
    fn segments(&self, fp: FaultPoint) -> (SequenceImpedance, SequenceImpedance) {
        let line = &self.lines[fp.line];
        let total = line_total_impedance(line).scale(1.0 / self.z_base());
        let near = total.scale(fp.clamped());
        (near, total - near)
    }

    /// Assembles one sequence network. With `with_sources` false the source
    /// internal admittances are left out (used by dispatch, where source
    /// buses are voltage-regulated instead).
    pub(crate) fn assemble(
        &self,
        seq: Sequence,
        fault: Option<FaultPoint>,
        with_sources: bool,
    ) -> SeqNet {
        let nb = self.buses.len();
        let mut net = SeqNet::new(nb + usize::from(fault.is_some()));
        let zb = self.z_base();
        for (li, line) in self.lines.iter().enumerate() {
            match fault {
                Some(fp) if fp.line == li => {
                    let (d1, d2) = self.segments(fp);
                    if line.switch_from.is_closed() {
                        net.add_branch(line.from_bus, nb, d1.get(seq));
                    }
                    if line.switch_to.is_closed() {
                        net.add_branch(nb, line.to_bus, d2.get(seq));
                    }
                }
                _ => {
                    if line.is_closed() {
                        let z = line_total_impedance(line).get(seq) / zb;
                        net.add_branch(line.from_bus, line.to_bus, z);
                    }
                }
            }
        }
        if with_sources {
            for s in self.sources.iter().filter(|s| s.connect_switch.is_closed()) {
                if seq == Sequence::Zero && !s.zero_path {
                    continue;
                }
                net.add_shunt(s.bus, ONE / s.internal.get(seq));
            }
        }
        for l in self.loads.iter().filter(|l| l.connected.is_closed()) {
            if seq == Sequence::Zero && !l.grounded {
                continue;
            }
            net.add_shunt(l.bus, l.admittance);
        }
        net
    }

    fn norton_injection(&self, n: usize) -> Vec<Complex64> {
        let mut inj = vec![ZERO; n];
        for s in self.sources.iter().filter(|s| s.connect_switch.is_closed()) {
            inj[s.bus] += s.emf.0 / s.internal.zp;
        }
        inj
    }

    /// Whether `node` shares a positive-sequence component with a connected
    /// source.
    fn energized(&self, net: &SeqNet, node: usize) -> bool {
        let comp = net.components();
        self.sources
            .iter()
            .filter(|s| s.connect_switch.is_closed())
            .any(|s| comp[s.bus] == comp[node])
    }

    /// Solves the current topology. A fault whose line is open at both ends,
    /// or whose fault point has no source behind it, draws no current and
    /// the state is the healthy one.
    pub fn solve_state(&self, fault: Option<&FaultSpec>) -> Result<NetworkState> {
        let Some(spec) = fault else {
            return self.solve_healthy();
        };
        let li = self
            .line_index(&spec.line_id)
            .ok_or_else(|| Error::UnknownLine(spec.line_id.clone()))?;
        if self.lines[li].is_isolated() {
            return self.solve_healthy();
        }
        let fp = FaultPoint {
            line: li,
            fraction: spec.fraction,
        };
        let reduced = match self.reduce(fp) {
            Ok(r) => r,
            Err(Error::DeEnergized(_)) => return self.solve_healthy(),
            Err(e) => return Err(e),
        };
        let sol = solve_internal_fault(&reduced.pair, spec)?;
        let mut v = [reduced.v_pre.clone(), vec![ZERO; reduced.n], vec![ZERO; reduced.n]];
        for seq in Sequence::ALL {
            let k = seq_index(seq);
            let inj = sol.i_fault.get(seq).0;
            for (vi, zi) in v[k].iter_mut().zip(&reduced.z_col[k]) {
                *vi += zi * inj;
            }
        }
        let mut state = self.state_from_voltages(&v, Some(fp));
        state.fault = Some(sol);
        state.thevenin = Some(reduced.pair);
        Ok(state)
    }

    fn solve_healthy(&self) -> Result<NetworkState> {
        let pos = self.assemble(Sequence::Positive, None, true);
        let v_pos = pos.solve(&self.norton_injection(pos.n))?;
        let n = pos.n;
        Ok(self.state_from_voltages(&[v_pos, vec![ZERO; n], vec![ZERO; n]], None))
    }

    fn state_from_voltages(&self, v: &[Vec<Complex64>; 3], fault: Option<FaultPoint>) -> NetworkState {
        let nb = self.buses.len();
        let zb = self.z_base();
        let set_at = |node: usize| {
            SequenceSet::new(Phasor(v[0][node]), Phasor(v[1][node]), Phasor(v[2][node]))
        };
        let bus_voltage: Vec<SequenceSet> = (0..nb).map(set_at).collect();
        let fault_voltage = fault.map(|_| set_at(nb));
        let mut line_current = Vec::with_capacity(self.lines.len());
        for (li, line) in self.lines.iter().enumerate() {
            let mut ends = [SequenceSet::ZERO; 2];
            let (a, b) = (line.from_bus, line.to_bus);
            match fault {
                Some(fp) if fp.line == li => {
                    let (d1, d2) = self.segments(fp);
                    for seq in Sequence::ALL {
                        let k = seq_index(seq);
                        if line.switch_from.is_closed() {
                            ends[0].set(seq, Phasor((v[k][a] - v[k][nb]) / d1.get(seq)));
                        }
                        if line.switch_to.is_closed() {
                            ends[1].set(seq, Phasor((v[k][b] - v[k][nb]) / d2.get(seq)));
                        }
                    }
                }
                _ => {
                    if line.is_closed() {
                        let z = line_total_impedance(line).scale(1.0 / zb);
                        for seq in Sequence::ALL {
                            let k = seq_index(seq);
                            let i = (v[k][a] - v[k][b]) / z.get(seq);
                            ends[0].set(seq, Phasor(i));
                            ends[1].set(seq, Phasor(-i));
                        }
                    }
                }
            }
            line_current.push(ends);
        }
        NetworkState {
            bus_voltage,
            fault_voltage,
            line_current,
            fault: None,
            thevenin: None,
        }
    }

    pub(crate) fn reduce(&self, fp: FaultPoint) -> Result<Reduced> {
        let line = &self.lines[fp.line];
        let nb = self.buses.len();
        let f = nb;
        let nets: Vec<SeqNet> = Sequence::ALL
            .iter()
            .map(|&s| self.assemble(s, Some(fp), true))
            .collect();
        if !self.energized(&nets[0], f) {
            return Err(Error::DeEnergized(line.id.clone()));
        }
        let v_pre = nets[0].solve(&self.norton_injection(nets[0].n))?;
        let (d1, d2) = self.segments(fp);
        let mut unit = vec![ZERO; nb + 1];
        unit[f] = ONE;
        let mut z1 = [None; 3];
        let mut z2 = [None; 3];
        let mut z_col: [Vec<Complex64>; 3] = Default::default();
        let mut z_bus = [[None; 3]; 2];
        for seq in Sequence::ALL {
            let k = seq_index(seq);
            let x = nets[k].solve(&unit)?;
            let zff = x[f];
            if zff != ZERO {
                let k1 = if line.switch_from.is_closed() {
                    (x[f] - x[line.from_bus]) / d1.get(seq)
                } else {
                    ZERO
                };
                let k2 = if line.switch_to.is_closed() {
                    (x[f] - x[line.to_bus]) / d2.get(seq)
                } else {
                    ZERO
                };
                if k1.norm() > OPEN_SIDE_EPS {
                    z1[k] = Some(zff / k1);
                }
                if k2.norm() > OPEN_SIDE_EPS {
                    z2[k] = Some(zff / k2);
                }
            }
            z_bus[0][k] = Some(x[line.from_bus]);
            z_bus[1][k] = Some(x[line.to_bus]);
            z_col[k] = x;
        }
        let i_pre = |closed: bool, bus: usize, d: Complex64| {
            if closed {
                Phasor((v_pre[bus] - v_pre[f]) / d)
            } else {
                Phasor::ZERO
            }
        };
        let pair = TheveninPair {
            z1,
            z2,
            zd1: d1,
            zd2: d2,
            vfp_prefault: Phasor(v_pre[f]),
            v_bus_prefault: [Phasor(v_pre[line.from_bus]), Phasor(v_pre[line.to_bus])],
            i_line_prefault: [
                i_pre(line.switch_from.is_closed(), line.from_bus, d1.zp),
                i_pre(line.switch_to.is_closed(), line.to_bus, d2.zp),
            ],
            z_base: self.z_base(),
            z_bus,
        };
        Ok(Reduced {
            pair,
            n: nb + 1,
            v_pre,
            z_col,
        })
    }
}

pub(crate) struct Reduced {
    pub pair: TheveninPair,
    pub n: usize,
    pub v_pre: Vec<Complex64>,
    pub z_col: [Vec<Complex64>; 3],
}

/// Collapses the network on each side of the point at `fraction` along
/// `line_id` into the two-source equivalent. Every sequence network is
/// reduced independently.
pub fn reduce_to_thevenin(net: &NetworkModel, line_id: &str, fraction: f64) -> Result<TheveninPair> {
    let li = net
        .line_index(line_id)
        .ok_or_else(|| Error::UnknownLine(line_id.to_string()))?;
    if net.lines[li].is_isolated() {
        return Err(Error::LineOpen(line_id.to_string()));
    }
    Ok(net.reduce(FaultPoint { line: li, fraction })?.pair)
}

/// Re-computes the EMFs of dispatched sources so that their terminals sit at
/// 1.0∠0° pu with the present loads and topology. Those buses are treated
/// as regulated nodes and the rest of the network (including sources with a
/// pinned EMF) is solved in a single linear step.
pub(crate) fn dispatch(net: &NetworkModel) -> Result<NetworkModel> {
    let mut sn = net.assemble(Sequence::Positive, None, false);
    let n = sn.n;
    let mut inj = vec![ZERO; n];
    let mut regulated = vec![false; n];
    for s in net.sources.iter().filter(|s| s.connect_switch.is_closed()) {
        if s.dispatched {
            regulated[s.bus] = true;
        } else {
            sn.add_shunt(s.bus, ONE / s.internal.zp);
            inj[s.bus] += s.emf.0 / s.internal.zp;
        }
    }
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        y[(i, i)] += sn.shunt[i];
    }
    for &(a, b, yb) in &sn.branches {
        y[(a, a)] += yb;
        y[(b, b)] += yb;
        y[(a, b)] -= yb;
        y[(b, a)] -= yb;
    }
    // nodes that neither reach a regulated bus nor have any shunt stay at 0
    let comp = sn.components();
    let mut live = vec![false; n];
    for i in 0..n {
        if regulated[i] || sn.shunt[i] != ZERO {
            live[comp[i]] = true;
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&i| live[comp[i]] && !regulated[i]).collect();
    let mut v = vec![ZERO; n];
    for i in 0..n {
        if regulated[i] {
            v[i] = ONE;
        }
    }
    if !unknown.is_empty() {
        let m = unknown.len();
        let mut yuu = DMatrix::<Complex64>::zeros(m, m);
        let mut rhs = DVector::<Complex64>::zeros(m);
        for (r, &i) in unknown.iter().enumerate() {
            rhs[r] = inj[i];
            for (c, &j) in unknown.iter().enumerate() {
                yuu[(r, c)] = y[(i, j)];
            }
            for j in 0..n {
                if regulated[j] {
                    rhs[r] -= y[(i, j)] * v[j];
                }
            }
        }
        let x = yuu
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SolveFailed("singular dispatch matrix".into()))?;
        for (r, &i) in unknown.iter().enumerate() {
            v[i] = x[r];
        }
    }
    let mut out = net.clone();
    for bus in 0..n {
        if !regulated[bus] {
            continue;
        }
        let injection: Complex64 = (0..n).map(|j| y[(bus, j)] * v[j]).sum::<Complex64>() - inj[bus];
        let at_bus: Vec<usize> = net
            .sources
            .iter()
            .enumerate()
            .filter(|(_, s)| s.connect_switch.is_closed() && s.dispatched && s.bus == bus)
            .map(|(i, _)| i)
            .collect();
        let total_rating: f64 = at_bus.iter().map(|&i| net.sources[i].rated_kva).sum();
        for &i in &at_bus {
            let share = net.sources[i].rated_kva / total_rating;
            out.sources[i].emf = Phasor(v[bus] + net.sources[i].internal.zp * injection * share);
        }
    }
    Ok(out)
}

impl NetworkModel {
    /// Copy of the model with EMFs re-dispatched for the present topology.
    pub fn redispatch(&self) -> Result<NetworkModel> {
        dispatch(self)
    }
}

/// Sequence-domain snapshot of the whole network (per-unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub bus_voltage: Vec<SequenceSet>,
    pub fault_voltage: Option<SequenceSet>,
    /// Current flowing from each end bus into the line, `[from, to]`.
    pub line_current: Vec<[SequenceSet; 2]>,
    pub fault: Option<FaultSolution>,
    pub thevenin: Option<TheveninPair>,
}
