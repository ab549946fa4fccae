//! Microgrid model: buses, protected lines, Thevenin sources, constant
//! impedance loads and the static switches that connect them.
//!
//! Impedances of sources and loads are stored in per-unit on the model's
//! [`PerUnitBase`]; line impedances stay in ohms per kilometre, as they
//! appear in the configuration file, and are converted at assembly time.

mod config;
mod solve;

pub use config::{build_testbed, load_testbed, TestbedConfig};
pub use solve::{reduce_to_thevenin, NetworkState, TheveninPair};

use std::ops::{Add, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasor::{Phasor, Sequence};

/// Per-sequence impedance triple.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceImpedance {
    pub zp: Complex64,
    pub zn: Complex64,
    pub z0: Complex64,
}

impl SequenceImpedance {
    pub fn new(zp: Complex64, zn: Complex64, z0: Complex64) -> Self {
        Self { zp, zn, z0 }
    }

    /// Same impedance in all three networks.
    pub fn uniform(z: Complex64) -> Self {
        Self::new(z, z, z)
    }

    pub fn get(&self, seq: Sequence) -> Complex64 {
        match seq {
            Sequence::Positive => self.zp,
            Sequence::Negative => self.zn,
            Sequence::Zero => self.z0,
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.zp * k, self.zn * k, self.z0 * k)
    }

    pub fn is_passive(&self) -> bool {
        self.zp.re >= 0.0 && self.zn.re >= 0.0 && self.z0.re >= 0.0
    }
}

impl Add for SequenceImpedance {
    type Output = SequenceImpedance;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.zp + rhs.zp, self.zn + rhs.zn, self.z0 + rhs.z0)
    }
}

impl Sub for SequenceImpedance {
    type Output = SequenceImpedance;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.zp - rhs.zp, self.zn - rhs.zn, self.z0 - rhs.z0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchState {
    Closed,
    Open,
}

impl SwitchState {
    pub fn is_closed(self) -> bool {
        self == SwitchState::Closed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    GridConnected,
    Islanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Grid,
    Der,
}

/// System base. `s_va` is three-phase, `v_ll` line-to-line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    pub s_va: f64,
    pub v_ll: f64,
}

impl PerUnitBase {
    pub fn z_ohm(&self) -> f64 {
        self.v_ll * self.v_ll / self.s_va
    }

    pub fn i_amp(&self) -> f64 {
        self.s_va / (3f64.sqrt() * self.v_ll)
    }

    pub fn v_phase(&self) -> f64 {
        self.v_ll / 3f64.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Line-to-line RMS volts.
    pub nominal_voltage: f64,
}

/// Which end of a line a relay sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineEnd {
    From,
    To,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionLine {
    pub id: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub length_km: f64,
    /// Ohms per kilometre.
    pub per_km: SequenceImpedance,
    pub relay_from: Option<String>,
    pub relay_to: Option<String>,
    pub switch_from: SwitchState,
    pub switch_to: SwitchState,
    /// Amperes RMS; the relays on this line use it as their rated current.
    pub rated_current: f64,
}

impl DistributionLine {
    pub fn switch(&self, end: LineEnd) -> SwitchState {
        match end {
            LineEnd::From => self.switch_from,
            LineEnd::To => self.switch_to,
        }
    }

    pub fn relay(&self, end: LineEnd) -> Option<&str> {
        match end {
            LineEnd::From => self.relay_from.as_deref(),
            LineEnd::To => self.relay_to.as_deref(),
        }
    }

    pub fn bus(&self, end: LineEnd) -> usize {
        match end {
            LineEnd::From => self.from_bus,
            LineEnd::To => self.to_bus,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.switch_from.is_closed() && self.switch_to.is_closed()
    }

    pub fn is_isolated(&self) -> bool {
        !self.switch_from.is_closed() && !self.switch_to.is_closed()
    }
}

/// Total series impedance of a line in ohms, per sequence.
pub fn line_total_impedance(line: &DistributionLine) -> SequenceImpedance {
    line.per_km.scale(line.length_km)
}

/// Splits a line at `fraction` of its length measured from the `from` bus.
/// The two halves always add up to [`line_total_impedance`].
pub fn split_line(line: &DistributionLine, fraction: f64) -> (SequenceImpedance, SequenceImpedance) {
    let total = line_total_impedance(line);
    let near = total.scale(fraction);
    (near, total - near)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub id: String,
    pub bus: usize,
    /// Positive-sequence EMF behind the internal impedance, per-unit.
    pub emf: Phasor,
    /// Per-unit internal impedance.
    pub internal: SequenceImpedance,
    /// `false` when the source offers no zero-sequence path (delta winding,
    /// ungrounded converter); `internal.z0` is then ignored.
    pub zero_path: bool,
    pub kind: SourceKind,
    pub switch_id: String,
    pub connect_switch: SwitchState,
    pub rated_kva: f64,
    /// `true` when the EMF is set by dispatch rather than pinned in the
    /// configuration.
    #[serde(default = "dispatched_default")]
    pub dispatched: bool,
}

fn dispatched_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus: usize,
    pub p_w: f64,
    pub pf: f64,
    /// Per-unit shunt admittance (positive = negative sequence).
    pub admittance: Complex64,
    pub grounded: bool,
    pub connected: SwitchState,
}

/// A measurement point: one relay at one end of a protected line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayLocation {
    pub relay_id: String,
    pub line: usize,
    pub end: LineEnd,
    pub bus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub name: String,
    pub buses: Vec<Bus>,
    pub lines: Vec<DistributionLine>,
    pub sources: Vec<Source>,
    pub loads: Vec<Load>,
    pub frequency: f64,
    pub base: PerUnitBase,
}

impl NetworkModel {
    /// Islanded exactly when no grid source is connected.
    pub fn mode(&self) -> Mode {
        let grid_on = self
            .sources
            .iter()
            .any(|s| s.kind == SourceKind::Grid && s.connect_switch.is_closed());
        if grid_on {
            Mode::GridConnected
        } else {
            Mode::Islanded
        }
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn line(&self, id: &str) -> Result<&DistributionLine> {
        self.line_index(id)
            .map(|i| &self.lines[i])
            .ok_or_else(|| Error::UnknownLine(id.to_string()))
    }

    /// Every relay in line order, `from` end first.
    pub fn relays(&self) -> Vec<RelayLocation> {
        let mut out = Vec::new();
        for (li, line) in self.lines.iter().enumerate() {
            for end in [LineEnd::From, LineEnd::To] {
                if let Some(id) = line.relay(end) {
                    out.push(RelayLocation {
                        relay_id: id.to_string(),
                        line: li,
                        end,
                        bus: line.bus(end),
                    });
                }
            }
        }
        out
    }

    pub fn relay(&self, relay_id: &str) -> Option<RelayLocation> {
        self.relays().into_iter().find(|r| r.relay_id == relay_id)
    }

    /// Every switch id the model knows about: relay-driven line-end
    /// switches, source connection switches and load switches.
    pub fn switch_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.relays().into_iter().map(|r| r.relay_id).collect();
        ids.extend(self.sources.iter().map(|s| s.switch_id.clone()));
        ids.extend(self.loads.iter().map(|l| l.id.clone()));
        ids
    }

    pub fn switch_state(&self, switch_id: &str) -> Option<SwitchState> {
        for line in &self.lines {
            if line.relay_from.as_deref() == Some(switch_id) {
                return Some(line.switch_from);
            }
            if line.relay_to.as_deref() == Some(switch_id) {
                return Some(line.switch_to);
            }
        }
        if let Some(s) = self.sources.iter().find(|s| s.switch_id == switch_id) {
            return Some(s.connect_switch);
        }
        self.loads
            .iter()
            .find(|l| l.id == switch_id)
            .map(|l| l.connected)
    }
}

/// Returns a copy of `net` with `switch_id` set to `state`. Setting a switch
/// to the state it already has yields an identical model.
pub fn apply_switch_action(
    net: &NetworkModel,
    switch_id: &str,
    state: SwitchState,
) -> Result<NetworkModel> {
    let mut next = net.clone();
    let mut found = false;
    for line in &mut next.lines {
        if line.relay_from.as_deref() == Some(switch_id) {
            line.switch_from = state;
            found = true;
        }
        if line.relay_to.as_deref() == Some(switch_id) {
            line.switch_to = state;
            found = true;
        }
    }
    for src in &mut next.sources {
        if src.switch_id == switch_id {
            src.connect_switch = state;
            found = true;
        }
    }
    for load in &mut next.loads {
        if load.id == switch_id {
            load.connected = state;
            found = true;
        }
    }
    if found {
        Ok(next)
    } else {
        Err(Error::UnknownSwitch(switch_id.to_string()))
    }
}
