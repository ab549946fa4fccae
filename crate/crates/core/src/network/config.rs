//! Testbed JSON schema and model construction.
//!
//! Units: voltages in kV (line-to-line), powers in kW / MVA, impedances in
//! ohms per kilometre, lengths in km, currents in A. Every section is
//! optional at the serde level so that validation can report all missing
//! fields at once instead of stopping at the first one.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    Bus, DistributionLine, Load, NetworkModel, PerUnitBase, SequenceImpedance, Source, SourceKind,
    SwitchState,
};
use crate::error::{Error, Result};
use crate::phasor::Phasor;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub frequency_hz: Option<f64>,
    pub base_mva: Option<f64>,
    pub nominal_kv: Option<f64>,
    pub buses: Option<Vec<BusConfig>>,
    pub transformer: Option<TransformerConfig>,
    pub sources: Option<Vec<SourceConfig>>,
    pub loads: Option<Vec<LoadConfig>>,
    pub lines: Option<Vec<LineConfig>>,
    /// Initial switch states keyed by switch id; anything not listed starts
    /// closed, except loads, which follow their own `connected` flag.
    #[serde(default)]
    pub switches: BTreeMap<String, SwitchState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusConfig {
    pub id: String,
    #[serde(default)]
    pub nominal_kv: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub rating_mva: Option<f64>,
    pub hv_kv: Option<f64>,
    pub lv_kv: Option<f64>,
    pub impedance_pct: Option<f64>,
    #[serde(default = "default_transformer_xr")]
    pub x_r: f64,
    /// `Dyn*` (default) grounds the LV star and blocks the grid's
    /// zero-sequence network; `YNyn*` passes it through; anything else has
    /// no LV zero-sequence path.
    #[serde(default = "default_vector_group")]
    pub vector_group: String,
    /// Resistance between the LV star point and ground, ohms.
    #[serde(default)]
    pub neutral_ohm: f64,
}

fn default_transformer_xr() -> f64 {
    6.0
}

fn default_vector_group() -> String {
    "Dyn11".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: String,
    pub kind: SourceKind,
    pub bus: String,
    /// Nameplate active power.
    pub rated_kw: f64,
    /// Grid only: short-circuit level at the HV terminals.
    #[serde(default)]
    pub short_circuit_mva: Option<f64>,
    #[serde(default)]
    pub voltage_kv: Option<f64>,
    /// DER only: DC-side voltage, informational.
    #[serde(default)]
    pub dc_voltage_v: Option<f64>,
    /// DER only: bolted terminal fault current as a multiple of rated.
    #[serde(default = "default_fault_multiple")]
    pub fault_current_multiple: f64,
    #[serde(default = "default_source_xr")]
    pub x_r: f64,
    /// DER only: whether the converter's neutral is grounded.
    #[serde(default = "default_true")]
    pub grounded: bool,
    /// Fixed EMF `[magnitude_pu, angle_deg]`. When absent the EMF is
    /// dispatched so every source terminal sits at 1.0∠0° pu.
    #[serde(default)]
    pub emf_pu: Option<[f64; 2]>,
    pub switch: String,
}

fn default_fault_multiple() -> f64 {
    2.0
}

fn default_source_xr() -> f64 {
    5.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub id: String,
    pub bus: String,
    pub p_kw: f64,
    pub pf: f64,
    #[serde(default = "default_true")]
    pub connected: bool,
    #[serde(default)]
    pub grounded: bool,
    #[serde(default)]
    pub note: Option<String>,
}

/// `[r, x]` in ohms per kilometre.
pub type OhmPair = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_km: f64,
    #[serde(default = "default_z_pos")]
    pub z_pos_ohm_per_km: OhmPair,
    /// Defaults to the positive-sequence value.
    #[serde(default)]
    pub z_neg_ohm_per_km: Option<OhmPair>,
    /// Defaults to three times the positive-sequence value.
    #[serde(default)]
    pub z_zero_ohm_per_km: Option<OhmPair>,
    #[serde(default)]
    pub relay_from: Option<String>,
    #[serde(default)]
    pub relay_to: Option<String>,
    #[serde(default = "default_rated_current")]
    pub rated_current_a: f64,
}

fn default_z_pos() -> OhmPair {
    [0.1, 0.3]
}

fn default_rated_current() -> f64 {
    100.0
}

fn c(pair: OhmPair) -> Complex64 {
    Complex64::new(pair[0], pair[1])
}

/// Impedance of magnitude `mag` with the given X/R ratio.
fn z_from_xr(mag: f64, x_r: f64) -> Complex64 {
    let angle = x_r.atan();
    Complex64::from_polar(mag, angle)
}

pub fn load_testbed(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let text = std::fs::read_to_string(path)?;
    let cfg: TestbedConfig = serde_json::from_str(&text)?;
    build_testbed(&cfg)
}

/// Validates `cfg` and builds the network model. Source EMFs that are not
/// pinned in the file are dispatched for a flat 1.0 pu terminal profile.
pub fn build_testbed(cfg: &TestbedConfig) -> Result<NetworkModel> {
    let mut errs = Vec::new();
    let need = |v: Option<f64>, name: &str, errs: &mut Vec<String>| -> f64 {
        match v {
            Some(x) if x.is_finite() && x > 0.0 => x,
            Some(x) => {
                errs.push(format!("{name} must be positive, got {x}"));
                f64::NAN
            }
            None => {
                errs.push(format!("missing {name}"));
                f64::NAN
            }
        }
    };

    let frequency = need(cfg.frequency_hz, "frequency_hz", &mut errs);
    let base_mva = need(cfg.base_mva, "base_mva", &mut errs);
    let nominal_kv = need(cfg.nominal_kv, "nominal_kv", &mut errs);
    let base = PerUnitBase {
        s_va: base_mva * 1e6,
        v_ll: nominal_kv * 1e3,
    };

    let bus_cfgs = cfg.buses.clone().unwrap_or_else(|| {
        errs.push("missing buses".into());
        Vec::new()
    });
    let mut buses = Vec::new();
    let mut seen = HashSet::new();
    for b in &bus_cfgs {
        if !seen.insert(b.id.clone()) {
            errs.push(format!("duplicate bus `{}`", b.id));
        }
        let kv = b.nominal_kv.unwrap_or(nominal_kv);
        if !(kv > 0.0) {
            errs.push(format!("bus `{}` nominal_kv must be positive", b.id));
        }
        buses.push(Bus {
            id: b.id.clone(),
            nominal_voltage: kv * 1e3,
        });
    }
    let bus_of = |id: &str, what: &str, errs: &mut Vec<String>| -> usize {
        match buses.iter().position(|b| b.id == id) {
            Some(i) => i,
            None => {
                errs.push(format!("{what} references unknown bus `{id}`"));
                0
            }
        }
    };

    let mut lines = Vec::new();
    let mut relay_ids = HashSet::new();
    let line_cfgs = cfg.lines.clone().unwrap_or_else(|| {
        errs.push("missing lines".into());
        Vec::new()
    });
    for l in &line_cfgs {
        let from_bus = bus_of(&l.from, &format!("line `{}`", l.id), &mut errs);
        let to_bus = bus_of(&l.to, &format!("line `{}`", l.id), &mut errs);
        if l.from == l.to {
            errs.push(format!("line `{}` connects bus `{}` to itself", l.id, l.from));
        }
        if !(l.length_km > 0.0) {
            errs.push(format!("line `{}` length_km must be positive", l.id));
        }
        if !(l.rated_current_a > 0.0) {
            errs.push(format!("line `{}` rated_current_a must be positive", l.id));
        }
        for r in [&l.relay_from, &l.relay_to].into_iter().flatten() {
            if !relay_ids.insert(r.clone()) {
                errs.push(format!("relay `{r}` appears twice"));
            }
        }
        if l.relay_from.is_some() != l.relay_to.is_some() {
            errs.push(format!("line `{}` must carry a relay at both ends or none", l.id));
        }
        let zp = c(l.z_pos_ohm_per_km);
        let per_km = SequenceImpedance::new(
            zp,
            l.z_neg_ohm_per_km.map(c).unwrap_or(zp),
            l.z_zero_ohm_per_km.map(c).unwrap_or(zp * 3.0),
        );
        if !per_km.is_passive() {
            errs.push(format!("line `{}` has negative resistance", l.id));
        }
        lines.push(DistributionLine {
            id: l.id.clone(),
            from_bus,
            to_bus,
            length_km: l.length_km,
            per_km,
            relay_from: l.relay_from.clone(),
            relay_to: l.relay_to.clone(),
            switch_from: SwitchState::Closed,
            switch_to: SwitchState::Closed,
            rated_current: l.rated_current_a,
        });
    }

    let src_cfgs = cfg.sources.clone().unwrap_or_else(|| {
        errs.push("missing sources".into());
        Vec::new()
    });
    let mut sources = Vec::new();
    for s in &src_cfgs {
        let bus = bus_of(&s.bus, &format!("source `{}`", s.id), &mut errs);
        if !(s.rated_kw > 0.0) {
            errs.push(format!("source `{}` rated_kw must be positive", s.id));
        }
        let (internal, zero_path) = match s.kind {
            SourceKind::Grid => {
                let Some(t) = cfg.transformer.as_ref() else {
                    errs.push(format!(
                        "missing transformer (required by grid source `{}`)",
                        s.id
                    ));
                    continue;
                };
                let rating = need(t.rating_mva, "transformer.rating_mva", &mut errs);
                need(t.hv_kv, "transformer.hv_kv", &mut errs);
                need(t.lv_kv, "transformer.lv_kv", &mut errs);
                let zpct = need(t.impedance_pct, "transformer.impedance_pct", &mut errs);
                let sc = need(
                    s.short_circuit_mva,
                    &format!("source `{}`.short_circuit_mva", s.id),
                    &mut errs,
                );
                let z_grid = z_from_xr(base_mva / sc, s.x_r);
                let z_tx = z_from_xr(zpct / 100.0 * base_mva / rating, t.x_r);
                if !(t.neutral_ohm >= 0.0) {
                    errs.push(format!("transformer.neutral_ohm must be non-negative, got {}", t.neutral_ohm));
                }
                let z_n = Complex64::new(3.0 * t.neutral_ohm / (nominal_kv * nominal_kv / base_mva), 0.0);
                let vg = t.vector_group.to_ascii_lowercase();
                let (z0, path) = if vg.starts_with('d') && vg.contains("yn") {
                    (z_tx + z_n, true)
                } else if vg.starts_with("yn") && vg[2..].contains("yn") {
                    (z_tx + z_grid + z_n, true)
                } else {
                    (z_tx, false)
                };
                (SequenceImpedance::new(z_grid + z_tx, z_grid + z_tx, z0), path)
            }
            SourceKind::Der => {
                if !(s.fault_current_multiple > 0.0) {
                    errs.push(format!("source `{}` fault_current_multiple must be positive", s.id));
                }
                let s_pu = s.rated_kw / 1e3 / base_mva;
                let z = z_from_xr(1.0 / (s.fault_current_multiple * s_pu), s.x_r);
                (SequenceImpedance::uniform(z), s.grounded)
            }
        };
        let state = cfg.switches.get(&s.switch).copied().unwrap_or(SwitchState::Closed);
        let emf = s
            .emf_pu
            .map(|[m, a]| Phasor::from_polar_deg(m, a))
            .unwrap_or(Phasor::new(1.0, 0.0));
        sources.push(Source {
            id: s.id.clone(),
            bus,
            emf,
            internal,
            zero_path,
            kind: s.kind,
            switch_id: s.switch.clone(),
            connect_switch: state,
            rated_kva: s.rated_kw,
            dispatched: s.emf_pu.is_none(),
        });
    }
    if sources.iter().filter(|s| s.kind == SourceKind::Grid).count() > 1 {
        errs.push("at most one grid source is supported".into());
    }

    let mut loads = Vec::new();
    for l in cfg.loads.clone().unwrap_or_else(|| {
        errs.push("missing loads".into());
        Vec::new()
    }) {
        let bus = bus_of(&l.bus, &format!("load `{}`", l.id), &mut errs);
        if !(l.pf > 0.0 && l.pf <= 1.0) {
            errs.push(format!("load `{}` pf must lie in (0, 1]", l.id));
        }
        if !(l.p_kw >= 0.0) {
            errs.push(format!("load `{}` p_kw must be non-negative", l.id));
        }
        let p = l.p_kw / 1e3 / base_mva;
        let q = p * (l.pf.acos()).tan();
        let mut connected = if l.connected {
            SwitchState::Closed
        } else {
            SwitchState::Open
        };
        if let Some(s) = cfg.switches.get(&l.id) {
            connected = *s;
        }
        loads.push(Load {
            id: l.id.clone(),
            bus,
            p_w: l.p_kw * 1e3,
            pf: l.pf,
            admittance: Complex64::new(p, -q),
            grounded: l.grounded,
            connected,
        });
    }

    let mut all_ids = HashSet::new();
    for id in relay_ids
        .iter()
        .cloned()
        .chain(sources.iter().map(|s| s.switch_id.clone()))
        .chain(loads.iter().map(|l| l.id.clone()))
    {
        if !all_ids.insert(id.clone()) {
            errs.push(format!("switch id `{id}` is used twice"));
        }
    }
    for id in cfg.switches.keys() {
        if !all_ids.contains(id) {
            errs.push(format!("switches references unknown switch `{id}`"));
        }
    }

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }

    let mut net = NetworkModel {
        name: cfg.name.clone().unwrap_or_else(|| "testbed".into()),
        buses,
        lines,
        sources,
        loads,
        frequency,
        base,
    };
    for line in &mut net.lines {
        if let Some(r) = &line.relay_from {
            if let Some(s) = cfg.switches.get(r) {
                line.switch_from = *s;
            }
        }
        if let Some(r) = &line.relay_to {
            if let Some(s) = cfg.switches.get(r) {
                line.switch_to = *s;
            }
        }
    }
    super::solve::dispatch(&net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "frequency_hz": 50.0,
            "base_mva": 1.0,
            "nominal_kv": 0.415,
            "buses": [{"id": "B1"}, {"id": "B2"}],
            "transformer": {"rating_mva": 1.0, "hv_kv": 11.0, "lv_kv": 0.415, "impedance_pct": 5.0},
            "sources": [
                {"id": "GRID", "kind": "grid", "bus": "B1", "rated_kw": 500.0,
                 "short_circuit_mva": 5.0, "switch": "SS-GRID"},
                {"id": "PV", "kind": "der", "bus": "B2", "rated_kw": 50.0, "switch": "SS-PV"}
            ],
            "loads": [{"id": "L1", "bus": "B2", "p_kw": 20.0, "pf": 0.85}],
            "lines": [{"id": "DL-1", "from": "B1", "to": "B2", "length_km": 1.0,
                       "relay_from": "R2", "relay_to": "R3"}]
        })
    }

    fn build(v: serde_json::Value) -> Result<NetworkModel> {
        build_testbed(&serde_json::from_value(v).unwrap())
    }

    #[test]
    fn missing_transformer_is_named() {
        let mut v = minimal();
        v.as_object_mut().unwrap().remove("transformer");
        let err = build(v).unwrap_err();
        assert!(err.to_string().contains("transformer"), "{err}");
    }

    #[test]
    fn missing_transformer_rating_is_named() {
        let mut v = minimal();
        v["transformer"].as_object_mut().unwrap().remove("rating_mva");
        let Error::Config(msgs) = build(v).unwrap_err() else {
            panic!("expected config error")
        };
        assert!(msgs.iter().any(|m| m.contains("transformer.rating_mva")));
    }

    #[test]
    fn collects_every_problem() {
        let mut v = minimal();
        v["lines"][0]["length_km"] = serde_json::json!(-1.0);
        v["loads"][0]["bus"] = serde_json::json!("B9");
        let Error::Config(msgs) = build(v).unwrap_err() else {
            panic!("expected config error")
        };
        assert!(msgs.iter().any(|m| m.contains("length_km")));
        assert!(msgs.iter().any(|m| m.contains("B9")));
    }

    #[test]
    fn line_defaults_follow_positive_sequence() {
        let net = build(minimal()).unwrap();
        let z = net.lines[0].per_km;
        assert_eq!(z.zp, Complex64::new(0.1, 0.3));
        assert_eq!(z.zn, z.zp);
        assert!((z.z0 - z.zp * 3.0).norm() < 1e-15);
    }

    #[test]
    fn der_impedance_limits_terminal_fault_to_twice_rated() {
        let net = build(minimal()).unwrap();
        let pv = &net.sources[1];
        let s_pu = 0.05;
        assert!((1.0 / pv.internal.zp.norm() - 2.0 * s_pu).abs() < 1e-12);
    }

    #[test]
    fn dyn_transformer_grounds_lv_side() {
        let net = build(minimal()).unwrap();
        assert!(net.sources[0].zero_path);
        let zt = net.sources[0].internal.z0.norm();
        assert!((zt - 0.05).abs() < 1e-12);
    }
}
