//! Browser bindings for the protection simulator: sequence decomposition,
//! fault studies on the bundled testbed and relay-point waveforms.
//!
//! Every binding returns a JSON string. The plain functions do the work and
//! are usable from native code; the `wasm_*` wrappers only convert errors.

use mgprot::fault::{fault_point_currents, FaultKind, FaultSpec};
use mgprot::network::{apply_switch_action, build_testbed, LineEnd, NetworkModel, SwitchState, TestbedConfig};
use mgprot::phasor::{fortescue_compose, fortescue_decompose, Phasor, SequenceSet, ThreePhaseSet};
use mgprot::relay::{classify, detect, RelayConfig, Thresholds};
use mgprot::waveform::synthesize_waveforms;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const TESTBED: &str = include_str!("../../core/data/testbed.json");
const THRESHOLDS: &str = include_str!("../../core/data/thresholds.json");
const INCEPTION: f64 = 0.04;
const DURATION: f64 = 0.1;
const FS: f64 = 5_000.0;

fn polar(p: Phasor) -> Value {
    json!({ "mag": p.magnitude(), "deg": p.angle_deg() })
}

fn sequences(s: &SequenceSet) -> Value {
    json!({ "pos": polar(s.pos), "neg": polar(s.neg), "zero": polar(s.zero) })
}

/// Symmetrical components of three phasors given in polar form (degrees).
pub fn sequence_components(mags: [f64; 3], degs: [f64; 3]) -> String {
    let p = |k: usize| Phasor::from_polar_deg(mags[k], degs[k]);
    let s = fortescue_decompose(&ThreePhaseSet::new(p(0), p(1), p(2)));
    sequences(&s).to_string()
}

fn network(islanded: bool) -> Result<NetworkModel, String> {
    let cfg: TestbedConfig = serde_json::from_str(TESTBED).map_err(|e| e.to_string())?;
    let net = build_testbed(&cfg).map_err(|e| e.to_string())?;
    if !islanded {
        return Ok(net);
    }
    apply_switch_action(&net, "SS-GRID", SwitchState::Open)
        .and_then(|n| n.redispatch())
        .map_err(|e| e.to_string())
}

fn fault_spec(code: u8, line: &str, fraction: f64, rf: f64) -> Result<FaultSpec, String> {
    let kind = FaultKind::from_code(code).ok_or_else(|| format!("fault code must be 1..4, got {code}"))?;
    let spec = FaultSpec::new(kind, line, fraction, rf).at(INCEPTION);
    spec.validate()?;
    Ok(spec)
}

/// Relay-point phasors in volts and amperes for the healthy and faulted
/// states of both ends of the faulted line.
struct RelayView {
    relay: String,
    cfg: RelayConfig,
    pre: (ThreePhaseSet, ThreePhaseSet),
    post: (ThreePhaseSet, ThreePhaseSet),
}

fn relay_views(net: &NetworkModel, spec: &FaultSpec) -> Result<(Vec<RelayView>, Option<ThreePhaseSet>), String> {
    let thresholds: Thresholds = serde_json::from_str(THRESHOLDS).map_err(|e| e.to_string())?;
    let healthy = net.solve_state(None).map_err(|e| e.to_string())?;
    let faulted = net.solve_state(Some(spec)).map_err(|e| e.to_string())?;
    let li = net.line_index(&spec.line_id).ok_or_else(|| format!("unknown line {}", spec.line_id))?;
    let line = &net.lines[li];
    let (vb, ib) = (net.base.v_phase(), net.base.i_amp());
    let mut out = Vec::new();
    for (k, end) in [LineEnd::From, LineEnd::To].into_iter().enumerate() {
        let Some(id) = line.relay(end) else { continue };
        let bus = line.bus(end);
        let at = |s: &mgprot::network::NetworkState| {
            (
                fortescue_compose(&s.bus_voltage[bus]).scale(vb),
                fortescue_compose(&s.line_current[li][k]).scale(ib),
            )
        };
        let cfg = RelayConfig {
            v_rated: net.buses[bus].nominal_voltage / 3f64.sqrt(),
            i_rated: line.rated_current,
            ..RelayConfig::default()
        }
        .with_thresholds(&thresholds);
        out.push(RelayView { relay: id.to_string(), cfg, pre: at(&healthy), post: at(&faulted) });
    }
    let i_fault = faulted.fault.as_ref().map(|f| fault_point_currents(f).scale(ib));
    Ok((out, i_fault))
}

/// Steady fault state at the relays of the faulted line, with the detection
/// and classification each relay would reach.
pub fn fault_study(islanded: bool, code: u8, line: &str, fraction: f64, rf: f64) -> Result<String, String> {
    let net = network(islanded)?;
    let spec = fault_spec(code, line, fraction, rf)?;
    let (views, i_fault) = relay_views(&net, &spec)?;
    let relays: Vec<Value> = views
        .iter()
        .map(|r| {
            let (v, i) = r.post;
            let d = detect(&v, &i, &r.cfg);
            let i_seq = fortescue_decompose(&i);
            let class = d.any().then(|| classify(&i_seq, &d.flags, &r.cfg).code);
            json!({
                "relay": r.relay,
                "v_mag": v.magnitudes(),
                "i_mag": i.magnitudes(),
                "v_er_pct": d.v_er_pct,
                "i_er_pct": d.i_er_pct,
                "flags": d.flags,
                "i_seq": sequences(&i_seq),
                "code": class,
            })
        })
        .collect();
    Ok(json!({
        "kind": spec.kind.label(),
        "i_fault": i_fault.map(|f| f.magnitudes()),
        "relays": relays,
    })
    .to_string())
}

/// Instantaneous voltages and currents at one relay of the faulted line,
/// healthy until the fault and faulted afterwards. `end` 0 is the sending
/// end of the line, 1 the receiving end.
pub fn relay_waveform(
    islanded: bool,
    code: u8,
    line: &str,
    fraction: f64,
    rf: f64,
    end: usize,
) -> Result<String, String> {
    let net = network(islanded)?;
    let spec = fault_spec(code, line, fraction, rf)?;
    let (views, _) = relay_views(&net, &spec)?;
    let r = views.get(end).ok_or_else(|| format!("line {line} has no relay at end {end}"))?;
    let samples = synthesize_waveforms(
        (&r.pre.0, &r.pre.1),
        (&r.post.0, &r.post.1),
        (&r.post.0, &r.post.1),
        INCEPTION,
        None,
        net.frequency,
        FS,
        DURATION,
    )
    .map_err(|e| e.to_string())?;
    let col = |f: fn(&mgprot::waveform::MeasurementSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    Ok(json!({
        "relay": r.relay,
        "t": col(|m| m.t),
        "v": [col(|m| m.va), col(|m| m.vb), col(|m| m.vc)],
        "i": [col(|m| m.ia), col(|m| m.ib), col(|m| m.ic)],
    })
    .to_string())
}

#[wasm_bindgen]
pub fn wasm_sequence_components(a_mag: f64, a_deg: f64, b_mag: f64, b_deg: f64, c_mag: f64, c_deg: f64) -> String {
    sequence_components([a_mag, b_mag, c_mag], [a_deg, b_deg, c_deg])
}

#[wasm_bindgen]
pub fn wasm_fault_study(islanded: bool, code: u8, line: &str, fraction: f64, rf: f64) -> Result<String, JsError> {
    fault_study(islanded, code, line, fraction, rf).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn wasm_relay_waveform(
    islanded: bool,
    code: u8,
    line: &str,
    fraction: f64,
    rf: f64,
    end: usize,
) -> Result<String, JsError> {
    relay_waveform(islanded, code, line, fraction, rf, end).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn balanced_set_has_only_positive_sequence() {
        let v = parse(&sequence_components([1.0; 3], [0.0, -120.0, 120.0]));
        assert!((v["pos"]["mag"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(v["neg"]["mag"].as_f64().unwrap() < 1e-12);
        assert!(v["zero"]["mag"].as_f64().unwrap() < 1e-12);
    }

    #[test]
    fn bolted_ground_fault_is_seen_by_both_relays() {
        let v = parse(&fault_study(true, 1, "DL-1", 0.5, 0.0).unwrap());
        let relays = v["relays"].as_array().unwrap();
        assert_eq!(relays.len(), 2);
        for r in relays {
            assert_eq!(r["code"], 1);
        }
    }

    #[test]
    fn waveform_covers_the_window() {
        let v = parse(&relay_waveform(false, 2, "DL-3", 0.5, 1.0, 1).unwrap());
        assert_eq!(v["t"].as_array().unwrap().len(), (DURATION * FS) as usize);
        assert_eq!(v["i"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(fault_study(false, 7, "DL-1", 0.5, 0.0).is_err());
        assert!(fault_study(false, 1, "DL-9", 0.5, 0.0).is_err());
        assert!(relay_waveform(false, 1, "DL-1", 0.5, 0.0, 5).is_err());
    }
}
