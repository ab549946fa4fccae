//! Run artifacts: `events.jsonl`, one CSV per measurement point and a
//! plain-text summary table.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::network::Mode;
use crate::scenario::RunReport;

#[derive(Serialize)]
struct EventLine<'a> {
    t: f64,
    relay: &'a str,
    code: u8,
    response_time_s: f64,
}

/// Decimal rendering with at least nine significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0.000000000".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// One JSON object per trip, in trip order.
pub fn events_jsonl(report: &RunReport) -> String {
    let mut out = String::new();
    for t in &report.trips {
        let line = EventLine {
            t: t.t_trip,
            relay: &t.relay_id,
            code: t.fault_code,
            response_time_s: t.response_time,
        };
        out.push_str(&serde_json::to_string(&line).expect("plain struct"));
        out.push('\n');
    }
    out
}

/// Response time at the sample-period resolution.
fn format_response(dt: f64, fs: f64) -> String {
    let step = 1.0 / fs;
    if dt < step {
        return "< 1 sample".into();
    }
    let digits = (-(step.log10()).floor() as usize).max(1);
    format!("{:.*} s", digits, (dt / step).round() * step)
}

/// Table with one row per fault: kind, location, mode, response time, fault
/// resistance, code(s) and the relays that tripped.
pub fn summary_table(report: &RunReport) -> String {
    let mode = match report.mode {
        Mode::GridConnected => "grid connected",
        Mode::Islanded => "islanded",
    };
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", report.scenario);
    let _ = writeln!(out, "{:<8} {:<22} {:<15} {:<14} {:>6} {:<6} relays", "type", "location", "mode", "response", "rf", "code");
    for (k, f) in report.faults.iter().enumerate() {
        let t_end = report.faults.get(k + 1).map(|n| n.t_on).unwrap_or(f64::INFINITY);
        let trips: Vec<_> = report
            .trips
            .iter()
            .filter(|t| t.t_trip >= f.t_on && t.t_trip < t_end)
            .collect();
        let location = if (f.fraction - 0.5).abs() < 1e-12 {
            format!("mid point of {}", f.line)
        } else {
            format!("{:.0}% of {}", 100.0 * f.fraction, f.line)
        };
        let response = trips
            .iter()
            .map(|t| t.response_time)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            .map(|dt| format_response(dt, report.fs))
            .unwrap_or_else(|| "no trip".into());
        let mut codes: Vec<u8> = trips.iter().map(|t| t.fault_code).collect();
        codes.sort();
        codes.dedup();
        let codes = codes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        let relays = trips.iter().map(|t| t.relay_id.as_str()).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            out,
            "{:<8} {:<22} {:<15} {:<14} {:>4} Ω {:<6} {}",
            f.kind.label(),
            location,
            mode,
            response,
            f.rf,
            if codes.is_empty() { "-".into() } else { codes },
            relays
        );
    }
    let faultless: Vec<_> = report
        .trips
        .iter()
        .filter(|t| report.faults.iter().all(|f| t.t_trip < f.t_on))
        .collect();
    for t in faultless {
        let _ = writeln!(out, "trip without fault: {} at {:.4} s, code {}", t.relay_id, t.t_trip, t.fault_code);
    }
    if let Some(e) = &report.expectations {
        let _ = writeln!(out, "expectations: {}", if e.met { "met" } else { "NOT met" });
        for m in &e.mismatches {
            let _ = writeln!(out, "  - {m}");
        }
    }
    out
}

/// Writes every artifact of `report` into `out_dir` and records the CSV
/// paths in the report.
pub fn emit_outputs(report: &mut RunReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("events.jsonl"), events_jsonl(report))?;
    let mut files = Vec::new();
    for p in &report.points {
        let path = dir.join(format!("{}.csv", p.file_stem()));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "t,va,vb,vc,ia,ib,ic,i_pos,i_neg,i_zero")?;
        for (s, q) in p.samples.iter().zip(&p.i_seq) {
            let row = [s.t, s.va, s.vb, s.vc, s.ia, s.ib, s.ic, q[0], q[1], q[2]];
            let cells: Vec<String> = row.iter().map(|&x| format_sig(x)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        files.push(path);
    }
    report.waveform_files = files;
    fs::write(dir.join("summary.txt"), summary_table(report))?;
    Ok(())
}
