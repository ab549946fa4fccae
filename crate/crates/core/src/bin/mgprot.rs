use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use mgprot::calibrate::{calibrate_thresholds, CalibrationPlan};
use mgprot::network::load_testbed;
use mgprot::output::{emit_outputs, format_sig, summary_table};
use mgprot::scenario::{load_scenario, run_scenario, RunOptions};
use mgprot::Error;

/// Local-measurement microgrid protection simulator.
#[derive(Debug, Parser)]
#[command(name = "mgprot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write events.jsonl, per-point CSVs and summary.txt.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Sampling rate override, Hz.
        #[arg(long)]
        fs: Option<f64>,
    },
    /// Derive detection thresholds for a testbed.
    Calibrate {
        testbed: PathBuf,
        /// Write the thresholds here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario and everything it references without running it.
    Validate { scenario: PathBuf },
    /// Re-run a scenario with every fault resistance set to each value of
    /// `START:STOP:STEP` (ohms, inclusive).
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_range)]
        rf: RfRange,
    },
}

#[derive(Debug, Clone, Copy)]
struct RfRange {
    start: f64,
    stop: f64,
    step: f64,
}

impl RfRange {
    fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

fn parse_range(s: &str) -> Result<RfRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected START:STOP:STEP, got `{s}`"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    let r = RfRange { start: num(a)?, stop: num(b)?, step: num(c)? };
    if !(r.start >= 0.0 && r.stop >= r.start && r.step > 0.0) {
        return Err(format!("need 0 <= START <= STOP and STEP > 0, got `{s}`"));
    }
    Ok(r)
}

enum Outcome {
    Met,
    Mismatch,
}

fn exit_code(res: Result<Outcome, Error>) -> ExitCode {
    match res {
        Ok(Outcome::Met) => ExitCode::SUCCESS,
        Ok(Outcome::Mismatch) => ExitCode::from(1),
        Err(e @ Error::NoSeparation { .. }) => {
            error!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

fn run(path: &Path, out: &Path, fs: Option<f64>) -> Result<Outcome, Error> {
    let ls = load_scenario(path)?;
    let mut report = run_scenario(&ls, RunOptions { fs, observe_only: false })?;
    emit_outputs(&mut report, out)?;
    print!("{}", summary_table(&report));
    Ok(if report.expectations_met() { Outcome::Met } else { Outcome::Mismatch })
}

fn calibrate(path: &Path, out: Option<&Path>) -> Result<Outcome, Error> {
    let net = load_testbed(path)?;
    let rep = calibrate_thresholds(&net, &CalibrationPlan::default_for(&net))?;
    eprintln!(
        "no-fault V_er% [{:.4}, {:.4}], I_er% [{:.4}, {:.4}]; faulted V_er% [{:.4}, {:.4}], I_er% [{:.4}, {:.4}]",
        rep.nofault_v_pct.lo,
        rep.nofault_v_pct.hi,
        rep.nofault_i_pct.lo,
        rep.nofault_i_pct.hi,
        rep.fault_v_pct.lo,
        rep.fault_v_pct.hi,
        rep.fault_i_pct.lo,
        rep.fault_i_pct.hi,
    );
    let text = serde_json::to_string_pretty(&rep.thresholds)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Met)
}

fn validate(path: &Path) -> Result<Outcome, Error> {
    let ls = load_scenario(path)?;
    println!(
        "{}: {} events, {} relays, valid",
        ls.scenario.name,
        ls.scenario.events.len(),
        ls.net.relays().len()
    );
    Ok(Outcome::Met)
}

fn sweep(path: &Path, range: RfRange) -> Result<Outcome, Error> {
    let ls = load_scenario(path)?;
    let mut all_met = true;
    println!("rf_ohm,trips,max_response_s,codes,expectations");
    for rf in range.values() {
        let report = run_scenario(&ls.with_rf(rf), RunOptions::default())?;
        let met = report.expectations_met();
        all_met &= met;
        let max_rt = report.trips.iter().map(|t| t.response_time).fold(f64::NAN, f64::max);
        let mut codes: Vec<String> = report.trips.iter().map(|t| format!("{}:{}", t.relay_id, t.fault_code)).collect();
        codes.sort();
        println!(
            "{},{},{},{},{}",
            rf,
            report.trips.len(),
            if max_rt.is_nan() { "-".into() } else { format_sig(max_rt) },
            codes.join(" "),
            match (&report.expectations, met) {
                (None, _) => "none",
                (Some(_), true) => "met",
                (Some(_), false) => "not met",
            }
        );
    }
    Ok(if all_met { Outcome::Met } else { Outcome::Mismatch })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    exit_code(match &cli.command {
        Command::Run { scenario, out, fs } => run(scenario, out, *fs),
        Command::Calibrate { testbed, out } => calibrate(testbed, out.as_deref()),
        Command::Validate { scenario } => validate(scenario),
        Command::Sweep { scenario, rf } => sweep(scenario, *rf),
    })
}
