use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid testbed configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("unknown switch `{0}`")]
    UnknownSwitch(String),

    #[error("unknown line `{0}`")]
    UnknownLine(String),

    #[error("fault point on `{0}` has no connected source on either side")]
    DeEnergized(String),

    #[error("zero impedance fault loop")]
    ZeroImpedanceFault,

    #[error("line impedance is zero in the {0} sequence")]
    ZeroLineImpedance(&'static str),

    #[error("line `{0}` is open at both ends")]
    LineOpen(String),

    #[error("sampling rate {fs} Hz is below {min} Hz")]
    BadSamplingRate { fs: f64, min: f64 },

    #[error("estimation window has {got} samples, need {need}")]
    ShortWindow { got: usize, need: usize },

    #[error("invalid scenario at `{path}`: {msg}")]
    ScenarioInvalid { path: String, msg: String },

    #[error("network solve failed: {0}")]
    SolveFailed(String),

    #[error(
        "no separating threshold: no-fault {quantity} range [{nofault_lo:.3}, {nofault_hi:.3}] % \
         overlaps faulted range [{fault_lo:.3}, {fault_hi:.3}] %"
    )]
    NoSeparation {
        quantity: &'static str,
        nofault_lo: f64,
        nofault_hi: f64,
        fault_lo: f64,
        fault_hi: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
