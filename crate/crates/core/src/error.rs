use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CslError {
    #[error("invalid noise configuration: {0}")]
    NoiseConfig(String),

    #[error("recorded noise exhausted at step {step} (sequence holds {len} increments)")]
    NoiseExhausted { step: u64, len: usize },

    #[error("sign sequence line {line}: {message}")]
    SignParse { line: usize, message: String },

    #[error("sign sequence blocks {found:?} do not match schedule steps {expected:?}")]
    BlockMismatch { expected: Vec<u32>, found: Vec<u32> },

    #[error("invalid superposition state: {0}")]
    State(String),

    #[error("step too large for branch {branch}: |2(a_m - R) dB| = {factor} >= 1")]
    StepSize { branch: usize, factor: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid detector geometry: {0}")]
    Geometry(String),

    #[error("sub-threshold geometry: Diethorn log argument {argument} <= 1, no multiplication")]
    SubThreshold { argument: f64 },

    #[error("potential drop {drop} V is smaller than one PPC path ({delta_v} V): no generations")]
    NoGenerations { drop: f64, delta_v: f64 },

    #[error("multiplication factor 2^{0} does not fit in 64 bits")]
    Overflow(u32),

    #[error("time step too coarse: generation {generation} lasts {seconds:e} s, rounds to zero steps of {dt:e} s")]
    DtTooCoarse {
        generation: usize,
        seconds: f64,
        dt: f64,
    },

    #[error("invalid thresholds: need 0 < silent ({silent}) < click ({click}) < 1")]
    Thresholds { silent: f64, click: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("martingale probe aborted: validity bound hit in trial {trial} at step {step}")]
    ProbeAborted { trial: usize, step: u64 },
}

pub type Result<T> = std::result::Result<T, CslError>;
