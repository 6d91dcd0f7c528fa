use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {name} = {value} (must be {requirement})")]
    Parameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("input out of domain: {name} = {value} (must be {requirement})")]
    InputDomain {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("meter {meter_id}: gap in slot sequence, slot {slot} missing")]
    SlotGap { meter_id: u32, slot: u32 },

    #[error("duplicate reading for meter {meter_id} slot {slot}")]
    DuplicateCell { meter_id: u32, slot: u32 },

    #[error("meter {meter_id} covers slots {first}..={last}, expected {expected_first}..={expected_last}")]
    RaggedSlots {
        meter_id: u32,
        first: u32,
        last: u32,
        expected_first: u32,
        expected_last: u32,
    },

    #[error("slot {slot} out of range (scenario has {n_slots} slots)")]
    SlotOutOfRange { slot: usize, n_slots: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("peak state and average disagree: peak_in_place={peak_in_place}, average {average:?}")]
    PeakContract {
        peak_in_place: bool,
        average: Option<f64>,
    },

    #[error("closed form needs a shared cooperative probability; use the enumeration oracle for per-meter probabilities")]
    HeterogeneousModel,

    #[error("enumeration over {n} meters exceeds the limit of {limit}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("relative error undefined: reference bill is zero")]
    UndefinedRatio,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
