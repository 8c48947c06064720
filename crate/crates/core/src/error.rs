use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("sharp-wall well (w = 0) cannot be sampled on a lattice")]
    SharpWall,

    #[error(
        "light-cone guard violated: c·t = {reach:.4} a.u. must stay below box_length/4 = {limit:.4} a.u."
    )]
    LightCone { reach: f64, limit: f64 },

    #[error("time step too coarse: dt·max|E| = {phase:.4} rad exceeds {limit} rad per step")]
    StepTooLarge { phase: f64, limit: f64 },

    #[error("snapshot is missing the {0} block")]
    MissingBlock(&'static str),

    #[error("{0}")]
    Mismatch(String),

    #[error("need at least {needed} samples in window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("level {level} lost at V1 = {v1} c²: {reason}")]
    LevelLost {
        level: usize,
        v1: f64,
        reason: String,
    },

    #[error("no real bound-state window for these parameters")]
    EmptyWindow,

    #[error("transmission undefined: {0}")]
    NoTransmission(String),

    #[error("bad snapshot file {path}: {reason}")]
    SnapshotFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
