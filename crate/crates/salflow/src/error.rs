//! Error type shared across the crate.
//!
//! Every failure is tagged with one of three coarse categories so callers
//! (notably the CLI) can map outcomes to exit codes without matching on
//! individual variants: `Io` for filesystem/codec trouble, `Validation` for
//! inputs that violate a precondition, and `Numerical` for computations that
//! degenerate at run time (divergence, undefined metrics).

use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure category, used for exit-code mapping and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Io,
    Validation,
    Numerical,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Category::Io => write!(f, "io"),
            Category::Validation => write!(f, "validation"),
            Category::Numerical => write!(f, "numerical"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("cannot encode {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: malformed magic tag (expected {expected})")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("empty sequence: pattern {pattern:?} matched no files")]
    EmptySequence { pattern: String },

    #[error("missing frame: index {index} absent from pattern {pattern:?}")]
    MissingFrame { pattern: String, index: usize },

    #[error("{context}: dimension mismatch, expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        context: String,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("{context}: expected {expected} channel(s), got {got}")]
    ChannelMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("{context}: expected {expected} frame(s)/map(s), got {got}")]
    CountMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("sequence too small: {what}")]
    SequenceTooSmall { what: String },

    #[error("invalid configuration: {what}")]
    InvalidConfig { what: String },

    #[error("fixation record {index}: {what}")]
    FixationRecord { index: usize, what: String },

    #[error("invalid flow data: {what}")]
    InvalidFlow { what: String },

    #[error("undefined classifier: fixation mask is {kind}")]
    UndefinedClassifier { kind: &'static str },

    #[error("NSS undefined: saliency map is constant")]
    NssUndefined,

    #[error("no valid pixels to average over")]
    NoValidPixels,

    #[error("non-finite update at level {level}, iteration {iteration} (step size too large?)")]
    NonFiniteUpdate { level: usize, iteration: usize },

    #[error("solver diverged at level {level}, iteration {iteration}: norm grew by more than 1e6")]
    Diverged { level: usize, iteration: usize },
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Io { .. } | Error::Decode { .. } | Error::Encode { .. } => Category::Io,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::EmptySequence { .. }
            | Error::MissingFrame { .. }
            | Error::DimensionMismatch { .. }
            | Error::ChannelMismatch { .. }
            | Error::CountMismatch { .. }
            | Error::SequenceTooSmall { .. }
            | Error::InvalidConfig { .. }
            | Error::FixationRecord { .. }
            | Error::InvalidFlow { .. }
            | Error::NoValidPixels => Category::Validation,
            Error::UndefinedClassifier { .. }
            | Error::NssUndefined
            | Error::NonFiniteUpdate { .. }
            | Error::Diverged { .. } => Category::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_cover_the_three_buckets() {
        let io = Error::Io {
            path: PathBuf::from("x"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        };
        assert_eq!(io.category(), Category::Io);
        assert_eq!(
            Error::EmptySequence {
                pattern: "f%04d.png".into()
            }
            .category(),
            Category::Validation
        );
        assert_eq!(Error::NssUndefined.category(), Category::Numerical);
    }

    #[test]
    fn messages_name_the_offending_input() {
        let e = Error::MissingFrame {
            pattern: "f%03d.png".into(),
            index: 4,
        };
        let msg = e.to_string();
        assert!(msg.contains("f%03d.png") && msg.contains('4'));
    }
}
