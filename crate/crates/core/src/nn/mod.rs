//! Dense-network machinery shared by the retriever and extractor heads:
//! feed-forward networks with analytic gradients, activations, losses, Adam,
//! and finite-difference gradient checks. Everything runs in `f64`.

mod adam;
mod early_stop;
mod ffnn;
mod gradcheck;
mod loss;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use adam::AdamState;
pub use early_stop::EarlyStopping;
pub use ffnn::{Ffnn, Tape};
pub use gradcheck::{finite_diff_check, finite_diff_grad, GradCheckReport};
pub use loss::{
    binary_ce, binary_ce_grad, leaky_relu, leaky_relu_grad, sigmoid, softmax, softmax_backward,
    LEAKY_SLOPE, PROB_CLAMP,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("tape does not match the network it is replayed against")]
    StaleTape,
    #[error("checkpoint i/o on {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(NnError::DimMismatch { expected, actual })
    }
}

/// The seeded generator used for every weight initialization.
pub fn seeded_rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// Writes any serializable model as pretty JSON. Floats round-trip exactly.
pub fn save_checkpoint<T: Serialize>(model: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |message: String| NnError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let text = serde_json::to_string_pretty(model).map_err(|e| err(e.to_string()))?;
    fs::write(path, text).map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let err = |message: String| NnError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}
