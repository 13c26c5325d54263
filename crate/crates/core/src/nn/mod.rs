//! Minimal differentiable-computation layer: a reverse-mode tape over
//! dense 2-D arrays, the layers the re-ranker is built from, AdaBelief,
//! checkpoints and finite-difference gradient verification.

pub mod adabelief;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;

pub use adabelief::AdaBelief;
pub use checkpoint::{Checkpoint, TensorRecord};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP};
pub use graph::{masked_softmax_rows, Graph, Var};
pub use layers::{dense, dropout, lstm_step, Attention, BatchNorm, Dense, LstmCell, Phase, RunningStatsUpdate};
pub use params::{Gradients, Mat, OptimizerSlots, Param, ParamId, ParamStore};

/// Masked softmax of a single score vector; `forbidden[i]` excludes entry
/// `i` from the normalizer and pins its probability to exactly zero.
pub fn masked_softmax(scores: &[f64], forbidden: &[bool]) -> crate::Result<Vec<f64>> {
    if scores.len() != forbidden.len() {
        return Err(crate::Error::Dimension(format!(
            "{} scores with {} mask entries",
            scores.len(),
            forbidden.len()
        )));
    }
    if forbidden.iter().all(|&f| f) {
        return Err(crate::Error::State("every index is forbidden".into()));
    }
    let u = Mat::from_shape_vec((1, scores.len()), scores.to_vec()).expect("length");
    Ok(masked_softmax_rows(&u, forbidden).into_raw_vec_and_offset().0)
}
