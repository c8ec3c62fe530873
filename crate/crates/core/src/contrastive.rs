//! Cross-branch contrastive alignment.
//!
//! At every stage the projected features of the two branches form a cosine
//! similarity matrix `S[i][j] = cos(z_res_i, z_dense_j)`. Sample `i` seen by
//! both branches is the positive pair; every other column (row) is a
//! negative. The stage loss averages a row-wise and a column-wise softmax
//! cross-entropy on `S / τ`:
//!
//! ```text
//! L = -1/(2N) Σ_i [ log softmax_row_i(S/τ)[i] + log softmax_col_i(S/τ)[i] ]
//! ```
//!
//! Stage losses are averaged, and the final pooled features are additionally
//! aligned by the MSE between their L2-normalized rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{kernels, Tape, Tensor, Var};

/// Row norms below this value are clamped before division.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub stage_count: usize,
    pub align_weight: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            stage_count: 4,
            align_weight: 0.7,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.stage_count == 0 {
            return Err(Error::Config("stage_count must be at least 1".into()));
        }
        if !(self.align_weight >= 0.0) {
            return Err(Error::Config(format!(
                "align_weight must be non-negative, got {}",
                self.align_weight
            )));
        }
        Ok(())
    }
}

/// Cosine similarities between two batches of embeddings at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Tensor,
    pub stage: usize,
}

impl SimilarityMatrix {
    pub fn from_embeddings(za: &Tensor, zb: &Tensor, stage: usize) -> Result<Self> {
        let mut tape = Tape::new();
        let (a, b) = (tape.constant(za.clone()), tape.constant(zb.clone()));
        let s = cosine_similarity_matrix(&mut tape, a, b)?;
        Ok(Self {
            values: tape.value(s).clone(),
            stage,
        })
    }

    pub fn n(&self) -> usize {
        self.values.dim(0)
    }

    /// Bidirectional contrastive loss of this matrix at temperature `tau`.
    pub fn contrastive_loss(&self, tau: f64) -> Result<f64> {
        contrastive_loss_value(&self.values, tau)
    }
}

/// `S[i][j] = ⟨a_i, b_j⟩ / (‖a_i‖ ‖b_j‖)` with epsilon-guarded norms.
pub fn cosine_similarity_matrix(tape: &mut Tape, za: Var, zb: Var) -> Result<Var> {
    let (a, b) = (tape.value(za), tape.value(zb));
    if a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1) {
        return Err(Error::dim(
            "cosine_similarity_matrix",
            format!("embeddings {:?} and {:?}", a.shape(), b.shape()),
        ));
    }
    if a.dim(0) == 0 || a.dim(1) == 0 {
        return Err(Error::dim("cosine_similarity_matrix", "empty embeddings"));
    }
    let na = tape.l2_normalize(za, NORM_EPS)?;
    let nb = tape.l2_normalize(zb, NORM_EPS)?;
    tape.matmul_nt(na, nb)
}

fn check_square(s: &Tensor, tau: f64) -> Result<usize> {
    if s.ndim() != 2 || s.dim(0) != s.dim(1) || s.dim(0) == 0 {
        return Err(Error::dim(
            "stage_contrastive_loss",
            format!("expected a non-empty square matrix, got {:?}", s.shape()),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    Ok(s.dim(0))
}

/// Bidirectional contrastive loss recorded on the tape, composed from
/// log-softmax over rows of `S/τ` and of its transpose.
pub fn stage_contrastive_loss(tape: &mut Tape, s: Var, tau: f64) -> Result<Var> {
    let n = check_square(tape.value(s), tau)?;
    let scaled = tape.scale(s, 1.0 / tau);
    let rows = tape.log_softmax(scaled)?;
    let row_pos = tape.diag(rows)?;
    let row_sum = tape.sum(row_pos);
    let transposed = tape.transpose(scaled)?;
    let cols = tape.log_softmax(transposed)?;
    let col_pos = tape.diag(cols)?;
    let col_sum = tape.sum(col_pos);
    let both = tape.add(row_sum, col_sum)?;
    Ok(tape.scale(both, -1.0 / (2.0 * n as f64)))
}

/// Direct evaluation of the bidirectional loss on a similarity matrix.
pub fn contrastive_loss_value(s: &Tensor, tau: f64) -> Result<f64> {
    let n = check_square(s, tau)?;
    let scaled = s.map(|v| v / tau);
    let rows = kernels::log_softmax_rows(&scaled);
    let cols = kernels::log_softmax_rows(&kernels::transpose2d(&scaled));
    let total: f64 = (0..n).map(|i| rows.at2(i, i) + cols.at2(i, i)).sum();
    Ok(-total / (2.0 * n as f64))
}

/// Arithmetic mean of per-stage losses.
pub fn multi_stage_loss(tape: &mut Tape, stage_losses: &[Var]) -> Result<Var> {
    let (first, rest) = stage_losses
        .split_first()
        .ok_or_else(|| Error::Contract("multi_stage_loss needs at least one stage".into()))?;
    let mut acc = *first;
    for &l in rest {
        acc = tape.add(acc, l)?;
    }
    Ok(tape.scale(acc, 1.0 / stage_losses.len() as f64))
}

pub fn multi_stage_mean(stage_losses: &[f64]) -> Result<f64> {
    if stage_losses.is_empty() {
        return Err(Error::Contract("multi_stage_loss needs at least one stage".into()));
    }
    Ok(stage_losses.iter().sum::<f64>() / stage_losses.len() as f64)
}

/// MSE between the row-normalized pooled features of the two branches.
pub fn alignment_loss(tape: &mut Tape, h_res: Var, h_dense: Var) -> Result<Var> {
    let (a, b) = (tape.value(h_res), tape.value(h_dense));
    if a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0) {
        return Err(Error::dim(
            "alignment_loss",
            format!("features {:?} and {:?}", a.shape(), b.shape()),
        ));
    }
    if a.dim(1) != b.dim(1) {
        return Err(Error::dim(
            "alignment_loss",
            format!(
                "residual features have width {} but dense features have width {}; \
                 set the final residual and dense widths equal or enable the alignment adapter",
                a.dim(1),
                b.dim(1)
            ),
        ));
    }
    let na = tape.l2_normalize(h_res, NORM_EPS)?;
    let nb = tape.l2_normalize(h_dense, NORM_EPS)?;
    tape.mse(na, nb)
}
