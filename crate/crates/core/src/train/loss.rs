//! Composition of the classification, contrastive and alignment objectives.

use serde::{Deserialize, Serialize};

use crate::contrastive::{alignment_loss, cosine_similarity_matrix, multi_stage_loss, stage_contrastive_loss};
use crate::error::{Error, Result};
use crate::model::ForwardOutputs;
use crate::tensor::{Tape, Var};

/// `(cls_res + cls_dense + cls_fusion) + λ · (contrast + align)`.
pub fn total_loss(cls_res: f64, cls_dense: f64, cls_fusion: f64, contrast: f64, align: f64, align_weight: f64) -> f64 {
    (cls_res + cls_dense + cls_fusion) + align_weight * (contrast + align)
}

/// Loss components recorded on a tape. Absent components are `None` and
/// contribute no node to the objective at all.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub cls_res: Var,
    pub cls_dense: Option<Var>,
    pub cls_fusion: Option<Var>,
    pub contrast: Option<Var>,
    pub align: Option<Var>,
    pub total: Var,
}

/// Scalar values of [`LossTerms`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub cls_res: f64,
    pub cls_dense: Option<f64>,
    pub cls_fusion: Option<f64>,
    pub contrast: Option<f64>,
    pub align: Option<f64>,
    pub total: f64,
}

impl LossValues {
    pub fn all_finite(&self) -> bool {
        [
            Some(self.cls_res),
            self.cls_dense,
            self.cls_fusion,
            self.contrast,
            self.align,
            Some(self.total),
        ]
        .into_iter()
        .flatten()
        .all(f64::is_finite)
    }
}

impl std::fmt::Display for LossValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |v: Option<f64>| v.map_or("absent".to_string(), |v| format!("{v}"));
        write!(
            f,
            "cls_res={} cls_dense={} cls_fusion={} contrast={} align={} total={}",
            self.cls_res,
            show(self.cls_dense),
            show(self.cls_fusion),
            show(self.contrast),
            show(self.align),
            self.total
        )
    }
}

impl LossTerms {
    /// Builds every active loss from a forward pass.
    ///
    /// Classification losses for the dense and fusion heads exist only for a
    /// dual-path network. Contrastive and alignment losses exist only when
    /// `contrastive` is set and the forward pass produced stage projections.
    pub fn build(
        tape: &mut Tape,
        out: &ForwardOutputs,
        labels: &[usize],
        contrastive: bool,
        temperature: f64,
        align_weight: f64,
    ) -> Result<Self> {
        let cls_res = tape.cross_entropy(out.logits_res, labels)?;
        let cls_dense = out.logits_dense.map(|l| tape.cross_entropy(l, labels)).transpose()?;
        let cls_fusion = match out.logits_dense {
            Some(_) => Some(tape.cross_entropy(out.logits_fusion, labels)?),
            None => None,
        };

        let (contrast, align) = if contrastive {
            if out.stage_projections.is_empty() {
                return Err(Error::Contract(
                    "contrastive loss requested but the forward pass produced no projections".into(),
                ));
            }
            let mut stage_losses = Vec::with_capacity(out.stage_projections.len());
            for &(z_res, z_dense) in &out.stage_projections {
                let s = cosine_similarity_matrix(tape, z_res, z_dense)?;
                stage_losses.push(stage_contrastive_loss(tape, s, temperature)?);
            }
            let contrast = multi_stage_loss(tape, &stage_losses)?;
            let aligned = out
                .h_dense_aligned
                .ok_or_else(|| Error::Contract("alignment loss needs the dense branch".into()))?;
            let align = alignment_loss(tape, out.h_res, aligned)?;
            (Some(contrast), Some(align))
        } else {
            (None, None)
        };

        let mut total = cls_res;
        for v in [cls_dense, cls_fusion].into_iter().flatten() {
            total = tape.add(total, v)?;
        }
        if let (Some(c), Some(a)) = (contrast, align) {
            let extra = tape.add(c, a)?;
            let extra = tape.scale(extra, align_weight);
            total = tape.add(total, extra)?;
        }
        Ok(Self {
            cls_res,
            cls_dense,
            cls_fusion,
            contrast,
            align,
            total,
        })
    }

    pub fn values(&self, tape: &Tape) -> LossValues {
        let v = |x: Var| tape.value(x).item();
        LossValues {
            cls_res: v(self.cls_res),
            cls_dense: self.cls_dense.map(v),
            cls_fusion: self.cls_fusion.map(v),
            contrast: self.contrast.map(v),
            align: self.align.map(v),
            total: v(self.total),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, 0.0, 0.7), 0.0);
        assert!((total_loss(1.0, 1.0, 1.0, 0.5, 0.1, 0.7) - 3.42).abs() < 1e-12);
        assert_eq!(total_loss(0.3, 0.2, 0.1, 9.0, 9.0, 0.0), total_loss(0.3, 0.2, 0.1, 0.0, 0.0, 0.0));
    }
}
