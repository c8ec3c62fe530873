use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Guard added to the denominator of each contribution ratio.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Per-batch confidence accounting for the two branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationState {
    pub s_res: f64,
    pub s_dense: f64,
    pub r_res: f64,
    pub r_dense: f64,
    pub m_res: f64,
    pub m_dense: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl ModulationState {
    /// Computes every quantity from detached branch probabilities.
    pub fn from_probabilities(
        probs_res: &Tensor,
        probs_dense: &Tensor,
        labels: &[usize],
        alpha: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let (s_res, s_dense) = batch_confidences(probs_res, probs_dense, labels)?;
        Ok(Self::from_confidences(s_res, s_dense, alpha, epsilon))
    }

    pub fn from_confidences(s_res: f64, s_dense: f64, alpha: f64, epsilon: f64) -> Self {
        let (r_res, r_dense) = contribution_ratios(s_res, s_dense, epsilon);
        let (m_res, m_dense) = modulation_coefficients(r_res, r_dense, alpha);
        Self {
            s_res,
            s_dense,
            r_res,
            r_dense,
            m_res,
            m_dense,
            alpha,
            epsilon,
        }
    }
}

fn true_class_sum(probs: &Tensor, labels: &[usize], branch: &str) -> Result<f64> {
    if probs.ndim() != 2 || probs.dim(0) != labels.len() {
        return Err(Error::dim(
            "batch_confidences",
            format!(
                "{branch} probabilities {:?} for {} labels",
                probs.shape(),
                labels.len()
            ),
        ));
    }
    let c = probs.dim(1);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::Label {
                index: i,
                label,
                classes: c,
            });
        }
        let row = &probs.data()[i * c..(i + 1) * c];
        let row_sum: f64 = row.iter().sum();
        if (row_sum - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "{branch} probability row {i} sums to {row_sum}"
            )));
        }
        total += row[label];
    }
    Ok(total)
}

/// Sums of true-class probabilities over the batch, `(S_res, S_dense)`.
pub fn batch_confidences(
    probs_res: &Tensor,
    probs_dense: &Tensor,
    labels: &[usize],
) -> Result<(f64, f64)> {
    Ok((
        true_class_sum(probs_res, labels, "residual")?,
        true_class_sum(probs_dense, labels, "dense")?,
    ))
}

/// `(S_res / (S_dense + ε), S_dense / (S_res + ε))`.
pub fn contribution_ratios(s_res: f64, s_dense: f64, epsilon: f64) -> (f64, f64) {
    (s_res / (s_dense + epsilon), s_dense / (s_res + epsilon))
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `1 − tanh(x)` evaluated as `2 / (1 + e^{2x})`, which keeps full relative
/// precision once `tanh(x)` rounds to one.
fn one_minus_tanh(x: f64) -> f64 {
    2.0 / (1.0 + (2.0 * x).exp())
}

/// `1 − tanh(α · ReLU(R − 1))` when `R > 1`, otherwise `1`.
///
/// The result is clamped to the smallest positive normal `f64` so it stays
/// in `(0, 1]` even when `α (R − 1)` is large enough to underflow.
pub fn modulation_coefficient(ratio: f64, alpha: f64) -> f64 {
    if ratio > 1.0 {
        one_minus_tanh(alpha * relu(ratio - 1.0)).max(f64::MIN_POSITIVE)
    } else {
        1.0
    }
}

pub fn modulation_coefficients(r_res: f64, r_dense: f64, alpha: f64) -> (f64, f64) {
    (
        modulation_coefficient(r_res, alpha),
        modulation_coefficient(r_dense, alpha),
    )
}

/// Scales accumulated gradients of the residual group by `m_res` and of the
/// dense group by `m_dense`. Parameters in neither group are untouched.
pub fn apply_modulation(
    store: &mut ParamStore,
    res_group: &[ParamId],
    dense_group: &[ParamId],
    m_res: f64,
    m_dense: f64,
) {
    for (group, m) in [(res_group, m_res), (dense_group, m_dense)] {
        if m == 1.0 {
            continue;
        }
        for &id in group {
            store.get_mut(id).grad_mut().iter_mut().for_each(|g| *g *= m);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[&[f64]]) -> Tensor {
        let c = rows[0].len();
        Tensor::new(vec![rows.len(), c], rows.concat()).unwrap()
    }

    #[test]
    fn confidences_examples() {
        let onehot = probs(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let (s, _) = batch_confidences(&onehot, &onehot, &[0, 1, 0, 1]).unwrap();
        assert_eq!(s, 4.0);

        let uniform = Tensor::full(&[10, 5], 0.2);
        let labels: Vec<usize> = (0..10).map(|i| i % 5).collect();
        let (s, _) = batch_confidences(&uniform, &uniform, &labels).unwrap();
        assert!((s - 2.0).abs() < 1e-12);

        let p = probs(&[&[0.7, 0.3], &[0.6, 0.4]]);
        let (s, _) = batch_confidences(&p, &p, &[0, 1]).unwrap();
        assert!((s - 1.1).abs() < 1e-15);
    }

    #[test]
    fn confidences_reject_bad_label() {
        let p = probs(&[&[0.5, 0.5]]);
        assert!(matches!(
            batch_confidences(&p, &p, &[2]),
            Err(Error::Label { index: 0, label: 2, .. })
        ));
    }

    #[test]
    fn ratio_examples() {
        let (a, b) = contribution_ratios(3.0, 3.0, 1e-8);
        assert!((a - 1.0).abs() < 1e-6 && (b - 1.0).abs() < 1e-6);
        let (a, b) = contribution_ratios(10.0, 5.0, 1e-8);
        assert!((a - 2.0).abs() < 1e-8 && (b - 0.5).abs() < 1e-8);
        let (a, b) = contribution_ratios(2.0, 0.0, 1e-8);
        assert_eq!(b, 0.0);
        assert!(a.is_finite() && (a - 2e8).abs() < 1.0);
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(modulation_coefficients(1.0, 1.0, 0.9), (1.0, 1.0));
        let (m_res, m_dense) = modulation_coefficients(2.0, 0.5, 0.9);
        assert!((m_res - 0.283_702_129_800_975_6).abs() < 1e-12, "{m_res}");
        assert_eq!(m_dense, 1.0);
        let (m_res, m_dense) = modulation_coefficients(0.6, 1.5, 0.1);
        assert_eq!(m_res, 1.0);
        assert!((m_dense - 0.950_041_625_042_120_0).abs() < 1e-12, "{m_dense}");
    }

    #[test]
    fn zero_alpha_is_exactly_one() {
        for r in [0.5, 1.0, 1.0001, 3.0, 1e9] {
            assert_eq!(modulation_coefficient(r, 0.0), 1.0);
        }
    }

    #[test]
    fn extreme_ratio_stays_positive() {
        let m = modulation_coefficient(1e12, 0.9);
        assert!(m > 0.0 && m <= 1.0);
    }

    #[test]
    fn apply_scales_only_named_groups() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[2]));
        let b = store.add("b", Tensor::zeros(&[2]));
        let c = store.add("c", Tensor::zeros(&[1]));
        for id in [a, b, c] {
            store.get_mut(id).grad_mut().iter_mut().for_each(|g| *g = -3.0);
        }
        apply_modulation(&mut store, &[a], &[b], 0.5, 1.0);
        assert_eq!(store.grad(a).data(), &[-1.5, -1.5]);
        assert_eq!(store.grad(b).data(), &[-3.0, -3.0]);
        assert_eq!(store.grad(c).data(), &[-3.0]);
    }
}
