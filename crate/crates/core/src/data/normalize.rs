//! Per-channel z-scoring.

use serde::{Deserialize, Serialize};

use super::window::WindowedDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on the standard deviation, so constant channels map to zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits on `[..., F]` data, pooling every timestep of every window.
    pub fn fit(windows: &Tensor) -> Result<Self> {
        let f = *windows
            .shape()
            .last()
            .ok_or_else(|| Error::dim("fit_normalizer", "scalar input"))?;
        let n = if f == 0 { 0 } else { windows.len() / f };
        if n < 2 {
            return Err(Error::Contract(format!(
                "normalizer needs at least 2 values per channel, got {n}"
            )));
        }
        let mut mean = vec![0.0; f];
        for row in windows.data().chunks_exact(f) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; f];
        for row in windows.data().chunks_exact(f) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, windows: &mut Tensor) -> Result<()> {
        let f = self.channels();
        if windows.shape().last() != Some(&f) {
            return Err(Error::dim(
                "apply_normalizer",
                format!("data {:?} for {f} fitted channels", windows.shape()),
            ));
        }
        for row in windows.data_mut().chunks_exact_mut(f) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Fits on the training split only and applies the result to both splits.
pub fn normalize_splits(train: &mut WindowedDataset, test: &mut WindowedDataset) -> Result<Normalizer> {
    if train.normalization.is_some() || test.normalization.is_some() {
        return Err(Error::Contract("dataset is already normalized".into()));
    }
    let stats = Normalizer::fit(&train.windows)?;
    stats.apply(&mut train.windows)?;
    stats.apply(&mut test.windows)?;
    train.normalization = Some(stats.clone());
    test.normalization = Some(stats.clone());
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std_oracle() {
        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let n = Normalizer::fit(&x).unwrap();
        assert_eq!(n.mean, vec![2.0]);
        assert!((n.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((n.std[0] - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let mut x = Tensor::new(vec![1, 3, 2], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let n = Normalizer::fit(&x).unwrap();
        assert_eq!(n.std[0], STD_FLOOR);
        n.apply(&mut x).unwrap();
        assert!(x.data().iter().step_by(2).all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_values() {
        let x = Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(Normalizer::fit(&x), Err(Error::Contract(_))));
    }

    #[test]
    fn channel_mismatch() {
        let n = Normalizer {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let mut x = Tensor::zeros(&[2, 2]);
        assert!(n.apply(&mut x).is_err());
    }
}
