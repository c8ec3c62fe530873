//! Train-time amplitude scaling and additive jitter.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::AugmentConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scales each window of `[M, W, F]` by one factor drawn from
/// `U[scale_min, scale_max]`, then adds `N(0, jitter_std²)` to every value.
///
/// A degenerate scale range or zero jitter skips the corresponding draw, so
/// `scale_min = scale_max = 1, jitter_std = 0` leaves the data bit-identical.
pub fn data_augment<R: Rng>(windows: &mut Tensor, cfg: &AugmentConfig, rng: &mut R) -> Result<()> {
    if windows.ndim() != 3 {
        return Err(Error::dim("data_augment", format!("expected [M, W, F], got {:?}", windows.shape())));
    }
    let per_window = windows.dim(1) * windows.dim(2);
    if per_window == 0 {
        return Ok(());
    }
    let jitter = Normal::new(0.0, cfg.jitter_std).map_err(|e| Error::Config(e.to_string()))?;
    for window in windows.data_mut().chunks_exact_mut(per_window) {
        if cfg.scale_min != cfg.scale_max {
            let s = rng.random_range(cfg.scale_min..=cfg.scale_max);
            window.iter_mut().for_each(|v| *v *= s);
        } else if cfg.scale_min != 1.0 {
            window.iter_mut().for_each(|v| *v *= cfg.scale_min);
        }
        if cfg.jitter_std > 0.0 {
            for v in window.iter_mut() {
                *v += jitter.sample(rng);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_config() {
        let x = Tensor::from_fn(&[3, 4, 2], |i| (i as f64).sin());
        let mut y = x.clone();
        let cfg = AugmentConfig {
            scale_min: 1.0,
            scale_max: 1.0,
            jitter_std: 0.0,
        };
        data_augment(&mut y, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn scale_stays_in_range() {
        let mut x = Tensor::ones(&[50, 2, 1]);
        let cfg = AugmentConfig {
            jitter_std: 0.0,
            ..Default::default()
        };
        data_augment(&mut x, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for w in x.data().chunks_exact(2) {
            assert_eq!(w[0], w[1]);
            assert!((0.9..=1.1).contains(&w[0]));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let x = Tensor::from_fn(&[4, 8, 3], |i| i as f64 * 0.1);
        let run = |seed| {
            let mut y = x.clone();
            data_augment(&mut y, &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            y
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
