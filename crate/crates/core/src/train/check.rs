//! Finite-difference verification of the full training objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::loss::LossTerms;
use crate::error::Result;
use crate::model::{ChannelPartition, DualPathNetwork, NetworkConfig};
use crate::tensor::{finite_diff_check, GradCheckReport, Mode, Tensor};

/// Checks every parameter gradient of the total loss (all three
/// classification losses plus the weighted contrastive and alignment terms)
/// on the batch `(x, labels)`, in training mode.
pub fn check_total_loss(
    net: &mut DualPathNetwork,
    x: &Tensor,
    labels: &[usize],
    temperature: f64,
    align_weight: f64,
    perturbation: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let contrastive = net.config().dual_path;
    let ids = net.params.ids();
    let (arch, params, stats) = net.parts_mut();
    // Batch statistics drive the output in training mode; the running
    // estimates are updated but never read, so a scratch copy suffices.
    let mut scratch = stats.clone();
    finite_diff_check(
        params,
        &ids,
        |store, tape| {
            let out = arch.forward(store, &mut scratch, tape, x, Mode::Train, contrastive)?;
            Ok(LossTerms::build(tape, &out, labels, contrastive, temperature, align_weight)?.total)
        },
        perturbation,
        tolerance,
    )
}

/// The miniature setting: one block or layer per stage, `N = 4`, `T = 16`,
/// `F = 4` split 2/2, `C = 3`, standard-normal inputs.
///
/// Every parameter, biases included, receives an independent `N(0, 0.3²)`
/// offset from its initial value. Zero-initialized biases would let a
/// projection row with all hidden units inactive come out exactly zero,
/// where the guarded norm is not differentiable.
pub fn miniature_problem(seed: u64) -> Result<(DualPathNetwork, Tensor, Vec<usize>)> {
    let partition = ChannelPartition::contiguous(2, 4)?;
    let mut net = DualPathNetwork::new(NetworkConfig::miniature(partition, 3), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in net.params.iter_mut() {
        for v in p.value.data_mut() {
            let offset: f64 = StandardNormal.sample(&mut rng);
            *v += 0.3 * offset;
        }
    }
    let x = Tensor::from_fn(&[4, 16, 4], |_| StandardNormal.sample(&mut rng));
    Ok((net, x, vec![0, 1, 2, 1]))
}
