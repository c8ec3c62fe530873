use dcdp::contrastive::{
    alignment_loss, contrastive_loss_value, cosine_similarity_matrix, multi_stage_mean, stage_contrastive_loss,
    SimilarityMatrix,
};
use dcdp::tensor::{Tape, Tensor};
use proptest::prelude::*;

/// Textbook evaluation: average of row-wise and column-wise InfoNCE.
fn naive_loss(s: &[Vec<f64>], tau: f64) -> f64 {
    let n = s.len();
    let mut total = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| (s[i][j] / tau).exp()).sum();
        let col: f64 = (0..n).map(|j| (s[j][i] / tau).exp()).sum();
        total += -((s[i][i] / tau).exp() / row).ln() - ((s[i][i] / tau).exp() / col).ln();
    }
    total / (2.0 * n as f64)
}

fn tensor(s: &[Vec<f64>]) -> Tensor {
    Tensor::new(vec![s.len(), s[0].len()], s.concat()).unwrap()
}

fn square(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), n))
}

#[test]
fn identity_similarity_example() {
    let s = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let l = contrastive_loss_value(&tensor(&s), 0.5).unwrap();
    assert!((l - 0.126_928_011_042_972_5).abs() < 1e-9, "{l}");
    assert!((l - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
}

#[test]
fn constant_similarity_gives_log_n() {
    let expected = [
        (2, 0.693_147_180_559_945_3),
        (4, 1.386_294_361_119_890_6),
        (8, 2.079_441_541_679_835_9),
    ];
    for (n, ln_n) in expected {
        for c in [-1.0, 0.0, 0.3, 1.0] {
            let s = vec![vec![c; n]; n];
            let l = contrastive_loss_value(&tensor(&s), 0.5).unwrap();
            assert!((l - ln_n).abs() < 1e-9, "N={n} c={c}: {l}");
        }
    }
}

#[test]
fn tape_and_direct_evaluation_agree() {
    let s = vec![vec![0.9, -0.2, 0.4], vec![0.1, 0.8, -0.7], vec![0.3, 0.3, 0.5]];
    let mut tape = Tape::new();
    let v = tape.constant(tensor(&s));
    let l = stage_contrastive_loss(&mut tape, v, 0.3).unwrap();
    let direct = contrastive_loss_value(&tensor(&s), 0.3).unwrap();
    assert!((tape.value(l).item() - direct).abs() < 1e-13);
    assert!((direct - naive_loss(&s, 0.3)).abs() < 1e-12);
}

#[test]
fn cosine_matrix_of_parallel_embeddings() {
    let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 2.0, 0.0, -3.0, 4.0]).unwrap();
    let b = a.map(|v| 2.5 * v);
    let s = SimilarityMatrix::from_embeddings(&a, &b, 0).unwrap();
    assert!((s.values.at2(0, 0) - 1.0).abs() < 1e-15);
    assert!((s.values.at2(1, 1) - 1.0).abs() < 1e-15);
    // <(1,2,2),(0,-3,4)> / (3 * 5)
    assert!((s.values.at2(0, 1) - 2.0 / 15.0).abs() < 1e-15);
}

#[test]
fn cosine_matrix_of_zero_row_is_finite() {
    let a = Tensor::new(vec![2, 2], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let mut tape = Tape::new();
    let va = tape.constant(a.clone());
    let vb = tape.constant(a);
    let s = cosine_similarity_matrix(&mut tape, va, vb).unwrap();
    assert!(tape.value(s).all_finite());
    assert_eq!(tape.value(s).at2(0, 0), 0.0);
}

#[test]
fn alignment_loss_ignores_scale() {
    let a = Tensor::new(vec![2, 2], vec![3.0, 4.0, 1.0, 0.0]).unwrap();
    let b = Tensor::new(vec![2, 2], vec![6.0, 8.0, 0.0, 2.0]).unwrap();
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a), tape.constant(b));
    let l = alignment_loss(&mut tape, va, vb).unwrap();
    // Rows normalize to (0.6, 0.8)/(0.6, 0.8) and (1, 0)/(0, 1): squared error 2 over 4 entries.
    assert!((tape.value(l).item() - 0.5).abs() < 1e-15);
}

#[test]
fn stage_mean() {
    assert_eq!(multi_stage_mean(&[1.0, 2.0, 3.0, 6.0]).unwrap(), 3.0);
    assert!(multi_stage_mean(&[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn loss_is_non_negative_and_matches_naive(s in square(8), tau in 0.05..5.0f64) {
        let l = contrastive_loss_value(&tensor(&s), tau).unwrap();
        prop_assert!(l >= 0.0);
        let naive = naive_loss(&s, tau);
        prop_assert!((l - naive).abs() <= 1e-9 * naive.abs().max(1.0), "{} vs {}", l, naive);
    }

    #[test]
    fn loss_is_transpose_symmetric(s in square(8), tau in 0.05..5.0f64) {
        let t: Vec<Vec<f64>> = (0..s.len()).map(|i| s.iter().map(|r| r[i]).collect()).collect();
        let a = contrastive_loss_value(&tensor(&s), tau).unwrap();
        let b = contrastive_loss_value(&tensor(&t), tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn loss_is_invariant_to_joint_permutation(s in square(6), seed in any::<u64>()) {
        let n = s.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| s[perm[i]][perm[j]]).collect()).collect();
        let a = contrastive_loss_value(&tensor(&s), 0.5).unwrap();
        let b = contrastive_loss_value(&tensor(&p), 0.5).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn high_temperature_approaches_log_n(s in square(8)) {
        let n = s.len() as f64;
        let l = contrastive_loss_value(&tensor(&s), 1e6).unwrap();
        prop_assert!((l - n.ln()).abs() < 1e-5);
    }
}
