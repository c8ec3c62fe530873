use dcdp::cgm::{
    apply_modulation, contribution_ratios, modulation_coefficient, modulation_coefficients, AdamWState,
    MomentumState, ModulationState,
};
use dcdp::tensor::{ParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// 1 - tanh(x) to 40 significant digits.
const ONE_MINUS_TANH_0_9: f64 = 0.283_702_129_800_975_579_188_556_216_941_905_136_825_1;
const ONE_MINUS_TANH_0_45: f64 = 0.578_100_994_749_992_073_073_803_526_399_336_172_977_1;

#[test]
fn coefficients_match_high_precision_values() {
    assert!((modulation_coefficient(2.0, 0.9) - ONE_MINUS_TANH_0_9).abs() < 1e-12);
    assert!((modulation_coefficient(1.5, 0.9) - ONE_MINUS_TANH_0_45).abs() < 1e-12);
    assert!((modulation_coefficient(1.9, 0.5) - ONE_MINUS_TANH_0_45).abs() < 1e-12);
    assert_eq!(modulation_coefficient(1.0, 0.9), 1.0);
    assert_eq!(modulation_coefficient(0.3, 0.9), 1.0);
}

#[test]
fn state_from_confidences() {
    let s = ModulationState::from_confidences(8.0, 4.0, 0.9, 1e-8);
    assert!((s.r_res - 2.0).abs() < 1e-8);
    assert!((s.m_res - ONE_MINUS_TANH_0_9).abs() < 1e-8);
    assert_eq!(s.m_dense, 1.0);
}

#[test]
fn extreme_ratio_stays_positive() {
    let m = modulation_coefficient(1e300, 1e10);
    assert!(m > 0.0 && m <= 1.0);
    let m = modulation_coefficient(f64::MAX, f64::MAX);
    assert!(m > 0.0);
}

#[test]
fn modulation_scales_only_its_group() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::zeros(&[2]));
    let b = store.add("b", Tensor::zeros(&[2]));
    let c = store.add("c", Tensor::zeros(&[1]));
    for p in store.iter_mut() {
        p.grad_mut().iter_mut().for_each(|g| *g = 2.0);
    }
    apply_modulation(&mut store, &[a], &[b], 0.25, 1.0);
    assert_eq!(store.grad(a).data(), &[0.5, 0.5]);
    assert_eq!(store.grad(b).data(), &[2.0, 2.0]);
    assert_eq!(store.grad(c).data(), &[2.0]);
}

fn confidences() -> impl Strategy<Value = (f64, f64)> {
    (0.0..64.0f64, 0.0..64.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn at_most_one_branch_is_suppressed((s_res, s_dense) in confidences(), alpha in 0.0..10.0f64) {
        let (r_res, r_dense) = contribution_ratios(s_res, s_dense, 1e-8);
        let (m_res, m_dense) = modulation_coefficients(r_res, r_dense, alpha);
        prop_assert!(m_res == 1.0 || m_dense == 1.0);
        prop_assert!(m_res > 0.0 && m_res <= 1.0);
        prop_assert!(m_dense > 0.0 && m_dense <= 1.0);
    }

    #[test]
    fn coefficient_is_in_unit_interval(r in 0.0..1e6f64, alpha in 0.0..100.0f64) {
        let m = modulation_coefficient(r, alpha);
        prop_assert!(m > 0.0 && m <= 1.0);
    }

    #[test]
    fn coefficient_is_monotone(r in 0.0..20.0f64, dr in 0.0..5.0f64, alpha in 0.0..5.0f64, da in 0.0..5.0f64) {
        prop_assert!(modulation_coefficient(r + dr, alpha) <= modulation_coefficient(r, alpha));
        prop_assert!(modulation_coefficient(r, alpha + da) <= modulation_coefficient(r, alpha));
    }

    #[test]
    fn coefficient_is_continuous_at_one(alpha in 0.0..10.0f64, k in 1..12i32) {
        let delta = 10f64.powi(-k);
        let above = modulation_coefficient(1.0 + delta, alpha);
        prop_assert!((1.0 - above) <= alpha * delta * 1.000_001 + 1e-15);
        prop_assert_eq!(modulation_coefficient(1.0 - delta, alpha), 1.0);
    }

    #[test]
    fn zero_alpha_is_identity(r in 0.0..1e6f64) {
        prop_assert_eq!(modulation_coefficient(r, 0.0), 1.0);
    }
}

#[test]
fn momentum_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &beta in &[0.0, 0.5, 0.9, 0.99] {
        let (lr, theta0) = (0.05, 0.7);
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(theta0));
        let mut opt = MomentumState::new(beta, lr).unwrap();
        let mut grads = Vec::new();
        for t in 1..=100 {
            let g: f64 = rng.random_range(-3.0..3.0);
            grads.push(g);
            store.get_mut(id).grad_mut()[0] = g;
            opt.step(&mut store);
            // m_s = (1 - β) Σ_{k ≤ s} β^{s-k} g_k;  θ_t = θ_0 - η Σ_{s ≤ t} m_s.
            let m = |s: usize| (1.0 - beta) * (1..=s).map(|k| beta.powi((s - k) as i32) * grads[k - 1]).sum::<f64>();
            let expected = theta0 - lr * (1..=t).map(m).sum::<f64>();
            let got = store.value(id).item();
            assert!((got - expected).abs() < 1e-10, "β={beta} t={t}: {got} vs {expected}");
            assert!((opt.velocity()[0].item() - m(t)).abs() < 1e-12);
            assert_eq!(store.grad(id).item(), 0.0);
        }
    }
}

#[test]
fn momentum_without_beta_is_gradient_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::from_fn(&[3, 4], |i| i as f64 * 0.1 - 0.5));
    let mut reference = store.value(id).clone();
    let mut opt = MomentumState::new(0.0, 0.013).unwrap();
    for _ in 0..100 {
        let g: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        store.get_mut(id).grad_mut().copy_from_slice(&g);
        opt.step(&mut store);
        for (r, gi) in reference.data_mut().iter_mut().zip(&g) {
            *r -= 0.013 * gi;
        }
        assert_eq!(store.value(id).data(), reference.data());
    }
}

#[test]
fn adamw_first_step_and_decay() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::scalar(2.0));
    let mut opt = AdamWState::new(0.1, 0.9, 0.999, 1e-8, 0.01).unwrap();
    store.get_mut(id).grad_mut()[0] = -4.0;
    opt.step(&mut store);
    // Bias-corrected first step moves by lr * sign(g) (up to eps); decay shrinks θ by lr·λ·θ.
    let expected = 2.0 * (1.0 - 0.1 * 0.01) + 0.1 * 4.0 / (4.0 + 1e-8);
    assert!((store.value(id).item() - expected).abs() < 1e-12);
    assert_eq!(opt.steps_taken(), 1);
}

#[test]
fn invalid_optimizer_settings_rejected() {
    assert!(MomentumState::new(1.0, 0.1).is_err());
    assert!(MomentumState::new(0.5, 0.0).is_err());
    assert!(AdamWState::new(0.1, 1.0, 0.999, 1e-8, 0.0).is_err());
}
