//! Central finite-difference oracle for tape gradients.

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Denominators of the relative error never drop below this value, so
/// gradients that are zero up to rounding compare by absolute difference.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub id: ParamId,
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the element with the largest relative error.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub perturbation: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.flagged)
    }

    pub fn passed(&self) -> bool {
        self.flagged().next().is_none()
    }

    pub fn checked_elements(&self, store: &ParamStore) -> usize {
        self.params.iter().map(|p| store.value(p.id).len()).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares tape gradients of the scalar built by `loss` against central
/// differences `(L(θ+h) − L(θ−h)) / 2h`, element by element, for every
/// parameter in `ids`.
///
/// `loss` must be deterministic: it is evaluated once with a fresh tape for
/// the analytic pass and twice per checked element. Gradients in `store`
/// are zeroed on return.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    mut loss: F,
    perturbation: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let out = loss(store, &mut tape)?;
    tape.backward(out, store)?;
    let analytic: Vec<Tensor> = ids.iter().map(|&id| store.grad(id).clone()).collect();
    store.zero_grads();
    check_against(store, ids, &analytic, loss, perturbation, tolerance)
}

/// Same as [`finite_diff_check`] but with caller-supplied analytic gradients,
/// one tensor per entry of `ids`.
pub fn check_against<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    analytic: &[Tensor],
    mut loss: F,
    perturbation: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    assert_eq!(ids.len(), analytic.len());
    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let v = loss(store, &mut tape)?;
        Ok(tape.value(v).item())
    };

    let mut params = Vec::with_capacity(ids.len());
    for (&id, grad) in ids.iter().zip(analytic) {
        let mut check = ParamCheck {
            id,
            name: store.get(id).name().to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
            flagged: false,
        };
        for i in 0..store.value(id).len() {
            let original = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = original + perturbation;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[i] = original - perturbation;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * perturbation);
            let a = grad.data()[i];
            let rel = relative_error(a, numeric);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            if rel > check.max_rel_error || i == 0 {
                check.max_rel_error = check.max_rel_error.max(rel);
                check.worst_index = i;
                check.analytic_at_worst = a;
                check.numeric_at_worst = numeric;
            }
        }
        check.flagged = check.max_rel_error >= tolerance;
        params.push(check);
    }
    Ok(GradCheckReport {
        perturbation,
        tolerance,
        params,
    })
}
