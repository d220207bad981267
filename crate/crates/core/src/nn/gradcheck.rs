use super::params::{Gradients, ParamStore};

/// Lower bound on the denominator of the relative error, so coordinates
/// whose true gradient is zero are compared on an absolute scale.
pub const DEFAULT_REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients with central differences over every
/// coordinate of `store`.
///
/// `f(store, Some(grads))` must return the loss and add its gradient into
/// `grads`; `f(store, None)` only evaluates. Any sampling inside `f` must use
/// frozen noise.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> GradCheckReport
where
    F: FnMut(&ParamStore, Option<&mut Gradients>) -> f64,
{
    grad_check_with(store, eps, DEFAULT_REL_FLOOR, f)
}

/// [`grad_check`] with an explicit relative-error floor:
/// `|a − n| / max(|a|, |n|, floor)`.
pub fn grad_check_with<F>(store: &mut ParamStore, eps: f64, floor: f64, mut f: F) -> GradCheckReport
where
    F: FnMut(&ParamStore, Option<&mut Gradients>) -> f64,
{
    let mut grads = store.gradients();
    f(store, Some(&mut grads));
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.value(id).len();
        for i in 0..len {
            let orig = flat_get(store, id, i);
            flat_set(store, id, i, orig + eps);
            let up = f(store, None);
            flat_set(store, id, i, orig - eps);
            let down = f(store, None);
            flat_set(store, id, i, orig);
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).as_slice().expect("contiguous gradient")[i];
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            let rel = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((store.name(id).to_string(), i));
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    report
}

fn flat_get(store: &ParamStore, id: super::ParamId, i: usize) -> f64 {
    store.value(id).as_slice().expect("contiguous parameter")[i]
}

fn flat_set(store: &mut ParamStore, id: super::ParamId, i: usize, v: f64) {
    store.param_mut(id).value.as_slice_mut().expect("contiguous parameter")[i] = v;
}
