//! Central-difference gradient oracle.
//!
//! Used by the test suites to verify every differentiable path against
//! numerical derivatives; deliberately independent of the recording graph so
//! the two can disagree when one of them is wrong.

use super::param::{GradStore, ParamSet};

/// Default perturbation for the central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares `analytic` against central differences of `loss` and returns the
/// maximum over all parameter entries of `|analytic - numeric| / (|numeric| + eps)`.
///
/// `loss` must be deterministic: it is re-evaluated twice per parameter entry
/// with the entry perturbed by `±step`.
pub fn finite_difference_check<F>(
    params: &mut ParamSet,
    analytic: &GradStore,
    step: f64,
    mut loss: F,
) -> f64
where
    F: FnMut(&ParamSet) -> f64,
{
    let eps = 1e-8;
    let mut max_err: f64 = 0.0;
    for pid in 0..params.len() {
        let id = super::param::ParamId(pid);
        let n = params.get(id).len();
        for i in 0..n {
            let orig = params.get(id).value[i];
            params.get_mut(id).value[i] = orig + step;
            let plus = loss(params);
            params.get_mut(id).value[i] = orig - step;
            let minus = loss(params);
            params.get_mut(id).value[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).map_or(0.0, |g| g[i]);
            let err = (a - numeric).abs() / (numeric.abs() + eps);
            max_err = max_err.max(err);
        }
    }
    max_err
}
