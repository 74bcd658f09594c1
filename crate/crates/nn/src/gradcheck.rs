//! Central finite-difference comparison against tape gradients.

use crate::params::{ParamId, ParamStore};
use crate::tape::Gradients;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Denominator floor, so gradients that are zero on both sides compare as equal.
    pub floor: f64,
    /// Coordinates sampled per tensor (evenly strided).
    pub max_per_param: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-4,
            floor: 1e-6,
            max_per_param: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose probes crossed a ReLU kink and were not compared.
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` with `(L(w+ε) − L(w−ε)) / 2ε` for sampled coordinates
/// of every parameter in `params`. The store is restored afterwards.
pub fn grad_check<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    analytic: &Gradients,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    grad_check_piecewise(store, params, analytic, |s| (loss(s), 0), cfg)
}

/// Like [`grad_check`] for piecewise-smooth losses: `loss` also returns an
/// activation fingerprint (see `Tape::activation_pattern`), and coordinates
/// whose three probes do not share one fingerprint are skipped.
pub fn grad_check_piecewise<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    analytic: &Gradients,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> (f64, u64),
{
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: None,
        passed: true,
    };
    let (_, centre) = loss(store);
    for &id in params {
        let (n, cols) = (store.value(id).len(), store.value(id).ncols());
        let stride = n.div_ceil(cfg.max_per_param).max(1);
        for k in (0..n).step_by(stride) {
            let at = [k / cols, k % cols];
            let orig = store.value(id)[at];
            store.value_mut(id)[at] = orig + cfg.eps;
            let (up, p_up) = loss(store);
            store.value_mut(id)[at] = orig - cfg.eps;
            let (down, p_down) = loss(store);
            store.value_mut(id)[at] = orig;
            if p_up != centre || p_down != centre {
                report.skipped += 1;
                continue;
            }

            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = analytic.get(id).map(|g| g[at]).unwrap_or(0.0);
            let err = relative_error(a, numeric, cfg.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    report.passed = report.max_rel_err <= cfg.tol;
    report
}
