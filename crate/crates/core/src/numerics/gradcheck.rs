//! Central finite-difference verification for gradients.
//!
//! Oracles run in f64. The closure rebuilds the full forward pass from a flat
//! parameter vector, so the check is independent of the tape's backward path.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Relative error with an absolute floor. Central differences at step ~1e-6
/// carry ~1e-9 of roundoff noise, so components whose true value is zero
/// need the floor to sit well above that noise; 1e-3 keeps the check
/// genuinely relative for any gradient of meaningful magnitude.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-3);
    (a - b).abs() / denom
}

/// Largest relative error between an analytic gradient and a finite-difference
/// oracle over the same components.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Check a scalar function's gradient against central differences.
/// Returns the max relative error, or an error string when it exceeds `tol`.
pub fn check<F, G>(mut f: F, grad: G, x: &[f64], h: f64, tol: f64) -> Result<f64, String>
where
    F: FnMut(&[f64]) -> f64,
    G: FnOnce(&[f64]) -> Vec<f64>,
{
    let analytic = grad(x);
    let numeric = finite_diff(&mut f, x, h);
    let err = max_rel_err(&analytic, &numeric);
    if err < tol {
        Ok(err)
    } else {
        Err(format!(
            "gradient check failed: max rel err {err:.3e} >= tol {tol:.1e}\nanalytic: {analytic:?}\nnumeric:  {numeric:?}"
        ))
    }
}
