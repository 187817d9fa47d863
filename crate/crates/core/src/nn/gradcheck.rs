/// Central-difference gradient of `f` at `params`.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let plus = f(&x);
            x[i] = orig - h;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub pass: bool,
}

/// Denominator floor so that near-zero gradients are compared absolutely.
const REL_FLOOR: f64 = 1e-5;

/// Compares `analytic` against central differences of `f`; the relative error
/// of one coordinate is `|a - n| / max(|a|, |n|, 1e-5)`.
pub fn finite_diff_check(
    f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let numeric = finite_diff_grad(f, params, h);
    let mut max_rel_err = 0.0;
    let mut worst_index = None;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        if err > max_rel_err || err.is_nan() {
            max_rel_err = err;
            worst_index = Some(i);
        }
    }
    GradCheckReport {
        max_rel_err,
        worst_index,
        checked: params.len(),
        pass: max_rel_err <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        x[0] * x[0] + 3.0 * x[0] * x[1] - 0.5 * x[1] * x[1]
    }

    #[test]
    fn exact_gradient_passes() {
        let p = [1.3, -0.4];
        let g = [2.0 * p[0] + 3.0 * p[1], 3.0 * p[0] - p[1]];
        let r = finite_diff_check(quadratic, &p, &g, 1e-5, 1e-6);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn doubled_gradient_fails() {
        let p = [1.3, -0.4];
        let g = [2.0 * (2.0 * p[0] + 3.0 * p[1]), 2.0 * (3.0 * p[0] - p[1])];
        let r = finite_diff_check(quadratic, &p, &g, 1e-5, 1e-4);
        assert!(!r.pass);
        assert!(r.max_rel_err > 0.4);
    }
}
