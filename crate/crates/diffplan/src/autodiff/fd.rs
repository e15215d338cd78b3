//! Central finite differences, the independent oracle for every analytic
//! gradient in this crate.

/// d f / d x[i] by central differences with step `h`.
pub(crate) fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let hi = f(&probe);
        probe[i] = x[i] - h;
        let lo = f(&probe);
        probe[i] = x[i];
        out.push((hi - lo) / (2.0 * h));
    }
    out
}

/// `|a - b| <= tol * max(1, |a|, |b|)` elementwise.
pub(crate) fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = central_diff(f, &[2.0, 5.0], 1e-5);
        assert!(close(&g, &[4.0, 3.0], 1e-8));
    }
}
