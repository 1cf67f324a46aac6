//! Test-only oracles, kept independent of the implementation paths they
//! check. The Sturm bisection solver takes the tridiagonal form directly and
//! never touches the nalgebra eigensolver.

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `lambda`, by counting negative pivots of the LDLᵀ recursion.
pub fn sturm_count(diag: &[f64], offdiag: &[f64], lambda: f64) -> usize {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n);
    let mut count = 0;
    let mut q = diag[0] - lambda;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let q_safe = if q.abs() < 1e-300 { 1e-300f64.copysign(q) } else { q };
        q = (diag[i] - lambda) - offdiag[i - 1] * offdiag[i - 1] / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues of a symmetric tridiagonal matrix, ascending, by bisection
/// on the Sturm count.
pub fn sturm_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..n {
        let left = if i > 0 { offdiag[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { offdiag[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    lo -= 1.0;
    hi += 1.0;

    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if (b - a) < 2.0 * f64::EPSILON * mid.abs().max(1.0) {
                    break;
                }
                if sturm_count(diag, offdiag, mid) <= k {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_reproduces_two_site_spectrum() {
        // [[0, -1], [-1, 0]] has eigenvalues ±1.
        let vals = sturm_eigenvalues(&[0.0, 0.0], &[-1.0]);
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sturm_handles_degenerate_diagonal() {
        let vals = sturm_eigenvalues(&[2.0, 2.0, 2.0], &[0.0, 0.0]);
        for v in vals {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }
}
