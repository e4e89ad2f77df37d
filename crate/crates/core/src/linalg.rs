//! Tridiagonal solver used by the elastic band.

/// Solves `A x = rhs` for a tridiagonal `A` given by its three diagonals
/// using the Thomas algorithm. `lower[i]` multiplies `x[i]` in row `i + 1`,
/// `upper[i]` multiplies `x[i + 1]` in row `i`.
///
/// No pivoting is done, so `A` must be diagonally dominant or symmetric
/// positive definite for the elimination to be stable.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(rhs.len(), n, "rhs length");
    assert!(n == 0 || (lower.len() == n - 1 && upper.len() == n - 1), "off-diagonal length");
    if n == 0 {
        return Vec::new();
    }

    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / m;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m;
    }

    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_equation() {
        assert_eq!(solve_tridiagonal(&[], &[2.0], &[], &[1.0]), vec![0.5]);
    }

    #[test]
    fn small_system() {
        // [[2,-1,0],[-1,2,-1],[0,-1,2]] x = (0,1,0) -> (0.5, 1, 0.5)
        let x = solve_tridiagonal(&[-1.0, -1.0], &[2.0; 3], &[-1.0, -1.0], &[0.0, 1.0, 0.0]);
        for (a, b) in x.iter().zip([0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty() {
        assert!(solve_tridiagonal(&[], &[], &[], &[]).is_empty());
    }
}
