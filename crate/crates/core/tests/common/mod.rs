//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

/// Gaussian elimination with partial pivoting on a dense copy of `a`.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &r)| row.iter().copied().chain([r]).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let (upper, lower) = m.split_at_mut(row);
            for (t, s) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *t -= f * s;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - tail) / m[row][row];
    }
    x
}

/// Cubic coefficients `[a, b, c, d]` of `a t³ + b t² + c t + d` through
/// four samples, from the Vandermonde system.
pub fn vandermonde_cubic(ts: &[f64; 4], vs: &[f64; 4]) -> [f64; 4] {
    let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t * t * t, t * t, t, 1.0]).collect();
    let c = dense_solve(&rows, vs);
    [c[0], c[1], c[2], c[3]]
}
