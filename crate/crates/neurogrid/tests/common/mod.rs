//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Steady state of a resistive network from tie list (0-based buses) by nodal analysis.
pub fn nodal_oracle(
    n: usize,
    ties: &[(usize, usize, f64)],
    v_ref: f64,
    droops: &[f64],
    loads: &[f64],
    online: &[bool],
) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for &(i, j, r) in ties {
        let g = 1.0 / r;
        a[i][i] += g;
        a[j][j] += g;
        a[i][j] -= g;
        a[j][i] -= g;
    }
    for k in 0..n {
        b[k] = -loads[k];
        if online[k] {
            a[k][k] += 1.0 / droops[k];
            b[k] += v_ref / droops[k];
        }
    }
    let v = gauss_solve(a, b);
    let i = (0..n)
        .map(|k| if online[k] { (v_ref - v[k]) / droops[k] } else { 0.0 })
        .collect();
    (v, i)
}

/// Dominant eigenvector of a symmetric PSD matrix by power iteration.
pub fn power_iteration(c: &[Vec<f64>], iters: usize) -> Vec<f64> {
    let n = c.len();
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * k as f64).collect();
    for _ in 0..iters {
        let mut w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| c[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= norm);
        v = w;
    }
    v
}
