//! Small dense least-squares helpers for the ARIMA and unit-root fits.

/// Ordinary least-squares fit.
#[derive(Debug, Clone)]
pub(crate) struct OlsFit {
    pub coef: Vec<f64>,
    pub sse: f64,
    /// Diagonal of (XᵀX)⁻¹, for standard errors.
    pub inv_diag: Vec<f64>,
}

/// Solves `a · x = b` in place by Gaussian elimination with partial
/// pivoting. Returns `None` when the matrix is numerically singular.
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Least squares of `y` on the columns of `design` (one row per
/// observation).
pub(crate) fn ols(design: &[Vec<f64>], y: &[f64]) -> Option<OlsFit> {
    let n = y.len();
    let k = design.first().map_or(0, Vec::len);
    if k == 0 || n < k {
        return None;
    }
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..k {
            xty[i] += row[i] * yi;
            for j in i..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }
    let coef = solve(xtx.clone(), xty)?;
    let mut inv_diag = Vec::with_capacity(k);
    for i in 0..k {
        let mut e = vec![0.0; k];
        e[i] = 1.0;
        inv_diag.push(solve(xtx.clone(), e)?[i]);
    }
    let sse = design
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    Some(OlsFit { coef, sse, inv_diag })
}
