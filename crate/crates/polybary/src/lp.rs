//! Dense phase-1 simplex for tiny feasibility problems: does
//! `A theta = b, theta >= 0` have a solution? Used as the certification
//! oracle for hull membership and vertex extremality. Problem sizes here are
//! a handful of variables, so a textbook tableau with Bland's rule is plenty.

use nalgebra::{DMatrix, DVector};

const EPS: f64 = 1e-9;

/// Return a nonnegative solution of `A theta = b` if one exists.
pub fn nonneg_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<Vec<f64>> {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(b.len(), m);

    // Tableau: m constraint rows + cost row, columns = n original vars,
    // m artificials, rhs. Artificials start basic; minimize their sum.
    let cols = n + m + 1;
    let mut t = vec![vec![0.0f64; cols]; m + 1];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[(i, j)];
        }
        t[i][n + i] = 1.0;
        t[i][cols - 1] = sign * b[i];
    }
    // Cost row: sum of artificial rows, negated (we drive it to zero).
    for j in 0..cols {
        let mut s = 0.0;
        for i in 0..m {
            s += t[i][j];
        }
        t[m][j] = -s;
    }
    for i in n..n + m {
        t[m][i] = 0.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let scale = 1.0
        + a.iter().map(|v| v.abs()).fold(0.0, f64::max)
        + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for _ in 0..10_000 {
        // Bland's rule: first column with negative reduced cost.
        let enter = (0..cols - 1).find(|&j| t[m][j] < -EPS * scale);
        let enter = match enter {
            Some(j) => j,
            None => break,
        };
        // Ratio test, smallest basis index on ties.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > EPS {
                let ratio = t[i][cols - 1] / t[i][enter];
                if ratio < best - EPS * scale
                    || (ratio < best + EPS * scale
                        && leave.map_or(true, |l| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let leave = leave?; // unbounded cannot happen in phase 1
        pivot(&mut t, leave, enter);
        basis[leave] = enter;
    }

    // Feasible iff the artificial objective reaches zero.
    if -t[m][cols - 1] > 1e-8 * scale {
        return None;
    }
    let mut x = vec![0.0; n];
    for (i, &bi) in basis.iter().enumerate() {
        if bi < n {
            x[bi] = t[i][cols - 1].max(0.0);
        }
    }
    Some(x)
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize) {
    let cols = t[0].len();
    let pv = t[row][col];
    for j in 0..cols {
        t[row][j] /= pv;
    }
    for i in 0..t.len() {
        if i != row {
            let f = t[i][col];
            if f != 0.0 {
                for j in 0..cols {
                    t[i][j] -= f * t[row][j];
                }
            }
        }
    }
}

/// Is `point` in the convex hull of `generators`? Solves the feasibility LP
/// with the affine constraint row appended.
pub fn in_convex_hull(generators: &[DVector<f64>], point: &DVector<f64>) -> bool {
    let n = generators.len();
    if n == 0 {
        return false;
    }
    let d = point.len();
    let mut a = DMatrix::zeros(d + 1, n);
    let mut b = DVector::zeros(d + 1);
    for (k, g) in generators.iter().enumerate() {
        for i in 0..d {
            a[(i, k)] = g[i];
        }
        a[(d, k)] = 1.0;
    }
    for i in 0..d {
        b[i] = point[i];
    }
    b[d] = 1.0;
    nonneg_solution(&a, &b).is_some()
}
