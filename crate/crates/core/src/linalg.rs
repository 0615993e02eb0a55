//! Small dense linear-algebra helpers shared across modules: submatrix
//! extraction, entrywise norms, a phase-1 simplex for strict-positivity
//! LP feasibility, and a Collatz-Wielandt power iteration for spectral
//! radii of nonnegative matrices.

use nalgebra::{DMatrix, DVector};

/// Largest absolute value over all entries (the norm used throughout the
/// weighted-norm diagnostics).
pub fn max_abs_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute component of a vector.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Induced infinity norm (max absolute row sum).
pub fn row_sum_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

/// Extract the square submatrix with the given row and column index sets.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Principal submatrix selected by `idx` (same rows and columns).
pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    submatrix(m, idx, idx)
}

/// Iterate over the nonempty subsets of `{0..n}` as index vectors,
/// ordered by bitmask value.
pub fn nonempty_subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    assert!(n < usize::BITS as usize);
    (1usize..(1 << n)).map(move |mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
}

/// Strict lexicographic comparison with tolerance: returns true when `a`
/// precedes `b`, treating components within `tol` as equal.
pub fn lex_less(a: &[f64], b: &[f64], tol: f64) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > tol {
            return x < y;
        }
    }
    false
}

/// Feasibility of `{x : x >= eps, M x >= eps}` decided by a phase-1
/// simplex with Bland's rule; returns a strict witness on success.
///
/// The margin `eps` turns the open condition `x > 0, Mx > 0` into a
/// closed LP with zero objective. Scale invariance of the open cone makes
/// the margin harmless: any strictly feasible ray can be scaled until it
/// clears `eps`.
pub fn positive_feasible(m: &DMatrix<f64>, eps: f64) -> Option<DVector<f64>> {
    let n = m.ncols();
    let rows = m.nrows();
    // Substitute w = x - eps*1 >= 0; the face constraints become
    // M w >= eps*(1 - M 1).
    let ones = DVector::from_element(n, 1.0);
    let b = DVector::from_element(rows, eps) - eps * (m * &ones);
    let w = simplex_feasible_ge(m, &b)?;
    let x = w + DVector::from_element(n, eps);
    let mx = m * &x;
    // Guard against tolerance-level false positives from the tableau.
    if x.iter().all(|v| *v > 0.0) && mx.iter().all(|v| *v > 0.0) {
        Some(x)
    } else {
        None
    }
}

/// Phase-1 simplex deciding feasibility of `{w >= 0 : A w >= b}`.
/// Returns a feasible point when one exists.
fn simplex_feasible_ge(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    const PIVOT_TOL: f64 = 1e-11;
    let m = a.nrows();
    let n = a.ncols();

    // Equality form: A w - s = b with surplus s >= 0. Rows with negative
    // right-hand side are negated so b >= 0, then each row gets either a
    // reusable slack (coefficient +1 after negation) or an artificial.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    for i in 0..m {
        let mut r: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
        let mut surplus = vec![0.0; m];
        surplus[i] = -1.0;
        let mut bi = b[i];
        if bi < 0.0 {
            for v in r.iter_mut() {
                *v = -*v;
            }
            surplus[i] = 1.0;
            bi = -bi;
        }
        r.extend_from_slice(&surplus);
        rows.push(r);
        rhs.push(bi);
    }

    // Columns: w (n), surplus (m), artificials appended per row that
    // needs one (surplus coefficient -1 cannot start basic).
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut n_art = 0;
    for i in 0..m {
        if rows[i][n + i] > 0.5 {
            basis.push(n + i);
        } else {
            basis.push(usize::MAX); // placeholder, artificial added below
            n_art += 1;
        }
    }
    let ncols = n + m + n_art;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut art_seen = 0;
    for i in 0..m {
        let mut r = rows[i].clone();
        r.resize(ncols, 0.0);
        if basis[i] == usize::MAX {
            let col = n + m + art_seen;
            r[col] = 1.0;
            basis[i] = col;
            art_seen += 1;
        }
        tab.push(r);
    }

    // Phase-1 objective: minimize the sum of artificial variables.
    let cost = |j: usize| if j >= n + m { 1.0 } else { 0.0 };
    let mut obj: Vec<f64> = (0..ncols)
        .map(|j| cost(j) - (0..m).map(|i| cost(basis[i]) * tab[i][j]).sum::<f64>())
        .collect();
    let mut obj_val: f64 = (0..m).map(|i| cost(basis[i]) * rhs[i]).sum();

    let max_pivots = 50 * (ncols + m) * (ncols + m);
    for _ in 0..max_pivots {
        // Bland's rule: smallest-index column with negative reduced cost.
        let Some(enter) = (0..ncols).find(|&j| obj[j] < -PIVOT_TOL) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let t = tab[i][enter];
            if t > PIVOT_TOL {
                let ratio = rhs[i] / t;
                if ratio < best - PIVOT_TOL
                    || (ratio < best + PIVOT_TOL
                        && leave.is_some_and(|l| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let leave = leave?; // unbounded cannot happen in phase 1
        let piv = tab[leave][enter];
        for v in tab[leave].iter_mut() {
            *v /= piv;
        }
        rhs[leave] /= piv;
        for i in 0..m {
            if i != leave {
                let f = tab[i][enter];
                if f != 0.0 {
                    for j in 0..ncols {
                        tab[i][j] -= f * tab[leave][j];
                    }
                    rhs[i] -= f * rhs[leave];
                }
            }
        }
        let f = obj[enter];
        for j in 0..ncols {
            obj[j] -= f * tab[leave][j];
        }
        obj_val += f * rhs[leave];
        basis[leave] = enter;
    }

    if obj_val.abs() > 1e-9 {
        return None;
    }
    let mut w = DVector::zeros(n);
    for i in 0..m {
        if basis[i] < n {
            w[basis[i]] = rhs[i].max(0.0);
        }
    }
    Some(w)
}

/// Spectral radius of a (componentwise) nonnegative matrix by power
/// iteration with Collatz-Wielandt bounds.
///
/// Iterates on `a + I` so periodic structure cannot stall convergence and
/// subtracts the shift at the end. Stops when the enclosing bounds agree
/// to `rel_tol` or when the decision bound callback is satisfied.
pub fn spectral_radius_nonneg(a: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "spectral radius needs a square matrix");
    if n == 0 {
        return 0.0;
    }
    let shifted = a + DMatrix::<f64>::identity(n, n);
    let mut x = DVector::from_element(n, 1.0);
    let mut lower = 0.0_f64;
    let mut upper = f64::INFINITY;
    for _ in 0..max_iter {
        let y = &shifted * &x;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lower = lower.max(lo);
        upper = upper.min(hi);
        if upper - lower <= rel_tol * upper.max(1.0) {
            break;
        }
        let norm = y.amax();
        x = y / norm;
    }
    (0.5 * (lower + upper) - 1.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn feasibility_identity() {
        let m = DMatrix::<f64>::identity(3, 3);
        let x = positive_feasible(&m, 1e-8).expect("identity is an S-matrix");
        assert!(x.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn feasibility_negative_scalar() {
        let m = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(positive_feasible(&m, 1e-8).is_none());
    }

    #[test]
    fn feasibility_needs_pivoting() {
        // x1 - 2 x2 > 0 and -2 x1 + x2 > 0 sum to -(x1+x2) > 0: impossible.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert!(positive_feasible(&m, 1e-8).is_none());
        // Flipping one off-diagonal makes it feasible.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0]);
        let x = positive_feasible(&m, 1e-8).expect("feasible");
        let mx = &m * &x;
        assert!(mx.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn spectral_radius_matches_known_values() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_relative_eq!(spectral_radius_nonneg(&z, 1e-10, 10_000), 0.0);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_relative_eq!(
            spectral_radius_nonneg(&swap, 1e-10, 10_000),
            1.0,
            max_relative = 1e-9
        );
        let tri = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        let rho = spectral_radius_nonneg(&tri, 1e-10, 200_000);
        assert!(rho < 1e-4, "nilpotent spectral radius ~0, got {rho}");
    }

    #[test]
    fn lex_order_with_tolerance() {
        assert!(lex_less(&[1.0, 2.0], &[1.0 + 1e-12, 3.0], 1e-9));
        assert!(!lex_less(&[1.0, 3.0], &[1.0, 3.0], 1e-9));
    }
}
