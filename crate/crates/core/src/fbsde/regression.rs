//! Polynomial least-squares regression used by the backward recursion to
//! approximate conditional expectations given the current forward state.

use nalgebra::{DMatrix, DVector};

/// Multivariate polynomial basis of bounded total degree.
#[derive(Debug, Clone)]
pub struct PolyBasis {
    pub state_dim: usize,
    pub degree: usize,
    /// Exponent multi-index per basis function.
    pub exponents: Vec<Vec<usize>>,
}

impl PolyBasis {
    pub fn total_degree(state_dim: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        let mut current = vec![0usize; state_dim];
        gen_exponents(state_dim, degree, 0, degree, &mut current, &mut exponents);
        exponents.sort_by_key(|e| (e.iter().sum::<usize>(), e.clone()));
        Self {
            state_dim,
            degree,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (j, exps) in self.exponents.iter().enumerate() {
            let mut v = 1.0;
            for (i, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    v *= x[i];
                }
            }
            out[j] = v;
        }
    }
}

fn gen_exponents(
    dim: usize,
    degree: usize,
    coord: usize,
    remaining: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if coord == dim {
        out.push(current.clone());
        return;
    }
    for e in 0..=remaining {
        current[coord] = e;
        gen_exponents(dim, degree, coord + 1, remaining - e, current, out);
    }
    current[coord] = 0;
}

/// Result of one regression solve at a time step.
#[derive(Debug, Clone)]
pub struct Regression {
    /// Coefficients, one column per response.
    pub coefficients: DMatrix<f64>,
    /// Fitted values `Phi * coefficients` (rows follow the sample order).
    pub fitted: DMatrix<f64>,
    /// Retained singular directions after rank truncation.
    pub rank: usize,
    /// Whether rank truncation discarded basis directions.
    pub truncated: bool,
    /// R-squared per response column (1 for an exact fit, 0 when the
    /// response variance vanishes or nothing is explained).
    pub r_squared: Vec<f64>,
    /// Residual standard deviation per response column.
    pub residual_sd: Vec<f64>,
    /// Leverage `phi(x)' (Phi'Phi)^+ phi(x)` evaluator data: `Sigma^+ V'`.
    sigma_inv_vt: DMatrix<f64>,
}

impl Regression {
    /// Standard error of the fitted conditional mean at feature vector
    /// `phi` for response `col`.
    pub fn fitted_se(&self, phi: &DVector<f64>, col: usize) -> f64 {
        let proj = &self.sigma_inv_vt * phi;
        let leverage = proj.norm_squared();
        self.residual_sd[col] * leverage.sqrt()
    }
}

/// Least-squares fit of multiple responses on the design matrix, with
/// SVD-based automatic rank truncation.
pub fn fit(design: &DMatrix<f64>, responses: &DMatrix<f64>) -> Regression {
    let n = design.nrows();
    let m = design.ncols();
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * 1e-10 * (n.max(m) as f64).sqrt();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > tol)
        .count()
        .max(1);
    let truncated = rank < m;

    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    // Sigma^+ V' rows for retained directions; discarded directions
    // contribute nothing (coefficients projected onto the stable span).
    let mut sigma_inv_vt = DMatrix::zeros(rank, m);
    for k in 0..rank {
        let s = svd.singular_values[k];
        for j in 0..m {
            sigma_inv_vt[(k, j)] = vt[(k, j)] / s;
        }
    }
    let ut = u.columns(0, rank).transpose();
    let proj = &ut * responses; // rank x resp
    let coefficients = sigma_inv_vt.transpose() * &proj;
    let fitted = design * &coefficients;

    let resp_cols = responses.ncols();
    let mut r_squared = Vec::with_capacity(resp_cols);
    let mut residual_sd = Vec::with_capacity(resp_cols);
    for c in 0..resp_cols {
        let col = responses.column(c);
        let mean = col.mean();
        let mut sst = 0.0;
        let mut ssr = 0.0;
        for i in 0..n {
            let d = col[i] - mean;
            sst += d * d;
            let r = col[i] - fitted[(i, c)];
            ssr += r * r;
        }
        r_squared.push(if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 });
        residual_sd.push((ssr / n.max(2) as f64).sqrt());
    }

    Regression {
        coefficients,
        fitted,
        rank,
        truncated,
        r_squared,
        residual_sd,
        sigma_inv_vt,
    }
}

/// Per-step regression metadata kept with a solution: the value-field
/// coefficients on the polynomial basis plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct RegressionSnapshot {
    pub step: usize,
    pub basis: PolyBasis,
    /// Coefficients of the fitted conditional-expectation field of the
    /// backward value (`basis.len() x q`).
    pub value_coefficients: DMatrix<f64>,
    pub r_squared: Vec<f64>,
    pub truncated: bool,
}

impl RegressionSnapshot {
    /// Evaluate the fitted value field at a state.
    pub fn eval_value(&self, x: &[f64], out: &mut [f64]) {
        let mut phi = vec![0.0; self.basis.len()];
        self.basis.eval(x, &mut phi);
        let q = self.value_coefficients.ncols();
        for l in 0..q {
            let mut acc = 0.0;
            for j in 0..self.basis.len() {
                acc += phi[j] * self.value_coefficients[(j, l)];
            }
            out[l] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_counts_match_total_degree() {
        let b = PolyBasis::total_degree(2, 3);
        // C(2+3, 3) = 10 monomials.
        assert_eq!(b.len(), 10);
        let mut out = vec![0.0; b.len()];
        b.eval(&[2.0, 3.0], &mut out);
        assert!(out.contains(&1.0)); // constant term
        assert!(out.contains(&8.0)); // x^3
        assert!(out.contains(&12.0)); // x^2 y or x y depending on order
    }

    #[test]
    fn exact_fit_of_polynomial_response() {
        let basis = PolyBasis::total_degree(1, 2);
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + i as f64 / 20.0).collect();
        let mut design = DMatrix::zeros(xs.len(), basis.len());
        for (i, x) in xs.iter().enumerate() {
            let mut row = vec![0.0; basis.len()];
            basis.eval(&[*x], &mut row);
            for (j, v) in row.iter().enumerate() {
                design[(i, j)] = *v;
            }
        }
        let resp = DMatrix::from_fn(xs.len(), 1, |i, _| 2.0 + 3.0 * xs[i] - xs[i] * xs[i]);
        let reg = fit(&design, &resp);
        assert!(!reg.truncated);
        assert_relative_eq!(reg.r_squared[0], 1.0, max_relative = 1e-10);
        for i in 0..xs.len() {
            assert_relative_eq!(reg.fitted[(i, 0)], resp[(i, 0)], epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_design_truncates_to_mean() {
        // All samples identical: only the constant direction survives and
        // the fit collapses to the response mean.
        let basis = PolyBasis::total_degree(1, 3);
        let n = 25;
        let mut design = DMatrix::zeros(n, basis.len());
        for i in 0..n {
            let mut row = vec![0.0; basis.len()];
            basis.eval(&[2.0], &mut row);
            for (j, v) in row.iter().enumerate() {
                design[(i, j)] = *v;
            }
        }
        let resp = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let reg = fit(&design, &resp);
        assert!(reg.truncated);
        let mean = (n as f64 - 1.0) / 2.0;
        for i in 0..n {
            assert_relative_eq!(reg.fitted[(i, 0)], mean, max_relative = 1e-10);
        }
    }
}
