//! Gaussian quadrature rules built by the Golub-Welsch eigenvalue method
//! on the Jacobi recurrence matrix.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], moment0: f64) -> QuadratureRule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
    }
    for i in 0..n - 1 {
        j[(i, i + 1)] = offdiag[i];
        j[(i + 1, i)] = offdiag[i];
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let first = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], moment0 * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on `[-1, 1]` (weight 1).
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &offdiag, 2.0)
}

/// Gauss-Laguerre rule for the weight `exp(-s)` on `[0, inf)`.
pub fn gauss_laguerre(n: usize) -> QuadratureRule {
    assert!(n >= 1);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let offdiag: Vec<f64> = (1..n).map(|k| k as f64).collect();
    golub_welsch(&diag, &offdiag, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(5);
        // x^8 over [-1,1] = 2/9, exact for degree <= 2*5-1.
        let val: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x.powi(8))
            .sum();
        assert_relative_eq!(val, 2.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn laguerre_matches_exponential_moments() {
        let rule = gauss_laguerre(8);
        // Integral of s^3 e^{-s} = 3! = 6.
        let val: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(s, w)| w * s.powi(3))
            .sum();
        assert_relative_eq!(val, 6.0, max_relative = 1e-10);
    }
}
