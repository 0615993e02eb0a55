//! S-matrix and completely-S condition checking, plus the normalized
//! spectral-radius condition used by the fixed-point Skorohod solver.

use super::{ReflectionError, ReflectionSpec};
use crate::linalg::{nonempty_subsets, positive_feasible, principal_submatrix, submatrix};
use nalgebra::{DMatrix, DVector};

/// Strictness margin for the feasibility LP deciding `x > 0, Mx > 0`.
pub const S_MATRIX_LP_MARGIN: f64 = 1e-8;

/// Margin below one for the strict spectral-radius comparison.
pub const SPECTRAL_MARGIN: f64 = 1e-10;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_CAP: usize = 200_000;

/// Decide whether `m` is an S-matrix: does some `x > 0` satisfy `Mx > 0`?
///
/// Decided by LP feasibility of `{x >= eps, Mx >= eps}` with margin
/// `eps = 1e-8`; returns the witness on success, `None` otherwise.
pub fn is_s_matrix(m: &DMatrix<f64>) -> Result<Option<DVector<f64>>, ReflectionError> {
    if m.nrows() != m.ncols() {
        return Err(ReflectionError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ReflectionError::Dimension(
            "matrix entries must be finite".into(),
        ));
    }
    Ok(positive_feasible(m, S_MATRIX_LP_MARGIN))
}

/// Witness for one square submatrix of `N'R`: the selected rows/columns
/// and a strictly positive `x` with `R~ x > 0`.
#[derive(Debug, Clone)]
pub struct SWitness {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub witness: DVector<f64>,
}

/// Outcome of the completely-S check with all collected witnesses.
#[derive(Debug, Clone)]
pub struct CompletelySCertificate {
    pub holds: bool,
    pub witnesses: Vec<SWitness>,
    /// Row/column selection of the first failing submatrix, when any.
    pub failing: Option<(Vec<usize>, Vec<usize>)>,
}

impl CompletelySCertificate {
    /// Re-verify every stored witness by substitution into `N'R`.
    pub fn verify(&self, nr: &DMatrix<f64>) -> bool {
        self.witnesses.iter().all(|w| {
            let sub = submatrix(nr, &w.rows, &w.cols);
            let prod = &sub * &w.witness;
            w.witness.iter().all(|v| *v > 0.0) && prod.iter().all(|v| *v > 0.0)
        })
    }
}

/// Completely-S check for a reflection spec.
///
/// Square `R` on the orthant: every principal submatrix of `R = N'R` must
/// be an S-matrix. On a hyperbox the principal submatrices of the
/// `2p x 2p` product `N'R` are tested over the face subsets that share a
/// common point of the domain (a floor face and its own cap never meet,
/// so no regulation ever engages both at once).
pub fn is_completely_s(spec: &ReflectionSpec) -> CompletelySCertificate {
    let nr = spec.nr();
    let mut witnesses = Vec::new();
    for idx in spec.domain().active_compatible_subsets() {
        match is_s_matrix(&principal_submatrix(nr, &idx)).expect("square by construction") {
            Some(w) => witnesses.push(SWitness {
                rows: idx.clone(),
                cols: idx,
                witness: w,
            }),
            None => {
                return CompletelySCertificate {
                    holds: false,
                    witnesses,
                    failing: Some((idx.clone(), idx)),
                }
            }
        }
    }
    CompletelySCertificate {
        holds: true,
        witnesses,
        failing: None,
    }
}

/// Spectral radii of `|I - R~|` over the tested principal submatrices
/// `R~` of `N'R`, each required to be strictly below one.
#[derive(Debug, Clone)]
pub struct SpectralRadiusCertificate {
    pub holds: bool,
    /// `(face subset, spectral radius)` per tested submatrix.
    pub radii: Vec<(Vec<usize>, f64)>,
}

/// Check the normalized contraction condition backing the fixed-point
/// Skorohod solver: with `diag(N'R) = 1`, every principal submatrix `R~`
/// of `N'R` must satisfy `rho(|I - R~|) < 1` (power iteration, relative
/// tolerance 1e-10).
///
/// Requires unit diagonal of `N'R` so each tested submatrix keeps a unit
/// diagonal; a non-unit entry is a normalization error.
pub fn spectral_radius_condition(
    spec: &ReflectionSpec,
) -> Result<SpectralRadiusCertificate, ReflectionError> {
    let b = spec.domain().face_count();
    let nr = spec.nr();
    for i in 0..b {
        if (nr[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(ReflectionError::Normalization {
                face: i,
                value: nr[(i, i)],
            });
        }
    }
    let abs_q = DMatrix::from_fn(b, b, |i, j| {
        let e = if i == j { 1.0 - nr[(i, j)] } else { -nr[(i, j)] };
        e.abs()
    });

    let mut radii = Vec::new();
    let mut holds = true;
    if b <= 12 {
        for idx in nonempty_subsets(b) {
            let sub = principal_submatrix(&abs_q, &idx);
            let rho = crate::linalg::spectral_radius_nonneg(&sub, POWER_ITER_TOL, POWER_ITER_CAP);
            if rho >= 1.0 - SPECTRAL_MARGIN {
                holds = false;
            }
            radii.push((idx, rho));
        }
    } else {
        // For nonnegative matrices the spectral radius of any principal
        // submatrix is dominated by the full matrix, so one check decides.
        let rho = crate::linalg::spectral_radius_nonneg(&abs_q, POWER_ITER_TOL, POWER_ITER_CAP);
        if rho >= 1.0 - SPECTRAL_MARGIN {
            holds = false;
        }
        radii.push(((0..b).collect(), rho));
    }
    Ok(SpectralRadiusCertificate { holds, radii })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::Domain;

    fn orthant_spec(entries: &[f64], p: usize) -> ReflectionSpec {
        ReflectionSpec::new(
            Domain::orthant(p).unwrap(),
            DMatrix::from_row_slice(p, p, entries),
        )
        .unwrap()
    }

    #[test]
    fn scalar_s_matrix_cases() {
        let pos = DMatrix::from_row_slice(1, 1, &[1.0]);
        let w = is_s_matrix(&pos).unwrap().expect("[1] is an S-matrix");
        assert!(w[0] > 0.0);
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(is_s_matrix(&neg).unwrap().is_none());
    }

    #[test]
    fn symmetric_negative_coupling_is_not_s() {
        // Adding the rows of [[1,-2],[-2,1]] x > 0 forces -(x1+x2) > 0.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert!(is_s_matrix(&m).unwrap().is_none());
    }

    #[test]
    fn non_square_is_an_error() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            is_s_matrix(&m),
            Err(ReflectionError::NotSquare { .. })
        ));
    }

    #[test]
    fn identity_is_completely_s() {
        let spec = ReflectionSpec::normal_orthant(2).unwrap();
        let cert = spec.completely_s_certificate();
        assert!(cert.holds);
        assert_eq!(cert.witnesses.len(), 3);
        assert!(cert.verify(spec.nr()));
    }

    #[test]
    fn nonpositive_diagonal_fails_via_principal_submatrix() {
        let spec = orthant_spec(&[1.0, 5.0, 5.0, 0.0], 2);
        let cert = spec.completely_s_certificate();
        assert!(!cert.holds);
        assert_eq!(cert.failing, Some((vec![1], vec![1])));
    }

    #[test]
    fn symmetric_negative_coupling_fails_completely_s() {
        let spec = orthant_spec(&[1.0, -2.0, -2.0, 1.0], 2);
        assert!(!spec.is_completely_s());
    }

    #[test]
    fn hyperbox_identity_reflection_is_completely_s() {
        let domain = Domain::hyperbox(&[1.0]).unwrap();
        // Columns push inward on each face: +1 at the floor, -1 at the cap.
        let r = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let spec = ReflectionSpec::new(domain, r).unwrap();
        let cert = spec.completely_s_certificate();
        assert!(cert.holds);
        assert!(cert.verify(spec.nr()));
    }

    #[test]
    fn spectral_condition_examples() {
        let id = ReflectionSpec::normal_orthant(2).unwrap();
        assert!(id.satisfies_spectral_radius_condition().unwrap());

        let tri = orthant_spec(&[1.0, 0.0, -0.5, 1.0], 2);
        assert!(tri.satisfies_spectral_radius_condition().unwrap());

        // |I - R| is the swap matrix with spectral radius exactly one.
        let swap = orthant_spec(&[1.0, -1.0, -1.0, 1.0], 2);
        assert!(!swap.satisfies_spectral_radius_condition().unwrap());
    }

    #[test]
    fn spectral_condition_requires_unit_diagonal() {
        let spec = orthant_spec(&[2.0, 0.0, 0.0, 1.0], 2);
        assert!(matches!(
            spec.satisfies_spectral_radius_condition(),
            Err(ReflectionError::Normalization { face: 0, .. })
        ));
    }
}
