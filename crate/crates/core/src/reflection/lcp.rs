//! Per-step linear complementarity solve: push a displaced state back
//! into the domain along the reflection directions.

use super::{ReflectionError, ReflectionSpec, BOUNDARY_TOL};
use crate::linalg::{lex_less, max_abs, principal_submatrix, row_sum_norm};
use nalgebra::{DMatrix, DVector};

/// Result of one jump LCP solve.
#[derive(Debug, Clone)]
pub struct LcpStep {
    /// Net state increment `delta_z + R delta_y`.
    pub delta_x: DVector<f64>,
    /// Nonnegative regulator increment per face.
    pub delta_y: DVector<f64>,
    /// Faces with a strictly positive push.
    pub active: Vec<usize>,
    /// Several feasible increments existed; the lexicographically minimal
    /// `delta_y` was chosen.
    pub non_unique: bool,
    /// Norm bound from the active-set linear system: with `M = N'R` and
    /// active set `A`, the infinity norm of `M_AA^{-1}` (1 when no push
    /// was needed), so that `||delta_y|| <= C ||delta_z||` holds for the
    /// solved system.
    pub bound_constant: f64,
}

/// Solve the jump LCP at one step: find `delta_y >= 0` with
/// `x_pre + delta_z + R delta_y` in the domain and `delta_y_i > 0` only
/// on faces active at the landing point.
///
/// Candidate active sets are enumerated exhaustively (the domain has at
/// most `2p <= 16` faces at desk scale); when several candidate
/// increments are feasible the lexicographically minimal `delta_y` wins
/// and the step is flagged non-unique.
pub fn solve_jump_lcp(
    x_pre: &DVector<f64>,
    delta_z: &DVector<f64>,
    spec: &ReflectionSpec,
) -> Result<LcpStep, ReflectionError> {
    let p = spec.domain().dim();
    let b = spec.domain().face_count();
    if x_pre.len() != p || delta_z.len() != p {
        return Err(ReflectionError::Dimension(format!(
            "state/increment must have length {p}"
        )));
    }

    let free = x_pre + delta_z;
    let q = spec.domain().gaps(&free);

    // Fast path: the free move stays inside, no push needed.
    if q.iter().all(|g| *g >= -BOUNDARY_TOL) {
        return Ok(LcpStep {
            delta_x: delta_z.clone(),
            delta_y: DVector::zeros(b),
            active: Vec::new(),
            non_unique: false,
            bound_constant: 1.0,
        });
    }

    let m = spec.nr();
    let mut candidates: Vec<(DVector<f64>, f64)> = Vec::new();
    for mask in 1usize..(1 << b) {
        let idx: Vec<usize> = (0..b).filter(|i| mask & (1 << i) != 0).collect();
        let sub = principal_submatrix(m, &idx);
        let rhs = DVector::from_fn(idx.len(), |i, _| -q[idx[i]]);
        let (solution, inv_norm) = match solve_active_system(&sub, &rhs) {
            Some(v) => v,
            None => continue,
        };
        if solution.iter().any(|v| *v < -1e-10) {
            continue;
        }
        let mut dy = DVector::zeros(b);
        for (slot, &face) in idx.iter().enumerate() {
            dy[face] = solution[slot].max(0.0);
        }
        let gaps = &q + m * &dy;
        if gaps.iter().any(|g| *g < -BOUNDARY_TOL) {
            continue;
        }
        // Residual guard for the pseudo-inverse branch.
        let resid = &sub * &solution - &rhs;
        if max_abs(resid.as_slice()) > 1e-8 * (1.0 + max_abs(rhs.as_slice())) {
            continue;
        }
        candidates.push((dy, inv_norm));
    }

    if candidates.is_empty() {
        return Err(ReflectionError::LcpInfeasible {
            step: 0,
            detail: format!(
                "no active face set regulates the move (worst gap {:.3e}); \
                 the reflection matrix may not be completely-S",
                q.min()
            ),
        });
    }

    candidates.sort_by(|a, b| {
        if lex_less(a.0.as_slice(), b.0.as_slice(), 1e-9) {
            std::cmp::Ordering::Less
        } else if lex_less(b.0.as_slice(), a.0.as_slice(), 1e-9) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let distinct = candidates
        .iter()
        .filter(|(dy, _)| {
            dy.iter()
                .zip(candidates[0].0.iter())
                .any(|(a, b)| (a - b).abs() > 1e-9)
        })
        .count();
    let (delta_y, inv_norm) = candidates.swap_remove(0);
    let active: Vec<usize> = (0..b).filter(|&i| delta_y[i] > 0.0).collect();
    let delta_x = delta_z + spec.r() * &delta_y;

    Ok(LcpStep {
        delta_x,
        delta_y,
        active,
        non_unique: distinct > 0,
        bound_constant: inv_norm.max(1.0),
    })
}

/// Solve the square active-set system, returning the solution together
/// with the infinity norm of the (pseudo-)inverse.
fn solve_active_system(sub: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let lu = sub.clone().lu();
    if let Some(inv) = lu.try_inverse() {
        let norm = row_sum_norm(&inv);
        if norm.is_finite() && norm < 1e12 {
            return Some((&inv * rhs, norm));
        }
    }
    // Singular active set (weak-solution regime): fall back to the
    // minimum-norm solution, which is deterministic.
    let svd = sub.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if max_sv == 0.0 {
        return None;
    }
    let eps = 1e-12 * max_sv;
    let sol = svd.solve(rhs, eps).ok()?;
    let inv_norm = 1.0 / svd.singular_values.iter().copied().filter(|s| *s > eps).fold(f64::INFINITY, f64::min);
    Some((sol, inv_norm * sub.nrows() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::Domain;
    use approx::assert_relative_eq;

    #[test]
    fn orthant_positive_part() {
        // At the origin of the 2-d orthant with identity reflection a move
        // of (-1, 2) is regulated by pushing one unit on face 0.
        let spec = ReflectionSpec::normal_orthant(2).unwrap();
        let step = solve_jump_lcp(
            &DVector::zeros(2),
            &DVector::from_column_slice(&[-1.0, 2.0]),
            &spec,
        )
        .unwrap();
        assert_relative_eq!(step.delta_y[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(step.delta_y[1], 0.0);
        assert_relative_eq!(step.delta_x[0], 0.0);
        assert_relative_eq!(step.delta_x[1], 2.0);
        assert!(!step.non_unique);
    }

    #[test]
    fn interior_move_needs_no_push() {
        let spec = ReflectionSpec::normal_orthant(2).unwrap();
        let step = solve_jump_lcp(
            &DVector::from_column_slice(&[5.0, 5.0]),
            &DVector::from_column_slice(&[-1.0, 1.0]),
            &spec,
        )
        .unwrap();
        assert_eq!(step.delta_y.iter().filter(|v| **v != 0.0).count(), 0);
        assert_eq!(step.delta_x, DVector::from_column_slice(&[-1.0, 1.0]));
    }

    #[test]
    fn skew_reflection_cascades_faces() {
        // Pushing on face 0 with column (1, -0.5) drags coordinate 1 down,
        // so face 1 must also engage.
        let spec = ReflectionSpec::new(
            Domain::orthant(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, 1.0]),
        )
        .unwrap();
        let step = solve_jump_lcp(
            &DVector::zeros(2),
            &DVector::from_column_slice(&[-1.0, 0.0]),
            &spec,
        )
        .unwrap();
        assert_relative_eq!(step.delta_y[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(step.delta_y[1], 0.5, max_relative = 1e-12);
        assert!(step.delta_x.amax() <= 1e-12);
        assert!(step.bound_constant >= 1.0);
        assert!(
            step.delta_y.amax() <= step.bound_constant * 1.0 + 1e-12,
            "||dy|| <= C ||dz||"
        );
    }

    #[test]
    fn hyperbox_upper_face_push() {
        let domain = Domain::hyperbox(&[1.0]).unwrap();
        let r = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let spec = ReflectionSpec::new(domain, r).unwrap();
        let step = solve_jump_lcp(
            &DVector::from_column_slice(&[0.9]),
            &DVector::from_column_slice(&[0.4]),
            &spec,
        )
        .unwrap();
        // Lands at 1.3; the cap pushes back 0.3 along -e_1.
        assert_relative_eq!(step.delta_y[1], 0.3, max_relative = 1e-12);
        assert_relative_eq!(step.delta_x[0], 0.1, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_without_inward_push() {
        // Reflection pointing outward cannot regulate a negative move.
        let spec = ReflectionSpec::new(
            Domain::orthant(1).unwrap(),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
        )
        .unwrap();
        let err = solve_jump_lcp(
            &DVector::zeros(1),
            &DVector::from_column_slice(&[-1.0]),
            &spec,
        );
        assert!(matches!(err, Err(ReflectionError::LcpInfeasible { .. })));
    }
}
