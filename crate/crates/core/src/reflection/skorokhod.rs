//! Discrete Skorohod problem solvers: the sequential per-step LCP solver
//! and the running-supremum fixed-point solver available under the
//! spectral-radius condition.

use super::{solve_jump_lcp, ReflectionError, ReflectionSpec, RegulatedPath, BOUNDARY_TOL};
use nalgebra::{DMatrix, DVector};

/// Convergence target for the fixed-point iteration (sup norm of the
/// successive difference).
pub const FIXED_POINT_TOL: f64 = 1e-10;

fn check_grid(times: &[f64], z: &[DVector<f64>], spec: &ReflectionSpec) -> Result<(), ReflectionError> {
    if times.len() != z.len() || times.is_empty() {
        return Err(ReflectionError::Dimension(
            "time grid and path must have equal, positive length".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ReflectionError::Parameter(
            "time grid must be strictly increasing".into(),
        ));
    }
    if z.iter().any(|v| v.len() != spec.domain().dim()) {
        return Err(ReflectionError::Dimension(
            "path values must match the domain dimension".into(),
        ));
    }
    if !spec.domain().contains(&z[0], BOUNDARY_TOL) {
        return Err(ReflectionError::InvalidPath(
            "z(0) must start inside the domain".into(),
        ));
    }
    Ok(())
}

/// Regulate `z` into the domain by solving the jump LCP step by step.
///
/// The state is rebuilt as `x(t_k) = z(t_k) + R y(t_k)` after each solve
/// so the regulated-path identity holds exactly at every grid point.
pub fn skorokhod_solve(
    times: &[f64],
    z: &[DVector<f64>],
    spec: &ReflectionSpec,
) -> Result<RegulatedPath, ReflectionError> {
    check_grid(times, z, spec)?;
    let b = spec.domain().face_count();
    let mut y = Vec::with_capacity(times.len());
    let mut x = Vec::with_capacity(times.len());
    let mut non_unique_steps = Vec::new();

    y.push(DVector::zeros(b));
    x.push(z[0].clone() + spec.r() * &y[0]);
    for k in 1..times.len() {
        let delta_z = &z[k] - &z[k - 1];
        let step = solve_jump_lcp(&x[k - 1], &delta_z, spec).map_err(|e| match e {
            ReflectionError::LcpInfeasible { detail, .. } => {
                ReflectionError::LcpInfeasible { step: k, detail }
            }
            other => other,
        })?;
        if step.non_unique {
            non_unique_steps.push(k);
        }
        let yk = &y[k - 1] + &step.delta_y;
        x.push(&z[k] + spec.r() * &yk);
        y.push(yk);
    }
    Ok(RegulatedPath {
        times: times.to_vec(),
        x,
        y,
        z: z.to_vec(),
        non_unique_steps: non_unique_steps.clone(),
    })
}

/// Regulate `z` by iterating the running-supremum map
/// `y_i(t_k) <- sup_{j<=k} ((Q y)_i(t_j) - gap_i(z(t_j)))^+`
/// with `Q = I - N'R`, which contracts under the spectral-radius
/// condition.
pub fn skorokhod_fixed_point(
    times: &[f64],
    z: &[DVector<f64>],
    spec: &ReflectionSpec,
) -> Result<RegulatedPath, ReflectionError> {
    check_grid(times, z, spec)?;
    if !spec.satisfies_spectral_radius_condition()? {
        return Err(ReflectionError::Parameter(
            "spectral-radius condition fails; the fixed-point map need not contract".into(),
        ));
    }
    let b = spec.domain().face_count();
    let n = times.len();
    let q_mat = DMatrix::<f64>::identity(b, b) - spec.nr();

    // gap of the free path per grid point: N'z - c.
    let gapz: Vec<DVector<f64>> = z.iter().map(|zk| spec.domain().gaps(zk)).collect();

    let mut y = vec![DVector::<f64>::zeros(b); n];
    let cap = 10 * n.max(2);
    let mut residual = f64::INFINITY;
    let mut converged = false;
    // Iterate a little past the documented tolerance when cheap; accept as
    // soon as the pinned criterion is met at the cap.
    let target = (FIXED_POINT_TOL * 1e-2).max(1e-14);
    for _ in 0..cap {
        let mut diff = 0.0_f64;
        let mut next = Vec::with_capacity(n);
        let mut running = DVector::from_element(b, 0.0_f64);
        for k in 0..n {
            let drive = &q_mat * &y[k] - &gapz[k];
            for i in 0..b {
                let v = drive[i].max(if k == 0 { 0.0 } else { running[i] });
                running[i] = v.max(0.0);
            }
            let yk = running.clone();
            diff = diff.max((&yk - &y[k]).amax());
            next.push(yk);
        }
        y = next;
        residual = diff;
        if diff < target {
            converged = true;
            break;
        }
    }
    if !converged && residual >= FIXED_POINT_TOL {
        return Err(ReflectionError::NonConvergence {
            iterations: cap,
            residual,
        });
    }

    let x: Vec<DVector<f64>> = (0..n).map(|k| &z[k] + spec.r() * &y[k]).collect();
    Ok(RegulatedPath {
        times: times.to_vec(),
        x,
        y,
        z: z.to_vec(),
        non_unique_steps: Vec::new(),
    })
}
