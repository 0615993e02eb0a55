//! Reflected jump-Euler simulation of the forward SDE with frozen
//! backward fields.

use super::{FbsdeError, FbsdeProblem, Iterate, SeriesBatch};
use crate::levy::PathGrid;
use crate::reflection::solve_jump_lcp;
use nalgebra::DVector;
use rayon::prelude::*;

/// Forward ensemble: reflected state, regulator, and the cumulative free
/// path so the regulation identity can be re-checked exactly.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub x: SeriesBatch,
    pub y: SeriesBatch,
    pub free: SeriesBatch,
    /// `(path, step)` pairs where the LCP had several solutions.
    pub non_unique_steps: Vec<(usize, usize)>,
}

/// Simulate the forward SDE on the given driver realizations, freezing
/// the backward fields `(v, v_bar, v_tilde)` at the supplied iterate.
///
/// Per step: `x+ = x + b dt + sigma dW + sum_j (jump marks) - compensators`,
/// then the jump LCP pushes the move back into the domain and the
/// regulator accumulates. Coefficients are evaluated at the left endpoint
/// (current reflected state, frozen backward values).
pub fn simulate_forward(
    problem: &FbsdeProblem,
    grids: &[PathGrid],
    frozen: &Iterate,
) -> Result<ForwardOutput, FbsdeError> {
    problem.validate()?;
    let dims = problem.coefficients.dims;
    let paths = grids.len();
    if paths == 0 {
        return Err(FbsdeError::Config("need at least one path".into()));
    }
    let points = grids[0].times.len();
    if grids.iter().any(|g| g.times.len() != points) {
        return Err(FbsdeError::GridMismatch(
            "all paths must share one time grid".into(),
        ));
    }
    if frozen.v.paths() != paths || frozen.v.points() != points {
        return Err(FbsdeError::GridMismatch(
            "frozen backward fields must match the path grid".into(),
        ));
    }
    if frozen.v.dim() != dims.q
        || frozen.v_bar.dim() != dims.q * dims.d
        || frozen.v_tilde.dim() != dims.q * dims.h
    {
        return Err(FbsdeError::Dimension(
            "frozen backward fields must be dimensioned (q, q*d, q*h)".into(),
        ));
    }

    let b_faces = problem.forward_faces();
    let coeffs = &problem.coefficients;
    let results: Vec<Result<PathResult, FbsdeError>> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let grid = &grids[path];
            let mut x = vec![0.0; points * dims.p];
            let mut y = vec![0.0; points * b_faces];
            let mut free = vec![0.0; points * dims.p];
            let mut non_unique = Vec::new();

            let mut xk = problem.x0.clone();
            let mut yk = DVector::<f64>::zeros(b_faces);
            let mut zk = problem.x0.clone();
            x[..dims.p].copy_from_slice(xk.as_slice());
            free[..dims.p].copy_from_slice(zk.as_slice());

            for k in 0..points - 1 {
                let dt = grid.dt(k);
                let t = grid.times[k];
                let u = (coeffs.control)(t, xk.as_slice());
                let args = super::CoeffArgs {
                    t,
                    x: xk.as_slice(),
                    v: frozen.v.get(path, k),
                    v_bar: frozen.v_bar.get(path, k),
                    v_tilde: frozen.v_tilde.get(path, k),
                    u: &u,
                };
                let drift = (coeffs.drift)(&args);
                let sigma = (coeffs.diffusion)(&args);
                if drift.len() != dims.p || sigma.len() != dims.p * dims.d {
                    return Err(FbsdeError::Coefficient(
                        "drift/diffusion returned wrong dimensions".into(),
                    ));
                }
                let dw = &grid.dw[k];
                let mut dz = DVector::<f64>::zeros(dims.p);
                for i in 0..dims.p {
                    let mut acc = drift[i] * dt;
                    for j in 0..dims.d {
                        acc += sigma[i * dims.d + j] * dw[j];
                    }
                    dz[i] = acc;
                }
                for jump in grid.jumps_in_step(k) {
                    let eta = (coeffs.jump)(&args, jump.component, jump.mark);
                    for i in 0..dims.p {
                        dz[i] += eta[i];
                    }
                }
                for j in 0..dims.h {
                    let mean = (coeffs.jump_mean)(&args, j);
                    let lam = problem.driver.rates[j];
                    for i in 0..dims.p {
                        dz[i] -= lam * dt * mean[i];
                    }
                }

                if let Some(spec) = &problem.forward_reflection {
                    let step = solve_jump_lcp(&xk, &dz, spec).map_err(|e| match e {
                        crate::reflection::ReflectionError::LcpInfeasible { detail, .. } => {
                            FbsdeError::Reflection(
                                crate::reflection::ReflectionError::LcpInfeasible {
                                    step: k + 1,
                                    detail,
                                },
                            )
                        }
                        other => FbsdeError::Reflection(other),
                    })?;
                    if step.non_unique {
                        non_unique.push((path, k + 1));
                    }
                    yk += &step.delta_y;
                    zk += &dz;
                    // Rebuild so x = z + R y holds exactly at grid points.
                    xk = &zk + spec.r() * &yk;
                } else {
                    zk += &dz;
                    xk = zk.clone();
                }
                let base = (k + 1) * dims.p;
                x[base..base + dims.p].copy_from_slice(xk.as_slice());
                free[base..base + dims.p].copy_from_slice(zk.as_slice());
                let ybase = (k + 1) * b_faces;
                y[ybase..ybase + b_faces].copy_from_slice(yk.as_slice());
            }
            Ok(PathResult {
                x,
                y,
                free,
                non_unique,
            })
        })
        .collect();

    let mut x = SeriesBatch::zeros(paths, points, dims.p);
    let mut y = SeriesBatch::zeros(paths, points, b_faces);
    let mut free = SeriesBatch::zeros(paths, points, dims.p);
    let mut non_unique_steps = Vec::new();
    for (path, res) in results.into_iter().enumerate() {
        let r = res?;
        for k in 0..points {
            x.set(path, k, &r.x[k * dims.p..(k + 1) * dims.p]);
            free.set(path, k, &r.free[k * dims.p..(k + 1) * dims.p]);
            if b_faces > 0 {
                y.set(path, k, &r.y[k * b_faces..(k + 1) * b_faces]);
            }
        }
        non_unique_steps.extend(r.non_unique);
    }
    Ok(ForwardOutput {
        x,
        y,
        free,
        non_unique_steps,
    })
}

struct PathResult {
    x: Vec<f64>,
    y: Vec<f64>,
    free: Vec<f64>,
    non_unique: Vec<(usize, usize)>,
}
