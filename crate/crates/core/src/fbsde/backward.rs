//! Backward recursion by least-squares Monte Carlo: conditional
//! expectations are approximated by polynomial regression on the current
//! forward state, the martingale fields by regressions of discounted
//! value covariations, and the backward regulator by per-path jump LCP
//! projections into the backward domain.

use super::regression::{fit, PolyBasis, RegressionSnapshot};
use super::{FbsdeError, FbsdeProblem, SeriesBatch};
use crate::levy::PathGrid;
use crate::reflection::{solve_jump_lcp, BOUNDARY_TOL};
use nalgebra::{DMatrix, DVector};

/// Backward ensemble `(V, V_bar, V_tilde, F)` plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub v: SeriesBatch,
    pub v_bar: SeriesBatch,
    pub v_tilde: SeriesBatch,
    pub f: SeriesBatch,
    pub regressions: Vec<RegressionSnapshot>,
    pub warnings: Vec<String>,
    /// Regression standard error of the fitted value at time zero.
    pub value_origin_se: DVector<f64>,
}

/// Solve the backward system given a complete forward ensemble.
///
/// The recursion starts from the exact terminal condition
/// `V(T) = H(X(T))` and walks backward: conditional expectations via
/// least-squares regression on basis functions of `X(t_k)`, the
/// `V_bar` field from regressions of `V dW / dt`, the `V_tilde`
/// surrogate from regressions against compensated jump covariations, and
/// (when a backward reflection is present) a per-path LCP projection into
/// the backward domain accumulating the regulator `F`.
pub fn solve_backward_lsmc(
    problem: &FbsdeProblem,
    grids: &[PathGrid],
    x: &SeriesBatch,
    basis_degree: usize,
) -> Result<BackwardOutput, FbsdeError> {
    let dims = problem.coefficients.dims;
    let paths = x.paths();
    let points = x.points();
    if grids.len() != paths || grids.iter().any(|g| g.times.len() != points) {
        return Err(FbsdeError::GridMismatch(
            "forward ensemble and driver grids disagree".into(),
        ));
    }
    if points < 2 {
        return Err(FbsdeError::Config("need at least one time step".into()));
    }
    let steps = points - 1;
    let bbar = problem.backward_faces();
    let coeffs = &problem.coefficients;
    let times = &grids[0].times;

    let mut v = SeriesBatch::zeros(paths, points, dims.q);
    let mut v_bar = SeriesBatch::zeros(paths, points, dims.q * dims.d);
    let mut v_tilde = SeriesBatch::zeros(paths, points, dims.q * dims.h);
    let mut df = SeriesBatch::zeros(paths, steps, bbar.max(1).min(bbar));
    let mut warnings = Vec::new();

    // Terminal condition, exact per path; the martingale fields vanish at
    // the horizon (representation is unique up to null sets only).
    for path in 0..paths {
        let h_val = (coeffs.terminal)(x.get(path, steps));
        if h_val.len() != dims.q {
            return Err(FbsdeError::Coefficient(
                "terminal map returned wrong dimension".into(),
            ));
        }
        if let Some(spec) = &problem.backward_reflection {
            let hv = DVector::from_column_slice(&h_val);
            if !spec.domain().contains(&hv, BOUNDARY_TOL) {
                return Err(FbsdeError::Config(format!(
                    "terminal value leaves the backward domain on path {path}"
                )));
            }
        }
        v.set(path, steps, &h_val);
    }

    let basis = PolyBasis::total_degree(dims.p, basis_degree);
    let nb = basis.len();
    let mut regressions: Vec<Option<RegressionSnapshot>> = (0..steps).map(|_| None).collect();
    let mut value_origin_se = DVector::zeros(dims.q);

    let resp_cols = dims.q + dims.q * dims.d + dims.q * dims.h;
    for k in (0..steps).rev() {
        let t = times[k];
        let dt = times[k + 1] - times[k];

        let mut design = DMatrix::zeros(paths, nb);
        let mut phi_row = vec![0.0; nb];
        for path in 0..paths {
            basis.eval(x.get(path, k), &mut phi_row);
            for (j, val) in phi_row.iter().enumerate() {
                design[(path, j)] = *val;
            }
        }

        let mut responses = DMatrix::zeros(paths, resp_cols);
        for path in 0..paths {
            let vk1 = v.get(path, k + 1);
            let dw = &grids[path].dw[k];
            let dl = grids[path].compensated_mark_sum(k, dims.h);
            for l in 0..dims.q {
                responses[(path, l)] = vk1[l];
                for j in 0..dims.d {
                    responses[(path, dims.q + l * dims.d + j)] = vk1[l] * dw[j];
                }
                for j in 0..dims.h {
                    responses[(path, dims.q + dims.q * dims.d + l * dims.h + j)] =
                        vk1[l] * dl[j];
                }
            }
        }

        let reg = fit(&design, &responses);
        if reg.truncated {
            warnings.push(format!(
                "step {k}: rank-deficient regression basis truncated to rank {}",
                reg.rank
            ));
        }

        for path in 0..paths {
            // Martingale fields from the covariation regressions.
            let vb = v_bar.get_mut(path, k);
            for l in 0..dims.q {
                for j in 0..dims.d {
                    vb[l * dims.d + j] = reg.fitted[(path, dims.q + l * dims.d + j)] / dt;
                }
            }
            let vt = v_tilde.get_mut(path, k);
            for l in 0..dims.q {
                for j in 0..dims.h {
                    let lam = problem.driver.rates[j];
                    let m2 = problem.driver.marks[j].second_moment();
                    vt[l * dims.h + j] = reg.fitted
                        [(path, dims.q + dims.q * dims.d + l * dims.h + j)]
                        / (lam * dt * m2);
                }
            }
        }

        for path in 0..paths {
            let expected: Vec<f64> = (0..dims.q).map(|l| reg.fitted[(path, l)]).collect();
            let u = (coeffs.control)(t, x.get(path, k));
            let args = super::CoeffArgs {
                t: times[k + 1],
                x: x.get(path, k),
                v: &expected,
                v_bar: v_bar.get(path, k),
                v_tilde: v_tilde.get(path, k),
                u: &u,
            };
            let c1 = (coeffs.driver)(&args);
            if c1.len() != dims.q {
                return Err(FbsdeError::Coefficient(
                    "driver returned wrong dimension".into(),
                ));
            }
            // Heun step on the driver integral keeps the time-stepping
            // bias at O(dt^2) per step.
            let mid: Vec<f64> = (0..dims.q)
                .map(|l| 0.5 * (expected[l] + expected[l] + dt * c1[l]))
                .collect();
            let args_mid = super::CoeffArgs {
                t: t + 0.5 * dt,
                x: x.get(path, k),
                v: &mid,
                v_bar: v_bar.get(path, k),
                v_tilde: v_tilde.get(path, k),
                u: &u,
            };
            let c2 = (coeffs.driver)(&args_mid);
            let cand: Vec<f64> = (0..dims.q).map(|l| expected[l] + dt * c2[l]).collect();

            if let Some(spec) = &problem.backward_reflection {
                let anchor = DVector::from_column_slice(v.get(path, k + 1));
                let delta = DVector::from_column_slice(&cand) - &anchor;
                let step = solve_jump_lcp(&anchor, &delta, spec).map_err(|e| match e {
                    crate::reflection::ReflectionError::LcpInfeasible { detail, .. } => {
                        FbsdeError::Reflection(
                            crate::reflection::ReflectionError::LcpInfeasible {
                                step: k,
                                detail: format!("backward regulator: {detail}"),
                            },
                        )
                    }
                    other => FbsdeError::Reflection(other),
                })?;
                let vk = &anchor + &step.delta_x;
                v.set(path, k, vk.as_slice());
                df.set(path, k, step.delta_y.as_slice());
            } else {
                v.set(path, k, &cand);
            }
        }

        if k == 0 {
            let mut phi = DVector::zeros(nb);
            basis.eval(x.get(0, 0), &mut phi_row);
            for (j, val) in phi_row.iter().enumerate() {
                phi[j] = *val;
            }
            for l in 0..dims.q {
                value_origin_se[l] = reg.fitted_se(&phi, l);
            }
        }

        regressions[k] = Some(RegressionSnapshot {
            step: k,
            basis: basis.clone(),
            value_coefficients: reg.coefficients.columns(0, dims.q).into_owned(),
            r_squared: reg.r_squared[..dims.q].to_vec(),
            truncated: reg.truncated,
        });
    }

    // Accumulate the regulator forward so F(0) = 0 and F is nondecreasing.
    let mut f = SeriesBatch::zeros(paths, points, bbar);
    if bbar > 0 {
        for path in 0..paths {
            let mut acc = vec![0.0; bbar];
            for k in 0..steps {
                f.set(path, k, &acc);
                let inc = df.get(path, k);
                for i in 0..bbar {
                    acc[i] += inc[i];
                }
            }
            f.set(path, steps, &acc);
        }
    }

    Ok(BackwardOutput {
        v,
        v_bar,
        v_tilde,
        f,
        regressions: regressions.into_iter().map(|r| r.unwrap()).collect(),
        warnings,
        value_origin_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbsde::{simulate_forward, CoefficientSet, Dims, FbsdeProblem, Iterate};
    use crate::levy::{sample_path_grid_stream, LevyDriver};
    use crate::reflection::{Domain, ReflectionSpec};
    use nalgebra::DMatrix as NaDMatrix;
    use std::sync::Arc;

    fn grid_times(steps: usize, horizon: f64) -> Vec<f64> {
        (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect()
    }

    fn brownian_setup(
        paths: usize,
        steps: usize,
        horizon: f64,
        seed: u64,
        coeffs: CoefficientSet,
    ) -> (FbsdeProblem, Vec<PathGrid>, SeriesBatch) {
        let driver = LevyDriver::brownian(1);
        let times = grid_times(steps, horizon);
        let grids: Vec<PathGrid> = (0..paths)
            .map(|p| sample_path_grid_stream(&driver, &times, seed, p as u64).unwrap())
            .collect();
        let dims = coeffs.dims;
        let problem = FbsdeProblem {
            coefficients: coeffs,
            forward_reflection: None,
            backward_reflection: None,
            driver,
            horizon,
            x0: DVector::zeros(1),
        };
        let frozen = Iterate::zeros(paths, times.len(), dims);
        let fw = simulate_forward(&problem, &grids, &frozen).unwrap();
        (problem, grids, fw.x)
    }

    #[test]
    fn martingale_representation_of_terminal_state() {
        // H(x) = x with X Brownian from zero: V(0) ~ 0, V_bar ~ 1.
        let dims = Dims { p: 1, q: 1, d: 1, h: 0, u: 1 };
        let mut coeffs = CoefficientSet::zero(dims);
        coeffs.diffusion = Arc::new(|_| vec![1.0]);
        coeffs.terminal = Arc::new(|x| vec![x[0]]);
        let (problem, grids, x) = brownian_setup(4000, 40, 1.0, 5, coeffs);
        let out = solve_backward_lsmc(&problem, &grids, &x, 3).unwrap();
        let mut v0 = 0.0;
        let mut vbar_mid = 0.0;
        for path in 0..x.paths() {
            v0 += out.v.get(path, 0)[0];
            vbar_mid += out.v_bar.get(path, 20)[0];
        }
        v0 /= x.paths() as f64;
        vbar_mid /= x.paths() as f64;
        assert!(v0.abs() < 0.05, "V(0) = {v0} should be near 0");
        assert!(
            (vbar_mid - 1.0).abs() < 0.1,
            "V_bar = {vbar_mid} should be near 1"
        );
    }

    #[test]
    fn linear_driver_compounds_to_exponential() {
        // c = r V with H = 1: V(0) = e^{r T}.
        let dims = Dims { p: 1, q: 1, d: 1, h: 0, u: 1 };
        let mut coeffs = CoefficientSet::zero(dims);
        coeffs.diffusion = Arc::new(|_| vec![1.0]);
        coeffs.driver = Arc::new(|a: &crate::fbsde::CoeffArgs| vec![0.1 * a.v[0]]);
        coeffs.terminal = Arc::new(|_| vec![1.0]);
        coeffs.lipschitz = crate::fbsde::LipschitzBound::Constant(0.1);
        let (problem, grids, x) = brownian_setup(2000, 100, 1.0, 9, coeffs);
        let out = solve_backward_lsmc(&problem, &grids, &x, 3).unwrap();
        let v0 = out.v.get(0, 0)[0];
        let target = 0.1f64.exp();
        assert!(
            (v0 - target).abs() < 1e-6,
            "V(0) = {v0}, expected {target}"
        );
    }

    #[test]
    fn backward_reflection_keeps_value_nonnegative() {
        // Terminal payoff dips below zero; the regulator F pushes V back
        // into [0, inf) and ends strictly positive on enough paths.
        let dims = Dims { p: 1, q: 1, d: 1, h: 0, u: 1 };
        let mut coeffs = CoefficientSet::zero(dims);
        coeffs.diffusion = Arc::new(|_| vec![1.0]);
        // max(x, 0) maps into the backward domain; the drift pulls V down.
        coeffs.terminal = Arc::new(|x| vec![x[0].max(0.0)]);
        coeffs.driver = Arc::new(|_| vec![-0.8]);
        let driver = LevyDriver::brownian(1);
        let times = grid_times(60, 1.0);
        let paths = 400;
        let grids: Vec<PathGrid> = (0..paths)
            .map(|p| sample_path_grid_stream(&driver, &times, 31, p as u64).unwrap())
            .collect();
        let problem = FbsdeProblem {
            coefficients: coeffs,
            forward_reflection: None,
            backward_reflection: Some(
                ReflectionSpec::new(
                    Domain::orthant(1).unwrap(),
                    NaDMatrix::from_row_slice(1, 1, &[1.0]),
                )
                .unwrap(),
            ),
            driver,
            horizon: 1.0,
            x0: DVector::zeros(1),
        };
        let dims = problem.coefficients.dims;
        let frozen = Iterate::zeros(paths, times.len(), dims);
        let fw = simulate_forward(&problem, &grids, &frozen).unwrap();
        let out = solve_backward_lsmc(&problem, &grids, &fw.x, 3).unwrap();
        let mut regulated = 0;
        for path in 0..paths {
            assert!(out.f.get(path, 0)[0] == 0.0);
            for k in 0..times.len() {
                assert!(out.v.get(path, k)[0] >= -1e-9, "V stays in the domain");
                if k > 0 {
                    assert!(out.f.get(path, k)[0] >= out.f.get(path, k - 1)[0]);
                }
            }
            if out.f.get(path, times.len() - 1)[0] > 0.0 {
                regulated += 1;
            }
        }
        assert!(
            regulated > paths / 10,
            "regulator engaged on {regulated} of {paths} paths"
        );
    }
}
