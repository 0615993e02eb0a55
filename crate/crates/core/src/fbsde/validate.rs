//! Post-hoc checks of a solved ensemble: terminal identity, exact
//! complementarity of both regulators, monotonicity, the regulation
//! identity, and growth-bound spot checks.

use super::{CoeffArgs, EnsembleSolution, FbsdeProblem};
use crate::reflection::BOUNDARY_TOL;
use serde::Serialize;

/// One growth-bound spot check of `||f|| <= L(t)(1 + ||x|| + ||v|| +
/// ||v_bar|| + ||v_tilde||_nu)`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthCheck {
    pub coefficient: &'static str,
    pub path: usize,
    pub step: usize,
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ValidationReport {
    /// `max over paths ||V(T) - H(X(T))||` (exactly zero by construction).
    pub terminal_residual: f64,
    /// Exact sum of forward regulator increments off the active face.
    pub forward_complementarity_defect: f64,
    /// Exact sum of backward regulator increments off the active face.
    pub backward_complementarity_defect: f64,
    pub y_monotone: bool,
    pub f_monotone: bool,
    /// Whether `x = z + R y` holds bit-exactly at every grid point.
    pub regulation_identity_exact: bool,
    pub growth_violations: Vec<GrowthCheck>,
    pub growth_checks: usize,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.terminal_residual == 0.0
            && self.forward_complementarity_defect == 0.0
            && self.backward_complementarity_defect == 0.0
            && self.y_monotone
            && self.f_monotone
            && self.regulation_identity_exact
            && self.growth_violations.is_empty()
    }
}

/// Validate a solution against its problem.
pub fn validate_solution(problem: &FbsdeProblem, solution: &EnsembleSolution) -> ValidationReport {
    let mut report = ValidationReport {
        y_monotone: true,
        f_monotone: true,
        regulation_identity_exact: true,
        ..Default::default()
    };
    let dims = problem.coefficients.dims;
    let paths = solution.x.paths();
    let points = solution.x.points();
    let last = points - 1;

    for path in 0..paths {
        let h_val = (problem.coefficients.terminal)(solution.x.get(path, last));
        let resid = solution
            .v
            .get(path, last)
            .iter()
            .zip(h_val.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        report.terminal_residual = report.terminal_residual.max(resid);
    }

    if let Some(spec) = &problem.forward_reflection {
        for path in 0..paths {
            for k in 1..points {
                let yk = solution.y.get(path, k);
                let yp = solution.y.get(path, k - 1);
                for i in 0..spec.domain().face_count() {
                    let dy = yk[i] - yp[i];
                    if dy < 0.0 {
                        report.y_monotone = false;
                    }
                    if dy > 0.0 {
                        let x = nalgebra::DVector::from_column_slice(solution.x.get(path, k));
                        if !spec.domain().on_face(&x, i) {
                            report.forward_complementarity_defect += dy;
                        }
                    }
                }
            }
            for k in 0..points {
                let mut rebuilt = nalgebra::DVector::from_column_slice(
                    solution.forward_free.get(path, k),
                );
                rebuilt += spec.r() * nalgebra::DVector::from_column_slice(solution.y.get(path, k));
                if rebuilt
                    .iter()
                    .zip(solution.x.get(path, k).iter())
                    .any(|(a, b)| a.to_bits() != b.to_bits())
                {
                    report.regulation_identity_exact = false;
                }
            }
        }
    }

    if let Some(spec) = &problem.backward_reflection {
        for path in 0..paths {
            for k in 1..points {
                let fk = solution.f.get(path, k);
                let fp = solution.f.get(path, k - 1);
                for i in 0..spec.domain().face_count() {
                    let dfi = fk[i] - fp[i];
                    if dfi < 0.0 {
                        report.f_monotone = false;
                    }
                    if dfi > 0.0 {
                        // The backward increment over (t_{k-1}, t_k] is
                        // generated while projecting V(t_{k-1}).
                        let v = nalgebra::DVector::from_column_slice(
                            solution.v.get(path, k - 1),
                        );
                        if !spec.domain().on_face(&v, i) {
                            report.backward_complementarity_defect += dfi;
                        }
                    }
                }
            }
        }
    }

    // Growth spot checks on a deterministic subsample of states.
    let rates = &problem.driver.rates;
    let stride = (paths / 8).max(1);
    let tstride = (points / 8).max(1);
    for path in (0..paths).step_by(stride) {
        for k in (0..points - 1).step_by(tstride) {
            let t = solution.times[k];
            let x = solution.x.get(path, k);
            let v = solution.v.get(path, k);
            let v_bar = solution.v_bar.get(path, k);
            let v_tilde = solution.v_tilde.get(path, k);
            let u = (problem.coefficients.control)(t, x);
            let args = CoeffArgs {
                t,
                x,
                v,
                v_bar,
                v_tilde,
                u: &u,
            };
            let nu_norm = {
                let mut acc = 0.0;
                for (j, lam) in rates.iter().enumerate() {
                    let mut col = 0.0_f64;
                    for l in 0..dims.q {
                        col = col.max(v_tilde[l * dims.h + j].abs());
                    }
                    acc += lam * col * col;
                }
                acc.sqrt()
            };
            let scale = 1.0
                + sup_norm(x)
                + sup_norm(v)
                + sup_norm(v_bar)
                + nu_norm;
            let bound = problem.coefficients.lipschitz.value(t) * scale;
            for (name, vals) in [
                ("b", (problem.coefficients.drift)(&args)),
                ("sigma", (problem.coefficients.diffusion)(&args)),
                ("c", (problem.coefficients.driver)(&args)),
                ("alpha", (problem.coefficients.backward_diffusion)(&args)),
            ] {
                report.growth_checks += 1;
                let norm = sup_norm(&vals);
                if norm > bound + BOUNDARY_TOL {
                    report.growth_violations.push(GrowthCheck {
                        coefficient: name,
                        path,
                        step: k,
                        norm,
                        bound,
                    });
                }
            }
        }
    }

    if !report.y_monotone {
        report.messages.push("forward regulator decreases".into());
    }
    if !report.f_monotone {
        report.messages.push("backward regulator decreases".into());
    }
    if report.forward_complementarity_defect > 0.0 {
        report
            .messages
            .push("forward regulator grows off its face".into());
    }
    if report.backward_complementarity_defect > 0.0 {
        report
            .messages
            .push("backward regulator grows off its face".into());
    }
    if !report.regulation_identity_exact {
        report.messages.push("x != z + R y at some grid point".into());
    }
    if !report.growth_violations.is_empty() {
        report.messages.push(format!(
            "{} growth-bound spot checks failed",
            report.growth_violations.len()
        ));
    }
    report
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbsde::{picard_iterate, CoefficientSet, Dims, PicardConfig};
    use crate::levy::LevyDriver;
    use crate::reflection::ReflectionSpec;
    use nalgebra::DVector;
    use std::sync::Arc;

    fn reflected_brownian_problem() -> FbsdeProblem {
        let dims = Dims { p: 1, q: 1, d: 1, h: 0, u: 1 };
        let mut coeffs = CoefficientSet::zero(dims);
        coeffs.diffusion = Arc::new(|_| vec![1.0]);
        coeffs.terminal = Arc::new(|x| vec![x[0]]);
        coeffs.lipschitz = crate::fbsde::LipschitzBound::Constant(1.0);
        FbsdeProblem {
            coefficients: coeffs,
            forward_reflection: Some(ReflectionSpec::normal_orthant(1).unwrap()),
            backward_reflection: None,
            driver: LevyDriver::brownian(1),
            horizon: 1.0,
            x0: DVector::from_column_slice(&[0.5]),
        }
    }

    #[test]
    fn solved_ensemble_passes_all_checks() {
        let problem = reflected_brownian_problem();
        let config = PicardConfig {
            paths: 200,
            steps: 30,
            seed: 8,
            ..Default::default()
        };
        let sol = picard_iterate(&problem, &config).unwrap();
        let report = validate_solution(&problem, &sol);
        assert!(report.passed(), "report: {report:?}");
        assert_eq!(report.terminal_residual, 0.0);
    }

    #[test]
    fn corrupted_regulator_is_flagged() {
        let problem = reflected_brownian_problem();
        let config = PicardConfig {
            paths: 50,
            steps: 20,
            seed: 8,
            ..Default::default()
        };
        let mut sol = picard_iterate(&problem, &config).unwrap();
        // Force a decreasing regulator step on one path.
        let last = sol.y.points() - 1;
        sol.y.get_mut(0, last)[0] = -1.0;
        let report = validate_solution(&problem, &sol);
        assert!(!report.y_monotone);
        assert!(!report.passed());
    }
}
