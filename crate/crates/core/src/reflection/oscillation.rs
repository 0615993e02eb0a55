//! Oscillation, modulus of continuity, and the empirical oscillation
//! inequality `Osc(x), Osc(y) <= kappa * Osc(z)` over grid subintervals.

use super::{skorokhod_solve, ReflectionError, ReflectionSpec, RegulatedPath};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

/// Largest sup-norm deviation `max ||v(t) - v(s)||` over grid points of
/// `[t1, t2]`; zero when the interval captures at most one point.
pub fn oscillation(times: &[f64], values: &[DVector<f64>], t1: f64, t2: f64) -> f64 {
    if values.is_empty() || t2 < t1 {
        return 0.0;
    }
    let dim = values[0].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut seen = false;
    for (k, t) in times.iter().enumerate() {
        if *t >= t1 && *t <= t2 {
            seen = true;
            for i in 0..dim {
                lo[i] = lo[i].min(values[k][i]);
                hi[i] = hi[i].max(values[k][i]);
            }
        }
    }
    if !seen {
        return 0.0;
    }
    (0..dim).map(|i| hi[i] - lo[i]).fold(0.0_f64, f64::max)
}

/// Discrete modulus of continuity: the minimum over partitions of the
/// grid into cells of length strictly greater than `delta` of the largest
/// cell oscillation.
///
/// Cells are half-open `[t_a, t_b)` with breakpoints restricted to grid
/// times; the final cell closes at `T` so every grid point is covered.
pub fn modulus_of_continuity(
    times: &[f64],
    values: &[DVector<f64>],
    delta: f64,
) -> Result<f64, ReflectionError> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(ReflectionError::Dimension(
            "need a grid with at least two points".into(),
        ));
    }
    let horizon = times[times.len() - 1] - times[0];
    if delta <= 0.0 || delta >= horizon {
        return Err(ReflectionError::Parameter(format!(
            "delta must lie strictly between 0 and the horizon {horizon}"
        )));
    }
    let n = times.len();
    let dim = values[0].len();

    // Oscillation over a point range grown leftward one index at a time.
    let osc_range = |i: usize, lo: &mut [f64], hi: &mut [f64]| -> f64 {
        for c in 0..dim {
            lo[c] = lo[c].min(values[i][c]);
            hi[c] = hi[c].max(values[i][c]);
        }
        (0..dim).map(|c| hi[c] - lo[c]).fold(0.0_f64, f64::max)
    };

    // dp[j] = best max-oscillation over partitions of the prefix ending
    // with a cut at grid index j (cell contents [.., j-1]).
    let mut dp = vec![f64::INFINITY; n + 1];
    dp[0] = 0.0;
    let mut best = f64::INFINITY;
    for j in 1..=n {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        // The last cell is closed: it must absorb index n-1 and reach T.
        let closes = j == n;
        let end_time = if closes { times[n - 1] } else { times[j] };
        for i in (0..j).rev() {
            let osc = osc_range(i, &mut lo, &mut hi);
            if end_time - times[i] > delta && dp[i] < f64::INFINITY {
                let cand = dp[i].max(osc);
                if closes {
                    best = best.min(cand);
                } else {
                    dp[j] = dp[j].min(cand);
                }
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct OscillationViolation {
    pub process: &'static str,
    pub start_index: usize,
    pub end_index: usize,
    pub osc: f64,
    pub bound: f64,
}

/// Outcome of checking the oscillation inequality on one regulated path.
#[derive(Debug, Clone)]
pub struct OscillationReport {
    pub kappa: f64,
    /// Largest observed `Osc(x)/Osc(z)` over subintervals with moving `z`.
    pub max_x_ratio: f64,
    /// Largest observed `Osc(y)/Osc(z)`.
    pub max_y_ratio: f64,
    pub violations: Vec<OscillationViolation>,
}

impl OscillationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify `Osc(x) <= kappa Osc(z)` and `Osc(y) <= kappa Osc(z)` over all
/// grid subintervals, reporting the tightest ratios and any violations.
pub fn check_oscillation_inequality(reg: &RegulatedPath, kappa: f64) -> OscillationReport {
    let n = reg.times.len();
    let p = if n > 0 { reg.x[0].len() } else { 0 };
    let b = if n > 0 { reg.y[0].len() } else { 0 };
    let mut report = OscillationReport {
        kappa,
        max_x_ratio: 0.0,
        max_y_ratio: 0.0,
        violations: Vec::new(),
    };
    let slack = 1e-12;
    for a in 0..n {
        let mut xlo = reg.x[a].clone();
        let mut xhi = reg.x[a].clone();
        let mut ylo = reg.y[a].clone();
        let mut yhi = reg.y[a].clone();
        let mut zlo = reg.z[a].clone();
        let mut zhi = reg.z[a].clone();
        for t in a + 1..n {
            for i in 0..p {
                xlo[i] = xlo[i].min(reg.x[t][i]);
                xhi[i] = xhi[i].max(reg.x[t][i]);
                zlo[i] = zlo[i].min(reg.z[t][i]);
                zhi[i] = zhi[i].max(reg.z[t][i]);
            }
            for i in 0..b {
                ylo[i] = ylo[i].min(reg.y[t][i]);
                yhi[i] = yhi[i].max(reg.y[t][i]);
            }
            let osc_x = (0..p).map(|i| xhi[i] - xlo[i]).fold(0.0_f64, f64::max);
            let osc_z = (0..p).map(|i| zhi[i] - zlo[i]).fold(0.0_f64, f64::max);
            let osc_y = (0..b).map(|i| yhi[i] - ylo[i]).fold(0.0_f64, f64::max);
            let bound = kappa * osc_z;
            if osc_z > 0.0 {
                report.max_x_ratio = report.max_x_ratio.max(osc_x / osc_z);
                report.max_y_ratio = report.max_y_ratio.max(osc_y / osc_z);
            } else {
                if osc_x > slack {
                    report.max_x_ratio = f64::INFINITY;
                }
                if osc_y > slack {
                    report.max_y_ratio = f64::INFINITY;
                }
            }
            if osc_x > bound + slack {
                report.violations.push(OscillationViolation {
                    process: "x",
                    start_index: a,
                    end_index: t,
                    osc: osc_x,
                    bound,
                });
            }
            if osc_y > bound + slack {
                report.violations.push(OscillationViolation {
                    process: "y",
                    start_index: a,
                    end_index: t,
                    osc: osc_y,
                    bound,
                });
            }
        }
    }
    report
}

/// Parameters of the sampling surrogate for the oscillation constant.
#[derive(Debug, Clone, Copy)]
pub struct KappaConfig {
    /// Steps per sampled path.
    pub steps: usize,
    /// Standard deviation of each increment component.
    pub step_scale: f64,
    /// Multiplier applied to the worst observed ratio.
    pub safety_factor: f64,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            step_scale: 0.4,
            safety_factor: 1.5,
        }
    }
}

/// Estimate the oscillation constant by sampling random piecewise-constant
/// paths, regulating them, and taking the worst subinterval ratio times a
/// safety factor.
///
/// The constant of the oscillation inequality depends only on the normals
/// and the reflection matrix; no closed form is available, so a sampling
/// surrogate is used.
pub fn estimate_kappa(
    spec: &ReflectionSpec,
    trials: usize,
    seed: u64,
) -> Result<f64, ReflectionError> {
    estimate_kappa_with(spec, trials, seed, KappaConfig::default())
}

pub fn estimate_kappa_with(
    spec: &ReflectionSpec,
    trials: usize,
    seed: u64,
    config: KappaConfig,
) -> Result<f64, ReflectionError> {
    if trials == 0 {
        return Err(ReflectionError::Parameter(
            "kappa estimation needs at least one trial".into(),
        ));
    }
    if !spec.is_completely_s() {
        return Err(ReflectionError::Parameter(
            "kappa estimation requires a completely-S reflection".into(),
        ));
    }
    let p = spec.domain().dim();
    let start = spec.domain().interior_point();
    let mut worst = 0.0_f64;
    for trial in 0..trials {
        let mut rng = crate::seeding::substream(seed, trial as u64);
        let times: Vec<f64> = (0..=config.steps).map(|k| k as f64).collect();
        let mut z = Vec::with_capacity(config.steps + 1);
        z.push(start.clone());
        for _ in 0..config.steps {
            let prev = z.last().unwrap();
            let step = DVector::from_fn(p, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                config.step_scale * g
            });
            z.push(prev + step);
        }
        let reg = skorokhod_solve(&times, &z, spec)?;
        let report = check_oscillation_inequality(&reg, f64::INFINITY);
        worst = worst.max(report.max_x_ratio).max(report.max_y_ratio);
    }
    Ok(worst * config.safety_factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_path(vals: &[f64]) -> (Vec<f64>, Vec<DVector<f64>>) {
        let times: Vec<f64> = (0..vals.len()).map(|k| k as f64).collect();
        let values = vals
            .iter()
            .map(|v| DVector::from_column_slice(&[*v]))
            .collect();
        (times, values)
    }

    #[test]
    fn oscillation_examples() {
        let (times, constant) = scalar_path(&[2.0, 2.0, 2.0]);
        assert_eq!(oscillation(&times, &constant, 0.0, 2.0), 0.0);

        let (times, wiggle) = scalar_path(&[0.0, 1.0, -1.0]);
        assert_eq!(oscillation(&times, &wiggle, 0.0, 2.0), 2.0);

        let (times, mono) = scalar_path(&[0.0, 0.5, 1.25, 3.0]);
        assert_eq!(oscillation(&times, &mono, 0.0, 3.0), 3.0);
        // Monotone in the interval.
        assert!(oscillation(&times, &mono, 1.0, 2.0) <= oscillation(&times, &mono, 0.0, 3.0));
    }

    #[test]
    fn modulus_constant_path_is_zero() {
        let (times, values) = scalar_path(&[1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(modulus_of_continuity(&times, &values, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn modulus_isolates_single_jump() {
        // Jump of size one halfway; a breakpoint at the jump gives zero.
        let n = 10;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let values: Vec<DVector<f64>> = times
            .iter()
            .map(|t| DVector::from_column_slice(&[if *t >= 0.5 { 1.0 } else { 0.0 }]))
            .collect();
        let w = modulus_of_continuity(&times, &values, 0.3).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn modulus_linear_ramp() {
        // z(t) = t on [0,1] with delta = 0.4: two cells split at 0.5.
        let n = 10;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let values: Vec<DVector<f64>> = times
            .iter()
            .map(|t| DVector::from_column_slice(&[*t]))
            .collect();
        let w = modulus_of_continuity(&times, &values, 0.4).unwrap();
        assert_relative_eq!(w, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn modulus_rejects_bad_delta() {
        let (times, values) = scalar_path(&[0.0, 1.0, 2.0]);
        assert!(modulus_of_continuity(&times, &values, 2.0).is_err());
        assert!(modulus_of_continuity(&times, &values, 0.0).is_err());
    }

    #[test]
    fn unregulated_path_has_unit_x_ratio() {
        // y = 0 everywhere, so x = z: the x-ratio is one, the y-ratio zero.
        let spec = crate::reflection::ReflectionSpec::normal_orthant(1).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let z: Vec<DVector<f64>> = times
            .iter()
            .map(|t| DVector::from_column_slice(&[1.0 + (0.3 * t).sin().abs()]))
            .collect();
        let reg = skorokhod_solve(&times, &z, &spec).unwrap();
        let report = check_oscillation_inequality(&reg, 2.0);
        assert!(report.passed());
        assert_relative_eq!(report.max_x_ratio, 1.0, max_relative = 1e-12);
        assert_eq!(report.max_y_ratio, 0.0);
    }

    #[test]
    fn kappa_rejects_zero_trials() {
        let spec = crate::reflection::ReflectionSpec::normal_orthant(1).unwrap();
        assert!(estimate_kappa(&spec, 0, 1).is_err());
    }
}
