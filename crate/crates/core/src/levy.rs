//! Driving noise: Brownian increments plus finite-activity compound
//! Poisson jumps with marks, together with analytic compensators.
//!
//! Jump component `i` produces Poisson(`lambda_i dt`) events per step with
//! i.i.d. marks from a parametric law on `(0, inf)`; integrals against the
//! compensated measure subtract `lambda_i dt` times the law's mean of the
//! integrand, which is available in closed form for the supported laws.

use crate::quadrature::{gauss_laguerre, gauss_legendre};
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal, Uniform};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum LevyError {
    #[error("invalid driver: {0}")]
    InvalidDriver(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("unsupported integrand: {0}")]
    UnsupportedIntegrand(String),
}

/// Parametric jump-size law on `(0, inf)` with finite second moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkLaw {
    /// Exponential with the given rate (mean `1/rate`).
    Exponential { rate: f64 },
    /// Uniform on `(a, b)` with `0 <= a < b`.
    Uniform { a: f64, b: f64 },
    /// Deterministic mark `m > 0`.
    PointMass { m: f64 },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<(), LevyError> {
        match *self {
            MarkLaw::Exponential { rate } => {
                if !(rate > 0.0) || !rate.is_finite() {
                    return Err(LevyError::InvalidDriver(
                        "exponential mark rate must be positive".into(),
                    ));
                }
            }
            MarkLaw::Uniform { a, b } => {
                if !(0.0 <= a && a < b) || !b.is_finite() {
                    return Err(LevyError::InvalidDriver(
                        "uniform mark law needs 0 <= a < b".into(),
                    ));
                }
            }
            MarkLaw::PointMass { m } => {
                if !(m > 0.0) || !m.is_finite() {
                    return Err(LevyError::InvalidDriver(
                        "point mass must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Mean mark `E[z]`.
    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Exponential { rate } => 1.0 / rate,
            MarkLaw::Uniform { a, b } => 0.5 * (a + b),
            MarkLaw::PointMass { m } => m,
        }
    }

    /// Second moment `E[z^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkLaw::Exponential { rate } => 2.0 / (rate * rate),
            MarkLaw::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            MarkLaw::PointMass { m } => m * m,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::Exponential { rate } => Exp::new(rate).unwrap().sample(rng),
            MarkLaw::Uniform { a, b } => Uniform::new(a, b).unwrap().sample(rng),
            MarkLaw::PointMass { m } => m,
        }
    }

    /// Quadrature nodes/weights integrating against this probability law.
    pub fn quadrature(&self, order: usize) -> Vec<(f64, f64)> {
        match *self {
            MarkLaw::PointMass { m } => vec![(m, 1.0)],
            MarkLaw::Uniform { a, b } => {
                let rule = gauss_legendre(order);
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(s, w)| (0.5 * (a + b) + 0.5 * (b - a) * s, 0.5 * w))
                    .collect()
            }
            MarkLaw::Exponential { rate } => {
                let rule = gauss_laguerre(order);
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(s, w)| (s / rate, *w))
                    .collect()
            }
        }
    }
}

/// Specification of the driving noise: `d`-dimensional Brownian motion and
/// `h` independent compound-Poisson jump components.
#[derive(Debug, Clone)]
pub struct LevyDriver {
    pub brownian_dim: usize,
    pub rates: Vec<f64>,
    pub marks: Vec<MarkLaw>,
}

impl LevyDriver {
    pub fn new(brownian_dim: usize, rates: Vec<f64>, marks: Vec<MarkLaw>) -> Result<Self, LevyError> {
        if rates.len() != marks.len() {
            return Err(LevyError::InvalidDriver(
                "one mark law per jump component is required".into(),
            ));
        }
        if rates.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(LevyError::InvalidDriver(
                "jump rates must be strictly positive".into(),
            ));
        }
        for law in &marks {
            law.validate()?;
        }
        Ok(Self {
            brownian_dim,
            rates,
            marks,
        })
    }

    /// Pure-Brownian driver (no jump components).
    pub fn brownian(d: usize) -> Self {
        Self {
            brownian_dim: d,
            rates: Vec::new(),
            marks: Vec::new(),
        }
    }

    pub fn jump_dim(&self) -> usize {
        self.rates.len()
    }
}

/// One realized jump: the step it falls in, the component, and the mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub step: usize,
    pub component: usize,
    pub mark: f64,
}

/// Realized driving noise on a time grid.
#[derive(Debug, Clone)]
pub struct PathGrid {
    pub times: Vec<f64>,
    /// Brownian increments per step, flattened `[step][brownian coord]`.
    pub dw: Vec<Vec<f64>>,
    pub jumps: Vec<Jump>,
    /// Analytic compensator of the identity integrand per step and jump
    /// component: `lambda_i * E[z] * dt_k`.
    pub compensator: Vec<Vec<f64>>,
}

impl PathGrid {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }

    /// Jumps that land in the given step.
    pub fn jumps_in_step(&self, step: usize) -> impl Iterator<Item = &Jump> {
        self.jumps.iter().filter(move |j| j.step == step)
    }

    /// Compensated compound-Poisson increment of the identity integrand
    /// per component: `sum of marks - lambda E[z] dt`.
    pub fn compensated_mark_sum(&self, step: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; h];
        for j in self.jumps_in_step(step) {
            out[j.component] += j.mark;
        }
        for (i, c) in self.compensator[step].iter().enumerate() {
            out[i] -= c;
        }
        out
    }
}

/// Sample Brownian increments and jump events on the grid; fully
/// reproducible from the seed.
pub fn sample_path_grid(
    driver: &LevyDriver,
    times: &[f64],
    seed: u64,
) -> Result<PathGrid, LevyError> {
    sample_path_grid_stream(driver, times, seed, 0)
}

/// As [`sample_path_grid`] on substream `stream`, so ensembles draw
/// order-independent paths from one master seed.
pub fn sample_path_grid_stream(
    driver: &LevyDriver,
    times: &[f64],
    seed: u64,
    stream: u64,
) -> Result<PathGrid, LevyError> {
    if times.len() < 2 {
        return Err(LevyError::Grid("need at least two grid times".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LevyError::Grid(
            "time grid must be strictly increasing".into(),
        ));
    }
    let mut rng = crate::seeding::substream(seed, stream);
    let steps = times.len() - 1;
    let h = driver.jump_dim();
    let mut dw = Vec::with_capacity(steps);
    let mut jumps = Vec::new();
    let mut compensator = Vec::with_capacity(steps);
    for k in 0..steps {
        let dt = times[k + 1] - times[k];
        let sq = dt.sqrt();
        dw.push(
            (0..driver.brownian_dim)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    sq * g
                })
                .collect(),
        );
        let mut comp = Vec::with_capacity(h);
        for i in 0..h {
            let lambda = driver.rates[i];
            let count = Poisson::new(lambda * dt)
                .map_err(|e| LevyError::InvalidDriver(format!("poisson rate: {e}")))?
                .sample(&mut rng) as u64;
            for _ in 0..count {
                jumps.push(Jump {
                    step: k,
                    component: i,
                    mark: driver.marks[i].sample(&mut rng),
                });
            }
            comp.push(lambda * driver.marks[i].mean() * dt);
        }
        compensator.push(comp);
    }
    Ok(PathGrid {
        times: times.to_vec(),
        dw,
        jumps,
        compensator,
    })
}

/// Integrand with a closed-form compensator against the mark laws.
#[derive(Clone)]
pub enum Integrand {
    /// `f(z) = offset + slope * z`.
    Affine { offset: f64, slope: f64 },
    /// User-supplied evaluator together with its mean `E[f(z)]` per
    /// component under the mark law (tabulated by the caller).
    Tabulated {
        f: std::sync::Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>,
        means: Vec<f64>,
    },
}

impl std::fmt::Debug for Integrand {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Integrand::Affine { offset, slope } => fm
                .debug_struct("Affine")
                .field("offset", offset)
                .field("slope", slope)
                .finish(),
            Integrand::Tabulated { means, .. } => fm
                .debug_struct("Tabulated")
                .field("means", means)
                .finish_non_exhaustive(),
        }
    }
}

/// Integral of `f` against the compensated jump measure over step `k`:
/// realized jump contributions minus `lambda_i dt E[f(z)]` per component.
pub fn compensated_increment(
    driver: &LevyDriver,
    grid: &PathGrid,
    step: usize,
    integrand: &Integrand,
) -> Result<Vec<f64>, LevyError> {
    let h = driver.jump_dim();
    if step >= grid.steps() {
        return Err(LevyError::Grid(format!(
            "step {step} outside the grid ({} steps)",
            grid.steps()
        )));
    }
    if let Integrand::Tabulated { means, .. } = integrand {
        if means.len() != h {
            return Err(LevyError::UnsupportedIntegrand(
                "tabulated integrand needs one mean per jump component".into(),
            ));
        }
    }
    let dt = grid.dt(step);
    let mut out = vec![0.0; h];
    for jump in grid.jumps_in_step(step) {
        let v = match integrand {
            Integrand::Affine { offset, slope } => offset + slope * jump.mark,
            Integrand::Tabulated { f, .. } => f(jump.component, jump.mark),
        };
        out[jump.component] += v;
    }
    for i in 0..h {
        let mean = match integrand {
            Integrand::Affine { offset, slope } => offset + slope * driver.marks[i].mean(),
            Integrand::Tabulated { means, .. } => means[i],
        };
        out[i] -= driver.rates[i] * dt * mean;
    }
    Ok(out)
}
