//! Discrete-time solvers for the coupled reflected forward-backward SDE
//! system: reflected jump-Euler forward simulation, least-squares Monte
//! Carlo backward recursion, and the Picard iteration coupling them on a
//! frozen driver realization.

mod backward;
mod forward;
mod picard;
mod regression;
mod validate;

pub use backward::{solve_backward_lsmc, BackwardOutput};
pub use forward::{simulate_forward, ForwardOutput};
pub use picard::{picard_iterate, weighted_norm, xi_weight, PicardConfig, PicardDiagnostics};
pub use regression::{PolyBasis, RegressionSnapshot};
pub use validate::{validate_solution, GrowthCheck, ValidationReport};

use crate::levy::{LevyDriver, LevyError};
use crate::reflection::{ReflectionError, ReflectionSpec, BOUNDARY_TOL};
use nalgebra::DVector;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FbsdeError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("coefficient evaluation failed: {0}")]
    Coefficient(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

/// Problem dimensions: forward state `p`, backward value `q`, Brownian
/// components `d`, jump components `h`, control components `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub p: usize,
    pub q: usize,
    pub d: usize,
    pub h: usize,
    pub u: usize,
}

/// Arguments handed to every coefficient function. Matrix-valued entries
/// are row-major slices (`v_bar` is `q x d`, `v_tilde` is `q x h`).
#[derive(Debug, Clone, Copy)]
pub struct CoeffArgs<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub v: &'a [f64],
    pub v_bar: &'a [f64],
    pub v_tilde: &'a [f64],
    pub u: &'a [f64],
}

pub type VecCoeff = Arc<dyn Fn(&CoeffArgs) -> Vec<f64> + Send + Sync>;
/// Jump coefficient column for component `j` at mark `z`.
pub type JumpEval = Arc<dyn Fn(&CoeffArgs, usize, f64) -> Vec<f64> + Send + Sync>;
/// Analytic mean of the jump column against the component's mark law.
pub type JumpMean = Arc<dyn Fn(&CoeffArgs, usize) -> Vec<f64> + Send + Sync>;
pub type TerminalMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ControlMap = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Randomized linear-growth/Lipschitz bound: constant or a deterministic
/// function of time (general adapted bounds are spot-checked only).
#[derive(Clone)]
pub enum LipschitzBound {
    Constant(f64),
    TimeVarying(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for LipschitzBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LipschitzBound::Constant(l) => write!(f, "Constant({l})"),
            LipschitzBound::TimeVarying(_) => write!(f, "TimeVarying(..)"),
        }
    }
}

impl LipschitzBound {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            LipschitzBound::Constant(l) => *l,
            LipschitzBound::TimeVarying(f) => f(t),
        }
    }

    /// Supremum over a grid, used for the default weight `gamma`.
    pub fn sup_on(&self, times: &[f64]) -> f64 {
        times.iter().map(|t| self.value(*t)).fold(0.0, f64::max)
    }

    /// `E int_0^T L^2 dt` for the deterministic cases (trapezoid rule for
    /// time-varying bounds); finite by construction.
    pub fn mean_square_integral(&self, horizon: f64) -> f64 {
        match self {
            LipschitzBound::Constant(l) => l * l * horizon,
            LipschitzBound::TimeVarying(f) => {
                let n = 512;
                let dt = horizon / n as f64;
                (0..n)
                    .map(|k| {
                        let a = f(k as f64 * dt);
                        let b = f((k + 1) as f64 * dt);
                        0.5 * (a * a + b * b) * dt
                    })
                    .sum()
            }
        }
    }
}

/// The full coefficient set of the coupled system, all evaluable at
/// `(t, x, v, v_bar, v_tilde, u)`.
#[derive(Clone)]
pub struct CoefficientSet {
    pub dims: Dims,
    /// Forward drift `b`: p-vector.
    pub drift: VecCoeff,
    /// Forward diffusion `sigma`: `p x d` row-major.
    pub diffusion: VecCoeff,
    /// Forward jump column `eta_j(z)`: p-vector per component.
    pub jump: JumpEval,
    /// Mark-law mean of `eta_j`.
    pub jump_mean: JumpMean,
    /// Backward driver `c`: q-vector.
    pub driver: VecCoeff,
    /// Backward martingale coefficient `alpha`: `q x d` row-major.
    pub backward_diffusion: VecCoeff,
    /// Backward jump column `zeta_j(z)`: q-vector per component.
    pub backward_jump: JumpEval,
    /// Mark-law mean of `zeta_j`.
    pub backward_jump_mean: JumpMean,
    /// Terminal map `H`: p-vector state to q-vector value.
    pub terminal: TerminalMap,
    /// Growth/Lipschitz bound process.
    pub lipschitz: LipschitzBound,
    /// Control feedback map `u(t, x)`.
    pub control: ControlMap,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dims", &self.dims)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// All-zero coefficients with zero terminal value; callers override
    /// the fields they need.
    pub fn zero(dims: Dims) -> Self {
        let p = dims.p;
        let q = dims.q;
        let d = dims.d;
        let nu = dims.u;
        Self {
            dims,
            drift: Arc::new(move |_| vec![0.0; p]),
            diffusion: Arc::new(move |_| vec![0.0; p * d]),
            jump: Arc::new(move |_, _, _| vec![0.0; p]),
            jump_mean: Arc::new(move |_, _| vec![0.0; p]),
            driver: Arc::new(move |_| vec![0.0; q]),
            backward_diffusion: Arc::new(move |_| vec![0.0; q * d]),
            backward_jump: Arc::new(move |_, _, _| vec![0.0; q]),
            backward_jump_mean: Arc::new(move |_, _| vec![0.0; q]),
            terminal: Arc::new(move |_| vec![0.0; q]),
            lipschitz: LipschitzBound::Constant(1.0),
            control: Arc::new(move |_, _| vec![0.0; nu]),
        }
    }
}

/// A coupled FB-SDE problem instance.
#[derive(Debug, Clone)]
pub struct FbsdeProblem {
    pub coefficients: CoefficientSet,
    pub forward_reflection: Option<ReflectionSpec>,
    pub backward_reflection: Option<ReflectionSpec>,
    pub driver: LevyDriver,
    pub horizon: f64,
    pub x0: DVector<f64>,
}

impl FbsdeProblem {
    pub fn validate(&self) -> Result<(), FbsdeError> {
        let dims = self.coefficients.dims;
        if self.driver.brownian_dim != dims.d || self.driver.jump_dim() != dims.h {
            return Err(FbsdeError::Dimension(format!(
                "driver provides (d={}, h={}), coefficients expect (d={}, h={})",
                self.driver.brownian_dim,
                self.driver.jump_dim(),
                dims.d,
                dims.h
            )));
        }
        if self.x0.len() != dims.p {
            return Err(FbsdeError::Dimension(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                dims.p
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(FbsdeError::Config("horizon must be positive".into()));
        }
        if let Some(spec) = &self.forward_reflection {
            if spec.domain().dim() != dims.p {
                return Err(FbsdeError::Dimension(
                    "forward reflection domain dimension != p".into(),
                ));
            }
            if !spec.domain().contains(&self.x0, BOUNDARY_TOL) {
                return Err(FbsdeError::Config(
                    "x0 must lie in the forward domain".into(),
                ));
            }
        }
        if let Some(spec) = &self.backward_reflection {
            if spec.domain().dim() != dims.q {
                return Err(FbsdeError::Dimension(
                    "backward reflection domain dimension != q".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of forward boundary faces (zero without reflection).
    pub fn forward_faces(&self) -> usize {
        self.forward_reflection
            .as_ref()
            .map_or(0, |s| s.domain().face_count())
    }

    /// Number of backward boundary faces.
    pub fn backward_faces(&self) -> usize {
        self.backward_reflection
            .as_ref()
            .map_or(0, |s| s.domain().face_count())
    }
}

/// Flat `[path][time point][component]` storage for ensemble series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBatch {
    paths: usize,
    points: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SeriesBatch {
    pub fn zeros(paths: usize, points: usize, dim: usize) -> Self {
        Self {
            paths,
            points,
            dim,
            data: vec![0.0; paths * points * dim],
        }
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, path: usize, point: usize) -> &[f64] {
        let base = (path * self.points + point) * self.dim;
        &self.data[base..base + self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, path: usize, point: usize) -> &mut [f64] {
        let base = (path * self.points + point) * self.dim;
        &mut self.data[base..base + self.dim]
    }

    pub fn set(&mut self, path: usize, point: usize, values: &[f64]) {
        self.get_mut(path, point).copy_from_slice(values);
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.paths == other.paths && self.points == other.points && self.dim == other.dim
    }
}

/// One Picard iterate: the four processes entering the weighted norm.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub x: SeriesBatch,
    pub v: SeriesBatch,
    pub v_bar: SeriesBatch,
    pub v_tilde: SeriesBatch,
}

impl Iterate {
    pub fn zeros(paths: usize, points: usize, dims: Dims) -> Self {
        Self {
            x: SeriesBatch::zeros(paths, points, dims.p),
            v: SeriesBatch::zeros(paths, points, dims.q),
            v_bar: SeriesBatch::zeros(paths, points, dims.q * dims.d),
            v_tilde: SeriesBatch::zeros(paths, points, dims.q * dims.h),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.x.same_shape(&other.x)
            && self.v.same_shape(&other.v)
            && self.v_bar.same_shape(&other.v_bar)
            && self.v_tilde.same_shape(&other.v_tilde)
    }
}

/// Complete per-path discrete 6-tuple with solver diagnostics.
#[derive(Debug, Clone)]
pub struct EnsembleSolution {
    pub times: Vec<f64>,
    pub x: SeriesBatch,
    pub y: SeriesBatch,
    pub v: SeriesBatch,
    pub v_bar: SeriesBatch,
    pub v_tilde: SeriesBatch,
    pub f: SeriesBatch,
    /// Cumulative forward free path (initial state plus drift and noise,
    /// before reflection), kept so `x = z + R y` can be re-checked exactly.
    pub forward_free: SeriesBatch,
    /// Per backward step regression metadata.
    pub regressions: Vec<RegressionSnapshot>,
    pub diagnostics: PicardDiagnostics,
    /// Regression standard error of the fitted value at time zero.
    pub value_origin_se: DVector<f64>,
}

impl EnsembleSolution {
    /// Ensemble mean of the backward value at time zero.
    pub fn value_at_origin(&self) -> DVector<f64> {
        let q = self.v.dim();
        let mut mean = DVector::zeros(q);
        for path in 0..self.v.paths() {
            for (i, val) in self.v.get(path, 0).iter().enumerate() {
                mean[i] += val;
            }
        }
        mean / self.v.paths() as f64
    }

    /// Standard error of the time-zero value per component, floored at
    /// relative 1e-7 so degenerate zero-variance ensembles (deterministic
    /// drivers) do not report spurious infinite confidence.
    pub fn value_standard_error(&self) -> DVector<f64> {
        let mean = self.value_at_origin();
        DVector::from_fn(self.v.dim(), |i, _| {
            self.value_origin_se[i].max(1e-7 * mean[i].abs().max(1.0))
        })
    }
}
