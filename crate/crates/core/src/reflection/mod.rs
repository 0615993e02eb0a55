//! Domain geometry, completely-S reflection certificates, Skorohod
//! problem solvers, and oscillation diagnostics.
//!
//! A reflection specification pairs a polyhedral domain (orthant or
//! hyperbox) with a `p x b` reflection matrix `R` whose `i`th column is
//! the push direction applied on boundary face `i`. The solvers regulate
//! a free path `z` into the domain by a nondecreasing boundary process
//! `y` with `x = z + R y`, where `y_i` may grow only while `x` sits on
//! face `i`.

mod lcp;
mod oscillation;
mod skorokhod;
mod smatrix;

pub use lcp::{solve_jump_lcp, LcpStep};
pub use oscillation::{
    check_oscillation_inequality, estimate_kappa, modulus_of_continuity, oscillation,
    KappaConfig, OscillationReport, OscillationViolation,
};
pub use skorokhod::{skorokhod_fixed_point, skorokhod_solve};
pub use smatrix::{
    is_completely_s, is_s_matrix, spectral_radius_condition, CompletelySCertificate,
    SWitness, SpectralRadiusCertificate,
};

use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;
use thiserror::Error;

/// Absolute tolerance deciding whether a point lies on a boundary face.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum ReflectionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("reflection matrix not normalized: diag(N'R) entry {face} is {value}, expected 1")]
    Normalization { face: usize, value: f64 },
    #[error("LCP infeasible at step {step}: {detail}")]
    LcpInfeasible { step: usize, detail: String },
    #[error("fixed-point iteration stalled after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("regulated path invariant violated: {0}")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Orthant,
    Hyperbox,
}

/// Polyhedral state space `{x : n_i . x >= c_i}` described by inward unit
/// normals and face thresholds.
///
/// Faces `0..p` are the coordinate lower faces (`n_i = e_i`, threshold 0).
/// A hyperbox adds upper faces `p..2p` with `n_{p+i} = -e_i` and threshold
/// `-u_i`, so the face offset (distance of the face plane from the origin)
/// stays the positive box width `u_i`.
#[derive(Debug, Clone)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
    normals: DMatrix<f64>,
    thresholds: DVector<f64>,
}

impl Domain {
    /// Nonnegative orthant in dimension `p` (faces `x_i = 0`).
    pub fn orthant(p: usize) -> Result<Self, ReflectionError> {
        if p == 0 {
            return Err(ReflectionError::InvalidDomain(
                "dimension must be positive".into(),
            ));
        }
        Ok(Self {
            kind: DomainKind::Orthant,
            dim: p,
            normals: DMatrix::identity(p, p),
            thresholds: DVector::zeros(p),
        })
    }

    /// Hyperbox `[0, upper_1] x ... x [0, upper_p]` with positive widths.
    pub fn hyperbox(upper: &[f64]) -> Result<Self, ReflectionError> {
        let p = upper.len();
        if p == 0 {
            return Err(ReflectionError::InvalidDomain(
                "dimension must be positive".into(),
            ));
        }
        if upper.iter().any(|u| !u.is_finite() || *u <= 0.0) {
            return Err(ReflectionError::InvalidDomain(
                "hyperbox widths must be positive and finite".into(),
            ));
        }
        let mut normals = DMatrix::zeros(p, 2 * p);
        let mut thresholds = DVector::zeros(2 * p);
        for i in 0..p {
            normals[(i, i)] = 1.0;
            normals[(i, p + i)] = -1.0;
            thresholds[p + i] = -upper[i];
        }
        Ok(Self {
            kind: DomainKind::Hyperbox,
            dim: p,
            normals,
            thresholds,
        })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn face_count(&self) -> usize {
        self.normals.ncols()
    }

    /// Inward unit normals as the `p x b` matrix `N = (n_1, ..., n_b)`.
    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    /// Nonnegative face offsets: zero on lower faces, the box width on
    /// upper faces.
    pub fn offsets(&self) -> DVector<f64> {
        self.thresholds.map(f64::abs)
    }

    /// Signed gap to face `i`; nonnegative inside the domain.
    pub fn gap(&self, x: &DVector<f64>, face: usize) -> f64 {
        self.normals.column(face).dot(x) - self.thresholds[face]
    }

    /// All face gaps `N'x - c` at once.
    pub fn gaps(&self, x: &DVector<f64>) -> DVector<f64> {
        self.normals.transpose() * x - &self.thresholds
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.face_count()).all(|i| self.gap(x, i) >= -tol)
    }

    pub fn on_face(&self, x: &DVector<f64>, face: usize) -> bool {
        self.gap(x, face).abs() <= BOUNDARY_TOL
    }

    /// A point safely inside the domain (orthant: all-ones, box: center).
    pub fn interior_point(&self) -> DVector<f64> {
        match self.kind {
            DomainKind::Orthant => DVector::from_element(self.dim, 1.0),
            DomainKind::Hyperbox => {
                DVector::from_fn(self.dim, |i, _| -0.5 * self.thresholds[self.dim + i])
            }
        }
    }

    /// Whether two faces can be active at a common point. A box floor and
    /// its own cap never meet; all other pairs do.
    pub fn faces_meet(&self, i: usize, j: usize) -> bool {
        match self.kind {
            DomainKind::Orthant => true,
            DomainKind::Hyperbox => i % self.dim != j % self.dim || i == j,
        }
    }

    /// Nonempty face subsets whose faces share a common point of the
    /// domain; these index the corners and edges where simultaneous
    /// regulation can occur.
    pub fn active_compatible_subsets(&self) -> Vec<Vec<usize>> {
        let b = self.face_count();
        let mut out = Vec::new();
        'mask: for mask in 1usize..(1 << b) {
            let idx: Vec<usize> = (0..b).filter(|i| mask & (1 << i) != 0).collect();
            for (s, &i) in idx.iter().enumerate() {
                for &j in &idx[s + 1..] {
                    if !self.faces_meet(i, j) {
                        continue 'mask;
                    }
                }
            }
            out.push(idx);
        }
        out
    }
}

/// Reflection data: a domain together with the skew reflection matrix and
/// lazily computed condition certificates.
#[derive(Debug)]
pub struct ReflectionSpec {
    domain: Domain,
    r: DMatrix<f64>,
    nr: DMatrix<f64>,
    completely_s: OnceLock<CompletelySCertificate>,
    spectral: OnceLock<Result<SpectralRadiusCertificate, ReflectionError>>,
}

impl Clone for ReflectionSpec {
    fn clone(&self) -> Self {
        // Certificates are recomputed on demand by the clone.
        Self::new(self.domain.clone(), self.r.clone()).expect("clone of valid spec")
    }
}

impl ReflectionSpec {
    pub fn new(domain: Domain, r: DMatrix<f64>) -> Result<Self, ReflectionError> {
        if r.nrows() != domain.dim() || r.ncols() != domain.face_count() {
            return Err(ReflectionError::Dimension(format!(
                "reflection matrix is {}x{}, domain needs {}x{}",
                r.nrows(),
                r.ncols(),
                domain.dim(),
                domain.face_count()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ReflectionError::Dimension(
                "reflection matrix entries must be finite".into(),
            ));
        }
        let nr = domain.normals().transpose() * &r;
        Ok(Self {
            domain,
            r,
            nr,
            completely_s: OnceLock::new(),
            spectral: OnceLock::new(),
        })
    }

    /// Normal reflection on the orthant (identity matrix).
    pub fn normal_orthant(p: usize) -> Result<Self, ReflectionError> {
        Self::new(Domain::orthant(p)?, DMatrix::identity(p, p))
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// The `b x b` product `N'R` driving the gap dynamics.
    pub fn nr(&self) -> &DMatrix<f64> {
        &self.nr
    }

    /// Completely-S certificate, computed once and cached.
    pub fn completely_s_certificate(&self) -> &CompletelySCertificate {
        self.completely_s.get_or_init(|| is_completely_s(self))
    }

    pub fn is_completely_s(&self) -> bool {
        self.completely_s_certificate().holds
    }

    /// Spectral-radius certificate (requires unit diagonal of `N'R`),
    /// computed once and cached.
    pub fn spectral_certificate(&self) -> Result<&SpectralRadiusCertificate, ReflectionError> {
        self.spectral
            .get_or_init(|| spectral_radius_condition(self))
            .as_ref()
            .map_err(|e| e.clone())
    }

    pub fn satisfies_spectral_radius_condition(&self) -> Result<bool, ReflectionError> {
        Ok(self.spectral_certificate()?.holds)
    }
}

/// A discrete `(D, R)`-regulation: the regulated state `x`, the
/// nondecreasing boundary regulator `y`, and the driving free path `z`
/// on a common time grid, with `x(t_k) = z(t_k) + R y(t_k)` at every
/// grid point.
#[derive(Debug, Clone)]
pub struct RegulatedPath {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    /// Steps where the LCP had several solutions and the lexicographically
    /// minimal increment was chosen.
    pub non_unique_steps: Vec<usize>,
}

impl RegulatedPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Re-check every regulated-path invariant against `spec`.
    ///
    /// The algebraic identity `x = z + R y` is required bit-exactly (it is
    /// how solvers construct `x`); containment and complementarity use the
    /// boundary tolerance.
    pub fn validate(&self, spec: &ReflectionSpec) -> Result<(), ReflectionError> {
        let b = spec.domain().face_count();
        if self.x.len() != self.times.len()
            || self.y.len() != self.times.len()
            || self.z.len() != self.times.len()
        {
            return Err(ReflectionError::InvalidPath(
                "component lengths differ from the time grid".into(),
            ));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ReflectionError::InvalidPath(
                "time grid must be strictly increasing".into(),
            ));
        }
        if self.y[0].iter().any(|v| *v != 0.0) {
            return Err(ReflectionError::InvalidPath("y(0) != 0".into()));
        }
        for k in 0..self.times.len() {
            if !spec.domain().contains(&self.x[k], BOUNDARY_TOL) {
                return Err(ReflectionError::InvalidPath(format!(
                    "x leaves the domain at grid index {k}"
                )));
            }
            let rebuilt = &self.z[k] + spec.r() * &self.y[k];
            if rebuilt
                .iter()
                .zip(self.x[k].iter())
                .any(|(a, b)| a.to_bits() != b.to_bits())
            {
                return Err(ReflectionError::InvalidPath(format!(
                    "x != z + R y at grid index {k}"
                )));
            }
            if k > 0 {
                for i in 0..b {
                    let dy = self.y[k][i] - self.y[k - 1][i];
                    if dy < 0.0 {
                        return Err(ReflectionError::InvalidPath(format!(
                            "y_{i} decreases at grid index {k}"
                        )));
                    }
                    if dy > 0.0 && !spec.domain().on_face(&self.x[k], i) {
                        return Err(ReflectionError::InvalidPath(format!(
                            "y_{i} grows off face {i} at grid index {k} (gap {:.3e})",
                            spec.domain().gap(&self.x[k], i)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact complementarity defect: sum over steps and faces of
    /// `dy_i * [x off face i]` (zero for any valid regulation).
    pub fn complementarity_defect(&self, spec: &ReflectionSpec) -> f64 {
        let mut sum = 0.0;
        for k in 1..self.times.len() {
            for i in 0..spec.domain().face_count() {
                let dy = self.y[k][i] - self.y[k - 1][i];
                if dy > 0.0 && !spec.domain().on_face(&self.x[k], i) {
                    sum += dy;
                }
            }
        }
        sum
    }
}
