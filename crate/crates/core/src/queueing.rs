//! Levy-driven multiclass queueing networks with state-dependent
//! intensities, diffusion scaling, and reflecting-Brownian-motion
//! comparisons.
//!
//! Queues are simulated exactly by thinning against declared intensity
//! bounds, so queue lengths stay integer-valued with no discretization
//! bias. Service intensities are forced to zero on empty queues, which
//! removes the reflection term from the queue dynamics.

use crate::levy::MarkLaw;
use crate::reflection::{
    skorokhod_solve, solve_jump_lcp, ReflectionError, ReflectionSpec, RegulatedPath,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QueueingError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("intensity bound exceeded for {kind} of class {class} at t={t}: rate {rate} > bound {bound} in state {state:?}")]
    BoundExceeded {
        kind: &'static str,
        class: usize,
        t: f64,
        rate: f64,
        bound: f64,
        state: Vec<i64>,
    },
    #[error("scaling error: {0}")]
    Scaling(String),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
}

/// State- and mark-dependent intensity `(t, Q, z) -> rate`.
pub type IntensityFn = Arc<dyn Fn(f64, &[i64], f64) -> f64 + Send + Sync>;
/// Routing proportions out of a class: `(t, Q, z) -> p_{j,1..p}` with sum
/// at most one; the remainder leaves the network.
pub type RoutingFn = Arc<dyn Fn(f64, &[i64], f64) -> Vec<f64> + Send + Sync>;

/// Multiclass network with per-class arrival/service intensities, routing
/// proportions, and mark laws for batch sizes.
#[derive(Clone)]
pub struct QueueNetwork {
    pub classes: usize,
    pub arrival: Vec<IntensityFn>,
    pub service: Vec<IntensityFn>,
    pub routing: Vec<RoutingFn>,
    /// Batch-size law per class; marks are rounded to positive integers.
    pub marks: Vec<MarkLaw>,
    /// Declared thinning bounds.
    pub arrival_bound: Vec<f64>,
    pub service_bound: Vec<f64>,
    pub initial: Vec<i64>,
}

impl std::fmt::Debug for QueueNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueueNetwork")
            .field("classes", &self.classes)
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

impl QueueNetwork {
    /// Constant-rate single-class queue with unit batches.
    pub fn mm1(lambda: f64, mu: f64, initial: i64) -> Self {
        Self {
            classes: 1,
            arrival: vec![Arc::new(move |_, _, _| lambda)],
            service: vec![Arc::new(move |_, _, _| mu)],
            routing: vec![Arc::new(|_, _, _| vec![0.0])],
            marks: vec![MarkLaw::PointMass { m: 1.0 }],
            arrival_bound: vec![lambda],
            service_bound: vec![mu],
            initial: vec![initial],
        }
    }

    pub fn validate(&self) -> Result<(), QueueingError> {
        let p = self.classes;
        if p == 0 {
            return Err(QueueingError::InvalidNetwork(
                "need at least one class".into(),
            ));
        }
        for (name, len) in [
            ("arrival", self.arrival.len()),
            ("service", self.service.len()),
            ("routing", self.routing.len()),
            ("marks", self.marks.len()),
            ("arrival_bound", self.arrival_bound.len()),
            ("service_bound", self.service_bound.len()),
            ("initial", self.initial.len()),
        ] {
            if len != p {
                return Err(QueueingError::InvalidNetwork(format!(
                    "{name} must have one entry per class"
                )));
            }
        }
        if self
            .arrival_bound
            .iter()
            .chain(self.service_bound.iter())
            .any(|b| !b.is_finite() || *b < 0.0)
        {
            return Err(QueueingError::InvalidNetwork(
                "intensity bounds must be finite and nonnegative".into(),
            ));
        }
        if self.initial.iter().any(|q| *q < 0) {
            return Err(QueueingError::InvalidNetwork(
                "initial queue lengths must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Event log of one simulated run: piecewise-constant queue lengths.
#[derive(Debug, Clone)]
pub struct QueuePath {
    pub horizon: f64,
    /// Event times starting at zero.
    pub times: Vec<f64>,
    /// Queue state after each event.
    pub states: Vec<Vec<i64>>,
    pub totals: FlowTotals,
    pub accepted_events: u64,
    pub proposals: u64,
}

/// Exact per-class flow counts over the run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FlowTotals {
    pub external_arrivals: Vec<i64>,
    pub routed_in: Vec<i64>,
    pub departures: Vec<i64>,
}

impl QueuePath {
    /// Piecewise-constant lookup.
    pub fn state_at(&self, t: f64) -> &[i64] {
        let idx = match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        &self.states[idx]
    }

    /// Exact time average of the queue length over `[from, horizon]`.
    pub fn time_average(&self, from: f64) -> Vec<f64> {
        let p = self.states[0].len();
        let mut acc = vec![0.0; p];
        let mut span = 0.0;
        for k in 0..self.times.len() {
            let t0 = self.times[k].max(from);
            let t1 = if k + 1 < self.times.len() {
                self.times[k + 1]
            } else {
                self.horizon
            };
            if t1 <= t0 {
                continue;
            }
            let dt = t1 - t0;
            span += dt;
            for i in 0..p {
                acc[i] += self.states[k][i] as f64 * dt;
            }
        }
        if span > 0.0 {
            for a in &mut acc {
                *a /= span;
            }
        }
        acc
    }

    /// Flow conservation: `Q(end) = Q(0) + arrivals + routed - departures`
    /// per class, exactly.
    pub fn flow_conserved(&self, initial: &[i64]) -> bool {
        let last = self.states.last().expect("nonempty");
        (0..last.len()).all(|i| {
            last[i]
                == initial[i] + self.totals.external_arrivals[i] + self.totals.routed_in[i]
                    - self.totals.departures[i]
        })
    }
}

/// Run the thinning simulation, invoking `observer` after every accepted
/// event with the new time and state.
fn run_thinning(
    net: &QueueNetwork,
    horizon: f64,
    seed: u64,
    stream: u64,
    observer: &mut dyn FnMut(f64, &[i64]),
) -> Result<(Vec<i64>, FlowTotals, u64, u64), QueueingError> {
    net.validate()?;
    let p = net.classes;
    // Streams: arrivals 0..p, services p..2p.
    let mut cum_bounds = Vec::with_capacity(2 * p);
    let mut total_bound = 0.0;
    for b in net.arrival_bound.iter().chain(net.service_bound.iter()) {
        total_bound += b;
        cum_bounds.push(total_bound);
    }
    let mut totals = FlowTotals {
        external_arrivals: vec![0; p],
        routed_in: vec![0; p],
        departures: vec![0; p],
    };
    if total_bound <= 0.0 {
        return Ok((net.initial.clone(), totals, 0, 0));
    }
    let mut rng = crate::seeding::substream(seed, stream);
    let mut q = net.initial.clone();
    let mut t = 0.0_f64;
    let mut accepted: u64 = 0;
    let mut proposals: u64 = 0;

    loop {
        let e: f64 = rng.random::<f64>();
        t += -(1.0 - e).ln() / total_bound;
        if t >= horizon {
            break;
        }
        proposals += 1;
        let pick = rng.random::<f64>() * total_bound;
        let stream_idx = cum_bounds.partition_point(|c| *c <= pick).min(2 * p - 1);
        let class = stream_idx % p;
        let is_arrival = stream_idx < p;
        let mark = net.marks[class].sample(&mut rng);
        let batch = (mark.round().max(1.0)) as i64;

        let (rate, bound, kind) = if is_arrival {
            (
                (net.arrival[class])(t, &q, mark),
                net.arrival_bound[class],
                "arrival",
            )
        } else {
            // Service intensity is zero on an empty queue by convention.
            let r = if q[class] > 0 {
                (net.service[class])(t, &q, mark)
            } else {
                0.0
            };
            (r, net.service_bound[class], "service")
        };
        if rate > bound * (1.0 + 1e-12) {
            return Err(QueueingError::BoundExceeded {
                kind,
                class,
                t,
                rate,
                bound,
                state: q.clone(),
            });
        }
        if rate <= 0.0 || rng.random::<f64>() * bound > rate {
            continue;
        }

        if is_arrival {
            q[class] += batch;
            totals.external_arrivals[class] += batch;
        } else {
            let served = batch.min(q[class]);
            q[class] -= served;
            totals.departures[class] += served;
            let probs = (net.routing[class])(t, &q, mark);
            if probs.len() != p {
                return Err(QueueingError::InvalidNetwork(
                    "routing function returned wrong length".into(),
                ));
            }
            let total_p: f64 = probs.iter().sum();
            if total_p > 1.0 + 1e-9 {
                return Err(QueueingError::InvalidNetwork(
                    "routing proportions exceed one".into(),
                ));
            }
            let draw = rng.random::<f64>();
            let mut acc = 0.0;
            for (dest, pr) in probs.iter().enumerate() {
                acc += pr;
                if draw < acc {
                    q[dest] += served;
                    totals.routed_in[dest] += served;
                    break;
                }
            }
        }
        accepted += 1;
        observer(t, &q);
    }
    Ok((q, totals, accepted, proposals))
}

/// Event-driven simulation retaining the full event log.
pub fn simulate_queue(
    net: &QueueNetwork,
    horizon: f64,
    seed: u64,
) -> Result<QueuePath, QueueingError> {
    let mut times = vec![0.0];
    let mut states = vec![net.initial.clone()];
    let (_, totals, accepted, proposals) = run_thinning(net, horizon, seed, 0, &mut |t, q| {
        times.push(t);
        states.push(q.to_vec());
    })?;
    Ok(QueuePath {
        horizon,
        times,
        states,
        totals,
        accepted_events: accepted,
        proposals,
    })
}

/// Streaming summary of one long run: exact window time-average, regular
/// samples for distributional comparison, and event counts.
#[derive(Debug, Clone, Serialize)]
pub struct QueueRunSummary {
    pub horizon: f64,
    pub window_start: f64,
    pub time_average: Vec<f64>,
    /// Queue state sampled every `sample_interval` after `window_start`.
    pub samples: Vec<Vec<f64>>,
    pub sample_interval: f64,
    pub accepted_events: u64,
    pub proposals: u64,
    pub flow_conserved: bool,
}

/// Long-run simulation without storing the event log.
pub fn simulate_queue_summary(
    net: &QueueNetwork,
    horizon: f64,
    seed: u64,
    window_start: f64,
    sample_interval: f64,
) -> Result<QueueRunSummary, QueueingError> {
    if !(sample_interval > 0.0) || window_start >= horizon {
        return Err(QueueingError::Scaling(
            "need 0 < sample_interval and window_start < horizon".into(),
        ));
    }
    let p = net.classes;
    let mut acc = vec![0.0; p];
    let mut span = 0.0;
    let mut prev_t = 0.0_f64;
    let mut prev_q: Vec<i64> = net.initial.clone();
    let mut samples = Vec::new();
    let mut next_sample = window_start;
    let (final_q, totals, accepted, proposals) =
        run_thinning(net, horizon, seed, 0, &mut |t, q| {
            let t0 = prev_t.max(window_start);
            if t > t0 {
                let dt = t - t0;
                span += dt;
                for i in 0..p {
                    acc[i] += prev_q[i] as f64 * dt;
                }
            }
            while next_sample < t && next_sample <= horizon {
                samples.push(prev_q.iter().map(|v| *v as f64).collect());
                next_sample += sample_interval;
            }
            prev_t = t;
            prev_q.copy_from_slice(q);
        })?;
    let t0 = prev_t.max(window_start);
    if horizon > t0 {
        let dt = horizon - t0;
        span += dt;
        for i in 0..p {
            acc[i] += prev_q[i] as f64 * dt;
        }
    }
    while next_sample < horizon {
        samples.push(prev_q.iter().map(|v| *v as f64).collect());
        next_sample += sample_interval;
    }
    if span > 0.0 {
        for a in &mut acc {
            *a /= span;
        }
    }
    let conserved = (0..p).all(|i| {
        final_q[i]
            == net.initial[i] + totals.external_arrivals[i] + totals.routed_in[i]
                - totals.departures[i]
    });
    Ok(QueueRunSummary {
        horizon,
        window_start,
        time_average: acc,
        samples,
        sample_interval,
        accepted_events: accepted,
        proposals,
        flow_conserved: conserved,
    })
}

/// A diffusion-scaled queue path `t -> Q(r^2 t) / r`.
#[derive(Debug, Clone)]
pub struct ScaledQueuePath {
    pub r: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Diffusion scaling: compress time by `r^2`, divide space by `r`. The
/// source path must reach `r^2 * horizon`.
pub fn diffusion_scale(
    path: &QueuePath,
    r: f64,
    horizon: f64,
) -> Result<ScaledQueuePath, QueueingError> {
    if !(r > 0.0) {
        return Err(QueueingError::Scaling("scale r must be positive".into()));
    }
    if path.horizon + 1e-12 < r * r * horizon {
        return Err(QueueingError::Scaling(format!(
            "path horizon {} shorter than r^2 T = {}",
            path.horizon,
            r * r * horizon
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, t) in path.times.iter().enumerate() {
        let scaled_t = t / (r * r);
        if scaled_t > horizon {
            break;
        }
        times.push(scaled_t);
        values.push(path.states[k].iter().map(|q| *q as f64 / r).collect());
    }
    Ok(ScaledQueuePath {
        r,
        horizon,
        times,
        values,
    })
}

/// Initial condition of an RBM.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    Point(DVector<f64>),
    Samples(Vec<DVector<f64>>),
}

/// Semimartingale reflecting Brownian motion data: drift, covariance,
/// reflection, initial law.
#[derive(Debug, Clone)]
pub struct RbmSpec {
    pub theta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub reflection: ReflectionSpec,
    pub initial: InitialLaw,
}

impl RbmSpec {
    pub fn validate(&self) -> Result<(), QueueingError> {
        let p = self.reflection.domain().dim();
        if self.theta.len() != p || self.covariance.nrows() != p || self.covariance.ncols() != p {
            return Err(QueueingError::InvalidNetwork(
                "drift/covariance dimensions must match the domain".into(),
            ));
        }
        if (self.covariance.clone() - self.covariance.transpose()).amax() > 1e-12 {
            return Err(QueueingError::InvalidNetwork(
                "covariance must be symmetric".into(),
            ));
        }
        if self.covariance.clone().cholesky().is_none() {
            return Err(QueueingError::InvalidNetwork(
                "covariance must be positive definite".into(),
            ));
        }
        if !self.reflection.is_completely_s() {
            return Err(QueueingError::InvalidNetwork(
                "reflection matrix must be completely-S".into(),
            ));
        }
        Ok(())
    }

    fn draw_initial<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match &self.initial {
            InitialLaw::Point(x) => x.clone(),
            InitialLaw::Samples(set) => {
                let idx = rng.random_range(0..set.len());
                set[idx].clone()
            }
        }
    }
}

/// Simulate one RBM path: a drifted correlated Brownian free path pushed
/// through the Skorohod solver.
pub fn simulate_rbm(
    spec: &RbmSpec,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<RegulatedPath, QueueingError> {
    spec.validate()?;
    if !(dt > 0.0 && horizon > dt) {
        return Err(QueueingError::Scaling("need 0 < dt < horizon".into()));
    }
    let p = spec.theta.len();
    let chol = spec
        .covariance
        .clone()
        .cholesky()
        .expect("validated SPD")
        .l();
    let steps = (horizon / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let mut rng = crate::seeding::substream(seed, 0);
    let x0 = spec.draw_initial(&mut rng);
    let mut z = Vec::with_capacity(times.len());
    z.push(x0);
    let sqdt = dt.sqrt();
    for _ in 0..steps {
        let noise = DVector::from_fn(p, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g
        });
        let step = &spec.theta * dt + sqdt * (&chol * noise);
        let prev = z.last().expect("nonempty");
        z.push(prev + step);
    }
    Ok(skorokhod_solve(&times, &z, &spec.reflection)?)
}

/// Streaming long-run RBM statistics without storing the path.
#[derive(Debug, Clone, Serialize)]
pub struct RbmRunSummary {
    pub time_average: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub steps: u64,
    pub boundary_fraction: Vec<f64>,
}

pub fn rbm_long_run(
    spec: &RbmSpec,
    horizon: f64,
    dt: f64,
    seed: u64,
    window_start: f64,
    sample_stride: usize,
) -> Result<RbmRunSummary, QueueingError> {
    spec.validate()?;
    if !(dt > 0.0 && window_start < horizon && sample_stride > 0) {
        return Err(QueueingError::Scaling(
            "need 0 < dt, window_start < horizon, positive stride".into(),
        ));
    }
    let p = spec.theta.len();
    let b = spec.reflection.domain().face_count();
    let chol = spec
        .covariance
        .clone()
        .cholesky()
        .expect("validated SPD")
        .l();
    let steps = (horizon / dt).round() as u64;
    let mut rng = crate::seeding::substream(seed, 0);
    let mut x = spec.draw_initial(&mut rng);
    let mut acc = vec![0.0; p];
    let mut on_face = vec![0u64; b];
    let mut count = 0u64;
    let mut samples = Vec::new();
    let sqdt = dt.sqrt();
    for k in 0..steps {
        let t = k as f64 * dt;
        let noise = DVector::from_fn(p, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g
        });
        let dz = &spec.theta * dt + sqdt * (&chol * noise);
        let step = solve_jump_lcp(&x, &dz, &spec.reflection)?;
        x += &step.delta_x;
        if t >= window_start {
            count += 1;
            for i in 0..p {
                acc[i] += x[i];
            }
            for i in 0..b {
                if spec.reflection.domain().on_face(&x, i) {
                    on_face[i] += 1;
                }
            }
            if count % sample_stride as u64 == 0 {
                samples.push(x.as_slice().to_vec());
            }
        }
    }
    let n = count.max(1) as f64;
    Ok(RbmRunSummary {
        time_average: acc.iter().map(|a| a / n).collect(),
        samples,
        steps,
        boundary_fraction: on_face.iter().map(|c| *c as f64 / n).collect(),
    })
}

/// Riemann-sum boundary occupation time per face along a regulated path,
/// the diagnostic counterpart of the regulator.
pub fn boundary_time_process(reg: &RegulatedPath, spec: &ReflectionSpec) -> Vec<DVector<f64>> {
    let b = spec.domain().face_count();
    let mut out = Vec::with_capacity(reg.times.len());
    let mut acc = DVector::zeros(b);
    out.push(acc.clone());
    for k in 0..reg.times.len().saturating_sub(1) {
        let dt = reg.times[k + 1] - reg.times[k];
        for i in 0..b {
            if spec.domain().on_face(&reg.x[k], i) {
                acc[i] += dt;
            }
        }
        out.push(acc.clone());
    }
    out
}

/// Equally spaced samples from a window of a time-ordered process.
#[derive(Debug, Clone)]
pub struct WindowSamples {
    pub label: String,
    /// Time-ordered samples, one vector per sampling instant.
    pub samples: Vec<Vec<f64>>,
    /// Time length of the sampled window.
    pub window_length: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentComparison {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    /// 95% half-width for the mean difference, autocorrelation-adjusted.
    pub diff_ci: f64,
    pub ks_distance: f64,
    pub relative_gap: f64,
}

/// Stationary comparison of two sampled ensembles.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryReport {
    pub components: Vec<ComponentComparison>,
    pub warnings: Vec<String>,
}

/// Compare late-window samples of two processes: componentwise moments,
/// empirical-CDF sup distance, and confidence intervals. Warns when a
/// window is shorter than ten estimated autocorrelation times.
pub fn compare_stationary(a: &WindowSamples, b: &WindowSamples) -> StationaryReport {
    let p = a.samples.first().map_or(0, |s| s.len());
    let mut components = Vec::new();
    let mut warnings = Vec::new();
    for side in [a, b] {
        if side.samples.len() < 8 {
            warnings.push(format!("{}: too few samples for comparison", side.label));
        }
    }
    for i in 0..p {
        let xa: Vec<f64> = a.samples.iter().map(|s| s[i]).collect();
        let xb: Vec<f64> = b.samples.iter().map(|s| s[i]).collect();
        let (ma, va, tau_a) = moments_with_tau(&xa);
        let (mb, vb, tau_b) = moments_with_tau(&xb);
        for (side, tau, n) in [(a, tau_a, xa.len()), (b, tau_b, xb.len())] {
            let interval = side.window_length / n.max(1) as f64;
            if side.window_length < 10.0 * tau * interval {
                warnings.push(format!(
                    "{}: window ({:.3e}) shorter than 10 autocorrelation times ({:.3e}); estimates unreliable",
                    side.label,
                    side.window_length,
                    10.0 * tau * interval
                ));
            }
        }
        let se =
            (va * tau_a / xa.len().max(1) as f64 + vb * tau_b / xb.len().max(1) as f64).sqrt();
        let ks = ks_distance(&xa, &xb);
        let denom = ma.abs().max(mb.abs()).max(1e-12);
        components.push(ComponentComparison {
            mean_a: ma,
            mean_b: mb,
            var_a: va,
            var_b: vb,
            diff_ci: 1.96 * se,
            ks_distance: ks,
            relative_gap: (ma - mb).abs() / denom,
        });
    }
    StationaryReport {
        components,
        warnings,
    }
}

/// Mean, variance, and integrated autocorrelation time (in sampling
/// intervals) of a time-ordered sequence.
fn moments_with_tau(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    if n < 2 {
        return (x.first().copied().unwrap_or(0.0), 0.0, 1.0);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return (mean, 0.0, 1.0);
    }
    let mut tau = 1.0;
    for lag in 1..(n / 4).max(2).min(n - 1) {
        let mut c = 0.0;
        for k in 0..n - lag {
            c += (x[k] - mean) * (x[k + lag] - mean);
        }
        let rho = c / ((n - lag) as f64 * var);
        if rho < 0.05 {
            break;
        }
        tau += 2.0 * rho;
    }
    (mean, var, tau)
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < sa.len() && j < sb.len() {
        let va = sa[i];
        let vb = sb[j];
        if va <= vb {
            i += 1;
        }
        if vb <= va {
            j += 1;
        }
        let fa = i as f64 / sa.len() as f64;
        let fb = j as f64 / sb.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::Domain;

    #[test]
    fn no_arrivals_drain_to_absorbing_zero() {
        let mut net = QueueNetwork::mm1(0.0, 1.0, 5);
        net.arrival_bound = vec![0.0];
        let path = simulate_queue(&net, 200.0, 4).unwrap();
        let last = path.states.last().unwrap();
        assert_eq!(last[0], 0);
        for w in path.states.windows(2) {
            assert!(w[1][0] <= w[0][0]);
        }
        assert!(path.flow_conserved(&net.initial));
    }

    #[test]
    fn mm1_matches_birth_death_stationary_mean() {
        // rho = 0.5: stationary mean rho/(1-rho) = 1.
        let net = QueueNetwork::mm1(0.5, 1.0, 0);
        let summary = simulate_queue_summary(&net, 60_000.0, 12, 6_000.0, 25.0).unwrap();
        let mean = summary.time_average[0];
        assert!(
            (mean - 1.0).abs() < 0.1,
            "M/M/1 mean {mean}, expected 1.0 within 10%"
        );
        assert!(summary.flow_conserved);
    }

    #[test]
    fn tandem_throughput_conserves_flow() {
        // Two classes in tandem: finished class-1 jobs feed class 2.
        let lambda = 0.3;
        let net = QueueNetwork {
            classes: 2,
            arrival: vec![Arc::new(move |_, _, _| lambda), Arc::new(|_, _, _| 0.0)],
            service: vec![Arc::new(|_, _, _| 1.0), Arc::new(|_, _, _| 1.0)],
            routing: vec![
                Arc::new(|_, _, _| vec![0.0, 1.0]),
                Arc::new(|_, _, _| vec![0.0, 0.0]),
            ],
            marks: vec![MarkLaw::PointMass { m: 1.0 }, MarkLaw::PointMass { m: 1.0 }],
            arrival_bound: vec![lambda, 0.0],
            service_bound: vec![1.0, 1.0],
            initial: vec![0, 0],
        };
        let horizon = 40_000.0;
        let path = simulate_queue(&net, horizon, 9).unwrap();
        assert!(path.flow_conserved(&net.initial));
        let throughput = path.totals.departures[1] as f64 / horizon;
        assert!(
            (throughput - lambda).abs() / lambda < 0.05,
            "class-2 throughput {throughput} vs arrival rate {lambda}"
        );
        assert!(path.states.iter().all(|s| s.iter().all(|q| *q >= 0)));
    }

    #[test]
    fn bound_violation_is_reported_with_state() {
        let mut net = QueueNetwork::mm1(1.0, 1.0, 0);
        // Actual intensity exceeds the declared bound once the queue grows.
        net.arrival = vec![Arc::new(|_, q: &[i64], _| 1.0 + q[0] as f64)];
        let err = simulate_queue(&net, 2_000.0, 3).unwrap_err();
        assert!(matches!(
            err,
            QueueingError::BoundExceeded {
                kind: "arrival",
                ..
            }
        ));
    }

    #[test]
    fn diffusion_scaling_examples() {
        let net = QueueNetwork::mm1(0.5, 1.0, 3);
        let path = simulate_queue(&net, 100.0, 7).unwrap();
        let same = diffusion_scale(&path, 1.0, 100.0).unwrap();
        assert_eq!(same.times, path.times);
        assert_eq!(same.values[0][0], path.states[0][0] as f64);

        let scaled = diffusion_scale(&path, 2.0, 25.0).unwrap();
        assert!(scaled.times.iter().all(|t| *t <= 25.0));
        assert_eq!(scaled.values[0][0], path.states[0][0] as f64 / 2.0);

        assert!(diffusion_scale(&path, 2.0, 50.0).is_err());
    }

    #[test]
    fn rbm_run_matches_exponential_stationary_mean() {
        // theta = -0.05, sigma^2 = 1.95: stationary mean 19.5.
        let spec = RbmSpec {
            theta: DVector::from_column_slice(&[-0.05]),
            covariance: DMatrix::from_row_slice(1, 1, &[1.95]),
            reflection: ReflectionSpec::normal_orthant(1).unwrap(),
            initial: InitialLaw::Point(DVector::from_column_slice(&[0.0])),
        };
        let run = rbm_long_run(&spec, 150_000.0, 0.25, 2, 15_000.0, 50).unwrap();
        let mean = run.time_average[0];
        assert!(
            (mean - 19.5).abs() / 19.5 < 0.1,
            "RBM long-run mean {mean}, expected 19.5 within 10%"
        );
    }

    #[test]
    fn rbm_in_orthant_passes_reflection_checks() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.3, 1.0]);
        let spec = RbmSpec {
            theta: DVector::from_column_slice(&[-0.1, -0.1]),
            covariance: DMatrix::identity(2, 2),
            reflection: ReflectionSpec::new(Domain::orthant(2).unwrap(), r).unwrap(),
            initial: InitialLaw::Point(DVector::from_column_slice(&[0.5, 0.5])),
        };
        let reg = simulate_rbm(&spec, 20.0, 0.01, 11).unwrap();
        reg.validate(&spec.reflection).unwrap();
        assert_eq!(reg.complementarity_defect(&spec.reflection), 0.0);
        let report = crate::reflection::check_oscillation_inequality(&reg, 1e6);
        assert!(report.max_x_ratio.is_finite());
    }

    #[test]
    fn boundary_occupation_is_small_for_rbm() {
        let spec = RbmSpec {
            theta: DVector::from_column_slice(&[0.0]),
            covariance: DMatrix::identity(1, 1),
            reflection: ReflectionSpec::normal_orthant(1).unwrap(),
            initial: InitialLaw::Point(DVector::from_column_slice(&[0.2])),
        };
        let reg = simulate_rbm(&spec, 5.0, 1e-3, 6).unwrap();
        let occ = boundary_time_process(&reg, &spec.reflection);
        let frac = occ.last().unwrap()[0] / 5.0;
        assert!(
            frac < 0.05,
            "boundary occupation fraction {frac} should be small"
        );
        // Interior start over a short horizon rarely touches the boundary.
        let spec_far = RbmSpec {
            theta: DVector::from_column_slice(&[0.0]),
            covariance: DMatrix::identity(1, 1),
            reflection: ReflectionSpec::normal_orthant(1).unwrap(),
            initial: InitialLaw::Point(DVector::from_column_slice(&[5.0])),
        };
        let reg = simulate_rbm(&spec_far, 1.0, 1e-3, 7).unwrap();
        assert_eq!(reg.y.last().unwrap()[0], 0.0);
        let occ = boundary_time_process(&reg, &spec_far.reflection);
        assert_eq!(occ.last().unwrap()[0], 0.0);
    }

    #[test]
    fn identical_ensembles_compare_to_zero() {
        let samples: Vec<Vec<f64>> = (0..200).map(|k| vec![(k % 17) as f64]).collect();
        let a = WindowSamples {
            label: "a".into(),
            samples: samples.clone(),
            window_length: 1_000.0,
        };
        let b = WindowSamples {
            label: "b".into(),
            samples,
            window_length: 1_000.0,
        };
        let report = compare_stationary(&a, &b);
        assert_eq!(report.components[0].ks_distance, 0.0);
        assert_eq!(report.components[0].relative_gap, 0.0);
    }

    #[test]
    fn short_window_triggers_warning() {
        // Strongly autocorrelated samples in a short window.
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|k| vec![if (k / 100) % 2 == 0 { 0.0 } else { 1.0 }])
            .collect();
        let a = WindowSamples {
            label: "slow".into(),
            samples: samples.clone(),
            window_length: 4.0,
        };
        let b = WindowSamples {
            label: "also-slow".into(),
            samples,
            window_length: 4.0,
        };
        let report = compare_stationary(&a, &b);
        assert!(!report.warnings.is_empty());
    }
}
