//! Time integration of lattice states and of the scalar comparison equation.
//!
//! The adaptive path is the Dormand–Prince 5(4) pair with a proportional-
//! integral step controller and the method's continuous extension for
//! sampling on a uniform grid. The local error of each step is measured in
//! l² against `abs + rel·‖u‖`. A fixed-step classical RK4 integrator is kept
//! as an independent reference.

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::exec::{ordered_sum, Execution};
use crate::lattice::{Forcing, LatticeError, LatticeState, ModelParams, RhsKernel, C64};

/// Default blow-up threshold on `χ = ‖u‖²`, and on `w` for the scalar
/// comparison equation.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Steps below this size abort the integration.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("horizon must be positive and finite (got {0})")]
    InvalidHorizon(f64),
    #[error("tolerances must be positive (abs = {abs}, rel = {rel})")]
    InvalidTolerance { abs: f64, rel: f64 },
    #[error("sample stride must be positive and finite (got {0})")]
    InvalidStride(f64),
    #[error("initial value must be non-negative (got {0})")]
    NegativeInitial(f64),
    #[error(transparent)]
    Window(#[from] LatticeError),
    #[error("step size fell below {MIN_STEP:e} at t = {time}")]
    StepUnderflow {
        time: f64,
        /// Everything sampled up to the last accepted step.
        partial: Box<Trajectory>,
    },
    #[error("step budget of {max_steps} exhausted at t = {time}")]
    TooManySteps { time: f64, max_steps: usize },
}

/// Values the integrator can advance: real or complex amplitudes.
pub trait Amplitude:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + 'static
{
    fn zero() -> Self;
    fn abs2(self) -> f64;
}

impl Amplitude for f64 {
    fn zero() -> Self {
        0.0
    }
    fn abs2(self) -> f64 {
        self * self
    }
}

impl Amplitude for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
}

fn l2<T: Amplitude>(y: &[T]) -> f64 {
    ordered_sum(y.iter().map(|z| z.abs2())).sqrt()
}

/// Integration controls shared by lattice runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub sample_stride: f64,
    /// Keep a full snapshot every this many samples.
    pub snapshot_every: Option<usize>,
    pub blowup_threshold: f64,
    pub max_steps: usize,
    pub exec: Execution,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            sample_stride: 0.1,
            snapshot_every: None,
            blowup_threshold: BLOWUP_THRESHOLD,
            max_steps: 5_000_000,
            exec: Execution::default(),
        }
    }
}

impl IntegrationOptions {
    /// Tight tolerances used wherever a run feeds a pass/fail check.
    pub fn oracle() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: f64) -> Self {
        self.sample_stride = stride;
        self
    }

    pub fn with_snapshots(mut self, every: usize) -> Self {
        self.snapshot_every = Some(every.max(1));
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    fn validate(&self, horizon: f64) -> Result<(), IntegrationError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(IntegrationError::InvalidHorizon(horizon));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(IntegrationError::InvalidTolerance {
                abs: self.abs_tol,
                rel: self.rel_tol,
            });
        }
        if !(self.sample_stride > 0.0 && self.sample_stride.is_finite()) {
            return Err(IntegrationError::InvalidStride(self.sample_stride));
        }
        Ok(())
    }
}

/// Uniform sample grid `k · stride` for `k = 0, 1, …` up to the horizon.
pub fn sample_grid(horizon: f64, stride: f64) -> Vec<f64> {
    let count = (horizon / stride * (1.0 + 1e-12)).floor() as usize;
    (0..=count).map(|k| k as f64 * stride).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub state: LatticeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Sampled history of one lattice run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `χ(t) = ‖u(t)‖²` at each sample time.
    pub chi: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// First step end at which `χ` exceeded the threshold, if before the horizon.
    pub blowup_time: Option<f64>,
    pub final_time: f64,
    pub final_state: LatticeState,
    pub stats: StepStats,
}

impl Trajectory {
    /// Index of the first sample in the trailing `fraction` of the grid.
    pub fn trailing_start(&self, fraction: f64) -> usize {
        trailing_start(self.times.len(), fraction)
    }

    /// Largest `χ` over the trailing `fraction` of samples.
    pub fn trailing_max_chi(&self, fraction: f64) -> f64 {
        self.chi[self.trailing_start(fraction)..]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

pub(crate) fn trailing_start(len: usize, fraction: f64) -> usize {
    let keep = ((len as f64) * fraction).ceil() as usize;
    len - keep.clamp(1.min(len), len)
}

/// Sampled solution of the scalar comparison equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrajectory {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub blowup_time: Option<f64>,
}

impl ScalarTrajectory {
    /// Value at sample `k`, `None` once the solution has blown up.
    pub fn at(&self, k: usize) -> Option<f64> {
        self.w.get(k).copied()
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct DriveConfig<'a> {
    abs_tol: f64,
    rel_tol: f64,
    horizon: f64,
    samples: &'a [f64],
    blowup_threshold: f64,
    max_steps: usize,
    exec: Execution,
}

struct DriveOutcome<T> {
    y: Vec<T>,
    t: f64,
    blowup_time: Option<f64>,
    stats: StepStats,
}

enum DriveFailure<T> {
    Underflow { t: f64, y: Vec<T>, stats: StepStats },
    Budget { t: f64 },
}

/// Adaptive Dormand–Prince driver for an autonomous system `y' = f(y)`.
///
/// `on_sample(k, y)` fires for each sample time in order. `metric(y)` is
/// compared against the blow-up threshold after every accepted step.
fn drive<T, F, M, S>(
    field: F,
    y0: Vec<T>,
    cfg: &DriveConfig<'_>,
    metric: M,
    mut on_sample: S,
) -> Result<DriveOutcome<T>, DriveFailure<T>>
where
    T: Amplitude,
    F: Fn(&[T], &mut [T]),
    M: Fn(&[T]) -> f64,
    S: FnMut(usize, &[T]),
{
    let n = y0.len();
    let exec = cfg.exec;
    let mut y = y0;
    let mut stats = StepStats::default();
    let zeros = vec![T::zero(); n];
    let (mut k1, mut k2, mut k3, mut k4) =
        (zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone());
    let (mut k5, mut k6, mut k7) = (zeros.clone(), zeros.clone(), zeros);
    let mut ytmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    let mut yerr = vec![T::zero(); n];
    let mut dense = vec![T::zero(); n];
    let mut interp = vec![T::zero(); n];

    let mut t = 0.0;
    let mut next_sample = 0;
    while next_sample < cfg.samples.len() && cfg.samples[next_sample] <= t {
        on_sample(next_sample, &y);
        next_sample += 1;
    }

    field(&y, &mut k1);
    stats.rhs_evals += 1;
    let mut h = initial_step(&field, &y, &k1, cfg, &mut ytmp, &mut k2);
    stats.rhs_evals += 1;
    let mut facold: f64 = 1e-4;
    let mut reject_streak = false;

    while t < cfg.horizon {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(DriveFailure::Budget { t });
        }
        if h < MIN_STEP {
            return Err(DriveFailure::Underflow { t, y, stats });
        }
        let last = t + h >= cfg.horizon;
        if last {
            h = cfg.horizon - t;
        }

        {
            let yref = &y;
            let k1r = &k1;
            exec.fill_indexed(&mut ytmp, |i| yref[i] + k1r[i] * (h * A21));
            field(&ytmp, &mut k2);
            exec.fill_indexed(&mut ytmp, |i| yref[i] + (k1[i] * A31 + k2[i] * A32) * h);
            field(&ytmp, &mut k3);
            exec.fill_indexed(&mut ytmp, |i| {
                yref[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h
            });
            field(&ytmp, &mut k4);
            exec.fill_indexed(&mut ytmp, |i| {
                yref[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h
            });
            field(&ytmp, &mut k5);
            exec.fill_indexed(&mut ytmp, |i| {
                yref[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h
            });
            field(&ytmp, &mut k6);
            exec.fill_indexed(&mut ynew, |i| {
                yref[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h
            });
            field(&ynew, &mut k7);
            exec.fill_indexed(&mut yerr, |i| {
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h
            });
        }
        stats.rhs_evals += 6;

        let scale = cfg.abs_tol + cfg.rel_tol * l2(&y).max(l2(&ynew));
        let mut err = l2(&yerr) / scale;
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            let fac11 = err.powf(EXPO1);
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut hnew = h / fac;
            if reject_streak {
                hnew = hnew.min(h);
            }
            facold = err.max(1e-4);
            reject_streak = false;

            let t_new = if last { cfg.horizon } else { t + h };
            if next_sample < cfg.samples.len() && cfg.samples[next_sample] <= t_new {
                let (k1, k3, k4, k5, k6, k7) = (&k1, &k3, &k4, &k5, &k6, &k7);
                let yref = &y;
                let ynref = &ynew;
                exec.fill_indexed(&mut dense, |i| {
                    (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7)
                        * h
                });
                while next_sample < cfg.samples.len() && cfg.samples[next_sample] <= t_new {
                    let s = cfg.samples[next_sample];
                    if s >= t_new {
                        on_sample(next_sample, &ynew);
                    } else {
                        let theta = (s - t) / h;
                        let theta1 = 1.0 - theta;
                        let dref = &dense;
                        exec.fill_indexed(&mut interp, |i| {
                            let r2 = ynref[i] - yref[i];
                            let r3 = k1[i] * h - r2;
                            let r4 = r2 - k7[i] * h - r3;
                            yref[i] + (r2 + (r3 + (r4 + dref[i] * theta1) * theta) * theta1) * theta
                        });
                        on_sample(next_sample, &interp);
                    }
                    next_sample += 1;
                }
            }

            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;

            let m = metric(&y);
            if !(m <= cfg.blowup_threshold) {
                return Ok(DriveOutcome {
                    y,
                    t,
                    blowup_time: Some(t),
                    stats,
                });
            }
            h = hnew;
        } else {
            stats.rejected += 1;
            let fac11 = if err.is_finite() {
                err.powf(EXPO1)
            } else {
                1.0 / FAC_MIN
            };
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            reject_streak = true;
        }
    }

    Ok(DriveOutcome {
        y,
        t,
        blowup_time: None,
        stats,
    })
}

fn initial_step<T, F>(
    field: &F,
    y: &[T],
    f0: &[T],
    cfg: &DriveConfig<'_>,
    ytmp: &mut [T],
    f1: &mut [T],
) -> f64
where
    T: Amplitude,
    F: Fn(&[T], &mut [T]),
{
    let sc = cfg.abs_tol + cfg.rel_tol * l2(y);
    let d0 = l2(y) / sc;
    let d1 = l2(f0) / sc;
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(cfg.horizon);
    for i in 0..y.len() {
        ytmp[i] = y[i] + f0[i] * h0;
    }
    field(ytmp, f1);
    let diff = ordered_sum(f1.iter().zip(f0).map(|(a, b)| (*a - *b).abs2())).sqrt();
    let d2 = diff / sc / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.horizon)
}

fn lattice_chi(y: &[C64]) -> f64 {
    ordered_sum(y.iter().map(|z| z.norm_sqr()))
}

/// Advances a lattice state under the combined vector field.
///
/// The window of `initial` is the integration window; the forcing must fit
/// inside it. Sampling runs every `opts.sample_stride` from `t = 0`.
pub fn integrate_adaptive(
    initial: &LatticeState,
    params: &ModelParams,
    forcing: &Forcing,
    horizon: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory, IntegrationError> {
    integrate_observed(initial, params, forcing, horizon, opts, |_, _, _| {})
}

/// [`integrate_adaptive`] that also hands every sampled state to
/// `observe(sample_index, time, amplitudes)`.
pub fn integrate_observed<O>(
    initial: &LatticeState,
    params: &ModelParams,
    forcing: &Forcing,
    horizon: f64,
    opts: &IntegrationOptions,
    mut observe: O,
) -> Result<Trajectory, IntegrationError>
where
    O: FnMut(usize, f64, &[C64]),
{
    opts.validate(horizon)?;
    let kernel = RhsKernel::for_state(params, forcing, initial)?;
    let exec = opts.exec;
    let offset = initial.offset();
    let samples = sample_grid(horizon, opts.sample_stride);

    let mut times = Vec::with_capacity(samples.len());
    let mut chi = Vec::with_capacity(samples.len());
    let mut snapshots = Vec::new();
    let cfg = DriveConfig {
        abs_tol: opts.abs_tol,
        rel_tol: opts.rel_tol,
        horizon,
        samples: &samples,
        blowup_threshold: opts.blowup_threshold,
        max_steps: opts.max_steps,
        exec,
    };
    let outcome = drive(
        |u: &[C64], out: &mut [C64]| kernel.eval_into(u, out, exec),
        initial.values().to_vec(),
        &cfg,
        lattice_chi,
        |k, y| {
            times.push(samples[k]);
            chi.push(lattice_chi(y));
            observe(k, samples[k], y);
            if let Some(every) = opts.snapshot_every {
                if k % every == 0 {
                    snapshots.push(Snapshot {
                        time: samples[k],
                        state: LatticeState::new(offset, y.to_vec()).expect("non-empty window"),
                    });
                }
            }
        },
    );
    match outcome {
        Ok(out) => Ok(Trajectory {
            times,
            chi,
            snapshots,
            blowup_time: out.blowup_time,
            final_time: out.t,
            final_state: LatticeState::new(offset, out.y).expect("non-empty window"),
            stats: out.stats,
        }),
        Err(DriveFailure::Underflow { t, y, stats }) => Err(IntegrationError::StepUnderflow {
            time: t,
            partial: Box::new(Trajectory {
                times,
                chi,
                snapshots,
                blowup_time: None,
                final_time: t,
                final_state: LatticeState::new(offset, y).expect("non-empty window"),
                stats,
            }),
        }),
        Err(DriveFailure::Budget { t }) => Err(IntegrationError::TooManySteps {
            time: t,
            max_steps: opts.max_steps,
        }),
    }
}

/// Solves `w' = −A w + B w² + C`, `w(0) = x0`, sampled every
/// `sample_stride`. Stops and records the blow-up time once `w` exceeds
/// [`BLOWUP_THRESHOLD`].
pub fn integrate_riccati(
    a: f64,
    b: f64,
    c: f64,
    x0: f64,
    horizon: f64,
    sample_stride: f64,
) -> Result<ScalarTrajectory, IntegrationError> {
    if !(x0 >= 0.0) {
        return Err(IntegrationError::NegativeInitial(x0));
    }
    let opts = IntegrationOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        sample_stride,
        ..IntegrationOptions::default()
    };
    opts.validate(horizon)?;
    let samples = sample_grid(horizon, sample_stride);
    let mut times = Vec::with_capacity(samples.len());
    let mut w = Vec::with_capacity(samples.len());
    let cfg = DriveConfig {
        abs_tol: opts.abs_tol,
        rel_tol: opts.rel_tol,
        horizon,
        samples: &samples,
        blowup_threshold: BLOWUP_THRESHOLD,
        max_steps: opts.max_steps,
        exec: Execution::Sequential,
    };
    let outcome = drive(
        |y: &[f64], dy: &mut [f64]| dy[0] = -a * y[0] + b * y[0] * y[0] + c,
        vec![x0],
        &cfg,
        |y| y[0],
        |k, y| {
            times.push(samples[k]);
            w.push(y[0]);
        },
    );
    match outcome {
        Ok(out) => Ok(ScalarTrajectory {
            times,
            w,
            blowup_time: out.blowup_time,
        }),
        Err(DriveFailure::Underflow { t, .. }) => Ok(ScalarTrajectory {
            // Step collapse on the scalar equation only happens at a pole.
            times,
            w,
            blowup_time: Some(t),
        }),
        Err(DriveFailure::Budget { t }) => Err(IntegrationError::TooManySteps {
            time: t,
            max_steps: opts.max_steps,
        }),
    }
}

/// Classical fixed-step RK4 reference run. `sample_stride` is rounded to a
/// whole number of steps.
pub fn integrate_fixed_rk4(
    initial: &LatticeState,
    params: &ModelParams,
    forcing: &Forcing,
    horizon: f64,
    dt: f64,
    sample_stride: f64,
) -> Result<Trajectory, IntegrationError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(IntegrationError::InvalidHorizon(horizon));
    }
    if !(sample_stride > 0.0) {
        return Err(IntegrationError::InvalidStride(sample_stride));
    }
    let kernel = RhsKernel::for_state(params, forcing, initial)?;
    let steps = (horizon / dt).round() as usize;
    let dt = horizon / steps as f64;
    let every = ((sample_stride / dt).round() as usize).max(1);
    let n = initial.len();
    let exec = Execution::Sequential;

    let mut y = initial.values().to_vec();
    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let mut times = vec![0.0];
    let mut chi = vec![lattice_chi(&y)];
    let mut blowup_time = None;

    for step in 1..=steps {
        kernel.eval_into(&y, &mut k1, exec);
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (0.5 * dt);
        }
        kernel.eval_into(&tmp, &mut k2, exec);
        for i in 0..n {
            tmp[i] = y[i] + k2[i] * (0.5 * dt);
        }
        kernel.eval_into(&tmp, &mut k3, exec);
        for i in 0..n {
            tmp[i] = y[i] + k3[i] * dt;
        }
        kernel.eval_into(&tmp, &mut k4, exec);
        for i in 0..n {
            y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        let t = step as f64 * dt;
        let x = lattice_chi(&y);
        if step % every == 0 {
            times.push(t);
            chi.push(x);
        }
        if !(x <= BLOWUP_THRESHOLD) {
            blowup_time = Some(t);
            break;
        }
    }
    let final_time = blowup_time.unwrap_or(horizon);
    Ok(Trajectory {
        times,
        chi,
        snapshots: Vec::new(),
        blowup_time,
        final_time,
        final_state: LatticeState::new(initial.offset(), y).expect("non-empty window"),
        stats: StepStats {
            accepted: steps,
            rejected: 0,
            rhs_evals: 4 * steps,
        },
    })
}
