use crate::exec::ordered_sum;
use crate::integrator::{integrate_observed, trailing_start, IntegrationError};
use crate::lattice::{Forcing, ModelParams, C64};
use crate::regimes::closeness_constants;

use super::{ExperimentError, InitialFamily, StudySettings, CLOSENESS_SLACK, TRAILING_FRACTION};

/// One row of the distance time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosenessSample {
    pub t: f64,
    pub dist_l2: f64,
    pub dist_linf: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessReport {
    pub epsilon: f64,
    pub sup_distance_l2: f64,
    pub sup_distance_linf: f64,
    /// Largest `‖Δ‖` over the trailing 20% of samples.
    pub tail_window_limsup: f64,
    /// `C ε³` for δ > 1, `C₂ ε³` on `[0, horizon]` otherwise.
    pub bound_used: f64,
    /// `C₁ ε³`, the limsup bound (δ > 1 only).
    pub limsup_bound: Option<f64>,
    pub pass: bool,
    pub series: Vec<ClosenessSample>,
    pub diagnostic: Option<String>,
}

struct Run {
    samples: Vec<Vec<C64>>,
    times: Vec<f64>,
    blowup: Option<f64>,
}

fn sampled_run(
    params: &ModelParams,
    forcing: &Forcing,
    initial: &crate::lattice::LatticeState,
    horizon: f64,
    settings: &StudySettings,
) -> Result<Run, IntegrationError> {
    let mut samples = Vec::new();
    let traj = integrate_observed(
        initial,
        params,
        forcing,
        horizon,
        &settings.opts,
        |_, _, y| samples.push(y.to_vec()),
    )?;
    Ok(Run {
        samples,
        times: traj.times,
        blowup: traj.blowup_time,
    })
}

/// Integrates `u` under the local lattice and `v` under the non-local one
/// from the family's initial pair, with the same forcing, and compares them
/// on the shared sample grid.
pub fn run_closeness(
    family: &InitialFamily,
    params: &ModelParams,
    forcing: &Forcing,
    horizon: f64,
    settings: &StudySettings,
) -> Result<ClosenessReport, ExperimentError> {
    let (u0, v0) = family.generate()?;
    let u0 = settings.place(&u0)?;
    let v0 = settings.place(&v0)?;
    let constants = closeness_constants(params, family.c0, family.cu0, family.cv0, Some(horizon))?;
    let eps3 = family.epsilon.powi(3);
    let bound_used = constants.sup_constant() * eps3;
    let limsup_bound = constants.c_limsup.map(|c| c * eps3);

    let systems = [(params.as_local(), &u0), (params.as_nonlocal(), &v0)];
    let mut runs = settings
        .opts
        .exec
        .map(&systems, |(p, init)| {
            sampled_run(p, forcing, init, horizon, settings)
        })
        .into_iter();
    let u_run = runs.next().expect("two runs")?;
    let v_run = runs.next().expect("two runs")?;

    let shared = u_run.samples.len().min(v_run.samples.len());
    let series: Vec<ClosenessSample> = (0..shared)
        .map(|k| {
            let (a, b) = (&u_run.samples[k], &v_run.samples[k]);
            let dist_l2 = ordered_sum(a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr())).sqrt();
            let dist_linf = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            ClosenessSample {
                t: u_run.times[k],
                dist_l2,
                dist_linf,
                bound: bound_used,
            }
        })
        .collect();

    let sup_distance_l2 = series.iter().map(|s| s.dist_l2).fold(0.0, f64::max);
    let sup_distance_linf = series.iter().map(|s| s.dist_linf).fold(0.0, f64::max);
    let tail_window_limsup = series[trailing_start(series.len(), TRAILING_FRACTION)..]
        .iter()
        .map(|s| s.dist_l2)
        .fold(0.0, f64::max);

    let diagnostic = match (u_run.blowup, v_run.blowup) {
        (None, None) => None,
        (bu, bv) => Some(format!(
            "blow-up before horizon {horizon}: local at {bu:?}, non-local at {bv:?}"
        )),
    };
    let pass = diagnostic.is_none() && sup_distance_l2 <= bound_used * (1.0 + CLOSENESS_SLACK);
    Ok(ClosenessReport {
        epsilon: family.epsilon,
        sup_distance_l2,
        sup_distance_linf,
        tail_window_limsup,
        bound_used,
        limsup_bound,
        pass,
        series,
        diagnostic,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    if lx.iter().chain(&ly).any(|v| !v.is_finite()) {
        return None;
    }
    let n = lx.len() as f64;
    let mx = ordered_sum(lx.iter().copied()) / n;
    let my = ordered_sum(ly.iter().copied()) / n;
    let sxy = ordered_sum(lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = ordered_sum(lx.iter().map(|a| (a - mx) * (a - mx)));
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
