use crate::exec::ordered_sum;
use crate::integrator::{integrate_observed, trailing_start};
use crate::lattice::{Forcing, LatticeState, ModelParams, C64};
use crate::regimes::classify_regime;

use super::{ExperimentError, StudySettings, TRAILING_FRACTION};

/// `Σ_{|n| > 2k} |u_n|²` over the stored window.
pub fn tail_mass(state: &LatticeState, k: u64) -> f64 {
    tail_of(state.offset(), state.values(), k)
}

fn tail_of(offset: i64, values: &[C64], k: u64) -> f64 {
    let cut = 2 * k as i128;
    ordered_sum(values.iter().enumerate().filter_map(|(j, z)| {
        let n = offset as i128 + j as i128;
        (n.abs() > cut).then(|| z.norm_sqr())
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub xi: f64,
    /// Sorted, deduplicated `K` grid.
    pub k_values: Vec<u64>,
    /// Sample times of the trailing window.
    pub times: Vec<f64>,
    /// `tail_masses[i][j]` is the tail beyond `2·k_values[j]` at `times[i]`.
    pub tail_masses: Vec<Vec<f64>>,
    /// Smallest `K` whose trailing tail masses all stay below `ξ`.
    pub min_k_passing: Option<u64>,
    /// Earliest sample time after which the tail at `min_k_passing` stays
    /// below `ξ` for the rest of the run.
    pub time_of_entry: Option<f64>,
    /// False when the run is exploratory (δ ≤ 1, or non-local data outside
    /// the restricted ball).
    pub hypotheses_ok: bool,
    pub hypothesis_note: Option<String>,
    pub blowup_time: Option<f64>,
}

pub fn run_tail_study(
    params: &ModelParams,
    forcing: &Forcing,
    initial: &LatticeState,
    horizon: f64,
    xi: f64,
    k_grid: &[u64],
    settings: &StudySettings,
) -> Result<TailReport, ExperimentError> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(ExperimentError::InvalidInput(format!(
            "xi must be positive, got {xi}"
        )));
    }
    if k_grid.is_empty() {
        return Err(ExperimentError::InvalidInput("empty K grid".into()));
    }
    let mut k_values = k_grid.to_vec();
    k_values.sort_unstable();
    k_values.dedup();

    let hypothesis_note = tail_hypotheses(params, forcing, initial, settings.absorb_margin);
    let initial = settings.place(initial)?;
    let offset = initial.offset();
    let mut masses: Vec<Vec<f64>> = Vec::new();
    let traj = integrate_observed(
        &initial,
        params,
        forcing,
        horizon,
        &settings.opts,
        |_, _, y| masses.push(k_values.iter().map(|&k| tail_of(offset, y, k)).collect()),
    )?;

    let start = trailing_start(masses.len(), TRAILING_FRACTION);
    let column_passes = |j: usize| masses[start..].iter().all(|row| row[j] <= xi);
    let passing = (0..k_values.len()).find(|&j| column_passes(j));
    let min_k_passing = passing.map(|j| k_values[j]);
    let time_of_entry = passing.and_then(|j| {
        let last_bad = masses.iter().rposition(|row| row[j] > xi);
        let first_good = last_bad.map_or(0, |i| i + 1);
        traj.times.get(first_good).copied()
    });

    Ok(TailReport {
        xi,
        k_values,
        times: traj.times[start..].to_vec(),
        tail_masses: masses[start..].to_vec(),
        min_k_passing,
        time_of_entry,
        hypotheses_ok: hypothesis_note.is_none(),
        hypothesis_note,
        blowup_time: traj.blowup_time,
    })
}

fn tail_hypotheses(
    params: &ModelParams,
    forcing: &Forcing,
    initial: &LatticeState,
    margin: f64,
) -> Option<String> {
    if !(params.delta > 1.0) {
        return Some(format!("delta = {} is not dissipative", params.delta));
    }
    if params.mu != 0.0 {
        let v0 = initial.norm2();
        match classify_regime(params, forcing.norm2(), Some(v0), None, margin) {
            Ok(r) if r.delta0.is_some() => {}
            Ok(r) => {
                return Some(format!(
                    "initial ‖v‖² = {v0} outside the restricted ball {}",
                    r.restricted_radius_sq
                ))
            }
            Err(e) => return Some(e.to_string()),
        }
    }
    None
}
