use crate::integrator::{integrate_adaptive, integrate_riccati, Trajectory};
use crate::lattice::{Forcing, ModelParams};
use crate::regimes::{
    bernoulli_envelope, classify_regime, local_gronwall_bound, RegimeError, RegimeReport,
};

use super::{realize_norm2, unit_profile, ExperimentError, StudySettings, ENVELOPE_SLACK};

/// `χ`, the comparison solution and the Bernoulli envelope at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSample {
    pub t: f64,
    pub chi: f64,
    /// `None` once `w` has blown up.
    pub w: Option<f64>,
    pub bernoulli: Option<f64>,
}

/// Outcome for one `χ(0)` of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePointReport {
    pub chi0: f64,
    /// Empirical: `χ(t) ≤ χ(0)` at every sample.
    pub monotone: bool,
    /// `R₂ < χ(0) ≤ R₁`.
    pub starts_in_annulus: bool,
    /// Empirical, annulus starts only: `χ` stays in `(R₂, χ(0)]`.
    pub annulus_stay: Option<bool>,
    pub terminal_chi: f64,
    /// Empirical, annulus case only: `|χ(T) − R₂|`.
    pub terminal_gap_r2: Option<f64>,
    /// Largest `χ / w` while `w` is finite.
    pub envelope_max_ratio: f64,
    /// Blow-up time of the comparison solution `w`.
    pub envelope_blowup: Option<f64>,
    pub envelope_ok: bool,
    pub bernoulli_max_ratio: Option<f64>,
    pub bernoulli_ok: Option<bool>,
    pub blowup_time: Option<f64>,
    pub diagnostic: Option<String>,
    pub pass: bool,
    pub series: Vec<EnvelopeSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeVerification {
    pub regime: RegimeReport,
    pub points: Vec<RegimePointReport>,
    pub pass: bool,
}

fn ratio(x: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        x / bound
    } else if x <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Integrates the non-local lattice from `√χ(0)·e₀` for every grid value and
/// checks it against the Riccati comparison solution and, in the annulus
/// case, the Bernoulli envelope.
pub fn run_regime_verification(
    params: &ModelParams,
    forcing: &Forcing,
    chi0_grid: &[f64],
    horizon: f64,
    settings: &StudySettings,
) -> Result<RegimeVerification, ExperimentError> {
    let p = params.as_nonlocal();
    let regime = classify_regime(&p, forcing.norm2(), None, None, settings.absorb_margin)?;
    let profile = unit_profile();
    let points = settings.opts.exec.map(chi0_grid, |&chi0| {
        let initial = settings.place(&realize_norm2(&profile, chi0)?)?;
        let traj = integrate_adaptive(&initial, &p, forcing, horizon, &settings.opts)?;
        let c = regime.constants;
        let w = integrate_riccati(c.a, c.b, c.c, chi0, horizon, settings.opts.sample_stride)?;
        Ok(check_point(&regime, chi0, &traj, &w.w, w.blowup_time))
    });
    let points = points
        .into_iter()
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let pass = points.iter().all(|p| p.pass);
    Ok(RegimeVerification {
        regime,
        points,
        pass,
    })
}

fn check_point(
    regime: &RegimeReport,
    chi0: f64,
    traj: &Trajectory,
    w: &[f64],
    envelope_blowup: Option<f64>,
) -> RegimePointReport {
    let chi = &traj.chi;
    let monotone = chi.iter().all(|&x| x <= chi0 * (1.0 + 1e-12));
    let terminal_chi = *chi.last().expect("at least the initial sample");

    let envelope_max_ratio = chi
        .iter()
        .zip(w)
        .map(|(&x, &wk)| ratio(x, wk))
        .fold(0.0, f64::max);
    let envelope_ok = envelope_max_ratio <= 1.0 + ENVELOPE_SLACK;

    let annulus = match (regime.r1, regime.r2) {
        (Some(r1), Some(r2)) if chi0 > r2 && chi0 <= r1 => Some(r2),
        _ => None,
    };
    let annulus_stay = annulus.map(|r2| chi.iter().all(|&x| x > r2 && x <= chi0 * (1.0 + 1e-12)));
    let terminal_gap_r2 = annulus.map(|r2| (terminal_chi - r2).abs());

    let bernoulli_max_ratio = annulus.map(|_| {
        traj.times
            .iter()
            .zip(chi)
            .filter_map(|(&t, &x)| bernoulli_envelope(regime, chi0, t).map(|b| ratio(x, b)))
            .fold(0.0, f64::max)
    });
    let bernoulli_ok = bernoulli_max_ratio.map(|r| r <= 1.0 + ENVELOPE_SLACK);

    let diagnostic = traj
        .blowup_time
        .map(|t| format!("lattice trajectory blew up at t = {t}"));
    let pass = diagnostic.is_none() && envelope_ok && bernoulli_ok.unwrap_or(true);
    let series = traj
        .times
        .iter()
        .zip(chi)
        .enumerate()
        .map(|(k, (&t, &x))| EnvelopeSample {
            t,
            chi: x,
            w: w.get(k).copied(),
            bernoulli: annulus.and_then(|_| bernoulli_envelope(regime, chi0, t)),
        })
        .collect();
    RegimePointReport {
        chi0,
        monotone,
        starts_in_annulus: annulus.is_some(),
        annulus_stay,
        terminal_chi,
        terminal_gap_r2,
        envelope_max_ratio,
        envelope_blowup,
        envelope_ok,
        bernoulli_max_ratio,
        bernoulli_ok,
        blowup_time: traj.blowup_time,
        diagnostic,
        pass,
        series,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub chi0: f64,
    /// `ρ² = ‖g‖²/(δ−1)²`.
    pub rho_sq: f64,
    /// Largest `χ(t) / bound(t)` over the samples.
    pub max_ratio: f64,
    /// Largest `χ` over the trailing 20% of samples.
    pub trailing_max_chi: f64,
    pub bound_ok: bool,
    /// `trailing_max_chi ≤ 1.01 ρ²`.
    pub limsup_ok: bool,
    pub pass: bool,
}

/// Local-lattice run from `√χ(0)·e₀` compared with the Gronwall bound.
pub fn check_local_gronwall(
    params: &ModelParams,
    forcing: &Forcing,
    chi0: f64,
    horizon: f64,
    settings: &StudySettings,
) -> Result<GronwallReport, ExperimentError> {
    let p = params.as_local();
    if !(p.delta > 1.0) {
        return Err(RegimeError::NotDissipative(p.delta).into());
    }
    let g2 = forcing.norm2();
    let initial = settings.place(&realize_norm2(&unit_profile(), chi0)?)?;
    let traj = integrate_adaptive(&initial, &p, forcing, horizon, &settings.opts)?;
    if let Some(time) = traj.blowup_time {
        return Err(ExperimentError::BlowUp {
            time,
            what: "local lattice".into(),
        });
    }
    let max_ratio = traj
        .times
        .iter()
        .zip(&traj.chi)
        .map(|(&t, &x)| ratio(x, local_gronwall_bound(p.delta, g2, chi0, t)))
        .fold(0.0, f64::max);
    let rho_sq = g2 / ((p.delta - 1.0) * (p.delta - 1.0));
    let trailing_max_chi = traj.trailing_max_chi(super::TRAILING_FRACTION);
    let bound_ok = max_ratio <= 1.0 + ENVELOPE_SLACK;
    let limsup_ok = trailing_max_chi <= 1.01 * rho_sq;
    Ok(GronwallReport {
        chi0,
        rho_sq,
        max_ratio,
        trailing_max_chi,
        bound_ok,
        limsup_ok,
        pass: bound_ok && limsup_ok,
    })
}
