//! Verification studies built on the lattice, integrator and regime modules.
//!
//! Grid cells (ε values, χ(0) values, seeds) run through
//! [`Execution::map`](crate::exec::Execution::map) and come back in input
//! order, so every report is independent of the thread count.
//!
//! Claims that rest only on the inequality-level arguments (monotone `χ` when
//! `D < 0`, `χ → R₂`, `χ > R₂`) are measured and reported; envelope and
//! closeness bounds are asserted.

mod attractor;
mod closeness;
mod identities;
mod tail;
mod verification;

pub use attractor::{
    directed_hausdorff, hausdorff_semidistance, run_congruence, sample_attractor, AttractorSample,
    CongruenceReport, CongruenceRow, SamplingPlan, SystemTag,
};
pub use closeness::{fitted_slope, run_closeness, ClosenessReport, ClosenessSample};
pub use identities::{run_identity_check, IdentityReport};
pub use tail::{run_tail_study, tail_mass, TailReport};
pub use verification::{
    check_local_gronwall, run_regime_verification, EnvelopeSample, GronwallReport,
    RegimePointReport, RegimeVerification,
};

use thiserror::Error;

use crate::integrator::{IntegrationError, IntegrationOptions};
use crate::lattice::{LatticeError, LatticeState, C64};
use crate::regimes::RegimeError;

/// Fraction of the sample grid treated as the trailing (limsup) window.
pub const TRAILING_FRACTION: f64 = 0.2;

/// Relative slack on asserted envelope bounds.
pub const ENVELOPE_SLACK: f64 = 1e-6;

/// Relative slack on asserted closeness bounds.
pub const CLOSENESS_SLACK: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("profile cannot be normalized: {0}")]
    Profile(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("trajectory blew up at t = {time} ({what})")]
    BlowUp { time: f64, what: String },
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

impl ExperimentError {
    /// True for violations of a study's standing assumptions, as opposed to
    /// numerical failures or malformed input.
    pub fn is_hypothesis(&self) -> bool {
        matches!(
            self,
            ExperimentError::Hypothesis(_)
                | ExperimentError::Regime(RegimeError::NotDissipative(_))
        )
    }
}

/// Lattice window and integration controls shared by a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    /// Half width `N` of the window `[−N, N]`.
    pub half_width: usize,
    pub opts: IntegrationOptions,
    /// `ρ̃² / ρ²` for absorbing-ball checks.
    pub absorb_margin: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            half_width: 256,
            opts: IntegrationOptions::oracle(),
            absorb_margin: 1.1,
        }
    }
}

impl StudySettings {
    pub fn with_half_width(mut self, half_width: usize) -> Self {
        self.half_width = half_width;
        self
    }

    pub fn with_opts(mut self, opts: IntegrationOptions) -> Self {
        self.opts = opts;
        self
    }

    pub(crate) fn place(&self, state: &LatticeState) -> Result<LatticeState, ExperimentError> {
        let n = self.half_width as i64;
        if !state.fits_window(-n, 2 * self.half_width + 1) {
            return Err(ExperimentError::InvalidInput(format!(
                "state has non-zero sites outside the window [-{n}, {n}]"
            )));
        }
        Ok(state.on_centered_window(self.half_width))
    }
}

/// Unit vector at site 0, the default reference profile.
pub fn unit_profile() -> LatticeState {
    LatticeState::single_site(0, C64::new(1.0, 0.0))
}

/// Rescales a profile of (almost) unit norm to exactly unit norm.
pub fn normalize_profile(profile: &LatticeState) -> Result<LatticeState, ExperimentError> {
    let n = profile.norm();
    if !((n - 1.0).abs() <= 1e-9) {
        return Err(ExperimentError::Profile(format!(
            "l2 norm {n} is not within 1e-9 of 1"
        )));
    }
    Ok(profile.scaled(1.0 / n))
}

/// `√χ₀ · φ` for a unit profile `φ`.
pub fn realize_norm2(profile: &LatticeState, chi0: f64) -> Result<LatticeState, ExperimentError> {
    if !(chi0 >= 0.0 && chi0.is_finite()) {
        return Err(ExperimentError::InvalidInput(format!(
            "target squared norm must be non-negative, got {chi0}"
        )));
    }
    Ok(normalize_profile(profile)?.scaled(chi0.sqrt()))
}

/// Initial data for the closeness and congruence studies:
/// `u⁰ = C_{u,0} ε φ`, `v⁰ = u⁰ + C₀ ε³ ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialFamily {
    pub epsilon: f64,
    pub c0: f64,
    pub cu0: f64,
    pub cv0: f64,
    pub u_profile: LatticeState,
    pub perturb_profile: LatticeState,
}

impl InitialFamily {
    /// Family with `φ = e₀` and `ψ = −e₀`, which keeps `‖v⁰‖ = C_{u,0}ε − C₀ε³`
    /// inside `C_{v,0}ε` whenever `C_{v,0} ≥ C_{u,0}`.
    pub fn inward(epsilon: f64, c0: f64, cu0: f64, cv0: f64) -> Self {
        Self {
            epsilon,
            c0,
            cu0,
            cv0,
            u_profile: unit_profile(),
            perturb_profile: unit_profile().scaled(-1.0),
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn generate(&self) -> Result<(LatticeState, LatticeState), ExperimentError> {
        make_initial_family(
            self.epsilon,
            self.c0,
            self.cu0,
            self.cv0,
            &self.u_profile,
            &self.perturb_profile,
        )
    }
}

/// Builds `(u⁰, v⁰)` and checks `‖v⁰‖ ≤ C_{v,0} ε`.
///
/// `ε = 0` is accepted and yields the zero pair.
pub fn make_initial_family(
    epsilon: f64,
    c0: f64,
    cu0: f64,
    cv0: f64,
    u_profile: &LatticeState,
    perturb_profile: &LatticeState,
) -> Result<(LatticeState, LatticeState), ExperimentError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(ExperimentError::InvalidInput(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    for (name, v) in [("C0", c0), ("C_u0", cu0), ("C_v0", cv0)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ExperimentError::InvalidInput(format!(
                "{name} must be non-negative, got {v}"
            )));
        }
    }
    let phi = normalize_profile(u_profile)?;
    let psi = normalize_profile(perturb_profile)?;
    let u0 = phi.scaled(cu0 * epsilon);
    let v0 = u0.add_scaled(c0 * epsilon.powi(3), &psi);
    let v_norm = v0.norm();
    let allowed = cv0 * epsilon;
    if v_norm > allowed * (1.0 + 1e-12) {
        return Err(ExperimentError::Hypothesis(format!(
            "‖v0‖ = {v_norm} exceeds C_v0·ε = {allowed}"
        )));
    }
    Ok((u0, v0))
}
