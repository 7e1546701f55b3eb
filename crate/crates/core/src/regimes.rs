//! Closed-form constants of the dissipative regime `δ > 1`.
//!
//! For `χ(t) = ‖v(t)‖²` of the non-local lattice the energy balance gives the
//! Riccati inequality `χ' + Aχ − Bχ² − C ≤ 0` with
//!
//! ```text
//! A = δ − 1,   B = 2√(1+β²),   C = ‖g‖² / (δ − 1),   D = A² − 4BC.
//! ```
//!
//! The sign of `D` (equivalently of `(δ−1)³ − 8√(1+β²)‖g‖²`) separates the
//! strongly forced regime from the one with the invariant annulus
//! `R₂ < χ ≤ R₁`, `R_{1,2} = (A ± √D) / 2B`.
//!
//! Monotone `χ` when `D < 0` and `χ → R₂` from above in the annulus do not
//! follow from the inequality alone: with `B > 0` the quadratic
//! `Aχ − Bχ² − C` is negative everywhere when `D < 0`. The experiments
//! measure those behaviours and never assert them. The operator bound used
//! is `‖Δ_d u‖ ≤ 4‖u‖`; the squared form `‖Δ_d u‖² ≤ 4‖u‖²` fails for
//! alternating states.

use thiserror::Error;

use crate::lattice::ModelParams;

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("regime constants need delta > 1 (got {0})")]
    NotDissipative(f64),
    #[error("{name} must be non-negative and finite (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("absorbing margin must exceed 1 (got {0})")]
    Margin(f64),
    #[error("a finite horizon T_f > 0 is required when delta <= 1")]
    MissingHorizon,
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), RegimeError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(RegimeError::Negative { name, value })
    }
}

/// Coefficients of the Riccati inequality for `χ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Discriminant `A² − 4BC`.
    pub d: f64,
    /// `√D`, present when `D > 0`.
    pub k: Option<f64>,
}

pub fn riccati_constants(
    params: &ModelParams,
    g_norm2: f64,
) -> Result<RiccatiConstants, RegimeError> {
    if !(params.delta > 1.0) {
        return Err(RegimeError::NotDissipative(params.delta));
    }
    check_nonneg("forcing norm", g_norm2)?;
    let a = params.delta - 1.0;
    let b = 2.0 * params.beta_modulus();
    let c = g_norm2 / a;
    let d = a * a - 4.0 * b * c;
    Ok(RiccatiConstants {
        a,
        b,
        c,
        d,
        k: (d > 0.0).then(|| d.sqrt()),
    })
}

/// `‖g‖²` at which `(δ−1)³ = 8√(1+β²)‖g‖²`.
pub fn critical_forcing_norm2(params: &ModelParams) -> f64 {
    let a = params.delta - 1.0;
    a * a * a / (8.0 * params.beta_modulus())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeLabel {
    /// `(δ−1)³ < 8√(1+β²)‖g‖²`, i.e. `D < 0`.
    SubcriticalForcing,
    /// `(δ−1)³ > 8√(1+β²)‖g‖²`, i.e. `D > 0`: two positive roots.
    SupercriticalAnnulus,
    /// Equality; not covered by either case.
    Critical,
}

impl RegimeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::SubcriticalForcing => "SubcriticalForcing",
            RegimeLabel::SupercriticalAnnulus => "SupercriticalAnnulus",
            RegimeLabel::Critical => "Critical",
        }
    }
}

/// Every derived constant for one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub constants: RiccatiConstants,
    pub case_label: RegimeLabel,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    /// `R²_{v,0} = (δ−1) / (2√(1+β²))`.
    pub restricted_radius_sq: f64,
    pub v0_norm2: Option<f64>,
    /// `δ₀ = (δ−1) − 2√(1+β²)‖v⁰‖²`, when `‖v⁰‖² < R²_{v,0}`.
    pub delta0: Option<f64>,
    /// `ρ² = ‖g‖² / (δ−1)²`.
    pub rho_sq_ldgl: f64,
    /// `ρ² = ‖g‖² / (δ₀(δ−1))`.
    pub rho_sq_nldgl: Option<f64>,
    pub absorb_margin: f64,
    /// `ρ̃² = margin · ρ²` for the local lattice.
    pub rho_tilde_sq_ldgl: f64,
    pub rho_tilde_sq_nldgl: Option<f64>,
    pub capture_radius: Option<f64>,
    /// `ρ₁ = 2√(1+β²)R⁴ + ‖g‖²/(δ−1)` for the capture radius `R`.
    pub nonescape_rho1: Option<f64>,
    /// `R₀² = ρ₁‖g‖²/(δ−1)`.
    pub nonescape_r0_sq_scaled: Option<f64>,
    /// `R₀² = ρ₁/(δ−1)`, the dimensionally consistent variant.
    pub nonescape_r0_sq_alt: Option<f64>,
    /// Local-lattice entry time into `ρ̃²` from the ball of radius `R`,
    /// `(1/(δ−1)) log((R² − ρ²)/(ρ̃² − ρ²))`.
    pub entry_time: Option<f64>,
    /// Non-local entry time from the ball of radius `‖v⁰‖`, with rate `δ₀`.
    pub entry_time_nldgl: Option<f64>,
}

fn entry_time(rate: f64, r_sq: f64, rho_sq: f64, rho_tilde_sq: f64) -> Option<f64> {
    if r_sq <= rho_tilde_sq || rho_tilde_sq <= rho_sq || rate <= 0.0 {
        return None;
    }
    Some(((r_sq - rho_sq) / (rho_tilde_sq - rho_sq)).ln() / rate)
}

/// Classifies `(δ, β, ‖g‖²)` and evaluates radii and entry times.
///
/// `v0_norm2` enables the restricted-ball quantities, `capture_radius` the
/// non-escaping radii and the local entry time. Entry times are `None` when
/// undefined (the starting ball already lies inside `ρ̃`, or `ρ = 0`).
pub fn classify_regime(
    params: &ModelParams,
    g_norm2: f64,
    v0_norm2: Option<f64>,
    capture_radius: Option<f64>,
    absorb_margin: f64,
) -> Result<RegimeReport, RegimeError> {
    let constants = riccati_constants(params, g_norm2)?;
    if !(absorb_margin > 1.0 && absorb_margin.is_finite()) {
        return Err(RegimeError::Margin(absorb_margin));
    }
    if let Some(v) = v0_norm2 {
        check_nonneg("initial norm", v)?;
    }
    if let Some(r) = capture_radius {
        check_nonneg("capture radius", r)?;
    }
    let RiccatiConstants { a, b, .. } = constants;
    let modulus = params.beta_modulus();

    let threshold = critical_forcing_norm2(params);
    let case_label = if g_norm2 > threshold {
        RegimeLabel::SubcriticalForcing
    } else if g_norm2 < threshold {
        RegimeLabel::SupercriticalAnnulus
    } else {
        RegimeLabel::Critical
    };
    let (r1, r2) = if case_label == RegimeLabel::SupercriticalAnnulus {
        let sq = constants.d.max(0.0).sqrt();
        let r1 = (a + sq) / (2.0 * b);
        // smaller root via Vieta to avoid cancellation
        let r2 = constants.c / (b * r1);
        (Some(r1), Some(r2))
    } else {
        (None, None)
    };

    let restricted_radius_sq = a / (2.0 * modulus);
    let delta0 = v0_norm2
        .filter(|&v| v < restricted_radius_sq)
        .map(|v| a - 2.0 * modulus * v);
    let rho_sq_ldgl = g_norm2 / (a * a);
    let rho_sq_nldgl = delta0.map(|d0| g_norm2 / (d0 * a));
    let rho_tilde_sq_ldgl = absorb_margin * rho_sq_ldgl;
    let rho_tilde_sq_nldgl = rho_sq_nldgl.map(|r| absorb_margin * r);

    let nonescape_rho1 = capture_radius.map(|r| 2.0 * modulus * r.powi(4) + g_norm2 / a);
    let nonescape_r0_sq_scaled = nonescape_rho1.map(|rho1| rho1 * g_norm2 / a);
    let nonescape_r0_sq_alt = nonescape_rho1.map(|rho1| rho1 / a);

    let entry_time_ldgl =
        capture_radius.and_then(|r| entry_time(a, r * r, rho_sq_ldgl, rho_tilde_sq_ldgl));
    let entry_time_nldgl = match (delta0, v0_norm2, rho_sq_nldgl, rho_tilde_sq_nldgl) {
        (Some(d0), Some(v), Some(rho), Some(rho_t)) => entry_time(d0, v, rho, rho_t),
        _ => None,
    };

    Ok(RegimeReport {
        constants,
        case_label,
        r1,
        r2,
        restricted_radius_sq,
        v0_norm2,
        delta0,
        rho_sq_ldgl,
        rho_sq_nldgl,
        absorb_margin,
        rho_tilde_sq_ldgl,
        rho_tilde_sq_nldgl,
        capture_radius,
        nonescape_rho1,
        nonescape_r0_sq_scaled,
        nonescape_r0_sq_alt,
        entry_time: entry_time_ldgl,
        entry_time_nldgl,
    })
}

/// Constants of the `ε³` closeness estimates between the two lattices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosenessConstants {
    /// `C = C₀ + (1+β)(C³_{u,0} + C³_{v,0})/(δ−1)`, uniform in time (δ > 1).
    pub c_uniform: Option<f64>,
    /// `C₁ = (1+β)(C³_{u,0} + C³_{v,0})/(δ−1)`, bound on the limsup (δ > 1).
    /// The `ε³` factor is applied in the estimate, not here.
    pub c_limsup: Option<f64>,
    /// `C₂` on `[0, T_f]` for `δ ≤ 1`.
    pub c_finite_horizon: Option<f64>,
}

impl ClosenessConstants {
    /// The constant bounding `sup_t ‖u − v‖ / ε³` over the run.
    pub fn sup_constant(&self) -> f64 {
        self.c_uniform
            .or(self.c_finite_horizon)
            .expect("one of the closeness constants is always set")
    }
}

pub fn closeness_constants(
    params: &ModelParams,
    c0: f64,
    cu0: f64,
    cv0: f64,
    t_final: Option<f64>,
) -> Result<ClosenessConstants, RegimeError> {
    check_nonneg("C0", c0)?;
    check_nonneg("C_u0", cu0)?;
    check_nonneg("C_v0", cv0)?;
    let growth = (1.0 + params.beta) * (cu0.powi(3) + cv0.powi(3));
    let delta = params.delta;
    if delta > 1.0 {
        let c1 = growth / (delta - 1.0);
        return Ok(ClosenessConstants {
            c_uniform: Some(c0 + c1),
            c_limsup: Some(c1),
            c_finite_horizon: None,
        });
    }
    let tf = t_final
        .filter(|t| *t > 0.0 && t.is_finite())
        .ok_or(RegimeError::MissingHorizon)?;
    let c2 = if delta == 1.0 {
        c0 + 2.0 * growth * tf
    } else {
        let e = (2.0 * (1.0 - delta) * tf).exp();
        c0 * e + growth / (1.0 - delta) * (e - 1.0)
    };
    Ok(ClosenessConstants {
        c_uniform: None,
        c_limsup: None,
        c_finite_horizon: Some(c2),
    })
}

/// Local-lattice bound `χ(0)e^{−(δ−1)t} + ‖g‖²/(δ−1)² (1 − e^{−(δ−1)t})`.
pub fn local_gronwall_bound(delta: f64, g_norm2: f64, chi0: f64, t: f64) -> f64 {
    let a = delta - 1.0;
    let e = (-a * t).exp();
    chi0 * e + g_norm2 / (a * a) * (1.0 - e)
}

/// Restricted-ball bound for the non-local lattice,
/// `χ(0)e^{−δ₀t} + ‖g‖²/(δ₀(δ−1)) (1 − e^{−δ₀t})`.
pub fn restricted_gronwall_bound(delta: f64, delta0: f64, g_norm2: f64, chi0: f64, t: f64) -> f64 {
    let e = (-delta0 * t).exp();
    chi0 * e + g_norm2 / (delta0 * (delta - 1.0)) * (1.0 - e)
}

/// Bernoulli envelope `R₂ + [(ψ(0) − B/K)e^{Kt} + B/K]^{-1}` with
/// `ψ(0) = 1/(χ(0) − R₂)`. Defined for `R₂ ≤ χ(0) ≤ R₁`.
pub fn bernoulli_envelope(report: &RegimeReport, chi0: f64, t: f64) -> Option<f64> {
    let (r1, r2, k) = (report.r1?, report.r2?, report.constants.k?);
    if chi0 < r2 || chi0 > r1 {
        return None;
    }
    if chi0 == r2 {
        return Some(r2);
    }
    let b_over_k = report.constants.b / k;
    let psi0 = 1.0 / (chi0 - r2);
    // ψ(0) ≥ B/K is exactly χ(0) ≤ R₁; clamp rounding at the upper edge.
    let lead = (psi0 - b_over_k).max(0.0);
    Some(r2 + 1.0 / (lead * (k * t).exp() + b_over_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(delta: f64, beta: f64) -> ModelParams {
        ModelParams::nonlocal(0.0, beta, delta)
    }

    #[test]
    fn constants_annulus_example() {
        let k = riccati_constants(&p(3.0, 0.0), 0.1).unwrap();
        assert_eq!((k.a, k.b), (2.0, 2.0));
        assert_abs_diff_eq!(k.c, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(k.d, 3.6, epsilon = 1e-14);
        assert!(k.k.is_some());
    }

    #[test]
    fn constants_strong_forcing_example() {
        let k = riccati_constants(&p(2.0, 0.0), 1.0).unwrap();
        assert_eq!((k.a, k.b, k.c, k.d), (1.0, 2.0, 1.0, -7.0));
        assert_eq!(k.k, None);
    }

    #[test]
    fn constants_unforced_example() {
        let k = riccati_constants(&p(2.0, 3f64.sqrt()), 0.0).unwrap();
        assert_abs_diff_eq!(k.b, 4.0, epsilon = 1e-15);
        assert_eq!(k.c, 0.0);
        assert_abs_diff_eq!(k.d, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.k.unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constants_need_dissipation() {
        assert_eq!(
            riccati_constants(&p(1.0, 0.0), 0.1),
            Err(RegimeError::NotDissipative(1.0))
        );
    }

    #[test]
    fn annulus_roots() {
        let r = classify_regime(&p(3.0, 0.0), 0.1, None, None, 1.1).unwrap();
        assert_eq!(r.case_label, RegimeLabel::SupercriticalAnnulus);
        assert_abs_diff_eq!(r.r1.unwrap(), 0.974342, epsilon = 1e-6);
        assert_abs_diff_eq!(r.r2.unwrap(), 0.025658, epsilon = 1e-6);
        assert_abs_diff_eq!(r.restricted_radius_sq, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn local_entry_time_example() {
        let r = classify_regime(&p(2.0, 0.0), 1.0, None, Some(2.0), 2.0).unwrap();
        assert_eq!(r.rho_sq_ldgl, 1.0);
        assert_eq!(r.rho_tilde_sq_ldgl, 2.0);
        assert_abs_diff_eq!(r.entry_time.unwrap(), 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn restricted_quantities_only_inside_ball() {
        let inside = classify_regime(&p(3.0, 0.0), 0.01, Some(0.5), None, 1.1).unwrap();
        assert_abs_diff_eq!(inside.delta0.unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inside.rho_sq_nldgl.unwrap(), 0.005, epsilon = 1e-15);
        let outside = classify_regime(&p(3.0, 0.0), 0.01, Some(1.5), None, 1.1).unwrap();
        assert_eq!(outside.delta0, None);
        assert_eq!(outside.rho_sq_nldgl, None);
    }

    #[test]
    fn nonescape_radii_side_by_side() {
        let r = classify_regime(&p(2.0, 0.0), 0.5, None, Some(1.0), 1.1).unwrap();
        let rho1 = 2.0 + 0.5;
        assert_abs_diff_eq!(r.nonescape_rho1.unwrap(), rho1, epsilon = 1e-15);
        assert_abs_diff_eq!(
            r.nonescape_r0_sq_scaled.unwrap(),
            rho1 * 0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(r.nonescape_r0_sq_alt.unwrap(), rho1, epsilon = 1e-15);
    }

    #[test]
    fn bad_margin_rejected() {
        assert_eq!(
            classify_regime(&p(2.0, 0.0), 0.1, None, None, 1.0),
            Err(RegimeError::Margin(1.0))
        );
    }

    #[test]
    fn entry_time_undefined_inside_target() {
        let r = classify_regime(&p(2.0, 0.0), 1.0, None, Some(1.0), 2.0).unwrap();
        assert_eq!(r.entry_time, None);
        let unforced = classify_regime(&p(2.0, 0.0), 0.0, None, Some(1.0), 2.0).unwrap();
        assert_eq!(unforced.entry_time, None);
    }

    #[test]
    fn closeness_examples() {
        let c = closeness_constants(&p(2.0, 0.0), 1.0, 1.0, 1.0, None).unwrap();
        assert_eq!(c.c_uniform, Some(3.0));
        assert_eq!(c.c_limsup, Some(2.0));
        let c = closeness_constants(&p(1.0, 0.0), 1.0, 1.0, 1.0, Some(1.0)).unwrap();
        assert_eq!(c.c_finite_horizon, Some(5.0));
        let c = closeness_constants(&p(0.5, 0.0), 1.0, 1.0, 1.0, Some(1.0)).unwrap();
        assert_abs_diff_eq!(c.c_finite_horizon.unwrap(), 9.5914, epsilon = 1e-3);
        assert_eq!(
            closeness_constants(&p(0.5, 0.0), 1.0, 1.0, 1.0, None),
            Err(RegimeError::MissingHorizon)
        );
    }

    #[test]
    fn bernoulli_envelope_limits() {
        let r = classify_regime(&p(3.0, 0.0), 0.1, None, None, 1.1).unwrap();
        let (r1, r2) = (r.r1.unwrap(), r.r2.unwrap());
        assert_abs_diff_eq!(
            bernoulli_envelope(&r, 0.5, 0.0).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(bernoulli_envelope(&r, r1, 3.0).unwrap(), r1, epsilon = 1e-9);
        assert!(bernoulli_envelope(&r, 0.5, 30.0).unwrap() - r2 < 1e-12);
        assert_eq!(bernoulli_envelope(&r, r2, 1.0), Some(r2));
        assert_eq!(bernoulli_envelope(&r, r1 * 1.01, 1.0), None);
    }
}
