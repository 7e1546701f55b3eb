//! Truncated lattice states and the combined local/non-local DGL vector field.
//!
//! A [`LatticeState`] stores the amplitudes `u_n` for `n` in a finite window
//! `[offset, offset + len)`; every site outside the window is zero. The
//! combined right-hand side
//!
//! ```text
//! F(u)_n = (1-δ) u_n + (1+iα)(Δ_d u)_n
//!          - (1+iβ) [ γ |u_n|² u_n + (μ/2)(u_{n+1} + u_{n-1}) |u_n|² ] + g_n
//! ```
//!
//! reduces to the local lattice for `(γ, μ) = (1, 0)` and to the non-local one
//! for `(γ, μ) = (0, 1)`.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::exec::{ordered_sum, Execution};

pub type C64 = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("lattice window must hold at least one site")]
    EmptyWindow,
    #[error("forcing has non-zero sites outside the evaluation window [{min}, {max}]")]
    ForcingOutsideWindow { min: i64, max: i64 },
    #[error(
        "verification studies need alpha >= 0 and beta >= 0 (got alpha = {alpha}, beta = {beta})"
    )]
    NegativeCoefficient { alpha: f64, beta: f64 },
}

/// Coefficients `(α, β, δ, γ, μ)` of the combined lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, delta: f64, gamma: f64, mu: f64) -> Self {
        Self {
            alpha,
            beta,
            delta,
            gamma,
            mu,
        }
    }

    /// Local lattice, `(γ, μ) = (1, 0)`.
    pub fn local(alpha: f64, beta: f64, delta: f64) -> Self {
        Self::new(alpha, beta, delta, 1.0, 0.0)
    }

    /// Non-local lattice, `(γ, μ) = (0, 1)`.
    pub fn nonlocal(alpha: f64, beta: f64, delta: f64) -> Self {
        Self::new(alpha, beta, delta, 0.0, 1.0)
    }

    pub fn is_local(&self) -> bool {
        self.gamma == 1.0 && self.mu == 0.0
    }

    pub fn is_nonlocal(&self) -> bool {
        self.gamma == 0.0 && self.mu == 1.0
    }

    /// Same `(α, β, δ)` with the coupling switched to the local preset.
    pub fn as_local(&self) -> Self {
        Self::local(self.alpha, self.beta, self.delta)
    }

    pub fn as_nonlocal(&self) -> Self {
        Self::nonlocal(self.alpha, self.beta, self.delta)
    }

    /// `√(1+β²)`, the modulus of `1 + iβ`.
    pub fn beta_modulus(&self) -> f64 {
        self.beta.hypot(1.0)
    }

    /// Rejects negative `α` or `β`, which the bounds of the verification
    /// studies do not cover. Free simulation accepts any reals.
    pub fn check_study_signs(&self) -> Result<(), LatticeError> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(LatticeError::NegativeCoefficient {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

/// Squared l², quartic l⁴ and sup norms of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2_sq: f64,
    pub l4_quartic: f64,
    pub linf: f64,
}

/// Finite window of a square-summable lattice sequence, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    offset: i64,
    values: Vec<C64>,
}

impl LatticeState {
    pub fn new(offset: i64, values: Vec<C64>) -> Result<Self, LatticeError> {
        if values.is_empty() {
            return Err(LatticeError::EmptyWindow);
        }
        Ok(Self { offset, values })
    }

    pub fn zeros(offset: i64, len: usize) -> Self {
        assert!(len > 0, "lattice window must hold at least one site");
        Self {
            offset,
            values: vec![C64::new(0.0, 0.0); len],
        }
    }

    /// Zero state on the symmetric window `[-half_width, half_width]`.
    pub fn centered_zeros(half_width: usize) -> Self {
        Self::zeros(-(half_width as i64), 2 * half_width + 1)
    }

    /// `amplitude · e_site` stored on the one-site window `{site}`.
    pub fn single_site(site: i64, amplitude: C64) -> Self {
        Self {
            offset: site,
            values: vec![amplitude],
        }
    }

    pub fn from_fn(offset: i64, len: usize, mut f: impl FnMut(i64) -> C64) -> Self {
        assert!(len > 0, "lattice window must hold at least one site");
        Self {
            offset,
            values: (0..len).map(|j| f(offset + j as i64)).collect(),
        }
    }

    /// Independent normal real and imaginary parts of standard deviation
    /// `scale` on every site of the window.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, offset: i64, len: usize, scale: f64) -> Self {
        Self::from_fn(offset, len, |_| {
            C64::new(gaussian(rng) * scale, gaussian(rng) * scale)
        })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Lowest stored index.
    pub fn min_index(&self) -> i64 {
        self.offset
    }

    /// Highest stored index.
    pub fn max_index(&self) -> i64 {
        self.offset + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Amplitude at lattice index `n`, zero outside the window.
    pub fn get(&self, n: i64) -> C64 {
        let j = n - self.offset;
        if j < 0 || j >= self.values.len() as i64 {
            C64::new(0.0, 0.0)
        } else {
            self.values[j as usize]
        }
    }

    pub fn same_window(&self, other: &Self) -> bool {
        self.offset == other.offset && self.values.len() == other.values.len()
    }

    /// Copies the state onto `[offset, offset + len)`, zero-extending or
    /// truncating as needed.
    pub fn rewindow(&self, offset: i64, len: usize) -> Self {
        Self::from_fn(offset, len, |n| self.get(n))
    }

    /// Zero-extends onto the symmetric window `[-half_width, half_width]`.
    pub fn on_centered_window(&self, half_width: usize) -> Self {
        self.rewindow(-(half_width as i64), 2 * half_width + 1)
    }

    /// True when every non-zero site lies inside `[offset, offset + len)`.
    pub fn fits_window(&self, offset: i64, len: usize) -> bool {
        let hi = offset + len as i64 - 1;
        self.values.iter().enumerate().all(|(j, z)| {
            let n = self.offset + j as i64;
            (offset..=hi).contains(&n) || (z.re == 0.0 && z.im == 0.0)
        })
    }

    fn union_window(&self, other: &Self) -> (i64, usize) {
        let lo = self.min_index().min(other.min_index());
        let hi = self.max_index().max(other.max_index());
        (lo, (hi - lo + 1) as usize)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            offset: self.offset,
            values: self.values.iter().map(|z| z * factor).collect(),
        }
    }

    /// `self + factor · other` over the union of both windows.
    pub fn add_scaled(&self, factor: f64, other: &Self) -> Self {
        let (lo, len) = self.union_window(other);
        Self::from_fn(lo, len, |n| self.get(n) + other.get(n) * factor)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn norm2(&self) -> f64 {
        ordered_sum(self.values.iter().map(|z| z.norm_sqr()))
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn norms(&self) -> Norms {
        norms(self)
    }

    /// `Re Σ u_n conj(v_n)` over the union of both windows.
    pub fn inner_re(&self, other: &Self) -> f64 {
        let (lo, len) = self.union_window(other);
        ordered_sum((0..len as i64).map(|j| {
            let n = lo + j;
            (self.get(n) * other.get(n).conj()).re
        }))
    }

    /// `‖self − other‖_{l²}` over the union of both windows.
    pub fn dist_l2(&self, other: &Self) -> f64 {
        if self.same_window(other) {
            return ordered_sum(
                self.values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| (a - b).norm_sqr()),
            )
            .sqrt();
        }
        self.sub(other).norm()
    }

    /// `‖self − other‖_{l^∞}` over the union of both windows.
    pub fn dist_linf(&self, other: &Self) -> f64 {
        let (lo, len) = self.union_window(other);
        (0..len as i64)
            .map(|j| (self.get(lo + j) - other.get(lo + j)).norm())
            .fold(0.0, f64::max)
    }

    /// Rescales to unit l² norm. Fails on the zero state.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self.scaled(1.0 / n))
        } else {
            None
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `(Δ_d u)_n = u_{n+1} − 2u_n + u_{n−1}` with zero extension. The result
/// lives on the input window widened by one site on each side.
pub fn discrete_laplacian(state: &LatticeState) -> LatticeState {
    LatticeState::from_fn(state.offset - 1, state.len() + 2, |n| {
        state.get(n + 1) - state.get(n) * 2.0 + state.get(n - 1)
    })
}

/// Σ|u_n|², Σ|u_n|⁴ and max|u_n| over the window.
pub fn norms(state: &LatticeState) -> Norms {
    let v = state.values();
    Norms {
        l2_sq: ordered_sum(v.iter().map(|z| z.norm_sqr())),
        l4_quartic: ordered_sum(v.iter().map(|z| z.norm_sqr() * z.norm_sqr())),
        linf: v.iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

/// `Σ |u_{n+1} − u_n|²` over every neighbouring pair touching the window,
/// including the two pairs that reach into the zero extension.
pub fn dirichlet_sum(state: &LatticeState) -> f64 {
    let lo = state.min_index() - 1;
    let hi = state.max_index();
    ordered_sum((lo..=hi).map(|n| (state.get(n + 1) - state.get(n)).norm_sqr()))
}

/// An external force `g` with its cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    state: LatticeState,
    norm2: f64,
}

impl Forcing {
    pub fn new(state: LatticeState) -> Self {
        let norm2 = state.norm2();
        Self { state, norm2 }
    }

    pub fn zero() -> Self {
        Self::new(LatticeState::zeros(0, 1))
    }

    /// `g = √norm2 · e_site`, real and non-negative at the site.
    pub fn single_site(site: i64, norm2: f64) -> Self {
        assert!(norm2 >= 0.0, "forcing norm must be non-negative");
        let state = LatticeState::single_site(site, C64::new(norm2.sqrt(), 0.0));
        Self { state, norm2 }
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn is_zero(&self) -> bool {
        self.norm2 == 0.0
    }
}

/// Precomputed evaluation of the combined vector field on a fixed window.
///
/// The stencil reads zeros beyond the window edges and the output is clamped
/// to the window, so state size stays fixed during integration.
#[derive(Debug, Clone)]
pub struct RhsKernel {
    params: ModelParams,
    offset: i64,
    forcing: Vec<C64>,
    lin: C64,
    disp: C64,
    nl: C64,
}

impl RhsKernel {
    pub fn new(
        params: &ModelParams,
        forcing: &Forcing,
        offset: i64,
        len: usize,
    ) -> Result<Self, LatticeError> {
        if len == 0 {
            return Err(LatticeError::EmptyWindow);
        }
        if !forcing.state.fits_window(offset, len) {
            return Err(LatticeError::ForcingOutsideWindow {
                min: offset,
                max: offset + len as i64 - 1,
            });
        }
        Ok(Self {
            params: *params,
            offset,
            forcing: forcing.state.rewindow(offset, len).into_values(),
            lin: C64::new(1.0 - params.delta, 0.0),
            disp: C64::new(1.0, params.alpha),
            nl: C64::new(1.0, params.beta),
        })
    }

    /// Kernel on the window of `state`.
    pub fn for_state(
        params: &ModelParams,
        forcing: &Forcing,
        state: &LatticeState,
    ) -> Result<Self, LatticeError> {
        Self::new(params, forcing, state.offset(), state.len())
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.forcing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forcing.is_empty()
    }

    #[inline]
    fn site(&self, u: &[C64], j: usize) -> C64 {
        let zero = C64::new(0.0, 0.0);
        let c = u[j];
        let left = if j > 0 { u[j - 1] } else { zero };
        let right = if j + 1 < u.len() { u[j + 1] } else { zero };
        let lap = right - c * 2.0 + left;
        let a2 = c.norm_sqr();
        let local = (c * a2) * self.params.gamma;
        let nonlocal = ((right + left) * a2) * (0.5 * self.params.mu);
        self.lin * c + self.disp * lap - self.nl * (local + nonlocal) + self.forcing[j]
    }

    /// Writes `F(u)` into `out`; both slices span the kernel window.
    pub fn eval_into(&self, u: &[C64], out: &mut [C64], exec: Execution) {
        debug_assert_eq!(u.len(), self.forcing.len());
        debug_assert_eq!(out.len(), self.forcing.len());
        exec.fill_indexed(out, |j| self.site(u, j));
    }

    pub fn eval(&self, state: &LatticeState, exec: Execution) -> LatticeState {
        let mut out = vec![C64::new(0.0, 0.0); state.len()];
        self.eval_into(state.values(), &mut out, exec);
        LatticeState {
            offset: state.offset,
            values: out,
        }
    }
}

/// `F(u)` for the combined lattice on the zero-extended lattice, evaluated on
/// the state window widened by one site on each side, joined with the forcing
/// window.
pub fn rhs_combined(state: &LatticeState, params: &ModelParams, forcing: &Forcing) -> LatticeState {
    rhs_combined_with(state, params, forcing, Execution::Sequential)
}

pub fn rhs_combined_with(
    state: &LatticeState,
    params: &ModelParams,
    forcing: &Forcing,
    exec: Execution,
) -> LatticeState {
    let lo = (state.min_index() - 1).min(forcing.state.min_index());
    let hi = (state.max_index() + 1).max(forcing.state.max_index());
    let len = (hi - lo + 1) as usize;
    let u = state.rewindow(lo, len);
    let kernel = RhsKernel::new(params, forcing, lo, len).expect("union window holds the forcing");
    kernel.eval(&u, exec)
}

/// The nonlinear part `N(u)_n = −(1+iβ)[γ|u_n|²u_n + (μ/2)(u_{n+1}+u_{n−1})|u_n|²]`
/// on the window of `state`.
pub fn nonlinearity(state: &LatticeState, params: &ModelParams) -> LatticeState {
    let nl = C64::new(1.0, params.beta);
    LatticeState::from_fn(state.offset, state.len(), |n| {
        let c = state.get(n);
        let a2 = c.norm_sqr();
        let local = (c * a2) * params.gamma;
        let nonlocal = ((state.get(n + 1) + state.get(n - 1)) * a2) * (0.5 * params.mu);
        -(nl * (local + nonlocal))
    })
}

/// Lipschitz bound of `N` on the l² ball of radius `radius`:
/// `‖N(u) − N(v)‖ ≤ 3√(1+β²)(|γ| + |μ|) R² ‖u − v‖`.
///
/// Per site, `||u|²u − |v|²v| ≤ 3R²|u−v|` and the non-local difference is at
/// most `4R²|d_n| + R²(|d_{n+1}| + |d_{n−1}|)` using `sup|u_n| ≤ ‖u‖ ≤ R`;
/// summing in l² gives the factor `3(|γ| + |μ|)`.
pub fn lipschitz_constant(params: &ModelParams, radius: f64) -> f64 {
    3.0 * params.beta_modulus() * (params.gamma.abs() + params.mu.abs()) * radius * radius
}

/// Signed pieces of `d‖u‖²/dt = 2 Re⟨F(u), u⟩`.
///
/// `total = gain_loss − dirichlet − local_quartic + nonlocal_cubic + forcing_work`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BalanceTerms {
    /// `−2(δ−1)‖u‖²`.
    pub gain_loss: f64,
    /// `2Σ|u_{n+1} − u_n|²`, enters with a minus sign.
    pub dirichlet: f64,
    /// `2γΣ|u_n|⁴`, enters with a minus sign.
    pub local_quartic: f64,
    /// `−μ Re[(1+iβ) Σ|u_n|²(u_{n+1} + u_{n−1}) conj(u_n)]`, kept exact.
    pub nonlocal_cubic: f64,
    /// `2 Re Σ g_n conj(u_n)`.
    pub forcing_work: f64,
    pub total: f64,
}

/// Analytic decomposition of `d‖u‖²/dt` together with
/// `|2 Re⟨F(u), u⟩ − total|`.
pub fn balance_residual(
    state: &LatticeState,
    params: &ModelParams,
    forcing: &Forcing,
) -> (BalanceTerms, f64) {
    let n = norms(state);
    let gain_loss = -2.0 * (params.delta - 1.0) * n.l2_sq;
    let dirichlet = 2.0 * dirichlet_sum(state);
    let local_quartic = 2.0 * params.gamma * n.l4_quartic;
    let cubic = ordered_sum((state.min_index()..=state.max_index()).map(|k| {
        let c = state.get(k);
        (C64::new(1.0, params.beta)
            * (state.get(k + 1) + state.get(k - 1))
            * c.conj()
            * c.norm_sqr())
        .re
    }));
    let nonlocal_cubic = -params.mu * cubic;
    let forcing_work = 2.0 * forcing.state.inner_re(state);
    let total = gain_loss - dirichlet - local_quartic + nonlocal_cubic + forcing_work;
    let terms = BalanceTerms {
        gain_loss,
        dirichlet,
        local_quartic,
        nonlocal_cubic,
        forcing_work,
        total,
    };
    let f = rhs_combined(state, params, forcing);
    let lhs = 2.0 * f.inner_re(state);
    (terms, (lhs - total).abs())
}
