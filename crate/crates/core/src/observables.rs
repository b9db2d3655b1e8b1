//! The physically interesting observables and their closed-form mean
//! values in flavor and K_S/K_L number states, including CP-preserved
//! limits and the leading-order CP-violation differences.

use num_complex::Complex64;
use thiserror::Error;

use crate::heisenberg::BilinearObservable;
use crate::params::PhysParams;

#[derive(Debug, Error)]
pub enum ObservablesError {
    #[error("mixing amplitudes p, q must be nonzero for K_S/K_L observables")]
    ZeroAmplitude,
    #[error("leading-order CP difference is not defined for {0:?}")]
    UnsupportedKind(ObservableKind),
}

/// The observables of interest, identified by their initial coefficient
/// vector (see [`make_initial`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservableKind {
    /// N(0) = a†a + b†b
    TotalNumber,
    /// S(0) = a†a − b†b
    Strangeness,
    /// a†a
    NumberK0,
    /// b†b
    NumberK0bar,
    /// c_S†c_S
    NumberKS,
    /// c_L†c_L
    NumberKL,
}

impl ObservableKind {
    pub const ALL: [ObservableKind; 6] = [
        ObservableKind::TotalNumber,
        ObservableKind::Strangeness,
        ObservableKind::NumberK0,
        ObservableKind::NumberK0bar,
        ObservableKind::NumberKS,
        ObservableKind::NumberKL,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObservableKind::TotalNumber => "total-number",
            ObservableKind::Strangeness => "strangeness",
            ObservableKind::NumberK0 => "number-k0",
            ObservableKind::NumberK0bar => "number-k0bar",
            ObservableKind::NumberKS => "number-ks",
            ObservableKind::NumberKL => "number-kl",
        }
    }
}

/// Flavor occupation (number of K⁰, number of K̄⁰).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlavorCount {
    pub n: u32,
    pub n_bar: u32,
}

impl FlavorCount {
    pub fn new(n: u32, n_bar: u32) -> Self {
        FlavorCount { n, n_bar }
    }

    pub fn total(&self) -> u32 {
        self.n + self.n_bar
    }
}

/// Initial coefficient vector for each observable kind.
///
/// For K_S/K_L numbers these are the expansions of c_S†c_S and c_L†c_L,
/// with c_S = p*a + q*b and c_L = p*a − q*b.
pub fn make_initial(
    kind: ObservableKind,
    params: &PhysParams,
) -> Result<BilinearObservable, ObservablesError> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    Ok(match kind {
        ObservableKind::TotalNumber => BilinearObservable::new(one, zero, zero, one),
        ObservableKind::Strangeness => BilinearObservable::new(one, zero, zero, -one),
        ObservableKind::NumberK0 => BilinearObservable::new(one, zero, zero, zero),
        ObservableKind::NumberK0bar => BilinearObservable::new(zero, zero, zero, one),
        ObservableKind::NumberKS | ObservableKind::NumberKL => {
            if params.p.norm() == 0.0 || params.q.norm() == 0.0 {
                return Err(ObservablesError::ZeroAmplitude);
            }
            // c_S†c_S = |p|² a†a + pq* a†b + qp* b†a + |q|² b†b, with
            // |p|² = (1+A_L)/2 and pq* = (1−A_L)/2·(p/q); K_L flips the
            // off-diagonal signs.
            let sign = if kind == ObservableKind::NumberKS { 1.0 } else { -1.0 };
            let pq = params.p * params.q.conj();
            BilinearObservable::new(
                Complex64::new((1.0 + params.a_l) / 2.0, 0.0),
                sign * pq,
                sign * pq.conj(),
                Complex64::new((1.0 - params.a_l) / 2.0, 0.0),
            )
        }
    })
}

/// Diagonal matrix element ⟨n,n̄|Ω|n,n̄⟩ = ω_aa·n + ω_bb·n̄ (the
/// off-diagonal monomials have no diagonal elements in flavor states).
pub fn expectation_flavor(obs: &BilinearObservable, state: FlavorCount) -> f64 {
    obs.w_aa.re * state.n as f64 + obs.w_bb.re * state.n_bar as f64
}

/// Envelope scalars shared by every mean-value formula:
/// ch = e^{−Γt}cosh(½ΔΓt), co = e^{−Γt}cos(Δm t), evaluated in the
/// overflow-safe forms ch = (e^{−Γ_L t}+e^{−Γ_S t})/2.
fn envelopes(params: &PhysParams, t: f64) -> (f64, f64) {
    let es = (-params.gamma_s * t).exp();
    let el = (-params.gamma_l * t).exp();
    let ch = 0.5 * (el + es);
    let co = (-params.gamma * t).exp() * (params.delta_m * t).cos();
    (ch, co)
}

/// ⟨N(t)⟩ in |n,n̄⟩.
pub fn mean_total_number(params: &PhysParams, state: FlavorCount, t: f64) -> f64 {
    let (ch, co) = envelopes(params, t);
    let a = params.a_l;
    let n_sum = state.total() as f64;
    let n_diff = state.n as f64 - state.n_bar as f64;
    ((ch - a * a * co) * n_sum - a * (ch - co) * n_diff) / (1.0 - a * a)
}

/// ⟨S(t)⟩ in |n,n̄⟩.
pub fn mean_strangeness(params: &PhysParams, state: FlavorCount, t: f64) -> f64 {
    let (ch, co) = envelopes(params, t);
    let a = params.a_l;
    let n_sum = state.total() as f64;
    let n_diff = state.n as f64 - state.n_bar as f64;
    ((co - a * a * ch) * n_diff + a * (ch - co) * n_sum) / (1.0 - a * a)
}

/// ⟨N_K⁰(t)⟩ in |n,n̄⟩.
pub fn mean_number_k0(params: &PhysParams, state: FlavorCount, t: f64) -> f64 {
    let (ch, co) = envelopes(params, t);
    let nu = (1.0 + params.a_l) / (1.0 - params.a_l);
    0.5 * ((ch + co) * state.n as f64 + nu * (ch - co) * state.n_bar as f64)
}

/// ⟨N_K̄⁰(t)⟩ in |n,n̄⟩.
pub fn mean_number_k0bar(params: &PhysParams, state: FlavorCount, t: f64) -> f64 {
    let (ch, co) = envelopes(params, t);
    let mu = (1.0 - params.a_l) / (1.0 + params.a_l);
    0.5 * (mu * (ch - co) * state.n as f64 + (ch + co) * state.n_bar as f64)
}

/// Leading O(A_L) term of ⟨Ω(t)⟩ − ⟨Ω(t)⟩_CP for the four flavor-basis
/// observables. The exact difference is available by subtracting the
/// corresponding mean at A_L = 0.
pub fn cp_difference_leading(
    kind: ObservableKind,
    params: &PhysParams,
    state: FlavorCount,
    t: f64,
) -> Result<f64, ObservablesError> {
    let (ch, co) = envelopes(params, t);
    let factor = params.a_l * (ch - co);
    let n = state.n as f64;
    let n_bar = state.n_bar as f64;
    match kind {
        ObservableKind::TotalNumber => Ok(-factor * (n - n_bar)),
        ObservableKind::Strangeness => Ok(factor * (n + n_bar)),
        ObservableKind::NumberK0 => Ok(factor * n_bar),
        ObservableKind::NumberK0bar => Ok(-factor * n),
        other => Err(ObservablesError::UnsupportedKind(other)),
    }
}

/// Geiger-Nuttall law: ⟨n_S|N_KS(t)|n_S⟩ = n·e^{−Γ_S t}.
pub fn mean_ks_in_ns(params: &PhysParams, n: u32, t: f64) -> f64 {
    n as f64 * (-params.gamma_s * t).exp()
}

/// Geiger-Nuttall law: ⟨n_L|N_KL(t)|n_L⟩ = n·e^{−Γ_L t}.
pub fn mean_kl_in_nl(params: &PhysParams, n: u32, t: f64) -> f64 {
    n as f64 * (-params.gamma_l * t).exp()
}

/// Cross-flavor fraction: ⟨n_L|N_KS(t)|n_L⟩ = n·A_L²·e^{−Γ_L t}.
pub fn mean_ks_in_nl(params: &PhysParams, n: u32, t: f64) -> f64 {
    n as f64 * params.a_l * params.a_l * (-params.gamma_l * t).exp()
}

/// Cross-flavor fraction: ⟨n_S|N_KL(t)|n_S⟩ = n·A_L²·e^{−Γ_S t}.
pub fn mean_kl_in_ns(params: &PhysParams, n: u32, t: f64) -> f64 {
    n as f64 * params.a_l * params.a_l * (-params.gamma_s * t).exp()
}
