//! Heisenberg-picture evolution of bilinear observables.
//!
//! An observable Ω = ω_aa a†a + ω_ab a†b + ω_ba b†a + ω_bb b†b stays in
//! this class under the Lindblad generator, so its evolution reduces to a
//! 4-dimensional complex linear system. Coefficient ordering is
//! (ω_aa, ω_ab, ω_ba, ω_bb) everywhere.

use nalgebra::{DVector, Matrix4, Vector4};
use num_complex::Complex64;
use thiserror::Error;

use crate::ode::{self, OdeError, OdeOptions};
use crate::params::PhysParams;

/// The p/q, q/p factors in the closed form diverge as |A_L| -> 1; the
/// formulas assume both mixing amplitudes are well away from zero.
pub const A_L_LIMIT: f64 = 0.999;

#[derive(Debug, Error)]
pub enum HeisenbergError {
    #[error("negative time t = {0} ns: the dynamical semigroup is forward-only")]
    NegativeTime(f64),
    #[error("|A_L| = {0} exceeds {A_L_LIMIT}: p/q factors diverge")]
    CpTooExtreme(f64),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Coefficients of a bilinear observable, ordered (ω_aa, ω_ab, ω_ba, ω_bb).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearObservable {
    pub w_aa: Complex64,
    pub w_ab: Complex64,
    pub w_ba: Complex64,
    pub w_bb: Complex64,
}

impl BilinearObservable {
    pub fn new(w_aa: Complex64, w_ab: Complex64, w_ba: Complex64, w_bb: Complex64) -> Self {
        BilinearObservable { w_aa, w_ab, w_ba, w_bb }
    }

    /// Hermitian observable: real diagonal coefficients, ω_ba = ω_ab*.
    pub fn hermitian(w_aa: f64, w_ab: Complex64, w_bb: f64) -> Self {
        BilinearObservable {
            w_aa: Complex64::new(w_aa, 0.0),
            w_ab,
            w_ba: w_ab.conj(),
            w_bb: Complex64::new(w_bb, 0.0),
        }
    }

    pub fn zero() -> Self {
        BilinearObservable::from_vector(Vector4::zeros())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (self.w_ab - self.w_ba.conj()).norm() <= tol
            && self.w_aa.im.abs() <= tol
            && self.w_bb.im.abs() <= tol
    }

    pub fn to_vector(self) -> Vector4<Complex64> {
        Vector4::new(self.w_aa, self.w_ab, self.w_ba, self.w_bb)
    }

    pub fn from_vector(v: Vector4<Complex64>) -> Self {
        BilinearObservable { w_aa: v[0], w_ab: v[1], w_ba: v[2], w_bb: v[3] }
    }
}

/// The 4×4 closed-form propagator M(t) acting on coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub m: Matrix4<Complex64>,
    pub t: f64,
}

fn check_params(params: &PhysParams) -> Result<(), HeisenbergError> {
    if params.a_l.abs() > A_L_LIMIT {
        return Err(HeisenbergError::CpTooExtreme(params.a_l.abs()));
    }
    Ok(())
}

/// The four scalar envelope functions, in the overflow-safe forms
/// e^{−Γt}cosh(½ΔΓt) = (e^{−Γ_L t} + e^{−Γ_S t})/2 and
/// e^{−Γt}sinh(½ΔΓt) = (e^{−Γ_L t} − e^{−Γ_S t})/2.
fn envelopes(params: &PhysParams, t: f64) -> (f64, f64, f64, f64) {
    let es = (-params.gamma_s * t).exp();
    let el = (-params.gamma_l * t).exp();
    let eg = (-params.gamma * t).exp();
    let ch = 0.5 * (el + es);
    let sh = 0.5 * (el - es);
    let co = eg * (params.delta_m * t).cos();
    let si = eg * (params.delta_m * t).sin();
    (ch, sh, co, si)
}

/// The generator matrix G with dΩ/dt = G·ω. Columns ordered like the
/// coefficient vector.
pub fn generator_matrix(params: &PhysParams) -> Matrix4<Complex64> {
    let i = Complex64::i();
    let g_minus = 0.5 * params.delta_gamma - i * params.delta_m;
    let g_plus = 0.5 * params.delta_gamma + i * params.delta_m;
    let c1 = params.p / (2.0 * params.q);
    let c2 = params.q / (2.0 * params.p);
    let c3 = c1.conj();
    let c4 = c2.conj();
    let mg = Complex64::new(-params.gamma, 0.0);
    let z = Complex64::new(0.0, 0.0);
    Matrix4::new(
        mg, -c2 * g_minus, -c4 * g_plus, z,
        -c1 * g_minus, mg, z, -c4 * g_plus,
        -c3 * g_plus, z, mg, -c2 * g_minus,
        z, -c3 * g_plus, -c1 * g_minus, mg,
    )
}

/// Apply the generator: the right-hand side of the coefficient ODE.
pub fn generator_apply(
    params: &PhysParams,
    obs: &BilinearObservable,
) -> Result<BilinearObservable, HeisenbergError> {
    check_params(params)?;
    Ok(BilinearObservable::from_vector(generator_matrix(params) * obs.to_vector()))
}

/// Closed-form propagator matrix M(t).
pub fn propagator_matrix(params: &PhysParams, t: f64) -> Result<Propagator, HeisenbergError> {
    check_params(params)?;
    if t < 0.0 {
        return Err(HeisenbergError::NegativeTime(t));
    }
    let (ch, sh, co, si) = envelopes(params, t);
    let mu = (1.0 - params.a_l) / (1.0 + params.a_l);
    let nu = 1.0 / mu;
    let pq = params.p_over_q();
    let qp = params.q_over_p();
    let i = Complex64::i();
    let cp = Complex64::new(ch + co, 0.0);
    let cm = Complex64::new(ch - co, 0.0);
    let s_minus = Complex64::new(sh, 0.0) - i * si;
    let s_plus = Complex64::new(sh, 0.0) + i * si;
    let m = Matrix4::new(
        cp, -qp * s_minus, -mu * pq * s_plus, mu * cm,
        -pq * s_minus, cp, mu * pq * pq * cm, -mu * pq * s_plus,
        -nu * qp * s_plus, nu * qp * qp * cm, cp, -qp * s_minus,
        nu * cm, -nu * qp * s_plus, -pq * s_minus, cp,
    )
    .map(|z| 0.5 * z);
    Ok(Propagator { m, t })
}

/// Evolve an observable by the exact closed form.
pub fn propagate_closed_form(
    params: &PhysParams,
    obs0: &BilinearObservable,
    t: f64,
) -> Result<BilinearObservable, HeisenbergError> {
    let prop = propagator_matrix(params, t)?;
    Ok(BilinearObservable::from_vector(prop.m * obs0.to_vector()))
}

/// Evolve an observable by numerically integrating the coefficient ODE.
/// Independent oracle for the closed form.
pub fn propagate_ode(
    params: &PhysParams,
    obs0: &BilinearObservable,
    t: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<BilinearObservable, HeisenbergError> {
    check_params(params)?;
    if t < 0.0 {
        return Err(HeisenbergError::NegativeTime(t));
    }
    let g = generator_matrix(params);
    let y0 = DVector::from_iterator(4, obs0.to_vector().iter().copied());
    let y = ode::integrate(
        |y| {
            let v = Vector4::new(y[0], y[1], y[2], y[3]);
            let d = g * v;
            DVector::from_iterator(4, d.iter().copied())
        },
        y0,
        t,
        OdeOptions { rel_tol, abs_tol, post_step: None },
    )?;
    Ok(BilinearObservable::new(y[0], y[1], y[2], y[3]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pdg() -> PhysParams {
        PhysParams::pdg_defaults()
    }

    fn cp_preserved() -> PhysParams {
        PhysParams::from_raw(0.08954, 51.16, 5.293, 0.0, 0.0).unwrap()
    }

    fn max_dev(a: &BilinearObservable, b: &BilinearObservable) -> f64 {
        (a.to_vector() - b.to_vector()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn generator_is_linear_at_zero() {
        let out = generator_apply(&pdg(), &BilinearObservable::zero()).unwrap();
        assert_eq!(out, BilinearObservable::zero());
    }

    #[test]
    fn generator_on_number_k0_cp_preserved() {
        // L[a†a] at A_L = 0, p = q: (-Γ, -½(½ΔΓ - iΔm), -½(½ΔΓ + iΔm), 0)
        let p = cp_preserved();
        let obs = BilinearObservable::hermitian(1.0, Complex64::new(0.0, 0.0), 0.0);
        let out = generator_apply(&p, &obs).unwrap();
        let g_minus = Complex64::new(0.5 * p.delta_gamma, -p.delta_m);
        assert!((out.w_aa - Complex64::new(-p.gamma, 0.0)).norm() < 1e-12);
        assert!((out.w_ab + 0.5 * g_minus).norm() < 1e-12);
        assert!((out.w_ba + 0.5 * g_minus.conj()).norm() < 1e-12);
        assert!(out.w_bb.norm() < 1e-12);
    }

    #[test]
    fn generator_matches_finite_difference_of_closed_form() {
        let p = pdg();
        let obs = BilinearObservable::hermitian(1.0, Complex64::new(0.0, 0.0), 0.0);
        let h = 1e-6;
        let fwd = propagate_closed_form(&p, &obs, h).unwrap();
        let gen = generator_apply(&p, &obs).unwrap();
        let fd = BilinearObservable::from_vector((fwd.to_vector() - obs.to_vector()) / Complex64::new(h, 0.0));
        for (a, b) in fd.to_vector().iter().zip(gen.to_vector().iter()) {
            assert!((a - b).norm() < 1e-4 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn generator_preserves_hermiticity() {
        let out = generator_apply(&pdg(), &BilinearObservable::hermitian(1.0, Complex64::new(0.0, 0.0), 1.0)).unwrap();
        assert!(out.is_hermitian(1e-12));
    }

    #[test]
    fn propagator_identity_at_zero() {
        let prop = propagator_matrix(&pdg(), 0.0).unwrap();
        let id = Matrix4::<Complex64>::identity();
        assert!((prop.m - id).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn closed_form_at_zero_is_input() {
        let obs = BilinearObservable::new(
            Complex64::new(0.3, 0.7),
            Complex64::new(-1.1, 0.2),
            Complex64::new(0.0, -0.4),
            Complex64::new(2.0, 0.0),
        );
        let out = propagate_closed_form(&pdg(), &obs, 0.0).unwrap();
        assert!(max_dev(&out, &obs) < 1e-15);
    }

    #[test]
    fn strangeness_cp_preserved_oscillates() {
        // A_L = 0: the diagonal coefficients of S(t) are ±e^{-Γt}cos(Δm t)
        // while the off-diagonal ones rotate into ±i e^{-Γt}sin(Δm t)
        // (these drop out of every flavor-state expectation).
        let p = cp_preserved();
        let s0 = BilinearObservable::hermitian(1.0, Complex64::new(0.0, 0.0), -1.0);
        for &t in &[0.1, 0.5, 1.0, 3.0] {
            let st = propagate_closed_form(&p, &s0, t).unwrap();
            let env = (-p.gamma * t).exp();
            let co = env * (p.delta_m * t).cos();
            let si = env * (p.delta_m * t).sin();
            assert!((st.w_aa - Complex64::new(co, 0.0)).norm() < 1e-13);
            assert!((st.w_bb + Complex64::new(co, 0.0)).norm() < 1e-13);
            assert!((st.w_ab - Complex64::new(0.0, si)).norm() < 1e-13);
            assert!((st.w_ba + Complex64::new(0.0, si)).norm() < 1e-13);
        }
    }

    #[test]
    fn ode_agrees_with_closed_form() {
        let p = pdg();
        let n0 = BilinearObservable::hermitian(1.0, Complex64::new(0.0, 0.0), 1.0);
        let a = propagate_closed_form(&p, &n0, 5.0).unwrap();
        let b = propagate_ode(&p, &n0, 5.0, 1e-10, 1e-12).unwrap();
        assert!(max_dev(&a, &b) < 1e-9);
    }

    #[test]
    fn ode_at_zero_is_input() {
        let obs = BilinearObservable::hermitian(0.5, Complex64::new(0.1, -0.3), 1.5);
        let out = propagate_ode(&pdg(), &obs, 0.0, 1e-10, 1e-12).unwrap();
        assert_eq!(out, obs);
    }

    #[test]
    fn semigroup_property() {
        let p = pdg();
        let m1 = propagator_matrix(&p, 1.0).unwrap().m;
        let m2 = propagator_matrix(&p, 2.0).unwrap().m;
        let m3 = propagator_matrix(&p, 3.0).unwrap().m;
        let dev = (m3 - m2 * m1).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "semigroup deviation {dev}");
    }

    #[test]
    fn propagator_columns_match_basis_propagation() {
        let p = pdg();
        let m = propagator_matrix(&p, 1.0).unwrap().m;
        for j in 0..4 {
            let mut v = Vector4::<Complex64>::zeros();
            v[j] = Complex64::new(1.0, 0.0);
            let col = propagate_closed_form(&p, &BilinearObservable::from_vector(v), 1.0).unwrap();
            for i in 0..4 {
                assert!((m[(i, j)] - col.to_vector()[i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_negative_time_and_extreme_cp() {
        let p = pdg();
        let obs = BilinearObservable::zero();
        assert!(matches!(
            propagate_closed_form(&p, &obs, -0.1),
            Err(HeisenbergError::NegativeTime(_))
        ));
        let extreme = PhysParams::from_raw(0.1, 1.0, 1.0, 0.9995, 0.0).unwrap();
        assert!(matches!(
            propagate_closed_form(&extreme, &obs, 1.0),
            Err(HeisenbergError::CpTooExtreme(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hermitian_obs() -> impl Strategy<Value = BilinearObservable> {
            (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(
                |(aa, re, im, bb)| BilinearObservable::hermitian(aa, Complex64::new(re, im), bb),
            )
        }

        proptest! {
            #[test]
            fn hermiticity_preserved(obs in hermitian_obs(), t in 0.0f64..0.8954) {
                // t up to 10 tau_S
                let out = propagate_closed_form(&pdg(), &obs, t).unwrap();
                prop_assert!(out.is_hermitian(1e-12));
            }

            #[test]
            fn closed_form_matches_ode_random_params(
                obs in hermitian_obs(),
                t in 0.0f64..0.9,
                a_l in -0.9f64..0.9,
            ) {
                let p = PhysParams::from_raw(0.08954, 51.16, 5.293, a_l, 0.0).unwrap();
                let a = propagate_closed_form(&p, &obs, t).unwrap();
                let b = propagate_ode(&p, &obs, t, 1e-11, 1e-13).unwrap();
                prop_assert!(max_dev(&a, &b) < 1e-8);
            }

            #[test]
            fn exponential_envelope(obs in hermitian_obs(), t in 0.0f64..9.0) {
                let p = pdg();
                let out = propagate_closed_form(&p, &obs, t).unwrap();
                let max0 = obs.to_vector().iter().map(|z| z.norm()).fold(0.0, f64::max);
                let ratio = (p.p / p.q).norm().max((p.q / p.p).norm())
                    .max((1.0 + p.a_l) / (1.0 - p.a_l));
                let bound = 4.0 * max0 * ratio * (-p.gamma_l * t).exp();
                for z in out.to_vector().iter() {
                    prop_assert!(z.norm() <= bound + 1e-12);
                }
            }
        }
    }
}
