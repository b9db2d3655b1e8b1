//! Physical constants and derived quantities for the neutral-kaon system.
//!
//! Units: time in nanoseconds, rates and the mass difference in ns⁻¹ (ħ = 1).
//! The mean mass is carried in MeV/c² for documentation; it enters the
//! dynamics only as a global phase on equal-number terms.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("A_L must satisfy |A_L| < 1, got {0}")]
    CpOutOfRange(f64),
}

/// Immutable parameter set: experimental inputs plus everything derived
/// from them. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// K_S mean lifetime, ns.
    pub tau_s: f64,
    /// K_L mean lifetime, ns.
    pub tau_l: f64,
    /// Decay width 1/tau_s, ns⁻¹.
    pub gamma_s: f64,
    /// Decay width 1/tau_l, ns⁻¹.
    pub gamma_l: f64,
    /// (gamma_s + gamma_l)/2, ns⁻¹.
    pub gamma: f64,
    /// gamma_s − gamma_l, ns⁻¹.
    pub delta_gamma: f64,
    /// Mass difference m_L − m_S, ns⁻¹ (ħ = 1).
    pub delta_m: f64,
    /// Mean mass (m_S + m_L)/2, MeV/c².
    pub mass_mean: f64,
    /// CP-violation measure |p|² − |q|².
    pub a_l: f64,
    /// K_S/K_L mixing amplitude.
    pub p: Complex64,
    /// K_S/K_L mixing amplitude.
    pub q: Complex64,
}

impl PhysParams {
    /// Parameters from the experimental values quoted for the neutral-kaon
    /// system, with arg(p/q) = 0.
    pub fn pdg_defaults() -> PhysParams {
        // tau_S = 0.8954e-10 s, tau_L = 5.116e-8 s, dm = 0.5293e10 hbar/s,
        // A_L = 0.332%, m = 497.614 MeV/c^2
        PhysParams::from_raw(0.08954, 51.16, 5.293, 0.00332, 0.0)
            .expect("pdg constants are in range")
    }

    /// Build a parameter set from raw inputs. `phase_pq` sets arg(p/q);
    /// p = √((1+A_L)/2)·e^{i·phase/2}, q = √((1−A_L)/2)·e^{−i·phase/2}.
    pub fn from_raw(
        tau_s: f64,
        tau_l: f64,
        delta_m: f64,
        a_l: f64,
        phase_pq: f64,
    ) -> Result<PhysParams, ParamsError> {
        if !(tau_s > 0.0) {
            return Err(ParamsError::NonPositive { field: "tau_S", value: tau_s });
        }
        if !(tau_l > 0.0) {
            return Err(ParamsError::NonPositive { field: "tau_L", value: tau_l });
        }
        if !(a_l.abs() < 1.0) {
            return Err(ParamsError::CpOutOfRange(a_l));
        }
        let gamma_s = 1.0 / tau_s;
        let gamma_l = 1.0 / tau_l;
        let half_phase = Complex64::new(0.0, phase_pq / 2.0).exp();
        Ok(PhysParams {
            tau_s,
            tau_l,
            gamma_s,
            gamma_l,
            gamma: (gamma_s + gamma_l) / 2.0,
            delta_gamma: gamma_s - gamma_l,
            delta_m,
            mass_mean: 497.614,
            a_l,
            p: ((1.0 + a_l) / 2.0).sqrt() * half_phase,
            q: ((1.0 - a_l) / 2.0).sqrt() * half_phase.conj(),
        })
    }

    /// Same parameter set with mean mass replaced (MeV/c²).
    pub fn with_mass_mean(mut self, mass_mean: f64) -> PhysParams {
        self.mass_mean = mass_mean;
        self
    }

    pub fn p_over_q(&self) -> Complex64 {
        self.p / self.q
    }

    pub fn q_over_p(&self) -> Complex64 {
        self.q / self.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pdg() -> PhysParams {
        PhysParams::pdg_defaults()
    }

    #[test]
    fn pdg_inputs() {
        let p = pdg();
        assert_eq!(p.tau_s, 0.08954);
        assert_eq!(p.tau_l, 51.16);
        assert_eq!(p.delta_m, 5.293);
        assert_eq!(p.a_l, 0.00332);
        assert_eq!(p.mass_mean, 497.614);
    }

    #[test]
    fn pdg_derived() {
        let p = pdg();
        assert!((p.gamma_s - 11.168192986374805).abs() < 1e-12);
        assert!((p.gamma_l - 0.019546520719311965).abs() < 1e-15);
        assert!((p.gamma - 5.593869753547058).abs() < 1e-12);
        assert!((p.delta_gamma - 11.148646465655494).abs() < 1e-12);
        assert!((p.p.re - 0.7082796058055039).abs() < 1e-15);
        assert!((p.q.re - 0.7059320080574333).abs() < 1e-15);
        assert_eq!(p.p.im, 0.0);
        assert_eq!(p.q.im, 0.0);
    }

    fn assert_invariants(p: &PhysParams) {
        assert!((p.p.norm_sqr() + p.q.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((p.p.norm_sqr() - p.q.norm_sqr() - p.a_l).abs() < 1e-12);
        // conj(p/q) = ((1+A_L)/(1-A_L)) (q/p)
        let lhs = (p.p / p.q).conj();
        let rhs = (1.0 + p.a_l) / (1.0 - p.a_l) * (p.q / p.p);
        assert!((lhs - rhs).norm() < 1e-12);
        assert_eq!(p.gamma, (p.gamma_s + p.gamma_l) / 2.0);
        assert_eq!(p.delta_gamma, p.gamma_s - p.gamma_l);
        assert!(p.a_l.abs() < 1.0);
    }

    #[test]
    fn pdg_invariants() {
        assert_invariants(&pdg());
    }

    #[test]
    fn cp_preserved_symmetric() {
        let p = PhysParams::from_raw(0.08954, 51.16, 5.293, 0.0, 0.0).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.p.re - inv_sqrt2).abs() < 1e-15);
        assert!((p.q.re - inv_sqrt2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_equal_lifetimes() {
        let p = PhysParams::from_raw(1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(p.gamma_s, 1.0);
        assert_eq!(p.gamma_l, 1.0);
        assert_eq!(p.gamma, 1.0);
        assert_eq!(p.delta_gamma, 0.0);
    }

    #[test]
    fn from_raw_matches_pdg() {
        let a = PhysParams::from_raw(0.08954, 51.16, 5.293, 0.00332, 0.0).unwrap();
        let b = pdg();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            PhysParams::from_raw(-1.0, 51.16, 5.293, 0.0, 0.0),
            Err(ParamsError::NonPositive { field: "tau_S", value: -1.0 })
        );
        assert_eq!(
            PhysParams::from_raw(0.09, 0.0, 5.293, 0.0, 0.0),
            Err(ParamsError::NonPositive { field: "tau_L", value: 0.0 })
        );
        assert_eq!(
            PhysParams::from_raw(0.09, 51.16, 5.293, 1.0, 0.0),
            Err(ParamsError::CpOutOfRange(1.0))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn invariants_hold_for_any_valid_input(
                tau_s in 1e-3f64..1e3,
                tau_l in 1e-3f64..1e3,
                a_l in -0.99f64..0.99,
                phase in 0.0f64..std::f64::consts::TAU,
            ) {
                let p = PhysParams::from_raw(tau_s, tau_l, 1.0, a_l, phase).unwrap();
                assert_invariants(&p);
                prop_assert!(((p.p / p.q).arg() - phase).rem_euclid(std::f64::consts::TAU) < 1e-9
                    || (((p.p / p.q).arg() - phase).rem_euclid(std::f64::consts::TAU) - std::f64::consts::TAU).abs() < 1e-9);
            }
        }
    }
}
