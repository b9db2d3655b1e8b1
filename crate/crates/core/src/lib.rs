//! Open-quantum-system dynamics of decaying, oscillating neutral kaons.
//!
//! The system of K⁰/K̄⁰ mesons is evolved under a Kossakowski-Lindblad
//! master equation in second quantization. Three routes to every mean
//! value are provided and cross-checked:
//!
//! * closed-form Heisenberg-picture propagation of bilinear observables
//!   ([`heisenberg`]),
//! * adaptive numeric integration of the same 4-dimensional coefficient
//!   ODE ([`heisenberg::propagate_ode`]),
//! * Schrödinger-picture density-matrix evolution on a truncated
//!   two-mode Fock space ([`fock`]).
//!
//! [`observables`] catalogs the physical observables (particle number,
//! strangeness, flavor and K_S/K_L numbers) with their closed-form means,
//! CP-preserved limits and leading-order CP-violation differences.
//! [`run`] drives everything from run specifications and emits
//! reproducible CSV/JSON time series.

pub mod fock;
pub mod heisenberg;
pub mod observables;
pub mod ode;
pub mod params;
pub mod run;

pub use heisenberg::BilinearObservable;
pub use observables::{FlavorCount, ObservableKind};
pub use params::PhysParams;
