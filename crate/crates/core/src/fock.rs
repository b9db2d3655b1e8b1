//! Truncated two-mode bosonic Fock-space engine (Schrödinger picture).
//!
//! Builds the second-quantized H, L₁, L₂, K matrices, evolves density
//! matrices under the master equation ∂ρ = −i[H,ρ] + {K,ρ} + ΣLᵢρLᵢ†,
//! and constructs the flavor, K_S and K_L number states. The generator
//! never raises the total particle number, so the cutoff subspace is
//! exactly invariant and the truncation introduces no error.
//!
//! This module is the independent oracle for every Heisenberg-picture
//! result via the duality Tr[ρ(t)·Ω(0)] = Tr[ρ(0)·Ω(t)].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::heisenberg::BilinearObservable;
use crate::ode::{self, OdeError, OdeOptions};
use crate::params::PhysParams;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("state with {requested} particles exceeds basis cutoff {cutoff}")]
    CutoffExceeded { requested: u32, cutoff: u32 },
    #[error("|A_L| = {0} must be < 1 (Γ_L denominators in the Lindbladians)")]
    CpOutOfRange(f64),
    #[error("density-matrix constraint violated: {0}")]
    StateConstraint(String),
    #[error("negative time t = {0} ns")]
    NegativeTime(f64),
    #[error("integrator accuracy failure: {0}")]
    Accuracy(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Mode selector for ladder operators: `A` annihilates K⁰, `B` K̄⁰.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
}

/// Basis of the truncated space: all |n, n̄⟩ with n + n̄ ≤ cutoff,
/// ordered by ascending total number, then ascending n̄. The vacuum has
/// index 0 and D = (cutoff+1)(cutoff+2)/2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    cutoff: u32,
    labels: Vec<(u32, u32)>,
}

pub fn build_basis(cutoff: u32) -> FockBasis {
    let mut labels = Vec::new();
    for total in 0..=cutoff {
        for n_bar in 0..=total {
            labels.push((total - n_bar, n_bar));
        }
    }
    FockBasis { cutoff, labels }
}

impl FockBasis {
    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[(u32, u32)] {
        &self.labels
    }

    pub fn index_of(&self, n: u32, n_bar: u32) -> Option<usize> {
        if n + n_bar > self.cutoff {
            return None;
        }
        let total = n + n_bar;
        Some((total * (total + 1) / 2 + n_bar) as usize)
    }

    pub fn label_of(&self, index: usize) -> (u32, u32) {
        self.labels[index]
    }
}

pub type OperatorMatrix = DMatrix<Complex64>;

/// Annihilation matrix for the given mode: ⟨n−1,n̄|a|n,n̄⟩ = √n.
pub fn build_ladder(basis: &FockBasis, mode: Mode) -> OperatorMatrix {
    let d = basis.dim();
    let mut m = DMatrix::zeros(d, d);
    for (col, &(n, n_bar)) in basis.labels().iter().enumerate() {
        match mode {
            Mode::A if n > 0 => {
                let row = basis.index_of(n - 1, n_bar).unwrap();
                m[(row, col)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
            Mode::B if n_bar > 0 => {
                let row = basis.index_of(n, n_bar - 1).unwrap();
                m[(row, col)] = Complex64::new((n_bar as f64).sqrt(), 0.0);
            }
            _ => {}
        }
    }
    m
}

/// The operator content of the master equation.
#[derive(Debug, Clone)]
pub struct LindbladSet {
    pub h: OperatorMatrix,
    pub l1: OperatorMatrix,
    pub l2: OperatorMatrix,
    pub k: OperatorMatrix,
    pub basis: FockBasis,
}

/// Assemble H, L₁, L₂ and K in the flavor basis from ladder matrices.
pub fn build_lindblad_set(params: &PhysParams, basis: &FockBasis) -> Result<LindbladSet, FockError> {
    if params.a_l.abs() >= 1.0 {
        return Err(FockError::CpOutOfRange(params.a_l));
    }
    let a = build_ladder(basis, Mode::A);
    let b = build_ladder(basis, Mode::B);
    let ad = a.adjoint();
    let bd = b.adjoint();
    let num = &ad * &a + &bd * &b;
    let adb = &ad * &b;
    let bda = &bd * &a;

    let i = Complex64::i();
    let al = params.a_l;
    let denom = 1.0 - al * al;
    let pq = params.p * params.q.conj();
    let qp = params.q * params.p.conj();
    let gs = params.gamma_s;
    let gl = params.gamma_l;
    let g = params.gamma;
    let dg = params.delta_gamma;
    let dm = params.delta_m;

    let h = num.map(|z| z * params.mass_mean)
        - adb.map(|z| z * (pq / denom) * (Complex64::new(dm, 0.0) + i * (0.5 * al * dg)))
        - bda.map(|z| z * (qp / denom) * (Complex64::new(dm, 0.0) - i * (0.5 * al * dg)));

    let c1 = (gs - al * al * (g * g + dm * dm) / gl).sqrt();
    let l1 = (a.map(|z| z * (params.p.conj() / (1.0 + al)))
        + b.map(|z| z * (params.q.conj() / (1.0 - al))))
    .map(|z| z * c1);

    let gl_sqrt = gl.sqrt();
    let shift = (Complex64::new(g, 0.0) - i * dm) / gl_sqrt;
    let l2 = a.map(|z| {
        z * (params.p.conj() / (1.0 + al)) * (Complex64::new(gl_sqrt, 0.0) + al * shift)
    }) - b.map(|z| {
        z * (params.q.conj() / (1.0 - al)) * (Complex64::new(gl_sqrt, 0.0) - al * shift)
    });

    let k = num.map(|z| z * (-0.5 * g))
        - adb.map(|z| z * (pq / denom) * (Complex64::new(0.5 * dg, 0.0) - i * (al * dm)))
        - bda.map(|z| z * (qp / denom) * (Complex64::new(0.5 * dg, 0.0) + i * (al * dm)));

    Ok(LindbladSet { h, l1, l2, k, basis: basis.clone() })
}

/// The one-particle operators written in the K_S/K_L basis, expanded in
/// the flavor basis on a cutoff-1 space. Used as an equivalence check
/// against [`build_lindblad_set`]; both describe the same evolution.
pub fn build_lindblad_set_ksl(params: &PhysParams, basis: &FockBasis) -> Result<LindbladSet, FockError> {
    if params.a_l.abs() >= 1.0 {
        return Err(FockError::CpOutOfRange(params.a_l));
    }
    if basis.cutoff() != 1 {
        return Err(FockError::StateConstraint(
            "the one-particle operator set is defined on a cutoff-1 basis".into(),
        ));
    }
    let d = basis.dim();
    let mut vac = DVector::<Complex64>::zeros(d);
    vac[basis.index_of(0, 0).unwrap()] = Complex64::new(1.0, 0.0);
    let mut k0 = DVector::<Complex64>::zeros(d);
    k0[basis.index_of(1, 0).unwrap()] = Complex64::new(1.0, 0.0);
    let mut k0b = DVector::<Complex64>::zeros(d);
    k0b[basis.index_of(0, 1).unwrap()] = Complex64::new(1.0, 0.0);
    let ks = &k0 * params.p + &k0b * params.q;
    let kl = &k0 * params.p - &k0b * params.q;

    let outer = |x: &DVector<Complex64>, y: &DVector<Complex64>| -> DMatrix<Complex64> {
        x * y.adjoint()
    };

    let i = Complex64::i();
    let al = params.a_l;
    let denom = 1.0 - al * al;
    let m = params.mass_mean;
    let m_s = m - params.delta_m / 2.0;
    let m_l = m + params.delta_m / 2.0;
    let g = params.gamma;
    let dg = params.delta_gamma;
    let dm = params.delta_m;
    let gs = params.gamma_s;
    let gl = params.gamma_l;

    let h = (outer(&ks, &ks).map(|z| z * m_s)
        + outer(&kl, &kl).map(|z| z * m_l)
        - (outer(&ks, &kl).map(|z| z * (Complex64::new(m, 0.0) - i * (0.25 * dg)))
            + outer(&kl, &ks).map(|z| z * (Complex64::new(m, 0.0) + i * (0.25 * dg))))
        .map(|z| z * al))
    .map(|z| z / denom);

    let c1 = (gs - al * al * (g * g + dm * dm) / gl).sqrt();
    let l1 = (outer(&vac, &ks) - outer(&vac, &kl).map(|z| z * al)).map(|z| z * (c1 / denom));

    let gl_sqrt = gl.sqrt();
    let shift = (Complex64::new(g, 0.0) - i * dm) / gl_sqrt;
    let l2 = (outer(&vac, &kl).map(|z| z * (Complex64::new(gl_sqrt, 0.0) - al * al * shift))
        - outer(&vac, &ks).map(|z| z * (al * (Complex64::new(gl_sqrt, 0.0) - shift))))
    .map(|z| z / denom);

    let k = (l1.adjoint() * &l1 + l2.adjoint() * &l2).map(|z| z * -0.5);
    Ok(LindbladSet { h, l1, l2, k, basis: basis.clone() })
}

/// A Hermitian, unit-trace, positive state matrix on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<Complex64>,
    pub basis: FockBasis,
}

impl DensityMatrix {
    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the (re-symmetrized) state, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5);
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Expectation value Tr[ρ·M] of a Hermitian operator.
    pub fn expectation(&self, op: &OperatorMatrix) -> f64 {
        (&self.matrix * op).trace().re
    }
}

fn pure_state(basis: &FockBasis, v: DVector<Complex64>) -> DensityMatrix {
    DensityMatrix { matrix: &v * v.adjoint(), basis: basis.clone() }
}

/// Flavor number state |n, n̄⟩⟨n, n̄|.
pub fn make_state_flavor(basis: &FockBasis, n: u32, n_bar: u32) -> Result<DensityMatrix, FockError> {
    let idx = basis
        .index_of(n, n_bar)
        .ok_or(FockError::CutoffExceeded { requested: n + n_bar, cutoff: basis.cutoff() })?;
    let mut v = DVector::zeros(basis.dim());
    v[idx] = Complex64::new(1.0, 0.0);
    Ok(pure_state(basis, v))
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0_f64;
    for j in 0..k {
        acc *= (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

fn ks_kl_vector(
    basis: &FockBasis,
    params: &PhysParams,
    n: u32,
    alternating: bool,
) -> Result<DVector<Complex64>, FockError> {
    if n > basis.cutoff() {
        return Err(FockError::CutoffExceeded { requested: n, cutoff: basis.cutoff() });
    }
    let mut v = DVector::zeros(basis.dim());
    for k in 0..=n {
        let sign = if alternating && k % 2 == 1 { -1.0 } else { 1.0 };
        let coeff = sign
            * binomial(n, k).sqrt()
            * params.p.powu(n - k)
            * params.q.powu(k);
        v[basis.index_of(n - k, k).unwrap()] = coeff;
    }
    Ok(v)
}

/// |n_S⟩⟨n_S| via the binomial expansion |n_S⟩ = Σₖ √C(n,k) p^{n−k} q^k |n−k,k⟩.
pub fn make_state_ks(basis: &FockBasis, params: &PhysParams, n: u32) -> Result<DensityMatrix, FockError> {
    Ok(pure_state(basis, ks_kl_vector(basis, params, n, false)?))
}

/// |n_L⟩⟨n_L|; same expansion with alternating signs (−1)^k.
pub fn make_state_kl(basis: &FockBasis, params: &PhysParams, n: u32) -> Result<DensityMatrix, FockError> {
    Ok(pure_state(basis, ks_kl_vector(basis, params, n, true)?))
}

/// The general single-particle mixed state
/// ρ = p₁|K⁰⟩⟨K⁰| + p₂|K̄⁰⟩⟨K̄⁰| + w|K⁰⟩⟨K̄⁰| + w*|K̄⁰⟩⟨K⁰| + (1−p₁−p₂)|0⟩⟨0|.
pub fn make_state_mixed_single(
    basis: &FockBasis,
    p1: f64,
    p2: f64,
    w: Complex64,
) -> Result<DensityMatrix, FockError> {
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) || p1 + p2 > 1.0 {
        return Err(FockError::StateConstraint(format!(
            "populations must satisfy 0 ≤ p1, p2, p1+p2 ≤ 1 (got p1={p1}, p2={p2})"
        )));
    }
    if w.norm_sqr() > p1 * p2 + 1e-15 {
        return Err(FockError::StateConstraint(format!(
            "coherence must satisfy |w|² ≤ p1·p2 (got |w|²={}, p1·p2={})",
            w.norm_sqr(),
            p1 * p2
        )));
    }
    if basis.cutoff() < 1 {
        return Err(FockError::CutoffExceeded { requested: 1, cutoff: basis.cutoff() });
    }
    let d = basis.dim();
    let vac = basis.index_of(0, 0).unwrap();
    let ia = basis.index_of(1, 0).unwrap();
    let ib = basis.index_of(0, 1).unwrap();
    let mut m = DMatrix::zeros(d, d);
    m[(ia, ia)] = Complex64::new(p1, 0.0);
    m[(ib, ib)] = Complex64::new(p2, 0.0);
    m[(ia, ib)] = w;
    m[(ib, ia)] = w.conj();
    m[(vac, vac)] = Complex64::new(1.0 - p1 - p2, 0.0);
    Ok(DensityMatrix { matrix: m, basis: basis.clone() })
}

/// Matrix of a bilinear observable on the truncated space.
pub fn observable_matrix(basis: &FockBasis, obs: &BilinearObservable) -> OperatorMatrix {
    let a = build_ladder(basis, Mode::A);
    let b = build_ladder(basis, Mode::B);
    let ad = a.adjoint();
    let bd = b.adjoint();
    (&ad * &a).map(|z| z * obs.w_aa)
        + (&ad * &b).map(|z| z * obs.w_ab)
        + (&bd * &a).map(|z| z * obs.w_ba)
        + (&bd * &b).map(|z| z * obs.w_bb)
}

fn master_rhs(ops: &LindbladSet, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let i = Complex64::i();
    let comm = &ops.h * rho - rho * &ops.h;
    let anti = &ops.k * rho + rho * &ops.k;
    let jump1 = &ops.l1 * rho * ops.l1.adjoint();
    let jump2 = &ops.l2 * rho * ops.l2.adjoint();
    comm.map(|z| z * (-i)) + anti + jump1 + jump2
}

fn mat_to_vec(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

fn vec_to_mat(v: &DVector<Complex64>, d: usize) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Raw master-equation propagation of an arbitrary (not necessarily
/// Hermitian) matrix, without re-symmetrization. Linearity makes this the
/// right primitive for building channel superoperators.
fn evolve_matrix(
    ops: &LindbladSet,
    m0: &DMatrix<Complex64>,
    t: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<DMatrix<Complex64>, FockError> {
    let d = ops.basis.dim();
    let y = ode::integrate(
        |y| mat_to_vec(&master_rhs(ops, &vec_to_mat(y, d))),
        mat_to_vec(m0),
        t,
        OdeOptions { rel_tol, abs_tol, post_step: None },
    )?;
    Ok(vec_to_mat(&y, d))
}

/// Evolve a density matrix to time `t`. The state is re-symmetrized after
/// every accepted step; Hermiticity drift beyond 1e-10 before
/// re-symmetrization is reported as an accuracy failure.
pub fn evolve_density(
    ops: &LindbladSet,
    rho0: &DensityMatrix,
    t: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<DensityMatrix, FockError> {
    if t < 0.0 {
        return Err(FockError::NegativeTime(t));
    }
    let d = ops.basis.dim();
    let mut max_drift: f64 = 0.0;
    let drift = std::cell::Cell::new(0.0_f64);
    let drift_ref = &drift;
    let y = {
        let post: Box<dyn FnMut(&mut DVector<Complex64>)> = Box::new(move |y| {
            let m = vec_to_mat(y, d);
            let adj = m.adjoint();
            let defect = (&m - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
            drift_ref.set(drift_ref.get().max(defect));
            let sym = (m + adj).map(|z| z * 0.5);
            *y = mat_to_vec(&sym);
        });
        ode::integrate(
            |y| mat_to_vec(&master_rhs(ops, &vec_to_mat(y, d))),
            mat_to_vec(&rho0.matrix),
            t,
            OdeOptions { rel_tol, abs_tol, post_step: Some(post) },
        )?
    };
    max_drift = max_drift.max(drift.get());
    if max_drift > 1e-10 {
        return Err(FockError::Accuracy(format!(
            "hermiticity drift {max_drift:e} before re-symmetrization"
        )));
    }
    let rho = DensityMatrix { matrix: vec_to_mat(&y, d), basis: ops.basis.clone() };
    let trace_err = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
    if trace_err > 1e-8 {
        return Err(FockError::Accuracy(format!("trace drift {trace_err:e}")));
    }
    Ok(rho)
}

/// Outcome of the two-particle factorization check: the cutoff-2
/// evolution against the symmetrized product of two cutoff-1 evolutions.
#[derive(Debug, Clone)]
pub struct FactorizationReport {
    pub t: f64,
    pub tol: f64,
    /// max matrix-element deviation per initial state (2,0), (1,1), (0,2)
    pub deviations: Vec<f64>,
}

impl FactorizationReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_deviation() <= self.tol
    }
}

/// Normalized symmetric slot-space vector (two qutrit slots: vacuum, K⁰,
/// K̄⁰) representing the Fock label (n, n̄) with n + n̄ ≤ 2.
fn slot_vector(n: u32, n_bar: u32) -> DVector<Complex64> {
    let mut v = DVector::<Complex64>::zeros(9);
    let one = Complex64::new(1.0, 0.0);
    let inv_sqrt2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let at = |i1: usize, i2: usize| 3 * i1 + i2;
    match (n, n_bar) {
        (0, 0) => v[at(0, 0)] = one,
        (1, 0) => {
            v[at(0, 1)] = inv_sqrt2;
            v[at(1, 0)] = inv_sqrt2;
        }
        (0, 1) => {
            v[at(0, 2)] = inv_sqrt2;
            v[at(2, 0)] = inv_sqrt2;
        }
        (2, 0) => v[at(1, 1)] = one,
        (0, 2) => v[at(2, 2)] = one,
        (1, 1) => {
            v[at(1, 2)] = inv_sqrt2;
            v[at(2, 1)] = inv_sqrt2;
        }
        _ => unreachable!("two-particle sector only"),
    }
    v
}

/// Check the claim that the two-particle evolution equals the symmetrized
/// tensor product of single-particle evolutions.
///
/// The single-particle (cutoff-1) channel is applied independently to
/// each slot of the first-quantized two-slot representation; the result
/// is flattened back to Fock space sector-wise (full-occupancy sector via
/// the symmetric isometry, one-particle sector as the incoherent sum over
/// which slot decayed) and compared entrywise against the cutoff-2
/// evolution.
pub fn check_two_particle_factorization(
    params: &PhysParams,
    t: f64,
    tol: f64,
) -> Result<FactorizationReport, FockError> {
    let basis1 = build_basis(1);
    let basis2 = build_basis(2);
    let ops1 = build_lindblad_set(params, &basis1)?;
    let ops2 = build_lindblad_set(params, &basis2)?;
    let rel_tol = 1e-11;
    let abs_tol = 1e-13;

    // channel superoperator on the cutoff-1 space: evolve each matrix unit
    let mut chan = DMatrix::<Complex64>::zeros(9, 9);
    for i in 0..3 {
        for j in 0..3 {
            let mut e = DMatrix::<Complex64>::zeros(3, 3);
            e[(i, j)] = Complex64::new(1.0, 0.0);
            let et = evolve_matrix(&ops1, &e, t, rel_tol, abs_tol)?;
            for r in 0..3 {
                for c in 0..3 {
                    chan[(3 * r + c, 3 * i + j)] = et[(r, c)];
                }
            }
        }
    }
    // chan[(r,c),(i,j)]: matrix element (r,c) of Λt(E_ij)

    let apply_two_slot = |sigma: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        // sigma indexed by (3 i1 + i2, 3 j1 + j2); apply Λt to each slot
        let mut out = DMatrix::<Complex64>::zeros(9, 9);
        for r1 in 0..3 {
            for r2 in 0..3 {
                for c1 in 0..3 {
                    for c2 in 0..3 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for i1 in 0..3 {
                            for j1 in 0..3 {
                                let f1 = chan[(3 * r1 + c1, 3 * i1 + j1)];
                                if f1.norm_sqr() == 0.0 {
                                    continue;
                                }
                                for i2 in 0..3 {
                                    for j2 in 0..3 {
                                        let f2 = chan[(3 * r2 + c2, 3 * i2 + j2)];
                                        if f2.norm_sqr() == 0.0 {
                                            continue;
                                        }
                                        acc += f1 * f2 * sigma[(3 * i1 + i2, 3 * j1 + j2)];
                                    }
                                }
                            }
                        }
                        out[(3 * r1 + r2, 3 * c1 + c2)] = acc;
                    }
                }
            }
        }
        out
    };

    let two_sector: [(u32, u32); 3] = [(2, 0), (1, 1), (0, 2)];
    let one_sector: [(usize, (u32, u32)); 2] = [(1, (1, 0)), (2, (0, 1))];
    let mut deviations = Vec::new();
    for &(n, n_bar) in &two_sector {
        // reference: cutoff-2 Fock evolution
        let rho0 = make_state_flavor(&basis2, n, n_bar)?;
        let rho_t = evolve_density(&ops2, &rho0, t, rel_tol, abs_tol)?;

        // symmetrized product of single-particle evolutions
        let s0 = slot_vector(n, n_bar);
        let sigma0 = &s0 * s0.adjoint();
        let sigma_t = apply_two_slot(&sigma0);

        let d2 = basis2.dim();
        let mut flat = DMatrix::<Complex64>::zeros(d2, d2);
        for &(na, nba) in &two_sector {
            let va = slot_vector(na, nba);
            let ia = basis2.index_of(na, nba).unwrap();
            for &(nb, nbb) in &two_sector {
                let vb = slot_vector(nb, nbb);
                let ib = basis2.index_of(nb, nbb).unwrap();
                flat[(ia, ib)] = (va.adjoint() * &sigma_t * vb)[(0, 0)];
            }
        }
        for &(xa, la) in &one_sector {
            let ia = basis2.index_of(la.0, la.1).unwrap();
            for &(xb, lb) in &one_sector {
                let ib = basis2.index_of(lb.0, lb.1).unwrap();
                flat[(ia, ib)] =
                    sigma_t[(xa, xb)] + sigma_t[(3 * xa, 3 * xb)];
            }
        }
        let vac = basis2.index_of(0, 0).unwrap();
        flat[(vac, vac)] = sigma_t[(0, 0)];

        let dev = (&flat - &rho_t.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
        deviations.push(dev);
    }
    Ok(FactorizationReport { t, tol, deviations })
}
