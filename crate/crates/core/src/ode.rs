//! Adaptive Dormand-Prince 5(4) integrator for complex linear systems.
//!
//! Kept deliberately self-contained so the ODE route stays independent of
//! the closed-form propagator it is used to cross-check.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} ns (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("tolerances must be positive (rel_tol = {rel_tol}, abs_tol = {abs_tol})")]
    BadTolerance { rel_tol: f64, abs_tol: f64 },
    #[error("negative integration time t = {0}")]
    NegativeTime(f64),
}

// Dormand-Prince coefficients (the RK45 pair with FSAL).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub struct OdeOptions<'a> {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Called with the accepted state after every step (used for
    /// re-symmetrization of density matrices).
    pub post_step: Option<Box<dyn FnMut(&mut DVector<Complex64>) + 'a>>,
}

impl Default for OdeOptions<'_> {
    fn default() -> Self {
        OdeOptions { rel_tol: 1e-10, abs_tol: 1e-12, post_step: None }
    }
}

/// Integrate dy/dt = f(y) from 0 to `t_end` with adaptive step-size and
/// PI step control.
pub fn integrate<F>(
    mut f: F,
    y0: DVector<Complex64>,
    t_end: f64,
    mut opts: OdeOptions<'_>,
) -> Result<DVector<Complex64>, OdeError>
where
    F: FnMut(&DVector<Complex64>) -> DVector<Complex64>,
{
    if t_end < 0.0 {
        return Err(OdeError::NegativeTime(t_end));
    }
    if !(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0) {
        return Err(OdeError::BadTolerance { rel_tol: opts.rel_tol, abs_tol: opts.abs_tol });
    }
    if t_end == 0.0 {
        return Ok(y0);
    }

    let n = y0.len();
    let mut y = y0;
    let mut t = 0.0_f64;
    let mut h = (t_end / 100.0).min(1e-3).max(1e-8);
    let mut err_prev = 1.0_f64;
    let h_min = t_end * 1e-14;

    let mut k: Vec<DVector<Complex64>> = Vec::with_capacity(7);
    loop {
        if t >= t_end {
            return Ok(y);
        }
        if h < h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }
        h = h.min(t_end - t);

        k.clear();
        k.push(f(&y));
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    ys.axpy(Complex64::new(h * a, 0.0), kj, Complex64::new(1.0, 0.0));
                }
            }
            let _ = C; // stage times unused: the system is autonomous
            k.push(f(&ys));
        }

        let mut y5 = y.clone();
        let mut err_vec = DVector::<Complex64>::zeros(n);
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y5.axpy(Complex64::new(h * B5[j], 0.0), kj, Complex64::new(1.0, 0.0));
            }
            let d = B5[j] - B4[j];
            if d != 0.0 {
                err_vec.axpy(Complex64::new(h * d, 0.0), kj, Complex64::new(1.0, 0.0));
            }
        }

        let mut err = 0.0_f64;
        for i in 0..n {
            let sc = opts.abs_tol + opts.rel_tol * y[i].norm().max(y5[i].norm());
            let e = err_vec[i].norm() / sc;
            err += e * e;
        }
        err = (err / n as f64).sqrt().max(1e-30);

        if err <= 1.0 {
            t += h;
            y = y5;
            if let Some(ref mut cb) = opts.post_step {
                cb(&mut y);
            }
            // PI controller (order 5: exponents 0.7/p, 0.4/p)
            let fac = 0.9 * err.powf(-0.14) * err_prev.powf(0.08);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_exponential_decay() {
        let y0 = DVector::from_element(1, Complex64::new(1.0, 0.0));
        let lam = Complex64::new(-2.0, 3.0);
        let y = integrate(|y| y * lam, y0, 1.5, OdeOptions::default()).unwrap();
        let exact = (lam * 1.5).exp();
        assert!((y[0] - exact).norm() < 1e-10);
    }

    #[test]
    fn zero_time_is_identity() {
        let y0 = DVector::from_element(3, Complex64::new(0.5, -0.5));
        let y = integrate(|y| y.clone(), y0.clone(), 0.0, OdeOptions::default()).unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y0 = DVector::from_element(1, Complex64::new(1.0, 0.0));
        assert!(matches!(
            integrate(|y| y.clone(), y0.clone(), -1.0, OdeOptions::default()),
            Err(OdeError::NegativeTime(_))
        ));
        let opts = OdeOptions { rel_tol: 0.0, abs_tol: 1e-12, post_step: None };
        assert!(matches!(
            integrate(|y| y.clone(), y0, 1.0, opts),
            Err(OdeError::BadTolerance { .. })
        ));
    }
}
