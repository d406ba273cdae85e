//! Diagnostics of the reduced reaction-coordinate state: zero-delay
//! second-order coherence, Gaussian-entropy non-Gaussianity and
//! l₁-coherence in the Fock basis.

use ndarray_linalg::{EigValsh, UPLO};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, creation, expect, partial_trace_qubit, Operator, Truncation, C64,
};

/// Eigenvalues below this are treated as exact zeros in entropies.
const EIG_FLOOR: f64 = 1e-14;

/// Reduced mode state with the moments the diagnostics need.
#[derive(Clone, Debug)]
pub struct RcState {
    pub rho_rc: Operator,
    pub mean_a: C64,
    pub mean_n: f64,
    pub mean_a2: C64,
    /// ⟨a†a†aa⟩
    pub mean_adad_aa: f64,
}

impl RcState {
    /// Wraps a mode density matrix and evaluates its moments.
    pub fn from_mode_state(rho_rc: Operator) -> Result<Self> {
        let trunc = Truncation::new(rho_rc.nrows())?;
        if !rho_rc.is_square() {
            return Err(Error::DimensionMismatch {
                expected: rho_rc.nrows(),
                got: rho_rc.ncols(),
            });
        }
        let a = annihilation(trunc);
        let ad = creation(trunc);
        let a2 = a.dot(&a);
        let n_op = ad.dot(&a);
        let adad_aa = ad.dot(&ad).dot(&a2);
        Ok(RcState {
            mean_a: expect(&a, &rho_rc),
            mean_n: expect(&n_op, &rho_rc).re,
            mean_a2: expect(&a2, &rho_rc),
            mean_adad_aa: expect(&adad_aa, &rho_rc).re,
            rho_rc,
        })
    }

    /// Population of the highest retained Fock level.
    pub fn top_population(&self) -> f64 {
        let n = self.rho_rc.nrows();
        self.rho_rc[[n - 1, n - 1]].re
    }
}

/// Partial trace of an extended-system state over the qubit.
pub fn reduce_rc(rho_ss: &Operator, trunc: Truncation) -> Result<RcState> {
    RcState::from_mode_state(partial_trace_qubit(rho_ss, trunc)?)
}

/// g²(0) = ⟨a†a†aa⟩/⟨a†a⟩², absent for vacuum-like states.
pub fn g2_zero(rc: &RcState) -> Option<f64> {
    (rc.mean_n > 1e-12).then(|| rc.mean_adad_aa / (rc.mean_n * rc.mean_n))
}

/// Entropy of a single-mode Gaussian state with symplectic eigenvalue ν.
pub fn gaussian_entropy(nu: f64) -> f64 {
    let p = (nu + 1.0) / 2.0;
    let m = (nu - 1.0) / 2.0;
    let xlnx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    xlnx(p) - xlnx(m)
}

pub fn von_neumann_entropy(rho: &Operator) -> Result<f64> {
    let eigs = rho.eigvalsh(UPLO::Lower)?;
    Ok(eigs
        .iter()
        .filter(|&&e| e > EIG_FLOOR)
        .map(|&e| -e * e.ln())
        .sum())
}

/// Symplectic eigenvalue of the covariance matrix, with the vacuum at 1.
///
/// Second moments use ⟨aa†⟩ = ⟨a†a⟩ + 1, the untruncated commutator.
pub fn symplectic_nu(rc: &RcState) -> f64 {
    let (re_a, im_a) = (rc.mean_a.re, rc.mean_a.im);
    let n = rc.mean_n;
    let sxx = 2.0 * rc.mean_a2.re + 2.0 * n + 1.0 - 4.0 * re_a * re_a;
    let spp = -2.0 * rc.mean_a2.re + 2.0 * n + 1.0 - 4.0 * im_a * im_a;
    let sxp = 2.0 * rc.mean_a2.im - 4.0 * re_a * im_a;
    (sxx * spp - sxp * sxp).max(0.0).sqrt()
}

/// δ_G = S(τ) − S(ρ), with τ the Gaussian state sharing the first and second
/// moments of ρ. Returns (δ_G, ν).
pub fn non_gaussianity(rc: &RcState) -> Result<(f64, f64)> {
    let mut nu = symplectic_nu(rc);
    if nu < 1.0 - 1e-8 {
        return Err(Error::UncertaintyViolation(nu));
    }
    nu = nu.max(1.0);
    let delta = gaussian_entropy(nu) - von_neumann_entropy(&rc.rho_rc)?;
    Ok((delta, nu))
}

/// Σ_{i≠j} |ρ_ij| in the Fock basis.
pub fn l1_coherence(rc: &RcState) -> f64 {
    rc.rho_rc
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, z)| z.norm())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonclassicalityReport {
    pub g2_zero: Option<f64>,
    pub delta_g: f64,
    pub l1_coherence: f64,
    pub symplectic_nu: f64,
    pub mean_n: f64,
    pub top_population: f64,
}

pub fn report(rc: &RcState) -> Result<NonclassicalityReport> {
    let (delta_g, nu) = non_gaussianity(rc)?;
    Ok(NonclassicalityReport {
        g2_zero: g2_zero(rc),
        delta_g,
        l1_coherence: l1_coherence(rc),
        symplectic_nu: nu,
        mean_n: rc.mean_n,
        top_population: rc.top_population(),
    })
}
