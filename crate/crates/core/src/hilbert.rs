//! Operators on the truncated space of one qubit tensored with one bosonic
//! mode.
//!
//! Basis ordering is qubit-major: the extended-space index of qubit state `s`
//! and Fock level `n` is `s * n_max + n`, so the two qubit sectors occupy
//! contiguous `n_max`-sized blocks.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense complex square matrix on the qubit, the mode, or the extended space.
pub type Operator = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Number of Fock states kept for the bosonic mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Truncation {
    n_max: usize,
}

impl Truncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidTruncation(n_max));
        }
        Ok(Truncation { n_max })
    }

    pub fn n_max(self) -> usize {
        self.n_max
    }

    /// Dimension of the extended (qubit ⊗ mode) space.
    pub fn dim(self) -> usize {
        2 * self.n_max
    }
}

impl TryFrom<usize> for Truncation {
    type Error = Error;

    fn try_from(n_max: usize) -> Result<Self> {
        Truncation::new(n_max)
    }
}

impl From<Truncation> for usize {
    fn from(t: Truncation) -> usize {
        t.n_max
    }
}

/// Bosonic annihilation operator with `a[n-1, n] = sqrt(n)`.
pub fn annihilation(trunc: Truncation) -> Operator {
    let n = trunc.n_max();
    let mut a = Array2::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

pub fn creation(trunc: Truncation) -> Operator {
    dagger(&annihilation(trunc))
}

pub fn number(trunc: Truncation) -> Operator {
    Array2::from_diag(&Array1::from_iter(
        (0..trunc.n_max()).map(|k| C64::new(k as f64, 0.0)),
    ))
}

/// Qubit operators in the basis (|0⟩, |1⟩), with σ₋|1⟩ = |0⟩.
#[derive(Clone, Debug)]
pub struct QubitOps {
    pub lower: Operator,
    pub raise: Operator,
    pub sigma_x: Operator,
    /// σ₊σ₋ = |1⟩⟨1|
    pub excited: Operator,
}

pub fn qubit_ops() -> QubitOps {
    let mut lower = Array2::zeros((2, 2));
    lower[[0, 1]] = ONE;
    let raise = dagger(&lower);
    let sigma_x = &lower + &raise;
    let excited = raise.dot(&lower);
    QubitOps {
        lower,
        raise,
        sigma_x,
        excited,
    }
}

pub fn identity(n: usize) -> Operator {
    Array2::eye(n)
}

/// Conjugate transpose.
pub fn dagger(a: &Operator) -> Operator {
    a.t().mapv(|z| z.conj())
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a.dot(b) - b.dot(a)
}

/// Kronecker product `a ⊗ b` with `a` as the slow (outer) index.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&b.mapv(|y| x * y));
    }
    out
}

/// Lift a qubit operator and a mode operator onto the extended space.
pub fn embed(qubit_op: &Operator, rc_op: &Operator) -> Result<Operator> {
    if !qubit_op.is_square() || qubit_op.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: qubit_op.nrows(),
        });
    }
    if !rc_op.is_square() || rc_op.nrows() < 2 {
        return Err(Error::DimensionMismatch {
            expected: rc_op.ncols(),
            got: rc_op.nrows(),
        });
    }
    Ok(kron(qubit_op, rc_op))
}

/// Trace over the qubit factor, leaving an `n_max × n_max` mode operator.
pub fn partial_trace_qubit(rho: &Operator, trunc: Truncation) -> Result<Operator> {
    let n = trunc.n_max();
    if rho.dim() != (2 * n, 2 * n) {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: rho.nrows(),
        });
    }
    Ok(&rho.slice(s![..n, ..n]) + &rho.slice(s![n.., n..]))
}

pub fn trace(a: &Operator) -> C64 {
    a.diag().sum()
}

/// Expectation value `Tr[op ρ]`.
pub fn expect(op: &Operator, rho: &Operator) -> C64 {
    // Tr[AB] = Σ_ij A_ij B_ji
    let mut acc = ZERO;
    for ((i, j), &x) in op.indexed_iter() {
        if x != ZERO {
            acc += x * rho[[j, i]];
        }
    }
    acc
}

/// `(ρ + ρ†) / 2`
pub fn hermitian_part(rho: &Operator) -> Operator {
    (rho + &dagger(rho)).mapv(|z| z * 0.5)
}

/// Largest absolute entry; used for "equal to machine precision" checks.
pub fn max_abs(a: &Operator) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}
