//! Superoperators on vectorized density matrices.
//!
//! Vectorization stacks columns, so that vec(AρB) = (Bᵀ ⊗ A) vec(ρ). Every
//! generator in the crate is assembled under this single convention.

use ndarray::{Array1, Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, creation, dagger, embed, identity, qubit_ops, Operator, Truncation, C64, ONE,
    ZERO,
};
use crate::model::{drude_lorentz, dressed_hamiltonian, ModelParams};

/// Column-stacking vectorization.
pub fn vectorize(rho: &Operator) -> Result<Array1<C64>> {
    if !rho.is_square() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            got: rho.ncols(),
        });
    }
    Ok(rho.t().iter().copied().collect())
}

pub fn unvectorize(v: &Array1<C64>) -> Result<Operator> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: v.len(),
        });
    }
    Ok(Array2::from_shape_vec((d, d).f(), v.to_vec()).expect("square shape"))
}

/// Vectorized identity; its inner product with vec(ρ) is Tr ρ.
pub(crate) fn trace_functional(d: usize) -> Array1<C64> {
    let mut v = Array1::zeros(d * d);
    for i in 0..d {
        v[i + i * d] = ONE;
    }
    v
}

pub(crate) fn vec_trace(v: &Array1<C64>, d: usize) -> C64 {
    (0..d).map(|i| v[i + i * d]).sum()
}

/// out += c · (a ⊗ b), visiting only nonzero entries.
fn add_kron(out: &mut Array2<C64>, c: C64, a: &Operator, b: &Operator) {
    let (br, bc) = b.dim();
    let b_nz: Vec<_> = b
        .indexed_iter()
        .filter(|(_, z)| **z != ZERO)
        .map(|(ij, z)| (ij, *z))
        .collect();
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        let cx = c * x;
        for &((k, l), y) in &b_nz {
            out[[i * br + k, j * bc + l]] += cx * y;
        }
    }
}

/// Which interface the counting field monitors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingCut {
    /// Qubit–mode boundary: phases on the coupling term of the Hamiltonian.
    Hamiltonian,
    /// Mode–residual-bath boundary: phases on the jump sandwich terms.
    Dissipator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltKind {
    None,
    HamiltonianCut,
    DissipatorCut,
}

/// A (possibly counting-field dressed) Liouvillian acting on vec(ρ).
#[derive(Clone, Debug)]
pub struct Generator {
    matrix: Array2<C64>,
    hilbert_dim: usize,
    chi: Option<C64>,
    tilt: TiltKind,
}

impl Generator {
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    /// Dimension d of the underlying Hilbert space; the matrix is d² × d².
    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn chi(&self) -> Option<C64> {
        self.chi
    }

    pub fn tilt(&self) -> TiltKind {
        self.tilt
    }

    pub fn is_untilted(&self) -> bool {
        self.tilt == TiltKind::None || self.chi.is_none_or(|c| c == ZERO)
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        if rho.nrows() != self.hilbert_dim {
            return Err(Error::DimensionMismatch {
                expected: self.hilbert_dim,
                got: rho.nrows(),
            });
        }
        unvectorize(&self.matrix.dot(&vectorize(rho)?))
    }
}

/// One quantum-jump channel `rate · D[operator]` with counting weight ±1.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub operator: Operator,
    pub rate: f64,
    pub weight: i8,
}

impl JumpChannel {
    /// L_k = sqrt(rate) · operator.
    pub fn jump_operator(&self) -> Operator {
        let s = self.rate.sqrt();
        self.operator.mapv(|z| z * s)
    }
}

/// Emission (+1, rate γ(n_B+1), operator a) and absorption (−1, rate γn_B,
/// operator a†) channels of the reaction coordinate into the residual bath.
pub fn rc_channels(p: &ModelParams, trunc: Truncation) -> Vec<JumpChannel> {
    let g = p.gamma();
    let id = identity(2);
    vec![
        JumpChannel {
            operator: embed(&id, &annihilation(trunc)).expect("qubit factor"),
            rate: g * (p.n_bath + 1.0),
            weight: 1,
        },
        JumpChannel {
            operator: embed(&id, &creation(trunc)).expect("qubit factor"),
            rate: g * p.n_bath,
            weight: -1,
        },
    ]
}

/// Rates of the qubit-only benchmark: γ_q = S(ω_q) and the bath occupation at ω_q.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakRates {
    pub gamma_q: f64,
    pub n_q: f64,
}

impl WeakRates {
    pub fn new(p: &ModelParams) -> Self {
        let wq = p.omega_q();
        WeakRates {
            gamma_q: drude_lorentz(wq, p),
            n_q: p.thermo().occupation_at(wq),
        }
    }
}

pub fn weak_channels(p: &ModelParams) -> Vec<JumpChannel> {
    let r = WeakRates::new(p);
    let q = qubit_ops();
    vec![
        JumpChannel {
            operator: q.lower,
            rate: r.gamma_q * (r.n_q + 1.0),
            weight: 1,
        },
        JumpChannel {
            operator: q.raise,
            rate: r.gamma_q * r.n_q,
            weight: -1,
        },
    ]
}

/// −i(H_left ρ − ρ H_right) + Σ_k rate_k (e^{iν_k χ} L ρ L† − ½{L†L, ρ}).
fn assemble(
    h_left: &Operator,
    h_right: &Operator,
    channels: &[JumpChannel],
    chi_jump: C64,
) -> Array2<C64> {
    let d = h_left.nrows();
    let id = identity(d);
    let mut m = Array2::zeros((d * d, d * d));
    let minus_i = C64::new(0.0, -1.0);
    add_kron(&mut m, minus_i, &id, h_left);
    add_kron(&mut m, -minus_i, &h_right.t().to_owned(), &id);
    for ch in channels {
        if ch.rate == 0.0 {
            continue;
        }
        let phase = (C64::new(0.0, ch.weight as f64) * chi_jump).exp();
        let ldl = dagger(&ch.operator).dot(&ch.operator);
        let conj_l = ch.operator.mapv(|z| z.conj());
        add_kron(&mut m, phase * ch.rate, &conj_l, &ch.operator);
        add_kron(&mut m, C64::new(-0.5 * ch.rate, 0.0), &id, &ldl);
        add_kron(&mut m, C64::new(-0.5 * ch.rate, 0.0), &ldl.t().to_owned(), &id);
    }
    m
}

fn rc_matrix(p: &ModelParams, trunc: Truncation, chi_h: C64, chi_d: C64) -> Array2<C64> {
    let h_left = dressed_hamiltonian(p, trunc, chi_h);
    let h_right = dressed_hamiltonian(p, trunc, -chi_h);
    assemble(&h_left, &h_right, &rc_channels(p, trunc), chi_d)
}

/// Local Lindblad generator of the extended system,
/// −i[H, ·] + γ(n_B+1)D[a] + γn_B D[a†].
pub fn rc_lme_generator(p: &ModelParams, trunc: Truncation) -> Generator {
    Generator {
        matrix: rc_matrix(p, trunc, ZERO, ZERO),
        hilbert_dim: trunc.dim(),
        chi: None,
        tilt: TiltKind::None,
    }
}

/// Counting at the qubit–mode interface: the coupling carries e^{±iχ/2} and
/// the commutator becomes H_χ ρ − ρ H_{−χ}. Period 4π in χ.
pub fn tilted_generator_hcut(p: &ModelParams, trunc: Truncation, chi: f64) -> Generator {
    tilted_generator_hcut_complex(p, trunc, C64::new(chi, 0.0))
}

pub fn tilted_generator_hcut_complex(p: &ModelParams, trunc: Truncation, chi: C64) -> Generator {
    Generator {
        matrix: rc_matrix(p, trunc, chi, ZERO),
        hilbert_dim: trunc.dim(),
        chi: Some(chi),
        tilt: TiltKind::HamiltonianCut,
    }
}

/// Counting at the mode–residual-bath interface: emission sandwich carries
/// e^{iχ}, absorption e^{−iχ}. Period 2π in χ.
pub fn tilted_generator_dcut(p: &ModelParams, trunc: Truncation, chi: f64) -> Generator {
    tilted_generator_dcut_complex(p, trunc, C64::new(chi, 0.0))
}

/// Dissipator-cut generator at a complex counting field (used for the
/// fluctuation-theorem symmetry θ₀(χ) = θ₀(−χ + iA)).
pub fn tilted_generator_dcut_complex(p: &ModelParams, trunc: Truncation, chi: C64) -> Generator {
    Generator {
        matrix: rc_matrix(p, trunc, ZERO, chi),
        hilbert_dim: trunc.dim(),
        chi: Some(chi),
        tilt: TiltKind::DissipatorCut,
    }
}

/// Qubit-only weak-coupling benchmark:
/// −i[Δ_q σ₊σ₋ + Ω σ_x, ·] + γ_q(n_q+1)D_χ[σ₋] + γ_q n_q D_{−χ}[σ₊].
pub fn weak_coupling_generator(p: &ModelParams, chi: f64) -> Generator {
    weak_coupling_generator_complex(p, C64::new(chi, 0.0))
}

/// Δ_q σ₊σ₋ + Ω σ_x on the qubit alone.
pub fn qubit_hamiltonian(p: &ModelParams) -> Operator {
    let q = qubit_ops();
    q.excited.mapv(|z| z * p.delta_q) + q.sigma_x.mapv(|z| z * p.omega_rabi)
}

pub fn weak_coupling_generator_complex(p: &ModelParams, chi: C64) -> Generator {
    let h = qubit_hamiltonian(p);
    let tilted = chi != ZERO;
    Generator {
        matrix: assemble(&h, &h, &weak_channels(p), chi),
        hilbert_dim: 2,
        chi: tilted.then_some(chi),
        tilt: if tilted {
            TiltKind::DissipatorCut
        } else {
            TiltKind::None
        },
    }
}

/// The Markovian embedding a computation runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedding {
    /// Qubit plus reaction-coordinate mode at the given truncation.
    ReactionCoordinate(Truncation),
    /// Qubit alone with the weak-coupling rates.
    WeakCoupling,
}

impl Embedding {
    pub fn generator(&self, p: &ModelParams) -> Generator {
        match *self {
            Embedding::ReactionCoordinate(t) => rc_lme_generator(p, t),
            Embedding::WeakCoupling => weak_coupling_generator(p, 0.0),
        }
    }

    /// Tilted generator; the weak-coupling model only has the dissipator cut.
    pub fn tilted(&self, p: &ModelParams, chi: C64, cut: CountingCut) -> Generator {
        match (*self, cut) {
            (Embedding::ReactionCoordinate(t), CountingCut::Hamiltonian) => {
                tilted_generator_hcut_complex(p, t, chi)
            }
            (Embedding::ReactionCoordinate(t), CountingCut::Dissipator) => {
                tilted_generator_dcut_complex(p, t, chi)
            }
            (Embedding::WeakCoupling, _) => weak_coupling_generator_complex(p, chi),
        }
    }

    pub fn hamiltonian(&self, p: &ModelParams) -> Operator {
        match *self {
            Embedding::ReactionCoordinate(t) => crate::model::extended_hamiltonian(p, t),
            Embedding::WeakCoupling => qubit_hamiltonian(p),
        }
    }

    pub fn channels(&self, p: &ModelParams) -> Vec<JumpChannel> {
        match *self {
            Embedding::ReactionCoordinate(t) => rc_channels(p, t),
            Embedding::WeakCoupling => weak_channels(p),
        }
    }

    pub fn truncation(&self) -> Option<Truncation> {
        match *self {
            Embedding::ReactionCoordinate(t) => Some(t),
            Embedding::WeakCoupling => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{hermitian_part, kron, max_abs};
    use ndarray_linalg::EigVals;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, d: usize) -> Operator {
        Array2::from_shape_fn((d, d), |_| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn driven() -> ModelParams {
        ModelParams {
            lambda_coupling: 0.03,
            omega_rabi: 0.005,
            n_bath: 0.01,
            alpha: 0.04,
            ..Default::default()
        }
    }

    #[test]
    fn vec_of_identity() {
        let v = vectorize(&identity(2)).unwrap();
        assert_eq!(v.to_vec(), vec![ONE, ZERO, ZERO, ONE]);
    }

    #[test]
    fn vec_round_trip_and_sandwich_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 3);
            let rho = random_matrix(&mut rng, 3);
            let b = random_matrix(&mut rng, 3);
            assert_eq!(unvectorize(&vectorize(&rho).unwrap()).unwrap(), rho);
            let lhs = vectorize(&a.dot(&rho).dot(&b)).unwrap();
            let rhs = kron(&b.t().to_owned(), &a).dot(&vectorize(&rho).unwrap());
            assert!((&lhs - &rhs).iter().all(|z| z.norm() < 1e-13));
        }
    }

    #[test]
    fn vectorize_rejects_rectangular() {
        assert!(vectorize(&Array2::zeros((2, 3))).is_err());
        assert!(unvectorize(&Array1::zeros(5)).is_err());
    }

    #[test]
    fn generator_is_trace_preserving() {
        let t = Truncation::new(6).unwrap();
        let g = rc_lme_generator(&driven(), t);
        let tr = trace_functional(t.dim());
        let left = tr.dot(g.matrix());
        assert!(left.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn generator_preserves_hermiticity() {
        let t = Truncation::new(5).unwrap();
        let g = rc_lme_generator(&driven(), t);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, t.dim());
        let lhs = g.apply(&dagger(&x)).unwrap();
        let rhs = dagger(&g.apply(&x).unwrap());
        assert!(max_abs(&(&lhs - &rhs)) < 1e-14);
    }

    #[test]
    fn decoupled_thermal_product_is_stationary() {
        let n_max = 10;
        let t = Truncation::new(n_max).unwrap();
        let nb = 0.01;
        let p = ModelParams {
            lambda_coupling: 0.0,
            omega_rabi: 0.0,
            n_bath: nb,
            ..driven()
        };
        // thermal state renormalized on the truncated space
        let x = nb / (1.0 + nb);
        let w: Vec<f64> = (0..n_max).map(|n| x.powi(n as i32)).collect();
        let z: f64 = w.iter().sum();
        let thermal = Array2::from_diag(&Array1::from_iter(w.iter().map(|v| C64::new(v / z, 0.0))));
        let rq = Array2::from_diag(&ndarray::array![C64::new(0.2, 0.0), C64::new(0.8, 0.0)]);
        let rho = kron(&rq, &thermal);
        let out = rc_lme_generator(&p, t).apply(&rho).unwrap();
        assert!(max_abs(&out) < 1e-10);
    }

    #[test]
    fn untilted_spectrum_in_left_half_plane() {
        let t = Truncation::new(6).unwrap();
        let eigs = rc_lme_generator(&driven(), t).matrix().eigvals().unwrap();
        assert!(eigs.iter().all(|z| z.re <= 1e-10));
    }

    #[test]
    fn zero_field_tilts_are_bitwise_untilted() {
        let t = Truncation::new(5).unwrap();
        let p = driven();
        let base = rc_lme_generator(&p, t);
        assert_eq!(tilted_generator_hcut(&p, t, 0.0).matrix(), base.matrix());
        assert_eq!(tilted_generator_dcut(&p, t, 0.0).matrix(), base.matrix());
        assert!(tilted_generator_dcut(&p, t, 0.0).is_untilted());
        assert!(!tilted_generator_dcut(&p, t, 0.3).is_untilted());
    }

    #[test]
    fn counting_field_periods() {
        use std::f64::consts::PI;
        let t = Truncation::new(5).unwrap();
        let p = driven();
        for chi in [0.3, 1.1] {
            let h0 = tilted_generator_hcut(&p, t, chi);
            let h4 = tilted_generator_hcut(&p, t, chi + 4.0 * PI);
            let h2 = tilted_generator_hcut(&p, t, chi + 2.0 * PI);
            let diff4 = (h0.matrix() - h4.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            let diff2 = (h0.matrix() - h2.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            assert!(diff4 < 1e-14);
            // half-angle phases flip sign after 2π
            assert!(diff2 > 1e-3);

            let d0 = tilted_generator_dcut(&p, t, chi);
            let d2 = tilted_generator_dcut(&p, t, chi + 2.0 * PI);
            let diff = (d0.matrix() - d2.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            assert!(diff < 1e-14);
        }
        let d4 = tilted_generator_hcut(&p, t, 4.0 * PI);
        let base = rc_lme_generator(&p, t);
        let diff = (d4.matrix() - base.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(diff < 1e-14);
    }

    #[test]
    fn channel_rates_and_weights() {
        let t = Truncation::new(4).unwrap();
        let p = driven();
        let ch = rc_channels(&p, t);
        assert_eq!(ch[0].weight, 1);
        assert_eq!(ch[1].weight, -1);
        assert!((ch[0].rate - p.gamma() * 1.01).abs() < 1e-16);
        assert!((ch[1].rate - p.gamma() * 0.01).abs() < 1e-16);
        let l = ch[0].jump_operator();
        assert!((l[[0, 1]].re - (p.gamma() * 1.01).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weak_generator_undriven_steady_populations() {
        let p = ModelParams {
            omega_rabi: 0.0,
            alpha: 1.0,
            lambda_coupling: 0.05,
            n_bath: 0.3,
            ..Default::default()
        };
        let g = weak_coupling_generator(&p, 0.0);
        let nq = WeakRates::new(&p).n_q;
        assert!((nq - 0.3).abs() < 1e-12);
        let pe = nq / (2.0 * nq + 1.0);
        let rho = Array2::from_diag(&ndarray::array![C64::new(1.0 - pe, 0.0), C64::new(pe, 0.0)]);
        let out = g.apply(&rho).unwrap();
        assert!(max_abs(&out) < 1e-15);
        // the test state is Hermitian so this is a fixed point
        assert_eq!(hermitian_part(&rho), rho);
    }

    #[test]
    fn weak_rates_follow_detuning() {
        let p = ModelParams {
            delta_q: 0.1,
            delta_c: 0.0,
            alpha: 1.0,
            lambda_coupling: 0.05,
            n_bath: 0.5,
            ..Default::default()
        };
        let r = WeakRates::new(&p);
        assert!((r.gamma_q - drude_lorentz(1.1, &p)).abs() < 1e-18);
        assert!(r.n_q < 0.5);
    }
}
