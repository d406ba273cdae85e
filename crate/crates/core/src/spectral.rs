//! Steady states, spectra, constrained solves and propagation for a
//! [`Generator`].

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{
    EigVals, EigValsh, Factorize, JobSvd, LUFactorized, Norm, ReciprocalConditionNum, Solve,
    SVDDC, UPLO,
};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_part, trace, Operator, C64, ONE, ZERO};
use crate::liouville::{trace_functional, unvectorize, vec_trace, vectorize, Generator};
use crate::numerics::{dopri5, Csr, OdeTolerance};

/// Largest Liouville dimension for which the steady state comes from a full SVD.
const SVD_LIMIT: usize = 1024;
/// Ratio σ₂/σ_max below which the null space counts as two-dimensional.
const DEGENERACY_RATIO: f64 = 1e-9;
/// Reciprocal condition number of the bordered system below which the steady
/// state counts as non-unique.
const DEGENERACY_RCOND: f64 = 1e-13;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: Operator,
    pub residual_norm: f64,
    pub trace_error: f64,
    /// Most negative eigenvalue of the Hermitized state.
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSlice {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<C64>,
    pub count: usize,
}

fn require_untilted(g: &Generator) -> Result<()> {
    if g.is_untilted() {
        Ok(())
    } else {
        Err(Error::param("generator", "expected an untilted generator"))
    }
}

/// Unique trace-one null vector of 𝓛, Hermitized.
pub fn steady_state(g: &Generator) -> Result<SteadyState> {
    require_untilted(g)?;
    let l = g.matrix();
    let d = g.hilbert_dim();
    let raw = if l.nrows() <= SVD_LIMIT {
        null_vector_svd(l)?
    } else {
        null_vector_bordered(l, d)?
    };
    let tr = vec_trace(&raw, d);
    let rho = hermitian_part(&unvectorize(&raw.mapv(|z| z / tr))?);
    let v = vectorize(&rho)?;
    let residual_norm = l.dot(&v).norm_l2();
    let scale = l.norm_l2().max(f64::MIN_POSITIVE);
    if residual_norm > RESIDUAL_TOL * scale {
        return Err(Error::SteadyStateResidual {
            residual: residual_norm,
            tolerance: RESIDUAL_TOL * scale,
        });
    }
    let trace_error = (trace(&rho) - ONE).norm();
    let min_eigenvalue = rho
        .eigvalsh(UPLO::Lower)?
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(SteadyState {
        rho,
        residual_norm,
        trace_error,
        min_eigenvalue,
    })
}

fn null_vector_svd(l: &Array2<C64>) -> Result<Array1<C64>> {
    // The divide-and-conquer driver returns inaccurate singular vectors for
    // complex row-major input, so hand it a column-major copy.
    let mut f = Array2::zeros(l.raw_dim().f());
    f.assign(l);
    let (_, s, vt) = f.svddc(JobSvd::All)?;
    let n = s.len();
    let ratio = s[n - 2] / s[0];
    if ratio < DEGENERACY_RATIO {
        return Err(Error::DegenerateSteadyState(ratio));
    }
    let vt = vt.expect("requested right singular vectors");
    Ok(vt.row(n - 1).mapv(|z| z.conj()))
}

/// Solve [[𝓛, vec 1], [vec 1ᵀ, 0]] [x; μ] = [0; 1]. The border column lies
/// outside the (traceless) range of 𝓛, so the system is regular exactly when
/// the null space is one-dimensional.
fn null_vector_bordered(l: &Array2<C64>, d: usize) -> Result<Array1<C64>> {
    let n = l.nrows();
    let tr = trace_functional(d);
    let mut b = Array2::zeros((n + 1, n + 1));
    b.slice_mut(ndarray::s![..n, ..n]).assign(l);
    b.slice_mut(ndarray::s![..n, n]).assign(&tr);
    b.slice_mut(ndarray::s![n, ..n]).assign(&tr);
    let lu = b.factorize()?;
    let rcond = lu.rcond()?;
    if rcond < DEGENERACY_RCOND {
        return Err(Error::DegenerateSteadyState(rcond));
    }
    let mut rhs = Array1::zeros(n + 1);
    rhs[n] = ONE;
    let x = lu.solve(&rhs)?;
    Ok(x.slice(ndarray::s![..n]).to_owned())
}

/// Eigenvalue of maximal real part; ties go to the smallest |Im|.
pub fn leading_eigenvalue(g: &Generator) -> Result<C64> {
    let eigs = g.matrix().eigvals()?;
    let scale = g.matrix().norm_max().max(1.0);
    let tol = 1e-12 * scale;
    let best = eigs
        .iter()
        .copied()
        .fold(None::<C64>, |acc, z| match acc {
            None => Some(z),
            Some(b) if z.re > b.re + tol => Some(z),
            Some(b) if (z.re - b.re).abs() <= tol && z.im.abs() < b.im.abs() => Some(z),
            acc => acc,
        })
        .expect("nonempty spectrum");
    Ok(best)
}

/// Leading eigenvalue of a weakly tilted generator by shift-invert iteration
/// about zero. The eigenvalue is read off through the trace functional,
/// θ = 1ᵀ𝓛v / 1ᵀv, which keeps its relative accuracy as θ → 0.
///
/// Falls back to the full spectrum when the iteration does not settle.
pub(crate) fn leading_eigenvalue_near_zero(g: &Generator) -> Result<C64> {
    let l = g.matrix();
    let n = l.nrows();
    let d = g.hilbert_dim();
    let lu = match l.factorize() {
        Ok(lu) => lu,
        Err(_) => return leading_eigenvalue(g),
    };
    let mut v = trace_functional(d).mapv(|z| z / d as f64);
    let scale = l.norm_l2().max(1.0);
    let mut theta = ZERO;
    for _ in 0..30 {
        let w = match lu.solve(&v) {
            Ok(w) => w,
            Err(_) => return leading_eigenvalue(g),
        };
        let norm = vec_trace(&w, d);
        if !norm.is_finite() || norm.norm() < 1e-300 {
            return leading_eigenvalue(g);
        }
        v = w.mapv(|z| z / norm);
        let lv = l.dot(&v);
        theta = vec_trace(&lv, d) / vec_trace(&v, d);
        let res = (&lv - &v.mapv(|z| z * theta)).norm_l2() / v.norm_l2();
        if res <= 1e-13 * scale {
            debug_assert_eq!(v.len(), n);
            return Ok(theta);
        }
    }
    log::debug!("shift-invert stalled at theta = {theta}; using full spectrum");
    leading_eigenvalue(g)
}

/// The k + 1 eigenvalues of largest real part. Untilted generators have a
/// spectrum closed under conjugation, so only the member with Im ≥ 0 of each
/// pair is reported.
pub fn spectrum_top(g: &Generator, k: usize) -> Result<SpectrumSlice> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let mut eigs = g.matrix().eigvals()?.to_vec();
    if g.is_untilted() {
        let tol = 1e-10 * g.matrix().norm_max().max(1.0);
        eigs.retain(|z| z.im > -tol);
        for z in eigs.iter_mut() {
            if z.im.abs() <= tol {
                z.im = 0.0;
            }
        }
    }
    eigs.sort_by(|a, b| {
        b.re.total_cmp(&a.re)
            .then_with(|| a.im.abs().total_cmp(&b.im.abs()))
    });
    eigs.truncate(k + 1);
    Ok(SpectrumSlice {
        count: eigs.len(),
        eigenvalues: eigs,
    })
}

/// Repeated action of the Drazin inverse through one factorized bordered
/// system [[𝓛, vec ρ_ss], [vec 1ᵀ, 0]].
pub struct DrazinSolver {
    lu: LUFactorized<ndarray::OwnedRepr<C64>>,
    matrix: Csr,
    rho_ss: Array1<C64>,
    hilbert_dim: usize,
}

impl DrazinSolver {
    pub fn new(g: &Generator, rho_ss: &Operator) -> Result<Self> {
        require_untilted(g)?;
        let l = g.matrix();
        let n = l.nrows();
        let d = g.hilbert_dim();
        let ss = vectorize(rho_ss)?;
        if ss.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: ss.len(),
            });
        }
        let tr = trace_functional(d);
        let mut b = Array2::zeros((n + 1, n + 1));
        b.slice_mut(ndarray::s![..n, ..n]).assign(l);
        b.slice_mut(ndarray::s![..n, n]).assign(&ss);
        b.slice_mut(ndarray::s![n, ..n]).assign(&tr);
        let lu = b.factorize()?;
        let rcond = lu.rcond()?;
        if rcond < DEGENERACY_RCOND {
            return Err(Error::SingularSystem(rcond));
        }
        Ok(DrazinSolver {
            lu,
            matrix: Csr::from_dense(l),
            rho_ss: ss,
            hilbert_dim: d,
        })
    }

    /// x with 𝓛x = rhs − ρ_ss Tr[rhs] and Tr x = 0, on vectorized operators.
    pub fn apply_vec(&self, rhs: &Array1<C64>) -> Result<Array1<C64>> {
        let n = self.rho_ss.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let t = vec_trace(rhs, self.hilbert_dim);
        let projected = rhs - &self.rho_ss.mapv(|z| z * t);
        let mut b = Array1::zeros(n + 1);
        b.slice_mut(ndarray::s![..n]).assign(&projected);
        let sol = self.lu.solve(&b)?;
        let x = sol.slice(ndarray::s![..n]).to_owned();

        let mut lx = vec![ZERO; n];
        self.matrix
            .matvec_into(x.as_slice().expect("contiguous"), &mut lx);
        let res = lx
            .iter()
            .zip(projected.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale = projected.norm_l2().max(x.norm_l2() * 1e-3).max(1e-300);
        if res > 1e-8 * scale && res > 1e-14 {
            return Err(Error::SingularSystem(res));
        }
        Ok(x)
    }

    pub fn apply(&self, rhs: &Operator) -> Result<Operator> {
        unvectorize(&self.apply_vec(&vectorize(rhs)?)?)
    }
}

/// One-shot Drazin action; see [`DrazinSolver`] for repeated use.
pub fn drazin_apply(g: &Generator, rhs: &Operator, rho_ss: &Operator) -> Result<Operator> {
    DrazinSolver::new(g, rho_ss)?.apply(rhs)
}

/// e^{𝓛τ} ρ₀.
pub fn propagate(g: &Generator, rho0: &Operator, tau: f64) -> Result<Operator> {
    Ok(propagate_many(g, rho0, &[tau])?.pop().expect("one output"))
}

/// e^{𝓛τ} ρ₀ at each τ of an increasing list.
pub fn propagate_many(g: &Generator, rho0: &Operator, taus: &[f64]) -> Result<Vec<Operator>> {
    check_times(taus)?;
    let csr = Csr::from_dense(g.matrix());
    let v0 = vectorize(rho0)?;
    if v0.len() != csr.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.hilbert_dim(),
            got: rho0.nrows(),
        });
    }
    let states = dopri5(
        |y, dy| csr.matvec_into(y, dy),
        v0.as_slice().expect("contiguous"),
        taus,
        OdeTolerance::default(),
    )?;
    states
        .into_iter()
        .map(|v| unvectorize(&Array1::from(v)))
        .collect()
}

pub(crate) fn check_times(taus: &[f64]) -> Result<()> {
    if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::param("tau", "times must be finite and nonnegative"));
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("tau", "times must be nondecreasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{max_abs, Truncation};
    use crate::liouville::{rc_lme_generator, tilted_generator_dcut};
    use crate::model::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn driven() -> ModelParams {
        ModelParams {
            lambda_coupling: 0.03,
            omega_rabi: 0.005,
            n_bath: 0.01,
            alpha: 0.04,
            ..Default::default()
        }
    }

    fn t(n: usize) -> Truncation {
        Truncation::new(n).unwrap()
    }

    fn random_traceless(rng: &mut impl Rng, d: usize) -> Operator {
        let mut x = Array2::from_shape_fn((d, d), |_| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let tr = trace(&x) / d as f64;
        for i in 0..d {
            x[[i, i]] -= tr;
        }
        x
    }

    #[test]
    fn decoupled_undriven_steady_state_is_degenerate() {
        let p = ModelParams {
            lambda_coupling: 0.0,
            omega_rabi: 0.0,
            ..driven()
        };
        let g = rc_lme_generator(&p, t(6));
        assert!(matches!(steady_state(&g), Err(Error::DegenerateSteadyState(_))));
        // the bordered path detects it too
        let g = rc_lme_generator(&p, t(17));
        assert!(matches!(steady_state(&g), Err(Error::DegenerateSteadyState(_))));
    }

    #[test]
    fn driven_steady_state_is_physical() {
        let g = rc_lme_generator(&driven(), t(12));
        let ss = steady_state(&g).unwrap();
        assert!(ss.trace_error < 1e-10);
        assert!(ss.min_eigenvalue > -1e-8);
        assert!(ss.residual_norm <= 1e-10 * g.matrix().norm_l2());
        assert!(max_abs(&(&ss.rho - &hermitian_part(&ss.rho))) == 0.0);
    }

    #[test]
    fn svd_and_bordered_paths_agree() {
        let g = rc_lme_generator(&driven(), t(8));
        let a = steady_state(&g).unwrap().rho;
        let b = unvectorize(&null_vector_bordered(g.matrix(), 16).unwrap()).unwrap();
        let b = b.mapv(|z| z / trace(&b));
        assert!(max_abs(&(&a - &b)) < 1e-11);
    }

    #[test]
    fn rejects_tilted_generator() {
        let g = tilted_generator_dcut(&driven(), t(4), 0.2);
        assert!(steady_state(&g).is_err());
    }

    #[test]
    fn untilted_leading_eigenvalue_is_zero() {
        let g = rc_lme_generator(&driven(), t(8));
        assert!(leading_eigenvalue(&g).unwrap().norm() < 1e-10);
        assert!(leading_eigenvalue_near_zero(&g).unwrap().norm() < 1e-14);
    }

    #[test]
    fn leading_eigenvalue_continuous_in_chi() {
        let p = driven();
        let tr = t(8);
        let th = |chi: f64| leading_eigenvalue(&tilted_generator_dcut(&p, tr, chi)).unwrap();
        let a = th(1e-3);
        let b = th(2e-3);
        assert!(a.norm() < 1e-4);
        // first order: doubling χ roughly doubles θ₀
        assert!(((b / a).re - 2.0).abs() < 1e-2);
    }

    #[test]
    fn shift_invert_matches_full_spectrum() {
        let p = driven();
        for chi in [1e-3, -2e-2, 0.1] {
            let g = tilted_generator_dcut(&p, t(8), chi);
            let full = leading_eigenvalue(&g).unwrap();
            let fast = leading_eigenvalue_near_zero(&g).unwrap();
            assert!((full - fast).norm() < 1e-13, "chi={chi} {full} {fast}");
        }
    }

    #[test]
    fn spectrum_is_conjugation_closed() {
        let g = rc_lme_generator(&driven(), t(6));
        let eigs = g.matrix().eigvals().unwrap();
        for z in eigs.iter() {
            let partner = eigs.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(partner < 1e-10);
        }
        assert!(eigs.iter().all(|z| z.re <= 1e-10));
    }

    #[test]
    fn spectrum_top_ordering_and_dedup() {
        let g = rc_lme_generator(&driven(), t(8));
        let s = spectrum_top(&g, 3).unwrap();
        assert_eq!(s.count, 4);
        assert!(s.eigenvalues[0].re.abs() <= 1e-10);
        assert!(s.eigenvalues.windows(2).all(|w| w[0].re >= w[1].re));
        assert!(s.eigenvalues.iter().all(|z| z.im >= 0.0));
        assert!(spectrum_top(&g, 0).is_err());
    }

    #[test]
    fn damped_mode_relaxation_rates() {
        let p = ModelParams {
            lambda_coupling: 0.0,
            omega_rabi: 0.0,
            ..driven()
        };
        let g = rc_lme_generator(&p, t(10));
        let gamma = p.gamma();
        let eigs = g.matrix().eigvals().unwrap();
        let has = |re: f64| eigs.iter().any(|z| (z.re - re).abs() < 1e-6 * gamma);
        assert!(has(-gamma / 2.0));
        assert!(has(-gamma));
    }

    #[test]
    fn drazin_properties() {
        let g = rc_lme_generator(&driven(), t(6));
        let ss = steady_state(&g).unwrap().rho;
        let solver = DrazinSolver::new(&g, &ss).unwrap();
        assert!(max_abs(&solver.apply(&ss).unwrap()) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let y = random_traceless(&mut rng, 12);
            let x = solver.apply(&y).unwrap();
            assert!(trace(&x).norm() < 1e-10);
            let back = g.apply(&x).unwrap();
            assert!(max_abs(&(&back - &y)) < 1e-10);
        }
        // non-traceless input is projected first
        let y = random_traceless(&mut rng, 12) + &ss.mapv(|z| z * 3.0);
        let x = solver.apply(&y).unwrap();
        let proj = &y - &ss.mapv(|z| z * trace(&y));
        assert!(max_abs(&(&g.apply(&x).unwrap() - &proj)) < 1e-10);
    }

    #[test]
    fn drazin_matches_time_integral() {
        let p = driven();
        let g = rc_lme_generator(&p, t(6));
        let ss = steady_state(&g).unwrap().rho;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random_traceless(&mut rng, 12);
        let x = drazin_apply(&g, &y, &ss).unwrap();
        // −∫₀^T e^{𝓛τ} y dτ via an accumulator appended to the state. The
        // gap here is about γ/4, so the tail is negligible only past ~100/γ.
        let big_t = 100.0 / p.gamma();
        let csr = Csr::from_dense(g.matrix());
        let n = csr.dim();
        let mut y0 = vectorize(&y).unwrap().to_vec();
        y0.extend(std::iter::repeat_n(ZERO, n));
        let out = dopri5(
            |s, ds| {
                csr.matvec_into(&s[..n], &mut ds[..n]);
                for i in 0..n {
                    ds[n + i] = -s[i];
                }
            },
            &y0,
            &[big_t],
            OdeTolerance::default(),
        )
        .unwrap();
        let integral = unvectorize(&Array1::from(out[0][n..].to_vec())).unwrap();
        assert!(max_abs(&(&integral - &x)) < 1e-6 * max_abs(&x));
    }

    #[test]
    fn propagation_limits() {
        let p = driven();
        let g = rc_lme_generator(&p, t(6));
        let ss = steady_state(&g).unwrap().rho;
        let mut rho0 = Array2::zeros((12, 12));
        rho0[[0, 0]] = ONE;
        assert_eq!(propagate(&g, &rho0, 0.0).unwrap(), rho0);
        let taus = [1.0, 10.0, 100.0, 100.0 / p.gamma()];
        let states = propagate_many(&g, &rho0, &taus).unwrap();
        for s in &states {
            assert!((trace(s) - ONE).norm() < 1e-9);
        }
        assert!(max_abs(&(&states[3] - &ss)) < 1e-6);
        // the steady state is a fixed point
        let fixed = propagate(&g, &ss, 37.0).unwrap();
        assert!(max_abs(&(&fixed - &ss)) < 1e-9);
        assert!(propagate(&g, &rho0, -1.0).is_err());
    }
}
