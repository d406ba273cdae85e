//! Steady-state statistics of the net number of excitations exchanged with
//! the residual bath: current, activity, noise, entropy production and the
//! uncertainty ratio.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{dagger, expect, Operator, Truncation, C64};
use crate::liouville::{
    tilted_generator_dcut, tilted_generator_hcut, vectorize, CountingCut, Embedding, Generator,
    JumpChannel,
};
use crate::model::ModelParams;
use crate::spectral::{
    leading_eigenvalue, leading_eigenvalue_near_zero, steady_state, DrazinSolver, SteadyState,
};

/// Default finite-difference step in the counting field.
pub const DEFAULT_FD_STEP: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMethod {
    FdCgf,
    Drazin,
    Trajectory,
}

/// Thermodynamic affinity attached to one transferred excitation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityConvention {
    /// ω_c/T = ln(1 + 1/n_B).
    #[default]
    Thermodynamic,
    /// ln(1 + n_B), an alternative convention.
    Literal,
}

impl AffinityConvention {
    pub fn affinity(self, n_bath: f64) -> f64 {
        match self {
            AffinityConvention::Thermodynamic => (1.0 + 1.0 / n_bath).ln(),
            AffinityConvention::Literal => n_bath.ln_1p(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcsResult {
    pub current_j: f64,
    pub activity_k: f64,
    pub noise_d: f64,
    pub noise_method: NoiseMethod,
    /// Absent when the current vanishes.
    pub tur_q: Option<f64>,
    pub entropy_rate: f64,
    /// J²/D, absent when D vanishes.
    pub snr: Option<f64>,
}

impl FcsResult {
    pub fn new(
        current_j: f64,
        activity_k: f64,
        noise_d: f64,
        noise_method: NoiseMethod,
        p: &ModelParams,
        conv: AffinityConvention,
    ) -> Self {
        let entropy_rate = entropy_production(current_j, p, conv);
        let mut r = FcsResult {
            current_j,
            activity_k,
            noise_d,
            noise_method,
            tur_q: None,
            entropy_rate,
            snr: (noise_d != 0.0).then(|| current_j * current_j / noise_d),
        };
        r.tur_q = tur_ratio(&r, p, conv);
        r
    }
}

/// 𝒥 = Σ_k ν_k rate_k L_k · L_k†, with weights ν = ±1.
#[derive(Clone, Debug)]
pub struct CurrentSuperop {
    matrix: Array2<C64>,
    hilbert_dim: usize,
}

impl CurrentSuperop {
    pub fn new(channels: &[JumpChannel]) -> Self {
        let d = channels.first().map_or(0, |c| c.operator.nrows());
        let mut m = Array2::zeros((d * d, d * d));
        for ch in channels {
            let coeff = ch.weight as f64 * ch.rate;
            if coeff == 0.0 {
                continue;
            }
            let conj_l = ch.operator.mapv(|z| z.conj());
            m += &crate::hilbert::kron(&conj_l, &ch.operator).mapv(|z| z * coeff);
        }
        CurrentSuperop {
            matrix: m,
            hilbert_dim: d,
        }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }
}

/// 𝒥ρ computed directly from the channels.
pub(crate) fn apply_current(channels: &[JumpChannel], rho: &Operator, signed: bool) -> Operator {
    let mut out = Array2::zeros(rho.raw_dim());
    for ch in channels {
        let w = if signed { ch.weight as f64 } else { 1.0 };
        let coeff = w * ch.rate;
        if coeff == 0.0 {
            continue;
        }
        let l = &ch.operator;
        out += &l.dot(rho).dot(&dagger(l)).mapv(|z| z * coeff);
    }
    out
}

fn channel_sum(rho: &Operator, channels: &[JumpChannel], signed: bool) -> f64 {
    channels
        .iter()
        .map(|ch| {
            let w = if signed { ch.weight as f64 } else { 1.0 };
            let ldl = dagger(&ch.operator).dot(&ch.operator);
            w * ch.rate * expect(&ldl, rho).re
        })
        .sum()
}

/// J = Tr[𝒥ρ] = Σ_k ν_k rate_k ⟨L_k†L_k⟩.
pub fn average_current(rho_ss: &Operator, channels: &[JumpChannel]) -> f64 {
    channel_sum(rho_ss, channels, true)
}

/// K = Σ_k rate_k ⟨L_k†L_k⟩, the total jump rate.
pub fn dynamical_activity(rho_ss: &Operator, channels: &[JumpChannel]) -> f64 {
    channel_sum(rho_ss, channels, false)
}

/// D = K − 2 Tr[𝒥 𝓛^D(𝒥ρ_ss)].
pub fn noise_drazin(rho_ss: &Operator, channels: &[JumpChannel], g: &Generator) -> Result<f64> {
    let solver = DrazinSolver::new(g, rho_ss)?;
    noise_with_solver(&solver, rho_ss, channels)
}

pub(crate) fn noise_with_solver(
    solver: &DrazinSolver,
    rho_ss: &Operator,
    channels: &[JumpChannel],
) -> Result<f64> {
    let j_rho = apply_current(channels, rho_ss, true);
    let x = solver.apply_vec(&vectorize(&j_rho)?)?;
    let x = crate::liouville::unvectorize(&x)?;
    let k = dynamical_activity(rho_ss, channels);
    Ok(k - 2.0 * average_current(&x, channels))
}

/// First two scaled cumulants from finite differences of θ₀(χ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdCumulants {
    pub current: f64,
    pub noise: f64,
    pub step: f64,
    /// Largest imaginary residue seen among the two cumulants.
    pub max_imag: f64,
}

/// Central differences at h and h/2 combined by Richardson extrapolation.
/// The two step sizes must agree to 1e−7 (relative to max(1, |value|)).
pub fn fd_cumulants(
    emb: &Embedding,
    p: &ModelParams,
    cut: CountingCut,
    h: f64,
) -> Result<FdCumulants> {
    if !(1e-4..=1e-2).contains(&h) {
        return Err(Error::param("fd_step", format!("{h} outside [1e-4, 1e-2]")));
    }
    let theta = |chi: f64| leading_eigenvalue_near_zero(&emb.tilted(p, C64::new(chi, 0.0), cut));
    let t0 = theta(0.0)?;
    let diff = |step: f64| -> Result<(C64, C64)> {
        let tp = theta(step)?;
        let tm = theta(-step)?;
        let j = -C64::i() * (tp - tm) / (2.0 * step);
        let d = -(tp - 2.0 * t0 + tm) / (step * step);
        Ok((j, d))
    };
    let (j1, d1) = diff(h)?;
    let (j2, d2) = diff(h / 2.0)?;
    let j = (4.0 * j2 - j1) / 3.0;
    let d = (4.0 * d2 - d1) / 3.0;

    for (name, a, b) in [("current", j1, j2), ("noise", d1, d2)] {
        let gap = (a - b).norm();
        if gap > 1e-7 * a.norm().max(1.0) {
            return Err(Error::UnstableDerivative(format!(
                "{name}: {a} at h vs {b} at h/2"
            )));
        }
    }
    let mut max_imag: f64 = 0.0;
    for z in [j, d] {
        let rel = z.im.abs() / z.re.abs().max(1e-12);
        if rel > 1e-4 && z.im.abs() > 1e-12 {
            return Err(Error::NonRealCumulant { imag: z.im });
        }
        if z.im.abs() > 1e-8 {
            log::warn!("discarding imaginary cumulant residue {:.3e}", z.im);
        }
        max_imag = max_imag.max(z.im.abs());
    }
    Ok(FdCumulants {
        current: j.re,
        noise: d.re,
        step: h,
        max_imag,
    })
}

/// Second scaled cumulant of the extended-system model from the CGF.
pub fn noise_fd_cgf(p: &ModelParams, trunc: Truncation, h: f64, cut: CountingCut) -> Result<f64> {
    Ok(fd_cumulants(&Embedding::ReactionCoordinate(trunc), p, cut, h)?.noise)
}

/// Σ̇ = J·A with A the affinity of one excitation.
pub fn entropy_production(j: f64, p: &ModelParams, conv: AffinityConvention) -> f64 {
    if j == 0.0 {
        return 0.0;
    }
    j * conv.affinity(p.n_bath)
}

/// 𝒬 = (D/J²)·Σ̇; absent when J is zero relative to the activity.
pub fn tur_ratio(fcs: &FcsResult, p: &ModelParams, conv: AffinityConvention) -> Option<f64> {
    let j = fcs.current_j;
    if j == 0.0 || j.abs() <= 1e-10 * fcs.activity_k.abs() {
        return None;
    }
    let q = fcs.noise_d / j * conv.affinity(p.n_bath);
    q.is_finite().then_some(q)
}

/// Options for a complete single-point evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcsOptions {
    pub method: NoiseMethod,
    pub cut: CountingCut,
    pub fd_step: f64,
    pub affinity: AffinityConvention,
}

impl Default for FcsOptions {
    fn default() -> Self {
        FcsOptions {
            method: NoiseMethod::Drazin,
            cut: CountingCut::Dissipator,
            fd_step: DEFAULT_FD_STEP,
            affinity: AffinityConvention::Thermodynamic,
        }
    }
}

/// Steady state and counting statistics at one parameter point.
pub fn analyze(
    emb: &Embedding,
    p: &ModelParams,
    opts: &FcsOptions,
) -> Result<(SteadyState, FcsResult)> {
    let g = emb.generator(p);
    let ss = steady_state(&g)?;
    let channels = emb.channels(p);
    let j = average_current(&ss.rho, &channels);
    let k = dynamical_activity(&ss.rho, &channels);
    let d = match opts.method {
        NoiseMethod::Drazin => noise_drazin(&ss.rho, &channels, &g)?,
        NoiseMethod::FdCgf => fd_cumulants(emb, p, opts.cut, opts.fd_step)?.noise,
        NoiseMethod::Trajectory => {
            return Err(Error::param(
                "method",
                "trajectory noise comes from the trajectories module",
            ))
        }
    };
    Ok((ss, FcsResult::new(j, k, d, opts.method, p, opts.affinity)))
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub chi: Vec<f64>,
    pub theta_hamiltonian: Vec<C64>,
    pub theta_dissipator: Vec<C64>,
    pub max_diff: f64,
    pub noise_hamiltonian: f64,
    pub noise_dissipator: f64,
    pub passed: bool,
}

pub const EQUIVALENCE_TOL: f64 = 1e-9;

/// Compares θ₀ between the two counting cuts on a grid of real fields in (0, π),
/// together with the second cumulant from each cut.
pub fn equivalence_certificate(
    p: &ModelParams,
    trunc: Truncation,
    chi_grid: &[f64],
) -> Result<EquivalenceReport> {
    if chi_grid.len() < 5 {
        return Err(Error::param("chi_grid", "need at least 5 points"));
    }
    if chi_grid
        .iter()
        .any(|&c| !(c > 0.0 && c < std::f64::consts::PI))
    {
        return Err(Error::param("chi_grid", "points must lie in (0, π)"));
    }
    let mut th = Vec::with_capacity(chi_grid.len());
    let mut td = Vec::with_capacity(chi_grid.len());
    for &chi in chi_grid {
        th.push(leading_eigenvalue(&tilted_generator_hcut(p, trunc, chi))?);
        td.push(leading_eigenvalue(&tilted_generator_dcut(p, trunc, chi))?);
    }
    let max_diff = th
        .iter()
        .zip(&td)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let noise_h = noise_fd_cgf(p, trunc, DEFAULT_FD_STEP, CountingCut::Hamiltonian)?;
    let noise_d = noise_fd_cgf(p, trunc, DEFAULT_FD_STEP, CountingCut::Dissipator)?;
    let passed =
        max_diff < EQUIVALENCE_TOL && (noise_h - noise_d).abs() <= 1e-8 * noise_d.abs().max(1e-12);
    Ok(EquivalenceReport {
        chi: chi_grid.to_vec(),
        theta_hamiltonian: th,
        theta_dissipator: td,
        max_diff,
        noise_hamiltonian: noise_h,
        noise_dissipator: noise_d,
        passed,
    })
}
