//! Regular part of the two-time current correlation function,
//! C(τ) = Tr[𝒥 e^{𝓛τ} 𝒥ρ_ss] − J², and its time integral.

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fcs::{apply_current, average_current};
use crate::hilbert::{dagger, Operator, C64, ZERO};
use crate::liouville::{unvectorize, vectorize, Generator, JumpChannel};
use crate::numerics::{dopri5, Csr, OdeTolerance};
use crate::spectral::{check_times, DrazinSolver};

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationTrace {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// ∫₀^T C dτ up to the last grid time T.
    pub integral: f64,
    /// Estimate of |∫_T^∞ C dτ| from the decay of the last samples.
    pub tail_bound: f64,
}

impl CorrelationTrace {
    /// Mean spacing between alternate sign changes, if C oscillates at least
    /// twice on the grid.
    pub fn oscillation_period(&self) -> Option<f64> {
        let mut crossings = Vec::new();
        for i in 1..self.values.len() {
            let (a, b) = (self.values[i - 1], self.values[i]);
            if a != 0.0 && a.signum() != b.signum() {
                let (ta, tb) = (self.taus[i - 1], self.taus[i]);
                crossings.push(ta + (tb - ta) * a / (a - b));
            }
        }
        if crossings.len() < 3 {
            return None;
        }
        let span = crossings[crossings.len() - 1] - crossings[0];
        Some(2.0 * span / (crossings.len() - 1) as f64)
    }
}

/// 0 followed by `points − 1` log-spaced times from 1e−3/γ to `t_max`.
pub fn default_tau_grid(gamma: f64, t_max: f64, points: usize) -> Vec<f64> {
    let lo = (1e-3 / gamma).ln();
    let hi = t_max.ln();
    let m = points.saturating_sub(1).max(1);
    let mut g = vec![0.0];
    g.extend((0..m).map(|i| {
        let f = if m == 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
        (lo + f * (hi - lo)).exp()
    }));
    g
}

/// Functional vector f with f·vec(X) = Tr[A X].
fn trace_against(a: &Operator) -> Array1<C64> {
    let d = a.nrows();
    let mut f = Array1::zeros(d * d);
    for ((i, j), &z) in a.indexed_iter() {
        f[j + i * d] = z;
    }
    f
}

/// Samples C(τ) on `taus` (sorted, starting at 0) while integrating it
/// alongside the propagation.
pub fn correlation_function(
    g: &Generator,
    rho_ss: &Operator,
    channels: &[JumpChannel],
    taus: &[f64],
) -> Result<CorrelationTrace> {
    check_times(taus)?;
    if taus.first() != Some(&0.0) {
        return Err(Error::param("taus", "grid must start at 0"));
    }
    let j = average_current(rho_ss, channels);
    // e^{𝓛τ}ρ_ss = ρ_ss, so subtracting Jρ_ss up front removes J² exactly.
    let start = &apply_current(channels, rho_ss, true) - &rho_ss.mapv(|z| z * j);
    let mut obs = Operator::zeros(rho_ss.raw_dim());
    for ch in channels {
        obs += &dagger(&ch.operator)
            .dot(&ch.operator)
            .mapv(|z| z * (ch.weight as f64 * ch.rate));
    }
    let f = trace_against(&obs);
    let csr = Csr::from_dense(g.matrix());
    let n = csr.dim();
    let mut y0 = vectorize(&start)?.to_vec();
    if y0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: g.hilbert_dim(),
            got: rho_ss.nrows(),
        });
    }
    y0.push(ZERO);
    let fv = f.to_vec();
    let states = dopri5(
        |y, dy| {
            csr.matvec_into(&y[..n], &mut dy[..n]);
            dy[n] = fv.iter().zip(&y[..n]).map(|(a, b)| a * b).sum();
        },
        &y0,
        taus,
        OdeTolerance::default(),
    )?;
    let mut values = Vec::with_capacity(taus.len());
    for s in &states {
        let c: C64 = fv.iter().zip(&s[..n]).map(|(a, b)| a * b).sum();
        if c.im.abs() > 1e-9 * c.re.abs().max(j * j).max(1e-30) {
            log::warn!("discarding imaginary correlation residue {:.3e}", c.im);
        }
        values.push(c.re);
    }
    let integral = states.last().map_or(0.0, |s| s[n].re);
    let tail_bound = tail_estimate(taus, &values);
    Ok(CorrelationTrace {
        taus: taus.to_vec(),
        values,
        integral,
        tail_bound,
    })
}

/// Envelope max|C| over the last two fifths of the grid, fitted to c·e^{−rτ}
/// and integrated from T to ∞.
fn tail_estimate(taus: &[f64], values: &[f64]) -> f64 {
    let t_end = match taus.last() {
        Some(&t) if t > 0.0 => t,
        _ => return f64::INFINITY,
    };
    let window_max = |a: f64, b: f64| {
        taus.iter()
            .zip(values)
            .filter(|(t, _)| **t >= a * t_end && **t <= b * t_end)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    };
    let m1 = window_max(0.6, 0.8);
    let m2 = window_max(0.8, 1.0);
    if m2 == 0.0 {
        return 0.0;
    }
    let rate = (m1 / m2).ln() / (0.2 * t_end);
    if rate > 0.0 && rate.is_finite() {
        m2 / rate
    } else {
        f64::INFINITY
    }
}

/// C(0) = Tr[𝒥𝒥ρ_ss] − J², without propagation.
pub fn zero_delay(rho_ss: &Operator, channels: &[JumpChannel]) -> f64 {
    let j = average_current(rho_ss, channels);
    average_current(&apply_current(channels, rho_ss, true), channels) - j * j
}

/// D − K = −2 Tr[𝒥 𝓛^D(𝒥ρ_ss)]; negative values certify net anticorrelation.
pub fn d_minus_k(g: &Generator, rho_ss: &Operator, channels: &[JumpChannel]) -> Result<f64> {
    let solver = DrazinSolver::new(g, rho_ss)?;
    let x = solver.apply_vec(&vectorize(&apply_current(channels, rho_ss, true))?)?;
    Ok(-2.0 * average_current(&unvectorize(&x)?, channels))
}
