//! Physical parameters, spectral densities and the rotating-frame Hamiltonian
//! of the qubit + reaction-coordinate extended system.
//!
//! Energies are in units of the reaction-coordinate frequency (`omega_c = 1`
//! by default), with ħ = k_B = 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, creation, embed, identity, number, qubit_ops, Operator, Truncation, C64,
};

/// Parameters of the rotating-frame extended system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Qubit detuning from the drive, ω_q − ω_d.
    #[serde(default)]
    pub delta_q: f64,
    /// Reaction-coordinate detuning from the drive, ω_c − ω_d.
    #[serde(default)]
    pub delta_c: f64,
    /// Rabi frequency Ω.
    pub omega_rabi: f64,
    /// Qubit–mode coupling λ (also the amplitude of the Drude-Lorentz density).
    pub lambda_coupling: f64,
    /// Dimensionless width α of the Drude-Lorentz density.
    pub alpha: f64,
    #[serde(default = "default_omega_c")]
    pub omega_c: f64,
    /// UV cutoff Λ of the residual Ohmic density.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Residual-bath occupation n_B at ω_c.
    pub n_bath: f64,
}

fn default_omega_c() -> f64 {
    1.0
}

fn default_cutoff() -> f64 {
    1000.0
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            delta_q: 0.0,
            delta_c: 0.0,
            omega_rabi: 0.005,
            lambda_coupling: 0.03,
            alpha: 0.04,
            omega_c: 1.0,
            cutoff: 1000.0,
            n_bath: 0.01,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("delta_q", self.delta_q),
            ("delta_c", self.delta_c),
            ("omega_rabi", self.omega_rabi),
            ("lambda_coupling", self.lambda_coupling),
            ("alpha", self.alpha),
            ("omega_c", self.omega_c),
            ("cutoff", self.cutoff),
            ("n_bath", self.n_bath),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.omega_rabi < 0.0 {
            return Err(Error::param("omega_rabi", "must be >= 0"));
        }
        if self.lambda_coupling < 0.0 {
            return Err(Error::param("lambda_coupling", "must be >= 0"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::param("alpha", "must be > 0"));
        }
        if self.omega_c <= 0.0 {
            return Err(Error::param("omega_c", "must be > 0"));
        }
        if self.cutoff <= 0.0 {
            return Err(Error::param("cutoff", "must be > 0"));
        }
        if self.n_bath < 0.0 {
            return Err(Error::param("n_bath", "must be >= 0"));
        }
        Ok(())
    }

    /// Residual-bath damping rate γ = S_RC(ω_c).
    pub fn gamma(&self) -> f64 {
        ohmic_residual(self.omega_c, self)
    }

    pub fn thermo(&self) -> BathThermo {
        BathThermo::from_occupation(self.n_bath, self.omega_c)
    }

    /// Laboratory qubit frequency implied by the detunings, ω_q = ω_c + Δ_q − Δ_c.
    pub fn omega_q(&self) -> f64 {
        self.omega_c + self.delta_q - self.delta_c
    }
}

/// Bath temperature data derived from the occupation at ω_c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BathThermo {
    /// A = ln(1 + 1/n_B) = ω_c / T; infinite at zero temperature.
    pub affinity: f64,
    pub temperature: f64,
}

impl BathThermo {
    pub fn from_occupation(n_bath: f64, omega_c: f64) -> Self {
        if n_bath <= 0.0 {
            return BathThermo {
                affinity: f64::INFINITY,
                temperature: 0.0,
            };
        }
        let affinity = (1.0 / n_bath).ln_1p();
        BathThermo {
            affinity,
            temperature: omega_c / affinity,
        }
    }

    /// Bose occupation at frequency `omega`.
    pub fn occupation_at(&self, omega: f64) -> f64 {
        if self.temperature == 0.0 {
            return 0.0;
        }
        1.0 / (omega / self.temperature).exp_m1()
    }
}

/// Drude-Lorentz spectral density of the original bath.
pub fn drude_lorentz(omega: f64, p: &ModelParams) -> f64 {
    let wc = p.omega_c;
    let num = 4.0 * omega * p.alpha * p.lambda_coupling.powi(2) * wc * wc;
    let den = (omega * omega - wc * wc).powi(2) + (2.0 * PI * p.alpha * wc * omega).powi(2);
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Ohmic spectral density of the residual bath, S_RC(ω) = α ω e^{−ω/Λ}.
pub fn ohmic_residual(omega: f64, p: &ModelParams) -> f64 {
    p.alpha * omega * (-omega / p.cutoff).exp()
}

/// Total excitation number σ₊σ₋ ⊗ 1 + 1 ⊗ a†a.
pub fn excitation_number(trunc: Truncation) -> Operator {
    let q = qubit_ops();
    embed(&q.excited, &identity(trunc.n_max())).expect("qubit factor")
        + embed(&identity(2), &number(trunc)).expect("qubit factor")
}

/// Rotating-frame extended-system Hamiltonian with the coupling term carrying
/// counting phases: λ(e^{iχ/2} a†σ₋ + e^{−iχ/2} σ₊a). `chi = 0` gives the
/// physical Hamiltonian.
pub(crate) fn dressed_hamiltonian(p: &ModelParams, trunc: Truncation, chi: C64) -> Operator {
    let n = trunc.n_max();
    let q = qubit_ops();
    let a = annihilation(trunc);
    let ad = creation(trunc);
    let id_q = identity(2);
    let id_b = identity(n);
    let lift = |x: &Operator, y: &Operator| embed(x, y).expect("qubit factor");

    let forward = (C64::new(0.0, 0.5) * chi).exp();
    let backward = (C64::new(0.0, -0.5) * chi).exp();

    let mut h = lift(&q.excited, &id_b).mapv(|z| z * p.delta_q);
    h = h + lift(&q.sigma_x, &id_b).mapv(|z| z * p.omega_rabi);
    h = h + lift(&id_q, &number(trunc)).mapv(|z| z * p.delta_c);
    h = h + lift(&q.lower, &ad).mapv(|z| z * forward * p.lambda_coupling);
    h = h + lift(&q.raise, &a).mapv(|z| z * backward * p.lambda_coupling);
    h
}

/// Rotating-frame Hamiltonian
/// Δ_q σ₊σ₋ + Ω(σ₊ + σ₋) + Δ_c a†a + λ(σ₊a + σ₋a†).
pub fn extended_hamiltonian(p: &ModelParams, trunc: Truncation) -> Operator {
    dressed_hamiltonian(p, trunc, C64::new(0.0, 0.0))
}
