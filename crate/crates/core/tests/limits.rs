//! Analytic limits of the extended-system model.

use rcfcs::fcs::{analyze, FcsOptions};
use rcfcs::liouville::Embedding;
use rcfcs::model::ModelParams;
use rcfcs::sweep::auto_truncate;

/// A strongly damped mode (γ ≫ λ) can be eliminated adiabatically: the qubit
/// then decays at Γ = 4λ²/γ and behaves as a resonantly driven two-level
/// emitter, with J = ΓΩ_R²/(Γ² + 2Ω_R²) and Fano factor
/// 1 − 6Ω_R²Γ²/(Γ² + 2Ω_R²)², where Ω_R = 2Ω.
#[test]
fn strongly_damped_mode_gives_resonance_fluorescence() {
    for lam in [0.01, 0.03, 0.06, 0.1] {
        let p = ModelParams {
            alpha: 1.0,
            n_bath: 1e-4,
            lambda_coupling: lam,
            ..Default::default()
        };
        let emb = Embedding::ReactionCoordinate(auto_truncate(&p).unwrap().truncation);
        let (_, f) = analyze(&emb, &p, &FcsOptions::default()).unwrap();
        let gam = 4.0 * lam * lam / p.gamma();
        let wr = 2.0 * p.omega_rabi;
        let s = gam * gam + 2.0 * wr * wr;
        let j = gam * wr * wr / s;
        let fano = 1.0 - 6.0 * wr * wr * gam * gam / (s * s);
        assert!((f.current_j - j).abs() < 0.015 * j, "λ={lam}: {} vs {j}", f.current_j);
        let measured = f.noise_d / f.current_j;
        assert!((measured - fano).abs() < 0.015, "λ={lam}: {measured} vs {fano}");
    }
}

/// The same limit puts the current maximum at Γ = √2 Ω_R, which lies inside
/// [0.005, 0.1] for Ω = 0.005, and drives 𝒬 below 2 near that point.
#[test]
fn strongly_damped_current_turns_over() {
    let params = |lam: f64| ModelParams {
        alpha: 1.0,
        lambda_coupling: lam,
        ..Default::default()
    };
    let run = |lam: f64| {
        let p = params(lam);
        let emb = Embedding::ReactionCoordinate(auto_truncate(&p).unwrap().truncation);
        analyze(&emb, &p, &FcsOptions::default()).unwrap().1
    };
    let p = params(0.0);
    let omega_r = 2.0 * p.omega_rabi;
    let lam_peak = (2f64.sqrt() * omega_r * p.gamma() / 4.0).sqrt();
    let (lo, mid, hi) = (run(0.03), run(lam_peak), run(0.1));
    assert!(mid.current_j > lo.current_j && mid.current_j > hi.current_j);
    assert!(mid.tur_q.unwrap() < 2.0);
}
