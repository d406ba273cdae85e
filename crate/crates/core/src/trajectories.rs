//! Quantum-jump unraveling of the master equation into click records, and
//! ensemble estimators of the current and its noise.
//!
//! Between jumps the unnormalized state evolves under
//! H_eff = H − (i/2) Σ_k L_k†L_k. A jump fires when ‖ψ‖² falls to a uniform
//! threshold. No-jump propagators exp(−iH_eff h/2^k) are precomputed for a
//! dyadic ladder of steps, so the jump time is located by a binary descent
//! and all event times are exact multiples of h/2^K.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{dagger, Operator, C64};
use crate::liouville::{Embedding, JumpChannel};
use crate::model::ModelParams;
use crate::numerics::expm;

/// Top-Fock-level population beyond which a trajectory aborts.
pub const TRUNCATION_GUARD: f64 = 1e-6;
const MAX_LEVELS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    /// +1 for emission into the bath, −1 for absorption.
    pub channel: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpRecord {
    pub seed: u64,
    pub index: u64,
    pub t_final: f64,
    pub events: Vec<JumpEvent>,
}

impl JumpRecord {
    /// N(t) = #emissions − #absorptions in (0, t].
    pub fn n_net(&self, t: f64) -> i64 {
        self.events
            .iter()
            .take_while(|e| e.time <= t)
            .map(|e| e.channel as i64)
            .sum()
    }

    /// Net count in (t0, t1].
    pub fn count_between(&self, t0: f64, t1: f64) -> i64 {
        self.events
            .iter()
            .filter(|e| e.time > t0 && e.time <= t1)
            .map(|e| e.channel as i64)
            .sum()
    }

    /// Delays between consecutive clicks after `t_burn`.
    pub fn waiting_times(&self, t_burn: f64) -> Vec<f64> {
        let times: Vec<f64> = self
            .events
            .iter()
            .filter(|e| e.time > t_burn)
            .map(|e| e.time)
            .collect();
        times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    pub n_traj: usize,
    pub j_hat: f64,
    pub j_stderr: f64,
    pub d_hat: f64,
    pub d_stderr: f64,
    pub t_window: f64,
}

/// Precomputed no-jump propagators and jump operators for one parameter point.
pub struct JumpSampler {
    ladder: Vec<Operator>,
    step: f64,
    levels: u32,
    channels: Vec<JumpChannel>,
    /// Indices of the top Fock level in each qubit sector, if truncated.
    top_levels: Vec<usize>,
    dim: usize,
}

impl JumpSampler {
    /// Sampler able to reach `t_final`. The coarse step is about 2/‖H_eff‖.
    pub fn new(emb: &Embedding, p: &ModelParams, t_final: f64) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::param("t_final", "must be positive and finite"));
        }
        let h = emb.hamiltonian(p);
        let channels: Vec<JumpChannel> = emb
            .channels(p)
            .into_iter()
            .filter(|c| c.rate > 0.0)
            .collect();
        let mut h_eff = h.clone();
        for ch in &channels {
            let l = ch.jump_operator();
            h_eff -= &dagger(&l).dot(&l).mapv(|z| z * C64::new(0.0, 0.5));
        }
        let norm = h_eff
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1e-12);
        let step = (2.0 / norm).min(t_final);
        // ticks must fit in u64: t_final/step · 2^levels < 2^63
        let coarse = (t_final / step).ceil() + 1.0;
        let levels = (63 - coarse.log2().ceil() as i64).clamp(1, MAX_LEVELS as i64) as u32;
        let mut ladder = Vec::with_capacity(levels as usize + 1);
        for k in 0..=levels {
            let dt = step / 2f64.powi(k as i32);
            ladder.push(expm(&h_eff.mapv(|z| z * C64::new(0.0, -dt)))?);
        }
        let dim = h.nrows();
        let top_levels = match emb.truncation() {
            Some(t) => vec![t.n_max() - 1, 2 * t.n_max() - 1],
            None => Vec::new(),
        };
        Ok(JumpSampler {
            ladder,
            step,
            levels,
            channels,
            top_levels,
            dim,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn tick_time(&self, ticks: u64) -> f64 {
        ticks as f64 * self.step / 2f64.powi(self.levels as i32)
    }

    fn ticks_for(&self, t: f64) -> u64 {
        (t / self.step * 2f64.powi(self.levels as i32)).round() as u64
    }

    fn guard(&self, psi: &Array1<C64>, t: f64) -> Result<()> {
        if self.top_levels.is_empty() {
            return Ok(());
        }
        let norm = norm_sqr(psi);
        let top: f64 = self.top_levels.iter().map(|&i| psi[i].norm_sqr()).sum();
        let pop = top / norm;
        if pop > TRUNCATION_GUARD {
            log::error!("truncation overflow at t = {t:.3}");
            return Err(Error::TruncationOverflow {
                population: pop,
                limit: TRUNCATION_GUARD,
            });
        }
        Ok(())
    }

    /// One trajectory from |0⟩⊗|0⟩ up to `t_final`, with RNG stream `index`
    /// of the master `seed`. Normalized conditional states are returned at
    /// each of the (sorted) `snapshots` times.
    pub fn sample_with_snapshots(
        &self,
        t_final: f64,
        seed: u64,
        index: u64,
        snapshots: &[f64],
    ) -> Result<(JumpRecord, Vec<Array1<C64>>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut threshold = 1.0 - rng.random::<f64>();
        let mut psi = Array1::<C64>::zeros(self.dim);
        psi[0] = C64::new(1.0, 0.0);

        let end = self.ticks_for(t_final);
        let mut stops: Vec<u64> = snapshots
            .iter()
            .filter(|&&s| s <= t_final)
            .map(|&s| self.ticks_for(s))
            .collect();
        stops.push(end);
        let mut taken = Vec::with_capacity(snapshots.len());
        let mut events = Vec::new();
        let mut now: u64 = 0;

        for (si, &stop) in stops.iter().enumerate() {
            while now < stop {
                let remaining = stop - now;
                let k = (0..=self.levels)
                    .find(|&k| (1u64 << (self.levels - k)) <= remaining)
                    .expect("remaining ≥ 1 tick");
                let cand = self.ladder[k as usize].dot(&psi);
                if norm_sqr(&cand) > threshold {
                    psi = cand;
                    now += 1u64 << (self.levels - k);
                    if k == 0 {
                        self.guard(&psi, self.tick_time(now))?;
                    }
                    continue;
                }
                // a jump fires inside this sub-interval
                for j in k + 1..=self.levels {
                    let c = self.ladder[j as usize].dot(&psi);
                    if norm_sqr(&c) > threshold {
                        psi = c;
                        now += 1u64 << (self.levels - j);
                    }
                }
                psi = self.ladder[self.levels as usize].dot(&psi);
                now += 1;
                let t = self.tick_time(now);
                let weight = self.jump(&mut psi, &mut rng)?;
                events.push(JumpEvent {
                    time: t,
                    channel: weight,
                });
                self.guard(&psi, t)?;
                threshold = 1.0 - rng.random::<f64>();
            }
            if si < stops.len() - 1 {
                let n = norm_sqr(&psi).sqrt();
                taken.push(psi.mapv(|z| z / n));
            }
        }
        Ok((
            JumpRecord {
                seed,
                index,
                t_final: self.tick_time(end),
                events,
            },
            taken,
        ))
    }

    fn jump(&self, psi: &mut Array1<C64>, rng: &mut ChaCha8Rng) -> Result<i8> {
        let candidates: Vec<(Array1<C64>, f64)> = self
            .channels
            .iter()
            .map(|ch| {
                let v = ch.operator.dot(&*psi);
                let w = ch.rate * norm_sqr(&v);
                (v, w)
            })
            .collect();
        let total: f64 = candidates.iter().map(|c| c.1).sum();
        if total <= 0.0 {
            return Err(Error::param("state", "no jump channel can fire"));
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = candidates.len() - 1;
        for (i, c) in candidates.iter().enumerate() {
            if pick < c.1 {
                chosen = i;
                break;
            }
            pick -= c.1;
        }
        // skip channels with zero weight that a rounding edge might select
        while candidates[chosen].1 == 0.0 && chosen > 0 {
            chosen -= 1;
        }
        let (v, _) = &candidates[chosen];
        let n = norm_sqr(v).sqrt();
        *psi = v.mapv(|z| z / n);
        debug_assert!((norm_sqr(psi) - 1.0).abs() < 1e-12);
        Ok(self.channels[chosen].weight)
    }

    pub fn sample(&self, t_final: f64, seed: u64, index: u64) -> Result<JumpRecord> {
        Ok(self.sample_with_snapshots(t_final, seed, index, &[])?.0)
    }

    /// `n_traj` independent trajectories on streams 0..n_traj, in index order.
    pub fn sample_ensemble(&self, t_final: f64, seed: u64, n_traj: usize) -> Result<Vec<JumpRecord>> {
        (0..n_traj as u64)
            .into_par_iter()
            .map(|i| self.sample(t_final, seed, i))
            .collect()
    }

    /// Ensemble average of |ψ⟩⟨ψ| at the given times.
    pub fn average_state(
        &self,
        times: &[f64],
        seed: u64,
        n_traj: usize,
    ) -> Result<Vec<Operator>> {
        let t_final = times.iter().copied().fold(0.0, f64::max);
        let per: Vec<Vec<Array1<C64>>> = (0..n_traj as u64)
            .into_par_iter()
            .map(|i| Ok(self.sample_with_snapshots(t_final, seed, i, times)?.1))
            .collect::<Result<_>>()?;
        let mut out = vec![Array2::<C64>::zeros((self.dim, self.dim)); times.len()];
        for states in &per {
            for (acc, psi) in out.iter_mut().zip(states) {
                for ((i, j), z) in acc.indexed_iter_mut() {
                    *z += psi[i] * psi[j].conj();
                }
            }
        }
        let w = 1.0 / n_traj as f64;
        Ok(out.into_iter().map(|m| m.mapv(|z| z * w)).collect())
    }
}

fn norm_sqr(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// One trajectory of the extended-system model.
pub fn sample_trajectory(
    p: &ModelParams,
    trunc: crate::hilbert::Truncation,
    t_final: f64,
    seed: u64,
) -> Result<JumpRecord> {
    JumpSampler::new(&Embedding::ReactionCoordinate(trunc), p, t_final)?.sample(t_final, seed, 0)
}

pub const MIN_RECORDS: usize = 100;
pub const BATCHES: usize = 20;

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn batch_stderr(values: &[f64]) -> f64 {
    let (_, v) = mean_var(values);
    (v / values.len() as f64).sqrt()
}

/// J and D from the increments N(t_final) − N(t_burn) across records.
/// Standard errors come from 20 contiguous batches.
pub fn estimate_cumulants(records: &[JumpRecord], t_burn: f64) -> Result<EnsembleEstimate> {
    if records.len() < MIN_RECORDS {
        return Err(Error::InsufficientRecords {
            needed: MIN_RECORDS,
            got: records.len(),
        });
    }
    let t_final = records[0].t_final;
    if records.iter().any(|r| r.t_final != t_final) {
        return Err(Error::param("records", "records must share t_final"));
    }
    if !(t_burn >= 0.0 && t_burn < t_final / 2.0) {
        return Err(Error::param("t_burn", "must lie in [0, t_final/2)"));
    }
    let w = t_final - t_burn;
    let inc: Vec<f64> = records
        .iter()
        .map(|r| r.count_between(t_burn, t_final) as f64)
        .collect();
    let (m, v) = mean_var(&inc);
    let size = inc.len() / BATCHES;
    let (mut jb, mut db) = (Vec::new(), Vec::new());
    for b in inc.chunks(size).take(BATCHES) {
        let (bm, bv) = mean_var(b);
        jb.push(bm / w);
        db.push(bv / w);
    }
    Ok(EnsembleEstimate {
        n_traj: records.len(),
        j_hat: m / w,
        j_stderr: batch_stderr(&jb),
        d_hat: v / w,
        d_stderr: batch_stderr(&db),
        t_window: w,
    })
}

/// Estimates from one long record split into `batches` equal windows after
/// `t_burn`. Valid when each window is long compared with the correlation time.
pub fn estimate_from_single_record(
    record: &JumpRecord,
    t_burn: f64,
    batches: usize,
) -> Result<EnsembleEstimate> {
    if batches < 2 {
        return Err(Error::InsufficientRecords {
            needed: 2,
            got: batches,
        });
    }
    if !(t_burn >= 0.0 && t_burn < record.t_final / 2.0) {
        return Err(Error::param("t_burn", "must lie in [0, t_final/2)"));
    }
    let len = (record.t_final - t_burn) / batches as f64;
    let counts: Vec<f64> = (0..batches)
        .map(|b| {
            let a = t_burn + b as f64 * len;
            record.count_between(a, a + len) as f64
        })
        .collect();
    let (m, v) = mean_var(&counts);
    Ok(EnsembleEstimate {
        n_traj: 1,
        j_hat: m / len,
        j_stderr: (v / batches as f64).sqrt() / len,
        d_hat: v / len,
        // normal-theory standard error of a sample variance
        d_stderr: v * (2.0 / (batches as f64 - 1.0)).sqrt() / len,
        t_window: record.t_final - t_burn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Truncation;

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

    #[test]
    fn record_counting_helpers() {
        let r = JumpRecord {
            seed: 0,
            index: 0,
            t_final: 10.0,
            events: vec![
                JumpEvent { time: 1.0, channel: 1 },
                JumpEvent { time: 2.0, channel: -1 },
                JumpEvent { time: 5.0, channel: 1 },
                JumpEvent { time: 7.5, channel: 1 },
            ],
        };
        assert_eq!(r.n_net(10.0), 2);
        assert_eq!(r.n_net(2.0), 0);
        assert_eq!(r.count_between(1.0, 7.5), 1);
        assert_eq!(r.waiting_times(1.5), vec![3.0, 2.5]);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = driven();
        let a = sample_trajectory(&p, t(8), 2000.0, 42).unwrap();
        let b = sample_trajectory(&p, t(8), 2000.0, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&p, t(8), 2000.0, 43).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn events_strictly_increasing_and_counted() {
        let p = driven();
        let r = sample_trajectory(&p, t(8), 5000.0, 7).unwrap();
        assert!(!r.events.is_empty());
        assert!(r.events[0].time > 0.0);
        assert!(r.events.windows(2).all(|w| w[1].time > w[0].time));
        assert!(r.events.last().unwrap().time <= r.t_final);
        let plus = r.events.iter().filter(|e| e.channel == 1).count() as i64;
        let minus = r.events.iter().filter(|e| e.channel == -1).count() as i64;
        assert_eq!(r.n_net(r.t_final), plus - minus);
    }

    #[test]
    fn vacuum_cannot_emit_first() {
        let p = ModelParams {
            lambda_coupling: 0.0,
            omega_rabi: 0.02,
            n_bath: 0.01,
            ..driven()
        };
        for seed in 0..5 {
            let r = sample_trajectory(&p, t(6), 4000.0, seed).unwrap();
            if let Some(first) = r.events.first() {
                assert_eq!(first.channel, -1);
            }
        }
    }

    #[test]
    fn zero_temperature_never_absorbs() {
        let p = ModelParams {
            n_bath: 0.0,
            ..driven()
        };
        let r = sample_trajectory(&p, t(8), 5000.0, 1).unwrap();
        assert!(!r.events.is_empty());
        assert!(r.events.iter().all(|e| e.channel == 1));
    }

    #[test]
    fn truncation_guard_trips() {
        // strong resonant drive pumps the mode far beyond two levels
        let p = ModelParams {
            omega_rabi: 0.2,
            lambda_coupling: 0.3,
            ..driven()
        };
        let err = sample_trajectory(&p, t(2), 2000.0, 3).unwrap_err();
        assert!(matches!(err, Error::TruncationOverflow { .. }));
    }

    #[test]
    fn estimator_preconditions() {
        let r = JumpRecord {
            seed: 0,
            index: 0,
            t_final: 10.0,
            events: vec![],
        };
        let few = vec![r.clone(); 10];
        assert!(matches!(
            estimate_cumulants(&few, 1.0),
            Err(Error::InsufficientRecords { .. })
        ));
        let many = vec![r; 100];
        assert!(estimate_cumulants(&many, 6.0).is_err());
        let e = estimate_cumulants(&many, 1.0).unwrap();
        assert_eq!(e.j_hat, 0.0);
        assert_eq!(e.t_window, 9.0);
    }

    #[test]
    fn weak_coupling_sampler_runs() {
        let p = ModelParams {
            alpha: 1.0,
            ..driven()
        };
        let s = JumpSampler::new(&Embedding::WeakCoupling, &p, 3000.0).unwrap();
        let r = s.sample(3000.0, 11, 0).unwrap();
        assert!(r.events.windows(2).all(|w| w[1].time > w[0].time));
    }
}
