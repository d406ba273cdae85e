//! Parameter sweeps over one model axis, with automatic Fock truncation and
//! a flat tabular result per grid point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{
    correlation_function, default_tau_grid, zero_delay, CorrelationTrace,
};
use crate::error::{Error, Result};
use crate::fcs::{
    average_current, dynamical_activity, fd_cumulants, noise_with_solver, AffinityConvention,
    FcsResult, NoiseMethod, DEFAULT_FD_STEP,
};
use crate::hilbert::Truncation;
use crate::liouville::{CountingCut, Embedding};
use crate::model::ModelParams;
use crate::nonclassical::{reduce_rc, report, NonclassicalityReport};
use crate::spectral::{spectrum_top, steady_state, DrazinSolver, SteadyState};
use crate::trajectories::{estimate_cumulants, EnsembleEstimate, JumpSampler, MIN_RECORDS};

pub const AUTO_START: usize = 8;
pub const AUTO_STEP: usize = 4;
pub const AUTO_CAP: usize = 40;
/// Bound on each of the two highest Fock populations.
pub const AUTO_POPULATION_TOL: f64 = 1e-8;
/// Bound on the relative change of J under n_max → n_max + 4.
pub const AUTO_CURRENT_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AutoTruncation {
    pub truncation: Truncation,
    /// Largest of the two highest Fock populations.
    pub top_population: f64,
    /// |J(n+4) − J(n)| / max(|J(n)|, 1e−6 K(n)).
    pub current_shift: f64,
    pub steady: SteadyState,
}

struct Probe {
    steady: SteadyState,
    j: f64,
    k: f64,
    top: f64,
}

fn probe(p: &ModelParams, n: usize) -> Result<Probe> {
    let t = Truncation::new(n)?;
    let emb = Embedding::ReactionCoordinate(t);
    let steady = steady_state(&emb.generator(p))?;
    let channels = emb.channels(p);
    let rc = reduce_rc(&steady.rho, t)?;
    let top = (n - 2..n)
        .map(|i| rc.rho_rc[[i, i]].re.abs())
        .fold(0.0, f64::max);
    Ok(Probe {
        j: average_current(&steady.rho, &channels),
        k: dynamical_activity(&steady.rho, &channels),
        top,
        steady,
    })
}

/// Search range of [`auto_truncate_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncationSearch {
    pub start: usize,
    pub step: usize,
    pub cap: usize,
}

impl Default for TruncationSearch {
    fn default() -> Self {
        TruncationSearch {
            start: AUTO_START,
            step: AUTO_STEP,
            cap: AUTO_CAP,
        }
    }
}

/// Smallest n_max in 8, 12, …, 40 whose two highest Fock populations stay
/// below 1e−8 and whose current moves by less than 1e−8 relative at n_max + 4.
///
/// The relative shift uses max(|J|, 1e−6 K) as denominator so that an
/// equilibrium point with J ≈ 0 is judged against the jump rate.
pub fn auto_truncate(p: &ModelParams) -> Result<AutoTruncation> {
    auto_truncate_with(p, TruncationSearch::default())
}

pub fn auto_truncate_with(p: &ModelParams, search: TruncationSearch) -> Result<AutoTruncation> {
    p.validate()?;
    let TruncationSearch { start, step, cap } = search;
    if start < 2 || step == 0 || start + step > cap {
        return Err(Error::param("search", "need 2 ≤ start and start + step ≤ cap"));
    }
    let mut cur = probe(p, start)?;
    let mut n = start;
    while n + step <= cap {
        let next = probe(p, n + step)?;
        let scale = cur.j.abs().max(1e-6 * cur.k).max(f64::MIN_POSITIVE);
        let shift = (next.j - cur.j).abs() / scale;
        if cur.top < AUTO_POPULATION_TOL && shift < AUTO_CURRENT_TOL {
            return Ok(AutoTruncation {
                truncation: Truncation::new(n)?,
                top_population: cur.top,
                current_shift: shift,
                steady: cur.steady,
            });
        }
        log::debug!(
            "n_max {n} rejected: top population {:.2e}, current shift {shift:.2e}",
            cur.top
        );
        cur = next;
        n += step;
    }
    Err(Error::TruncationNotConverged(cap))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    LambdaCoupling,
    OmegaRabi,
    NBath,
    Alpha,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::LambdaCoupling => "lambda_coupling",
            Axis::OmegaRabi => "omega_rabi",
            Axis::NBath => "n_bath",
            Axis::Alpha => "alpha",
        }
    }

    pub fn set(self, p: &mut ModelParams, value: f64) {
        match self {
            Axis::LambdaCoupling => p.lambda_coupling = value,
            Axis::OmegaRabi => p.omega_rabi = value,
            Axis::NBath => p.n_bath = value,
            Axis::Alpha => p.alpha = value,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Explicit values, or `points` values from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Grid {
    Values {
        values: Vec<f64>,
    },
    Range {
        start: f64,
        stop: f64,
        points: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Values { values } => values.clone(),
            Grid::Range {
                start,
                stop,
                points,
                spacing,
            } => {
                let (a, b) = match spacing {
                    Spacing::Linear => (*start, *stop),
                    Spacing::Log => {
                        if !(*start > 0.0 && *stop > 0.0) {
                            return Err(Error::InvalidSpec(
                                "log spacing needs positive endpoints".into(),
                            ));
                        }
                        (start.ln(), stop.ln())
                    }
                };
                let m = *points;
                let mut out: Vec<f64> = (0..m)
                    .map(|i| {
                        if m == 1 {
                            a
                        } else {
                            a + (b - a) * i as f64 / (m - 1) as f64
                        }
                    })
                    .collect();
                if *spacing == Spacing::Log {
                    out.iter_mut().for_each(|x| *x = x.exp());
                }
                // pin endpoints against rounding
                if let Some(first) = out.first_mut() {
                    *first = *start;
                }
                if m > 1 {
                    out[m - 1] = *stop;
                }
                out
            }
        };
        if v.is_empty() {
            return Err(Error::InvalidSpec("grid is empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("grid has non-finite values".into()));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("grid must be strictly increasing".into()));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Qubit plus reaction-coordinate mode.
    #[default]
    Rc,
    /// Qubit with weak-coupling rates, as a classical benchmark.
    Weak,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum AutoKeyword {
    Auto,
}

/// Fixed Fock truncation or `"auto"`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruncationSpec {
    Fixed(usize),
    #[default]
    #[serde(with = "auto_keyword")]
    Auto,
}

mod auto_keyword {
    use super::AutoKeyword;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        AutoKeyword::Auto.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        AutoKeyword::deserialize(d).map(|_| ())
    }
}

/// Overrides applied to the base parameters for one curve of a sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_rabi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bath: Option<f64>,
}

impl Family {
    fn apply(&self, base: &ModelParams) -> ModelParams {
        let mut p = *base;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.delta_q, self.delta_q);
        set(&mut p.delta_c, self.delta_c);
        set(&mut p.omega_rabi, self.omega_rabi);
        set(&mut p.lambda_coupling, self.lambda_coupling);
        set(&mut p.alpha, self.alpha);
        set(&mut p.n_bath, self.n_bath);
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationOutput {
    #[serde(default = "default_corr_points")]
    pub points: usize,
    /// Last delay in units of 1/γ.
    #[serde(default = "default_corr_tmax")]
    pub t_max_gamma: f64,
}

fn default_corr_points() -> usize {
    400
}

fn default_corr_tmax() -> f64 {
    50.0
}

impl Default for CorrelationOutput {
    fn default() -> Self {
        CorrelationOutput {
            points: default_corr_points(),
            t_max_gamma: default_corr_tmax(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryOutput {
    pub n: usize,
    pub seed: u64,
    /// Counting window in units of 1/γ.
    #[serde(default = "default_window")]
    pub t_window_gamma: f64,
    /// Discarded transient in units of 1/γ.
    #[serde(default = "default_burn")]
    pub t_burn_gamma: f64,
}

fn default_window() -> f64 {
    500.0
}

fn default_burn() -> f64 {
    50.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// J, K, D, SNR, 𝒬, entropy rate, D/J², D − K and C(0).
    #[serde(default = "yes")]
    pub cumulants: bool,
    /// Adds D from both the CGF and the Drazin solve, whatever the main method.
    #[serde(default)]
    pub noise_cross_check: bool,
    /// Number of nonzero eigenvalues θ₁..θ_k to report.
    #[serde(default)]
    pub spectrum_k: usize,
    #[serde(default)]
    pub correlation: Option<CorrelationOutput>,
    #[serde(default)]
    pub nonclassicality: bool,
    #[serde(default)]
    pub trajectories: Option<TrajectoryOutput>,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            cumulants: true,
            noise_cross_check: false,
            spectrum_k: 0,
            correlation: None,
            nonclassicality: false,
            trajectories: None,
        }
    }
}

/// A complete sweep description, normally read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base: ModelParams,
    pub axis: Axis,
    pub grid: Grid,
    #[serde(default)]
    pub model: ModelKind,
    /// Curves sharing the grid. Empty means one curve from `base`.
    #[serde(default)]
    pub families: Vec<Family>,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_method")]
    pub noise_method: NoiseMethod,
    #[serde(default = "default_cut")]
    pub cut: CountingCut,
    #[serde(default)]
    pub affinity: AffinityConvention,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

fn default_method() -> NoiseMethod {
    NoiseMethod::Drazin
}

fn default_cut() -> CountingCut {
    CountingCut::Dissipator
}

impl SweepSpec {
    /// Single-curve spec with default outputs.
    pub fn new(base: ModelParams, axis: Axis, grid: Grid) -> Self {
        SweepSpec {
            name: None,
            base,
            axis,
            grid,
            model: ModelKind::Rc,
            families: Vec::new(),
            truncation: TruncationSpec::Auto,
            fd_step: DEFAULT_FD_STEP,
            noise_method: NoiseMethod::Drazin,
            cut: CountingCut::Dissipator,
            affinity: AffinityConvention::Thermodynamic,
            outputs: Outputs::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.values()?;
        if !(1e-4..=1e-2).contains(&self.fd_step) {
            return Err(Error::InvalidSpec(format!(
                "fd_step {} outside [1e-4, 1e-2]",
                self.fd_step
            )));
        }
        if let TruncationSpec::Fixed(n) = self.truncation {
            Truncation::new(n)?;
        }
        let mut labels: Vec<&str> = self.families.iter().map(|f| f.label.as_str()).collect();
        if labels.iter().any(|l| l.is_empty()) {
            return Err(Error::InvalidSpec("family labels must be nonempty".into()));
        }
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("family labels must be unique".into()));
        }
        if self.noise_method == NoiseMethod::Trajectory && self.outputs.trajectories.is_none() {
            return Err(Error::InvalidSpec(
                "trajectory noise needs an [outputs.trajectories] table".into(),
            ));
        }
        if let Some(c) = self.outputs.correlation {
            if c.points < 2 || !(c.t_max_gamma > 0.0) {
                return Err(Error::InvalidSpec(
                    "correlation needs at least 2 points and t_max_gamma > 0".into(),
                ));
            }
        }
        if let Some(t) = self.outputs.trajectories {
            if t.n < MIN_RECORDS {
                return Err(Error::InvalidSpec(format!(
                    "trajectories.n must be at least {MIN_RECORDS}"
                )));
            }
            if !(t.t_window_gamma > 0.0 && t.t_burn_gamma >= 0.0 && t.t_burn_gamma < t.t_window_gamma)
            {
                return Err(Error::InvalidSpec(
                    "trajectory burn-in must be shorter than the window".into(),
                ));
            }
        }
        Ok(())
    }

    fn curves(&self) -> Vec<Family> {
        if self.families.is_empty() {
            vec![Family {
                label: "base".into(),
                ..Default::default()
            }]
        } else {
            self.families.clone()
        }
    }

    /// Point list in output order: families outer, grid inner.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let grid = self.grid.values()?;
        let mut out = Vec::new();
        for fam in self.curves() {
            for &v in &grid {
                let mut p = fam.apply(&self.base);
                self.axis.set(&mut p, v);
                out.push(SweepPoint {
                    index: out.len(),
                    family: fam.label.clone(),
                    model: fam.model.unwrap_or(self.model),
                    axis_value: v,
                    params: p,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub family: String,
    pub model: ModelKind,
    pub axis_value: f64,
    pub params: ModelParams,
}

/// Everything computed at one point. Fields are absent when not requested or
/// not defined for the model.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PointValues {
    pub n_max: Option<usize>,
    pub top_population: Option<f64>,
    pub residual_norm: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub fcs: Option<FcsResult>,
    pub d_over_j2: Option<f64>,
    pub d_minus_k: Option<f64>,
    pub c0: Option<f64>,
    pub noise_fd: Option<f64>,
    pub noise_drazin: Option<f64>,
    /// θ₁..θ_k, sorted by descending real part.
    pub spectrum: Vec<num_complex::Complex64>,
    pub nonclassical: Option<NonclassicalityReport>,
    pub trajectory: Option<EnsembleEstimate>,
    pub correlation_integral: Option<f64>,
    pub correlation_tail: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub point: SweepPoint,
    pub values: Option<PointValues>,
    pub error: Option<String>,
    #[serde(skip)]
    pub correlation: Option<CorrelationTrace>,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<ResultRow>,
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

impl SweepTable {
    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    /// Column names; the set depends on the requested outputs only.
    pub fn header(&self) -> Vec<String> {
        let o = &self.spec.outputs;
        let mut h: Vec<String> = [
            "index",
            "family",
            "model",
            "axis",
            "axis_value",
            "delta_q",
            "delta_c",
            "omega_rabi",
            "lambda_coupling",
            "alpha",
            "omega_c",
            "cutoff",
            "n_bath",
            "n_max",
            "top_population",
            "residual_norm",
            "trace_error",
            "min_eigenvalue",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if o.cumulants {
            for c in [
                "current_j",
                "activity_k",
                "noise_d",
                "noise_method",
                "snr",
                "tur_q",
                "entropy_rate",
                "d_over_j2",
                "d_minus_k",
                "c0",
            ] {
                h.push(c.into());
            }
        }
        if o.noise_cross_check {
            h.push("noise_fd".into());
            h.push("noise_drazin".into());
        }
        for i in 1..=o.spectrum_k {
            h.push(format!("re_theta{i}"));
            h.push(format!("im_theta{i}"));
        }
        if o.correlation.is_some() {
            h.push("corr_integral".into());
            h.push("corr_tail_bound".into());
        }
        if o.nonclassicality {
            for c in ["g2_zero", "delta_g", "l1_coherence", "nu", "mean_n"] {
                h.push(c.into());
            }
        }
        if o.trajectories.is_some() {
            for c in ["traj_j", "traj_j_stderr", "traj_d", "traj_d_stderr"] {
                h.push(c.into());
            }
        }
        h.push("error".into());
        h
    }

    /// One record per row, aligned with [`SweepTable::header`].
    pub fn records(&self) -> Vec<Vec<String>> {
        let width = self.header().len();
        self.rows
            .iter()
            .map(|r| {
                let rec = self.record(r);
                debug_assert_eq!(rec.len(), width);
                rec
            })
            .collect()
    }

    fn record(&self, r: &ResultRow) -> Vec<String> {
        let o = &self.spec.outputs;
        let pt = &r.point;
        let p = &pt.params;
        let mut rec = vec![
            pt.index.to_string(),
            pt.family.clone(),
            match pt.model {
                ModelKind::Rc => "rc".into(),
                ModelKind::Weak => "weak".into(),
            },
            self.spec.axis.name().into(),
            fmt(pt.axis_value),
            fmt(p.delta_q),
            fmt(p.delta_c),
            fmt(p.omega_rabi),
            fmt(p.lambda_coupling),
            fmt(p.alpha),
            fmt(p.omega_c),
            fmt(p.cutoff),
            fmt(p.n_bath),
        ];
        let empty = PointValues::default();
        let v = r.values.as_ref();
        let vals = v.unwrap_or(&empty);
        rec.push(vals.n_max.map(|n| n.to_string()).unwrap_or_default());
        rec.push(opt(vals.top_population));
        for x in [vals.residual_norm, vals.trace_error, vals.min_eigenvalue] {
            rec.push(if v.is_some() { fmt(x) } else { String::new() });
        }
        if o.cumulants {
            match &vals.fcs {
                Some(f) => {
                    rec.push(fmt(f.current_j));
                    rec.push(fmt(f.activity_k));
                    rec.push(fmt(f.noise_d));
                    rec.push(
                        match f.noise_method {
                            NoiseMethod::Drazin => "drazin",
                            NoiseMethod::FdCgf => "fd_cgf",
                            NoiseMethod::Trajectory => "trajectory",
                        }
                        .into(),
                    );
                    rec.push(opt(f.snr));
                    rec.push(opt(f.tur_q));
                    rec.push(fmt(f.entropy_rate));
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 7)),
            }
            rec.push(opt(vals.d_over_j2));
            rec.push(opt(vals.d_minus_k));
            rec.push(opt(vals.c0));
        }
        if o.noise_cross_check {
            rec.push(opt(vals.noise_fd));
            rec.push(opt(vals.noise_drazin));
        }
        for i in 0..o.spectrum_k {
            match vals.spectrum.get(i) {
                Some(z) => {
                    rec.push(fmt(z.re));
                    rec.push(fmt(z.im));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        if o.correlation.is_some() {
            rec.push(opt(vals.correlation_integral));
            rec.push(opt(vals.correlation_tail));
        }
        if o.nonclassicality {
            match &vals.nonclassical {
                Some(n) => {
                    rec.push(opt(n.g2_zero));
                    rec.push(fmt(n.delta_g));
                    rec.push(fmt(n.l1_coherence));
                    rec.push(fmt(n.symplectic_nu));
                    rec.push(fmt(n.mean_n));
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        if o.trajectories.is_some() {
            match &vals.trajectory {
                Some(t) => {
                    rec.extend([t.j_hat, t.j_stderr, t.d_hat, t.d_stderr].map(fmt));
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        rec.push(r.error.clone().unwrap_or_default().replace(['\n', '\r'], " "));
        rec
    }
}

/// Evaluates one point. Used by [`run_sweep`] and usable on its own.
pub fn evaluate_point(
    spec: &SweepSpec,
    point: &SweepPoint,
) -> Result<(PointValues, Option<CorrelationTrace>)> {
    let p = &point.params;
    p.validate()?;
    let o = &spec.outputs;
    let mut out = PointValues::default();

    let (emb, steady) = match point.model {
        ModelKind::Weak => {
            let emb = Embedding::WeakCoupling;
            let ss = steady_state(&emb.generator(p))?;
            (emb, ss)
        }
        ModelKind::Rc => match spec.truncation {
            TruncationSpec::Auto => {
                let a = auto_truncate(p)?;
                (Embedding::ReactionCoordinate(a.truncation), a.steady)
            }
            TruncationSpec::Fixed(n) => {
                let emb = Embedding::ReactionCoordinate(Truncation::new(n)?);
                let ss = steady_state(&emb.generator(p))?;
                (emb, ss)
            }
        },
    };
    out.residual_norm = steady.residual_norm;
    out.trace_error = steady.trace_error;
    out.min_eigenvalue = steady.min_eigenvalue;
    let rc = match emb.truncation() {
        Some(t) => {
            out.n_max = Some(t.n_max());
            let rc = reduce_rc(&steady.rho, t)?;
            out.top_population = Some(rc.top_population());
            Some(rc)
        }
        None => None,
    };

    let g = emb.generator(p);
    let channels = emb.channels(p);
    let rho = &steady.rho;

    let needs_drazin = o.cumulants || o.noise_cross_check;
    let solver = if needs_drazin {
        Some(DrazinSolver::new(&g, rho)?)
    } else {
        None
    };
    let d_drazin = match &solver {
        Some(s) => Some(noise_with_solver(s, rho, &channels)?),
        None => None,
    };
    let d_fd = if o.noise_cross_check || spec.noise_method == NoiseMethod::FdCgf {
        Some(fd_cumulants(&emb, p, spec.cut, spec.fd_step)?.noise)
    } else {
        None
    };
    if o.noise_cross_check {
        out.noise_fd = d_fd;
        out.noise_drazin = d_drazin;
    }

    if let Some(t) = o.trajectories {
        let gamma = p.gamma();
        let t_burn = t.t_burn_gamma / gamma;
        let t_final = t_burn + t.t_window_gamma / gamma;
        let sampler = JumpSampler::new(&emb, p, t_final)?;
        let seed = t.seed.wrapping_add(point.index as u64);
        let records = sampler.sample_ensemble(t_final, seed, t.n)?;
        out.trajectory = Some(estimate_cumulants(&records, t_burn)?);
    }

    if o.cumulants {
        let j = average_current(rho, &channels);
        let k = dynamical_activity(rho, &channels);
        let d_exact = d_drazin.expect("solver built for cumulants");
        let d = match spec.noise_method {
            NoiseMethod::Drazin => d_exact,
            NoiseMethod::FdCgf => d_fd.expect("fd noise computed"),
            NoiseMethod::Trajectory => out.trajectory.expect("validated").d_hat,
        };
        let fcs = FcsResult::new(j, k, d, spec.noise_method, p, spec.affinity);
        out.d_over_j2 = (j != 0.0).then(|| d / (j * j)).filter(|x| x.is_finite());
        out.d_minus_k = Some(d_exact - k);
        out.c0 = Some(zero_delay(rho, &channels));
        out.fcs = Some(fcs);
    }

    if o.spectrum_k > 0 {
        let s = spectrum_top(&g, o.spectrum_k)?;
        out.spectrum = s.eigenvalues.into_iter().skip(1).collect();
    }

    let trace = match o.correlation {
        Some(c) => {
            let gamma = p.gamma();
            let taus = default_tau_grid(gamma, c.t_max_gamma / gamma, c.points);
            let tr = correlation_function(&g, rho, &channels, &taus)?;
            out.correlation_integral = Some(tr.integral);
            out.correlation_tail = Some(tr.tail_bound);
            Some(tr)
        }
        None => None,
    };

    if o.nonclassicality {
        if let Some(rc) = &rc {
            out.nonclassical = Some(report(rc)?);
        }
    }
    Ok((out, trace))
}

/// Runs every point in parallel; rows come back in point order. A failing
/// point keeps its parameters and carries the error message.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let points = spec.points()?;
    let rows = points
        .into_par_iter()
        .map(|pt| match evaluate_point(spec, &pt) {
            Ok((values, correlation)) => ResultRow {
                point: pt,
                values: Some(values),
                error: None,
                correlation,
            },
            Err(e) => {
                log::warn!("point {} ({}) failed: {e}", pt.index, pt.family);
                ResultRow {
                    point: pt,
                    values: None,
                    error: Some(e.to_string()),
                    correlation: None,
                }
            }
        })
        .collect();
    Ok(SweepTable {
        spec: spec.clone(),
        rows,
    })
}
