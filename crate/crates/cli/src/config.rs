//! Run configuration: TOML files resolved against command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rcfcs::fcs::{AffinityConvention, FcsOptions, NoiseMethod, DEFAULT_FD_STEP};
use rcfcs::liouville::CountingCut;
use rcfcs::model::ModelParams;
use rcfcs::sweep::{CorrelationOutput, ModelKind, SweepSpec, TrajectoryOutput, TruncationSpec};

/// Parses a snake_case enum value through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

pub fn parse_truncation(s: &str) -> Result<TruncationSpec, String> {
    if s == "auto" {
        return Ok(TruncationSpec::Auto);
    }
    s.parse()
        .map(TruncationSpec::Fixed)
        .map_err(|_| format!("expected \"auto\" or a Fock-space size, got {s:?}"))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Single-point configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default = "default_method")]
    pub noise_method: NoiseMethod,
    #[serde(default = "default_cut")]
    pub cut: CountingCut,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default)]
    pub affinity: AffinityConvention,
    #[serde(default)]
    pub correlation: CorrelationOutput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<TrajectoryOutput>,
}

fn default_method() -> NoiseMethod {
    NoiseMethod::Drazin
}

fn default_cut() -> CountingCut {
    CountingCut::Dissipator
}

fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

impl Default for PointConfig {
    fn default() -> Self {
        PointConfig {
            params: ModelParams::default(),
            model: ModelKind::Rc,
            truncation: TruncationSpec::Auto,
            noise_method: default_method(),
            cut: default_cut(),
            fd_step: DEFAULT_FD_STEP,
            affinity: AffinityConvention::default(),
            correlation: CorrelationOutput::default(),
            trajectories: None,
        }
    }
}

impl PointConfig {
    pub fn fcs_options(&self) -> FcsOptions {
        FcsOptions {
            method: self.noise_method,
            cut: self.cut,
            fd_step: self.fd_step,
            affinity: self.affinity,
        }
    }
}

/// Model and solver flags shared by the single-point subcommands. Each flag
/// overrides the matching key of `--config`.
#[derive(Args, Debug, Clone, Default)]
pub struct PointArgs {
    /// TOML file with a [params] table and optional solver keys.
    #[arg(long, short = 'c')]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_rabi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub n_bath: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub cutoff: Option<f64>,
    /// "rc" or "weak".
    #[arg(long, value_parser = parse_enum::<ModelKind>)]
    pub model: Option<ModelKind>,
    /// "auto" or a fixed Fock-space size.
    #[arg(long, value_parser = parse_truncation)]
    pub truncation: Option<TruncationSpec>,
    /// "drazin", "fd_cgf" or "trajectory".
    #[arg(long, value_parser = parse_enum::<NoiseMethod>)]
    pub noise_method: Option<NoiseMethod>,
    /// "dissipator" or "hamiltonian".
    #[arg(long, value_parser = parse_enum::<CountingCut>)]
    pub cut: Option<CountingCut>,
    #[arg(long, allow_negative_numbers = true)]
    pub fd_step: Option<f64>,
    /// "thermodynamic" or "literal".
    #[arg(long, value_parser = parse_enum::<AffinityConvention>)]
    pub affinity: Option<AffinityConvention>,
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl PointArgs {
    pub fn resolve(&self) -> Result<PointConfig> {
        let mut c = match &self.config {
            Some(path) => read_toml(path)?,
            None => PointConfig::default(),
        };
        let p = &mut c.params;
        set(&mut p.lambda_coupling, self.lambda);
        set(&mut p.omega_rabi, self.omega_rabi);
        set(&mut p.alpha, self.alpha);
        set(&mut p.n_bath, self.n_bath);
        set(&mut p.delta_q, self.delta_q);
        set(&mut p.delta_c, self.delta_c);
        set(&mut p.omega_c, self.omega_c);
        set(&mut p.cutoff, self.cutoff);
        set(&mut c.model, self.model);
        set(&mut c.truncation, self.truncation);
        set(&mut c.noise_method, self.noise_method);
        set(&mut c.cut, self.cut);
        set(&mut c.fd_step, self.fd_step);
        set(&mut c.affinity, self.affinity);
        c.params.validate()?;
        Ok(c)
    }
}

/// Flags that override keys of a sweep spec file.
#[derive(Args, Debug, Clone, Default)]
pub struct SweepOverrides {
    #[arg(long, value_parser = parse_truncation)]
    pub truncation: Option<TruncationSpec>,
    #[arg(long, value_parser = parse_enum::<NoiseMethod>)]
    pub noise_method: Option<NoiseMethod>,
    #[arg(long, value_parser = parse_enum::<CountingCut>)]
    pub cut: Option<CountingCut>,
    #[arg(long, allow_negative_numbers = true)]
    pub fd_step: Option<f64>,
    #[arg(long, value_parser = parse_enum::<AffinityConvention>)]
    pub affinity: Option<AffinityConvention>,
    /// Base name of the output files; defaults to the spec's `name` or file stem.
    #[arg(long)]
    pub name: Option<String>,
}

impl SweepOverrides {
    pub fn apply(&self, spec: &mut SweepSpec) {
        set(&mut spec.truncation, self.truncation);
        set(&mut spec.noise_method, self.noise_method);
        set(&mut spec.cut, self.cut);
        set(&mut spec.fd_step, self.fd_step);
        set(&mut spec.affinity, self.affinity);
        if let Some(n) = &self.name {
            spec.name = Some(n.clone());
        }
    }
}

/// Spectral densities on a frequency grid, one curve per α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub lambda_coupling: f64,
    pub alphas: Vec<f64>,
    #[serde(default = "one")]
    pub omega_c: f64,
    #[serde(default = "thousand")]
    pub cutoff: f64,
    pub omega_max: f64,
    pub points: usize,
}

fn one() -> f64 {
    1.0
}

fn thousand() -> f64 {
    1000.0
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0)) {
            bail!("alphas must be a nonempty list of positive values");
        }
        if self.points < 2 || !(self.omega_max > 0.0) {
            bail!("need at least 2 points and omega_max > 0");
        }
        Ok(())
    }

    pub fn params(&self, alpha: f64) -> ModelParams {
        ModelParams {
            lambda_coupling: self.lambda_coupling,
            alpha,
            omega_c: self.omega_c,
            cutoff: self.cutoff,
            ..Default::default()
        }
    }
}
