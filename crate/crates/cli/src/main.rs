//! Command-line front end: single-point analyses, λ sweeps and verification.

mod config;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{read_toml, DensitySpec, PointArgs, PointConfig, SweepOverrides};
use export::{write_csv, write_sweep, write_trace, Sidecar};
use rcfcs::correlations::{correlation_function, d_minus_k, default_tau_grid, zero_delay};
use rcfcs::fcs::{
    analyze, dynamical_activity, equivalence_certificate, fd_cumulants, noise_drazin,
    FcsResult, NoiseMethod,
};
use rcfcs::hilbert::Truncation;
use rcfcs::liouville::Embedding;
use rcfcs::model::{drude_lorentz, ohmic_residual};
use rcfcs::nonclassical::{reduce_rc, report};
use rcfcs::spectral::{spectrum_top, steady_state, SteadyState};
use rcfcs::sweep::{auto_truncate, run_sweep, ModelKind, SweepSpec, TruncationSpec};
use rcfcs::trajectories::{estimate_cumulants, JumpSampler};

#[derive(Parser)]
#[command(name = "rcfcs", version, about = "Counting statistics of a driven qubit coupled to a reaction-coordinate mode")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "RCFCS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state and truncation diagnostics.
    Steady(PointArgs),
    /// J, K, D, SNR, TUR ratio and entropy production.
    Cumulants(PointArgs),
    /// Leading Liouvillian eigenvalues.
    Spectrum {
        #[command(flatten)]
        point: PointArgs,
        /// Number of nonzero eigenvalues.
        #[arg(long, short, default_value_t = 3)]
        k: usize,
    },
    /// Current correlation function C(τ); the trace goes to a CSV file.
    Correlation {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        points: Option<usize>,
        /// Last delay in units of 1/γ.
        #[arg(long)]
        t_max_gamma: Option<f64>,
        #[arg(long, short, default_value = "correlation.csv")]
        out: PathBuf,
    },
    /// Quantum-jump ensemble estimates of J and D.
    Trajectories {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_window_gamma: Option<f64>,
        #[arg(long)]
        t_burn_gamma: Option<f64>,
        /// Also write every click as (trajectory, time, channel).
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// g²(0), non-Gaussianity and l₁ coherence of the reaction-coordinate mode.
    Nonclassical(PointArgs),
    /// Parameter sweep from a TOML spec; writes CSV plus a JSON sidecar.
    Sweep {
        spec: PathBuf,
        #[arg(long, short, default_value = "results")]
        out: PathBuf,
        #[command(flatten)]
        overrides: SweepOverrides,
    },
    /// Counting-cut equivalence and cross-method noise checks at one point.
    Verify {
        #[command(flatten)]
        point: PointArgs,
        /// Counting fields for the cut comparison, in (0, π).
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.7,1.2,2.0")]
        chi: Vec<f64>,
    },
    /// Drude-Lorentz and residual Ohmic spectral densities on a grid.
    Density {
        spec: PathBuf,
        #[arg(long, short, default_value = "results")]
        out: PathBuf,
    },
}

struct Prepared {
    emb: Embedding,
    steady: SteadyState,
}

fn prepare(c: &PointConfig) -> Result<Prepared> {
    let p = &c.params;
    let (emb, steady) = match (c.model, c.truncation) {
        (ModelKind::Weak, _) => {
            let emb = Embedding::WeakCoupling;
            (emb, steady_state(&emb.generator(p))?)
        }
        (ModelKind::Rc, TruncationSpec::Auto) => {
            let a = auto_truncate(p)?;
            (Embedding::ReactionCoordinate(a.truncation), a.steady)
        }
        (ModelKind::Rc, TruncationSpec::Fixed(n)) => {
            let emb = Embedding::ReactionCoordinate(Truncation::new(n)?);
            (emb, steady_state(&emb.generator(p))?)
        }
    };
    Ok(Prepared { emb, steady })
}

fn n_max(emb: &Embedding) -> Value {
    emb.truncation().map_or(Value::Null, |t| json!(t.n_max()))
}

fn steady_json(c: &PointConfig, pr: &Prepared) -> Result<Value> {
    let rho = &pr.steady.rho;
    let d = rho.nrows();
    // qubit-major ordering: the excited sector is the second half
    let excited: f64 = (d / 2..d).map(|i| rho[[i, i]].re).sum();
    let mode = match pr.emb.truncation() {
        Some(t) => {
            let rc = reduce_rc(rho, t)?;
            json!({ "mean_n": rc.mean_n, "top_population": rc.top_population() })
        }
        None => Value::Null,
    };
    Ok(json!({
        "config": c,
        "n_max": n_max(&pr.emb),
        "residual_norm": pr.steady.residual_norm,
        "trace_error": pr.steady.trace_error,
        "min_eigenvalue": pr.steady.min_eigenvalue,
        "qubit_excited_population": excited,
        "mode": mode,
    }))
}

fn cumulants(c: &PointConfig) -> Result<Value> {
    let pr = prepare(c)?;
    let p = &c.params;
    let fcs = if c.noise_method == NoiseMethod::Trajectory {
        let t = c.trajectories.context("trajectory noise needs a [trajectories] table")?;
        let channels = pr.emb.channels(p);
        let rho = &pr.steady.rho;
        let est = ensemble(c, &pr, t.n, t.seed, t.t_window_gamma, t.t_burn_gamma)?.0;
        FcsResult::new(
            rcfcs::fcs::average_current(rho, &channels),
            dynamical_activity(rho, &channels),
            est.d_hat,
            NoiseMethod::Trajectory,
            p,
            c.affinity,
        )
    } else {
        analyze(&pr.emb, p, &c.fcs_options())?.1
    };
    let g = pr.emb.generator(p);
    let channels = pr.emb.channels(p);
    Ok(json!({
        "config": c,
        "n_max": n_max(&pr.emb),
        "cumulants": fcs,
        "d_minus_k": d_minus_k(&g, &pr.steady.rho, &channels)?,
        "c0": zero_delay(&pr.steady.rho, &channels),
    }))
}

type Ensemble = (rcfcs::trajectories::EnsembleEstimate, Vec<rcfcs::trajectories::JumpRecord>);

fn ensemble(
    c: &PointConfig,
    pr: &Prepared,
    n: usize,
    seed: u64,
    window_gamma: f64,
    burn_gamma: f64,
) -> Result<Ensemble> {
    let gamma = c.params.gamma();
    let t_burn = burn_gamma / gamma;
    let t_final = t_burn + window_gamma / gamma;
    let sampler = JumpSampler::new(&pr.emb, &c.params, t_final)?;
    let records = sampler.sample_ensemble(t_final, seed, n)?;
    Ok((estimate_cumulants(&records, t_burn)?, records))
}

fn print(v: &Value) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn file_stem(path: &std::path::Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into())
}

/// Runs one subcommand. `Ok(false)` means the outputs were written but some
/// requested quantity failed.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Steady(a) => {
            let c = a.resolve()?;
            let pr = prepare(&c)?;
            print(&steady_json(&c, &pr)?)?;
        }
        Command::Cumulants(a) => print(&cumulants(&a.resolve()?)?)?,
        Command::Spectrum { point, k } => {
            let c = point.resolve()?;
            let pr = prepare(&c)?;
            let s = spectrum_top(&pr.emb.generator(&c.params), k)?;
            print(&json!({
                "config": c,
                "n_max": n_max(&pr.emb),
                "theta": s.eigenvalues.iter().map(|z| json!({"re": z.re, "im": z.im})).collect::<Vec<_>>(),
            }))?;
        }
        Command::Correlation {
            point,
            points,
            t_max_gamma,
            out,
        } => {
            let mut c = point.resolve()?;
            if let Some(n) = points {
                c.correlation.points = n;
            }
            if let Some(t) = t_max_gamma {
                c.correlation.t_max_gamma = t;
            }
            if c.correlation.points < 2 || !(c.correlation.t_max_gamma > 0.0) {
                bail!("need at least 2 points and t_max_gamma > 0");
            }
            let pr = prepare(&c)?;
            let p = &c.params;
            let gamma = p.gamma();
            let taus = default_tau_grid(gamma, c.correlation.t_max_gamma / gamma, c.correlation.points);
            let g = pr.emb.generator(p);
            let channels = pr.emb.channels(p);
            let tr = correlation_function(&g, &pr.steady.rho, &channels, &taus)?;
            write_trace(&out, &tr)?;
            let k = dynamical_activity(&pr.steady.rho, &channels);
            let d = noise_drazin(&pr.steady.rho, &channels, &g)?;
            print(&json!({
                "config": c,
                "n_max": n_max(&pr.emb),
                "trace": out.display().to_string(),
                "c0": tr.values[0],
                "integral": tr.integral,
                "tail_bound": tr.tail_bound,
                "oscillation_period": tr.oscillation_period(),
                "activity_k": k,
                "noise_d": d,
                "quadrature_gap": (k + 2.0 * tr.integral - d) / d,
            }))?;
        }
        Command::Trajectories {
            point,
            n,
            seed,
            t_window_gamma,
            t_burn_gamma,
            events,
        } => {
            let c = point.resolve()?;
            let base = c.trajectories.unwrap_or(rcfcs::sweep::TrajectoryOutput {
                n: 2000,
                seed: 1,
                t_window_gamma: 500.0,
                t_burn_gamma: 50.0,
            });
            let t = rcfcs::sweep::TrajectoryOutput {
                n: n.unwrap_or(base.n),
                seed: seed.unwrap_or(base.seed),
                t_window_gamma: t_window_gamma.unwrap_or(base.t_window_gamma),
                t_burn_gamma: t_burn_gamma.unwrap_or(base.t_burn_gamma),
            };
            let pr = prepare(&c)?;
            let (est, records) = ensemble(&c, &pr, t.n, t.seed, t.t_window_gamma, t.t_burn_gamma)?;
            if let Some(path) = &events {
                let header: Vec<String> = ["trajectory", "time", "channel"].map(String::from).into();
                let rows: Vec<Vec<String>> = records
                    .iter()
                    .flat_map(|r| {
                        r.events.iter().map(move |e| {
                            vec![r.index.to_string(), format!("{:e}", e.time), e.channel.to_string()]
                        })
                    })
                    .collect();
                write_csv(path, &header, &rows)?;
            }
            let (_, exact) = analyze(&pr.emb, &c.params, &c.fcs_options())?;
            print(&json!({
                "config": c,
                "trajectories": t,
                "n_max": n_max(&pr.emb),
                "estimate": est,
                "deterministic": { "current_j": exact.current_j, "noise_d": exact.noise_d },
                "z_current": (est.j_hat - exact.current_j) / est.j_stderr,
                "z_noise": (est.d_hat - exact.noise_d) / est.d_stderr,
            }))?;
        }
        Command::Nonclassical(a) => {
            let c = a.resolve()?;
            if c.model == ModelKind::Weak {
                bail!("the weak-coupling model has no mode state");
            }
            let pr = prepare(&c)?;
            let t = pr.emb.truncation().expect("rc model");
            let rc = reduce_rc(&pr.steady.rho, t)?;
            print(&json!({
                "config": c,
                "n_max": t.n_max(),
                "report": report(&rc)?,
            }))?;
        }
        Command::Sweep {
            spec,
            out,
            overrides,
        } => {
            let mut s: SweepSpec = read_toml(&spec)?;
            overrides.apply(&mut s);
            let name = s.name.clone().unwrap_or_else(|| file_stem(&spec));
            let table = run_sweep(&s)?;
            let files = write_sweep(&table, &out, &name)?;
            let failed = table.n_failed();
            print(&json!({
                "rows": table.rows.len(),
                "failed": failed,
                "table": files.table.display().to_string(),
                "sidecar": files.sidecar.display().to_string(),
                "traces": files.traces.len(),
            }))?;
            return Ok(failed == 0);
        }
        Command::Verify { point, chi } => {
            let c = point.resolve()?;
            if c.model == ModelKind::Weak {
                bail!("verification needs the reaction-coordinate model");
            }
            let pr = prepare(&c)?;
            let t = pr.emb.truncation().expect("rc model");
            let p = &c.params;
            let cert = equivalence_certificate(p, t, &chi)?;
            let g = pr.emb.generator(p);
            let channels = pr.emb.channels(p);
            let rho = &pr.steady.rho;
            let d = noise_drazin(rho, &channels, &g)?;
            let fd = fd_cumulants(&pr.emb, p, c.cut, c.fd_step)?;
            let gamma = p.gamma();
            let taus = default_tau_grid(gamma, c.correlation.t_max_gamma / gamma, c.correlation.points);
            let tr = correlation_function(&g, rho, &channels, &taus)?;
            let k = dynamical_activity(rho, &channels);
            let j = rcfcs::fcs::average_current(rho, &channels);
            let fd_gap = (fd.noise - d).abs() / d.abs();
            let quad_gap = (k + 2.0 * tr.integral - d).abs() / d.abs();
            let checks = json!({
                "cut_equivalence": cert.passed,
                "fd_vs_drazin": fd_gap < 1e-6,
                "quadrature": quad_gap < 1e-4,
                "activity_bounds_current": k >= j.abs(),
                "noise_positive": d > 0.0,
            });
            let passed = checks.as_object().expect("object").values().all(|v| v == &json!(true));
            print(&json!({
                "config": c,
                "n_max": t.n_max(),
                "certificate": cert,
                "noise_drazin": d,
                "noise_fd": fd.noise,
                "fd_relative_gap": fd_gap,
                "quadrature_relative_gap": quad_gap,
                "checks": checks,
                "passed": passed,
            }))?;
            return Ok(passed);
        }
        Command::Density { spec, out } => {
            let s: DensitySpec = read_toml(&spec)?;
            s.validate()?;
            let name = s.name.clone().unwrap_or_else(|| file_stem(&spec));
            let mut header = vec!["omega".to_string()];
            for a in &s.alphas {
                header.push(format!("drude_lorentz_alpha_{a}"));
                header.push(format!("ohmic_alpha_{a}"));
            }
            let rows: Vec<Vec<String>> = (0..s.points)
                .map(|i| {
                    let w = s.omega_max * i as f64 / (s.points - 1) as f64;
                    let mut r = vec![format!("{w:e}")];
                    for &a in &s.alphas {
                        let p = s.params(a);
                        r.push(format!("{:e}", drude_lorentz(w, &p)));
                        r.push(format!("{:e}", ohmic_residual(w, &p)));
                    }
                    r
                })
                .collect();
            let table = out.join(format!("{name}.csv"));
            write_csv(&table, &header, &rows)?;
            let sidecar = out.join(format!("{name}.json"));
            Sidecar::new(&s, vec![table.display().to_string()], rows.len(), 0).write(&sidecar)?;
            print(&json!({
                "rows": rows.len(),
                "table": table.display().to_string(),
                "sidecar": sidecar.display().to_string(),
            }))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some requested points failed; see the output for details");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
