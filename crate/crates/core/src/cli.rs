//! Configuration files, subcommands and CSV/JSON export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{lz_survival_probability, renormalized_tunneling, DriveProtocol, EvolutionMode, ProtocolKind};
use crate::ensemble::{
    extrapolate_asymptote, final_checkpoint, resume, run_ensemble_with_filters, prepare_filters, Asymptote,
    Normalization, RunOptions, SimulationConfig,
};
use crate::error::{Error, Result};
use crate::filters::{build_filters, ClampReport};
use crate::grid::TimeGrids;
use crate::kernels::{build_kernel_table, BathSpec};
use crate::noise::{loglog_slope, verify_noise_with_sums, Correlator, CovarianceReport, Synthesizer};

pub const TOOL_VERSION: &str = concat!("esle ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "esle", version, about = "Extended stochastic Liouville equation simulator")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ESLE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a trajectory ensemble and write the observable series.
    Run(RunArgs),
    /// Check the generated noise covariances against the kernels.
    VerifyNoise(CommonArgs),
    /// Dump the kernel tables and filter diagnostics.
    Kernels(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "ESLE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Continue from a checkpoint written by an earlier run of the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

/// A validated configuration file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: EvolutionMode,
    pub protocol: DriveProtocol,
    pub bath: BathSpec,
    pub grids: TimeGrids,
    pub runs: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub report_stride: usize,
    pub normalization: Normalization,
    pub checkpoint_every: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<EvolutionMode>,
    protocol: Option<ProtocolKind>,
    delta: Option<f64>,
    kappa: Option<f64>,
    epsilon0: Option<f64>,
    t0: Option<f64>,
    alpha: Option<f64>,
    omega_c: Option<f64>,
    beta: Option<f64>,
    hbar: Option<f64>,
    dt: Option<f64>,
    n_steps: Option<usize>,
    m_steps: Option<usize>,
    dtau: Option<f64>,
    runs: Option<u64>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    report_stride: Option<usize>,
    normalization: Option<Normalization>,
    checkpoint_every: Option<u64>,
}

/// Parses and validates a TOML configuration document.
///
/// Defaults: `delta = 1`, `hbar = 1`, `report_stride = 1`, `normalization = "ensemble"`,
/// `checkpoint_every = 0` (no checkpoints).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut missing: Vec<&str> = Vec::new();
    macro_rules! need {
        ($f:ident) => {
            if raw.$f.is_none() {
                missing.push(stringify!($f));
            }
        };
    }
    need!(mode);
    need!(protocol);
    need!(t0);
    need!(alpha);
    need!(omega_c);
    need!(beta);
    need!(dt);
    need!(n_steps);
    need!(runs);
    need!(seed);
    need!(output_dir);
    if raw.m_steps.is_none() && raw.dtau.is_none() {
        missing.push("m_steps (or dtau)");
    }
    match raw.protocol {
        Some(ProtocolKind::Linear) => need!(kappa),
        Some(ProtocolKind::Constant) => need!(epsilon0),
        None => missing.push("kappa (linear) or epsilon0 (constant)"),
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }

    let delta = raw.delta.unwrap_or(1.0);
    let hbar = raw.hbar.unwrap_or(1.0);
    let t0 = raw.t0.unwrap();
    let bath = BathSpec::new(raw.alpha.unwrap(), raw.omega_c.unwrap(), raw.beta.unwrap(), hbar)?;
    let protocol = match raw.protocol.unwrap() {
        ProtocolKind::Linear => {
            let kappa = raw.kappa.unwrap();
            let p = DriveProtocol { kind: ProtocolKind::Linear, epsilon0: raw.epsilon0.unwrap_or(kappa * t0), kappa, t0, delta };
            p.validate()?;
            p
        }
        ProtocolKind::Constant => {
            if raw.kappa.is_some_and(|k| k != 0.0) {
                return Err(Error::Config("kappa must be absent or 0 for a constant protocol".into()));
            }
            DriveProtocol::constant(raw.epsilon0.unwrap(), t0, delta)?
        }
    };
    let beta_hbar = bath.beta_hbar();
    let m_steps = match (raw.m_steps, raw.dtau) {
        (Some(m), None) => m,
        (None, Some(d)) => {
            if !(d > 0.0) {
                return Err(Error::Config(format!("dtau must be > 0, got {d}")));
            }
            let m = (beta_hbar / d).round();
            if !(m >= 1.0) || ((m * d - beta_hbar).abs() > 1e-9 * beta_hbar) {
                return Err(Error::Config(format!("dtau = {d} does not divide beta*hbar = {beta_hbar}")));
            }
            m as usize
        }
        (Some(m), Some(d)) => {
            if (m as f64 * d - beta_hbar).abs() > 1e-9 * beta_hbar {
                return Err(Error::Config(format!(
                    "m_steps = {m} and dtau = {d} contradict beta*hbar = {beta_hbar}"
                )));
            }
            m
        }
        (None, None) => unreachable!(),
    };
    let grids = TimeGrids::new(t0, raw.dt.unwrap(), raw.n_steps.unwrap(), beta_hbar, m_steps)?;
    let cfg = RunConfig {
        mode: raw.mode.unwrap(),
        protocol,
        bath,
        grids,
        runs: raw.runs.unwrap(),
        seed: raw.seed.unwrap(),
        output_dir: raw.output_dir.unwrap(),
        report_stride: raw.report_stride.unwrap_or(1),
        normalization: raw.normalization.unwrap_or(Normalization::Ensemble),
        checkpoint_every: raw.checkpoint_every.unwrap_or(0),
    };
    cfg.simulation().validate()?;
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            mode: self.mode,
            protocol: self.protocol,
            bath: self.bath,
            grids: self.grids,
            runs: self.runs,
            seed: self.seed,
            report_stride: self.report_stride,
            normalization: self.normalization,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn config_hash(&self) -> String {
        self.simulation().config_hash()
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, args: &CommonArgs) -> Self {
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(r) = args.runs {
            self.runs = r;
        }
        if let Some(o) = &args.output {
            self.output_dir = o.clone();
        }
        self
    }
}

/// Formats a float with 17 significant digits, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(cfg: &RunConfig, what: &str) -> String {
    format!("# {TOOL_VERSION}\n# config_hash {}\n# {what}\n", cfg.config_hash())
}

/// Writes a CSV file with a `#` comment header, replacing it atomically.
fn write_csv(path: &Path, cfg: &RunConfig, what: &str, columns: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut s = header(cfg, what);
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHeader {
    pub tool: &'static str,
    pub config_hash: String,
}

fn file_header(cfg: &RunConfig) -> FileHeader {
    FileHeader { tool: TOOL_VERSION, config_hash: cfg.config_hash() }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatlineCheck {
    pub sz_first: f64,
    pub sz_last: f64,
    pub sz_combined_sem: f64,
    pub sx_first: f64,
    pub sx_last: f64,
    pub sx_combined_sem: f64,
    pub within_3_sem: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub p_lz: f64,
    pub sz_lz: f64,
    pub delta_r: f64,
    pub asymptote_method: &'static str,
    pub sz_asymptote: Option<Asymptote>,
    pub asymptote_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub header: FileHeader,
    pub config: RunConfig,
    pub launched: u64,
    pub accepted: u64,
    pub diverged: u64,
    pub wall_time_s: f64,
    pub threads: usize,
    pub eta_eta_clamp: ClampReport,
    pub mu_mu_clamp: ClampReport,
    pub matched_rho: Option<crate::mat2::Mat2>,
    pub flatline: Option<FlatlineCheck>,
    pub sweep: Option<SweepSummary>,
}

fn window_means(v: &[f64], w: usize) -> (f64, f64) {
    let n = v.len();
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (avg(&v[..w]), avg(&v[n - w..]))
}

/// `(first-window mean, last-window mean, combined SEM)` over the first and last 10%.
pub fn flatline_stats(mean: &[f64], sem: &[f64]) -> (f64, f64, f64) {
    let w = (mean.len() / 10).max(1);
    let (a, b) = window_means(mean, w);
    let (sa, sb) = window_means(sem, w);
    (a, b, sa.hypot(sb))
}

/// Runs an ensemble and writes `series.csv`, `manifest.json` and `checkpoint.json`.
pub fn cmd_run(cfg: &RunConfig, resume_path: Option<&Path>) -> Result<RunManifest> {
    let sim = cfg.simulation();
    sim.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let start = Instant::now();
    let checkpoint_path = cfg.output_dir.join("checkpoint.json");
    let opts = RunOptions {
        checkpoint_path: (cfg.checkpoint_every > 0).then(|| checkpoint_path.clone()),
        resume_from: resume_path.map(|p| resume(p, &sim)).transpose()?,
        batch: 0,
    };
    let filters = prepare_filters(&sim)?;
    let result = run_ensemble_with_filters(&sim, filters, &opts)?;
    let s = &result.series;

    let columns = [
        "t", "sz_mean", "sz_sem", "sx_mean", "sx_sem", "re_rho11", "im_rho11", "re_rho12", "im_rho12", "re_rho21",
        "im_rho21", "re_rho22", "im_rho22", "re_trace", "im_trace",
    ];
    let rows = (0..s.t.len()).map(|k| {
        let r = &s.rho[k].m;
        [
            s.t[k], s.sz_mean[k], s.sz_sem[k], s.sx_mean[k], s.sx_sem[k], r[0].re, r[0].im, r[1].re, r[1].im, r[2].re,
            r[2].im, r[3].re, r[3].im, s.trace_mean[k].re, s.trace_mean[k].im,
        ]
        .iter()
        .map(|&v| fmt_f64(v))
        .collect()
    });
    let what = format!("{} ensemble, {} accepted trajectories", cfg.mode.name(), result.stats.count);

    let flatline = (cfg.protocol.kind == ProtocolKind::Constant).then(|| {
        let (za, zb, zs) = flatline_stats(&s.sz_mean, &s.sz_sem);
        let (xa, xb, xs) = flatline_stats(&s.sx_mean, &s.sx_sem);
        FlatlineCheck {
            sz_first: za,
            sz_last: zb,
            sz_combined_sem: zs,
            sx_first: xa,
            sx_last: xb,
            sx_combined_sem: xs,
            within_3_sem: (zb - za).abs() < 3.0 * zs && (xb - xa).abs() < 3.0 * xs,
        }
    });
    let sweep = if cfg.protocol.kind == ProtocolKind::Linear {
        let p_lz = lz_survival_probability(cfg.protocol.delta, cfg.protocol.kappa, cfg.bath.hbar)?;
        let delta_r = renormalized_tunneling(cfg.protocol.delta, cfg.bath.alpha, cfg.bath.omega_c)?;
        let q = s.t.len() - s.t.len() / 4;
        let (sz_asymptote, asymptote_error) = match extrapolate_asymptote(&s.t[q..], &s.sz_mean[q..]) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Some(SweepSummary {
            p_lz,
            sz_lz: 2.0 * p_lz - 1.0,
            delta_r,
            asymptote_method: "damped-cosine least squares over the last quarter of sz_mean, tail mean if degenerate",
            sz_asymptote,
            asymptote_error,
        })
    } else {
        None
    };
    let manifest = RunManifest {
        header: file_header(cfg),
        config: cfg.clone(),
        launched: result.stats.launched(),
        accepted: result.stats.count,
        diverged: result.stats.diverged,
        wall_time_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        eta_eta_clamp: result.filters.as_ref().map(|f| f.eta_eta_clamp).unwrap_or_default(),
        mu_mu_clamp: result.filters.as_ref().map(|f| f.mu_mu_clamp).unwrap_or_default(),
        matched_rho: result.matched_rho,
        flatline,
        sweep,
    };
    if result.stats.diverged > 0 {
        eprintln!(
            "warning: {} of {} trajectories diverged and were excluded",
            result.stats.diverged,
            result.stats.launched()
        );
    }
    write_csv(&cfg.output_dir.join("series.csv"), cfg, &what, &columns, rows)?;
    write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    crate::ensemble::checkpoint(&final_checkpoint(&sim, &result), &checkpoint_path)?;
    Ok(manifest)
}

/// Run counts `10³, 10⁴, ...` below the budget, followed by the budget itself.
pub fn run_count_series(budget: u64) -> Vec<u64> {
    let mut v = Vec::new();
    let mut r = 1000u64;
    while r < budget {
        v.push(r);
        r = r.saturating_mul(10);
    }
    v.push(budget);
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseSummary {
    pub header: FileHeader,
    pub seed: u64,
    pub reports: Vec<CovarianceReport>,
    pub slope_eta_eta: Option<f64>,
    pub slope_eta_nu: Option<f64>,
    pub slope_mu_mu: Option<f64>,
    pub slope_eta_mu: Option<f64>,
    pub eta_eta_clamp: ClampReport,
    pub mu_mu_clamp: ClampReport,
}

/// Generates `cfg.runs` noise realizations and writes the covariance comparison.
pub fn cmd_verify_noise(cfg: &RunConfig) -> Result<NoiseSummary> {
    let sim = cfg.simulation();
    sim.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let kernels = build_kernel_table(&cfg.bath, &cfg.grids)?;
    let filters = build_filters(&kernels)?;
    let (eta_eta_clamp, mu_mu_clamp) = (filters.eta_eta_clamp, filters.mu_mu_clamp);
    let synth = Synthesizer::new(filters);
    let counts = run_count_series(cfg.runs);
    let (reports, acc) = verify_noise_with_sums(&synth, &kernels, cfg.seed, &counts)?;

    let g = &cfg.grids;
    let (n, m) = (g.n_points(), g.m_points());
    let t = |i: usize| g.t(i) - g.t0;
    type Target<'a> = Box<dyn Fn(usize, usize) -> num_complex::Complex64 + 'a>;
    let zero = |_: usize, _: usize| num_complex::Complex64::new(0.0, 0.0);
    let tables: [(&str, Correlator, usize, usize, bool, bool, Target); 6] = [
        ("cov_eta_eta.csv", Correlator::EtaEta, n, n, false, false, Box::new(|i, k| kernels.eta_eta(i as isize - k as isize).into())),
        ("cov_eta_nu.csv", Correlator::EtaNu, n, n, false, false, Box::new(|i, k| kernels.eta_nu(i as isize - k as isize))),
        ("cov_mu_mu.csv", Correlator::MuMu, m, m, true, true, Box::new(|j, l| kernels.mu_mu(j as isize - l as isize).into())),
        ("cov_eta_mu.csv", Correlator::EtaMu, n, m, false, true, Box::new(|i, j| kernels.eta_mu(i, j))),
        ("cov_nu_nu.csv", Correlator::NuNu, n, n, false, false, Box::new(zero)),
        ("cov_nu_mu.csv", Correlator::NuMu, n, m, false, true, Box::new(zero)),
    ];
    for (name, which, rows, cols, row_tau, col_tau, target) in tables {
        let mean = acc.mean(which);
        let coord = |tau: bool, i: usize| if tau { g.tau(i) } else { t(i) };
        let lines = (0..rows * cols).map(|idx| {
            let (i, k) = (idx / cols, idx % cols);
            let want = target(i, k);
            let got = mean[idx];
            [coord(row_tau, i), coord(col_tau, k), want.re, want.im, got.re, got.im].iter().map(|&v| fmt_f64(v)).collect()
        });
        write_csv(
            &cfg.output_dir.join(name),
            cfg,
            &format!("sample correlator over {} realizations", acc.count),
            &["row", "col", "re_target", "im_target", "re_sample", "im_sample"],
            lines,
        )?;
    }
    write_csv(
        &cfg.output_dir.join("rms_vs_runs.csv"),
        cfg,
        "RMS deviation of sample correlators from the kernels",
        &["runs", "rms_etaeta", "rms_etanu", "rms_mumu", "rms_etamu", "max_zero_correlator"],
        reports.iter().map(|r| {
            let mut row = vec![r.runs.to_string()];
            row.extend(
                [r.rms_eta_eta, r.rms_eta_nu, r.rms_mu_mu, r.rms_eta_mu, r.max_zero_correlator()].iter().map(|&v| fmt_f64(v)),
            );
            row
        }),
    )?;
    let slope = |f: fn(&CovarianceReport) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = reports.iter().map(|r| (r.runs as f64, f(r))).filter(|p| p.1 > 0.0).collect();
        (pts.len() >= 2).then(|| loglog_slope(&pts))
    };
    let summary = NoiseSummary {
        header: file_header(cfg),
        seed: cfg.seed,
        slope_eta_eta: slope(|r| r.rms_eta_eta),
        slope_eta_nu: slope(|r| r.rms_eta_nu),
        slope_mu_mu: slope(|r| r.rms_mu_mu),
        slope_eta_mu: slope(|r| r.rms_eta_mu),
        reports,
        eta_eta_clamp,
        mu_mu_clamp,
    };
    write_json(&cfg.output_dir.join("noise_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterDiagnostics {
    pub header: FileHeader,
    pub pad_len: usize,
    pub imag_period_len: usize,
    pub companion_weight: f64,
    pub eta_eta_clamp: ClampReport,
    pub mu_mu_clamp: ClampReport,
}

/// Writes the four kernel tables and the filter diagnostics.
pub fn cmd_kernels(cfg: &RunConfig) -> Result<FilterDiagnostics> {
    cfg.simulation().validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let g = &cfg.grids;
    let k = build_kernel_table(&cfg.bath, g)?;
    let f = build_filters(&k)?;
    let (n, m) = (g.n_points(), g.m_points());
    let lag = |i: usize| i as f64 * g.dt;
    let dir = &cfg.output_dir;
    write_csv(
        &dir.join("k_eta_eta.csv"),
        cfg,
        "K_eta_eta(t) at lags 0..N",
        &["t", "k_eta_eta"],
        (0..n).map(|i| vec![fmt_f64(lag(i)), fmt_f64(k.eta_eta(i as isize))]),
    )?;
    write_csv(
        &dir.join("k_eta_nu.csv"),
        cfg,
        "K_eta_nu(t) at lags 0..N",
        &["t", "re_k_eta_nu", "im_k_eta_nu"],
        (0..n).map(|i| {
            let v = k.eta_nu(i as isize);
            vec![fmt_f64(lag(i)), fmt_f64(v.re), fmt_f64(v.im)]
        }),
    )?;
    let ms = g.m_steps as isize;
    write_csv(
        &dir.join("k_mu_mu.csv"),
        cfg,
        "K_mu_mu(s) at lags -M..M",
        &["s", "k_mu_mu"],
        (-ms..=ms).map(|l| vec![fmt_f64(l as f64 * g.dtau), fmt_f64(k.mu_mu(l))]),
    )?;
    write_csv(
        &dir.join("k_eta_mu.csv"),
        cfg,
        "K_eta_mu(t, tau) with t measured from t0",
        &["t", "tau", "re_k_eta_mu", "im_k_eta_mu"],
        (0..n * m).map(|idx| {
            let (i, j) = (idx / m, idx % m);
            let v = k.eta_mu(i, j);
            vec![fmt_f64(lag(i)), fmt_f64(g.tau(j)), fmt_f64(v.re), fmt_f64(v.im)]
        }),
    )?;
    let diag = FilterDiagnostics {
        header: file_header(cfg),
        pad_len: f.pad_len,
        imag_period_len: g.imag_period_len(),
        companion_weight: f.companion_weight,
        eta_eta_clamp: f.eta_eta_clamp,
        mu_mu_clamp: f.mu_mu_clamp,
    };
    write_json(&dir.join("filters.json"), &diag)?;
    Ok(diag)
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run(a) => {
            let cfg = load_config(&a.common.config)?.with_overrides(&a.common);
            let m = cmd_run(&cfg, a.resume.as_deref())?;
            let mut s = format!(
                "{} trajectories ({} diverged) in {:.2} s, output in {}",
                m.accepted,
                m.diverged,
                m.wall_time_s,
                cfg.output_dir.display()
            );
            if let Some(sw) = &m.sweep {
                let _ = write!(s, "\nP_LZ = {:.6}", sw.p_lz);
            }
            Ok(s)
        }
        Command::VerifyNoise(a) => {
            let cfg = load_config(&a.config)?.with_overrides(a);
            let r = cmd_verify_noise(&cfg)?;
            let last = r.reports.last().expect("at least one report");
            Ok(format!(
                "{} realizations: rms_etaeta/K(0) = {:.3e}, max zero correlator/K(0) = {:.3e}",
                last.runs,
                last.rms_eta_eta / last.k_eta_eta_0.max(f64::MIN_POSITIVE),
                last.max_zero_correlator() / last.k_eta_eta_0.max(f64::MIN_POSITIVE)
            ))
        }
        Command::Kernels(a) => {
            let cfg = load_config(&a.config)?.with_overrides(a);
            let d = cmd_kernels(&cfg)?;
            Ok(format!("kernel tables written to {} (L = {})", cfg.output_dir.display(), d.pad_len))
        }
    }
}
