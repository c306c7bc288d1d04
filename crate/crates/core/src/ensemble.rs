//! Trajectory sampling, streaming statistics, observables and checkpoints.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    evolve_imaginary, evolve_real_with, initial_condition, DriveProtocol, EvolutionMode, RealDrive,
};
use crate::error::{Error, Result};
use crate::filters::{build_filters, FilterSet};
use crate::grid::TimeGrids;
use crate::kernels::{build_kernel_table, BathSpec};
use crate::mat2::Mat2;
use crate::noise::{draw_imaginary_whites, draw_whites, Synthesizer};

const MAX_DIVERGED_FRACTION: f64 = 0.05;
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Divide the ensemble-average matrix by its trace at every reported time.
    Ensemble,
    /// Additionally divide each trajectory's `ρ̄(βħ)` by its trace before real-time evolution.
    Trajectory,
}

/// Everything needed to run one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub mode: EvolutionMode,
    pub protocol: DriveProtocol,
    pub bath: BathSpec,
    pub grids: TimeGrids,
    pub runs: u64,
    pub seed: u64,
    pub report_stride: usize,
    pub normalization: Normalization,
    pub checkpoint_every: u64,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    tag: &'static str,
    mode: EvolutionMode,
    protocol: &'a DriveProtocol,
    bath: &'a BathSpec,
    grids: &'a TimeGrids,
    seed: u64,
    report_stride: usize,
    normalization: Normalization,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.bath.validate()?;
        self.grids.validate(self.bath.beta_hbar())?;
        self.protocol.validate()?;
        if (self.protocol.t0 - self.grids.t0).abs() > 0.0 {
            return Err(Error::Config("protocol and grid start times differ".into()));
        }
        if self.report_stride == 0 {
            return Err(Error::Config("report_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over every field that affects the physics or the random draws.
    pub fn config_hash(&self) -> String {
        let fields = HashedFields {
            tag: "esle-config-v1",
            mode: self.mode,
            protocol: &self.protocol,
            bath: &self.bath,
            grids: &self.grids,
            seed: self.seed,
            report_stride: self.report_stride,
            normalization: self.normalization,
        };
        let bytes = serde_json::to_vec(&fields).expect("config fields serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn n_report(&self) -> usize {
        self.grids.n_steps / self.report_stride + 1
    }

    pub fn report_times(&self) -> Vec<f64> {
        (0..self.n_report()).map(|k| self.grids.t(k * self.report_stride)).collect()
    }
}

/// Streaming moments of the trajectory matrices at every reported time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub config_hash: String,
    pub count: u64,
    pub diverged: u64,
    pub sum_rho: Vec<Mat2>,
    /// `Σ |ρ_ab|²` per entry.
    pub sum_sq: Vec<[f64; 4]>,
    /// Running mean of `(Re ρ11, Im ρ11, Re ρ12, Im ρ12, Re ρ21, Im ρ21, Re ρ22, Im ρ22)`.
    pub mean: Vec<[f64; 8]>,
    /// Co-moment matrix `Σ (x - x̄)(x - x̄)ᵀ` of the same vector.
    pub comoment: Vec<[[f64; 8]; 8]>,
}

fn unpack(m: &Mat2) -> [f64; 8] {
    let v = m.m;
    [v[0].re, v[0].im, v[1].re, v[1].im, v[2].re, v[2].im, v[3].re, v[3].im]
}

impl EnsembleStats {
    pub fn empty(config_hash: &str, n_report: usize) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            count: 0,
            diverged: 0,
            sum_rho: vec![Mat2::zero(); n_report],
            sum_sq: vec![[0.0; 4]; n_report],
            mean: vec![[0.0; 8]; n_report],
            comoment: vec![[[0.0; 8]; 8]; n_report],
        }
    }

    pub fn n_report(&self) -> usize {
        self.sum_rho.len()
    }

    pub fn launched(&self) -> u64 {
        self.count + self.diverged
    }

    /// Adds one accepted trajectory.
    pub fn push(&mut self, traj: &[Mat2]) -> Result<()> {
        if traj.len() != self.n_report() {
            return Err(Error::Config(format!(
                "trajectory has {} reported times, statistics expect {}",
                traj.len(),
                self.n_report()
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        for (k, m) in traj.iter().enumerate() {
            self.sum_rho[k] += *m;
            for e in 0..4 {
                self.sum_sq[k][e] += m.m[e].norm_sqr();
            }
            let x = unpack(m);
            let mean = &mut self.mean[k];
            let mut d0 = [0.0; 8];
            for a in 0..8 {
                d0[a] = x[a] - mean[a];
                mean[a] += d0[a] / n;
            }
            let cm = &mut self.comoment[k];
            for a in 0..8 {
                let d1 = x[a] - mean[a];
                for b in 0..8 {
                    cm[b][a] += d0[b] * d1;
                }
            }
        }
        Ok(())
    }

    pub fn push_diverged(&mut self) {
        self.diverged += 1;
    }

    /// Pooled statistics of two disjoint sets of trajectories.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.config_hash != other.config_hash {
            return Err(Error::Config(format!(
                "cannot merge statistics of configs {} and {}",
                self.config_hash, other.config_hash
            )));
        }
        if self.n_report() != other.n_report() {
            return Err(Error::Config("cannot merge statistics with different report grids".into()));
        }
        if other.count == 0 {
            let mut s = self.clone();
            s.diverged += other.diverged;
            return Ok(s);
        }
        if self.count == 0 {
            let mut s = other.clone();
            s.diverged += self.diverged;
            return Ok(s);
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mut out = self.clone();
        out.count += other.count;
        out.diverged += other.diverged;
        for k in 0..self.n_report() {
            out.sum_rho[k] = self.sum_rho[k] + other.sum_rho[k];
            for e in 0..4 {
                out.sum_sq[k][e] = self.sum_sq[k][e] + other.sum_sq[k][e];
            }
            let mut delta = [0.0; 8];
            for a in 0..8 {
                delta[a] = other.mean[k][a] - self.mean[k][a];
                out.mean[k][a] = self.mean[k][a] + delta[a] * nb / n;
            }
            for a in 0..8 {
                for b in 0..8 {
                    out.comoment[k][a][b] =
                        self.comoment[k][a][b] + other.comoment[k][a][b] + delta[a] * delta[b] * na * nb / n;
                }
            }
        }
        Ok(out)
    }

    /// `⟨ρ̃(t_k)⟩` before any normalization.
    pub fn mean_rho(&self, k: usize) -> Mat2 {
        self.sum_rho[k].scale(1.0 / self.count.max(1) as f64)
    }

    /// Covariance of the sample mean of the unpacked entries.
    pub fn mean_covariance(&self, k: usize) -> [[f64; 8]; 8] {
        let mut c = [[0.0; 8]; 8];
        if self.count < 2 {
            return c;
        }
        let s = 1.0 / ((self.count - 1) as f64 * self.count as f64);
        for a in 0..8 {
            for b in 0..8 {
                c[a][b] = self.comoment[k][a][b] * s;
            }
        }
        c
    }

    /// Standard error of each unpacked entry of `⟨ρ̃(t_k)⟩`.
    pub fn entry_sem(&self, k: usize) -> [f64; 8] {
        let c = self.mean_covariance(k);
        std::array::from_fn(|a| c[a][a].max(0.0).sqrt())
    }

    /// Standard errors of `(Re Tr, Im Tr)` of `⟨ρ̃(t_k)⟩`.
    pub fn trace_sem(&self, k: usize) -> (f64, f64) {
        let c = self.mean_covariance(k);
        let re = c[0][0] + c[6][6] + 2.0 * c[0][6];
        let im = c[1][1] + c[7][7] + 2.0 * c[1][7];
        (re.max(0.0).sqrt(), im.max(0.0).sqrt())
    }

    /// Normalized observables at every reported time.
    pub fn observables(&self, times: &[f64]) -> ObservableSeries {
        let n = self.n_report();
        let mut s = ObservableSeries {
            t: times.to_vec(),
            sz_mean: Vec::with_capacity(n),
            sz_sem: Vec::with_capacity(n),
            sx_mean: Vec::with_capacity(n),
            sx_sem: Vec::with_capacity(n),
            trace_mean: Vec::with_capacity(n),
            rho: Vec::with_capacity(n),
        };
        for k in 0..n {
            let m = self.mean_rho(k);
            let x = unpack(&m);
            let tr = x[0] + x[6];
            let rho = m.hermitize().scale(1.0 / tr);
            let c = self.mean_covariance(k);
            let quad = |g: &[f64; 8]| {
                let mut v = 0.0;
                for a in 0..8 {
                    for b in 0..8 {
                        v += g[a] * c[a][b] * g[b];
                    }
                }
                v.max(0.0).sqrt()
            };
            let mut gz = [0.0; 8];
            gz[0] = 2.0 * x[6] / (tr * tr);
            gz[6] = -2.0 * x[0] / (tr * tr);
            let coh = x[2] + x[4];
            let mut gx = [0.0; 8];
            gx[2] = 1.0 / tr;
            gx[4] = 1.0 / tr;
            gx[0] = -coh / (tr * tr);
            gx[6] = -coh / (tr * tr);
            s.sz_mean.push((x[0] - x[6]) / tr);
            s.sz_sem.push(quad(&gz));
            s.sx_mean.push(coh / tr);
            s.sx_sem.push(quad(&gx));
            s.trace_mean.push(m.trace());
            s.rho.push(rho);
        }
        s
    }
}

/// Per-time observables of the normalized ensemble average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub t: Vec<f64>,
    pub sz_mean: Vec<f64>,
    pub sz_sem: Vec<f64>,
    pub sx_mean: Vec<f64>,
    pub sx_sem: Vec<f64>,
    pub trace_mean: Vec<Complex64>,
    /// `hermitize(⟨ρ̃⟩) / Tr⟨ρ̃⟩`.
    pub rho: Vec<Mat2>,
}

/// Resumable ensemble state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub grids: TimeGrids,
    pub next_index: u64,
    pub stats: EnsembleStats,
    pub matched_rho: Option<Mat2>,
}

/// Writes a checkpoint as JSON, replacing any previous file atomically.
pub fn checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(cp)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint and checks it against the expected configuration.
pub fn resume(path: &Path, expected: &SimulationConfig) -> Result<Checkpoint> {
    let fail = |reason: String| Error::Checkpoint { path: path.to_path_buf(), reason };
    let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
    let cp: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| fail(format!("corrupt checkpoint: {e}")))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported checkpoint version {}", cp.version)));
    }
    let want = expected.config_hash();
    if cp.config_hash != want || cp.stats.config_hash != want {
        return Err(fail(format!("config hash {} does not match {want}", cp.config_hash)));
    }
    if cp.grids != expected.grids || cp.stats.n_report() != expected.n_report() {
        return Err(fail("grid mismatch".into()));
    }
    if cp.stats.launched() != cp.next_index {
        return Err(fail("trajectory counts are inconsistent".into()));
    }
    if (expected.mode == EvolutionMode::SleMatched) != cp.matched_rho.is_some() {
        return Err(fail("matched initial state missing or unexpected".into()));
    }
    Ok(cp)
}

/// Where and how often to checkpoint, and an optional state to continue from.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoint_path: Option<PathBuf>,
    pub resume_from: Option<Checkpoint>,
    /// Trajectories evaluated per parallel batch; 0 picks a default.
    pub batch: usize,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub stats: EnsembleStats,
    pub series: ObservableSeries,
    pub matched_rho: Option<Mat2>,
    /// `None` for a noise-free (`α = 0`) run.
    pub filters: Option<FilterSet>,
}

enum Outcome {
    Accepted(Vec<Mat2>),
    Diverged,
}

fn diverged_or<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Diverged { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Runner<'a> {
    cfg: &'a SimulationConfig,
    synth: Option<Synthesizer>,
    matched: Option<Mat2>,
}

impl Runner<'_> {
    fn trajectory(&self, r: u64) -> Result<Outcome> {
        let cfg = self.cfg;
        let rho0 = match cfg.mode {
            EvolutionMode::Esle => match self.imaginary_endpoint(r)? {
                Some(rb) => rb,
                None => return Ok(Outcome::Diverged),
            },
            m => initial_condition(m, self.matched, &cfg.protocol, &cfg.bath)?,
        };
        let noise = match &self.synth {
            Some(s) => Some(s.synthesize_real(&draw_whites(cfg.seed, r, &cfg.grids))?),
            None => None,
        };
        let drive = match &noise {
            Some(n) => RealDrive::Noisy { eta: &n.eta, nu: &n.nu },
            None => RealDrive::Noiseless,
        };
        let out = diverged_or(evolve_real_with(rho0, drive, &cfg.protocol, &cfg.grids, cfg.bath.hbar, cfg.report_stride))?;
        Ok(out.map_or(Outcome::Diverged, Outcome::Accepted))
    }

    fn imaginary_endpoint(&self, r: u64) -> Result<Option<Mat2>> {
        let cfg = self.cfg;
        let mu = match &self.synth {
            Some(s) => s.synthesize_mu(&draw_imaginary_whites(cfg.seed, r, &cfg.grids))?,
            None => vec![Complex64::new(0.0, 0.0); cfg.grids.m_points()],
        };
        let rb = diverged_or(evolve_imaginary(&mu, &cfg.protocol, &cfg.grids, cfg.bath.hbar))?;
        Ok(rb.map(|m| if cfg.normalization == Normalization::Trajectory { m.scale_c(m.trace().inv()) } else { m }))
    }
}

fn check_divergence(stats: &EnsembleStats, final_check: bool) -> Result<()> {
    let launched = stats.launched();
    if launched == 0 {
        return Ok(());
    }
    let too_many = stats.diverged as f64 > MAX_DIVERGED_FRACTION * launched as f64;
    if (final_check || launched >= 1000) && too_many || (final_check && stats.count == 0) {
        return Err(Error::EnsembleFailure { diverged: stats.diverged, launched });
    }
    Ok(())
}

/// Averaged, normalized imaginary-time endpoint over trajectories `0..runs`.
fn matched_state(runner: &Runner<'_>, runs: u64, batch: usize) -> Result<Mat2> {
    let mut sum = Mat2::zero();
    let mut count = 0u64;
    let mut start = 0u64;
    while start < runs {
        let end = (start + batch as u64).min(runs);
        let part: Vec<Result<Option<Mat2>>> = (start..end).into_par_iter().map(|r| runner.imaginary_endpoint(r)).collect();
        for p in part {
            if let Some(m) = p? {
                sum += m;
                count += 1;
            }
        }
        start = end;
    }
    if count == 0 {
        return Err(Error::EnsembleFailure { diverged: runs, launched: runs });
    }
    let mean = sum.scale(1.0 / count as f64).hermitize();
    Ok(mean.scale(1.0 / mean.trace().re))
}

/// Builds the filters a configuration needs, or `None` when the bath is decoupled.
pub fn prepare_filters(cfg: &SimulationConfig) -> Result<Option<FilterSet>> {
    if cfg.bath.alpha == 0.0 {
        return Ok(None);
    }
    let kernels = build_kernel_table(&cfg.bath, &cfg.grids)?;
    let f = build_filters(&kernels)?;
    Ok(Some(if cfg.mode == EvolutionMode::Esle { f } else { f.without_cross_time() }))
}

/// Runs `cfg.runs` trajectories and returns the pooled statistics and observables.
pub fn run_ensemble(cfg: &SimulationConfig, opts: &RunOptions) -> Result<EnsembleResult> {
    let filters = prepare_filters(cfg)?;
    run_ensemble_with_filters(cfg, filters, opts)
}

/// As [`run_ensemble`] with filters built by the caller.
pub fn run_ensemble_with_filters(cfg: &SimulationConfig, filters: Option<FilterSet>, opts: &RunOptions) -> Result<EnsembleResult> {
    cfg.validate()?;
    if filters.as_ref().is_some_and(|f| f.grids != cfg.grids) {
        return Err(Error::Config("filters were built on different grids".into()));
    }
    let hash = cfg.config_hash();
    let batch = if opts.batch == 0 { 64 * rayon::current_num_threads().max(1) } else { opts.batch };
    let mut runner = Runner { cfg, synth: filters.map(Synthesizer::new), matched: None };

    let (mut stats, mut next) = match &opts.resume_from {
        Some(cp) => {
            if cp.config_hash != hash {
                return Err(Error::Checkpoint {
                    path: opts.checkpoint_path.clone().unwrap_or_default(),
                    reason: "config hash mismatch".into(),
                });
            }
            runner.matched = cp.matched_rho;
            (cp.stats.clone(), cp.next_index)
        }
        None => (EnsembleStats::empty(&hash, cfg.n_report()), 0),
    };
    if cfg.mode == EvolutionMode::SleMatched && runner.matched.is_none() {
        runner.matched = Some(matched_state(&runner, cfg.runs, batch)?);
    }

    while next < cfg.runs {
        let mut end = (next + batch as u64).min(cfg.runs);
        if cfg.checkpoint_every > 0 {
            let boundary = (next / cfg.checkpoint_every + 1) * cfg.checkpoint_every;
            end = end.min(boundary);
        }
        let outcomes: Vec<Result<Outcome>> = (next..end).into_par_iter().map(|r| runner.trajectory(r)).collect();
        for o in outcomes {
            match o? {
                Outcome::Accepted(traj) => stats.push(&traj)?,
                Outcome::Diverged => stats.push_diverged(),
            }
        }
        next = end;
        check_divergence(&stats, false)?;
        if let (Some(path), true) = (&opts.checkpoint_path, cfg.checkpoint_every > 0 && next % cfg.checkpoint_every == 0) {
            let cp = Checkpoint {
                version: CHECKPOINT_VERSION,
                config_hash: hash.clone(),
                grids: cfg.grids,
                next_index: next,
                stats: stats.clone(),
                matched_rho: runner.matched,
            };
            checkpoint(&cp, path)?;
        }
    }
    check_divergence(&stats, true)?;
    let series = stats.observables(&cfg.report_times());
    Ok(EnsembleResult { stats, series, matched_rho: runner.matched, filters: runner.synth.map(|s| s.filters().clone()) })
}

/// Statistics of trajectories `range` alone, for partial sums reduced with [`EnsembleStats::merge`].
///
/// `matched` is the averaged imaginary-time state required by `SLE_MATCHED`.
pub fn accumulate_range(
    cfg: &SimulationConfig,
    filters: Option<FilterSet>,
    matched: Option<Mat2>,
    range: std::ops::Range<u64>,
) -> Result<EnsembleStats> {
    cfg.validate()?;
    let runner = Runner { cfg, synth: filters.map(Synthesizer::new), matched };
    let mut stats = EnsembleStats::empty(&cfg.config_hash(), cfg.n_report());
    let outcomes: Vec<Result<Outcome>> = range.into_par_iter().map(|r| runner.trajectory(r)).collect();
    for o in outcomes {
        match o? {
            Outcome::Accepted(traj) => stats.push(&traj)?,
            Outcome::Diverged => stats.push_diverged(),
        }
    }
    Ok(stats)
}

/// Snapshot of the current state, for callers that checkpoint at the end of a run.
pub fn final_checkpoint(cfg: &SimulationConfig, result: &EnsembleResult) -> Checkpoint {
    Checkpoint {
        version: CHECKPOINT_VERSION,
        config_hash: cfg.config_hash(),
        grids: cfg.grids,
        next_index: result.stats.launched(),
        stats: result.stats.clone(),
        matched_rho: result.matched_rho,
    }
}

/// Estimated long-time limit of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub value: f64,
    pub stderr: f64,
    /// `false` when the damped-cosine fit was degenerate and the tail mean is reported.
    pub fitted: bool,
    pub gamma: f64,
    pub omega: f64,
    pub amplitude: f64,
}

/// Solves the linear part `y ≈ a e^{-γs} cos ωs + b e^{-γs} sin ωs + c`.
fn linear_fit(s: &[f64], y: &[f64], gamma: f64, omega: f64) -> Option<([f64; 3], f64, [[f64; 3]; 3])> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&si, &yi) in s.iter().zip(y) {
        let d = (-gamma * si).exp();
        let row = [d * (omega * si).cos(), d * (omega * si).sin(), 1.0];
        for a in 0..3 {
            aty[a] += row[a] * yi;
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert3(&ata)?;
    let coef: [f64; 3] = std::array::from_fn(|a| (0..3).map(|b| inv[a][b] * aty[b]).sum());
    let mut ss = 0.0;
    for (&si, &yi) in s.iter().zip(y) {
        let d = (-gamma * si).exp();
        let f = coef[0] * d * (omega * si).cos() + coef[1] * d * (omega * si).sin() + coef[2];
        ss += (yi - f) * (yi - f);
    }
    Some((coef, ss, inv))
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).powi(3);
    if !(det.abs() > 1e-12 * scale) {
        return None;
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Some(std::array::from_fn(|a| std::array::from_fn(|b| adj[a][b] / det)))
}

fn tail_mean(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Fits `A e^{-γ(t-t_w)} cos(ω(t-t_w) + φ) + C` to a window and returns `C`.
///
/// `ω` is seeded from a periodogram and refined with `γ` by Nelder–Mead on the
/// variable-projection residual; the linear coefficients are solved exactly for each trial.
/// The tail mean is returned instead when the fit is degenerate.
pub fn extrapolate_asymptote(t: &[f64], y: &[f64]) -> Result<Asymptote> {
    if t.len() != y.len() {
        return Err(Error::Config("time and value series differ in length".into()));
    }
    if y.len() < 20 {
        return Err(Error::InsufficientData(format!("asymptote fit needs at least 20 points, got {}", y.len())));
    }
    let (mean, mean_se) = tail_mean(y);
    let fallback = Asymptote { value: mean, stderr: mean_se, fitted: false, gamma: 0.0, omega: 0.0, amplitude: 0.0 };
    if y.iter().all(|&v| v == y[0]) {
        return Ok(Asymptote { value: y[0], stderr: 0.0, ..fallback });
    }
    let s: Vec<f64> = t.iter().map(|&v| v - t[0]).collect();
    let span = s[s.len() - 1];
    let ds = span / (s.len() - 1) as f64;
    if !(span > 0.0) {
        return Ok(fallback);
    }
    let w_max = std::f64::consts::PI / ds;
    let w_min = std::f64::consts::PI / span;

    let obj = |g: f64, w: f64| -> f64 {
        if !(g >= 0.0 && w >= 0.5 * w_min && w <= w_max) {
            return f64::INFINITY;
        }
        linear_fit(&s, y, g, w).map_or(f64::INFINITY, |(_, ss, _)| ss)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let n_w = 400;
    for i in 0..n_w {
        let w = w_min + (w_max - w_min) * i as f64 / (n_w - 1) as f64;
        for j in 0..12 {
            let g = if j == 0 { 0.0 } else { 0.05 * 2f64.powi(j) / span };
            let v = obj(g, w);
            if v < best.0 {
                best = (v, g, w);
            }
        }
    }
    if !best.0.is_finite() {
        return Ok(fallback);
    }
    let (g, w) = nelder_mead(|p| obj(p[0], p[1]), [best.1, best.2], [0.1 / span + best.1 * 0.1, (w_max - w_min) / n_w as f64]);
    let Some((coef, ss, inv)) = linear_fit(&s, y, g, w) else {
        return Ok(fallback);
    };
    let dof = (y.len() as f64 - 5.0).max(1.0);
    let sigma2 = ss / dof;
    let amp = coef[0].hypot(coef[1]);
    let scale = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let stderr = (sigma2 * inv[2][2]).max(0.0).sqrt();
    let identifiable = amp > 1e-9 * scale.max(1e-300)
        && g.is_finite()
        && g * span < 50.0
        && w > w_min
        && w < 0.98 * w_max
        && stderr.is_finite()
        && coef[2].is_finite();
    if !identifiable {
        return Ok(fallback);
    }
    Ok(Asymptote { value: coef[2], stderr, fitted: true, gamma: g, omega: w, amplitude: amp })
}

fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, x0: [f64; 2], step: [f64; 2]) -> (f64, f64) {
    let mut pts = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut vals = pts.map(&f);
    for _ in 0..400 {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (b, m, w) = (idx[0], idx[1], idx[2]);
        if (vals[w] - vals[b]).abs() <= 1e-15 * vals[b].abs().max(1e-300) {
            break;
        }
        let c = [(pts[b][0] + pts[m][0]) / 2.0, (pts[b][1] + pts[m][1]) / 2.0];
        let along = |t: f64| [c[0] + t * (pts[w][0] - c[0]), c[1] + t * (pts[w][1] - c[1])];
        let r = along(-1.0);
        let fr = f(r);
        if fr < vals[b] {
            let e = along(-2.0);
            let fe = f(e);
            if fe < fr {
                pts[w] = e;
                vals[w] = fe;
            } else {
                pts[w] = r;
                vals[w] = fr;
            }
        } else if fr < vals[m] {
            pts[w] = r;
            vals[w] = fr;
        } else {
            let k = along(0.5);
            let fk = f(k);
            if fk < vals[w] {
                pts[w] = k;
                vals[w] = fk;
            } else {
                for i in [m, w] {
                    pts[i] = [(pts[i][0] + pts[b][0]) / 2.0, (pts[i][1] + pts[b][1]) / 2.0];
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[best][0], pts[best][1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(seed: u64, n: usize) -> Vec<Mat2> {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n)
            .map(|_| {
                Mat2::new(
                    Complex64::new(0.5 + next(), next()),
                    Complex64::new(next(), next()),
                    Complex64::new(next(), next()),
                    Complex64::new(0.5 + next(), next()),
                )
            })
            .collect()
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let mut a = EnsembleStats::empty("h", 3);
        let mut b = EnsembleStats::empty("h", 3);
        for r in 0..10 {
            a.push(&traj(r, 3)).unwrap();
            b.push(&traj(100 + r, 3)).unwrap();
        }
        b.push_diverged();
        let e = EnsembleStats::empty("h", 3);
        assert_eq!(a.merge(&e).unwrap(), a);
        let ab = a.merge(&b).unwrap();
        let ba = b.merge(&a).unwrap();
        assert_eq!(ab.sum_rho, ba.sum_rho);
        assert_eq!(ab.sum_sq, ba.sum_sq);
        assert_eq!(ab.count, 20);
        assert_eq!(ab.diverged, 1);
        assert!(a.merge(&EnsembleStats::empty("other", 3)).is_err());
    }

    #[test]
    fn sequential_equals_partitioned() {
        let mut seq = EnsembleStats::empty("h", 2);
        let mut parts = Vec::new();
        for p in 0..10 {
            let mut part = EnsembleStats::empty("h", 2);
            for r in 0..100 {
                let t = traj(p * 100 + r, 2);
                seq.push(&t).unwrap();
                part.push(&t).unwrap();
            }
            parts.push(part);
        }
        let mut merged = EnsembleStats::empty("h", 2);
        for p in &parts {
            merged = merged.merge(p).unwrap();
        }
        for k in 0..2 {
            for e in 0..4 {
                let (x, y) = (seq.sum_rho[k].m[e], merged.sum_rho[k].m[e]);
                assert!((x - y).norm() <= 1e-12 * x.norm());
            }
            for a in 0..8 {
                assert!((seq.mean[k][a] - merged.mean[k][a]).abs() <= 1e-12 * seq.mean[k][a].abs().max(1e-3));
                for b in 0..8 {
                    let (x, y) = (seq.comoment[k][a][b], merged.comoment[k][a][b]);
                    assert!((x - y).abs() <= 1e-12 * seq.comoment[k][a][a].abs().max(seq.comoment[k][b][b].abs()));
                }
            }
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let mut st = EnsembleStats::empty("h", 1);
        let data: Vec<Vec<Mat2>> = (0..50).map(|r| traj(r, 1)).collect();
        for d in &data {
            st.push(d).unwrap();
        }
        let xs: Vec<[f64; 8]> = data.iter().map(|d| unpack(&d[0])).collect();
        let mean: [f64; 8] = std::array::from_fn(|a| xs.iter().map(|x| x[a]).sum::<f64>() / 50.0);
        for a in 0..8 {
            let v: f64 = xs.iter().map(|x| (x[a] - mean[a]).powi(2)).sum::<f64>();
            assert!((st.comoment[0][a][a] - v).abs() < 1e-12 * v);
        }
        let sem = st.entry_sem(0);
        assert!((sem[0] - (st.comoment[0][0][0] / 49.0 / 50.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn observables_of_pure_states() {
        let mut st = EnsembleStats::empty("h", 1);
        st.push(&[Mat2::from_real(2.0, 0.0, 0.0, 0.0)]).unwrap();
        st.push(&[Mat2::from_real(2.0, 0.0, 0.0, 0.0)]).unwrap();
        let o = st.observables(&[0.0]);
        assert_eq!(o.sz_mean[0], 1.0);
        assert_eq!(o.sx_mean[0], 0.0);
        assert_eq!(o.sz_sem[0], 0.0);
        assert_eq!(o.trace_mean[0], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn asymptote_constant_series() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = vec![0.42; 50];
        let a = extrapolate_asymptote(&t, &y).unwrap();
        assert_eq!(a.value, 0.42);
        assert_eq!(a.stderr, 0.0);
        assert!(extrapolate_asymptote(&t[..10], &y[..10]).is_err());
    }

    #[test]
    fn asymptote_damped_cosine_with_noise() {
        let mut s = 12345u64;
        let mut gauss = || {
            let mut u = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64
            };
            let (a, b) = (u(), u());
            (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
        };
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.025).collect();
        let y: Vec<f64> = t.iter().map(|&t| 0.3 * (-0.5 * t).exp() * (4.0 * t).cos() + 0.35 + 0.01 * gauss()).collect();
        let a = extrapolate_asymptote(&t, &y).unwrap();
        assert!(a.fitted);
        assert!((a.value - 0.35).abs() < 0.01, "{a:?}");
        assert!((a.omega - 4.0).abs() < 0.1 && (a.gamma - 0.5).abs() < 0.1);
    }

    #[test]
    fn asymptote_undamped_cosine() {
        let period = 2.0 * std::f64::consts::PI / 3.0;
        let t: Vec<f64> = (0..600).map(|i| i as f64 * 5.0 * period / 599.0).collect();
        let y: Vec<f64> = t.iter().map(|&t| 0.2 * (3.0 * t + 0.4).cos() - 0.1).collect();
        let a = extrapolate_asymptote(&t, &y).unwrap();
        assert!((a.value + 0.1).abs() < 1e-3, "{a:?}");
    }
}
