//! White-noise draws, correlated noise synthesis and covariance verification.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::FftPair;
use crate::error::{Error, Result};
use crate::filters::FilterSet;
use crate::grid::TimeGrids;
use crate::kernels::KernelTable;
use crate::rng::{substream, StreamId};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Six independent white-noise vectors with per-entry variance `1/δ`.
///
/// `x1` covers the whole real-time DFT circle and `xb1` the whole doubled imaginary period,
/// so the circulant filters act on a stationary input. The remaining streams live on the
/// grid points only.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteDraw {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub xb1: Vec<f64>,
    pub xb2: Vec<f64>,
    pub xb3: Vec<f64>,
}

fn gaussian(seed: u64, trajectory: u64, stream: StreamId, len: usize, sd: f64) -> Vec<f64> {
    let mut rng = substream(seed, trajectory, stream);
    (0..len).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draws the white noise of one trajectory from its dedicated substreams.
pub fn draw_whites(seed: u64, trajectory: u64, grids: &TimeGrids) -> WhiteDraw {
    let sd_t = 1.0 / grids.dt.sqrt();
    let sd_tau = 1.0 / grids.dtau.sqrt();
    let n = grids.n_points();
    let m = grids.m_points();
    WhiteDraw {
        x1: gaussian(seed, trajectory, StreamId::X1, grids.real_pad_len(), sd_t),
        x2: gaussian(seed, trajectory, StreamId::X2, n, sd_t),
        x3: gaussian(seed, trajectory, StreamId::X3, n, sd_t),
        xb1: gaussian(seed, trajectory, StreamId::XBar1, grids.imag_period_len(), sd_tau),
        xb2: gaussian(seed, trajectory, StreamId::XBar2, m, sd_tau),
        xb3: gaussian(seed, trajectory, StreamId::XBar3, m, sd_tau),
    }
}

/// The imaginary-time streams of [`draw_whites`] alone; the real-time vectors are left empty.
pub fn draw_imaginary_whites(seed: u64, trajectory: u64, grids: &TimeGrids) -> WhiteDraw {
    let sd_tau = 1.0 / grids.dtau.sqrt();
    let m = grids.m_points();
    WhiteDraw {
        x1: Vec::new(),
        x2: Vec::new(),
        x3: Vec::new(),
        xb1: gaussian(seed, trajectory, StreamId::XBar1, grids.imag_period_len(), sd_tau),
        xb2: gaussian(seed, trajectory, StreamId::XBar2, m, sd_tau),
        xb3: gaussian(seed, trajectory, StreamId::XBar3, m, sd_tau),
    }
}

/// One draw of `η(t_i)`, `ν(t_i)` and `μ̄(τ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub eta: Vec<Complex64>,
    pub nu: Vec<Complex64>,
    pub mu: Vec<Complex64>,
}

/// Applies a fixed [`FilterSet`] to white draws.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    filters: FilterSet,
    real_fft: FftPair,
    imag_fft: FftPair,
}

impl Synthesizer {
    pub fn new(filters: FilterSet) -> Self {
        let real_fft = FftPair::new(filters.pad_len);
        let imag_fft = FftPair::new(filters.grids.imag_period_len());
        Self { filters, real_fft, imag_fft }
    }

    pub fn filters(&self) -> &FilterSet {
        &self.filters
    }

    pub fn grids(&self) -> &TimeGrids {
        &self.filters.grids
    }

    fn check(&self, w: &WhiteDraw) -> Result<()> {
        let g = &self.filters.grids;
        let ok = w.x1.len() == self.filters.pad_len && w.x2.len() == g.n_points() && w.x3.len() == g.n_points();
        if ok {
            self.check_imag(w)
        } else {
            Err(Error::Config("white draw does not match the filter grids".into()))
        }
    }

    fn check_imag(&self, w: &WhiteDraw) -> Result<()> {
        let g = &self.filters.grids;
        let ok = w.xb1.len() == g.imag_period_len() && w.xb2.len() == g.m_points() && w.xb3.len() == g.m_points();
        if ok {
            Ok(())
        } else {
            Err(Error::Config("white draw does not match the filter grids".into()))
        }
    }

    /// Noise for the real-time stage only (`mu` left empty).
    pub fn synthesize_real(&self, w: &WhiteDraw) -> Result<NoiseRealization> {
        self.check(w)?;
        let f = &self.filters;
        let g = &f.grids;
        let n = g.n_points();
        let l = f.pad_len;
        let cw = f.companion_weight;

        let mut x1: Vec<Complex64> = w.x1.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.real_fft.forward(&mut x1);
        let mut y = vec![ZERO; l];
        for i in 0..n {
            y[i] = Complex64::new(w.x2[i], w.x3[i]);
        }
        self.real_fft.forward(&mut y);
        let sd = g.dt.sqrt();
        for k in 0..l {
            x1[k] = x1[k] * (sd * f.g_eta_eta_spectrum[k]) + y[k] * f.g_eta_nu_spectrum[k] * g.dt;
        }
        self.real_fft.inverse(&mut x1);
        let mut eta = x1;
        eta.truncate(n);

        if f.has_cross_time() {
            let mp = g.m_points();
            let xb: Vec<Complex64> = (0..mp).map(|j| Complex64::new(w.xb2[j], w.xb3[j])).collect();
            for (i, e) in eta.iter_mut().enumerate() {
                let row = &f.g_eta_mu_matrix[i * mp..(i + 1) * mp];
                let mut s = ZERO;
                for (gv, xv) in row.iter().zip(&xb) {
                    s += gv * xv;
                }
                *e += s * g.dtau;
            }
        }
        let nu = (0..n).map(|i| Complex64::new(w.x3[i], w.x2[i]) * cw).collect();
        Ok(NoiseRealization { eta, nu, mu: Vec::new() })
    }

    /// Imaginary-time noise `μ̄(τ_j)` only.
    pub fn synthesize_mu(&self, w: &WhiteDraw) -> Result<Vec<Complex64>> {
        self.check_imag(w)?;
        let f = &self.filters;
        let g = &f.grids;
        let mut xb: Vec<Complex64> = w.xb1.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.imag_fft.forward(&mut xb);
        for (v, s) in xb.iter_mut().zip(&f.g_mu_mu_spectrum) {
            *v *= *s;
        }
        self.imag_fft.inverse(&mut xb);
        let sd = g.dtau.sqrt();
        let cw = f.companion_weight;
        Ok((0..g.m_points())
            .map(|j| Complex64::new(xb[j].re * sd, 0.0) + Complex64::new(w.xb3[j], w.xb2[j]) * cw)
            .collect())
    }

    /// Full realization of all three processes.
    pub fn synthesize(&self, w: &WhiteDraw) -> Result<NoiseRealization> {
        let mut r = self.synthesize_real(w)?;
        r.mu = self.synthesize_mu(w)?;
        Ok(r)
    }

    /// The same realization by explicit `O(N²)` sums over time-domain filters.
    pub fn synthesize_direct(&self, w: &WhiteDraw) -> Result<NoiseRealization> {
        self.check(w)?;
        let f = &self.filters;
        let g = &f.grids;
        let n = g.n_points();
        let l = f.pad_len;
        let mut gee: Vec<Complex64> = f.g_eta_eta_spectrum.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.real_fft.inverse(&mut gee);
        let mut gen = f.g_eta_nu_spectrum.clone();
        self.real_fft.inverse(&mut gen);
        let mut gmm: Vec<Complex64> = f.g_mu_mu_spectrum.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.imag_fft.inverse(&mut gmm);
        let lm = gmm.len();
        let cw = f.companion_weight;

        let mut eta = vec![ZERO; n];
        for (i, e) in eta.iter_mut().enumerate() {
            let mut a = 0.0;
            for (j, &x) in w.x1.iter().enumerate() {
                a += gee[(i + l - j) % l].re * x;
            }
            let mut b = ZERO;
            for j in 0..=i {
                b += gen[i - j] * Complex64::new(w.x2[j], w.x3[j]);
            }
            let mut c = ZERO;
            for j in 0..g.m_points() {
                c += f.eta_mu(i, j) * Complex64::new(w.xb2[j], w.xb3[j]);
            }
            *e = Complex64::new(a * g.dt.sqrt(), 0.0) + b * g.dt + c * g.dtau;
        }
        let nu = (0..n).map(|i| Complex64::new(w.x3[i], w.x2[i]) * cw).collect();
        let mu = (0..g.m_points())
            .map(|j| {
                let mut a = 0.0;
                for (k, &x) in w.xb1.iter().enumerate() {
                    a += gmm[(j + lm - k) % lm].re * x;
                }
                Complex64::new(a * g.dtau.sqrt(), 0.0) + Complex64::new(w.xb3[j], w.xb2[j]) * cw
            })
            .collect();
        Ok(NoiseRealization { eta, nu, mu })
    }
}

/// Running bilinear sums `Σ_r a_r(i) b_r(k)` of the six correlators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceAccumulator {
    pub n: usize,
    pub m: usize,
    pub count: u64,
    pub eta_eta: Vec<Complex64>,
    pub eta_nu: Vec<Complex64>,
    pub mu_mu: Vec<Complex64>,
    pub eta_mu: Vec<Complex64>,
    pub nu_nu: Vec<Complex64>,
    pub nu_mu: Vec<Complex64>,
}

fn outer_add(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64]) {
    let nb = b.len();
    for (i, x) in a.iter().enumerate() {
        let row = &mut acc[i * nb..(i + 1) * nb];
        for (r, y) in row.iter_mut().zip(b) {
            *r += x * y;
        }
    }
}

fn add_into(a: &mut [Complex64], b: &[Complex64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

impl CovarianceAccumulator {
    pub fn new(grids: &TimeGrids) -> Self {
        let n = grids.n_points();
        let m = grids.m_points();
        Self {
            n,
            m,
            count: 0,
            eta_eta: vec![ZERO; n * n],
            eta_nu: vec![ZERO; n * n],
            mu_mu: vec![ZERO; m * m],
            eta_mu: vec![ZERO; n * m],
            nu_nu: vec![ZERO; n * n],
            nu_mu: vec![ZERO; n * m],
        }
    }

    pub fn push(&mut self, r: &NoiseRealization) -> Result<()> {
        if r.eta.len() != self.n || r.nu.len() != self.n || r.mu.len() != self.m {
            return Err(Error::Config("realization length does not match the accumulator".into()));
        }
        outer_add(&mut self.eta_eta, &r.eta, &r.eta);
        outer_add(&mut self.eta_nu, &r.eta, &r.nu);
        outer_add(&mut self.mu_mu, &r.mu, &r.mu);
        outer_add(&mut self.eta_mu, &r.eta, &r.mu);
        outer_add(&mut self.nu_nu, &r.nu, &r.nu);
        outer_add(&mut self.nu_mu, &r.nu, &r.mu);
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, o: &Self) -> Result<()> {
        if self.n != o.n || self.m != o.m {
            return Err(Error::Config("cannot merge accumulators of different shape".into()));
        }
        add_into(&mut self.eta_eta, &o.eta_eta);
        add_into(&mut self.eta_nu, &o.eta_nu);
        add_into(&mut self.mu_mu, &o.mu_mu);
        add_into(&mut self.eta_mu, &o.eta_mu);
        add_into(&mut self.nu_nu, &o.nu_nu);
        add_into(&mut self.nu_mu, &o.nu_mu);
        self.count += o.count;
        Ok(())
    }

    /// Sample mean of the named correlator.
    pub fn mean(&self, which: Correlator) -> Vec<Complex64> {
        let s = 1.0 / self.count.max(1) as f64;
        let src = match which {
            Correlator::EtaEta => &self.eta_eta,
            Correlator::EtaNu => &self.eta_nu,
            Correlator::MuMu => &self.mu_mu,
            Correlator::EtaMu => &self.eta_mu,
            Correlator::NuNu => &self.nu_nu,
            Correlator::NuMu => &self.nu_mu,
        };
        src.iter().map(|v| v * s).collect()
    }

    /// Compares the sample correlators with the kernels.
    pub fn report(&self, kernels: &KernelTable) -> Result<CovarianceReport> {
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "covariance estimate needs at least 2 realizations, have {}",
                self.count
            )));
        }
        let (n, m) = (self.n, self.m);
        let rms = |c: Correlator, dev: &dyn Fn(usize, usize, Complex64) -> f64, rows: usize, cols: usize| {
            let mean = self.mean(c);
            let mut s = 0.0;
            for i in 0..rows {
                for k in 0..cols {
                    let d = dev(i, k, mean[i * cols + k]);
                    s += d * d;
                }
            }
            (s / (rows * cols) as f64).sqrt()
        };
        let rms_eta_eta = rms(
            Correlator::EtaEta,
            &|i, k, v| v.re - kernels.eta_eta(i as isize - k as isize),
            n,
            n,
        );
        let rms_eta_nu = rms(
            Correlator::EtaNu,
            &|i, k, v| (v - kernels.eta_nu(i as isize - k as isize)).norm(),
            n,
            n,
        );
        let rms_mu_mu = rms(
            Correlator::MuMu,
            &|j, l, v| v.re - kernels.mu_mu(j as isize - l as isize),
            m,
            m,
        );
        let rms_eta_mu = rms(Correlator::EtaMu, &|i, j, v| (v - kernels.eta_mu(i, j)).norm(), n, m);
        let max_abs = |c| self.mean(c).iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(CovarianceReport {
            runs: self.count,
            rms_eta_eta,
            rms_eta_nu,
            rms_mu_mu,
            rms_eta_mu,
            max_nu_nu: max_abs(Correlator::NuNu),
            max_nu_mu: max_abs(Correlator::NuMu),
            k_eta_eta_0: kernels.eta_eta(0),
        })
    }
}

/// Names of the estimated correlators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correlator {
    EtaEta,
    EtaNu,
    MuMu,
    EtaMu,
    NuNu,
    NuMu,
}

/// RMS deviations of the estimated correlators from their kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub runs: u64,
    /// Real part against `K_ηη`.
    pub rms_eta_eta: f64,
    /// Complex magnitude against `K_ην`.
    pub rms_eta_nu: f64,
    /// Real part against `K_μ̄μ̄`.
    pub rms_mu_mu: f64,
    /// Complex magnitude against `K_ημ̄`.
    pub rms_eta_mu: f64,
    pub max_nu_nu: f64,
    pub max_nu_mu: f64,
    pub k_eta_eta_0: f64,
}

impl CovarianceReport {
    pub fn max_zero_correlator(&self) -> f64 {
        self.max_nu_nu.max(self.max_nu_mu)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |a, &(x, y)| (a.0 + x.ln(), a.1 + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x.ln() - mx) * (y.ln() - my);
        sxx += (x.ln() - mx) * (x.ln() - mx);
    }
    sxy / sxx
}

const CHUNK: u64 = 256;

/// Generates `max(checkpoints)` realizations and reports at each requested run count.
///
/// Realizations are produced in parallel in fixed chunks and folded in index order, so the
/// result does not depend on the thread count.
pub fn verify_noise(
    synth: &Synthesizer,
    kernels: &KernelTable,
    seed: u64,
    checkpoints: &[u64],
) -> Result<Vec<CovarianceReport>> {
    verify_noise_with_sums(synth, kernels, seed, checkpoints).map(|(r, _)| r)
}

/// As [`verify_noise`], also returning the sums at the largest run count.
pub fn verify_noise_with_sums(
    synth: &Synthesizer,
    kernels: &KernelTable,
    seed: u64,
    checkpoints: &[u64],
) -> Result<(Vec<CovarianceReport>, CovarianceAccumulator)> {
    let mut marks: Vec<u64> = checkpoints.to_vec();
    marks.sort_unstable();
    marks.dedup();
    let total = *marks.last().ok_or_else(|| Error::InsufficientData("no run counts requested".into()))?;
    let grids = *synth.grids();
    let mut acc = CovarianceAccumulator::new(&grids);
    let mut out = Vec::new();
    let mut next_mark = 0;
    let mut start = 0u64;
    let batch = CHUNK * rayon::current_num_threads().max(1) as u64;
    while start < total {
        let end = (start + batch).min(total);
        // split at report marks so every mark sees exactly its prefix
        let end = marks.iter().copied().find(|&mk| mk > start && mk < end).unwrap_or(end);
        let chunks: Vec<(u64, u64)> = (start..end)
            .step_by(CHUNK as usize)
            .map(|a| (a, (a + CHUNK).min(end)))
            .collect();
        let parts: Vec<Result<CovarianceAccumulator>> = chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut part = CovarianceAccumulator::new(&grids);
                for r in a..b {
                    let w = draw_whites(seed, r, &grids);
                    part.push(&synth.synthesize(&w)?)?;
                }
                Ok(part)
            })
            .collect();
        for p in parts {
            acc.merge(&p?)?;
        }
        start = end;
        while next_mark < marks.len() && marks[next_mark] == start {
            out.push(acc.report(kernels)?);
            next_mark += 1;
        }
    }
    Ok((out, acc))
}

/// Draws and accumulates `runs` realizations, returning the raw sums.
pub fn accumulate(synth: &Synthesizer, seed: u64, runs: u64) -> Result<CovarianceAccumulator> {
    let grids = *synth.grids();
    let chunks: Vec<(u64, u64)> = (0..runs).step_by(CHUNK as usize).map(|a| (a, (a + CHUNK).min(runs))).collect();
    let parts: Vec<Result<CovarianceAccumulator>> = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut part = CovarianceAccumulator::new(&grids);
            for r in a..b {
                part.push(&synth.synthesize(&draw_whites(seed, r, &grids))?)?;
            }
            Ok(part)
        })
        .collect();
    let mut acc = CovarianceAccumulator::new(&grids);
    for p in parts {
        acc.merge(&p?)?;
    }
    Ok(acc)
}
