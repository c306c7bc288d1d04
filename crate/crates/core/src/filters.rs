//! Filtering kernels obtained from the physical kernels.
//!
//! Stationary kernels are factorized on a circle: the sampled kernel is extended to a real
//! even periodic sequence, transformed, clamped at zero and square-rooted. Cross kernels put
//! all their structure in one filter and use the discrete delta for the companion.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convolution::FftPair;
use crate::error::{Error, Result};
use crate::grid::TimeGrids;
use crate::kernels::KernelTable;

const CLAMP_REL: f64 = 1e-6;

/// Record of negative DFT bins removed during factorization.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClampReport {
    /// Most negative bin value, or 0 if none were negative.
    pub most_negative: f64,
    pub index: usize,
    pub max_bin: f64,
    pub clamped_bins: usize,
}

/// Filtering kernels for one pair of grids.
#[derive(Debug, Clone)]
pub struct FilterSet {
    pub grids: TimeGrids,
    /// Real-time DFT length.
    pub pad_len: usize,
    /// `sqrt(DFT(K_ηη))` over `pad_len` bins.
    pub g_eta_eta_spectrum: Vec<f64>,
    /// `sqrt(DFT(K_μ̄μ̄))` over the `2M` bins of `[-βħ, βħ)`.
    pub g_mu_mu_spectrum: Vec<f64>,
    /// `-(i/2) DFT(K_ην)` over `pad_len` bins, lags zero-padded.
    pub g_eta_nu_spectrum: Vec<Complex64>,
    /// Row-major `(N+1) × (M+1)`, `K_ημ̄ / (2i)`.
    pub g_eta_mu_matrix: Vec<Complex64>,
    /// Weight of the discrete-delta companions `G_νη` and `G_μ̄η` (1, or 0 for a zero bath).
    pub companion_weight: f64,
    pub eta_eta_clamp: ClampReport,
    pub mu_mu_clamp: ClampReport,
}

impl FilterSet {
    pub fn eta_mu(&self, i: usize, j: usize) -> Complex64 {
        self.g_eta_mu_matrix[i * self.grids.m_points() + j]
    }

    /// Copy with the cross-time filter removed, as used by the partitioned SLE modes.
    pub fn without_cross_time(&self) -> Self {
        let mut f = self.clone();
        f.g_eta_mu_matrix.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        f
    }

    pub fn has_cross_time(&self) -> bool {
        self.g_eta_mu_matrix.iter().any(|v| v.norm() != 0.0)
    }
}

/// Square root of the spectrum of a real even periodic sequence.
fn factorize(seq: &[f64], kernel: &'static str) -> Result<(Vec<f64>, ClampReport)> {
    let fft = FftPair::new(seq.len());
    let mut buf: Vec<Complex64> = seq.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    let max_bin = buf.iter().map(|v| v.re).fold(0.0, f64::max);
    let mut report = ClampReport { max_bin, ..Default::default() };
    let mut out = Vec::with_capacity(buf.len());
    for (k, v) in buf.iter().enumerate() {
        if v.re < 0.0 {
            report.clamped_bins += 1;
            if v.re < report.most_negative {
                report.most_negative = v.re;
                report.index = k;
            }
        }
        out.push(v.re.max(0.0).sqrt());
    }
    if report.most_negative < -CLAMP_REL * max_bin {
        return Err(Error::Factorization {
            kernel,
            most_negative: report.most_negative,
            index: report.index,
            max_bin,
        });
    }
    Ok((out, report))
}

/// Real even periodic extension of `K_ηη` over `grids.real_pad_len()` points.
pub fn extend_eta_eta(kernel: &KernelTable, grids: &TimeGrids) -> Result<Vec<f64>> {
    let l = grids.real_pad_len();
    if kernel.k_eta_eta.len() < l / 2 + 1 {
        return Err(Error::Config(format!(
            "K_eta_eta table has {} lags, circulant of length {l} needs {}",
            kernel.k_eta_eta.len(),
            l / 2 + 1
        )));
    }
    let mut c = vec![0.0; l];
    for k in 0..=l / 2 {
        c[k] = kernel.k_eta_eta[k];
        c[(l - k) % l] = kernel.k_eta_eta[k];
    }
    Ok(c)
}

/// Real even periodic extension of `K_μ̄μ̄` over the `2M` points of `[-βħ, βħ)`.
pub fn extend_mu_mu(kernel: &KernelTable, grids: &TimeGrids) -> Vec<f64> {
    let m = grids.m_steps as isize;
    let l = 2 * grids.m_steps;
    let mut c = vec![0.0; l];
    for lag in -m..m {
        c[lag.rem_euclid(l as isize) as usize] = kernel.mu_mu(lag);
    }
    c
}

pub fn build_g_eta_eta(kernel: &KernelTable, grids: &TimeGrids) -> Result<(Vec<f64>, ClampReport)> {
    check_grids(kernel, grids)?;
    factorize(&extend_eta_eta(kernel, grids)?, "K_eta_eta")
}

pub fn build_g_mu_mu(kernel: &KernelTable, grids: &TimeGrids) -> Result<(Vec<f64>, ClampReport)> {
    check_grids(kernel, grids)?;
    factorize(&extend_mu_mu(kernel, grids), "K_mu_mu")
}

pub fn build_g_eta_nu(kernel: &KernelTable, grids: &TimeGrids) -> Result<Vec<Complex64>> {
    check_grids(kernel, grids)?;
    let l = grids.real_pad_len();
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    for (k, v) in kernel.k_eta_nu.iter().enumerate() {
        buf[k] = v * Complex64::new(0.0, -0.5);
    }
    FftPair::new(l).forward(&mut buf);
    Ok(buf)
}

pub fn build_g_eta_mu(kernel: &KernelTable) -> Vec<Complex64> {
    let inv_2i = Complex64::new(0.0, -0.5);
    kernel.k_eta_mu.iter().map(|v| v * inv_2i).collect()
}

fn check_grids(kernel: &KernelTable, grids: &TimeGrids) -> Result<()> {
    if kernel.grids != *grids {
        return Err(Error::Config("kernel table was built on different grids".into()));
    }
    Ok(())
}

fn is_zero(kernel: &KernelTable) -> bool {
    kernel.k_eta_eta.iter().all(|&v| v == 0.0)
        && kernel.k_mu_mu.iter().all(|&v| v == 0.0)
        && kernel.k_eta_nu.iter().all(|v| v.norm() == 0.0)
        && kernel.k_eta_mu.iter().all(|v| v.norm() == 0.0)
}

/// Builds every filter from a kernel table.
pub fn build_filters(kernel: &KernelTable) -> Result<FilterSet> {
    let grids = kernel.grids;
    let (g_eta_eta_spectrum, eta_eta_clamp) = build_g_eta_eta(kernel, &grids)?;
    let (g_mu_mu_spectrum, mu_mu_clamp) = build_g_mu_mu(kernel, &grids)?;
    Ok(FilterSet {
        grids,
        pad_len: grids.real_pad_len(),
        g_eta_eta_spectrum,
        g_mu_mu_spectrum,
        g_eta_nu_spectrum: build_g_eta_nu(kernel, &grids)?,
        g_eta_mu_matrix: build_g_eta_mu(kernel),
        companion_weight: if is_zero(kernel) { 0.0 } else { 1.0 },
        eta_eta_clamp,
        mu_mu_clamp,
    })
}
