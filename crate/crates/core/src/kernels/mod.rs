//! Ohmic spectral density and the four bath correlation kernels.
//!
//! All kernels are integrals of `I(ω)` against elementary weights. They are split into
//! Laplace transforms `P(p) = ∫_0^∞ I(ω) e^{-pω} dω` (Re p ≥ 0), which carry the slowly
//! decaying algebraic tail, plus remainders that decay at least like `e^{-βħω}`. The
//! remainders and the finite part of `P` use composite Gauss–Legendre on `[0, Ω]`; the tail of
//! `P` beyond `Ω` is summed exactly as a series of generalized exponential integrals.

mod expint;
mod quadrature;

pub use expint::{expint, expint_family};
pub use quadrature::{composite, gauss_legendre};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::TimeGrids;

const GL_ORDER: usize = 16;
const TAIL_TERMS: usize = 8;
const REL_TOL: f64 = 1e-9;
const MAX_DOUBLINGS: usize = 6;
const RESYNC: usize = 256;

/// Bath and thermodynamic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub alpha: f64,
    pub omega_c: f64,
    pub beta: f64,
    pub hbar: f64,
}

impl BathSpec {
    pub fn new(alpha: f64, omega_c: f64, beta: f64, hbar: f64) -> Result<Self> {
        let s = Self { alpha, omega_c, beta, hbar };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !ok(self.omega_c) {
            return Err(Error::Domain(format!("omega_c must be > 0, got {}", self.omega_c)));
        }
        if !ok(self.beta) {
            return Err(Error::Domain(format!("beta must be > 0, got {}", self.beta)));
        }
        if !ok(self.hbar) {
            return Err(Error::Domain(format!("hbar must be > 0, got {}", self.hbar)));
        }
        Ok(())
    }

    /// Length of the imaginary-time domain.
    pub fn beta_hbar(&self) -> f64 {
        self.beta * self.hbar
    }

    /// `ħ α ω_c² / π`, the natural magnitude of every kernel.
    fn scale(&self) -> f64 {
        self.hbar * self.alpha * self.omega_c * self.omega_c / PI
    }
}

#[inline]
fn density(alpha: f64, omega_c: f64, omega: f64) -> f64 {
    let r = omega / omega_c;
    let d = 1.0 + r * r;
    alpha * omega / (d * d)
}

/// `I(ω) = α ω (1 + (ω/ω_c)²)^{-2}`.
pub fn ohmic_spectral_density(omega: f64, spec: &BathSpec) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!("frequency must be >= 0, got {omega}")));
    }
    Ok(density(spec.alpha, spec.omega_c, omega))
}

/// Frequency quadrature bound to one bath, sized for lags up to `t_max`.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    spec: BathSpec,
    cutoff: f64,
    panels: usize,
    omega: Vec<f64>,
    /// `w_k I(ω_k)`
    wi: Vec<f64>,
    /// `w_k I(ω_k) / (1 - e^{-βħω_k})`
    wg: Vec<f64>,
}

impl KernelEvaluator {
    /// Builds the default rule for lags up to `t_max`.
    pub fn new(spec: &BathSpec, t_max: f64) -> Result<Self> {
        spec.validate()?;
        let b = spec.beta_hbar();
        let cutoff = (10.0 * spec.omega_c).max(36.0 / b);
        let mut h = (0.5 * spec.omega_c).min(PI / b);
        if t_max > 0.0 {
            h = h.min(8.0 / t_max);
        }
        let panels = (cutoff / h).ceil().max(1.0) as usize;
        Ok(Self::with_panels(spec, panels))
    }

    /// Builds a rule with an explicit panel count on `[0, Ω]`.
    pub fn with_panels(spec: &BathSpec, panels: usize) -> Self {
        let b = spec.beta_hbar();
        let cutoff = (10.0 * spec.omega_c).max(36.0 / b);
        let (omega, w) = composite(0.0, cutoff, panels, GL_ORDER);
        let mut wi = Vec::with_capacity(omega.len());
        let mut wg = Vec::with_capacity(omega.len());
        for (&om, &wk) in omega.iter().zip(&w) {
            let i = density(spec.alpha, spec.omega_c, om);
            wi.push(wk * i);
            if om < 1e-6 * spec.omega_c {
                wg.push(wk * spec.alpha / b);
            } else {
                wg.push(wk * (i / -(-om * b).exp_m1()));
            }
        }
        Self { spec: *spec, cutoff, panels, omega, wi, wg }
    }

    pub fn spec(&self) -> &BathSpec {
        &self.spec
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn nodes(&self) -> usize {
        self.omega.len()
    }

    /// Same cutoff, twice the panels.
    pub fn refined(&self) -> Self {
        Self::with_panels(&self.spec, 2 * self.panels)
    }

    /// `∫_Ω^∞ I(ω) e^{-pω} dω`, exact up to the truncated binomial series.
    fn tail(&self, p: Complex64) -> Complex64 {
        let z = p * self.cutoff;
        if z.re > 700.0 || self.spec.alpha == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let r = (self.spec.omega_c / self.cutoff).powi(2);
        let fam = expint_family((3 + 2 * (TAIL_TERMS - 1)) as u32, z);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut rk = r;
        for k in 0..TAIL_TERMS {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += fam[2 + 2 * k] * (sign * (k + 1) as f64 * rk);
            rk *= r;
        }
        sum * (self.spec.alpha * self.spec.omega_c * self.spec.omega_c)
    }

    /// `P(p) = ∫_0^∞ I(ω) e^{-pω} dω` for `Re p >= 0`.
    pub fn laplace(&self, p: Complex64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (&om, &wi) in self.omega.iter().zip(&self.wi) {
            s += (-p * om).exp() * wi;
        }
        s + self.tail(p)
    }

    fn laplace_real(&self, p: f64) -> f64 {
        let mut s = 0.0;
        for (&om, &wi) in self.omega.iter().zip(&self.wi) {
            s += wi * (-p * om).exp();
        }
        s + self.tail(Complex64::new(p, 0.0)).re
    }

    /// `K_ηη(t) = (ħ/π) ∫ I(ω) coth(βħω/2) cos(ωt) dω`.
    pub fn k_eta_eta(&self, t: f64) -> f64 {
        let t = t.abs();
        let b = self.spec.beta_hbar();
        let mut thermal = 0.0;
        for (&om, &wg) in self.omega.iter().zip(&self.wg) {
            thermal += 2.0 * wg * (-om * b).exp() * (om * t).cos();
        }
        let p = self.laplace(Complex64::new(0.0, -t)).re;
        self.spec.hbar / PI * (p + thermal)
    }

    /// `K_ην(t) = -2iΘ(t)(1/π) ∫ I(ω) sin(ωt) dω`, with `Θ(0) = 0`.
    pub fn k_eta_nu(&self, t: f64) -> Complex64 {
        if t <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let im = self.laplace(Complex64::new(0.0, -t)).im;
        Complex64::new(0.0, -2.0 / PI * im)
    }

    /// `K_μ̄μ̄(s) = (ħ/π) ∫ I(ω) cosh(ω(βħ/2 - |s|)) / sinh(βħω/2) dω` for `|s| <= βħ`.
    pub fn k_mu_mu(&self, s: f64) -> Result<f64> {
        let b = self.spec.beta_hbar();
        let a = s.abs();
        if !(a <= b * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("imaginary lag {s} outside [-{b}, {b}]")));
        }
        let a = a.min(b);
        let mut rem = 0.0;
        for (&om, &wg) in self.omega.iter().zip(&self.wg) {
            rem += wg * ((-om * (2.0 * b - a)).exp() + (-om * (b + a)).exp());
        }
        let p = self.laplace_real(a) + self.laplace_real(b - a);
        Ok(self.spec.hbar / PI * (p + rem))
    }

    /// `K_ημ̄(t - iτ) = -(ħ/π) ∫ I(ω) cosh(ω(βħ/2 - τ - it)) / sinh(βħω/2) dω`.
    pub fn k_eta_mu(&self, t: f64, tau: f64) -> Result<Complex64> {
        let b = self.spec.beta_hbar();
        if !(tau >= -1e-12 * b && tau <= b * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("imaginary time {tau} outside [0, {b}]")));
        }
        let tau = tau.clamp(0.0, b);
        let mut rem = Complex64::new(0.0, 0.0);
        for (&om, &wg) in self.omega.iter().zip(&self.wg) {
            let ph = Complex64::from_polar(1.0, om * t);
            rem += (ph.conj() * (-om * (tau + b)).exp() + ph * (-om * (2.0 * b - tau)).exp()) * wg;
        }
        let p = self.laplace(Complex64::new(tau, t)) + self.laplace(Complex64::new(b - tau, -t));
        Ok((p + rem) * (-self.spec.hbar / PI))
    }
}

fn within_tol(coarse: f64, fine: f64, scale: f64) -> bool {
    (fine - coarse).abs() <= REL_TOL * fine.abs().max(1e-3 * scale)
}

/// Evaluates `f` with panel doubling until two successive rules agree.
fn converged<F>(spec: &BathSpec, t_max: f64, what: &str, f: F) -> Result<Complex64>
where
    F: Fn(&KernelEvaluator) -> Result<Complex64>,
{
    let scale = spec.scale();
    let mut ev = KernelEvaluator::new(spec, t_max)?;
    let mut prev = f(&ev)?;
    let mut est = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        ev = ev.refined();
        let next = f(&ev)?;
        est = (next - prev).norm();
        if within_tol(prev.re, next.re, scale) && within_tol(prev.im, next.im, scale) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature { what: what.to_string(), estimate: est })
}

/// `K_ηη(t)`; even in `t`.
pub fn k_eta_eta(t_lag: f64, spec: &BathSpec) -> Result<f64> {
    if spec.alpha == 0.0 {
        spec.validate()?;
        return Ok(0.0);
    }
    let what = format!("K_eta_eta at t = {t_lag}");
    Ok(converged(spec, t_lag.abs(), &what, |e| Ok(e.k_eta_eta(t_lag).into()))?.re)
}

/// `K_ην(t)`; purely imaginary, zero for `t <= 0`.
pub fn k_eta_nu(t_lag: f64, spec: &BathSpec) -> Result<Complex64> {
    spec.validate()?;
    if spec.alpha == 0.0 || t_lag <= 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let what = format!("K_eta_nu at t = {t_lag}");
    converged(spec, t_lag, &what, |e| Ok(e.k_eta_nu(t_lag)))
}

/// `K_μ̄μ̄(s)` for `|s| <= βħ`.
pub fn k_mu_mu(tau_lag: f64, spec: &BathSpec) -> Result<f64> {
    spec.validate()?;
    let b = spec.beta_hbar();
    if !(tau_lag.abs() <= b * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("imaginary lag {tau_lag} outside [-{b}, {b}]")));
    }
    if spec.alpha == 0.0 {
        return Ok(0.0);
    }
    let what = format!("K_mu_mu at s = {tau_lag}");
    Ok(converged(spec, 0.0, &what, |e| e.k_mu_mu(tau_lag).map(Complex64::from))?.re)
}

/// `K_ημ̄(t - iτ)` for `t >= 0`, `0 <= τ <= βħ`.
pub fn k_eta_mu(t: f64, tau: f64, spec: &BathSpec) -> Result<Complex64> {
    spec.validate()?;
    let b = spec.beta_hbar();
    if !(tau >= -1e-12 * b && tau <= b * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("imaginary time {tau} outside [0, {b}]")));
    }
    if spec.alpha == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let what = format!("K_eta_mu at (t, tau) = ({t}, {tau})");
    converged(spec, t.abs(), &what, |e| e.k_eta_mu(t, tau))
}

/// The four kernels sampled on the simulation grids.
///
/// `k_eta_eta` holds lags `0..=max(N, L/2)` where `L` is the real-time DFT length, so the
/// periodic extension used for factorization carries genuine kernel values rather than zeros.
/// Indices `0..=N` are the physical table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub grids: TimeGrids,
    pub k_eta_eta: Vec<f64>,
    pub k_eta_nu: Vec<Complex64>,
    /// Lags `-M..=M`, stored at index `lag + M`.
    pub k_mu_mu: Vec<f64>,
    /// Row-major `(N+1) × (M+1)`, entry `(i, j)` is `K_ημ̄(i·dt - i j·dτ)`.
    pub k_eta_mu: Vec<Complex64>,
}

impl KernelTable {
    pub fn n_points(&self) -> usize {
        self.grids.n_points()
    }

    pub fn m_points(&self) -> usize {
        self.grids.m_points()
    }

    /// `K_ηη` at integer lag `k` (either sign), reflecting the stored half.
    pub fn eta_eta(&self, k: isize) -> f64 {
        self.k_eta_eta[k.unsigned_abs()]
    }

    /// `K_ην` at integer lag `k`, zero for `k <= 0`.
    pub fn eta_nu(&self, k: isize) -> Complex64 {
        if k <= 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.k_eta_nu[k as usize]
        }
    }

    pub fn mu_mu(&self, lag: isize) -> f64 {
        self.k_mu_mu[(lag + self.grids.m_steps as isize) as usize]
    }

    pub fn eta_mu(&self, i: usize, j: usize) -> Complex64 {
        self.k_eta_mu[i * self.m_points() + j]
    }

    /// An all-zero table.
    pub fn zeros(grids: &TimeGrids) -> Self {
        let ext = grids.n_steps.max(grids.real_pad_len() / 2);
        Self {
            grids: *grids,
            k_eta_eta: vec![0.0; ext + 1],
            k_eta_nu: vec![Complex64::new(0.0, 0.0); grids.n_points()],
            k_mu_mu: vec![0.0; 2 * grids.m_steps + 1],
            k_eta_mu: vec![Complex64::new(0.0, 0.0); grids.n_points() * grids.m_points()],
        }
    }
}

/// Tabulates all kernels on `grids`.
pub fn build_kernel_table(spec: &BathSpec, grids: &TimeGrids) -> Result<KernelTable> {
    spec.validate()?;
    grids.validate(spec.beta_hbar())?;
    if spec.alpha == 0.0 {
        return Ok(KernelTable::zeros(grids));
    }
    let n = grids.n_steps;
    let m = grids.m_steps;
    let ext = n.max(grids.real_pad_len() / 2);
    let t_ext = ext as f64 * grids.dt;
    let t_n = n as f64 * grids.dt;

    let ev = select_rule(spec, grids, t_ext, t_n)?;
    let b = spec.beta_hbar();
    let pref = spec.hbar / PI;
    let nodes = ev.nodes();

    // K_ηη and K_ην share e^{iω t_k}
    let cosw: Vec<f64> = ev
        .wi
        .iter()
        .zip(&ev.wg)
        .zip(&ev.omega)
        .map(|((&wi, &wg), &om)| wi + 2.0 * wg * (-om * b).exp())
        .collect();
    let step: Vec<Complex64> = ev.omega.iter().map(|&om| Complex64::from_polar(1.0, om * grids.dt)).collect();
    let mut ph = vec![Complex64::new(1.0, 0.0); nodes];
    let mut k_eta_eta = Vec::with_capacity(ext + 1);
    let mut k_eta_nu = Vec::with_capacity(n + 1);
    for k in 0..=ext {
        let t = k as f64 * grids.dt;
        if k % RESYNC == 0 {
            for (p, &om) in ph.iter_mut().zip(&ev.omega) {
                *p = Complex64::from_polar(1.0, om * t);
            }
        }
        let tail = ev.tail(Complex64::new(0.0, -t));
        let mut c = 0.0;
        let mut s = 0.0;
        for ((p, &cw), &wi) in ph.iter().zip(&cosw).zip(&ev.wi) {
            c += cw * p.re;
            s += wi * p.im;
        }
        k_eta_eta.push(pref * (c + tail.re));
        if k <= n {
            // e^{-p ω} at p = -it gives +i sin, so Im P(-it) = Σ wI sin + Im tail
            let v = if k == 0 { 0.0 } else { -2.0 / PI * (s + tail.im) };
            k_eta_nu.push(Complex64::new(0.0, v));
        }
        for (p, st) in ph.iter_mut().zip(&step) {
            *p *= st;
        }
    }

    let mut half = Vec::with_capacity(m + 1);
    for j in 0..=m {
        half.push(ev.k_mu_mu(grids.tau(j))?);
    }
    let mut k_mu_mu = Vec::with_capacity(2 * m + 1);
    for lag in -(m as isize)..=(m as isize) {
        k_mu_mu.push(half[lag.unsigned_abs()]);
    }

    // For each τ_j: A e^{-iωt} + B e^{iωt} = (A+B) cos ωt + i (B-A) sin ωt
    let mp = m + 1;
    let mut sum_ab = vec![0.0; mp * nodes];
    let mut diff_ba = vec![0.0; mp * nodes];
    for j in 0..=m {
        let tau = grids.tau(j).min(b);
        for k in 0..nodes {
            let om = ev.omega[k];
            let a = ev.wi[k] * (-om * tau).exp() + ev.wg[k] * (-om * (tau + b)).exp();
            let bb = ev.wi[k] * (-om * (b - tau)).exp() + ev.wg[k] * (-om * (2.0 * b - tau)).exp();
            sum_ab[j * nodes + k] = a + bb;
            diff_ba[j * nodes + k] = bb - a;
        }
    }
    let tails_tau: Vec<(f64, f64)> = (0..=m).map(|j| (grids.tau(j).min(b), b - grids.tau(j).min(b))).collect();
    let mut k_eta_mu = Vec::with_capacity((n + 1) * mp);
    for i in 0..=n {
        let t = i as f64 * grids.dt;
        if i % RESYNC == 0 {
            for (p, &om) in ph.iter_mut().zip(&ev.omega) {
                *p = Complex64::from_polar(1.0, om * t);
            }
        }
        for (j, &(tau, btau)) in tails_tau.iter().enumerate() {
            let row_s = &sum_ab[j * nodes..(j + 1) * nodes];
            let row_d = &diff_ba[j * nodes..(j + 1) * nodes];
            let mut c = 0.0;
            let mut s = 0.0;
            for ((p, &sa), &db) in ph.iter().zip(row_s).zip(row_d) {
                c += sa * p.re;
                s += db * p.im;
            }
            let tails = ev.tail(Complex64::new(tau, t)) + ev.tail(Complex64::new(btau, -t));
            k_eta_mu.push((Complex64::new(c, s) + tails) * -pref);
        }
        for (p, st) in ph.iter_mut().zip(&step) {
            *p *= st;
        }
    }

    let table = KernelTable { grids: *grids, k_eta_eta, k_eta_nu, k_mu_mu, k_eta_mu };
    if let Some((idx, what)) = first_non_finite(&table) {
        return Err(Error::Quadrature { what: format!("{what} entry {idx} is not finite"), estimate: f64::NAN });
    }
    Ok(table)
}

fn select_rule(spec: &BathSpec, grids: &TimeGrids, t_ext: f64, t_n: f64) -> Result<KernelEvaluator> {
    let scale = spec.scale();
    let b = spec.beta_hbar();
    let tau1 = grids.dtau.min(b);
    let probe = |e: &KernelEvaluator| -> Result<[(f64, &'static str, f64, f64); 5]> {
        let em = e.k_eta_mu(t_n, tau1)?;
        Ok([
            (e.k_eta_eta(t_ext), "K_eta_eta", t_ext, 0.0),
            (e.k_eta_eta(0.0), "K_eta_eta", 0.0, 0.0),
            (e.k_eta_nu(t_n).im, "K_eta_nu", t_n, 0.0),
            (e.k_mu_mu(b)?, "K_mu_mu", 0.0, b),
            (em.re + em.im, "K_eta_mu", t_n, tau1),
        ])
    };
    let mut ev = KernelEvaluator::new(spec, t_ext)?;
    let mut prev = probe(&ev)?;
    let mut worst = None;
    for _ in 0..MAX_DOUBLINGS {
        let fine = ev.refined();
        let next = probe(&fine)?;
        match prev.iter().zip(&next).find(|(p, q)| !within_tol(p.0, q.0, scale)) {
            None => return Ok(ev),
            Some((p, q)) => worst = Some((q.1, q.2, q.3, (q.0 - p.0).abs())),
        }
        ev = fine;
        prev = next;
    }
    let (what, t, tau, est) = worst.unwrap_or(("kernel table", 0.0, 0.0, f64::NAN));
    Err(Error::Quadrature { what: format!("{what} at (t, tau) = ({t}, {tau})"), estimate: est })
}

fn first_non_finite(t: &KernelTable) -> Option<(usize, &'static str)> {
    if let Some(i) = t.k_eta_eta.iter().position(|v| !v.is_finite()) {
        return Some((i, "K_eta_eta"));
    }
    if let Some(i) = t.k_eta_nu.iter().position(|v| !v.is_finite()) {
        return Some((i, "K_eta_nu"));
    }
    if let Some(i) = t.k_mu_mu.iter().position(|v| !v.is_finite()) {
        return Some((i, "K_mu_mu"));
    }
    t.k_eta_mu.iter().position(|v| !v.is_finite()).map(|i| (i, "K_eta_mu"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> BathSpec {
        BathSpec::new(0.2, 25.0, 0.1, 1.0).unwrap()
    }

    /// Mapped-variable oracle `ω = ω_c u/(1-u)` with a fine composite rule on `[0, 1)`.
    fn oracle<F: Fn(f64) -> f64>(spec: &BathSpec, f: F) -> f64 {
        let (u, w) = composite(0.0, 1.0, 4000, 16);
        let wc = spec.omega_c;
        u.iter()
            .zip(&w)
            .map(|(&u, &w)| {
                let om = wc * u / (1.0 - u);
                let jac = wc / ((1.0 - u) * (1.0 - u));
                w * jac * density(spec.alpha, wc, om) * f(om)
            })
            .sum()
    }

    /// `cosh(ωc)/sinh(ωb/2)` for `|c| <= b/2`, without overflow.
    fn cosh_over_sinh(om: f64, c: f64, b: f64) -> f64 {
        ((om * (c - b / 2.0)).exp() + (-om * (c + b / 2.0)).exp()) / -(-om * b).exp_m1()
    }

    fn coth(x: f64) -> f64 {
        1.0 / x.tanh()
    }

    #[test]
    fn spectral_density_values() {
        let s = fig2();
        assert_eq!(ohmic_spectral_density(0.0, &s).unwrap(), 0.0);
        assert!((ohmic_spectral_density(25.0, &s).unwrap() - 1.25).abs() < 1e-15);
        assert!(ohmic_spectral_density(-1.0, &s).is_err());
        let mut best = (0.0, 0.0);
        for k in 0..200_000 {
            let w = k as f64 * 1e-4;
            let v = ohmic_spectral_density(w, &s).unwrap();
            if v > best.1 {
                best = (w, v);
            }
        }
        assert!((best.0 - 14.433_756_729_740_644).abs() < 2e-4);
    }

    #[test]
    fn eta_eta_zero_lag_matches_oracle() {
        let s = fig2();
        let b = s.beta_hbar();
        let want = s.hbar / PI * oracle(&s, |om| coth(b * om / 2.0));
        let got = k_eta_eta(0.0, &s).unwrap();
        assert!(((got - want) / want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn eta_eta_is_even_and_matches_fine_rule() {
        let s = fig2();
        let b = s.beta_hbar();
        for &t in &[0.01, 0.1, 0.37, 2.0] {
            let got = k_eta_eta(t, &s).unwrap();
            assert_eq!(got, k_eta_eta(-t, &s).unwrap());
            // fine rule far past the cutoff plus one integration-by-parts term
            let w_max = 2000.0 * s.omega_c;
            let panels = (w_max / (0.1f64.min(1.0 / t) * s.omega_c)).ceil() as usize;
            let (x, w) = composite(0.0, w_max, panels, 16);
            let f = |om: f64| density(s.alpha, s.omega_c, om) * coth(b * om / 2.0);
            let body: f64 = x.iter().zip(&w).map(|(&om, &w)| w * f(om) * (om * t).cos()).sum();
            let tail = -f(w_max) * (w_max * t).sin() / t;
            let want = s.hbar / PI * (body + tail);
            let scale = k_eta_eta(0.0, &s).unwrap();
            assert!((got - want).abs() < 1e-9 * scale, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn eta_nu_closed_form() {
        let s = fig2();
        let wc = s.omega_c;
        let want = -(s.alpha * wc.powi(3) / (2.0 * wc)) * (-1.0f64).exp();
        let got = k_eta_nu(1.0 / wc, &s).unwrap();
        assert!(got.re == 0.0);
        assert!(((got.im - want) / want).abs() < 1e-8);
        assert!((want + 22.99).abs() < 0.01);
        assert_eq!(k_eta_nu(0.0, &s).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(k_eta_nu(-1.0, &s).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn mu_mu_matches_oracle_and_identity() {
        let s = fig2();
        let b = s.beta_hbar();
        let at0 = k_mu_mu(0.0, &s).unwrap();
        let ee0 = k_eta_eta(0.0, &s).unwrap();
        assert!(((at0 - ee0) / ee0).abs() < 1e-8);
        for &sv in &[b / 2.0, 0.3 * b, -0.3 * b, b] {
            let want = s.hbar / PI
                * oracle(&s, |om| cosh_over_sinh(om, b / 2.0 - sv.abs(), b));
            let got = k_mu_mu(sv, &s).unwrap();
            assert!(((got - want) / want).abs() < 1e-8, "s={sv}: {got} vs {want}");
        }
        assert!(k_mu_mu(1.01 * b, &s).is_err());
    }

    #[test]
    fn eta_mu_matches_oracle() {
        let s = fig2();
        let b = s.beta_hbar();
        for &tau in &[0.0, b / 2.0, 0.2 * b, b] {
            let want = -s.hbar / PI * oracle(&s, |om| cosh_over_sinh(om, b / 2.0 - tau, b));
            let got = k_eta_mu(0.0, tau, &s).unwrap();
            assert!(got.im.abs() < 1e-10 * got.norm());
            assert!(((got.re - want) / want).abs() < 1e-8, "tau={tau}: {got} vs {want}");
        }
        // cross-identity at τ = 0: K_ημ̄(t) = -K_ηη(t) - (ħ/2) K_ην(t)
        for &t in &[0.02, 0.15] {
            let got = k_eta_mu(t, 0.0, &s).unwrap();
            let want = -k_eta_eta(t, &s).unwrap() - 0.5 * s.hbar * k_eta_nu(t, &s).unwrap();
            assert!((got - want).norm() < 1e-9 * k_eta_eta(0.0, &s).unwrap());
        }
        assert!(k_eta_mu(0.0, -0.1, &s).is_err());
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let s = BathSpec::new(0.0, 25.0, 0.1, 1.0).unwrap();
        assert_eq!(k_eta_eta(0.3, &s).unwrap(), 0.0);
        assert_eq!(k_mu_mu(0.05, &s).unwrap(), 0.0);
        assert_eq!(k_eta_mu(0.3, 0.05, &s).unwrap(), Complex64::new(0.0, 0.0));
        let g = TimeGrids::new(0.0, 0.01, 20, 0.1, 8).unwrap();
        let t = build_kernel_table(&s, &g).unwrap();
        assert!(t.k_eta_eta.iter().all(|&v| v == 0.0));
        assert!(t.k_eta_mu.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn table_matches_pointwise_and_invariants() {
        let s = fig2();
        let g = TimeGrids::new(-1.0, 0.005, 64, 0.1, 16).unwrap();
        let t = build_kernel_table(&s, &g).unwrap();
        let scale = t.k_eta_eta[0];
        assert_eq!(t.k_eta_eta.len(), g.real_pad_len() / 2 + 1);
        assert_eq!(t.k_eta_nu.len(), 65);
        assert_eq!(t.k_mu_mu.len(), 33);
        assert_eq!(t.k_eta_mu.len(), 65 * 17);
        for k in [0usize, 1, 7, 64, 100] {
            let p = k_eta_eta(k as f64 * g.dt, &s).unwrap();
            assert!((t.k_eta_eta[k] - p).abs() < 1e-9 * scale, "lag {k}");
        }
        for k in [1usize, 5, 64] {
            let p = k_eta_nu(k as f64 * g.dt, &s).unwrap();
            assert!((t.k_eta_nu[k] - p).norm() < 1e-9 * scale);
        }
        assert_eq!(t.k_eta_nu[0], Complex64::new(0.0, 0.0));
        let max_im = t.k_eta_nu.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        assert!(t.k_eta_nu.iter().all(|v| v.re.abs() < 1e-12 * max_im));
        assert!(((t.mu_mu(0) - scale) / scale).abs() < 1e-8);
        for l in 0..=16isize {
            assert_eq!(t.mu_mu(l), t.mu_mu(-l));
        }
        for (i, j) in [(0usize, 0usize), (0, 5), (10, 3), (64, 16), (33, 8)] {
            let p = k_eta_mu(g.dt * i as f64, g.tau(j), &s).unwrap();
            assert!((t.eta_mu(i, j) - p).norm() < 1e-9 * scale, "({i},{j})");
        }
        for j in 0..=16 {
            let a = t.eta_mu(0, j);
            let b = t.eta_mu(0, 16 - j);
            assert!(a.im.abs() < 1e-10 * a.norm());
            assert!((a - b).norm() < 1e-10 * a.norm());
        }
    }

    #[test]
    fn tables_are_linear_in_alpha() {
        let g = TimeGrids::new(0.0, 0.01, 16, 0.1, 4).unwrap();
        let a = build_kernel_table(&BathSpec::new(0.05, 25.0, 0.1, 1.0).unwrap(), &g).unwrap();
        let b = build_kernel_table(&BathSpec::new(0.1, 25.0, 0.1, 1.0).unwrap(), &g).unwrap();
        for (x, y) in a.k_eta_eta.iter().zip(&b.k_eta_eta) {
            assert_eq!(2.0 * x, *y);
        }
        for (x, y) in a.k_eta_mu.iter().zip(&b.k_eta_mu) {
            assert_eq!(x * 2.0, *y);
        }
    }
}
