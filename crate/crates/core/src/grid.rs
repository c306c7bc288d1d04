use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-time and imaginary-time discretisation.
///
/// Real time runs over `t_i = t0 + i*dt` for `i = 0..=n_steps`; imaginary time
/// over `tau_j = j*dtau` for `j = 0..=m_steps`, with `m_steps*dtau = beta*hbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrids {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub dtau: f64,
    pub m_steps: usize,
}

impl TimeGrids {
    /// Builds grids with `m_steps` imaginary steps spanning `[0, beta_hbar]`.
    pub fn new(t0: f64, dt: f64, n_steps: usize, beta_hbar: f64, m_steps: usize) -> Result<Self> {
        if m_steps == 0 {
            return Err(Error::Config("m_steps must be at least 1".into()));
        }
        let grids = Self {
            t0,
            dt,
            n_steps,
            dtau: beta_hbar / m_steps as f64,
            m_steps,
        };
        grids.validate(beta_hbar)?;
        Ok(grids)
    }

    pub fn validate(&self, beta_hbar: f64) -> Result<()> {
        if !self.t0.is_finite() {
            return Err(Error::Config("t0 must be finite".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dtau > 0.0 && self.dtau.is_finite()) {
            return Err(Error::Config(format!("dtau must be positive, got {}", self.dtau)));
        }
        if self.n_steps == 0 || self.m_steps == 0 {
            return Err(Error::Config("n_steps and m_steps must be at least 1".into()));
        }
        let span = self.m_steps as f64 * self.dtau;
        if ((span - beta_hbar) / beta_hbar).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "imaginary grid spans {span} but beta*hbar = {beta_hbar}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    #[inline]
    pub fn tau(&self, j: usize) -> f64 {
        j as f64 * self.dtau
    }

    /// Number of real-time samples, `n_steps + 1`.
    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    /// Number of imaginary-time samples, `m_steps + 1`.
    #[inline]
    pub fn m_points(&self) -> usize {
        self.m_steps + 1
    }

    pub fn beta_hbar(&self) -> f64 {
        self.m_steps as f64 * self.dtau
    }

    /// DFT length used for the real-time stationary filters.
    pub fn real_pad_len(&self) -> usize {
        crate::convolution::padded_len(self.n_points())
    }

    /// DFT length of the periodically extended imaginary domain `[-beta*hbar, beta*hbar)`.
    pub fn imag_period_len(&self) -> usize {
        2 * self.m_steps
    }
}
