//! Single-trajectory stochastic evolution of the spin density matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrids;
use crate::kernels::BathSpec;
use crate::mat2::Mat2;
use crate::noise::NoiseRealization;

pub type DensityMatrix = Mat2;

const NORM_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Constant,
    Linear,
}

/// Bias drive `ε(t)` and tunnelling `Δ` of `H(t) = ε(t) σ_z + Δ σ_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveProtocol {
    pub kind: ProtocolKind,
    pub epsilon0: f64,
    pub kappa: f64,
    pub t0: f64,
    pub delta: f64,
}

impl DriveProtocol {
    pub fn constant(epsilon0: f64, t0: f64, delta: f64) -> Result<Self> {
        let p = Self { kind: ProtocolKind::Constant, epsilon0, kappa: 0.0, t0, delta };
        p.validate()?;
        Ok(p)
    }

    /// Linear sweep `ε(t) = κ t`, so `ε(t₀) = κ t₀`.
    pub fn linear(kappa: f64, t0: f64, delta: f64) -> Result<Self> {
        let p = Self { kind: ProtocolKind::Linear, epsilon0: kappa * t0, kappa, t0, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !self.epsilon0.is_finite() || !self.t0.is_finite() {
            return Err(Error::Config("epsilon0 and t0 must be finite".into()));
        }
        if self.kind == ProtocolKind::Linear {
            if !(self.kappa.is_finite() && self.kappa >= 0.0) {
                return Err(Error::Config(format!("kappa must be >= 0, got {}", self.kappa)));
            }
            let want = self.kappa * self.t0;
            if (self.epsilon0 - want).abs() > 1e-12 * want.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "linear protocol needs epsilon0 = kappa*t0 = {want}, got {}",
                    self.epsilon0
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn epsilon(&self, t: f64) -> f64 {
        match self.kind {
            ProtocolKind::Constant => self.epsilon0,
            ProtocolKind::Linear => self.kappa * t,
        }
    }

    pub fn hamiltonian(&self, t: f64) -> Mat2 {
        Mat2::sigma_z().scale(self.epsilon(t)) + Mat2::sigma_x().scale(self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvolutionMode {
    #[serde(rename = "ESLE")]
    Esle,
    #[serde(rename = "SLE_LZ")]
    SleLz,
    #[serde(rename = "SLE_MATCHED")]
    SleMatched,
    #[serde(rename = "SLE_PARTITIONED")]
    SlePartitioned,
}

impl EvolutionMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Esle => "ESLE",
            Self::SleLz => "SLE_LZ",
            Self::SleMatched => "SLE_MATCHED",
            Self::SlePartitioned => "SLE_PARTITIONED",
        }
    }
}

/// Imaginary-time Euler evolution from the identity, returning the unnormalized `ρ̄(βħ)`.
pub fn evolve_imaginary(mu: &[Complex64], protocol: &DriveProtocol, grids: &TimeGrids, hbar: f64) -> Result<Mat2> {
    if mu.len() < grids.m_steps {
        return Err(Error::Config(format!(
            "imaginary noise has {} samples, need {}",
            mu.len(),
            grids.m_steps
        )));
    }
    let eps = protocol.epsilon(protocol.t0);
    let d = protocol.delta;
    let h = grids.dtau / hbar;
    let mut r = Mat2::identity().m;
    for (j, &mu_j) in mu.iter().take(grids.m_steps).enumerate() {
        let e = Complex64::new(eps, 0.0) - mu_j;
        let a = [
            e * r[0] + r[2] * d,
            e * r[1] + r[3] * d,
            r[0] * d - e * r[2],
            r[1] * d - e * r[3],
        ];
        for k in 0..4 {
            r[k] -= a[k] * h;
        }
        if !r.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Diverged { step: j + 1, phase: "imaginary" });
        }
    }
    Ok(Mat2 { m: r })
}

/// Noise driving the real-time stage.
#[derive(Debug, Clone, Copy)]
pub enum RealDrive<'a> {
    Noiseless,
    Noisy { eta: &'a [Complex64], nu: &'a [Complex64] },
}

/// Real-time Euler–Maruyama evolution, recording `ρ̃(t_i)` for `i = 0, s, 2s, ...` up to `N`.
pub fn evolve_real_with(
    rho0: Mat2,
    drive: RealDrive<'_>,
    protocol: &DriveProtocol,
    grids: &TimeGrids,
    hbar: f64,
    stride: usize,
) -> Result<Vec<Mat2>> {
    let stride = stride.max(1);
    let n = grids.n_steps;
    if let RealDrive::Noisy { eta, nu } = drive {
        if eta.len() < n || nu.len() < n {
            return Err(Error::Config(format!("real-time noise shorter than {n} steps")));
        }
    }
    let d = protocol.delta;
    let h = grids.dt / hbar;
    let mut out = Vec::with_capacity(n / stride + 1);
    let mut r = rho0.m;
    out.push(rho0);
    for i in 0..n {
        let (eta, nu) = match drive {
            RealDrive::Noiseless => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
            RealDrive::Noisy { eta, nu } => (eta[i], nu[i]),
        };
        let e2 = (Complex64::new(protocol.epsilon(grids.t(i)), 0.0) - eta) * 2.0;
        let hn = nu * hbar;
        let a = [
            (r[2] - r[1]) * d - hn * r[0],
            e2 * r[1] + (r[3] - r[0]) * d,
            -e2 * r[2] + (r[0] - r[3]) * d,
            (r[1] - r[2]) * d + hn * r[3],
        ];
        // dt/(iħ) = -i dt/ħ
        for k in 0..4 {
            r[k] += Complex64::new(a[k].im * h, -a[k].re * h);
        }
        let norm2 = r.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if !(norm2 <= NORM_CAP * NORM_CAP) {
            return Err(Error::Diverged { step: i + 1, phase: "real" });
        }
        if (i + 1) % stride == 0 {
            out.push(Mat2 { m: r });
        }
    }
    Ok(out)
}

/// Real-time evolution under one noise realization.
pub fn evolve_real(
    rho0: Mat2,
    noise: &NoiseRealization,
    protocol: &DriveProtocol,
    grids: &TimeGrids,
    hbar: f64,
    stride: usize,
) -> Result<Vec<Mat2>> {
    evolve_real_with(rho0, RealDrive::Noisy { eta: &noise.eta, nu: &noise.nu }, protocol, grids, hbar, stride)
}

/// `exp(-βH(t₀)) / Z`.
pub fn gibbs_state(protocol: &DriveProtocol, beta: f64) -> Mat2 {
    let g = Mat2::exp_pauli_real(protocol.epsilon(protocol.t0), protocol.delta, beta);
    g.scale(1.0 / g.trace().re)
}

/// Initial real-time state of the SLE baselines.
pub fn initial_condition(
    mode: EvolutionMode,
    matched_rho: Option<Mat2>,
    protocol: &DriveProtocol,
    spec: &BathSpec,
) -> Result<Mat2> {
    match (mode, matched_rho) {
        (EvolutionMode::SleLz, None) => Ok(Mat2::from_real(1.0, 0.0, 0.0, 0.0)),
        (EvolutionMode::SleMatched, Some(r)) => Ok(r),
        (EvolutionMode::SlePartitioned, None) => Ok(gibbs_state(protocol, spec.beta)),
        (EvolutionMode::SleMatched, None) => {
            Err(Error::Config("SLE_MATCHED needs the averaged imaginary-time state".into()))
        }
        (EvolutionMode::Esle, _) => Err(Error::Config(
            "ESLE trajectories start from their own imaginary-time endpoint".into(),
        )),
        (m, Some(_)) => Err(Error::Config(format!("{} does not take a matched state", m.name()))),
    }
}

/// `P_LZ = exp(-πΔ²/(ħκ))`.
pub fn lz_survival_probability(delta: f64, kappa: f64, hbar: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    Ok((-std::f64::consts::PI * delta * delta / (hbar * kappa)).exp())
}

/// `Δ_r = Δ (Δ/ω_c)^{α/(1-α)}`.
pub fn renormalized_tunneling(delta: f64, alpha: f64, omega_c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("renormalized tunnelling needs 0 <= alpha < 1, got {alpha}")));
    }
    if !(omega_c > delta) {
        return Err(Error::Domain(format!("omega_c = {omega_c} must exceed delta = {delta}")));
    }
    Ok(delta * (delta / omega_c).powf(alpha / (1.0 - alpha)))
}

/// Exact per-step propagation `ρ ← U ρ U†` with `ε` at the step midpoint.
pub fn unitary_oracle(rho0: Mat2, protocol: &DriveProtocol, grids: &TimeGrids, hbar: f64, stride: usize) -> Vec<Mat2> {
    let stride = stride.max(1);
    let mut out = Vec::with_capacity(grids.n_steps / stride + 1);
    let mut r = rho0;
    out.push(r);
    for i in 0..grids.n_steps {
        let mid = grids.t(i) + 0.5 * grids.dt;
        let u = Mat2::exp_pauli_unitary(protocol.epsilon(mid), protocol.delta, grids.dt / hbar);
        r = u * r * u.dagger();
        if (i + 1) % stride == 0 {
            out.push(r);
        }
    }
    out
}

/// Exact imaginary-time endpoint `exp(-βħ H(t₀)/ħ)` for zero noise.
pub fn imaginary_oracle(protocol: &DriveProtocol, beta: f64) -> Mat2 {
    Mat2::exp_pauli_real(protocol.epsilon(protocol.t0), protocol.delta, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalize(m: Mat2) -> Mat2 {
        m.scale_c(m.trace().inv())
    }

    #[test]
    fn imaginary_diagonal_gibbs_state() {
        let p = DriveProtocol::constant(5.0, 0.0, 1.0).unwrap();
        let mut p0 = p;
        p0.delta = 0.0;
        let exact = Mat2::from_real(0.2689414213699951, 0.0, 0.0, 0.7310585786300049);
        let g = TimeGrids::new(0.0, 0.1, 1, 0.1, 400).unwrap();
        let r = normalize(evolve_imaginary(&vec![Complex64::new(0.0, 0.0); 401], &p0, &g, 1.0).unwrap());
        assert!((r - exact).max_abs() < 1e-4);
        // unnormalized endpoint against the exact exponential, first order in dτ
        let oracle = imaginary_oracle(&p, 0.1);
        let errs: Vec<f64> = [200usize, 400]
            .iter()
            .map(|&m| {
                let g = TimeGrids::new(0.0, 0.1, 1, 0.1, m).unwrap();
                let mu = vec![Complex64::new(0.0, 0.0); m + 1];
                (evolve_imaginary(&mu, &p, &g, 1.0).unwrap() - oracle).max_abs()
            })
            .collect();
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.05, "{errs:?}");
        let gs = gibbs_state(&p0, 0.1);
        assert!((gs - exact).max_abs() < 1e-12);
    }

    #[test]
    fn infinite_temperature_limit() {
        let p = DriveProtocol::constant(5.0, 0.0, 1.0).unwrap();
        let g = TimeGrids::new(0.0, 0.1, 1, 1e-9, 1).unwrap();
        let r = normalize(evolve_imaginary(&[Complex64::new(0.0, 0.0); 2], &p, &g, 1.0).unwrap());
        assert!((r - Mat2::identity().scale(0.5)).max_abs() < 1e-8);
        assert!((gibbs_state(&p, 1e-12) - Mat2::identity().scale(0.5)).max_abs() < 1e-10);
    }

    #[test]
    fn diagonal_phase_rotation() {
        let mut p = DriveProtocol::constant(2.0, 0.0, 1.0).unwrap();
        p.delta = 0.0;
        let g = TimeGrids::new(0.0, 1e-5, 100_000, 0.1, 1).unwrap();
        let rho0 = Mat2::from_real(0.5, 0.5, 0.5, 0.5);
        let out = evolve_real_with(rho0, RealDrive::Noiseless, &p, &g, 1.0, 1000).unwrap();
        let last = out.last().unwrap();
        let want = Complex64::from_polar(0.5, -2.0 * 2.0 * 1.0);
        assert!((last.m12() - want).norm() < 1e-3);
        assert!((last.m11().re - 0.5).abs() < 1e-12 && (last.m22().re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nu_step_moves_trace_only_through_anticommutator() {
        let p = DriveProtocol::constant(0.7, 0.0, 1.0).unwrap();
        let g = TimeGrids::new(0.0, 0.01, 1, 0.1, 1).unwrap();
        let rho0 = Mat2::new(
            Complex64::new(0.6, 0.1),
            Complex64::new(0.2, -0.3),
            Complex64::new(0.1, 0.4),
            Complex64::new(0.4, -0.2),
        );
        let eta = [Complex64::new(0.3, -1.2); 2];
        let nu = [Complex64::new(-2.0, 0.5); 2];
        let out = evolve_real_with(rho0, RealDrive::Noisy { eta: &eta, nu: &nu }, &p, &g, 1.0, 1).unwrap();
        let dtr = out[1].trace() - rho0.trace();
        let sz_tr = (Mat2::sigma_z() * rho0).trace();
        let want = Complex64::new(0.0, -0.01) * (-nu[0]) * sz_tr;
        assert!((dtr - want).norm() < 1e-15);
    }

    #[test]
    fn linear_in_initial_state() {
        let p = DriveProtocol::linear(3.0, -1.0, 1.0).unwrap();
        let g = TimeGrids::new(-1.0, 0.001, 500, 0.1, 1).unwrap();
        let eta: Vec<Complex64> = (0..501).map(|i| Complex64::new((i as f64).sin(), 0.3 * (i as f64).cos())).collect();
        let nu: Vec<Complex64> = (0..501).map(|i| Complex64::new(0.2 * (i as f64 * 0.7).cos(), 0.1)).collect();
        let a = Mat2::from_real(1.0, 0.0, 0.0, 0.0);
        let b = Mat2::from_real(0.3, 0.2, 0.2, 0.7);
        let drive = RealDrive::Noisy { eta: &eta, nu: &nu };
        let ea = evolve_real_with(a, drive, &p, &g, 1.0, 100).unwrap();
        let eb = evolve_real_with(b, drive, &p, &g, 1.0, 100).unwrap();
        let ec = evolve_real_with(a.scale(2.0) + b.scale(-0.5), drive, &p, &g, 1.0, 100).unwrap();
        for k in 0..ea.len() {
            let lin = ea[k].scale(2.0) + eb[k].scale(-0.5);
            assert!((lin - ec[k]).max_abs() < 1e-12);
        }
    }

    #[test]
    fn diverging_trajectory_is_reported() {
        let p = DriveProtocol::constant(0.0, 0.0, 1.0).unwrap();
        let g = TimeGrids::new(0.0, 0.1, 1000, 0.1, 1).unwrap();
        let eta = vec![Complex64::new(0.0, 50.0); 1001];
        let nu = vec![Complex64::new(0.0, 0.0); 1001];
        let r = evolve_real_with(
            Mat2::from_real(0.5, 0.5, 0.5, 0.5),
            RealDrive::Noisy { eta: &eta, nu: &nu },
            &p,
            &g,
            1.0,
            1,
        );
        assert!(matches!(r, Err(Error::Diverged { phase: "real", .. })));
    }

    #[test]
    fn unitary_oracle_properties() {
        let p = DriveProtocol::linear(4.0, -2.0, 1.0).unwrap();
        let g = TimeGrids::new(-2.0, 1e-4, 10_000, 0.1, 1).unwrap();
        let rho0 = Mat2::from_real(0.8, 0.1, 0.1, 0.2);
        let out = unitary_oracle(rho0, &p, &g, 1.0, 10_000);
        let last = out.last().unwrap();
        assert!((last.trace() - rho0.trace()).norm() < 1e-12);
        let c = DriveProtocol::constant(1.5, 0.0, 1.0).unwrap();
        let oc = unitary_oracle(rho0, &c, &g, 1.0, 10_000);
        let ev0 = rho0.eigenvalues();
        let ev1 = oc.last().unwrap().eigenvalues();
        assert!((ev0[0] - ev1[0]).norm() < 1e-11 && (ev0[1] - ev1[1]).norm() < 1e-11, "{ev0:?} {ev1:?}");
    }

    #[test]
    fn euler_converges_at_first_order() {
        let p = DriveProtocol::linear(2.0, -1.0, 1.0).unwrap();
        let rho0 = Mat2::from_real(1.0, 0.0, 0.0, 0.0);
        let exact = *unitary_oracle(rho0, &p, &TimeGrids::new(-1.0, 1e-5, 200_000, 0.1, 1).unwrap(), 1.0, 200_000)
            .last()
            .unwrap();
        let err = |n: usize| {
            let g = TimeGrids::new(-1.0, 2.0 / n as f64, n, 0.1, 1).unwrap();
            let e = evolve_real_with(rho0, RealDrive::Noiseless, &p, &g, 1.0, n).unwrap();
            (*e.last().unwrap() - exact).max_abs()
        };
        let ratio = err(2000) / err(4000);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn closed_form_values() {
        assert!((lz_survival_probability(1.0, 8.0, 1.0).unwrap() - 0.675_231_906_655_777_3).abs() < 1e-12);
        assert!((lz_survival_probability(1.0, 6.0, 1.0).unwrap() - 0.592_384_847_188_389).abs() < 1e-12);
        assert!((lz_survival_probability(1.0, 1e12, 1.0).unwrap() - 1.0).abs() < 1e-11);
        assert!(lz_survival_probability(1.0, 0.0, 1.0).is_err());
        assert_eq!(renormalized_tunneling(1.0, 0.0, 25.0).unwrap(), 1.0);
        assert!((renormalized_tunneling(1.0, 0.2, 25.0).unwrap() - 0.447_213_595_499_958).abs() < 1e-12);
        assert!(renormalized_tunneling(1.0, 0.3, 25.0).unwrap() < renormalized_tunneling(1.0, 0.2, 25.0).unwrap());
        assert!(renormalized_tunneling(1.0, 1.0, 25.0).is_err());
    }

    #[test]
    fn initial_conditions() {
        let spec = BathSpec::new(0.05, 25.0, 0.1, 1.0).unwrap();
        let mut p = DriveProtocol::constant(5.0, 0.0, 1.0).unwrap();
        assert_eq!(
            initial_condition(EvolutionMode::SleLz, None, &p, &spec).unwrap(),
            Mat2::from_real(1.0, 0.0, 0.0, 0.0)
        );
        p.delta = 0.0;
        let g = initial_condition(EvolutionMode::SlePartitioned, None, &p, &spec).unwrap();
        assert!((g.m11().re - 0.2689).abs() < 1e-4 && (g.m22().re - 0.7311).abs() < 1e-4);
        assert!(initial_condition(EvolutionMode::SleMatched, None, &p, &spec).is_err());
        assert!(initial_condition(EvolutionMode::Esle, None, &p, &spec).is_err());
        let m = Mat2::identity().scale(0.5);
        assert_eq!(initial_condition(EvolutionMode::SleMatched, Some(m), &p, &spec).unwrap(), m);
    }

    #[test]
    fn linear_protocol_invariant() {
        let mut p = DriveProtocol::linear(6.0, -6.0, 1.0).unwrap();
        assert_eq!(p.epsilon(p.t0), -36.0);
        p.epsilon0 = 5.0;
        assert!(p.validate().is_err());
    }
}
