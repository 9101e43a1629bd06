//! A-priori size bounds for the EOA and indicator regions, and the DMR
//! finite-sample bound for the least-squares error.

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lambda_min;
use crate::model::Dataset;

/// Inputs of the EOA and indicator size bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Subgaussian variance proxy of the noise.
    pub sigma: f64,
    /// Lower bound on `λmin(R̄_n)`.
    pub lambda0: f64,
    /// Coherence constant.
    pub kappa: f64,
    #[serde(default = "one")]
    pub rho: f64,
    pub d: usize,
    pub m: usize,
    pub q: usize,
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        pos("sigma", self.sigma)?;
        pos("lambda0", self.lambda0)?;
        pos("kappa", self.kappa)?;
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be at least 1".into()));
        }
        if !(self.q > 0 && self.q < self.m) {
            return Err(Error::InvalidConfig(format!(
                "need m > q > 0, got m = {}, q = {}",
                self.m, self.q
            )));
        }
        check_delta(self.delta)
    }

    /// `δ / (m − q)`.
    pub fn delta_prime(&self) -> f64 {
        self.delta / (self.m - self.q) as f64
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 1), got {delta}"
        )))
    }
}

/// The numerator function `f(δ)`.
///
/// The upper branch applies when `δ ≥ 4 exp(−(n d λ₀)²)`; the comparison is
/// exact, and an underflowed threshold selects the upper branch.
pub fn f_delta(params: &BoundParams, n: usize, delta: f64) -> Result<f64> {
    params.validate()?;
    check_delta(delta)?;
    let d = params.d as f64;
    let l = (4.0 / delta).ln();
    let ndl = n as f64 * d * params.lambda0;
    let threshold = 4.0 * (-(ndl * ndl)).exp();
    let inner = if delta >= threshold {
        8.0 * d * l.sqrt() + d
    } else {
        8.0 * l + d
    };
    Ok(params.sigma * inner.sqrt())
}

/// The denominator function `g(δ) = 2κd² ln(4d/δ)`.
pub fn g_delta(params: &BoundParams, delta: f64) -> Result<f64> {
    params.validate()?;
    check_delta(delta)?;
    let d = params.d as f64;
    Ok((4.0 * d / delta).ln() * 2.0 * params.kappa * d * d)
}

/// Smallest sample size for which the bounds hold: `⌈g(δ′)^{1/ρ}⌉`.
pub fn min_valid_n(params: &BoundParams) -> Result<usize> {
    let g = g_delta(params, params.delta_prime())?;
    Ok(g.powf(1.0 / params.rho).ceil() as usize)
}

/// Size bound for the EOA region with leading factor `2f(δ′)`: a bound on
/// its diameter `2 sup_θ ‖θ − θ̂_n‖`, holding with probability `1 − δ`.
pub fn eoa_size_bound(params: &BoundParams, n: usize) -> Result<f64> {
    let dp = params.delta_prime();
    let g = g_delta(params, dp)?;
    let threshold = min_valid_n(params)?;
    let nr = (n as f64).powf(params.rho / 2.0);
    let sg = g.sqrt();
    if n < threshold || nr <= sg {
        return Err(Error::BelowThreshold { n, threshold });
    }
    let f = f_delta(params, n, dp)?;
    Ok(2.0 * f * (nr + sg).sqrt() / (n as f64 * params.lambda0 * (nr - sg)).sqrt())
}

/// Bound on `sup_θ ‖θ − θ̂_n‖` over the EOA region: half of [`eoa_size_bound`].
pub fn eoa_radius_bound(params: &BoundParams, n: usize) -> Result<f64> {
    eoa_size_bound(params, n).map(|b| 0.5 * b)
}

/// Bound on the diameter of the SPS indicator region.
pub fn indicator_diameter_bound(params: &BoundParams, n: usize) -> Result<f64> {
    let dp = params.delta_prime();
    let g = g_delta(params, dp)?;
    let nf = n as f64;
    let gap = nf.powf(params.rho) - g;
    if gap <= 0.0 {
        return Err(Error::BelowThreshold {
            n,
            threshold: min_valid_n(params)?,
        });
    }
    let f = f_delta(params, n, dp)?;
    Ok(4.0 * f / (nf.powf(1.0 - params.rho) * params.lambda0 * gap).sqrt())
}

/// Inputs of the DMR least-squares error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmrParams {
    pub sigma_phi: f64,
    pub sigma_w: f64,
    pub nu: f64,
    pub eta: f64,
    pub c: f64,
}

impl DmrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_phi > 0.0 && self.sigma_w > 0.0) {
            return Err(Error::InvalidConfig(
                "subgaussian proxies must be positive".into(),
            ));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nu must lie in (0, 1), got {}",
                self.nu
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 2.0 / std::f64::consts::E) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in (0, 2/e], got {}",
                self.eta
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        Ok(())
    }

    fn phi_factor(sigma_phi: f64) -> f64 {
        let s2 = sigma_phi * sigma_phi;
        s2.max(s2 * s2)
    }

    /// Smallest `n` covered by the bound.
    pub fn min_n(&self, d: usize) -> f64 {
        let d_f = d as f64;
        self.c * Self::phi_factor(self.sigma_phi) * d_f * d_f.max(1.0 / self.eta).ln()
            / (self.nu * self.nu)
    }
}

/// Largest `C` for which the DMR sample-size condition holds at `n`.
pub fn dmr_c_constant(sigma_phi: f64, nu: f64, eta: f64, d: usize, n: usize) -> Result<f64> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidConfig("d and n must be positive".into()));
    }
    let log = (d as f64).max(1.0 / eta).ln();
    if !(log > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "log(d ∨ 1/eta) must be positive, got {log}"
        )));
    }
    Ok(nu * nu * n as f64 / (DmrParams::phi_factor(sigma_phi) * d as f64 * log))
}

/// The DMR bound expressed as a length: the square root of the bound on `‖θ̂_n − θ*‖²`.
pub fn dmr_bound(dmr: &DmrParams, d: usize, n: usize) -> Result<f64> {
    dmr.validate()?;
    if d == 0 || n == 0 {
        return Err(Error::InvalidConfig("d and n must be positive".into()));
    }
    let min_n = dmr.min_n(d);
    if (n as f64) < min_n * (1.0 - 1e-12) {
        return Err(Error::BelowThreshold {
            n,
            threshold: min_n.ceil() as usize,
        });
    }
    let s = dmr.sigma_phi * dmr.sigma_phi * dmr.sigma_w * dmr.sigma_w;
    let log = (2.0 / dmr.eta).ln();
    let sq = 2.0 / (1.0 - dmr.nu).powi(2) * d as f64 / n as f64 * (1.0 + dmr.c * s * log * log);
    Ok(sq.sqrt())
}

/// Empirical coherence and excitation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationEstimate {
    pub kappa: f64,
    pub lambda0: f64,
}

/// Coherence `μ(Φ_t) = (t/d) max_{i ≤ t} φ_iᵀ R_t⁻¹ φ_i` and `λmin(R̄_t)` of a prefix.
pub fn prefix_excitation(dataset: &Dataset, t: usize) -> Result<(f64, f64)> {
    let d = dataset.d();
    if t < d || t > dataset.n() {
        return Err(Error::InvalidConfig(format!(
            "prefix length {t} outside {d}..={}",
            dataset.n()
        )));
    }
    let phi = dataset.regressors().rows(0, t);
    let gram = phi.transpose() * phi;
    let lam = lambda_min(&gram) / t as f64;
    let ginv = Cholesky::new(gram)
        .ok_or_else(|| Error::Singular(format!("prefix Gram matrix at t = {t}")))?
        .inverse();
    let mut worst = 0.0_f64;
    for i in 0..t {
        let mut quad = 0.0;
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += ginv[(j, k)] * phi[(i, k)];
            }
            quad += phi[(i, j)] * acc;
        }
        worst = worst.max(quad);
    }
    Ok((t as f64 / d as f64 * worst, lam))
}

/// `κ` and `λ₀` over every `t ∈ [t0, n]` and every trajectory.
pub fn estimate_excitation_params(
    trajectories: &[Dataset],
    t0: usize,
) -> Result<ExcitationEstimate> {
    let n = trajectories.iter().map(Dataset::n).min().unwrap_or(0);
    let ts: Vec<usize> = (t0..=n).collect();
    estimate_excitation_params_at(trajectories, t0, &ts)
}

/// As [`estimate_excitation_params`], restricted to the prefix lengths in `ts`.
pub fn estimate_excitation_params_at(
    trajectories: &[Dataset],
    t0: usize,
    ts: &[usize],
) -> Result<ExcitationEstimate> {
    if trajectories.is_empty() {
        return Err(Error::InvalidConfig("no trajectories supplied".into()));
    }
    let d = trajectories[0].d();
    if t0 < d {
        return Err(Error::InvalidConfig(format!(
            "t0 = {t0} is below the dimension {d}"
        )));
    }
    if ts.is_empty() {
        return Err(Error::InvalidConfig("no prefix lengths supplied".into()));
    }
    for ds in trajectories {
        if ds.d() != d {
            return Err(Error::DimensionMismatch(
                "trajectories differ in dimension".into(),
            ));
        }
        if ds.n() < t0 {
            return Err(Error::InvalidConfig(format!(
                "trajectory of length {} is shorter than t0 = {t0}",
                ds.n()
            )));
        }
    }
    let per: Vec<(f64, f64)> = trajectories
        .par_iter()
        .map(|ds| {
            let mut kappa = 0.0_f64;
            let mut lambda0 = f64::INFINITY;
            for &t in ts.iter().filter(|&&t| t >= t0 && t <= ds.n()) {
                let (k, l) = prefix_excitation(ds, t)?;
                kappa = kappa.max(k);
                lambda0 = lambda0.min(l);
            }
            Ok((kappa, lambda0))
        })
        .collect::<Result<_>>()?;
    let kappa = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let lambda0 = per.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if !(kappa > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidConfig(
            "no prefix length falls inside [t0, n]".into(),
        ));
    }
    Ok(ExcitationEstimate { kappa, lambda0 })
}
