use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputSpec, NoiseSpec, DEFAULT_BURN_IN};

/// Region or bound tracked by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SpsEoa,
    Asymptotic,
    Setmem,
    EoaBound,
    DmrBound,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SpsEoa,
        Method::Asymptotic,
        Method::Setmem,
        Method::EoaBound,
        Method::DmrBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SpsEoa => "sps_eoa",
            Method::Asymptotic => "asymptotic",
            Method::Setmem => "setmem",
            Method::EoaBound => "eoa_bound",
            Method::DmrBound => "dmr_bound",
        }
    }

    /// Bounds are computed once from pooled constants rather than per trial.
    pub fn is_bound(self) -> bool {
        matches!(self, Method::EoaBound | Method::DmrBound)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

/// Which form of the EOA size bound a sweep reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// Bound on `sup ‖θ − θ̂‖` over the region.
    #[default]
    Radius,
    /// Twice the radius bound.
    Diameter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub d: usize,
    pub theta_star: Vec<f64>,
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub input: InputSpec,
    pub noise: NoiseSpec,
    pub m: usize,
    pub q: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub n: usize,
    pub t0: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Spacing of the prefix lengths in a sweep.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Subgaussian proxy for the bounds; defaults to the noise family's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// `ε` for the set-membership region; defaults to the noise family's hard bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_radius: Option<f64>,
    /// Regressor proxy for the DMR bound; defaults to the input's stationary deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_phi: Option<f64>,
    #[serde(default = "default_tol")]
    pub eoa_tol: f64,
    #[serde(default)]
    pub eoa_bound_form: BoundForm,
}

fn default_delta() -> f64 {
    0.5
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_stride() -> usize {
    25
}

fn default_tol() -> f64 {
    crate::eoa::DEFAULT_DUAL_TOL
}

impl ExperimentConfig {
    /// Bounded uniform noise, autoregressive input, all five methods.
    pub fn bounded_noise_reference() -> Self {
        ExperimentConfig {
            system: SystemSpec {
                d: 2,
                theta_star: vec![5.0, 5.0],
            },
            input: InputSpec::reference_ar(),
            noise: NoiseSpec::UniformSymmetric { halfwidth: 3.0 },
            m: 10,
            q: 1,
            delta: 0.5,
            n: 2000,
            t0: 400,
            trials: 100,
            seed: 2024,
            methods: vec![
                Method::SpsEoa,
                Method::Asymptotic,
                Method::Setmem,
                Method::EoaBound,
            ],
            burn_in: DEFAULT_BURN_IN,
            stride: 25,
            sigma: None,
            noise_bound: None,
            init_radius: None,
            sigma_phi: None,
            eoa_tol: default_tol(),
            eoa_bound_form: BoundForm::Radius,
        }
    }

    /// Non-stationary mixture noise, feedback-free input, DMR comparison.
    pub fn mixture_noise_reference() -> Self {
        ExperimentConfig {
            input: InputSpec::reference_fir(),
            noise: NoiseSpec::NonstationaryMixture { horizon: None },
            methods: vec![
                Method::SpsEoa,
                Method::Asymptotic,
                Method::EoaBound,
                Method::DmrBound,
            ],
            ..Self::bounded_noise_reference()
        }
    }

    /// A higher-order FIR row: `θ* = (5, …, 5)`, `m = 2`, `q = 1`, `t0 = n/5`.
    pub fn high_order_row(d: usize, n: usize) -> Self {
        ExperimentConfig {
            system: SystemSpec {
                d,
                theta_star: vec![5.0; d],
            },
            m: 2,
            q: 1,
            n,
            t0: n / 5,
            methods: vec![
                Method::SpsEoa,
                Method::EoaBound,
                Method::DmrBound,
                Method::Asymptotic,
            ],
            ..Self::mixture_noise_reference()
        }
    }

    pub fn confidence(&self) -> f64 {
        1.0 - self.q as f64 / self.m as f64
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.noise.subgaussian_proxy())
    }

    pub fn noise_bound(&self) -> Option<f64> {
        self.noise_bound.or_else(|| self.noise.hard_bound())
    }

    pub fn init_radius(&self) -> f64 {
        self.init_radius
            .unwrap_or(crate::baselines::DEFAULT_INIT_RADIUS)
    }

    pub fn sigma_phi(&self) -> f64 {
        self.sigma_phi
            .unwrap_or_else(|| self.input.stationary_std())
    }

    pub fn has(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    /// Prefix lengths `t0, t0 + stride, …` with `n` always included.
    pub fn prefix_grid(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = (self.t0..=self.n).step_by(self.stride.max(1)).collect();
        if ts.last() != Some(&self.n) {
            ts.push(self.n);
        }
        ts
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.system.d;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if d == 0 {
            return bad("system.d must be at least 1".into());
        }
        if self.system.theta_star.len() != d {
            return bad(format!(
                "theta_star has {} entries, expected d = {d}",
                self.system.theta_star.len()
            ));
        }
        if self.system.theta_star.iter().any(|v| !v.is_finite()) {
            return bad("theta_star entries must be finite".into());
        }
        if !(d <= self.t0 && self.t0 <= self.n) {
            return bad(format!(
                "need d <= t0 <= n, got d = {d}, t0 = {}, n = {}",
                self.t0, self.n
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.q > 0 && self.q < self.m) {
            return bad(format!(
                "need m > q > 0, got m = {}, q = {}",
                self.m, self.q
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if !(self.eoa_tol > 0.0) {
            return bad(format!("eoa_tol must be positive, got {}", self.eoa_tol));
        }
        self.input.validate()?;
        self.noise.validate()?;
        if let NoiseSpec::NonstationaryMixture { horizon: Some(h) } = self.noise {
            if h < self.n {
                return bad(format!(
                    "mixture horizon {h} is shorter than n = {}",
                    self.n
                ));
            }
        }
        if self.has(Method::Setmem) {
            match self.noise_bound() {
                Some(e) if e > 0.0 && e.is_finite() => {}
                Some(e) => return bad(format!("noise_bound must be positive, got {e}")),
                None => {
                    return bad("setmem needs a noise_bound for unbounded noise families".into())
                }
            }
            if !(self.init_radius() > 0.0) {
                return bad("init_radius must be positive".into());
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        if let Some(s) = self.sigma_phi {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma_phi must be positive, got {s}"));
            }
        }
        if self.has(Method::DmrBound) {
            let eta = self.q as f64 / self.m as f64;
            if eta > 2.0 / std::f64::consts::E {
                return bad(format!("dmr_bound needs q/m <= 2/e, got {eta}"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
