//! Synthetic linear-regression data: FIR systems driven by filtered Gaussian
//! inputs and corrupted by symmetric noise.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymEig;
use crate::rng::{label, Stream};

/// Relative tolerance for declaring `R̄_n` singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Moving-average taps of the reference input filter.
pub const REFERENCE_TAPS: [f64; 5] = [1.0, 0.775, 0.55, 0.325, 0.1];

/// Feedback coefficient of the reference autoregressive input.
pub const REFERENCE_POLE: f64 = 0.7;

/// Default number of discarded start-up input samples.
pub const DEFAULT_BURN_IN: usize = 200;

/// Regressor matrix `Φ_n` (one row per time step) and outputs `y_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    regressors: DMatrix<f64>,
    outputs: DVector<f64>,
}

impl Dataset {
    pub fn new(regressors: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        let (n, d) = regressors.shape();
        if d == 0 {
            return Err(Error::DimensionMismatch(
                "regressors have no columns".into(),
            ));
        }
        if outputs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} regressor rows but {} outputs",
                outputs.len()
            )));
        }
        if n < d {
            return Err(Error::DimensionMismatch(format!(
                "n = {n} is smaller than d = {d}"
            )));
        }
        if regressors
            .iter()
            .chain(outputs.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(
                "dataset contains non-finite values".into(),
            ));
        }
        let eig = SymEig::new(&(regressors.transpose() * &regressors));
        if !(eig.max() > 0.0) || eig.min() <= SINGULAR_TOL * eig.max() {
            return Err(Error::Singular(format!(
                "R_n has eigenvalues in [{:e}, {:e}]",
                eig.min(),
                eig.max()
            )));
        }
        Ok(Dataset {
            regressors,
            outputs,
        })
    }

    pub fn n(&self) -> usize {
        self.regressors.nrows()
    }

    pub fn d(&self) -> usize {
        self.regressors.ncols()
    }

    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.regressors
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    /// `R_n = Φ_nᵀΦ_n`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.regressors.transpose() * &self.regressors
    }

    /// `R̄_n = R_n / n`.
    pub fn rbar(&self) -> DMatrix<f64> {
        self.gram() / self.n() as f64
    }

    /// The first `t` samples.
    pub fn prefix(&self, t: usize) -> Result<Dataset> {
        if t > self.n() {
            return Err(Error::DimensionMismatch(format!(
                "prefix length {t} exceeds sample size {}",
                self.n()
            )));
        }
        Dataset::new(
            self.regressors.rows(0, t).into_owned(),
            self.outputs.rows(0, t).into_owned(),
        )
    }
}

/// Symmetric noise families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Uniform on `(-halfwidth, halfwidth)`.
    UniformSymmetric { halfwidth: f64 },
    /// Centred Gaussian.
    #[serde(rename = "gaussian_iid")]
    GaussianIid { stddev: f64 },
    /// Five-component Gaussian mixture whose component variances shrink
    /// linearly in `t` over the horizon. `None` means "the sample size".
    NonstationaryMixture {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
    },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::UniformSymmetric { halfwidth }
                if !(halfwidth > 0.0 && halfwidth.is_finite()) =>
            {
                Err(Error::InvalidConfig(format!(
                    "uniform halfwidth must be positive, got {halfwidth}"
                )))
            }
            NoiseSpec::GaussianIid { stddev } if !(stddev > 0.0 && stddev.is_finite()) => Err(
                Error::InvalidConfig(format!("gaussian stddev must be positive, got {stddev}")),
            ),
            NoiseSpec::NonstationaryMixture { horizon: Some(0) } => Err(Error::InvalidConfig(
                "mixture horizon must be positive".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Subgaussian variance proxy `σ` used by the size bounds.
    ///
    /// Uniform: `halfwidth/√3` (equals the standard deviation, which is the
    /// optimal proxy). Gaussian: the standard deviation. Mixture: `√2.7`, the
    /// value reported alongside the reference experiment.
    pub fn subgaussian_proxy(&self) -> f64 {
        match *self {
            NoiseSpec::UniformSymmetric { halfwidth } => halfwidth / 3f64.sqrt(),
            NoiseSpec::GaussianIid { stddev } => stddev,
            NoiseSpec::NonstationaryMixture { .. } => 2.7f64.sqrt(),
        }
    }

    /// Almost-sure bound `ε` with `|W_t| ≤ ε`, if the family is bounded.
    pub fn hard_bound(&self) -> Option<f64> {
        match *self {
            NoiseSpec::UniformSymmetric { halfwidth } => Some(halfwidth),
            _ => None,
        }
    }
}

/// One mixture draw at time `t` (1-based) for the given horizon.
pub fn sample_mixture_at<R: Rng + ?Sized>(t: usize, horizon: usize, rng: &mut R) -> f64 {
    let s = (horizon as f64 - t as f64) / horizon as f64;
    // (cumulative probability, mean, variance)
    let components = [
        (0.3, 0.0, s + 1.0),
        (0.5, -2.0, 3.0 * s),
        (0.7, 2.0, 3.0 * s),
        (0.85, -5.0, 2.0 * s + 1.0),
        (1.0, 5.0, 2.0 * s + 1.0),
    ];
    let u: f64 = rng.random();
    let &(_, mean, var) = components
        .iter()
        .find(|(cum, _, _)| u < *cum)
        .unwrap_or(&components[4]);
    let z: f64 = StandardNormal.sample(rng);
    mean + var.max(0.0).sqrt() * z
}

/// Draws `n` noise samples `W_1..W_n`.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    match *spec {
        NoiseSpec::UniformSymmetric { halfwidth } => {
            let dist = rand_distr::Uniform::new(-halfwidth, halfwidth)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            Ok((0..n).map(|_| dist.sample(rng)).collect())
        }
        NoiseSpec::GaussianIid { stddev } => Ok((0..n)
            .map(|_| stddev * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>()),
        NoiseSpec::NonstationaryMixture { horizon } => {
            let horizon = horizon.unwrap_or(n);
            if n > horizon {
                return Err(Error::InvalidConfig(format!(
                    "mixture horizon {horizon} is shorter than the {n} requested samples"
                )));
            }
            Ok((1..=n)
                .map(|t| sample_mixture_at(t, horizon, rng))
                .collect())
        }
    }
}

/// Input excitation processes driven by standard normal innovations `V_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    /// `U_t = a U_{t-1} + Σ_i c_i V_{t-i+1}`.
    ArFiltered { a: f64, c: Vec<f64> },
    /// `U_t = Σ_i c_i V_{t-i+1}`.
    FirFiltered { c: Vec<f64> },
}

impl InputSpec {
    pub fn reference_ar() -> Self {
        InputSpec::ArFiltered {
            a: REFERENCE_POLE,
            c: REFERENCE_TAPS.to_vec(),
        }
    }

    pub fn reference_fir() -> Self {
        InputSpec::FirFiltered {
            c: REFERENCE_TAPS.to_vec(),
        }
    }

    fn parts(&self) -> (f64, &[f64]) {
        match self {
            InputSpec::ArFiltered { a, c } => (*a, c),
            InputSpec::FirFiltered { c } => (0.0, c),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, c) = self.parts();
        if c.is_empty() {
            return Err(Error::InvalidConfig(
                "input filter needs at least one tap".into(),
            ));
        }
        if !(a.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "autoregressive pole |a| = {} must be < 1",
                a.abs()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("input taps must be finite".into()));
        }
        Ok(())
    }

    /// Stationary standard deviation of `U_t`, i.e. the ℓ² norm of the
    /// impulse response.
    pub fn stationary_std(&self) -> f64 {
        let (a, c) = self.parts();
        let mut filter = InputFilter::new(a, c);
        let mut total = 0.0;
        let mut k = 0;
        loop {
            let u = filter.step(if k == 0 { 1.0 } else { 0.0 });
            total += u * u;
            k += 1;
            if k > c.len() && (u.abs() < 1e-17 || k > 100_000) {
                break;
            }
        }
        total.sqrt()
    }
}

/// Stateful scalar filter behind [`InputSpec`].
#[derive(Debug, Clone)]
pub struct InputFilter {
    pole: f64,
    taps: Vec<f64>,
    innovations: VecDeque<f64>,
    last: f64,
}

impl InputFilter {
    pub fn new(pole: f64, taps: &[f64]) -> Self {
        InputFilter {
            pole,
            taps: taps.to_vec(),
            innovations: std::iter::repeat_n(0.0, taps.len()).collect(),
            last: 0.0,
        }
    }

    pub fn from_spec(spec: &InputSpec) -> Self {
        let (a, c) = spec.parts();
        InputFilter::new(a, c)
    }

    /// Overrides the previous output `U_{t-1}`.
    pub fn with_last_output(mut self, last: f64) -> Self {
        self.last = last;
        self
    }

    pub fn step(&mut self, innovation: f64) -> f64 {
        self.innovations.pop_back();
        self.innovations.push_front(innovation);
        let ma: f64 = self
            .taps
            .iter()
            .zip(&self.innovations)
            .map(|(c, v)| c * v)
            .sum();
        self.last = self.pole * self.last + ma;
        self.last
    }
}

/// Generates `U_1..U_n` after discarding `burn_in` start-up samples.
pub fn generate_input<R: Rng + ?Sized>(
    spec: &InputSpec,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig(
            "input length must be at least 1".into(),
        ));
    }
    let mut filter = InputFilter::from_spec(spec);
    let mut out = Vec::with_capacity(n);
    for k in 0..burn_in + n {
        let u = filter.step(StandardNormal.sample(rng));
        if k >= burn_in {
            out.push(u);
        }
    }
    Ok(out)
}

/// Builds the FIR regression `Y_t = Σ_k θ*_k U_{t-k} + W_t`.
///
/// `inputs` holds `U_{1-d}, …, U_n` (length `n + d`), so row `t` of the
/// regressor matrix is `(U_{t-1}, …, U_{t-d})`.
pub fn generate_fir_dataset(theta_star: &[f64], inputs: &[f64], noise: &[f64]) -> Result<Dataset> {
    let d = theta_star.len();
    let n = noise.len();
    if d == 0 {
        return Err(Error::DimensionMismatch("theta_star is empty".into()));
    }
    if inputs.len() != n + d {
        return Err(Error::DimensionMismatch(format!(
            "expected {} inputs for n = {n}, d = {d}, got {}",
            n + d,
            inputs.len()
        )));
    }
    // inputs[d + s - 1] = U_s
    let phi = DMatrix::from_fn(n, d, |row, k| inputs[row + d - 1 - k]);
    let theta = DVector::from_column_slice(theta_star);
    let y = &phi * theta + DVector::from_column_slice(noise);
    Dataset::new(phi, y)
}

/// Full FIR trajectory of length `n` drawn from `stream`.
pub fn simulate_fir(
    theta_star: &[f64],
    input: &InputSpec,
    noise: &NoiseSpec,
    n: usize,
    burn_in: usize,
    stream: Stream,
) -> Result<Dataset> {
    let d = theta_star.len();
    let inputs = generate_input(input, n + d, burn_in, &mut stream.split(label::INPUT).rng())?;
    let w = sample_noise(noise, n, &mut stream.split(label::NOISE).rng())?;
    generate_fir_dataset(theta_star, &inputs, &w)
}
