//! Sign-perturbed sums: initialisation and the rank-based membership test.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::principal_inv_sqrt;
use crate::model::Dataset;
use crate::rng::{label, Stream};

/// Random objects shared by the indicator and the outer approximation.
///
/// `signs` holds `m - 1` rows of `n` entries in `{-1, +1}`; `permutation`
/// is the tie-breaking order `π` on `{0, …, m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpsConfig {
    m: usize,
    q: usize,
    signs: Vec<Vec<i8>>,
    permutation: Vec<usize>,
    seed: u64,
}

impl SpsConfig {
    pub fn new(
        m: usize,
        q: usize,
        signs: Vec<Vec<i8>>,
        permutation: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        validate_levels(m, q)?;
        if signs.len() != m - 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} sign rows, got {}",
                m - 1,
                signs.len()
            )));
        }
        let n = signs[0].len();
        if signs.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(
                "sign rows have unequal lengths".into(),
            ));
        }
        if signs.iter().flatten().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidConfig("sign entries must be +1 or -1".into()));
        }
        let mut seen = vec![false; m];
        if permutation.len() != m
            || permutation
                .iter()
                .any(|&p| p >= m || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidConfig(format!(
                "permutation must be a bijection on 0..{m}"
            )));
        }
        Ok(SpsConfig {
            m,
            q,
            signs,
            permutation,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.signs[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signs(&self) -> &[Vec<i8>] {
        &self.signs
    }

    /// Sign row `i` in `1..m` as ±1.0 values.
    pub fn sign_row(&self, i: usize) -> Vec<f64> {
        self.signs[i - 1].iter().map(|&s| s as f64).collect()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Confidence level `p = 1 - q/m`.
    pub fn confidence(&self) -> f64 {
        1.0 - self.q as f64 / self.m as f64
    }

    /// The same perturbations restricted to the first `t` time steps.
    pub fn prefix(&self, t: usize) -> Result<SpsConfig> {
        if t == 0 || t > self.n() {
            return Err(Error::DimensionMismatch(format!(
                "prefix length {t} outside 1..={}",
                self.n()
            )));
        }
        Ok(SpsConfig {
            signs: self.signs.iter().map(|row| row[..t].to_vec()).collect(),
            ..self.clone()
        })
    }

    pub(crate) fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "sign table has {} columns but the dataset has {} samples",
                self.n(),
                dataset.n()
            )));
        }
        Ok(())
    }
}

fn validate_levels(m: usize, q: usize) -> Result<()> {
    if !(m > q && q > 0) {
        return Err(Error::InvalidConfig(format!(
            "need m > q > 0, got m = {m}, q = {q}"
        )));
    }
    Ok(())
}

/// Draws a fresh sign table and tie-breaking permutation from `seed`.
pub fn sps_initialize(m: usize, q: usize, n: usize, seed: u64) -> Result<SpsConfig> {
    sps_initialize_from(m, q, n, Stream::new(seed), seed)
}

/// As [`sps_initialize`], drawing from an explicit stream.
pub fn sps_initialize_from(
    m: usize,
    q: usize,
    n: usize,
    stream: Stream,
    seed: u64,
) -> Result<SpsConfig> {
    validate_levels(m, q)?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = stream.split(label::SIGNS).rng();
    let signs = (1..m)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect()
        })
        .collect();
    let mut permutation: Vec<usize> = (0..m).collect();
    permutation.shuffle(&mut rng);
    SpsConfig::new(m, q, signs, permutation, seed)
}

/// `R̄_n` and its principal inverse square root.
#[derive(Debug, Clone)]
pub struct SqrtCache {
    pub rbar: DMatrix<f64>,
    pub rbar_isqrt: DMatrix<f64>,
}

impl SqrtCache {
    pub fn new(dataset: &Dataset) -> Self {
        let rbar = dataset.rbar();
        let rbar_isqrt = principal_inv_sqrt(&rbar);
        SqrtCache { rbar, rbar_isqrt }
    }
}

/// Outcome of the rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndicatorOutcome {
    pub accepted: bool,
    /// `R(θ) ∈ 1..=m`.
    pub rank: usize,
}

/// Evaluates the perturbed sums for many candidate parameters against one
/// dataset and configuration.
#[derive(Debug, Clone)]
pub struct SpsEvaluator<'a> {
    dataset: &'a Dataset,
    config: &'a SpsConfig,
    cache: SqrtCache,
}

impl<'a> SpsEvaluator<'a> {
    pub fn new(dataset: &'a Dataset, config: &'a SpsConfig) -> Result<Self> {
        config.check_dataset(dataset)?;
        Ok(SpsEvaluator {
            dataset,
            config,
            cache: SqrtCache::new(dataset),
        })
    }

    pub fn cache(&self) -> &SqrtCache {
        &self.cache
    }

    /// `S_0(θ), …, S_{m-1}(θ)`.
    pub fn sums(&self, theta: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let d = self.dataset.d();
        if theta.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "theta has length {}, expected {d}",
                theta.len()
            )));
        }
        let phi = self.dataset.regressors();
        let residuals = self.dataset.outputs() - phi * theta;
        let n = self.dataset.n() as f64;
        let mut raw = vec![DVector::<f64>::zeros(d); self.config.m()];
        for (t, row) in phi.row_iter().enumerate() {
            let e = residuals[t];
            for k in 0..d {
                raw[0][k] += row[k] * e;
            }
            for (i, signs) in self.config.signs().iter().enumerate() {
                let se = signs[t] as f64 * e;
                for k in 0..d {
                    raw[i + 1][k] += row[k] * se;
                }
            }
        }
        Ok(raw
            .into_iter()
            .map(|s| &self.cache.rbar_isqrt * s / n)
            .collect())
    }

    pub fn indicator(&self, theta: &DVector<f64>) -> Result<IndicatorOutcome> {
        let norms: Vec<f64> = self.sums(theta)?.iter().map(|s| s.norm_squared()).collect();
        Ok(rank_outcome(
            &norms,
            self.config.permutation(),
            self.config.q(),
        ))
    }
}

/// `‖S_k‖² ≻_π ‖S_j‖²`: strictly greater, ties broken by `π`.
fn dominates(norms: &[f64], pi: &[usize], k: usize, j: usize) -> bool {
    norms[k] > norms[j] || (norms[k] == norms[j] && pi[k] > pi[j])
}

pub(crate) fn rank_outcome(norms: &[f64], pi: &[usize], q: usize) -> IndicatorOutcome {
    let m = norms.len();
    let rank = 1 + (1..m).filter(|&i| dominates(norms, pi, 0, i)).count();
    IndicatorOutcome {
        accepted: rank <= m - q,
        rank,
    }
}

/// `S_0(θ), …, S_{m-1}(θ)` for a single parameter.
pub fn compute_sums(
    dataset: &Dataset,
    config: &SpsConfig,
    theta: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    SpsEvaluator::new(dataset, config)?.sums(theta)
}

/// The SPS membership test for a single parameter.
pub fn indicator(
    dataset: &Dataset,
    config: &SpsConfig,
    theta: &DVector<f64>,
) -> Result<IndicatorOutcome> {
    SpsEvaluator::new(dataset, config)?.indicator(theta)
}
