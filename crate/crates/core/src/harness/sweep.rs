use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BoundForm, ExperimentConfig, Method};
use crate::baselines::{asymptotic_ellipsoid, set_membership_trace};
use crate::bounds::{
    dmr_bound, dmr_c_constant, eoa_radius_bound, eoa_size_bound, estimate_excitation_params_at,
    BoundParams, DmrParams, ExcitationEstimate,
};
use crate::eoa::eoa;
use crate::error::{Error, Result};
use crate::linalg::median;
use crate::model::{simulate_fir, Dataset};
use crate::rng::Stream;
use crate::sps::{indicator, sps_initialize_from, SpsConfig};

/// Weight-balancing constant of the DMR bound.
pub const DMR_NU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub t: usize,
    /// Aligned with [`SizeTable::methods`]; `None` where a bound is undefined.
    pub values: Vec<Option<f64>>,
}

/// Median sizes per prefix length.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeTable {
    pub methods: Vec<Method>,
    pub rows: Vec<SizeRow>,
}

impl SizeTable {
    pub fn get(&self, t: usize, method: Method) -> Option<f64> {
        let col = self.methods.iter().position(|m| *m == method)?;
        self.rows.iter().find(|r| r.t == t)?.values[col]
    }

    /// `(t, value)` pairs where the method is defined.
    pub fn column(&self, method: Method) -> Vec<(usize, f64)> {
        let Some(col) = self.methods.iter().position(|m| *m == method) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| r.values[col].map(|v| (r.t, v)))
            .collect()
    }
}

/// Everything a sweep produces, including the per-trial sizes behind the medians.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub table: SizeTable,
    pub ts: Vec<usize>,
    /// `per_trial[method][trial][k]` is the size at `ts[k]`.
    pub per_trial: BTreeMap<Method, Vec<Vec<f64>>>,
    pub excitation: Option<ExcitationEstimate>,
}

/// The trajectory and SPS configuration of trial `k`.
pub fn simulate_trial(config: &ExperimentConfig, k: usize) -> Result<(Dataset, SpsConfig)> {
    let stream = Stream::new(config.seed).trial(k);
    let ds = simulate_fir(
        &config.system.theta_star,
        &config.input,
        &config.noise,
        config.n,
        config.burn_in,
        stream,
    )?;
    let sps = sps_initialize_from(config.m, config.q, config.n, stream, config.seed)?;
    Ok((ds, sps))
}

struct TrialOutput {
    sizes: BTreeMap<Method, Vec<f64>>,
    excitation: Option<ExcitationEstimate>,
}

fn run_trial(
    config: &ExperimentConfig,
    k: usize,
    ts: &[usize],
    excitation_ts: &[usize],
) -> Result<TrialOutput> {
    let (ds, sps) = simulate_trial(config, k).map_err(|e| e.in_trial(k, config.n))?;
    let mut sizes: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let wants_eoa = config.has(Method::SpsEoa);
    let wants_asym = config.has(Method::Asymptotic);
    for &t in ts {
        if !(wants_eoa || wants_asym) {
            break;
        }
        let prefix = ds.prefix(t).map_err(|e| e.in_trial(k, t))?;
        if wants_eoa {
            let cfg = sps.prefix(t).map_err(|e| e.in_trial(k, t))?;
            let e = eoa(&prefix, &cfg, config.eoa_tol).map_err(|e| e.in_trial(k, t))?;
            sizes.entry(Method::SpsEoa).or_default().push(e.size());
        }
        if wants_asym {
            let e =
                asymptotic_ellipsoid(&prefix, config.confidence()).map_err(|e| e.in_trial(k, t))?;
            sizes.entry(Method::Asymptotic).or_default().push(e.size());
        }
    }
    if config.has(Method::Setmem) {
        let eps = config
            .noise_bound()
            .ok_or_else(|| Error::InvalidConfig("setmem needs a noise bound".into()))?;
        let states = set_membership_trace(&ds, eps, config.init_radius(), ts).map_err(|e| {
            let t = match e {
                Error::EmptySet { step } => step,
                _ => config.n,
            };
            e.in_trial(k, t)
        })?;
        let col = states
            .iter()
            .map(|s| s.to_ellipsoid().map(|e| e.size()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_trial(k, config.n))?;
        sizes.insert(Method::Setmem, col);
    }
    let excitation = if config.has(Method::EoaBound) {
        Some(
            estimate_excitation_params_at(std::slice::from_ref(&ds), config.t0, excitation_ts)
                .map_err(|e| e.in_trial(k, config.t0))?,
        )
    } else {
        None
    };
    Ok(TrialOutput { sizes, excitation })
}

/// EOA size bound at `t` in the configured form, `None` below the validity threshold.
pub fn eoa_bound_at(config: &ExperimentConfig, ex: &ExcitationEstimate, t: usize) -> Option<f64> {
    let params = bound_params(config, ex);
    match config.eoa_bound_form {
        BoundForm::Radius => eoa_radius_bound(&params, t).ok(),
        BoundForm::Diameter => eoa_size_bound(&params, t).ok(),
    }
}

pub fn bound_params(config: &ExperimentConfig, ex: &ExcitationEstimate) -> BoundParams {
    BoundParams {
        sigma: config.sigma(),
        lambda0: ex.lambda0,
        kappa: ex.kappa,
        rho: 1.0,
        d: config.system.d,
        m: config.m,
        q: config.q,
        delta: config.delta,
    }
}

/// DMR bound at `t` with the largest admissible constant, `η = q/m`, `ν = 0.5`.
pub fn dmr_bound_at(config: &ExperimentConfig, t: usize) -> Option<f64> {
    let eta = config.q as f64 / config.m as f64;
    let d = config.system.d;
    let sigma_phi = config.sigma_phi();
    let c = dmr_c_constant(sigma_phi, DMR_NU, eta, d, t).ok()?;
    let params = DmrParams {
        sigma_phi,
        sigma_w: config.sigma(),
        nu: DMR_NU,
        eta,
        c,
    };
    dmr_bound(&params, d, t).ok()
}

fn sweep(config: &ExperimentConfig, ts: &[usize], excitation_ts: &[usize]) -> Result<SweepResult> {
    config.validate()?;
    let outputs: Vec<TrialOutput> = (0..config.trials)
        .into_par_iter()
        .map(|k| run_trial(config, k, ts, excitation_ts))
        .collect::<Result<_>>()?;

    let mut methods: Vec<Method> = config.methods.clone();
    methods.sort();
    methods.dedup();

    let mut per_trial: BTreeMap<Method, Vec<Vec<f64>>> = BTreeMap::new();
    for out in &outputs {
        for (m, col) in &out.sizes {
            per_trial.entry(*m).or_default().push(col.clone());
        }
    }
    let excitation = if config.has(Method::EoaBound) {
        let kappa = outputs
            .iter()
            .filter_map(|o| o.excitation)
            .map(|e| e.kappa)
            .fold(0.0, f64::max);
        let lambda0 = outputs
            .iter()
            .filter_map(|o| o.excitation)
            .map(|e| e.lambda0)
            .fold(f64::INFINITY, f64::min);
        Some(ExcitationEstimate { kappa, lambda0 })
    } else {
        None
    };

    let rows = ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let values = methods
                .iter()
                .map(|m| match m {
                    Method::EoaBound => excitation
                        .as_ref()
                        .and_then(|ex| eoa_bound_at(config, ex, t)),
                    Method::DmrBound => dmr_bound_at(config, t),
                    _ => {
                        let col: Vec<f64> = per_trial[m].iter().map(|trial| trial[k]).collect();
                        Some(median(&col))
                    }
                })
                .collect();
            SizeRow { t, values }
        })
        .collect();
    Ok(SweepResult {
        table: SizeTable { methods, rows },
        ts: ts.to_vec(),
        per_trial,
        excitation,
    })
}

/// Sweep over the prefix grid of `config`, keeping the per-trial sizes.
pub fn run_size_sweep_detailed(config: &ExperimentConfig) -> Result<SweepResult> {
    let ts = config.prefix_grid();
    sweep(config, &ts, &ts)
}

/// Median size of every method at every prefix length of the grid.
pub fn run_size_sweep(config: &ExperimentConfig) -> Result<SizeTable> {
    run_size_sweep_detailed(config).map(|r| r.table)
}

/// Fraction of trials whose SPS region contains `θ*`.
pub fn run_coverage(config: &ExperimentConfig, num_trials: usize) -> Result<f64> {
    if num_trials == 0 {
        return Err(Error::InvalidConfig("num_trials must be at least 1".into()));
    }
    config.validate()?;
    let theta = nalgebra::DVector::from_column_slice(&config.system.theta_star);
    let hits: usize = (0..num_trials)
        .into_par_iter()
        .map(|k| -> Result<usize> {
            let (ds, sps) = simulate_trial(config, k).map_err(|e| e.in_trial(k, config.n))?;
            let out = indicator(&ds, &sps, &theta).map_err(|e| e.in_trial(k, config.n))?;
            Ok(out.accepted as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / num_trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub d: usize,
    pub n: usize,
    pub sps_eoa: f64,
    pub eoa_bound: Option<f64>,
    pub dmr: Option<f64>,
    pub asymptotic: f64,
    pub kappa: f64,
    pub lambda0: f64,
}

/// Sizes at `t = n` for each configuration; the bound constants are
/// estimated over the prefix grid `[t0, n]`.
pub fn run_table(configs: &[ExperimentConfig]) -> Result<Vec<TableRow>> {
    configs
        .iter()
        .map(|cfg| {
            let mut cfg = cfg.clone();
            for m in [
                Method::SpsEoa,
                Method::Asymptotic,
                Method::EoaBound,
                Method::DmrBound,
            ] {
                if !cfg.has(m) {
                    cfg.methods.push(m);
                }
            }
            let res = sweep(&cfg, &[cfg.n], &cfg.prefix_grid())?;
            let t = &res.table;
            let ex = res.excitation.expect("eoa_bound requested");
            Ok(TableRow {
                d: cfg.system.d,
                n: cfg.n,
                sps_eoa: t.get(cfg.n, Method::SpsEoa).unwrap_or(f64::NAN),
                eoa_bound: t.get(cfg.n, Method::EoaBound),
                dmr: t.get(cfg.n, Method::DmrBound),
                asymptotic: t.get(cfg.n, Method::Asymptotic).unwrap_or(f64::NAN),
                kappa: ex.kappa,
                lambda0: ex.lambda0,
            })
        })
        .collect()
}

/// Least-squares slope of `ln size` against `ln t`.
pub fn fit_shrinkage_rate(table: &SizeTable, method: Method) -> Result<f64> {
    let pts = table.column(method);
    if pts.len() < 10 {
        return Err(Error::InvalidConfig(format!(
            "{method} has {} rows, at least 10 are needed",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "{method} size at t = {t} is not positive: {v}"
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
