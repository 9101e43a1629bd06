//! Ellipsoidal outer approximation of the SPS region.
//!
//! For every perturbed sum the worst-case value of `‖S₀(θ)‖²` over the set
//! `{θ : ‖S₀(θ)‖² ≤ ‖Sᵢ(θ)‖²}` is computed through its one-dimensional convex
//! dual. The `q`-th largest of those values is the radius of an ellipsoid
//! centred at the least-squares estimate with shape `R̄_n`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{lambda_min, principal_inv_sqrt, symmetrize, thin_qr, SymEig};
use crate::model::Dataset;
use crate::search::golden_section;
use crate::sps::{SpsConfig, SpsEvaluator};

/// Relative tolerance on ξ used when callers have no preference.
pub const DEFAULT_DUAL_TOL: f64 = 1e-9;

/// `λmax(K²) ≥ 1 − BOUNDED_TOL` declares the dual unbounded.
pub const BOUNDED_TOL: f64 = 1e-9;

/// Eigenvalues of `A₀ − I/ξ` below this fraction of the largest are zero.
pub const PINV_TOL: f64 = 1e-10;

const MAX_DOUBLINGS: usize = 2000;
const MAX_GOLDEN: usize = 500;

/// `{θ : (θ − center)ᵀ shape (θ − center) ≤ radius}`; `radius = ∞` is the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub radius: f64,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, radius: f64) -> Result<Self> {
        let d = center.len();
        if shape.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "shape is {}x{}, center has length {d}",
                shape.nrows(),
                shape.ncols()
            )));
        }
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "radius must be in [0, inf], got {radius}"
            )));
        }
        if center.iter().chain(shape.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "ellipsoid entries must be finite".into(),
            ));
        }
        let asym = (&shape - shape.transpose()).amax();
        if asym > 1e-9 * shape.amax().max(1.0) {
            return Err(Error::InvalidConfig("shape matrix is not symmetric".into()));
        }
        if d > 0 && lambda_min(&shape) <= 0.0 {
            return Err(Error::InvalidConfig(
                "shape matrix is not positive definite".into(),
            ));
        }
        Ok(Ellipsoid {
            center,
            shape: symmetrize(&shape),
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.radius.is_finite()
    }

    /// `(θ − c)ᵀ S (θ − c)`.
    pub fn quad_form(&self, theta: &DVector<f64>) -> f64 {
        let e = theta - &self.center;
        e.dot(&(&self.shape * &e))
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        !self.is_bounded() || self.quad_form(theta) <= self.radius
    }

    /// Length of the longest axis.
    pub fn size(&self) -> f64 {
        ellipsoid_size(self)
    }
}

/// `2√(r / λmin(S))`, infinite for an unbounded ellipsoid.
pub fn ellipsoid_size(e: &Ellipsoid) -> f64 {
    if !e.radius.is_finite() {
        return f64::INFINITY;
    }
    if e.radius == 0.0 {
        return 0.0;
    }
    2.0 * (e.radius / lambda_min(&e.shape)).sqrt()
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RadiusRepr {
    Finite(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
    radius: RadiusRepr,
}

impl Serialize for Ellipsoid {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let repr = EllipsoidRepr {
            center: self.center.iter().copied().collect(),
            shape: (0..d)
                .map(|r| (0..d).map(|c| self.shape[(r, c)]).collect())
                .collect(),
            radius: if self.radius.is_finite() {
                RadiusRepr::Finite(self.radius)
            } else {
                RadiusRepr::Text("inf".into())
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Ellipsoid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = EllipsoidRepr::deserialize(deserializer)?;
        let d = repr.center.len();
        if repr.shape.len() != d || repr.shape.iter().any(|r| r.len() != d) {
            return Err(D::Error::custom(format!("shape must be {d}x{d}")));
        }
        let radius = match repr.radius {
            RadiusRepr::Finite(r) => r,
            RadiusRepr::Text(s) if s == "inf" => f64::INFINITY,
            RadiusRepr::Text(s) => return Err(D::Error::custom(format!("invalid radius {s:?}"))),
        };
        let shape = DMatrix::from_fn(d, d, |r, c| repr.shape[r][c]);
        Ellipsoid::new(DVector::from_vec(repr.center), shape, radius).map_err(D::Error::custom)
    }
}

/// Least-squares estimate through a thin QR factorisation.
pub fn least_squares(dataset: &Dataset) -> Result<DVector<f64>> {
    let (q, r) = thin_qr(dataset.regressors());
    let qty = q.transpose() * dataset.outputs();
    r.solve_upper_triangular(&qty)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("regressor matrix is rank deficient".into()))
}

/// Factors shared by all duals of one dataset.
#[derive(Debug, Clone)]
pub struct EoaContext {
    phi_q: DMatrix<f64>,
    /// `Φ_Qᵀ y`.
    qty: DVector<f64>,
    /// `R^{-1/2} Φ_Rᵀ`, an orthogonal matrix.
    orth: DMatrix<f64>,
    theta_hat: DVector<f64>,
    rbar: DMatrix<f64>,
    n: usize,
}

impl EoaContext {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let (phi_q, phi_r) = thin_qr(dataset.regressors());
        let qty = phi_q.transpose() * dataset.outputs();
        let theta_hat = phi_r
            .solve_upper_triangular(&qty)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular("regressor matrix is rank deficient".into()))?;
        let svd = phi_r.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(Error::Singular(
                    "SVD of the triangular factor failed".into(),
                ))
            }
        };
        let orth = v_t.transpose() * u.transpose();
        Ok(EoaContext {
            phi_q,
            qty,
            orth,
            theta_hat,
            rbar: dataset.rbar(),
            n: dataset.n(),
        })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// The dual problem for sign row `i` (1-based).
    pub fn dual(&self, signs: &[f64], y: &DVector<f64>) -> Result<DualProblem> {
        let (n, d) = self.phi_q.shape();
        if signs.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "sign row has length {}, outputs {}, expected {n}",
                signs.len(),
                y.len()
            )));
        }
        let mut k = DMatrix::<f64>::zeros(d, d);
        let mut w = DVector::<f64>::zeros(d);
        for (t, row) in self.phi_q.row_iter().enumerate() {
            let a = signs[t];
            for r in 0..d {
                let ar = a * row[r];
                w[r] += ar * y[t];
                for c in r..d {
                    k[(r, c)] += ar * row[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                k[(r, c)] = k[(c, r)];
            }
        }
        let u = &w - &k * &self.qty;
        let k2 = &k * &k;
        let a0 = symmetrize(&(&self.orth * (DMatrix::identity(d, d) - k2) * self.orth.transpose()));
        let b0 = &self.orth * (&k * &u) / (self.n as f64).sqrt();
        let c0 = -u.norm_squared() / self.n as f64;
        let k_eigs = SymEig::new(&k).values.iter().copied().collect();
        Ok(DualProblem::from_parts(k_eigs, a0, b0, c0))
    }
}

/// `min_{ξ > ξ_lower} h(ξ)` with `h(ξ) = ξ(b₀ᵀ(A₀ − I/ξ)†b₀ − c₀)`.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pub k_eigs: Vec<f64>,
    pub lam_max_k2: f64,
    pub a0: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub c0: f64,
    pub xi_lower: f64,
    a_eigs: Vec<f64>,
    /// `b₀` in the eigenbasis of `A₀`.
    b_tilde: Vec<f64>,
}

impl DualProblem {
    pub fn from_parts(k_eigs: Vec<f64>, a0: DMatrix<f64>, b0: DVector<f64>, c0: f64) -> Self {
        let lam_max_k2 = k_eigs.iter().map(|k| k * k).fold(0.0, f64::max);
        let xi_lower = if lam_max_k2 < 1.0 {
            1.0 / (1.0 - lam_max_k2)
        } else {
            f64::INFINITY
        };
        let eig = SymEig::new(&a0);
        let b_tilde = (eig.vectors.transpose() * &b0).iter().copied().collect();
        DualProblem {
            k_eigs,
            lam_max_k2,
            a0,
            b0,
            c0,
            xi_lower,
            a_eigs: eig.values.iter().copied().collect(),
            b_tilde,
        }
    }

    pub fn dim(&self) -> usize {
        self.b0.len()
    }

    pub fn bounded(&self) -> bool {
        self.lam_max_k2 < 1.0 - BOUNDED_TOL
    }

    /// The dual objective; `+∞` where `b₀` leaves the range of `A₀ − I/ξ`.
    pub fn objective(&self, xi: f64) -> f64 {
        if !(xi > 0.0) {
            return f64::INFINITY;
        }
        let shifted: Vec<f64> = self.a_eigs.iter().map(|a| a - 1.0 / xi).collect();
        let top = shifted.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let zero = PINV_TOL * top;
        let b_scale = self.b0.norm();
        let mut quad = 0.0;
        for (e, b) in shifted.iter().zip(&self.b_tilde) {
            if e.abs() <= zero {
                if b.abs() > 1e-12 * b_scale {
                    return f64::INFINITY;
                }
            } else if *e < 0.0 {
                return f64::INFINITY;
            } else {
                quad += b * b / e;
            }
        }
        xi * (quad - self.c0)
    }
}

/// Optimal dual value together with the minimising multiplier.
#[derive(Debug, Clone, Copy)]
pub struct DualSolution {
    pub gamma: f64,
    pub xi: f64,
}

/// Builds the dual problem for perturbed sum `i ∈ 1..m`.
pub fn build_dual(dataset: &Dataset, config: &SpsConfig, i: usize) -> Result<DualProblem> {
    config.check_dataset(dataset)?;
    if i == 0 || i >= config.m() {
        return Err(Error::InvalidConfig(format!(
            "dual index {i} outside 1..{}",
            config.m()
        )));
    }
    EoaContext::new(dataset)?.dual(&config.sign_row(i), dataset.outputs())
}

pub fn solve_dual(dual: &DualProblem, tol: f64) -> Result<f64> {
    solve_dual_detailed(dual, tol).map(|s| s.gamma)
}

/// Minimises the convex dual objective over `ξ > ξ_lower`.
///
/// The search variable is `ln(ξ − ξ_lower)`, which keeps the steep region
/// next to `ξ_lower` resolved; the upper end is found by doubling.
pub fn solve_dual_detailed(dual: &DualProblem, tol: f64) -> Result<DualSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if !dual.bounded() {
        return Err(Error::Unbounded);
    }
    let lower = dual.xi_lower;
    let h = |s: f64| dual.objective(lower + s);

    let mut s = lower;
    let mut hs = h(s);
    let mut doublings = 0;
    loop {
        let h2 = h(2.0 * s);
        if !(h2 < hs) {
            break;
        }
        s *= 2.0;
        hs = h2;
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !s.is_finite() {
            return Err(Error::NonConvergence {
                what: "dual bracketing",
                iterations: doublings,
            });
        }
    }
    let lo = (lower * 1e-13).ln();
    let hi = (2.0 * s).ln();
    let best = golden_section(|u| h(u.exp()), lo, hi, tol.min(1e-3), MAX_GOLDEN);
    if !best.converged {
        return Err(Error::NonConvergence {
            what: "dual golden-section search",
            iterations: MAX_GOLDEN,
        });
    }
    let (gamma, xi) = if hs < best.value {
        (hs, lower + s)
    } else {
        (best.value, lower + best.x.exp())
    };
    if !gamma.is_finite() {
        return Err(Error::NonConvergence {
            what: "dual golden-section search",
            iterations: MAX_GOLDEN,
        });
    }
    Ok(DualSolution {
        gamma: gamma.max(0.0),
        xi,
    })
}

/// All `γᵢ*`, `i = 1..m`, with `∞` for unbounded duals.
pub fn dual_values(dataset: &Dataset, config: &SpsConfig, tol: f64) -> Result<Vec<f64>> {
    config.check_dataset(dataset)?;
    let ctx = EoaContext::new(dataset)?;
    dual_values_with(&ctx, dataset, config, tol)
}

fn dual_values_with(
    ctx: &EoaContext,
    dataset: &Dataset,
    config: &SpsConfig,
    tol: f64,
) -> Result<Vec<f64>> {
    (1..config.m())
        .into_par_iter()
        .map(|i| {
            let dual = ctx.dual(&config.sign_row(i), dataset.outputs())?;
            if dual.bounded() {
                solve_dual(&dual, tol)
            } else {
                Ok(f64::INFINITY)
            }
        })
        .collect()
}

/// `q`-th largest value, `∞` ranking above every finite value.
pub fn select_radius(gammas: &[f64], q: usize) -> Result<f64> {
    if q == 0 || q > gammas.len() {
        return Err(Error::InvalidConfig(format!(
            "q = {q} outside 1..={}",
            gammas.len()
        )));
    }
    let mut sorted = gammas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[q - 1])
}

/// The outer-approximating ellipsoid of the SPS region.
pub fn eoa(dataset: &Dataset, config: &SpsConfig, tol: f64) -> Result<Ellipsoid> {
    config.check_dataset(dataset)?;
    let ctx = EoaContext::new(dataset)?;
    let gammas = dual_values_with(&ctx, dataset, config, tol)?;
    let radius = select_radius(&gammas, config.q())?;
    Ok(Ellipsoid {
        center: ctx.theta_hat.clone(),
        shape: ctx.rbar.clone(),
        radius,
    })
}

/// `ξ·λᵢ(P(ξ))` from the eigenvalues of `K`, sorted descending.
pub fn eigs_of_xi_p(dual: &DualProblem, xi: f64) -> Result<Vec<f64>> {
    if !(xi > dual.xi_lower) {
        return Err(Error::InvalidConfig(format!(
            "xi = {xi} must exceed the lower limit {}",
            dual.xi_lower
        )));
    }
    if dual
        .k_eigs
        .iter()
        .any(|k| !(k.abs() > 0.0 && k.abs() < 1.0))
    {
        return Err(Error::InvalidConfig(
            "eigenvalues of K must lie in (0, 1) in modulus".into(),
        ));
    }
    let mut out: Vec<f64> = dual
        .k_eigs
        .iter()
        .map(|k| {
            let k2 = k * k;
            xi * (xi * k2 - xi - k2 + 1.0) / (xi * k2 - xi + 1.0)
        })
        .collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Closed-form minimiser of `ξ λmax(P(ξ))`.
pub fn xi_prime(dual: &DualProblem) -> f64 {
    (1.0 + dual.lam_max_k2.sqrt()) / (1.0 - dual.lam_max_k2)
}

/// Brute-force lower bound on `γᵢ*` for `d ≤ 3`.
///
/// The constraint `‖S₀‖² ≤ ‖Sᵢ‖²` is a quadratic inequality in
/// `z = R̄^{1/2}(θ − θ̂)`; its coefficients are recovered from evaluations of
/// the perturbed sums. The objective is `‖z‖²`, so the maximum sits on the
/// boundary ellipsoid, which is sampled with a low-discrepancy sequence and
/// refined by local search.
pub fn primal_oracle(
    dataset: &Dataset,
    config: &SpsConfig,
    i: usize,
    budget: usize,
) -> Result<f64> {
    let d = dataset.d();
    if d > 3 {
        return Err(Error::InvalidConfig(format!(
            "primal oracle supports d <= 3, got {d}"
        )));
    }
    if i == 0 || i >= config.m() {
        return Err(Error::InvalidConfig(format!(
            "index {i} outside 1..{}",
            config.m()
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidConfig("budget must be positive".into()));
    }
    let eval = SpsEvaluator::new(dataset, config)?;
    let gram = dataset.gram();
    let theta_hat = gram
        .clone()
        .lu()
        .solve(&(dataset.regressors().transpose() * dataset.outputs()))
        .ok_or_else(|| Error::Singular("normal equations".into()))?;
    let isqrt = eval.cache().rbar_isqrt.clone();
    let g = |z: &DVector<f64>| -> Result<f64> {
        let theta = &theta_hat + &isqrt * z;
        let sums = eval.sums(&theta)?;
        Ok(sums[0].norm_squared() - sums[i].norm_squared())
    };

    let unit = |k: usize| {
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        e
    };
    let c = g(&DVector::zeros(d))?;
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut v = DVector::<f64>::zeros(d);
    for j in 0..d {
        let gp = g(&unit(j))?;
        let gm = g(&(-unit(j)))?;
        m[(j, j)] = 0.5 * (gp + gm) - c;
        v[j] = 0.25 * (gp - gm);
    }
    for j in 0..d {
        for k in j + 1..d {
            let gjk = g(&(unit(j) + unit(k)))?;
            let off = 0.5 * (gjk - m[(j, j)] - m[(k, k)] - 2.0 * v[j] - 2.0 * v[k] - c);
            m[(j, k)] = off;
            m[(k, j)] = off;
        }
    }
    let eig = SymEig::new(&m);
    if !(eig.min() > 1e-12 * eig.max().abs()) || !(eig.min() > 0.0) {
        return Err(Error::Unbounded);
    }
    let m_inv = eig.map(|l| 1.0 / l);
    let center = -(&m_inv * &v);
    let rho2 = v.dot(&(&m_inv * &v)) - c;
    // θ̂ itself is feasible, so ρ² ≥ 0 up to rounding.
    if rho2 <= 0.0 {
        return Ok(center.norm_squared());
    }
    let axes = principal_inv_sqrt(&m) * rho2.sqrt();
    let zc: Vec<f64> = center.iter().copied().collect();
    let a: Vec<Vec<f64>> = (0..d)
        .map(|r| (0..d).map(|col| axes[(r, col)]).collect())
        .collect();
    let objective = |u: &[f64]| -> f64 {
        (0..d)
            .map(|r| {
                let z = zc[r] + (0..d).map(|col| a[r][col] * u[col]).sum::<f64>();
                z * z
            })
            .sum()
    };
    Ok(match d {
        1 => objective(&[1.0]).max(objective(&[-1.0])),
        2 => boundary_max_2d(&objective, budget),
        _ => boundary_max_3d(&objective, budget),
    })
}

fn radical_inverse(mut k: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut x = 0.0;
    while k > 0 {
        x += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    x
}

/// Indices after which the running best is refined: the end of every
/// power-of-two prefix and the final sample. Nested prefixes make the result
/// nondecreasing along power-of-two budgets.
fn is_checkpoint(k: usize, budget: usize) -> bool {
    (k + 1).is_power_of_two() || k + 1 == budget
}

fn boundary_max_2d(objective: &dyn Fn(&[f64]) -> f64, budget: usize) -> f64 {
    let tau = std::f64::consts::TAU;
    let at = |phi: f64| {
        let (s, c) = phi.sin_cos();
        objective(&[c, s])
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_phi = 0.0;
    let mut refined = f64::NEG_INFINITY;
    let mut seeds: Vec<f64> = Vec::new();
    for k in 0..budget {
        let phi = tau * radical_inverse(k, 2);
        let val = at(phi);
        if val > best {
            best = val;
            best_phi = phi;
        }
        if is_checkpoint(k, budget) && !seeds.contains(&best_phi) {
            seeds.push(best_phi);
            let width = 2.0 * tau / (k + 1) as f64;
            let local = golden_section(|p| -at(p), best_phi - width, best_phi + width, 1e-13, 200);
            refined = refined.max(-local.value);
        }
    }
    best.max(refined)
}

fn boundary_max_3d(objective: &dyn Fn(&[f64]) -> f64, budget: usize) -> f64 {
    let tau = std::f64::consts::TAU;
    let at = |zc: f64, phi: f64| {
        let zc = zc.clamp(-1.0, 1.0);
        let r = (1.0 - zc * zc).max(0.0).sqrt();
        let (s, c) = phi.sin_cos();
        objective(&[r * c, r * s, zc])
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_pt = (0.0, 0.0);
    let mut refined = f64::NEG_INFINITY;
    let mut seeds: Vec<(f64, f64)> = Vec::new();
    for k in 0..budget {
        let zc = 2.0 * radical_inverse(k + 1, 2) - 1.0;
        let phi = tau * radical_inverse(k + 1, 3);
        let val = at(zc, phi);
        if val > best {
            best = val;
            best_pt = (zc, phi);
        }
        if is_checkpoint(k, budget) && !seeds.contains(&best_pt) {
            seeds.push(best_pt);
            refined = refined.max(pattern_search_sphere(
                &at,
                best_pt,
                4.0 / ((k + 1) as f64).sqrt(),
            ));
        }
    }
    best.max(refined)
}

// Compass search in (polar angle, azimuth).
fn pattern_search_sphere(at: &dyn Fn(f64, f64) -> f64, start: (f64, f64), step0: f64) -> f64 {
    let f = |th: f64, phi: f64| at(th.cos(), phi);
    let mut th = start.0.clamp(-1.0, 1.0).acos();
    let mut phi = start.1;
    let mut val = f(th, phi);
    let mut step = step0.min(1.0);
    while step > 1e-12 {
        let mut moved = false;
        for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = f(th + dt, phi + dp);
            if cand > val {
                val = cand;
                th += dt;
                phi += dp;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    val
}
