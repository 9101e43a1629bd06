//! Reference regions: the asymptotic χ² ellipsoid and a recursive
//! set-membership outer-bounding ellipsoid for bounded noise.

use nalgebra::{DMatrix, DVector};

use crate::eoa::{least_squares, Ellipsoid};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::Dataset;
use crate::special::chi2_quantile;

/// Default radius of the initial set-membership ball.
pub const DEFAULT_INIT_RADIUS: f64 = 1e3;

/// Updates that shrink the log-volume by less than this are skipped.
pub const VOLUME_TOL: f64 = 1e-12;

/// `{θ : (θ − θ̂)ᵀ R̄_n (θ − θ̂) ≤ μ σ̂² / n}` with `μ` the χ²(d) quantile at `p`.
pub fn asymptotic_ellipsoid(dataset: &Dataset, p: f64) -> Result<Ellipsoid> {
    let (n, d) = (dataset.n(), dataset.d());
    if n <= d {
        return Err(Error::InvalidConfig(format!(
            "the noise variance estimate needs n > d, got n = {n}, d = {d}"
        )));
    }
    let mu = chi2_quantile(p, d)?;
    let theta = least_squares(dataset)?;
    let rss = (dataset.outputs() - dataset.regressors() * &theta).norm_squared();
    let sigma2 = rss / (n - d) as f64;
    Ellipsoid::new(theta, dataset.rbar(), mu * sigma2 / n as f64)
}

/// `{θ : (θ − θ̂)ᵀ P⁻¹ (θ − θ̂) ≤ σ²}`, an outer bound on every parameter
/// consistent with the processed data and `|y_t − φ_tᵀθ| ≤ ε`.
///
/// `P` is held as a square-root factor `L` with `P = L Lᵀ`; very flat
/// ellipsoids are otherwise lost to cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct SetMembershipState {
    pub theta_hat: DVector<f64>,
    factor: DMatrix<f64>,
    pub sigma2: f64,
    pub noise_bound: f64,
}

impl SetMembershipState {
    /// Ball of radius `radius` around `center`.
    pub fn ball(center: DVector<f64>, radius: f64, noise_bound: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial radius must be positive, got {radius}"
            )));
        }
        if !(noise_bound > 0.0 && noise_bound.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise bound must be positive, got {noise_bound}"
            )));
        }
        let d = center.len();
        Ok(SetMembershipState {
            theta_hat: center,
            factor: DMatrix::identity(d, d) * radius,
            sigma2: 1.0,
            noise_bound,
        })
    }

    /// The shape matrix `P`.
    pub fn p_mat(&self) -> DMatrix<f64> {
        symmetrize(&(&self.factor * self.factor.transpose()))
    }

    /// A factor `L` with `P = L Lᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        let Some(w) = self.factor.clone().lu().solve(&(theta - &self.theta_hat)) else {
            return false;
        };
        w.norm_squared() <= self.sigma2 * (1.0 + 1e-9) + 1e-300
    }

    /// `ln det(σ² P)`, twice the log-volume up to a constant.
    pub fn log_det(&self) -> f64 {
        let d = self.theta_hat.len() as f64;
        let sv = self.factor.clone().singular_values();
        d * self.sigma2.ln() + 2.0 * sv.iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        let inv = self
            .factor
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("set-membership shape matrix".into()))?;
        Ellipsoid::new(
            self.theta_hat.clone(),
            symmetrize(&(inv.transpose() * &inv)),
            self.sigma2,
        )
    }
}

/// Log-volume change of the weighted update as a function of the weight.
fn log_volume_change(lam: f64, a: f64, g: f64, d: f64) -> f64 {
    let kappa = 1.0 - lam * (1.0 - lam) * a / (1.0 - lam + lam * g);
    if kappa <= 0.0 {
        return f64::NEG_INFINITY;
    }
    d * kappa.ln() - (d - 1.0) * (1.0 - lam).ln() - (1.0 - lam + lam * g).ln()
}

/// Volume-minimising weight in `(0, 1)`, if any stationary point lies there.
fn optimal_weight(a: f64, g: f64, d: f64) -> Option<(f64, f64)> {
    let a2 = a * (d + g) - d * (g - 1.0) * (g - 1.0);
    let a1 = -2.0 * a * d - a * g - 2.0 * d * g + 2.0 * d + g * g - g;
    let a0 = d * (a - 1.0) + g;
    let mut roots = Vec::with_capacity(2);
    let scale = a2.abs().max(a1.abs()).max(a0.abs());
    if a2.abs() <= 1e-14 * scale {
        if a1 != 0.0 {
            roots.push(-a0 / a1);
        }
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc >= 0.0 {
            // numerically stable pair
            let s = -0.5 * (a1 + a1.signum() * disc.sqrt());
            if s != 0.0 {
                roots.push(s / a2);
                roots.push(a0 / s);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots
        .into_iter()
        .filter(|l| *l > 0.0 && *l < 1.0)
        .map(|l| (l, log_volume_change(l, a, g, d)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

/// Intersects the ellipsoid with the slab `|y − φᵀθ| ≤ ε` and returns the
/// smallest-volume member of the bounding family, or the unchanged state
/// when no member is smaller.
pub fn set_membership_update(
    state: &SetMembershipState,
    phi: &DVector<f64>,
    y: f64,
) -> Result<SetMembershipState> {
    let d = state.theta_hat.len();
    if phi.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "regressor has length {}, expected {d}",
            phi.len()
        )));
    }
    let eps2 = state.noise_bound * state.noise_bound;
    if phi.iter().all(|v| *v == 0.0) {
        return if y.abs() <= state.noise_bound {
            Ok(state.clone())
        } else {
            Err(Error::EmptySet { step: 0 })
        };
    }
    let sigma = state.sigma2.sqrt();
    // Pn = σ²P = Ln Lnᵀ, u = Lnᵀφ, G = φᵀPnφ
    let ln = &state.factor * sigma;
    let u = ln.transpose() * phi;
    let big_g = u.norm_squared();
    let e = y - phi.dot(&state.theta_hat);
    let a = e * e / eps2;
    let g = big_g / eps2;
    if a.sqrt() > 1.0 + g.sqrt() {
        return Err(Error::EmptySet { step: 0 });
    }
    let Some((lam, dv)) = optimal_weight(a, g, d as f64) else {
        return Ok(state.clone());
    };
    if !(dv < -VOLUME_TOL) {
        return Ok(state.clone());
    }
    let kappa = 1.0 - lam * (1.0 - lam) * a / (1.0 - lam + lam * g);
    let denom = (1.0 - lam) * eps2 + lam * big_g;
    // P′ = (Pn − λ Pnφφᵀ Pn / denom) / (1 − λ) = Ln (I − s ûûᵀ)² Lnᵀ / (1 − λ)
    // with (1 − s)² = 1 − λG/denom = (1 − λ)ε²/denom.
    let s = 1.0 - ((1.0 - lam) * eps2 / denom).sqrt();
    let u_hat = &u / big_g.sqrt();
    let lu = &ln * &u_hat;
    let factor = (&ln - lu * u_hat.transpose() * s) / (1.0 - lam).sqrt();
    // P′φ = Pnφ ε² / denom
    let center = &state.theta_hat + &ln * &u * (lam * e / denom);
    Ok(SetMembershipState {
        theta_hat: center,
        factor,
        sigma2: kappa,
        noise_bound: state.noise_bound,
    })
}

/// Runs the recursion from a ball of radius `init_radius` at the origin and
/// records the state after each prefix length in `checkpoints` (ascending).
pub fn set_membership_trace(
    dataset: &Dataset,
    noise_bound: f64,
    init_radius: f64,
    checkpoints: &[usize],
) -> Result<Vec<SetMembershipState>> {
    let d = dataset.d();
    let mut state = SetMembershipState::ball(DVector::zeros(d), init_radius, noise_bound)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    while let Some(&&0) = next.peek() {
        out.push(state.clone());
        next.next();
    }
    for (t, row) in dataset.regressors().row_iter().enumerate() {
        if next.peek().is_none() {
            break;
        }
        let phi = row.transpose();
        state =
            set_membership_update(&state, &phi, dataset.outputs()[t]).map_err(|err| match err {
                Error::EmptySet { .. } => Error::EmptySet { step: t + 1 },
                other => other,
            })?;
        while let Some(&&c) = next.peek() {
            if c == t + 1 {
                out.push(state.clone());
                next.next();
            } else {
                break;
            }
        }
    }
    if let Some(&&c) = next.peek() {
        return Err(Error::InvalidConfig(format!(
            "checkpoint {c} exceeds the dataset length {}",
            dataset.n()
        )));
    }
    Ok(out)
}

/// Final set-membership ellipsoid over the whole dataset.
pub fn set_membership_run(
    dataset: &Dataset,
    noise_bound: f64,
    init_radius: f64,
) -> Result<Ellipsoid> {
    let states = set_membership_trace(dataset, noise_bound, init_radius, &[dataset.n()])?;
    states[0].to_ellipsoid()
}
