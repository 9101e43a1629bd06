//! Independent reference computations shared by the integration tests.
//!
//! Everything here works from the raw regressors, outputs and signs with
//! dense textbook formulas (inverses, SVD pseudo-inverses, full `n × n`
//! matrices) rather than the QR/eigenbasis route of the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use sps_ellipsoids::harness::ExperimentConfig;
use sps_ellipsoids::model::{simulate_fir, DEFAULT_BURN_IN};
use sps_ellipsoids::sps::sps_initialize_from;
use sps_ellipsoids::{Dataset, InputSpec, NoiseSpec, SpsConfig, Stream};

/// AR-input FIR trajectory with uniform(−3, 3) noise and a fresh sign table.
pub fn instance(d: usize, n: usize, m: usize, seed: u64) -> (Dataset, SpsConfig) {
    instance_with(
        d,
        n,
        m,
        seed,
        &NoiseSpec::UniformSymmetric { halfwidth: 3.0 },
    )
}

pub fn instance_with(
    d: usize,
    n: usize,
    m: usize,
    seed: u64,
    noise: &NoiseSpec,
) -> (Dataset, SpsConfig) {
    let stream = Stream::new(seed);
    let ds = simulate_fir(
        &vec![5.0; d],
        &InputSpec::reference_ar(),
        noise,
        n,
        DEFAULT_BURN_IN,
        stream,
    )
    .unwrap();
    let cfg = sps_initialize_from(m, 1, n, stream, seed).unwrap();
    (ds, cfg)
}

/// Symmetric matrix function through a plain eigendecomposition.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let diag = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * diag * e.eigenvectors.transpose()
}

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

/// Moore–Penrose pseudo-inverse from the SVD, singular values below
/// `rtol · σmax` dropped.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let s_inv = svd
        .singular_values
        .map(|s| if s > rtol * smax { 1.0 / s } else { 0.0 });
    svd.v_t.unwrap().transpose() * DMatrix::from_diagonal(&s_inv) * svd.u.unwrap().transpose()
}

/// Least squares as `Φ⁺ y`.
pub fn lstsq_pinv(ds: &Dataset) -> DVector<f64> {
    pinv(ds.regressors(), 1e-14) * ds.outputs()
}

pub fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// The matrices of the dual problem assembled literally from `R_n`, `Q_n`
/// and `B` for a given sign row.
pub struct Direct {
    pub n: usize,
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub r_isqrt: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dmat: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub c0: f64,
    pub k: DMatrix<f64>,
}

impl Direct {
    pub fn new(ds: &Dataset, signs: &[f64]) -> Self {
        let phi = ds.regressors();
        let y = ds.outputs();
        let n = ds.n();
        let d = ds.d();
        let dmat = DMatrix::from_diagonal(&DVector::from_column_slice(signs));
        let r = phi.transpose() * phi;
        let r_inv = inv(&r);
        let r_isqrt = sym_fn(&r, |l| 1.0 / l.sqrt());
        let q = phi.transpose() * &dmat * phi;
        let a = &r - &q * &r_inv * &q;
        let a0 = &r_isqrt * a * &r_isqrt;
        let b = phi.transpose() - &q * &r_inv * phi.transpose() * &dmat;
        let bdy = &b * &dmat * y;
        let b0 = &r_isqrt * &q * &r_inv * &bdy / (n as f64).sqrt();
        let c0 = -(bdy.transpose() * &r_inv * &bdy)[(0, 0)] / n as f64;
        // K through an explicit (unpivoted) Gram–Schmidt orthonormal basis.
        let mut basis = DMatrix::<f64>::zeros(n, d);
        for j in 0..d {
            let mut v = phi.column(j).into_owned();
            for _ in 0..2 {
                for l in 0..j {
                    let proj = basis.column(l).dot(&v);
                    v -= basis.column(l) * proj;
                }
            }
            basis.set_column(j, &(v.normalize()));
        }
        let k = basis.transpose() * &dmat * &basis;
        Direct {
            n,
            r,
            r_inv,
            r_isqrt,
            q,
            b,
            dmat,
            a0,
            b0,
            c0,
            k,
        }
    }

    /// `A₀ − I/ξ`.
    pub fn a0_shift(&self, xi: f64) -> DMatrix<f64> {
        let d = self.a0.nrows();
        &self.a0 - DMatrix::identity(d, d) / xi
    }

    /// The `n × n` matrix `ξ P(ξ)`.
    pub fn xi_p(&self, xi: f64) -> DMatrix<f64> {
        let middle = &self.r_inv
            * &self.q
            * &self.r_isqrt
            * pinv(&self.a0_shift(xi), 1e-12)
            * &self.r_isqrt
            * &self.q
            * &self.r_inv
            + &self.r_inv;
        let p = &self.dmat * self.b.transpose() * middle * &self.b * &self.dmat;
        (&p + p.transpose()) * (0.5 * xi)
    }

    /// The dual objective `ξ(b₀ᵀ(A₀ − I/ξ)†b₀ − c₀)`.
    pub fn objective(&self, xi: f64) -> f64 {
        let quad = (self.b0.transpose() * pinv(&self.a0_shift(xi), 1e-12) * &self.b0)[(0, 0)];
        xi * (quad - self.c0)
    }

    pub fn lam_max_k2(&self) -> f64 {
        SymmetricEigen::new(&self.k * &self.k).eigenvalues.max()
    }
}

/// Top `d` eigenvalues of a symmetric matrix, descending.
pub fn top_eigs(m: &DMatrix<f64>, d: usize) -> Vec<f64> {
    let e = SymmetricEigen::new(m.clone());
    sorted_desc(e.eigenvalues.iter().copied().collect())[..d].to_vec()
}

/// Ternary search for the minimiser of a unimodal function on `[lo, hi]`.
pub fn ternary_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// `m = 2`, `d = 1`: the constraint `‖S₀‖² ≤ ‖S₁‖²` is a scalar quadratic
/// inequality in `θ`; the maximum of `‖S₀‖²` is attained at one of its roots.
pub fn scalar_hand_dual(x: &[f64], y: &[f64], signs: &[f64]) -> f64 {
    let n = x.len() as f64;
    let p0: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let q0: f64 = x.iter().map(|a| a * a).sum();
    let p1: f64 = x
        .iter()
        .zip(y)
        .zip(signs)
        .map(|((a, b), s)| s * a * b)
        .sum();
    let q1: f64 = x.iter().zip(signs).map(|(a, s)| s * a * a).sum();
    // ‖S_i(θ)‖² = (p_i − q_i θ)² / (n q0)
    let qa = q0 * q0 - q1 * q1;
    let qb = -2.0 * (p0 * q0 - p1 * q1);
    let qc = p0 * p0 - p1 * p1;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)]
        .iter()
        .map(|th| (p0 - q0 * th).powi(2) / (n * q0))
        .fold(0.0, f64::max)
}

/// Vertices of `{θ ∈ ℝ² : |y_t − φ_tᵀθ| ≤ ε ∀t}` by intersecting every pair
/// of boundary lines and keeping the feasible intersections.
pub fn polytope_vertices(ds: &Dataset, eps: f64) -> Vec<DVector<f64>> {
    assert_eq!(ds.d(), 2);
    let phi = ds.regressors();
    let y = ds.outputs();
    let mut lines: Vec<(f64, f64, f64)> = Vec::new();
    for t in 0..ds.n() {
        lines.push((phi[(t, 0)], phi[(t, 1)], y[t] + eps));
        lines.push((phi[(t, 0)], phi[(t, 1)], y[t] - eps));
    }
    let feasible = |th: &DVector<f64>| {
        (0..ds.n())
            .all(|t| (y[t] - phi[(t, 0)] * th[0] - phi[(t, 1)] * th[1]).abs() <= eps * (1.0 + 1e-9))
    };
    let mut out = Vec::new();
    for (a, l1) in lines.iter().enumerate() {
        for l2 in &lines[a + 1..] {
            let det = l1.0 * l2.1 - l1.1 * l2.0;
            if det.abs() < 1e-12 {
                continue;
            }
            let th = DVector::from_vec(vec![
                (l1.2 * l2.1 - l1.1 * l2.2) / det,
                (l1.0 * l2.2 - l1.2 * l2.0) / det,
            ]);
            if feasible(&th) {
                out.push(th);
            }
        }
    }
    out
}

/// Reference bounded-noise configuration shrunk for quick Monte Carlo runs.
pub fn small_bounded(n: usize, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        n,
        t0: n / 2,
        trials,
        stride: (n / 10).max(1),
        ..ExperimentConfig::bounded_noise_reference()
    }
}
