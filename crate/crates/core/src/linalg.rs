//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue floor used for principal square roots.
pub const EIG_FLOOR: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(symmetrize(m));
        let d = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(m.nrows(), d);
        for (k, &i) in order.iter().enumerate() {
            vectors.set_column(k, &eig.eigenvectors.column(i));
        }
        SymEig { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let vs = &self.vectors * DMatrix::from_diagonal(&scaled);
        symmetrize(&(vs * self.vectors.transpose()))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Principal square root of a symmetric PSD matrix.
pub fn principal_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    SymEig::new(m).map(|v| v.max(0.0).sqrt())
}

/// Principal inverse square root, eigenvalues floored at `EIG_FLOOR * λmax`.
pub fn principal_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymEig::new(m);
    let floor = EIG_FLOOR * eig.max().abs().max(f64::MIN_POSITIVE);
    eig.map(|v| 1.0 / v.max(floor).sqrt())
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    SymEig::new(m).min()
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    SymEig::new(m).max()
}

/// Thin QR factorisation `Φ = Φ_Q Φ_R` with a positive diagonal in `Φ_R`.
pub fn thin_qr(phi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = phi.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..r.nrows() {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn solve_upper(r: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    r.solve_upper_triangular(b)
}

/// Median of a slice; NaN entries sort last. Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
