//! Affine description of the no-signaling set in real coordinates.
//!
//! Hermitian `d×d` matrices are identified with `ℝ^{d²}` through an
//! orthonormal basis (diagonal entries, then `√2·Re` and `√2·Im` of each
//! upper-triangular entry), so that `Re tr(AB)` becomes the Euclidean dot
//! product.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg::{c64, partial_trace, CMatrix, HermitianOperator};
use crate::measurement::{asr_signature, AliceMarginal};

const SQRT2: f64 = std::f64::consts::SQRT_2;

pub(crate) fn herm_to_vec(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut v = DVector::zeros(d * d);
    let mut k = 0;
    for i in 0..d {
        v[k] = m[(i, i)].re;
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            let z = m[(i, j)];
            v[k] = SQRT2 * z.re;
            v[k + 1] = SQRT2 * z.im;
            k += 2;
        }
    }
    v
}

pub(crate) fn vec_to_herm(v: &[f64], d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        m[(i, i)] = c64(v[k]);
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            let z = Complex64::new(v[k], v[k + 1]) / SQRT2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Orthonormal equality constraints `⟨A_i, ω⟩ = b_i` and a null-space basis
/// for the set `tr ω = 1`, `Tr_S ω = σ_A ⊗ Tr_{AS} ω`.
#[derive(Debug, Clone)]
pub(crate) struct AffineStructure {
    pub dim: usize,
    /// Strictly feasible reference point `σ_A ⊗ I/4`.
    pub omega0: CMatrix,
    /// Rows are the vectorized `A_i`.
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Columns span the directions that keep all constraints satisfied.
    pub null: DMatrix<f64>,
    pub null_mats: Vec<CMatrix>,
    sigma_a: CMatrix,
}

impl AffineStructure {
    pub fn new(marginal: &AliceMarginal) -> Self {
        let d = 8;
        let n = d * d;
        let sigma_a = marginal.sigma_a.entries().clone();
        let omega0 = sigma_a.kronecker(&CMatrix::identity(4, 4)) * c64(0.25);
        let mut c = DMatrix::<f64>::zeros(17, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let basis = vec_to_herm(&e, d);
            let out = constraint_map(&basis, &sigma_a, true);
            c.set_column(k, &out);
        }
        // the Gram matrix of the constraint matrix splits the space into
        // range (constraints) and kernel (free directions)
        let gram = c.transpose() * &c;
        let eig = gram.symmetric_eigen();
        let scale = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut range = Vec::new();
        let mut kernel = Vec::new();
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-10 * scale {
                range.push(i);
            } else {
                kernel.push(i);
            }
        }
        let rows = DMatrix::from_fn(range.len(), n, |r, k| eig.eigenvectors[(k, range[r])]);
        let null = DMatrix::from_fn(n, kernel.len(), |k, c| eig.eigenvectors[(k, kernel[c])]);
        let w0 = herm_to_vec(&omega0);
        let rhs = &rows * &w0;
        let null_mats = (0..kernel.len())
            .map(|c| vec_to_herm(null.column(c).as_slice(), d))
            .collect();
        Self {
            dim: d,
            omega0,
            rows,
            rhs,
            null,
            null_mats,
            sigma_a,
        }
    }

    pub fn n_free(&self) -> usize {
        self.null.ncols()
    }

    /// `ω0 + Σ z_j N_j`.
    pub fn point(&self, z: &DVector<f64>) -> CMatrix {
        let v = herm_to_vec(&self.omega0) + &self.null * z;
        vec_to_herm(v.as_slice(), self.dim)
    }

    /// Coordinates of the affine projection of `ω`.
    pub fn coords(&self, omega: &CMatrix) -> DVector<f64> {
        self.null.transpose() * (herm_to_vec(omega) - herm_to_vec(&self.omega0))
    }

    /// Euclidean projection onto the affine hull.
    pub fn project(&self, omega: &CMatrix) -> CMatrix {
        let v = herm_to_vec(omega);
        let r = &self.rows * &v - &self.rhs;
        let fixed = v - self.rows.transpose() * r;
        vec_to_herm(fixed.as_slice(), self.dim)
    }

    /// Largest absolute violation of the original (unnormalized) equations.
    pub fn residual(&self, omega: &CMatrix) -> f64 {
        let out = constraint_map(omega, &self.sigma_a, false);
        out.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

/// `(tr ω − [rhs], vec(Tr_S ω − σ_A ⊗ Tr_{AS} ω))`. With `homogeneous` the
/// trace row is the plain linear functional `tr ω`.
fn constraint_map(omega: &CMatrix, sigma_a: &CMatrix, homogeneous: bool) -> DVector<f64> {
    let op = HermitianOperator::from_computed(asr_signature(), crate::linalg::hermitian_part(omega));
    let ar = partial_trace(&op, "S").expect("S register present");
    let r = partial_trace(&ar, "A").expect("A register present");
    let target = sigma_a.kronecker(r.entries());
    let diff = herm_to_vec(&(ar.entries() - target));
    let mut out = DVector::zeros(17);
    out[0] = omega.trace().re - if homogeneous { 0.0 } else { 1.0 };
    out.rows_mut(1, 16).copy_from(&diff);
    out
}
