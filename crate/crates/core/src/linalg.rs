//! Dense Hermitian algebra over labelled tensor-product registers.
//!
//! Every operator carries a [`RegisterSignature`] so that partial traces and
//! tensor products can be expressed by register name (`A`, `S`, `R`, ...)
//! instead of raw index arithmetic. Matrices are small (at most a few hundred
//! rows for truncated Fock spaces, 8x8 for the `A⊗S⊗R` states), so all
//! storage is dense.
//!
//! The module also hosts the sandwiched trace functional
//! `Ψ_α(ρ, σ) = tr[(σ^{(1-α)/2α} ρ σ^{(1-α)/2α})^α]` and its Fréchet gradient,
//! computed through the Daleckii–Krein divided-difference formula.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Entrywise tolerance for accepting a user supplied matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Minimum eigenvalue tolerated for a positive semidefinite operator.
pub const PSD_TOL: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest one are exact zeros for
/// pseudo-powers.
pub const PSEUDO_ZERO_REL: f64 = 1e-12;
/// Fraction of `tr ρ` outside `supp σ` above which `Ψ` is flagged.
pub const SUPPORT_TOL: f64 = 1e-9;

#[inline]
pub(crate) fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Ordered list of named registers and their dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterSignature {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl RegisterSignature {
    pub fn new(registers: &[(&str, usize)]) -> Result<Self> {
        let mut labels: Vec<String> = Vec::with_capacity(registers.len());
        let mut dims = Vec::with_capacity(registers.len());
        for &(label, dim) in registers {
            if labels.iter().any(|l| l == label) {
                return Err(Error::DuplicateRegister(label.to_string()));
            }
            if dim == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "register `{label}` has dimension 0"
                )));
            }
            labels.push(label.to_string());
            dims.push(dim);
        }
        Ok(Self { labels, dims })
    }

    /// A single register. Panics on a zero dimension.
    pub fn single(label: &str, dim: usize) -> Self {
        Self::new(&[(label, dim)]).expect("register dimension must be positive")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Side length of operators carrying this signature.
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (l, &d) in other.labels.iter().zip(&other.dims) {
            if out.labels.contains(l) {
                return Err(Error::DuplicateRegister(l.clone()));
            }
            out.labels.push(l.clone());
            out.dims.push(d);
        }
        Ok(out)
    }

    fn without(&self, idx: usize) -> Self {
        let mut out = self.clone();
        out.labels.remove(idx);
        out.dims.remove(idx);
        out
    }
}

impl fmt::Display for RegisterSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .labels
            .iter()
            .zip(&self.dims)
            .map(|(l, d)| format!("{l}[{d}]"))
            .collect();
        write!(f, "{}", parts.join("⊗"))
    }
}

/// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
pub fn hermiticity_drift(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c64(0.5)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending
/// order.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn new(m: &CMatrix) -> Self {
        let n = m.nrows();
        let eig = hermitian_part(m).symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `U diag(f(λ)) U†`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    /// Threshold below which eigenvalues count as zero for pseudo-powers.
    pub fn zero_threshold(&self) -> f64 {
        PSEUDO_ZERO_REL * self.max().abs().max(f64::MIN_POSITIVE)
    }

    /// Pseudo-power: eigenvalues at or below the zero threshold map to zero.
    pub fn pseudo_power(&self, exponent: f64) -> CMatrix {
        let thr = self.zero_threshold();
        self.apply(|l| if l > thr { l.powf(exponent) } else { 0.0 })
    }

    /// Daleckii–Krein derivative of `λ ↦ λ^p` at this matrix, applied to `m`
    /// (given in the original basis).
    ///
    /// Divided differences are evaluated as `b^{p−1}·expm1(p t)/expm1(t)`
    /// with `t = ln(a/b)`, which is exact for close pairs and reduces to
    /// `p b^{p−1}` for equal ones. Pairs with both eigenvalues at or below
    /// `zero` contribute 0; a zero paired with a positive `b` gives `b^{p−1}`.
    pub fn frechet_power(&self, m: &CMatrix, p: f64, zero: f64) -> CMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        let mut mt = u.adjoint() * m * u;
        let lam: Vec<f64> = self
            .values
            .iter()
            .map(|&l| if l > zero { l } else { 0.0 })
            .collect();
        for i in 0..n {
            for j in 0..n {
                mt[(i, j)] *= power_divided_difference(lam[i], lam[j], p);
            }
        }
        u * mt * u.adjoint()
    }
}

fn power_divided_difference(a: f64, b: f64, p: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == 0.0 {
        return 0.0;
    }
    if lo == 0.0 {
        return hi.powf(p - 1.0);
    }
    let t = (hi / lo).ln();
    if t == 0.0 {
        return p * lo.powf(p - 1.0);
    }
    lo.powf(p - 1.0) * (p * t).exp_m1() / t.exp_m1()
}

/// Dense Hermitian matrix tagged with its register structure.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    signature: RegisterSignature,
    entries: CMatrix,
}

impl HermitianOperator {
    /// Validates shape and Hermiticity (entrywise tolerance
    /// [`HERMITIAN_TOL`]) and stores the symmetrized matrix.
    pub fn new(signature: RegisterSignature, entries: CMatrix) -> Result<Self> {
        check_shape(&signature, &entries)?;
        let drift = hermiticity_drift(&entries);
        if drift > HERMITIAN_TOL {
            return Err(Error::NotHermitian(drift));
        }
        Ok(Self {
            signature,
            entries: hermitian_part(&entries),
        })
    }

    /// Symmetrizes a matrix produced by an internal arithmetic pipeline.
    /// The drift is only checked against a scale-relative bound.
    pub(crate) fn from_computed(signature: RegisterSignature, entries: CMatrix) -> Self {
        debug_assert_eq!(signature.dim(), entries.nrows());
        debug_assert!(
            hermiticity_drift(&entries) <= 1e-8 * (1.0 + entries.norm()),
            "pipeline produced a non-Hermitian matrix"
        );
        Self {
            signature,
            entries: hermitian_part(&entries),
        }
    }

    pub fn zeros(signature: RegisterSignature) -> Self {
        let d = signature.dim();
        Self {
            signature,
            entries: CMatrix::zeros(d, d),
        }
    }

    pub fn identity(signature: RegisterSignature) -> Self {
        let d = signature.dim();
        Self {
            signature,
            entries: CMatrix::identity(d, d),
        }
    }

    pub fn from_real_diagonal(signature: RegisterSignature, diag: &[f64]) -> Result<Self> {
        if diag.len() != signature.dim() {
            return Err(Error::DimensionMismatch(format!(
                "diagonal of length {} for signature {}",
                diag.len(),
                signature
            )));
        }
        let d = diag.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = c64(v);
        }
        Ok(Self {
            signature,
            entries: m,
        })
    }

    /// Rank-one `|v⟩⟨v|` (not normalized).
    pub fn projector(signature: RegisterSignature, v: &[Complex64]) -> Result<Self> {
        if v.len() != signature.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for signature {}",
                v.len(),
                signature
            )));
        }
        let d = v.len();
        let m = CMatrix::from_fn(d, d, |i, j| v[i] * v[j].conj());
        Ok(Self {
            signature,
            entries: m,
        })
    }

    /// Projector onto a computational basis state.
    pub fn basis_projector(signature: RegisterSignature, index: usize) -> Result<Self> {
        let d = signature.dim();
        if index >= d {
            return Err(Error::DimensionMismatch(format!(
                "basis index {index} outside dimension {d}"
            )));
        }
        let mut m = CMatrix::zeros(d, d);
        m[(index, index)] = c64(1.0);
        Ok(Self {
            signature,
            entries: m,
        })
    }

    pub fn signature(&self) -> &RegisterSignature {
        &self.signature
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Hilbert–Schmidt inner product `Re tr(A B)`.
    pub fn inner(&self, other: &Self) -> f64 {
        real_inner(&self.entries, &other.entries)
    }

    pub fn eigh(&self) -> Eigh {
        Eigh::new(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().min()
    }

    /// `K X K†` for a (possibly rectangular) Kraus operator `K`.
    pub fn conjugate_by(&self, kraus: &CMatrix, output: RegisterSignature) -> Result<Self> {
        if kraus.ncols() != self.dim() || kraus.nrows() != output.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator {}x{} between {} and {}",
                kraus.nrows(),
                kraus.ncols(),
                self.signature,
                output
            )));
        }
        Ok(Self::from_computed(
            output,
            kraus * &self.entries * kraus.adjoint(),
        ))
    }

    /// Re-tag the operator with a signature of the same total dimension.
    pub fn with_signature(self, signature: RegisterSignature) -> Result<Self> {
        check_shape(&signature, &self.entries)?;
        Ok(Self {
            signature,
            entries: self.entries,
        })
    }

    fn assert_same_signature(&self, other: &Self) {
        assert_eq!(
            self.signature, other.signature,
            "operator signatures differ: {} vs {}",
            self.signature, other.signature
        );
    }
}

fn check_shape(signature: &RegisterSignature, m: &CMatrix) -> Result<()> {
    let d = signature.dim();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}x{} for signature {} (dimension {d})",
            m.nrows(),
            m.ncols(),
            signature
        )));
    }
    Ok(())
}

/// `Re tr(A B)` without forming the product.
pub fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)] * b[(j, i)];
            acc += x.re;
        }
    }
    acc
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        self.assert_same_signature(rhs);
        HermitianOperator {
            signature: self.signature.clone(),
            entries: &self.entries + &rhs.entries,
        }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        self.assert_same_signature(rhs);
        HermitianOperator {
            signature: self.signature.clone(),
            entries: &self.entries - &rhs.entries,
        }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        HermitianOperator {
            signature: self.signature.clone(),
            entries: &self.entries * c64(rhs),
        }
    }
}

impl Neg for &HermitianOperator {
    type Output = HermitianOperator;
    fn neg(self) -> HermitianOperator {
        self * -1.0
    }
}

/// Positive semidefinite operator with trace in `[0, 1]` (subnormalized
/// states are allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let min = op.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        let tr = op.trace();
        if !(-PSD_TOL..=1.0 + PSD_TOL).contains(&tr) {
            return Err(Error::InvalidTrace(tr));
        }
        Ok(Self { op })
    }

    /// Maximally mixed state on the given registers.
    pub fn maximally_mixed(signature: RegisterSignature) -> Self {
        let d = signature.dim() as f64;
        Self {
            op: &HermitianOperator::identity(signature) * (1.0 / d),
        }
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn into_op(self) -> HermitianOperator {
        self.op
    }

    pub fn trace(&self) -> f64 {
        self.op.trace()
    }

    pub fn signature(&self) -> &RegisterSignature {
        self.op.signature()
    }
}

impl AsRef<HermitianOperator> for DensityMatrix {
    fn as_ref(&self) -> &HermitianOperator {
        &self.op
    }
}

/// Kronecker product with concatenated signatures.
pub fn tensor(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    let signature = a.signature.concat(&b.signature)?;
    Ok(HermitianOperator {
        signature,
        entries: a.entries.kronecker(&b.entries),
    })
}

/// Trace out the register named `traced_label`.
pub fn partial_trace(op: &HermitianOperator, traced_label: &str) -> Result<HermitianOperator> {
    let sig = op.signature();
    let idx = sig
        .position(traced_label)
        .ok_or_else(|| Error::UnknownRegister(traced_label.to_string()))?;
    let dims = sig.dims();
    let left: usize = dims[..idx].iter().product();
    let mid = dims[idx];
    let right: usize = dims[idx + 1..].iter().product();
    let out_dim = left * right;
    let m = op.entries();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    for l1 in 0..left {
        for r1 in 0..right {
            let row = l1 * right + r1;
            for l2 in 0..left {
                for r2 in 0..right {
                    let col = l2 * right + r2;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..mid {
                        acc += m[((l1 * mid + k) * right + r1, (l2 * mid + k) * right + r2)];
                    }
                    out[(row, col)] = acc;
                }
            }
        }
    }
    Ok(HermitianOperator {
        signature: sig.without(idx),
        entries: out,
    })
}

/// Eigenbasis-preserving power of a PSD operator. Eigenvalues at or below
/// `1e-12·λ_max` are treated as exact zeros (so negative exponents give the
/// pseudo-power on the support).
pub fn frac_power(op: &HermitianOperator, exponent: f64) -> Result<HermitianOperator> {
    let eig = op.eigh();
    let scale = eig.max().abs().max(1.0);
    if eig.min() < -PSD_TOL * scale {
        return Err(Error::NotPositive(eig.min()));
    }
    if exponent == 1.0 {
        return Ok(op.clone());
    }
    Ok(HermitianOperator::from_computed(
        op.signature.clone(),
        eig.pseudo_power(exponent),
    ))
}

/// Result of a `Ψ` evaluation together with its support diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEvaluation {
    pub value: f64,
    /// Weight `tr[Π_⊥ ρ]` of `ρ` outside the support of `σ`.
    pub support_violation: f64,
    /// True when the violation exceeds [`SUPPORT_TOL`]·`tr ρ`.
    pub flagged: bool,
}

/// `Ψ_α(ρ, σ)` for any `α > 0`, `α ≠ 1`, on raw matrices.
pub(crate) fn sandwiched_trace_raw(rho: &CMatrix, sigma: &CMatrix, alpha: f64) -> PsiEvaluation {
    let s = (1.0 - alpha) / (2.0 * alpha);
    let es = Eigh::new(sigma);
    let thr = es.zero_threshold();
    let sig_s = es.apply(|l| if l > thr { l.powf(s) } else { 0.0 });
    let null = es.apply(|l| if l > thr { 0.0 } else { 1.0 });
    let violation = real_inner(&null, rho).max(0.0);
    let x = &sig_s * rho * &sig_s;
    let ex = Eigh::new(&x);
    let value: f64 = ex
        .values
        .iter()
        .map(|&l| if l > 0.0 { l.powf(alpha) } else { 0.0 })
        .sum();
    let tr = rho.trace().re.abs().max(f64::MIN_POSITIVE);
    PsiEvaluation {
        value,
        support_violation: violation,
        flagged: violation > SUPPORT_TOL * tr,
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    crate::error::check_range("gamma", gamma, gamma > 0.5 && gamma < 1.0, "in (1/2, 1)")
}

fn check_pair(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.signature().dim() != sigma.signature().dim() {
        return Err(Error::DimensionMismatch(format!(
            "Ψ arguments on {} and {}",
            rho.signature(),
            sigma.signature()
        )));
    }
    Ok(())
}

/// `Ψ_γ(ρ, σ)` for `γ ∈ (1/2, 1)`.
///
/// The positive exponent `(1-γ)/2γ` on `σ` removes any part of `ρ` outside
/// `supp σ`; that weight is reported in the result and flagged above
/// [`SUPPORT_TOL`].
pub fn psi_gamma(rho: &DensityMatrix, sigma: &DensityMatrix, gamma: f64) -> Result<PsiEvaluation> {
    check_gamma(gamma)?;
    check_pair(rho, sigma)?;
    Ok(sandwiched_trace_raw(
        rho.op().entries(),
        sigma.op().entries(),
        gamma,
    ))
}

/// Value and partial gradients of `Ψ_γ` on raw matrices.
pub(crate) struct PsiGradient {
    pub value: f64,
    pub d_rho: CMatrix,
    pub d_sigma: CMatrix,
}

pub(crate) fn psi_gradient_raw(rho: &CMatrix, sigma: &CMatrix, gamma: f64) -> PsiGradient {
    let s = (1.0 - gamma) / (2.0 * gamma);
    let es = Eigh::new(sigma);
    let thr = es.zero_threshold();
    let sig_s = es.apply(|l| if l > thr { l.powf(s) } else { 0.0 });
    let x = hermitian_part(&(&sig_s * rho * &sig_s));
    let ex = Eigh::new(&x);
    let xthr = ex.zero_threshold();
    let value: f64 = ex
        .values
        .iter()
        .map(|&l| if l > xthr { l.powf(gamma) } else { 0.0 })
        .sum();
    let x_pow = ex.apply(|l| if l > xthr { l.powf(gamma - 1.0) } else { 0.0 });

    let d_rho = hermitian_part(&(&sig_s * &x_pow * &sig_s * c64(gamma)));

    let k = rho * &sig_s * &x_pow;
    let m = (&k + k.adjoint()) * c64(gamma);
    let d_sigma = es.frechet_power(&m, s, thr);
    PsiGradient {
        value,
        d_rho,
        d_sigma: hermitian_part(&d_sigma),
    }
}

/// Fréchet derivatives `(∂Ψ_γ/∂ρ, ∂Ψ_γ/∂σ)` with respect to the
/// Hilbert–Schmidt inner product.
///
/// `σ` must be strictly positive on its support.
pub fn psi_gamma_gradient(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    gamma: f64,
) -> Result<(HermitianOperator, HermitianOperator)> {
    check_gamma(gamma)?;
    check_pair(rho, sigma)?;
    let g = psi_gradient_raw(rho.op().entries(), sigma.op().entries(), gamma);
    Ok((
        HermitianOperator::from_computed(rho.signature().clone(), g.d_rho),
        HermitianOperator::from_computed(sigma.signature().clone(), g.d_sigma),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn qubit(label: &str) -> RegisterSignature {
        RegisterSignature::single(label, 2)
    }

    fn random_hermitian(sig: RegisterSignature, seed: u64) -> HermitianOperator {
        let d = sig.dim();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = CMatrix::from_fn(d, d, |_, _| Complex64::new(next(), next()));
        HermitianOperator::from_computed(sig, hermitian_part(&m))
    }

    #[test]
    fn identity_tensor_identity() {
        let i2 = HermitianOperator::identity(qubit("A"));
        let i2b = HermitianOperator::identity(qubit("B"));
        let i4 = tensor(&i2, &i2b).unwrap();
        assert_eq!(i4.entries(), &CMatrix::identity(4, 4));
        assert_eq!(i4.signature().labels(), &["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn basis_projector_tensor() {
        let p0 = HermitianOperator::basis_projector(qubit("A"), 0).unwrap();
        let p1 = HermitianOperator::basis_projector(qubit("B"), 1).unwrap();
        let p = tensor(&p0, &p1).unwrap();
        let expected = HermitianOperator::basis_projector(p.signature().clone(), 1).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(RegisterSignature::new(&[("A", 2), ("A", 2)]).is_err());
        let a = HermitianOperator::identity(qubit("A"));
        assert!(matches!(tensor(&a, &a), Err(Error::DuplicateRegister(_))));
    }

    #[test]
    fn partial_trace_of_product() {
        let rho = random_hermitian(qubit("A"), 3);
        let sigma = random_hermitian(qubit("S"), 4);
        let prod = tensor(&rho, &sigma).unwrap();
        let out = partial_trace(&prod, "S").unwrap();
        let expected = &rho * sigma.trace();
        assert!((out.entries() - expected.entries()).norm() < 1e-14);
        let out_a = partial_trace(&prod, "A").unwrap();
        let expected_s = &sigma * rho.trace();
        assert!((out_a.entries() - expected_s.entries()).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let sig = RegisterSignature::new(&[("A", 2), ("S", 2)]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let v = [c64(h), c64(0.0), c64(0.0), c64(h)];
        let bell = HermitianOperator::projector(sig, &v).unwrap();
        let red = partial_trace(&bell, "S").unwrap();
        assert!((red.entries() - CMatrix::identity(2, 2) * c64(0.5)).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_unknown_label() {
        let op = HermitianOperator::identity(qubit("A"));
        assert_eq!(
            partial_trace(&op, "Z").unwrap_err(),
            Error::UnknownRegister("Z".into())
        );
    }

    #[test]
    fn partial_trace_middle_register_matches_index_contraction() {
        let sig = RegisterSignature::new(&[("A", 2), ("S", 2), ("R", 2)]).unwrap();
        let op = random_hermitian(sig, 17);
        let out = partial_trace(&op, "S").unwrap();
        // brute-force contraction over explicit (a, s, r) indices
        for a1 in 0..2 {
            for r1 in 0..2 {
                for a2 in 0..2 {
                    for r2 in 0..2 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for s in 0..2 {
                            acc += op.entries()[(a1 * 4 + s * 2 + r1, a2 * 4 + s * 2 + r2)];
                        }
                        assert!((out.entries()[(a1 * 2 + r1, a2 * 2 + r2)] - acc).norm() < 1e-15);
                    }
                }
            }
        }
        assert_abs_diff_eq!(out.trace(), op.trace(), epsilon = 1e-12);
    }

    #[test]
    fn frac_power_cases() {
        let sig = qubit("A");
        let id = HermitianOperator::identity(sig.clone());
        for t in [-2.0, -0.5, 0.3, 1.0, 2.5] {
            let p = frac_power(&id, t).unwrap();
            assert!((p.entries() - id.entries()).norm() < 1e-14);
        }
        let d = HermitianOperator::from_real_diagonal(sig.clone(), &[4.0, 9.0]).unwrap();
        let r = frac_power(&d, 0.5).unwrap();
        let expected = HermitianOperator::from_real_diagonal(sig.clone(), &[2.0, 3.0]).unwrap();
        assert!((r.entries() - expected.entries()).norm() < 1e-14);
        let neg = HermitianOperator::from_real_diagonal(sig, &[1.0, -0.1]).unwrap();
        assert!(matches!(frac_power(&neg, 0.5), Err(Error::NotPositive(_))));
    }

    #[test]
    fn pseudo_power_drops_null_space() {
        let sig = qubit("A");
        let d = HermitianOperator::from_real_diagonal(sig, &[0.25, 0.0]).unwrap();
        let r = frac_power(&d, -0.5).unwrap();
        assert_abs_diff_eq!(r.entries()[(0, 0)].re, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.entries()[(1, 1)].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c64(1e-6);
        assert!(matches!(
            HermitianOperator::new(qubit("A"), m),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn density_matrix_validation() {
        let sig = qubit("A");
        let bad = HermitianOperator::from_real_diagonal(sig.clone(), &[1.2, -0.2]).unwrap();
        assert!(matches!(DensityMatrix::new(bad), Err(Error::NotPositive(_))));
        let big = HermitianOperator::from_real_diagonal(sig.clone(), &[0.8, 0.8]).unwrap();
        assert!(matches!(DensityMatrix::new(big), Err(Error::InvalidTrace(_))));
        let sub = HermitianOperator::from_real_diagonal(sig, &[0.3, 0.2]).unwrap();
        assert!(DensityMatrix::new(sub).is_ok());
    }

    #[test]
    fn psi_of_identical_states_is_trace() {
        let sig = qubit("A");
        let rho = DensityMatrix::new(
            HermitianOperator::from_real_diagonal(sig, &[0.7, 0.3]).unwrap(),
        )
        .unwrap();
        for g in [0.55, 0.8, 0.99] {
            let v = psi_gamma(&rho, &rho, g).unwrap();
            assert_abs_diff_eq!(v.value, 1.0, epsilon = 1e-13);
            assert!(!v.flagged);
        }
    }

    #[test]
    fn psi_diagonal_reduces_to_classical() {
        let sig = RegisterSignature::single("X", 3);
        let p = [0.5, 0.3, 0.2];
        let q = [0.2, 0.2, 0.6];
        let rho = DensityMatrix::new(HermitianOperator::from_real_diagonal(sig.clone(), &p).unwrap())
            .unwrap();
        let sigma =
            DensityMatrix::new(HermitianOperator::from_real_diagonal(sig, &q).unwrap()).unwrap();
        let g = 0.7;
        let expected: f64 = p
            .iter()
            .zip(&q)
            .map(|(a, b)| a.powf(g) * b.powf(1.0 - g))
            .sum();
        assert_abs_diff_eq!(psi_gamma(&rho, &sigma, g).unwrap().value, expected, epsilon = 1e-14);
        let (dr, _) = psi_gamma_gradient(&rho, &sigma, g).unwrap();
        for i in 0..3 {
            let classical = g * p[i].powf(g - 1.0) * q[i].powf(1.0 - g);
            assert_abs_diff_eq!(dr.entries()[(i, i)].re, classical, epsilon = 1e-12);
        }
    }

    #[test]
    fn psi_support_violation_is_flagged() {
        let sig = qubit("A");
        let rho = DensityMatrix::new(
            HermitianOperator::from_real_diagonal(sig.clone(), &[0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let sigma =
            DensityMatrix::new(HermitianOperator::from_real_diagonal(sig, &[1.0, 0.0]).unwrap())
                .unwrap();
        let v = psi_gamma(&rho, &sigma, 0.8).unwrap();
        assert!(v.flagged);
        assert_abs_diff_eq!(v.support_violation, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(v.value, 0.5f64.powf(0.8), epsilon = 1e-14);
    }

    #[test]
    fn psi_gamma_rejects_gamma_outside_range() {
        let rho = DensityMatrix::maximally_mixed(qubit("A"));
        assert!(psi_gamma(&rho, &rho, 1.0).is_err());
        assert!(psi_gamma(&rho, &rho, 0.5).is_err());
    }

    #[test]
    fn homogeneity_of_rho_gradient() {
        // ⟨∂Ψ/∂ρ, ρ⟩ = γ Ψ for commuting inputs
        let sig = qubit("A");
        let rho = DensityMatrix::new(
            HermitianOperator::from_real_diagonal(sig.clone(), &[0.6, 0.4]).unwrap(),
        )
        .unwrap();
        let sigma =
            DensityMatrix::new(HermitianOperator::from_real_diagonal(sig, &[0.3, 0.7]).unwrap())
                .unwrap();
        let g = 0.75;
        let psi = psi_gamma(&rho, &sigma, g).unwrap().value;
        let (dr, ds) = psi_gamma_gradient(&rho, &sigma, g).unwrap();
        assert_abs_diff_eq!(dr.inner(rho.op()), g * psi, epsilon = 1e-13);
        assert_abs_diff_eq!(ds.inner(sigma.op()), (1.0 - g) * psi, epsilon = 1e-13);
    }
}
