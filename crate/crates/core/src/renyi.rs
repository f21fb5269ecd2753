//! Rényi divergences, entropy bounds and the f-weighted objective.
//!
//! Logarithms are base 2 throughout.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::linalg::{
    c64, psi_gamma, sandwiched_trace_raw, CMatrix, DensityMatrix,
};
use crate::measurement::{GammaOperators, KeySuperoperator, Symbol};
use crate::optim::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TradeoffOrigin {
    DualExtracted,
    UserSupplied,
    Zero,
}

/// Real weights over the alphabet `{⊥, CC, WC, NC}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffFunction {
    pub values: [f64; 4],
    pub origin: TradeoffOrigin,
}

impl TradeoffFunction {
    pub fn new(values: [f64; 4], origin: TradeoffOrigin) -> Result<Self> {
        for (s, v) in Symbol::ALL.iter().zip(values) {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "tradeoff",
                    value: v,
                    expected: match s {
                        Symbol::Bot => "finite f(bot)",
                        Symbol::CC => "finite f(cc)",
                        Symbol::WC => "finite f(wc)",
                        Symbol::NC => "finite f(nc)",
                    },
                });
            }
        }
        Ok(Self { values, origin })
    }

    pub fn zero() -> Self {
        Self {
            values: [0.0; 4],
            origin: TradeoffOrigin::Zero,
        }
    }

    pub fn get(&self, s: Symbol) -> f64 {
        self.values[s.index()]
    }

    /// `Σ_c f(c) q(c)`.
    pub fn dot(&self, q: &[f64; 4]) -> f64 {
        self.values.iter().zip(q).map(|(f, q)| f * q).sum()
    }

    /// `f + s` on every symbol.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            values: self.values.map(|v| v + s),
            origin: self.origin,
        }
    }
}

/// `Σ p_i log₂(p_i / q_i)` with `0 log 0 = 0`; `+∞` when `supp p ⊄ supp q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            log::warn!("KL divergence: p = {pi:e} where q vanishes; returning +inf");
            return Ok(f64::INFINITY);
        }
        acc += pi * (pi / qi).log2();
    }
    Ok(acc)
}

/// Sandwiched Rényi divergence `D_α(ρ‖σ)` in bits.
///
/// For `α > 1` a support violation gives `+∞`; for `α < 1` the violating
/// part is projected out and a warning is logged.
pub fn sandwiched_divergence(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_range("alpha", alpha, alpha > 0.0 && alpha != 1.0, "positive and not 1")?;
    if rho.signature().dim() != sigma.signature().dim() {
        return Err(Error::DimensionMismatch(format!(
            "divergence arguments on {} and {}",
            rho.signature(),
            sigma.signature()
        )));
    }
    let tr = rho.trace();
    if tr <= 0.0 {
        return Err(Error::InvalidTrace(tr));
    }
    let psi = sandwiched_trace_raw(rho.op().entries(), sigma.op().entries(), alpha);
    if psi.flagged {
        if alpha > 1.0 {
            return Ok(f64::INFINITY);
        }
        log::warn!(
            "sandwiched divergence: {:.3e} of tr ρ lies outside supp σ",
            psi.support_violation
        );
    }
    if psi.value <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((psi.value / tr).log2() / (alpha - 1.0))
}

/// `D_γ(G̃ωG̃† ‖ Z(G̃ωG̃†))`, a lower bound on the Rényi entropy of the key
/// at order `α = 1/γ`. Returns `+∞` when no key round clicks.
pub fn entropy_lower_bound(omega: &DensityMatrix, key_map: &KeySuperoperator, gamma: f64) -> Result<f64> {
    check_range("gamma", gamma, gamma > 0.5 && gamma < 1.0, "in (1/2, 1)")?;
    let out = key_map.apply(omega.op())?;
    let tr = out.trace();
    if tr <= 0.0 {
        log::warn!("entropy bound: key map output has zero trace (no clicks)");
        return Ok(f64::INFINITY);
    }
    let pinched = key_map.pinch(&out);
    let psi = psi_gamma(
        &DensityMatrix::new(out)?,
        &DensityMatrix::new(pinched)?,
        gamma,
    )?;
    Ok(-(psi.value / tr).log2() / (1.0 - gamma))
}

/// `Ψ̂_γ(ω) = Ψ_γ(G̃ωG̃†, Z(G̃ωG̃†))` on a raw 8×8 matrix.
pub(crate) fn key_psi_raw(omega: &CMatrix, key_map: &KeySuperoperator, gamma: f64) -> f64 {
    let out = key_map.apply_raw(omega);
    let pinched = key_map.pinch_raw(&out);
    sandwiched_trace_raw(&out, &pinched, gamma).value
}

/// Weights `2^{((α−1)/α) f(c)}` of the f-weighted objective.
pub fn tradeoff_weights(f: &TradeoffFunction, alpha: f64) -> [f64; 4] {
    let e = (alpha - 1.0) / alpha;
    f.values.map(|v| (e * v).exp2())
}

/// Argument of the logarithm in the f-weighted bound:
/// `Σ_{c≠⊥} w_c tr[Γ^c ω] + p^K w_⊥ Ψ̂_γ(ω)`.
pub(crate) fn fweighted_argument(
    omega: &CMatrix,
    weights: &[f64; 4],
    gammas: &GammaOperators,
    key_map: &KeySuperoperator,
    alpha: f64,
) -> f64 {
    let lin = weights[Symbol::CC.index()] * crate::linalg::real_inner(gammas.gamma_cc.entries(), omega)
        + weights[Symbol::WC.index()] * crate::linalg::real_inner(gammas.gamma_wc.entries(), omega)
        + weights[Symbol::NC.index()] * crate::linalg::real_inner(gammas.gamma_nc.entries(), omega);
    lin + gammas.p_k * weights[Symbol::Bot.index()] * key_psi_raw(omega, key_map, 1.0 / alpha)
}

/// Lower bound on the f-weighted Rényi entropy of a single round in state
/// `ω`:
/// `(α/(1−α)) log₂(Σ_{c≠⊥} 2^{((α−1)/α) f(c)} tr[Γ^c ω] + p^K 2^{((α−1)/α) f(⊥)} Ψ̂_γ(ω))`
/// with `γ = 1/α`. The key-round probability is taken from `gammas`.
pub fn fweighted_objective(
    omega: &DensityMatrix,
    f: &TradeoffFunction,
    alpha: f64,
    gammas: &GammaOperators,
    key_map: &KeySuperoperator,
) -> Result<f64> {
    check_range("alpha", alpha, alpha > 1.0 && alpha < 2.0, "in (1, 2)")?;
    if omega.signature().dim() != key_map.input.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state on {} for key map input {}",
            omega.signature(),
            key_map.input
        )));
    }
    let w = tradeoff_weights(f, alpha);
    let arg = fweighted_argument(omega.op().entries(), &w, gammas, key_map, alpha);
    if !(arg > 0.0) {
        return Err(Error::InfeasibleEvaluation(arg));
    }
    Ok(alpha / (1.0 - alpha) * arg.log2())
}

/// Maps unconstrained reals onto a positive definite `d×d` matrix with unit
/// trace through a Cholesky factor.
fn density_from_params(x: &[f64], d: usize) -> CMatrix {
    let mut l = CMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        l[(i, i)] = c64(x[k]);
        k += 1;
        for j in 0..i {
            l[(i, j)] = num_complex::Complex64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    let m = &l * l.adjoint();
    let tr = m.trace().re;
    m * c64(1.0 / tr)
}

/// `H↑_α(X|Y) = max_σ −D_α(ρ_XY ‖ I_X ⊗ σ_Y)` for a state whose first
/// register is `X`.
///
/// The maximization runs over Cholesky-parametrized `σ_Y` with restarted
/// Nelder–Mead, seeded at `σ_Y = ρ_Y`.
pub fn conditional_entropy_up(rho: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_range("alpha", alpha, alpha > 0.5 && alpha != 1.0, "above 1/2 and not 1")?;
    let sig = rho.signature();
    if sig.labels().len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "conditional entropy needs at least two registers, got {sig}"
        )));
    }
    let x_label = sig.labels()[0].clone();
    let dx = sig.dims()[0];
    let rho_y = crate::linalg::partial_trace(rho.op(), &x_label)?;
    let dy = rho_y.dim();
    let tr = rho.trace();
    let id_x = CMatrix::identity(dx, dx);
    let objective = |s: &CMatrix| -> f64 {
        let big = id_x.kronecker(s);
        let psi = sandwiched_trace_raw(rho.op().entries(), &big, alpha);
        if psi.flagged && alpha > 1.0 || psi.value <= 0.0 {
            return f64::INFINITY;
        }
        (psi.value / tr).log2() / (alpha - 1.0)
    };
    // seed from a Cholesky factor of ρ_Y (regularized to full rank)
    let reg = rho_y.entries() + CMatrix::identity(dy, dy) * c64(1e-6);
    let chol = nalgebra::Cholesky::new(reg)
        .ok_or_else(|| Error::Solver("reduced state is not positive".into()))?;
    let l = chol.l();
    let mut x0 = Vec::with_capacity(dy * dy);
    for i in 0..dy {
        x0.push(l[(i, i)].re);
        for j in 0..i {
            x0.push(l[(i, j)].re);
            x0.push(l[(i, j)].im);
        }
    }
    let opts = NelderMeadOptions {
        max_evaluations: 4000,
        f_tol: 1e-14,
        x_tol: 1e-10,
    };
    let mut best = nelder_mead(|x| objective(&density_from_params(x, dy)), &x0, &vec![0.1; x0.len()], opts);
    for _ in 0..6 {
        let next = nelder_mead(
            |x| objective(&density_from_params(x, dy)),
            &best.x,
            &vec![0.02; x0.len()],
            opts,
        );
        let done = (best.value - next.value).abs() < 1e-13;
        if next.value < best.value {
            best = next;
        }
        if done {
            break;
        }
    }
    Ok(-best.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{tensor, HermitianOperator, RegisterSignature};
    use crate::measurement::{asr_signature, build_gamma_operators, build_key_superoperator};
    use approx::assert_abs_diff_eq;

    fn diag_state(label: &str, p: &[f64]) -> DensityMatrix {
        let sig = RegisterSignature::single(label, p.len());
        DensityMatrix::new(HermitianOperator::from_real_diagonal(sig, p).unwrap()).unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0, epsilon = 1e-15);
        let v = 0.5 * 2f64.log2() + 0.5 * (2.0f64 / 3.0).log2();
        assert_abs_diff_eq!(kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap(), v, epsilon = 1e-15);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn divergence_classical_case() {
        let p = [0.6, 0.4];
        let q = [0.3, 0.7];
        let (rho, sigma) = (diag_state("X", &p), diag_state("X", &q));
        for alpha in [0.7, 1.5] {
            let s: f64 = p.iter().zip(&q).map(|(a, b)| a.powf(alpha) * b.powf(1.0 - alpha)).sum();
            let expected = s.log2() / (alpha - 1.0);
            assert_abs_diff_eq!(
                sandwiched_divergence(&rho, &sigma, alpha).unwrap(),
                expected,
                epsilon = 1e-14
            );
        }
        assert_abs_diff_eq!(sandwiched_divergence(&rho, &rho, 1.3).unwrap(), 0.0, epsilon = 1e-14);
        let pure = diag_state("X", &[1.0, 0.0]);
        let other = diag_state("X", &[0.0, 1.0]);
        assert_eq!(sandwiched_divergence(&pure, &other, 1.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn tradeoff_shift_and_dot() {
        let f = TradeoffFunction::new([1.0, -2.0, 3.0, 0.5], TradeoffOrigin::UserSupplied).unwrap();
        let q = [0.4, 0.3, 0.2, 0.1];
        assert_abs_diff_eq!(f.shifted(0.25).dot(&q), f.dot(&q) + 0.25, epsilon = 1e-15);
        assert!(TradeoffFunction::new([f64::NAN, 0.0, 0.0, 0.0], TradeoffOrigin::UserSupplied).is_err());
    }

    #[test]
    fn entropy_bound_of_uniform_pure_key() {
        // |+⟩_A ⊗ φ+: pure, so the pinched key bit is uniform and private
        let a = HermitianOperator::projector(
            RegisterSignature::single("A", 2),
            &[c64(0.5f64.sqrt()), c64(0.5f64.sqrt())],
        )
        .unwrap();
        let r = 0.5f64.sqrt();
        let phi = HermitianOperator::projector(
            crate::measurement::sr_signature(),
            &[c64(0.0), c64(r), c64(r), c64(0.0)],
        )
        .unwrap();
        let omega = DensityMatrix::new(tensor(&a, &phi).unwrap()).unwrap();
        let k = build_key_superoperator(0.0).unwrap();
        for g in [0.6, 0.9] {
            assert_abs_diff_eq!(entropy_lower_bound(&omega, &k, g).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn entropy_bound_of_classical_state_is_zero() {
        let a = diag_state("A", &[0.5, 0.5]);
        let r = 0.5f64.sqrt();
        let phi = HermitianOperator::projector(
            crate::measurement::sr_signature(),
            &[c64(0.0), c64(r), c64(r), c64(0.0)],
        )
        .unwrap();
        let omega = DensityMatrix::new(tensor(a.op(), &phi).unwrap()).unwrap();
        let k = build_key_superoperator(0.0).unwrap();
        assert_abs_diff_eq!(entropy_lower_bound(&omega, &k, 0.8).unwrap(), 0.0, epsilon = 1e-10);
        // no clicks at all
        let vac = HermitianOperator::basis_projector(asr_signature(), 0).unwrap();
        let vac = DensityMatrix::new(vac).unwrap();
        assert_eq!(entropy_lower_bound(&vac, &k, 0.8).unwrap(), f64::INFINITY);
    }

    #[test]
    fn fweighted_zero_function_and_shift() {
        let gammas = build_gamma_operators(0.7, 1e-3).unwrap();
        let k = build_key_superoperator(1e-3).unwrap();
        let omega = DensityMatrix::maximally_mixed(asr_signature());
        let f = TradeoffFunction::new([0.3, -0.1, 0.8, 0.2], TradeoffOrigin::UserSupplied).unwrap();
        let base = fweighted_objective(&omega, &f, 1.2, &gammas, &k).unwrap();
        let shifted = fweighted_objective(&omega, &f.shifted(0.7), 1.2, &gammas, &k).unwrap();
        assert_abs_diff_eq!(shifted, base - 0.7, epsilon = 1e-12);
        let w = tradeoff_weights(&TradeoffFunction::zero(), 1.2);
        assert_eq!(w, [1.0; 4]);
    }

    #[test]
    fn conditional_entropy_of_product_and_classical_states() {
        let sig = RegisterSignature::new(&[("X", 2), ("Y", 2)]).unwrap();
        // X uniform and independent of Y: H = 1
        let prod = tensor(diag_state("X", &[0.5, 0.5]).op(), diag_state("Y", &[0.7, 0.3]).op()).unwrap();
        let h = conditional_entropy_up(&DensityMatrix::new(prod).unwrap(), 1.5).unwrap();
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-8);
        // X copied into Y: H = 0
        let copy = HermitianOperator::from_real_diagonal(sig, &[0.5, 0.0, 0.0, 0.5]).unwrap();
        let h = conditional_entropy_up(&DensityMatrix::new(copy).unwrap(), 1.5).unwrap();
        assert_abs_diff_eq!(h, 0.0, epsilon = 1e-8);
    }
}
