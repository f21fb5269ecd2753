//! Smooth concave objectives over 8×8 states.

use crate::linalg::{psi_gradient_raw, real_inner, CMatrix};
use crate::measurement::{GammaOperators, KeySuperoperator, Symbol};

pub(crate) trait ConcaveObjective {
    /// Value and Hilbert–Schmidt gradient at a positive definite `ω`;
    /// `None` outside the domain.
    fn eval(&self, omega: &CMatrix) -> Option<(f64, CMatrix)>;

    fn value(&self, omega: &CMatrix) -> Option<f64> {
        self.eval(omega).map(|(v, _)| v)
    }

    /// False for affine objectives, whose Hessian vanishes.
    fn curved(&self) -> bool {
        true
    }
}

/// `Ψ̂_γ(ω)` and its gradient `G̃†(∂_ρΨ + Z ∂_σΨ)G̃`.
pub(crate) fn key_psi_with_gradient(omega: &CMatrix, key_map: &KeySuperoperator, gamma: f64) -> (f64, CMatrix) {
    let rho = key_map.apply_raw(omega);
    let sigma = key_map.pinch_raw(&rho);
    let g = psi_gradient_raw(&rho, &sigma, gamma);
    let total = &g.d_rho + key_map.pinch_raw(&g.d_sigma);
    (g.value, key_map.adjoint_raw(&total))
}

/// `ω ↦ ⟨C, ω⟩`.
pub(crate) struct Linear {
    pub c: CMatrix,
}

impl ConcaveObjective for Linear {
    fn eval(&self, omega: &CMatrix) -> Option<(f64, CMatrix)> {
        Some((real_inner(&self.c, omega), self.c.clone()))
    }

    fn curved(&self) -> bool {
        false
    }
}

/// Argument of the logarithm in the f-weighted bound,
/// `⟨Σ_{c≠⊥} w_c Γ^c, ω⟩ + p^K w_⊥ Ψ̂_γ(ω)`.
pub(crate) struct FWeighted<'a> {
    pub linear: CMatrix,
    pub psi_coef: f64,
    pub key_map: &'a KeySuperoperator,
    pub gamma: f64,
}

impl<'a> FWeighted<'a> {
    pub fn new(weights: &[f64; 4], gammas: &GammaOperators, key_map: &'a KeySuperoperator, alpha: f64) -> Self {
        let linear = gammas.gamma_cc.entries() * crate::linalg::c64(weights[Symbol::CC.index()])
            + gammas.gamma_wc.entries() * crate::linalg::c64(weights[Symbol::WC.index()])
            + gammas.gamma_nc.entries() * crate::linalg::c64(weights[Symbol::NC.index()]);
        Self {
            linear,
            psi_coef: gammas.p_k * weights[Symbol::Bot.index()],
            key_map,
            gamma: 1.0 / alpha,
        }
    }
}

impl ConcaveObjective for FWeighted<'_> {
    fn eval(&self, omega: &CMatrix) -> Option<(f64, CMatrix)> {
        let (psi, grad) = key_psi_with_gradient(omega, self.key_map, self.gamma);
        let value = real_inner(&self.linear, omega) + self.psi_coef * psi;
        if !value.is_finite() {
            return None;
        }
        Some((value, &self.linear + grad * crate::linalg::c64(self.psi_coef)))
    }
}

/// `Σ_{c≠⊥} q_c ln tr[Γ^c ω] + q_⊥ ln Ψ̂_γ(ω)`, whose maximizer solves the
/// tradeoff program for reference distribution `q`.
pub(crate) struct LogLikelihood<'a> {
    pub q: [f64; 4],
    pub gammas: &'a GammaOperators,
    pub key_map: &'a KeySuperoperator,
    pub gamma: f64,
}

impl LogLikelihood<'_> {
    /// Model probabilities `(p^K Ψ̂, tr Γ^CC ω, tr Γ^WC ω, tr Γ^NC ω)`.
    pub fn model(&self, omega: &CMatrix) -> [f64; 4] {
        let mut p = [0.0; 4];
        p[Symbol::Bot.index()] = self.gammas.p_k * crate::renyi::key_psi_raw(omega, self.key_map, self.gamma);
        p[Symbol::CC.index()] = real_inner(self.gammas.gamma_cc.entries(), omega);
        p[Symbol::WC.index()] = real_inner(self.gammas.gamma_wc.entries(), omega);
        p[Symbol::NC.index()] = real_inner(self.gammas.gamma_nc.entries(), omega);
        p
    }
}

impl ConcaveObjective for LogLikelihood<'_> {
    fn eval(&self, omega: &CMatrix) -> Option<(f64, CMatrix)> {
        let (psi, psi_grad) = key_psi_with_gradient(omega, self.key_map, self.gamma);
        if !(psi > 0.0) {
            return None;
        }
        let mut value = self.q[Symbol::Bot.index()] * psi.ln();
        let mut grad = psi_grad * crate::linalg::c64(self.q[Symbol::Bot.index()] / psi);
        for (s, op) in [
            (Symbol::CC, &self.gammas.gamma_cc),
            (Symbol::WC, &self.gammas.gamma_wc),
            (Symbol::NC, &self.gammas.gamma_nc),
        ] {
            let qc = self.q[s.index()];
            if qc == 0.0 {
                continue;
            }
            let p = real_inner(op.entries(), omega);
            if !(p > 0.0) {
                return None;
            }
            value += qc * p.ln();
            grad += op.entries() * crate::linalg::c64(qc / p);
        }
        Some((value, grad))
    }
}
