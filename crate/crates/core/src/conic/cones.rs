//! The three cones appearing in the conic forms of the two programs.
//!
//! Membership is reported with a signed residual: nonnegative for members,
//! negative by the amount of violation otherwise. Logarithms are natural.

use crate::error::{Error, Result};
use crate::linalg::HermitianOperator;
use crate::measurement::KeySuperoperator;
use crate::renyi::key_psi_raw;

#[derive(Debug, Clone)]
pub enum ConeElement {
    /// `(u, ω)` with `u ≥ −Ψ̂_γ(ω)`, where `Ψ̂_γ` is taken through `key_map`.
    FastRenyi {
        gamma: f64,
        u: f64,
        omega: HermitianOperator,
        key_map: KeySuperoperator,
    },
    /// `(h, q, p)` with `h ≥ Σ q_i ln(q_i/p_i)`.
    Kl { h: f64, q: Vec<f64>, p: Vec<f64> },
    /// `(h, v, u)` with `h ≤ v ln(u/v)`, `u, v > 0`.
    Log { h: f64, v: f64, u: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub residual: f64,
}

impl Membership {
    fn from_residual(residual: f64) -> Self {
        Self {
            member: residual >= 0.0,
            residual,
        }
    }
}

pub fn cone_membership(elem: &ConeElement) -> Result<Membership> {
    match elem {
        ConeElement::FastRenyi {
            gamma,
            u,
            omega,
            key_map,
        } => {
            if omega.dim() != key_map.input.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "cone point on {} but key map acts on {}",
                    omega.signature(),
                    key_map.input
                )));
            }
            if omega.min_eigenvalue() < 0.0 {
                return Ok(Membership::from_residual(omega.min_eigenvalue()));
            }
            let psi = key_psi_raw(omega.entries(), key_map, *gamma);
            Ok(Membership::from_residual(u + psi))
        }
        ConeElement::Kl { h, q, p } => {
            if q.len() != p.len() {
                return Err(Error::DimensionMismatch(format!(
                    "KL cone with {} and {} entries",
                    q.len(),
                    p.len()
                )));
            }
            let mut d = 0.0;
            for (&qi, &pi) in q.iter().zip(p) {
                if qi < 0.0 || pi < 0.0 {
                    return Ok(Membership::from_residual(qi.min(pi)));
                }
                if qi == 0.0 {
                    continue;
                }
                if pi == 0.0 {
                    return Ok(Membership::from_residual(f64::NEG_INFINITY));
                }
                d += qi * (qi / pi).ln();
            }
            Ok(Membership::from_residual(h - d))
        }
        ConeElement::Log { h, v, u } => {
            if !(*v > 0.0) || !(*u > 0.0) {
                return Ok(Membership::from_residual(v.min(*u).min(0.0) - f64::MIN_POSITIVE));
            }
            Ok(Membership::from_residual(v * (u / v).ln() - h))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DensityMatrix;
    use crate::measurement::{asr_signature, build_key_superoperator};

    #[test]
    fn maximally_mixed_point_is_in_the_fast_cone() {
        for p_d in [0.0, 1e-3] {
            let m = cone_membership(&ConeElement::FastRenyi {
                gamma: 0.9,
                u: 0.0,
                omega: DensityMatrix::maximally_mixed(asr_signature()).into_op(),
                key_map: build_key_superoperator(p_d).unwrap(),
            })
            .unwrap();
            assert!(m.member && m.residual > 0.0);
        }
    }

    #[test]
    fn kl_cone_contains_zero_divergence_point() {
        let p = vec![0.2, 0.3, 0.5];
        let m = cone_membership(&ConeElement::Kl {
            h: 0.0,
            q: p.clone(),
            p,
        })
        .unwrap();
        assert!(m.member);
        assert!(m.residual.abs() < 1e-15);
    }

    #[test]
    fn log_cone_boundary() {
        let (v, u) = (0.7_f64, 2.3_f64);
        let edge = v * (u / v).ln();
        let inside = cone_membership(&ConeElement::Log { h: edge - 1e-3, v, u }).unwrap();
        let outside = cone_membership(&ConeElement::Log { h: edge + 1e-3, v, u }).unwrap();
        assert!(inside.member);
        assert!(!outside.member);
        assert!((outside.residual + 1e-3).abs() < 1e-12);
    }
}
