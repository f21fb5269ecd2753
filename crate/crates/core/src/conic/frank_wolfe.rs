//! Away-step Frank–Wolfe over the no-signaling set.
//!
//! Linear subproblems are solved with the barrier method on a linear
//! objective; their dual multipliers are kept so the final bound can be
//! certified the same way as for the barrier solver.

use nalgebra::DVector;

use super::affine::AffineStructure;
use super::barrier;
use super::objective::{ConcaveObjective, Linear};
use super::SolverConfig;
use crate::linalg::{c64, real_inner, CMatrix};

pub(crate) struct FwOutcome {
    pub omega: CMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub duals: Vec<DVector<f64>>,
}

struct Lmo {
    vertex: CMatrix,
    /// Certified `max ⟨G, ω⟩` over the feasible set.
    upper: f64,
    dual: DVector<f64>,
}

fn lmo(grad: &CMatrix, aff: &AffineStructure) -> Option<Lmo> {
    let (vertex, dual) = barrier::linear_dual(grad, aff)?;
    let lin = Linear { c: grad.clone() };
    let (_, upper) = barrier::certify(&lin, aff, &vertex, 0.0, &[dual.clone()])?;
    Some(Lmo { vertex, upper, dual })
}

/// Step size in `[0, t_max]` maximizing the concave `φ(ω + t d)`, by
/// bisection on the directional derivative.
fn line_search(obj: &dyn ConcaveObjective, omega: &CMatrix, d: &CMatrix, t_max: f64) -> f64 {
    let slope = |t: f64| -> Option<f64> {
        let p = omega + d * c64(t);
        obj.eval(&p).map(|(_, g)| real_inner(&g, d))
    };
    match slope(t_max) {
        Some(s) if s >= 0.0 => return t_max,
        _ => {}
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        match slope(mid) {
            Some(s) if s > 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    lo
}

pub(crate) fn maximize(
    obj: &dyn ConcaveObjective,
    aff: &AffineStructure,
    start: Option<&CMatrix>,
    config: &SolverConfig,
) -> Option<FwOutcome> {
    let omega0 = match start {
        Some(s) => barrier::interior_start(aff, s, 1e-10),
        None => aff.omega0.clone(),
    };
    let mut atoms: Vec<(CMatrix, f64)> = vec![(omega0.clone(), 1.0)];
    let mut omega = omega0;
    let mut duals = Vec::new();
    let mut best_gap = f64::INFINITY;
    for it in 0..config.fw_max_iter {
        let (value, grad) = obj.eval(&omega)?;
        let step = lmo(&grad, aff)?;
        let lin_here = real_inner(&grad, &omega);
        let gap = step.upper - lin_here;
        if gap < best_gap {
            best_gap = gap;
            duals.push(step.dual.clone());
            if duals.len() > 8 {
                duals.remove(0);
            }
        }
        if gap <= config.gap_tol * value.abs().max(1.0) * 1e-2 {
            return Some(FwOutcome {
                omega,
                iterations: it,
                converged: true,
                duals,
            });
        }
        // away atom: the one with the smallest linear score
        let (away_idx, away_score) = atoms
            .iter()
            .enumerate()
            .map(|(i, (a, _))| (i, real_inner(&grad, a)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let fw_gain = real_inner(&grad, &step.vertex) - lin_here;
        let away_gain = lin_here - away_score;
        if fw_gain >= away_gain || atoms.len() == 1 {
            let d = &step.vertex - &omega;
            let t = line_search(obj, &omega, &d, 1.0);
            for a in atoms.iter_mut() {
                a.1 *= 1.0 - t;
            }
            atoms.push((step.vertex, t));
            omega += d * c64(t);
        } else {
            let w = atoms[away_idx].1;
            let t_max = w / (1.0 - w);
            let d = &omega - &atoms[away_idx].0;
            let t = line_search(obj, &omega, &d, t_max);
            for a in atoms.iter_mut() {
                a.1 *= 1.0 + t;
            }
            atoms[away_idx].1 -= t;
            omega += d * c64(t);
        }
        atoms.retain(|a| a.1 > 1e-14);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        atoms.iter_mut().for_each(|a| a.1 /= total);
    }
    Some(FwOutcome {
        omega,
        iterations: config.fw_max_iter,
        converged: false,
        duals,
    })
}
