//! Log-det barrier path following over the no-signaling set.
//!
//! Maximizes `φ(ω) + μ log det ω` in the affine coordinates `z` for a
//! decreasing sequence of `μ`, taking damped Newton steps. The barrier
//! Hessian is exact; the objective Hessian is assembled from forward
//! differences of the analytic gradient along the eigenvectors of the
//! barrier metric. Each probe is scaled to `‖L⁻¹ D L⁻†‖` (`ω = LL†`), which
//! keeps perturbed points positive definite and gives directions far from
//! the boundary long, well-conditioned steps.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::affine::{herm_to_vec, vec_to_herm, AffineStructure};
use super::objective::{ConcaveObjective, Linear};
use crate::linalg::{c64, hermitian_part, real_inner, CMatrix, Eigh};

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierOptions {
    /// Initial barrier weight; defaults to `1e-2` when absent.
    pub mu_start: Option<f64>,
    pub mu_factor: f64,
    /// Stop once `d·μ` (the central-path gap) falls below this.
    pub gap_target: f64,
    pub max_newton: usize,
    pub fd_eps: f64,
    /// Stage exit when the Newton decrement drops below `center_tol·μ`
    /// (applied to the last stages; earlier ones use `1e-3·μ`).
    pub center_tol: f64,
    pub keep_snapshots: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            mu_start: None,
            mu_factor: 0.1,
            gap_target: 1e-12,
            max_newton: 600,
            fd_eps: 1e-4,
            center_tol: 1e-9,
            keep_snapshots: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierOutcome {
    pub omega: CMatrix,
    pub mu: f64,
    pub newton_steps: usize,
    pub reached_target: bool,
    /// `(ω, μ)` at the end of the last few stages, oldest first.
    pub snapshots: Vec<(CMatrix, f64)>,
}

struct Local {
    omega: CMatrix,
    value: f64,
    grad: CMatrix,
    /// `L⁻¹` for `ω = LL†`.
    l_inv: CMatrix,
    log_det: f64,
}

fn cholesky(omega: &CMatrix) -> Option<(CMatrix, f64)> {
    let chol = Cholesky::new(hermitian_part(omega))?;
    let l = chol.l();
    let mut log_det = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) {
            return None;
        }
        log_det += 2.0 * d.ln();
    }
    let n = l.nrows();
    let l_inv = l.solve_lower_triangular(&CMatrix::identity(n, n))?;
    Some((l_inv, log_det))
}

fn local(obj: &dyn ConcaveObjective, omega: CMatrix) -> Option<Local> {
    let (l_inv, log_det) = cholesky(&omega)?;
    let (value, grad) = obj.eval(&omega)?;
    if !value.is_finite() {
        return None;
    }
    Some(Local {
        omega,
        value,
        grad,
        l_inv,
        log_det,
    })
}

/// Barrier value `φ + μ log det ω` at a trial point.
fn barrier_value(obj: &dyn ConcaveObjective, omega: &CMatrix, mu: f64) -> Option<f64> {
    let (_, log_det) = cholesky(omega)?;
    let v = obj.value(omega)?;
    v.is_finite().then_some(v + mu * log_det)
}

/// Moves a candidate onto the affine set and strictly inside the PSD cone by
/// mixing with the reference point.
pub(crate) fn interior_start(aff: &AffineStructure, start: &CMatrix, margin: f64) -> CMatrix {
    let p = aff.project(start);
    let lo = Eigh::new(&p).min();
    let lo0 = Eigh::new(&aff.omega0).min();
    if lo >= margin {
        return p;
    }
    let t = ((margin - lo) / (lo0 - lo)).clamp(0.0, 1.0);
    &p * c64(1.0 - t) + &aff.omega0 * c64(t)
}

pub(crate) fn maximize(
    obj: &dyn ConcaveObjective,
    aff: &AffineStructure,
    start: Option<&CMatrix>,
    opts: BarrierOptions,
) -> Option<BarrierOutcome> {
    let d = aff.dim as f64;
    let m = aff.n_free();
    let omega_init = match start {
        Some(s) => interior_start(aff, s, 1e-14),
        None => aff.omega0.clone(),
    };
    let mut z = aff.coords(&omega_init);
    let mut cur = local(obj, aff.point(&z)).or_else(|| {
        z = DVector::zeros(m);
        local(obj, aff.omega0.clone())
    })?;
    let mut mu = opts.mu_start.unwrap_or(1e-2);
    let mut steps = 0;
    let mut snapshots = Vec::new();
    let null_t = aff.null.transpose();
    loop {
        let final_stage = d * mu <= opts.gap_target;
        // early stages only need to stay near the path; the last few supply
        // the certified points and are centered tightly
        let center_tol = if final_stage {
            1e-3
        } else if d * mu <= 1e4 * opts.gap_target {
            opts.center_tol
        } else {
            1e-3
        };
        let mut stage_steps = 0;
        loop {
            if steps >= opts.max_newton {
                return Some(BarrierOutcome {
                    omega: cur.omega,
                    mu,
                    newton_steps: steps,
                    reached_target: false,
                    snapshots,
                });
            }
            let inv = cur.l_inv.adjoint() * &cur.l_inv;
            let g_full = &cur.grad + &inv * c64(mu);
            let g = &null_t * herm_to_vec(&g_full);
            // scaled directions W_j = L⁻¹ N_j L⁻†
            let mut wmat = DMatrix::<f64>::zeros(aff.dim * aff.dim, m);
            for (j, n) in aff.null_mats.iter().enumerate() {
                let w = &cur.l_inv * n * cur.l_inv.adjoint();
                wmat.set_column(j, &herm_to_vec(&w));
            }
            let gram = wmat.transpose() * &wmat;
            let mut neg_h = &gram * mu;
            if obj.curved() {
                // forward differences along the eigenvectors of the local
                // metric, each scaled to its own length so that soft
                // directions get long, accurate probes
                let eig = gram.clone().symmetric_eigen();
                let base = herm_to_vec(&cur.grad);
                let mut cols = DMatrix::<f64>::zeros(m, m);
                for k in 0..m {
                    let v = eig.eigenvectors.column(k);
                    let h = opts.fd_eps / (&wmat * v).norm().max(f64::MIN_POSITIVE);
                    let dvec = &aff.null * v;
                    let dmat = vec_to_herm(dvec.as_slice(), aff.dim);
                    let (_, gp) = obj.eval(&(&cur.omega + &dmat * c64(h)))?;
                    cols.set_column(k, &(&null_t * ((herm_to_vec(&gp) - &base) / h)));
                }
                let hphi = &cols * eig.eigenvectors.transpose();
                let sym = (&hphi + hphi.transpose()) * 0.5;
                neg_h -= sym;
            }
            let dir = solve_pd(&neg_h, &g)?;
            let dec = g.dot(&dir);
            if dec <= center_tol * mu || dec <= 1e-30 {
                break;
            }
            // largest step keeping ω positive definite
            let dmat = vec_to_herm((&wmat * &dir).as_slice(), aff.dim);
            let lmin = Eigh::new(&dmat).min();
            let mut t = if lmin < 0.0 { (0.99 / -lmin).min(1.0) } else { 1.0 };
            let phi0 = cur.value + mu * cur.log_det;
            let slack = 4.0 * f64::EPSILON * phi0.abs().max(1.0);
            let mut accepted = None;
            while t > 1e-12 {
                let trial_z = &z + &dir * t;
                let trial = aff.point(&trial_z);
                if let Some(v) = barrier_value(obj, &trial, mu) {
                    if v - phi0 >= 0.01 * t * dec - slack {
                        accepted = Some((trial_z, trial));
                        break;
                    }
                }
                t *= 0.5;
            }
            steps += 1;
            stage_steps += 1;
            match accepted {
                Some((nz, omega)) => {
                    z = nz;
                    cur = local(obj, omega)?;
                }
                None => break,
            }
            if stage_steps >= 40 {
                break;
            }
        }
        snapshots.push((cur.omega.clone(), mu));
        if snapshots.len() > opts.keep_snapshots {
            snapshots.remove(0);
        }
        if final_stage {
            return Some(BarrierOutcome {
                omega: cur.omega,
                mu,
                newton_steps: steps,
                reached_target: true,
                snapshots,
            });
        }
        mu = (mu * opts.mu_factor).max(opts.gap_target / d * 0.999);
    }
}

/// Solves `A x = b` for symmetric `A` that should be positive definite,
/// adding diagonal regularization when finite-difference noise breaks
/// definiteness.
fn solve_pd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Some(ch.solve(b));
    }
    let scale = sym.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut reg = 1e-12 * scale;
    for _ in 0..40 {
        let mut shifted = sym.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += reg;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            return Some(ch.solve(b));
        }
        reg *= 10.0;
    }
    None
}

/// Multipliers `y` minimizing `‖L†(T − Σ y_i A_i)L‖_F` for `ω = LL†`.
///
/// Near the central path this residual is small in the local norm, which
/// is what makes `Σ y_i A_i − ∇φ` positive semidefinite; the plain
/// Euclidean projection can miss this badly when `ω` is nearly singular.
fn scaled_multipliers(aff: &AffineStructure, omega: &CMatrix, target: &CMatrix) -> Option<DVector<f64>> {
    let l = Cholesky::new(hermitian_part(omega))?.l();
    let scale = |m: &CMatrix| herm_to_vec(&(l.adjoint() * m * &l));
    let k = aff.rows.nrows();
    let mut cols = DMatrix::<f64>::zeros(aff.dim * aff.dim, k);
    for i in 0..k {
        let a = vec_to_herm(aff.rows.row(i).transpose().as_slice(), aff.dim);
        cols.set_column(i, &scale(&a));
    }
    let t = scale(target);
    let gram = cols.transpose() * &cols;
    solve_pd(&gram, &(cols.transpose() * t))
}

/// Dual-side bound for a concave objective: for any Hermitian `ω̂ ⪰ 0` and
/// multipliers `y`,
/// `max_{ω feasible} φ(ω) ≤ φ(ω̂) − ⟨∇φ(ω̂), ω̂⟩ + bᵀy + λ_max(∇φ(ω̂) − Σ y_i A_i)`.
///
/// Several multiplier candidates are tried and the tightest bound is kept.
/// A rounding margin is added so the result stays an upper bound in floating
/// point.
pub(crate) fn certify(
    obj: &dyn ConcaveObjective,
    aff: &AffineStructure,
    omega: &CMatrix,
    mu: f64,
    extra: &[DVector<f64>],
) -> Option<(f64, f64)> {
    if Eigh::new(omega).min() < 0.0 {
        return None;
    }
    let (value, grad) = obj.eval(omega)?;
    let lvec = herm_to_vec(&grad);
    let lin = real_inner(&grad, omega);
    let mut candidates: Vec<DVector<f64>> = extra.to_vec();
    candidates.push(&aff.rows * &lvec);
    if mu > 0.0 {
        if let Some((l_inv, _)) = cholesky(omega) {
            let inv = l_inv.adjoint() * &l_inv;
            let target = &grad + inv * c64(mu);
            candidates.push(&aff.rows * herm_to_vec(&target));
            if let Some(y) = scaled_multipliers(aff, omega, &target) {
                candidates.push(y);
            }
        }
    }
    let mut best = f64::INFINITY;
    for y in &candidates {
        let s = &lvec - aff.rows.transpose() * y;
        let lmax = Eigh::new(&vec_to_herm(s.as_slice(), aff.dim)).max();
        let by = aff.rhs.dot(y);
        let bound = value - lin + by + lmax;
        let margin = 1e-14 * (value.abs() + lin.abs() + by.abs() + lmax.abs() + lvec.norm()) + 1e-300;
        best = best.min(bound + margin);
    }
    best.is_finite().then_some((value, best))
}

/// Near-optimal multipliers for the linear program `max ⟨C, ω⟩` over the
/// feasible set, from a barrier solve on the normalized objective.
///
/// With an exact Hessian the linear path can be centered tightly, so these
/// multipliers certify `max ⟨C, ω⟩` to within a few `μ` even when the
/// maximizer is rank deficient.
pub(crate) fn linear_dual(c: &CMatrix, aff: &AffineStructure) -> Option<(CMatrix, DVector<f64>)> {
    let scale = c.norm();
    if !(scale > 0.0) {
        return Some((aff.omega0.clone(), DVector::zeros(aff.rows.nrows())));
    }
    let lin = Linear { c: c / c64(scale) };
    let out = maximize(
        &lin,
        aff,
        None,
        BarrierOptions {
            mu_start: Some(1e-1),
            gap_target: 1e-13,
            center_tol: 1e-6,
            keep_snapshots: 1,
            ..BarrierOptions::default()
        },
    )?;
    let (l_inv, _) = cholesky(&out.omega)?;
    let inv = l_inv.adjoint() * &l_inv;
    let target = &lin.c + inv * c64(out.mu);
    let y = scaled_multipliers(aff, &out.omega, &target).unwrap_or_else(|| &aff.rows * herm_to_vec(&target));
    Some((out.omega, y * scale))
}
