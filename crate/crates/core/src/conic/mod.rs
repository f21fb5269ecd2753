//! Optimization over the no-signaling set.
//!
//! Both programs are smooth concave maximizations over the spectrahedron
//! `{ω ⪰ 0, tr ω = 1, Tr_S ω = σ_A ⊗ Tr_{AS} ω}`:
//!
//! * the κ program maximizes the argument `g(ω)` of the f-weighted bound, so
//!   that `κ = (α/(1−α)) log₂ max g`;
//! * the tradeoff program maximizes `Σ_c q_c ln P_c(ω)`, whose optimizer
//!   gives the tradeoff function `f_c = (α/(α−1)) log₂(q_c / P_c(ω*))`.
//!
//! Every reported κ comes from a dual certificate, so it is a valid lower
//! bound even when the primal iterate is slightly off optimal.

mod affine;
mod barrier;
mod cones;
mod frank_wolfe;
mod objective;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use cones::{cone_membership, ConeElement, Membership};

use crate::channel::ClickStatistics;
use crate::error::{check_range, Error, Result};
use crate::linalg::{c64, CMatrix, DensityMatrix, Eigh, HermitianOperator};
use crate::measurement::{
    asr_signature, build_alice_marginal, build_gamma_operators, build_key_superoperator, AliceMarginal,
    GammaOperators, KeySuperoperator, Symbol,
};
use crate::params::ProtocolParams;
use crate::renyi::{tradeoff_weights, TradeoffFunction, TradeoffOrigin};

use affine::AffineStructure;
use barrier::BarrierOptions;
use objective::{ConcaveObjective, FWeighted, LogLikelihood};

/// Residual accepted for membership in the feasible set.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Smallest reference probability used by the tradeoff program.
pub const Q_FLOOR: f64 = 1e-12;

/// The no-signaling feasible set for a given source.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    pub marginal: AliceMarginal,
    affine: AffineStructure,
}

impl FeasibleSet {
    pub fn new(marginal: AliceMarginal) -> Self {
        let affine = AffineStructure::new(&marginal);
        Self { marginal, affine }
    }

    pub fn from_params(params: &ProtocolParams) -> Result<Self> {
        Ok(Self::new(build_alice_marginal(params.beta, params.gamma_mod)?))
    }

    /// `σ_A ⊗ I/4`, a strictly feasible point.
    pub fn reference_state(&self) -> DensityMatrix {
        DensityMatrix::new(HermitianOperator::from_computed(
            asr_signature(),
            self.affine.omega0.clone(),
        ))
        .expect("reference state is a density matrix")
    }

    /// Largest violation among the marginal equations, the trace and
    /// positivity.
    pub fn residual(&self, omega: &HermitianOperator) -> f64 {
        let m = omega.entries();
        let neg = (-Eigh::new(m).min()).max(0.0);
        self.affine.residual(m).max(neg)
    }

    pub fn contains(&self, omega: &HermitianOperator) -> bool {
        omega.dim() == 8 && self.residual(omega) <= MEMBERSHIP_TOL
    }

    /// Random feasible state obtained by projecting a random Hermitian
    /// matrix (useful for sampling-based checks).
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Result<DensityMatrix> {
        let g = CMatrix::from_fn(8, 8, |_, _| {
            num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = &g * g.adjoint();
        let h = &h * c64(1.0 / h.trace().re);
        project_feasible(&HermitianOperator::from_computed(asr_signature(), h), self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective at the returned state.
    pub primal_value: f64,
    /// Certified bound on the optimum (same units as `primal_value`).
    pub dual_value: f64,
    /// `|primal − dual|`.
    pub gap: f64,
    pub iterations: usize,
    pub feasibility_residual: f64,
    pub status: SolveStatus,
    /// True when zero reference probabilities were floored.
    pub smoothed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Path-following Newton on the log-det barrier.
    #[default]
    Barrier,
    /// Away-step Frank–Wolfe with barrier-solved linear subproblems.
    FrankWolfe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Convergence tolerance on the gap, relative to `max(1, |value|)`.
    pub gap_tol: f64,
    /// Target for `8μ` at the end of the barrier path.
    pub barrier_gap: f64,
    pub mu_factor: f64,
    pub max_newton: usize,
    pub fd_eps: f64,
    pub fw_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Barrier,
            gap_tol: 1e-6,
            barrier_gap: 1e-12,
            mu_factor: 0.1,
            max_newton: 600,
            fd_eps: 1e-4,
            fw_max_iter: 3000,
        }
    }
}

impl SolverConfig {
    fn barrier(&self, mu_start: Option<f64>) -> BarrierOptions {
        BarrierOptions {
            mu_start,
            mu_factor: self.mu_factor,
            gap_target: self.barrier_gap,
            max_newton: self.max_newton,
            fd_eps: self.fd_eps,
            ..BarrierOptions::default()
        }
    }
}

/// A previous optimizer used to start a nearby solve.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub omega: CMatrix,
    pub mu: f64,
    /// Points certified by the run that produced this start; a later solve
    /// at nearby data certifies them again.
    pub(crate) path: Vec<(CMatrix, f64)>,
}

/// Operators shared by all solves at one parameter point.
#[derive(Debug, Clone)]
pub struct Problem {
    pub set: FeasibleSet,
    pub gammas: GammaOperators,
    pub key_map: KeySuperoperator,
}

#[derive(Debug, Clone)]
pub struct KappaSolution {
    /// Certified lower bound on κ.
    pub kappa: f64,
    pub omega: DensityMatrix,
    pub report: SolveReport,
    pub warm: WarmStart,
}

#[derive(Debug, Clone)]
pub struct TradeoffSolution {
    pub f: TradeoffFunction,
    /// Optimal value of the tradeoff program, `f·q̃` for the floored `q̃`.
    pub value: f64,
    pub omega: DensityMatrix,
    /// Model probabilities `(p^K Ψ̂, tr Γ^CC ω, tr Γ^WC ω, tr Γ^NC ω)` at the
    /// optimizer.
    pub model: [f64; 4],
    pub report: SolveReport,
    pub warm: WarmStart,
}

fn check_alpha(alpha: f64) -> Result<()> {
    check_range("alpha", alpha, alpha > 1.0 && alpha < 2.0, "in (1, 2)")
}

struct Maximized {
    omega: CMatrix,
    mu: f64,
    iterations: usize,
    finished: bool,
    extra_duals: Vec<DVector<f64>>,
    /// Earlier path points that are also worth certifying.
    snapshots: Vec<(CMatrix, f64)>,
}

/// Best certified pair over the candidate points of a run.
struct Certified {
    omega: CMatrix,
    value: f64,
    upper: f64,
    points: Vec<(CMatrix, f64)>,
}

/// Number of stage-end points of a run passed to the certificate.
const CERTIFIED_SNAPSHOTS: usize = 3;

impl Problem {
    pub fn new(params: &ProtocolParams) -> Result<Self> {
        Ok(Self {
            set: FeasibleSet::from_params(params)?,
            gammas: build_gamma_operators(params.p_k, params.p_d)?,
            key_map: build_key_superoperator(params.p_d)?,
        })
    }

    fn maximize(
        &self,
        obj: &dyn ConcaveObjective,
        config: &SolverConfig,
        warm: Option<&WarmStart>,
    ) -> Result<Maximized> {
        let aff = &self.set.affine;
        match config.kind {
            SolverKind::Barrier => {
                let out = barrier::maximize(
                    obj,
                    aff,
                    warm.map(|w| &w.omega),
                    config.barrier(warm.map(|w| w.mu.max(config.barrier_gap / 8.0))),
                )
                .ok_or_else(|| Error::Solver("barrier iteration left the domain".into()))?;
                Ok(Maximized {
                    omega: out.omega,
                    mu: out.mu,
                    iterations: out.newton_steps,
                    finished: out.reached_target,
                    extra_duals: Vec::new(),
                    snapshots: {
                        let skip = out.snapshots.len().saturating_sub(CERTIFIED_SNAPSHOTS);
                        warm.map(|w| w.path.clone())
                            .unwrap_or_default()
                            .into_iter()
                            .chain(out.snapshots.into_iter().skip(skip))
                            .collect()
                    },
                })
            }
            SolverKind::FrankWolfe => {
                let out = frank_wolfe::maximize(obj, aff, warm.map(|w| &w.omega), config)
                    .ok_or_else(|| Error::Solver("Frank-Wolfe iteration left the domain".into()))?;
                Ok(Maximized {
                    omega: out.omega,
                    mu: 0.0,
                    iterations: out.iterations,
                    finished: out.converged,
                    extra_duals: out.duals,
                    snapshots: Vec::new(),
                })
            }
        }
    }

    /// Certifies every candidate point of a run. The returned state is the
    /// one with the best value, or with `by_local_gap` the one whose own
    /// certified lower bound `2φ − φ_up` is best; the tradeoff program uses
    /// the latter since the κ bound built on its state inherits that gap.
    fn certify(&self, obj: &dyn ConcaveObjective, run: &Maximized, by_local_gap: bool) -> Result<Certified> {
        let aff = &self.set.affine;
        let mut points = run.snapshots.clone();
        if points.last().map_or(true, |(o, _)| *o != run.omega) {
            points.push((run.omega.clone(), run.mu));
        }
        let mut best: Option<(f64, Certified)> = None;
        let mut upper = f64::INFINITY;
        for (omega, mu) in &points {
            let Some((_, grad)) = obj.eval(omega) else { continue };
            let mut duals = run.extra_duals.clone();
            if let Some((_, y)) = barrier::linear_dual(&grad, aff) {
                duals.push(y);
            }
            let Some((value, ub)) = barrier::certify(obj, aff, omega, *mu, &duals) else {
                continue;
            };
            upper = upper.min(ub);
            let score = if by_local_gap { 2.0 * value - ub } else { value };
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                let cert = Certified {
                    omega: omega.clone(),
                    value,
                    upper,
                    points: Vec::new(),
                };
                best = Some((score, cert));
            }
        }
        let (_, mut best) = best.ok_or_else(|| Error::Solver("certificate evaluation failed".into()))?;
        best.upper = upper.max(best.value);
        best.points = points;
        Ok(best)
    }

    fn finish_state(&self, omega: CMatrix) -> Result<(DensityMatrix, f64)> {
        let op = HermitianOperator::from_computed(asr_signature(), omega);
        let residual = self.set.residual(&op);
        let dm = DensityMatrix::new(op).map_err(|_| Error::InfeasibleCandidate(residual))?;
        Ok((dm, residual))
    }

    /// Certified κ for tradeoff function `f` at Rényi order `α`.
    pub fn solve_kappa(
        &self,
        f: &TradeoffFunction,
        alpha: f64,
        config: &SolverConfig,
        warm: Option<&WarmStart>,
    ) -> Result<KappaSolution> {
        check_alpha(alpha)?;
        let w = tradeoff_weights(f, alpha);
        let obj = FWeighted::new(&w, &self.gammas, &self.key_map, alpha);
        let run = self.maximize(&obj, config, warm)?;
        let cert = self.certify(&obj, &run, false)?;
        let (g, g_up) = (cert.value, cert.upper);
        if !(g > 0.0) {
            return Err(Error::InfeasibleEvaluation(g));
        }
        let scale = alpha / (1.0 - alpha);
        let primal = scale * g.log2();
        let dual = scale * g_up.log2();
        let (omega, residual) = self.finish_state(cert.omega)?;
        let gap = (primal - dual).abs();
        let status = if gap <= config.gap_tol * primal.abs().max(1.0) && residual <= 1e-8 && run.finished {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIter
        };
        Ok(KappaSolution {
            kappa: dual,
            warm: WarmStart {
                omega: omega.op().entries().clone(),
                mu: run.mu,
                path: cert.points,
            },
            omega,
            report: SolveReport {
                primal_value: primal,
                dual_value: dual,
                gap,
                iterations: run.iterations,
                feasibility_residual: residual,
                status,
                smoothed: false,
            },
        })
    }

    /// Tradeoff function for the reference distribution `q` at order `α`.
    pub fn solve_tradeoff(
        &self,
        q: &[f64; 4],
        alpha: f64,
        config: &SolverConfig,
        warm: Option<&WarmStart>,
    ) -> Result<TradeoffSolution> {
        check_alpha(alpha)?;
        let total: f64 = q.iter().sum();
        if q.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter {
                name: "q",
                value: total,
                expected: "a probability distribution",
            });
        }
        let smoothed = q.iter().any(|&x| x < Q_FLOOR);
        let mut qs = q.map(|x| x.max(Q_FLOOR));
        let s: f64 = qs.iter().sum();
        qs.iter_mut().for_each(|x| *x /= s);
        let gamma = 1.0 / alpha;
        let obj = LogLikelihood {
            q: qs,
            gammas: &self.gammas,
            key_map: &self.key_map,
            gamma,
        };
        let run = self.maximize(&obj, config, warm)?;
        let cert = self.certify(&obj, &run, true)?;
        let model = obj.model(&cert.omega);
        if model.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InfeasibleEvaluation(model.iter().cloned().fold(f64::INFINITY, f64::min)));
        }
        let scale = alpha / (alpha - 1.0);
        let values = [0, 1, 2, 3].map(|i| scale * (qs[i] / model[i]).log2());
        let f = TradeoffFunction::new(values, TradeoffOrigin::DualExtracted)?;
        let value = f.dot(&qs);
        // V = (α/(α−1)) [Σ q log₂ q − q_⊥ log₂ p^K − h/ln 2]
        let dual = value - scale * (cert.upper - cert.value) / std::f64::consts::LN_2;
        let (omega, residual) = self.finish_state(cert.omega)?;
        let gap = (value - dual).abs();
        let status = if gap <= config.gap_tol * value.abs().max(1.0) && residual <= 1e-8 && run.finished {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIter
        };
        Ok(TradeoffSolution {
            f,
            value,
            model,
            warm: WarmStart {
                omega: omega.op().entries().clone(),
                mu: run.mu,
                path: cert.points,
            },
            omega,
            report: SolveReport {
                primal_value: value,
                dual_value: dual,
                gap,
                iterations: run.iterations,
                feasibility_residual: residual,
                status,
                smoothed,
            },
        })
    }
}

/// Certified κ for `f` at order `α` (fresh solve with default settings).
pub fn solve_kappa(f: &TradeoffFunction, alpha: f64, params: &ProtocolParams) -> Result<KappaSolution> {
    params.validate()?;
    Problem::new(params)?.solve_kappa(f, alpha, &SolverConfig::default(), None)
}

/// Tradeoff function for honest statistics `q` (fresh solve with default
/// settings).
pub fn solve_tradeoff(q: &ClickStatistics, alpha: f64, params: &ProtocolParams) -> Result<TradeoffSolution> {
    params.validate()?;
    let expected = params.p_k * q.p_click;
    if (q.get(Symbol::Bot) - expected).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "q(bot)",
            value: q.get(Symbol::Bot),
            expected: "p_k · p_click",
        });
    }
    Problem::new(params)?.solve_tradeoff(&q.q, alpha, &SolverConfig::default(), None)
}

/// Nearest feasible state by Dykstra alternation between the PSD cone and
/// the affine constraints, finished by mixing with the strictly feasible
/// reference point so that the output satisfies every constraint.
pub fn project_feasible(candidate: &HermitianOperator, set: &FeasibleSet) -> Result<DensityMatrix> {
    if candidate.dim() != 8 {
        return Err(Error::DimensionMismatch(format!(
            "candidate on {} is not an A⊗S⊗R operator",
            candidate.signature()
        )));
    }
    if set.contains(candidate) {
        return DensityMatrix::new(candidate.clone().with_signature(asr_signature())?);
    }
    let aff = &set.affine;
    let mut x = candidate.entries().clone();
    let mut p_corr = CMatrix::zeros(8, 8);
    let mut q_corr = CMatrix::zeros(8, 8);
    for _ in 0..2000 {
        let y = psd_projection(&(&x + &p_corr));
        p_corr = &x + &p_corr - &y;
        let next = aff.project(&(&y + &q_corr));
        q_corr = &y + &q_corr - &next;
        let moved = (&next - &x).norm();
        x = next;
        if moved < 1e-13 {
            break;
        }
    }
    let fixed = barrier::interior_start(aff, &x, 0.0);
    let op = HermitianOperator::from_computed(asr_signature(), fixed);
    let residual = set.residual(&op);
    if residual > MEMBERSHIP_TOL {
        return Err(Error::InfeasibleCandidate(residual));
    }
    DensityMatrix::new(op).map_err(|_| Error::InfeasibleCandidate(residual))
}

fn psd_projection(m: &CMatrix) -> CMatrix {
    Eigh::new(m).apply(|l| l.max(0.0))
}
