//! Expected key lengths and the parameter searches around them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{click_statistics, ec_leakage_rate, ChannelModel, ClickStatistics};
use crate::conic::{Problem, SolveReport, SolverConfig, WarmStart};
use crate::error::{check_range, Result};
use crate::optim::{golden_section_max, nelder_mead, NelderMeadOptions};
use crate::params::ProtocolParams;
use crate::renyi::TradeoffFunction;

/// Additive pieces of the expected key length, all in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// `n · f·q`
    pub fq_term: f64,
    /// `n · κ`
    pub kappa_term: f64,
    /// `λ_EC`
    pub ec_cost: f64,
    /// `⌈log₂(1/ε_EC)⌉`
    pub ec_validation_cost: f64,
    /// `(α/(α−1)) log₂(1/ε_PA)`
    pub pa_cost: f64,
    pub constant: f64,
}

impl Breakdown {
    /// Length before clamping at zero.
    pub fn total(&self) -> f64 {
        self.fq_term + self.kappa_term - self.ec_cost - self.ec_validation_cost - self.pa_cost + self.constant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "reason")]
pub enum RateStatus {
    Certified,
    /// The pipeline failed; the rate is reported as zero.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct KeyRateResult {
    pub kappa: f64,
    pub f: TradeoffFunction,
    pub expected_length: f64,
    pub rate_per_pulse: f64,
    pub breakdown: Breakdown,
    pub tradeoff_report: Option<SolveReport>,
    pub kappa_report: Option<SolveReport>,
    pub alpha_used: f64,
    pub stats: Option<ClickStatistics>,
    pub status: RateStatus,
}

impl KeyRateResult {
    /// Rate-0 result carrying the reason.
    pub fn failed(alpha: f64, reason: String) -> Self {
        log::warn!("key rate at alpha = {alpha}: {reason}; reporting rate 0");
        Self {
            kappa: 0.0,
            f: TradeoffFunction::zero(),
            expected_length: 0.0,
            rate_per_pulse: 0.0,
            breakdown: Breakdown {
                fq_term: 0.0,
                kappa_term: 0.0,
                ec_cost: 0.0,
                ec_validation_cost: 0.0,
                pa_cost: 0.0,
                constant: 0.0,
            },
            tradeoff_report: None,
            kappa_report: None,
            alpha_used: alpha,
            stats: None,
            status: RateStatus::Failed(reason),
        }
    }

    /// Unclamped length per pulse; negative when the costs dominate. Used
    /// as the search objective so that flat zero regions still have a
    /// slope. Failed points score `−∞`.
    pub fn margin_per_pulse(&self, n: f64) -> f64 {
        match self.status {
            RateStatus::Certified => self.breakdown.total() / n,
            RateStatus::Failed(_) => f64::NEG_INFINITY,
        }
    }

    /// Largest duality gap among the two solves (0 if absent).
    pub fn gap(&self) -> f64 {
        [&self.tradeoff_report, &self.kappa_report]
            .iter()
            .filter_map(|r| r.as_ref().map(|r| r.gap))
            .fold(0.0, f64::max)
    }
}

/// Privacy-amplification cost `(α/(α−1)) log₂(1/ε_PA)`.
pub fn pa_penalty(alpha: f64, eps_pa: f64) -> f64 {
    alpha / (alpha - 1.0) * (1.0 / eps_pa).log2()
}

/// Error-correction validation cost `⌈log₂(1/ε_EC)⌉`.
pub fn ec_validation_penalty(eps_ec: f64) -> f64 {
    (1.0 / eps_ec).log2().ceil()
}

/// `max(0, n(f·q + κ) − λ_EC − ⌈log₂(1/ε_EC)⌉ − (α/(α−1)) log₂(1/ε_PA) + 2)`
/// with `λ_EC = n · f_EC · q(⊥) · h₂(QBER)` and `α = params.alpha`.
pub fn expected_key_length(
    params: &ProtocolParams,
    f: &TradeoffFunction,
    kappa: f64,
    stats: &ClickStatistics,
) -> Result<KeyRateResult> {
    params.validate()?;
    let n = params.n;
    let breakdown = Breakdown {
        fq_term: n * f.dot(&stats.q),
        kappa_term: n * kappa,
        ec_cost: n * ec_leakage_rate(stats, params.f_ec)?,
        ec_validation_cost: ec_validation_penalty(params.eps_ec),
        pa_cost: pa_penalty(params.alpha, params.eps_pa),
        constant: 2.0,
    };
    let expected_length = breakdown.total().max(0.0);
    Ok(KeyRateResult {
        kappa,
        f: f.clone(),
        expected_length,
        rate_per_pulse: expected_length / n,
        breakdown,
        tradeoff_report: None,
        kappa_report: None,
        alpha_used: params.alpha,
        stats: Some(stats.clone()),
        status: RateStatus::Certified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub solver: SolverConfig,
    /// Search bracket for `α − 1` (log scale).
    pub alpha_excess_min: f64,
    pub alpha_excess_max: f64,
    /// Points of the initial log grid.
    pub alpha_grid: usize,
    pub golden_iterations: usize,
    /// Barrier weight used when restarting from a solution at a different α.
    pub warm_mu: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            alpha_excess_min: 1e-5,
            alpha_excess_max: 0.5,
            alpha_grid: 9,
            golden_iterations: 12,
            warm_mu: 1e-5,
        }
    }
}

/// Rate evaluations at one channel point: the statistics and operators are
/// computed once, and each solve starts from the previous optimizer.
pub struct RateEvaluator {
    params: ProtocolParams,
    config: EngineConfig,
    setup: std::result::Result<(Problem, ClickStatistics), String>,
    warm: Option<WarmStart>,
}

impl RateEvaluator {
    pub fn new(params: &ProtocolParams, config: &EngineConfig) -> Self {
        let setup = (|| {
            params.validate()?;
            let stats = click_statistics(params, &ChannelModel::from_params(params)?)?;
            Ok::<_, crate::Error>((Problem::new(params)?, stats))
        })()
        .map_err(|e| e.to_string());
        Self {
            params: params.clone(),
            config: *config,
            setup,
            warm: None,
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn stats(&self) -> Option<&ClickStatistics> {
        self.setup.as_ref().ok().map(|(_, s)| s)
    }

    /// Certified key rate at order `α`; failures give rate 0.
    pub fn evaluate(&mut self, alpha: f64) -> KeyRateResult {
        match self.try_evaluate(alpha) {
            Ok(r) => r,
            Err(e) => KeyRateResult::failed(alpha, e),
        }
    }

    fn try_evaluate(&mut self, alpha: f64) -> std::result::Result<KeyRateResult, String> {
        let (problem, stats) = self.setup.as_ref().map_err(Clone::clone)?;
        let solver = &self.config.solver;
        let warm = self.warm.as_ref().map(|w| WarmStart {
            omega: w.omega.clone(),
            mu: self.config.warm_mu,
            path: Vec::new(),
        });
        let t = problem
            .solve_tradeoff(&stats.q, alpha, solver, warm.as_ref())
            .or_else(|_| problem.solve_tradeoff(&stats.q, alpha, solver, None))
            .map_err(|e| format!("tradeoff solve: {e}"))?;
        let k = problem
            .solve_kappa(&t.f, alpha, solver, Some(&t.warm))
            .map_err(|e| format!("kappa solve: {e}"))?;
        self.warm = Some(t.warm.clone());
        let params = ProtocolParams {
            alpha,
            ..self.params.clone()
        };
        let mut result = expected_key_length(&params, &t.f, k.kappa, stats).map_err(|e| e.to_string())?;
        result.tradeoff_report = Some(t.report);
        result.kappa_report = Some(k.report);
        Ok(result)
    }

    /// Best rate over `α` by a log-spaced grid on the configured bracket
    /// followed by golden-section refinement around the best grid point.
    pub fn optimize_alpha(&mut self) -> KeyRateResult {
        let c = self.config;
        let (lo, hi) = (c.alpha_excess_min.ln(), c.alpha_excess_max.ln());
        let k = c.alpha_grid.max(3);
        let mut evaluated: Vec<(f64, KeyRateResult)> = Vec::new();
        // large α−1 first: those solves are the best conditioned starts
        for i in (0..k).rev() {
            let x = lo + (hi - lo) * i as f64 / (k - 1) as f64;
            let r = self.evaluate(1.0 + x.exp());
            evaluated.push((x, r));
        }
        let n = self.params.n;
        let best_idx = argmax(&evaluated, n);
        let x_best = evaluated[best_idx].0;
        let step = (hi - lo) / (k - 1) as f64;
        let (a, b) = ((x_best - step).max(lo), (x_best + step).min(hi));
        self.refine(evaluated, a, b)
    }

    /// Golden-section search on `ln(α−1) ∈ [ln(hint)−width, ln(hint)+width]`
    /// (clipped to the bracket), for nearby points of a modulation search.
    pub fn optimize_alpha_near(&mut self, hint: f64, width: f64) -> KeyRateResult {
        let c = self.config;
        let (lo, hi) = (c.alpha_excess_min.ln(), c.alpha_excess_max.ln());
        let x = (hint - 1.0).max(c.alpha_excess_min).ln();
        let (a, b) = ((x - width).max(lo), (x + width).min(hi));
        let first = self.evaluate(1.0 + x.exp());
        self.refine(vec![(x, first)], a, b)
    }

    fn refine(&mut self, mut evaluated: Vec<(f64, KeyRateResult)>, a: f64, b: f64) -> KeyRateResult {
        let n = self.params.n;
        let iters = self.config.golden_iterations;
        golden_section_max(
            |x| {
                let r = self.evaluate(1.0 + x.exp());
                let m = r.margin_per_pulse(n);
                evaluated.push((x, r));
                m
            },
            a,
            b,
            iters,
        );
        let i = argmax(&evaluated, n);
        evaluated.swap_remove(i).1
    }
}

fn argmax(evaluated: &[(f64, KeyRateResult)], n: f64) -> usize {
    let mut best = 0;
    for (i, (_, r)) in evaluated.iter().enumerate() {
        if r.margin_per_pulse(n) > evaluated[best].1.margin_per_pulse(n) {
            best = i;
        }
    }
    best
}

/// Certified key rate at `params.alpha`.
pub fn key_rate(params: &ProtocolParams) -> KeyRateResult {
    key_rate_with(params, &EngineConfig::default())
}

pub fn key_rate_with(params: &ProtocolParams, config: &EngineConfig) -> KeyRateResult {
    RateEvaluator::new(params, config).evaluate(params.alpha)
}

/// Key rate maximized over `α` (any `α` gives a valid bound).
pub fn optimize_alpha(params: &ProtocolParams) -> (f64, KeyRateResult) {
    optimize_alpha_with(params, &EngineConfig::default())
}

pub fn optimize_alpha_with(params: &ProtocolParams, config: &EngineConfig) -> (f64, KeyRateResult) {
    let r = RateEvaluator::new(params, config).optimize_alpha();
    (r.alpha_used, r)
}

/// Box for the modulation search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationSearch {
    pub beta: (f64, f64),
    pub p_k: (f64, f64),
    pub optimize_beta: bool,
    pub optimize_p_k: bool,
    pub max_evaluations: usize,
    pub seed: u64,
    /// Half-width in `ln(α−1)` of the α refinement at each trial point.
    pub alpha_width: f64,
}

impl Default for ModulationSearch {
    fn default() -> Self {
        Self {
            beta: (0.05, 1.5),
            p_k: (0.5, 0.9999),
            optimize_beta: true,
            optimize_p_k: true,
            max_evaluations: 40,
            seed: 0,
            alpha_width: 1.0,
        }
    }
}

/// Maximizes the α-optimized rate over `(β, p^K)` with Nelder–Mead, started
/// at `params`. Coordinates are mapped to the box through a logistic
/// transform; the seed fixes the initial simplex.
pub fn optimize_modulation(
    params: &ProtocolParams,
    search: &ModulationSearch,
    config: &EngineConfig,
) -> Result<(ProtocolParams, KeyRateResult)> {
    params.validate()?;
    for (name, (lo, hi), x) in [("beta", search.beta, params.beta), ("p_k", search.p_k, params.p_k)] {
        check_range(name, x, lo < hi && x >= lo && x <= hi, "inside the search box")?;
    }
    let mut evaluator = RateEvaluator::new(params, config);
    let start = evaluator.optimize_alpha();
    let mut best = (params.clone(), start);
    let mut free: Vec<(usize, (f64, f64))> = Vec::new();
    if search.optimize_beta {
        free.push((0, search.beta));
    }
    if search.optimize_p_k {
        free.push((1, search.p_k));
    }
    if free.is_empty() || search.max_evaluations == 0 {
        return Ok(best);
    }
    let mut alpha_hint = best.1.alpha_used;
    let point = |u: &[f64]| {
        let mut p = params.clone();
        for (&(which, (lo, hi)), &ui) in free.iter().zip(u) {
            let v = lo + (hi - lo) / (1.0 + (-ui).exp());
            if which == 0 {
                p.beta = v;
            } else {
                p.p_k = v;
            }
        }
        p
    };
    let logit = |x: f64, (lo, hi): (f64, f64)| {
        let t = ((x - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
        (t / (1.0 - t)).ln()
    };
    let u0: Vec<f64> = free
        .iter()
        .map(|&(which, range)| logit(if which == 0 { params.beta } else { params.p_k }, range))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let steps: Vec<f64> = u0
        .iter()
        .map(|_| {
            let s = 0.5 + 0.5 * rng.gen::<f64>();
            if rng.gen::<bool>() {
                s
            } else {
                -s
            }
        })
        .collect();
    let n = params.n;
    let mut trials: Vec<(ProtocolParams, KeyRateResult)> = Vec::new();
    nelder_mead(
        |u| {
            let p = point(u);
            let mut ev = RateEvaluator::new(&p, config);
            let r = ev.optimize_alpha_near(alpha_hint, search.alpha_width);
            let m = r.margin_per_pulse(n);
            if m > trials.iter().map(|t| t.1.margin_per_pulse(n)).fold(f64::NEG_INFINITY, f64::max) {
                alpha_hint = r.alpha_used;
            }
            trials.push((p, r));
            -m
        },
        &u0,
        &steps,
        NelderMeadOptions {
            max_evaluations: search.max_evaluations,
            f_tol: 1e-9,
            x_tol: 1e-4,
        },
    );
    for t in trials {
        if t.1.margin_per_pulse(n) > best.1.margin_per_pulse(n) {
            best = t;
        }
    }
    best.0.alpha = best.1.alpha_used;
    Ok(best)
}

/// Outcome of the relativistic timing condition for a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub feasible: bool,
    /// `d(1/v − 1/c)` in seconds.
    pub min_period_s: f64,
    /// `1/min_period`, infinite when the constraint vanishes.
    pub max_rate_hz: f64,
}

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Consecutive pulses must be separated by at least `d(1/v − 1/c)` for the
/// reference pulse to be unable to signal to the next round.
pub fn timing_feasibility(distance_m: f64, channel_speed: f64, pulse_period_s: f64) -> Result<TimingReport> {
    check_range("distance_m", distance_m, distance_m >= 0.0, "nonnegative")?;
    check_range(
        "channel_speed",
        channel_speed,
        channel_speed > 0.0 && channel_speed <= SPEED_OF_LIGHT,
        "in (0, c]",
    )?;
    check_range("pulse_period_s", pulse_period_s, pulse_period_s >= 0.0, "nonnegative")?;
    let min_period_s = (distance_m * (1.0 / channel_speed - 1.0 / SPEED_OF_LIGHT)).max(0.0);
    Ok(TimingReport {
        feasible: pulse_period_s >= min_period_s,
        min_period_s,
        max_rate_hz: if min_period_s > 0.0 { 1.0 / min_period_s } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalties() {
        let pa = pa_penalty(1.1, 9e-11);
        assert_eq!(pa, 1.1 / (1.1 - 1.0) * (1.0 / 9e-11f64).log2());
        assert!((pa - 367.1).abs() < 0.1);
        assert_eq!(ec_validation_penalty(1e-11), 37.0);
    }

    #[test]
    fn small_blocks_clamp_to_zero() {
        let p = ProtocolParams {
            n: 100.0,
            ..ProtocolParams::default()
        };
        let stats = click_statistics(&p, &ChannelModel::from_params(&p).unwrap()).unwrap();
        let f = TradeoffFunction::zero();
        let r = expected_key_length(&p, &f, 0.0, &stats).unwrap();
        assert_eq!(r.expected_length, 0.0);
        assert!(r.breakdown.total() < 0.0);
    }

    #[test]
    fn timing_examples() {
        let free = timing_feasibility(1e4, SPEED_OF_LIGHT, 0.0).unwrap();
        assert_eq!(free.min_period_s, 0.0);
        assert!(free.feasible);
        let v = 2.0 * SPEED_OF_LIGHT / 3.0;
        let fiber = timing_feasibility(5e4, v, 1e-3).unwrap();
        let expected = 5e4 * (1.0 / v - 1.0 / SPEED_OF_LIGHT);
        assert!((fiber.min_period_s - expected).abs() < 1e-18);
        assert!(fiber.feasible);
        assert!(!timing_feasibility(5e4, v, 1e-5).unwrap().feasible);
        assert!(timing_feasibility(0.0, v, 0.0).unwrap().feasible);
    }
}
