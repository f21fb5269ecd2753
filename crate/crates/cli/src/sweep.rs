//! Point evaluation, parallel sweeps and CSV output.

use std::io::Write;

use dpsk_keyrate::engine::{key_rate_with, optimize_alpha_with, optimize_modulation, KeyRateResult, RateStatus};
use dpsk_keyrate::params::ProtocolParams;
use rayon::prelude::*;

use crate::config::{Param, SweepConfig};

#[derive(Debug, Clone)]
pub struct PointOutcome {
    /// Parameters the rate was obtained at (after optimization).
    pub params: ProtocolParams,
    pub result: KeyRateResult,
}

impl PointOutcome {
    pub fn failed(&self) -> bool {
        matches!(self.result.status, RateStatus::Failed(_))
    }
}

pub fn run_point(config: &SweepConfig, params: &ProtocolParams) -> PointOutcome {
    let engine = &config.engine;
    if config.search.optimize_beta || config.search.optimize_p_k {
        let search = dpsk_keyrate::engine::ModulationSearch {
            seed: config.seed,
            ..config.search
        };
        return match optimize_modulation(params, &search, engine) {
            Ok((params, result)) => PointOutcome { params, result },
            Err(e) => PointOutcome {
                params: params.clone(),
                result: KeyRateResult::failed(params.alpha, e.to_string()),
            },
        };
    }
    let result = if config.optimize.contains(&Param::Alpha) {
        optimize_alpha_with(params, engine).1
    } else {
        key_rate_with(params, engine)
    };
    let params = ProtocolParams {
        alpha: result.alpha_used,
        ..params.clone()
    };
    PointOutcome { params, result }
}

pub fn default_workers(points: usize) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    points.clamp(1, cores)
}

/// Evaluates every grid point on a pool of `workers` threads; the output is
/// in grid order.
pub fn run_sweep(config: &SweepConfig, workers: usize) -> Vec<(f64, PointOutcome)> {
    let points = config.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        points
            .par_iter()
            .map(|(g, p)| (*g, run_point(config, p)))
            .collect()
    })
}

pub const COLUMNS: [&str; 11] = [
    "rate_per_pulse",
    "kappa",
    "f_bot",
    "f_cc",
    "f_wc",
    "f_nc",
    "alpha_used",
    "gap",
    "status",
    "beta",
    "p_k",
];

/// Shortest round-trip form, with an exponent for very small or large
/// magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes the header and one row per point. Numbers use the shortest
/// representation that round-trips.
pub fn write_csv<W: Write>(out: W, variable: &str, rows: &[(f64, PointOutcome)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![variable];
    header.extend(COLUMNS);
    w.write_record(&header)?;
    for (x, o) in rows {
        let r = &o.result;
        let status = match &r.status {
            RateStatus::Certified => "certified",
            RateStatus::Failed(_) => "failed",
        };
        let mut rec = vec![num(*x), num(r.rate_per_pulse), num(r.kappa)];
        rec.extend(r.f.values.iter().map(|&v| num(v)));
        rec.extend([
            num(r.alpha_used),
            num(r.gap()),
            status.to_string(),
            num(o.params.beta),
            num(o.params.p_k),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Multi-line human-readable summary of one point.
pub fn describe(o: &PointOutcome) -> String {
    let r = &o.result;
    let b = &r.breakdown;
    let mut s = String::new();
    let p = &o.params;
    s += &format!(
        "chi_db {}  n {:e}  beta {}  p_k {}  p_d {:e}  gamma_mod {}\n",
        p.chi_db, p.n, p.beta, p.p_k, p.p_d, p.gamma_mod
    );
    match &r.status {
        RateStatus::Certified => s += "status          certified\n",
        RateStatus::Failed(why) => s += &format!("status          failed ({why})\n"),
    }
    s += &format!("alpha           {}\n", r.alpha_used);
    s += &format!(
        "f (bot,cc,wc,nc) {:.6e} {:.6e} {:.6e} {:.6e}\n",
        r.f.values[0], r.f.values[1], r.f.values[2], r.f.values[3]
    );
    s += &format!("kappa           {:.6e}  (gap {:.2e})\n", r.kappa, r.gap());
    s += &format!("n f.q           {:.6e} bits\n", b.fq_term);
    s += &format!("n kappa         {:.6e} bits\n", b.kappa_term);
    s += &format!("EC leakage      {:.6e} bits\n", b.ec_cost);
    s += &format!("EC validation   {} bits\n", b.ec_validation_cost);
    s += &format!("PA penalty      {:.6e} bits\n", b.pa_cost);
    s += &format!("expected length {:.6e} bits\n", r.expected_length);
    s += &format!("rate            {:.6e} bits/pulse\n", r.rate_per_pulse);
    s
}
