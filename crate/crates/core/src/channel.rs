//! Honest-implementation statistics for a lossy fiber with excess noise.
//!
//! Each pulse reaching Bob is a displaced thermal state
//! `D(√η a) ρ_th D†(√η a)`. Its Fock matrix elements follow from the
//! Laguerre-polynomial expression, evaluated in the log domain. The click
//! probabilities are contracted with the beam-splitter form of the click
//! operators, `U† (M^0 − M^1) U`, sector by sector in the total photon number.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::measurement::Symbol;
use crate::params::{ProtocolParams, ThermalConvention};

/// Largest per-mode truncation tried before giving up.
pub const MAX_TRUNCATION: usize = 640;
/// Tolerated Fock-space weight beyond the truncation.
pub const TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub eta: f64,
    pub xi: f64,
    /// Thermal parameter of the displaced thermal state.
    pub n_thermal: f64,
    pub n_max: usize,
}

impl ChannelModel {
    pub fn new(eta: f64, xi: f64, n_max: usize, convention: ThermalConvention) -> Result<Self> {
        check_range("eta", eta, eta > 0.0 && eta <= 1.0, "in (0, 1]")?;
        check_range("xi", xi, xi >= 0.0, "nonnegative")?;
        let n_thermal = match convention {
            ThermalConvention::MeanPhoton => xi * eta / 2.0,
            ThermalConvention::TotalVariance => 1.0 + xi * eta,
        };
        Ok(Self {
            eta,
            xi,
            n_thermal,
            n_max,
        })
    }

    pub fn from_params(params: &ProtocolParams) -> Result<Self> {
        Self::new(params.transmittance(), params.xi, params.n_max, params.thermal)
    }

    fn with_truncation(&self, n_max: usize) -> Self {
        Self {
            n_max,
            ..self.clone()
        }
    }
}

struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn new(n: usize) -> Self {
        let mut v = vec![0.0; n + 1];
        for k in 1..=n {
            v[k] = v[k - 1] + (k as f64).ln();
        }
        Self(v)
    }

    fn get(&self, n: usize) -> f64 {
        self.0[n]
    }

    fn binom(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn element_with(m: usize, n: usize, amplitude: f64, model: &ChannelModel, lf: &LnFactorials) -> f64 {
    let (m, n) = if m <= n { (m, n) } else { (n, m) };
    let k = n - m;
    let mu = model.eta.sqrt() * amplitude;
    let x = mu * mu;
    let delta = model.n_thermal;
    let sign = if mu < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    if x == 0.0 {
        // thermal state: diagonal only
        if k != 0 {
            return 0.0;
        }
        if delta == 0.0 {
            return if m == 0 { 1.0 } else { 0.0 };
        }
        return (m as f64 * delta.ln() - (m as f64 + 1.0) * (1.0 + delta).ln()).exp();
    }
    let ln_mu = mu.abs().ln();
    if delta == 0.0 {
        let ln = -x + (m + n) as f64 * ln_mu - 0.5 * (lf.get(m) + lf.get(n));
        return sign * ln.exp();
    }
    // δ^m L_m^{(k)}(−x/(δ(1+δ))) = Σ_j C(m+k, m−j) δ^{m−j} (x/(1+δ))^j / j!
    let ln_d = delta.ln();
    let ln_y = x.ln() - (1.0 + delta).ln();
    let terms: Vec<f64> = (0..=m)
        .map(|j| lf.binom(m + k, m - j) + (m - j) as f64 * ln_d + j as f64 * ln_y - lf.get(j))
        .collect();
    let ln = 0.5 * (lf.get(m) - lf.get(n)) - (n as f64 + 1.0) * (1.0 + delta).ln()
        + k as f64 * ln_mu
        - x / (1.0 + delta)
        + log_sum_exp(&terms);
    sign * ln.exp()
}

/// `⟨m| D(√η a) ρ_th D†(√η a) |n⟩` for real amplitude `a`.
pub fn displaced_thermal_element(m: usize, n: usize, amplitude: f64, model: &ChannelModel) -> Result<f64> {
    if m > model.n_max || n > model.n_max {
        return Err(Error::DimensionMismatch(format!(
            "Fock index ({m}, {n}) beyond truncation {}",
            model.n_max
        )));
    }
    check_range("amplitude", amplitude, true, "finite")?;
    let lf = LnFactorials::new(2 * model.n_max + 1);
    Ok(element_with(m, n, amplitude, model, &lf))
}

/// Full truncated density matrix of the received pulse.
pub fn displaced_thermal_matrix(amplitude: f64, model: &ChannelModel) -> DMatrix<f64> {
    let lf = LnFactorials::new(2 * model.n_max + 1);
    let d = model.n_max + 1;
    let mut out = DMatrix::zeros(d, d);
    for m in 0..d {
        for n in m..d {
            let v = element_with(m, n, amplitude, model, &lf);
            out[(m, n)] = v;
            out[(n, m)] = v;
        }
    }
    out
}

/// Probabilities over the announcement alphabet, with derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickStatistics {
    /// Indexed by [`Symbol::index`].
    pub q: [f64; 4],
    pub qber: f64,
    pub p_click: f64,
    /// Per-mode truncation that met the tail tolerance.
    pub n_max_used: usize,
}

impl ClickStatistics {
    pub fn get(&self, s: Symbol) -> f64 {
        self.q[s.index()]
    }

    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// `tr[(ρ_S ⊗ ρ_R) U†(M^0 − M^1)U]` for real symmetric Fock matrices.
fn click_difference(rho_s: &DMatrix<f64>, rho_r: &DMatrix<f64>, lf: &LnFactorials) -> f64 {
    let n_max = rho_s.nrows() - 1;
    let mut acc = Kahan::default();
    let mut quiet = 0;
    for big_n in 1..=n_max {
        let scale = -(big_n as f64) * std::f64::consts::LN_2;
        let mut sector = 0.0;
        for k in 0..=big_n {
            for l in 0..=big_n {
                if (k + l) % 2 == 0 {
                    continue;
                }
                let w = 2.0 * (scale + 0.5 * (lf.binom(big_n, k) + lf.binom(big_n, l))).exp();
                sector += w * rho_s[(big_n - l, big_n - k)] * rho_r[(l, k)];
            }
        }
        acc.add(sector);
        if sector.abs() < 1e-16 * acc.sum.abs() {
            quiet += 1;
            if quiet >= 5 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    acc.sum
}

fn fock_tail(rho: &DMatrix<f64>) -> f64 {
    (1.0 - rho.trace()).abs()
}

/// Per-pair click quantities: no-click probability of both modes and the
/// detector imbalance `P(0) − P(1)` before dark counts.
struct PairStats {
    p00: f64,
    diff: f64,
}

fn pair_stats(signal: f64, reference: f64, model: &ChannelModel, lf: &LnFactorials) -> Result<PairStats> {
    let rho_s = displaced_thermal_matrix(signal, model);
    let rho_r = displaced_thermal_matrix(reference, model);
    let tail = fock_tail(&rho_s).max(fock_tail(&rho_r));
    if tail > TAIL_TOL {
        return Err(Error::TruncationNotConverged {
            tail,
            n_max: model.n_max,
        });
    }
    Ok(PairStats {
        p00: rho_s[(0, 0)] * rho_r[(0, 0)],
        diff: click_difference(&rho_s, &rho_r, lf),
    })
}

/// Honest statistics with automatic truncation escalation.
///
/// Alice's reference and signal amplitudes are each drawn uniformly from
/// `{−β, γ_mod·β}`; the bit is 0 when they coincide, and detector 0 sits on
/// the constructive port. For `γ_mod = 1` every pair reduces to the same
/// statistics as `(β, β)`.
pub fn click_statistics(params: &ProtocolParams, model: &ChannelModel) -> Result<ClickStatistics> {
    check_range("p_k", params.p_k, (0.0..=1.0).contains(&params.p_k), "in [0, 1]")?;
    check_range("p_d", params.p_d, (0.0..1.0).contains(&params.p_d), "in [0, 1)")?;
    let mut n_max = model.n_max.max(1);
    loop {
        let trial = model.with_truncation(n_max);
        match click_statistics_fixed(params, &trial) {
            Err(Error::TruncationNotConverged { tail, .. }) => {
                if n_max >= MAX_TRUNCATION {
                    return Err(Error::TruncationNotConverged { tail, n_max });
                }
                log::debug!("Fock tail {tail:.3e} at n_max = {n_max}; escalating");
                n_max = (2 * n_max).min(MAX_TRUNCATION);
            }
            other => return other,
        }
    }
}

fn click_statistics_fixed(params: &ProtocolParams, model: &ChannelModel) -> Result<ClickStatistics> {
    let lf = LnFactorials::new(2 * model.n_max + 1);
    let beta = params.beta;
    let amps = [-beta, params.gamma_mod * beta];
    let keep = (1.0 - params.p_d).powi(2);
    let click_scale = (1.0 - params.p_d) / 2.0;
    let (mut right, mut wrong, mut silent) = (0.0, 0.0, 0.0);
    for (i, &reference) in amps.iter().enumerate() {
        for (j, &signal) in amps.iter().enumerate() {
            let st = pair_stats(signal, reference, model, &lf)?;
            // the constructive detector is 0 when the amplitudes agree
            let signed = if i == j { st.diff } else { -st.diff };
            let base = 0.5 - keep / 2.0 * st.p00;
            right += 0.25 * (base + click_scale * signed);
            wrong += 0.25 * (base - click_scale * signed);
            silent += 0.25 * keep * st.p00;
        }
    }
    // cancellation leaves ~1e-19 negatives when a port is dark
    let (right, wrong) = (right.max(0.0), wrong.max(0.0));
    let test = 1.0 - params.p_k;
    let p_click = 1.0 - silent;
    let mut q = [0.0; 4];
    q[Symbol::Bot.index()] = params.p_k * p_click;
    q[Symbol::CC.index()] = test * right;
    q[Symbol::WC.index()] = test * wrong;
    q[Symbol::NC.index()] = silent;
    let qber = if right + wrong > 0.0 {
        (wrong / (right + wrong)).clamp(0.0, 0.5)
    } else {
        0.0
    };
    Ok(ClickStatistics {
        q,
        qber,
        p_click,
        n_max_used: model.n_max,
    })
}

/// `h₂(p) = −p log₂ p − (1−p) log₂(1−p)`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Per-round error-correction leakage `f_EC · p^K · p_click · h₂(QBER)`.
pub fn ec_leakage_rate(stats: &ClickStatistics, f_ec: f64) -> Result<f64> {
    check_range("f_ec", f_ec, f_ec >= 1.0, "at least 1")?;
    if stats.p_click <= 0.0 {
        return Ok(0.0);
    }
    Ok(f_ec * stats.get(Symbol::Bot) * binary_entropy(stats.qber))
}
