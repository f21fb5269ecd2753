//! Scalar protocol parameters.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};

/// How the excess noise `ξ` enters the displaced-thermal matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermalConvention {
    /// Thermal mean photon number `ξη/2`; reduces to a coherent state at
    /// `ξ = 0`.
    #[default]
    MeanPhoton,
    /// Substitutes the total variance `1 + ξη` directly as the thermal
    /// parameter. Kept for comparison only: it does not have a coherent
    /// limit.
    TotalVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Coherent amplitude of the pulses.
    pub beta: f64,
    /// Asymmetry factor: Alice prepares `-β` or `γ_mod·β`.
    #[serde(default = "one")]
    pub gamma_mod: f64,
    /// Probability of a key round.
    pub p_k: f64,
    /// Dark-count probability per detector and round.
    #[serde(default)]
    pub p_d: f64,
    /// Channel loss in dB.
    #[serde(default)]
    pub chi_db: f64,
    /// Transmittance override; when set, `chi_db` is ignored.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Excess noise in shot-noise units.
    #[serde(default)]
    pub xi: f64,
    /// Error-correction efficiency.
    #[serde(default = "default_f_ec")]
    pub f_ec: f64,
    /// Number of rounds.
    pub n: f64,
    #[serde(default = "default_eps_ec")]
    pub eps_ec: f64,
    #[serde(default = "default_eps_pa")]
    pub eps_pa: f64,
    /// Rényi parameter used when it is not optimized.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Initial per-mode Fock truncation (escalated automatically).
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub thermal: ThermalConvention,
}

fn one() -> f64 {
    1.0
}
fn default_f_ec() -> f64 {
    1.1
}
fn default_eps_ec() -> f64 {
    1e-11
}
fn default_eps_pa() -> f64 {
    9e-11
}
fn default_alpha() -> f64 {
    1.05
}
fn default_n_max() -> usize {
    40
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            beta: 0.45,
            gamma_mod: 1.0,
            p_k: 0.96,
            p_d: 0.0,
            chi_db: 10.0,
            eta: None,
            xi: 0.005,
            f_ec: default_f_ec(),
            n: 1e8,
            eps_ec: default_eps_ec(),
            eps_pa: default_eps_pa(),
            alpha: default_alpha(),
            n_max: default_n_max(),
            thermal: ThermalConvention::MeanPhoton,
        }
    }
}

impl ProtocolParams {
    /// `η = 10^(−χ/10)` unless overridden.
    pub fn transmittance(&self) -> f64 {
        self.eta.unwrap_or_else(|| 10f64.powf(-self.chi_db / 10.0))
    }

    pub fn validate(&self) -> Result<()> {
        check_range("beta", self.beta, self.beta > 0.0, "positive")?;
        check_range("gamma_mod", self.gamma_mod, self.gamma_mod > 0.0, "positive")?;
        check_range("p_k", self.p_k, self.p_k > 0.0 && self.p_k < 1.0, "in (0, 1)")?;
        check_range("p_d", self.p_d, (0.0..1.0).contains(&self.p_d), "in [0, 1)")?;
        check_range("chi_db", self.chi_db, self.chi_db >= 0.0, "nonnegative")?;
        if let Some(eta) = self.eta {
            check_range("eta", eta, eta > 0.0 && eta <= 1.0, "in (0, 1]")?;
        }
        check_range("xi", self.xi, self.xi >= 0.0, "nonnegative")?;
        check_range("f_ec", self.f_ec, self.f_ec >= 1.0, "at least 1")?;
        check_range(
            "n",
            self.n,
            self.n >= 1.0 && self.n.fract() == 0.0,
            "a positive integer",
        )?;
        check_range("eps_ec", self.eps_ec, self.eps_ec > 0.0 && self.eps_ec <= 1.0, "in (0, 1]")?;
        check_range("eps_pa", self.eps_pa, self.eps_pa > 0.0 && self.eps_pa <= 1.0, "in (0, 1]")?;
        check_range("alpha", self.alpha, self.alpha > 1.0 && self.alpha < 2.0, "in (1, 2)")?;
        check_range("n_max", self.n_max as f64, self.n_max >= 1, "at least 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn transmittance_from_loss() {
        let mut p = ProtocolParams {
            chi_db: 10.0,
            ..Default::default()
        };
        assert!((p.transmittance() - 0.1).abs() < 1e-15);
        p.chi_db = 30.0;
        assert!((p.transmittance() - 1e-3).abs() < 1e-18);
        p.eta = Some(0.5);
        assert_eq!(p.transmittance(), 0.5);
    }

    #[test]
    fn validation_names_the_field() {
        let p = ProtocolParams {
            p_k: 1.0,
            ..Default::default()
        };
        match p.validate() {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "p_k"),
            other => panic!("unexpected {other:?}"),
        }
        let p = ProtocolParams {
            n: 1.5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(ProtocolParams::default().validate().is_ok());
    }
}
