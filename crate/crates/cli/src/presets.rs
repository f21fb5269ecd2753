//! Built-in figure sweeps. Each preset is a shared config plus one series
//! value per output file.

use toml::Value;

use crate::config::{apply_override, parse_table, ConfigError, SweepConfig};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    common: &'static str,
    series_key: &'static str,
    series: &'static [(f64, &'static str)],
}

const COMMON: &str = "f_ec = 1.1\nxi = 0.005\neps_ec = 1e-11\neps_pa = 9e-11\n";

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "fig1",
        description: "rate vs loss for n = 1e5..1e8, p_d = 0, beta, p_k and alpha optimized",
        common: "p_d = 0.0\nbeta = 0.45\np_k = 0.96\n\
                 sweep_variable = \"chi_db\"\ngrid = [0, 5, 10, 15, 20, 25, 30, 35]\n\
                 optimize = [\"alpha\", \"beta\", \"p_k\"]\n",
        series_key: "n",
        series: &[(1e8, "1e8"), (1e7, "1e7"), (1e6, "1e6"), (1e5, "1e5")],
    },
    Preset {
        name: "fig2",
        description: "rate vs loss for p_d = 0..1e-4 at n = 1e8, beta, p_k and alpha optimized",
        common: "n = 1e8\nbeta = 0.45\np_k = 0.96\n\
                 sweep_variable = \"chi_db\"\ngrid = [0, 5, 10, 15, 20, 25, 30, 35]\n\
                 optimize = [\"alpha\", \"beta\", \"p_k\"]\n",
        series_key: "p_d",
        series: &[(0.0, "0"), (1e-6, "1e-6"), (1e-5, "1e-5"), (1e-4, "1e-4")],
    },
    Preset {
        name: "fig3",
        description: "rate vs alpha at 10 dB, beta = 0.45, p_k = 0.96, p_d = 0, n = 1e6..1e9",
        common: "chi_db = 10.0\np_d = 0.0\nbeta = 0.45\np_k = 0.96\n\
                 sweep_variable = \"alpha\"\n\
                 grid = [1.00001, 1.0000316227766017, 1.0001, 1.0003162277660168, 1.001, \
                 1.0031622776601684, 1.01, 1.0316227766016838, 1.1, 1.316227766016838, 1.5]\n\
                 optimize = []\n",
        series_key: "n",
        series: &[(1e9, "1e9"), (1e8, "1e8"), (1e7, "1e7"), (1e6, "1e6")],
    },
    Preset {
        name: "fig4",
        description: "rate vs loss for gamma_mod = 1..1.2, beta = 0.45, p_d = 1e-5, n = 1e7, p_k and alpha optimized",
        common: "n = 1e7\nbeta = 0.45\np_d = 1e-5\np_k = 0.96\n\
                 sweep_variable = \"chi_db\"\ngrid = [0, 5, 10, 15, 20, 25]\n\
                 optimize = [\"alpha\", \"p_k\"]\n",
        series_key: "gamma_mod",
        series: &[(1.0, "1"), (1.1, "1.1"), (1.15, "1.15"), (1.2, "1.2")],
    },
];

pub fn preset(name: &str) -> Result<&'static Preset, ConfigError> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
}

impl Preset {
    pub fn series_key(&self) -> &'static str {
        self.series_key
    }

    pub fn series_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.series.iter().map(|s| s.0)
    }

    /// One resolved config per series, with `overrides` (`key=value`)
    /// applied last.
    pub fn configs(&self, overrides: &[String]) -> Result<Vec<SweepConfig>, ConfigError> {
        self.series
            .iter()
            .map(|&(value, label)| {
                let text = format!("{COMMON}{}", self.common);
                let mut table = parse_table(&text)?;
                table.insert(self.series_key.to_string(), Value::Float(value));
                table.insert(
                    "output_path".into(),
                    format!("{}_{}{}.csv", self.name, self.series_key, label).into(),
                );
                for o in overrides {
                    apply_override(&mut table, o)?;
                }
                SweepConfig::from_table(table, &text)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for p in &PRESETS {
            let configs = p.configs(&[]).unwrap();
            assert_eq!(configs.len(), 4, "{}", p.name);
            for c in configs {
                assert!(!c.points().is_empty());
            }
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("fig9"), Err(ConfigError::UnknownPreset(_))));
    }
}
