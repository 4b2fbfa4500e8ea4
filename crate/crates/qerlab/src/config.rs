//! TOML run configuration shared by all CLI subcommands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, Hypersurface};
use crate::symbols::Symbol;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config values: {}", keys.join(", "))]
    Schema { keys: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsParams {
    /// Flow-time horizon for orbit scans.
    pub t_max: f64,
    /// Maximum return index examined by the symmetry indicator.
    pub j_max: usize,
    /// Phase-space match tolerance of the symmetry indicator.
    pub tol_match: f64,
    /// Monte Carlo sample count for the symmetry measure.
    pub n_samples: usize,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            t_max: 50.0,
            j_max: 6,
            tol_match: 1e-6,
            n_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    /// Grid spacing.
    pub h: f64,
    /// Number of eigenpairs.
    pub m: usize,
    /// Cut-cell boundary correction for curved walls.
    #[serde(default)]
    pub boundary_correction: bool,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams {
            h: 1.0 / 64.0,
            m: 100,
            boundary_correction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestrictionParams {
    /// Endpoint taper width as a fraction of the curve length per side.
    pub taper_fraction: f64,
    /// Fixed node count; omitted means the per-wavelength policy.
    #[serde(default)]
    pub n_s: Option<usize>,
}

impl Default for RestrictionParams {
    fn default() -> Self {
        RestrictionParams {
            taper_fraction: 0.05,
            n_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub hypersurface: Hypersurface,
    /// Optional second curve for the side-by-side dichotomy report; the main
    /// `hypersurface` fills the generic slot.
    #[serde(default)]
    pub hypersurface_symmetric: Option<Hypersurface>,
    pub symbol: Symbol,
    /// Mandatory for reproducibility; `--seed` overrides it.
    pub seed: u64,
    #[serde(default)]
    pub dynamics: DynamicsParams,
    #[serde(default)]
    pub spectral: SpectralParams,
    #[serde(default)]
    pub restriction: RestrictionParams,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::from_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut keys = Vec::new();
        if let Domain::Stadium {
            half_length,
            cap_radius,
        } = self.domain
        {
            if !(half_length > 0.0 && cap_radius > 0.0) {
                keys.push("domain".to_string());
            }
        }
        if self.hypersurface.validate().is_err() {
            keys.push("hypersurface".to_string());
        }
        if let Some(h) = &self.hypersurface_symmetric {
            if h.validate().is_err() {
                keys.push("hypersurface_symmetric".to_string());
            }
        }
        if !(self.dynamics.t_max > 0.0) {
            keys.push("dynamics.t_max".to_string());
        }
        if self.dynamics.j_max == 0 {
            keys.push("dynamics.j_max".to_string());
        }
        if !(self.dynamics.tol_match > 0.0) {
            keys.push("dynamics.tol_match".to_string());
        }
        if self.dynamics.n_samples < 100 {
            keys.push("dynamics.n_samples".to_string());
        }
        if !(self.spectral.h > 0.0 && self.spectral.h < 1.0) {
            keys.push("spectral.h".to_string());
        }
        if self.spectral.m == 0 {
            keys.push("spectral.m".to_string());
        }
        if !(0.0..=0.25).contains(&self.restriction.taper_fraction) {
            keys.push("restriction.taper_fraction".to_string());
        }
        if let Some(n) = self.restriction.n_s {
            if n < 16 {
                keys.push("restriction.n_s".to_string());
            }
        }
        if keys.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Schema { keys })
        }
    }

    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 42

[domain]
Stadium = { half_length = 1.0, cap_radius = 1.0 }

[hypersurface]
Segment = { p0 = [0.2, -0.5], p1 = [0.5, 0.7] }

[symbol]
Multiplication = { v = { Constant = 1.0 } }

[dynamics]
t_max = 40.0
j_max = 5
tol_match = 1e-6
n_samples = 500

[spectral]
h = 0.015625
m = 300

[restriction]
taper_fraction = 0.05
"#;

    #[test]
    fn example_config_round_trips() {
        let cfg = RunConfig::from_str(EXAMPLE).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.spectral.m, 300);
        let again = RunConfig::from_str(&cfg.canonical_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn schema_errors_name_the_offending_keys() {
        let mut cfg = RunConfig::from_str(EXAMPLE).unwrap();
        cfg.dynamics.t_max = -1.0;
        cfg.spectral.m = 0;
        match cfg.validate() {
            Err(ConfigError::Schema { keys }) => {
                assert!(keys.contains(&"dynamics.t_max".to_string()));
                assert!(keys.contains(&"spectral.m".to_string()));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{EXAMPLE}\n[bogus]\nx = 1\n");
        assert!(RunConfig::from_str(&text).is_err());
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = EXAMPLE.replace("seed = 42", "");
        assert!(RunConfig::from_str(&text).is_err());
    }
}
