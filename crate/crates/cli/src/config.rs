//! The `--config` file: one optional TOML table per pipeline stage.

use std::path::Path;

use anyhow::{Context, Result};
use mimic::arena::ArenaConfig;
use mimic::distill::{BootstrapConfig, DistillConfig};
use mimic::env::SchemeConfig;
use mimic::gateway::SessionConfig;
use mimic::markov::LookupConfig;
use mimic::planner::{EsConfig, Weights, DEFAULT_NODE_CUTOFF};
use mimic::style::{GramMode, Metric};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub max_order: usize,
    pub scheme: SchemeConfig,
    pub lookup: LookupConfig,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            max_order: 3,
            scheme: SchemeConfig::default(),
            lookup: LookupConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleSection {
    pub lambda: f64,
    pub max_order: usize,
    pub metric: Metric,
    /// Quantization level of the gram elements; the finest when absent.
    pub level: Option<usize>,
    pub grams: GramMode,
}

impl Default for StyleSection {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            max_order: 3,
            metric: Metric::Jsd,
            level: None,
            grams: GramMode::Actions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub weights: Weights,
    pub node_cutoff: usize,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            node_cutoff: DEFAULT_NODE_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub arena: ArenaConfig,
    pub ensemble: EnsembleSection,
    pub bootstrap: BootstrapConfig,
    pub distill: DistillConfig,
    pub style: StyleSection,
    pub plan: PlanSection,
    pub es: EsConfig,
    pub session: SessionConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.arena.validate().context("invalid [arena] table")?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(toml::from_str::<Config>("").unwrap(), Config::default());
    }

    #[test]
    fn partial_tables_fill_in_defaults() {
        let cfg: Config = toml::from_str(
            "[ensemble]\nmax_order = 2\n[ensemble.lookup]\nscan = \"level-major\"\n[es]\niterations = 5\n[style]\nmetric = \"hellinger\"\n",
        )
        .unwrap();
        assert_eq!(cfg.ensemble.max_order, 2);
        assert_eq!(cfg.ensemble.lookup.scan, mimic::markov::ScanOrder::LevelMajor);
        assert_eq!(cfg.es.iterations, 5);
        assert_eq!(cfg.es.population, EsConfig::default().population);
        assert_eq!(cfg.style.metric, Metric::Hellinger);
    }

    #[test]
    fn unknown_tables_are_rejected() {
        assert!(toml::from_str::<Config>("[arenna]\nwidth = 3\n").is_err());
    }
}
