use crate::error::CliError;
use mghs_core::selection::SelectionConfig;
use mghs_core::simulate::ScenarioKind;
use mghs_core::{ChainConfig, SelectionMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Effective run configuration. Precedence: flags > config file > defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub chains: usize,
    pub burnin: usize,
    pub iters: usize,
    pub thin: usize,
    pub threads: usize,
    pub freeze_r: bool,
    /// Centre and scale every input column before fitting.
    pub standardize: bool,
    pub select_mode: SelectionMode,
    pub a: f64,
    pub b: f64,
    pub hastings_correction: bool,
    pub out_dir: PathBuf,
    pub scenario: ScenarioKind,
    pub p: usize,
    pub n: usize,
    pub groups: usize,
    /// Draws per cell for `g3p-check`.
    pub g3p_draws: usize,
}

impl Default for Config {
    fn default() -> Self {
        let sel = SelectionConfig::default();
        let chain = ChainConfig::default();
        Self {
            seed: 0,
            chains: 1,
            burnin: chain.burnin,
            iters: chain.iterations,
            thin: chain.thin,
            threads: 1,
            freeze_r: false,
            standardize: true,
            select_mode: sel.mode,
            a: sel.a,
            b: sel.b,
            hastings_correction: sel.hastings_correction,
            out_dir: PathBuf::from("mghs-out"),
            scenario: ScenarioKind::Coupled,
            p: 20,
            n: 50,
            groups: 4,
            g3p_draws: 20_000,
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub burnin: Option<usize>,
    pub iters: Option<usize>,
    pub thin: Option<usize>,
    pub threads: Option<usize>,
    pub freeze_r: bool,
    pub no_standardize: bool,
    pub select_mode: Option<SelectionMode>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub hastings_correction: bool,
    pub out_dir: Option<PathBuf>,
    pub scenario: Option<ScenarioKind>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub groups: Option<usize>,
    pub g3p_draws: Option<usize>,
}

impl Config {
    /// Parses TOML text, telling unknown keys apart from type mismatches.
    pub fn from_toml(text: &str, source: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::ConfigType {
            source: source.to_string(),
            message: e.message().to_string(),
        })?;
        let known = toml::Table::try_from(Config::default()).expect("default config serializes");
        if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(CliError::UnknownKey {
                source: source.to_string(),
                key: key.clone(),
            });
        }
        toml::from_str(text).map_err(|e: toml::de::Error| CliError::ConfigType {
            source: source.to_string(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = o.$f.clone() { self.$f = v; })*};
        }
        set!(seed, chains, burnin, iters, thin, threads, select_mode, a, b, out_dir, scenario, p, n, groups, g3p_draws);
        self.freeze_r |= o.freeze_r;
        self.hastings_correction |= o.hastings_correction;
        if o.no_standardize {
            self.standardize = false;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Invalid(m.to_string()));
        if self.chains < 1 {
            return bad("chains must be ≥ 1");
        }
        if self.iters < 1 || self.thin < 1 {
            return bad("iters and thin must be ≥ 1");
        }
        if self.threads < 1 {
            return bad("threads must be ≥ 1");
        }
        if self.g3p_draws < 100 {
            return bad("g3p_draws must be ≥ 100");
        }
        self.selection().validate().map_err(|e| CliError::Invalid(e.to_string()))
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            a: self.a,
            b: self.b,
            mode: self.select_mode,
            hastings_correction: self.hastings_correction,
            ..SelectionConfig::default()
        }
    }

    pub fn chain(&self, chain: u64) -> ChainConfig {
        ChainConfig {
            burnin: self.burnin,
            iterations: self.iters,
            thin: self.thin,
            seed: self.seed,
            chain,
            freeze_r_identity: self.freeze_r,
            record_kappa: true,
            ..ChainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library_configs() {
        let c = Config::default();
        assert_eq!((c.a, c.b), (30.0, 25.0));
        assert_eq!((c.burnin, c.iters), (5000, 10000));
    }

    #[test]
    fn toml_round_trip() {
        let c = Config {
            seed: 9,
            select_mode: SelectionMode::Mpm,
            scenario: ScenarioKind::P2020,
            ..Config::default()
        };
        assert_eq!(Config::from_toml(&c.to_toml(), "x").unwrap(), c);
    }

    #[test]
    fn unknown_key_and_type_mismatch_differ() {
        assert!(matches!(Config::from_toml("sed = 1", "x"), Err(CliError::UnknownKey { .. })));
        assert!(matches!(Config::from_toml("seed = \"one\"", "x"), Err(CliError::ConfigType { .. })));
    }

    #[test]
    fn flags_beat_file() {
        let file = Config::from_toml("seed = 4\nchains = 3", "x").unwrap();
        let c = file.apply(&Overrides {
            seed: Some(7),
            no_standardize: true,
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.chains, c.standardize), (7, 3, false));
    }
}
