//! Run configuration: a TOML file with one section per pipeline layer.
//! Every key is optional and falls back to the documented default; ranged
//! keys are checked when the file is parsed.

use std::path::{Path, PathBuf};

use churnpool::eval::{ExperimentConfig, Protocol};
use churnpool::gbdt::GbdtConfig;
use churnpool::nuts::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    Simulate,
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub gbdt: GbdtSection,
    pub hierarchical: HierSection,
    pub conformal: ConformalSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub mode: DataMode,
    pub n_smes: usize,
    pub n_per: usize,
    pub n_features: usize,
    pub sigma_true: f64,
    pub mu_scale: f64,
    pub public_sources: usize,
    pub public_rows_per_source: usize,
    pub public_spread: f64,
    /// Harmonized CSV to resample from; required in resample mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_csv: Option<PathBuf>,
    pub label_column: String,
    /// Column naming each row's source in the resampled CSV, if any.
    pub tag_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtSection {
    pub iterations: usize,
    pub learning_rate: f64,
    pub tree_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
    pub subsample_ratio: f64,
    pub feature_subsample: f64,
    pub early_stopping_rounds: usize,
    pub validation_split: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierSection {
    pub tau: f64,
    pub prior_scaling: f64,
    pub mcmc_warmup_iterations: usize,
    pub mcmc_sampling_iterations: usize,
    pub number_of_chains: usize,
    pub target_accept_rate: f64,
    pub max_tree_depth: usize,
    pub divergence_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalSection {
    pub miscoverage_rate: f64,
    pub calibration_split: f64,
    pub credible_interval_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub folds: usize,
    /// Inverse L2 strength of the logistic baselines.
    pub c: f64,
    pub protocol: Protocol,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            data: DataSection::default(),
            gbdt: GbdtSection::default(),
            hierarchical: HierSection::default(),
            conformal: ConformalSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            mode: DataMode::Simulate,
            n_smes: 15,
            n_per: 100,
            n_features: 20,
            sigma_true: 0.5,
            mu_scale: 0.5,
            public_sources: 3,
            public_rows_per_source: 2000,
            public_spread: 0.3,
            source_csv: None,
            label_column: "target".into(),
            tag_column: "source".into(),
        }
    }
}

impl Default for GbdtSection {
    fn default() -> Self {
        let g = GbdtConfig::default();
        GbdtSection {
            iterations: g.iterations,
            learning_rate: g.learning_rate,
            tree_depth: g.max_depth,
            min_samples_leaf: g.min_samples_leaf,
            l2_regularization: g.l2_leaf,
            subsample_ratio: g.row_subsample,
            feature_subsample: g.feature_subsample,
            early_stopping_rounds: g.early_stopping_rounds,
            validation_split: 0.2,
        }
    }
}

impl Default for HierSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        HierSection {
            tau: 2.0,
            prior_scaling: 1.0,
            mcmc_warmup_iterations: s.warmup,
            mcmc_sampling_iterations: s.draws,
            number_of_chains: s.chains,
            target_accept_rate: s.target_accept,
            max_tree_depth: s.max_tree_depth,
            divergence_threshold: s.max_energy_error,
        }
    }
}

impl Default for ConformalSection {
    fn default() -> Self {
        ConformalSection {
            miscoverage_rate: 0.10,
            calibration_split: 0.20,
            credible_interval_mass: 0.90,
        }
    }
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            folds: 5,
            c: 1.0,
            protocol: Protocol::FitOnce,
        }
    }
}

fn in_range<T: PartialOrd + std::fmt::Display + Copy>(key: &str, v: T, lo: T, hi: T) -> CliResult<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key} = {v} is outside [{lo}, {hi}]")))
    }
}

fn positive(key: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key} must be positive, got {v}")))
    }
}

fn open_unit(key: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key} must lie in (0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        if d.n_smes == 0 || d.n_features == 0 {
            return Err(CliError::Config("data.n_smes and data.n_features must be positive".into()));
        }
        if d.n_per < 10 {
            return Err(CliError::Config(format!("data.n_per must be at least 10, got {}", d.n_per)));
        }
        if !(d.sigma_true >= 0.0 && d.mu_scale >= 0.0 && d.public_spread >= 0.0) {
            return Err(CliError::Config("data.sigma_true, mu_scale and public_spread must be non-negative".into()));
        }
        if d.public_sources == 0 || d.public_rows_per_source < 10 {
            return Err(CliError::Config("public corpus needs at least one source of 10 rows".into()));
        }
        if d.mode == DataMode::Resample && d.source_csv.is_none() {
            return Err(CliError::Config("resample mode needs data.source_csv".into()));
        }

        let g = &self.gbdt;
        if g.iterations == 0 || g.tree_depth == 0 || g.min_samples_leaf == 0 || g.early_stopping_rounds == 0 {
            return Err(CliError::Config("gbdt counts must be positive".into()));
        }
        positive("gbdt.learning_rate", g.learning_rate)?;
        if !(g.l2_regularization >= 0.0) {
            return Err(CliError::Config("gbdt.l2_regularization must be non-negative".into()));
        }
        in_range("gbdt.subsample_ratio", g.subsample_ratio, f64::MIN_POSITIVE, 1.0)?;
        in_range("gbdt.feature_subsample", g.feature_subsample, f64::MIN_POSITIVE, 1.0)?;
        open_unit("gbdt.validation_split", g.validation_split)?;

        let h = &self.hierarchical;
        in_range("hierarchical.tau", h.tau, 1.0, 5.0)?;
        in_range("hierarchical.prior_scaling", h.prior_scaling, 0.5, 2.0)?;
        in_range("hierarchical.mcmc_warmup_iterations", h.mcmc_warmup_iterations, 1000, 3000)?;
        in_range("hierarchical.mcmc_sampling_iterations", h.mcmc_sampling_iterations, 1000, 5000)?;
        in_range("hierarchical.number_of_chains", h.number_of_chains, 2, 8)?;
        in_range("hierarchical.target_accept_rate", h.target_accept_rate, 0.80, 0.95)?;
        if h.max_tree_depth == 0 {
            return Err(CliError::Config("hierarchical.max_tree_depth must be positive".into()));
        }
        positive("hierarchical.divergence_threshold", h.divergence_threshold)?;

        let c = &self.conformal;
        open_unit("conformal.miscoverage_rate", c.miscoverage_rate)?;
        in_range("conformal.miscoverage_rate", c.miscoverage_rate, 0.05, 0.20)?;
        in_range("conformal.calibration_split", c.calibration_split, 0.15, 0.30)?;
        open_unit("conformal.credible_interval_mass", c.credible_interval_mass)?;

        let e = &self.evaluate;
        if e.folds < 2 {
            return Err(CliError::Config(format!("evaluate.folds must be at least 2, got {}", e.folds)));
        }
        positive("evaluate.c", e.c)?;
        Ok(())
    }

    pub fn gbdt_config(&self) -> GbdtConfig {
        let g = &self.gbdt;
        GbdtConfig {
            iterations: g.iterations,
            learning_rate: g.learning_rate,
            max_depth: g.tree_depth,
            min_samples_leaf: g.min_samples_leaf,
            l2_leaf: g.l2_regularization,
            row_subsample: g.subsample_ratio,
            feature_subsample: g.feature_subsample,
            early_stopping_rounds: g.early_stopping_rounds,
            seed: self.seed,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let h = &self.hierarchical;
        SamplerConfig {
            chains: h.number_of_chains,
            warmup: h.mcmc_warmup_iterations,
            draws: h.mcmc_sampling_iterations,
            target_accept: h.target_accept_rate,
            max_tree_depth: h.max_tree_depth,
            max_energy_error: h.divergence_threshold,
            seed: self.seed,
            ..SamplerConfig::default()
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            folds: self.evaluate.folds,
            c: self.evaluate.c,
            tau: self.hierarchical.tau,
            alpha: self.conformal.miscoverage_rate,
            interval_mass: self.conformal.credible_interval_mass,
            sampler: self.sampler_config(),
            protocol: self.evaluate.protocol,
            seed: self.seed,
        }
    }
}
