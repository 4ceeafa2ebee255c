//! One function per subcommand. Every stage reads its inputs from, and
//! writes its artifacts under, the run directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use churnpool::conformal::{
    calibrate_pooled, conservative_adjust, nonconformity, predict_set, select_strategy, CalibrationResult,
    PredictionSet,
};
use churnpool::data::{
    generate_hierarchical_population, load_csv, make_synthetic_smes, sample_public_corpus, standardize,
    stratified_split, stratified_split_indices, write_csv, CsvOptions, Dataset, SMECollection, StandardizationStats,
    MANIFEST_FILE,
};
use churnpool::eval::{classification_metrics, run_experiment, ExperimentReport, MetricReport};
use churnpool::gbdt::{fit_gbdt_with_history, TreeEnsemble};
use churnpool::hier::{posterior_predict, HierData, HierHyper, HierTarget};
use churnpool::nuts::{sample, Diagnostics};
use churnpool::shap_prior::{extract_priors, prior_only_auc, PriorSpec};
use churnpool::trace::PosteriorTrace;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{DataMode, RunConfig};
use crate::error::{CliError, CliResult};

pub const MAX_RHAT: f64 = 1.01;
pub const MIN_ESS: f64 = 400.0;
/// Divergence rate above which the fit is called divergence-dominated.
pub const DIVERGENCE_ALARM: f64 = 0.01;

/// Artifact locations inside a run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self) -> PathBuf {
        self.stage("data").join(MANIFEST_FILE)
    }

    pub fn public(&self) -> PathBuf {
        self.stage("data").join("public.csv")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.stage("data").join("ground_truth.json")
    }

    pub fn model(&self) -> PathBuf {
        self.stage("pretrain").join("model.json")
    }

    pub fn standardization(&self) -> PathBuf {
        self.stage("pretrain").join("standardization.json")
    }

    pub fn pretrain_metrics(&self) -> PathBuf {
        self.stage("pretrain").join("metrics.json")
    }

    pub fn validation(&self) -> PathBuf {
        self.stage("pretrain").join("validation.csv")
    }

    pub fn prior(&self) -> PathBuf {
        self.stage("priors").join("prior.json")
    }

    pub fn prior_check(&self) -> PathBuf {
        self.stage("priors").join("prior_check.json")
    }

    pub fn trace(&self) -> PathBuf {
        self.stage("fit").join("trace.bin")
    }

    pub fn diagnostics(&self) -> PathBuf {
        self.stage("fit").join("diagnostics.json")
    }

    pub fn fit_status(&self) -> PathBuf {
        self.stage("fit").join("status.json")
    }

    pub fn holdout(&self) -> PathBuf {
        self.stage("fit").join("holdout.json")
    }

    pub fn calibration(&self) -> PathBuf {
        self.stage("calibrate").join("calibration.json")
    }

    pub fn predictions(&self) -> PathBuf {
        self.stage("predict").join("predictions.json")
    }

    pub fn report(&self) -> PathBuf {
        self.stage("evaluate").join("report.json")
    }

    pub fn evaluations(&self) -> PathBuf {
        self.stage("evaluate").join("evaluations.csv")
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Creates the stage directory, refusing to clobber `primary` without
/// `force`, and echoes the resolved config next to the artifacts.
fn begin_stage(layout: &Layout, stage: &str, primary: &Path, force: bool, config: &RunConfig) -> CliResult<()> {
    if primary.exists() && !force {
        return Err(CliError::Config(format!(
            "{} already exists (use --force to overwrite)",
            primary.display()
        )));
    }
    let dir = layout.stage(stage);
    fs::create_dir_all(&dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    write_text(&dir.join("run_config.toml"), &config.to_toml())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(data_err)?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn require(path: &Path, producer: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{} is missing; run `{producer}` first",
            path.display()
        )))
    }
}

// ---------------------------------------------------------------------------

pub fn gen_data(config: &RunConfig, layout: &Layout, force: bool) -> CliResult<()> {
    begin_stage(layout, "data", &layout.manifest(), force, config)?;
    let d = &config.data;
    let (collection, public) = match d.mode {
        DataMode::Simulate => {
            let (collection, truth) =
                generate_hierarchical_population(d.n_features, d.n_smes, d.n_per, d.mu_scale, d.sigma_true, config.seed)?;
            let public = sample_public_corpus(
                &truth.mu_true,
                d.public_spread,
                d.public_sources,
                d.public_rows_per_source,
                config.seed,
            )?;
            truth.save(layout.ground_truth())?;
            (collection, public)
        }
        DataMode::Resample => {
            let path = d.source_csv.as_ref().expect("validated");
            let options = CsvOptions {
                label_column: d.label_column.clone(),
                tag_column: Some(d.tag_column.clone()),
            };
            let source = load_csv(path, &options)?;
            let collection = make_synthetic_smes(&source, d.n_smes, d.n_per, config.seed)?;
            (collection, source)
        }
    };
    collection.save(layout.stage("data"), true)?;
    write_csv(&public, layout.public(), "target", "source")?;
    println!(
        "wrote {} SMEs x {} rows and a public corpus of {} rows to {}",
        collection.len(),
        d.n_per,
        public.n_rows(),
        layout.stage("data").display()
    );
    Ok(())
}

/// Validation metrics under their report labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainMetrics {
    #[serde(rename = "AUC-ROC")]
    pub auc: Option<f64>,
    #[serde(rename = "Accuracy")]
    pub accuracy: f64,
    #[serde(rename = "Precision")]
    pub precision: f64,
    #[serde(rename = "Recall")]
    pub recall: f64,
    #[serde(rename = "F1-Score")]
    pub f1: f64,
    #[serde(rename = "Log Loss")]
    pub log_loss: f64,
    pub n_validation: usize,
    pub n_trees: usize,
    pub best_iteration: usize,
    pub max_iterations: usize,
    pub stopped_early: bool,
}

impl PretrainMetrics {
    fn new(m: &MetricReport, n_trees: usize, best_iteration: usize, max_iterations: usize, stopped_early: bool) -> Self {
        PretrainMetrics {
            auc: m.auc,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            log_loss: m.log_loss,
            n_validation: m.n,
            n_trees,
            best_iteration,
            max_iterations,
            stopped_early,
        }
    }
}

pub fn pretrain(config: &RunConfig, layout: &Layout, force: bool) -> CliResult<()> {
    require(&layout.public(), "gen-data")?;
    begin_stage(layout, "pretrain", &layout.model(), force, config)?;
    let public = load_csv(layout.public(), &CsvOptions::default())?;
    if !public.has_both_classes() {
        return Err(CliError::Data("public corpus holds a single class".into()));
    }
    let (train, val) = stratified_split(&public, config.gbdt.validation_split, config.seed)?;
    let (train_s, stats) = standardize(&train)?;
    let val_s = stats.apply(&val)?;
    let gbdt = config.gbdt_config();
    let (model, history) = fit_gbdt_with_history(&train_s, &val_s, &gbdt)?;
    let probs = model.predict_proba_all(&val_s)?;
    let report = classification_metrics(&probs, val_s.labels(), 0.5)?;
    let metrics = PretrainMetrics::new(
        &report,
        model.trees.len(),
        history.best_iteration,
        gbdt.iterations,
        history.stopped_early,
    );

    model.save(layout.model())?;
    stats.save(layout.standardization())?;
    write_json(&layout.pretrain_metrics(), &metrics)?;
    write_csv(&val, layout.validation(), "target", "source")?;
    println!(
        "pretrained {} trees (best iteration {} of {}); validation AUC {}",
        model.trees.len(),
        history.best_iteration,
        gbdt.iterations,
        metrics.auc.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}

/// Sanity check written next to the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCheck {
    pub prior_only_auc: f64,
    pub draws: usize,
    pub n_holdout: usize,
}

pub const PRIOR_CHECK_DRAWS: usize = 200;

pub fn extract(config: &RunConfig, layout: &Layout, force: bool) -> CliResult<()> {
    for p in [layout.model(), layout.standardization(), layout.validation()] {
        require(&p, "pretrain")?;
    }
    begin_stage(layout, "priors", &layout.prior(), force, config)?;
    let model = TreeEnsemble::load(layout.model())?;
    let stats = StandardizationStats::load(layout.standardization())?;
    let val = load_csv(layout.validation(), &CsvOptions::default())?;
    if val.source_tags().is_none() {
        warn!("validation data carries no source tags: prior variances fall back to a single-tag estimate");
        eprintln!("WARNING: no source tags found; using the single-tag prior variance fallback");
    }
    let val_s = stats.apply(&val)?;
    let prior = extract_priors(&model, &val_s, &stats, config.hierarchical.prior_scaling)?;
    prior.save(layout.prior())?;
    let check = PriorCheck {
        prior_only_auc: prior_only_auc(&prior, &val, PRIOR_CHECK_DRAWS, config.seed)?,
        draws: PRIOR_CHECK_DRAWS,
        n_holdout: val.n_rows(),
    };
    write_json(&layout.prior_check(), &check)?;
    println!(
        "prior over {} features (lambda = {}); prior-only AUC {:.4} on {} held-out rows",
        prior.dim(),
        prior.lambda,
        check.prior_only_auc,
        check.n_holdout
    );
    Ok(())
}

/// Outcome of the convergence gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStatus {
    /// `converged` or `failed-diagnostics`.
    pub marker: String,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess_bulk: f64,
    pub min_ess_tail: f64,
    pub divergences: usize,
    pub divergence_rate: f64,
    pub advice: Vec<String>,
}

impl FitStatus {
    pub fn from_diagnostics(d: &Diagnostics, target_accept: f64) -> Self {
        let converged = d.converged(MAX_RHAT, MIN_ESS);
        let mut advice = Vec::new();
        if d.divergence_rate() > DIVERGENCE_ALARM {
            let next = if target_accept < 0.95 { 0.95 } else { 0.99 };
            advice.push(format!(
                "{:.1}% of transitions diverged: increase target_accept_rate to {next}",
                100.0 * d.divergence_rate()
            ));
        }
        if !converged {
            advice.push(format!(
                "R-hat must be below {MAX_RHAT} and ESS above {MIN_ESS} everywhere: increase mcmc_warmup_iterations or mcmc_sampling_iterations"
            ));
        }
        FitStatus {
            marker: if converged { "converged" } else { "failed-diagnostics" }.into(),
            converged,
            max_rhat: d.max_rhat(),
            min_ess_bulk: d.min_ess_bulk(),
            min_ess_tail: d.min_ess_tail(),
            divergences: d.n_divergent,
            divergence_rate: d.divergence_rate(),
            advice,
        }
    }
}

/// Per-SME row indices held out of the fit for calibration.
fn holdout_indices(collection: &SMECollection, fraction: f64, seed: u64) -> CliResult<Vec<Vec<usize>>> {
    collection
        .smes()
        .iter()
        .zip(collection.ids())
        .enumerate()
        .map(|(j, (d, id))| {
            stratified_split_indices(d, fraction, seed.wrapping_add(j as u64))
                .map(|(_, cal)| cal)
                .map_err(|e| CliError::Data(format!("SME {id}: {e}")))
        })
        .collect()
}

fn fit_rows(collection: &SMECollection, holdout: &[Vec<usize>]) -> CliResult<SMECollection> {
    let smes = collection
        .smes()
        .iter()
        .zip(holdout)
        .map(|(d, cal)| d.subset(&churnpool::data::complement(d.n_rows(), cal)))
        .collect();
    Ok(SMECollection::new(smes, collection.ids().to_vec())?)
}

pub fn fit(config: &RunConfig, layout: &Layout, force: bool) -> CliResult<()> {
    require(&layout.manifest(), "gen-data")?;
    require(&layout.prior(), "extract-priors")?;
    begin_stage(layout, "fit", &layout.trace(), force, config)?;
    let collection = SMECollection::load(layout.manifest())?;
    let prior = PriorSpec::load(layout.prior())?;
    if prior.feature_names.as_slice() != collection.feature_names() {
        return Err(CliError::Data("prior and SME data disagree on features".into()));
    }
    let holdout = holdout_indices(&collection, config.conformal.calibration_split, config.seed)?;
    let train = fit_rows(&collection, &holdout)?;
    let data = HierData::from_collection(&train)?;
    let hyper = HierHyper::from_prior(&prior, config.hierarchical.tau)?;
    let target = HierTarget::new(data, hyper)?;
    let sampler = config.sampler_config();
    info!(
        "sampling {} chains x ({} warmup + {} draws) over {} parameters",
        sampler.chains,
        sampler.warmup,
        sampler.draws,
        target.param_names().len()
    );
    let (trace, diagnostics) = sample(&target, &target.initial_point(), target.param_names(), &sampler)?;
    trace.save(layout.trace())?;
    diagnostics.save(layout.diagnostics())?;
    write_json(&layout.holdout(), &holdout)?;
    let status = FitStatus::from_diagnostics(&diagnostics, sampler.target_accept);
    write_json(&layout.fit_status(), &status)?;
    println!(
        "{}: max R-hat {:.4}, min bulk ESS {:.0}, min tail ESS {:.0}, {} divergences",
        status.marker, status.max_rhat, status.min_ess_bulk, status.min_ess_tail, status.divergences
    );
    if status.converged {
        Ok(())
    } else {
        Err(CliError::Diagnostic(format!(
            "fit did not pass the convergence gate; {}",
            status.advice.join("; ")
        )))
    }
}

fn load_fit(layout: &Layout) -> CliResult<(SMECollection, PriorSpec, PosteriorTrace)> {
    require(&layout.trace(), "fit")?;
    let collection = SMECollection::load(layout.manifest())?;
    let prior = PriorSpec::load(layout.prior())?;
    let trace = PosteriorTrace::load(layout.trace())?;
    if let Ok(status) = read_json::<FitStatus>(&layout.fit_status()) {
        if !status.converged {
            warn!("the posterior trace failed its convergence checks; downstream results are unreliable");
        }
    }
    Ok((collection, prior, trace))
}

fn with_intercept(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(1.0);
    v
}

pub fn calibrate(config: &RunConfig, layout: &Layout, force: bool) -> CliResult<()> {
    let (collection, _, trace) = load_fit(layout)?;
    begin_stage(layout, "calibrate", &layout.calibration(), force, config)?;
    let holdout: Vec<Vec<usize>> = read_json(&layout.holdout())?;
    if holdout.len() != collection.len() {
        return Err(CliError::Data("holdout indices do not match the SME collection".into()));
    }
    let mass = config.conformal.credible_interval_mass;
    let mut scores = Vec::with_capacity(collection.len());
    for (j, rows) in holdout.iter().enumerate() {
        let d = collection.sme(j);
        let mut s = Vec::with_capacity(rows.len());
        for &i in rows {
            let pred = posterior_predict(&trace, &with_intercept(d.row(i)), j, mass)?;
            s.push(nonconformity(d.label(i), pred.mean));
        }
        scores.push(s);
    }
    let min_rows = collection.smes().iter().map(Dataset::n_rows).min().unwrap_or(0);
    let choice = select_strategy(collection.len(), min_rows);
    let mut result = calibrate_pooled(&scores, config.conformal.miscoverage_rate)?;
    // Held-out scores are pooled in every case; the label records the plan.
    result.strategy = choice.strategy;
    if let Some(inflation) = choice.inflation {
        result = conservative_adjust(&result, inflation)?;
    }
    result.save(layout.calibration())?;
    println!(
        "q_hat {:.4} from {} held-out scores (alpha = {}, {} strategy{})",
        result.q_hat,
        result.n_cal,
        result.alpha,
        result.strategy,
        if result.conservative { ", inflated" } else { "" }
    );
    Ok(())
}

/// One customer's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sme_id: String,
    pub row: usize,
    pub probability: f64,
    pub prediction: u8,
    pub credible_interval: [f64; 2],
    pub conformal_set: PredictionSet,
    pub uncertainty: String,
    pub action_tier: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl PredictionRow {
    pub fn new(sme_id: &str, row: usize, probability: f64, interval: [f64; 2], q_hat: f64, label: Option<u8>) -> Self {
        let set = predict_set(probability, q_hat);
        PredictionRow {
            sme_id: sme_id.to_string(),
            row,
            probability,
            prediction: u8::from(probability >= 0.5),
            credible_interval: interval,
            conformal_set: set,
            uncertainty: set.uncertainty().into(),
            action_tier: set.action_tier().into(),
            label,
        }
    }
}

struct Customer {
    sme: usize,
    row: usize,
    x: Vec<f64>,
    label: Option<u8>,
}

/// Reads customers to score. Features are matched by name; an `sme_id`
/// column (or `default_sme`) routes each row, and a label column is kept
/// when present.
fn read_customers(
    path: &Path,
    collection: &SMECollection,
    default_sme: Option<&str>,
    label_column: &str,
) -> CliResult<Vec<Customer>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers().map_err(data_err)?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let features = collection
        .feature_names()
        .iter()
        .map(|f| col(f).ok_or_else(|| CliError::Data(format!("input lacks feature column `{f}`"))))
        .collect::<CliResult<Vec<_>>>()?;
    let sme_col = col("sme_id");
    let label_col = col(label_column);
    let index: HashMap<&str, usize> = collection.ids().iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| CliError::Data(format!("unknown SME id `{id}`")))
    };
    let fallback = default_sme.map(lookup).transpose()?;

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(data_err)?;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let sme = match sme_col {
            Some(c) => lookup(cell(c))?,
            None => fallback.ok_or_else(|| CliError::Data("input has no sme_id column; pass --sme".into()))?,
        };
        let x = features
            .iter()
            .map(|&c| {
                cell(c)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Data(format!("row {}: bad value `{}`", row + 1, cell(c))))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let label = match label_col.map(cell) {
            Some("0") => Some(0),
            Some("1") => Some(1),
            _ => None,
        };
        out.push(Customer { sme, row, x, label });
    }
    Ok(out)
}

pub fn predict(
    config: &RunConfig,
    layout: &Layout,
    force: bool,
    input: Option<&Path>,
    sme: Option<&str>,
) -> CliResult<()> {
    let (collection, _, trace) = load_fit(layout)?;
    require(&layout.calibration(), "calibrate")?;
    begin_stage(layout, "predict", &layout.predictions(), force, config)?;
    let calibration = CalibrationResult::load(layout.calibration())?;
    let customers = match input {
        Some(path) => read_customers(path, &collection, sme, &config.data.label_column)?,
        None => collection
            .smes()
            .iter()
            .enumerate()
            .flat_map(|(j, d)| {
                (0..d.n_rows()).map(move |i| Customer {
                    sme: j,
                    row: i,
                    x: d.row(i).to_vec(),
                    label: Some(d.label(i)),
                })
            })
            .collect(),
    };
    let mass = config.conformal.credible_interval_mass;
    let rows = customers
        .iter()
        .map(|c| {
            let pred = posterior_predict(&trace, &with_intercept(&c.x), c.sme, mass)?;
            Ok(PredictionRow::new(
                &collection.ids()[c.sme],
                c.row,
                pred.mean,
                [pred.lower, pred.upper],
                calibration.q_hat,
                c.label,
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_json(&layout.predictions(), &rows)?;
    let singletons = rows.iter().filter(|r| r.conformal_set.size() == 1).count();
    println!(
        "scored {} customers; {} singleton sets; written to {}",
        rows.len(),
        singletons,
        layout.predictions().display()
    );
    Ok(())
}

pub fn evaluate(config: &RunConfig, layout: &Layout, force: bool) -> CliResult<()> {
    require(&layout.manifest(), "gen-data")?;
    require(&layout.prior(), "extract-priors")?;
    begin_stage(layout, "evaluate", &layout.report(), force, config)?;
    let collection = SMECollection::load(layout.manifest())?;
    let prior = PriorSpec::load(layout.prior())?;
    let report: ExperimentReport = run_experiment(&collection, &prior, &config.experiment_config())?;
    report.save_json(layout.report())?;
    report.write_csv(layout.evaluations())?;
    for s in &report.summaries {
        println!(
            "{:<13} AUC {:.4} +/- {:.4} over {} evaluations ({} flagged)",
            s.method, s.auc_mean, s.auc_std, s.n_evaluations, s.n_flagged
        );
    }
    for c in &report.comparisons {
        println!(
            "{} - {}: {:+.4} (t = {:.2}, p = {:.3e}, d = {:.2})",
            c.a, c.b, c.mean_difference, c.t, c.p, c.cohens_d
        );
    }
    if let Some(c) = &report.conformal {
        println!(
            "conformal coverage {:.4} over {} points ({:.2}% empty sets)",
            c.audit.coverage,
            c.audit.n,
            100.0 * c.audit.empty_rate
        );
    }
    for f in &report.failures {
        warn!("{f}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagnostics(rhat: f64, ess: f64, divergent: usize) -> Diagnostics {
        Diagnostics {
            param_names: vec!["a".into(), "b".into()],
            rhat: vec![1.0, rhat],
            ess_bulk: vec![2000.0, ess],
            ess_tail: vec![2000.0, ess],
            n_divergent: divergent,
            mean_accept: 0.9,
            n_draws: 8000,
        }
    }

    #[test]
    fn gate_passes_healthy_fits() {
        let s = FitStatus::from_diagnostics(&diagnostics(1.005, 900.0, 0), 0.9);
        assert!(s.converged);
        assert_eq!(s.marker, "converged");
        assert!(s.advice.is_empty());
    }

    #[test]
    fn gate_rejects_high_rhat_or_low_ess() {
        for d in [diagnostics(1.02, 900.0, 0), diagnostics(1.0, 350.0, 0)] {
            let s = FitStatus::from_diagnostics(&d, 0.9);
            assert!(!s.converged);
            assert_eq!(s.marker, "failed-diagnostics");
        }
    }

    #[test]
    fn divergence_dominated_fits_get_actionable_advice() {
        let s = FitStatus::from_diagnostics(&diagnostics(1.0, 900.0, 400), 0.9);
        assert!(s.advice[0].contains("increase target_accept_rate to 0.95"), "{:?}", s.advice);
    }

    #[test]
    fn confident_churner_row() {
        let r = PredictionRow::new("sme_00", 3, 0.73, [0.6, 0.85], 0.3, None);
        assert_eq!(r.conformal_set, PredictionSet::One);
        assert_eq!(r.prediction, 1);
        assert_eq!(r.uncertainty, "low");
        assert_eq!(r.action_tier, "high-risk churner");
        let json = serde_json::to_value(&r).unwrap();
        for key in ["probability", "credible_interval", "conformal_set"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["conformal_set"], serde_json::json!([1]));
    }
}
