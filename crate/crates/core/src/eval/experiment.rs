//! Cross-validated comparison of no pooling, complete pooling and the
//! hierarchical model, with a conformal audit of the hierarchical
//! predictions.
//!
//! Under [`Protocol::FitOnce`] the hierarchical model is sampled once on
//! every row and then scored on each test fold, so test rows are part of
//! its fit. [`Protocol::RefitPerFold`] refits it on the training rows of
//! each fold index and gives the leakage-free number.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::conformal::{
    calibrate_pooled, conservative_adjust, coverage_audit, nonconformity, predict_set, select_strategy,
    CalibrationResult, CoverageReport, PredictionSet,
};
use crate::data::{complement, read_json, stratified_kfold_indices, write_json, Dataset, SMECollection};
use crate::error::{validation, Error, Result};
use crate::hier::{predict_with_draws, sme_coefficient_draws, HierData, HierHyper, HierTarget};
use crate::math::{mean, sample_variance};
use crate::nuts::{sample, Diagnostics, SamplerConfig};
use crate::shap_prior::PriorSpec;

use super::logreg::fit_logreg_l2;
use super::metrics::{classification_metrics, MetricReport};
use super::stats::{cohens_d_paired, paired_t_test};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    FitOnce,
    RefitPerFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hierarchical,
    Independent,
    Pooled,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hierarchical, Method::Independent, Method::Pooled];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Hierarchical => "hierarchical",
            Method::Independent => "independent",
            Method::Pooled => "pooled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub folds: usize,
    /// Inverse L2 strength of the logistic baselines.
    pub c: f64,
    pub tau: f64,
    pub alpha: f64,
    pub interval_mass: f64,
    pub sampler: SamplerConfig,
    pub protocol: Protocol,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 5,
            c: 1.0,
            tau: 2.0,
            alpha: 0.10,
            interval_mass: 0.90,
            sampler: SamplerConfig::default(),
            protocol: Protocol::FitOnce,
            seed: 42,
        }
    }
}

/// One (SME, fold, method) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub sme: usize,
    pub sme_id: String,
    pub fold: usize,
    pub method: Method,
    pub n_test: usize,
    pub metrics: Option<MetricReport>,
    /// Why the row is excluded from aggregates, if it is.
    pub flag: Option<String>,
}

impl EvaluationRow {
    pub fn auc(&self) -> Option<f64> {
        if self.flag.is_some() {
            return None;
        }
        self.metrics.as_ref().and_then(|m| m.auc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_evaluations: usize,
    pub n_flagged: usize,
    #[serde(with = "crate::json_float")]
    pub auc_mean: f64,
    #[serde(with = "crate::json_float")]
    pub auc_std: f64,
    #[serde(with = "crate::json_float")]
    pub accuracy_mean: f64,
    #[serde(with = "crate::json_float")]
    pub precision_mean: f64,
    #[serde(with = "crate::json_float")]
    pub recall_mean: f64,
    #[serde(with = "crate::json_float")]
    pub f1_mean: f64,
    #[serde(with = "crate::json_float")]
    pub log_loss_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: Method,
    pub b: Method,
    pub n: usize,
    #[serde(with = "crate::json_float")]
    pub mean_difference: f64,
    #[serde(with = "crate::json_float")]
    pub t: f64,
    #[serde(with = "crate::json_float")]
    pub df: f64,
    #[serde(with = "crate::json_float")]
    pub p: f64,
    #[serde(with = "crate::json_float")]
    pub cohens_d: f64,
}

/// Convergence summary of one hierarchical fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    #[serde(rename = "Gelman-Rubin R-hat (mean)", with = "crate::json_float")]
    pub rhat_mean: f64,
    #[serde(rename = "Gelman-Rubin R-hat (max)", with = "crate::json_float")]
    pub rhat_max: f64,
    #[serde(rename = "ESS Bulk (mean)", with = "crate::json_float")]
    pub ess_bulk_mean: f64,
    #[serde(rename = "ESS Tail (mean)", with = "crate::json_float")]
    pub ess_tail_mean: f64,
    #[serde(rename = "ESS Bulk (min)", with = "crate::json_float")]
    pub ess_bulk_min: f64,
    #[serde(rename = "ESS Tail (min)", with = "crate::json_float")]
    pub ess_tail_min: f64,
    #[serde(rename = "Divergences")]
    pub divergences: usize,
    #[serde(with = "crate::json_float")]
    pub mean_accept: f64,
    pub converged: bool,
}

impl DiagnosticsSummary {
    pub fn from_diagnostics(d: &Diagnostics) -> Self {
        DiagnosticsSummary {
            rhat_mean: mean(&d.rhat),
            rhat_max: d.max_rhat(),
            ess_bulk_mean: mean(&d.ess_bulk),
            ess_tail_mean: mean(&d.ess_tail),
            ess_bulk_min: d.min_ess_bulk(),
            ess_tail_min: d.min_ess_tail(),
            divergences: d.n_divergent,
            mean_accept: d.mean_accept,
            converged: d.converged(1.01, 400.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalSummary {
    pub calibrations: Vec<CalibrationResult>,
    pub audit: CoverageReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub protocol_note: String,
    pub config: ExperimentConfig,
    pub n_smes: usize,
    pub rows: Vec<EvaluationRow>,
    pub summaries: Vec<MethodSummary>,
    pub comparisons: Vec<PairedComparison>,
    pub conformal: Option<ConformalSummary>,
    pub diagnostics: Vec<DiagnosticsSummary>,
    pub failures: Vec<String>,
}

impl ExperimentReport {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &EvaluationRow> + '_ {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn comparison(&self, a: Method, b: Method) -> Option<&PairedComparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }

    /// One line per evaluation.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "sme,sme_id,fold,method,n_test,auc,accuracy,precision,recall,f1,log_loss,flag").map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let m = r.metrics.as_ref();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.sme,
                r.sme_id,
                r.fold,
                r.method,
                r.n_test,
                opt(m.and_then(|m| m.auc)),
                opt(m.map(|m| m.accuracy)),
                opt(m.map(|m| m.precision)),
                opt(m.map(|m| m.recall)),
                opt(m.map(|m| m.f1)),
                opt(m.map(|m| m.log_loss)),
                r.flag.as_deref().unwrap_or("").replace(',', ";"),
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn with_intercept(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(1.0);
    v
}

/// Samples the hierarchical posterior on `collection` and returns, per SME,
/// the pooled coefficient draws.
fn fit_hierarchical(
    collection: &SMECollection,
    hyper: &HierHyper,
    sampler: &SamplerConfig,
) -> Result<(Vec<Vec<Vec<f64>>>, Diagnostics)> {
    let data = HierData::from_collection(collection)?;
    let target = HierTarget::new(data, hyper.clone())?;
    let (trace, diag) = sample(&target, &target.initial_point(), target.param_names(), sampler)?;
    let p = hyper.p();
    let draws = (0..collection.len())
        .map(|j| sme_coefficient_draws(&trace, p, j))
        .collect::<Result<Vec<_>>>()?;
    Ok((draws, diag))
}

fn score(probs: &[f64], test: &Dataset) -> (Option<MetricReport>, Option<String>) {
    match classification_metrics(probs, test.labels(), 0.5) {
        Ok(m) if m.auc.is_some() => (Some(m), None),
        Ok(m) => (Some(m), Some("test fold holds a single class".into())),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Runs the K-fold protocol over every SME.
pub fn run_experiment(collection: &SMECollection, prior: &PriorSpec, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if prior.dim() != collection.n_features() {
        return Err(validation!(
            "prior has {} coefficients, data {} features",
            prior.dim(),
            collection.n_features()
        ));
    }
    let hyper = HierHyper::from_prior(prior, config.tau)?;
    let k = config.folds;
    let j_count = collection.len();
    let mut failures = Vec::new();

    // Test folds per SME; an SME that cannot be split is skipped entirely.
    let folds: Vec<Option<Vec<Vec<usize>>>> = collection
        .smes()
        .iter()
        .enumerate()
        .map(|(j, sme)| match stratified_kfold_indices(sme, k, config.seed.wrapping_add(j as u64)) {
            Ok(f) => Some(f),
            Err(e) => {
                failures.push(format!("SME {j}: cannot form {k} folds: {e}"));
                None
            }
        })
        .collect();

    let fold_train = |j: usize, f: usize| -> Option<(Dataset, Dataset)> {
        let sme = collection.sme(j);
        let test_idx = &folds[j].as_ref()?[f];
        Some((sme.subset(&complement(sme.n_rows(), test_idx)), sme.subset(test_idx)))
    };

    // Hierarchical coefficient draws per fold index (shared under FitOnce).
    let mut diagnostics = Vec::new();
    let mut hier_draws: Vec<Option<Vec<Vec<Vec<f64>>>>> = vec![None; k];
    match config.protocol {
        Protocol::FitOnce => {
            info!("fitting the hierarchical model once on all rows");
            match fit_hierarchical(collection, &hyper, &config.sampler) {
                Ok((draws, diag)) => {
                    diagnostics.push(DiagnosticsSummary::from_diagnostics(&diag));
                    hier_draws = vec![Some(draws); k];
                }
                Err(e) => failures.push(format!("hierarchical fit: {e}")),
            }
        }
        Protocol::RefitPerFold => {
            for (f, slot) in hier_draws.iter_mut().enumerate() {
                info!("fitting the hierarchical model on training rows of fold {f}");
                let train: Vec<Dataset> = (0..j_count)
                    .map(|j| fold_train(j, f).map_or_else(|| collection.sme(j).clone(), |(tr, _)| tr))
                    .collect();
                let sub = SMECollection::new(train, collection.ids().to_vec())?;
                let sampler = SamplerConfig {
                    seed: config.sampler.seed.wrapping_add(f as u64 * 7919),
                    ..config.sampler.clone()
                };
                match fit_hierarchical(&sub, &hyper, &sampler) {
                    Ok((draws, diag)) => {
                        diagnostics.push(DiagnosticsSummary::from_diagnostics(&diag));
                        *slot = Some(draws);
                    }
                    Err(e) => failures.push(format!("hierarchical fit, fold {f}: {e}")),
                }
            }
        }
    }

    // Complete pooling per fold index.
    let pooled_models: Vec<Option<super::LogReg>> = (0..k)
        .map(|f| {
            let parts: Vec<Dataset> = (0..j_count).filter_map(|j| fold_train(j, f).map(|(tr, _)| tr)).collect();
            let refs: Vec<&Dataset> = parts.iter().collect();
            let fit = Dataset::concat(&refs).and_then(|d| fit_logreg_l2(&d, config.c));
            match fit {
                Ok(m) => Some(m),
                Err(e) => {
                    failures.push(format!("pooled fit, fold {f}: {e}"));
                    None
                }
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(3 * j_count * k);
    // Hierarchical held-out probabilities per (SME, fold), for the audit.
    let mut hier_probs: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; k]; j_count];
    for j in 0..j_count {
        let id = collection.ids()[j].clone();
        for f in 0..k {
            let Some((train, test)) = fold_train(j, f) else {
                for method in Method::ALL {
                    rows.push(EvaluationRow {
                        sme: j,
                        sme_id: id.clone(),
                        fold: f,
                        method,
                        n_test: 0,
                        metrics: None,
                        flag: Some("SME could not be split into folds".into()),
                    });
                }
                continue;
            };
            for method in Method::ALL {
                let probs: std::result::Result<Vec<f64>, String> = match method {
                    Method::Hierarchical => match &hier_draws[f] {
                        Some(d) => test
                            .rows()
                            .map(|x| predict_with_draws(&d[j], &with_intercept(x), config.interval_mass).map(|p| p.mean))
                            .collect::<Result<Vec<_>>>()
                            .map_err(|e| e.to_string()),
                        None => Err("hierarchical fit unavailable".into()),
                    },
                    Method::Independent => fit_logreg_l2(&train, config.c)
                        .map(|m| m.predict_proba_all(&test))
                        .map_err(|e| format!("independent fit: {e}")),
                    Method::Pooled => pooled_models[f]
                        .as_ref()
                        .map(|m| m.predict_proba_all(&test))
                        .ok_or_else(|| "pooled fit unavailable".to_string()),
                };
                let (metrics, flag) = match &probs {
                    Ok(p) => score(p, &test),
                    Err(e) => (None, Some(e.clone())),
                };
                if method == Method::Hierarchical {
                    hier_probs[j][f] = probs.ok();
                }
                rows.push(EvaluationRow {
                    sme: j,
                    sme_id: id.clone(),
                    fold: f,
                    method,
                    n_test: test.n_rows(),
                    metrics,
                    flag,
                });
            }
        }
    }

    let summaries = Method::ALL.iter().map(|&m| summarize(&rows, m)).collect();
    let comparisons = [
        (Method::Hierarchical, Method::Independent),
        (Method::Hierarchical, Method::Pooled),
        (Method::Pooled, Method::Independent),
    ]
    .iter()
    .filter_map(|&(a, b)| compare(&rows, a, b))
    .collect();

    let conformal = match conformal_audit(collection, &folds, &hier_probs, config) {
        Ok(c) => c,
        Err(e) => {
            failures.push(format!("conformal audit: {e}"));
            None
        }
    };
    for f in &failures {
        warn!("{f}");
    }

    Ok(ExperimentReport {
        protocol: config.protocol,
        protocol_note: match config.protocol {
            Protocol::FitOnce => "hierarchical model fitted once on all rows and scored on each test fold; test rows are part of its fit".into(),
            Protocol::RefitPerFold => "hierarchical model refitted on the training rows of each fold; leakage-free".into(),
        },
        config: config.clone(),
        n_smes: j_count,
        rows,
        summaries,
        comparisons,
        conformal,
        diagnostics,
        failures,
    })
}

fn summarize(rows: &[EvaluationRow], method: Method) -> MethodSummary {
    let all: Vec<&EvaluationRow> = rows.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&MetricReport> = all
        .iter()
        .filter(|r| r.flag.is_none())
        .filter_map(|r| r.metrics.as_ref())
        .collect();
    let avg = |f: &dyn Fn(&MetricReport) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            mean(&ok.iter().map(|m| f(m)).collect::<Vec<_>>())
        }
    };
    let aucs: Vec<f64> = ok.iter().filter_map(|m| m.auc).collect();
    MethodSummary {
        method,
        n_evaluations: all.len(),
        n_flagged: all.len() - ok.len(),
        auc_mean: if aucs.is_empty() { f64::NAN } else { mean(&aucs) },
        auc_std: if aucs.len() < 2 { f64::NAN } else { sample_variance(&aucs).sqrt() },
        accuracy_mean: avg(&|m| m.accuracy),
        precision_mean: avg(&|m| m.precision),
        recall_mean: avg(&|m| m.recall),
        f1_mean: avg(&|m| m.f1),
        log_loss_mean: avg(&|m| m.log_loss),
    }
}

/// Paired test on AUC over evaluations valid for both methods.
fn compare(rows: &[EvaluationRow], a: Method, b: Method) -> Option<PairedComparison> {
    let pick = |m: Method| -> Vec<Option<f64>> { rows.iter().filter(|r| r.method == m).map(EvaluationRow::auc).collect() };
    let (ra, rb) = (pick(a), pick(b));
    let (xa, xb): (Vec<f64>, Vec<f64>) = ra
        .iter()
        .zip(&rb)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    let t = paired_t_test(&xa, &xb).ok()?;
    Some(PairedComparison {
        a,
        b,
        n: xa.len(),
        mean_difference: mean(&xa) - mean(&xb),
        t: t.t,
        df: t.df,
        p: t.p,
        cohens_d: cohens_d_paired(&xa, &xb).ok()?,
    })
}

/// For each fold, calibrates on the hierarchical held-out scores of the
/// other folds and builds sets for the fold's own rows.
fn conformal_audit(
    collection: &SMECollection,
    folds: &[Option<Vec<Vec<usize>>>],
    probs: &[Vec<Option<Vec<f64>>>],
    config: &ExperimentConfig,
) -> Result<Option<ConformalSummary>> {
    let k = config.folds;
    let min_rows = collection.smes().iter().map(Dataset::n_rows).min().unwrap_or(0);
    let choice = select_strategy(collection.len(), min_rows);
    let labels_of = |j: usize, f: usize| -> Option<Vec<u8>> {
        let idx = &folds[j].as_ref()?[f];
        Some(idx.iter().map(|&i| collection.sme(j).label(i)).collect())
    };
    let mut calibrations = Vec::with_capacity(k);
    let mut sets: Vec<PredictionSet> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for f in 0..k {
        let mut per_sme: Vec<Vec<f64>> = Vec::new();
        for (j, sme_probs) in probs.iter().enumerate() {
            let mut scores = Vec::new();
            for (g, p) in sme_probs.iter().enumerate() {
                if g == f {
                    continue;
                }
                if let (Some(p), Some(y)) = (p, labels_of(j, g)) {
                    scores.extend(p.iter().zip(&y).map(|(&p, &y)| nonconformity(y, p)));
                }
            }
            per_sme.push(scores);
        }
        if per_sme.iter().all(Vec::is_empty) {
            return Ok(None);
        }
        let mut cal = calibrate_pooled(&per_sme, config.alpha)?;
        // Scores from the other folds are already out-of-fold, so cross mode
        // reuses them rather than refitting.
        cal.strategy = choice.strategy;
        if let Some(infl) = choice.inflation {
            cal = conservative_adjust(&cal, infl)?;
        }
        for (j, sme_probs) in probs.iter().enumerate() {
            if let (Some(p), Some(y)) = (&sme_probs[f], labels_of(j, f)) {
                sets.extend(p.iter().map(|&p| predict_set(p, cal.q_hat)));
                labels.extend(y);
            }
        }
        calibrations.push(cal);
    }
    Ok(Some(ConformalSummary {
        calibrations,
        audit: coverage_audit(&sets, &labels)?,
    }))
}
