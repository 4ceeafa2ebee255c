//! Sample containers, CSV ingestion and harmonization, stratified
//! partitioning, and synthetic multi-SME generation.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::math::logistic;
use crate::rng;

/// Fraction of missing cells above which a binary missing-indicator column
/// is appended during ingestion.
pub const MISSING_INDICATOR_THRESHOLD: f64 = 0.05;

/// Standard deviations below this are treated as zero and floored to 1.
const STD_FLOOR_EPS: f64 = 1e-12;

/// Feature matrix with binary labels.
///
/// Features are stored row-major. Labels are `0` (retained) or `1`
/// (churned). The optional source tag names the origin of each row and is
/// what prior extraction partitions on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    source_tags: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        source_tags: Option<Vec<String>>,
    ) -> Result<Self> {
        let p = feature_names.len();
        let n = labels.len();
        if features.len() != n * p {
            return Err(validation!(
                "feature buffer has {} values, expected {} rows x {} features",
                features.len(),
                n,
                p
            ));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(validation!("non-finite feature value at row {}", i / p.max(1)));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(validation!("label {} at row {} is not 0/1", labels[i], i));
        }
        let mut seen = HashSet::with_capacity(p);
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(validation!("duplicate feature name `{name}`"));
            }
        }
        if let Some(tags) = &source_tags {
            if tags.len() != n {
                return Err(validation!("{} source tags for {} rows", tags.len(), n));
            }
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            source_tags,
        })
    }

    /// Builds a dataset from row slices.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(validation!("row {i} has {} values, expected {p}", row.len()));
            }
            features.extend_from_slice(row);
        }
        Self::new(features, labels, feature_names, None)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.features[i * self.n_features() + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn source_tags(&self) -> Option<&[String]> {
        self.source_tags.as_deref()
    }

    pub fn with_source_tags(mut self, tags: Option<Vec<String>>) -> Result<Self> {
        if let Some(t) = &tags {
            if t.len() != self.n_rows() {
                return Err(validation!("{} source tags for {} rows", t.len(), self.n_rows()));
            }
        }
        self.source_tags = tags;
        Ok(self)
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn positive_rate(&self) -> f64 {
        self.n_positive() as f64 / self.n_rows() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.n_positive();
        pos > 0 && pos < self.n_rows()
    }

    /// Rows at `indices`, in the given order (duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let source_tags = self
            .source_tags
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i].clone()).collect());
        Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            source_tags,
        }
    }

    /// Row-wise concatenation; feature names must agree.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| validation!("cannot concatenate zero datasets"))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let all_tagged = parts.iter().all(|d| d.source_tags.is_some());
        let mut tags = Vec::new();
        for d in parts {
            if d.feature_names != first.feature_names {
                return Err(validation!("feature names differ between concatenated datasets"));
            }
            features.extend_from_slice(&d.features);
            labels.extend_from_slice(&d.labels);
            if all_tagged {
                tags.extend(d.source_tags.as_ref().unwrap().iter().cloned());
            }
        }
        Dataset::new(
            features,
            labels,
            first.feature_names.clone(),
            all_tagged.then_some(tags),
        )
    }

    /// Appends a constant-one column named `name` as the last feature.
    pub fn with_constant_column(&self, name: &str) -> Result<Dataset> {
        let p = self.n_features();
        let mut features = Vec::with_capacity(self.n_rows() * (p + 1));
        for r in self.rows() {
            features.extend_from_slice(r);
            features.push(1.0);
        }
        let mut names = self.feature_names.clone();
        names.push(name.to_string());
        Dataset::new(features, self.labels.clone(), names, self.source_tags.clone())
    }

    /// Order-sensitive FNV-1a digest of features and labels.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in &self.features {
            eat(&v.to_bits().to_le_bytes());
        }
        eat(&self.labels);
        h
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Column roles for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    /// Tag column; if the header lacks it the dataset is untagged.
    pub tag_column: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: "target".into(),
            tag_column: Some("source".into()),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL" | "None"
    )
}

fn parse_label(cell: &str, row: usize) -> Result<u8> {
    let t = cell.trim();
    match t.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(0),
        Ok(v) if v == 1.0 => Ok(1),
        _ => Err(validation!("row {row}: label `{t}` is not 0 or 1")),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Loads a harmonized CSV file.
///
/// Numeric columns have missing cells imputed by the column median;
/// non-numeric columns are imputed by their mode and one-hot encoded with
/// every level kept (`column=level`). A `column_missing` indicator is
/// appended after any column whose missing rate exceeds 5%.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        Err(e) => return Err(csv_parse_error(e)),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(validation!("empty CSV: no header row"));
    }
    let label_idx = header
        .iter()
        .position(|h| *h == options.label_column)
        .ok_or_else(|| validation!("label column `{}` not found", options.label_column))?;
    let tag_idx = match &options.tag_column {
        Some(tag) => {
            let idx = header.iter().position(|h| h == tag);
            if idx.is_none() {
                warn!("tag column `{tag}` not present; dataset will be untagged");
            }
            idx
        }
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_idx && Some(c) != tag_idx)
        .collect();

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); feature_cols.len()];
    let mut labels = Vec::new();
    let mut tags = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(csv_parse_error)?;
        let label_cell = record.get(label_idx).unwrap_or("");
        if is_missing(label_cell) {
            return Err(validation!("row {row}: missing label"));
        }
        labels.push(parse_label(label_cell, row)?);
        if let Some(t) = tag_idx {
            tags.push(record.get(t).unwrap_or("").trim().to_string());
        }
        for (slot, &c) in feature_cols.iter().enumerate() {
            cells[slot].push(record.get(c).unwrap_or("").to_string());
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(validation!("empty CSV: no data rows"));
    }

    // Build output columns column-major, then transpose.
    let mut out_cols: Vec<Vec<f64>> = Vec::new();
    let mut out_names: Vec<String> = Vec::new();
    for (slot, &c) in feature_cols.iter().enumerate() {
        let name = &header[c];
        let raw = &cells[slot];
        let missing: Vec<bool> = raw.iter().map(|s| is_missing(s)).collect();
        let n_missing = missing.iter().filter(|&&m| m).count();
        let numeric: Option<Vec<f64>> = raw
            .iter()
            .zip(&missing)
            .map(|(s, &m)| {
                if m {
                    Some(f64::NAN)
                } else {
                    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
                }
            })
            .collect();
        if n_missing == n {
            warn!("column `{name}` is entirely missing; dropped");
            continue;
        }
        match numeric {
            Some(mut values) => {
                let mut present: Vec<f64> =
                    values.iter().copied().filter(|v| !v.is_nan()).collect();
                let fill = median(&mut present);
                for v in values.iter_mut() {
                    if v.is_nan() {
                        *v = fill;
                    }
                }
                out_cols.push(values);
                out_names.push(name.clone());
            }
            None => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for (s, &m) in raw.iter().zip(&missing) {
                    if !m {
                        *counts.entry(s.trim()).or_default() += 1;
                    }
                }
                // Ties resolve to the lexicographically smallest level.
                let mode = counts
                    .iter()
                    .fold(("", 0usize), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                    .0
                    .to_string();
                for level in counts.keys() {
                    let col = raw
                        .iter()
                        .zip(&missing)
                        .map(|(s, &m)| {
                            let v = if m { mode.as_str() } else { s.trim() };
                            if v == *level {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    out_cols.push(col);
                    out_names.push(format!("{name}={level}"));
                }
            }
        }
        if n_missing as f64 / n as f64 > MISSING_INDICATOR_THRESHOLD {
            out_cols.push(missing.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect());
            out_names.push(format!("{name}_missing"));
        }
    }

    let p = out_cols.len();
    let mut features = Vec::with_capacity(n * p);
    for i in 0..n {
        for col in &out_cols {
            features.push(col[i]);
        }
    }
    Dataset::new(features, labels, out_names, tag_idx.map(|_| tags))
}

fn csv_parse_error(e: csv::Error) -> Error {
    let row = e
        .position()
        .map(|p| (p.line() as usize).saturating_sub(1))
        .unwrap_or(0);
    Error::Parse {
        row,
        message: e.to_string(),
    }
}

/// Writes a dataset as CSV: features, then `label_column`, then the tag
/// column if the dataset is tagged.
pub fn write_csv(
    data: &Dataset,
    path: impl AsRef<Path>,
    label_column: &str,
    tag_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    if data.source_tags().is_some() {
        header.push(tag_column);
    }
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.label(i).to_string());
        if let Some(t) = data.source_tags() {
            rec.push(t[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-feature affine transform recorded at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    /// Population standard deviations; constant columns are recorded as 1.
    pub stds: Vec<f64>,
}

impl StandardizationStats {
    /// Applies the recorded transform (no re-fit).
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.means.len() {
            return Err(validation!(
                "dataset has {} features, stats have {}",
                data.n_features(),
                self.means.len()
            ));
        }
        let p = data.n_features();
        let features = data
            .features()
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let k = idx % p;
                (v - self.means[k]) / self.stds[k]
            })
            .collect();
        Dataset::new(
            features,
            data.labels().to_vec(),
            data.feature_names().to_vec(),
            data.source_tags().map(<[String]>::to_vec),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// Zero-mean, unit-variance scaling with the population (denominator `n`)
/// convention.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationStats)> {
    let n = data.n_rows();
    if n < 2 {
        return Err(validation!("standardize needs at least 2 rows, got {n}"));
    }
    let p = data.n_features();
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    for k in 0..p {
        let col = data.column(k);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let mut sd = var.sqrt();
        if sd < STD_FLOOR_EPS {
            warn!(
                "feature `{}` has zero variance; std floored to 1",
                data.feature_names()[k]
            );
            sd = 1.0;
        }
        means[k] = mean;
        stds[k] = sd;
    }
    let stats = StandardizationStats {
        feature_names: data.feature_names().to_vec(),
        means,
        stds,
    };
    let out = stats.apply(data)?;
    Ok((out, stats))
}

// ---------------------------------------------------------------------------
// Stratified partitioning

fn class_indices(data: &Dataset) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in data.labels().iter().enumerate() {
        out[y as usize].push(i);
    }
    out
}

/// Train/test index split preserving the class balance.
///
/// Each class contributes `round(count * test_fraction)` rows to the test
/// side, clamped so both sides keep at least one member of every class.
/// Indices are returned in ascending order.
pub fn stratified_split_indices(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(validation!("test_fraction must be in (0,1), got {test_fraction}"));
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in class_indices(data).into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(validation!(
                "class {class} has {} member(s); stratified split needs at least 2",
                idx.len()
            ));
        }
        let k = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(data, test_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Test-fold index sets for stratified K-fold cross-validation.
///
/// Members of each class are shuffled and dealt round-robin, with the
/// dealing position carried over from the positive class to the negative
/// class so fold sizes differ by at most one.
pub fn stratified_kfold_indices(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = data.n_rows();
    if k < 2 {
        return Err(validation!("K must be at least 2, got {k}"));
    }
    if k > n {
        return Err(validation!("K={k} exceeds the number of rows {n}"));
    }
    let [neg, pos] = class_indices(data);
    // Leave-one-out is allowed even though its folds cannot hold both classes.
    if k != n {
        for (class, idx) in [(0, &neg), (1, &pos)] {
            if idx.len() < k {
                return Err(validation!(
                    "class {class} has {} members, fewer than K={k}",
                    idx.len()
                ));
            }
        }
    }
    let mut rng = rng::seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for mut idx in [pos, neg] {
        idx.shuffle(&mut rng);
        for i in idx {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Complement of a test fold, ascending.
pub fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in test {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let folds = stratified_kfold_indices(data, k, seed)?;
    Ok(folds
        .iter()
        .map(|test| {
            let train = complement(data.n_rows(), test);
            (data.subset(&train), data.subset(test))
        })
        .collect())
}

// ---------------------------------------------------------------------------
// SME collections and generators

/// A network of small businesses sharing one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SMECollection {
    smes: Vec<Dataset>,
    ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    feature_names: Vec<String>,
    label_column: String,
    smes: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    path: String,
    n_rows: usize,
    #[serde(default)]
    tagged: bool,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl SMECollection {
    pub fn new(smes: Vec<Dataset>, ids: Vec<String>) -> Result<Self> {
        if smes.is_empty() {
            return Err(validation!("an SME collection needs at least one SME"));
        }
        if smes.len() != ids.len() {
            return Err(validation!("{} SMEs but {} ids", smes.len(), ids.len()));
        }
        let names = smes[0].feature_names();
        if smes.iter().any(|d| d.feature_names() != names) {
            return Err(validation!("SMEs do not share feature names"));
        }
        let unique: HashSet<&String> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(validation!("SME ids must be unique"));
        }
        Ok(Self { smes, ids })
    }

    pub fn len(&self) -> usize {
        self.smes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smes.is_empty()
    }

    pub fn smes(&self) -> &[Dataset] {
        &self.smes
    }

    pub fn sme(&self, j: usize) -> &Dataset {
        &self.smes[j]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_features(&self) -> usize {
        self.smes[0].n_features()
    }

    pub fn feature_names(&self) -> &[String] {
        self.smes[0].feature_names()
    }

    pub fn total_rows(&self) -> usize {
        self.smes.iter().map(Dataset::n_rows).sum()
    }

    /// All rows stacked, tagged by SME id.
    pub fn concat(&self) -> Result<Dataset> {
        let tagged: Vec<Dataset> = self
            .smes
            .iter()
            .zip(&self.ids)
            .map(|(d, id)| {
                d.clone()
                    .with_source_tags(Some(vec![id.clone(); d.n_rows()]))
            })
            .collect::<Result<_>>()?;
        Dataset::concat(&tagged.iter().collect::<Vec<_>>())
    }

    /// Applies `f` to every SME, keeping ids.
    pub fn map(&self, f: impl Fn(&Dataset) -> Result<Dataset>) -> Result<SMECollection> {
        let smes = self.smes.iter().map(f).collect::<Result<Vec<_>>>()?;
        SMECollection::new(smes, self.ids.clone())
    }

    /// Writes `<id>.csv` per SME plus `manifest.json` into `dir`.
    ///
    /// Refuses to overwrite an existing manifest unless `force` is set.
    pub fn save(&self, dir: impl AsRef<Path>, force: bool) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.exists() && !force {
            return Err(validation!(
                "{} already exists (use --force to overwrite)",
                manifest_path.display()
            ));
        }
        let mut entries = Vec::with_capacity(self.len());
        for (d, id) in self.smes.iter().zip(&self.ids) {
            let file = format!("{id}.csv");
            write_csv(d, dir.join(&file), "target", "source")?;
            entries.push(ManifestEntry {
                id: id.clone(),
                path: file,
                n_rows: d.n_rows(),
                tagged: d.source_tags().is_some(),
            });
        }
        let manifest = Manifest {
            feature_names: self.feature_names().to_vec(),
            label_column: "target".into(),
            smes: entries,
        };
        write_json(&manifest_path, &manifest)?;
        Ok(manifest_path)
    }

    /// Reads a collection from its manifest; SME paths are relative to the
    /// manifest's directory.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest: Manifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut smes = Vec::new();
        let mut ids = Vec::new();
        for entry in &manifest.smes {
            let options = CsvOptions {
                label_column: manifest.label_column.clone(),
                tag_column: entry.tagged.then(|| "source".into()),
            };
            let d = load_csv(base.join(&entry.path), &options)?;
            if d.feature_names() != manifest.feature_names.as_slice() {
                return Err(Error::Format(format!(
                    "{}: columns do not match the manifest",
                    entry.path
                )));
            }
            smes.push(d);
            ids.push(entry.id.clone());
        }
        SMECollection::new(smes, ids)
    }
}

/// Ground-truth parameters of a simulated hierarchical population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierGroundTruth {
    pub mu_true: Vec<f64>,
    pub sigma_true: f64,
    /// Row `j` holds SME `j`'s coefficients.
    pub betas_true: Vec<Vec<f64>>,
    pub seed: u64,
}

fn sme_ids(prefix: &str, j: usize) -> Vec<String> {
    let width = j.saturating_sub(1).to_string().len().max(2);
    (0..j).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Resamples `J` SMEs of `n_per` rows each, with replacement, from a
/// harmonized source dataset.
pub fn make_synthetic_smes(
    source: &Dataset,
    j: usize,
    n_per: usize,
    seed: u64,
) -> Result<SMECollection> {
    if source.is_empty() {
        return Err(validation!("source dataset is empty"));
    }
    if j == 0 {
        return Err(validation!("J must be at least 1"));
    }
    if n_per < 10 {
        return Err(validation!("n_per must be at least 10, got {n_per}"));
    }
    let mut rng = rng::seeded(seed);
    let n = source.n_rows();
    let smes = (0..j)
        .map(|_| {
            let idx: Vec<usize> = (0..n_per).map(|_| rng.random_range(0..n)).collect();
            source.subset(&idx)
        })
        .collect();
    SMECollection::new(smes, sme_ids("sme_", j))
}

/// Draws `J` entities from a known population: `beta_j = mu + sigma * z_j`,
/// `x ~ N(0, I)`, `y ~ Bernoulli(logistic(beta_j . x))`.
///
/// Returns the collection and each entity's coefficient vector.
pub fn sample_population(
    mu: &[f64],
    sigma: f64,
    j: usize,
    n_per: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<(SMECollection, Vec<Vec<f64>>)> {
    let p = mu.len();
    if p == 0 || j == 0 {
        return Err(validation!("p and J must be positive (p={p}, J={j})"));
    }
    if n_per < 10 {
        return Err(validation!("n_per must be at least 10, got {n_per}"));
    }
    if !(sigma >= 0.0) {
        return Err(validation!("sigma must be non-negative, got {sigma}"));
    }
    let names: Vec<String> = (0..p).map(|k| format!("x{:02}", k + 1)).collect();
    let mut smes = Vec::with_capacity(j);
    let mut betas = Vec::with_capacity(j);
    for s in 0..j {
        let mut rng = rng::stream(seed, s as u64 + 1);
        let beta: Vec<f64> = mu
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + sigma * z
            })
            .collect();
        let mut features = Vec::with_capacity(n_per * p);
        let mut labels = Vec::with_capacity(n_per);
        for _ in 0..n_per {
            let mut eta = 0.0;
            for b in &beta {
                let x: f64 = StandardNormal.sample(&mut rng);
                features.push(x);
                eta += b * x;
            }
            labels.push(u8::from(rng.random::<f64>() < logistic(eta)));
        }
        smes.push(Dataset::new(features, labels, names.clone(), None)?);
        betas.push(beta);
    }
    Ok((SMECollection::new(smes, sme_ids(id_prefix, j))?, betas))
}

/// Simulates a hierarchical population with known parameters, for use as
/// an oracle: `mu_true ~ N(0, mu_scale^2 I)`, then [`sample_population`].
pub fn generate_hierarchical_population(
    p: usize,
    j: usize,
    n_per: usize,
    mu_scale: f64,
    sigma_true: f64,
    seed: u64,
) -> Result<(SMECollection, HierGroundTruth)> {
    if p == 0 || j == 0 {
        return Err(validation!("p and J must be positive (p={p}, J={j})"));
    }
    if !(mu_scale >= 0.0) {
        return Err(validation!("mu_scale must be non-negative, got {mu_scale}"));
    }
    let mut rng = rng::stream(seed, 0);
    let mu_true: Vec<f64> = (0..p)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mu_scale * z
        })
        .collect();
    let (collection, betas_true) = sample_population(&mu_true, sigma_true, j, n_per, seed, "sme_")?;
    Ok((
        collection,
        HierGroundTruth {
            mu_true,
            sigma_true,
            betas_true,
            seed,
        },
    ))
}

/// Simulates a tagged public corpus from the same population: each of
/// `n_sources` sources gets its own coefficients `mu + spread * z` and
/// `n_per` rows, and every row is tagged with its source id.
pub fn sample_public_corpus(mu: &[f64], spread: f64, n_sources: usize, n_per: usize, seed: u64) -> Result<Dataset> {
    let (sources, _) = sample_population(mu, spread, n_sources, n_per, seed ^ 0x9e37_79b9_7f4a_7c15, "source_")?;
    sources.concat()
}

// ---------------------------------------------------------------------------
// JSON helpers shared by every persisted artifact.

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl HierGroundTruth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}
