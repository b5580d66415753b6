//! CSV ingestion, min-max normalization, skew filtering, splits and the
//! synthetic near/far benchmark generator.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detect::Tag;
use crate::error::{Error, Result};
use crate::ndmath::Matrix;
use crate::robust::{mad_with_floor, median, MAD_FLOOR};

/// Label values that map to the normal class unless configured otherwise.
pub const DEFAULT_NORMAL_VALUES: [&str; 5] = ["0", "normal", "Normal", "Benign", "BENIGN"];

fn default_normal_values() -> Vec<String> {
    DEFAULT_NORMAL_VALUES.iter().map(|s| s.to_string()).collect()
}

/// Feature-selection file: `{columns, label_column, normal_values}`.
///
/// An empty `columns` list selects every numeric column other than the
/// label and tag columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "default_normal_values")]
    pub normal_values: Vec<String>,
    /// Optional column holding `normal`/`near`/`far` population tags.
    #[serde(default)]
    pub tag_column: Option<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { columns: Vec::new(), label_column: None, normal_values: default_normal_values(), tag_column: None }
    }
}

impl FeatureConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::param(format!("feature config {}: {e}", path.display())))
    }
}

/// Per-feature `(min, max)` pairs fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Normalization {
    pub ranges: Vec<(f64, f64)>,
}

impl Normalization {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub features: Matrix,
    /// 0 normal, 1 anomaly.
    pub labels: Option<Vec<u8>>,
    pub feature_names: Vec<String>,
    /// Record used to normalize `features`, if they are normalized.
    pub normalization: Option<Normalization>,
    pub tags: Option<Vec<Tag>>,
}

impl FeatureMatrix {
    pub fn new(features: Matrix, feature_names: Vec<String>) -> Result<Self> {
        if feature_names.len() != features.cols() {
            return Err(Error::param(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        Ok(Self { features, labels: None, feature_names, normalization: None, tags: None })
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn cols(&self) -> usize {
        self.features.cols()
    }

    /// Rows `idx` in the given order, with labels and tags carried along.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            features: self.features.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
            tags: self.tags.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Indices of the rows with label 0 (all rows when unlabeled).
    pub fn normal_indices(&self) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == 0).collect(),
            None => (0..self.rows()).collect(),
        }
    }

    /// Write a CSV with the feature names, then `label` and `tag` when present.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        if self.labels.is_some() {
            header.push("label".into());
        }
        if self.tags.is_some() {
            header.push("tag".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.features.iter_rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            if let Some(t) = &self.tags {
                rec.push(t[i].as_str().to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadStats {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn column_index(headers: &HashMap<&str, usize>, name: &str) -> Result<usize> {
    headers
        .get(name)
        .copied()
        .ok_or_else(|| Error::data(format!("column '{name}' not found in header")))
}

fn parse_finite(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Read a headed CSV into raw (unnormalized) features. Rows with an
/// unparseable or non-finite selected value are dropped and counted.
pub fn load_csv(path: impl AsRef<Path>, config: &FeatureConfig) -> Result<(FeatureMatrix, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers()?.clone();
    if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::data(format!("{}: missing header row", path.display())));
    }
    let names: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let label_idx = config.label_column.as_deref().map(|c| column_index(&names, c)).transpose()?;
    let tag_idx = config.tag_column.as_deref().map(|c| column_index(&names, c)).transpose()?;

    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;

    let selected: Vec<usize> = if config.columns.is_empty() {
        // every column whose first usable value is numeric
        let skip = |i: usize| Some(i) == label_idx || Some(i) == tag_idx;
        (0..header.len())
            .filter(|&i| !skip(i))
            .filter(|&i| {
                records
                    .iter()
                    .filter_map(|r| r.get(i))
                    .map(str::trim)
                    .find(|f| !f.is_empty() && !f.eq_ignore_ascii_case("nan"))
                    .is_some_and(|f| f.parse::<f64>().is_ok())
            })
            .collect()
    } else {
        config.columns.iter().map(|c| column_index(&names, c)).collect::<Result<_>>()?
    };
    if selected.is_empty() {
        return Err(Error::data(format!("{}: no numeric feature columns", path.display())));
    }

    let mut data = Vec::with_capacity(records.len() * selected.len());
    let mut labels = Vec::new();
    let mut tags = Vec::new();
    let mut kept = 0usize;
    'rows: for rec in &records {
        let mut row = Vec::with_capacity(selected.len());
        for &i in &selected {
            match rec.get(i).and_then(parse_finite) {
                Some(v) => row.push(v),
                None => continue 'rows,
            }
        }
        if let Some(li) = label_idx {
            match rec.get(li).map(str::trim) {
                Some(v) if !v.is_empty() => labels.push(u8::from(!config.normal_values.iter().any(|n| n == v))),
                _ => continue 'rows,
            }
        }
        if let Some(ti) = tag_idx {
            match rec.get(ti).map(|v| v.trim().parse::<Tag>()) {
                Some(Ok(t)) => tags.push(t),
                _ => continue 'rows,
            }
        }
        data.extend(row);
        kept += 1;
    }
    let stats = LoadStats { rows_read: records.len(), rows_dropped: records.len() - kept };
    if stats.rows_dropped > 0 {
        warn!("{}: dropped {} of {} rows with unusable values", path.display(), stats.rows_dropped, stats.rows_read);
    }
    if kept == 0 {
        return Err(Error::data(format!("{}: no usable rows", path.display())));
    }
    let features = Matrix::new(kept, selected.len(), data)?;
    let feature_names = selected.iter().map(|&i| header[i].to_string()).collect();
    let mut fm = FeatureMatrix::new(features, feature_names)?;
    fm.labels = label_idx.map(|_| labels);
    fm.tags = tag_idx.map(|_| tags);
    Ok((fm, stats))
}

/// Per-feature minimum and maximum of `train`.
pub fn fit_minmax(train: &Matrix) -> Result<Normalization> {
    if train.rows() == 0 {
        return Err(Error::param("cannot fit a normalization on zero rows"));
    }
    let ranges: Vec<(f64, f64)> = (0..train.cols())
        .map(|j| {
            train
                .iter_rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    for (j, (lo, hi)) in ranges.iter().enumerate() {
        if lo == hi {
            warn!("feature {j} is constant ({lo}); it normalizes to 0");
        }
    }
    Ok(Normalization { ranges })
}

/// `(x - min) / (max - min)` with the training record; constant features
/// give 0. Values outside the training range are kept unless `clamp`.
pub fn apply_minmax(data: &Matrix, record: &Normalization, clamp: bool) -> Result<Matrix> {
    if record.len() != data.cols() {
        return Err(Error::data(format!(
            "normalization has {} features but data has {}",
            record.len(),
            data.cols()
        )));
    }
    let mut out = data.clone();
    for row in 0..out.rows() {
        for (v, &(lo, hi)) in out.row_mut(row).iter_mut().zip(&record.ranges) {
            let span = hi - lo;
            let mut y = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            if clamp {
                y = y.clamp(0.0, 1.0);
            }
            *v = y;
        }
    }
    Ok(out)
}

impl FeatureMatrix {
    /// Apply `record` and remember it.
    pub fn normalized(&self, record: &Normalization, clamp: bool) -> Result<FeatureMatrix> {
        Ok(FeatureMatrix {
            features: apply_minmax(&self.features, record, clamp)?,
            normalization: Some(record.clone()),
            ..self.clone()
        })
    }
}

pub const SKEW_MAD_MULTIPLIER: f64 = 6.0;
pub const SKEW_MAX_DROP_FRACTION: f64 = 0.1;

/// Per-feature median and floored MAD, fitted once and reusable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewStats {
    pub medians: Vec<f64>,
    pub mads: Vec<f64>,
}

impl SkewStats {
    pub fn fit(data: &Matrix) -> Result<Self> {
        let mut medians = Vec::with_capacity(data.cols());
        let mut mads = Vec::with_capacity(data.cols());
        for j in 0..data.cols() {
            let col = data.column(j);
            medians.push(median(&col)?);
            mads.push(mad_with_floor(&col, MAD_FLOOR)?);
        }
        Ok(Self { medians, mads })
    }

    /// Largest `|x - median| / MAD` over the row's features.
    pub fn row_deviation(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.medians)
            .zip(&self.mads)
            .map(|((x, m), s)| (x - m).abs() / s)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewFilterResult {
    pub kept: Vec<usize>,
    pub dropped: usize,
    /// Deviation cutoff actually applied, in MAD units.
    pub cutoff: f64,
    /// Set when the 6-MAD rule would have dropped more than 10% of rows.
    pub widened: bool,
    pub stats: SkewStats,
}

/// Drop rows with any feature outside `median +- 6 MAD`, never more than 10%.
pub fn skew_filter(train: &Matrix) -> Result<SkewFilterResult> {
    if train.rows() < 10 {
        return Err(Error::param(format!("skew filter needs at least 10 rows, got {}", train.rows())));
    }
    let stats = SkewStats::fit(train)?;
    let dev: Vec<f64> = train.iter_rows().map(|r| stats.row_deviation(r)).collect();
    let max_drop = (SKEW_MAX_DROP_FRACTION * train.rows() as f64).floor() as usize;
    let mut cutoff = SKEW_MAD_MULTIPLIER;
    let mut widened = false;
    if dev.iter().filter(|&&d| d > cutoff).count() > max_drop {
        let mut sorted = dev.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        cutoff = sorted[max_drop];
        widened = true;
        warn!("skew filter would drop more than 10% of rows; cutoff widened to {cutoff:.3} MAD");
    }
    let result = skew_filter_with(train, &stats, cutoff);
    Ok(SkewFilterResult { widened, stats, ..result })
}

/// Apply a fitted skew rule with an explicit cutoff.
pub fn skew_filter_with(data: &Matrix, stats: &SkewStats, cutoff: f64) -> SkewFilterResult {
    let kept: Vec<usize> = (0..data.rows()).filter(|&i| stats.row_deviation(data.row(i)) <= cutoff).collect();
    SkewFilterResult {
        dropped: data.rows() - kept.len(),
        kept,
        cutoff,
        widened: false,
        stats: stats.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: FeatureMatrix,
    pub validation: FeatureMatrix,
    pub test: FeatureMatrix,
}

/// Seeded split: `round(f * n)` rows to train, the remainder halved between
/// validation and test (test gets the odd row). Done per class when labeled.
pub fn split(data: &FeatureMatrix, train_fraction: f64, seed: u64) -> Result<Splits> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!("train_fraction must lie in (0, 1), got {train_fraction}")));
    }
    let groups: Vec<Vec<usize>> = match &data.labels {
        Some(l) => [0u8, 1]
            .iter()
            .map(|&c| (0..l.len()).filter(|&i| l[i] == c).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect(),
        None => vec![(0..data.rows()).collect()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let n_train = ((train_fraction * g.len() as f64).round() as usize).min(g.len());
        let n_val = (g.len() - n_train) / 2;
        tr.extend_from_slice(&g[..n_train]);
        va.extend_from_slice(&g[n_train..n_train + n_val]);
        te.extend_from_slice(&g[n_train + n_val..]);
    }
    if tr.is_empty() || va.is_empty() || te.is_empty() {
        return Err(Error::data(format!(
            "{} rows are too few for a train/validation/test split at fraction {train_fraction}",
            data.rows()
        )));
    }
    for v in [&mut tr, &mut va, &mut te] {
        v.sort_unstable();
    }
    Ok(Splits { train: data.select(&tr), validation: data.select(&va), test: data.select(&te) })
}

fn default_near_offset() -> f64 {
    1.5
}

fn default_far_offset() -> f64 {
    8.0
}

/// Synthetic benchmark: equicorrelated unit-variance Gaussian normals plus
/// near and far anomalies. Offsets are in units of the normal law's
/// principal-axis standard deviation `sqrt(1 + (d - 1) rho)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_normal: usize,
    pub n_near: usize,
    pub n_far: usize,
    pub d: usize,
    pub rho: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Near anomalies: a normal draw moved this far along a random direction
    /// of the minor eigenspace.
    #[serde(default = "default_near_offset")]
    pub near_offset: f64,
    /// Far anomalies: a normal draw plus isotropic Gaussian noise with this
    /// per-coordinate scale.
    #[serde(default = "default_far_offset")]
    pub far_offset: f64,
}

impl SynthSpec {
    /// The benchmark used for the near/far comparison.
    pub fn benchmark() -> Self {
        Self { n_normal: 2000, n_near: 250, n_far: 250, d: 10, rho: 0.7, seed: Some(13), near_offset: 1.5, far_offset: 8.0 }
    }

    pub fn principal_std(&self) -> f64 {
        (1.0 + (self.d as f64 - 1.0) * self.rho).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::param(format!("synthetic data needs d >= 2, got {}", self.d)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::param(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.near_offset > 0.0 && self.far_offset > 0.0) || !self.near_offset.is_finite() || !self.far_offset.is_finite() {
            return Err(Error::param("near and far offsets must be positive and finite"));
        }
        if self.n_normal + self.n_near + self.n_far == 0 {
            return Err(Error::param("synthetic spec has no rows"));
        }
        Ok(())
    }
}

fn normal_draw(rng: &mut ChaCha8Rng, d: usize, rho: f64) -> Vec<f64> {
    let shared: f64 = rng.sample(StandardNormal);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    (0..d)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            a * shared + b * e
        })
        .collect()
}

/// Random unit vector orthogonal to the all-ones direction.
fn minor_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mean = v.iter().sum::<f64>() / d as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Normals, then near anomalies, then far anomalies; deterministic per seed.
pub fn synth_generate(spec: &SynthSpec, default_seed: u64) -> Result<FeatureMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(default_seed));
    let d = spec.d;
    let unit = spec.principal_std();
    let n = spec.n_normal + spec.n_near + spec.n_far;
    let mut data = Vec::with_capacity(n * d);
    let mut tags = Vec::with_capacity(n);
    for _ in 0..spec.n_normal {
        data.extend(normal_draw(&mut rng, d, spec.rho));
        tags.push(Tag::Normal);
    }
    for _ in 0..spec.n_near {
        let x = normal_draw(&mut rng, d, spec.rho);
        let u = minor_direction(&mut rng, d);
        data.extend(x.iter().zip(&u).map(|(a, b)| a + spec.near_offset * unit * b));
        tags.push(Tag::Near);
    }
    for _ in 0..spec.n_far {
        let x = normal_draw(&mut rng, d, spec.rho);
        data.extend(x.iter().map(|a| {
            let e: f64 = rng.sample(StandardNormal);
            a + spec.far_offset * unit * e
        }));
        tags.push(Tag::Far);
    }
    let features = Matrix::new(n, d, data)?;
    let names = (0..d).map(|j| format!("f{j}")).collect();
    let mut fm = FeatureMatrix::new(features, names)?;
    fm.labels = Some(tags.iter().map(|t| u8::from(*t != Tag::Normal)).collect());
    fm.tags = Some(tags);
    Ok(fm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_plain_csv() {
        let f = csv_file("a,b\n1,2\n3,4\n5,6\n");
        let (fm, stats) = load_csv(f.path(), &FeatureConfig::default()).unwrap();
        assert_eq!(fm.features, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap());
        assert_eq!(fm.feature_names, vec!["a", "b"]);
        assert!(fm.labels.is_none());
        assert_eq!(stats.rows_dropped, 0);
    }

    #[test]
    fn nan_rows_are_dropped_and_counted() {
        let f = csv_file("a,b\n1,2\nNaN,4\n5,6\n7,x\n");
        let (fm, stats) = load_csv(f.path(), &FeatureConfig::default()).unwrap();
        assert_eq!(fm.rows(), 2);
        assert_eq!(stats, LoadStats { rows_read: 4, rows_dropped: 2 });
        let f = csv_file("a,b\n1,2\nNaN,4\n");
        assert_eq!(load_csv(f.path(), &FeatureConfig::default()).unwrap().1.rows_dropped, 1);
    }

    #[test]
    fn label_mapping_and_column_selection() {
        let f = csv_file("x,proto,y,Label\n0.1,tcp,1,Benign\n0.2,udp,2,DDoS\n0.3,tcp,3,Benign\n");
        let cfg = FeatureConfig { label_column: Some("Label".into()), ..FeatureConfig::default() };
        let (fm, _) = load_csv(f.path(), &cfg).unwrap();
        assert_eq!(fm.feature_names, vec!["x", "y"]);
        assert_eq!(fm.labels, Some(vec![0, 1, 0]));

        let cfg = FeatureConfig { columns: vec!["y".into()], ..FeatureConfig::default() };
        let (fm, _) = load_csv(f.path(), &cfg).unwrap();
        assert_eq!(fm.features.column(0), vec![1.0, 2.0, 3.0]);

        let cfg = FeatureConfig { columns: vec!["missing".into()], ..FeatureConfig::default() };
        assert!(matches!(load_csv(f.path(), &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load_csv("/nonexistent/file.csv", &FeatureConfig::default()), Err(Error::Io { .. })));
        let f = csv_file("");
        assert!(matches!(load_csv(f.path(), &FeatureConfig::default()), Err(Error::Data(_))));
        let f = csv_file("a,b\nNaN,1\n");
        let both = FeatureConfig { columns: vec!["a".into(), "b".into()], ..FeatureConfig::default() };
        assert!(matches!(load_csv(f.path(), &both), Err(Error::Data(_))));
    }

    #[test]
    fn feature_config_json() {
        let cfg: FeatureConfig = serde_json::from_str(r#"{"columns": ["a"], "label_column": "Label"}"#).unwrap();
        assert_eq!(cfg.normal_values, default_normal_values());
        assert!(serde_json::from_str::<FeatureConfig>(r#"{"colums": []}"#).is_err());
    }

    #[test]
    fn minmax_examples() {
        let train = Matrix::from_rows(&[[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]).unwrap();
        let rec = fit_minmax(&train).unwrap();
        let out = apply_minmax(&train, &rec, false).unwrap();
        assert_eq!(out.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(out.column(1), vec![0.0, 0.0, 0.0]);
        let test = Matrix::from_rows(&[[8.0, 7.0]]).unwrap();
        assert_eq!(apply_minmax(&test, &rec, false).unwrap().row(0), &[1.5, 0.0]);
        assert_eq!(apply_minmax(&test, &rec, true).unwrap().row(0), &[1.0, 0.0]);
        assert!(apply_minmax(&Matrix::zeros(1, 3), &rec, false).is_err());
    }

    #[test]
    fn skew_filter_examples() {
        let mut rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 * 0.1, (i % 7) as f64]).collect();
        let stats = SkewStats::fit(&Matrix::from_rows(&rows).unwrap()).unwrap();
        rows[17][0] = stats.medians[0] + 100.0 * stats.mads[0];
        let res = skew_filter(&Matrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(res.dropped, 1);
        assert!(!res.kept.contains(&17));

        let constant = Matrix::new(20, 3, vec![4.0; 60]).unwrap();
        assert_eq!(skew_filter(&constant).unwrap().dropped, 0);
        assert!(skew_filter(&Matrix::zeros(5, 2)).is_err());
    }

    #[test]
    fn skew_filter_caps_at_ten_percent() {
        // 70% zeros floor the MAD, so every nonzero row looks skewed
        let rows: Vec<[f64; 1]> = (0..100).map(|i| [if i % 10 < 7 { 0.0 } else { 1.0 + i as f64 }]).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let res = skew_filter(&m).unwrap();
        assert!(res.widened);
        assert!(res.dropped <= 10);
        let again = skew_filter_with(&m.select_rows(&res.kept), &res.stats, res.cutoff);
        assert_eq!(again.dropped, 0);
    }

    #[test]
    fn split_examples() {
        let fm = FeatureMatrix::new(Matrix::new(10, 1, (0..10).map(f64::from).collect()).unwrap(), vec!["a".into()])
            .unwrap();
        let s = split(&fm, 0.8, 1).unwrap();
        assert_eq!((s.train.rows(), s.validation.rows(), s.test.rows()), (8, 1, 1));
        assert_eq!(split(&fm, 0.8, 1).unwrap(), s);
        let mut all: Vec<f64> = [&s.train, &s.validation, &s.test].iter().flat_map(|m| m.features.column(0)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());

        let mut labeled = FeatureMatrix::new(Matrix::new(40, 1, (0..40).map(f64::from).collect()).unwrap(), vec!["a".into()])
            .unwrap();
        labeled.labels = Some((0..40).map(|i| (i % 2) as u8).collect());
        let s = split(&labeled, 0.5, 3).unwrap();
        for part in [&s.train, &s.validation, &s.test] {
            let l = part.labels.as_ref().unwrap();
            let ones = l.iter().filter(|&&v| v == 1).count() as i64;
            assert!((2 * ones - l.len() as i64).abs() <= 2);
        }
        assert!(split(&fm, 1.0, 1).is_err());
        let tiny = fm.select(&[0, 1]);
        assert!(matches!(split(&tiny, 0.5, 1), Err(Error::Data(_))));
    }

    #[test]
    fn synth_counts_and_determinism() {
        let spec = SynthSpec { n_normal: 30, n_near: 0, n_far: 0, d: 3, rho: 0.5, seed: Some(2), near_offset: 1.5, far_offset: 8.0 };
        let fm = synth_generate(&spec, 42).unwrap();
        assert!(fm.labels.as_ref().unwrap().iter().all(|&l| l == 0));

        let spec = SynthSpec { n_near: 5, n_far: 7, ..spec };
        let a = synth_generate(&spec, 42).unwrap();
        let b = synth_generate(&spec, 42).unwrap();
        assert_eq!(a, b);
        let l = a.labels.as_ref().unwrap();
        assert_eq!(l.iter().filter(|&&v| v == 1).count(), 12);
        let tags = a.tags.as_ref().unwrap();
        assert_eq!(tags.iter().filter(|&&t| t == Tag::Near).count(), 5);
        assert_eq!(tags.iter().filter(|&&t| t == Tag::Far).count(), 7);

        let bad = SynthSpec { d: 1, ..spec };
        assert!(matches!(synth_generate(&bad, 42), Err(Error::Parameter(_))));
    }

    #[test]
    fn synth_csv_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { n_normal: 20, n_near: 3, n_far: 3, ..SynthSpec::benchmark() };
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        synth_generate(&spec, 42).unwrap().write_csv(&p1).unwrap();
        synth_generate(&spec, 42).unwrap().write_csv(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let cfg = FeatureConfig { label_column: Some("label".into()), tag_column: Some("tag".into()), ..Default::default() };
        let (back, _) = load_csv(&p1, &cfg).unwrap();
        assert_eq!(back, synth_generate(&spec, 42).unwrap());
    }
}
