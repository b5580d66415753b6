//! Scoring against a trained model, two-sided band classification, metrics,
//! AUC, and report files.
//!
//! A sample is normal when its score lies inside `[low, high]`. Near
//! anomalies fall below the band and far anomalies above it.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoenc::forward;
use crate::error::{Error, Result};
use crate::ndmath::Matrix;
use crate::robust::{classical_md, robust_md};
use crate::train::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    RobustMd,
    ClassicalMd,
    EuclideanRecon,
}

impl ScoringMode {
    pub const ALL: [ScoringMode; 3] = [ScoringMode::RobustMd, ScoringMode::ClassicalMd, ScoringMode::EuclideanRecon];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::RobustMd => "robust_md",
            ScoringMode::ClassicalMd => "classical_md",
            ScoringMode::EuclideanRecon => "euclidean_recon",
        }
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoringMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown scoring mode '{s}'")))
    }
}

/// Closed interval of normal scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBand {
    pub low: f64,
    pub high: f64,
}

impl ScoreBand {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) || low >= high {
            return Err(Error::param(format!("invalid score band ({low}, {high})")));
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, score: f64) -> bool {
        score >= self.low && score <= self.high
    }
}

impl std::str::FromStr for ScoreBand {
    type Err = Error;

    /// Parses `"low,high"`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::param(format!("band must be 'low,high', got '{s}'")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("band bound '{v}' is not a number")))
        };
        ScoreBand::new(parse(a)?, parse(b)?)
    }
}

/// Population a sample belongs to, or the side of the band it fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Normal,
    Near,
    Far,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Normal => "normal",
            Tag::Near => "near",
            Tag::Far => "far",
        }
    }
}

impl std::str::FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Tag::Normal),
            "near" => Ok(Tag::Near),
            "far" => Ok(Tag::Far),
            other => Err(Error::data(format!("unknown tag '{other}'"))),
        }
    }
}

/// Per-row mean squared error between two equally shaped matrices.
pub fn row_mse(data: &Matrix, recon: &Matrix) -> Result<Vec<f64>> {
    if data.shape() != recon.shape() {
        return Err(Error::param("reconstruction shape does not match data"));
    }
    let d = data.cols() as f64;
    Ok(data
        .iter_rows()
        .zip(recon.iter_rows())
        .map(|(x, r)| x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d)
        .collect())
}

/// Anomaly scores of every row of `data` under `mode`.
pub fn score(model: &TrainedModel, data: &Matrix, mode: ScoringMode) -> Result<Vec<f64>> {
    let width = model.params.input_dim();
    if data.cols() != width {
        return Err(Error::data(format!(
            "data has {} features but the model expects {width}",
            data.cols()
        )));
    }
    let trace = forward(&model.params, data)?;
    match mode {
        ScoringMode::RobustMd => robust_md(trace.latent(), &model.robust_stats),
        ScoringMode::ClassicalMd => {
            let stats = model
                .classical_stats
                .as_ref()
                .ok_or_else(|| Error::param("model carries no classical statistics for classical_md scoring"))?;
            classical_md(trace.latent(), stats)
        }
        ScoringMode::EuclideanRecon => row_mse(data, trace.reconstruction()),
    }
}

/// Median training score for `mode`, the centre used to fold scores.
pub fn reference_median(model: &TrainedModel, mode: ScoringMode) -> Result<f64> {
    let r = model
        .score_reference
        .as_ref()
        .ok_or_else(|| Error::param("model carries no training score reference"))?;
    Ok(match mode {
        ScoringMode::RobustMd => r.robust_md_median,
        ScoringMode::ClassicalMd => r.classical_md_median,
        ScoringMode::EuclideanRecon => r.euclidean_recon_median,
    })
}

/// `|score - centre|`, so that both sides of the band rank as anomalous.
pub fn fold_scores(scores: &[f64], centre: f64) -> Vec<f64> {
    scores.iter().map(|s| (s - centre).abs()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub predictions: Vec<u8>,
    pub tags: Vec<Tag>,
}

/// Flag scores strictly outside the band. Equality with a bound is normal.
pub fn classify(scores: &[f64], band: &ScoreBand) -> Classification {
    let tags: Vec<Tag> = scores
        .iter()
        .map(|&s| {
            if s < band.low {
                Tag::Near
            } else if s > band.high {
                Tag::Far
            } else {
                Tag::Normal
            }
        })
        .collect();
    let predictions = tags.iter().map(|t| u8::from(*t != Tag::Normal)).collect();
    Classification { predictions, tags }
}

fn check_labels(labels: &[u8]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::data(format!("labels must be 0 or 1, found {bad}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub band: ScoreBand,
    pub f1: f64,
    pub flagged: usize,
}

/// Exhaustive search over bands whose bounds are midpoints between distinct
/// sorted scores (plus one sentinel past each end), maximizing the F1 of the
/// anomaly class. Ties go to the band that flags the fewest samples.
pub fn select_band(scores: &[f64], labels: &[u8]) -> Result<BandSelection> {
    if scores.len() != labels.len() {
        return Err(Error::param(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_labels(labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Threshold("labels contain a single class".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::data("non-finite score"));
    }

    let mut pairs: Vec<(f64, u8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // group equal scores: (value, anomalies, normals)
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (s, l) in pairs {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if l == 1 { g.1 += 1 } else { g.2 += 1 }
            }
            _ => groups.push((s, usize::from(l == 1), usize::from(l == 0))),
        }
    }
    let m = groups.len();
    let (min, max) = (groups[0].0, groups[m - 1].0);
    let pad = if max > min { 0.5 * (max - min) } else { 0.5 };
    // cut c sits below group c; cut m sits above the last group
    let cut_value = |c: usize| {
        if c == 0 {
            min - pad
        } else if c == m {
            max + pad
        } else {
            0.5 * (groups[c - 1].0 + groups[c].0)
        }
    };
    let mut below_pos = vec![0usize; m + 1];
    let mut below_neg = vec![0usize; m + 1];
    for (c, g) in groups.iter().enumerate() {
        below_pos[c + 1] = below_pos[c] + g.1;
        below_neg[c + 1] = below_neg[c] + g.2;
    }
    let (total_pos, total_neg) = (below_pos[m], below_neg[m]);

    let mut best: Option<(f64, usize, usize, usize)> = None;
    for a in 0..m {
        for b in (a + 1)..=m {
            let tp = below_pos[a] + (total_pos - below_pos[b]);
            let fp = below_neg[a] + (total_neg - below_neg[b]);
            let f1 = 2.0 * tp as f64 / (tp + fp + total_pos) as f64;
            let flagged = tp + fp;
            let better = match best {
                None => true,
                Some((bf, bflag, _, _)) => f1 > bf || (f1 == bf && flagged < bflag),
            };
            if better {
                best = Some((f1, flagged, a, b));
            }
        }
    }
    let (f1, flagged, a, b) = best.expect("at least one candidate band");
    Ok(BandSelection { band: ScoreBand::new(cut_value(a), cut_value(b))?, f1, flagged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Set when nothing was predicted anomalous, so precision was defined as 0.
    pub precision_undefined: bool,
}

/// Confusion-matrix metrics with the anomaly class as positive.
pub fn metrics(predictions: &[u8], labels: &[u8]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::param(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::param("metrics of empty vectors"));
    }
    check_labels(labels)?;
    check_labels(predictions)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Metrics {
        accuracy: ratio(tp + tn, labels.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        precision_undefined: tp + fp == 0,
    })
}

/// Mann-Whitney AUC of already-folded scores; ties count one half.
pub fn auc(transformed: &[f64], labels: &[u8]) -> Result<f64> {
    if transformed.len() != labels.len() {
        return Err(Error::param(format!(
            "{} scores but {} labels",
            transformed.len(),
            labels.len()
        )));
    }
    check_labels(labels)?;
    if transformed.iter().any(|s| s.is_nan()) {
        return Err(Error::data("NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..transformed.len()).collect();
    idx.sort_by(|&a, &b| transformed[a].total_cmp(&transformed[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && transformed[idx[j + 1]] == transformed[idx[i]] {
            j += 1;
        }
        // average of the 1-based ranks i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scoring_mode: ScoringMode,
    pub band: ScoreBand,
    /// Centre used for the folded scores.
    pub reference_median: f64,
    pub scores: Vec<f64>,
    pub transformed_scores: Vec<f64>,
    pub predictions: Vec<u8>,
    pub tags: Vec<Tag>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<ReportMetrics>,
}

impl ScoreReport {
    /// Classify `scores` with `band` and, when labels are given, evaluate.
    pub fn build(
        scoring_mode: ScoringMode,
        scores: Vec<f64>,
        reference_median: f64,
        band: ScoreBand,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let Classification { predictions, tags } = classify(&scores, &band);
        let transformed_scores = fold_scores(&scores, reference_median);
        let metrics = match &labels {
            Some(l) => Some(ReportMetrics {
                metrics: metrics(&predictions, l)?,
                auc: auc(&transformed_scores, l)?,
            }),
            None => None,
        };
        Ok(Self {
            scoring_mode,
            band,
            reference_median,
            scores,
            transformed_scores,
            predictions,
            tags,
            labels,
            metrics,
        })
    }

    /// Recall restricted to the rows whose ground-truth population is `group`.
    pub fn group_recall(&self, truth: &[Tag], group: Tag) -> Result<f64> {
        if truth.len() != self.predictions.len() {
            return Err(Error::param("population tags do not match the report length"));
        }
        let (hit, total) = truth
            .iter()
            .zip(&self.predictions)
            .filter(|(t, _)| **t == group)
            .fold((0usize, 0usize), |(h, n), (_, &p)| (h + usize::from(p == 1), n + 1));
        if total == 0 {
            return Err(Error::Metric(format!("no rows tagged {}", group.as_str())));
        }
        Ok(hit as f64 / total as f64)
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Write `{prefix}.report.json` and `{prefix}.trace.csv`; returns both paths.
pub fn emit_report(report: &ScoreReport, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let prefix = prefix.as_ref();
    let json_path = with_suffix(prefix, ".report.json");
    let csv_path = with_suffix(prefix, ".trace.csv");

    let file = File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n").map_err(|e| Error::io(&json_path, e))?;
    w.flush().map_err(|e| Error::io(&json_path, e))?;

    let mut wtr = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["index", "score", "transformed_score"];
    if report.labels.is_some() {
        header.push("label");
    }
    header.extend(["prediction", "tag"]);
    wtr.write_record(&header)?;
    for i in 0..report.scores.len() {
        let mut rec = vec![
            i.to_string(),
            report.scores[i].to_string(),
            report.transformed_scores[i].to_string(),
        ];
        if let Some(l) = &report.labels {
            rec.push(l[i].to_string());
        }
        rec.push(report.predictions[i].to_string());
        rec.push(report.tags[i].as_str().to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok((json_path, csv_path))
}
