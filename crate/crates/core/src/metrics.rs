//! Pairwise and ranking evaluation metrics.
//!
//! | metric | scope | notes |
//! |---|---|---|
//! | AUC | scored pairs | rank-sum with ties counted ½ |
//! | ACC | scored pairs | best midpoint threshold, predict +1 iff score ≥ t |
//! | P@K, R@K, F1@K | ranked lists | recall over all relevant entries in the repository |
//! | Rank-1 | ranked lists | first hit relevant |
//! | MAP@K, MRR@K, NDCG@K | ranked lists | queries with nothing relevant are excluded |
//!
//! Every ranking metric is macro-averaged over queries.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::embed::Label;
use crate::error::{Error, Result};
use crate::search::RankedList;

/// Similarity scores of labeled function pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairScoreSet {
    pub items: Vec<(f64, Label)>,
}

impl PairScoreSet {
    pub fn new(items: Vec<(f64, Label)>) -> Self {
        PairScoreSet { items }
    }

    fn counts(&self) -> (usize, usize) {
        let pos = self.items.iter().filter(|(_, l)| *l == Label::Similar).count();
        (pos, self.items.len() - pos)
    }

    fn check(&self) -> Result<(usize, usize)> {
        let (pos, neg) = self.counts();
        if pos == 0 || neg == 0 {
            return Err(Error::invalid("pair scores need both positive and negative labels"));
        }
        if self.items.iter().any(|(s, _)| !s.is_finite()) {
            return Err(Error::invalid("pair scores must be finite"));
        }
        Ok((pos, neg))
    }
}

/// Area under the ROC curve via the Mann–Whitney rank sum.
pub fn roc_auc(s: &PairScoreSet) -> Result<f64> {
    let (pos, neg) = s.check()?;
    let mut sorted: Vec<(f64, Label)> = s.items.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        // average 1-based rank of the tie block
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_block = sorted[i..=j].iter().filter(|(_, l)| *l == Label::Similar).count();
        rank_sum += avg_rank * pos_in_block as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC points `(fpr, tpr)` from `(0,0)` to `(1,1)`, one per distinct score.
pub fn roc_curve(s: &PairScoreSet) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = s.check()?;
    let mut sorted = s.items.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            match sorted[i].1 {
                Label::Similar => tp += 1,
                Label::Dissimilar => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Best accuracy over thresholds at midpoints between adjacent distinct
/// scores (plus "everything positive" at the minimum score and "everything
/// negative" at +∞). Returns `(accuracy, smallest threshold achieving it)`.
pub fn accuracy_at_best_threshold(s: &PairScoreSet) -> Result<(f64, f64)> {
    let (pos, _) = s.check()?;
    let mut sorted = s.items.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();

    // group into distinct values with per-value label counts
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &(score, label) in &sorted {
        let is_pos = usize::from(label == Label::Similar);
        match groups.last_mut() {
            Some(g) if g.0 == score => {
                g.1 += is_pos;
                g.2 += 1 - is_pos;
            }
            _ => groups.push((score, is_pos, 1 - is_pos)),
        }
    }

    let mut best = (pos as f64 / n as f64, groups[0].0);
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    for c in 0..groups.len() {
        pos_below += groups[c].1;
        neg_below += groups[c].2;
        let threshold = match groups.get(c + 1) {
            Some(next) => (groups[c].0 + next.0) / 2.0,
            None => f64::INFINITY,
        };
        let correct = (pos - pos_below) + neg_below;
        let acc = correct as f64 / n as f64;
        if acc > best.0 {
            best = (acc, threshold);
        }
    }
    Ok(best)
}

fn require_queries(lists: &[RankedList]) -> Result<()> {
    if lists.is_empty() {
        return Err(Error::invalid("empty query set"));
    }
    Ok(())
}

fn top(list: &RankedList, k: usize) -> &[crate::search::RankedHit] {
    &list.results[..list.results.len().min(k)]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-query values for one list.
pub fn precision_recall_f1_single(list: &RankedList, k: usize) -> PrecisionRecall {
    let hits = top(list, k);
    let relevant = hits.iter().filter(|h| h.relevant).count() as f64;
    let precision = if hits.is_empty() {
        0.0
    } else {
        relevant / hits.len() as f64
    };
    let recall = relevant / list.total_relevant_in_repo.max(1) as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall {
        precision,
        recall,
        f1,
    }
}

/// Macro-averaged precision, recall and F1 at `k`.
pub fn precision_recall_f1_at_k(lists: &[RankedList], k: usize) -> Result<PrecisionRecall> {
    require_queries(lists)?;
    let n = lists.len() as f64;
    let mut acc = PrecisionRecall {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for l in lists {
        let v = precision_recall_f1_single(l, k);
        acc.precision += v.precision;
        acc.recall += v.recall;
        acc.f1 += v.f1;
    }
    Ok(PrecisionRecall {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    })
}

pub fn rank1(lists: &[RankedList]) -> Result<f64> {
    require_queries(lists)?;
    let hits = lists
        .iter()
        .filter(|l| l.results.first().is_some_and(|h| h.relevant))
        .count();
    Ok(hits as f64 / lists.len() as f64)
}

/// A mean over the queries that have at least one relevant repository entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    pub value: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

fn average_answerable(lists: &[RankedList], per_query: impl Fn(&RankedList) -> f64) -> Result<Averaged> {
    require_queries(lists)?;
    let used: Vec<&RankedList> = lists.iter().filter(|l| l.total_relevant_in_repo > 0).collect();
    if used.is_empty() {
        return Err(Error::invalid("every query has zero relevant entries"));
    }
    let sum: f64 = used.iter().map(|l| per_query(l)).sum();
    Ok(Averaged {
        value: sum / used.len() as f64,
        n_used: used.len(),
        n_excluded: lists.len() - used.len(),
    })
}

pub fn average_precision(list: &RankedList, k: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (j, h) in top(list, k).iter().enumerate() {
        if h.relevant {
            hits += 1;
            sum += hits as f64 / (j + 1) as f64;
        }
    }
    let denom = list.total_relevant_in_repo.min(k);
    if denom == 0 {
        0.0
    } else {
        sum / denom as f64
    }
}

pub fn reciprocal_rank(list: &RankedList, k: usize) -> f64 {
    top(list, k)
        .iter()
        .position(|h| h.relevant)
        .map_or(0.0, |j| 1.0 / (j + 1) as f64)
}

pub fn ndcg(list: &RankedList, k: usize) -> f64 {
    let dcg: f64 = top(list, k)
        .iter()
        .enumerate()
        .filter(|(_, h)| h.relevant)
        .map(|(j, _)| 1.0 / ((j + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..list.total_relevant_in_repo.min(k))
        .map(|j| 1.0 / ((j + 2) as f64).log2())
        .sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

pub fn map_at_k(lists: &[RankedList], k: usize) -> Result<Averaged> {
    average_answerable(lists, |l| average_precision(l, k))
}

pub fn mrr_at_k(lists: &[RankedList], k: usize) -> Result<Averaged> {
    average_answerable(lists, |l| reciprocal_rank(l, k))
}

pub fn ndcg_at_k(lists: &[RankedList], k: usize) -> Result<Averaged> {
    average_answerable(lists, |l| ndcg(l, k))
}

/// All ranking metrics over one set of lists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rank1: f64,
    pub map: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub n_queries: usize,
    pub n_excluded: usize,
}

pub fn ranking_metrics(lists: &[RankedList], k: usize) -> Result<RankingMetrics> {
    let prf = precision_recall_f1_at_k(lists, k)?;
    let map = map_at_k(lists, k)?;
    Ok(RankingMetrics {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        rank1: rank1(lists)?,
        map: map.value,
        mrr: mrr_at_k(lists, k)?.value,
        ndcg: ndcg_at_k(lists, k)?.value,
        n_queries: lists.len(),
        n_excluded: map.n_excluded,
    })
}

/// One row per metric, mirroring the usual BinSD accuracy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub acc: f64,
    pub threshold: f64,
    pub precision_k: f64,
    pub recall_k: f64,
    pub f1_k: f64,
    pub rank1: f64,
    pub map_k: f64,
    pub mrr_k: f64,
    pub ndcg_k: f64,
    pub k: usize,
    pub n_queries: usize,
    pub n_excluded: usize,
}

pub fn aggregate_report(lists: &[RankedList], pairs: &PairScoreSet, k: usize) -> Result<MetricReport> {
    let ranking = ranking_metrics(lists, k)?;
    let (acc, threshold) = accuracy_at_best_threshold(pairs)?;
    Ok(MetricReport {
        auc: roc_auc(pairs)?,
        acc,
        threshold,
        precision_k: ranking.precision,
        recall_k: ranking.recall,
        f1_k: ranking.f1,
        rank1: ranking.rank1,
        map_k: ranking.map,
        mrr_k: ranking.mrr,
        ndcg_k: ranking.ndcg,
        k,
        n_queries: ranking.n_queries,
        n_excluded: ranking.n_excluded,
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    metric: String,
    value: f64,
    n_queries: usize,
    n_excluded: usize,
    #[serde(rename = "K")]
    k: usize,
}

const EXCLUDING_METRICS: [&str; 3] = ["map_k", "mrr_k", "ndcg_k"];

impl MetricReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("auc", self.auc),
            ("acc", self.acc),
            ("threshold", self.threshold),
            ("precision_k", self.precision_k),
            ("recall_k", self.recall_k),
            ("f1_k", self.f1_k),
            ("rank1", self.rank1),
            ("map_k", self.map_k),
            ("mrr_k", self.mrr_k),
            ("ndcg_k", self.ndcg_k),
        ]
    }

    /// `metric,value,n_queries,n_excluded,K`, one row per metric.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (metric, value) in self.rows() {
            let n_excluded = if EXCLUDING_METRICS.contains(&metric) {
                self.n_excluded
            } else {
                0
            };
            wtr.serialize(CsvRow {
                metric: metric.to_string(),
                value,
                n_queries: self.n_queries,
                n_excluded,
                k: self.k,
            })
            .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut report = MetricReport {
            auc: f64::NAN,
            acc: f64::NAN,
            threshold: f64::NAN,
            precision_k: f64::NAN,
            recall_k: f64::NAN,
            f1_k: f64::NAN,
            rank1: f64::NAN,
            map_k: f64::NAN,
            mrr_k: f64::NAN,
            ndcg_k: f64::NAN,
            k: 0,
            n_queries: 0,
            n_excluded: 0,
        };
        let mut seen = 0;
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(csv_err)?;
            report.k = row.k;
            report.n_queries = row.n_queries;
            if EXCLUDING_METRICS.contains(&row.metric.as_str()) {
                report.n_excluded = row.n_excluded;
            }
            let slot = match row.metric.as_str() {
                "auc" => &mut report.auc,
                "acc" => &mut report.acc,
                "threshold" => &mut report.threshold,
                "precision_k" => &mut report.precision_k,
                "recall_k" => &mut report.recall_k,
                "f1_k" => &mut report.f1_k,
                "rank1" => &mut report.rank1,
                "map_k" => &mut report.map_k,
                "mrr_k" => &mut report.mrr_k,
                "ndcg_k" => &mut report.ndcg_k,
                other => return Err(Error::Schema(format!("unknown metric {other:?}"))),
            };
            *slot = row.value;
            seen += 1;
        }
        if seen != 10 {
            return Err(Error::Schema(format!("expected 10 metric rows, found {seen}")));
        }
        Ok(report)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Schema(format!("csv: {e}"))
}
