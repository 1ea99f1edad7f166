//! Ranking-quality metrics: tie-aware ROC-AUC plus Precision@K / Recall@K
//! over a score report's ranking, and the strategy-comparison table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{Model, ScoreReport, Strategy};

/// Metrics of one ranking against ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc: f64,
    pub precision_at: BTreeMap<usize, f64>,
    pub recall_at: BTreeMap<usize, f64>,
    pub n_anomalies: usize,
    pub n_nodes: usize,
}

impl EvalResult {
    /// CSV header matching [`csv_row`](Self::csv_row): auc then one
    /// precision@K and one recall@K column per K.
    pub fn csv_header(ks: &[usize]) -> String {
        let mut cols = vec!["auc".to_string()];
        cols.extend(ks.iter().map(|k| format!("precision@{k}")));
        cols.extend(ks.iter().map(|k| format!("recall@{k}")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![format!("{}", self.auc)];
        cols.extend(self.precision_at.values().map(|v| format!("{v}")));
        cols.extend(self.recall_at.values().map(|v| format!("{v}")));
        cols.join(",")
    }
}

/// Tie-aware ROC-AUC by the rank-sum formula: the probability that a random
/// positive outscores a random negative, counting ties half. O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "scores vs labels".into(),
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "roc_auc scores".into(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "roc_auc needs both classes, found {n_pos} positives and {n_neg} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // average ranks over tie groups (1-based)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Precision@K and Recall@K over the report's ranking, for each K.
pub fn precision_recall_at(
    report: &ScoreReport,
    labels: &[u8],
    ks: &[usize],
) -> Result<(BTreeMap<usize, f64>, BTreeMap<usize, f64>)> {
    ranking_precision_recall(&report.ranking, labels, ks)
}

fn ranking_precision_recall(
    ranking: &[usize],
    labels: &[u8],
    ks: &[usize],
) -> Result<(BTreeMap<usize, f64>, BTreeMap<usize, f64>)> {
    let n = ranking.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "labels".into(),
            expected: n,
            found: labels.len(),
        });
    }
    let n_anomalies = labels.iter().filter(|&&l| l == 1).count();
    let mut precision = BTreeMap::new();
    let mut recall = BTreeMap::new();
    for &k in ks {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "K = {k} out of range 1..={n}"
            )));
        }
        let hits = ranking[..k].iter().filter(|&&node| labels[node] == 1).count();
        precision.insert(k, hits as f64 / k as f64);
        recall.insert(
            k,
            if n_anomalies == 0 {
                0.0
            } else {
                hits as f64 / n_anomalies as f64
            },
        );
    }
    Ok((precision, recall))
}

/// AUC plus Precision/Recall@K assembled into one result.
pub fn evaluate(report: &ScoreReport, labels: &[u8], ks: &[usize]) -> Result<EvalResult> {
    let auc = roc_auc(&report.scores, labels)?;
    let (precision_at, recall_at) = precision_recall_at(report, labels, ks)?;
    Ok(EvalResult {
        auc,
        precision_at,
        recall_at,
        n_anomalies: labels.iter().filter(|&&l| l == 1).count(),
        n_nodes: labels.len(),
    })
}

/// Evaluate raw per-node scores: the ranking is rebuilt with the standard
/// descending order and index tie-break.
pub fn evaluate_scores(scores: &[f64], labels: &[u8], ks: &[usize]) -> Result<EvalResult> {
    let auc = roc_auc(scores, labels)?;
    let ranking = crate::model::rank_descending(scores);
    let (precision_at, recall_at) = ranking_precision_recall(&ranking, labels, ks)?;
    Ok(EvalResult {
        auc,
        precision_at,
        recall_at,
        n_anomalies: labels.iter().filter(|&&l| l == 1).count(),
        n_nodes: labels.len(),
    })
}

/// Score the graph under all four ranking strategies and evaluate each.
pub fn compare_strategies(
    model: &Model,
    g: &AttributedGraph,
    labels: &[u8],
    ks: &[usize],
) -> Result<Vec<(Strategy, EvalResult)>> {
    Strategy::ALL
        .iter()
        .map(|&strategy| {
            let report = model.score(g, strategy)?;
            Ok((strategy, evaluate(&report, labels, ks)?))
        })
        .collect()
}
