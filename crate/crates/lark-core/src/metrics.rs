//! Ranking metrics (MRR, HITS@K) and token-distribution statistics.
//!
//! A prediction's rank is its position in the backend's emission order,
//! 1-based. Per query, MRR scores the best-ranked entity that is in the gold
//! set (zero when none is); HITS@K scores whether any of the first K
//! predictions is gold. Dataset values are means over queries, reported per
//! query type and overall.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ids::EntityId;
use crate::query::QueryType;
use crate::Result;

/// How an answer list becomes a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOrder {
    /// Preserve the backend's emission order.
    #[default]
    Emission,
    /// Re-rank by ascending numeric ID.
    SortedId,
}

/// Reciprocal rank of the best-ranked predicted entity present in gold.
pub fn mrr(predicted: &[EntityId], gold: &BTreeSet<EntityId>) -> f64 {
    predicted
        .iter()
        .position(|e| gold.contains(e))
        .map(|i| 1.0 / (i as f64 + 1.0))
        .unwrap_or(0.0)
}

/// 1.0 when any of the first `k` predictions is in gold, else 0.0.
pub fn hits_at_k(predicted: &[EntityId], gold: &BTreeSet<EntityId>, k: usize) -> f64 {
    if predicted.iter().take(k).any(|e| gold.contains(e)) {
        1.0
    } else {
        0.0
    }
}

/// One evaluated query: the ranked prediction and its gold set.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub query_id: String,
    pub qtype: QueryType,
    pub predicted: Vec<EntityId>,
    pub gold: BTreeSet<EntityId>,
}

/// Mean metrics over one bucket of queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

/// Order statistics of per-query token counts for one type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
    /// Percent of queries strictly under the token limit.
    pub coverage_percent: f64,
}

/// Per-type and aggregate metrics, plus token statistics when computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_type: BTreeMap<QueryType, TypeMetrics>,
    pub aggregate: TypeMetrics,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub token_stats: BTreeMap<QueryType, TokenStats>,
}

/// Score a set of evaluated queries, grouped by type.
pub fn evaluate(inputs: &[EvalInput], rank_order: RankOrder) -> MetricsReport {
    let mut buckets: BTreeMap<QueryType, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
    for input in inputs {
        let ranked: Vec<EntityId> = match rank_order {
            RankOrder::Emission => input.predicted.clone(),
            RankOrder::SortedId => {
                let mut v = input.predicted.clone();
                v.sort_unstable();
                v
            }
        };
        buckets.entry(input.qtype).or_default().push((
            mrr(&ranked, &input.gold),
            hits_at_k(&ranked, &input.gold, 1),
            hits_at_k(&ranked, &input.gold, 3),
            hits_at_k(&ranked, &input.gold, 10),
        ));
    }

    let mean_of = |scores: &[(f64, f64, f64, f64)]| TypeMetrics {
        mrr: scores.iter().map(|s| s.0).sum::<f64>() / scores.len() as f64,
        hits1: scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64,
        hits3: scores.iter().map(|s| s.2).sum::<f64>() / scores.len() as f64,
        hits10: scores.iter().map(|s| s.3).sum::<f64>() / scores.len() as f64,
        n_queries: scores.len(),
    };

    let per_type: BTreeMap<QueryType, TypeMetrics> =
        buckets.iter().map(|(&t, scores)| (t, mean_of(scores))).collect();
    let all: Vec<(f64, f64, f64, f64)> = buckets.into_values().flatten().collect();
    let aggregate = if all.is_empty() {
        TypeMetrics { mrr: 0.0, hits1: 0.0, hits3: 0.0, hits10: 0.0, n_queries: 0 }
    } else {
        mean_of(&all)
    };

    MetricsReport { per_type, aggregate, token_stats: BTreeMap::new() }
}

/// Order statistics for one bucket of token counts; errors on an empty bucket.
pub fn token_stats(qtype: QueryType, counts: &[usize], limit: usize) -> Result<TokenStats> {
    if counts.is_empty() {
        return Err(Error::EmptyBucket(qtype.tag().to_string()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Ok(TokenStats {
        mean: sorted.iter().sum::<usize>() as f64 / n as f64,
        median,
        min: sorted[0],
        max: sorted[n - 1],
        coverage_percent: 100.0 * sorted.iter().filter(|&&c| c < limit).count() as f64 / n as f64,
    })
}

/// Token statistics per type over `(type, count)` records.
pub fn token_stats_by_type(
    records: &[(QueryType, usize)],
    limit: usize,
) -> Result<BTreeMap<QueryType, TokenStats>> {
    let mut buckets: BTreeMap<QueryType, Vec<usize>> = BTreeMap::new();
    for &(t, count) in records {
        buckets.entry(t).or_default().push(count);
    }
    buckets
        .into_iter()
        .map(|(t, counts)| Ok((t, token_stats(t, &counts, limit)?)))
        .collect()
}

// ─── Report tables ──────────────────────────────────────────────────

const MAIN_COLUMNS: [QueryType; 9] = [
    QueryType::OneP,
    QueryType::TwoP,
    QueryType::ThreeP,
    QueryType::TwoI,
    QueryType::ThreeI,
    QueryType::Ip,
    QueryType::Pi,
    QueryType::TwoU,
    QueryType::Up,
];

const NEGATION_COLUMNS: [QueryType; 5] = [
    QueryType::TwoIn,
    QueryType::ThreeIn,
    QueryType::Inp,
    QueryType::Pin,
    QueryType::Pni,
];

fn metric_row(
    label: &str,
    report: &MetricsReport,
    columns: &[QueryType],
    pick: impl Fn(&TypeMetrics) -> f64,
) -> String {
    let mut row = format!("{label:<8}");
    for t in columns {
        match report.per_type.get(t) {
            Some(m) => row.push_str(&format!(" {:>6.1}", pick(m) * 100.0)),
            None => row.push_str(&format!(" {:>6}", "-")),
        }
    }
    row
}

fn table_for(report: &MetricsReport, title: &str, columns: &[QueryType]) -> String {
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&format!("{:<8}", "metric"));
    for t in columns {
        out.push_str(&format!(" {:>6}", t.tag()));
    }
    out.push('\n');
    for (label, pick) in [
        ("mrr", (|m: &TypeMetrics| m.mrr) as fn(&TypeMetrics) -> f64),
        ("hits@1", |m| m.hits1),
        ("hits@3", |m| m.hits3),
        ("hits@10", |m| m.hits10),
    ] {
        out.push_str(&metric_row(label, report, columns, pick));
        out.push('\n');
    }
    out
}

/// Render the two score tables (projection/geometric/compound, then
/// negation), values scaled to percentages.
pub fn render_metrics_tables(report: &MetricsReport) -> String {
    let mut out = table_for(report, "scores x100 (projection / geometric / compound)", &MAIN_COLUMNS);
    if NEGATION_COLUMNS.iter().any(|t| report.per_type.contains_key(t)) {
        out.push('\n');
        out.push_str(&table_for(report, "scores x100 (negation)", &NEGATION_COLUMNS));
    }
    out.push_str(&format!(
        "\naggregate: mrr {:.4}  hits@1 {:.4}  hits@3 {:.4}  hits@10 {:.4}  over {} queries\n",
        report.aggregate.mrr,
        report.aggregate.hits1,
        report.aggregate.hits3,
        report.aggregate.hits10,
        report.aggregate.n_queries
    ));
    out
}

/// Render the token-distribution table (mean, median, min, max, coverage).
pub fn render_token_table(stats: &BTreeMap<QueryType, TokenStats>, limit: usize) -> String {
    let mut out = format!(
        "{:<6} {:>10} {:>10} {:>8} {:>8} {:>7}   (limit {})\n",
        "type", "mean", "median", "min", "max", "cov%", limit
    );
    for (t, s) in stats {
        out.push_str(&format!(
            "{:<6} {:>10.1} {:>10.1} {:>8} {:>8} {:>7.1}\n",
            t.tag(),
            s.mean,
            s.median,
            s.min,
            s.max,
            s.coverage_percent
        ));
    }
    out
}
