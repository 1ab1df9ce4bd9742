//! Benchmark harness: static comparisons against the exhaustive oracle,
//! streaming-insert runs, and empirical-vs-predicted cost checks.
//!
//! Every run measures correctness, not just speed: the exhaustive scan is
//! always executed as ground truth and per-query precision/recall are
//! reported (an exact method must score 1.0 on both everywhere).

use crate::cost_model::{
    c_percentile, expected_tests_max_ub, expected_tests_sum, fit_lambda, CostPrediction, Variant,
};
use crate::error::{Error, Result};
use crate::max_index::MaxIndex;
use crate::search::{search_exhaustive, search_max, search_sum, QueryResult};
use crate::store::{dot64, FeatureVector, VectorStore};
use crate::sum_index::SumIndex;
use crate::datagen::plant_neighbor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::time::Instant;

/// One query under one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    /// 1-based query index.
    pub query_id: usize,
    pub variant: Variant,
    pub dot_products: u64,
    pub wall_time_us: f64,
    pub result_size: usize,
    /// Fraction of reported ids that are true neighbors (1.0 for an empty
    /// result).
    pub precision: f64,
    /// Fraction of true neighbors reported (1.0 for an empty truth set).
    pub recall: f64,
}

/// Aggregates for one strategy across all queries.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub queries: usize,
    pub mean_dot_products: f64,
    pub mean_wall_time_us: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// True when every query scored precision and recall 1.0.
    pub exact: bool,
}

/// Full static-benchmark output.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub n: usize,
    pub dim: usize,
    pub rho: f64,
    pub records: Vec<QueryRecord>,
    pub summaries: Vec<VariantSummary>,
}

impl BenchReport {
    /// Records as CSV plus a commented summary block.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("query_id,variant,dot_products,wall_time_us,result_size,precision,recall\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{:.3},{},{:.6},{:.6}",
                r.query_id,
                r.variant.name(),
                r.dot_products,
                r.wall_time_us,
                r.result_size,
                r.precision,
                r.recall
            )
            .expect("string write");
        }
        out.push_str("# summary\n");
        writeln!(out, "# n={} dim={} rho={}", self.n, self.dim, self.rho).expect("string write");
        for s in &self.summaries {
            writeln!(
                out,
                "# variant={} queries={} mean_dot_products={:.3} mean_wall_time_us={:.3} \
                 mean_precision={:.6} mean_recall={:.6} exact={}",
                s.variant.name(),
                s.queries,
                s.mean_dot_products,
                s.mean_wall_time_us,
                s.mean_precision,
                s.mean_recall,
                s.exact
            )
            .expect("string write");
        }
        out
    }

    pub fn summary_for(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }
}

/// Count of ids present in both ascending lists.
fn overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

fn precision_recall(result: &[usize], truth: &[usize]) -> (f64, f64) {
    let shared = overlap(result, truth) as f64;
    let precision = if result.is_empty() { 1.0 } else { shared / result.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { shared / truth.len() as f64 };
    (precision, recall)
}

fn checked(result: QueryResult) -> QueryResult {
    assert_eq!(
        result.stats.histogram_total(),
        result.stats.visited_pools,
        "every visited pool must be pruned, expanded, or resolved exactly once"
    );
    result
}

fn build_pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match jobs {
        None => Ok(None),
        Some(j) => {
            if j == 0 {
                return Err(Error::InvalidParameter { name: "jobs", value: 0.0 });
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|_| Error::InvalidParameter { name: "jobs", value: j as f64 })?;
            Ok(Some(pool))
        }
    }
}

/// Run each requested strategy over every query, with the exhaustive scan as
/// ground truth, optionally on a dedicated pool of `jobs` threads.
pub fn run_static(
    store: &VectorStore,
    queries: &[FeatureVector],
    rho: f64,
    variants: &[Variant],
    jobs: Option<usize>,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    if variants.is_empty() {
        return Err(Error::InvalidParameter { name: "variants", value: 0.0 });
    }
    for q in queries {
        if q.dim() != store.dim() {
            return Err(Error::DimensionMismatch { expected: store.dim(), actual: q.dim() });
        }
    }
    let sum_index =
        if variants.contains(&Variant::Sum) { Some(SumIndex::build(store)?) } else { None };
    let max_index =
        if variants.contains(&Variant::Max) { Some(MaxIndex::build(store)?) } else { None };

    let run = || -> Result<Vec<Vec<QueryRecord>>> {
        queries
            .par_iter()
            .enumerate()
            .map(|(qi, q)| {
                let started = Instant::now();
                let truth = checked(search_exhaustive(store, q, rho)?);
                let oracle_us = started.elapsed().as_secs_f64() * 1e6;
                let mut records = Vec::with_capacity(variants.len());
                for &variant in variants {
                    let (result, wall_time_us) = match variant {
                        Variant::Sum => {
                            let index = sum_index.as_ref().expect("built above");
                            let t = Instant::now();
                            let r = checked(search_sum(index, q, rho)?);
                            (r, t.elapsed().as_secs_f64() * 1e6)
                        }
                        Variant::Max => {
                            let index = max_index.as_ref().expect("built above");
                            let t = Instant::now();
                            let r = checked(search_max(index, store, q, rho)?);
                            (r, t.elapsed().as_secs_f64() * 1e6)
                        }
                        Variant::Exhaustive => (truth.clone(), oracle_us),
                    };
                    let (precision, recall) = precision_recall(&result.neighbors, &truth.neighbors);
                    records.push(QueryRecord {
                        query_id: qi + 1,
                        variant,
                        dot_products: result.stats.dot_products,
                        wall_time_us,
                        result_size: result.neighbors.len(),
                        precision,
                        recall,
                    });
                }
                Ok(records)
            })
            .collect()
    };
    let per_query = match build_pool(jobs)? {
        Some(pool) => pool.install(run)?,
        None => run()?,
    };

    let records: Vec<QueryRecord> = per_query.into_iter().flatten().collect();
    let summaries = variants
        .iter()
        .map(|&variant| summarize(&records, variant))
        .collect();
    Ok(BenchReport { n: store.len(), dim: store.dim(), rho, records, summaries })
}

fn summarize(records: &[QueryRecord], variant: Variant) -> VariantSummary {
    let rows: Vec<&QueryRecord> = records.iter().filter(|r| r.variant == variant).collect();
    let count = rows.len().max(1) as f64;
    VariantSummary {
        variant,
        queries: rows.len(),
        mean_dot_products: rows.iter().map(|r| r.dot_products as f64).sum::<f64>() / count,
        mean_wall_time_us: rows.iter().map(|r| r.wall_time_us).sum::<f64>() / count,
        mean_precision: rows.iter().map(|r| r.precision).sum::<f64>() / count,
        mean_recall: rows.iter().map(|r| r.recall).sum::<f64>() / count,
        exact: rows.iter().all(|r| r.precision == 1.0 && r.recall == 1.0),
    }
}

/// One insert batch plus the verification query that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    /// 1-based batch index.
    pub batch: usize,
    /// Collection size after the batch.
    pub store_size: usize,
    /// Element additions the index spent on this batch.
    pub element_adds: u64,
    pub dot_products: u64,
    pub result_size: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Outcome of a streaming-insert run.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingReport {
    pub rho: f64,
    pub initial_size: usize,
    pub final_size: usize,
    pub batch_size: usize,
    pub records: Vec<BatchRecord>,
    /// Every verification query scored precision and recall 1.0.
    pub exact: bool,
    /// Every inserted vector cost exactly `dim` element additions.
    pub adds_per_vector_ok: bool,
}

/// Feed `full` into a growing index: build on the first
/// `initial_fraction * len` vectors, append the rest in batches, and after
/// each batch verify a fresh query (a planted near-neighbor of a random
/// current member, so its truth set is non-empty) against the exhaustive
/// oracle over the grown store.
pub fn run_streaming(
    full: &VectorStore,
    rho: f64,
    initial_fraction: f64,
    batch_size: usize,
    seed: u64,
) -> Result<StreamingReport> {
    if full.is_empty() {
        return Err(Error::InvalidParameter { name: "store_len", value: 0.0 });
    }
    if !(0.0..=1.0).contains(&initial_fraction) || initial_fraction == 0.0 {
        return Err(Error::InvalidParameter { name: "initial_fraction", value: initial_fraction });
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter { name: "batch_size", value: 0.0 });
    }
    let n = full.len();
    let dim = full.dim();
    let initial_size = ((initial_fraction * n as f64).floor() as usize).clamp(1, n);

    let mut grown = VectorStore::new(dim, full.allow_negative())?;
    for id in 1..=initial_size {
        grown.append_vector(&full.get(id)?)?;
    }
    let mut index = SumIndex::build(&grown)?;

    let mut records = Vec::new();
    let mut adds_per_vector_ok = true;
    let mut exact = true;
    let mut next = initial_size + 1;
    let mut batch = 0;
    while next <= n {
        batch += 1;
        let end = (next + batch_size - 1).min(n);
        let mut batch_adds = 0;
        for id in next..=end {
            let v = full.get(id)?;
            grown.append_vector(&v)?;
            let before = index.element_adds();
            index.append(v.values())?;
            let spent = index.element_adds() - before;
            batch_adds += spent;
            if spent != dim as u64 {
                adds_per_vector_ok = false;
            }
        }
        next = end + 1;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch as u64);
        let probe_id = rng.random_range(1..=grown.len());
        let query = plant_neighbor(&mut rng, &grown.get(probe_id)?, rho)?;
        let result = checked(search_sum(&index, &query, rho)?);
        let truth = checked(search_exhaustive(&grown, &query, rho)?);
        let (precision, recall) = precision_recall(&result.neighbors, &truth.neighbors);
        if precision != 1.0 || recall != 1.0 {
            exact = false;
        }
        assert!(!truth.neighbors.is_empty(), "planted probe guarantees a neighbor");
        records.push(BatchRecord {
            batch,
            store_size: grown.len(),
            element_adds: batch_adds,
            dot_products: result.stats.dot_products,
            result_size: result.neighbors.len(),
            precision,
            recall,
        });
    }
    Ok(StreamingReport {
        rho,
        initial_size,
        final_size: grown.len(),
        batch_size,
        records,
        exact,
        adds_per_vector_ok,
    })
}

/// Side-by-side view of predicted and measured query cost on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryComparison {
    pub n: usize,
    pub rho: f64,
    /// Rate fitted from the measured query/member similarities.
    pub lambda: f64,
    /// 90th-percentile max-pool looseness on this data.
    pub c90: f64,
    pub predicted_sum: CostPrediction,
    pub empirical_sum_tests: f64,
    /// Measured mean over predicted mean for the sum strategy.
    pub sum_ratio: f64,
    pub predicted_max_ub: CostPrediction,
    pub empirical_max_tests: f64,
    /// Whether the measured max-strategy mean respects its predicted upper
    /// bound.
    pub max_within_bound: bool,
}

impl TheoryComparison {
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("rho", format!("{}", self.rho)),
            ("lambda_fit", format!("{:.4}", self.lambda)),
            ("c90", format!("{:.4}", self.c90)),
            ("predicted_sum_tests", format!("{:.3}", self.predicted_sum.expected_tests)),
            ("empirical_sum_tests", format!("{:.3}", self.empirical_sum_tests)),
            ("sum_ratio", format!("{:.4}", self.sum_ratio)),
            ("predicted_max_ub_tests", format!("{:.3}", self.predicted_max_ub.expected_tests)),
            ("empirical_max_tests", format!("{:.3}", self.empirical_max_tests)),
            ("max_within_bound", self.max_within_bound.to_string()),
        ]
    }
}

/// Fit the similarity model on the actual query/member dots, measure both
/// search strategies, and compare with the cost model's predictions.
pub fn compare_theory(
    store: &VectorStore,
    queries: &[FeatureVector],
    rho: f64,
) -> Result<TheoryComparison> {
    if queries.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    let sum_index = SumIndex::build(store)?;
    let max_index = MaxIndex::build(store)?;

    let dots: Vec<f64> = queries
        .par_iter()
        .flat_map_iter(|q| {
            store.rows().map(|row| dot64(q.values(), row).clamp(0.0, 1.0)).collect::<Vec<f64>>()
        })
        .collect();
    let fit = fit_lambda(&dots)?;
    let c90 = c_percentile(store, &max_index, queries, 90.0)?;

    let measured: Vec<(u64, u64)> = queries
        .par_iter()
        .map(|q| {
            let s = search_sum(&sum_index, q, rho)?;
            let m = search_max(&max_index, store, q, rho)?;
            Ok((s.stats.dot_products, m.stats.dot_products))
        })
        .collect::<Result<_>>()?;
    let count = measured.len() as f64;
    let empirical_sum_tests = measured.iter().map(|&(s, _)| s as f64).sum::<f64>() / count;
    let empirical_max_tests = measured.iter().map(|&(_, m)| m as f64).sum::<f64>() / count;

    let predicted_sum = expected_tests_sum(store.len(), rho, fit.lambda)?;
    let predicted_max_ub = expected_tests_max_ub(store.len(), rho, fit.lambda, c90)?;
    Ok(TheoryComparison {
        n: store.len(),
        rho,
        lambda: fit.lambda,
        c90,
        sum_ratio: empirical_sum_tests / predicted_sum.expected_tests,
        max_within_bound: empirical_max_tests <= predicted_max_ub.expected_tests,
        predicted_sum,
        empirical_sum_tests,
        predicted_max_ub,
        empirical_max_tests,
    })
}
