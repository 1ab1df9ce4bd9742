//! Range search by iterative binary splitting of pooled dot products.
//!
//! The driver keeps a stack of `(si, ei, sim)` pool frames, starting from the
//! whole collection. A pool whose pooled dot product clears the threshold is
//! split in half; with prefix-sum pooling only the right half costs a new dot
//! product (the left half is the parent minus the right), and a two-member
//! pool resolves both singletons with a single extra dot product the same
//! way. Element-wise-max pooling has no such subtraction identity, so both
//! children are re-bounded after every expansion.
//!
//! Pruning compares against `rho - eps_guard` (see [`epsilon_guard`]) so that
//! accumulated float error can only cost extra work, never a missed neighbor;
//! final acceptance of a singleton uses `>= rho` exactly, making ties at the
//! threshold neighbors.

use crate::error::{Error, Result};
use crate::max_index::MaxIndex;
use crate::store::{dot64, FeatureVector, VectorStore};
use crate::sum_index::SumIndex;

/// Per-query instrumentation.
///
/// Rounds index level-order depth in the implicit splitting tree: the root
/// pool is round 0 and rounds run through `ceil(log2 N)`. Every visited pool
/// is counted exactly once as pruned, expanded, or leaf-resolved.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Full-width dot products computed (each pool bound or pooled dot).
    pub dot_products: u64,
    /// Pool frames popped and examined.
    pub visited_pools: u64,
    pub pruned_per_round: Vec<u64>,
    pub expanded_per_round: Vec<u64>,
    pub resolved_per_round: Vec<u64>,
}

impl SearchStats {
    fn new(count: usize) -> Self {
        let rounds = if count == 0 { 0 } else { ceil_log2(count) + 1 };
        SearchStats {
            dot_products: 0,
            visited_pools: 0,
            pruned_per_round: vec![0; rounds],
            expanded_per_round: vec![0; rounds],
            resolved_per_round: vec![0; rounds],
        }
    }

    /// Number of rounds tracked (`ceil(log2 N) + 1` for a non-empty store).
    pub fn rounds(&self) -> usize {
        self.pruned_per_round.len()
    }

    /// Total pools across all three outcome histograms; equals
    /// `visited_pools` for every search variant.
    pub fn histogram_total(&self) -> u64 {
        self.pruned_per_round.iter().sum::<u64>()
            + self.expanded_per_round.iter().sum::<u64>()
            + self.resolved_per_round.iter().sum::<u64>()
    }
}

/// A search outcome: matching ids (ascending) plus instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// 1-based ids of vectors with dot product >= rho, ascending.
    pub neighbors: Vec<usize>,
    pub stats: SearchStats,
}

/// Pruning slack protecting against accumulated float error: a pool is only
/// discarded when its pooled dot product falls below `rho - epsilon_guard(n)`.
pub fn epsilon_guard(count: usize) -> f64 {
    if count <= 1 {
        0.0
    } else {
        1e-6 * (count as f64).log2()
    }
}

pub(crate) fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Anything that can report a pooled "dot product" over a contiguous 1-based
/// id range. The vector search pools real dot products; the cost-model
/// simulator pools scalars drawn from the similarity model.
pub(crate) trait RangePool {
    fn count(&self) -> usize;
    fn range_dot(&self, si: usize, ei: usize) -> f64;
}

struct Frame {
    si: usize,
    ei: usize,
    sim: f64,
    depth: usize,
}

/// Shared splitting driver for subtraction-capable (sum-style) pools.
pub(crate) fn run_sum_splitting<P: RangePool>(pool: &P, rho: f64, guard: f64) -> QueryResult {
    let n = pool.count();
    let mut stats = SearchStats::new(n);
    let mut neighbors = Vec::new();
    if n == 0 {
        return QueryResult { neighbors, stats };
    }

    let root = pool.range_dot(1, n);
    stats.dot_products = 1;
    let mut stack = vec![Frame { si: 1, ei: n, sim: root, depth: 0 }];
    while let Some(Frame { si, ei, sim, depth }) = stack.pop() {
        stats.visited_pools += 1;
        let len = ei - si + 1;
        if len == 1 {
            if sim >= rho {
                neighbors.push(si);
                stats.resolved_per_round[depth] += 1;
            } else {
                stats.pruned_per_round[depth] += 1;
            }
        } else if sim < rho - guard {
            stats.pruned_per_round[depth] += 1;
        } else if len == 2 {
            // One new dot product resolves both members: the right singleton
            // directly, the left as the parent sum minus the right.
            let rsim = pool.range_dot(ei, ei);
            stats.dot_products += 1;
            let lsim = sim - rsim;
            if lsim >= rho {
                neighbors.push(si);
            }
            if rsim >= rho {
                neighbors.push(ei);
            }
            stats.resolved_per_round[depth] += 1;
        } else {
            let mid = si + len / 2 - 1;
            let rsim = pool.range_dot(mid + 1, ei);
            stats.dot_products += 1;
            // Right pushed first so the left half (and so ascending ids) pops
            // first.
            stack.push(Frame { si: mid + 1, ei, sim: rsim, depth: depth + 1 });
            stack.push(Frame { si, ei: mid, sim: sim - rsim, depth: depth + 1 });
            stats.expanded_per_round[depth] += 1;
        }
    }
    QueryResult { neighbors, stats }
}

struct SumPool<'a> {
    index: &'a SumIndex,
    q: &'a [f32],
}

impl RangePool for SumPool<'_> {
    fn count(&self) -> usize {
        self.index.len()
    }

    fn range_dot(&self, si: usize, ei: usize) -> f64 {
        self.index.range_dot(self.q, si, ei)
    }
}

fn validate_rho(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho <= 0.0 || rho > 2.0 {
        return Err(Error::InvalidThreshold { rho });
    }
    Ok(())
}

fn first_negative(values: &[f32]) -> Option<(usize, f32)> {
    values.iter().copied().enumerate().find(|&(_, v)| v < 0.0)
}

/// Exact range search over a prefix-sum index.
///
/// Returns every id whose dot product with `q` is at least `rho`. Requires a
/// non-negative query (the pooled-sum pruning rule is unsound otherwise).
pub fn search_sum(index: &SumIndex, q: &FeatureVector, rho: f64) -> Result<QueryResult> {
    validate_rho(rho)?;
    if q.dim() != index.dim() {
        return Err(Error::DimensionMismatch { expected: index.dim(), actual: q.dim() });
    }
    if let Some((pos, v)) = first_negative(q.values()) {
        return Err(Error::NegativeValue { position: pos + 1, value: v as f64 });
    }
    let guard = epsilon_guard(index.len());
    Ok(run_sum_splitting(&SumPool { index, q: q.values() }, rho, guard))
}

/// Exact range search over a max-pool index.
///
/// `store` must be the exact store the index was built from: leaf pools of
/// two are resolved against the raw vectors. Negative query coordinates are
/// supported when the index carries min vectors.
pub fn search_max(
    index: &MaxIndex,
    store: &VectorStore,
    q: &FeatureVector,
    rho: f64,
) -> Result<QueryResult> {
    validate_rho(rho)?;
    if q.dim() != index.dim() {
        return Err(Error::DimensionMismatch { expected: index.dim(), actual: q.dim() });
    }
    if store.len() != index.len() || store.dim() != index.dim() {
        return Err(Error::StoreMismatch {
            reason: format!(
                "index covers {} vectors of dim {}, store holds {} of dim {}",
                index.len(),
                index.dim(),
                store.len(),
                store.dim()
            ),
        });
    }
    if q.has_negative() && !index.has_min() {
        return Err(Error::UnsupportedNegativeQuery);
    }

    let n = index.len();
    let mut stats = SearchStats::new(n);
    let mut neighbors = Vec::new();
    if n == 0 {
        return Ok(QueryResult { neighbors, stats });
    }
    let guard = epsilon_guard(n);
    let qv = q.values();

    struct NodeFrame {
        node: usize,
        bound: f64,
        depth: usize,
    }

    let root = index.root().expect("non-empty index has a root");
    let root_bound = index.bound_raw(qv, root);
    stats.dot_products = 1;
    let mut stack = vec![NodeFrame { node: root, bound: root_bound, depth: 0 }];
    while let Some(NodeFrame { node, bound, depth }) = stack.pop() {
        stats.visited_pools += 1;
        let len = index.node_len(node);
        if len == 1 {
            // A singleton's max (and min) vector is the member itself, so the
            // bound is its exact dot product.
            let (si, _) = index.node_interval_raw(node);
            if bound >= rho {
                neighbors.push(si);
                stats.resolved_per_round[depth] += 1;
            } else {
                stats.pruned_per_round[depth] += 1;
            }
        } else if bound < rho - guard {
            stats.pruned_per_round[depth] += 1;
        } else if len == 2 {
            // No subtraction identity here: both members are tested directly.
            let (si, ei) = index.node_interval_raw(node);
            let dsi = dot64(qv, store.row(si).expect("validated range"));
            let dei = dot64(qv, store.row(ei).expect("validated range"));
            stats.dot_products += 2;
            if dsi >= rho {
                neighbors.push(si);
            }
            if dei >= rho {
                neighbors.push(ei);
            }
            stats.resolved_per_round[depth] += 1;
        } else {
            let (left, right) = index.children_raw(node).expect("pools over 2 have children");
            let lbound = index.bound_raw(qv, left);
            let rbound = index.bound_raw(qv, right);
            stats.dot_products += 2;
            stack.push(NodeFrame { node: right, bound: rbound, depth: depth + 1 });
            stack.push(NodeFrame { node: left, bound: lbound, depth: depth + 1 });
            stats.expanded_per_round[depth] += 1;
        }
    }
    Ok(QueryResult { neighbors, stats })
}

/// Brute-force oracle: one dot product per stored vector.
pub fn search_exhaustive(store: &VectorStore, q: &FeatureVector, rho: f64) -> Result<QueryResult> {
    validate_rho(rho)?;
    if q.dim() != store.dim() {
        return Err(Error::DimensionMismatch { expected: store.dim(), actual: q.dim() });
    }
    let n = store.len();
    let mut stats = SearchStats::new(n);
    let mut neighbors = Vec::new();
    for (i, row) in store.rows().enumerate() {
        if dot64(q.values(), row) >= rho {
            neighbors.push(i + 1);
        }
    }
    stats.dot_products = n as u64;
    stats.visited_pools = n as u64;
    if n > 0 {
        stats.resolved_per_round[0] = neighbors.len() as u64;
        stats.pruned_per_round[0] = (n - neighbors.len()) as u64;
    }
    Ok(QueryResult { neighbors, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_from_rows(rows: &[&[f64]]) -> VectorStore {
        let mut s = VectorStore::new(rows[0].len(), false).unwrap();
        for r in rows {
            s.append(r).unwrap();
        }
        s
    }

    fn all_three(store: &VectorStore, q: &FeatureVector, rho: f64) -> [QueryResult; 3] {
        let sum = SumIndex::build(store).unwrap();
        let max = MaxIndex::build(store).unwrap();
        [
            search_sum(&sum, q, rho).unwrap(),
            search_max(&max, store, q, rho).unwrap(),
            search_exhaustive(store, q, rho).unwrap(),
        ]
    }

    #[test]
    fn four_vector_example() {
        // Dots with q=(1,0): 1.0, 0.0, 0.7071, 0.6 — so rho=0.7 keeps {1, 3}.
        let store = store_from_rows(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.70710678, 0.70710678],
            &[0.6, 0.8],
        ]);
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        for (i, r) in all_three(&store, &q, 0.7).into_iter().enumerate() {
            assert_eq!(r.neighbors, vec![1, 3], "variant {i}");
        }
    }

    #[test]
    fn hand_traced_stats_on_one_hot_store() {
        // Rows e1..e4, q = e1, rho = 0.5. Root sim 1.0 expands; left pair
        // [1,2] resolves with one extra dot (members 1.0 and 0.0); right pair
        // [3,4] has sim 0.0 and is pruned. Totals: 3 dots, 3 visited pools.
        let store = store_from_rows(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let q = FeatureVector::normalize(&[1.0, 0.0, 0.0, 0.0], false).unwrap();
        let idx = SumIndex::build(&store).unwrap();
        let r = search_sum(&idx, &q, 0.5).unwrap();
        assert_eq!(r.neighbors, vec![1]);
        assert_eq!(r.stats.dot_products, 3);
        assert_eq!(r.stats.visited_pools, 3);
        assert_eq!(r.stats.expanded_per_round, vec![1, 0, 0]);
        assert_eq!(r.stats.resolved_per_round, vec![0, 1, 0]);
        assert_eq!(r.stats.pruned_per_round, vec![0, 1, 0]);
        assert_eq!(r.stats.histogram_total(), r.stats.visited_pools);
    }

    #[test]
    fn tie_at_threshold_is_a_neighbor() {
        let store = store_from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        for r in all_three(&store, &q, 1.0) {
            assert_eq!(r.neighbors, vec![1]);
        }
    }

    #[test]
    fn rho_above_any_cosine_returns_empty() {
        let store = store_from_rows(&[&[1.0, 0.0], &[0.6, 0.8]]);
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        for r in all_three(&store, &q, 1.5) {
            assert!(r.neighbors.is_empty());
        }
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let store = store_from_rows(&[&[1.0, 0.0]]);
        let idx = SumIndex::build(&store).unwrap();
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        for rho in [0.0, -0.5, 2.5, f64::NAN] {
            match search_sum(&idx, &q, rho) {
                Err(Error::InvalidThreshold { .. }) => {}
                other => panic!("rho={rho}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn sum_search_rejects_negative_query() {
        let store = store_from_rows(&[&[1.0, 0.0]]);
        let idx = SumIndex::build(&store).unwrap();
        let q = FeatureVector::normalize(&[0.6, -0.8], true).unwrap();
        match search_sum(&idx, &q, 0.5) {
            Err(Error::NegativeValue { position: 2, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn max_search_checks_store_identity() {
        let store = store_from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let idx = MaxIndex::build(&store).unwrap();
        let other = store_from_rows(&[&[1.0, 0.0]]);
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        match search_max(&idx, &other, &q, 0.5) {
            Err(Error::StoreMismatch { .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn single_vector_store() {
        let store = store_from_rows(&[&[0.6, 0.8]]);
        let q = FeatureVector::normalize(&[0.6, 0.8], false).unwrap();
        for r in all_three(&store, &q, 0.99) {
            assert_eq!(r.neighbors, vec![1]);
            assert_eq!(r.stats.dot_products, 1);
        }
    }

    #[test]
    fn empty_store_returns_empty() {
        let store = VectorStore::new(2, false).unwrap();
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        let sum = SumIndex::build(&store).unwrap();
        let r = search_sum(&sum, &q, 0.5).unwrap();
        assert!(r.neighbors.is_empty());
        assert_eq!(r.stats.dot_products, 0);
        assert_eq!(r.stats.rounds(), 0);
    }

    #[test]
    fn exhaustive_costs_exactly_n() {
        let store = store_from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]]);
        let q = FeatureVector::normalize(&[1.0, 0.0], false).unwrap();
        let r = search_exhaustive(&store, &q, 0.5).unwrap();
        assert_eq!(r.stats.dot_products, 3);
        assert_eq!(r.stats.histogram_total(), 3);
    }
}
