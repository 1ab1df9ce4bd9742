//! Exact near-neighbor range search for non-negative unit vectors under
//! cosine similarity, via adaptive pooled testing.
//!
//! A query against `N` stored vectors normally costs `N` dot products. When
//! vectors are non-negative (think L2-normalized bag-of-features or
//! non-negative embeddings), the dot product of a query with the *sum* of a
//! contiguous group bounds every member's similarity from above, so whole
//! groups can be ruled out with a single test. Starting from one pool over
//! the entire collection and recursively halving every pool that still
//! clears the threshold, a query finds *exactly* the vectors with
//! `dot(q, x) >= rho` — same answer as the exhaustive scan, usually at a
//! small fraction of the dot products.
//!
//! Two pooled representations are provided:
//!
//! * [`SumIndex`] — prefix sums over insertion order. A child pool's value
//!   is the parent's minus the sibling's, so each split costs one new dot
//!   product, and appending a vector costs exactly `dim` element additions.
//! * [`MaxIndex`] — a tree of element-wise maxima (and minima when negative
//!   values are allowed, which makes the max variant serve signed data and
//!   signed queries). Bounds are looser by a data-dependent factor but need
//!   no subtraction identity.
//!
//! The [`cost_model`] module predicts query cost from a one-parameter
//! similarity model fitted to the data, [`datagen`] builds reproducible
//! synthetic collections with planted near-neighbors, and [`bench`] measures
//! everything against the exhaustive oracle.
//!
//! # Example
//!
//! ```
//! use gtnn::{search_sum, FeatureVector, SumIndex, VectorStore};
//!
//! let mut store = VectorStore::new(2, false)?;
//! store.append(&[1.0, 0.0])?;            // id 1
//! store.append(&[0.0, 1.0])?;            // id 2
//! store.append(&[1.0, 1.0])?;            // id 3, normalized internally
//! let index = SumIndex::build(&store)?;
//!
//! let query = FeatureVector::normalize(&[2.0, 0.0], false)?;
//! let found = search_sum(&index, &query, 0.7)?;
//! assert_eq!(found.neighbors, vec![1, 3]);
//! assert!(found.stats.dot_products <= 3);
//! # Ok::<(), gtnn::Error>(())
//! ```

pub mod bench;
mod container;
pub mod cost_model;
pub mod datagen;
pub mod error;
pub mod max_index;
pub mod search;
pub mod store;
pub mod sum_index;

pub use cost_model::{
    c_percentile, expected_tests_max_ub, expected_tests_sum, fit_lambda, prune_prob,
    simulate_splitting, tne_cdf, tne_moments, tne_pdf, CostPrediction, SimReport, TneFit,
    TneModel, Variant,
};
pub use error::{Error, Result};
pub use max_index::MaxIndex;
pub use search::{
    epsilon_guard, search_exhaustive, search_max, search_sum, QueryResult, SearchStats,
};
pub use store::{FeatureVector, VectorStore};
pub use sum_index::SumIndex;
