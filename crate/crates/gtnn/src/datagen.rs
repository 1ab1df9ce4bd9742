//! Synthetic data with controllable similarity structure.
//!
//! Vectors are drawn from a symmetric Dirichlet (gamma draws renormalized to
//! the unit sphere); small concentrations give sparse-looking, near-orthogonal
//! vectors whose pairwise dots hug zero — the regime the cost model assumes.
//! On top of the background collection, `plant_neighbor` manufactures vectors
//! whose dot with a given query lands just above a target threshold, which is
//! exactly the hard case for a pruning search.
//!
//! Everything is deterministic in the seed: vector `i` of a collection comes
//! from substream `i`, query `j` from substream `2^32 + j`, and the planting
//! of spec `k` from substream `2^33 + k`, so any slice can be regenerated
//! independently and results do not depend on thread count.

use crate::error::{Error, Result};
use crate::store::{FeatureVector, VectorStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

/// Substream bases keeping member vectors, queries, and planting draws
/// non-overlapping under one seed.
const QUERY_STREAM_BASE: u64 = 1 << 32;
const PLANT_STREAM_BASE: u64 = 1 << 33;

/// Planted vectors land in `[target + PLANT_MARGIN_LO, target + PLANT_MARGIN_HI]`,
/// strictly inside the advertised `[target, target + 0.02]` window so that
/// float rounding in later index arithmetic cannot push them outside it.
const PLANT_MARGIN_LO: f64 = 0.002;
const PLANT_MARGIN_HI: f64 = 0.018;

/// Highest plantable target short of an exact duplicate (the band above it
/// must stay within the unit-cosine range).
const PLANT_MAX_TARGET: f64 = 1.0 - PLANT_MARGIN_HI;

/// One group of planted near-neighbors for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    /// 1-based index into the generated queries.
    pub query_id: usize,
    /// How many member vectors to overwrite with planted neighbors.
    pub neighbor_count: usize,
    /// The planted dot products land in `(target, target + 0.02]`.
    pub target_similarity: f64,
}

/// Recipe for a reproducible collection.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub count: usize,
    pub dim: usize,
    /// Symmetric Dirichlet concentration; smaller means sparser vectors and
    /// smaller background similarities.
    pub concentration: f64,
    pub seed: u64,
    pub planted: Vec<PlantSpec>,
}

/// Where the planted neighbors of one spec ended up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedGroup {
    pub query_id: usize,
    /// 1-based member ids that were overwritten, ascending.
    pub ids: Vec<usize>,
}

/// A generated collection plus its queries and planting record.
#[derive(Debug)]
pub struct Dataset {
    pub store: VectorStore,
    pub queries: Vec<FeatureVector>,
    pub planted: Vec<PlantedGroup>,
}

fn validate_gen(dim: usize, concentration: f64) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter { name: "dim", value: 0.0 });
    }
    if !concentration.is_finite() || concentration <= 0.0 {
        return Err(Error::InvalidParameter { name: "concentration", value: concentration });
    }
    Ok(())
}

fn dirichlet_unit(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| gamma.sample(rng)).collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate `count` Dirichlet-distributed unit vectors.
pub fn gen_store(count: usize, dim: usize, concentration: f64, seed: u64) -> Result<VectorStore> {
    validate_gen(dim, concentration)?;
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|_| Error::InvalidParameter { name: "concentration", value: concentration })?;
    let rows: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| dirichlet_unit(&mut stream_rng(seed, i), &gamma, dim))
        .collect();
    let mut store = VectorStore::new(dim, false)?;
    for row in &rows {
        store.append(row)?;
    }
    Ok(store)
}

/// Generate a collection, `num_queries` queries from the same distribution,
/// and apply every planting spec.
pub fn gen_dataset(spec: &GenSpec, num_queries: usize) -> Result<Dataset> {
    validate_gen(spec.dim, spec.concentration)?;
    let mut store = gen_store(spec.count, spec.dim, spec.concentration, spec.seed)?;
    let gamma = Gamma::new(spec.concentration, 1.0)
        .map_err(|_| Error::InvalidParameter { name: "concentration", value: spec.concentration })?;
    let queries: Vec<FeatureVector> = (0..num_queries as u64)
        .into_par_iter()
        .map(|j| {
            let row = dirichlet_unit(&mut stream_rng(spec.seed, QUERY_STREAM_BASE + j), &gamma, spec.dim);
            FeatureVector::normalize(&row, false)
        })
        .collect::<Result<_>>()?;

    // Positions are drawn from the ids no earlier spec has claimed, so
    // planted groups never overwrite each other.
    let mut free: Vec<usize> = (1..=spec.count).collect();
    let mut planted = Vec::with_capacity(spec.planted.len());
    for (k, plant) in spec.planted.iter().enumerate() {
        if plant.query_id == 0 || plant.query_id > queries.len() {
            return Err(Error::IdOutOfRange { id: plant.query_id, count: queries.len() });
        }
        if plant.neighbor_count > free.len() {
            return Err(Error::InvalidParameter {
                name: "neighbor_count",
                value: plant.neighbor_count as f64,
            });
        }
        let mut rng = stream_rng(spec.seed, PLANT_STREAM_BASE + k as u64);
        let base = &queries[plant.query_id - 1];
        let mut picks =
            rand::seq::index::sample(&mut rng, free.len(), plant.neighbor_count).into_vec();
        let mut ids: Vec<usize> = picks.iter().map(|&i| free[i]).collect();
        picks.sort_unstable_by(|a, b| b.cmp(a));
        for i in picks {
            free.swap_remove(i);
        }
        ids.sort_unstable();
        for &id in &ids {
            let neighbor = plant_neighbor(&mut rng, base, plant.target_similarity)?;
            store.replace_row(id, &neighbor)?;
        }
        planted.push(PlantedGroup { query_id: plant.query_id, ids });
    }
    Ok(Dataset { store, queries, planted })
}

/// Build a unit vector whose dot product with `base` lies in
/// `[target + 0.002, target + 0.018]`.
///
/// A fresh Dirichlet direction `r` is blended with the base,
/// `normalize((1 - w) * base + w * r)`, and the blend weight `w` is bisected:
/// the dot falls monotonically from 1 (at `w = 0`) to `base . r` (at
/// `w = 1`), so any band above that floor is reachable. Directions too
/// similar to the base are redrawn. `target = 1` returns the base itself;
/// targets in `(0.982, 1)` leave no room for the band and are rejected.
pub fn plant_neighbor<R: Rng + ?Sized>(
    rng: &mut R,
    base: &FeatureVector,
    target: f64,
) -> Result<FeatureVector> {
    if !target.is_finite() || target <= 0.0 || target > 1.0 {
        return Err(Error::InvalidParameter { name: "target_similarity", value: target });
    }
    if target == 1.0 {
        return Ok(base.clone());
    }
    if target > PLANT_MAX_TARGET {
        return Err(Error::InfeasibleTarget { target });
    }
    if base.has_negative() {
        return Err(Error::NegativeValue { position: 0, value: f64::NAN });
    }
    let lo = target + PLANT_MARGIN_LO;
    let hi = target + PLANT_MARGIN_HI;
    let dim = base.dim();
    let bv: Vec<f64> = base.values().iter().map(|&v| v as f64).collect();

    // A direction only works if its dot with the base sits below the band.
    // Each failed attempt halves the Dirichlet concentration: sparser draws
    // approach random one-hot vectors, whose dot with the base is a single
    // coordinate, so the reachable floor drops toward the base's smallest
    // coordinates.
    let mut direction = None;
    for attempt in 0..32 {
        let gamma = Gamma::new(2f64.powi(-attempt), 1.0).expect("positive shape");
        let raw = (0..dim).map(|_| gamma.sample(rng)).collect::<Vec<f64>>();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let unit: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let dot = unit.iter().zip(&bv).map(|(a, b)| a * b).sum::<f64>();
        if dot < lo - 1e-3 {
            direction = Some(unit);
            break;
        }
    }
    let Some(r) = direction else {
        return Err(Error::InfeasibleTarget { target });
    };

    let blend = |w: f64| -> Vec<f64> {
        bv.iter().zip(&r).map(|(b, r)| (1.0 - w) * b + w * r).collect()
    };
    let dot_with_base = |m: &[f64]| -> f64 {
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        m.iter().zip(&bv).map(|(a, b)| a * b).sum::<f64>() / norm
    };

    let (mut wlo, mut whi) = (0.0f64, 1.0f64);
    for _ in 0..64 {
        let w = 0.5 * (wlo + whi);
        let m = blend(w);
        let d = dot_with_base(&m);
        if d > hi {
            wlo = w;
        } else if d < lo {
            whi = w;
        } else {
            return FeatureVector::normalize(&m, false);
        }
    }
    Err(Error::InfeasibleTarget { target })
}
