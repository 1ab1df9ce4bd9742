//! Statistical cost model for pooled range search.
//!
//! Query/member dot products of non-negative unit vectors concentrate near
//! zero and are well described by an exponential distribution truncated to
//! `[0, 1]`, parameterized by a rate `lambda` fitted from sampled dots. On
//! top of that similarity model this module predicts how many dot products
//! the splitting search performs (`expected_tests_sum`, and an upper bound
//! for the max-pool variant in `expected_tests_max_ub`), fits `lambda` from
//! data (`fit_lambda`), measures the max-pool looseness factor
//! (`c_percentile`), and Monte-Carlo-checks the prediction by running the
//! real splitting driver on synthetic similarities (`simulate_splitting`).

use crate::error::{Error, Result};
use crate::max_index::MaxIndex;
use crate::search::{ceil_log2, epsilon_guard, run_sum_splitting, RangePool};
use crate::store::{dot64, FeatureVector, VectorStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_lr;

/// Pool size at which pool-sum tail probabilities switch from the exact
/// truncated-gamma form to the normal (CLT) approximation.
///
/// The normal approximation's absolute error decays like `1/sqrt(L)` and is
/// still a few hundredths at `L = 8..32` (measured worst case ~0.047 at
/// `L = 8`), which is too coarse: pruning probabilities must track a
/// million-sample Monte Carlo within 0.03. The truncated-gamma route is
/// exact for integer `L` whenever the threshold lies below the per-member
/// cap of 1, so it is kept until the CLT error is comfortably below a
/// hundredth.
pub const CLT_MIN_POOL: f64 = 64.0;

/// Bisection bracket for `fit_lambda`; outside it the truncated exponential
/// is indistinguishable from uniform (low end) or degenerate at 0 (high end).
const LAMBDA_MIN: f64 = 1e-6;
const LAMBDA_MAX: f64 = 1e4;

/// Below this rate the closed-form moments lose digits to cancellation and a
/// short series around the uniform limit is used instead.
const SMALL_LAMBDA: f64 = 1e-2;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Exponential distribution with rate `lambda`, truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TneModel {
    lambda: f64,
}

impl TneModel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter { name: "lambda", value: lambda });
        }
        Ok(TneModel { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Density `lambda * exp(-lambda x) / (1 - exp(-lambda))` on `[0, 1]`,
    /// zero elsewhere.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.lambda * (-self.lambda * x).exp() / -(-self.lambda).exp_m1()
    }

    /// Distribution function, clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            (-self.lambda * x).exp_m1() / (-self.lambda).exp_m1()
        }
    }

    pub fn mean(&self) -> f64 {
        let l = self.lambda;
        if l < SMALL_LAMBDA {
            // Series around the uniform limit; the closed form subtracts two
            // nearly equal O(1/lambda) terms here.
            0.5 - l / 12.0 + l * l * l / 720.0
        } else {
            1.0 / l + 1.0 / (1.0 - l.exp())
        }
    }

    pub fn variance(&self) -> f64 {
        let l = self.lambda;
        if l < SMALL_LAMBDA {
            1.0 / 12.0 - l * l / 240.0 + l.powi(4) / 6048.0
        } else {
            let em = (-l).exp_m1(); // e^{-l} - 1
            1.0 / (l * l) - (-l).exp() / (em * em)
        }
    }

    /// Inverse-CDF sampling; exact for any positive rate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        -(u * (-self.lambda).exp_m1()).ln_1p() / self.lambda
    }
}

pub fn tne_pdf(x: f64, lambda: f64) -> Result<f64> {
    Ok(TneModel::new(lambda)?.pdf(x))
}

pub fn tne_cdf(x: f64, lambda: f64) -> Result<f64> {
    Ok(TneModel::new(lambda)?.cdf(x))
}

/// `(mean, variance)` of the truncated exponential with rate `lambda`.
pub fn tne_moments(lambda: f64) -> Result<(f64, f64)> {
    let m = TneModel::new(lambda)?;
    Ok((m.mean(), m.variance()))
}

/// Probability that a pool of `pool_size` independent model similarities sums
/// to less than `rho`, i.e. that the splitting search prunes such a pool.
///
/// `pool_size` may be fractional (the round-level recursion halves real
/// numbers). Small pools use the exact truncated-gamma form: conditioned on
/// every member being below the cap, the pool sum restricted to `[0, rho]`
/// with `rho <= 1` is a renormalized gamma tail. Pools of at least
/// [`CLT_MIN_POOL`] use the normal approximation.
pub fn prune_prob(pool_size: f64, rho: f64, lambda: f64) -> Result<f64> {
    if !pool_size.is_finite() || pool_size <= 0.0 {
        return Err(Error::InvalidParameter { name: "pool_size", value: pool_size });
    }
    if !rho.is_finite() || rho <= 0.0 || rho > 2.0 {
        return Err(Error::InvalidThreshold { rho });
    }
    let model = TneModel::new(lambda)?;
    if rho >= pool_size {
        // Every member is at most 1, so the sum cannot reach rho.
        return Ok(1.0);
    }
    let p = if pool_size >= CLT_MIN_POOL {
        let mean = pool_size * model.mean();
        let sd = (pool_size * model.variance()).sqrt();
        std_normal_cdf((rho - mean) / sd)
    } else {
        gamma_lr(pool_size, lambda * rho) / gamma_lr(pool_size, lambda * pool_size)
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Which search strategy a prediction is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Sum,
    Max,
    Exhaustive,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sum => "sum",
            Variant::Max => "max",
            Variant::Exhaustive => "exhaustive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Variant::Sum),
            "max" => Ok(Variant::Max),
            "exhaustive" => Ok(Variant::Exhaustive),
            _ => Err(Error::Parse {
                line: 0,
                message: format!("unknown variant '{s}' (expected sum, max, or exhaustive)"),
            }),
        }
    }
}

/// Predicted dot-product cost of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPrediction {
    pub variant: Variant,
    pub n: usize,
    pub rho: f64,
    pub lambda: f64,
    /// Max-pool looseness factor; `None` for the sum variant.
    pub c: Option<f64>,
    /// Expected surviving pools per round, root round first.
    pub round_pools: Vec<f64>,
    pub expected_tests: f64,
}

impl CostPrediction {
    /// Key/value rendering for reports.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let mut kv = vec![
            ("variant", self.variant.name().to_string()),
            ("n", self.n.to_string()),
            ("rho", format!("{}", self.rho)),
            ("lambda", format!("{}", self.lambda)),
        ];
        if let Some(c) = self.c {
            kv.push(("c", format!("{c}")));
        }
        kv.push(("rounds", self.round_pools.len().to_string()));
        kv.push(("expected_tests", format!("{:.3}", self.expected_tests)));
        kv.push(("speedup_vs_exhaustive", format!("{:.3}", self.n as f64 / self.expected_tests)));
        kv
    }
}

fn validate_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0 });
    }
    Ok(())
}

/// Expected dot products for a sum-pooled query over `n` vectors.
///
/// Round `k` (root = round 0) holds `Q_k` expected pools; a pool survives
/// pruning with the complement of [`prune_prob`] at its parent's size and
/// each split of a surviving parent costs one new dot product shared by two
/// children. The total is `1 + sum(Q_k) / 2` over the non-root rounds.
pub fn expected_tests_sum(n: usize, rho: f64, lambda: f64) -> Result<CostPrediction> {
    validate_n(n)?;
    let rounds = ceil_log2(n) + 1;
    let mut round_pools = Vec::with_capacity(rounds);
    round_pools.push(1.0);
    let mut q = 1.0;
    let mut total = 0.0;
    for k in 1..rounds {
        let parent_size = n as f64 / 2f64.powi(k as i32 - 1);
        let survive = 1.0 - prune_prob(parent_size, rho, lambda)?;
        q *= 2.0 * survive;
        round_pools.push(q);
        total += q;
    }
    Ok(CostPrediction {
        variant: Variant::Sum,
        n,
        rho,
        lambda,
        c: None,
        round_pools,
        expected_tests: 1.0 + 0.5 * total,
    })
}

/// Upper bound on expected dot products for a max-pooled query.
///
/// A max pool's bound is at most `c` times its best member dot, so the pool
/// is certainly pruned when every member falls below `rho / c`; with `F` the
/// member cdf at that point, a pool of size `L` survives with probability at
/// most `1 - F^L`. Max pools admit no parent-minus-sibling shortcut, so each
/// surviving pool costs a full dot product (no halving).
pub fn expected_tests_max_ub(n: usize, rho: f64, lambda: f64, c: f64) -> Result<CostPrediction> {
    validate_n(n)?;
    if !c.is_finite() || c < 1.0 {
        return Err(Error::InvalidParameter { name: "c", value: c });
    }
    let model = TneModel::new(lambda)?;
    if !rho.is_finite() || rho <= 0.0 || rho > 2.0 {
        return Err(Error::InvalidThreshold { rho });
    }
    let f = model.cdf(rho / c);
    let ln_f = f.ln(); // -inf when f == 0 handled below
    let rounds = ceil_log2(n) + 1;
    let mut round_pools = Vec::with_capacity(rounds);
    round_pools.push(1.0);
    let mut q = 1.0;
    let mut total = 0.0;
    for k in 1..rounds {
        let parent_size = n as f64 / 2f64.powi(k as i32 - 1);
        let p = if f == 0.0 { 0.0 } else { (parent_size * ln_f).exp() };
        q *= 2.0 * (1.0 - p);
        round_pools.push(q);
        total += q;
    }
    Ok(CostPrediction {
        variant: Variant::Max,
        n,
        rho,
        lambda,
        c: Some(c),
        round_pools,
        expected_tests: 1.0 + total,
    })
}

/// Maximum-likelihood-equivalent moment fit of the truncated-exponential
/// rate from observed similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct TneFit {
    pub lambda: f64,
    /// Number of samples the fit used.
    pub samples: usize,
    /// `|model_mean(lambda) - sample_mean|` at the returned rate.
    pub residual: f64,
}

/// Minimum sample count for a meaningful fit.
pub const FIT_MIN_SAMPLES: usize = 100;

/// Fit the truncated-exponential rate by matching the sample mean.
///
/// The model mean is strictly decreasing in the rate, so a bisection over
/// `[1e-6, 1e4]` pins it down to machine precision. Samples must lie in
/// `[0, 1]`; sample means outside the bracket's mean range cannot come from
/// this family at a sane rate and are rejected as degenerate.
pub fn fit_lambda(samples: &[f64]) -> Result<TneFit> {
    if samples.len() < FIT_MIN_SAMPLES {
        return Err(Error::InsufficientSamples { got: samples.len(), need: FIT_MIN_SAMPLES });
    }
    for (i, &s) in samples.iter().enumerate() {
        if !s.is_finite() || !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfRange { position: i + 1, value: s });
        }
    }
    let target = samples.iter().sum::<f64>() / samples.len() as f64;
    let mean_at = |l: f64| TneModel { lambda: l }.mean();
    if target >= mean_at(LAMBDA_MIN) || target <= mean_at(LAMBDA_MAX) {
        return Err(Error::DegenerateSamples { mean: target });
    }
    let (mut lo, mut hi) = (LAMBDA_MIN, LAMBDA_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) > target {
            lo = mid; // mean too high => rate too low
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    Ok(TneFit { lambda, samples: samples.len(), residual: (mean_at(lambda) - target).abs() })
}

/// Observed looseness of max-pool bounds at a given percentile.
///
/// For every query and every pool, the ratio of the pool's bound to its best
/// member dot product measures how much the bound overshoots; pools whose
/// best member dot is zero carry no signal and are skipped. Returns the
/// nearest-rank percentile of all collected ratios. For non-negative data
/// and queries every ratio lies in `[1, dim]`.
pub fn c_percentile(
    store: &VectorStore,
    index: &MaxIndex,
    queries: &[FeatureVector],
    percentile: f64,
) -> Result<f64> {
    if !(0.0..=100.0).contains(&percentile) || percentile == 0.0 {
        return Err(Error::InvalidParameter { name: "percentile", value: percentile });
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
    if queries.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    for q in queries {
        if q.dim() != store.dim() {
            return Err(Error::DimensionMismatch { expected: store.dim(), actual: q.dim() });
        }
        if q.has_negative() && !index.has_min() {
            return Err(Error::UnsupportedNegativeQuery);
        }
    }
    if index.is_empty() {
        return Err(Error::NoValidPools);
    }

    let node_count = index.node_count();
    let mut ratios: Vec<f64> = queries
        .par_iter()
        .flat_map_iter(|q| {
            let qv = q.values();
            // Best member dot per pool: leaves read the raw rows, inner pools
            // take the max of their children, so the sweep runs children
            // (higher ids) before parents.
            let mut best = vec![0.0f64; node_count];
            for node in (0..node_count).rev() {
                best[node] = match index.children_raw(node) {
                    Some((l, r)) => best[l].max(best[r]),
                    None => {
                        let (si, ei) = index.node_interval_raw(node);
                        (si..=ei)
                            .map(|id| dot64(qv, store.row(id).expect("id in range")))
                            .fold(f64::NEG_INFINITY, f64::max)
                    }
                };
            }
            let mut out = Vec::with_capacity(node_count);
            for node in 0..node_count {
                if best[node] > 0.0 {
                    out.push(index.bound_raw(qv, node) / best[node]);
                }
            }
            out.into_iter()
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::NoValidPools);
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
    let rank = ((percentile / 100.0 * ratios.len() as f64).ceil() as usize).clamp(1, ratios.len());
    Ok(ratios[rank - 1])
}

/// Monte-Carlo run of the sum-splitting driver over model-drawn similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n: usize,
    pub rho: f64,
    pub lambda: f64,
    pub trials: usize,
    pub mean_tests: f64,
    pub std_tests: f64,
    pub min_tests: u64,
    pub max_tests: u64,
    pub mean_neighbors: f64,
}

impl SimReport {
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("rho", format!("{}", self.rho)),
            ("lambda", format!("{}", self.lambda)),
            ("trials", self.trials.to_string()),
            ("mean_tests", format!("{:.3}", self.mean_tests)),
            ("std_tests", format!("{:.3}", self.std_tests)),
            ("min_tests", self.min_tests.to_string()),
            ("max_tests", self.max_tests.to_string()),
            ("mean_neighbors", format!("{:.3}", self.mean_neighbors)),
        ]
    }
}

struct ScalarPrefixPool {
    prefix: Vec<f64>,
}

impl RangePool for ScalarPrefixPool {
    fn count(&self) -> usize {
        self.prefix.len() - 1
    }

    fn range_dot(&self, si: usize, ei: usize) -> f64 {
        self.prefix[ei] - self.prefix[si - 1]
    }
}

/// Run the exact sum-splitting driver on `trials` independent collections of
/// `n` similarities drawn from the truncated-exponential model, and report
/// the dot-product cost distribution.
///
/// Each trial uses its own deterministic substream of `seed`, so reports are
/// reproducible regardless of thread count.
pub fn simulate_splitting(
    n: usize,
    rho: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<SimReport> {
    validate_n(n)?;
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", value: 0.0 });
    }
    if !rho.is_finite() || rho <= 0.0 || rho > 2.0 {
        return Err(Error::InvalidThreshold { rho });
    }
    let model = TneModel::new(lambda)?;
    let guard = epsilon_guard(n);

    let per_trial: Vec<(u64, usize)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            let mut acc = 0.0;
            for _ in 0..n {
                acc += model.sample(&mut rng);
                prefix.push(acc);
            }
            let result = run_sum_splitting(&ScalarPrefixPool { prefix }, rho, guard);
            (result.stats.dot_products, result.neighbors.len())
        })
        .collect();

    let mean_tests =
        per_trial.iter().map(|&(t, _)| t as f64).sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        per_trial
            .iter()
            .map(|&(t, _)| {
                let d = t as f64 - mean_tests;
                d * d
            })
            .sum::<f64>()
            / (trials - 1) as f64
    } else {
        0.0
    };
    Ok(SimReport {
        n,
        rho,
        lambda,
        trials,
        mean_tests,
        std_tests: var.sqrt(),
        min_tests: per_trial.iter().map(|&(t, _)| t).min().unwrap_or(0),
        max_tests: per_trial.iter().map(|&(t, _)| t).max().unwrap_or(0),
        mean_neighbors: per_trial.iter().map(|&(_, m)| m as f64).sum::<f64>() / trials as f64,
    })
}
