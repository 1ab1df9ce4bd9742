//! Thin command-line shell over the range-search library. Every subcommand
//! delegates to a library operation; the only logic here is flag/config
//! plumbing, file sniffing, and exit-code mapping.
//!
//! Exit codes: 0 success, 1 I/O or input-data error, 2 usage error,
//! 3 internal invariant violation (never expected).

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gtnn::bench::{compare_theory, run_static, run_streaming};
use gtnn::datagen::{gen_dataset, GenSpec, PlantSpec};
use gtnn::{
    expected_tests_max_ub, expected_tests_sum, fit_lambda, search_exhaustive, search_max,
    search_sum, simulate_splitting, Error, FeatureVector, MaxIndex, QueryResult, SumIndex,
    Variant, VectorStore,
};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "gtnn",
    version,
    about = "Exact threshold search over non-negative unit vectors via pooled dot products"
)]
struct Cli {
    /// Config file with `key=value` lines supplying defaults; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reproducible synthetic store (and optionally queries).
    Gen(GenArgs),
    /// Build a search index file from a stored collection.
    Build(BuildArgs),
    /// Append vectors to a store and its prefix-sum index in one pass.
    Append(AppendArgs),
    /// Run threshold queries and emit neighbors as CSV.
    Query(QueryArgs),
    /// Fit the similarity decay rate from query/member dot products.
    Fit(FitArgs),
    /// Predict expected query cost from the analytic model.
    Predict(PredictArgs),
    /// Monte-Carlo the splitting search on model-drawn similarities.
    Simulate(SimulateArgs),
    /// Benchmark search strategies against the exhaustive oracle.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output store file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Number of vectors.
    #[arg(long)]
    count: Option<usize>,
    /// Vector dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Dirichlet concentration; smaller means sparser vectors.
    #[arg(long)]
    concentration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of query vectors to generate.
    #[arg(long)]
    num_queries: Option<usize>,
    /// Where to write the generated queries (same format as the store).
    #[arg(long, value_name = "FILE")]
    queries_out: Option<PathBuf>,
    /// Plant near-neighbors of a query: QUERY_ID:COUNT:TARGET (repeatable).
    /// Planted dot products land in (TARGET, TARGET + 0.02].
    #[arg(long = "plant", value_name = "Q:K:T")]
    plant: Vec<String>,
}

#[derive(Args)]
struct BuildArgs {
    /// Input store file.
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Output index file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Index kind: sum | max.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct AppendArgs {
    /// Store file to grow.
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Prefix-sum index file to grow alongside the store.
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
    /// Vectors to append: binary store or whitespace-separated text rows.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Where to write the grown store (default: in place).
    #[arg(long, value_name = "FILE")]
    store_out: Option<PathBuf>,
    /// Where to write the grown index (default: in place).
    #[arg(long, value_name = "FILE")]
    index_out: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Store file (used for exact similarities and the exhaustive variant).
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Index file (required for the sum and max variants).
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
    /// Query vectors: binary store or text rows (normalized on read).
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    /// Similarity threshold in (0, 2].
    #[arg(long)]
    rho: Option<f64>,
    /// Search strategy: sum | max | exhaustive.
    #[arg(long)]
    variant: Option<String>,
    /// Worker threads for query-level parallelism (default 1).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output CSV file (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    /// Cap on the number of query/member dot products sampled.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Collection size.
    #[arg(long)]
    n: Option<usize>,
    /// Similarity threshold in (0, 2].
    #[arg(long)]
    rho: Option<f64>,
    /// Similarity decay rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Max-pool looseness ratio; adds the max-variant upper bound.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Query vectors (static and theory modes).
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated strategies for the static mode (default sum,max).
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output report file (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run the grow-then-query protocol instead of the static benchmark.
    #[arg(long, conflicts_with = "theory")]
    streaming: bool,
    /// Fraction of the store indexed before streaming starts, in (0, 1).
    #[arg(long)]
    initial_fraction: Option<f64>,
    /// Vectors appended between verification queries.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Compare measured costs against the analytic model instead.
    #[arg(long)]
    theory: bool,
}

enum CliError {
    /// Bad flag/config values or combinations, rejected before any I/O.
    Usage(String),
    /// A library operation failed; the source decides the exit code.
    Lib { context: String, source: Error },
    /// An invariant the tool itself promises was violated.
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib { source, .. } => match source {
                Error::InvalidThreshold { .. }
                | Error::InvalidParameter { .. }
                | Error::InfeasibleTarget { .. }
                | Error::IdOutOfRange { .. } => 2,
                _ => 1,
            },
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Lib { context, source } => write!(f, "{context}: {source}"),
            CliError::Internal(msg) => write!(f, "internal invariant violation: {msg}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Wraps a library error with the operation it interrupted.
fn lib(context: impl Into<String>) -> impl FnOnce(Error) -> CliError {
    let context = context.into();
    move |source| CliError::Lib { context, source }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Lib { context, source: source.into() }
}

/// `key=value` per line; blank lines and `#` comments ignored.
struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(io_err(format!("reading config {}", path.display())))?;
            for (line_no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    usage(format!(
                        "config {} line {}: expected key=value, got {line:?}",
                        path.display(),
                        line_no + 1
                    ))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Config(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config {key}={raw} is not a valid value"))),
        }
    }
}

/// Flag first, then config.
fn resolve<T: FromStr>(flag: Option<T>, cfg: &Config, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn require<T: FromStr>(flag: Option<T>, cfg: &Config, key: &str) -> Result<T, CliError> {
    resolve(flag, cfg, key)?
        .ok_or_else(|| usage(format!("missing --{} (set the flag or a config entry)", key.replace('_', "-"))))
}

fn resolve_or<T: FromStr>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    Ok(resolve(flag, cfg, key)?.unwrap_or(default))
}

/// Flag, then config, then the GTNN_SEED environment variable, then 42.
fn resolve_seed(flag: Option<u64>, cfg: &Config) -> Result<u64, CliError> {
    if let Some(seed) = resolve(flag, cfg, "seed")? {
        return Ok(seed);
    }
    match std::env::var("GTNN_SEED") {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("GTNN_SEED={raw} is not a valid seed"))),
        Err(_) => Ok(42),
    }
}

fn check_rho(rho: f64) -> Result<f64, CliError> {
    if !rho.is_finite() || rho <= 0.0 || rho > 2.0 {
        return Err(usage(format!("--rho {rho} is outside (0, 2]")));
    }
    Ok(rho)
}

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    Variant::from_str(s).map_err(|_| usage(format!("unknown variant {s:?}; use sum, max, or exhaustive")))
}

fn parse_variant_list(s: &str) -> Result<Vec<Variant>, CliError> {
    let mut variants = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v = parse_variant(part)?;
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    if variants.is_empty() {
        return Err(usage("--variants lists no strategies"));
    }
    Ok(variants)
}

/// QUERY_ID:COUNT:TARGET
fn parse_plant(s: &str) -> Result<PlantSpec, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || usage(format!("--plant {s:?} is not QUERY_ID:COUNT:TARGET"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(PlantSpec {
        query_id: parts[0].parse().map_err(|_| bad())?,
        neighbor_count: parts[1].parse().map_err(|_| bad())?,
        target_similarity: parts[2].parse().map_err(|_| bad())?,
    })
}

/// Loads a vectors file, accepting either the binary store format (sniffed
/// by magic) or whitespace-separated text rows (normalized on read).
fn load_vectors(path: &Path, allow_negative: bool) -> Result<VectorStore, CliError> {
    let mut file =
        File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match file.read(&mut magic[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) => return Err(io_err(format!("reading {}", path.display()))(e)),
        }
    }
    if got == 4 && magic == *b"GTNN" {
        VectorStore::load(path).map_err(lib(format!("loading {}", path.display())))
    } else {
        file.seek(SeekFrom::Start(0))
            .map_err(io_err(format!("reading {}", path.display())))?;
        VectorStore::import_text(BufReader::new(file), allow_negative)
            .map_err(lib(format!("parsing text vectors from {}", path.display())))
    }
}

fn load_store(path: &Path) -> Result<VectorStore, CliError> {
    VectorStore::load(path).map_err(lib(format!("loading store {}", path.display())))
}

fn store_queries(store: &VectorStore) -> Vec<FeatureVector> {
    (1..=store.len()).map(|id| store.get(id).expect("ids in range")).collect()
}

/// Writes through a temp file in the same directory, then renames into place.
fn save_atomic<F>(path: &Path, save: F) -> Result<(), CliError>
where
    F: FnOnce(&Path) -> gtnn::Result<()>,
{
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| std::ffi::OsString::from("out"));
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    save(&tmp).map_err(lib(format!("writing {}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(io_err(format!("renaming {} into place", tmp.display())))?;
    Ok(())
}

fn write_output(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => std::fs::write(path, content)
            .map_err(io_err(format!("writing {}", path.display()))),
    }
}

fn print_kv(pairs: &[(&str, String)]) {
    for (key, value) in pairs {
        println!("{key}={value}");
    }
}

fn run_gen(args: GenArgs, cfg: &Config) -> Result<(), CliError> {
    let out = require(args.out, cfg, "out")?;
    let count = require(args.count, cfg, "count")?;
    let dim = require(args.dim, cfg, "dim")?;
    let concentration = resolve_or(args.concentration, cfg, "concentration", 0.1)?;
    let seed = resolve_seed(args.seed, cfg)?;
    let num_queries = resolve_or(args.num_queries, cfg, "num_queries", 0)?;
    let queries_out: Option<PathBuf> = resolve(args.queries_out, cfg, "queries_out")?;

    let planted: Vec<PlantSpec> =
        args.plant.iter().map(|s| parse_plant(s)).collect::<Result<_, _>>()?;
    if num_queries == 0 && (queries_out.is_some() || !planted.is_empty()) {
        return Err(usage("--queries-out/--plant need --num-queries >= 1"));
    }
    for plant in &planted {
        if plant.query_id == 0 || plant.query_id > num_queries {
            return Err(usage(format!(
                "--plant query id {} is outside 1..={num_queries}",
                plant.query_id
            )));
        }
    }

    let spec = GenSpec { count, dim, concentration, seed, planted };
    let data = gen_dataset(&spec, num_queries).map_err(lib("generating collection"))?;
    save_atomic(&out, |p| data.store.save(p))?;

    if let Some(qpath) = &queries_out {
        let mut qstore = VectorStore::new(dim, false).map_err(lib("creating query store"))?;
        for q in &data.queries {
            qstore.append_vector(q).map_err(lib("storing query"))?;
        }
        save_atomic(qpath, |p| qstore.save(p))?;
    }

    let mut pairs = vec![
        ("store", out.display().to_string()),
        ("count", count.to_string()),
        ("dim", dim.to_string()),
        ("concentration", concentration.to_string()),
        ("seed", seed.to_string()),
        ("queries", num_queries.to_string()),
    ];
    if let Some(qpath) = &queries_out {
        pairs.push(("queries_file", qpath.display().to_string()));
    }
    print_kv(&pairs);
    for group in &data.planted {
        let ids: Vec<String> = group.ids.iter().map(|id| id.to_string()).collect();
        println!("planted_query_{}={}", group.query_id, ids.join(","));
    }
    Ok(())
}

fn run_build(args: BuildArgs, cfg: &Config) -> Result<(), CliError> {
    let store_path: PathBuf = require(args.store, cfg, "store")?;
    let out: PathBuf = require(args.out, cfg, "out")?;
    let variant = parse_variant(&resolve_or(args.variant, cfg, "variant", "sum".into())?)?;

    let store = load_store(&store_path)?;
    match variant {
        Variant::Sum => {
            let index = SumIndex::build(&store).map_err(lib("building prefix-sum index"))?;
            save_atomic(&out, |p| index.save(p))?;
        }
        Variant::Max => {
            let index = MaxIndex::build(&store).map_err(lib("building max-pool index"))?;
            save_atomic(&out, |p| index.save(p))?;
        }
        Variant::Exhaustive => {
            return Err(usage("the exhaustive strategy scans the store directly; nothing to build"));
        }
    }
    print_kv(&[
        ("index", out.display().to_string()),
        ("variant", variant.name().to_string()),
        ("n", store.len().to_string()),
        ("dim", store.dim().to_string()),
    ]);
    Ok(())
}

fn run_append(args: AppendArgs, cfg: &Config) -> Result<(), CliError> {
    let store_path: PathBuf = require(args.store, cfg, "store")?;
    let index_path: PathBuf = require(args.index, cfg, "index")?;
    let input_path: PathBuf = require(args.input, cfg, "input")?;
    let store_out = resolve(args.store_out, cfg, "store_out")?.unwrap_or_else(|| store_path.clone());
    let index_out = resolve(args.index_out, cfg, "index_out")?.unwrap_or_else(|| index_path.clone());

    let mut store = load_store(&store_path)?;
    // Only the prefix-sum index supports O(dim) appends; a max-pool index
    // fails here with a bad-magic error and must be rebuilt instead.
    let mut index = SumIndex::load(&index_path)
        .map_err(lib(format!("loading prefix-sum index {}", index_path.display())))?;
    if index.len() != store.len() || index.dim() != store.dim() {
        return Err(CliError::Lib {
            context: "checking store/index agreement".into(),
            source: Error::StoreMismatch {
                reason: format!(
                    "index covers {} vectors of dim {}, store holds {} of dim {}",
                    index.len(),
                    index.dim(),
                    store.len(),
                    store.dim()
                ),
            },
        });
    }

    let input = load_vectors(&input_path, store.allow_negative())?;
    if input.is_empty() {
        return Err(usage(format!("{} holds no vectors", input_path.display())));
    }
    if input.dim() != store.dim() {
        return Err(CliError::Lib {
            context: format!("appending from {}", input_path.display()),
            source: Error::DimensionMismatch { expected: store.dim(), actual: input.dim() },
        });
    }

    let adds_before = index.element_adds();
    for id in 1..=input.len() {
        let v = input.get(id).expect("ids in range");
        store.append_vector(&v).map_err(lib("appending to store"))?;
        index.append(input.row(id).expect("ids in range")).map_err(lib("appending to index"))?;
    }
    save_atomic(&store_out, |p| store.save(p))?;
    save_atomic(&index_out, |p| index.save(p))?;

    print_kv(&[
        ("appended", input.len().to_string()),
        ("n", store.len().to_string()),
        ("dim", store.dim().to_string()),
        ("element_adds", (index.element_adds() - adds_before).to_string()),
        ("store", store_out.display().to_string()),
        ("index", index_out.display().to_string()),
    ]);
    Ok(())
}

fn run_query(args: QueryArgs, cfg: &Config) -> Result<(), CliError> {
    let rho = check_rho(require(args.rho, cfg, "rho")?)?;
    let variant = parse_variant(&resolve_or(args.variant, cfg, "variant", "sum".into())?)?;
    let jobs = resolve(args.jobs, cfg, "jobs")?;
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    let store_path: PathBuf = require(args.store, cfg, "store")?;
    let queries_path: PathBuf = require(args.queries, cfg, "queries")?;
    let index_path: Option<PathBuf> = resolve(args.index, cfg, "index")?;
    let out: Option<PathBuf> = resolve(args.out, cfg, "out")?;
    if variant == Variant::Exhaustive && index_path.is_some() {
        return Err(usage("the exhaustive strategy takes no --index"));
    }
    if variant != Variant::Exhaustive && index_path.is_none() {
        return Err(usage(format!("the {} strategy needs --index", variant.name())));
    }

    let store = load_store(&store_path)?;
    let qstore = load_vectors(&queries_path, store.allow_negative())?;
    if qstore.is_empty() {
        return Err(usage(format!("{} holds no queries", queries_path.display())));
    }
    let queries = store_queries(&qstore);

    enum Engine {
        Sum(SumIndex),
        Max(MaxIndex),
        Exhaustive,
    }
    let engine = match variant {
        Variant::Sum => {
            let path = index_path.as_deref().expect("checked above");
            let index = SumIndex::load(path)
                .map_err(lib(format!("loading prefix-sum index {}", path.display())))?;
            if index.len() != store.len() || index.dim() != store.dim() {
                return Err(CliError::Lib {
                    context: "checking store/index agreement".into(),
                    source: Error::StoreMismatch {
                        reason: format!(
                            "index covers {} vectors of dim {}, store holds {} of dim {}",
                            index.len(),
                            index.dim(),
                            store.len(),
                            store.dim()
                        ),
                    },
                });
            }
            Engine::Sum(index)
        }
        Variant::Max => {
            let path = index_path.as_deref().expect("checked above");
            let index = MaxIndex::load(path)
                .map_err(lib(format!("loading max-pool index {}", path.display())))?;
            Engine::Max(index)
        }
        Variant::Exhaustive => Engine::Exhaustive,
    };

    let run_one = |q: &FeatureVector| -> gtnn::Result<QueryResult> {
        match &engine {
            Engine::Sum(index) => search_sum(index, q, rho),
            Engine::Max(index) => search_max(index, &store, q, rho),
            Engine::Exhaustive => search_exhaustive(&store, q, rho),
        }
    };
    let results: Vec<QueryResult> = match jobs {
        None | Some(1) => {
            let mut results = Vec::with_capacity(queries.len());
            for q in &queries {
                results.push(run_one(q).map_err(lib("running query"))?);
            }
            results
        }
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| usage(format!("--jobs {j}: {e}")))?;
            pool.install(|| queries.par_iter().map(run_one).collect::<gtnn::Result<Vec<_>>>())
                .map_err(lib("running queries"))?
        }
    };

    let mut csv = String::from("query_id,neighbor_id,similarity\n");
    for (qi, result) in results.iter().enumerate() {
        let q = &queries[qi];
        for &id in &result.neighbors {
            let sim = q
                .dot(&store.get(id).expect("result ids are in range"))
                .expect("store and query dims agree");
            csv.push_str(&format!("{},{},{}\n", qi + 1, id, sim));
        }
    }
    csv.push_str("# stats\n");
    for (qi, result) in results.iter().enumerate() {
        csv.push_str(&format!(
            "# query={} variant={} dots={} visited={} results={}\n",
            qi + 1,
            variant.name(),
            result.stats.dot_products,
            result.stats.visited_pools,
            result.neighbors.len()
        ));
    }
    write_output(out.as_deref(), &csv)
}

fn run_fit(args: FitArgs, cfg: &Config) -> Result<(), CliError> {
    let store_path: PathBuf = require(args.store, cfg, "store")?;
    let queries_path: PathBuf = require(args.queries, cfg, "queries")?;
    let limit = resolve(args.limit, cfg, "limit")?;
    if limit == Some(0) {
        return Err(usage("--limit must be at least 1"));
    }

    let store = load_store(&store_path)?;
    let qstore = load_vectors(&queries_path, store.allow_negative())?;
    let queries = store_queries(&qstore);

    let cap = limit.unwrap_or(usize::MAX);
    let mut samples = Vec::new();
    'outer: for q in &queries {
        for id in 1..=store.len() {
            if samples.len() >= cap {
                break 'outer;
            }
            let dot = q
                .dot(&store.get(id).expect("ids in range"))
                .map_err(lib("measuring similarities"))?;
            samples.push(dot.clamp(0.0, 1.0));
        }
    }
    let fit = fit_lambda(&samples).map_err(lib("fitting decay rate"))?;
    print_kv(&[
        ("lambda", format!("{:.6}", fit.lambda)),
        ("samples", fit.samples.to_string()),
        ("residual", format!("{:.3e}", fit.residual)),
    ]);
    Ok(())
}

fn run_predict(args: PredictArgs, cfg: &Config) -> Result<(), CliError> {
    let n = require(args.n, cfg, "n")?;
    let rho = check_rho(require(args.rho, cfg, "rho")?)?;
    let lambda = require(args.lambda, cfg, "lambda")?;
    let c: Option<f64> = resolve(args.c, cfg, "c")?;

    let sum = expected_tests_sum(n, rho, lambda).map_err(lib("predicting sum cost"))?;
    print_kv(&sum.to_kv());
    if let Some(c) = c {
        let max = expected_tests_max_ub(n, rho, lambda, c)
            .map_err(lib("predicting max cost bound"))?;
        println!();
        print_kv(&max.to_kv());
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs, cfg: &Config) -> Result<(), CliError> {
    let n = require(args.n, cfg, "n")?;
    let rho = check_rho(require(args.rho, cfg, "rho")?)?;
    let lambda = require(args.lambda, cfg, "lambda")?;
    let trials = resolve_or(args.trials, cfg, "trials", 1000)?;
    let seed = resolve_seed(args.seed, cfg)?;

    let report =
        simulate_splitting(n, rho, lambda, trials, seed).map_err(lib("simulating"))?;
    print_kv(&report.to_kv());
    Ok(())
}

fn run_bench(args: BenchArgs, cfg: &Config) -> Result<(), CliError> {
    let rho = check_rho(require(args.rho, cfg, "rho")?)?;
    let store_path: PathBuf = require(args.store, cfg, "store")?;
    let out: Option<PathBuf> = resolve(args.out, cfg, "out")?;
    let store = load_store(&store_path)?;

    if args.streaming {
        let initial_fraction = resolve_or(args.initial_fraction, cfg, "initial_fraction", 0.8)?;
        if !(initial_fraction > 0.0 && initial_fraction < 1.0) {
            return Err(usage(format!(
                "--initial-fraction {initial_fraction} is outside (0, 1)"
            )));
        }
        let batch_size = resolve_or(args.batch_size, cfg, "batch_size", 100)?;
        if batch_size == 0 {
            return Err(usage("--batch-size must be at least 1"));
        }
        let seed = resolve_seed(args.seed, cfg)?;
        let report = run_streaming(&store, rho, initial_fraction, batch_size, seed)
            .map_err(lib("running streaming benchmark"))?;

        let mut csv = String::from(
            "batch,store_size,element_adds,dot_products,result_size,precision,recall\n",
        );
        for r in &report.records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.batch,
                r.store_size,
                r.element_adds,
                r.dot_products,
                r.result_size,
                r.precision,
                r.recall
            ));
        }
        csv.push_str("# summary\n");
        csv.push_str(&format!(
            "# rho={} initial_size={} final_size={} batch_size={} exact={} adds_per_vector_ok={}\n",
            report.rho,
            report.initial_size,
            report.final_size,
            report.batch_size,
            report.exact,
            report.adds_per_vector_ok
        ));
        write_output(out.as_deref(), &csv)?;
        if !report.exact {
            return Err(CliError::Internal("a streaming query missed exactness".into()));
        }
        if !report.adds_per_vector_ok {
            return Err(CliError::Internal(
                "an insert cost more than dim element additions".into(),
            ));
        }
        return Ok(());
    }

    let queries_path: PathBuf = require(args.queries, cfg, "queries")?;
    let qstore = load_vectors(&queries_path, store.allow_negative())?;
    let queries = store_queries(&qstore);

    if args.theory {
        let comparison =
            compare_theory(&store, &queries, rho).map_err(lib("comparing against the model"))?;
        let pairs = comparison.to_kv();
        match out.as_deref() {
            None => print_kv(&pairs),
            Some(path) => {
                let mut text = String::new();
                for (k, v) in &pairs {
                    text.push_str(&format!("{k}={v}\n"));
                }
                std::fs::write(path, text)
                    .map_err(io_err(format!("writing {}", path.display())))?;
            }
        }
        return Ok(());
    }

    let variants =
        parse_variant_list(&resolve_or(args.variants, cfg, "variants", "sum,max".into())?)?;
    let jobs = resolve(args.jobs, cfg, "jobs")?;
    let report = run_static(&store, &queries, rho, &variants, jobs)
        .map_err(lib("running static benchmark"))?;
    write_output(out.as_deref(), &report.to_csv())?;
    for summary in &report.summaries {
        if summary.variant != Variant::Exhaustive && !summary.exact {
            return Err(CliError::Internal(format!(
                "the {} strategy missed exactness (precision {:.6}, recall {:.6})",
                summary.variant.name(),
                summary.mean_precision,
                summary.mean_recall
            )));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => run_gen(args, &cfg),
        Command::Build(args) => run_build(args, &cfg),
        Command::Append(args) => run_append(args, &cfg),
        Command::Query(args) => run_query(args, &cfg),
        Command::Fit(args) => run_fit(args, &cfg),
        Command::Predict(args) => run_predict(args, &cfg),
        Command::Simulate(args) => run_simulate(args, &cfg),
        Command::Bench(args) => run_bench(args, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => {
            eprintln!("error: internal invariant violation");
            ExitCode::from(3)
        }
    }
}
