//! `gst` — transport distances for probability measures on a graph.
//!
//! Subcommands: `build-graph` (cluster a point cloud into a rooted graph),
//! `dist` (one pair), `gram` (full pairwise matrix), `bench` (univariate
//! solver against the two-level reference), `validate` (cross-method
//! identity suite).
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric non-convergence,
//! 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sobolev_transport::builder::{build_cluster_graph, perturb_for_uniqueness, Density};
use sobolev_transport::error::Error;
use sobolev_transport::graph::{build_path_index, pairwise_distances, DistanceCache, Graph, PathIndex};
use sobolev_transport::io;
use sobolev_transport::measure::Measure;
use sobolev_transport::nfunc::NFunction;
use sobolev_transport::ow::{orlicz_wasserstein, random_spanning_tree, tree_wasserstein, wasserstein_p, DEFAULT_OW_TOL};
use sobolev_transport::transport::{gram_matrix, gst, gst_with_phi, sobolev_transport, DEFAULT_GST_TOL};

#[derive(Parser)]
#[command(name = "gst", version, about = "Transport distances for measures on a graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a point cloud into a rooted graph and write it with the
    /// point-to-node assignment.
    BuildGraph(BuildGraphArgs),
    /// Distance between two measures.
    Dist(DistArgs),
    /// Symmetric distance matrix over a measure collection.
    Gram(GramArgs),
    /// Timing comparison of the univariate solver against the two-level
    /// reference on sampled pairs.
    Bench(BenchArgs),
    /// Cross-method identity suite on a graph and measure collection.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct BuildGraphArgs {
    /// JSON-lines dataset of weighted point items.
    #[arg(long)]
    points: PathBuf,
    /// Cluster budget: at most this many graph nodes.
    #[arg(long, short = 'M')]
    clusters: usize,
    /// Edge density regime: log (n·ln n edges) or sqrt (n^1.5 edges).
    #[arg(long, default_value = "log")]
    density: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Root node: an id, or `auto` for the minimum-eccentricity node.
    #[arg(long, default_value = "0")]
    root: String,
    /// Multiplicative weight perturbation making shortest paths unique.
    #[arg(long)]
    perturb: Option<f64>,
    /// Output graph JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Output assignment path (default: `<out>.assignment.json`).
    #[arg(long)]
    assignment_out: Option<PathBuf>,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long)]
    graph: PathBuf,
    /// First measure file (CSV rows `node,mass` or JSON `[[node,mass],...]`).
    #[arg(long)]
    mu: PathBuf,
    /// Second measure file.
    #[arg(long)]
    nu: PathBuf,
    /// gst | `st:<p>` | ow | ow-tree
    #[arg(long, default_value = "gst")]
    method: String,
    /// N-function spec, e.g. exp_minus, power:p=2, huber:delta=1.
    #[arg(long, default_value = "exp_minus")]
    phi: String,
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for the spanning tree of ow-tree on non-tree graphs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GramArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Measures collection (.json), or a .jsonl dataset plus --assignment.
    #[arg(long)]
    measures: PathBuf,
    #[arg(long)]
    assignment: Option<PathBuf>,
    #[arg(long, default_value = "gst")]
    method: String,
    #[arg(long, default_value = "exp_minus")]
    phi: String,
    /// Worker threads; 0 picks the rayon default. Never changes the output.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix path (.csv or .json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    measures: PathBuf,
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Comma-separated N-function specs to benchmark.
    #[arg(long, default_value = "exp_minus")]
    phi: String,
    /// Number of sampled pairs.
    #[arg(long)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
    /// Output CSV report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    measures: PathBuf,
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Number of sampled pairs per identity.
    #[arg(long, default_value_t = 10)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy)]
enum Method {
    Gst,
    St(f64),
    Ow,
    OwTree,
}

fn parse_method(s: &str) -> Result<Method, Error> {
    match s {
        "gst" => Ok(Method::Gst),
        "ow" => Ok(Method::Ow),
        "ow-tree" => Ok(Method::OwTree),
        other => {
            if let Some(p) = other.strip_prefix("st:") {
                let p: f64 = p
                    .parse()
                    .map_err(|e| Error::invalid(format!("bad order in {other:?}: {e}")))?;
                Ok(Method::St(p))
            } else {
                Err(Error::invalid(format!(
                    "unknown method {other:?} (expected gst, st:<p>, ow, ow-tree)"
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildGraph(args) => cmd_build_graph(args),
        Command::Dist(args) => cmd_dist(args),
        Command::Gram(args) => cmd_gram(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence(_) => 3,
        Error::Io { .. } => 4,
        _ => 2,
    }
}

fn cmd_build_graph(args: BuildGraphArgs) -> Result<ExitCode, Error> {
    let dataset = io::load_dataset_jsonl(&args.points)?;
    let points = dataset.flat_points();
    let density = Density::parse(&args.density)?;
    let (mut graph, assign) = build_cluster_graph(&points, args.clusters, density, args.seed)?;
    if let Some(eps) = args.perturb {
        graph = perturb_for_uniqueness(&graph, eps, args.seed.wrapping_add(1))?;
    }
    let root = match args.root.as_str() {
        "auto" => min_eccentricity_root(&graph)?,
        id => id
            .parse::<usize>()
            .map_err(|e| Error::invalid(format!("bad root {id:?}: {e}")))?,
    };
    let graph = graph.with_root(root)?;
    io::save_graph(&graph, &args.out)?;
    let assignment_path = args
        .assignment_out
        .unwrap_or_else(|| default_assignment_path(&args.out));
    io::save_assignment(
        &io::SupportAssignment {
            node_of_point: assign,
        },
        &assignment_path,
    )?;
    println!(
        "graph: {} nodes, {} edges ({} sampled + {} bridges), root {}",
        graph.n_nodes(),
        graph.n_edges(),
        graph.meta()["sampled_edges"],
        graph.meta()["bridge_edges"],
        graph.root()
    );
    Ok(ExitCode::SUCCESS)
}

fn default_assignment_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".assignment.json");
    PathBuf::from(s)
}

fn min_eccentricity_root(graph: &Graph) -> Result<usize, Error> {
    let all: Vec<usize> = (0..graph.n_nodes()).collect();
    let cache = pairwise_distances(graph, &all)?;
    let mut best = 0;
    let mut best_ecc = f64::INFINITY;
    for v in 0..graph.n_nodes() {
        let ecc = (0..graph.n_nodes())
            .map(|u| cache.at(v, u))
            .fold(0.0f64, f64::max);
        if ecc < best_ecc {
            best_ecc = ecc;
            best = v;
        }
    }
    Ok(best)
}

/// Everything a method dispatch might need, built once per command.
struct Engine {
    index: PathIndex,
    method: Method,
    phi: NFunction,
    tol: f64,
    cache: Option<DistanceCache>,
    tree_index: Option<PathIndex>,
}

impl Engine {
    fn new(
        graph: Graph,
        method: Method,
        phi: NFunction,
        tol: Option<f64>,
        measures: &[Measure],
        seed: u64,
    ) -> Result<Self, Error> {
        let index = build_path_index(&graph)?;
        let tol = tol.unwrap_or(match method {
            Method::Ow => DEFAULT_OW_TOL,
            _ => DEFAULT_GST_TOL,
        });
        let cache = match method {
            Method::Ow => Some(support_cache(&graph, measures)?),
            _ => None,
        };
        let tree_index = match method {
            Method::OwTree => {
                if !matches!(phi, NFunction::Linear) {
                    return Err(Error::invalid(
                        "ow-tree is the first-order closed form; use --phi linear or omit --phi",
                    ));
                }
                let tree = if graph.is_tree() {
                    graph.clone()
                } else {
                    random_spanning_tree(&graph, seed)?
                };
                Some(build_path_index(&tree)?)
            }
            _ => None,
        };
        Ok(Engine {
            index,
            method,
            phi,
            tol,
            cache,
            tree_index,
        })
    }

    fn distance(&self, a: &Measure, b: &Measure) -> Result<f64, Error> {
        match self.method {
            Method::Gst => Ok(gst(&self.index, a, b, &self.phi, self.tol)?.value),
            Method::St(p) => sobolev_transport(&self.index, a, b, p),
            Method::Ow => {
                let cache = self.cache.as_ref().expect("cache built for ow");
                if self.phi.is_linear() {
                    wasserstein_p(cache, a, b, 1.0)
                } else {
                    Ok(orlicz_wasserstein(cache, a, b, &self.phi, self.tol)?.value)
                }
            }
            Method::OwTree => {
                tree_wasserstein(self.tree_index.as_ref().expect("tree built"), a, b)
            }
        }
    }
}

/// Distance cache over the union of all supports.
fn support_cache(graph: &Graph, measures: &[Measure]) -> Result<DistanceCache, Error> {
    let mut nodes: Vec<usize> = measures
        .iter()
        .flat_map(|m| m.support().iter().copied())
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    pairwise_distances(graph, &nodes)
}

fn load_measure_set(
    measures_path: &Path,
    assignment: &Option<PathBuf>,
    graph: &Graph,
) -> Result<Vec<Measure>, Error> {
    let is_dataset = measures_path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e == "jsonl")
        .unwrap_or(false);
    if is_dataset {
        let dataset = io::load_dataset_jsonl(measures_path)?;
        let assignment_path = assignment.as_ref().ok_or_else(|| {
            Error::invalid("a .jsonl dataset needs --assignment from build-graph")
        })?;
        let assignment = io::load_assignment(assignment_path)?;
        io::ingest(&dataset, graph, &assignment)
    } else {
        io::load_measures(measures_path)
    }
}

fn cmd_dist(args: DistArgs) -> Result<ExitCode, Error> {
    let graph = io::load_graph(&args.graph)?;
    let method = parse_method(&args.method)?;
    let phi = NFunction::parse(&args.phi)?;
    let mu = io::load_measure(&args.mu)?;
    let nu = io::load_measure(&args.nu)?;
    let measures = [mu, nu];
    let engine = Engine::new(graph, method, phi, args.tol, &measures, args.seed)?;
    let d = engine.distance(&measures[0], &measures[1])?;
    println!("{}", io::fmt_f64(d));
    Ok(ExitCode::SUCCESS)
}

fn cmd_gram(args: GramArgs) -> Result<ExitCode, Error> {
    let graph = io::load_graph(&args.graph)?;
    let method = parse_method(&args.method)?;
    let phi = NFunction::parse(&args.phi)?;
    let measures = load_measure_set(&args.measures, &args.assignment, &graph)?;
    let engine = Engine::new(graph, method, phi, args.tol, &measures, args.seed)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let (matrix, failures) = pool.install(|| gram_matrix(&measures, |a, b| engine.distance(a, b)));

    let format = io::Format::from_path(&args.out)?;
    io::save_matrix(&matrix, &args.out, format)?;
    let n = measures.len();
    println!(
        "gram: {n} measures, {} pair evaluations -> {}",
        n * (n - 1) / 2,
        args.out.display()
    );
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for (i, j, e) in &failures {
            eprintln!("pair ({i}, {j}) failed: {e}");
        }
        eprintln!("{} pair(s) failed; slots written as NaN", failures.len());
        Ok(ExitCode::from(3))
    }
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Error> {
    let graph = io::load_graph(&args.graph)?;
    let measures = load_measure_set(&args.measures, &args.assignment, &graph)?;
    let phis: Vec<NFunction> = args
        .phi
        .split(',')
        .map(|s| NFunction::parse(s.trim()))
        .collect::<Result<_, _>>()?;
    let tol = args.tol.unwrap_or(DEFAULT_GST_TOL);

    let mut report = String::from("method,phi,total_seconds,per_pair_us,speedup\n");
    if args.pairs == 0 {
        std::fs::write(&args.out, &report)
            .map_err(|e| Error::io(args.out.display().to_string(), e))?;
        println!("empty report (0 pairs) -> {}", args.out.display());
        return Ok(ExitCode::SUCCESS);
    }
    if measures.len() < 2 {
        return Err(Error::invalid("bench needs at least 2 measures"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let pairs: Vec<(usize, usize)> = (0..args.pairs)
        .map(|_| {
            let i = rng.gen_range(0..measures.len());
            let mut j = rng.gen_range(0..measures.len());
            while j == i {
                j = rng.gen_range(0..measures.len());
            }
            (i, j)
        })
        .collect();

    // preprocessing, reported separately
    let t0 = Instant::now();
    let index = build_path_index(&graph)?;
    let pre_gst = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let cache = support_cache(&graph, &measures)?;
    let pre_ow = t0.elapsed().as_secs_f64();
    report.push_str(&format!("gst_preprocess,,{},,\n", io::fmt_f64(pre_gst)));
    report.push_str(&format!("ow_preprocess,,{},,\n", io::fmt_f64(pre_ow)));

    let warmup = pairs.len().min(3);
    for phi in &phis {
        // warm-up pass excluded from timing
        for &(i, j) in pairs.iter().take(warmup) {
            gst(&index, &measures[i], &measures[j], phi, tol)?;
        }
        let t0 = Instant::now();
        for &(i, j) in &pairs {
            gst(&index, &measures[i], &measures[j], phi, tol)?;
        }
        let gst_secs = t0.elapsed().as_secs_f64();

        let ow_eval = |i: usize, j: usize| -> Result<f64, Error> {
            if phi.is_linear() {
                wasserstein_p(&cache, &measures[i], &measures[j], 1.0)
            } else {
                Ok(orlicz_wasserstein(&cache, &measures[i], &measures[j], phi, DEFAULT_OW_TOL)?.value)
            }
        };
        for &(i, j) in pairs.iter().take(warmup) {
            ow_eval(i, j)?;
        }
        let t0 = Instant::now();
        for &(i, j) in &pairs {
            ow_eval(i, j)?;
        }
        let ow_secs = t0.elapsed().as_secs_f64();

        let n = pairs.len() as f64;
        report.push_str(&format!(
            "gst,{phi},{},{},{}\n",
            io::fmt_f64(gst_secs),
            io::fmt_f64(gst_secs / n * 1e6),
            io::fmt_f64(ow_secs / gst_secs)
        ));
        report.push_str(&format!(
            "ow,{phi},{},{},1\n",
            io::fmt_f64(ow_secs),
            io::fmt_f64(ow_secs / n * 1e6)
        ));
        println!(
            "phi {phi}: {} pairs, gst {gst_secs:.4}s, ow {ow_secs:.4}s, speedup {:.1}x",
            pairs.len(),
            ow_secs / gst_secs
        );
    }
    std::fs::write(&args.out, &report).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, Error> {
    let graph = io::load_graph(&args.graph)?;
    let measures = load_measure_set(&args.measures, &args.assignment, &graph)?;
    if measures.len() < 2 {
        return Err(Error::invalid("validate needs at least 2 measures"));
    }
    let index = build_path_index(&graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let pairs: Vec<(usize, usize)> = (0..args.pairs.max(1))
        .map(|_| {
            let i = rng.gen_range(0..measures.len());
            let mut j = rng.gen_range(0..measures.len());
            while j == i {
                j = rng.gen_range(0..measures.len());
            }
            (i, j)
        })
        .collect();
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // univariate solver against the p-order closed form; bypasses the
    // closed-form dispatch so the two routes are genuinely independent
    for &p in &[1.5, 2.0, 3.0] {
        let phi = NFunction::power_scaled(p).unwrap();
        let mut worst = 0.0f64;
        for &(i, j) in &pairs {
            let a = gst_with_phi(&index, &measures[i], &measures[j], &phi, DEFAULT_GST_TOL)?.value;
            let b = sobolev_transport(&index, &measures[i], &measures[j], p)?;
            worst = worst.max((a - b).abs() / (1.0 + b));
        }
        check(
            &format!("closed-form p={p}"),
            worst <= 1e-8,
            format!("max relative gap {worst:.2e}"),
        );
    }

    // tree route: first-order closed form against the exact solver
    let tree = if graph.is_tree() {
        graph.clone()
    } else {
        random_spanning_tree(&graph, args.seed)?
    };
    let tree_index = build_path_index(&tree)?;
    let tree_cache = support_cache(&tree, &measures)?;
    let mut worst_closed = 0.0f64;
    let mut worst_lp = 0.0f64;
    for &(i, j) in &pairs {
        let tw = tree_wasserstein(&tree_index, &measures[i], &measures[j])?;
        let s1 = sobolev_transport(&tree_index, &measures[i], &measures[j], 1.0)?;
        let w1 = wasserstein_p(&tree_cache, &measures[i], &measures[j], 1.0)?;
        worst_closed = worst_closed.max((tw - s1).abs());
        worst_lp = worst_lp.max((tw - w1).abs());
    }
    check(
        "tree first-order closed form",
        worst_closed <= 1e-9,
        format!("max gap {worst_closed:.2e}"),
    );
    check(
        "tree against exact transport",
        worst_lp <= 1e-8,
        format!("max gap {worst_lp:.2e}"),
    );

    // OW with power growth against the p-order Wasserstein
    let cache = support_cache(&graph, &measures)?;
    for &p in &[1.5, 2.0] {
        let phi = NFunction::power(p).unwrap();
        let mut worst = 0.0f64;
        for &(i, j) in pairs.iter().take(5) {
            let ow = orlicz_wasserstein(&cache, &measures[i], &measures[j], &phi, 1e-8)?.value;
            let wp = wasserstein_p(&cache, &measures[i], &measures[j], p)?;
            worst = worst.max((ow - wp).abs() / wp.max(1e-12));
        }
        check(
            &format!("ow power identity p={p}"),
            worst <= 1e-6,
            format!("max relative gap {worst:.2e}"),
        );
    }

    // metric spot checks
    let phi = NFunction::ExpMinus;
    let mut sym_ok = true;
    let mut tri_ok = true;
    for &(i, j) in pairs.iter().take(5) {
        let k = (i + j) % measures.len();
        let ab = gst(&index, &measures[i], &measures[j], &phi, DEFAULT_GST_TOL)?.value;
        let ba = gst(&index, &measures[j], &measures[i], &phi, DEFAULT_GST_TOL)?.value;
        sym_ok &= ab.to_bits() == ba.to_bits();
        let ak = gst(&index, &measures[i], &measures[k], &phi, DEFAULT_GST_TOL)?.value;
        let kb = gst(&index, &measures[k], &measures[j], &phi, DEFAULT_GST_TOL)?.value;
        tri_ok &= ab <= ak + kb + 1e-9;
    }
    check("metric symmetry (exact)", sym_ok, String::new());
    check("metric triangle inequality", tri_ok, String::new());

    if all_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::NonConvergence("validation suite failed".into()))
    }
}
