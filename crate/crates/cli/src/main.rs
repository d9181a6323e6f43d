mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use covsel::bench::{bench_csv, cmd_bench, cmd_sweep, final_accuracy_spread, summarize_bench, sweep_csv, SweepConfig};
use covsel::evalloop::{records_to_jsonl, run_loop, split_train_test, LoopConfig, RunRecord, DEFAULT_TEMPERATURE};
use covsel::features::{
    decode_labels, generate_mixture, load_features, make_longtail, save_features, save_labels, write_atomic,
    FeatureFormat, FeatureStore, ImbalanceSpec, MixtureComponent, MixtureSpec,
};
use covsel::kernels::{Kernel, KernelFamily};
use covsel::kmedoids::KMedoidsOptions;
use covsel::purity::{choose_delta, choose_lengthscale, linspace, PurityConfig};
use covsel::selectors::{
    select, LabeledPool, Method, ProbMatrix, SelectorConfig, DEFAULT_CLUSTER_CAP, DEFAULT_TYPICALITY_M,
};
use covsel::{Error, Result};

#[derive(Parser)]
#[command(name = "covsel", version, about = "Coverage-based subset selection for active learning")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled Gaussian mixture, or subsample a labeled set to a long tail.
    Gen(GenArgs),
    /// Select a batch of indices to label next.
    Select(SelectArgs),
    /// Simulate active learning and write one JSON record per iteration.
    Loop(LoopArgs),
    /// Sweep a radius or lengthscale grid and report cluster purity.
    Purity(PurityArgs),
    /// Time successive selections per method.
    Bench(BenchArgs),
    /// Run the loop across a grid of radii or lengthscales.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct KernelArgs {
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    /// Student-t degrees of freedom.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
}

impl KernelArgs {
    fn build(&self) -> Result<Kernel> {
        Kernel::new(self.kernel, self.lengthscale)?.with_nu(self.nu)
    }
}

#[derive(Args, Clone)]
struct MethodArgs {
    #[arg(long, default_value = "maxherding")]
    method: Method,
    #[command(flatten)]
    kernel: KernelArgs,
    /// ProbCover radius.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_TYPICALITY_M)]
    typicality_m: usize,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_CAP)]
    cluster_cap: usize,
    /// Leave the labeled pool out of the kernel herding penalty.
    #[arg(long)]
    herding_ignore_pool: bool,
    /// Start k-medoids from the greedy batch.
    #[arg(long)]
    warm_start: bool,
    #[arg(long)]
    max_swaps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
}

impl MethodArgs {
    fn build(&self, seed: u64) -> Result<SelectorConfig> {
        let mut c = SelectorConfig::new(self.method)
            .with_kernel(self.kernel.build()?)
            .with_delta(self.delta)
            .with_seed(seed);
        c.typicality_m = self.typicality_m;
        c.cluster_cap = self.cluster_cap;
        c.herding_ignore_pool = self.herding_ignore_pool;
        c.kmedoids = KMedoidsOptions {
            warm_start: self.warm_start,
            max_swaps: self.max_swaps,
            restarts: self.restarts,
        };
        Ok(c)
    }
}

#[derive(Args)]
struct GenArgs {
    /// Component means, `;`-separated, coordinates `,`-separated.
    #[arg(long)]
    means: Option<String>,
    /// One stddev for all components, or one per component.
    #[arg(long, default_value = "1.0")]
    stddevs: String,
    /// Component weights; uniform when omitted.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Subsample existing labeled features instead of sampling a mixture.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Long-tail ratio between the rarest and most frequent class.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels_out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    features: PathBuf,
    /// CSV column holding labels, if any.
    #[arg(long)]
    label_column: Option<usize>,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    budget: usize,
    /// Already labeled indices, one per line.
    #[arg(long)]
    labeled: Option<PathBuf>,
    /// Class probabilities, one comma-separated row per sample.
    #[arg(long)]
    probs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct LoopData {
    #[arg(long)]
    train_features: PathBuf,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_features: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Held-out share of the training file when no test file is given.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Args, Clone)]
struct LoopParams {
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    budget: usize,
    #[arg(long)]
    iters: usize,
    /// Randomly labeled points before the first iteration.
    #[arg(long, default_value_t = 0)]
    initial: usize,
    /// Softmax temperature for the uncertainty methods.
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long)]
    normalize: bool,
    /// Record wall_ms as 0, making repeated runs byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl LoopParams {
    fn build(&self, seed: u64) -> Result<LoopConfig> {
        let mut c = LoopConfig::new(self.method.build(seed)?, self.budget, self.iters, seed);
        c.initial = self.initial;
        c.temperature = self.temperature;
        c.normalize = self.normalize;
        c.timing = !self.no_timing;
        Ok(c)
    }
}

#[derive(Args)]
struct LoopArgs {
    #[command(flatten)]
    data: LoopData,
    #[command(flatten)]
    params: LoopParams,
    #[arg(long, default_value = "0")]
    seeds: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PurityArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    classes: usize,
    #[arg(long, default_value = "tophat")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 0.05)]
    grid_min: f64,
    #[arg(long, default_value_t = 1.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 20)]
    grid_steps: usize,
    #[arg(long, default_value_t = 0.95)]
    target: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Measure in the raw feature space instead of on the unit sphere.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "random,maxherding")]
    methods: String,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: LoopData,
    #[command(flatten)]
    params: LoopParams,
    /// Radii (ProbCover) or lengthscales, comma-separated.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Cluster count for the purity column.
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad {what} `{s}`"))))
        .collect()
}

fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"LBL1") {
        return decode_labels(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not a label file", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().map_err(|_| Error::Format(format!("bad label `{l}`"))))
        .collect()
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().map_err(|_| Error::Format(format!("bad index `{l}`"))))
        .collect()
}

fn read_probs(path: &Path) -> Result<ProbMatrix> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut width = None;
    for line in fs::read_to_string(path)?.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let row: Vec<f64> = parse_list(line, "probability").map_err(|e| Error::Format(e.to_string()))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Data(format!("probability row {rows} has a different length")));
        }
        values.extend(row);
        rows += 1;
    }
    ProbMatrix::new(rows, width.unwrap_or(0), values)
}

fn load(path: &Path, labels: Option<&Path>, label_column: Option<usize>) -> Result<FeatureStore> {
    let store = load_features(path, FeatureFormat::from_path(path), label_column)?;
    match labels {
        Some(l) => store.with_labels(read_labels(l)?),
        None => Ok(store),
    }
}

fn emit(out: Option<&Path>, text: &str, resolved: &str) -> Result<()> {
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            let mut sidecar = path.as_os_str().to_owned();
            sidecar.push(".config");
            write_atomic(Path::new(&sidecar), resolved.as_bytes())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_csv(store: &FeatureStore) -> String {
    let mut out = String::new();
    for row in store.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let store = match (&a.features, &a.means) {
        (Some(path), _) => load(path, a.labels.as_deref(), None)?,
        (None, Some(means)) => {
            let means: Vec<Vec<f64>> = means
                .split(';')
                .map(|m| parse_list(m, "mean coordinate"))
                .collect::<Result<_>>()?;
            let k = means.len();
            let stddevs: Vec<f64> = parse_list(&a.stddevs, "stddev")?;
            let weights: Vec<f64> = match &a.weights {
                Some(w) => parse_list(w, "weight")?,
                None => vec![1.0 / k as f64; k],
            };
            if (stddevs.len() != 1 && stddevs.len() != k) || weights.len() != k {
                return Err(Error::Config(format!("{k} means need matching stddevs and weights")));
            }
            let components = means
                .into_iter()
                .enumerate()
                .map(|(c, mean)| MixtureComponent {
                    mean,
                    stddev: stddevs[if stddevs.len() == 1 { 0 } else { c }],
                    weight: weights[c],
                })
                .collect();
            generate_mixture(&MixtureSpec { components, n_samples: a.n, seed: a.seed })?
        }
        (None, None) => return Err(Error::Config("gen needs --means or --features".into())),
    };
    let store = match a.rho {
        Some(rho) => make_longtail(&store, &ImbalanceSpec { rho, seed: a.seed })?,
        None => store,
    };
    if FeatureFormat::from_path(&a.out) == FeatureFormat::Csv {
        write_atomic(&a.out, to_csv(&store).as_bytes())?;
    } else {
        save_features(&store, &a.out)?;
    }
    save_labels(store.require_labels()?, &a.labels_out)
}

fn cmd_select(a: &SelectArgs, resolved: &str) -> Result<()> {
    let store = load(&a.features, None, a.label_column)?;
    let store = if a.normalize { covsel::features::normalize_rows(&store)? } else { store };
    let labeled = match &a.labeled {
        Some(p) => read_indices(p)?,
        None => Vec::new(),
    };
    let pool = LabeledPool::from_indices(store.n_samples(), &labeled)?;
    let probs = a.probs.as_deref().map(read_probs).transpose()?;
    let batch = select(&store.without_labels(), &pool, a.budget, &a.method.build(a.seed)?, probs.as_ref())?;
    let text: String = batch.indices.iter().map(|i| format!("{i}\n")).collect();
    emit(a.out.as_deref(), &text, resolved)
}

fn loop_data(d: &LoopData) -> Result<(FeatureStore, FeatureStore)> {
    let train = load(&d.train_features, d.train_labels.as_deref(), None)?;
    match &d.test_features {
        Some(test) => Ok((train, load(test, d.test_labels.as_deref(), None)?)),
        None => split_train_test(&train, d.test_fraction, 0),
    }
}

fn cmd_loop(a: &LoopArgs, resolved: &str) -> Result<()> {
    let (train, test) = loop_data(&a.data)?;
    let seeds: Vec<u64> = parse_list(&a.seeds, "seed")?;
    let configs = seeds.iter().map(|&s| a.params.build(s)).collect::<Result<Vec<_>>>()?;
    let jobs = a.jobs.max(1);
    let mut results: Vec<Option<Result<Vec<RunRecord>>>> = (0..configs.len()).map(|_| None).collect();
    for (chunk_cfg, chunk_out) in configs.chunks(jobs).zip(results.chunks_mut(jobs)) {
        thread::scope(|scope| {
            let handles: Vec<_> = chunk_cfg
                .iter()
                .map(|cfg| scope.spawn(|| run_loop(&train, &test, cfg)))
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().expect("loop worker panicked"));
            }
        });
    }
    let mut records = Vec::new();
    for r in results.into_iter().flatten() {
        records.extend(r?);
    }
    emit(a.out.as_deref(), &records_to_jsonl(&records), resolved)
}

fn cmd_purity(a: &PurityArgs, resolved: &str) -> Result<()> {
    let store = load(&a.features, None, None)?;
    let config = PurityConfig {
        grid: linspace(a.grid_min, a.grid_max, a.grid_steps),
        target: a.target,
        seed: a.seed,
        normalize: !a.no_normalize,
    };
    let sweep = if a.kernel.is_smooth() {
        choose_lengthscale(&store, a.classes, a.kernel, &config)?
    } else {
        choose_delta(&store, a.classes, &config)?
    };
    if sweep.warning {
        eprintln!("warning: purity is below the target at every grid value; using the smallest");
    }
    let text = format!("{}chosen,{}\n", sweep.to_csv(), sweep.chosen);
    emit(a.out.as_deref(), &text, resolved)
}

fn cmd_bench_cli(a: &BenchArgs, resolved: &str) -> Result<()> {
    let store = load(&a.features, a.labels.as_deref(), None)?;
    let methods = parse_list::<Method>(&a.methods, "method")?
        .into_iter()
        .map(|m| {
            let mut args = a.method.clone();
            args.method = m;
            args.build(a.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = cmd_bench(&store, &methods, a.budget, a.iters, a.seed)?;
    for s in summarize_bench(&rows) {
        eprintln!("{}: mean {:.3} ms, median {:.3} ms", s.method, s.mean_ms, s.median_ms);
    }
    emit(a.out.as_deref(), &bench_csv(&rows), resolved)
}

fn cmd_sweep_cli(a: &SweepArgs, resolved: &str) -> Result<()> {
    let (train, test) = loop_data(&a.data)?;
    let config = SweepConfig {
        loop_config: a.params.build(0)?,
        grid: parse_list(&a.grid, "grid value")?,
        seeds: parse_list(&a.seeds, "seed")?,
        n_classes: a.classes,
        purity: PurityConfig { normalize: a.params.normalize, ..PurityConfig::default() },
    };
    let rows = cmd_sweep(&train, &test, &config)?;
    eprintln!("final accuracy spread: {:.4}", final_accuracy_spread(&rows));
    emit(a.out.as_deref(), &sweep_csv(&rows), resolved)
}

fn run(args: Vec<OsString>) -> Result<()> {
    let command = Cli::command().args_override_self(true);
    let args = config::expand(args, &command)?;
    let matches = command.clone().get_matches_from(args);
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Error::Config(e.to_string()))?;
    let resolved = match matches.subcommand() {
        Some((name, sub)) => config::resolved(command.find_subcommand(name).expect("parsed subcommand"), sub),
        None => String::new(),
    };
    match &cli.command {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Select(a) => cmd_select(a, &resolved),
        Cmd::Loop(a) => cmd_loop(a, &resolved),
        Cmd::Purity(a) => cmd_purity(a, &resolved),
        Cmd::Bench(a) => cmd_bench_cli(a, &resolved),
        Cmd::Sweep(a) => cmd_sweep_cli(a, &resolved),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
