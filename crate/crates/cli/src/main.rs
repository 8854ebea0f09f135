use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lbb_core::acquisition::{select, PairwisePath, SelectionBatch, Strategy, StrategyParams};
use lbb_core::bench::{bench_runtime, BenchTable, PoolSpec};
use lbb_core::profile::{dolan_more, ErrorTable, ProfileCurves};
use lbb_core::report::{emit_report, profile_csv, profile_svg, summarize, summary_csv, ReportInputs};
use lbb_core::scores::{bald_scores, entropy_scores, least_confident_scores};
use lbb_core::sim::{run_seeds, RunConfig};
use lbb_core::PosteriorTensor;

mod manifest;
mod records;

use manifest::{to_json, Manifest, RunDir};

#[derive(Parser)]
#[command(name = "lbb", version, about = "Batch acquisition for Bayesian active learning")]
struct Cli {
    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or selection file for `select`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config for the subcommand; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise scores and the predictive mean of a posterior tensor.
    Score(ScoreArgs),
    /// Select one acquisition batch from a posterior tensor.
    Select(SelectArgs),
    /// Run the active-learning loop described by `--config`.
    Simulate,
    /// Time selection strategies on a synthetic pool.
    Bench(BenchArgs),
    /// Dolan-More profile of final-round error rates.
    Profile(ProfileArgs),
    /// Summary CSVs, metadata and SVG plots.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
enum ScoreKind {
    Lc,
    Entropy,
    Bald,
}

#[derive(clap::Args)]
struct ScoreArgs {
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    scores: Option<Vec<ScoreKind>>,
    /// Also export the predictive mean.
    #[arg(long)]
    mean: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct ScoreConfig {
    tensor: Option<PathBuf>,
    scores: Vec<ScoreKind>,
    mean: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            tensor: None,
            scores: vec![ScoreKind::Lc, ScoreKind::Entropy, ScoreKind::Bald],
            mean: false,
        }
    }
}

#[derive(clap::Args)]
struct SelectArgs {
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    enumeration_cap: Option<usize>,
    #[arg(long, value_enum)]
    pairwise: Option<Pairwise>,
    /// Put `wall_time_s` into the selection JSON instead of the timings sidecar.
    #[arg(long)]
    inline_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pairwise {
    Auto,
    Full,
    Lazy,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SelectConfig {
    tensor: Option<PathBuf>,
    strategy: Option<Strategy>,
    batch: Option<usize>,
    params: StrategyParams,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct BenchConfig {
    strategies: Vec<Strategy>,
    batch_sizes: Vec<usize>,
    pool: PoolSpec,
    reps: usize,
    params: StrategyParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Bald, Strategy::BatchBald, Strategy::Lbb],
            batch_sizes: vec![1, 10, 20],
            pool: PoolSpec::default(),
            reps: 3,
            params: StrategyParams::default(),
        }
    }
}

#[derive(clap::Args)]
struct ProfileArgs {
    /// Records files or simulate run directories.
    #[arg(long, num_args = 1..)]
    records: Vec<PathBuf>,
    /// CSV `problem,solver,error` instead of records.
    #[arg(long, conflicts_with = "records")]
    table: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReportArgs {
    #[arg(long, num_args = 1..)]
    records: Vec<PathBuf>,
    /// `bench.json` files or bench run directories.
    #[arg(long, num_args = 1..)]
    bench: Vec<PathBuf>,
    /// `profile.json` from the profile command; otherwise derived from the records.
    #[arg(long)]
    profile: Option<PathBuf>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn out_dir(cli_out: Option<&PathBuf>, command: &str) -> PathBuf {
    cli_out.cloned().unwrap_or_else(|| PathBuf::from("runs").join(command))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Score(args) => score(&cli, args),
        Command::Select(args) => select_cmd(&cli, args),
        Command::Simulate => simulate(&cli),
        Command::Bench(args) => bench(&cli, args),
        Command::Profile(args) => profile(&cli, args),
        Command::Report(args) => report(&cli, args),
    }
}

fn load_tensor(path: &Path) -> Result<PosteriorTensor> {
    PosteriorTensor::load(path).with_context(|| format!("loading tensor {}", path.display()))
}

fn score(cli: &Cli, args: &ScoreArgs) -> Result<()> {
    let mut cfg: ScoreConfig = load_config(cli.config.as_deref())?;
    if args.tensor.is_some() {
        cfg.tensor = args.tensor.clone();
    }
    if let Some(s) = &args.scores {
        cfg.scores = s.clone();
    }
    cfg.mean |= args.mean;
    let Some(tensor_path) = cfg.tensor.clone() else {
        bail!("score needs --tensor");
    };
    let tensor = load_tensor(&tensor_path)?;

    let mut manifest = Manifest::new("score", None, &cfg)?;
    manifest.hash_input(&tensor_path)?;
    let mut run = RunDir::create(out_dir(cli.out.as_ref(), "score"), manifest)?;
    for kind in &cfg.scores {
        let scores = match kind {
            ScoreKind::Lc => least_confident_scores(&tensor),
            ScoreKind::Entropy => entropy_scores(&tensor),
            ScoreKind::Bald => bald_scores(&tensor).0,
        };
        let mut csv = Vec::new();
        scores.write_csv(&mut csv)?;
        run.write(&format!("scores_{}.csv", scores.label), csv)?;
    }
    if cfg.mean {
        let mut csv = Vec::new();
        tensor.predictive_mean().write_csv(&mut csv)?;
        run.write("mean.csv", csv)?;
    }
    run.finish()
}

#[derive(Serialize)]
struct SelectionJson<'a> {
    strategy: &'a str,
    indices: &'a [usize],
    gains: &'a [f64],
    seed: Option<u64>,
    flags: &'a [lbb_core::SelectionFlag],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

#[derive(Serialize)]
struct TimingJson<'a> {
    strategy: &'a str,
    wall_time_s: f64,
}

fn selection_json(batch: &SelectionBatch, inline_timing: bool) -> Result<String> {
    to_json(&SelectionJson {
        strategy: &batch.strategy,
        indices: &batch.indices,
        gains: &batch.gains,
        seed: batch.seed,
        flags: &batch.flags,
        wall_time_s: inline_timing.then_some(batch.wall_time),
    })
}

fn select_cmd(cli: &Cli, args: &SelectArgs) -> Result<()> {
    let mut cfg: SelectConfig = load_config(cli.config.as_deref())?;
    if args.tensor.is_some() {
        cfg.tensor = args.tensor.clone();
    }
    cfg.strategy = args.strategy.or(cfg.strategy);
    cfg.batch = args.batch.or(cfg.batch);
    if let Some(s) = cli.seed {
        cfg.params.seed = s;
    }
    if let Some(a) = args.alpha {
        cfg.params.alpha = a;
    }
    if let Some(m) = args.mc_samples {
        cfg.params.mc_samples = m;
    }
    if let Some(cap) = args.enumeration_cap {
        cfg.params.enumeration_cap = cap;
    }
    if let Some(p) = args.pairwise {
        cfg.params.pairwise = match p {
            Pairwise::Auto => PairwisePath::Auto,
            Pairwise::Full => PairwisePath::Full,
            Pairwise::Lazy => PairwisePath::Lazy,
        };
    }
    let (Some(tensor_path), Some(strategy), Some(b)) = (cfg.tensor.clone(), cfg.strategy, cfg.batch) else {
        bail!("select needs --tensor, --strategy and --batch");
    };
    let tensor = load_tensor(&tensor_path)?;
    let batch = select(&tensor, strategy, b, &cfg.params)?;

    let mut manifest = Manifest::new("select", Some(cfg.params.seed), &cfg)?;
    manifest.hash_input(&tensor_path)?;
    let target = out_dir(cli.out.as_ref(), "select");
    // `--out sel.json` names the selection file; anything else is a directory.
    let (mut run, stem) = if target.extension().is_some_and(|e| e == "json") {
        let dir = target.parent().map(Path::to_path_buf).filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| PathBuf::from("."));
        let stem = target.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "selection".into());
        (RunDir::with_manifest_name(dir, manifest, format!("{stem}.manifest.json"))?, stem)
    } else {
        (RunDir::create(target, manifest)?, "selection".to_string())
    };
    if args.inline_timing {
        run.write_timing(&format!("{stem}.json"), selection_json(&batch, true)?)?;
    } else {
        run.write(&format!("{stem}.json"), selection_json(&batch, false)?)?;
        run.write_timing(
            &format!("{stem}.timings.json"),
            to_json(&TimingJson {
                strategy: &batch.strategy,
                wall_time_s: batch.wall_time,
            })?,
        )?;
    }
    run.finish()
}

fn simulate(cli: &Cli) -> Result<()> {
    let Some(path) = cli.config.as_deref() else {
        bail!("simulate needs --config FILE.json");
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    let records = run_seeds(&cfg)?;

    let mut manifest = Manifest::new("simulate", cli.seed, &cfg)?;
    manifest.hash_input(path)?;
    for input in cfg.dataset.input_files() {
        manifest.hash_input(&input)?;
    }
    let mut run = RunDir::create(out_dir(cli.out.as_ref(), "simulate"), manifest)?;
    run.write("records.jsonl", records::records_jsonl(&records)?)?;
    run.write("summary.csv", summary_csv(&summarize(&records)?, false))?;
    run.write_timing("timings.jsonl", records::timings_jsonl(&records)?)?;
    run.finish()
}

#[derive(Serialize)]
struct BenchSelections<'a> {
    env: &'a lbb_core::bench::BenchEnv,
    selections: &'a [lbb_core::bench::BenchSelection],
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let mut cfg: BenchConfig = load_config(cli.config.as_deref())?;
    if let Some(s) = &args.strategies {
        cfg.strategies = s.clone();
    }
    if let Some(b) = &args.batch_sizes {
        cfg.batch_sizes = b.clone();
    }
    cfg.pool.n = args.n.unwrap_or(cfg.pool.n);
    cfg.pool.k = args.k.unwrap_or(cfg.pool.k);
    cfg.pool.c = args.c.unwrap_or(cfg.pool.c);
    cfg.reps = args.reps.unwrap_or(cfg.reps);
    if let Some(s) = cli.seed {
        cfg.pool.seed = s;
        cfg.params.seed = s;
    }
    let table = bench_runtime(&cfg.strategies, &cfg.batch_sizes, &cfg.pool, cfg.reps, &cfg.params)?;

    let manifest = Manifest::new("bench", Some(cfg.pool.seed), &cfg)?;
    let mut run = RunDir::create(out_dir(cli.out.as_ref(), "bench"), manifest)?;
    run.write(
        "selections.json",
        to_json(&BenchSelections {
            env: &table.env,
            selections: &table.selections,
        })?,
    )?;
    run.write_timing("bench.json", to_json(&table)?)?;
    run.write_timing("runtime.csv", lbb_core::report::runtime_csv(std::slice::from_ref(&table)))?;
    run.finish()
}

fn read_error_table(path: &Path) -> Result<ErrorTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut problems: Vec<String> = Vec::new();
    let mut solvers: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [p, s, v] = fields[..] else {
            bail!("{}:{}: expected problem,solver,error", path.display(), n + 1);
        };
        let value: f64 = v.parse().with_context(|| format!("{}:{}: bad error value", path.display(), n + 1))?;
        let pi = problems.iter().position(|x| x == p).unwrap_or_else(|| {
            problems.push(p.to_string());
            problems.len() - 1
        });
        let si = solvers.iter().position(|x| x == s).unwrap_or_else(|| {
            solvers.push(s.to_string());
            solvers.len() - 1
        });
        cells.push((pi, si, value));
    }
    let mut values = vec![None; problems.len() * solvers.len()];
    for (p, s, v) in cells {
        values[p * solvers.len() + s] = Some(v);
    }
    Ok(ErrorTable::new(problems, solvers, values)?)
}

fn collect_records(paths: &[PathBuf], manifest: &mut Manifest) -> Result<Vec<lbb_core::sim::RunRecord>> {
    let mut all = Vec::new();
    for p in paths {
        let file = records::records_path(p);
        manifest.hash_input(&file)?;
        all.extend(records::load_records(&file)?);
    }
    Ok(all)
}

fn profile(cli: &Cli, args: &ProfileArgs) -> Result<()> {
    let mut manifest = Manifest::new("profile", None, &serde_json::Value::Null)?;
    let table = match &args.table {
        Some(path) => {
            manifest.hash_input(path)?;
            read_error_table(path)?
        }
        None if !args.records.is_empty() => ErrorTable::from_records(&collect_records(&args.records, &mut manifest)?)?,
        None => bail!("profile needs --records or --table"),
    };
    let curves = dolan_more(&table)?;
    let mut run = RunDir::create(out_dir(cli.out.as_ref(), "profile"), manifest)?;
    run.write("profile.json", to_json(&curves)?)?;
    run.write("profile.csv", profile_csv(&curves))?;
    run.write("profile.svg", profile_svg(&curves))?;
    run.finish()
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let mut manifest = Manifest::new("report", None, &serde_json::Value::Null)?;
    if args.records.is_empty() {
        bail!("report needs --records");
    }
    let records = collect_records(&args.records, &mut manifest)?;
    let mut tables: Vec<BenchTable> = Vec::new();
    for p in &args.bench {
        let file = if p.is_dir() { p.join("bench.json") } else { p.clone() };
        manifest.hash_input(&file)?;
        let reader = BufReader::new(fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?);
        tables.push(serde_json::from_reader(reader).with_context(|| format!("parsing {}", file.display()))?);
    }
    let curves: Option<ProfileCurves> = match &args.profile {
        Some(p) => {
            manifest.hash_input(p)?;
            Some(serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let dir = out_dir(cli.out.as_ref(), "report");
    let written = emit_report(
        &ReportInputs {
            records: &records,
            bench: &tables,
            profile: curves.as_ref(),
        },
        &dir,
    )?;
    let mut run = RunDir::create(dir, manifest)?;
    for path in &written {
        run.adopt(path);
    }
    run.finish()
}
