use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridknn::bench::{run_bench, timings_csv, BenchRow, BenchSpec};
use gridknn::data_io::{
    generate, parse_classifications, parse_input, parse_training, sample_fraction, sidecar_bounds,
    write_classifications, write_input, write_knn_lists, write_training, Bounds, DatasetSpec, Distribution,
};
use gridknn::grid::MergeStats;
use gridknn::pipeline::{Fault, PipelineConfig};
use gridknn::{
    oracle_aknnc, run_aknnc, ClassId, Error, GridSpec, KnnList, MethodRegistry, Point, QualityReport, TrainingSet,
};

#[derive(Parser)]
#[command(name = "gridknn", version, about = "Exact all-k-nearest-neighbor classification on a grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Generate(GenerateArgs),
    /// Classify the input points.
    Run(RunArgs),
    /// Compare the pipeline with a brute-force scan.
    Verify(VerifyArgs),
    /// Sweep parameters and report per-phase timings as CSV.
    Bench(BenchArgs),
    /// One-vs-rest rates of predictions against ground truth.
    Quality(QualityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    PowerLaw,
}

impl Kind {
    fn distribution(self, alpha: f64) -> Distribution {
        match self {
            Kind::Uniform => Distribution::Uniform,
            Kind::PowerLaw => Distribution::PowerLaw { alpha },
        }
    }
}

#[derive(Args, Clone)]
struct GeneratorArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    distribution: Kind,
    #[arg(long, default_value_t = DatasetSpec::DEFAULT_ALPHA)]
    alpha: f64,
    /// Points generated, training and input together.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Coarse per-axis resolution of the labels; smallest fitting grid if unset.
    #[arg(long)]
    class_grid: Option<u64>,
    #[arg(long, default_value_t = DatasetSpec::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
}

impl GeneratorArgs {
    fn spec(&self, d: usize, seed: u64) -> DatasetSpec {
        let mut spec = DatasetSpec::new(self.distribution.distribution(self.alpha), d, self.count, seed);
        spec.classes = self.classes;
        spec.class_grid = self
            .class_grid
            .unwrap_or_else(|| gridknn::data_io::default_class_grid(d, self.classes));
        spec.train_fraction = self.train_fraction;
        spec
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Directory for data.train.tsv, data.input.tsv and data.truth.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct GridArgs {
    /// Cells per axis as a power of two, 2^n.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    cells_per_axis: Option<u64>,
}

impl GridArgs {
    fn grid(&self, d: usize) -> Result<GridSpec, Error> {
        match (self.n, self.cells_per_axis) {
            (Some(n), _) => GridSpec::with_granularity(d, n),
            (None, Some(g)) => GridSpec::new(d, g),
            (None, None) => unreachable!("clap requires one grid flag"),
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value = "kdann+")]
    method: String,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// Labeled training points; generated from --seed when absent.
    #[arg(long, requires = "input")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    input: Option<PathBuf>,
    /// Per-axis bounds for raw data; `<name>.bounds.tsv` beside the training file is used otherwise.
    #[arg(long)]
    bounds: Option<PathBuf>,
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Share of both datasets to process, sampled with --seed.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write knn.tsv.
    #[arg(long)]
    emit_knn: bool,
    /// Ground truth for quality.csv.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write per-job engine traces to trace.txt.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectedFault {
    SkipOverlap,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<InjectedFault>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "kdann+")]
    method: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "uniform")]
    distribution: Vec<Kind>,
    #[arg(long, default_value_t = DatasetSpec::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "cells_per_axis", required_unless_present = "cells_per_axis")]
    n: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    cells_per_axis: Vec<u64>,
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    fraction: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    count: usize,
    #[arg(long, default_value_t = DatasetSpec::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QualityArgs {
    #[arg(long)]
    classifications: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}")]
    Usage(String),
}

type CliResult<T> = Result<T, CliError>;

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

struct Loaded {
    input: Vec<Point>,
    training: TrainingSet,
    grid: GridSpec,
}

fn load(data: &DataArgs) -> CliResult<Loaded> {
    if !(data.fraction > 0.0 && data.fraction <= 1.0) {
        return Err(CliError::Usage(format!("--fraction must be in (0, 1], got {}", data.fraction)));
    }
    let grid = data.grid.grid(data.d)?;
    let (input, training) = match (&data.train, &data.input) {
        (Some(train), Some(input)) => {
            let bounds_path = data.bounds.clone().or_else(|| sidecar_bounds(train));
            let bounds = bounds_path.as_deref().map(Bounds::read).transpose()?;
            (
                parse_input(input, data.d, bounds.as_ref())?,
                parse_training(train, data.d, bounds.as_ref())?,
            )
        }
        _ => {
            let generated = generate(&data.generator.spec(data.d, data.seed))?;
            (generated.input, generated.training)
        }
    };
    let input = sample_fraction(&input, data.fraction, data.seed)?;
    let training = TrainingSet {
        points: sample_fraction(&training.points, data.fraction, data.seed.wrapping_add(1))?,
        classes: training.classes,
    };
    Ok(Loaded { input, training, grid })
}

fn config(data: &DataArgs, grid: GridSpec) -> CliResult<PipelineConfig> {
    let method = MethodRegistry::default().get(&data.method)?;
    Ok(PipelineConfig::new(method, data.k, grid, data.threads))
}

fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let data = generate(&args.generator.spec(args.d, args.seed))?;
    create_dir(&args.out)?;
    write_training(&data.training, &args.out.join("data.train.tsv"))?;
    write_input(&data.input, &args.out.join("data.input.tsv"))?;
    write_classifications(&data.truth, &data.training.classes, &args.out.join("data.truth.tsv"))?;
    println!(
        "wrote {} training and {} input points to {}",
        data.training.len(),
        data.input.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let loaded = load(&args.data)?;
    let config = config(&args.data, loaded.grid)?;
    let out = run_aknnc(&loaded.input, &loaded.training, &config)?;
    let classes = &loaded.training.classes;
    create_dir(&args.out)?;
    write_classifications(&out.classifications, classes, &args.out.join("classifications.tsv"))?;
    if args.emit_knn {
        write_knn_lists(&out.knn, classes, &args.out.join("knn.tsv"))?;
    }
    let method = config.method.name();
    write_text(
        &args.out.join("timings.csv"),
        &timings_csv(&out, method, config.k, &loaded.grid),
    )?;
    if let Some(stats) = out.merge_stats {
        write_text(
            &args.out.join("merge_stats.csv"),
            &format!("{}\n{}\n", MergeStats::CSV_HEADER, stats.csv_row()),
        )?;
    }
    if args.trace {
        let text: String = out.traces.iter().map(|t| format!("{t}\n")).collect();
        write_text(&args.out.join("trace.txt"), &text)?;
    }
    if let Some(truth) = &args.truth {
        let predictions: Vec<(u64, String)> = out
            .classifications
            .iter()
            .map(|c| (c.point_id, classes.label(c.class).to_string()))
            .collect();
        let report = QualityReport::compute(&predictions, &parse_classifications(truth)?)?;
        write_text(&args.out.join("quality.csv"), &report.to_csv())?;
    }
    println!(
        "classified {} points with {method} (k={}, {} cells per axis) in {:.3} ms",
        out.classifications.len(),
        config.k,
        loaded.grid.cells_per_axis(),
        out.total_time().as_secs_f64() * 1e3
    );
    Ok(())
}

/// Returns whether the pipeline agreed with the oracle.
fn cmd_verify(args: &VerifyArgs) -> CliResult<bool> {
    let loaded = load(&args.data)?;
    let mut config = config(&args.data, loaded.grid)?;
    config.fault = args.inject_fault.map(|InjectedFault::SkipOverlap| Fault::SkipOverlap);
    let out = run_aknnc(&loaded.input, &loaded.training, &config)?;
    let oracle = oracle_aknnc(&loaded.input, &loaded.training, config.k)?;

    let lists: HashMap<u64, &KnnList> = out.knn.iter().map(|(id, l)| (*id, l)).collect();
    let classes: HashMap<u64, ClassId> = out.classifications.iter().map(|c| (c.point_id, c.class)).collect();
    let expected_classes: HashMap<u64, ClassId> =
        oracle.classifications.iter().map(|c| (c.point_id, c.class)).collect();
    let diverged = oracle
        .knn
        .iter()
        .find(|(id, list)| lists.get(id) != Some(&list) || classes.get(id) != expected_classes.get(id))
        .map(|(id, _)| *id)
        .or_else(|| (out.knn.len() != oracle.knn.len()).then(|| out.knn[0].0));
    match diverged {
        None => {
            println!(
                "OK n_points={} n_training={} k={} method={}",
                loaded.input.len(),
                loaded.training.len(),
                config.k,
                config.method.name()
            );
            Ok(true)
        }
        Some(id) => {
            println!("DIVERGED point_id={id} method={}", config.method.name());
            Ok(false)
        }
    }
}

fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let grids = if args.n.is_empty() {
        args.cells_per_axis.clone()
    } else {
        args.n
            .iter()
            .map(|&n| {
                1u64.checked_shl(n)
                    .ok_or_else(|| CliError::Usage(format!("--n {n} is too large")))
            })
            .collect::<CliResult<_>>()?
    };
    let spec = BenchSpec {
        methods: args.method.clone(),
        distributions: args.distribution.iter().map(|k| k.distribution(args.alpha)).collect(),
        dims: args.d.clone(),
        grids,
        ks: args.k.clone(),
        fractions: args.fraction.clone(),
        threads: args.threads.clone(),
        count: args.count,
        train_fraction: args.train_fraction,
        classes: args.classes,
        seed: args.seed,
        repeats: args.repeats,
    };
    let mut sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(std::io::BufWriter::new(
            fs::File::create(path).map_err(|e| CliError::Io(path.clone(), e))?,
        )),
        None => Box::new(std::io::stdout()),
    };
    let sink_path = args.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let io_err = |e| CliError::Io(sink_path.clone(), e);
    writeln!(sink, "{}", BenchRow::csv_header()).map_err(io_err)?;
    let mut write_err = None;
    run_bench(&spec, &MethodRegistry::default(), |row| {
        if write_err.is_none() {
            write_err = writeln!(sink, "{}", row.csv_row()).and_then(|_| sink.flush()).err();
        }
    })?;
    match write_err {
        Some(e) => Err(io_err(e)),
        None => Ok(()),
    }
}

fn cmd_quality(args: &QualityArgs) -> CliResult<()> {
    let report = QualityReport::compute(
        &parse_classifications(&args.classifications)?,
        &parse_classifications(&args.truth)?,
    )?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => write_text(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| true),
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Quality(a) => cmd_quality(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
