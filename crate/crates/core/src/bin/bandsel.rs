use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bandsel::data::{self, Dataset};
use bandsel::harness::{self, ExperimentConfig, ExperimentReport, McmC, Preset, RankParams};
use bandsel::mcm;
use bandsel::metrics::{McReport, Weighting};
use bandsel::svm::{self, GammaChoice, SmoOptions};
use bandsel::{Error, Method, Result};

#[derive(Parser)]
#[command(name = "bandsel", version, about = "Hyperspectral band selection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw band-interleaved cube and its label raster to CSV.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        header: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank bands with one method on the training part of a split.
    Rank(RankArgs),
    /// Train a one-vs-rest SVM on a band subset and report per-class MCC.
    Eval(EvalArgs),
    /// Run a configured sweep and write its tables.
    Sweep(SweepArgs),
    /// Rebuild the tables from a sweep's records.
    Report {
        /// Sweep output directory holding records.csv.
        #[arg(long)]
        dir: PathBuf,
        /// Where to write the tables; defaults to --dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SplitArgs {
    /// CSV file or .hdr raw cube header.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Test fraction; without it every labeled sample is used.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    split: SplitArgs,
    /// MCM trade-off, or `grid`.
    #[arg(long, default_value = "10")]
    c: String,
    /// Caps each MCM one-vs-rest problem by subsampling negatives.
    #[arg(long)]
    max_samples: Option<usize>,
    #[arg(long, default_value_t = bandsel::infosel::DEFAULT_BINS)]
    bins: usize,
    /// RELIEF iterations; defaults to one pass over the training set.
    #[arg(long)]
    iters: Option<usize>,
    /// Picks made by the greedy selectors; defaults to every band.
    #[arg(long)]
    k: Option<usize>,
    /// Ranking CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write each MCM one-vs-rest linear program into this directory.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    split: SplitArgs,
    /// 1-based bands, comma separated.
    #[arg(long, conflicts_with = "ranking")]
    bands: Option<String>,
    /// Ranking CSV written by `rank`; used with --k.
    #[arg(long, requires = "k")]
    ranking: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = svm::DEFAULT_C_SVM)]
    svm_c: f64,
    /// RBF width, or `grid`.
    #[arg(long, default_value = "grid")]
    gamma: String,
    #[arg(long, default_value = "test")]
    weighting: Weighting,
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Per-class report CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// INI-style config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    band_counts: Option<String>,
    #[arg(long)]
    ratios: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    mcm_c: Option<String>,
    #[arg(long)]
    mcm_max_samples: Option<String>,
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    relief_iters: Option<String>,
    #[arg(long)]
    svm_c: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    weighting: Option<String>,
    #[arg(long)]
    normalize: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    threads: Option<String>,
}

impl SweepArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.preset {
            config.apply_preset(p);
        }
        let overrides = [
            ("dataset", &self.dataset),
            ("methods", &self.methods),
            ("band_counts", &self.band_counts),
            ("ratios", &self.ratios),
            ("seeds", &self.seeds),
            ("mcm_c", &self.mcm_c),
            ("mcm_max_samples", &self.mcm_max_samples),
            ("bins", &self.bins),
            ("relief_iters", &self.relief_iters),
            ("svm_c", &self.svm_c),
            ("gamma", &self.gamma),
            ("weighting", &self.weighting),
            ("normalize", &self.normalize),
            ("output", &self.output),
            ("threads", &self.threads),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        if config.dataset.as_os_str().is_empty() {
            return Err(Error::Config("no dataset given (config key or --dataset)".into()));
        }
        Ok(config)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// The dataset and the part of it a command learns from.
fn load_split(args: &SplitArgs) -> Result<(Dataset, Dataset, Option<Dataset>)> {
    let raw = data::load_any(&args.dataset)?;
    let dataset = if args.no_normalize { raw } else { data::normalize(&raw) };
    match args.ratio {
        Some(r) => {
            let split = data::stratified_split(&dataset, r, args.seed)?;
            let (train, test) = (split.train(&dataset), split.test(&dataset));
            Ok((dataset, train, Some(test)))
        }
        None => {
            let all = dataset.clone();
            Ok((dataset, all, None))
        }
    }
}

fn parse_mcm_c(s: &str) -> Result<McmC> {
    if s.eq_ignore_ascii_case("grid") {
        return Ok(McmC::Grid);
    }
    s.parse()
        .map(McmC::Fixed)
        .map_err(|_| Error::Config(format!("--c: expected a number or grid, got {s:?}")))
}

fn parse_gamma(s: &str) -> Result<GammaChoice> {
    if s.eq_ignore_ascii_case("grid") {
        return Ok(GammaChoice::Grid);
    }
    s.parse()
        .map(GammaChoice::Fixed)
        .map_err(|_| Error::Config(format!("--gamma: expected a number or grid, got {s:?}")))
}

fn rank(args: &RankArgs) -> Result<()> {
    let (_, train, _) = load_split(&args.split)?;
    let params = RankParams {
        mcm_c: parse_mcm_c(&args.c)?,
        mcm_max_samples: args.max_samples,
        bins: args.bins,
        relief_iters: args.iters,
        seed: args.split.seed,
    };
    if let Some(dir) = &args.dump_lp {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let c = match params.mcm_c {
            McmC::Fixed(c) => c,
            McmC::Grid => mcm::DEFAULT_C,
        };
        let opts = mcm::McmOptions {
            c,
            max_samples: args.max_samples,
            seed: args.split.seed,
            ..mcm::McmOptions::default()
        };
        for &class in train.class_ids() {
            let (x, y) = mcm::one_vs_rest_problem(&train, class, &opts);
            let path = dir.join(format!("mcm_class_{class}.lp"));
            let file = File::create(&path).map_err(|e| io_error(&path, e))?;
            mcm::build_program(&x, &y, c)?
                .write_fixed(BufWriter::new(file))
                .map_err(|e| io_error(&path, e))?;
        }
    }
    let outcome = harness::rank(args.method, &train, &params, args.k.unwrap_or(train.n_bands()))?;
    if let Some(c) = outcome.mcm_c {
        log::info!("MCM C = {c}");
    }
    outcome.ranking.write_csv(output(args.out.as_deref())?)
}

fn read_ranking(path: &Path, k: usize) -> Result<Vec<usize>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut bands = Vec::new();
    for r in reader.records() {
        let r = r?;
        let b: usize = r
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .filter(|&b| b > 0)
            .ok_or_else(|| Error::Config(format!("{}: bad band_index in {:?}", path.display(), r)))?;
        bands.push(b - 1);
    }
    if bands.len() < k {
        return Err(Error::Config(format!("{} ranks {} bands, {k} requested", path.display(), bands.len())));
    }
    bands.truncate(k);
    Ok(bands)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let bands = match (&args.bands, &args.ranking) {
        (Some(list), None) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&b| b > 0)
                    .map(|b| b - 1)
                    .ok_or_else(|| Error::Config(format!("--bands: bad band {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
        (None, Some(path)) => read_ranking(path, args.k.unwrap_or(0))?,
        _ => return Err(Error::Config("give --bands or --ranking with --k".into())),
    };
    let split = SplitArgs {
        dataset: args.split.dataset.clone(),
        seed: args.split.seed,
        ratio: args.split.ratio.or(Some(0.9)),
        no_normalize: args.split.no_normalize,
    };
    let (_, train, test) = load_split(&split)?;
    let test = test.expect("eval always splits");
    let model = svm::train_ovr_with(
        &train,
        &bands,
        parse_gamma(&args.gamma)?,
        &SmoOptions::with_c(args.svm_c),
        args.split.seed,
    )?;
    if let Some(p) = &args.save_model {
        model.save(p)?;
    }
    let predicted = model.predict(&test)?;
    let sizes = args.weighting.sizes(&train.class_sizes(), &test.class_sizes());
    let names = test.class_ids().iter().map(|&c| test.class_name(c)).collect();
    let report = McReport::evaluate(test.labels(), &predicted, test.class_ids(), &sizes)?.with_names(names);
    eprintln!("weighted MCC {:.6} ({} weighting)", report.weighted, args.weighting);
    report.write_csv(output(args.out.as_deref())?)
}

fn finish(report: &ExperimentReport) -> ExitCode {
    let failed: Vec<_> = report.failed().collect();
    for r in &failed {
        if let harness::Status::Failed(m) = &r.status {
            eprintln!("failed: {} k={} ratio={} seed={}: {m}", r.method, r.k, r.ratio, r.seed);
        }
    }
    eprintln!("{} records, {} failed", report.records.len(), failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { data, header, out } => {
            let d = data::load_raw_cube(&data, &header)?;
            data::save_csv(&d, &out)?;
            eprintln!("{} labeled samples, {} bands, {} classes", d.n_samples(), d.n_bands(), d.class_count());
        }
        Command::Rank(args) => rank(&args)?,
        Command::Eval(args) => eval(&args)?,
        Command::Sweep(args) => {
            let config = args.config()?;
            return Ok(finish(&harness::run(&config)?));
        }
        Command::Report { dir, out } => {
            let report = ExperimentReport::from_dir(&dir)?;
            harness::emit_tables(&report, out.as_deref().unwrap_or(&dir))?;
            return Ok(finish(&report));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
