//! Experiment sweeps over methods, band counts, test ratios and seeds.
//!
//! For each `(seed, ratio)` the labeled samples are split once. Each method
//! ranks bands once on the training part, and every band count `k` trains a
//! one-vs-rest SVM on the top `k` bands and scores it on the test part.
//! Records are appended to `records.csv` as they finish, so an interrupted
//! sweep resumes by skipping grid points already recorded as ok.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::data::{self, Dataset, Split};
use crate::error::{Error, Result};
use crate::infosel::{self, Criterion};
use crate::mcm::{self, McmOptions};
use crate::metrics::{McReport, Weighting};
use crate::pca;
use crate::ranking::{FeatureRanking, Method};
use crate::relief;
use crate::svm::{self, GammaChoice, SmoOptions};

pub const PAPER_BAND_COUNTS: [usize; 19] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 13, 15, 20, 25, 30, 35, 40, 45, 50];
pub const RATIO_SWEEP: [f64; 6] = [0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
/// Bands listed per method in the selected-bands table, and the band count
/// the per-class table reports.
pub const TABLE_BANDS: usize = 15;
pub const THREADS_ENV: &str = "BANDSEL_THREADS";

pub const RECORDS_FILE: &str = "records.csv";
pub const CLASSES_FILE: &str = "classes.csv";
pub const CONFIG_FILE: &str = "config.ini";
pub const SELECTED_BANDS_FILE: &str = "selected_bands.csv";
pub const CLASS_MCC_FILE: &str = "class_mcc.csv";
pub const LONG_FILE: &str = "mcc_long.csv";
pub const SUMMARY_FILE: &str = "mcc_summary.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McmC {
    Fixed(f64),
    /// Chosen from [`mcm::C_GRID`] per training split.
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankParams {
    pub mcm_c: McmC,
    pub mcm_max_samples: Option<usize>,
    pub bins: usize,
    pub relief_iters: Option<usize>,
    pub seed: u64,
}

impl Default for RankParams {
    fn default() -> Self {
        Self {
            mcm_c: McmC::Fixed(mcm::DEFAULT_C),
            mcm_max_samples: None,
            bins: infosel::DEFAULT_BINS,
            relief_iters: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOutcome {
    pub ranking: FeatureRanking,
    /// C used by the MCM, when the method is MCM.
    pub mcm_c: Option<f64>,
}

/// Ranks the bands of `train` with one method. Greedy selectors stop after
/// `k_max` picks; the others rank every band.
pub fn rank(method: Method, train: &Dataset, params: &RankParams, k_max: usize) -> Result<RankOutcome> {
    let greedy = |criterion| -> Result<RankOutcome> {
        let dd = infosel::discretize(train, params.bins)?;
        let k = k_max.min(train.n_bands());
        let (ranking, _) = infosel::select_greedy(&dd, train.labels(), k, criterion)?;
        Ok(RankOutcome { ranking, mcm_c: None })
    };
    match method {
        Method::Mcm => {
            let opts = McmOptions {
                max_samples: params.mcm_max_samples,
                seed: params.seed,
                ..McmOptions::default()
            };
            let (c, ranking) = match params.mcm_c {
                McmC::Fixed(c) => (c, mcm::rank_bands_multiclass(train, &McmOptions { c, ..opts })?),
                McmC::Grid => mcm::rank_with_c_grid(train, &mcm::C_GRID, &opts)?,
            };
            Ok(RankOutcome {
                ranking,
                mcm_c: Some(c),
            })
        }
        Method::Mrmr => greedy(Criterion::Mrmr),
        Method::Jmi => greedy(Criterion::Jmi),
        Method::Cmim => greedy(Criterion::Cmim),
        Method::Relief => Ok(RankOutcome {
            ranking: relief_ranking(train, params.relief_iters, params.seed)?,
            mcm_c: None,
        }),
        Method::Pca => Ok(RankOutcome {
            ranking: pca::rank_pca(&pca::covariance_eigen(train)?),
            mcm_c: None,
        }),
    }
}

/// RELIEF over a split that may leave a class with one training sample:
/// such samples are skipped as draws but still serve as near-misses.
fn relief_ranking(train: &Dataset, iters: Option<usize>, seed: u64) -> Result<FeatureRanking> {
    let sizes = train.class_sizes();
    let class_size = |i: usize| sizes[train.class_position(train.labels()[i]).expect("label in class list")];
    if sizes.iter().all(|&s| s != 1) {
        return Ok(relief::rank_relief(&relief::relief_weights(train, iters, seed)?));
    }
    let m = iters.unwrap_or(train.n_samples());
    let order: Vec<usize> = relief::draw_order(train.n_samples(), m, seed)
        .into_iter()
        .filter(|&i| class_size(i) >= 2)
        .collect();
    warn!(
        "RELIEF: {} of {m} draws skipped because their class has a single training sample",
        m - order.len()
    );
    let weights = relief::relief_weights_for(train, &order)?;
    Ok(relief::rank_relief(&relief::ReliefWeights {
        weights,
        iterations: order.len(),
        seed,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Fixed ratio 0.90, every band count.
    BandSweep,
    /// Fixed 15 bands, every ratio.
    RatioSweep,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bands" | "band-sweep" => Ok(Preset::BandSweep),
            "ratios" | "ratio-sweep" => Ok(Preset::RatioSweep),
            other => Err(Error::Config(format!("unknown preset {other:?}; use bands or ratios"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub methods: Vec<Method>,
    pub band_counts: Vec<usize>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mcm_c: McmC,
    pub mcm_max_samples: Option<usize>,
    pub bins: usize,
    pub relief_iters: Option<usize>,
    pub svm_c: f64,
    pub gamma: GammaChoice,
    pub weighting: Weighting,
    pub normalize: bool,
    pub output: PathBuf,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            methods: vec![Method::Mcm, Method::Mrmr, Method::Jmi, Method::Relief, Method::Pca],
            band_counts: PAPER_BAND_COUNTS.to_vec(),
            ratios: vec![0.9],
            seeds: (1..=5).collect(),
            mcm_c: McmC::Fixed(mcm::DEFAULT_C),
            mcm_max_samples: None,
            bins: infosel::DEFAULT_BINS,
            relief_iters: None,
            svm_c: svm::DEFAULT_C_SVM,
            gamma: GammaChoice::Grid,
            weighting: Weighting::Test,
            normalize: true,
            output: PathBuf::from("results"),
            threads: None,
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "auto" => Ok(None),
        v => one(key, v).map(Some),
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 15] = [
        "dataset",
        "methods",
        "band_counts",
        "ratios",
        "seeds",
        "mcm_c",
        "mcm_max_samples",
        "bins",
        "relief_iters",
        "svm_c",
        "gamma",
        "weighting",
        "normalize",
        "output",
        "threads",
    ];

    /// Flat `key = value` text on top of the defaults. `#` and `;` start
    /// comments; `[section]` lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        // A relative dataset path is taken relative to the config file.
        if config.dataset.is_relative() && !config.dataset.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                config.dataset = dir.join(&config.dataset);
            }
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "methods" => self.methods = list(key, value)?,
            "band_counts" => self.band_counts = list(key, value)?,
            "ratios" => self.ratios = list(key, value)?,
            "seeds" => self.seeds = list(key, value)?,
            "mcm_c" => {
                self.mcm_c = if value.eq_ignore_ascii_case("grid") {
                    McmC::Grid
                } else {
                    McmC::Fixed(one(key, value)?)
                }
            }
            "mcm_max_samples" => self.mcm_max_samples = optional(key, value)?,
            "bins" => self.bins = one(key, value)?,
            "relief_iters" => self.relief_iters = optional(key, value)?,
            "svm_c" => self.svm_c = one(key, value)?,
            "gamma" => {
                self.gamma = if value.eq_ignore_ascii_case("grid") {
                    GammaChoice::Grid
                } else {
                    GammaChoice::Fixed(one(key, value)?)
                }
            }
            "weighting" => self.weighting = value.parse()?,
            "normalize" => {
                self.normalize = match value.to_ascii_lowercase().as_str() {
                    "true" | "yes" | "1" | "on" => true,
                    "false" | "no" | "0" | "off" => false,
                    _ => return Err(Error::Config(format!("normalize: expected true or false, got {value:?}"))),
                }
            }
            "output" => self.output = PathBuf::from(value),
            "threads" => self.threads = optional(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::BandSweep => {
                self.band_counts = PAPER_BAND_COUNTS.to_vec();
                self.ratios = vec![0.9];
            }
            Preset::RatioSweep => {
                self.band_counts = vec![TABLE_BANDS];
                self.ratios = RATIO_SWEEP.to_vec();
            }
        }
    }

    /// Checks the grid; with `n_bands`, also that every band count fits.
    pub fn validate(&self, n_bands: Option<usize>) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return fail("at least one method is required".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.band_counts.is_empty() || self.band_counts.contains(&0) {
            return fail("band counts must be a nonempty list of positive integers".into());
        }
        if let Some(d) = n_bands {
            if let Some(k) = self.band_counts.iter().find(|&&k| k > d) {
                return fail(format!("band count {k} exceeds the dataset's {d} bands"));
            }
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return fail("ratios must be a nonempty list inside (0, 1)".into());
        }
        if self.bins < 2 {
            return fail("bins must be at least 2".into());
        }
        if self.svm_c.is_nan() || self.svm_c <= 0.0 {
            return fail("svm_c must be positive".into());
        }
        if let McmC::Fixed(c) = self.mcm_c {
            if c.is_nan() || c <= 0.0 {
                return fail("mcm_c must be positive or grid".into());
            }
        }
        if let GammaChoice::Fixed(g) = self.gamma {
            if g.is_nan() || g <= 0.0 {
                return fail("gamma must be positive or grid".into());
            }
        }
        if self.threads == Some(0) {
            return fail("threads must be positive".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |v| v.to_string());
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("dataset", self.dataset.display().to_string());
        put("methods", join(&self.methods));
        put("band_counts", join(&self.band_counts));
        put("ratios", join(&self.ratios));
        put("seeds", join(&self.seeds));
        put(
            "mcm_c",
            match self.mcm_c {
                McmC::Fixed(c) => c.to_string(),
                McmC::Grid => "grid".into(),
            },
        );
        put("mcm_max_samples", opt(self.mcm_max_samples));
        put("bins", self.bins.to_string());
        put("relief_iters", opt(self.relief_iters));
        put("svm_c", self.svm_c.to_string());
        put(
            "gamma",
            match self.gamma {
                GammaChoice::Fixed(g) => g.to_string(),
                GammaChoice::Grid => "grid".into(),
            },
        );
        put("weighting", self.weighting.to_string());
        put("normalize", self.normalize.to_string());
        put("output", self.output.display().to_string());
        put("threads", opt(self.threads));
        out
    }

    pub fn rank_params(&self, seed: u64) -> RankParams {
        RankParams {
            mcm_c: self.mcm_c,
            mcm_max_samples: self.mcm_max_samples,
            bins: self.bins,
            relief_iters: self.relief_iters,
            seed,
        }
    }

    /// Worker count from the config, else from `BANDSEL_THREADS`.
    pub fn worker_count(&self) -> Result<Option<usize>> {
        if self.threads.is_some() {
            return Ok(self.threads);
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => {
                let n: usize = one(THREADS_ENV, &v)?;
                if n == 0 {
                    return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
                }
                Ok(Some(n))
            }
            _ => Ok(None),
        }
    }

    pub fn grid_size(&self) -> usize {
        self.methods.len() * self.band_counts.len() * self.ratios.len() * self.seeds.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridKey {
    pub method: Method,
    pub k: usize,
    /// `f64::to_bits` of the ratio.
    pub ratio_bits: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub method: Method,
    pub k: usize,
    pub ratio: f64,
    pub seed: u64,
    pub status: Status,
    /// 0-based, in rank order.
    pub bands: Vec<usize>,
    pub class_ids: Vec<u32>,
    /// Class sizes the weighted MCC was computed with.
    pub weight_sizes: Vec<usize>,
    pub per_class: Vec<f64>,
    pub weighted_mcc: f64,
    pub gamma: Option<f64>,
    pub mcm_c: Option<f64>,
    pub wall_seconds: f64,
}

impl Record {
    pub fn key(&self) -> GridKey {
        GridKey {
            method: self.method,
            k: self.k,
            ratio_bits: self.ratio.to_bits(),
            seed: self.seed,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    fn failed(method: Method, k: usize, ratio: f64, seed: u64, message: String) -> Self {
        Record {
            method,
            k,
            ratio,
            seed,
            status: Status::Failed(message),
            bands: Vec::new(),
            class_ids: Vec::new(),
            weight_sizes: Vec::new(),
            per_class: Vec::new(),
            weighted_mcc: f64::NAN,
            gamma: None,
            mcm_c: None,
            wall_seconds: 0.0,
        }
    }

    const HEADER: [&'static str; 14] = [
        "method",
        "k",
        "ratio",
        "seed",
        "status",
        "weighted_mcc",
        "gamma",
        "mcm_c",
        "bands",
        "classes",
        "weight_sizes",
        "per_class_mcc",
        "wall_seconds",
        "message",
    ];

    fn to_fields(&self) -> Vec<String> {
        let spaced = |v: Vec<String>| v.join(" ");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let (status, message) = match &self.status {
            Status::Ok => ("ok", String::new()),
            Status::Failed(m) => ("failed", m.clone()),
        };
        vec![
            self.method.to_string(),
            self.k.to_string(),
            self.ratio.to_string(),
            self.seed.to_string(),
            status.to_string(),
            if self.is_ok() { self.weighted_mcc.to_string() } else { String::new() },
            opt(self.gamma),
            opt(self.mcm_c),
            spaced(self.bands.iter().map(|b| (b + 1).to_string()).collect()),
            spaced(self.class_ids.iter().map(|c| c.to_string()).collect()),
            spaced(self.weight_sizes.iter().map(|s| s.to_string()).collect()),
            spaced(self.per_class.iter().map(|m| m.to_string()).collect()),
            format!("{:.3}", self.wall_seconds),
            message,
        ]
    }

    fn from_fields(f: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("records: bad {what} in {:?}", f.iter().collect::<Vec<_>>()));
        if f.len() != Self::HEADER.len() {
            return Err(bad("field count"));
        }
        fn spaced<T: FromStr>(s: &str) -> Option<Vec<T>> {
            s.split_whitespace().map(|v| v.parse().ok()).collect()
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("number"))
            }
        };
        let status = match &f[4] {
            "ok" => Status::Ok,
            "failed" => Status::Failed(f[13].to_string()),
            _ => return Err(bad("status")),
        };
        let bands: Vec<usize> = spaced(&f[8]).ok_or_else(|| bad("bands"))?;
        if bands.contains(&0) {
            return Err(bad("bands"));
        }
        Ok(Record {
            method: f[0].parse().map_err(|_| bad("method"))?,
            k: f[1].parse().map_err(|_| bad("k"))?,
            ratio: f[2].parse().map_err(|_| bad("ratio"))?,
            seed: f[3].parse().map_err(|_| bad("seed"))?,
            weighted_mcc: opt(&f[5])?.unwrap_or(f64::NAN),
            status,
            gamma: opt(&f[6])?,
            mcm_c: opt(&f[7])?,
            bands: bands.into_iter().map(|b| b - 1).collect(),
            class_ids: spaced(&f[9]).ok_or_else(|| bad("classes"))?,
            weight_sizes: spaced(&f[10]).ok_or_else(|| bad("weight sizes"))?,
            per_class: spaced(&f[11]).ok_or_else(|| bad("per-class MCC"))?,
            wall_seconds: f[12].parse().map_err(|_| bad("wall time"))?,
        })
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    reader.records().map(|r| Record::from_fields(&r?)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Sorted by method, ratio, seed, then band count.
    pub records: Vec<Record>,
    pub class_names: BTreeMap<u32, String>,
}

impl ExperimentReport {
    pub fn new(mut records: Vec<Record>, class_names: BTreeMap<u32, String>) -> Self {
        records.sort_by(|a, b| {
            (a.method, a.ratio, a.seed, a.k)
                .partial_cmp(&(b.method, b.ratio, b.seed, b.k))
                .expect("ratios are finite")
        });
        Self { records, class_names }
    }

    /// Rebuilds a report from a sweep's output directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let records = read_records(dir.join(RECORDS_FILE))?;
        let mut names = BTreeMap::new();
        let classes = dir.join(CLASSES_FILE);
        if classes.exists() {
            let mut reader = csv::Reader::from_path(&classes)?;
            for r in reader.records() {
                let r = r?;
                let id = r[0]
                    .parse()
                    .map_err(|_| Error::Config(format!("{}: bad class id {:?}", classes.display(), &r[0])))?;
                names.insert(id, r[1].to_string());
            }
        }
        Ok(Self::new(records, names))
    }

    pub fn failed(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.is_ok())
    }

    pub fn ok(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.is_ok())
    }

    fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.ok().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    fn ratios(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.ok().map(|r| r.ratio).collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }

    fn class_name(&self, class: u32) -> String {
        self.class_names.get(&class).cloned().unwrap_or_else(|| format!("class {class}"))
    }
}

/// Which pipeline boundary a dataset crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Selector,
    Trainer,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Selector => "selector",
            Stage::Trainer => "trainer",
            Stage::Evaluation => "evaluation",
        })
    }
}

/// Hooks called as the sweep runs; used to instrument data flow.
pub trait Observer: Sync {
    fn split(&self, _ratio: f64, _seed: u64, _split: &Split) {}
    /// `origin` holds the root-dataset row of every sample handed over.
    fn access(&self, _stage: Stage, _method: Method, _ratio: f64, _seed: u64, _origin: &[usize]) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Rejects any dataset carrying a test row into a selector or trainer.
fn guard(stage: Stage, test_mask: &[bool], data: &Dataset) -> Result<()> {
    let count = data.origin().iter().filter(|&&o| test_mask[o]).count();
    if count > 0 && stage != Stage::Evaluation {
        return Err(Error::Leakage {
            stage: stage.to_string(),
            count,
        });
    }
    Ok(())
}

/// Creates the output directory and proves it is writable.
pub fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".bandsel-write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
    Ok(())
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let d = data::load_any(&config.dataset)?;
    Ok(if config.normalize { data::normalize(&d) } else { d })
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_observed(config, &NoObserver)
}

pub fn run_observed(config: &ExperimentConfig, observer: &dyn Observer) -> Result<ExperimentReport> {
    config.validate(None)?;
    prepare_output(&config.output)?;
    let dataset = load_dataset(config)?;
    run_on(config, &dataset, observer)
}

struct Sink {
    writer: csv::Writer<File>,
}

impl Sink {
    fn write(&mut self, r: &Record) -> Result<()> {
        self.writer.write_record(r.to_fields())?;
        self.writer.flush().map_err(|e| Error::io(RECORDS_FILE, e))?;
        Ok(())
    }
}

/// Runs the sweep on an already loaded (and normalized) dataset, writes
/// every output file, and returns the report.
pub fn run_on(config: &ExperimentConfig, dataset: &Dataset, observer: &dyn Observer) -> Result<ExperimentReport> {
    config.validate(Some(dataset.n_bands()))?;
    let out = &config.output;
    prepare_output(out)?;
    let config_path = out.join(CONFIG_FILE);
    fs::write(&config_path, config.to_text()).map_err(|e| Error::io(&config_path, e))?;
    write_classes(dataset, &out.join(CLASSES_FILE))?;

    let records_path = out.join(RECORDS_FILE);
    let mut done: HashMap<GridKey, Record> = HashMap::new();
    if records_path.exists() {
        for r in read_records(&records_path)? {
            if r.is_ok() {
                done.insert(r.key(), r);
            }
        }
        info!("resuming: {} completed records found", done.len());
    }
    let mut kept: Vec<&Record> = done.values().collect();
    kept.sort_by_key(|r| r.key());
    let file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(&records_path)
        .map_err(|e| Error::io(&records_path, e))?;
    let mut sink = Sink {
        writer: csv::Writer::from_writer(file),
    };
    sink.writer.write_record(Record::HEADER)?;
    for r in kept {
        sink.write(r)?;
    }
    let sink = Mutex::new(sink);

    let mut splits = Vec::new();
    for &seed in &config.seeds {
        for &ratio in &config.ratios {
            let split = data::stratified_split(dataset, ratio, seed)?;
            observer.split(ratio, seed, &split);
            splits.push(split);
        }
    }
    let units: Vec<(usize, Method)> = (0..splits.len())
        .flat_map(|s| config.methods.iter().map(move |&m| (s, m)))
        .collect();

    let work = || -> Result<Vec<Record>> {
        let per_unit: Vec<Result<Vec<Record>>> = units
            .par_iter()
            .map(|&(s, method)| {
                let fresh = run_unit(config, dataset, &splits[s], method, &done, observer);
                let mut sink = sink.lock().expect("record sink poisoned");
                for r in &fresh {
                    sink.write(r)?;
                }
                Ok(fresh)
            })
            .collect();
        let mut all = Vec::new();
        for r in per_unit {
            all.extend(r?);
        }
        Ok(all)
    };
    let fresh = match config.worker_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut records: Vec<Record> = fresh;
    records.extend(done.into_values().filter(|r| {
        config.methods.contains(&r.method)
            && config.band_counts.contains(&r.k)
            && config.ratios.iter().any(|&x| x.to_bits() == r.ratio.to_bits())
            && config.seeds.contains(&r.seed)
    }));
    let names = dataset.class_ids().iter().map(|&c| (c, dataset.class_name(c))).collect();
    let report = ExperimentReport::new(records, names);
    debug_assert_eq!(report.records.len(), config.grid_size());
    emit_tables(&report, out)?;
    let failed = report.failed().count();
    if failed > 0 {
        warn!("{failed} of {} records failed", report.records.len());
    }
    Ok(report)
}

fn write_classes(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "name"])?;
    for &c in dataset.class_ids() {
        w.write_record([c.to_string(), dataset.class_name(c)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One method on one split: rank once, then evaluate every pending band count.
fn run_unit(
    config: &ExperimentConfig,
    dataset: &Dataset,
    split: &Split,
    method: Method,
    done: &HashMap<GridKey, Record>,
    observer: &dyn Observer,
) -> Vec<Record> {
    let (ratio, seed) = (split.ratio, split.seed);
    let pending: Vec<usize> = config
        .band_counts
        .iter()
        .copied()
        .filter(|&k| {
            !done.contains_key(&GridKey {
                method,
                k,
                ratio_bits: ratio.to_bits(),
                seed,
            })
        })
        .collect();
    if pending.is_empty() {
        return Vec::new();
    }
    let width = dataset.origin().iter().max().map_or(0, |&o| o + 1);
    let mut test_mask = vec![false; width];
    for &i in &split.test_indices {
        test_mask[dataset.origin()[i]] = true;
    }
    let train = split.train(dataset);
    let test = split.test(dataset);

    let started = Instant::now();
    let k_max = config.band_counts.iter().copied().max().unwrap_or(1);
    observer.access(Stage::Selector, method, ratio, seed, train.origin());
    let ranked = guard(Stage::Selector, &test_mask, &train)
        .and_then(|_| rank(method, &train, &config.rank_params(seed), k_max));
    let outcome = match ranked {
        Ok(o) => o,
        Err(e) => {
            warn!("{method} ratio {ratio} seed {seed}: ranking failed: {e}");
            return pending
                .into_iter()
                .map(|k| Record::failed(method, k, ratio, seed, format!("ranking: {e}")))
                .collect();
        }
    };
    info!(
        "{method} ratio {ratio} seed {seed}: ranked in {:.2}s",
        started.elapsed().as_secs_f64()
    );

    let smo = SmoOptions::with_c(config.svm_c);
    let train_sizes = train.class_sizes();
    let test_sizes = test.class_sizes();
    let weight_sizes = config.weighting.sizes(&train_sizes, &test_sizes);
    pending
        .into_iter()
        .map(|k| {
            let started = Instant::now();
            let result = (|| -> Result<Record> {
                if k > outcome.ranking.len() {
                    return Err(Error::InvalidInput(format!(
                        "ranking has {} bands, {k} requested",
                        outcome.ranking.len()
                    )));
                }
                let bands = outcome.ranking.top(k).to_vec();
                observer.access(Stage::Trainer, method, ratio, seed, train.origin());
                guard(Stage::Trainer, &test_mask, &train)?;
                let model = svm::train_ovr_with(&train, &bands, config.gamma, &smo, seed)?;
                observer.access(Stage::Evaluation, method, ratio, seed, test.origin());
                let predicted = model.predict(&test)?;
                let report = McReport::evaluate(test.labels(), &predicted, test.class_ids(), &weight_sizes)?;
                Ok(Record {
                    method,
                    k,
                    ratio,
                    seed,
                    status: Status::Ok,
                    bands,
                    class_ids: report.class_ids.clone(),
                    weight_sizes: weight_sizes.clone(),
                    weighted_mcc: report.weighted,
                    per_class: report.per_class,
                    gamma: match model.kernel {
                        svm::KernelSpec::Rbf { gamma } => Some(gamma),
                        svm::KernelSpec::Linear => None,
                    },
                    mcm_c: outcome.mcm_c,
                    wall_seconds: started.elapsed().as_secs_f64(),
                })
            })();
            match result {
                Ok(r) => {
                    info!("{method} k={k} ratio {ratio} seed {seed}: weighted MCC {:.4}", r.weighted_mcc);
                    r
                }
                Err(e) => {
                    warn!("{method} k={k} ratio {ratio} seed {seed}: {e}");
                    Record::failed(method, k, ratio, seed, e.to_string())
                }
            }
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePaths {
    pub selected_bands: PathBuf,
    pub class_mcc: PathBuf,
    pub long: PathBuf,
    pub summary: PathBuf,
}

/// Writes the selected-bands, per-class MCC, long-format and summary tables.
/// Only ok records contribute.
pub fn emit_tables(report: &ExperimentReport, dir: &Path) -> Result<TablePaths> {
    prepare_output(dir)?;
    let paths = TablePaths {
        selected_bands: dir.join(SELECTED_BANDS_FILE),
        class_mcc: dir.join(CLASS_MCC_FILE),
        long: dir.join(LONG_FILE),
        summary: dir.join(SUMMARY_FILE),
    };
    let flush = |w: &mut csv::Writer<File>, p: &Path| w.flush().map_err(|e| Error::io(p, e));

    // Bands of the largest k per (method, ratio, seed), cut to the table width.
    let mut w = csv::Writer::from_path(&paths.selected_bands)?;
    w.write_record(["method", "ratio", "seed", "bands"])?;
    let mut widest: BTreeMap<(Method, u64, u64), &Record> = BTreeMap::new();
    for r in report.ok() {
        let slot = widest.entry((r.method, r.ratio.to_bits(), r.seed)).or_insert(r);
        if r.k > slot.k {
            *slot = r;
        }
    }
    let mut rows: Vec<&&Record> = widest.values().collect();
    rows.sort_by(|a, b| (a.method, a.ratio, a.seed).partial_cmp(&(b.method, b.ratio, b.seed)).unwrap());
    for r in rows {
        let bands: Vec<String> = r.bands.iter().take(TABLE_BANDS).map(|b| (b + 1).to_string()).collect();
        w.write_record([r.method.to_string(), r.ratio.to_string(), r.seed.to_string(), bands.join(" ")])?;
    }
    flush(&mut w, &paths.selected_bands)?;

    // Per-class MCC at the table band count, averaged over seeds.
    let methods = report.methods();
    let mut w = csv::Writer::from_path(&paths.class_mcc)?;
    let mut header = vec!["ratio".to_string(), "k".into(), "class".into(), "name".into(), "size".into()];
    header.extend(methods.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for ratio in report.ratios() {
        let at_ratio: Vec<&Record> = report.ok().filter(|r| r.ratio == ratio).collect();
        let mut ks: Vec<usize> = at_ratio.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let k = ks.iter().rev().find(|&&k| k <= TABLE_BANDS).copied().unwrap_or(ks[0]);
        let cell = |m: Method| -> Vec<&Record> { at_ratio.iter().copied().filter(|r| r.method == m && r.k == k).collect() };
        let first = at_ratio.iter().find(|r| r.k == k).expect("k drawn from these records");
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for (c, &class) in first.class_ids.iter().enumerate() {
            let mut row = vec![
                ratio.to_string(),
                k.to_string(),
                class.to_string(),
                report.class_name(class),
                first.weight_sizes[c].to_string(),
            ];
            for &m in &methods {
                let vals: Vec<f64> = cell(m).iter().filter_map(|r| r.per_class.get(c).copied()).collect();
                row.push(fmt((!vals.is_empty()).then(|| mean_std(&vals).0)));
            }
            w.write_record(&row)?;
        }
        let total: usize = first.weight_sizes.iter().sum();
        for (label, pick) in [("weighted average", 0), ("std", 1)] {
            let mut row = vec![ratio.to_string(), k.to_string(), label.to_string(), String::new(), total.to_string()];
            for &m in &methods {
                let vals: Vec<f64> = cell(m).iter().map(|r| r.weighted_mcc).collect();
                row.push(fmt((!vals.is_empty()).then(|| {
                    let (mean, std) = mean_std(&vals);
                    if pick == 0 {
                        mean
                    } else {
                        std
                    }
                })));
            }
            w.write_record(&row)?;
        }
    }
    flush(&mut w, &paths.class_mcc)?;

    let mut w = csv::Writer::from_path(&paths.long)?;
    w.write_record(["method", "k", "ratio", "seed", "weighted_mcc"])?;
    for r in report.ok() {
        w.write_record([
            r.method.to_string(),
            r.k.to_string(),
            r.ratio.to_string(),
            r.seed.to_string(),
            r.weighted_mcc.to_string(),
        ])?;
    }
    flush(&mut w, &paths.long)?;

    let mut groups: BTreeMap<(Method, u64, usize), Vec<f64>> = BTreeMap::new();
    for r in report.ok() {
        groups.entry((r.method, r.ratio.to_bits(), r.k)).or_default().push(r.weighted_mcc);
    }
    let mut rows: Vec<_> = groups.into_iter().collect();
    rows.sort_by(|a, b| {
        let key = |x: &((Method, u64, usize), Vec<f64>)| (x.0 .0, f64::from_bits(x.0 .1), x.0 .2);
        key(a).partial_cmp(&key(b)).unwrap()
    });
    let mut w = csv::Writer::from_path(&paths.summary)?;
    w.write_record(["method", "k", "ratio", "seeds", "mean", "std"])?;
    for ((m, ratio, k), vals) in rows {
        let (mean, std) = mean_std(&vals);
        w.write_record([
            m.to_string(),
            k.to_string(),
            f64::from_bits(ratio).to_string(),
            vals.len().to_string(),
            mean.to_string(),
            std.to_string(),
        ])?;
    }
    flush(&mut w, &paths.summary)?;
    Ok(paths)
}
