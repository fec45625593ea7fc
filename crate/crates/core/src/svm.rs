//! Soft-margin kernel SVM trained by sequential minimal optimization, and the
//! one-vs-rest classifier built from it.
//!
//! The binary dual is
//!
//! ```text
//! min_α  ½ αᵀQα − Σ α_i,   Q_ij = y_i y_j k(x_i, x_j)
//!        0 ≤ α_i ≤ C,      Σ α_i y_i = 0
//! ```
//!
//! Each SMO step updates the maximal violating pair. Training stops when the
//! violation gap drops below the tolerance or the update cap is reached.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::McReport;
use crate::rng::SplitMix64;

pub const DEFAULT_C_SVM: f64 = 100.0;
/// Candidate RBF widths, divided by the number of bands in use.
pub const GAMMA_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];
pub const CV_FOLDS: usize = 3;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Rbf { gamma: f64 },
    Linear,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(Error::InvalidInput(
                format!("RBF gamma must be positive, got {gamma}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { gamma } => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d).exp()
            }
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } => writeln!(w, "kernel rbf {gamma}"),
            KernelSpec::Linear => writeln!(w, "kernel linear"),
        }
    }

    fn parse(fields: &[String]) -> Result<Self> {
        let fields: Vec<&str> = fields.iter().map(String::as_str).collect();
        match fields.as_slice() {
            ["rbf", g] => KernelSpec::rbf(parse_num(g)?),
            ["linear"] => Ok(KernelSpec::Linear),
            _ => Err(Error::ModelFormat(format!("bad kernel line {:?}", fields.join(" ")))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoOptions {
    pub c: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    pub max_updates: u64,
    /// Kernel rows kept by the LRU cache when the full Gram matrix is too big.
    pub cache_rows: usize,
    /// Largest Gram matrix, in bytes, that is precomputed and shared.
    pub full_gram_bytes: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self {
            c: DEFAULT_C_SVM,
            tolerance: 1e-3,
            max_updates: 1_000_000,
            cache_rows: 4096,
            full_gram_bytes: 512 << 20,
        }
    }
}

impl SmoOptions {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidInput(format!("C_svm must be positive, got {}", self.c)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidInput("SMO tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel rows over one training matrix, either from a shared precomputed Gram
/// matrix or computed on demand behind an LRU cache.
enum KernelSource<'a> {
    Full { gram: Arc<Vec<f64>>, n: usize },
    Cached(RowCache<'a>),
}

struct RowCache<'a> {
    x: &'a Dataset,
    kernel: KernelSpec,
    capacity: usize,
    rows: HashMap<usize, (Vec<f64>, u64)>,
    lru: BTreeMap<u64, usize>,
    tick: u64,
}

impl<'a> KernelSource<'a> {
    fn new(x: &'a Dataset, kernel: KernelSpec, opts: &SmoOptions) -> Self {
        if fits_full_gram(x.n_samples(), opts) {
            KernelSource::Full {
                gram: Arc::new(gram_matrix(x, kernel)),
                n: x.n_samples(),
            }
        } else {
            KernelSource::Cached(RowCache {
                x,
                kernel,
                capacity: opts.cache_rows.max(2),
                rows: HashMap::new(),
                lru: BTreeMap::new(),
                tick: 0,
            })
        }
    }

    fn with_row<R>(&mut self, i: usize, f: impl FnOnce(&[f64]) -> R) -> R {
        match self {
            KernelSource::Full { gram, n } => f(&gram[i * *n..(i + 1) * *n]),
            KernelSource::Cached(c) => c.with_row(i, f),
        }
    }
}

impl RowCache<'_> {
    fn with_row<R>(&mut self, i: usize, f: impl FnOnce(&[f64]) -> R) -> R {
        self.tick += 1;
        let tick = self.tick;
        if let Some((_, used)) = self.rows.get_mut(&i) {
            self.lru.remove(used);
            *used = tick;
        } else {
            if self.rows.len() >= self.capacity {
                if let Some((_, evict)) = self.lru.pop_first() {
                    self.rows.remove(&evict);
                }
            }
            let xi = self.x.row(i);
            let row = self.x.rows().map(|xj| self.kernel.eval(xi, xj)).collect();
            self.rows.insert(i, (row, tick));
        }
        self.lru.insert(tick, i);
        f(&self.rows[&i].0)
    }
}

fn fits_full_gram(n: usize, opts: &SmoOptions) -> bool {
    n.saturating_mul(n).saturating_mul(8) <= opts.full_gram_bytes
}

/// Row-major kernel matrix over the rows of `x`.
pub fn gram_matrix(x: &Dataset, kernel: KernelSpec) -> Vec<f64> {
    let n = x.n_samples();
    let mut g = vec![0.0; n * n];
    g.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = kernel.eval(xi, x.row(j));
        }
    });
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub dim: usize,
    /// Support vector rows, row-major.
    pub support: Vec<f64>,
    /// Positions of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    pub alphas: Vec<f64>,
    pub targets: Vec<f64>,
    pub bias: f64,
    /// False when training hit the update cap before reaching the tolerance.
    pub converged: bool,
    pub updates: u64,
    /// Maximal KKT violation at the returned point.
    pub kkt_gap: f64,
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    pub fn support_vector(&self, k: usize) -> &[f64] {
        &self.support[k * self.dim..(k + 1) * self.dim]
    }

    /// `Σ α_i y_i k(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok((0..self.n_support())
            .map(|k| self.alphas[k] * self.targets[k] * self.kernel.eval(self.support_vector(k), x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.decision(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    /// Dual coefficients scattered back over a training set of size `n`.
    pub fn full_alphas(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (&i, &v) in self.support_indices.iter().zip(&self.alphas) {
            a[i] = v;
        }
        a
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<svm model>", e);
        (|| -> std::io::Result<()> {
            writeln!(w, "bandsel-svm v1")?;
            self.kernel.write(&mut w)?;
            writeln!(w, "c {}", self.c)?;
            writeln!(w, "dim {}", self.dim)?;
            writeln!(w, "bias {}", self.bias)?;
            writeln!(w, "converged {}", u8::from(self.converged))?;
            writeln!(w, "updates {}", self.updates)?;
            writeln!(w, "kkt_gap {}", self.kkt_gap)?;
            writeln!(w, "support {}", self.n_support())?;
            for k in 0..self.n_support() {
                write!(w, "{} {} {}", self.support_indices[k], self.alphas[k], self.targets[k])?;
                for v in self.support_vector(k) {
                    write!(w, " {v}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })()
        .map_err(io)
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = Lines::new(r, "bandsel-svm v1")?;
        let kernel = KernelSpec::parse(&lines.keyed("kernel")?)?;
        let c = lines.value("c")?;
        let dim = lines.value("dim")?;
        let bias = lines.value("bias")?;
        let converged = lines.value::<u8>("converged")? == 1;
        let updates = lines.value("updates")?;
        let kkt_gap = lines.value("kkt_gap")?;
        let n: usize = lines.value("support")?;
        let mut model = SvmModel {
            kernel,
            c,
            dim,
            support: Vec::with_capacity(n * dim),
            support_indices: Vec::with_capacity(n),
            alphas: Vec::with_capacity(n),
            targets: Vec::with_capacity(n),
            bias,
            converged,
            updates,
            kkt_gap,
        };
        for _ in 0..n {
            let fields = lines.next_fields()?;
            if fields.len() != 3 + dim {
                return Err(Error::ModelFormat(format!(
                    "support vector line has {} fields, expected {}",
                    fields.len(),
                    3 + dim
                )));
            }
            model.support_indices.push(parse_num(&fields[0])?);
            model.alphas.push(parse_num(&fields[1])?);
            model.targets.push(parse_num(&fields[2])?);
            for f in &fields[3..] {
                model.support.push(parse_num(f)?);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

/// Dual objective in maximization form, `Σ α_i − ½ αᵀQα`.
pub fn dual_objective(x: &Dataset, targets: &[f64], kernel: KernelSpec, alphas: &[f64]) -> f64 {
    let n = x.n_samples();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alphas[j] != 0.0 {
                quad += alphas[i] * alphas[j] * targets[i] * targets[j] * kernel.eval(x.row(i), x.row(j));
            }
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

fn check_targets(x: &Dataset, targets: &[f64]) -> Result<()> {
    if targets.len() != x.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: x.n_samples(),
            got: targets.len(),
        });
    }
    if targets.iter().any(|&t| t != 1.0 && t != -1.0) {
        return Err(Error::InvalidInput("SVM targets must be +1 or -1".into()));
    }
    if !targets.contains(&1.0) || !targets.contains(&-1.0) {
        return Err(Error::InvalidInput("SVM training needs both +1 and -1 samples".into()));
    }
    Ok(())
}

/// Trains one binary machine on `x` with targets in {+1, −1}.
pub fn train_binary(x: &Dataset, targets: &[f64], kernel: KernelSpec, opts: &SmoOptions) -> Result<SvmModel> {
    kernel.validate()?;
    opts.validate()?;
    check_targets(x, targets)?;
    let mut source = KernelSource::new(x, kernel, opts);
    Ok(smo(x, targets, kernel, opts, &mut source))
}

fn smo(x: &Dataset, y: &[f64], kernel: KernelSpec, opts: &SmoOptions, source: &mut KernelSource<'_>) -> SvmModel {
    let n = x.n_samples();
    let c = opts.c;
    let diag: Vec<f64> = x.rows().map(|r| kernel.eval(r, r)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut updates = 0u64;
    let converged;
    let mut gap;

    loop {
        let (i, j, g) = select_pair(&alpha, &grad, y, c);
        gap = g;
        if gap < opts.tolerance {
            converged = true;
            break;
        }
        if updates >= opts.max_updates {
            converged = false;
            break;
        }
        let kij = source.with_row(i, |row| row[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ai, aj) = solve_pair(old_i, old_j, y[i], y[j], grad[i], grad[j], diag[i], diag[j], kij, c);
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        source.with_row(i, |row| {
            for t in 0..n {
                grad[t] += y[t] * y[i] * row[t] * di;
            }
        });
        source.with_row(j, |row| {
            for t in 0..n {
                grad[t] += y[t] * y[j] * row[t] * dj;
            }
        });
        updates += 1;
    }
    if !converged {
        warn!(
            "SMO stopped at the {} update cap with KKT gap {gap:.3e}",
            opts.max_updates
        );
    }

    let bias = -rho(&alpha, &grad, y, c);
    let support_indices: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    SvmModel {
        kernel,
        c,
        dim: x.n_bands(),
        support: support_indices.iter().flat_map(|&i| x.row(i).to_vec()).collect(),
        alphas: support_indices.iter().map(|&i| alpha[i]).collect(),
        targets: support_indices.iter().map(|&i| y[i]).collect(),
        support_indices,
        bias,
        converged,
        updates,
        kkt_gap: gap,
    }
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating pair `(i, j)` and its gap `max_up(−y G) − min_low(−y G)`.
/// Lower indices win ties.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (usize, usize, f64) {
    let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut i, mut j) = (0, 0);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], c) && v > gmax {
            gmax = v;
            i = t;
        }
        if in_low(alpha[t], y[t], c) && v < gmin {
            gmin = v;
            j = t;
        }
    }
    (i, j, gmax - gmin)
}

/// Maximal violating pair gap of `alpha`, recomputing the gradient from
/// scratch.
pub fn kkt_violation(x: &Dataset, targets: &[f64], kernel: KernelSpec, c: f64, alpha: &[f64]) -> f64 {
    let n = x.n_samples();
    let grad: Vec<f64> = (0..n)
        .map(|t| {
            (0..n)
                .filter(|&s| alpha[s] != 0.0)
                .map(|s| targets[t] * targets[s] * kernel.eval(x.row(t), x.row(s)) * alpha[s])
                .sum::<f64>()
                - 1.0
        })
        .collect();
    select_pair(alpha, &grad, targets, c).2.max(0.0)
}

/// Analytic minimizer of the dual over the pair, clipped to the box.
#[allow(clippy::too_many_arguments)]
fn solve_pair(
    mut ai: f64,
    mut aj: f64,
    yi: f64,
    yj: f64,
    gi: f64,
    gj: f64,
    kii: f64,
    kjj: f64,
    kij: f64,
    c: f64,
) -> (f64, f64) {
    if yi != yj {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (-gi - gj) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (gi - gj) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    (ai, aj)
}

/// Offset `ρ` with decision `Σ α y k − ρ`: the free vectors' average of
/// `y G`, or the midpoint of the feasible interval when none are free.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One machine per class over a fixed band subset. Support vectors from all
/// machines share one pool so prediction evaluates each kernel value once.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrClassifier {
    pub kernel: KernelSpec,
    pub c: f64,
    pub bands: Vec<usize>,
    pub class_ids: Vec<u32>,
    /// Pooled support vectors in band-subset space, row-major.
    pub support: Vec<f64>,
    /// Per class, `α_i y_i` over the pooled vectors.
    pub coef: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub converged: Vec<bool>,
}

impl OvrClassifier {
    pub fn dim(&self) -> usize {
        self.bands.len()
    }

    pub fn n_support(&self) -> usize {
        self.support.len() / self.dim()
    }

    /// Decision value of every class machine for one full-band sample.
    pub fn decision_values(&self, row: &[f64]) -> Result<Vec<f64>> {
        if let Some(&b) = self.bands.iter().find(|&&b| b >= row.len()) {
            return Err(Error::DimensionMismatch {
                expected: b + 1,
                got: row.len(),
            });
        }
        let x: Vec<f64> = self.bands.iter().map(|&b| row[b]).collect();
        Ok(self.decision_subset(&x))
    }

    fn decision_subset(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let k: Vec<f64> = self.support.chunks(d).map(|sv| self.kernel.eval(sv, x)).collect();
        self.coef
            .iter()
            .zip(&self.bias)
            .map(|(coef, b)| coef.iter().zip(&k).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    /// Largest decision value wins; lower class id on ties.
    pub fn predict_row(&self, row: &[f64]) -> Result<u32> {
        let values = self.decision_values(row)?;
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = k;
            }
        }
        Ok(self.class_ids[best])
    }

    pub fn predict(&self, x: &Dataset) -> Result<Vec<u32>> {
        (0..x.n_samples()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect()
    }

    /// Per-class machine as a standalone model; support vector positions
    /// index the pool.
    pub fn model(&self, k: usize) -> SvmModel {
        let d = self.dim();
        let idx: Vec<usize> = (0..self.n_support()).filter(|&i| self.coef[k][i] != 0.0).collect();
        SvmModel {
            kernel: self.kernel,
            c: self.c,
            dim: d,
            support: idx.iter().flat_map(|&i| self.support[i * d..(i + 1) * d].to_vec()).collect(),
            alphas: idx.iter().map(|&i| self.coef[k][i].abs()).collect(),
            targets: idx.iter().map(|&i| self.coef[k][i].signum()).collect(),
            support_indices: idx,
            bias: self.bias[k],
            converged: self.converged[k],
            updates: 0,
            kkt_gap: f64::NAN,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        (|| -> std::io::Result<()> {
            writeln!(w, "bandsel-ovr v1")?;
            self.kernel.write(&mut w)?;
            writeln!(w, "c {}", self.c)?;
            writeln!(w, "bands {}", join(&mut self.bands.iter().map(|b| b.to_string())))?;
            writeln!(w, "classes {}", join(&mut self.class_ids.iter().map(|c| c.to_string())))?;
            writeln!(w, "support {}", self.n_support())?;
            for sv in self.support.chunks(self.dim()) {
                writeln!(w, "{}", join(&mut sv.iter().map(|v| v.to_string())))?;
            }
            for k in 0..self.class_ids.len() {
                writeln!(w, "machine {} {} {}", self.class_ids[k], self.bias[k], u8::from(self.converged[k]))?;
                writeln!(w, "{}", join(&mut self.coef[k].iter().map(|v| v.to_string())))?;
            }
            Ok(())
        })()
        .map_err(|e| Error::io("<ovr model>", e))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = Lines::new(r, "bandsel-ovr v1")?;
        let kernel = KernelSpec::parse(&lines.keyed("kernel")?)?;
        let c = lines.value("c")?;
        let bands: Vec<usize> = lines.keyed("bands")?.iter().map(|s| parse_num(s)).collect::<Result<_>>()?;
        let class_ids: Vec<u32> = lines.keyed("classes")?.iter().map(|s| parse_num(s)).collect::<Result<_>>()?;
        if bands.is_empty() || class_ids.is_empty() {
            return Err(Error::ModelFormat("model has no bands or no classes".into()));
        }
        let n: usize = lines.value("support")?;
        let mut support = Vec::with_capacity(n * bands.len());
        for _ in 0..n {
            let fields = lines.next_fields()?;
            if fields.len() != bands.len() {
                return Err(Error::ModelFormat(format!(
                    "support vector has {} values, expected {}",
                    fields.len(),
                    bands.len()
                )));
            }
            for f in &fields {
                support.push(parse_num(f)?);
            }
        }
        let (mut coef, mut bias, mut converged) = (Vec::new(), Vec::new(), Vec::new());
        for &class in &class_ids {
            let head = lines.keyed("machine")?;
            if head.len() != 3 || parse_num::<u32>(&head[0])? != class {
                return Err(Error::ModelFormat(format!("expected machine for class {class}")));
            }
            bias.push(parse_num(&head[1])?);
            converged.push(head[2] == "1");
            let fields = lines.next_fields()?;
            if fields.len() != n {
                return Err(Error::ModelFormat(format!(
                    "class {class} has {} coefficients, expected {n}",
                    fields.len()
                )));
            }
            coef.push(fields.iter().map(|f| parse_num(f)).collect::<Result<Vec<f64>>>()?);
        }
        Ok(OvrClassifier {
            kernel,
            c,
            bands,
            class_ids,
            support,
            coef,
            bias,
            converged,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

/// Trains one machine per class of `train` on the given bands. Every class in
/// the dataset's class list must have training samples.
pub fn train_ovr(train: &Dataset, bands: &[usize], kernel: KernelSpec, opts: &SmoOptions) -> Result<OvrClassifier> {
    let sizes = train.class_sizes();
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::MissingClass(train.class_ids()[k]));
    }
    train_ovr_on(train, bands, train.class_ids(), kernel, opts)
}

fn train_ovr_on(
    train: &Dataset,
    bands: &[usize],
    classes: &[u32],
    kernel: KernelSpec,
    opts: &SmoOptions,
) -> Result<OvrClassifier> {
    kernel.validate()?;
    opts.validate()?;
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "one-vs-rest training needs at least two classes, found {}",
            classes.len()
        )));
    }
    let x = train.select_bands(bands)?;
    let n = x.n_samples();
    let gram = fits_full_gram(n, opts).then(|| Arc::new(gram_matrix(&x, kernel)));
    let fit = |class: u32| -> Result<SvmModel> {
        let y: Vec<f64> = x.labels().iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        check_targets(&x, &y).map_err(|e| Error::for_class(class, e))?;
        let mut source = match &gram {
            Some(g) => KernelSource::Full { gram: Arc::clone(g), n },
            None => KernelSource::new(&x, kernel, opts),
        };
        Ok(smo(&x, &y, kernel, opts, &mut source))
    };
    // Two classes are one problem seen from both sides.
    let models: Vec<SvmModel> = if classes.len() == 2 {
        let m = fit(classes[0])?;
        let mut neg = m.clone();
        neg.targets.iter_mut().for_each(|t| *t = -*t);
        neg.bias = -neg.bias;
        vec![m, neg]
    } else {
        classes.par_iter().map(|&c| fit(c)).collect::<Result<_>>()?
    };

    let mut pooled: Vec<usize> = models.iter().flat_map(|m| m.support_indices.iter().copied()).collect();
    pooled.sort_unstable();
    pooled.dedup();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in pooled.iter().enumerate() {
        slot[i] = k;
    }
    let coef = models
        .iter()
        .map(|m| {
            let mut c = vec![0.0; pooled.len()];
            for ((&i, a), y) in m.support_indices.iter().zip(&m.alphas).zip(&m.targets) {
                c[slot[i]] = a * y;
            }
            c
        })
        .collect();
    Ok(OvrClassifier {
        kernel,
        c: opts.c,
        bands: bands.to_vec(),
        class_ids: classes.to_vec(),
        support: pooled.iter().flat_map(|&i| x.row(i).to_vec()).collect(),
        coef,
        bias: models.iter().map(|m| m.bias).collect(),
        converged: models.iter().map(|m| m.converged).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Fixed(f64),
    /// Cross-validated over [`GAMMA_GRID`] divided by the band count.
    Grid,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// the deal continuing where the previous class stopped so fold sizes differ
/// by at most one.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Vec<usize> {
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = SplitMix64::new(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        for i in idx {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

/// Cross-validated weighted MCC of each gamma; returns the best gamma (earlier
/// candidates win ties) and every candidate's score. A fold is skipped when
/// its validation part is empty or its fitting part has a single class; when
/// no fold can be scored every score is zero and the first candidate wins.
pub fn select_gamma(
    train: &Dataset,
    bands: &[usize],
    candidates: &[f64],
    opts: &SmoOptions,
    seed: u64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty gamma grid".into()));
    }
    let fold = stratified_folds(train.labels(), CV_FOLDS, seed);
    let parts: Vec<(Dataset, Dataset, Vec<u32>)> = (0..CV_FOLDS)
        .filter_map(|f| {
            let fit_idx: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] != f).collect();
            let val_idx: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] == f).collect();
            let fit = train.subset(&fit_idx);
            let present: Vec<u32> = fit
                .class_ids()
                .iter()
                .copied()
                .filter(|c| fit.labels().contains(c))
                .collect();
            (!val_idx.is_empty() && present.len() >= 2).then(|| (fit, train.subset(&val_idx), present))
        })
        .collect();
    if parts.is_empty() {
        warn!("no cross-validation fold can be scored; using gamma {}", candidates[0]);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &gamma in candidates {
        let kernel = KernelSpec::rbf(gamma)?;
        let mut total = 0.0;
        for (fit, val, present) in &parts {
            let model = train_ovr_on(fit, bands, present, kernel, opts)?;
            let predicted = model.predict(val)?;
            let report = McReport::evaluate(val.labels(), &predicted, val.class_ids(), &val.class_sizes())?;
            total += report.weighted;
        }
        scores.push((gamma, if parts.is_empty() { 0.0 } else { total / parts.len() as f64 }));
    }
    let best = scores
        .iter()
        .fold(scores[0], |b, &s| if s.1 > b.1 { s } else { b });
    Ok((best.0, scores))
}

pub fn gamma_grid(n_bands: usize) -> Vec<f64> {
    GAMMA_GRID.iter().map(|g| g / n_bands as f64).collect()
}

/// Resolves the gamma choice for a band subset, then trains on it.
pub fn train_ovr_with(
    train: &Dataset,
    bands: &[usize],
    gamma: GammaChoice,
    opts: &SmoOptions,
    seed: u64,
) -> Result<OvrClassifier> {
    let g = match gamma {
        GammaChoice::Fixed(g) => g,
        GammaChoice::Grid => select_gamma(train, bands, &gamma_grid(bands.len()), opts, seed)?.0,
    };
    train_ovr(train, bands, KernelSpec::rbf(g)?, opts)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R, header: &str) -> Result<Self> {
        let mut l = Lines {
            inner: r.lines(),
            line: 0,
        };
        let first = l.next_line()?;
        if first.trim() != header {
            return Err(Error::ModelFormat(format!(
                "expected header {header:?}, found {:?}",
                first.trim()
            )));
        }
        Ok(l)
    }

    fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(Error::io("<model>", e)),
            None => Err(Error::ModelFormat(format!("unexpected end of model at line {}", self.line))),
        }
    }

    fn next_fields(&mut self) -> Result<Vec<String>> {
        Ok(self.next_line()?.split_whitespace().map(str::to_string).collect())
    }

    /// Fields after the expected key.
    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let mut fields = self.next_fields()?;
        if fields.first().map(String::as_str) != Some(key) {
            return Err(Error::ModelFormat(format!("line {}: expected {key:?}", self.line)));
        }
        fields.remove(0);
        Ok(fields)
    }

    fn value<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        match self.keyed(key)?.as_slice() {
            [v] => parse_num(v),
            _ => Err(Error::ModelFormat(format!("line {}: {key:?} takes one value", self.line))),
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::ModelFormat(format!("cannot parse {s:?} as a number")))
}
