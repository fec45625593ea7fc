//! Minimal complexity machine band ranking.
//!
//! For a two-class training set `(x_i, y_i)`, `y_i ∈ {+1, -1}`, the MCM
//! solves
//!
//! ```text
//! min_{w, b, h, q}  h + C Σ q_i
//!     h >= y_i (w·x_i + b) + q_i
//!     y_i (w·x_i + b) + q_i >= 1
//!     q_i >= 0
//! ```
//!
//! `h` bounds the VC dimension of the resulting hyperplane, so minimizing it
//! drives most of `w` to zero; bands are ranked by `|w_j|`. Multiclass
//! rankings sum `|w_j|` over one one-vs-rest problem per class.

use log::warn;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation, SolverOptions, VarKind};
use crate::metrics;
use crate::ranking::{FeatureRanking, Method};
use crate::rng::SplitMix64;

pub const DEFAULT_C: f64 = 10.0;
pub const C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct McmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub h: f64,
    pub c: f64,
    /// One slack per training sample.
    pub slacks: Vec<f64>,
    pub objective: f64,
}

impl McmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }
}

#[derive(Debug, Clone)]
pub struct McmOptions {
    pub c: f64,
    /// Caps one-vs-rest problem size by subsampling the negative class.
    pub max_samples: Option<usize>,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for McmOptions {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            max_samples: None,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl McmOptions {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }
}

/// Builds the MCM program. Variable layout: `w` (one per band), `b`, `h`,
/// then one slack per sample.
pub fn build_program(x: &Dataset, targets: &[f64], c: f64) -> Result<LinearProgram> {
    let d = x.n_bands();
    let m = x.n_samples();
    if targets.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: targets.len(),
        });
    }
    let (b_var, h_var) = (d, d + 1);
    let n = d + 2 + m;
    let mut objective = vec![0.0; n];
    objective[h_var] = 1.0;
    objective[d + 2..].iter_mut().for_each(|v| *v = c);
    let mut kinds = vec![VarKind::Free; d + 2];
    kinds.resize(n, VarKind::NonNeg);

    let mut program = LinearProgram::new(objective, kinds)?;
    for (i, (row, &y)) in x.rows().zip(targets).enumerate() {
        let q_var = d + 2 + i;
        let margin: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .map(|(j, &v)| (j, y * v))
            .chain([(b_var, y)])
            .collect();
        // h - y(w·x + b) - q >= 0
        let mut upper: Vec<(usize, f64)> = margin.iter().map(|&(j, a)| (j, -a)).collect();
        upper.extend([(h_var, 1.0), (q_var, -1.0)]);
        program.add_sparse_constraint(upper, Relation::Ge, 0.0)?;
        // y(w·x + b) + q >= 1
        let mut lower = margin;
        lower.push((q_var, 1.0));
        program.add_sparse_constraint(lower, Relation::Ge, 1.0)?;
    }
    Ok(program)
}

/// Fits the MCM on `x` with `targets` in `{+1, -1}`.
pub fn fit_binary(x: &Dataset, targets: &[f64], opts: &McmOptions) -> Result<McmModel> {
    let c = opts.c;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("MCM tradeoff C must be positive, got {c}")));
    }
    if targets.iter().any(|&t| t != 1.0 && t != -1.0) {
        return Err(Error::InvalidInput("MCM targets must be +1 or -1".into()));
    }
    if !targets.contains(&1.0) || !targets.contains(&-1.0) {
        return Err(Error::InvalidInput("MCM needs both classes present".into()));
    }
    let program = build_program(x, targets, c)?;
    let solution = lp::solve_with(&program, &opts.solver)?;
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(Error::McmUnbounded { c }),
        LpStatus::Infeasible => return Err(Error::McmInfeasible),
    }
    let d = x.n_bands();
    let v = solution.values;
    Ok(McmModel {
        w: v[..d].to_vec(),
        b: v[d],
        h: v[d + 1],
        c,
        slacks: v[d + 2..].to_vec(),
        objective: solution.objective_value,
    })
}

/// +1 for `class`, -1 for every other class; negatives optionally
/// subsampled to `opts.max_samples`.
pub fn one_vs_rest_problem(train: &Dataset, class: u32, opts: &McmOptions) -> (Dataset, Vec<f64>) {
    let positives = train.indices_of(class);
    let mut negatives: Vec<usize> = (0..train.n_samples())
        .filter(|&i| train.labels()[i] != class)
        .collect();
    if let Some(limit) = opts.max_samples {
        if train.n_samples() > limit && negatives.len() > limit {
            let mut rng = SplitMix64::new(opts.seed ^ u64::from(class));
            rng.shuffle(&mut negatives);
            negatives.truncate(limit);
            negatives.sort_unstable();
        }
    }
    let mut idx = positives;
    idx.extend(negatives);
    idx.sort_unstable();
    let subset = train.subset(&idx);
    let targets = subset
        .labels()
        .iter()
        .map(|&l| if l == class { 1.0 } else { -1.0 })
        .collect();
    (subset, targets)
}

pub fn rank_bands(model: &McmModel) -> FeatureRanking {
    let scores: Vec<f64> = model.w.iter().map(|w| w.abs()).collect();
    if scores.iter().all(|&s| s == 0.0) {
        warn!("MCM weight vector is all zero; ranking falls back to band order");
    }
    FeatureRanking::from_scores(&scores, Method::Mcm)
}

/// Fits one MCM per class present in `train` and ranks bands by the sum of
/// `|w_j|` across them.
pub fn fit_one_vs_rest(train: &Dataset, opts: &McmOptions) -> Result<Vec<(u32, McmModel)>> {
    let classes: Vec<u32> = train
        .class_ids()
        .iter()
        .copied()
        .filter(|&c| train.labels().contains(&c))
        .collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "MCM ranking needs at least two classes, found {}",
            classes.len()
        )));
    }
    classes
        .par_iter()
        .map(|&class| {
            let (x, y) = one_vs_rest_problem(train, class, opts);
            fit_binary(&x, &y, opts)
                .map(|m| (class, m))
                .map_err(|e| Error::for_class(class, e))
        })
        .collect()
}

pub fn rank_bands_multiclass(train: &Dataset, opts: &McmOptions) -> Result<FeatureRanking> {
    let models = fit_one_vs_rest(train, opts)?;
    Ok(aggregate(&models, train.n_bands()))
}

fn aggregate(models: &[(u32, McmModel)], n_bands: usize) -> FeatureRanking {
    let mut scores = vec![0.0; n_bands];
    for (_, m) in models {
        for (s, w) in scores.iter_mut().zip(&m.w) {
            *s += w.abs();
        }
    }
    if scores.iter().all(|&s| s == 0.0) {
        warn!("every MCM weight vector is zero; ranking falls back to band order");
    }
    FeatureRanking::from_scores(&scores, Method::Mcm)
}

/// Predicts with the one-vs-rest MCM hyperplanes, largest decision value
/// winning and lower class id on ties.
pub fn predict_one_vs_rest(models: &[(u32, McmModel)], x: &Dataset) -> Vec<u32> {
    x.rows()
        .map(|row| {
            let mut best = (f64::NEG_INFINITY, 0u32);
            for (class, m) in models {
                let v = m.decision(row);
                if v > best.0 {
                    best = (v, *class);
                }
            }
            best.1
        })
        .collect()
}

/// Picks C from `grid` by the training-set weighted MCC of the one-vs-rest
/// MCM classifier; earlier grid entries win ties. Returns the chosen C and
/// the ranking fitted with it.
pub fn rank_with_c_grid(train: &Dataset, grid: &[f64], opts: &McmOptions) -> Result<(f64, FeatureRanking)> {
    let mut best: Option<(f64, f64, FeatureRanking)> = None;
    for &c in grid {
        let o = McmOptions { c, ..opts.clone() };
        let models = fit_one_vs_rest(train, &o)?;
        let predicted = predict_one_vs_rest(&models, train);
        let report = metrics::McReport::evaluate(
            train.labels(),
            &predicted,
            train.class_ids(),
            &train.class_sizes(),
        )?;
        log::debug!("MCM C={c}: training weighted MCC {:.6}", report.weighted);
        if best.as_ref().is_none_or(|b| report.weighted > b.1) {
            best = Some((c, report.weighted, aggregate(&models, train.n_bands())));
        }
    }
    let (c, _, ranking) = best.ok_or_else(|| Error::InvalidInput("empty C grid".into()))?;
    Ok((c, ranking))
}
