//! RELIEF feature weighting.
//!
//! Each iteration takes one training instance, finds its nearest same-class
//! neighbour (near-hit) and nearest other-class neighbour (near-miss) by
//! Euclidean distance over all bands, and updates every band weight with
//! `W_j += (x_j - miss_j)^2 - (x_j - hit_j)^2`.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ranking::{FeatureRanking, Method};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ReliefWeights {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

/// Instance order for `iterations` draws: consecutive shuffled passes over
/// `0..n`, so `iterations == n` visits every instance once.
pub fn draw_order(n: usize, iterations: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    let mut order = Vec::with_capacity(iterations);
    while order.len() < iterations {
        let mut pass: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut pass);
        let take = (iterations - order.len()).min(n);
        order.extend_from_slice(&pass[..take]);
    }
    order
}

/// `iterations = None` runs one full pass over the training set. Every
/// class must have at least two samples.
pub fn relief_weights(train: &Dataset, iterations: Option<usize>, seed: u64) -> Result<ReliefWeights> {
    check_classes(train, train.class_ids().iter().copied().filter(|c| train.labels().contains(c)))?;
    let m = iterations.unwrap_or(train.n_samples());
    let order = draw_order(train.n_samples(), m, seed);
    Ok(ReliefWeights {
        weights: relief_weights_for(train, &order)?,
        iterations: m,
        seed,
    })
}

/// Every class whose instances get drawn needs a second sample to serve as
/// near-hit, and some other class must exist to supply a near-miss.
fn check_classes(train: &Dataset, drawn: impl Iterator<Item = u32>) -> Result<()> {
    let sizes = train.class_sizes();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidInput("RELIEF needs at least two classes".into()));
    }
    for class in drawn {
        let size = sizes[train.class_position(class).expect("label in class list")];
        if size < 2 {
            return Err(Error::ClassTooSmall {
                class,
                size,
                required: 2,
            });
        }
    }
    Ok(())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Weights after visiting the given instances in order.
pub fn relief_weights_for(train: &Dataset, instances: &[usize]) -> Result<Vec<f64>> {
    if let Some(&bad) = instances.iter().find(|&&i| i >= train.n_samples()) {
        return Err(Error::InvalidInput(format!("instance {bad} out of range")));
    }
    check_classes(train, instances.iter().map(|&i| train.labels()[i]))?;
    let labels = train.labels();
    let mut weights = vec![0.0; train.n_bands()];
    for &i in instances {
        let xi = train.row(i);
        // (distance, index) minima for hit and miss; lower index wins ties.
        let closer = |a: Option<(f64, usize)>, b: Option<(f64, usize)>| match (a, b) {
            (Some(x), Some(y)) => Some(if (y.0, y.1) < (x.0, x.1) { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        };
        let (hit, miss) = (0..train.n_samples())
            .into_par_iter()
            .filter(|&j| j != i)
            .map(|j| {
                let d = Some((squared_distance(xi, train.row(j)), j));
                if labels[j] == labels[i] {
                    (d, None)
                } else {
                    (None, d)
                }
            })
            .reduce(|| (None, None), |a, b| (closer(a.0, b.0), closer(a.1, b.1)));
        let (hit, miss) = (hit.expect("class has a second sample").1, miss.expect("another class exists").1);
        let (h, m) = (train.row(hit), train.row(miss));
        for (j, w) in weights.iter_mut().enumerate() {
            *w = *w - (xi[j] - h[j]).powi(2) + (xi[j] - m[j]).powi(2);
        }
    }
    Ok(weights)
}

pub fn rank_relief(w: &ReliefWeights) -> FeatureRanking {
    FeatureRanking::from_scores(&w.weights, Method::Relief)
}
