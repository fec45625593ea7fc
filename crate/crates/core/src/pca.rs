//! Covariance eigen-analysis by cyclic Jacobi rotations, and the PCA band
//! prioritization derived from it.
//!
//! A band's score is its variance-weighted squared loading summed over all
//! components, `Σ_i λ_i v_i[j]^2`, which equals the band's own variance.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ranking::{FeatureRanking, Method};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Descending.
    pub values: Vec<f64>,
    /// Row-major D×D; column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<f64>,
    pub dim: usize,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.vectors[r * self.dim + i]).collect()
    }

    /// `V Λ Vᵀ`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = (0..d)
                    .map(|i| self.vectors[r * d + i] * self.values[i] * self.vectors[c * d + i])
                    .sum();
            }
        }
        out
    }
}

/// Sample covariance (divisor N−1), row-major D×D.
pub fn covariance(train: &Dataset) -> Result<Vec<f64>> {
    let n = train.n_samples();
    if n < 2 {
        return Err(Error::InvalidInput(format!("covariance needs at least 2 samples, got {n}")));
    }
    let d = train.n_bands();
    let mut mean = vec![0.0; d];
    for row in train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for row in train.rows() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for r in 0..d {
            let cr = centered[r];
            if cr == 0.0 {
                continue;
            }
            for c in r..d {
                cov[r * d + c] += cr * centered[c];
            }
        }
    }
    for r in 0..d {
        for c in r..d {
            let v = cov[r * d + c] / (n - 1) as f64;
            cov[r * d + c] = v;
            cov[c * d + r] = v;
        }
    }
    Ok(cov)
}

/// Symmetric eigen-decomposition by cyclic Jacobi sweeps, iterated until the
/// off-diagonal Frobenius norm drops below `1e-10 · trace`.
pub fn jacobi_eigen(matrix: &[f64], dim: usize) -> Result<EigenDecomposition> {
    if matrix.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: matrix.len(),
        });
    }
    let d = dim;
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let trace: f64 = (0..d).map(|i| a[i * d + i]).sum();
    let threshold = 1e-10 * trace.abs();

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                s += a[p * d + q] * a[p * d + q];
            }
        }
        (2.0 * s).sqrt()
    };

    for _ in 0..MAX_SWEEPS {
        let off = off_norm(&a);
        if off <= threshold || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a[y * d + y].total_cmp(&a[x * d + x]).then(x.cmp(&y)));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let mut vectors = vec![0.0; d * d];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..d {
            vectors[r * d + new] = v[r * d + old];
        }
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        dim: d,
    })
}

pub fn covariance_eigen(train: &Dataset) -> Result<EigenDecomposition> {
    let cov = covariance(train)?;
    jacobi_eigen(&cov, train.n_bands())
}

pub fn band_scores(e: &EigenDecomposition) -> Vec<f64> {
    let d = e.dim;
    (0..d)
        .map(|j| {
            (0..d)
                .map(|i| e.values[i] * e.vectors[j * d + i] * e.vectors[j * d + i])
                .sum()
        })
        .collect()
}

pub fn rank_pca(e: &EigenDecomposition) -> FeatureRanking {
    FeatureRanking::from_scores(&band_scores(e), Method::Pca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn check_invariants(m: &[f64], e: &EigenDecomposition) {
        let d = e.dim;
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..d {
            let vi = e.vector(i);
            let norm: f64 = vi.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            for j in i + 1..d {
                let dot: f64 = vi.iter().zip(e.vector(j)).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-7);
            }
            let scale = e.values[0].abs().max(1e-300);
            for r in 0..d {
                let cv: f64 = (0..d).map(|c| m[r * d + c] * vi[c]).sum();
                assert!((cv - e.values[i] * vi[r]).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn diagonal_matrix() {
        let e = jacobi_eigen(&[4.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert_eq!(e.vector(0), vec![1.0, 0.0]);
        let e = jacobi_eigen(&[1.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 4.0], 3).unwrap();
        assert_eq!(rank_pca(&e).order, vec![1, 2, 0]);
        let iso = jacobi_eigen(&[2.0, 0.0, 0.0, 2.0], 2).unwrap();
        assert_eq!(rank_pca(&iso).order, vec![0, 1]);
    }

    #[test]
    fn points_on_a_line_are_rank_one() {
        let d = Dataset::new(vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0], 2, vec![1; 4]).unwrap();
        let e = covariance_eigen(&d).unwrap();
        assert!(e.values[1].abs() < 1e-9);
        check_invariants(&covariance(&d).unwrap(), &e);
    }

    #[test]
    fn random_six_by_six_reconstructs() {
        let mut rng = SplitMix64::new(42);
        let samples: Vec<f64> = (0..40 * 6).map(|_| rng.next_f64()).collect();
        let d = Dataset::new(samples, 6, vec![1; 40]).unwrap();
        let cov = covariance(&d).unwrap();
        let e = jacobi_eigen(&cov, 6).unwrap();
        check_invariants(&cov, &e);
        let back = e.reconstruct();
        let err = cov.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn needs_two_samples() {
        let d = Dataset::new(vec![1.0, 2.0], 2, vec![1]).unwrap();
        assert!(covariance_eigen(&d).is_err());
    }

    proptest! {
        #[test]
        fn trace_and_variance_identities(seed in any::<u64>(), n in 2usize..30, dim in 1usize..8) {
            let mut rng = SplitMix64::new(seed);
            let samples: Vec<f64> = (0..n * dim).map(|_| rng.next_f64() * 10.0 - 5.0).collect();
            let d = Dataset::new(samples, dim, vec![1; n]).unwrap();
            let cov = covariance(&d).unwrap();
            let e = jacobi_eigen(&cov, dim).unwrap();
            check_invariants(&cov, &e);
            let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
            let sum: f64 = e.values.iter().sum();
            prop_assert!((trace - sum).abs() <= 1e-8 * trace.abs().max(1e-12));
            for (j, s) in band_scores(&e).iter().enumerate() {
                let col = d.band(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                prop_assert!((s - var).abs() <= 1e-8 * var.max(1.0));
            }
            // Sample order does not matter.
            let rev: Vec<usize> = (0..n).rev().collect();
            let er = covariance_eigen(&d.subset(&rev)).unwrap();
            prop_assert_eq!(rank_pca(&er).order, rank_pca(&e).order);
        }
    }
}
