//! Band selection for hyperspectral classification.
//!
//! Six selectors rank spectral bands on training data: the minimal
//! complexity machine ([`mcm`], a linear program whose solution bounds the
//! VC dimension), the information-theoretic greedy criteria MRMR, JMI and
//! CMIM ([`infosel`]), RELIEF ([`relief`]) and covariance-variance PCA
//! ([`pca`]). The [`svm`] module scores a band subset with a one-vs-rest
//! RBF support vector machine, [`metrics`] turns its predictions into
//! class-weighted Matthews correlation, and [`harness`] sweeps band counts,
//! test ratios and seeds into CSV tables.

pub mod data;
pub mod error;
pub mod harness;
pub mod infosel;
pub mod lp;
pub mod mcm;
pub mod metrics;
pub mod pca;
pub mod ranking;
pub mod relief;
pub mod rng;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use ranking::{FeatureRanking, Method};
