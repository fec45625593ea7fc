//! Small synthetic hyperspectral scenes for examples and tests.
//!
//! Every class shares a smooth background spectrum. Each class lifts a few
//! class-specific bands, and uniform noise covers every band.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyScene {
    pub classes: u32,
    /// Samples per class; the last entry repeats for any remaining classes.
    pub class_sizes: Vec<usize>,
    pub bands: usize,
    /// Class-specific bands per class.
    pub informative: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToyScene {
    fn default() -> Self {
        Self {
            classes: 4,
            class_sizes: vec![40],
            bands: 24,
            informative: 2,
            separation: 0.3,
            noise: 0.1,
            seed: 1,
        }
    }
}

impl ToyScene {
    /// Bands lifted for `class` (1-based): a strided block so classes do
    /// not overlap while `classes · informative ≤ bands`.
    pub fn informative_bands(&self, class: u32) -> Vec<usize> {
        (0..self.informative)
            .map(|k| ((class as usize - 1) + k * self.classes as usize) % self.bands)
            .collect()
    }

    pub fn generate(&self) -> Result<Dataset> {
        if self.classes == 0 || self.bands == 0 || self.class_sizes.is_empty() {
            return Err(Error::InvalidInput("toy scene needs classes, bands and class sizes".into()));
        }
        let mut rng = SplitMix64::new(self.seed);
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for class in 1..=self.classes {
            let size = *self
                .class_sizes
                .get(class as usize - 1)
                .unwrap_or(self.class_sizes.last().unwrap());
            let lifted = self.informative_bands(class);
            for _ in 0..size {
                for b in 0..self.bands {
                    let background = 0.4 + 0.2 * (b as f64 / self.bands as f64 * std::f64::consts::PI).sin();
                    let lift = if lifted.contains(&b) { self.separation } else { 0.0 };
                    samples.push(background + lift + self.noise * (rng.next_f64() - 0.5));
                }
                labels.push(class);
            }
        }
        Dataset::new(samples, self.bands, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let t = ToyScene {
            class_sizes: vec![5, 7],
            classes: 3,
            ..ToyScene::default()
        };
        let d = t.generate().unwrap();
        assert_eq!(d.class_sizes(), vec![5, 7, 7]);
        assert_eq!(d.n_bands(), 24);
        assert_eq!(d, t.generate().unwrap());
        assert_eq!(t.informative_bands(2), vec![1, 4]);
    }

    #[test]
    fn lifted_bands_carry_the_class_signal() {
        let t = ToyScene::default();
        let d = t.generate().unwrap();
        let mean = |class: u32, band: usize| {
            let idx = d.indices_of(class);
            idx.iter().map(|&i| d.value(i, band)).sum::<f64>() / idx.len() as f64
        };
        for b in t.informative_bands(1) {
            assert!(mean(1, b) - mean(2, b) > 0.2);
        }
    }
}
