//! Plug-in mutual information on discretized bands and the greedy MRMR,
//! JMI and CMIM selectors built on it.
//!
//! All estimates are in bits. Selectors rank on training data only; each
//! greedy step scores every remaining band against the band picked last and
//! folds the result into a per-band accumulator, so a run of `k` picks costs
//! `O(k·D)` estimator calls. Ties go to the lower band index.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ranking::{FeatureRanking, Method};

pub const DEFAULT_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedData {
    /// `codes[band][sample]`, each in `0..bins`.
    pub codes: Vec<Vec<u32>>,
    pub bins: usize,
    /// `bins + 1` strictly increasing edges per band.
    pub edges: Vec<Vec<f64>>,
}

impl DiscretizedData {
    pub fn n_bands(&self) -> usize {
        self.codes.len()
    }

    pub fn n_samples(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }
}

/// Equal-width bins over each band's `[min, max]`; the top bin is closed.
pub fn discretize(d: &Dataset, bins: usize) -> Result<DiscretizedData> {
    if bins < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 bins, got {bins}")));
    }
    let mut codes = Vec::with_capacity(d.n_bands());
    let mut edges = Vec::with_capacity(d.n_bands());
    for b in 0..d.n_bands() {
        let col = d.band(b);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi.is_nan() || hi <= lo {
            codes.push(vec![0; col.len()]);
            edges.push((0..=bins).map(|i| lo + i as f64).collect());
            continue;
        }
        let width = (hi - lo) / bins as f64;
        codes.push(
            col.iter()
                .map(|&v| (((v - lo) / width).floor() as usize).min(bins - 1) as u32)
                .collect(),
        );
        edges.push((0..=bins).map(|i| lo + width * i as f64).collect());
    }
    Ok(DiscretizedData { codes, bins, edges })
}

/// Maps arbitrary class ids to dense codes `0..K` in ascending id order.
pub fn label_codes(labels: &[u32]) -> Vec<u32> {
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    labels
        .iter()
        .map(|l| ids.binary_search(l).unwrap() as u32)
        .collect()
}

fn alphabet(x: &[u32]) -> usize {
    x.iter().copied().max().map_or(1, |m| m as usize + 1)
}

/// Sums terms in value order so the result does not depend on the order
/// the caller passed the variables in.
fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// `I(X;Y) = Σ p(x,y) log2[p(x,y) / (p(x) p(y))]` over observed cells.
pub fn mutual_info(x: &[u32], y: &[u32]) -> f64 {
    assert_eq!(x.len(), y.len(), "mutual_info: length mismatch");
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let (ax, ay) = (alphabet(x), alphabet(y));
    let mut joint = vec![0u64; ax * ay];
    let mut cx = vec![0u64; ax];
    let mut cy = vec![0u64; ay];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize * ay + b as usize] += 1;
        cx[a as usize] += 1;
        cy[b as usize] += 1;
    }
    let nf = n as f64;
    let terms = joint
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(cell, &c)| {
            let (a, b) = (cell / ay, cell % ay);
            let ratio = (c as f64 * nf) / ((cx[a] * cy[b]) as f64);
            c as f64 / nf * ratio.log2()
        })
        .collect();
    stable_sum(terms)
}

/// `I(X;Y|Z) = Σ p(x,y,z) log2[p(x,y,z) p(z) / (p(x,z) p(y,z))]`.
pub fn conditional_mi(x: &[u32], y: &[u32], z: &[u32]) -> f64 {
    assert!(x.len() == y.len() && y.len() == z.len(), "conditional_mi: length mismatch");
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let (ax, ay, az) = (alphabet(x), alphabet(y), alphabet(z));
    let mut xyz = vec![0u64; ax * ay * az];
    let mut xz = vec![0u64; ax * az];
    let mut yz = vec![0u64; ay * az];
    let mut cz = vec![0u64; az];
    for ((&a, &b), &c) in x.iter().zip(y).zip(z) {
        let (a, b, c) = (a as usize, b as usize, c as usize);
        xyz[(a * ay + b) * az + c] += 1;
        xz[a * az + c] += 1;
        yz[b * az + c] += 1;
        cz[c] += 1;
    }
    let nf = n as f64;
    let terms = xyz
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(cell, &k)| {
            let c = cell % az;
            let b = (cell / az) % ay;
            let a = cell / (az * ay);
            let ratio = (k * cz[c]) as f64 / (xz[a * az + c] * yz[b * az + c]) as f64;
            k as f64 / nf * ratio.log2()
        })
        .collect();
    stable_sum(terms)
}

/// Paired variable `X_k X_j` with code `x·bins + z`.
pub fn joint_codes(x: &[u32], z: &[u32], bins: usize) -> Vec<u32> {
    x.iter().zip(z).map(|(&a, &b)| a * bins as u32 + b).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Mrmr,
    Jmi,
    Cmim,
}

impl Criterion {
    fn method(self) -> Method {
        match self {
            Criterion::Mrmr => Method::Mrmr,
            Criterion::Jmi => Method::Jmi,
            Criterion::Cmim => Method::Cmim,
        }
    }
}

/// Greedy selection bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorState {
    pub selected: Vec<usize>,
    pub remaining: Vec<usize>,
    /// `I(X_k;Y)` per band.
    pub relevance: Vec<f64>,
    /// Per band: Σ_{j∈S} I(X_k;X_j) for MRMR, Σ_{j∈S} I(X_kX_j;Y) for JMI,
    /// min_{j∈S} I(X_k;Y|X_j) for CMIM.
    pub accumulated: Vec<f64>,
}

impl SelectorState {
    pub fn criterion(&self, criterion: Criterion, band: usize) -> f64 {
        if self.selected.is_empty() {
            return self.relevance[band];
        }
        match criterion {
            Criterion::Mrmr => {
                self.relevance[band] - self.accumulated[band] / self.selected.len() as f64
            }
            Criterion::Jmi | Criterion::Cmim => self.accumulated[band],
        }
    }
}

/// Runs `k` greedy picks and returns the ranking together with the final
/// selector state, whose accumulated terms cover every selected band.
/// Scores are the criterion value at pick time.
pub fn select_greedy(
    dd: &DiscretizedData,
    labels: &[u32],
    k: usize,
    criterion: Criterion,
) -> Result<(FeatureRanking, SelectorState)> {
    let d = dd.n_bands();
    if k == 0 || k > d {
        return Err(Error::InvalidInput(format!("cannot select {k} of {d} bands")));
    }
    if labels.len() != dd.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: dd.n_samples(),
            got: labels.len(),
        });
    }
    let y = label_codes(labels);
    let relevance: Vec<f64> = dd.codes.par_iter().map(|x| mutual_info(x, &y)).collect();
    let initial = match criterion {
        Criterion::Cmim => f64::INFINITY,
        _ => 0.0,
    };
    let mut state = SelectorState {
        selected: Vec::with_capacity(k),
        remaining: (0..d).collect(),
        relevance,
        accumulated: vec![initial; d],
    };
    let mut scores = Vec::with_capacity(k);

    while state.selected.len() < k {
        let mut pick = state.remaining[0];
        let mut best = state.criterion(criterion, pick);
        for &band in &state.remaining[1..] {
            let v = state.criterion(criterion, band);
            if v > best {
                best = v;
                pick = band;
            }
        }
        state.selected.push(pick);
        state.remaining.retain(|&b| b != pick);
        scores.push(best);

        let last = &dd.codes[pick];
        let terms: Vec<f64> = state
            .remaining
            .par_iter()
            .map(|&band| {
                let x = &dd.codes[band];
                match criterion {
                    Criterion::Mrmr => mutual_info(x, last),
                    Criterion::Jmi => mutual_info(&joint_codes(x, last, dd.bins), &y),
                    Criterion::Cmim => conditional_mi(x, &y, last),
                }
            })
            .collect();
        for (&band, t) in state.remaining.iter().zip(terms) {
            let acc = &mut state.accumulated[band];
            *acc = match criterion {
                Criterion::Mrmr | Criterion::Jmi => *acc + t,
                Criterion::Cmim => acc.min(t),
            };
        }
    }

    let ranking = FeatureRanking {
        order: state.selected.clone(),
        scores,
        method: criterion.method(),
    };
    Ok((ranking, state))
}

pub fn select_mrmr(dd: &DiscretizedData, labels: &[u32], k: usize) -> Result<FeatureRanking> {
    select_greedy(dd, labels, k, Criterion::Mrmr).map(|r| r.0)
}

pub fn select_jmi(dd: &DiscretizedData, labels: &[u32], k: usize) -> Result<FeatureRanking> {
    select_greedy(dd, labels, k, Criterion::Jmi).map(|r| r.0)
}

pub fn select_cmim(dd: &DiscretizedData, labels: &[u32], k: usize) -> Result<FeatureRanking> {
    select_greedy(dd, labels, k, Criterion::Cmim).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn from_bands(bands: &[Vec<u32>], bins: usize) -> DiscretizedData {
        DiscretizedData {
            codes: bands.to_vec(),
            bins,
            edges: vec![(0..=bins).map(|i| i as f64).collect(); bands.len()],
        }
    }

    #[test]
    fn discretize_examples() {
        let d = Dataset::new(vec![0.0, 3.0, 0.5, 3.0, 1.0, 3.0], 2, vec![1, 1, 2]).unwrap();
        let dd = discretize(&d, 2).unwrap();
        assert_eq!(dd.codes[0], vec![0, 1, 1]);
        assert_eq!(dd.codes[1], vec![0, 0, 0]);
        for e in &dd.edges {
            assert!(e.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(discretize(&d, 1).is_err());
    }

    #[test]
    fn mutual_info_examples() {
        assert_eq!(mutual_info(&[0, 0, 1, 1], &[0, 1, 0, 1]), 0.0);
        assert!((mutual_info(&[0, 0, 1, 1], &[0, 0, 1, 1]) - 1.0).abs() < 1e-15);
        let v = mutual_info(&[0, 0, 0, 1], &[0, 0, 1, 1]);
        let hx = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((v - (hx + 1.0 - 1.5)).abs() < 1e-12);
        assert!((v - 0.311278).abs() < 1e-6);
    }

    #[test]
    fn conditional_mi_examples() {
        let x = [0, 1, 1, 0, 1, 0];
        let y = [1, 1, 0, 0, 1, 0];
        assert!((conditional_mi(&x, &y, &[0; 6]) - mutual_info(&x, &y)).abs() < 1e-15);
        assert!(conditional_mi(&x, &y, &y).abs() < 1e-15);
    }

    /// Y = X1 xor X2, X3 = X1.
    fn xor_with_duplicate() -> (DiscretizedData, Vec<u32>) {
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..5 {
            for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                x1.push(a);
                x2.push(b);
                labels.push(1 + (a ^ b));
            }
        }
        (from_bands(&[x1.clone(), x2, x1], 2), labels)
    }

    #[test]
    fn cmim_prefers_complement_over_duplicate() {
        let (dd, labels) = xor_with_duplicate();
        let (r, state) = select_greedy(&dd, &labels, 2, Criterion::Cmim).unwrap();
        assert_eq!(r.order, vec![0, 1]);
        assert!((state.accumulated[2]).abs() < 1e-12);
    }

    #[test]
    fn mrmr_penalizes_duplicate() {
        let (dd, labels) = xor_with_duplicate();
        let (r, state) = select_greedy(&dd, &labels, 2, Criterion::Mrmr).unwrap();
        assert_eq!(r.order, vec![0, 1]);
        let independent = state.relevance[1] - mutual_info(&dd.codes[1], &dd.codes[0]);
        let duplicate = state.relevance[2] - mutual_info(&dd.codes[2], &dd.codes[0]);
        assert!(duplicate < independent);
    }

    #[test]
    fn mrmr_picks_independent_relevant_band() {
        // Y encodes (a, b); X1 = a, X2 = a, X3 = b.
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40u32 {
            let (u, v) = (i % 2, (i / 2) % 2);
            a.push(u);
            b.push(v);
            labels.push(1 + 2 * u + v);
        }
        let dd = from_bands(&[a.clone(), a, b], 2);
        let r = select_mrmr(&dd, &labels, 2).unwrap();
        assert_eq!(r.order, vec![0, 2]);
        assert!((r.scores[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_one_is_max_relevance_for_all_criteria() {
        let mut rng = SplitMix64::new(4);
        let labels: Vec<u32> = (0..100).map(|_| 1 + rng.below(3) as u32).collect();
        let bands: Vec<Vec<u32>> = (0..6)
            .map(|b| {
                labels
                    .iter()
                    .map(|&l| if rng.below(6) < b { l - 1 } else { rng.below(3) as u32 })
                    .collect()
            })
            .collect();
        let dd = from_bands(&bands, 3);
        let y = label_codes(&labels);
        let best = (0..6)
            .max_by(|&a, &b| mutual_info(&bands[a], &y).total_cmp(&mutual_info(&bands[b], &y)).then(b.cmp(&a)))
            .unwrap();
        for c in [Criterion::Mrmr, Criterion::Jmi, Criterion::Cmim] {
            let (r, _) = select_greedy(&dd, &labels, 1, c).unwrap();
            assert_eq!(r.order, vec![best]);
        }
    }

    #[test]
    fn accumulators_match_recomputation() {
        let mut rng = SplitMix64::new(77);
        let labels: Vec<u32> = (0..150).map(|_| 1 + rng.below(4) as u32).collect();
        let bands: Vec<Vec<u32>> = (0..8)
            .map(|_| (0..150).map(|_| rng.below(4) as u32).collect())
            .collect();
        let dd = from_bands(&bands, 4);
        let y = label_codes(&labels);
        for c in [Criterion::Mrmr, Criterion::Jmi, Criterion::Cmim] {
            let (r, state) = select_greedy(&dd, &labels, 5, c).unwrap();
            assert_eq!(r.len(), 5);
            let s = &state.selected;
            for &k in &state.remaining {
                let expect = match c {
                    Criterion::Mrmr => s.iter().map(|&j| mutual_info(&bands[k], &bands[j])).sum::<f64>(),
                    Criterion::Jmi => s
                        .iter()
                        .map(|&j| mutual_info(&joint_codes(&bands[k], &bands[j], 4), &y))
                        .sum(),
                    Criterion::Cmim => s
                        .iter()
                        .map(|&j| conditional_mi(&bands[k], &y, &bands[j]))
                        .fold(f64::INFINITY, f64::min),
                };
                assert!((state.accumulated[k] - expect).abs() < 1e-12);
            }
        }
    }

    fn codes(n: usize, alphabet: u32) -> impl Strategy<Value = Vec<u32>> {
        proptest::collection::vec(0..alphabet, n)
    }

    proptest! {
        #[test]
        fn estimator_invariants((x, y, z) in (1usize..120).prop_flat_map(|n| (codes(n, 4), codes(n, 5), codes(n, 3)))) {
            let ixy = mutual_info(&x, &y);
            prop_assert!(ixy >= -1e-12);
            prop_assert_eq!(ixy, mutual_info(&y, &x));
            let cmi = conditional_mi(&x, &y, &z);
            prop_assert!(cmi >= -1e-12);
            let xz = joint_codes(&x, &z, 3);
            prop_assert!((mutual_info(&xz, &y) - (mutual_info(&z, &y) + cmi)).abs() < 1e-12);
            // Joint variable carries at least as much as either part.
            prop_assert!(mutual_info(&xz, &y) >= mutual_info(&x, &y).max(mutual_info(&z, &y)) - 1e-12);
            // CMIM's min-term never exceeds the joint information.
            prop_assert!(cmi <= mutual_info(&xz, &y) + 1e-12);
        }

        #[test]
        fn selectors_return_prefixes_without_repeats(seed in any::<u64>(), k in 1usize..7) {
            let mut rng = SplitMix64::new(seed);
            let labels: Vec<u32> = (0..60).map(|_| 1 + rng.below(3) as u32).collect();
            let bands: Vec<Vec<u32>> = (0..6).map(|_| (0..60).map(|_| rng.below(4) as u32).collect()).collect();
            let dd = from_bands(&bands, 4);
            for c in [Criterion::Mrmr, Criterion::Jmi, Criterion::Cmim] {
                let (r, state) = select_greedy(&dd, &labels, k, c).unwrap();
                let mut seen = r.order.clone();
                seen.sort_unstable();
                seen.dedup();
                prop_assert_eq!(seen.len(), k);
                prop_assert!(state.remaining.iter().all(|b| !state.selected.contains(b)));
            }
        }
    }
}
