mod common;

use bandsel::data::Dataset;
use bandsel::infosel::{self, Criterion};
use bandsel::rng::SplitMix64;
use proptest::prelude::*;

fn symbols(n: usize) -> impl Strategy<Value = (Vec<u32>, Vec<u32>, Vec<u32>)> {
    let col = move |a: u32| proptest::collection::vec(0..a, n);
    (1u32..=5, 1u32..=5, 1u32..=5).prop_flat_map(move |(a, b, c)| (col(a), col(b), col(c)))
}

proptest! {
    #[test]
    fn estimators_match_entropy_arithmetic((x, y, z) in (1usize..300).prop_flat_map(symbols)) {
        let mi = infosel::mutual_info(&x, &y);
        let cmi = infosel::conditional_mi(&x, &y, &z);
        prop_assert!((mi - common::mi_oracle(&x, &y)).abs() <= 1e-12);
        prop_assert!((cmi - common::cmi_oracle(&x, &y, &z)).abs() <= 1e-12);
        prop_assert!(mi >= -1e-12 && cmi >= -1e-12);
        prop_assert!(mi <= common::entropy(&[&x]).min(common::entropy(&[&y])) + 1e-12);
        prop_assert!((mi - infosel::mutual_info(&y, &x)).abs() <= 1e-12);
        // Joint variable through the library's own pairing matches the
        // test-side one.
        let xz = infosel::joint_codes(&x, &z, 5);
        prop_assert!((infosel::mutual_info(&xz, &y) - common::mi_oracle(&xz, &y)).abs() <= 1e-12);
    }

    #[test]
    fn greedy_scores_replay_from_oracles(seed in any::<u64>()) {
        // Every pick's score equals the criterion recomputed from scratch
        // with the entropy oracle over the bands chosen before it.
        let mut rng = SplitMix64::new(seed);
        let n = 80;
        let labels: Vec<u32> = (0..n).map(|_| 1 + rng.below(3) as u32).collect();
        let bands: Vec<Vec<u32>> = (0..6).map(|_| common::random_symbols(&mut rng, n, 3)).collect();
        let samples: Vec<f64> = (0..n).flat_map(|i| bands.iter().map(move |b| b[i] as f64)).collect();
        let d = Dataset::new(samples, 6, labels.clone()).unwrap();
        let dd = infosel::discretize(&d, 3).unwrap();
        let y: Vec<u32> = labels.iter().map(|l| l - 1).collect();
        for criterion in [Criterion::Mrmr, Criterion::Jmi, Criterion::Cmim] {
            let (ranking, _) = infosel::select_greedy(&dd, &labels, 4, criterion).unwrap();
            for (step, (&pick, &score)) in ranking.order.iter().zip(&ranking.scores).enumerate() {
                let chosen = &ranking.order[..step];
                let x = &dd.codes[pick];
                let expect = if chosen.is_empty() {
                    common::mi_oracle(x, &y)
                } else {
                    match criterion {
                        Criterion::Mrmr => {
                            common::mi_oracle(x, &y)
                                - chosen.iter().map(|&j| common::mi_oracle(x, &dd.codes[j])).sum::<f64>() / chosen.len() as f64
                        }
                        Criterion::Jmi => chosen
                            .iter()
                            .map(|&j| common::entropy(&[x, &dd.codes[j]]) + common::entropy(&[&y]) - common::entropy(&[x, &dd.codes[j], &y]))
                            .sum(),
                        Criterion::Cmim => chosen
                            .iter()
                            .map(|&j| common::cmi_oracle(x, &y, &dd.codes[j]))
                            .fold(f64::INFINITY, f64::min),
                    }
                };
                prop_assert!((score - expect).abs() <= 1e-10, "{criterion:?} step {step}: {score} vs {expect}");
            }
        }
    }
}
