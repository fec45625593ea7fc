use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mcm,
    Mrmr,
    Jmi,
    Cmim,
    Relief,
    Pca,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mcm,
        Method::Mrmr,
        Method::Jmi,
        Method::Cmim,
        Method::Relief,
        Method::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mcm => "mcm",
            Method::Mrmr => "mrmr",
            Method::Jmi => "jmi",
            Method::Cmim => "cmim",
            Method::Relief => "relief",
            Method::Pca => "pca",
        }
    }

    /// Greedy selectors report the criterion value at pick time, which need
    /// not decrease along the order.
    pub fn is_greedy(self) -> bool {
        matches!(self, Method::Mrmr | Method::Jmi | Method::Cmim)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

/// Bands in priority order. Band indices are zero-based; files and tables
/// print them one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    pub method: Method,
}

impl FeatureRanking {
    /// Sorts bands by descending score, lower index first on ties.
    pub fn from_scores(scores: &[f64], method: Method) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&i| scores[i]).collect();
        Self {
            order,
            scores: sorted,
            method,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    /// Writes `rank,band_index,score` rows, both counters one-based.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["rank", "band_index", "score"])?;
        for (rank, (&band, score)) in self.order.iter().zip(&self.scores).enumerate() {
            writer.write_record([
                (rank + 1).to_string(),
                (band + 1).to_string(),
                score.to_string(),
            ])?;
        }
        writer.flush().map_err(|e| Error::io("<ranking>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sorted_rankings_are_permutations_with_falling_scores(scores in proptest::collection::vec(-5.0f64..5.0, 0..40)) {
            let r = FeatureRanking::from_scores(&scores, Method::Pca);
            let mut seen = r.order.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..scores.len()).collect::<Vec<_>>());
            prop_assert!(r.scores.windows(2).all(|w| w[0] >= w[1]));
            for (&b, &s) in r.order.iter().zip(&r.scores) {
                prop_assert_eq!(scores[b], s);
            }
        }
    }

    #[test]
    fn descending_with_index_ties() {
        let r = FeatureRanking::from_scores(&[0.2, 0.9, 0.2], Method::Relief);
        assert_eq!(r.order, vec![1, 0, 2]);
        let r = FeatureRanking::from_scores(&[1.0; 4], Method::Relief);
        assert_eq!(r.order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn csv_is_one_based() {
        let r = FeatureRanking::from_scores(&[0.5, 2.0, 0.0], Method::Mcm);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "rank,band_index,score\n1,2,2\n2,1,0.5\n3,3,0\n"
        );
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("svm-rfe".parse::<Method>().is_err());
    }
}
