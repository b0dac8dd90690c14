//! Seeded query / training / remainder partition of a dataset.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Indices into the record list, each part sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub queries: Vec<usize>,
    pub train: Vec<usize>,
    pub rest: Vec<usize>,
}

impl Split {
    /// Database = training part plus the remainder, ascending.
    pub fn database(&self) -> Vec<usize> {
        let mut db: Vec<usize> = self.train.iter().chain(&self.rest).copied().collect();
        db.sort_unstable();
        db
    }
}

/// `round(query_frac * N)` records become queries; of the remaining database,
/// `round(train_frac * |db|)` are training records and the rest are held out.
pub fn split_dataset<T>(records: &[T], query_frac: f64, train_frac: f64, seed: u64) -> Result<Split> {
    for (name, f) in [("query_frac", query_frac), ("train_frac", train_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::argument(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_query = (query_frac * n as f64).round() as usize;
    let n_train = (train_frac * (n - n_query) as f64).round() as usize;
    let mut queries = order[..n_query].to_vec();
    let mut train = order[n_query..n_query + n_train].to_vec();
    let mut rest = order[n_query + n_train..].to_vec();
    queries.sort_unstable();
    train.sort_unstable();
    rest.sort_unstable();
    Ok(Split {
        queries,
        train,
        rest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_forty_five_forty_five() {
        let recs = vec![(); 100];
        let s = split_dataset(&recs, 0.1, 0.5, 7).unwrap();
        assert_eq!((s.queries.len(), s.train.len(), s.rest.len()), (10, 45, 45));
        assert_eq!(s, split_dataset(&recs, 0.1, 0.5, 7).unwrap());
    }

    #[test]
    fn fractions_outside_open_interval() {
        let recs = vec![(); 10];
        assert!(split_dataset(&recs, 1.0, 0.5, 1).is_err());
        assert!(split_dataset(&recs, 0.1, 0.0, 1).is_err());
        assert!(split_dataset(&recs, f64::NAN, 0.5, 1).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_exhaustive_and_deterministic(
            n in 0usize..300, q in 0.01f64..0.99, t in 0.01f64..0.99, seed in any::<u64>()
        ) {
            let recs = vec![(); n];
            let s = split_dataset(&recs, q, t, seed).unwrap();
            let mut all: Vec<usize> = s.queries.iter().chain(&s.train).chain(&s.rest).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(s.queries.len(), (q * n as f64).round() as usize);
            prop_assert_eq!(&s, &split_dataset(&recs, q, t, seed).unwrap());
        }
    }
}
