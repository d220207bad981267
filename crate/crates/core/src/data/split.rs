use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One leave-one-dataset-out fold. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoSplit {
    pub train_ids: Vec<usize>,
    pub test_id: usize,
}

/// Fold `k` holds out dataset `k` and trains on the others.
pub fn loso_splits(n_datasets: usize) -> Result<Vec<LosoSplit>> {
    if n_datasets < 2 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 2 datasets, got {n_datasets}"
        )));
    }
    Ok((0..n_datasets)
        .map(|test_id| LosoSplit {
            train_ids: (0..n_datasets).filter(|&i| i != test_id).collect(),
            test_id,
        })
        .collect())
}

impl LosoSplit {
    pub fn holding_out(test_id: usize, n_datasets: usize) -> Result<Self> {
        loso_splits(n_datasets)?
            .into_iter()
            .nth(test_id)
            .ok_or_else(|| Error::invalid(format!("test dataset {test_id} out of range 0..{n_datasets}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_datasets() {
        let s = loso_splits(4).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[3].train_ids, vec![0, 1, 2]);
        assert_eq!(s[3].test_id, 3);
        let mut tests: Vec<_> = s.iter().map(|x| x.test_id).collect();
        tests.sort_unstable();
        assert_eq!(tests, vec![0, 1, 2, 3]);
        for split in &s {
            assert!(!split.train_ids.contains(&split.test_id));
            assert_eq!(split.train_ids.len() + 1, 4);
        }
    }

    #[test]
    fn minimal_case() {
        let s = loso_splits(2).unwrap();
        assert_eq!(
            s,
            vec![
                LosoSplit { train_ids: vec![1], test_id: 0 },
                LosoSplit { train_ids: vec![0], test_id: 1 },
            ]
        );
    }

    #[test]
    fn too_few() {
        assert!(loso_splits(1).is_err());
        assert!(loso_splits(0).is_err());
        assert!(LosoSplit::holding_out(4, 4).is_err());
    }
}
