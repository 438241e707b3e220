use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Seeded shuffle, then `round(N * ratio_train)` sequences go to the train
/// side. Each side keeps the input's relative order.
pub fn split_dataset(ds: &Dataset, ratio_train: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio_train > 0.0 && ratio_train < 1.0) {
        return Err(Error::Invalid(format!(
            "train ratio must lie in (0, 1), got {ratio_train}"
        )));
    }
    if ds.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let n = ds.len();
    let n_train = (n as f64 * ratio_train).round() as usize;
    if n_train == 0 {
        return Err(Error::Invalid("empty train split".into()));
    }
    if n_train == n {
        return Err(Error::Invalid("empty test split".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train_idx, mut test_idx) = (idx[..n_train].to_vec(), idx[n_train..].to_vec());
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |ids: &[usize]| Dataset {
        sequences: ids.iter().map(|&i| ds.sequences[i].clone()).collect(),
        dt: ds.dt,
        norm: ds.norm.clone(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}
