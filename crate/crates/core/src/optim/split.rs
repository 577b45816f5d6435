//! Deterministic three-way dataset split: weight training plus two disjoint
//! validation streams.

use stretchnas_autodiff::rng::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: Dataset,
    pub val_alpha: Dataset,
    pub val_beta: Dataset,
}

/// Shuffles sample indices with a stream derived from `seed` and deals them
/// into three disjoint parts. The first two sizes round down, the third
/// takes the remainder, so equal ratios on a multiple of three give equal
/// parts.
pub fn split_dataset(data: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<SplitDatasets> {
    let (r1, r2, r3) = ratios;
    for r in [r1, r2, r3] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::data(format!("split ratio {r} outside [0, 1]")));
        }
    }
    if ((r1 + r2 + r3) - 1.0).abs() > 1e-9 {
        return Err(Error::data(format!(
            "split ratios must sum to 1, got {}",
            r1 + r2 + r3
        )));
    }
    let n = data.len();
    if n < 3 {
        return Err(Error::data(format!("cannot three-way split {n} samples")));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = Rng::derive(seed, "dataset-split", 0);
    rng.shuffle(&mut indices);
    let n1 = (n as f64 * r1).floor() as usize;
    let n2 = (n as f64 * r2).floor() as usize;
    if n1 == 0 || n2 == 0 || n1 + n2 >= n {
        return Err(Error::data(format!(
            "ratios {ratios:?} leave an empty part for {n} samples"
        )));
    }
    Ok(SplitDatasets {
        train: data.subset(&indices[..n1])?,
        val_alpha: data.subset(&indices[n1..n1 + n2])?,
        val_beta: data.subset(&indices[n1 + n2..])?,
    })
}
