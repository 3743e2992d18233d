// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;

use super::{classify, train_template, TrainingSet, DEFAULT_TOL};
use crate::error::{Error, Result};

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub best_c: f64,
    /// `(C, per-fold validation accuracy)` for every grid entry, ascending in C.
    pub folds: Vec<(f64, Vec<f64>)>,
}

impl CvResult {
    pub fn mean_accuracy(&self, c: f64) -> Option<f64> {
        self.folds
            .iter()
            .find(|(x, _)| *x == c)
            .map(|(_, a)| a.iter().sum::<f64>() / a.len() as f64)
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[i8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    for class in [1i8, -1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    assign
}

/// Template-SVM C selection by stratified k-fold cross-validation.
pub fn cross_validate(data: &TrainingSet, c_grid: &[f64], folds: usize, seed: u64) -> Result<CvResult> {
    if folds < 2 {
        return Err(Error::Config(format!("folds = {folds}, need at least 2")));
    }
    let mut grid: Vec<f64> = c_grid.to_vec();
    if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::Config("C grid must be non-empty and positive".into()));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    for class in [1i8, -1] {
        let n = data.labels().iter().filter(|&&y| y == class).count();
        if n < 2 {
            return Err(Error::TrainingSet(format!(
                "class {class:+} has {n} sample(s); every training fold needs both classes"
            )));
        }
    }
    if data.len() < folds {
        return Err(Error::Config(format!("{} samples for {folds} folds", data.len())));
    }
    let assign = stratified_folds(data.labels(), folds, seed);
    let splits: Vec<(TrainingSet, Vec<usize>)> = (0..folds)
        .map(|k| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| assign[i] != k).collect();
            let val: Vec<usize> = (0..data.len()).filter(|&i| assign[i] == k).collect();
            data.subset(&train).map(|t| (t, val))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds).map(move |k| (g, k))).collect();
    let acc: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, k)| -> Result<f64> {
            let (train, val) = &splits[k];
            let (model, _) = train_template(train, grid[g], DEFAULT_TOL)?;
            let mut hits = 0usize;
            for &i in val {
                let phi = data.features().row(i).to_vec();
                if classify(&phi, &model)? == data.labels()[i] {
                    hits += 1;
                }
            }
            Ok(hits as f64 / val.len() as f64)
        })
        .collect::<Result<_>>()?;

    let folds_out: Vec<(f64, Vec<f64>)> = grid
        .iter()
        .enumerate()
        .map(|(g, &c)| (c, acc[g * folds..(g + 1) * folds].to_vec()))
        .collect();
    let mut best_c = grid[0];
    let mut best = f64::NEG_INFINITY;
    for (c, a) in &folds_out {
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        if mean > best {
            best = mean;
            best_c = *c;
        }
    }
    Ok(CvResult {
        best_c,
        folds: folds_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn data(m: usize, seed: u64) -> TrainingSet {
        let mut s = seed;
        let mut r = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let labels: Vec<i8> = (0..m).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let f = Array2::from_shape_fn((m, 3), |(i, j)| {
            r() + if j == 0 { 0.3 * f64::from(labels[i]) } else { 0.0 }
        });
        TrainingSet::new(f, labels).unwrap()
    }

    #[test]
    fn single_grid_entry_is_returned() {
        let d = data(40, 1);
        assert_eq!(cross_validate(&d, &[0.7], 4, 0).unwrap().best_c, 0.7);
    }

    #[test]
    fn duplicates_are_removed() {
        let d = data(40, 2);
        let r = cross_validate(&d, &[1.0, 0.1, 1.0, 0.1], 3, 5).unwrap();
        let cs: Vec<f64> = r.folds.iter().map(|f| f.0).collect();
        assert_eq!(cs, vec![0.1, 1.0]);
        assert!(r.folds.iter().all(|f| f.1.len() == 3));
    }

    #[test]
    fn reproducible_under_seed() {
        let d = data(60, 3);
        let a = cross_validate(&d, &DEFAULT_C_GRID, 5, 42).unwrap();
        let b = cross_validate(&d, &DEFAULT_C_GRID, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<i8> = (0..50).map(|i| if i < 20 { 1 } else { -1 }).collect();
        let assign = stratified_folds(&labels, 5, 9);
        for k in 0..5 {
            let pos = (0..50).filter(|&i| assign[i] == k && labels[i] == 1).count();
            let neg = (0..50).filter(|&i| assign[i] == k && labels[i] == -1).count();
            assert_eq!((pos, neg), (4, 6));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = data(20, 4);
        assert!(cross_validate(&d, &[1.0], 1, 0).is_err());
        assert!(cross_validate(&d, &[], 3, 0).is_err());
        assert!(cross_validate(&d, &[-1.0], 3, 0).is_err());
        let lone = TrainingSet::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0]],
            vec![1, -1, -1],
        )
        .unwrap();
        assert!(cross_validate(&lone, &[1.0], 2, 0).is_err());
    }
}
