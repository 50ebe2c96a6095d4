//! K-fold cross-fitting: every labeled unit is scored by a model trained
//! without its fold; unlabeled units get the average of the K fold models.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::{fmt_num, parse_error};
use crate::learners::LearnerSpec;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    /// Seeded Fisher–Yates shuffle of `0..n`, cut into `k` contiguous chunks
    /// whose sizes differ by at most one (larger chunks first).
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 || k > n {
            return Err(Error::invalid(format!(
                "fold count must satisfy 2 <= K <= n, got K = {k}, n = {n}"
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (base, extra) = (n / k, n % k);
        let mut fold_of = vec![0; n];
        let mut pos = 0;
        for fold in 0..k {
            let size = base + usize::from(fold < extra);
            for &unit in &perm[pos..pos + size] {
                fold_of[unit] = fold;
            }
            pos += size;
        }
        Ok(FoldAssignment { fold_of, k, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    /// Zero-based fold of labeled unit `j`.
    pub fn fold_of(&self, j: usize) -> usize {
        self.fold_of[j]
    }

    /// Sorted labeled indices in `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.fold_of[j] == fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Predictions for every unit of the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    /// Out-of-fold prediction for each labeled unit.
    pub labeled: DVector<f64>,
    /// Aggregate prediction for each unlabeled unit.
    pub unlabeled: DVector<f64>,
    /// Fold count, unknown for imported predictions.
    pub k: Option<usize>,
    pub learner: String,
}

impl PredictionSet {
    pub fn new(
        labeled: DVector<f64>,
        unlabeled: DVector<f64>,
        k: Option<usize>,
        learner: impl Into<String>,
    ) -> Result<Self> {
        if labeled.iter().chain(unlabeled.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("predictions contain non-finite values".into()));
        }
        Ok(PredictionSet {
            labeled,
            unlabeled,
            k,
            learner: learner.into(),
        })
    }

    /// Labeled predictions followed by unlabeled predictions: one value per
    /// unit of the `N`-unit frame.
    pub fn unified(&self) -> DVector<f64> {
        let mut all = Vec::with_capacity(self.labeled.len() + self.unlabeled.len());
        all.extend_from_slice(self.labeled.as_slice());
        all.extend_from_slice(self.unlabeled.as_slice());
        DVector::from_vec(all)
    }

    pub fn check_aligned(&self, data: &Dataset) -> Result<()> {
        if self.labeled.len() != data.n() || self.unlabeled.len() != data.n_unlabeled() {
            return Err(Error::invalid(format!(
                "predictions cover {} labeled and {} unlabeled units, data has {} and {}",
                self.labeled.len(),
                self.unlabeled.len(),
                data.n(),
                data.n_unlabeled()
            )));
        }
        Ok(())
    }

    /// Writes `unit_id,set,prediction`; ids are zero-based within each set.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit_id", "set", "prediction"])?;
        for (set, values) in [("labeled", &self.labeled), ("unlabeled", &self.unlabeled)] {
            for (i, v) in values.iter().enumerate() {
                w.write_record([i.to_string(), set.to_string(), fmt_num(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `unit_id,set,prediction` file. Rows may come in any order but
    /// each set's ids must be exactly `0..size`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            unit_id: usize,
            set: String,
            prediction: f64,
        }
        let file = File::open(path).map_err(|e| parse_error(path, format!("cannot open: {e}")))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let mut lab: Vec<Option<f64>> = Vec::new();
        let mut unl: Vec<Option<f64>> = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_error(path, format!("line {line}: {e}")))?;
            let slots = match row.set.to_ascii_lowercase().as_str() {
                "labeled" => &mut lab,
                "unlabeled" => &mut unl,
                other => {
                    return Err(parse_error(path, format!("line {line}: unknown set {other:?}")));
                }
            };
            if slots.len() <= row.unit_id {
                slots.resize(row.unit_id + 1, None);
            }
            if slots[row.unit_id].replace(row.prediction).is_some() {
                return Err(parse_error(
                    path,
                    format!("line {line}: duplicate {} unit_id {}", row.set, row.unit_id),
                ));
            }
        }
        let finish = |slots: Vec<Option<f64>>, set: &str| -> Result<DVector<f64>> {
            let values: Option<Vec<f64>> = slots.iter().copied().collect();
            values
                .map(DVector::from_vec)
                .ok_or_else(|| parse_error(path, format!("{set} unit_ids are not contiguous from 0")))
        };
        let labeled = finish(lab, "labeled")?;
        let unlabeled = finish(unl, "unlabeled")?;
        PredictionSet::new(labeled, unlabeled, None, "external")
            .map_err(|e| parse_error(path, e.to_string()))
    }
}

/// Held-out unit indices, their predictions, and the fold model's
/// predictions for the unlabeled units.
type FoldFit = (Vec<usize>, DVector<f64>, DVector<f64>);

/// Cross-fitted predictions. Fold fits run in parallel; results are combined
/// in fold order so the output does not depend on scheduling.
pub fn cross_predict(
    data: &Dataset,
    folds: &FoldAssignment,
    learner: &LearnerSpec,
) -> Result<PredictionSet> {
    if folds.n() != data.n() {
        return Err(Error::invalid(format!(
            "fold assignment covers {} units but the labeled sample has {}",
            folds.n(),
            data.n()
        )));
    }
    let per_fold: Vec<Result<FoldFit>> = (0..folds.k())
        .into_par_iter()
        .map(|fold| {
            let held: Vec<usize> = folds.members(fold);
            let train: Vec<usize> = (0..data.n()).filter(|&j| folds.fold_of(j) != fold).collect();
            let x_train = data.labeled_x().select_rows(train.iter());
            let y_train = data.labeled_y().select_rows(train.iter());
            let wrap = |e| Error::Fold {
                fold: fold + 1,
                source: Box::new(e),
            };
            let model = learner.fit(&x_train, &y_train).map_err(wrap)?;
            let held_pred = model
                .predict(&data.labeled_x().select_rows(held.iter()))
                .map_err(wrap)?;
            let unl_pred = model.predict(data.unlabeled_x()).map_err(wrap)?;
            Ok((held, held_pred, unl_pred))
        })
        .collect();

    let mut labeled = DVector::zeros(data.n());
    let mut sum = DVector::zeros(data.n_unlabeled());
    for result in per_fold {
        let (held, held_pred, unl_pred) = result?;
        for (&j, &p) in held.iter().zip(held_pred.iter()) {
            labeled[j] = p;
        }
        sum += unl_pred;
    }
    let unlabeled = sum / folds.k() as f64;
    PredictionSet::new(labeled, unlabeled, Some(folds.k()), learner.to_string())
}

/// Full-sample fit used for both labeled and unlabeled units (no cross-fitting).
pub fn full_sample_predict(data: &Dataset, learner: &LearnerSpec) -> Result<PredictionSet> {
    let model = learner.fit(data.labeled_x(), data.labeled_y())?;
    PredictionSet::new(
        model.predict(data.labeled_x())?,
        model.predict(data.unlabeled_x())?,
        None,
        learner.to_string(),
    )
}
