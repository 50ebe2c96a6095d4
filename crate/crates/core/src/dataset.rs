//! Labeled and unlabeled samples drawn from one finite frame of `N` units.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{parse_error, read_numeric_csv, NumericTable};

/// `n` labeled pairs plus `N_u = N − n` covariate-only units. Sums "over all
/// `N` units" concatenate the labeled and unlabeled covariates.
#[derive(Clone, Debug)]
pub struct Dataset {
    labeled_x: DMatrix<f64>,
    labeled_y: DVector<f64>,
    unlabeled_x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(
        labeled_x: DMatrix<f64>,
        labeled_y: DVector<f64>,
        unlabeled_x: DMatrix<f64>,
    ) -> Result<Self> {
        if labeled_x.nrows() != labeled_y.len() {
            return Err(Error::invalid(format!(
                "{} labeled covariate rows but {} outcomes",
                labeled_x.nrows(),
                labeled_y.len()
            )));
        }
        if labeled_y.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 labeled units, got {}",
                labeled_y.len()
            )));
        }
        if unlabeled_x.nrows() == 0 {
            return Err(Error::invalid("need at least one unlabeled unit"));
        }
        if labeled_x.ncols() != unlabeled_x.ncols() {
            return Err(Error::invalid(format!(
                "labeled data has {} covariates but unlabeled data has {}",
                labeled_x.ncols(),
                unlabeled_x.ncols()
            )));
        }
        let all = labeled_x.iter().chain(labeled_y.iter()).chain(unlabeled_x.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset {
            labeled_x,
            labeled_y,
            unlabeled_x,
        })
    }

    pub fn labeled_x(&self) -> &DMatrix<f64> {
        &self.labeled_x
    }

    pub fn labeled_y(&self) -> &DVector<f64> {
        &self.labeled_y
    }

    pub fn unlabeled_x(&self) -> &DMatrix<f64> {
        &self.unlabeled_x
    }

    /// Labeled sample size `n`.
    pub fn n(&self) -> usize {
        self.labeled_y.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled_x.nrows()
    }

    /// Frame size `N = n + N_u`.
    pub fn population(&self) -> usize {
        self.n() + self.n_unlabeled()
    }

    /// Label fraction `n / N`.
    pub fn fraction(&self) -> f64 {
        self.n() as f64 / self.population() as f64
    }

    pub fn dim(&self) -> usize {
        self.labeled_x.ncols()
    }

    /// Reads a labeled file with covariate columns followed by the outcome
    /// column `y`, and an unlabeled file with the same covariate columns.
    pub fn from_csv(labeled: &Path, unlabeled: &Path) -> Result<Self> {
        let lab = read_numeric_csv(labeled)?;
        let unl = read_numeric_csv(unlabeled)?;
        let y_col = lab
            .column_index("y")
            .ok_or_else(|| parse_error(labeled, "no outcome column named \"y\""))?;
        let covariates: Vec<&String> = lab
            .header
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != y_col)
            .map(|(_, h)| h)
            .collect();
        let unl_names: Vec<&String> = unl.header.iter().collect();
        if covariates.len() != unl_names.len()
            || covariates
                .iter()
                .zip(&unl_names)
                .any(|(a, b)| !a.eq_ignore_ascii_case(b))
        {
            return Err(parse_error(
                unlabeled,
                format!("covariate columns {unl_names:?} do not match labeled columns {covariates:?}"),
            ));
        }
        let cols: Vec<usize> = (0..lab.ncols()).filter(|&c| c != y_col).collect();
        let all_unl: Vec<usize> = (0..unl.ncols()).collect();
        let y = DVector::from_iterator(lab.rows.len(), lab.rows.iter().map(|r| r[y_col]));
        Dataset::new(table_matrix(&lab, &cols), y, table_matrix(&unl, &all_unl))
    }
}

/// Rows of `table` restricted to `cols`, as a matrix.
pub fn table_matrix(table: &NumericTable, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(table.rows.len(), cols.len(), |i, c| table.rows[i][cols[c]])
}

/// Splits a fully labeled table by drawing `n_labeled` rows uniformly without
/// replacement; the remaining rows lose their outcome.
///
/// `exclude` names extra columns that are neither covariate nor outcome.
/// Labeled rows keep their original file order, as do unlabeled rows.
pub fn split_table(
    table: &NumericTable,
    response: &str,
    exclude: &[String],
    n_labeled: usize,
    seed: u64,
) -> Result<Dataset> {
    let y_col = table
        .column_index(response)
        .ok_or_else(|| parse_error(&table.path, format!("no column named {response:?}")))?;
    let mut skip = vec![y_col];
    for name in exclude {
        let c = table
            .column_index(name)
            .ok_or_else(|| parse_error(&table.path, format!("no column named {name:?}")))?;
        skip.push(c);
    }
    let cols: Vec<usize> = (0..table.ncols()).filter(|c| !skip.contains(c)).collect();
    if cols.is_empty() {
        return Err(parse_error(&table.path, "no covariate columns left"));
    }
    let total = table.rows.len();
    if n_labeled < 2 || n_labeled >= total {
        return Err(Error::invalid(format!(
            "labeled size must lie in [2, {}), got {n_labeled}",
            total
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_labeled = vec![false; total];
    for &i in &order[..n_labeled] {
        is_labeled[i] = true;
    }
    let lab: Vec<usize> = (0..total).filter(|&i| is_labeled[i]).collect();
    let unl: Vec<usize> = (0..total).filter(|&i| !is_labeled[i]).collect();
    let pick = |rows: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, c| table.rows[rows[i]][cols[c]]);
    let y = DVector::from_iterator(lab.len(), lab.iter().map(|&i| table.rows[i][y_col]));
    Dataset::new(pick(&lab), y, pick(&unl))
}
