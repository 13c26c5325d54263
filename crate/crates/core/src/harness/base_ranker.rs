//! Stand-in base ranker: ridge regression of the graded label on the raw
//! features, with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};

use crate::data::RawQuery;
use crate::error::{Error, Result};

pub const RIDGE_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearScorer {
    /// Fits on every item of `queries`.
    pub fn fit(queries: &[RawQuery], ridge: f64) -> Result<Self> {
        let rows: Vec<(&[f64], f64)> = queries
            .iter()
            .flat_map(|q| q.items.iter().map(|it| (it.features.as_slice(), it.label)))
            .collect();
        if rows.is_empty() {
            return Err(Error::arg("base ranker needs labelled training items"));
        }
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(Error::arg(format!("ridge penalty {ridge} must be positive")));
        }
        let m = rows.iter().map(|(f, _)| f.len()).max().unwrap_or(0);
        let n = rows.len();
        let x = DMatrix::from_fn(n, m, |r, c| rows[r].0.get(c).copied().unwrap_or(0.0));
        let y = DVector::from_iterator(n, rows.iter().map(|(_, l)| *l));
        let x_mean = x.row_mean();
        let y_mean = y.mean();
        let mut xc = x;
        for mut row in xc.row_iter_mut() {
            row -= &x_mean;
        }
        let yc = y.add_scalar(-y_mean);
        let gram = xc.transpose() * &xc + DMatrix::identity(m, m) * ridge;
        let rhs = xc.transpose() * yc;
        let w = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric {
                param: "base ranker".into(),
                detail: "regularized normal equations are not positive definite".into(),
            })?
            .solve(&rhs);
        let intercept = y_mean - (x_mean * &w)[(0, 0)];
        Ok(Self {
            weights: w.iter().copied().collect(),
            intercept,
        })
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    /// Scores of every item, per query.
    pub fn score_queries(&self, queries: &[RawQuery]) -> Vec<Vec<f64>> {
        queries
            .iter()
            .map(|q| q.items.iter().map(|it| self.score(&it.features)).collect())
            .collect()
    }
}
