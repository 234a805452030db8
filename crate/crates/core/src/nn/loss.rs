//! Relative-error regression losses.
//!
//! With residuals `r_ij = (y_ij - ŷ_ij) / y_ij` over `n` rows and `k` columns:
//!
//! - SMSE is the mean of `r_ij²` over all entries;
//! - SDMSE is the mean over columns of `sqrt(mean_i r_ij²)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    Smse,
    Sdmse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Smse => "smse",
            LossKind::Sdmse => "sdmse",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "smse" => Ok(LossKind::Smse),
            "sdmse" => Ok(LossKind::Sdmse),
            _ => Err(Error::Parse(format!("unknown loss {s:?}"))),
        }
    }
}

fn check(y_hat: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<()> {
    if y_hat.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            y_hat.dim(),
            y.dim()
        )));
    }
    if y.nrows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if let Some(((row, col), _)) = y.indexed_iter().find(|(_, &v)| v == 0.0) {
        return Err(Error::ZeroTarget { row, col });
    }
    Ok(())
}

fn relative_residuals(y_hat: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Array2<f64> {
    (y - y_hat) / y
}

/// Mean squared relative error of each target column.
pub fn column_smse(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array1<f64>> {
    check(&y_hat, &y)?;
    let r = relative_residuals(&y_hat, &y);
    Ok((&r * &r).mean_axis(Axis(0)).expect("non-empty"))
}

pub fn smse(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    check(&y_hat, &y)?;
    let r = relative_residuals(&y_hat, &y);
    Ok(r.mapv(|v| v * v).mean().expect("non-empty"))
}

pub fn sdmse(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let col = column_smse(y_hat, y)?;
    Ok(col.mapv(f64::sqrt).mean().expect("non-empty"))
}

impl LossKind {
    pub fn value(self, y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
        match self {
            LossKind::Smse => smse(y_hat, y),
            LossKind::Sdmse => sdmse(y_hat, y),
        }
    }

    /// Loss value and its gradient with respect to `y_hat`.
    ///
    /// SDMSE is not differentiable in a column whose residuals are all zero;
    /// that column contributes a zero subgradient.
    pub fn value_and_grad(
        self,
        y_hat: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Array2<f64>)> {
        check(&y_hat, &y)?;
        let (n, k) = y.dim();
        let r = relative_residuals(&y_hat, &y);
        match self {
            LossKind::Smse => {
                let value = r.mapv(|v| v * v).mean().expect("non-empty");
                // d/dŷ r² = -2 r / y
                let scale = -2.0 / (n * k) as f64;
                let grad = &r / &y * scale;
                Ok((value, grad))
            }
            LossKind::Sdmse => {
                let rms = (&r * &r).mean_axis(Axis(0)).expect("non-empty").mapv(f64::sqrt);
                let value = rms.mean().expect("non-empty");
                let mut grad = &r / &y;
                for (j, mut col) in grad.columns_mut().into_iter().enumerate() {
                    let s = rms[j];
                    let c = if s > 0.0 { -1.0 / (k as f64 * n as f64 * s) } else { 0.0 };
                    col *= c;
                }
                Ok((value, grad))
            }
        }
    }
}
