use ndarray::{Array1, ArrayView2, Axis};

use crate::error::{Error, Result};
pub use crate::nn::loss::{sdmse, smse};

/// Coefficient of determination averaged uniformly over target columns.
pub fn r2_score(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    if y_hat.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            y_hat.dim(),
            y.dim()
        )));
    }
    if y.nrows() < 2 {
        return Err(Error::Shape("R² needs at least two rows".into()));
    }
    let mean = y.mean_axis(Axis(0)).expect("non-empty");
    let mut total = 0.0;
    for j in 0..y.ncols() {
        let col = y.column(j);
        let ss_tot: f64 = col.iter().map(|v| (v - mean[j]).powi(2)).sum();
        if !(ss_tot > 0.0) {
            return Err(Error::DegenerateTarget(j));
        }
        let ss_res: f64 = col
            .iter()
            .zip(y_hat.column(j))
            .map(|(t, p)| (t - p).powi(2))
            .sum();
        total += 1.0 - ss_res / ss_tot;
    }
    Ok(total / y.ncols() as f64)
}

/// SMSE of each target column separately; their mean is the full SMSE.
pub fn per_param_smse(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array1<f64>> {
    crate::nn::loss::column_smse(y_hat, y)
}
