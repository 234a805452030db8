use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Ridge added to the normal equations when they are near-singular.
pub const RIDGE: f64 = 1e-8;

/// Smallest accepted ratio of squared Cholesky pivots before falling back to
/// the ridge system.
const CONDITION_FLOOR: f64 = 1e-12;

/// `ŷ = x · coef + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Inputs × outputs.
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
    /// Whether the ridge fallback was needed.
    pub regularized: bool,
}

impl LinearModel {
    /// Ordinary least squares through the normal equations of the centered
    /// data, so the intercept is not regularized.
    pub fn fit(x: &Array2<f64>, y: &Array2<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if y.nrows() != n {
            return Err(Error::Shape(format!("{n} inputs vs {} targets", y.nrows())));
        }
        if n <= p + 1 {
            return Err(Error::InvalidDataset(format!(
                "linear fit needs more than {} rows, got {n}",
                p + 1
            )));
        }
        let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
        let y_mean = y.mean_axis(Axis(0)).expect("non-empty");
        let xc = x - &x_mean;
        let yc = y - &y_mean;
        let gram = xc.t().dot(&xc);
        let rhs = xc.t().dot(&yc);

        let gram_n = DMatrix::from_fn(p, p, |i, j| gram[[i, j]]);
        let (coef, regularized) = match well_conditioned_cholesky(gram_n.clone()) {
            Some(chol) => (solve(&chol, &rhs), false),
            None => {
                let scale = (gram_n.trace() / p as f64).max(1.0);
                let mut ridge = gram_n;
                for i in 0..p {
                    ridge[(i, i)] += RIDGE * scale;
                }
                let chol = ridge.cholesky().ok_or_else(|| {
                    Error::Singular("normal equations singular even with ridge".into())
                })?;
                (solve(&chol, &rhs), true)
            }
        };
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite coefficients".into()));
        }
        let intercept = &y_mean - &x_mean.dot(&coef);
        Ok(LinearModel {
            coef,
            intercept,
            regularized,
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.coef) + &self.intercept
    }
}

fn well_conditioned_cholesky(m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = m.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    (hi > 0.0 && (lo * lo) / (hi * hi) > CONDITION_FLOOR).then_some(chol)
}

fn solve(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, rhs: &Array2<f64>) -> Array2<f64> {
    let (p, d) = rhs.dim();
    let mut out = Array2::zeros((p, d));
    for j in 0..d {
        let b = DVector::from_iterator(p, rhs.column(j).iter().copied());
        let sol = chol.solve(&b);
        for i in 0..p {
            out[[i, j]] = sol[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn features(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        Array2::from_shape_fn((n, 6), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn recovers_exact_linear_map() {
        let x = features(200, 1);
        let a = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 + 1.0) * 0.3 - j as f64);
        let b = Array1::from(vec![5.0, -1.0, 0.25]);
        let y = x.dot(&a) + &b;
        let m = LinearModel::fit(&x, &y).unwrap();
        assert!(!m.regularized);
        for (got, want) in m.coef.iter().zip(a.iter()) {
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
        }
        for (got, want) in m.intercept.iter().zip(b.iter()) {
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
        }
    }

    #[test]
    fn constant_targets_give_zero_coefficients() {
        let x = features(50, 2);
        let y = Array2::from_shape_fn((50, 2), |(_, j)| 3.0 + j as f64);
        let m = LinearModel::fit(&x, &y).unwrap();
        assert!(m.coef.iter().all(|&c| c == 0.0));
        assert_eq!(m.intercept.to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn duplicated_column_uses_ridge() {
        let mut x = features(80, 3);
        let c0 = x.column(0).to_owned();
        x.column_mut(4).assign(&c0);
        let y = Array2::from_shape_fn((80, 1), |(i, _)| 2.0 * x[[i, 0]] - x[[i, 1]] + 1.0);
        let m = LinearModel::fit(&x, &y).unwrap();
        assert!(m.regularized);
        let pred = m.predict(&x);
        assert!(pred.iter().all(|v| v.is_finite()));
        let max_err = (&pred - &y).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(max_err < 1e-6, "{max_err}");
    }

    #[test]
    fn too_few_rows() {
        let x = features(7, 4);
        let y = Array2::ones((7, 1));
        assert!(LinearModel::fit(&x, &y).is_err());
    }
}
