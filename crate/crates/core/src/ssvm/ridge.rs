//! Closed-form ridge regression with a bias column.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeRegressor {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl RidgeRegressor {
    /// Raw linear response.
    pub fn response(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::argument(format!(
                "row of length {} for a {}-feature regressor",
                row.len(),
                self.weights.len()
            )));
        }
        Ok(self.bias + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
    }

    /// Prediction clamped to `[0, 1]`.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        Ok(self.response(row)?.clamp(0.0, 1.0))
    }
}

/// Solves `(XᵀX + λI) β = Xᵀy` where `X` has a trailing column of ones.
/// The penalty applies to the bias too.
pub fn train_ridge(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<RidgeRegressor> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::argument(format!("ridge penalty must be positive, got {lambda}")));
    }
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::argument(format!("{} rows and {} targets", rows.len(), targets.len())));
    }
    let d = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::argument(format!("ragged rows: {} vs {d}", r.len())));
    }
    let x = DMatrix::from_fn(rows.len(), d + 1, |i, j| if j < d { rows[i][j] } else { 1.0 });
    let y = DVector::from_column_slice(targets);
    let gram = x.transpose() * &x + DMatrix::identity(d + 1, d + 1) * lambda;
    let rhs = x.transpose() * y;
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge normal equations are not positive definite".into()))?
        .solve(&rhs);
    Ok(RidgeRegressor {
        weights: beta.as_slice()[..d].to_vec(),
        bias: beta[d],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_targets() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05]).collect();
        let r = train_ridge(&rows, &[0.5; 10], 1e-8).unwrap();
        for row in &rows {
            assert!((r.predict(row).unwrap() - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn exact_linear_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let t: Vec<f64> = rows.iter().map(|r| 0.2 + 0.3 * r[0] - 0.1 * r[1] + 0.05 * r[2]).collect();
        let m = train_ridge(&rows, &t, 1e-8).unwrap();
        for (r, y) in rows.iter().zip(&t) {
            assert!((m.response(r).unwrap() - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn clamps_and_validates() {
        let m = RidgeRegressor { weights: vec![10.0], bias: 0.0 };
        assert_eq!(m.predict(&[1.0]).unwrap(), 1.0);
        assert_eq!(m.predict(&[-1.0]).unwrap(), 0.0);
        assert!(m.predict(&[1.0, 2.0]).is_err());
        assert!(train_ridge(&[vec![1.0]], &[1.0], 0.0).is_err());
        assert!(train_ridge(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0], 1.0).is_err());
    }
}
