//! Per-sample RMSE metrics in normalized space.

use nalgebra::DMatrix;

/// Per-sample root mean squared error: `sqrt(mean_j (pred_j - true_j)^2)`
/// down each column.
pub fn rmse_per_sample(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Vec<f64> {
    assert_eq!(pred.shape(), truth.shape(), "rmse shapes differ");
    let d = pred.nrows() as f64;
    (0..pred.ncols())
        .map(|c| {
            let col = pred.column(c) - truth.column(c);
            (col.iter().map(|v| v * v).sum::<f64>() / d).sqrt()
        })
        .collect()
}

/// Median of a sample distribution (averages the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let a = DMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        assert!(rmse_per_sample(&a, &a).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_component_error() {
        // pred (0.3,0.5,0.5,0.5) vs true (0.5,...): sqrt(0.04/4) = 0.1
        let pred = DMatrix::from_column_slice(4, 1, &[0.3, 0.5, 0.5, 0.5]);
        let truth = DMatrix::from_element(4, 1, 0.5);
        let r = rmse_per_sample(&pred, &truth);
        assert!((r[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
