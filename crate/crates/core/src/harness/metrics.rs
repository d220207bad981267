use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sign(r)` with `0` at exact ties.
fn subgradient_sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same_shape(y_hat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if y_hat.dim() != y.dim() {
        return Err(Error::shape(format!("predictions {:?} vs targets {:?}", y_hat.dim(), y.dim())));
    }
    Ok(())
}

/// Mean absolute error over all `B·D` entries.
pub fn mae_loss(y_hat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_same_shape(y_hat, y)?;
    if y.is_empty() {
        return Err(Error::invalid("mae_loss of an empty batch"));
    }
    let sum = Zip::from(&y_hat).and(&y).fold(0.0, |acc, &a, &b| acc + (a - b).abs());
    Ok(sum / y.len() as f64)
}

/// Sum of `|ŷ − y|` divided by `denominator`, with its subgradient. Chunks
/// of one batch pass the batch's entry count so their parts add up to the
/// batch loss.
pub fn mae_part(y_hat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, denominator: f64) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(y.raw_dim());
    let mut sum = 0.0;
    Zip::from(&mut grad).and(&y_hat).and(&y).for_each(|g, &a, &b| {
        let r = a - b;
        sum += r.abs();
        *g = subgradient_sign(r) / denominator;
    });
    (sum / denominator, grad)
}

/// Error summary of one target series in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Accumulated squared residuals `Σ(ŷ − y)²`.
    pub sse: f64,
    /// Number of evaluated points `M`.
    pub count: usize,
}

/// RMSE and MAE of a prediction series.
pub fn metrics(y_hat: &[f64], y: &[f64]) -> Result<TargetMetrics> {
    if y_hat.len() != y.len() {
        return Err(Error::shape(format!("{} predictions for {} targets", y_hat.len(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::invalid("metrics of an empty series"));
    }
    let (mut sse, mut sae) = (0.0, 0.0);
    for (a, b) in y_hat.iter().zip(y) {
        let r = a - b;
        sse += r * r;
        sae += r.abs();
    }
    let m = y.len() as f64;
    Ok(TargetMetrics {
        rmse: (sse / m).sqrt(),
        mae: sae / m,
        sse,
        count: y.len(),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mae_examples() {
        let y = array![[0.0, 0.0]];
        assert_eq!(mae_loss(array![[1.0, -3.0]].view(), y.view()).unwrap(), 2.0);
        assert_eq!(mae_loss(y.view(), y.view()).unwrap(), 0.0);
        let off = y.mapv(|v| v - 0.75);
        assert_eq!(mae_loss(off.view(), y.view()).unwrap(), 0.75);
        assert!(mae_loss(array![[1.0]].view(), y.view()).is_err());
    }

    #[test]
    fn mae_subgradient() {
        let (loss, g) = mae_part(array![[1.0, 0.0, -2.0]].view(), array![[0.0, 0.0, 0.0]].view(), 3.0);
        assert_eq!(loss, 1.0);
        assert_eq!(g, array![[1.0 / 3.0, 0.0, -1.0 / 3.0]]);
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((m.rmse - 3.5355339059327378).abs() < 1e-12);
        assert_eq!(m.mae, 3.5);
        assert_eq!(m.sse, 25.0);
        let p = metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((p.rmse, p.mae), (0.0, 0.0));
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
