use ndarray::{ArrayView2, Zip};

use super::EvalError;

fn check(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<(), EvalError> {
    if pred.shape() != target.shape() {
        return Err(EvalError::Shape(format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(EvalError::Shape("no forecasts to score".into()));
    }
    Ok(())
}

/// Mean of `|pred - target|` over all `N x F` entries.
pub fn mae(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64, EvalError> {
    check(&pred, &target)?;
    let mut sum = 0.0;
    Zip::from(&pred).and(&target).for_each(|p, t| sum += (p - t).abs());
    Ok(sum / pred.len() as f64)
}

/// Mean of `(pred - target)^2` over all `N x F` entries.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64, EvalError> {
    check(&pred, &target)?;
    let mut sum = 0.0;
    Zip::from(&pred).and(&target).for_each(|p, t| sum += (p - t) * (p - t));
    Ok(sum / pred.len() as f64)
}

pub fn rmse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64, EvalError> {
    mse(pred, target).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn small_cases() {
        let z = array![[0.0, 0.0]];
        assert_eq!(mae(z.view(), z.view()).unwrap(), 0.0);
        assert_eq!(mse(z.view(), z.view()).unwrap(), 0.0);
        assert_eq!(mae(array![[1.0, 2.0]].view(), z.view()).unwrap(), 1.5);
        let ones = array![[1.0, 1.0]];
        assert_eq!(mse(ones.view(), z.view()).unwrap(), 1.0);
        assert_eq!(rmse(ones.view(), z.view()).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = array![[1.0, 2.0]];
        let b = array![[1.0], [2.0]];
        assert!(matches!(mae(a.view(), b.view()), Err(EvalError::Shape(_))));
        assert!(mse(a.view(), b.view()).is_err());
    }
}
