use super::Tensor;
use crate::error::{EaeError, Result};

/// Squared Euclidean error summed over components and averaged over the batch.
///
/// Returns the loss and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(EaeError::dim(
            "mse_loss",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let b = pred.rows().max(1) as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let diff = *g - t;
        loss += diff * diff;
        *g = 2.0 * diff / b;
    }
    Ok((loss / b, grad))
}
