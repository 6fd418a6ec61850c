use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Scalar};

/// L2 norm over the gradients of all trainable parameters. Errors on the
/// first non-finite gradient, naming its parameter.
pub fn global_grad_norm<T: Scalar>(params: &ParamStore<T>) -> Result<f64> {
    let mut total = 0.0;
    for p in params.iter().filter(|p| p.trainable) {
        if !p.grad.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
        total += p.grad.sum_of_squares();
    }
    Ok(total.sqrt())
}

/// Rescales all gradients so their global norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(params: &mut ParamStore<T>, clip_norm: f64) -> Result<f64> {
    let norm = global_grad_norm(params)?;
    if norm > clip_norm {
        let scale = T::of_f64(clip_norm / norm);
        for p in params.iter_mut().filter(|p| p.trainable) {
            p.grad.scale_inplace(scale);
        }
    }
    Ok(norm)
}

/// Clips, then applies `p ← p − lr·g` to every trainable parameter. Returns
/// the pre-clip gradient norm.
pub fn sgd_step<T: Scalar>(params: &mut ParamStore<T>, lr: f64, clip_norm: f64) -> Result<f64> {
    let norm = clip_gradients(params, clip_norm)?;
    let lr = T::of_f64(lr);
    for p in params.iter_mut().filter(|p| p.trainable) {
        for (v, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
    }
    Ok(norm)
}
