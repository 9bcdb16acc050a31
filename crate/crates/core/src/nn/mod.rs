//! Small differentiable function approximators.

mod adam;
mod mlp;
mod policy;
pub mod tape;

pub use adam::Adam;
pub use mlp::Mlp;
pub use policy::{SquashedGaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use tape::{Gradients, Tape, Var};

/// Numerically stable `ln sum exp`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
