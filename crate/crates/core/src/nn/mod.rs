//! Fully connected networks, Adam, squashed Gaussian heads and weight files.

mod adam;
pub mod check;
mod gaussian;
mod io;
mod mlp;

pub use adam::Adam;
pub use gaussian::{log_one_minus_tanh_sq, mean_action, SquashedSample};
pub use io::{WEIGHT_MAGIC, WEIGHT_VERSION};
pub use mlp::{param_count, sigmoid, Activation, ForwardCache, Head, Mlp, LOG_STD_MAX, LOG_STD_MIN};
