//! Minimal matrix-level reverse-mode differentiation in `f64`.

mod mat;
mod params;
mod tape;

pub use mat::{softmax_in_place, Mat};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var};
