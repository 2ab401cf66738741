//! Dense f32 arrays, deterministic randomness, and a finite-difference
//! gradient checker. Everything else in the crate builds on this module.
//!
//! Scalars are `f32`; every dot product and reduction accumulates in `f64`
//! and rounds once at the end, which keeps the gradient checks tight.

mod gradcheck;
mod rng;
mod tensor;

pub use gradcheck::grad_check;
pub use rng::Rng;
pub use tensor::{matmul, softmax, softmax_in_place, Tensor};

/// Dot product with f64 accumulation.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += f64::from(x) * f64::from(y);
    }
    acc
}

/// Sum with f64 accumulation.
#[inline]
pub fn sum_f64(xs: &[f32]) -> f64 {
    xs.iter().map(|&x| f64::from(x)).sum()
}
