//! Standard normal distribution functions.
//!
//! The convergence bounds evaluate `Φ` deep in the left tail (merge
//! probabilities `2Φ(−t/(2√Ξ))` with `t` up to a small-set diameter), so
//! the CDF is computed through the complementary error function,
//!
//! ```text
//!     Φ(t) = erfc(−t/√2) / 2 ,
//! ```
//!
//! which keeps full relative precision down to the underflow threshold
//! (`t ≈ −37.5` at f64). Minorization constants as small as `10⁻³⁰⁰`
//! still produce finite, correctly ordered rates downstream.

use crate::{cast, Real};

/// Standard normal CDF `Φ(t) = erfc(−t/√2)/2`.
pub fn normal_cdf<F: Real>(t: F) -> F {
    let half = cast::<F>(0.5);
    let inv_sqrt2 = cast::<F>(std::f64::consts::FRAC_1_SQRT_2);
    half * (-t * inv_sqrt2).erfc()
}

/// Standard normal density `φ(t) = e^{−t²/2}/√(2π)`.
pub fn normal_pdf<F: Real>(t: F) -> F {
    let half = cast::<F>(0.5);
    let inv_sqrt_2pi = cast::<F>(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-half * t * t).exp()
}
