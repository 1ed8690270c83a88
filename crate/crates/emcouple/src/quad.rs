//! Adaptive Gauss–Kronrod quadrature (7–15 point rule).
//!
//! The competitor-rate constants are defined through one-dimensional
//! integrals of smooth integrands on short intervals, e.g.
//! `∫ u²(1 − e^{u−1/2})φ(u) du`. A 15-point Kronrod panel with the
//! embedded 7-point Gauss rule as error reference, bisected adaptively
//! with the tolerance distributed proportionally to panel width, resolves
//! these to near machine precision in a handful of panels.

use crate::{cast, Error, Real, Result};

/// Kronrod abscissas on `[0, 1]` (positive half, centre last) with the
/// 15-point Kronrod weight and, for the embedded Gauss points, the
/// 7-point Gauss weight.
const PANEL: [(f64, f64, Option<f64>); 8] = [
    (0.991_455_371_120_812_6, 2.293_532_201_052_922e-2, None),
    (
        0.949_107_912_342_758_5,
        6.309_209_262_997_855e-2,
        Some(0.129_484_966_168_869_7),
    ),
    (0.864_864_423_359_769_1, 1.047_900_103_222_502e-1, None),
    (
        0.741_531_185_599_394_4,
        1.406_532_597_155_259e-1,
        Some(0.279_705_391_489_276_7),
    ),
    (0.586_087_235_467_691_1, 1.690_047_266_392_679e-1, None),
    (
        0.405_845_151_377_397_2,
        1.903_505_780_647_854e-1,
        Some(0.381_830_050_505_118_9),
    ),
    (0.207_784_955_007_898_5, 2.044_329_400_752_989e-1, None),
    (0.0, 2.094_821_410_847_278e-1, Some(0.417_959_183_673_469_4)),
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult<F> {
    /// Best estimate of the integral.
    pub value: F,
    /// Conservative absolute error estimate (sum of `|K15 − G7|` over the
    /// accepted panels; typically orders of magnitude above the true
    /// error of the Kronrod values).
    pub abs_error: F,
    /// Number of panels in the final subdivision.
    pub panels: usize,
}

fn g7k15<F: Real>(f: &impl Fn(F) -> F, a: F, b: F) -> (F, F) {
    let half = cast::<F>(0.5);
    let c = (a + b) * half;
    let h = (b - a) * half;
    let mut k15 = F::zero();
    let mut g7 = F::zero();
    for &(x, wk, wg) in &PANEL {
        let (xk, wk) = (cast::<F>(x), cast::<F>(wk));
        let fsum = if x == 0.0 {
            f(c)
        } else {
            f(c - h * xk) + f(c + h * xk)
        };
        k15 = k15 + wk * fsum;
        if let Some(wg) = wg {
            g7 = g7 + cast::<F>(wg) * fsum;
        }
    }
    (k15 * h, g7 * h)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Panels whose `|K15 − G7|` discrepancy exceeds their width-proportional
/// share of the tolerance are bisected, up to a depth of 60 (at which
/// point the interval width is at the scale of floating-point spacing and
/// the tolerance is declared unreachable).
pub fn integrate<F: Real>(f: impl Fn(F) -> F, a: F, b: F, abs_tol: F) -> Result<QuadResult<F>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidConfig(
            "quadrature limits must be finite".into(),
        ));
    }
    if !(abs_tol > F::zero()) || !abs_tol.is_finite() {
        return Err(Error::InvalidConfig(
            "quadrature tolerance must be positive and finite".into(),
        ));
    }
    if a == b {
        return Ok(QuadResult {
            value: F::zero(),
            abs_error: F::zero(),
            panels: 0,
        });
    }
    if a > b {
        let mut r = integrate(f, b, a, abs_tol)?;
        r.value = -r.value;
        return Ok(r);
    }

    let width = b - a;
    let mut stack = vec![(a, b, 0u32)];
    let mut value = F::zero();
    let mut err = F::zero();
    let mut panels = 0usize;
    let half = cast::<F>(0.5);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (k15, g7) = g7k15(&f, lo, hi);
        let discrepancy = (k15 - g7).abs();
        let share = abs_tol * ((hi - lo) / width);
        if discrepancy <= share || (hi - lo) <= F::zero() {
            value = value + k15;
            err = err + discrepancy;
            panels += 1;
        } else if depth >= 60 {
            return Err(Error::Inconsistency(format!(
                "quadrature tolerance not reached on [{lo}, {hi}]"
            )));
        } else {
            let mid = (lo + hi) * half;
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(QuadResult {
        value,
        abs_error: err,
        panels,
    })
}
