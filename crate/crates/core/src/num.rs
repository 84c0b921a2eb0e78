// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalar abstraction shared by every numeric routine in the crate.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal. Never fails for the IEEE types implementing this trait.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn of_u64(n: u64) -> Self {
        Self::from_u64(n).expect("integer representable in scalar type")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of_u64(n as u64)
    }

    /// Lossy widening used by persistence and reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `n!` for n <= 20 fits in a u64 exactly.
const EXACT_FACTORIAL_MAX: u64 = 20;

/// Natural log of `n!`.
///
/// Small arguments go through the exact integer factorial; larger ones use the
/// Stirling series for `ln Γ(n + 1)`, whose truncation error is below 1e-16 for
/// arguments past 20.
pub fn ln_factorial<F: Real>(n: u64) -> F {
    if n < 2 {
        return F::zero();
    }
    if n <= EXACT_FACTORIAL_MAX {
        let fact: u64 = (2..=n).product();
        return F::of_u64(fact).ln();
    }
    ln_gamma_stirling(F::of_u64(n + 1))
}

fn ln_gamma_stirling<F: Real>(x: F) -> F {
    let half = F::of(0.5);
    let inv = x.recip();
    let inv2 = inv * inv;
    // 1/(12x) - 1/(360x^3) + 1/(1260x^5) - 1/(1680x^7) + 1/(1188x^9)
    let series = inv
        * (F::of(1.0 / 12.0)
            - inv2
                * (F::of(1.0 / 360.0)
                    - inv2 * (F::of(1.0 / 1260.0) - inv2 * (F::of(1.0 / 1680.0) - inv2 * F::of(1.0 / 1188.0)))));
    (x - half) * x.ln() - x + half * F::TAU().ln() + series
}

/// `ln C(n, k)`; negative infinity when `k > n`.
pub fn ln_choose<F: Real>(n: u64, k: u64) -> F {
    if k > n {
        return F::neg_infinity();
    }
    ln_factorial::<F>(n) - ln_factorial::<F>(k) - ln_factorial::<F>(n - k)
}

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
#[inline]
pub fn xlogx<F: Real>(x: F) -> F {
    if x <= F::zero() {
        F::zero()
    } else {
        x * x.ln()
    }
}

/// Relative slack used whenever two computed statistics are compared for ties.
/// Purely relative so that tiny p-values keep their ordering.
pub(crate) fn tie_slack<F: Real>(reference: F) -> F {
    F::of(1e-9) * reference.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct_product() {
        let mut acc = 0.0f64;
        for n in 1..=170u64 {
            acc += (n as f64).ln();
            let got: f64 = ln_factorial(n);
            assert!((got - acc).abs() <= 1e-12 * acc.max(1.0), "n={n}: {got} vs {acc}");
        }
    }

    #[test]
    fn ln_factorial_stirling_boundary_is_continuous() {
        // 21! = 51090942171709440000 = 20! * 21
        let lhs: f64 = ln_factorial(21);
        let rhs = ln_factorial::<f64>(20) + 21f64.ln();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn ln_choose_small_values() {
        let v: f64 = ln_choose(10, 4);
        assert!((v - 210f64.ln()).abs() < 1e-13);
        assert_eq!(ln_choose::<f64>(3, 4), f64::NEG_INFINITY);
        assert_eq!(ln_choose::<f64>(5, 0), 0.0);
    }

    #[test]
    fn f32_and_f64_agree() {
        let a: f32 = ln_factorial(40);
        let b: f64 = ln_factorial(40);
        assert!(((a as f64) - b).abs() / b < 1e-6);
    }

    #[test]
    fn xlogx_zero_convention() {
        assert_eq!(xlogx(0.0f64), 0.0);
        assert!((xlogx(2.0f64) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }
}
