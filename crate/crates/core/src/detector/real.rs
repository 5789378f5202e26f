//! Scalar abstraction so the frozen forward pass can run in plain `f64` or in
//! double-double precision (used by the finite-difference oracle).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub(crate) trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`, about 106 bits of precision.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub(crate) struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        DoubleDouble::new(p, e + self.lo * b)
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, y: Self) -> Self {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        DoubleDouble::new(s, e + f)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, y: Self) -> Self {
        self + (-y)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, y: Self) -> Self {
        let (p, e) = two_prod(self.hi, y.hi);
        DoubleDouble::new(p, e + (self.hi * y.lo + self.lo * y.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, y: Self) -> Self {
        let q1 = self.hi / y.hi;
        let r = self - y.mul_f64(q1);
        let q2 = r.hi / y.hi;
        let r = r - y.mul_f64(q2);
        let q3 = r.hi / y.hi;
        DoubleDouble::new(q1, q2) + DoubleDouble::from_f64(q3)
    }
}

impl Real for DoubleDouble {
    fn from_f64(v: f64) -> Self {
        DoubleDouble { hi: v, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::zero();
        }
        let a = self.hi.sqrt();
        let (sq, sq_err) = two_prod(a, a);
        let resid = self - DoubleDouble::new(sq, sq_err);
        DoubleDouble::new(a, resid.hi / (2.0 * a))
    }

    fn exp(self) -> Self {
        // exp(x) = 2^k · exp(r)^(2^10) with x = k·ln2 + r·2^10.
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(k)).mul_f64(1.0 / 1024.0);
        let mut term = DoubleDouble::from_f64(1.0);
        let mut sum = DoubleDouble::from_f64(1.0);
        for n in 1..=20 {
            term = term * r / DoubleDouble::from_f64(f64::from(n));
            sum = sum + term;
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.mul_f64(2f64.powi(k as i32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_bits_lost_in_f64() {
        let one = DoubleDouble::from_f64(1.0);
        let tiny = DoubleDouble::from_f64(1e-20);
        let diff = (one + tiny) - one;
        assert!((diff.to_f64() - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn division_and_sqrt_invert_multiplication() {
        let x = DoubleDouble::from_f64(3.0);
        let third = DoubleDouble::from_f64(1.0) / x;
        let back = third * x - DoubleDouble::from_f64(1.0);
        assert!(back.to_f64().abs() < 1e-30);
        let r = DoubleDouble::from_f64(2.0).sqrt();
        assert!((r * r - DoubleDouble::from_f64(2.0)).to_f64().abs() < 1e-30);
    }

    #[test]
    fn exp_matches_f64_and_identities() {
        for v in [-30.0, -2.5, -1e-3, 0.0, 0.7, 5.0, 40.0] {
            let e = DoubleDouble::from_f64(v).exp().to_f64();
            assert!((e - f64::exp(v)).abs() <= 4.0 * f64::EPSILON * f64::exp(v), "{v}");
        }
        let a = DoubleDouble::from_f64(1.25);
        let b = DoubleDouble::from_f64(-0.5);
        let lhs = (a + b).exp();
        let rhs = a.exp() * b.exp();
        let rel = ((lhs - rhs) / lhs).to_f64().abs();
        assert!(rel < 1e-28, "{rel:e}");
    }
}
