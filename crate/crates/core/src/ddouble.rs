//! Double-double ("software extended precision") real and complex numbers.
//!
//! A [`Dd`] carries an unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`,
//! giving roughly 31 significant decimal digits. Only the operations needed
//! by the expression evaluator are provided: field arithmetic, `sqrt`, `exp`,
//! `ln`, `sin`/`cos` and `atan2`, plus a complex type built on top of them.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const PI: Dd = Dd { hi: std::f64::consts::PI, lo: 1.2246467991473532e-16 };
const FRAC_PI_2: Dd = Dd { hi: std::f64::consts::FRAC_PI_2, lo: 6.123233995736766e-17 };
const LN_2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn pi() -> Self {
        PI
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn scale(self, k: f64) -> Self {
        // exact for powers of two
        Dd { hi: self.hi * k, lo: self.lo * k }
    }

    pub fn powu(self, mut n: u32) -> Self {
        let mut base = self;
        let mut acc = Dd::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Dd::ZERO } else { Dd::new(f64::NAN) };
        }
        let s = self.hi.sqrt();
        let (p, e) = two_prod(s, s);
        let r = (self - Dd { hi: p, lo: e }).hi;
        let (h, l) = quick_two_sum(s, r / (2.0 * s));
        Dd { hi: h, lo: l }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.7 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN_2.hi).round();
        let r = (self - LN_2 * Dd::new(k)).scale(1.0 / 1024.0);
        // expm1 by Taylor series on the reduced argument
        let mut term = r;
        let mut sum = r;
        for i in 2..=14 {
            term = term * r / Dd::new(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + s)^2 - 1 = 2s + s^2 keeps the small part exact
        for _ in 0..10 {
            sum = sum.scale(2.0) + sum * sum;
        }
        let e = sum + Dd::ONE;
        let half = (k / 2.0).trunc();
        e.scale(2f64.powi(half as i32)).scale(2f64.powi((k - half) as i32))
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::new(if self.hi == 0.0 { f64::NEG_INFINITY } else { f64::NAN });
        }
        let mut y = Dd::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    /// Returns `(sin x, cos x)`.
    pub fn sin_cos(self) -> (Self, Self) {
        let k = (self.hi / FRAC_PI_2.hi).round();
        let r = self - FRAC_PI_2 * Dd::new(k);
        let r2 = r * r;
        let mut s = r;
        let mut c = Dd::ONE;
        let mut ts = r;
        let mut tc = Dd::ONE;
        for i in 1..=16 {
            let a = (2 * i) as f64;
            ts = -(ts * r2) / Dd::new(a * (a + 1.0));
            tc = -(tc * r2) / Dd::new((a - 1.0) * a);
            s = s + ts;
            c = c + tc;
            if ts.hi.abs() < 1e-36 && tc.hi.abs() < 1e-36 {
                break;
            }
        }
        match (k as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    pub fn atan2(y: Dd, x: Dd) -> Dd {
        if y.hi == 0.0 && x.hi == 0.0 {
            return Dd::ZERO;
        }
        let mut a = Dd::new(y.hi.atan2(x.hi));
        for _ in 0..2 {
            let (s, c) = a.sin_cos();
            let num = y * c - x * s;
            let den = x * c + y * s;
            a = a + num / den;
        }
        a
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() {
            return Dd::new(q1);
        }
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (h, l) = quick_two_sum(q1, q2);
        Dd { hi: h, lo: l } + Dd::new(q3)
    }
}

/// Complex number with double-double parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdComplex {
    pub re: Dd,
    pub im: Dd,
}

impl DdComplex {
    pub fn new(re: Dd, im: Dd) -> Self {
        DdComplex { re, im }
    }

    pub fn norm(self) -> Dd {
        (self.re * self.re + self.im * self.im).sqrt()
    }

    pub fn exp(self) -> Self {
        let m = self.re.exp();
        let (s, c) = self.im.sin_cos();
        DdComplex::new(m * c, m * s)
    }

    pub fn ln(self) -> Self {
        DdComplex::new(self.norm().ln(), Dd::atan2(self.im, self.re))
    }

    pub fn sqrt(self) -> Self {
        let r = self.norm();
        if r.hi == 0.0 {
            return DdComplex::default();
        }
        let t = ((r + self.re.abs()).scale(0.5)).sqrt();
        if self.re.hi >= 0.0 {
            DdComplex::new(t, self.im / t.scale(2.0))
        } else {
            let im = if self.im.hi < 0.0 { -t } else { t };
            DdComplex::new(self.im.abs() / t.scale(2.0), im)
        }
    }

    /// Principal arctangent, `(i/2) (ln(1 - i w) - ln(1 + i w))`.
    pub fn atan(self) -> Self {
        let one = DdComplex::new(Dd::ONE, Dd::ZERO);
        let iw = DdComplex::new(-self.im, self.re);
        let d = (one - iw).ln() - (one + iw).ln();
        DdComplex::new(-d.im.scale(0.5), d.re.scale(0.5))
    }

    pub fn powi(self, n: i32) -> Self {
        let mut base = self;
        let mut k = n.unsigned_abs();
        let mut acc = DdComplex::new(Dd::ONE, Dd::ZERO);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        if n < 0 {
            DdComplex::new(Dd::ONE, Dd::ZERO) / acc
        } else {
            acc
        }
    }
}

impl From<Complex64> for DdComplex {
    fn from(c: Complex64) -> Self {
        DdComplex::new(Dd::new(c.re), Dd::new(c.im))
    }
}

impl From<DdComplex> for Complex64 {
    fn from(c: DdComplex) -> Self {
        Complex64::new(c.re.to_f64(), c.im.to_f64())
    }
}

impl Neg for DdComplex {
    type Output = Self;
    fn neg(self) -> Self {
        DdComplex::new(-self.re, -self.im)
    }
}

impl Add for DdComplex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        DdComplex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for DdComplex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        DdComplex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for DdComplex {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        DdComplex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl Div for DdComplex {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // Smith's algorithm avoids spurious overflow
        if o.re.hi.abs() >= o.im.hi.abs() {
            let r = o.im / o.re;
            let d = o.re + o.im * r;
            DdComplex::new((self.re + self.im * r) / d, (self.im - self.re * r) / d)
        } else {
            let r = o.re / o.im;
            let d = o.re * r + o.im;
            DdComplex::new((self.re * r + self.im) / d, (self.im * r - self.re) / d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn arithmetic_recovers_lost_bits() {
        let third = Dd::ONE / Dd::new(3.0);
        let back = third * Dd::new(3.0) - Dd::ONE;
        assert!(back.hi.abs() < 1e-31);
        // 1 + 1e-20 survives in double-double
        let x = Dd::ONE + Dd::new(1e-20) - Dd::ONE;
        assert!((x.hi - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn transcendental_functions_match_f64() {
        for &x in &[0.1, 0.5, 1.0, 2.5, -3.7, 10.0, 50.0] {
            assert!(close(Dd::new(x).exp(), x.exp(), 1e-15), "exp {x}");
            let (s, c) = Dd::new(x).sin_cos();
            assert!((s.to_f64() - x.sin()).abs() < 1e-15, "sin {x}");
            assert!((c.to_f64() - x.cos()).abs() < 1e-15, "cos {x}");
        }
        for &x in &[1e-3, 0.3, 1.0, 7.0, 1e5] {
            assert!(close(Dd::new(x).ln(), x.ln(), 1e-15), "ln {x}");
            assert!(close(Dd::new(x).sqrt(), x.sqrt(), 1e-15), "sqrt {x}");
        }
        assert!((Dd::atan2(Dd::ONE, Dd::new(-1.0)).to_f64() - 0.75 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn identities_hold_to_extended_precision() {
        let x = Dd::new(0.7) / Dd::new(3.0);
        let r = x.exp().ln() - x;
        assert!(r.hi.abs() < 1e-29, "{:?}", r);
        let (s, c) = x.sin_cos();
        let one = s * s + c * c - Dd::ONE;
        assert!(one.hi.abs() < 1e-30);
        let q = x.sqrt();
        assert!((q * q - x).hi.abs() < 1e-31);
        // atan2 against the defining sin/cos
        let a = Dd::atan2(s, c) - x;
        assert!(a.hi.abs() < 1e-30);
    }

    #[test]
    fn complex_functions_match_num_complex() {
        let w = Complex64::new(0.3, -0.8);
        let d = DdComplex::from(w);
        let pairs = [
            (Complex64::from(d.exp()), w.exp()),
            (Complex64::from(d.ln()), w.ln()),
            (Complex64::from(d.sqrt()), w.sqrt()),
            (Complex64::from(d.atan()), w.atan()),
            (Complex64::from(d.powi(-3)), w.powi(-3)),
        ];
        for (a, b) in pairs {
            assert!((a - b).norm() < 1e-14 * b.norm().max(1.0), "{a} vs {b}");
        }
        let neg = DdComplex::from(Complex64::new(-4.0, 1e-300));
        assert!((Complex64::from(neg.sqrt()) - Complex64::new(0.0, 2.0)).norm() < 1e-14);
    }
}
