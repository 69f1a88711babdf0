//! Extended-precision complex arithmetic for deep preimage trees and long
//! backward words.

use crate::poly::Poly;
use astro_float::{BigFloat, RoundingMode, Sign};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const RM: RoundingMode = RoundingMode::ToEven;

/// Working precision for tree construction and backward iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    /// Mantissa length in bits.
    Extended(usize),
}

impl Precision {
    pub const DEFAULT_EXTENDED_BITS: usize = 128;

    pub fn extended() -> Self {
        Precision::Extended(Self::DEFAULT_EXTENDED_BITS)
    }

    pub fn bits(&self) -> usize {
        match self {
            Precision::Double => 53,
            Precision::Extended(b) => *b,
        }
    }

    pub fn is_extended(&self) -> bool {
        matches!(self, Precision::Extended(_))
    }
}

/// Complex number with `BigFloat` parts at a fixed working precision.
#[derive(Clone, Debug)]
pub struct BigComplex {
    re: BigFloat,
    im: BigFloat,
    bits: usize,
}

fn big(x: f64, bits: usize) -> BigFloat {
    BigFloat::from_f64(x, bits)
}

/// Nearest `f64` to a `BigFloat`.
pub fn big_to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    match x.as_raw_parts() {
        Some((words, _, sign, exponent, _)) => {
            let top = *words.last().unwrap() as f64;
            let next = if words.len() > 1 { words[words.len() - 2] as f64 } else { 0.0 };
            let mant = (top + next / 18446744073709551616.0) / 18446744073709551616.0;
            let v = mant * 2f64.powi(exponent);
            if sign == Sign::Neg {
                -v
            } else {
                v
            }
        }
        None => {
            if x.is_inf_pos() {
                f64::INFINITY
            } else if x.is_inf_neg() {
                f64::NEG_INFINITY
            } else {
                f64::NAN
            }
        }
    }
}

impl BigComplex {
    pub fn from_c64(z: Complex64, bits: usize) -> Self {
        BigComplex { re: big(z.re, bits), im: big(z.im, bits), bits }
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(big_to_f64(&self.re), big_to_f64(&self.im))
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn add(&self, o: &BigComplex) -> BigComplex {
        let p = self.bits;
        BigComplex { re: self.re.add(&o.re, p, RM), im: self.im.add(&o.im, p, RM), bits: p }
    }

    pub fn sub(&self, o: &BigComplex) -> BigComplex {
        let p = self.bits;
        BigComplex { re: self.re.sub(&o.re, p, RM), im: self.im.sub(&o.im, p, RM), bits: p }
    }

    pub fn mul(&self, o: &BigComplex) -> BigComplex {
        let p = self.bits;
        let re = self.re.mul(&o.re, p, RM).sub(&self.im.mul(&o.im, p, RM), p, RM);
        let im = self.re.mul(&o.im, p, RM).add(&self.im.mul(&o.re, p, RM), p, RM);
        BigComplex { re, im, bits: p }
    }

    pub fn div(&self, o: &BigComplex) -> BigComplex {
        let p = self.bits;
        let den = o.re.mul(&o.re, p, RM).add(&o.im.mul(&o.im, p, RM), p, RM);
        let re = self.re.mul(&o.re, p, RM).add(&self.im.mul(&o.im, p, RM), p, RM);
        let im = self.im.mul(&o.re, p, RM).sub(&self.re.mul(&o.im, p, RM), p, RM);
        BigComplex { re: re.div(&den, p, RM), im: im.div(&den, p, RM), bits: p }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

/// Horner evaluation of an `f64`-coefficient polynomial at a `BigComplex`.
pub fn eval_big(p: &Poly, z: &BigComplex) -> (BigComplex, BigComplex) {
    let bits = z.bits();
    let zero = BigComplex::from_c64(Complex64::new(0.0, 0.0), bits);
    let mut v = zero.clone();
    let mut dv = zero;
    for &c in p.coeffs().iter().rev() {
        dv = dv.mul(z).add(&v);
        v = v.mul(z).add(&BigComplex::from_c64(c, bits));
    }
    (v, dv)
}

/// Newton-polishes a root of `num(w) - target * den(w)` starting from a
/// double-precision estimate. Returns the polished root.
pub fn polish_preimage(num: &Poly, den: &Poly, target: &BigComplex, guess: Complex64) -> BigComplex {
    let bits = target.bits();
    let mut w = BigComplex::from_c64(guess, bits);
    // quadratic convergence from a 53-bit start
    let rounds = 2 + (bits as f64 / 53.0).log2().ceil().max(0.0) as usize;
    for _ in 0..rounds {
        let (p, dp) = eval_big(num, &w);
        let (q, dq) = eval_big(den, &w);
        let g = p.sub(&target.mul(&q));
        let dg = dp.sub(&target.mul(&dq));
        if dg.is_zero() || g.is_zero() {
            break;
        }
        w = w.sub(&g.div(&dg));
    }
    w
}
