//! Exact Gaussian-rational coefficients.
//!
//! Symbolic acceptance is exact equality, so coefficients are
//! `Complex<BigRational>`: arbitrary-precision rationals with the imaginary
//! unit adjoined. `num_rational` keeps fractions reduced with the sign on the
//! numerator, so structural equality of polynomials is bit equality.

use crate::C64;
use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type GaussRat = Complex<BigRational>;

pub fn gr_zero() -> GaussRat {
    Complex::new(BigRational::zero(), BigRational::zero())
}

pub fn gr_one() -> GaussRat {
    Complex::new(BigRational::one(), BigRational::zero())
}

pub fn gr_int(n: i64) -> GaussRat {
    Complex::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
}

pub fn gr_ratio(num: i64, den: i64) -> GaussRat {
    assert!(den != 0, "zero denominator");
    Complex::new(
        BigRational::new(BigInt::from(num), BigInt::from(den)),
        BigRational::zero(),
    )
}

pub fn gr_i() -> GaussRat {
    Complex::new(BigRational::zero(), BigRational::one())
}

pub fn gr_complex(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> GaussRat {
    assert!(re_den != 0 && im_den != 0, "zero denominator");
    Complex::new(
        BigRational::new(BigInt::from(re_num), BigInt::from(re_den)),
        BigRational::new(BigInt::from(im_num), BigInt::from(im_den)),
    )
}

pub fn gr_is_zero(c: &GaussRat) -> bool {
    c.re.is_zero() && c.im.is_zero()
}

pub fn gr_to_c64(c: &GaussRat) -> C64 {
    C64::new(
        c.re.to_f64().expect("rational out of f64 range"),
        c.im.to_f64().expect("rational out of f64 range"),
    )
}

fn rat_str(r: &BigRational) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Stable text form: "3", "-1/2", "i", "-2i", "(1/2+3i)".
pub fn gr_display(c: &GaussRat) -> String {
    match (c.re.is_zero(), c.im.is_zero()) {
        (_, true) => rat_str(&c.re),
        (true, false) => {
            if c.im.is_one() {
                "i".into()
            } else if (-c.im.clone()).is_one() {
                "-i".into()
            } else {
                format!("{}i", rat_str(&c.im))
            }
        }
        (false, false) => {
            let im = if c.im.is_positive() {
                format!("+{}i", rat_str(&c.im))
            } else {
                format!("{}i", rat_str(&c.im))
            };
            format!("({}{})", rat_str(&c.re), im)
        }
    }
}
