//! Exact arithmetic: big rationals, enclosing square-root intervals, and
//! sums of square roots of rationals with decidable comparison.
//!
//! Set and measure identities are kept in `BigRational`. Quantities built
//! from square roots of Radon-Nikodym ratios (reversing measures, kernel
//! boundary sizes, Cheeger ratios) live in [`Radical`], a finite sum
//! `Σ c_i·√d_i` with the `d_i` square-reduced. Comparisons refine enclosing
//! dyadic intervals until the sign is determined, and recognise exact ties
//! by coefficient cancellation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Ratio = BigRational;

pub fn ratio(num: i64, den: i64) -> Ratio {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}

pub fn ratio_int(n: i64) -> Ratio {
    Ratio::from_integer(BigInt::from(n))
}

/// Parses "p/q", integers, plain decimals ("0.25") and scientific
/// notation ("1e-3") into an exact rational.
pub fn parse_ratio(s: &str) -> Result<Ratio, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty rational".into());
    }
    if let Ok(r) = s.parse::<BigRational>() {
        return Ok(r);
    }
    // decimal / scientific form
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = s[i + 1..]
                .parse()
                .map_err(|_| format!("bad exponent in `{s}`"))?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    let digits = format!(
        "{}{}",
        if int_part.is_empty() { "0" } else { int_part },
        frac_part
    );
    let num: BigInt = digits
        .parse()
        .map_err(|_| format!("bad rational `{s}`"))?;
    let scale = frac_part.len() as i64 - exp;
    let ten = BigInt::from(10);
    let mut r = Ratio::from_integer(num);
    if scale > 0 {
        r /= Ratio::from_integer(ten.pow(scale as u32));
    } else if scale < 0 {
        r *= Ratio::from_integer(ten.pow((-scale) as u32));
    }
    Ok(r)
}

pub fn format_ratio(r: &Ratio) -> String {
    r.to_string()
}

pub fn ratio_to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let n = 4096usize;
        let mut sieve = vec![true; n + 1];
        let mut out = Vec::new();
        for p in 2..=n {
            if sieve[p] {
                out.push(p as u64);
                let mut q = p * p;
                while q <= n {
                    sieve[q] = false;
                    q += p;
                }
            }
        }
        out
    })
}

/// Writes `n = outer² · inner` with `inner` square-reduced (no prime-square
/// factor below 4096², and not itself a perfect square).
fn square_reduce(n: &BigUint) -> (BigUint, BigUint) {
    let mut inner = n.clone();
    let mut outer = BigUint::one();
    if inner.is_zero() {
        return (BigUint::one(), BigUint::zero());
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        let p2 = &p * &p;
        if &inner < &p2 {
            break;
        }
        while (&inner % &p2).is_zero() {
            inner /= &p2;
            outer *= &p;
        }
    }
    let s = inner.sqrt();
    if &s * &s == inner {
        outer *= &s;
        inner = BigUint::one();
    }
    (outer, inner)
}

/// A finite sum `Σ c_d · √d` with rational coefficients and distinct
/// square-reduced positive integers `d` (the term `d = 1` is the rational
/// part). Closed under ring operations; ordering is exact.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Radical {
    terms: BTreeMap<BigUint, Ratio>,
}

impl Radical {
    pub fn zero() -> Self {
        Radical::default()
    }

    pub fn from_ratio(c: Ratio) -> Self {
        let mut r = Radical::zero();
        r.add_term(BigUint::one(), c);
        r
    }

    /// `√(p/q)` for a non-negative rational, as `(outer/q)·√inner` with
    /// `p·q = outer²·inner`.
    pub fn sqrt_of_ratio(r: &Ratio) -> Self {
        assert!(!r.is_negative(), "sqrt of negative rational");
        if r.is_zero() {
            return Radical::zero();
        }
        let p = r.numer().to_biguint().expect("non-negative");
        let q = r.denom().to_biguint().expect("positive denom");
        let (outer, inner) = square_reduce(&(&p * &q));
        let coef = Ratio::new(BigInt::from(outer), BigInt::from(q));
        let mut out = Radical::zero();
        out.add_term(inner, coef);
        out
    }

    fn add_term(&mut self, d: BigUint, c: Ratio) {
        if c.is_zero() || d.is_zero() {
            return;
        }
        let entry = self.terms.entry(d.clone()).or_insert_with(Ratio::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&d);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Radical) -> Radical {
        let mut out = self.clone();
        for (d, c) in &other.terms {
            out.add_term(d.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Radical) -> Radical {
        let mut out = self.clone();
        for (d, c) in &other.terms {
            out.add_term(d.clone(), -c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Ratio) -> Radical {
        if c.is_zero() {
            return Radical::zero();
        }
        let mut out = Radical::zero();
        for (d, k) in &self.terms {
            out.add_term(d.clone(), k * c);
        }
        out
    }

    pub fn mul(&self, other: &Radical) -> Radical {
        let mut out = Radical::zero();
        for (d1, c1) in &self.terms {
            for (d2, c2) in &other.terms {
                let (outer, inner) = square_reduce(&(d1 * d2));
                out.add_term(inner, c1 * c2 * Ratio::from_integer(BigInt::from(outer)));
            }
        }
        out
    }

    /// Exact rational value when every remaining term has `d = 1`.
    pub fn as_ratio(&self) -> Option<Ratio> {
        if self.terms.is_empty() {
            return Some(Ratio::zero());
        }
        if self.terms.len() == 1 {
            let (d, c) = self.terms.iter().next().unwrap();
            if d.is_one() {
                return Some(c.clone());
            }
        }
        None
    }

    /// Enclosing interval using `bits` fractional bits of √d.
    pub fn interval(&self, bits: u32) -> (Ratio, Ratio) {
        let mut lo = Ratio::zero();
        let mut hi = Ratio::zero();
        let scale = BigUint::one() << (2 * bits);
        let denom = BigInt::from(BigUint::one() << bits);
        for (d, c) in &self.terms {
            let scaled = d * &scale;
            let s = scaled.sqrt();
            let exact = &s * &s == scaled;
            let rlo = Ratio::new(BigInt::from(s.clone()), denom.clone());
            let rhi = if exact {
                rlo.clone()
            } else {
                Ratio::new(BigInt::from(s + BigUint::one()), denom.clone())
            };
            if c.is_negative() {
                lo += c * &rhi;
                hi += c * &rlo;
            } else {
                lo += c * &rlo;
                hi += c * &rhi;
            }
        }
        (lo, hi)
    }

    pub fn to_f64(&self) -> f64 {
        let (lo, hi) = self.interval(64);
        (ratio_to_f64(&lo) + ratio_to_f64(&hi)) / 2.0
    }

    /// Sign of the exact value: ties are detected by cancellation, the rest
    /// by interval refinement (terminates because distinct square-reduced
    /// radicals are linearly independent over the rationals).
    pub fn sign(&self) -> Ordering {
        if self.terms.is_empty() {
            return Ordering::Equal;
        }
        let mut bits = 64;
        loop {
            let (lo, hi) = self.interval(bits);
            if lo.is_positive() {
                return Ordering::Greater;
            }
            if hi.is_negative() {
                return Ordering::Less;
            }
            bits *= 2;
            assert!(bits <= 4096, "unresolved radical comparison");
        }
    }

    pub fn cmp_radical(&self, other: &Radical) -> Ordering {
        self.sub(other).sign()
    }

    pub fn cmp_ratio(&self, other: &Ratio) -> Ordering {
        self.cmp_radical(&Radical::from_ratio(other.clone()))
    }
}

impl fmt::Debug for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(d, c)| {
                if d.is_one() {
                    format!("{c}")
                } else {
                    format!("{c}·√{d}")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Rational lower bound for √r within `2^-bits`.
pub fn sqrt_lower_bound(r: &Ratio, bits: u32) -> Ratio {
    let (lo, _) = Radical::sqrt_of_ratio(r).interval(bits);
    if lo.is_negative() {
        Ratio::zero()
    } else {
        lo
    }
}

/// Rational upper bound for √r within `2^-bits`.
pub fn sqrt_upper_bound(r: &Ratio, bits: u32) -> Ratio {
    let (_, hi) = Radical::sqrt_of_ratio(r).interval(bits);
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_ratio("3/4").unwrap(), ratio(3, 4));
        assert_eq!(parse_ratio("5").unwrap(), ratio_int(5));
        assert_eq!(parse_ratio("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_ratio("1e-3").unwrap(), ratio(1, 1000));
        assert_eq!(parse_ratio("0.99").unwrap(), ratio(99, 100));
        assert_eq!(parse_ratio("-1.5").unwrap(), ratio(-3, 2));
        assert!(parse_ratio("x").is_err());
    }

    #[test]
    fn square_reduction() {
        let (o, i) = square_reduce(&BigUint::from(8u32));
        assert_eq!((o, i), (BigUint::from(2u32), BigUint::from(2u32)));
        let (o, i) = square_reduce(&BigUint::from(36u32));
        assert_eq!((o, i), (BigUint::from(6u32), BigUint::from(1u32)));
        let (o, i) = square_reduce(&BigUint::from(12u32 * 49));
        assert_eq!((o, i), (BigUint::from(14u32), BigUint::from(3u32)));
    }

    #[test]
    fn radical_cancellation() {
        // √8 - 2√2 = 0 exactly
        let a = Radical::sqrt_of_ratio(&ratio_int(8));
        let b = Radical::sqrt_of_ratio(&ratio_int(2)).scale(&ratio_int(2));
        assert!(a.sub(&b).is_zero());
    }

    #[test]
    fn radical_ordering() {
        // √2 + √3 vs √10: (√2+√3)² = 5+2√6 ≈ 9.899 < 10
        let lhs = Radical::sqrt_of_ratio(&ratio_int(2)).add(&Radical::sqrt_of_ratio(&ratio_int(3)));
        let rhs = Radical::sqrt_of_ratio(&ratio_int(10));
        assert_eq!(lhs.cmp_radical(&rhs), Ordering::Less);
        assert_eq!(rhs.cmp_radical(&lhs), Ordering::Greater);
        assert_eq!(lhs.cmp_radical(&lhs), Ordering::Equal);
    }

    #[test]
    fn radical_product() {
        // (√2)·(√2) = 2
        let s2 = Radical::sqrt_of_ratio(&ratio_int(2));
        assert_eq!(s2.mul(&s2).as_ratio(), Some(ratio_int(2)));
        // (1+√2)(1-√2) = -1
        let one = Radical::from_ratio(ratio_int(1));
        let a = one.add(&s2);
        let b = one.sub(&s2);
        assert_eq!(a.mul(&b).as_ratio(), Some(ratio_int(-1)));
    }

    #[test]
    fn sqrt_interval_tight() {
        let r = ratio(7, 3);
        let lo = sqrt_lower_bound(&r, 128);
        let hi = sqrt_upper_bound(&r, 128);
        assert!(&lo * &lo <= r && r <= &hi * &hi);
        let width = ratio_to_f64(&(&hi - &lo));
        assert!(width < 1e-30);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sqrt_products_square_back(
                a in 1i64..400, b in 1i64..400, c in 1i64..400, d in 1i64..400,
            ) {
                let x = ratio(a, b);
                let y = ratio(c, d);
                let prod = Radical::sqrt_of_ratio(&x).mul(&Radical::sqrt_of_ratio(&y));
                let squared = prod.mul(&prod);
                prop_assert_eq!(squared.as_ratio().unwrap(), x * y);
            }

            #[test]
            fn ordering_matches_floats_when_separated(
                a in 1i64..300, b in 1i64..300, c in 1i64..300, d in 1i64..300,
            ) {
                let x = Radical::sqrt_of_ratio(&ratio(a, b))
                    .add(&Radical::from_ratio(ratio(c, d)));
                let y = Radical::sqrt_of_ratio(&ratio(c, d))
                    .add(&Radical::from_ratio(ratio(a, b)));
                let (fx, fy) = (x.to_f64(), y.to_f64());
                if (fx - fy).abs() > 1e-9 {
                    let expected = fx.partial_cmp(&fy).unwrap();
                    prop_assert_eq!(x.cmp_radical(&y), expected);
                }
            }
        }
    }
}
