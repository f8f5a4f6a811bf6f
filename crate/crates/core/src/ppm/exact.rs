//! Exact rational evaluation of the PPM measures.
//!
//! This is an oracle for tests and bound audits on short strings (the
//! numerators grow linearly with `n` times the number of orders). Every
//! quantity is recomputed from scratch out of n-gram counts, sharing no state
//! with [`super::PpmModel`].

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::{Add, Mul};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::base::{Rational, Symbol};

use super::Mode;

/// Nonnegative fraction kept unreduced; equality and ordering go through
/// cross-multiplication.
#[derive(Debug, Clone)]
pub struct Frac {
    num: BigUint,
    den: BigUint,
}

impl Frac {
    pub fn new(num: impl Into<BigUint>, den: impl Into<BigUint>) -> Self {
        let den = den.into();
        assert!(!den.is_zero(), "zero denominator");
        Frac { num: num.into(), den }
    }

    pub fn zero() -> Self {
        Frac::new(0u32, 1u32)
    }

    pub fn one() -> Self {
        Frac::new(1u32, 1u32)
    }

    pub fn numer(&self) -> &BigUint {
        &self.num
    }

    pub fn denom(&self) -> &BigUint {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn recip(&self) -> Frac {
        Frac::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &Frac) -> Frac {
        Frac::new(&self.num * &other.den, &self.den * &other.num)
    }

    pub fn pow(&self, e: u32) -> Frac {
        Frac::new(self.num.pow(e), self.den.pow(e))
    }

    /// `-log2` of the fraction, evaluated from the leading 64 bits of
    /// numerator and denominator.
    pub fn neg_log2(&self) -> f64 {
        log2_big(&self.den) - log2_big(&self.num)
    }

    pub fn to_f64(&self) -> f64 {
        (-self.neg_log2()).exp2()
    }
}

fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_u64().expect("64 leading bits");
    (top as f64).log2() + shift as f64
}

impl PartialEq for Frac {
    fn eq(&self, other: &Frac) -> bool {
        &self.num * &other.den == &other.num * &self.den
    }
}

impl Eq for Frac {}

impl PartialOrd for Frac {
    fn partial_cmp(&self, other: &Frac) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frac {
    fn cmp(&self, other: &Frac) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }
}

impl Add for &Frac {
    type Output = Frac;
    fn add(self, rhs: &Frac) -> Frac {
        if self.den == rhs.den {
            return Frac::new(&self.num + &rhs.num, self.den.clone());
        }
        Frac::new(&self.num * &rhs.den + &rhs.num * &self.den, &self.den * &rhs.den)
    }
}

impl Mul for &Frac {
    type Output = Frac;
    fn mul(self, rhs: &Frac) -> Frac {
        Frac::new(&self.num * &rhs.num, &self.den * &rhs.den)
    }
}

fn weight(k: usize) -> Frac {
    Frac::new(1u32, BigUint::from((k + 1) as u64) * BigUint::from((k + 2) as u64))
}

fn uniform_pow(d: usize, n: usize) -> Frac {
    Frac::new(1u32, BigUint::from(d as u64).pow(n as u32))
}

/// `PPM_k(x_1^n)` over an alphabet of `d` symbols with smoothing `alpha`.
pub fn ppm_k(x: &[Symbol], d: usize, k: usize, alpha: Rational) -> Frac {
    let n = x.len();
    if k + 1 >= n {
        return uniform_pow(d, n);
    }
    let (a, b) = (alpha.num as u64, alpha.den as u64);
    let mut num = BigUint::one();
    let mut den = BigUint::from(d as u64).pow(k as u32 + 1);
    let mut grams: HashMap<&[Symbol], u64> = HashMap::new();
    let mut contexts: HashMap<&[Symbol], u64> = HashMap::new();
    for i in (k + 2)..=n {
        // grams ending at i-1, contexts ending at i-2 (1-based)
        *grams.entry(&x[i - k - 2..i - 1]).or_insert(0) += 1;
        if i == k + 2 {
            for e in k..=i - 2 {
                *contexts.entry(&x[e - k..e]).or_insert(0) += 1;
            }
        } else {
            *contexts.entry(&x[i - 2 - k..i - 2]).or_insert(0) += 1;
        }
        let g = grams.get(&x[i - k - 1..i]).copied().unwrap_or(0);
        let c = contexts.get(&x[i - k - 1..i - 1]).copied().unwrap_or(0);
        // (g + a/b) / (c + d a/b)
        num *= BigUint::from(g * b + a);
        den *= BigUint::from(c * b + d as u64 * a);
    }
    Frac::new(num, den)
}

/// `PPM(x_1^n)` for the full mixture or its capped variant.
pub fn ppm(x: &[Symbol], d: usize, mode: Mode, alpha: Rational) -> Frac {
    let n = x.len();
    match mode {
        Mode::Full => {
            if n == 0 {
                return Frac::one();
            }
            let mut acc = &uniform_pow(d, n) * &Frac::new(1u32, n as u64);
            for k in 0..n.saturating_sub(1) {
                acc = &acc + &(&weight(k) * &ppm_k(x, d, k, alpha));
            }
            acc
        }
        Mode::Capped(kmax) => {
            let mut acc = &ppm_k(x, d, kmax, alpha) * &Frac::new(1u32, (kmax + 1) as u64);
            for k in 0..kmax {
                acc = &acc + &(&weight(k) * &ppm_k(x, d, k, alpha));
            }
            acc
        }
    }
}

/// `PPM(a | x_1^n) = PPM(x_1^n a) / PPM(x_1^n)`.
pub fn conditional(x: &[Symbol], a: Symbol, d: usize, mode: Mode, alpha: Rational) -> Frac {
    let mut ext = x.to_vec();
    ext.push(a);
    ppm(&ext, d, mode, alpha).div(&ppm(x, d, mode, alpha))
}

/// `PPM(x_1^n) >= D^{-n} / (n+1)^2`, i.e. `-log PPM <= 2 log(n+1) + n log D`.
pub fn joint_bound_holds(x: &[Symbol], d: usize) -> bool {
    let n = x.len();
    let p = ppm(x, d, Mode::Full, Rational::ONE);
    let rhs = &uniform_pow(d, n) * &Frac::new(1u32, ((n + 1) * (n + 1)) as u64);
    p >= rhs
}

/// `PPM(a | x_1^n) >= (n+D)^{-3}` for every symbol `a`.
pub fn conditional_bound_holds(x: &[Symbol], d: usize, mode: Mode) -> bool {
    let n = x.len();
    let base = ppm(x, d, mode, Rational::ONE);
    let floor = Frac::new(1u32, ((n + d) as u64).pow(3));
    (0..d).all(|a| {
        let mut ext = x.to_vec();
        ext.push(a);
        ppm(&ext, d, mode, Rational::ONE) >= &base * &floor
    })
}

/// Outcome of the exact entropy-sandwich audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSandwich {
    pub lower: bool,
    pub upper: bool,
}

/// `e^2` is bounded below by this rational, so the upper check is certified.
const E_SQUARED_LOWER: (u64, u64) = (738_905, 100_000);

/// Exact audit of `0 <= -log PPM_k - k log D - (n-k) h_k <= D^{k+1} log(e^2 n)`.
///
/// With `L = PPM_k(x) D^k prod_w (N(w_1^k|x_1^{n-1}) / N(w|x_1^n))^{N(w|x_1^n)}`
/// the lower inequality is `L <= 1`, and the upper one follows from
/// `L (c n)^{D^{k+1}} >= 1` for a rational `c < e^2`.
pub fn entropy_sandwich(x: &[Symbol], d: usize, k: usize) -> Option<ExactSandwich> {
    let n = x.len();
    if n < k + 2 {
        return None;
    }
    let mut grams: HashMap<&[Symbol], u64> = HashMap::new();
    for w in x.windows(k + 1) {
        *grams.entry(w).or_insert(0) += 1;
    }
    let mut contexts: HashMap<&[Symbol], u64> = HashMap::new();
    if k > 0 {
        for w in x[..n - 1].windows(k) {
            *contexts.entry(w).or_insert(0) += 1;
        }
    }
    let mut ratio = Frac::one();
    for (w, &c) in &grams {
        let ctx = if k == 0 { n as u64 } else { contexts[&w[..k]] };
        ratio = &ratio * &Frac::new(ctx, c).pow(c as u32);
    }
    let l = &(&ppm_k(x, d, k, Rational::ONE) * &Frac::new(BigUint::from(d as u64).pow(k as u32), 1u32))
        * &ratio;
    let lower = l <= Frac::one();
    let m = (d as u32).pow(k as u32 + 1);
    let scale = Frac::new(E_SQUARED_LOWER.0 * n as u64, E_SQUARED_LOWER.1).pow(m);
    let upper = &l * &scale >= Frac::one();
    Some(ExactSandwich { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppm::ngram_count;
    use crate::base::{Alphabet, SymbolSeq};

    fn bits(s: &str) -> Vec<Symbol> {
        s.bytes().map(|b| (b - b'0') as usize).collect()
    }

    /// `PPM_k` straight from the definition, with brute-force counting.
    fn ppm_k_brute(x: &[Symbol], d: usize, k: usize) -> Frac {
        let n = x.len();
        if k + 1 >= n {
            return uniform_pow(d, n);
        }
        let a = Alphabet::new(d).unwrap();
        let mut p = uniform_pow(d, k + 1);
        for i in (k + 2)..=n {
            let g = ngram_count(&SymbolSeq::new(a, x[..i - 1].to_vec()).unwrap(), &x[i - k - 1..i]);
            let c = ngram_count(&SymbolSeq::new(a, x[..i - 2].to_vec()).unwrap(), &x[i - k - 1..i - 1]);
            p = &p * &Frac::new(g + 1, c + d as u64);
        }
        p
    }

    #[test]
    fn hand_values() {
        assert_eq!(ppm_k(&bits("00"), 2, 0, Rational::ONE), Frac::new(1u32, 3u32));
        assert_eq!(ppm_k(&bits("01"), 2, 0, Rational::ONE), Frac::new(1u32, 6u32));
        assert_eq!(ppm(&bits("00"), 2, Mode::Full, Rational::ONE), Frac::new(7u32, 24u32));
        assert_eq!(conditional(&bits("0"), 0, 2, Mode::Full, Rational::ONE), Frac::new(7u32, 12u32));
        assert_eq!(ppm(&[], 2, Mode::Full, Rational::ONE), Frac::one());
        assert_eq!(ppm(&bits("1"), 2, Mode::Capped(4), Rational::ONE), Frac::new(1u32, 2u32));
    }

    #[test]
    fn incremental_counting_matches_brute_force() {
        for len in 0..=9usize {
            for mask in 0u32..1 << len {
                let x: Vec<Symbol> = (0..len).map(|i| (mask >> i) as usize & 1).collect();
                for k in 0..4 {
                    assert_eq!(ppm_k(&x, 2, k, Rational::ONE), ppm_k_brute(&x, 2, k), "{x:?} k={k}");
                }
            }
        }
    }

    #[test]
    fn additivity_exhaustive() {
        for len in 0..=8usize {
            for mask in 0u32..1 << len {
                let x: Vec<Symbol> = (0..len).map(|i| (mask >> i) as usize & 1).collect();
                for mode in [Mode::Full, Mode::Capped(0), Mode::Capped(2)] {
                    let parent = ppm(&x, 2, mode, Rational::ONE);
                    let mut sum = Frac::zero();
                    for a in 0..2 {
                        let mut e = x.clone();
                        e.push(a);
                        sum = &sum + &ppm(&e, 2, mode, Rational::ONE);
                    }
                    assert_eq!(sum, parent, "{x:?} {mode}");
                }
            }
        }
    }

    #[test]
    fn ordering_and_logs() {
        let a = Frac::new(1u32, 3u32);
        let b = Frac::new(2u32, 6u32);
        assert_eq!(a, b);
        assert!(Frac::new(1u32, 4u32) < a);
        assert!((Frac::new(7u32, 24u32).neg_log2() - (24f64 / 7.0).log2()).abs() < 1e-15);
        let huge = Frac::new(1u32, BigUint::from(2u32).pow(5000));
        assert!((huge.neg_log2() - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn sandwich_small() {
        let s = entropy_sandwich(&bits("0011"), 2, 0).unwrap();
        assert!(s.lower && s.upper);
        assert!(entropy_sandwich(&bits("001"), 2, 2).is_none());
    }
}
