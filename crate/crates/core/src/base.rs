//! Alphabets, symbol sequences, conditional distributions, log-domain
//! probabilities and seeded randomness.
//!
//! Symbols are plain integer indices `0..D` with the natural order. Any byte
//! or text mapping lives at the CLI boundary.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a [`Dist`].
pub const DIST_TOLERANCE: f64 = 1e-12;

pub type Symbol = usize;

/// A finite alphabet `{0, 1, ..., D-1}` with `D >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet(usize);

impl Alphabet {
    pub const BINARY: Alphabet = Alphabet(2);

    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::AlphabetTooSmall(size));
        }
        Ok(Alphabet(size))
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0
    }

    #[inline]
    pub fn contains(self, symbol: Symbol) -> bool {
        symbol < self.0
    }

    pub fn check(self, symbol: Symbol) -> Result<()> {
        if self.contains(symbol) {
            Ok(())
        } else {
            Err(Error::SymbolOutOfRange { symbol, size: self.0 })
        }
    }

    pub fn check_same(self, other: Alphabet) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::AlphabetMismatch { expected: self.0, actual: other.0 })
        }
    }

    /// `log2 D`.
    #[inline]
    pub fn log2_size(self) -> f64 {
        (self.0 as f64).log2()
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = Error;
    fn try_from(size: usize) -> Result<Self> {
        Alphabet::new(size)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.0
    }
}

/// A finite string over an [`Alphabet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolSeq {
    alphabet: Alphabet,
    data: Vec<Symbol>,
}

impl SymbolSeq {
    pub fn new(alphabet: Alphabet, data: Vec<Symbol>) -> Result<Self> {
        for &s in &data {
            alphabet.check(s)?;
        }
        Ok(SymbolSeq { alphabet, data })
    }

    pub fn empty(alphabet: Alphabet) -> Self {
        SymbolSeq { alphabet, data: Vec::new() }
    }

    /// Parses a string of decimal digits, one symbol per character.
    /// Convenient for the small binary and ternary strings used in tests.
    pub fn from_digits(alphabet: Alphabet, digits: &str) -> Result<Self> {
        let data = digits
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::InvalidWeights(format!("non-digit {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        SymbolSeq::new(alphabet, data)
    }

    pub(crate) fn from_vec_unchecked(alphabet: Alphabet, data: Vec<Symbol>) -> Self {
        debug_assert!(data.iter().all(|&s| s < alphabet.size()));
        SymbolSeq { alphabet, data }
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[Symbol] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Symbol> {
        self.data
    }

    /// The prefix `x_1^n`.
    pub fn prefix(&self, n: usize) -> SymbolSeq {
        SymbolSeq { alphabet: self.alphabet, data: self.data[..n].to_vec() }
    }

    pub fn push(&mut self, symbol: Symbol) -> Result<()> {
        self.alphabet.check(symbol)?;
        self.data.push(symbol);
        Ok(())
    }
}

impl fmt::Display for SymbolSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.alphabet.size() <= 10 {
            for s in &self.data {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.data.iter().map(|s| s.to_string()).collect();
            f.write_str(&parts.join(" "))
        }
    }
}

/// A probability vector over an alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl Dist {
    /// Builds a distribution from entries that already sum to one.
    pub fn from_probs(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size() {
            return Err(Error::AlphabetMismatch { expected: alphabet.size(), actual: probs.len() });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidWeights("entries must lie in [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_TOLERANCE {
            return Err(Error::InvalidWeights(format!("entries sum to {sum}")));
        }
        Ok(Dist { alphabet, probs })
    }

    pub(crate) fn from_probs_unchecked(alphabet: Alphabet, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), alphabet.size());
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "unnormalized conditional {probs:?}"
        );
        Dist { alphabet, probs }
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let d = alphabet.size();
        Dist { alphabet, probs: vec![1.0 / d as f64; d] }
    }

    /// Point mass on `symbol`.
    pub fn point(alphabet: Alphabet, symbol: Symbol) -> Result<Self> {
        alphabet.check(symbol)?;
        let mut probs = vec![0.0; alphabet.size()];
        probs[symbol] = 1.0;
        Ok(Dist { alphabet, probs })
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, symbol: Symbol) -> f64 {
        self.probs[symbol]
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    /// Largest entry.
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Normalizes nonnegative weights into a [`Dist`].
pub fn make_dist(alphabet: Alphabet, weights: &[f64]) -> Result<Dist> {
    if weights.len() != alphabet.size() {
        return Err(Error::AlphabetMismatch { expected: alphabet.size(), actual: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("weight {w} is negative or non-finite")));
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::InvalidWeights("weights must have a positive finite sum".into()));
    }
    let probs = weights.iter().map(|w| w / sum).collect();
    Ok(Dist { alphabet, probs })
}

/// `sum_x |p(x) - q(x)|`, in `[0, 2]`.
pub fn tv_distance(p: &Dist, q: &Dist) -> Result<f64> {
    p.alphabet.check_same(q.alphabet)?;
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}

/// Binary entropy `eta(p) = -p log p - (1-p) log(1-p)` in bits.
pub fn eta(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange { value: p, range: "[0, 1]" });
    }
    Ok(xlog2x_neg(p) + xlog2x_neg(1.0 - p))
}

#[inline]
pub(crate) fn xlog2x_neg(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// `log2(sum_i 2^{terms_i})`, shifted by the maximum term.
pub fn log2_sum_exp2(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = terms.iter().map(|t| (t - max).exp2()).sum();
    max + s.log2()
}

/// `-log2` of a probability, in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct LogProb(f64);

impl LogProb {
    pub const ONE: LogProb = LogProb(0.0);

    pub fn from_bits(neg_log2: f64) -> Self {
        debug_assert!(neg_log2 >= -1e-9, "negative code length {neg_log2}");
        LogProb(neg_log2)
    }

    pub fn from_prob(p: f64) -> Self {
        LogProb(-p.log2())
    }

    #[inline]
    pub fn bits(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        (-self.0).exp2()
    }

    /// Per-symbol rate `bits / n`.
    pub fn rate(self, n: usize) -> f64 {
        self.0 / n as f64
    }
}

impl Add for LogProb {
    type Output = LogProb;
    fn add(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 + rhs.0)
    }
}

impl AddAssign for LogProb {
    fn add_assign(&mut self, rhs: LogProb) {
        self.0 += rhs.0;
    }
}

/// Seed for deterministic simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// A seed derived from this one for an independent stream.
    pub fn derive(self, stream: u64) -> Seed {
        // splitmix64 finalizer
        let mut z = self.0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

/// A positive rational `num/den`, used for smoothing and bias parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidRational(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        let g = if g == 0 { 1 } else { g };
        Ok(Rational { num: num / g, den: den / g })
    }

    pub const ONE: Rational = Rational { num: 1, den: 1 };
    pub const HALF: Rational = Rational { num: 1, den: 2 };

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts `p/q`, an integer, or a finite decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidRational(s.to_string());
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p = p.trim().parse().map_err(|_| bad())?;
            let q = q.trim().parse().map_err(|_| bad())?;
            return Rational::new(p, q);
        }
        match s.split_once('.') {
            None => Rational::new(s.parse().map_err(|_| bad())?, 1),
            Some((int, frac)) => {
                if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
                    return Err(bad());
                }
                let den = 10u64.pow(frac.len() as u32);
                let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
                let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
                let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
                let g = {
                    let (mut a, mut b) = (num, den);
                    while b != 0 {
                        (a, b) = (b, a % b);
                    }
                    a.max(1)
                };
                let (num, den) = (num / g, den / g);
                Rational::new(u32::try_from(num).map_err(|_| bad())?, u32::try_from(den).map_err(|_| bad())?)
            }
        }
    }
}

/// A sequential probability model: exposes `P(. | x_1^n)` for the prefix it
/// has observed so far, then ingests the next symbol.
pub trait SeqModel {
    fn alphabet(&self) -> Alphabet;

    /// Number of symbols observed so far.
    fn position(&self) -> usize;

    /// Conditional distribution of the next symbol. Takes `&mut self` so
    /// models can cache work shared with [`SeqModel::observe`].
    fn conditional(&mut self) -> Dist;

    fn observe(&mut self, symbol: Symbol) -> Result<()>;
}

impl<M: SeqModel + ?Sized> SeqModel for Box<M> {
    fn alphabet(&self) -> Alphabet {
        (**self).alphabet()
    }
    fn position(&self) -> usize {
        (**self).position()
    }
    fn conditional(&mut self) -> Dist {
        (**self).conditional()
    }
    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        (**self).observe(symbol)
    }
}

/// The i.i.d. uniform model.
#[derive(Debug, Clone)]
pub struct UniformModel {
    alphabet: Alphabet,
    n: usize,
}

impl UniformModel {
    pub fn new(alphabet: Alphabet) -> Self {
        UniformModel { alphabet, n: 0 }
    }
}

impl SeqModel for UniformModel {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }
    fn position(&self) -> usize {
        self.n
    }
    fn conditional(&mut self) -> Dist {
        Dist::uniform(self.alphabet)
    }
    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        self.alphabet.check(symbol)?;
        self.n += 1;
        Ok(())
    }
}
