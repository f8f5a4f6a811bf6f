//! Induced predictors, error-rate tracking and the inequality oracles that
//! relate prediction to estimation.

use std::fmt::Write as _;

use crate::base::{eta, tv_distance, Alphabet, Dist, SeqModel, Symbol, SymbolSeq};
use crate::error::{Error, Result};

/// Entries within this distance of the maximum count as tied.
pub const ARGMAX_TIE_TOLERANCE: f64 = 1e-12;

/// The least symbol attaining the maximum probability.
pub fn argmax_predict(p: &Dist) -> Symbol {
    let max = p.max_prob();
    p.probs()
        .iter()
        .position(|&v| v >= max - ARGMAX_TIE_TOLERANCE)
        .expect("a distribution has at least two entries")
}

/// A sequential guessing rule `f: X* -> X`.
pub trait Predictor {
    fn alphabet(&self) -> Alphabet;
    /// Guess for the next symbol given everything observed so far.
    fn predict(&mut self) -> Symbol;
    fn observe(&mut self, symbol: Symbol) -> Result<()>;
}

/// The predictor induced by a sequential model: argmax of its conditional.
#[derive(Debug, Clone)]
pub struct Induced<M> {
    model: M,
}

impl<M: SeqModel> Induced<M> {
    pub fn new(model: M) -> Self {
        Induced { model }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_inner(self) -> M {
        self.model
    }
}

impl<M: SeqModel> Predictor for Induced<M> {
    fn alphabet(&self) -> Alphabet {
        self.model.alphabet()
    }

    fn predict(&mut self) -> Symbol {
        argmax_predict(&self.model.conditional())
    }

    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        self.model.observe(symbol)
    }
}

/// Always guesses the same symbol.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    alphabet: Alphabet,
    symbol: Symbol,
}

impl Constant {
    pub fn new(alphabet: Alphabet, symbol: Symbol) -> Result<Self> {
        alphabet.check(symbol)?;
        Ok(Constant { alphabet, symbol })
    }
}

impl Predictor for Constant {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn predict(&mut self) -> Symbol {
        self.symbol
    }

    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        self.alphabet.check(symbol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub n: usize,
    pub errors: u64,
    pub rate: f64,
}

/// Running 0-1 loss `(1/n) sum_i 1[x_{i+1} != f(x_1^i)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub n: usize,
    pub cum_errors: u64,
    pub checkpoints: Vec<ErrorPoint>,
}

impl ErrorTrace {
    pub fn rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.cum_errors as f64 / self.n as f64
        }
    }

    /// CSV rows `n,errors,rate` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,errors,rate\n");
        for p in &self.checkpoints {
            writeln!(out, "{},{},{}", p.n, p.errors, p.rate).unwrap();
        }
        out
    }
}

/// Runs `predictor` over `x`, recording the error rate after each checkpoint
/// prefix length. Checkpoints must be sorted and at most `|x|`; a checkpoint
/// of 0 records rate 0.
pub fn run_prediction<P: Predictor + ?Sized>(
    predictor: &mut P,
    x: &SymbolSeq,
    checkpoints: &[usize],
) -> Result<ErrorTrace> {
    predictor.alphabet().check_same(x.alphabet())?;
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("checkpoints must be sorted".into()));
    }
    if checkpoints.last().is_some_and(|&c| c > x.len()) {
        return Err(Error::InvalidConfig("checkpoint exceeds sequence length".into()));
    }
    let mut errors = 0u64;
    let mut next = checkpoints.iter().peekable();
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut record = |n: usize, errors: u64, next: &mut std::iter::Peekable<std::slice::Iter<usize>>| {
        while next.peek().is_some_and(|&&c| c == n) {
            next.next();
            let rate = if n == 0 { 0.0 } else { errors as f64 / n as f64 };
            points.push(ErrorPoint { n, errors, rate });
        }
    };
    record(0, 0, &mut next);
    for (i, &s) in x.as_slice().iter().enumerate() {
        if predictor.predict() != s {
            errors += 1;
        }
        predictor.observe(s)?;
        record(i + 1, errors, &mut next);
    }
    Ok(ErrorTrace { n: x.len(), cum_errors: errors, checkpoints: points })
}

/// Both sides of `0 <= p(x_p) - p(x_q) <= sum_x |p(x) - q(x)|`, where `x_p`
/// and `x_q` are the symbols predicted from `p` and `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub gap: f64,
    pub tv: f64,
}

pub fn prediction_gap(p: &Dist, q: &Dist) -> Result<Gap> {
    let tv = tv_distance(p, q)?;
    let gap = p.prob(argmax_predict(p)) - p.prob(argmax_predict(q));
    Ok(Gap { gap, tv })
}

/// `sum_x p(x) log2(p(x)/q(x))`; `+inf` when `p` puts mass where `q` does not.
pub fn kl_divergence(p: &Dist, q: &Dist) -> Result<f64> {
    p.alphabet().check_same(q.alphabet())?;
    let mut kl = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).log2();
        }
    }
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinskerCheck {
    /// `(sum |p - q|)^2`.
    pub tv_sq: f64,
    /// `2 ln 2 * KL(p || q)` with KL in bits.
    pub rhs: f64,
    pub pass: bool,
}

/// Pinsker's inequality `(sum |p-q|)^2 <= 2 ln 2 * KL_bits(p || q)`.
pub fn pinsker_check(p: &Dist, q: &Dist) -> Result<PinskerCheck> {
    let tv = tv_distance(p, q)?;
    let kl = kl_divergence(p, q)?;
    let tv_sq = tv * tv;
    let rhs = 2.0 * std::f64::consts::LN_2 * kl;
    // relative slack for the rounding in both sides
    let pass = rhs.is_infinite() || tv_sq <= rhs * (1.0 + 1e-9) + 1e-15;
    Ok(PinskerCheck { tv_sq, rhs, pass })
}

/// Bounds on the entropy rate from the unpredictability rate `u` over a
/// `D`-symbol alphabet:
/// `(D/(D-1)) eta(1/D) u <= h <= eta(u) + u log2(D-1)`.
pub fn fano_sandwich(u: f64, alphabet: Alphabet) -> Result<(f64, f64)> {
    let d = alphabet.size() as f64;
    let max_u = 1.0 - 1.0 / d;
    if !(0.0..=max_u + 1e-12).contains(&u) {
        return Err(Error::OutOfRange { value: u, range: "[0, 1 - 1/D]" });
    }
    let u = u.min(max_u);
    let lower = d / (d - 1.0) * eta(1.0 / d)? * u;
    let upper = eta(u)? + u * (d - 1.0).log2();
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::make_dist;
    use proptest::prelude::*;

    fn d(ps: &[f64]) -> Dist {
        make_dist(Alphabet::new(ps.len()).unwrap(), ps).unwrap()
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_predict(&d(&[0.4, 0.4, 0.2])), 0);
        assert_eq!(argmax_predict(&d(&[0.2, 0.5, 0.3])), 1);
        assert_eq!(argmax_predict(&Dist::uniform(Alphabet::new(4).unwrap())), 0);
        // near-ties collapse to the least index
        assert_eq!(argmax_predict(&d(&[0.5 - 1e-14, 0.5 + 1e-14])), 0);
    }

    #[test]
    fn constant_predictor_runs() {
        let a = Alphabet::BINARY;
        let mut zero = Constant::new(a, 0).unwrap();
        let t = run_prediction(&mut zero, &SymbolSeq::from_digits(a, "0000").unwrap(), &[2, 4]).unwrap();
        assert_eq!(t.rate(), 0.0);
        let t = run_prediction(&mut zero, &SymbolSeq::from_digits(a, "1111").unwrap(), &[0, 4]).unwrap();
        assert_eq!(t.rate(), 1.0);
        assert_eq!(t.checkpoints, vec![ErrorPoint { n: 0, errors: 0, rate: 0.0 }, ErrorPoint { n: 4, errors: 4, rate: 1.0 }]);
        assert_eq!(t.to_csv(), "n,errors,rate\n0,0,0\n4,4,1\n");
        assert!(run_prediction(&mut zero, &SymbolSeq::from_digits(a, "11").unwrap(), &[3]).is_err());
        assert!(run_prediction(&mut zero, &SymbolSeq::from_digits(a, "11").unwrap(), &[2, 1]).is_err());
    }

    #[test]
    fn gap_examples() {
        let p = d(&[0.5, 0.5]);
        assert_eq!(prediction_gap(&p, &p).unwrap(), Gap { gap: 0.0, tv: 0.0 });
        let g = prediction_gap(&d(&[0.6, 0.4]), &d(&[0.3, 0.7])).unwrap();
        assert!((g.gap - 0.2).abs() < 1e-15 && (g.tv - 0.6).abs() < 1e-15);
        let g = prediction_gap(&p, &d(&[0.0, 1.0])).unwrap();
        assert_eq!(g, Gap { gap: 0.0, tv: 1.0 });
    }

    #[test]
    fn pinsker_examples() {
        let u = d(&[0.5, 0.5]);
        let c = pinsker_check(&u, &u).unwrap();
        assert_eq!((c.tv_sq, c.rhs, c.pass), (0.0, 0.0, true));
        let c = pinsker_check(&d(&[1.0, 0.0]), &u).unwrap();
        assert!((c.tv_sq - 1.0).abs() < 1e-15 && (c.rhs - 1.3863).abs() < 1e-4 && c.pass);
        let p = d(&[0.7, 0.3]);
        let c = pinsker_check(&p, &u).unwrap();
        assert!((c.tv_sq - 0.16).abs() < 1e-12 && (c.rhs - 0.1646).abs() < 1e-4 && c.pass);
        assert!((kl_divergence(&p, &u).unwrap() - 0.11871).abs() < 1e-5);
        let c = pinsker_check(&u, &d(&[1.0, 0.0])).unwrap();
        assert!(c.rhs.is_infinite() && c.pass);
    }

    #[test]
    fn fano_examples() {
        assert_eq!(fano_sandwich(0.0, Alphabet::BINARY).unwrap(), (0.0, 0.0));
        let (lo, hi) = fano_sandwich(0.3, Alphabet::BINARY).unwrap();
        assert!((lo - 0.6).abs() < 1e-15 && (hi - 0.881291).abs() < 1e-6);
        let (_, hi) = fano_sandwich(0.75, Alphabet::new(4).unwrap()).unwrap();
        assert!((hi - 2.0).abs() < 1e-12);
        assert!(fano_sandwich(0.6, Alphabet::BINARY).is_err());
        assert!(fano_sandwich(-0.1, Alphabet::BINARY).is_err());
    }

    fn pair() -> impl Strategy<Value = (Dist, Dist)> {
        (2usize..7).prop_flat_map(|n| {
            (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(1e-9f64..1.0, n))
                .prop_filter("positive", |(a, _)| a.iter().sum::<f64>() > 1e-9)
                .prop_map(|(a, b)| (d(&a), d(&b)))
        })
    }

    proptest! {
        #[test]
        fn argmax_scale_invariant(w in prop::collection::vec(0.0f64..1.0, 2..7), scale in 1e-6f64..1e6) {
            prop_assume!(w.iter().sum::<f64>() > 1e-9);
            let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
            prop_assert_eq!(argmax_predict(&d(&w)), argmax_predict(&d(&scaled)));
        }

        #[test]
        fn inequalities_hold((p, q) in pair()) {
            let g = prediction_gap(&p, &q).unwrap();
            prop_assert!(g.gap >= -ARGMAX_TIE_TOLERANCE);
            prop_assert!(g.gap <= g.tv + 1e-12);
            prop_assert!(pinsker_check(&p, &q).unwrap().pass);
        }
    }
}
