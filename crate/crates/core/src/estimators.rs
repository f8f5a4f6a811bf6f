//! Forward-estimator diagnostics and the spoilt estimator.

use std::fmt::Write as _;

use crate::base::{tv_distance, Alphabet, Dist, Rational, Seed, SeqModel, Symbol, SymbolSeq};
use crate::error::{Error, Result};
use crate::predict::argmax_predict;
use crate::sources::{MarkovSource, Source};

/// Largest burst the spoilt model will schedule.
pub const BURST_CAP: u64 = 10_000_000;

/// Values of a running statistic at checkpoint prefix lengths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub points: Vec<(usize, f64)>,
}

impl Series {
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    pub fn value_at(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == n).map(|p| p.1)
    }

    /// CSV with header `checkpoint,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("checkpoint,value\n");
        for (n, v) in &self.points {
            writeln!(out, "{n},{v}").unwrap();
        }
        out
    }
}

fn check_checkpoints(checkpoints: &[usize], n: usize) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("checkpoints must be sorted".into()));
    }
    if checkpoints.last().is_some_and(|&c| c > n) {
        return Err(Error::InvalidConfig(format!("checkpoint exceeds n = {n}")));
    }
    Ok(())
}

/// Runs `step(i)` for `i = 0..n` and records `sum / i` at each checkpoint.
fn running_average(
    n: usize,
    checkpoints: &[usize],
    mut step: impl FnMut(usize) -> Result<f64>,
) -> Result<Series> {
    check_checkpoints(checkpoints, n)?;
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut cp = checkpoints.iter().peekable();
    let mut sum = 0.0;
    for i in 0..=n {
        while cp.peek().is_some_and(|&&c| c == i) {
            cp.next();
            points.push((i, if i == 0 { 0.0 } else { sum / i as f64 }));
        }
        if i < n {
            sum += step(i)?;
        }
    }
    Ok(Series { points })
}

/// Cesàro average `(1/n) sum_{i<n} sum_x |R(x|x_1^i) - P(x|x_1^i)|` along the
/// trajectory `x`, with `truth` supplying `P`.
pub fn cesaro_tv_along<R, P>(model: &mut R, truth: &mut P, x: &SymbolSeq, checkpoints: &[usize]) -> Result<Series>
where
    R: SeqModel + ?Sized,
    P: SeqModel + ?Sized,
{
    model.alphabet().check_same(x.alphabet())?;
    truth.alphabet().check_same(x.alphabet())?;
    let xs = x.as_slice();
    running_average(xs.len(), checkpoints, |i| {
        let tv = tv_distance(&model.conditional(), &truth.conditional())?;
        model.observe(xs[i])?;
        truth.observe(xs[i])?;
        Ok(tv)
    })
}

/// [`cesaro_tv_along`] on one sampled trajectory of `source`.
pub fn cesaro_tv<R: SeqModel + ?Sized>(
    model: &mut R,
    source: &MarkovSource,
    n: usize,
    seed: Seed,
    checkpoints: &[usize],
) -> Result<Series> {
    let x = source.sample(n, seed);
    cesaro_tv_along(model, &mut source.exact_model(), &x, checkpoints)
}

/// Running average of `Z_i - E[Z_i | x_1^i]` with `Z_i = -log2 R(x_{i+1}|x_1^i)`
/// and the expectation taken under `truth`. Fails if `R` gives zero mass to a
/// symbol that `truth` considers possible.
pub fn martingale_drift_along<R, P>(
    model: &mut R,
    truth: &mut P,
    x: &SymbolSeq,
    checkpoints: &[usize],
) -> Result<Series>
where
    R: SeqModel + ?Sized,
    P: SeqModel + ?Sized,
{
    model.alphabet().check_same(x.alphabet())?;
    truth.alphabet().check_same(x.alphabet())?;
    let xs = x.as_slice();
    running_average(xs.len(), checkpoints, |i| {
        let r = model.conditional();
        let p = truth.conditional();
        let mut expected = 0.0;
        for (&pa, &ra) in p.probs().iter().zip(r.probs()) {
            if pa > 0.0 {
                if ra <= 0.0 {
                    return Err(Error::Unsupported("drift needs strictly positive model conditionals"));
                }
                expected -= pa * ra.log2();
            }
        }
        let z = if r.prob(xs[i]) > 0.0 { -r.prob(xs[i]).log2() } else { 0.0 };
        model.observe(xs[i])?;
        truth.observe(xs[i])?;
        Ok(z - expected)
    })
}

/// [`martingale_drift_along`] on one sampled trajectory of `source`.
pub fn martingale_drift<R: SeqModel + ?Sized>(
    model: &mut R,
    source: &MarkovSource,
    n: usize,
    seed: Seed,
    checkpoints: &[usize],
) -> Result<Series> {
    let x = source.sample(n, seed);
    martingale_drift_along(model, &mut source.exact_model(), &x, checkpoints)
}

/// A computable predicate `g` on nonempty prefixes, fed one symbol at a time.
pub trait Trigger {
    /// Extends the prefix by `symbol`.
    fn observe(&mut self, symbol: Symbol);
    /// `g(x_1^n)` for the current prefix.
    fn fired(&self) -> bool;
}

/// `g == 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Never;

impl Trigger for Never {
    fn observe(&mut self, _: Symbol) {}
    fn fired(&self) -> bool {
        false
    }
}

/// Fires on every nonempty prefix of a fixed target string.
#[derive(Debug, Clone)]
pub struct PrefixOf {
    target: Vec<Symbol>,
    len: usize,
    alive: bool,
}

impl PrefixOf {
    pub fn new(target: Vec<Symbol>) -> Self {
        PrefixOf { target, len: 0, alive: true }
    }
}

impl Trigger for PrefixOf {
    fn observe(&mut self, symbol: Symbol) {
        if self.alive {
            self.alive = self.target.get(self.len) == Some(&symbol);
        }
        self.len += 1;
    }

    fn fired(&self) -> bool {
        self.alive && self.len >= 1
    }
}

/// A base model corrupted along prefixes flagged by a trigger.
///
/// `K` counts the prefixes on which the trigger fired and `U` trails it.
/// Whenever `U < K` outside a burst, the model schedules the shortest burst
/// of length `N >= 0` after which the average error probability of its own
/// induced predictor under Bernoulli(`theta`) is at least one half, emits
/// `P(0) = theta` for those `N` steps and then sets `U` to the value `K` had
/// when the burst started.
#[derive(Debug, Clone)]
pub struct SpoiltModel<M, T> {
    base: M,
    trigger: T,
    theta: Rational,
    k: u64,
    u: u64,
    burst_remaining: u64,
    burst_k: u64,
    zeros_predicted: u64,
    ones_predicted: u64,
    n: usize,
}

/// Wraps `base` (binary) with the trigger `g` and bias `1/2 < theta < 1`.
pub fn spoil<M: SeqModel, T: Trigger>(base: M, g: T, theta: Rational) -> Result<SpoiltModel<M, T>> {
    Alphabet::BINARY.check_same(base.alphabet())?;
    let (p, q) = (theta.num as u64, theta.den as u64);
    if !(2 * p > q && p < q) {
        return Err(Error::OutOfRange { value: theta.to_f64(), range: "(1/2, 1)" });
    }
    Ok(SpoiltModel {
        base,
        trigger: g,
        theta,
        k: 0,
        u: 0,
        burst_remaining: 0,
        burst_k: 0,
        zeros_predicted: 0,
        ones_predicted: 0,
        n: 0,
    })
}

/// Smallest `N >= 0` with `2 (a p + b (q - p) + N p) >= (a + b + N) q`, where
/// `a` and `b` count predictions of 0 and 1 and `theta = p/q`.
pub fn burst_length(a: u64, b: u64, theta: Rational) -> Result<u64> {
    let (p, q) = (theta.num as u128, theta.den as u128);
    let (a, b) = (a as u128, b as u128);
    let have = 2 * (a * p + b * (q - p));
    let need = (a + b) * q;
    if have >= need {
        return Ok(0);
    }
    let step = 2 * p - q;
    let n = (need - have).div_ceil(step);
    if n > BURST_CAP as u128 {
        return Err(Error::BurstCap(BURST_CAP));
    }
    Ok(n as u64)
}

impl<M: SeqModel, T: Trigger> SpoiltModel<M, T> {
    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn theta(&self) -> Rational {
        self.theta
    }

    /// `K(x_1^n)`.
    pub fn fire_count(&self) -> u64 {
        self.k
    }

    /// The auxiliary counter `U`.
    pub fn counter(&self) -> u64 {
        self.u
    }

    pub fn burst_remaining(&self) -> u64 {
        self.burst_remaining
    }

    pub fn in_burst(&self) -> bool {
        self.burst_remaining > 0
    }

    /// `sum_i P0(x != f(x_1^i))` over the predictions so far, as `(numerator, q)`.
    pub fn error_mass(&self) -> (u64, u64) {
        let (p, q) = (self.theta.num as u64, self.theta.den as u64);
        (self.zeros_predicted * p + self.ones_predicted * (q - p), q)
    }

    fn reverted(&self) -> Dist {
        let t = self.theta.to_f64();
        Dist::from_probs_unchecked(Alphabet::BINARY, vec![t, 1.0 - t])
    }

    fn schedule(&mut self) -> Result<()> {
        if self.burst_remaining > 0 || self.u >= self.k {
            return Ok(());
        }
        let len = burst_length(self.zeros_predicted, self.ones_predicted, self.theta)?;
        if len == 0 {
            self.u = self.k;
        } else {
            self.burst_remaining = len;
            self.burst_k = self.k;
        }
        Ok(())
    }
}

impl<M: SeqModel, T: Trigger> SeqModel for SpoiltModel<M, T> {
    fn alphabet(&self) -> Alphabet {
        Alphabet::BINARY
    }

    fn position(&self) -> usize {
        self.n
    }

    fn conditional(&mut self) -> Dist {
        if self.in_burst() {
            self.reverted()
        } else {
            self.base.conditional()
        }
    }

    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        Alphabet::BINARY.check(symbol)?;
        let predicted = if self.in_burst() { 0 } else { argmax_predict(&self.base.conditional()) };
        self.base.observe(symbol)?;
        if predicted == 0 {
            self.zeros_predicted += 1;
        } else {
            self.ones_predicted += 1;
        }
        if self.burst_remaining > 0 {
            self.burst_remaining -= 1;
            if self.burst_remaining == 0 {
                self.u = self.burst_k;
            }
        }
        self.trigger.observe(symbol);
        if self.trigger.fired() {
            self.k += 1;
        }
        self.n += 1;
        self.schedule()
    }
}
