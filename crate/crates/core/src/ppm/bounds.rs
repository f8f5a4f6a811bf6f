//! Float-path checks of the PPM code-length bounds.
//!
//! The exact counterparts live in [`super::exact`].

use std::f64::consts::E;

use crate::base::{Alphabet, SymbolSeq};
use crate::error::{Error, Result};

use super::{empirical_entropy, ppm_k_neg_log, Mode, PpmConfig, PpmModel};

/// Slack for float comparisons against the bounds.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    /// Prefix length `n`.
    pub n: usize,
    /// `-log2 PPM(x_1^n)` and `2 log2(n+1) + n log2 D` (full mode only).
    pub joint: Option<(f64, f64)>,
    /// `-log2 PPM(x_{n+1} | x_1^n)` and `3 log2(n+D)`, for `n < |x|`.
    pub conditional: Option<(f64, f64)>,
}

impl BoundRow {
    pub fn pass(&self) -> bool {
        self.joint.is_none_or(|(l, r)| l <= r + BOUND_SLACK)
            && self.conditional.is_none_or(|(l, r)| l <= r + BOUND_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub mode: Mode,
    pub rows: Vec<BoundRow>,
}

impl BoundsReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(BoundRow::pass)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass()).count()
    }
}

/// Evaluates the joint bound `-log PPM(x_1^n) <= 2 log(n+1) + n log D`
/// (full mode) and the conditional bound `-log PPM(x_{n+1}|x_1^n) <= 3 log(n+D)`
/// at every prefix. Both are stated for Laplace smoothing.
pub fn check_ppm_bounds(x: &SymbolSeq, config: &PpmConfig) -> Result<BoundsReport> {
    config.alphabet.check_same(x.alphabet())?;
    if !config.is_laplace() {
        return Err(Error::Unsupported("Laplace smoothing (alpha = 1) for bound checks"));
    }
    let log_d = config.alphabet.log2_size();
    let d = config.alphabet.size() as f64;
    let full = config.mode == Mode::Full;
    let mut model = PpmModel::new(config.clone().with_full_limit(config.full_limit.max(x.len())))?;
    let xs = x.as_slice();
    let mut rows = Vec::with_capacity(xs.len() + 1);
    for n in 0..=xs.len() {
        let joint = full.then(|| {
            (model.mixture_neg_log().bits(), 2.0 * ((n + 1) as f64).log2() + n as f64 * log_d)
        });
        let conditional = match xs.get(n) {
            Some(&s) => {
                let c = model.conditional();
                model.ingest(s)?;
                Some((-c.prob(s).log2(), 3.0 * (n as f64 + d).log2()))
            }
            None => None,
        };
        rows.push(BoundRow { n, joint, conditional });
    }
    Ok(BoundsReport { mode: config.mode, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub n: usize,
    pub k: usize,
    /// `-log2 PPM_k(x_1^n) - k log2 D - (n-k) h_k(x_1^n)`.
    pub middle: f64,
    /// `D^{k+1} log2(e^2 n)`.
    pub upper: f64,
}

impl SandwichReport {
    pub fn lower_ok(&self) -> bool {
        self.middle >= -BOUND_SLACK
    }

    pub fn upper_ok(&self) -> bool {
        self.middle <= self.upper + BOUND_SLACK
    }

    pub fn pass(&self) -> bool {
        self.lower_ok() && self.upper_ok()
    }
}

/// `0 <= -log PPM_k(x_1^n) - k log D - (n-k) h_k(x_1^n) <= D^{k+1} log(e^2 n)`,
/// Laplace smoothing, `n >= k + 2`.
pub fn check_entropy_sandwich(x: &SymbolSeq, k: usize) -> Result<SandwichReport> {
    let n = x.len();
    if n < k + 2 {
        return Err(Error::TooShort { len: n, order: k + 1 });
    }
    let alphabet = x.alphabet();
    let code = ppm_k_neg_log(x, k, crate::base::Rational::ONE).bits();
    let h = empirical_entropy(x, k)?;
    let middle = code - k as f64 * alphabet.log2_size() - (n - k) as f64 * h;
    let upper = (alphabet.size() as f64).powi(k as i32 + 1) * (E * E * n as f64).log2();
    Ok(SandwichReport { n, k, middle, upper })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub n: usize,
    /// `(-log2 conditional) * sqrt(ln n / n)`.
    pub epsilon: f64,
    /// `3 log2(n + D) * sqrt(ln n / n)`.
    pub envelope: f64,
    /// `max_{m >= n} epsilon_m` over the recorded trace.
    pub tail_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
}

impl GrowthReport {
    pub fn within_envelope(&self) -> bool {
        self.rows.iter().all(|r| r.epsilon <= r.envelope + BOUND_SLACK)
    }

    /// `max epsilon_n` over `lo <= n <= hi`.
    pub fn max_in(&self, lo: usize, hi: usize) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| (lo..=hi).contains(&r.n))
            .map(|r| r.epsilon)
            .fold(None, |acc, e| Some(acc.map_or(e, |a: f64| a.max(e))))
    }
}

/// Growth diagnostic for a trace of conditional code lengths; `trace[n]` is
/// `-log2 R(x_{n+1} | x_1^n)`. Positions `n < 2` are skipped since
/// `ln 1 = 0`.
pub fn check_growth_condition(trace: &[f64], alphabet: Alphabet) -> GrowthReport {
    let d = alphabet.size() as f64;
    let mut rows: Vec<GrowthRow> = trace
        .iter()
        .enumerate()
        .skip(2)
        .map(|(n, &z)| {
            let nf = n as f64;
            let scale = (nf.ln() / nf).sqrt();
            GrowthRow { n, epsilon: z * scale, envelope: 3.0 * (nf + d).log2() * scale, tail_max: 0.0 }
        })
        .collect();
    let mut running = f64::NEG_INFINITY;
    for row in rows.iter_mut().rev() {
        running = running.max(row.epsilon);
        row.tail_max = running;
    }
    GrowthReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(s: &str) -> SymbolSeq {
        SymbolSeq::from_digits(Alphabet::BINARY, s).unwrap()
    }

    #[test]
    fn joint_bound_examples() {
        let r = check_ppm_bounds(&bin("11"), &PpmConfig::full(Alphabet::BINARY)).unwrap();
        let (lhs, rhs) = r.rows[2].joint.unwrap();
        assert!((lhs - 1.7776).abs() < 1e-4);
        assert!((rhs - 5.1699).abs() < 1e-4);
        assert!(r.pass());
        let r = check_ppm_bounds(&bin("1"), &PpmConfig::full(Alphabet::BINARY)).unwrap();
        assert_eq!(r.rows[1].joint, Some((1.0, 3.0)));
    }

    #[test]
    fn bounds_need_laplace() {
        let cfg = PpmConfig::full(Alphabet::BINARY).with_smoothing(crate::base::Rational::HALF);
        assert!(check_ppm_bounds(&bin("01"), &cfg).is_err());
    }

    #[test]
    fn exhaustive_binary_length_ten() {
        let cfg = PpmConfig::full(Alphabet::BINARY);
        for bits in 0u32..1 << 10 {
            let x = SymbolSeq::new(Alphabet::BINARY, (0..10).map(|i| (bits >> i) as usize & 1).collect())
                .unwrap();
            let r = check_ppm_bounds(&x, &cfg).unwrap();
            assert!(r.pass(), "{x}");
        }
    }

    #[test]
    fn sandwich_examples() {
        let r = check_entropy_sandwich(&bin("0011"), 0).unwrap();
        assert!(r.pass());
        assert!((r.upper - 2.0 * (E * E * 4.0).log2()).abs() < 1e-12);
        // k = n - 2
        assert!(check_entropy_sandwich(&bin("0110"), 2).unwrap().pass());
        assert!(check_entropy_sandwich(&bin("011"), 2).is_err());
    }

    #[test]
    fn growth_envelope_values() {
        let trace = vec![1.0; 101];
        let r = check_growth_condition(&trace, Alphabet::BINARY);
        let last = r.rows.last().unwrap();
        assert_eq!(last.n, 100);
        assert!((last.envelope - 4.2956).abs() < 1e-4);
        // n = 2 evaluates finitely
        assert!(r.rows[0].epsilon.is_finite() && r.rows[0].n == 2);
        // the envelope peaks near n = 20 and decreases from there on
        assert!(r.rows.windows(2).filter(|w| w[0].n >= 30).all(|w| w[1].envelope < w[0].envelope));
        assert!(r.within_envelope());
    }
}
