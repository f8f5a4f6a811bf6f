//! The PPM measures.
//!
//! `PPM_k` is the adaptive order-`k` Markov measure with additive smoothing
//! `alpha`: the first `k+1` symbols are uniform and every later symbol is
//! coded with
//!
//! ```text
//!   (N(x_{i-k}^i | x_1^{i-1}) + alpha) / (N(x_{i-k}^{i-1} | x_1^{i-2}) + D alpha)
//! ```
//!
//! The total measure mixes all orders with weights
//! `w_k = 1/(k+1) - 1/(k+2)`. Since `PPM_k(x_1^n) = D^{-n}` for `k >= n-1`
//! the tail of the series has the closed form `D^{-n} / n`.
//!
//! [`Mode::Capped`] keeps orders `0..K` and hands the whole tail weight
//! `1/(K+1)` to `PPM_K`, which is again a probability measure. Reports
//! label it "capped".

mod bounds;
mod counts;
pub mod exact;
mod model;
mod snapshot;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::base::{Alphabet, LogProb, Rational, Symbol, SymbolSeq};
use crate::error::{Error, Result};

pub use bounds::{
    check_entropy_sandwich, check_growth_condition, check_ppm_bounds, BoundRow, BoundsReport,
    GrowthReport, GrowthRow, SandwichReport,
};
pub use counts::{gram_key, ContextCounts, OrderCounts, SuffixCounts};
pub use model::{ppm_step, PpmModel};
pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

/// Default length limit for the all-orders mixture.
pub const DEFAULT_FULL_LIMIT: usize = 4096;
/// Default cap on hash-table entries in capped mode.
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// The exact infinite mixture over all orders.
    Full,
    /// Orders `0..=K`, tail weight reassigned to order `K`.
    Capped(usize),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Full => f.write_str("full"),
            Mode::Capped(k) => write!(f, "capped({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpmConfig {
    pub alphabet: Alphabet,
    pub mode: Mode,
    /// Additive smoothing; 1 is Laplace, 1/2 is Krichevsky-Trofimov.
    pub smoothing: Rational,
    /// Maximum number of symbols a full-mode model accepts.
    pub full_limit: usize,
    /// Maximum number of hash-table entries in capped mode.
    pub max_entries: usize,
}

impl PpmConfig {
    pub fn full(alphabet: Alphabet) -> Self {
        PpmConfig {
            alphabet,
            mode: Mode::Full,
            smoothing: Rational::ONE,
            full_limit: DEFAULT_FULL_LIMIT,
            max_entries: DEFAULT_MAX_ENTRIES,
        }
    }

    pub fn capped(alphabet: Alphabet, max_order: usize) -> Self {
        PpmConfig { mode: Mode::Capped(max_order), ..PpmConfig::full(alphabet) }
    }

    pub fn with_smoothing(mut self, alpha: Rational) -> Self {
        self.smoothing = alpha;
        self
    }

    pub fn with_full_limit(mut self, limit: usize) -> Self {
        self.full_limit = limit;
        self
    }

    pub fn with_max_entries(mut self, cap: usize) -> Self {
        self.max_entries = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.smoothing.num == 0 {
            return Err(Error::InvalidConfig("smoothing must be positive".into()));
        }
        if let Mode::Capped(k) = self.mode {
            if !counts::key_fits(self.alphabet, k + 1) {
                return Err(Error::InvalidConfig(format!(
                    "order {k} is too large for a {}-symbol alphabet",
                    self.alphabet.size()
                )));
            }
        }
        Ok(())
    }

    pub fn is_laplace(&self) -> bool {
        self.smoothing == Rational::ONE
    }
}

/// `log2 w_k` with `w_k = 1/((k+1)(k+2))`.
#[inline]
pub fn log2_weight(k: usize) -> f64 {
    -(((k + 1) as f64) * ((k + 2) as f64)).log2()
}

/// `N(w | x)`: occurrences of `w` in `x`, overlaps included. The empty word
/// occurs `|x| + 1` times.
pub fn ngram_count(x: &SymbolSeq, w: &[Symbol]) -> u64 {
    let x = x.as_slice();
    if w.is_empty() {
        return x.len() as u64 + 1;
    }
    if w.len() > x.len() {
        return 0;
    }
    x.windows(w.len()).filter(|win| *win == w).count() as u64
}

/// `-log2 PPM_k(x_1^n)` evaluated straight from the product formula, with
/// smoothing `alpha` in place of the `+1`.
pub fn ppm_k_neg_log(x: &SymbolSeq, k: usize, alpha: Rational) -> LogProb {
    let alphabet = x.alphabet();
    let d = alphabet.size() as f64;
    let xs = x.as_slice();
    let n = xs.len();
    if k + 1 >= n {
        return LogProb::from_bits(n as f64 * alphabet.log2_size());
    }
    let a = alpha.to_f64();
    // (k+1)-gram counts over x_1^{i-1} and k-gram counts over x_1^{i-2}
    let mut grams: HashMap<&[Symbol], u64> = HashMap::new();
    let mut contexts: HashMap<&[Symbol], u64> = HashMap::new();
    let mut bits = (k + 1) as f64 * alphabet.log2_size();
    // 1-based positions: grams end at e >= k+1, contexts at e >= k
    let mut next_gram_end = k + 1;
    let mut next_ctx_end = k;
    for i in (k + 2)..=n {
        while next_gram_end < i {
            *grams.entry(&xs[next_gram_end - k - 1..next_gram_end]).or_insert(0) += 1;
            next_gram_end += 1;
        }
        while next_ctx_end + 1 < i {
            *contexts.entry(&xs[next_ctx_end - k..next_ctx_end]).or_insert(0) += 1;
            next_ctx_end += 1;
        }
        let g = grams.get(&xs[i - k - 1..i]).copied().unwrap_or(0) as f64;
        let c = contexts.get(&xs[i - k - 1..i - 1]).copied().unwrap_or(0) as f64;
        bits -= ((g + a) / (c + d * a)).log2();
    }
    LogProb::from_bits(bits)
}

/// `-log2 PPM(x_1^n)` for the configured mixture.
pub fn ppm_neg_log(x: &SymbolSeq, config: &PpmConfig) -> Result<LogProb> {
    config.alphabet.check_same(x.alphabet())?;
    let mut model = PpmModel::new(config.clone())?;
    for &s in x.as_slice() {
        model.ingest(s)?;
    }
    Ok(model.mixture_neg_log())
}

/// Empirical conditional entropy of order `k` in bits per symbol.
pub fn empirical_entropy(x: &SymbolSeq, k: usize) -> Result<f64> {
    let xs = x.as_slice();
    let n = xs.len();
    if n <= k {
        return Err(Error::TooShort { len: n, order: k });
    }
    let mut grams: HashMap<&[Symbol], u64> = HashMap::new();
    for w in xs.windows(k + 1) {
        *grams.entry(w).or_insert(0) += 1;
    }
    // N(w_1^k | x_1^{n-1}); the empty context occurs n times in x_1^{n-1}
    let mut contexts: HashMap<&[Symbol], u64> = HashMap::new();
    if k > 0 {
        for w in xs[..n - 1].windows(k) {
            *contexts.entry(w).or_insert(0) += 1;
        }
    }
    let norm = (n - k) as f64;
    let h = grams
        .iter()
        .map(|(w, &c)| {
            let ctx = if k == 0 { n as u64 } else { contexts[&w[..k]] };
            c as f64 / norm * (ctx as f64 / c as f64).log2()
        })
        .sum();
    Ok(h)
}
