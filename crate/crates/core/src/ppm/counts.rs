//! n-gram frequency tables.
//!
//! Two count providers back the PPM model:
//!
//! * [`ContextCounts`] keeps one hash table of `(k+1)`-gram counts and one of
//!   `k`-gram context totals per order `k <= K`. Used by capped mode.
//! * [`SuffixCounts`] keeps the raw history together with, for every earlier
//!   position `j`, the length of the longest common suffix of `x_1^j` and
//!   `x_1^n`. The count of any context of any order can be read off that
//!   array, which is what the all-orders mixture needs.
//!
//! Both fill an [`OrderCounts`] buffer: for each order `k`, the context total
//! `N(x_{n-k+1}^n | x_1^{n-1})` and the per-symbol continuation counts
//! `N(x_{n-k+1}^n a | x_1^n)`.

use std::collections::{HashMap, VecDeque};
use std::hash::{BuildHasherDefault, Hasher};

use crate::base::{Alphabet, Symbol};
use crate::error::{Error, Result};

/// Hasher for `u128` gram keys (multiply-xorshift mix).
#[derive(Default, Clone, Copy)]
pub struct GramHasher(u64);

impl Hasher for GramHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_u128(&mut self, v: u128) {
        let lo = v as u64;
        let hi = (v >> 64) as u64;
        let mut z = self.0 ^ lo ^ hi.rotate_left(29).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        z = (z ^ (z >> 32)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 29)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        self.0 = z ^ (z >> 32);
    }
}

pub type GramTable = HashMap<u128, u64, BuildHasherDefault<GramHasher>>;

/// Per-order counts for the current position.
#[derive(Debug, Clone, Default)]
pub struct OrderCounts {
    orders: usize,
    d: usize,
    totals: Vec<u64>,
    counts: Vec<u64>,
}

impl OrderCounts {
    fn reset(&mut self, orders: usize, d: usize) {
        self.orders = orders;
        self.d = d;
        self.totals.clear();
        self.totals.resize(orders, 0);
        self.counts.clear();
        self.counts.resize(orders * d, 0);
    }

    /// Number of orders filled (`0..orders`).
    pub fn orders(&self) -> usize {
        self.orders
    }

    /// `N(context_k | x_1^{n-1})`.
    pub fn total(&self, k: usize) -> u64 {
        self.totals[k]
    }

    /// `N(context_k a | x_1^n)` for every symbol `a`.
    pub fn counts(&self, k: usize) -> &[u64] {
        &self.counts[k * self.d..(k + 1) * self.d]
    }
}

/// Encodes a gram oldest-first in base `D`.
pub fn gram_key(alphabet: Alphabet, gram: &[Symbol]) -> u128 {
    let d = alphabet.size() as u128;
    gram.iter().fold(0u128, |acc, &s| acc * d + s as u128)
}

/// Whether every gram of length `len` has a `u128` key.
pub fn key_fits(alphabet: Alphabet, len: usize) -> bool {
    if len == 0 {
        return true;
    }
    // largest key is D^len - 1 = (D-1) D^{len-1} + (D^{len-1} - 1)
    let d = alphabet.size() as u128;
    d.checked_pow(len as u32 - 1)
        .and_then(|p| p.checked_mul(d - 1).and_then(|v| v.checked_add(p - 1)))
        .is_some()
}

/// Per-order hash tables of `(k+1)`-gram counts and `k`-gram context totals
/// for `k = 0..=K`.
#[derive(Debug, Clone)]
pub struct ContextCounts {
    alphabet: Alphabet,
    max_order: usize,
    grams: Vec<GramTable>,
    contexts: Vec<GramTable>,
    recent: VecDeque<Symbol>,
    stream_len: usize,
    entries: usize,
    cap: usize,
}

impl ContextCounts {
    pub fn new(alphabet: Alphabet, max_order: usize, cap: usize) -> Result<Self> {
        if !key_fits(alphabet, max_order + 1) {
            return Err(Error::InvalidConfig(format!(
                "grams of length {} over {} symbols do not fit a 128-bit key",
                max_order + 1,
                alphabet.size()
            )));
        }
        Ok(ContextCounts {
            alphabet,
            max_order,
            grams: vec![GramTable::default(); max_order + 1],
            contexts: vec![GramTable::default(); max_order + 1],
            recent: VecDeque::with_capacity(max_order + 1),
            stream_len: 0,
            entries: 0,
            cap,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn stream_len(&self) -> usize {
        self.stream_len
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// The last `min(n, K)` symbols, oldest first.
    pub fn recent(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.recent.iter().copied()
    }

    /// Keys of the contexts `x_{n-k+1}^n` for `k = 0..=min(n, K)`.
    fn context_keys(&self, out: &mut Vec<u128>) {
        out.clear();
        out.push(0);
        let d = self.alphabet.size() as u128;
        let mut key = 0u128;
        let mut pow = 1u128;
        for (i, &s) in self.recent.iter().rev().enumerate() {
            if i >= self.max_order {
                break;
            }
            key += s as u128 * pow;
            pow = pow.wrapping_mul(d);
            out.push(key);
        }
    }

    /// Counts for orders `0..=min(n, K)`; higher orders have no context yet.
    pub fn fill(&self, out: &mut OrderCounts) {
        let d = self.alphabet.size();
        let mut keys = Vec::with_capacity(self.max_order + 1);
        self.context_keys(&mut keys);
        out.reset(keys.len(), d);
        for (k, &ctx) in keys.iter().enumerate() {
            let total = self.contexts[k].get(&ctx).copied().unwrap_or(0);
            out.totals[k] = total;
            if total == 0 {
                continue;
            }
            let base = ctx * d as u128;
            let row = &mut out.counts[k * d..(k + 1) * d];
            for (a, slot) in row.iter_mut().enumerate() {
                *slot = self.grams[k].get(&(base + a as u128)).copied().unwrap_or(0);
            }
        }
    }

    pub fn push(&mut self, symbol: Symbol) -> Result<()> {
        self.alphabet.check(symbol)?;
        let mut keys = Vec::with_capacity(self.max_order + 1);
        self.context_keys(&mut keys);
        let d = self.alphabet.size() as u128;

        let fresh = keys
            .iter()
            .enumerate()
            .map(|(k, &ctx)| {
                !self.grams[k].contains_key(&(ctx * d + symbol as u128)) as usize
                    + !self.contexts[k].contains_key(&ctx) as usize
            })
            .sum::<usize>();
        if self.entries + fresh > self.cap {
            return Err(Error::CapacityExceeded { cap: self.cap });
        }
        self.entries += fresh;

        for (k, &ctx) in keys.iter().enumerate() {
            *self.grams[k].entry(ctx * d + symbol as u128).or_insert(0) += 1;
            *self.contexts[k].entry(ctx).or_insert(0) += 1;
        }
        if self.max_order > 0 {
            if self.recent.len() == self.max_order {
                self.recent.pop_front();
            }
            self.recent.push_back(symbol);
        }
        self.stream_len += 1;
        Ok(())
    }

    /// `N(w | x_1^n)` with the convention `N(lambda | x_1^n) = n + 1`.
    /// Returns `None` for grams longer than `K + 1`.
    pub fn frequency(&self, w: &[Symbol]) -> Option<u64> {
        match w.len() {
            0 => Some(self.stream_len as u64 + 1),
            m if m <= self.max_order + 1 => {
                Some(self.grams[m - 1].get(&gram_key(self.alphabet, w)).copied().unwrap_or(0))
            }
            _ => None,
        }
    }

    /// Context total `N(w | x_1^{n-1})` for `|w| <= K`.
    pub fn context_total(&self, w: &[Symbol]) -> Option<u64> {
        (w.len() <= self.max_order)
            .then(|| self.contexts[w.len()].get(&gram_key(self.alphabet, w)).copied().unwrap_or(0))
    }

    pub(crate) fn grams(&self) -> &[GramTable] {
        &self.grams
    }

    pub(crate) fn contexts(&self) -> &[GramTable] {
        &self.contexts
    }

    pub(crate) fn from_parts(
        alphabet: Alphabet,
        max_order: usize,
        cap: usize,
        grams: Vec<GramTable>,
        contexts: Vec<GramTable>,
        recent: Vec<Symbol>,
        stream_len: usize,
    ) -> Result<Self> {
        if grams.len() != max_order + 1 || contexts.len() != max_order + 1 {
            return Err(Error::CorruptPayload("table count does not match order"));
        }
        if recent.len() != stream_len.min(max_order) || recent.iter().any(|&s| !alphabet.contains(s)) {
            return Err(Error::CorruptPayload("recent-context buffer is inconsistent"));
        }
        let entries = grams.iter().chain(contexts.iter()).map(|t| t.len()).sum();
        Ok(ContextCounts {
            alphabet,
            max_order,
            grams,
            contexts,
            recent: recent.into(),
            stream_len,
            entries,
            cap,
        })
    }
}

/// Exact counts for every order, from suffix-match lengths.
#[derive(Debug, Clone)]
pub struct SuffixCounts {
    alphabet: Alphabet,
    history: Vec<Symbol>,
    /// `matches[j]` = common suffix length of `x_1^j` and `x_1^n`, `j = 0..n`.
    matches: Vec<u32>,
    hist: Vec<u64>,
}

impl SuffixCounts {
    pub fn new(alphabet: Alphabet) -> Self {
        SuffixCounts { alphabet, history: Vec::new(), matches: Vec::new(), hist: Vec::new() }
    }

    pub fn history(&self) -> &[Symbol] {
        &self.history
    }

    /// Counts for orders `0..n` (order `n-1` is the longest with a context
    /// that may have occurred before).
    pub fn fill(&mut self, out: &mut OrderCounts) {
        let n = self.history.len();
        let d = self.alphabet.size();
        out.reset(n, d);
        if n == 0 {
            return;
        }
        // hist[len * d + a]: positions j whose suffix match is exactly len
        // and that are followed by a.
        self.hist.clear();
        self.hist.resize(n * d, 0);
        for j in 0..n {
            let len = self.matches[j] as usize;
            self.hist[len * d + self.history[j]] += 1;
        }
        let mut running = vec![0u64; d];
        for k in (0..n).rev() {
            let row = &self.hist[k * d..(k + 1) * d];
            for a in 0..d {
                running[a] += row[a];
            }
            out.counts[k * d..(k + 1) * d].copy_from_slice(&running);
            out.totals[k] = running.iter().sum();
        }
    }

    pub fn push(&mut self, symbol: Symbol) -> Result<()> {
        self.alphabet.check(symbol)?;
        let n = self.history.len();
        // new position j = n, then update j = n..1 against the extended string
        self.matches.push(0);
        for j in (1..=n).rev() {
            self.matches[j] = if self.history[j - 1] == symbol { self.matches[j - 1] + 1 } else { 0 };
        }
        if n > 0 {
            self.matches[0] = 0;
        }
        self.history.push(symbol);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppm::ngram_count;
    use crate::base::SymbolSeq;
    use proptest::prelude::*;

    fn brute_order_counts(x: &[Symbol], d: usize, k: usize) -> (u64, Vec<u64>) {
        let alphabet = Alphabet::new(d).unwrap();
        let n = x.len();
        let seq = SymbolSeq::new(alphabet, x.to_vec()).unwrap();
        let ctx = &x[n - k..];
        let total = ngram_count(&SymbolSeq::new(alphabet, x[..n - 1].to_vec()).unwrap(), ctx);
        let counts = (0..d)
            .map(|a| {
                let mut g = ctx.to_vec();
                g.push(a);
                ngram_count(&seq, &g)
            })
            .collect();
        (total, counts)
    }

    proptest! {
        #[test]
        fn providers_agree_with_brute_force(x in prop::collection::vec(0usize..3, 1..40), kmax in 0usize..5) {
            let alphabet = Alphabet::new(3).unwrap();
            let mut tables = ContextCounts::new(alphabet, kmax, usize::MAX).unwrap();
            let mut suffix = SuffixCounts::new(alphabet);
            let (mut a, mut b) = (OrderCounts::default(), OrderCounts::default());
            for i in 0..x.len() {
                tables.fill(&mut a);
                suffix.fill(&mut b);
                prop_assert_eq!(a.orders(), i.min(kmax) + 1);
                prop_assert_eq!(b.orders(), i);
                for k in 0..a.orders().min(b.orders()) {
                    prop_assert_eq!(a.total(k), b.total(k));
                    prop_assert_eq!(a.counts(k), b.counts(k));
                    let (t, c) = brute_order_counts(&x[..i], 3, k);
                    prop_assert_eq!(a.total(k), t);
                    prop_assert_eq!(a.counts(k), &c[..]);
                }
                tables.push(x[i]).unwrap();
                suffix.push(x[i]).unwrap();
            }
            // context totals equal the sum of continuation counts
            for k in 0..=kmax {
                for (&ctx, &tot) in &tables.contexts[k] {
                    let s: u64 = (0..3u128).map(|c| tables.grams[k].get(&(ctx * 3 + c)).copied().unwrap_or(0)).sum();
                    prop_assert_eq!(s, tot);
                }
            }
            prop_assert_eq!(tables.frequency(&[]), Some(x.len() as u64 + 1));
        }
    }

    #[test]
    fn capacity_is_enforced_without_mutation() {
        let mut t = ContextCounts::new(Alphabet::BINARY, 2, 5).unwrap();
        t.push(0).unwrap(); // 2 entries
        t.push(1).unwrap(); // +3
        let before = t.entries();
        assert_eq!(t.push(1), Err(Error::CapacityExceeded { cap: 5 }));
        assert_eq!(t.entries(), before);
        assert_eq!(t.stream_len(), 2);
    }

    #[test]
    fn frequency_convention() {
        let mut t = ContextCounts::new(Alphabet::BINARY, 1, usize::MAX).unwrap();
        for s in [0, 1, 0, 1] {
            t.push(s).unwrap();
        }
        assert_eq!(t.frequency(&[]), Some(5));
        assert_eq!(t.frequency(&[0, 1]), Some(2));
        assert_eq!(t.frequency(&[1, 1]), Some(0));
        assert_eq!(t.frequency(&[0, 1, 0]), None);
        assert_eq!(t.context_total(&[1]), Some(1));
    }

    #[test]
    fn wide_keys_rejected() {
        let bytes = Alphabet::new(256).unwrap();
        assert!(ContextCounts::new(bytes, 15, 10).is_ok());
        assert!(ContextCounts::new(bytes, 16, 10).is_err());
    }
}
