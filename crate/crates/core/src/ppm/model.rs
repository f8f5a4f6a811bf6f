use crate::base::{Alphabet, Dist, LogProb, SeqModel, Symbol};
use crate::error::{Error, Result};

use super::counts::{ContextCounts, OrderCounts, SuffixCounts};
use super::{log2_weight, Mode, PpmConfig};

#[derive(Debug, Clone)]
pub(crate) enum Counter {
    Tables(ContextCounts),
    Suffix(SuffixCounts),
}

/// Work shared between [`PpmModel::conditional`] and the following update.
#[derive(Debug, Clone)]
struct StepCache {
    /// `PPM_k(a | x_1^n)`, row-major over the tracked orders.
    per_order: Vec<f64>,
    mixture: Vec<f64>,
}

/// Sequential PPM mixture.
///
/// Tracks `log2 PPM_k(x_1^n)` for every order that still differs from the
/// uniform tail, and the running chain-rule code length
/// `sum_i -log2 PPM(x_{i+1} | x_1^i)`.
#[derive(Debug, Clone)]
pub struct PpmModel {
    config: PpmConfig,
    counter: Counter,
    /// `log2 PPM_k(x_1^n)`: orders `0..=K` (capped) or `0..n` (full).
    order_log2: Vec<f64>,
    total_neg_log: f64,
    n: usize,
    scratch: OrderCounts,
    cache: Option<StepCache>,
}

impl PpmModel {
    pub fn new(config: PpmConfig) -> Result<Self> {
        config.validate()?;
        let (counter, order_log2) = match config.mode {
            Mode::Capped(k) => (
                Counter::Tables(ContextCounts::new(config.alphabet, k, config.max_entries)?),
                vec![0.0; k + 1],
            ),
            Mode::Full => (Counter::Suffix(SuffixCounts::new(config.alphabet)), Vec::new()),
        };
        Ok(PpmModel {
            config,
            counter,
            order_log2,
            total_neg_log: 0.0,
            n: 0,
            scratch: OrderCounts::default(),
            cache: None,
        })
    }

    pub(crate) fn from_parts(
        config: PpmConfig,
        counter: Counter,
        order_log2: Vec<f64>,
        total_neg_log: f64,
        n: usize,
    ) -> Self {
        PpmModel {
            config,
            counter,
            order_log2,
            total_neg_log,
            n,
            scratch: OrderCounts::default(),
            cache: None,
        }
    }

    pub fn config(&self) -> &PpmConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Capped-mode count tables.
    pub fn counts(&self) -> Option<&ContextCounts> {
        match &self.counter {
            Counter::Tables(t) => Some(t),
            Counter::Suffix(_) => None,
        }
    }

    pub(crate) fn counter(&self) -> &Counter {
        &self.counter
    }

    pub(crate) fn order_log2(&self) -> &[f64] {
        &self.order_log2
    }

    /// Accumulated `sum_i -log2 PPM(x_{i+1} | x_1^i)`.
    pub fn total_neg_log(&self) -> LogProb {
        LogProb::from_bits(self.total_neg_log)
    }

    /// `-log2 PPM_k(x_1^n)` from the per-order accumulator.
    pub fn order_neg_log(&self, k: usize) -> LogProb {
        match self.order_log2.get(k) {
            Some(&lp) => LogProb::from_bits(-lp),
            // full mode: order k >= n is uniform so far
            None => LogProb::from_bits(self.n as f64 * self.config.alphabet.log2_size()),
        }
    }

    /// `-log2 PPM(x_1^n)` as a direct mixture of the per-order values.
    pub fn mixture_neg_log(&self) -> LogProb {
        let terms = self.log2_mixture_terms();
        LogProb::from_bits(-crate::base::log2_sum_exp2(&terms))
    }

    /// `log2` of every weighted component `w_k PPM_k(x_1^n)`; in full mode the
    /// last entry is the closed-form tail `D^{-n} / (n+1)` over orders `>= n`.
    fn log2_mixture_terms(&self) -> Vec<f64> {
        match self.config.mode {
            Mode::Capped(kmax) => self
                .order_log2
                .iter()
                .enumerate()
                .map(|(k, lp)| {
                    let w = if k == kmax { -((kmax + 1) as f64).log2() } else { log2_weight(k) };
                    w + lp
                })
                .collect(),
            Mode::Full => {
                let mut terms: Vec<f64> =
                    self.order_log2.iter().enumerate().map(|(k, lp)| log2_weight(k) + lp).collect();
                terms.push(
                    -((self.n + 1) as f64).log2() - self.n as f64 * self.config.alphabet.log2_size(),
                );
                terms
            }
        }
    }

    fn compute_step(&mut self) -> &StepCache {
        if self.cache.is_none() {
            let d = self.config.alphabet.size();
            let alpha = self.config.smoothing.to_f64();
            match &mut self.counter {
                Counter::Tables(t) => t.fill(&mut self.scratch),
                Counter::Suffix(s) => s.fill(&mut self.scratch),
            }
            let orders = self.order_log2.len();
            let uniform = 1.0 / d as f64;
            let mut per_order = vec![uniform; orders * d];
            for k in 0..self.scratch.orders().min(orders) {
                let total = self.scratch.total(k);
                if total == 0 {
                    continue;
                }
                let den = total as f64 + d as f64 * alpha;
                let row = &mut per_order[k * d..(k + 1) * d];
                for (slot, &c) in row.iter_mut().zip(self.scratch.counts(k)) {
                    *slot = (c as f64 + alpha) / den;
                }
            }

            let terms = self.log2_mixture_terms();
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let post: Vec<f64> = terms.iter().map(|t| (t - max).exp2()).collect();
            let z: f64 = post.iter().sum();
            let mut mixture = vec![0.0; d];
            for k in 0..orders {
                let pk = post[k] / z;
                for (m, c) in mixture.iter_mut().zip(&per_order[k * d..(k + 1) * d]) {
                    *m += pk * c;
                }
            }
            if post.len() > orders {
                // full-mode tail, uniform conditional
                let pt = post[orders] / z * uniform;
                mixture.iter_mut().for_each(|m| *m += pt);
            }
            self.cache = Some(StepCache { per_order, mixture });
        }
        self.cache.as_ref().expect("cache filled above")
    }

    /// `PPM(. | x_1^n)`.
    pub fn conditional(&mut self) -> Dist {
        let alphabet = self.config.alphabet;
        let mixture = self.compute_step().mixture.clone();
        Dist::from_probs_unchecked(alphabet, mixture)
    }

    /// `PPM_k(. | x_1^n)` for each tracked order, row-major.
    pub fn order_conditionals(&mut self) -> Vec<f64> {
        self.compute_step().per_order.clone()
    }

    /// Appends `symbol`, updating counts and all accumulators.
    pub fn ingest(&mut self, symbol: Symbol) -> Result<()> {
        self.config.alphabet.check(symbol)?;
        if self.config.mode == Mode::Full && self.n >= self.config.full_limit {
            return Err(Error::FullModeLimit { limit: self.config.full_limit });
        }
        let d = self.config.alphabet.size();
        self.compute_step();
        let cache = self.cache.take().expect("computed above");
        // counts first: a capacity error leaves the model untouched
        match &mut self.counter {
            Counter::Tables(t) => {
                if let Err(e) = t.push(symbol) {
                    self.cache = Some(cache);
                    return Err(e);
                }
            }
            Counter::Suffix(s) => s.push(symbol)?,
        }
        for (k, lp) in self.order_log2.iter_mut().enumerate() {
            *lp += cache.per_order[k * d + symbol].log2();
        }
        self.total_neg_log -= cache.mixture[symbol].log2();
        if self.config.mode == Mode::Full {
            // order n becomes tracked: PPM_n(x_1^{n+1}) = D^{-(n+1)}
            self.order_log2.push(-((self.n + 1) as f64) * self.config.alphabet.log2_size());
        }
        self.n += 1;
        Ok(())
    }
}

/// Returns `PPM(. | x_1^n)` and then ingests `next`.
pub fn ppm_step(model: &mut PpmModel, next: Symbol) -> Result<Dist> {
    model.config.alphabet.check(next)?;
    let dist = model.conditional();
    model.ingest(next)?;
    Ok(dist)
}

impl SeqModel for PpmModel {
    fn alphabet(&self) -> Alphabet {
        self.config.alphabet
    }

    fn position(&self) -> usize {
        self.n
    }

    fn conditional(&mut self) -> Dist {
        PpmModel::conditional(self)
    }

    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        self.ingest(symbol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{Rational, SymbolSeq};
    use crate::ppm::{ppm_k_neg_log, ppm_neg_log};
    use proptest::prelude::*;

    fn bin() -> Alphabet {
        Alphabet::BINARY
    }

    #[test]
    fn fresh_model_is_uniform() {
        for cfg in [PpmConfig::full(bin()), PpmConfig::capped(bin(), 3)] {
            let mut m = PpmModel::new(cfg).unwrap();
            assert_eq!(m.conditional().probs(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn full_mode_after_one_zero() {
        let mut m = PpmModel::new(PpmConfig::full(bin())).unwrap();
        ppm_step(&mut m, 0).unwrap();
        let c = m.conditional();
        assert!((c.prob(0) - 7.0 / 12.0).abs() < 1e-15);
        assert!((c.prob(1) - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn capped_zero_is_laplace() {
        let mut m = PpmModel::new(PpmConfig::capped(bin(), 0)).unwrap();
        ppm_step(&mut m, 0).unwrap();
        let c = m.conditional();
        assert!((c.prob(0) - 2.0 / 3.0).abs() < 1e-15);
        ppm_step(&mut m, 1).unwrap();
        // counts (1,1) after "01": (1+1)/(2+2)
        assert!((m.conditional().prob(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_alphabet_symbol() {
        let mut m = PpmModel::new(PpmConfig::full(bin())).unwrap();
        assert!(matches!(ppm_step(&mut m, 2), Err(Error::SymbolOutOfRange { .. })));
        assert_eq!(m.len(), 0);
    }

    #[test]
    fn full_limit_enforced() {
        let mut m = PpmModel::new(PpmConfig::full(bin()).with_full_limit(3)).unwrap();
        for _ in 0..3 {
            m.ingest(1).unwrap();
        }
        assert_eq!(m.ingest(1), Err(Error::FullModeLimit { limit: 3 }));
    }

    #[test]
    fn krichevsky_trofimov_order_zero() {
        let cfg = PpmConfig::capped(bin(), 0).with_smoothing(Rational::HALF);
        let mut m = PpmModel::new(cfg).unwrap();
        m.ingest(0).unwrap();
        m.ingest(0).unwrap();
        // (2 + 1/2) / (2 + 1)
        assert!((m.conditional().prob(0) - 2.5 / 3.0).abs() < 1e-15);
    }

    fn random_seq() -> impl Strategy<Value = SymbolSeq> {
        (2usize..5).prop_flat_map(|d| {
            prop::collection::vec(0..d, 0..120)
                .prop_map(move |v| SymbolSeq::new(Alphabet::new(d).unwrap(), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn chain_rule_matches_mixture(x in random_seq(), k in 0usize..6, full in any::<bool>()) {
            let cfg = if full { PpmConfig::full(x.alphabet()) } else { PpmConfig::capped(x.alphabet(), k) };
            let mut m = PpmModel::new(cfg.clone()).unwrap();
            let mut sum = 0.0;
            for &s in x.as_slice() {
                let c = ppm_step(&mut m, s).unwrap();
                prop_assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                sum -= c.prob(s).log2();
            }
            let direct = ppm_neg_log(&x, &cfg).unwrap().bits();
            prop_assert!((sum - direct).abs() < 1e-9, "{} vs {}", sum, direct);
            prop_assert!((m.total_neg_log().bits() - sum).abs() < 1e-9);
        }

        #[test]
        fn per_order_accumulators_match_direct_formula(x in random_seq(), k in 0usize..6) {
            let cfg = PpmConfig::capped(x.alphabet(), k);
            let mut m = PpmModel::new(cfg).unwrap();
            let mut f = PpmModel::new(PpmConfig::full(x.alphabet())).unwrap();
            for &s in x.as_slice() {
                m.ingest(s).unwrap();
                f.ingest(s).unwrap();
            }
            for j in 0..=k {
                let direct = ppm_k_neg_log(&x, j, Rational::ONE).bits();
                prop_assert!((m.order_neg_log(j).bits() - direct).abs() < 1e-9);
                prop_assert!((f.order_neg_log(j).bits() - direct).abs() < 1e-9);
            }
        }

        #[test]
        fn capped_conditional_floor(x in random_seq(), k in 0usize..6) {
            let d = x.alphabet().size();
            let mut m = PpmModel::new(PpmConfig::capped(x.alphabet(), k)).unwrap();
            for (n, &s) in x.as_slice().iter().enumerate() {
                let floor = 1.0 / (n + d) as f64;
                let orders = m.order_conditionals();
                prop_assert!(orders.iter().all(|&c| c >= floor - 1e-15));
                let c = ppm_step(&mut m, s).unwrap();
                prop_assert!(c.probs().iter().all(|&p| p >= floor - 1e-15));
            }
        }

        #[test]
        fn capped_equals_full_for_short_strings(x in random_seq(), k in 0usize..8) {
            let n = x.len().min(k + 1);
            let x = x.prefix(n);
            let a = ppm_neg_log(&x, &PpmConfig::capped(x.alphabet(), k)).unwrap().bits();
            let b = ppm_neg_log(&x, &PpmConfig::full(x.alphabet())).unwrap().bits();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
