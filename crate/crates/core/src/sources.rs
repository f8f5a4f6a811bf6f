//! Stationary ergodic test sources with closed-form rates.
//!
//! A [`MarkovSource`] of order `m` is described by one transition row per
//! context `w` of length `m`. Contexts are keyed oldest-first in base `D`, so
//! after emitting `a` the chain moves from `w` to `(w * D + a) mod D^m`.
//! Sampling starts from the stationary law over contexts, which makes the
//! emitted process stationary.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;

use crate::base::{xlog2x_neg, Alphabet, Dist, Seed, SeqModel, Symbol, SymbolSeq};
use crate::error::{Error, Result};

/// Largest number of contexts for which the dense stationary solve is run.
pub const MAX_CONTEXTS: usize = 1024;

/// Residual allowed in `pi P = pi` after the linear solve.
pub const STATIONARY_TOLERANCE: f64 = 1e-10;

/// Anything that can emit a seeded sample path.
pub trait Source {
    fn alphabet(&self) -> Alphabet;

    /// `n` symbols, deterministic in `seed`.
    fn sample(&self, n: usize, seed: Seed) -> SymbolSeq;

    /// The source's own exact conditionals as a sequential model.
    fn model(&self) -> Box<dyn SeqModel + '_>;
}

#[derive(Debug, Clone)]
pub struct MarkovSource {
    alphabet: Alphabet,
    order: usize,
    rows: Vec<Dist>,
    cumulative: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    period: usize,
}

fn draw(cum: &[f64], u: f64) -> usize {
    match cum.iter().position(|&c| c > u) {
        Some(i) => i,
        // rounding left the total just below one: take the last live symbol
        None => cum.windows(2).rposition(|w| w[1] > w[0]).map_or(0, |i| i + 1),
    }
}

fn cumulative(d: &Dist) -> Vec<f64> {
    d.probs()
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

impl MarkovSource {
    /// Builds an order-`order` chain from `D^order` transition rows.
    ///
    /// The context graph must have exactly one closed communicating class so
    /// the stationary law is unique. Periodic chains are accepted.
    pub fn new(alphabet: Alphabet, order: usize, rows: Vec<Dist>) -> Result<Self> {
        let d = alphabet.size();
        let contexts = d
            .checked_pow(order as u32)
            .filter(|&c| c <= MAX_CONTEXTS)
            .ok_or_else(|| Error::InvalidSource(format!("{d}^{order} contexts exceed {MAX_CONTEXTS}")))?;
        if rows.len() != contexts {
            return Err(Error::InvalidSource(format!(
                "order {order} over {d} symbols needs {contexts} rows, got {}",
                rows.len()
            )));
        }
        for r in &rows {
            alphabet.check_same(r.alphabet())?;
        }

        let mut graph = DiGraph::<(), ()>::with_capacity(contexts, contexts * d);
        let nodes: Vec<_> = (0..contexts).map(|_| graph.add_node(())).collect();
        for (w, row) in rows.iter().enumerate() {
            for (a, &p) in row.probs().iter().enumerate() {
                if p > 0.0 {
                    graph.add_edge(nodes[w], nodes[(w * d + a) % contexts], ());
                }
            }
        }
        let sccs = tarjan_scc(&graph);
        let mut class_of = vec![0usize; contexts];
        for (c, scc) in sccs.iter().enumerate() {
            for n in scc {
                class_of[n.index()] = c;
            }
        }
        let closed: Vec<usize> = (0..sccs.len())
            .filter(|&c| {
                graph
                    .raw_edges()
                    .iter()
                    .all(|e| class_of[e.source().index()] != c || class_of[e.target().index()] == c)
            })
            .collect();
        if closed.len() != 1 {
            return Err(Error::InvalidSource(format!(
                "chain has {} closed classes, needs exactly one",
                closed.len()
            )));
        }
        let class: Vec<usize> = sccs[closed[0]].iter().map(|n| n.index()).collect();

        let stationary = solve_stationary(d, contexts, &rows)?;
        let period = period(d, contexts, &rows, &class);
        let cumulative = rows.iter().map(cumulative).collect();
        Ok(MarkovSource { alphabet, order, rows, cumulative, stationary, period })
    }

    /// Convenience constructor from plain rows.
    pub fn from_rows(alphabet: Alphabet, order: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| Dist::from_probs(alphabet, r.clone()))
            .collect::<Result<Vec<_>>>()?;
        MarkovSource::new(alphabet, order, rows)
    }

    /// The i.i.d. binary source with `P(1) = theta`, `0 < theta < 1`.
    pub fn bernoulli(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::OutOfRange { value: theta, range: "(0, 1)" });
        }
        MarkovSource::from_rows(Alphabet::BINARY, 0, &[vec![1.0 - theta, theta]])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn contexts(&self) -> usize {
        self.rows.len()
    }

    /// Transition row of the context with key `w`.
    pub fn row(&self, w: usize) -> &Dist {
        &self.rows[w]
    }

    /// Stationary law over contexts, keyed oldest-first.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Period of the closed class of the context chain (1 when aperiodic).
    pub fn period(&self) -> usize {
        self.period
    }

    /// `h_P = sum_w pi(w) H(row w)` in bits.
    pub fn entropy_rate(&self) -> f64 {
        self.stationary.iter().zip(&self.rows).map(|(&p, r)| p * r.entropy()).sum()
    }

    /// `u_P = sum_w pi(w) (1 - max_a row_w(a))`.
    pub fn unpredictability_rate(&self) -> f64 {
        self.stationary
            .iter()
            .zip(&self.rows)
            .map(|(&p, r)| p * (1.0 - r.max_prob()))
            .sum()
    }

    /// Probabilities of all blocks `x_1^k`, keyed oldest-first.
    pub fn block_probs(&self, k: usize) -> Result<Vec<f64>> {
        let d = self.alphabet.size();
        let m = self.order;
        let len = d
            .checked_pow(k as u32)
            .filter(|&l| l <= 1 << 24)
            .ok_or_else(|| Error::InvalidConfig(format!("{d}^{k} blocks are too many to enumerate")))?;
        if k <= m {
            let shift = d.pow((m - k) as u32);
            let mut out = vec![0.0; len];
            for (w, &p) in self.stationary.iter().enumerate() {
                out[w / shift] += p;
            }
            return Ok(out);
        }
        let mut probs = self.stationary.clone();
        for j in m..k {
            let width = d.pow(m as u32);
            let mut next = vec![0.0; probs.len() * d];
            for (w, &p) in probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let row = &self.rows[w % width];
                for (a, &q) in row.probs().iter().enumerate() {
                    next[w * d + a] = p * q;
                }
            }
            probs = next;
            debug_assert_eq!(probs.len(), d.pow(j as u32 + 1));
        }
        Ok(probs)
    }

    /// `P(X_1^{|w|} = w)`.
    pub fn block_prob(&self, w: &[Symbol]) -> Result<f64> {
        for &s in w {
            self.alphabet.check(s)?;
        }
        let d = self.alphabet.size();
        let m = self.order;
        if w.len() <= m {
            let key = w.iter().fold(0usize, |acc, &s| acc * d + s);
            let shift = d.pow((m - w.len()) as u32);
            return Ok(self.stationary[key * shift..(key + 1) * shift].iter().sum());
        }
        let width = self.rows.len();
        let mut ctx = w[..m].iter().fold(0usize, |acc, &s| acc * d + s);
        let mut p = self.stationary[ctx];
        for &s in &w[m..] {
            p *= self.rows[ctx].prob(s);
            ctx = (ctx * d + s) % width;
        }
        Ok(p)
    }

    /// `h_{k,P} = E[-log2 P(X_{k+1} | X_1^k)]`; equals [`Self::entropy_rate`]
    /// for `k >= order`.
    pub fn order_entropy(&self, k: usize) -> f64 {
        if k >= self.order {
            return self.entropy_rate();
        }
        let block_entropy = |j: usize| -> f64 {
            self.block_probs(j).expect("j < order").iter().map(|&p| xlog2x_neg(p)).sum()
        };
        (block_entropy(k + 1) - block_entropy(k)).max(0.0)
    }

    /// Exact `P(. | prefix)`. Prefixes shorter than the order are handled by
    /// marginalizing the stationary law.
    pub fn true_conditional(&self, prefix: &[Symbol]) -> Result<Dist> {
        let d = self.alphabet.size();
        let m = self.order;
        if prefix.len() >= m {
            for &s in prefix {
                self.alphabet.check(s)?;
            }
            let ctx = prefix[prefix.len() - m..].iter().fold(0usize, |acc, &s| acc * d + s);
            return Ok(self.rows[ctx].clone());
        }
        let base = self.block_prob(prefix)?;
        if base == 0.0 {
            return Err(Error::InvalidSource("prefix has probability zero".into()));
        }
        let mut ext = prefix.to_vec();
        let mut probs = Vec::with_capacity(d);
        for a in 0..d {
            ext.push(a);
            probs.push(self.block_prob(&ext)? / base);
            ext.pop();
        }
        Ok(renormalized(self.alphabet, probs))
    }

    /// The chain's conditionals as a [`SeqModel`].
    pub fn exact_model(&self) -> MarkovModel<'_> {
        MarkovModel { source: self, ctx: 0, prefix: Vec::with_capacity(self.order), n: 0 }
    }
}

fn renormalized(alphabet: Alphabet, mut probs: Vec<f64>) -> Dist {
    let s: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= s;
    }
    Dist::from_probs_unchecked(alphabet, probs)
}

fn solve_stationary(d: usize, contexts: usize, rows: &[Dist]) -> Result<Vec<f64>> {
    if contexts == 1 {
        return Ok(vec![1.0]);
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(contexts, contexts);
    for (w, row) in rows.iter().enumerate() {
        for (s, &p) in row.probs().iter().enumerate() {
            let v = (w * d + s) % contexts;
            a[(v, w)] += p;
        }
        a[(w, w)] -= 1.0;
    }
    for j in 0..contexts {
        a[(contexts - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(contexts);
    b[contexts - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidSource("stationary system is singular".into()))?;
    let mut pi: Vec<f64> = pi.iter().map(|&p| if p.abs() < 1e-15 { 0.0 } else { p }).collect();
    if pi.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidSource("stationary solve produced negative mass".into()));
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);

    let mut next = vec![0.0; contexts];
    for (w, row) in rows.iter().enumerate() {
        for (s, &p) in row.probs().iter().enumerate() {
            next[(w * d + s) % contexts] += pi[w] * p;
        }
    }
    let residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual > STATIONARY_TOLERANCE {
        return Err(Error::InvalidSource(format!("stationary residual {residual:e}")));
    }
    Ok(pi)
}

/// gcd of `level(u) + 1 - level(v)` over the edges inside the class.
fn period(d: usize, contexts: usize, rows: &[Dist], class: &[usize]) -> usize {
    let mut in_class = vec![false; contexts];
    for &c in class {
        in_class[c] = true;
    }
    let mut level = vec![usize::MAX; contexts];
    let mut queue = std::collections::VecDeque::from([class[0]]);
    level[class[0]] = 0;
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for (a, &p) in rows[u].probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let v = (u * d + a) % contexts;
            if !in_class[v] {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g.max(1)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Source for MarkovSource {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn sample(&self, n: usize, seed: Seed) -> SymbolSeq {
        let d = self.alphabet.size();
        let m = self.order;
        let mut rng = seed.rng();
        let pi_cum: Vec<f64> = self
            .stationary
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let mut ctx = draw(&pi_cum, rng.random::<f64>());
        let mut out = Vec::with_capacity(n);
        for j in (0..m).rev() {
            out.push(ctx / d.pow(j as u32) % d);
        }
        out.truncate(n);
        while out.len() < n {
            let s = draw(&self.cumulative[ctx], rng.random::<f64>());
            ctx = (ctx * d + s) % self.rows.len();
            out.push(s);
        }
        SymbolSeq::from_vec_unchecked(self.alphabet, out)
    }

    fn model(&self) -> Box<dyn SeqModel + '_> {
        Box::new(self.exact_model())
    }
}

/// Exact conditionals of a [`MarkovSource`].
#[derive(Debug, Clone)]
pub struct MarkovModel<'a> {
    source: &'a MarkovSource,
    ctx: usize,
    prefix: Vec<Symbol>,
    n: usize,
}

impl SeqModel for MarkovModel<'_> {
    fn alphabet(&self) -> Alphabet {
        self.source.alphabet
    }

    fn position(&self) -> usize {
        self.n
    }

    /// Falls back to the uniform law after a zero-probability start.
    fn conditional(&mut self) -> Dist {
        if self.n >= self.source.order {
            self.source.rows[self.ctx].clone()
        } else {
            self.source
                .true_conditional(&self.prefix)
                .unwrap_or_else(|_| Dist::uniform(self.source.alphabet))
        }
    }

    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        self.source.alphabet.check(symbol)?;
        let d = self.source.alphabet.size();
        self.ctx = (self.ctx * d + symbol) % self.source.rows.len();
        if self.n < self.source.order {
            self.prefix.push(symbol);
        }
        self.n += 1;
        Ok(())
    }
}

/// Observed process of a hidden chain of order at most one with
/// state-dependent emissions.
#[derive(Debug, Clone)]
pub struct HmmSource {
    hidden: MarkovSource,
    alphabet: Alphabet,
    emissions: Vec<Dist>,
    emission_cum: Vec<Vec<f64>>,
}

/// Batch-means Monte Carlo interval `mean +/- half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo()..=self.hi()).contains(&x)
    }
}

/// Mean and `z`-scaled batch-means half width of `values` in `batches` blocks.
pub fn batch_interval(values: &[f64], batches: usize, z: f64) -> Interval {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let size = n / batches.max(1);
    if batches < 2 || size == 0 {
        return Interval { mean, half_width: f64::INFINITY };
    }
    let means: Vec<f64> =
        values.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Interval { mean, half_width: z * (var / batches as f64).sqrt() }
}

impl HmmSource {
    pub fn new(hidden: MarkovSource, alphabet: Alphabet, emissions: Vec<Dist>) -> Result<Self> {
        if hidden.order > 1 {
            return Err(Error::Unsupported("hidden chains of order above one"));
        }
        if emissions.len() != hidden.alphabet.size() {
            return Err(Error::InvalidSource(format!(
                "{} hidden states need as many emission rows, got {}",
                hidden.alphabet.size(),
                emissions.len()
            )));
        }
        for e in &emissions {
            alphabet.check_same(e.alphabet())?;
        }
        let emission_cum = emissions.iter().map(cumulative).collect();
        Ok(HmmSource { hidden, alphabet, emissions, emission_cum })
    }

    pub fn hidden(&self) -> &MarkovSource {
        &self.hidden
    }

    pub fn emissions(&self) -> &[Dist] {
        &self.emissions
    }

    /// Forward filter: the exact `P(y_{n+1} | y_1^n)`.
    pub fn filter(&self) -> HmmFilter<'_> {
        let belief = self.hidden.block_probs(1).expect("one-symbol blocks");
        HmmFilter { source: self, belief, n: 0 }
    }

    /// Monte Carlo intervals for `h_P` and `u_P` from the filtered
    /// conditionals along one sample path of length `n`.
    pub fn rate_intervals(&self, n: usize, seed: Seed, batches: usize, z: f64) -> (Interval, Interval) {
        let y = self.sample(n, seed);
        let mut f = self.filter();
        let mut code = Vec::with_capacity(n);
        let mut miss = Vec::with_capacity(n);
        for &s in y.as_slice() {
            let c = f.conditional();
            code.push(-c.prob(s).log2());
            miss.push(1.0 - c.max_prob());
            f.observe(s).expect("sampled symbol");
        }
        (batch_interval(&code, batches, z), batch_interval(&miss, batches, z))
    }
}

impl Source for HmmSource {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn sample(&self, n: usize, seed: Seed) -> SymbolSeq {
        let states = self.hidden.sample(n, seed);
        let mut rng = seed.derive(1).rng();
        let out = states
            .as_slice()
            .iter()
            .map(|&h| draw(&self.emission_cum[h], rng.random::<f64>()))
            .collect();
        SymbolSeq::from_vec_unchecked(self.alphabet, out)
    }

    fn model(&self) -> Box<dyn SeqModel + '_> {
        Box::new(self.filter())
    }
}

/// Predictive belief over the current hidden state.
#[derive(Debug, Clone)]
pub struct HmmFilter<'a> {
    source: &'a HmmSource,
    belief: Vec<f64>,
    n: usize,
}

impl HmmFilter<'_> {
    pub fn belief(&self) -> &[f64] {
        &self.belief
    }
}

impl SeqModel for HmmFilter<'_> {
    fn alphabet(&self) -> Alphabet {
        self.source.alphabet
    }

    fn position(&self) -> usize {
        self.n
    }

    fn conditional(&mut self) -> Dist {
        let mut probs = vec![0.0; self.source.alphabet.size()];
        for (b, e) in self.belief.iter().zip(&self.source.emissions) {
            for (p, &q) in probs.iter_mut().zip(e.probs()) {
                *p += b * q;
            }
        }
        renormalized(self.source.alphabet, probs)
    }

    fn observe(&mut self, symbol: Symbol) -> Result<()> {
        self.source.alphabet.check(symbol)?;
        let hidden = &self.source.hidden;
        let k = hidden.alphabet.size();
        let post: Vec<f64> =
            self.belief.iter().zip(&self.source.emissions).map(|(b, e)| b * e.prob(symbol)).collect();
        let z: f64 = post.iter().sum();
        if z == 0.0 {
            // impossible observation: restart from the stationary marginal
            self.belief = hidden.block_probs(1)?;
        } else {
            let mut next = vec![0.0; k];
            for (h, &p) in post.iter().enumerate() {
                let row = if hidden.order == 0 { &hidden.rows[0] } else { &hidden.rows[h] };
                for (v, &t) in next.iter_mut().zip(row.probs()) {
                    *v += p / z * t;
                }
            }
            self.belief = next;
        }
        self.n += 1;
        Ok(())
    }
}

/// A zoo entry.
#[derive(Debug, Clone)]
pub enum ZooSource {
    Markov(MarkovSource),
    Hmm(HmmSource),
}

impl ZooSource {
    pub fn as_markov(&self) -> Option<&MarkovSource> {
        match self {
            ZooSource::Markov(m) => Some(m),
            ZooSource::Hmm(_) => None,
        }
    }

    /// Closed-form `h_P`, when the entry has one.
    pub fn entropy_rate(&self) -> Option<f64> {
        self.as_markov().map(MarkovSource::entropy_rate)
    }

    /// Closed-form `u_P`, when the entry has one.
    pub fn unpredictability_rate(&self) -> Option<f64> {
        self.as_markov().map(MarkovSource::unpredictability_rate)
    }
}

impl Source for ZooSource {
    fn alphabet(&self) -> Alphabet {
        match self {
            ZooSource::Markov(m) => m.alphabet(),
            ZooSource::Hmm(h) => h.alphabet(),
        }
    }

    fn sample(&self, n: usize, seed: Seed) -> SymbolSeq {
        match self {
            ZooSource::Markov(m) => m.sample(n, seed),
            ZooSource::Hmm(h) => h.sample(n, seed),
        }
    }

    fn model(&self) -> Box<dyn SeqModel + '_> {
        match self {
            ZooSource::Markov(m) => m.model(),
            ZooSource::Hmm(h) => h.model(),
        }
    }
}

/// Named sources loaded from a TOML file with `[[markov]]` and `[[hmm]]`
/// tables.
#[derive(Debug, Clone, Default)]
pub struct Zoo {
    entries: std::collections::BTreeMap<String, ZooSource>,
}

const CANONICAL_ZOO: &str = include_str!("../zoo/canonical.toml");

mod file {
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub enum Num {
        Float(f64),
        Int(i64),
        Text(String),
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Markov {
        pub id: String,
        pub alphabet: usize,
        pub order: usize,
        pub rows: Vec<Vec<Num>>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Hmm {
        pub id: String,
        pub alphabet: usize,
        pub states: usize,
        pub transitions: Vec<Vec<Num>>,
        pub emissions: Vec<Vec<Num>>,
    }

    #[derive(Deserialize, Default)]
    #[serde(deny_unknown_fields, default)]
    pub struct ZooFile {
        pub markov: Vec<Markov>,
        pub hmm: Vec<Hmm>,
    }
}

fn parse_num(v: &file::Num) -> Result<f64> {
    match v {
        file::Num::Float(f) => Ok(*f),
        file::Num::Int(i) => Ok(*i as f64),
        file::Num::Text(s) => s.parse::<crate::base::Rational>().map(|r| r.to_f64()),
    }
}

fn parse_rows(alphabet: Alphabet, rows: &[Vec<file::Num>]) -> Result<Vec<Dist>> {
    rows.iter()
        .map(|r| {
            let probs = r.iter().map(parse_num).collect::<Result<Vec<_>>>()?;
            Dist::from_probs(alphabet, probs)
        })
        .collect()
}

impl Zoo {
    pub fn from_toml_str(text: &str) -> Result<Zoo> {
        let parsed: file::ZooFile = toml::from_str(text).map_err(|e| Error::Zoo(e.message().to_string()))?;
        let mut zoo = Zoo::default();
        let wrap = |id: &str, e: Error| Error::Zoo(format!("{id}: {e}"));
        for m in parsed.markov {
            let source = Alphabet::new(m.alphabet)
                .and_then(|a| MarkovSource::new(a, m.order, parse_rows(a, &m.rows)?))
                .map_err(|e| wrap(&m.id, e))?;
            zoo.insert(m.id, ZooSource::Markov(source))?;
        }
        for h in parsed.hmm {
            let source = (|| {
                let hidden_alphabet = Alphabet::new(h.states)?;
                let alphabet = Alphabet::new(h.alphabet)?;
                let hidden = MarkovSource::new(hidden_alphabet, 1, parse_rows(hidden_alphabet, &h.transitions)?)?;
                HmmSource::new(hidden, alphabet, parse_rows(alphabet, &h.emissions)?)
            })()
            .map_err(|e| wrap(&h.id, e))?;
            zoo.insert(h.id, ZooSource::Hmm(source))?;
        }
        Ok(zoo)
    }

    /// The zoo shipped with the crate.
    pub fn canonical() -> Zoo {
        Zoo::from_toml_str(CANONICAL_ZOO).expect("canonical zoo parses")
    }

    fn insert(&mut self, id: String, source: ZooSource) -> Result<()> {
        if self.entries.contains_key(&id) {
            return Err(Error::Zoo(format!("duplicate source id {id:?}")));
        }
        self.entries.insert(id, source);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&ZooSource> {
        self.entries.get(id).ok_or_else(|| Error::UnknownSource(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Entries in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &ZooSource)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::eta;
    use crate::ppm::{empirical_entropy, PpmConfig, PpmModel};
    use crate::predict::{fano_sandwich, run_prediction, Induced};
    use proptest::prelude::*;

    fn chain1() -> MarkovSource {
        MarkovSource::from_rows(Alphabet::BINARY, 1, &[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    fn random_chain(alphabet: Alphabet, order: usize, seed: u64) -> MarkovSource {
        let mut rng = Seed(seed).rng();
        let rows = (0..alphabet.size().pow(order as u32))
            .map(|_| {
                let w: Vec<f64> = (0..alphabet.size()).map(|_| rng.random_range(0.05..1.0)).collect();
                crate::base::make_dist(alphabet, &w).unwrap()
            })
            .collect();
        MarkovSource::new(alphabet, order, rows).unwrap()
    }

    /// Stationary law by power iteration of the context chain.
    fn power_stationary(src: &MarkovSource) -> Vec<f64> {
        let d = src.alphabet().size();
        let c = src.contexts();
        let mut pi = vec![1.0 / c as f64; c];
        for _ in 0..5000 {
            let mut next = vec![0.0; c];
            for w in 0..c {
                for a in 0..d {
                    next[(w * d + a) % c] += pi[w] * src.row(w).prob(a);
                }
            }
            pi = next;
        }
        pi
    }

    /// `E[-log2 P(X_{k+1} | X_1^k)]` by enumerating every block of length
    /// `order + k + 1` from the power-iteration law.
    fn brute_order_entropy(src: &MarkovSource, k: usize) -> f64 {
        let d = src.alphabet().size();
        let m = src.order();
        let pi = power_stationary(src);
        let len = m.max(k + 1);
        let mut blocks = std::collections::HashMap::<Vec<usize>, f64>::new();
        for key in 0..d.pow(len as u32) {
            let w: Vec<usize> = (0..len).rev().map(|j| key / d.pow(j as u32) % d).collect();
            let ctx0 = w[..m].iter().fold(0, |a, &s| a * d + s);
            let mut p = pi[ctx0];
            let mut ctx = ctx0;
            for &s in &w[m..] {
                p *= src.row(ctx).prob(s);
                ctx = (ctx * d + s) % src.contexts();
            }
            *blocks.entry(w[..k + 1].to_vec()).or_default() += p;
        }
        let mut ctx = std::collections::HashMap::<Vec<usize>, f64>::new();
        for (w, &p) in &blocks {
            *ctx.entry(w[..k].to_vec()).or_default() += p;
        }
        blocks.iter().filter(|(_, &p)| p > 0.0).map(|(w, &p)| -p * (p / ctx[&w[..k]]).log2()).sum()
    }

    #[test]
    fn closed_form_rates() {
        assert_eq!(MarkovSource::bernoulli(0.5).unwrap().entropy_rate(), 1.0);
        let b = MarkovSource::bernoulli(0.7).unwrap();
        assert!((b.entropy_rate() - 0.881291).abs() < 1e-6);
        assert!((b.unpredictability_rate() - 0.3).abs() < 1e-12);
        assert_eq!(b.true_conditional(&[1, 1, 0]).unwrap().probs(), &[1.0 - 0.7, 0.7]);

        let c = chain1();
        assert!((c.stationary()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.entropy_rate() - 0.5533064).abs() < 1e-6);
        let h = 2.0 / 3.0 * eta(0.1).unwrap() + 1.0 / 3.0 * eta(0.2).unwrap();
        assert!((c.entropy_rate() - h).abs() < 1e-12);
        assert!((c.unpredictability_rate() - 0.4 / 3.0).abs() < 1e-12);
        // the symbol marginal is the stationary law itself
        assert!((c.order_entropy(0) - eta(2.0 / 3.0).unwrap()).abs() < 1e-12);
        assert!((c.order_entropy(0) - 0.918296).abs() < 1e-6);
        assert_eq!(c.order_entropy(3), c.entropy_rate());
        assert_eq!(c.true_conditional(&[1, 0]).unwrap().probs(), &[0.9, 0.1]);
        let m = c.true_conditional(&[]).unwrap();
        assert!((m.prob(0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_is_periodic_and_predictable() {
        let z = Zoo::canonical();
        let c = z.get("cycle-3").unwrap().as_markov().unwrap();
        assert_eq!(c.period(), 3);
        assert_eq!(c.entropy_rate(), 0.0);
        assert_eq!(c.unpredictability_rate(), 0.0);
        assert_eq!(chain1().period(), 1);
        let x = c.sample(7, Seed(3));
        assert!(x.as_slice().windows(2).all(|w| w[1] == (w[0] + 1) % 3));
    }

    #[test]
    fn invalid_chains_rejected() {
        assert!(MarkovSource::bernoulli(1.0).is_err());
        assert!(MarkovSource::bernoulli(0.0).is_err());
        let two_classes = MarkovSource::from_rows(Alphabet::BINARY, 1, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(two_classes, Err(Error::InvalidSource(_))));
        assert!(MarkovSource::from_rows(Alphabet::BINARY, 1, &[vec![0.5, 0.5]]).is_err());
        assert!(MarkovSource::from_rows(Alphabet::BINARY, 0, &[vec![0.5, 0.6]]).is_err());
        // a transient context is fine
        let t = MarkovSource::from_rows(Alphabet::BINARY, 1, &[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(t.stationary(), &[1.0, 0.0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = chain1();
        assert!(c.sample(0, Seed(1)).is_empty());
        assert_eq!(c.sample(500, Seed(9)), c.sample(500, Seed(9)));
        assert_ne!(c.sample(500, Seed(9)), c.sample(500, Seed(10)));
        assert_eq!(c.sample(40, Seed(9)).as_slice(), &c.sample(500, Seed(9)).as_slice()[..40]);
    }

    #[test]
    fn monte_carlo_code_length_matches_entropy_rate() {
        let zoo = Zoo::canonical();
        for (id, src) in zoo.iter() {
            let Some(m) = src.as_markov() else { continue };
            let n = 100_000;
            let x = m.sample(n, Seed(2024));
            let mut model = m.exact_model();
            let mut costs = Vec::with_capacity(n);
            for &s in x.as_slice() {
                let c = model.conditional();
                if model.position() >= m.order() {
                    costs.push(-c.prob(s).log2());
                }
                model.observe(s).unwrap();
            }
            let k = costs.len() as f64;
            let mean = costs.iter().sum::<f64>() / k;
            let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            assert!((mean - m.entropy_rate()).abs() <= 3.0 * se + 1e-12, "{id}: {mean} vs {}", m.entropy_rate());
        }
    }

    #[test]
    fn order_entropy_matches_brute_force() {
        let z = Zoo::canonical();
        let t = z.get("ternary-2").unwrap().as_markov().unwrap();
        for k in 0..4 {
            assert!((t.order_entropy(k) - brute_order_entropy(t, k)).abs() < 1e-9, "k={k}");
        }
        let c = chain1();
        assert!((c.order_entropy(0) - brute_order_entropy(&c, 0)).abs() < 1e-9);
    }

    #[test]
    fn random_chains_condition_down() {
        for seed in 0..100 {
            let order = (seed % 3) as usize + 1;
            let d = Alphabet::new(2 + (seed as usize % 2)).unwrap();
            let src = random_chain(d, order, seed);
            let pi = power_stationary(&src);
            assert!(pi.iter().zip(src.stationary()).all(|(a, b)| (a - b).abs() < 1e-9));
            let hs: Vec<f64> = (0..=order + 1).map(|k| src.order_entropy(k)).collect();
            assert!(hs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "seed {seed}: {hs:?}");
            assert_eq!(hs[order], src.entropy_rate());
            let u = src.unpredictability_rate();
            assert!((0.0..=1.0 - 1.0 / d.size() as f64).contains(&u));
        }
    }

    #[test]
    fn fano_brackets_zoo_rates() {
        for (id, src) in Zoo::canonical().iter() {
            let Some(m) = src.as_markov() else { continue };
            let (lo, hi) = fano_sandwich(m.unpredictability_rate(), m.alphabet()).unwrap();
            let h = m.entropy_rate();
            assert!(lo <= h + 1e-12 && h <= hi + 1e-12, "{id}: {lo} <= {h} <= {hi}");
        }
    }

    #[test]
    fn zoo_parsing() {
        let z = Zoo::canonical();
        assert_eq!(z.len(), 6);
        let b = z.get("bernoulli-0.7").unwrap();
        assert!((b.entropy_rate().unwrap() - 0.881291).abs() < 1e-6);
        assert!(z.get("hmm-sticky").unwrap().entropy_rate().is_none());
        assert!(matches!(z.get("nope"), Err(Error::UnknownSource(_))));
        let dup = "[[markov]]\nid='a'\nalphabet=2\norder=0\nrows=[[0.5,0.5]]\n".repeat(2);
        assert!(matches!(Zoo::from_toml_str(&dup), Err(Error::Zoo(_))));
        let bad = "[[markov]]\nid='a'\nalphabet=2\norder=0\nrows=[['1/2','1/3']]\n";
        assert!(Zoo::from_toml_str(bad).is_err());
        assert!(Zoo::from_toml_str("[[markov]]\nid=3").is_err());
    }

    #[test]
    fn hmm_filter_beats_fixed_order_predictors() {
        let z = Zoo::canonical();
        let h = z.get("hmm-sticky").unwrap();
        for seed in 0..3 {
            let y = h.sample(20_000, Seed(seed));
            let filt = run_prediction(&mut Induced::new(h.model()), &y, &[]).unwrap().rate();
            for k in 0..4 {
                let ppm = PpmModel::new(PpmConfig::capped(Alphabet::BINARY, k)).unwrap();
                let r = run_prediction(&mut Induced::new(ppm), &y, &[]).unwrap().rate();
                assert!(filt <= r + 0.005, "seed {seed} k {k}: {filt} vs {r}");
            }
            let hs: Vec<f64> = (0..5).map(|k| empirical_entropy(&y, k).unwrap()).collect();
            assert!(hs.windows(2).all(|w| w[1] <= w[0] + 1e-3), "{hs:?}");
        }
    }

    #[test]
    fn hmm_intervals_are_consistent() {
        let z = Zoo::canonical();
        let ZooSource::Hmm(h) = z.get("hmm-sticky").unwrap() else { panic!() };
        let (hi, ui) = h.rate_intervals(100_000, Seed(5), 20, 3.0);
        assert!(hi.half_width > 0.0 && hi.half_width < 0.05);
        // the hidden-state rate bounds nothing directly, but the observed
        // process is noisier than a single emission row and less than a coin
        assert!(hi.mean > 0.0 && hi.hi() <= 1.0);
        let (lo, up) = fano_sandwich(ui.mean, Alphabet::BINARY).unwrap();
        assert!(lo - 0.02 <= hi.mean && hi.mean <= up + 0.02);
        let mut f = h.filter();
        for s in [0, 1, 1, 0] {
            let c = f.conditional();
            assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            f.observe(s).unwrap();
        }
    }

    proptest! {
        #[test]
        fn biased_coin_mostly_ones(seed in any::<u64>()) {
            let b = MarkovSource::bernoulli(0.99).unwrap();
            let x = b.sample(100, Seed(seed));
            // P(fewer than 90 ones) is below 1e-7
            prop_assert!(x.as_slice().iter().sum::<usize>() >= 90);
        }

        #[test]
        fn conditionals_are_normalized(seed in 0u64..500, len in 0usize..6) {
            let src = random_chain(Alphabet::new(3).unwrap(), 2, seed);
            let x = src.sample(len, Seed(seed));
            let c = src.true_conditional(x.as_slice()).unwrap();
            prop_assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let p = src.block_prob(x.as_slice()).unwrap();
            let via: f64 = (0..3).map(|a| { let mut e = x.as_slice().to_vec(); e.push(a); src.block_prob(&e).unwrap() }).sum();
            prop_assert!((p - via).abs() < 1e-12);
        }
    }
}
