//! Range coding driven by a sequential model, and the `PPMU` container.
//!
//! Conditionals are quantized to 32-bit frequencies that sum to `2^32`, with
//! every symbol given at least `2^12` (probability `2^-20`). The coder keeps a
//! 64-bit range that is renormalized a byte at a time whenever it drops below
//! `2^56`, and resolves carries with a cached byte plus a run of pending
//! `0xFF` bytes. Flushing writes the 8 bytes of `low`, so a payload holds
//! exactly `8 + (number of renormalization shifts)` bytes.
//!
//! Container layout (little-endian, 30 header bytes):
//!
//! ```text
//! "PPMU" | version u8 | D u32 | mode u8 (0 full, 1 capped) | K u32
//!        | alpha num u32 | alpha den u32 | n u64 | payload
//! ```
//!
//! An empty input has an empty payload.

use crate::base::{Alphabet, Dist, Rational, SeqModel, SymbolSeq};
use crate::error::{Error, Result};
use crate::ppm::{ppm_neg_log, Mode, PpmConfig, PpmModel};

pub const BLOB_MAGIC: &[u8; 4] = b"PPMU";
pub const BLOB_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;

/// Width of the quantized frequencies.
pub const PROB_BITS: u32 = 32;
pub const FREQ_TOTAL: u64 = 1 << PROB_BITS;
/// Smallest frequency of any symbol, `2^-20` of the total.
pub const FREQ_FLOOR: u64 = 1 << 12;
/// Renormalize while the range is below this.
pub const RANGE_BOTTOM: u64 = 1 << 56;
/// Largest alphabet the codec accepts.
pub const MAX_CODEC_ALPHABET: usize = 1 << 16;

/// Integer frequencies `>= FREQ_FLOOR` summing to `FREQ_TOTAL`, written to
/// `cum` as `D + 1` cumulative counts starting at 0.
pub fn quantize(p: &Dist, cum: &mut Vec<u64>) {
    let d = p.alphabet().size();
    assert!(d <= MAX_CODEC_ALPHABET, "alphabet too large for the codec");
    let mut freq: Vec<u64> =
        p.probs().iter().map(|&q| ((q * FREQ_TOTAL as f64).round() as u64).max(FREQ_FLOOR)).collect();
    let sum: u64 = freq.iter().sum();
    if sum < FREQ_TOTAL {
        let top = argmax(&freq);
        freq[top] += FREQ_TOTAL - sum;
    } else {
        let mut excess = sum - FREQ_TOTAL;
        while excess > 0 {
            let top = argmax(&freq);
            let take = excess.min(freq[top] - FREQ_FLOOR);
            freq[top] -= take;
            excess -= take;
        }
    }
    cum.clear();
    cum.push(0);
    let mut acc = 0;
    for f in freq {
        acc += f;
        cum.push(acc);
    }
    debug_assert_eq!(acc, FREQ_TOTAL);
}

fn argmax(f: &[u64]) -> usize {
    let mut best = 0;
    for (i, &v) in f.iter().enumerate() {
        if v > f[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u128,
    range: u64,
    cache: u8,
    pending: u64,
    started: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u64::MAX, cache: 0, pending: 1, started: false, out: Vec::new() }
    }

    /// Codes the interval `[start, start + freq)` out of `FREQ_TOTAL`.
    pub fn encode(&mut self, start: u64, freq: u64) {
        debug_assert!(freq > 0 && start + freq <= FREQ_TOTAL);
        let r = self.range >> PROB_BITS;
        self.low += r as u128 * start as u128;
        self.range = r * freq;
        while self.range < RANGE_BOTTOM {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        let low = self.low as u64;
        let carry = (self.low >> 64) as u8;
        if low < 0xFF00_0000_0000_0000 || carry != 0 {
            let mut byte = self.cache;
            while self.pending > 0 {
                self.emit(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = (low >> 56) as u8;
        }
        self.pending += 1;
        self.low = (low << 8) as u128;
    }

    fn emit(&mut self, byte: u8) {
        // the very first byte is the initial cache, always zero
        if self.started {
            self.out.push(byte);
        } else {
            self.started = true;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..9 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    code: u64,
    range: u64,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder { code: 0, range: u64::MAX, buf, pos: 0 };
        for _ in 0..8 {
            d.code = d.code << 8 | d.next_byte()? as u64;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or(Error::Truncated { needed: self.pos + 1, available: self.buf.len() })?;
        self.pos += 1;
        Ok(b)
    }

    /// Decodes one symbol against cumulative counts `cum` (length `D + 1`).
    pub fn decode(&mut self, cum: &[u64]) -> Result<usize> {
        let r = self.range >> PROB_BITS;
        let target = self.code / r;
        if target >= FREQ_TOTAL {
            return Err(Error::CorruptPayload("code value outside the coding interval"));
        }
        let s = cum.partition_point(|&c| c <= target) - 1;
        self.code -= r * cum[s];
        self.range = r * (cum[s + 1] - cum[s]);
        while self.range < RANGE_BOTTOM {
            self.code = self.code << 8 | self.next_byte()? as u64;
            self.range <<= 8;
        }
        Ok(s)
    }

    /// Fails unless every payload byte was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::CorruptPayload("trailing bytes after the coded symbols"))
        }
    }
}

/// FNV-1a digest of the quantized table for one step.
fn digest(cum: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &c in cum {
        for b in c.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Range-codes `x` under `model`. When `trace` is given, the digest of every
/// quantized table used is appended to it.
pub fn encode_with<M: SeqModel + ?Sized>(model: &mut M, x: &SymbolSeq, mut trace: Option<&mut Vec<u64>>) -> Result<Vec<u8>> {
    model.alphabet().check_same(x.alphabet())?;
    if x.alphabet().size() > MAX_CODEC_ALPHABET {
        return Err(Error::Unsupported("alphabets above 65536 symbols in the codec"));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut enc = RangeEncoder::new();
    let mut cum = Vec::with_capacity(x.alphabet().size() + 1);
    for &s in x.as_slice() {
        quantize(&model.conditional(), &mut cum);
        if let Some(t) = trace.as_deref_mut() {
            t.push(digest(&cum));
        }
        enc.encode(cum[s], cum[s + 1] - cum[s]);
        model.observe(s)?;
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_with`] for `n` symbols.
pub fn decode_with<M: SeqModel + ?Sized>(
    model: &mut M,
    payload: &[u8],
    n: usize,
    mut trace: Option<&mut Vec<u64>>,
) -> Result<SymbolSeq> {
    let alphabet = model.alphabet();
    if n == 0 {
        if !payload.is_empty() {
            return Err(Error::CorruptPayload("payload present for an empty sequence"));
        }
        return Ok(SymbolSeq::empty(alphabet));
    }
    if n > max_symbols(alphabet, payload.len()) {
        return Err(Error::CorruptHeader("length exceeds what the payload can encode"));
    }
    let mut dec = RangeDecoder::new(payload)?;
    let mut cum = Vec::with_capacity(alphabet.size() + 1);
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        quantize(&model.conditional(), &mut cum);
        if let Some(t) = trace.as_deref_mut() {
            t.push(digest(&cum));
        }
        let s = dec.decode(&cum)?;
        model.observe(s)?;
        out.push(s);
    }
    dec.finish()?;
    SymbolSeq::new(alphabet, out)
}

/// Every coded symbol shrinks the range by at least a factor
/// `1 - (D-1) 2^-20`, so a payload of `len` bytes holds a bounded count.
fn max_symbols(alphabet: Alphabet, len: usize) -> usize {
    let min_bits = -(1.0 - (alphabet.size() - 1) as f64 * (FREQ_FLOOR as f64 / FREQ_TOTAL as f64)).log2();
    ((8 * len + 64) as f64 / min_bits).ceil() as usize + 1
}

/// A `PPMU` file: header plus payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlob {
    pub alphabet: Alphabet,
    pub mode: Mode,
    pub smoothing: Rational,
    pub n: u64,
    pub payload: Vec<u8>,
}

impl CompressedBlob {
    /// The model configuration the header determines.
    pub fn config(&self) -> PpmConfig {
        let base = match self.mode {
            Mode::Full => PpmConfig::full(self.alphabet).with_full_limit(self.n as usize),
            Mode::Capped(k) => PpmConfig::capped(self.alphabet, k).with_max_entries(usize::MAX),
        };
        base.with_smoothing(self.smoothing)
    }

    pub fn payload_bits(&self) -> u64 {
        8 * self.payload.len() as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.push(BLOB_VERSION);
        out.extend_from_slice(&(self.alphabet.size() as u32).to_le_bytes());
        let (mode, k) = match self.mode {
            Mode::Full => (0u8, 0u32),
            Mode::Capped(k) => (1u8, k as u32),
        };
        out.push(mode);
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&self.smoothing.num.to_le_bytes());
        out.extend_from_slice(&self.smoothing.den.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CompressedBlob> {
        if bytes.len() < 4 || &bytes[..4] != BLOB_MAGIC {
            return Err(Error::CorruptHeader("missing PPMU magic"));
        }
        if bytes.len() < 5 {
            return Err(Error::CorruptHeader("header is truncated"));
        }
        if bytes[4] != BLOB_VERSION {
            return Err(Error::VersionMismatch { found: bytes[4], expected: BLOB_VERSION });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::CorruptHeader("header is truncated"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let d = u32_at(5) as usize;
        if d > MAX_CODEC_ALPHABET {
            return Err(Error::CorruptHeader("alphabet size"));
        }
        let alphabet = Alphabet::new(d).map_err(|_| Error::CorruptHeader("alphabet size"))?;
        let mode = match bytes[9] {
            0 => Mode::Full,
            1 => Mode::Capped(u32_at(10) as usize),
            _ => return Err(Error::CorruptHeader("mode")),
        };
        if mode == Mode::Full && u32_at(10) != 0 {
            return Err(Error::CorruptHeader("order field set in full mode"));
        }
        let (num, den) = (u32_at(14), u32_at(18));
        let smoothing = Rational::new(num, den).map_err(|_| Error::CorruptHeader("smoothing"))?;
        if smoothing != (Rational { num, den }) {
            return Err(Error::CorruptHeader("smoothing is not in lowest terms"));
        }
        let n = u64::from_le_bytes(bytes[22..30].try_into().unwrap());
        let blob = CompressedBlob { alphabet, mode, smoothing, n, payload: bytes[HEADER_LEN..].to_vec() };
        blob.config().validate().map_err(|_| Error::CorruptHeader("model configuration"))?;
        Ok(blob)
    }
}

/// Compresses `x` under the PPM measure configured by `config`.
pub fn encode(x: &SymbolSeq, config: &PpmConfig) -> Result<CompressedBlob> {
    encode_traced(x, config, None)
}

pub fn encode_traced(x: &SymbolSeq, config: &PpmConfig, trace: Option<&mut Vec<u64>>) -> Result<CompressedBlob> {
    config.alphabet.check_same(x.alphabet())?;
    let mut model = PpmModel::new(config.clone())?;
    let payload = encode_with(&mut model, x, trace)?;
    Ok(CompressedBlob {
        alphabet: config.alphabet,
        mode: config.mode,
        smoothing: config.smoothing,
        n: x.len() as u64,
        payload,
    })
}

pub fn decode(blob: &CompressedBlob) -> Result<SymbolSeq> {
    decode_traced(blob, None)
}

pub fn decode_traced(blob: &CompressedBlob, trace: Option<&mut Vec<u64>>) -> Result<SymbolSeq> {
    let n = usize::try_from(blob.n).map_err(|_| Error::CorruptHeader("length overflows usize"))?;
    let mut model = PpmModel::new(blob.config())?;
    decode_with(&mut model, &blob.payload, n, trace)
}

/// Payload size against the model code length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub payload_bits: u64,
    /// `-log2 PPM(x)`.
    pub model_bits: f64,
    /// `payload_bits - model_bits`.
    pub overhead: f64,
}

impl Audit {
    /// `n 2^-16 + 64`.
    pub fn envelope(n: usize) -> f64 {
        n as f64 / 65536.0 + 64.0
    }

    pub fn within_envelope(&self, n: usize) -> bool {
        self.overhead >= 0.0 && self.overhead <= Audit::envelope(n)
    }
}

pub fn codelength_audit(x: &SymbolSeq, config: &PpmConfig) -> Result<Audit> {
    let blob = encode(x, config)?;
    let model_bits = ppm_neg_log(x, config)?.bits();
    let payload_bits = blob.payload_bits();
    Ok(Audit { payload_bits, model_bits, overhead: payload_bits as f64 - model_bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Seed;
    use crate::sources::{MarkovSource, Source};
    use proptest::prelude::*;
    use rand::Rng;

    fn random(d: usize, n: usize, seed: u64) -> SymbolSeq {
        let mut rng = Seed(seed).rng();
        let a = Alphabet::new(d).unwrap();
        SymbolSeq::new(a, (0..n).map(|_| rng.random_range(0..d)).collect()).unwrap()
    }

    fn roundtrip(x: &SymbolSeq, cfg: &PpmConfig) -> CompressedBlob {
        let blob = encode(x, cfg).unwrap();
        let parsed = CompressedBlob::from_bytes(&blob.to_bytes()).unwrap();
        assert_eq!(parsed, blob);
        assert_eq!(&decode(&parsed).unwrap(), x);
        blob
    }

    #[test]
    fn quantizer_sums_and_floors() {
        let a = Alphabet::new(3).unwrap();
        let mut cum = Vec::new();
        for p in [vec![1.0, 0.0, 0.0], vec![0.5, 0.25, 0.25], vec![1e-9, 1.0 - 2e-9, 1e-9]] {
            quantize(&Dist::from_probs(a, p).unwrap(), &mut cum);
            assert_eq!(cum[3], FREQ_TOTAL);
            assert!(cum.windows(2).all(|w| w[1] - w[0] >= FREQ_FLOOR));
        }
        quantize(&Dist::from_probs(a, vec![0.5, 0.25, 0.25]).unwrap(), &mut cum);
        assert_eq!(cum, vec![0, 1 << 31, 3 << 30, 1 << 32]);
    }

    #[test]
    fn empty_input_is_header_only() {
        let cfg = PpmConfig::full(Alphabet::BINARY);
        let x = SymbolSeq::empty(Alphabet::BINARY);
        let blob = roundtrip(&x, &cfg);
        assert!(blob.payload.is_empty());
        assert_eq!(blob.to_bytes().len(), HEADER_LEN);
        let a = codelength_audit(&x, &cfg).unwrap();
        assert_eq!(a.overhead, 0.0);
    }

    #[test]
    fn payload_length_is_shifts_plus_eight() {
        // a single fair binary symbol costs one bit: no shift, 8 flush bytes
        let blob = encode(&SymbolSeq::from_digits(Alphabet::BINARY, "1").unwrap(), &PpmConfig::full(Alphabet::BINARY)).unwrap();
        assert_eq!(blob.payload.len(), 8);
    }

    #[test]
    fn exhaustive_binary_roundtrips() {
        let cfgs = [PpmConfig::full(Alphabet::BINARY), PpmConfig::capped(Alphabet::BINARY, 2)];
        for n in 0..=12 {
            for bits in 0u32..1 << n {
                let x = SymbolSeq::new(Alphabet::BINARY, (0..n).map(|i| (bits >> i) as usize & 1).collect()).unwrap();
                for cfg in &cfgs {
                    let blob = roundtrip(&x, cfg);
                    let model = ppm_neg_log(&x, cfg).unwrap().bits();
                    let overhead = blob.payload_bits() as f64 - model;
                    assert!(overhead >= 0.0 && overhead <= Audit::envelope(n), "{x}: {overhead}");
                }
            }
        }
    }

    #[test]
    fn random_roundtrips() {
        for (i, d) in [2usize, 3, 4, 26].into_iter().enumerate() {
            for case in 0..6u64 {
                let n = [0, 1, 17, 500, 4000, 10_000][case as usize];
                let x = random(d, n, case * 31 + i as u64);
                let cfg = PpmConfig::capped(x.alphabet(), 3 + case as usize % 3);
                roundtrip(&x, &cfg);
                assert!(codelength_audit(&x, &cfg).unwrap().within_envelope(n), "d={d} n={n}");
            }
        }
    }

    #[test]
    fn encoder_and_decoder_states_agree() {
        let x = random(4, 800, 5);
        let cfg = PpmConfig::full(x.alphabet());
        let (mut te, mut td) = (Vec::new(), Vec::new());
        let blob = encode_traced(&x, &cfg, Some(&mut te)).unwrap();
        decode_traced(&blob, Some(&mut td)).unwrap();
        assert_eq!(te.len(), 800);
        assert_eq!(te, td);
    }

    #[test]
    fn zeros_and_coins() {
        let cfg = PpmConfig::capped(Alphabet::BINARY, 8);
        let zeros = SymbolSeq::new(Alphabet::BINARY, vec![0; 10_000]).unwrap();
        assert!(roundtrip(&zeros, &cfg).payload_bits() as f64 <= 0.03 * 10_000.0);
        let coin = MarkovSource::bernoulli(0.5).unwrap().sample(10_000, Seed(77));
        assert!(roundtrip(&coin, &cfg).payload_bits() as f64 >= 10_000.0 * 0.98);
    }

    #[test]
    fn distinct_errors() {
        let x = random(3, 300, 1);
        let bytes = encode(&x, &PpmConfig::capped(x.alphabet(), 2)).unwrap().to_bytes();
        assert!(matches!(CompressedBlob::from_bytes(b"PPM"), Err(Error::CorruptHeader(_))));
        assert!(matches!(CompressedBlob::from_bytes(&bytes[..20]), Err(Error::CorruptHeader(_))));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(CompressedBlob::from_bytes(&v), Err(Error::VersionMismatch { found: 2, expected: 1 })));
        let mut m = bytes.clone();
        m[9] = 7;
        assert!(matches!(CompressedBlob::from_bytes(&m), Err(Error::CorruptHeader("mode"))));
        let cut = CompressedBlob::from_bytes(&bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(decode(&cut), Err(Error::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(&CompressedBlob::from_bytes(&long).unwrap()), Err(Error::CorruptPayload(_))));
        let mut huge = bytes.clone();
        huge[22..30].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode(&CompressedBlob::from_bytes(&huge).unwrap()).is_err());
    }

    #[test]
    fn bit_flips_never_panic() {
        let x = random(2, 400, 9);
        let bytes = encode(&x, &PpmConfig::capped(Alphabet::BINARY, 3)).unwrap().to_bytes();
        for bit in 0..bytes.len() * 8 {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            // an error or a different sequence are both fine; a panic is not
            if let Ok(blob) = CompressedBlob::from_bytes(&b) {
                let _ = decode(&blob);
            }
        }
    }

    proptest! {
        #[test]
        fn generic_model_roundtrip(xs in proptest::collection::vec(0usize..5, 0..300)) {
            let a = Alphabet::new(5).unwrap();
            let x = SymbolSeq::new(a, xs).unwrap();
            let mut m = crate::base::UniformModel::new(a);
            let payload = encode_with(&mut m, &x, None).unwrap();
            let y = decode_with(&mut crate::base::UniformModel::new(a), &payload, x.len(), None).unwrap();
            prop_assert_eq!(y, x);
        }
    }
}
