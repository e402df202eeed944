//! Arithmetic coding of chain codes under the PPM model, plus the bitstream
//! container.

use crate::context::{ContextTree, SymbolDistribution};
use crate::contour::{DccString, Direction, Point, RelSymbol};
use crate::error::{Error, Result};

const PRECISION: u32 = 32;
const FULL: u64 = 1 << PRECISION;
const HALF: u64 = FULL >> 1;
const QUARTER: u64 = FULL >> 2;
const MASK: u64 = FULL - 1;

/// Frequency total used for quantized distributions.
pub const FREQ_TOTAL: u32 = 1 << 16;

/// Integer frequencies summing to [`FREQ_TOTAL`], each at least 1. Rounding
/// slack goes to the first most probable symbol.
pub fn quantize(dist: &SymbolDistribution) -> [u32; 3] {
    let spread = (FREQ_TOTAL - 3) as f64;
    let mut f = [0u32; 3];
    for (slot, &p) in f.iter_mut().zip(dist.0.iter()) {
        *slot = 1 + (p * spread).floor().clamp(0.0, spread) as u32;
    }
    let sum: u32 = f.iter().sum();
    let top = (0..3).fold(0, |best, k| if dist.0[k] > dist.0[best] { k } else { best });
    if sum <= FREQ_TOTAL {
        f[top] += FREQ_TOTAL - sum;
    } else {
        f[top] -= sum - FREQ_TOTAL;
    }
    f
}

/// Interval registers of the coder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoderState {
    pub low: u64,
    pub high: u64,
    pub pending: u64,
}

impl Default for CoderState {
    fn default() -> Self {
        CoderState { low: 0, high: MASK, pending: 0 }
    }
}

#[derive(Debug, Default)]
struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    nbits: u8,
}

impl BitWriter {
    fn put(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.nbits += 1;
        if self.nbits == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.nbits = 0;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.bytes.push(self.acc << (8 - self.nbits));
        }
        self.bytes
    }
}

pub struct ArithmeticEncoder {
    state: CoderState,
    out: BitWriter,
}

impl Default for ArithmeticEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ArithmeticEncoder {
    pub fn new() -> Self {
        ArithmeticEncoder { state: CoderState::default(), out: BitWriter::default() }
    }

    pub fn state(&self) -> CoderState {
        self.state
    }

    fn emit(&mut self, bit: bool) {
        self.out.put(bit);
        for _ in 0..self.state.pending {
            self.out.put(!bit);
        }
        self.state.pending = 0;
    }

    pub fn encode(&mut self, freqs: &[u32; 3], symbol: usize) {
        let total = freqs.iter().map(|&f| f as u64).sum::<u64>();
        let cum_lo: u64 = freqs[..symbol].iter().map(|&f| f as u64).sum();
        let cum_hi = cum_lo + freqs[symbol] as u64;
        let s = &mut self.state;
        let range = s.high - s.low + 1;
        s.high = s.low + range * cum_hi / total - 1;
        s.low += range * cum_lo / total;
        loop {
            if self.state.high < HALF {
                self.emit(false);
            } else if self.state.low >= HALF {
                self.emit(true);
                self.state.low -= HALF;
                self.state.high -= HALF;
            } else if self.state.low >= QUARTER && self.state.high < 3 * QUARTER {
                self.state.pending += 1;
                self.state.low -= QUARTER;
                self.state.high -= QUARTER;
            } else {
                break;
            }
            self.state.low <<= 1;
            self.state.high = (self.state.high << 1) | 1;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.state.pending += 1;
        let bit = self.state.low >= QUARTER;
        self.emit(bit);
        self.out.finish()
    }
}

pub struct ArithmeticDecoder<'a> {
    data: &'a [u8],
    bitpos: u64,
    state: CoderState,
    value: u64,
}

impl<'a> ArithmeticDecoder<'a> {
    /// Reading this many zero bits past the end means the stream was cut short.
    const OVERRUN_LIMIT: u64 = PRECISION as u64;

    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = ArithmeticDecoder { data, bitpos: 0, state: CoderState::default(), value: 0 };
        for _ in 0..PRECISION {
            d.value = (d.value << 1) | d.next_bit()?;
        }
        Ok(d)
    }

    fn next_bit(&mut self) -> Result<u64> {
        let total = self.data.len() as u64 * 8;
        let pos = self.bitpos;
        self.bitpos += 1;
        if pos >= total {
            if pos - total >= Self::OVERRUN_LIMIT {
                return Err(Error::Truncated);
            }
            return Ok(0);
        }
        let byte = self.data[(pos / 8) as usize];
        Ok(((byte >> (7 - pos % 8)) & 1) as u64)
    }

    pub fn decode(&mut self, freqs: &[u32; 3]) -> Result<usize> {
        let total = freqs.iter().map(|&f| f as u64).sum::<u64>();
        let s = self.state;
        let range = s.high - s.low + 1;
        let scaled = ((self.value - s.low + 1) * total - 1) / range;
        let mut cum = 0u64;
        let mut symbol = 2;
        for (k, &f) in freqs.iter().enumerate() {
            if scaled < cum + f as u64 {
                symbol = k;
                break;
            }
            cum += f as u64;
        }
        let cum_lo: u64 = freqs[..symbol].iter().map(|&f| f as u64).sum();
        let cum_hi = cum_lo + freqs[symbol] as u64;
        self.state.high = s.low + range * cum_hi / total - 1;
        self.state.low = s.low + range * cum_lo / total;
        loop {
            if self.state.high < HALF {
            } else if self.state.low >= HALF {
                self.state.low -= HALF;
                self.state.high -= HALF;
                self.value -= HALF;
            } else if self.state.low >= QUARTER && self.state.high < 3 * QUARTER {
                self.state.low -= QUARTER;
                self.state.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.state.low <<= 1;
            self.state.high = (self.state.high << 1) | 1;
            self.value = (self.value << 1) | self.next_bit()?;
        }
        Ok(symbol)
    }
}

/// Per-contour side information carried in the clear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContourHeader {
    pub m0: u16,
    pub n0: u16,
    pub dir: Direction,
    pub closed: bool,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub headers: Vec<ContourHeader>,
    pub payload: Vec<u8>,
}

const STREAM_MAGIC: &[u8; 4] = b"JDCC";
const STREAM_VERSION: u8 = 1;
const HEADER_BYTES: usize = 9;

impl Bitstream {
    pub fn payload_bits(&self) -> u64 {
        self.payload.len() as u64 * 8
    }

    pub fn symbol_count(&self) -> u64 {
        self.headers.iter().map(|h| h.length as u64).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.headers.len() * HEADER_BYTES + self.payload.len());
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.extend_from_slice(&(self.headers.len() as u32).to_be_bytes());
        for h in &self.headers {
            out.extend_from_slice(&h.m0.to_be_bytes());
            out.extend_from_slice(&h.n0.to_be_bytes());
            out.push(((h.dir.index() as u8) << 6) | ((h.closed as u8) << 5));
            out.extend_from_slice(&h.length.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 9 {
            return Err(Error::Bitstream("stream shorter than its fixed header".into()));
        }
        if &data[..4] != STREAM_MAGIC {
            return Err(Error::Bitstream("bad magic".into()));
        }
        if data[4] != STREAM_VERSION {
            return Err(Error::Bitstream(format!("unsupported version {}", data[4])));
        }
        let count = u32::from_be_bytes(data[5..9].try_into().unwrap()) as usize;
        let need = count
            .checked_mul(HEADER_BYTES)
            .and_then(|n| n.checked_add(9))
            .ok_or_else(|| Error::Bitstream("contour count overflows".into()))?;
        if data.len() < need {
            return Err(Error::Bitstream(format!("contour headers truncated: need {need} bytes, have {}", data.len())));
        }
        let mut headers = Vec::with_capacity(count);
        for k in 0..count {
            let b = &data[9 + k * HEADER_BYTES..9 + (k + 1) * HEADER_BYTES];
            let flags = b[4];
            if flags & 0x1f != 0 {
                return Err(Error::Bitstream(format!("nonzero padding bits in contour header {k}")));
            }
            headers.push(ContourHeader {
                m0: u16::from_be_bytes([b[0], b[1]]),
                n0: u16::from_be_bytes([b[2], b[3]]),
                dir: Direction::from_index((flags >> 6) as usize),
                closed: flags & 0x20 != 0,
                length: u32::from_be_bytes(b[5..9].try_into().unwrap()),
            });
        }
        Ok(Bitstream { headers, payload: data[need..].to_vec() })
    }
}

/// Code every contour under the tree. History restarts at each contour.
pub fn encode(contours: &[DccString], tree: &ContextTree) -> Result<Bitstream> {
    let mut headers = Vec::with_capacity(contours.len());
    for (k, c) in contours.iter().enumerate() {
        let m0 = u16::try_from(c.start.m).map_err(|_| Error::InvalidArgument(format!("contour {k}: m0 {} does not fit 16 bits", c.start.m)))?;
        let n0 = u16::try_from(c.start.n).map_err(|_| Error::InvalidArgument(format!("contour {k}: n0 {} does not fit 16 bits", c.start.n)))?;
        let length = u32::try_from(c.symbols.len()).map_err(|_| Error::InvalidArgument("contour too long".into()))?;
        headers.push(ContourHeader { m0, n0, dir: c.first_dir, closed: c.closed, length });
    }
    if headers.iter().all(|h| h.length == 0) {
        return Ok(Bitstream { headers, payload: Vec::new() });
    }
    let mut enc = ArithmeticEncoder::new();
    for c in contours {
        for i in 0..c.symbols.len() {
            let freqs = quantize(&tree.ppm_probability(&c.symbols[..i]));
            enc.encode(&freqs, c.symbols[i].index());
        }
    }
    Ok(Bitstream { headers, payload: enc.finish() })
}

pub fn decode(bits: &Bitstream, tree: &ContextTree) -> Result<Vec<DccString>> {
    let mut out = Vec::with_capacity(bits.headers.len());
    if bits.symbol_count() == 0 {
        for h in &bits.headers {
            out.push(DccString { start: Point::new(h.m0 as i32, h.n0 as i32), first_dir: h.dir, symbols: Vec::new(), closed: h.closed });
        }
        return Ok(out);
    }
    let mut dec = ArithmeticDecoder::new(&bits.payload)?;
    for h in &bits.headers {
        let mut symbols = Vec::with_capacity(h.length as usize);
        for _ in 0..h.length {
            let freqs = quantize(&tree.ppm_probability(&symbols));
            symbols.push(RelSymbol::from_index(dec.decode(&freqs)?));
        }
        out.push(DccString { start: Point::new(h.m0 as i32, h.n0 as i32), first_dir: h.dir, symbols, closed: h.closed });
    }
    Ok(out)
}

/// Payload bits per coded symbol (header excluded).
pub fn measure_rate(bits: &Bitstream) -> Result<f64> {
    let n = bits.symbol_count();
    if n == 0 {
        return Err(Error::InvalidArgument("stream carries no symbols".into()));
    }
    Ok(bits.payload_bits() as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{build_tree, estimate_rate};
    use crate::contour::parse_symbols;
    use proptest::prelude::*;

    fn dcc(s: &str) -> DccString {
        DccString::new(Point::new(10, 20), Direction::S, parse_symbols(s).unwrap())
    }

    #[test]
    fn quantize_properties() {
        let f = quantize(&SymbolDistribution([1.0, 0.0, 0.0]));
        assert_eq!(f, [FREQ_TOTAL - 2, 1, 1]);
        let f = quantize(&SymbolDistribution::uniform());
        assert_eq!(f.iter().sum::<u32>(), FREQ_TOTAL);
        assert!(f[0] >= f[1] && f[1] == f[2]);
    }

    #[test]
    fn empty_list_is_header_only() {
        let t = ContextTree::empty(1);
        let b = encode(&[], &t).unwrap();
        assert_eq!(b.to_bytes().len(), 9);
        assert!(decode(&b, &t).unwrap().is_empty());
        assert!(measure_rate(&b).is_err());
    }

    #[test]
    fn round_trip_and_container() {
        let xs = vec![dcc("ssrssrssrsl").closed(true), dcc(""), dcc("lrlrlrssssr")];
        let t = build_tree(&xs).unwrap();
        let b = encode(&xs, &t).unwrap();
        let bytes = b.to_bytes();
        let parsed = Bitstream::from_bytes(&bytes).unwrap();
        assert_eq!(parsed, b);
        assert_eq!(decode(&parsed, &t).unwrap(), xs);
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(Bitstream::from_bytes(&bad).is_err());
        assert!(Bitstream::from_bytes(&bytes[..15]).is_err());
    }

    #[test]
    fn truncated_payload_is_reported() {
        let x = dcc(&"lsrrslrsllrsrrlsrlsrlrlsrlsrlsrsrllsr".repeat(20));
        let t = ContextTree::empty(2);
        let mut b = encode(std::slice::from_ref(&x), &t).unwrap();
        b.payload.truncate(b.payload.len() / 2);
        assert!(matches!(decode(&b, &t), Err(Error::Truncated)));
    }

    #[test]
    fn tampered_payload_terminates() {
        let x = dcc(&"lsrrslrsllrrlsslrr".repeat(10));
        let t = ContextTree::empty(1);
        let mut b = encode(std::slice::from_ref(&x), &t).unwrap();
        let mid = b.payload.len() / 2;
        b.payload[mid] ^= 0x10;
        if let Ok(out) = decode(&b, &t) {
            assert_eq!(out[0].len(), x.len());
        }
    }

    #[test]
    fn uniform_rate_near_log3() {
        let syms: String = (0..3000).map(|i| ["l", "s", "r"][(i * 7 + i / 5) % 3]).collect();
        let x = dcc(&syms);
        let b = encode(std::slice::from_ref(&x), &ContextTree::empty(0)).unwrap();
        let rate = measure_rate(&b).unwrap();
        assert!((rate - 3f64.log2()).abs() <= 32.0 / 3000.0, "{rate}");
    }

    #[test]
    fn deterministic_model_costs_almost_nothing() {
        let x = dcc(&"s".repeat(2000));
        let t = build_tree(std::slice::from_ref(&x)).unwrap();
        let b = encode(std::slice::from_ref(&x), &t).unwrap();
        assert!(measure_rate(&b).unwrap() < 0.05);
        assert!((b.payload_bits() as f64) < 3000.0 * 3f64.log2());
        let ideal = estimate_rate(&t, &x, 1);
        assert!(b.payload_bits() as f64 <= ideal + 32.0 + 64.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_random(
            train in prop::collection::vec((0usize..3).prop_map(RelSymbol::from_index), 1..200),
            xs in prop::collection::vec(prop::collection::vec((0usize..3).prop_map(RelSymbol::from_index), 0..60), 0..8),
        ) {
            let tree = build_tree(&[DccString::new(Point::new(0, 0), Direction::E, train)]).unwrap();
            let contours: Vec<DccString> = xs.into_iter().enumerate()
                .map(|(k, s)| DccString::new(Point::new(k as i32, 3), Direction::from_index(k), s).closed(k % 2 == 0))
                .collect();
            let b = encode(&contours, &tree).unwrap();
            prop_assert_eq!(decode(&Bitstream::from_bytes(&b.to_bytes()).unwrap(), &tree).unwrap(), contours.clone());
            let ideal: f64 = contours.iter().map(|c| estimate_rate(&tree, c, 1)).sum();
            prop_assert!(b.payload_bits() as f64 <= ideal + 32.0 * contours.len() as f64 + 64.0);
        }
    }
}
