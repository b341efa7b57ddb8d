//! Binary hypervector algebra with bipolar semantics.
//!
//! A bit `b` stands for the bipolar value `(-1)^b`: bit 0 is `+1`, bit 1 is
//! `-1`. Under that mapping XOR is element-wise multiplication, so binding is
//! XOR and is its own inverse. Integer-domain intermediates (bundling, scalar
//! weights) live in [`Accumulator`] lanes that saturate at `H` bits, and
//! similarity scores saturate at `C` bits, mirroring the fixed-width
//! registers of the accelerator datapath.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HdcError {
    #[error("dimension {dim} is not a positive multiple of fold width {fold_width}")]
    Shape { dim: usize, fold_width: usize },
    #[error("operand shapes differ: D={left_dim}/W={left_width} vs D={right_dim}/W={right_width}")]
    Mismatch {
        left_dim: usize,
        left_width: usize,
        right_dim: usize,
        right_width: usize,
    },
    #[error("cannot bundle an empty set of hypervectors")]
    Empty,
    #[error("weight {weight} does not fit a {bits}-bit accumulator")]
    Weight { weight: i64, bits: u32 },
    #[error("bit width {0} is outside 2..=32")]
    BitWidth(u32),
    #[error("lane value {value} exceeds the {bits}-bit accumulator range")]
    LaneRange { value: i64, bits: u32 },
    #[error("metric {metric} does not accept {kind} operands")]
    Metric { metric: Metric, kind: &'static str },
    #[error("malformed hypervector encoding: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, HdcError>;

/// Saturation widths: `bnd_bits` is H (bundling lanes), `dist_bits` is C
/// (distance registers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    pub bnd_bits: u32,
    pub dist_bits: u32,
}

impl Precision {
    /// Wide enough that nothing saturates for any practical D.
    pub const WIDE: Precision = Precision { bnd_bits: 32, dist_bits: 32 };
    /// H=8, C=12 as used by every accelerator preset.
    pub const ACC: Precision = Precision { bnd_bits: 8, dist_bits: 12 };
}

/// Two's-complement range of a `bits`-wide signed register.
pub fn signed_range(bits: u32) -> (i64, i64) {
    let half = 1i64 << (bits - 1);
    (-half, half - 1)
}

pub fn saturate(value: i64, bits: u32) -> i64 {
    let (lo, hi) = signed_range(bits);
    value.clamp(lo, hi)
}

fn check_bits(bits: u32) -> Result<()> {
    if (2..=32).contains(&bits) {
        Ok(())
    } else {
        Err(HdcError::BitWidth(bits))
    }
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
fn get_bit(words: &[u64], i: usize) -> bool {
    (words[i / 64] >> (i % 64)) & 1 == 1
}

#[inline]
fn set_bit(words: &mut [u64], i: usize, value: bool) {
    let mask = 1u64 << (i % 64);
    if value {
        words[i / 64] |= mask;
    } else {
        words[i / 64] &= !mask;
    }
}

fn mask_tail(words: &mut [u64], bits: usize) {
    let rem = bits % 64;
    if rem != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << rem) - 1;
        }
    }
}

/// Rotates a `bits`-long bit string so that bit `p` moves to `(p + n) % bits`.
fn rotate_words_left(words: &[u64], bits: usize, n: usize) -> Vec<u64> {
    let n = n % bits;
    if n == 0 {
        return words.to_vec();
    }
    let len = words.len();
    if bits % 64 == 0 {
        let q = n / 64;
        let r = n % 64;
        (0..len)
            .map(|j| {
                let hi = words[(j + len - q) % len];
                if r == 0 {
                    hi
                } else {
                    let lo = words[(j + 2 * len - q - 1) % len];
                    (hi << r) | (lo >> (64 - r))
                }
            })
            .collect()
    } else {
        let mut out = vec![0u64; len];
        for p in 0..bits {
            if get_bit(words, p) {
                set_bit(&mut out, (p + n) % bits, true);
            }
        }
        out
    }
}

/// One W-bit block of a hypervector.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Fold {
    width: usize,
    words: Vec<u64>,
}

impl Fold {
    pub fn zero(width: usize) -> Self {
        assert!(width > 0, "fold width must be positive");
        Fold { width, words: vec![0; words_for(width)] }
    }

    /// Bits beyond `width` are cleared.
    pub fn from_words(width: usize, mut words: Vec<u64>) -> Self {
        assert!(width > 0, "fold width must be positive");
        words.resize(words_for(width), 0);
        mask_tail(&mut words, width);
        Fold { width, words }
    }

    pub fn from_bit_indices(width: usize, set: &[usize]) -> Self {
        let mut f = Fold::zero(width);
        for &i in set {
            f.set(i, true);
        }
        f
    }

    pub fn random(width: usize, rng: &mut impl RngCore) -> Self {
        let words = (0..words_for(width)).map(|_| rng.next_u64()).collect();
        Fold::from_words(width, words)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        get_bit(&self.words, i)
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.width);
        set_bit(&mut self.words, i, value);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn set_bits(&self) -> Vec<usize> {
        (0..self.width).filter(|&i| self.bit(i)).collect()
    }

    pub fn xor(&self, other: &Fold) -> Fold {
        assert_eq!(self.width, other.width, "fold width mismatch");
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Fold { width: self.width, words }
    }

    pub fn xor_assign(&mut self, other: &Fold) {
        assert_eq!(self.width, other.width, "fold width mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Cyclic rotation: bit `i` moves to `(i + n) % width`.
    pub fn rotate_left(&self, n: usize) -> Fold {
        Fold { width: self.width, words: rotate_words_left(&self.words, self.width, n) }
    }

    /// Cyclic rotation: bit `i` moves to `(i - n) mod width`.
    pub fn rotate_right(&self, n: usize) -> Fold {
        let n = n % self.width;
        self.rotate_left(self.width - n)
    }
}

impl fmt::Debug for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fold<{}>(", self.width)?;
        if self.width <= 64 {
            for i in 0..self.width {
                f.write_str(if self.bit(i) { "1" } else { "0" })?;
            }
        } else {
            write!(f, "{} ones", self.count_ones())?;
        }
        f.write_str(")")
    }
}

/// D-bit binary hypervector, organised as `L = D / W` folds of `W` bits.
/// Bit `p` belongs to fold `p / W`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    fold_width: usize,
    words: Vec<u64>,
}

pub(crate) fn check_shape(dim: usize, fold_width: usize) -> Result<()> {
    if dim == 0 || fold_width == 0 || dim % fold_width != 0 {
        Err(HdcError::Shape { dim, fold_width })
    } else {
        Ok(())
    }
}

impl Hypervector {
    pub fn zeros(dim: usize, fold_width: usize) -> Result<Self> {
        check_shape(dim, fold_width)?;
        Ok(Hypervector { dim, fold_width, words: vec![0; words_for(dim)] })
    }

    pub fn from_words(dim: usize, fold_width: usize, mut words: Vec<u64>) -> Result<Self> {
        check_shape(dim, fold_width)?;
        words.resize(words_for(dim), 0);
        mask_tail(&mut words, dim);
        Ok(Hypervector { dim, fold_width, words })
    }

    /// Parses a string of `0`/`1` characters; character `i` is bit `i`.
    pub fn from_bit_str(bits: &str, fold_width: usize) -> Result<Self> {
        let chars: Vec<char> = bits.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        let mut v = Hypervector::zeros(chars.len(), fold_width)?;
        for (i, c) in chars.iter().enumerate() {
            match c {
                '0' => {}
                '1' => set_bit(&mut v.words, i, true),
                other => return Err(HdcError::Format(format!("unexpected character {other:?}"))),
            }
        }
        Ok(v)
    }

    pub fn from_folds(folds: &[Fold]) -> Result<Self> {
        let first = folds.first().ok_or(HdcError::Empty)?;
        let w = first.width();
        if folds.iter().any(|f| f.width() != w) {
            return Err(HdcError::Format("folds of unequal width".into()));
        }
        let mut v = Hypervector::zeros(w * folds.len(), w)?;
        for (k, f) in folds.iter().enumerate() {
            v.set_fold(k, f);
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fold_width(&self) -> usize {
        self.fold_width
    }

    pub fn num_folds(&self) -> usize {
        self.dim / self.fold_width
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        get_bit(&self.words, i)
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(i < self.dim);
        set_bit(&mut self.words, i, value);
    }

    /// Bipolar value of element `i`.
    pub fn bipolar(&self, i: usize) -> i32 {
        if self.bit(i) {
            -1
        } else {
            1
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn complement(&self) -> Hypervector {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        mask_tail(&mut words, self.dim);
        Hypervector { dim: self.dim, fold_width: self.fold_width, words }
    }

    pub fn fold(&self, k: usize) -> Fold {
        assert!(k < self.num_folds(), "fold index {k} out of range");
        let w = self.fold_width;
        let start = k * w;
        if w % 64 == 0 {
            let s = start / 64;
            Fold::from_words(w, self.words[s..s + w / 64].to_vec())
        } else {
            let mut f = Fold::zero(w);
            for i in 0..w {
                if get_bit(&self.words, start + i) {
                    f.set(i, true);
                }
            }
            f
        }
    }

    pub fn folds(&self) -> Vec<Fold> {
        (0..self.num_folds()).map(|k| self.fold(k)).collect()
    }

    pub fn set_fold(&mut self, k: usize, fold: &Fold) {
        assert_eq!(fold.width(), self.fold_width);
        let w = self.fold_width;
        let start = k * w;
        if w % 64 == 0 {
            let s = start / 64;
            self.words[s..s + w / 64].copy_from_slice(fold.words());
        } else {
            for i in 0..w {
                set_bit(&mut self.words, start + i, fold.bit(i));
            }
        }
    }

    pub fn compatible(&self, other: &Hypervector) -> Result<()> {
        if self.dim == other.dim && self.fold_width == other.fold_width {
            Ok(())
        } else {
            Err(HdcError::Mismatch {
                left_dim: self.dim,
                left_width: self.fold_width,
                right_dim: other.dim,
                right_width: other.fold_width,
            })
        }
    }

    /// Serialises as a 16-byte header (`HVEC`, version u16, reserved u16,
    /// D u32, W u32) followed by `ceil(D/8)` bytes of little-endian packed
    /// bits in fold-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.dim.div_ceil(8));
        out.extend_from_slice(b"HVEC");
        out.extend_from_slice(&HVEC_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.fold_width as u32).to_le_bytes());
        out.extend_from_slice(&pack_bits(&self.words, self.dim));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != b"HVEC" {
            return Err(HdcError::Format("missing HVEC header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != HVEC_VERSION {
            return Err(HdcError::Format(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let fold_width = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        check_shape(dim, fold_width)?;
        let body = &bytes[16..];
        if body.len() != dim.div_ceil(8) {
            return Err(HdcError::Format(format!(
                "expected {} payload bytes, found {}",
                dim.div_ceil(8),
                body.len()
            )));
        }
        Hypervector::from_words(dim, fold_width, unpack_bits(body))
    }
}

impl fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hypervector<D={}, W={}>(", self.dim, self.fold_width)?;
        if self.dim <= 64 {
            for i in 0..self.dim {
                f.write_str(if self.bit(i) { "1" } else { "0" })?;
            }
        } else {
            write!(f, "{} ones", self.count_ones())?;
        }
        f.write_str(")")
    }
}

const HVEC_VERSION: u16 = 1;

/// Little-endian packing: bit `p` goes to byte `p / 8`, bit `p % 8`.
pub(crate) fn pack_bits(words: &[u64], bits: usize) -> Vec<u8> {
    let mut out: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    out.truncate(bits.div_ceil(8));
    out
}

pub(crate) fn unpack_bits(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks(8)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(buf)
        })
        .collect()
}

/// Integer-domain lanes, one per dimension, saturating at `bits` (H).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Accumulator {
    dim: usize,
    fold_width: usize,
    bits: u32,
    lanes: Vec<i32>,
}

impl Accumulator {
    pub fn zeros(dim: usize, fold_width: usize, bits: u32) -> Result<Self> {
        check_shape(dim, fold_width)?;
        check_bits(bits)?;
        Ok(Accumulator { dim, fold_width, bits, lanes: vec![0; dim] })
    }

    /// Lanes set to the bipolar values of `v`.
    pub fn from_hypervector(v: &Hypervector, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let lanes = (0..v.dim()).map(|i| v.bipolar(i)).collect();
        Ok(Accumulator { dim: v.dim(), fold_width: v.fold_width(), bits, lanes })
    }

    pub fn from_lanes(fold_width: usize, bits: u32, lanes: Vec<i32>) -> Result<Self> {
        check_shape(lanes.len(), fold_width)?;
        check_bits(bits)?;
        let (lo, hi) = signed_range(bits);
        if let Some(&bad) = lanes.iter().find(|&&l| i64::from(l) < lo || i64::from(l) > hi) {
            return Err(HdcError::LaneRange { value: i64::from(bad), bits });
        }
        Ok(Accumulator { dim: lanes.len(), fold_width, bits, lanes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fold_width(&self) -> usize {
        self.fold_width
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lanes(&self) -> &[i32] {
        &self.lanes
    }

    fn compatible(&self, v: &Hypervector) -> Result<()> {
        if self.dim == v.dim() && self.fold_width == v.fold_width() {
            Ok(())
        } else {
            Err(HdcError::Mismatch {
                left_dim: self.dim,
                left_width: self.fold_width,
                right_dim: v.dim(),
                right_width: v.fold_width(),
            })
        }
    }

    fn check_range(&self) {
        let (lo, hi) = signed_range(self.bits);
        debug_assert!(self.lanes.iter().all(|&l| i64::from(l) >= lo && i64::from(l) <= hi));
    }
}

/// Saturating similarity value confined to a `bits`-wide (C) register.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: i64,
    pub bits: u32,
    /// Set when the unsaturated value did not fit.
    pub saturated: bool,
}

impl SimilarityScore {
    pub fn saturating(raw: i64, bits: u32) -> Self {
        let value = saturate(raw, bits);
        SimilarityScore { value, bits, saturated: value != raw }
    }
}

pub fn random_hv(dim: usize, fold_width: usize, seed: u64) -> Result<Hypervector> {
    check_shape(dim, fold_width)?;
    let mut r = rng::stream(seed, 0);
    let words = (0..words_for(dim)).map(|_| r.next_u64()).collect();
    Hypervector::from_words(dim, fold_width, words)
}

/// Draws a hypervector from an existing generator.
pub fn random_hv_from(dim: usize, fold_width: usize, r: &mut impl RngCore) -> Result<Hypervector> {
    check_shape(dim, fold_width)?;
    let words = (0..words_for(dim)).map(|_| r.next_u64()).collect();
    Hypervector::from_words(dim, fold_width, words)
}

/// Element-wise multiplication in bipolar form, XOR in binary form.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    a.compatible(b)?;
    let words = a.words.iter().zip(&b.words).map(|(x, y)| x ^ y).collect();
    Ok(Hypervector { dim: a.dim, fold_width: a.fold_width, words })
}

/// XOR binding is self-inverse, so unbinding is binding.
pub fn unbind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    bind(a, b)
}

/// Circular left rotation of all D bits by `times` positions: bit `p` moves
/// to `(p + times) % D`.
pub fn permute(v: &Hypervector, times: usize) -> Hypervector {
    Hypervector {
        dim: v.dim,
        fold_width: v.fold_width,
        words: rotate_words_left(&v.words, v.dim, times),
    }
}

/// Adds `weight * bipolar(v)` to every lane, saturating at H bits.
pub fn accumulate(acc: &Accumulator, v: &Hypervector, weight: i64) -> Result<Accumulator> {
    let mut out = acc.clone();
    accumulate_into(&mut out, v, weight)?;
    Ok(out)
}

pub fn accumulate_into(acc: &mut Accumulator, v: &Hypervector, weight: i64) -> Result<()> {
    acc.compatible(v)?;
    let (lo, hi) = signed_range(acc.bits);
    if weight <= lo || weight > hi {
        return Err(HdcError::Weight { weight, bits: acc.bits });
    }
    for (i, lane) in acc.lanes.iter_mut().enumerate() {
        let delta = if get_bit(&v.words, i) { -weight } else { weight };
        *lane = (i64::from(*lane) + delta).clamp(lo, hi) as i32;
    }
    acc.check_range();
    Ok(())
}

/// Positive lanes and zero lanes map to bit 0, negative lanes to bit 1.
pub fn sign(acc: &Accumulator) -> Hypervector {
    let mut words = vec![0u64; words_for(acc.dim)];
    for (i, &lane) in acc.lanes.iter().enumerate() {
        if lane < 0 {
            set_bit(&mut words, i, true);
        }
    }
    Hypervector { dim: acc.dim, fold_width: acc.fold_width, words }
}

/// Majority vote, `sign(sum of bipolar(v_i))`, with H-bit saturating lanes.
pub fn bundle(vs: &[Hypervector], bnd_bits: u32) -> Result<Hypervector> {
    let first = vs.first().ok_or(HdcError::Empty)?;
    let mut acc = Accumulator::zeros(first.dim(), first.fold_width(), bnd_bits)?;
    for v in vs {
        accumulate_into(&mut acc, v, 1)?;
    }
    Ok(sign(&acc))
}

pub fn hamming(a: &Hypervector, b: &Hypervector) -> Result<u64> {
    a.compatible(b)?;
    Ok(a.words.iter().zip(&b.words).map(|(x, y)| u64::from((x ^ y).count_ones())).sum())
}

/// Bipolar dot product `D - 2 * hamming(a, b)`, saturated to C bits.
pub fn dot(a: &Hypervector, b: &Hypervector, dist_bits: u32) -> Result<SimilarityScore> {
    let h = hamming(a, b)? as i64;
    Ok(SimilarityScore::saturating(a.dim as i64 - 2 * h, dist_bits))
}

/// Per-fold bipolar dot products `W - 2 * popcount(a_k XOR b_k)`.
pub fn fold_partials(a: &Hypervector, b: &Hypervector) -> Result<Vec<i64>> {
    a.compatible(b)?;
    Ok((0..a.num_folds())
        .map(|k| {
            let diff = a.fold(k).xor(&b.fold(k));
            a.fold_width as i64 - 2 * i64::from(diff.count_ones())
        })
        .collect())
}

/// Folded similarity: partial dot products accumulated fold by fold in a
/// C-bit saturating register, the way a distance-sum register sees them.
pub fn fold_dot(a: &Hypervector, b: &Hypervector, dist_bits: u32) -> Result<SimilarityScore> {
    let mut acc = 0i64;
    let mut saturated = false;
    for p in fold_partials(a, b)? {
        let next = saturate(acc + p, dist_bits);
        saturated |= next != acc + p;
        acc = next;
    }
    Ok(SimilarityScore { value: acc, bits: dist_bits, saturated })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dot,
    Hamming,
    L1,
    /// Squared Euclidean distance; keeps every score integral.
    L2,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Dot => "dot",
            Metric::Hamming => "hamming",
            Metric::L1 => "l1",
            Metric::L2 => "l2",
        })
    }
}

/// Operand for [`similarity`]: binary metrics take hypervectors, L1/L2 take
/// accumulators.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Binary(&'a Hypervector),
    Integer(&'a Accumulator),
}

pub fn similarity(a: Operand<'_>, b: Operand<'_>, metric: Metric, dist_bits: u32) -> Result<SimilarityScore> {
    match (metric, a, b) {
        (Metric::Dot, Operand::Binary(x), Operand::Binary(y)) => dot(x, y, dist_bits),
        (Metric::Hamming, Operand::Binary(x), Operand::Binary(y)) => {
            Ok(SimilarityScore::saturating(hamming(x, y)? as i64, dist_bits))
        }
        (Metric::L1 | Metric::L2, Operand::Integer(x), Operand::Integer(y)) => {
            if x.dim != y.dim || x.fold_width != y.fold_width {
                return Err(HdcError::Mismatch {
                    left_dim: x.dim,
                    left_width: x.fold_width,
                    right_dim: y.dim,
                    right_width: y.fold_width,
                });
            }
            let raw: i64 = x
                .lanes
                .iter()
                .zip(&y.lanes)
                .map(|(&p, &q)| {
                    let d = i64::from(p) - i64::from(q);
                    if metric == Metric::L1 {
                        d.abs()
                    } else {
                        d * d
                    }
                })
                .sum();
            Ok(SimilarityScore::saturating(raw, dist_bits))
        }
        (Metric::Dot | Metric::Hamming, _, _) => Err(HdcError::Metric { metric, kind: "integer" }),
        (Metric::L1 | Metric::L2, _, _) => Err(HdcError::Metric { metric, kind: "binary" }),
    }
}
