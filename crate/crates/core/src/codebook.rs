//! Compressed item memories.
//!
//! Only one W-bit seed per item is stored. Fold `k` of an item is the seed
//! after `k` steps of a cyclic rule-90 cellular automaton, so a codebook of
//! N items costs `N * W / 8` bytes instead of `N * D / 8`.

use thiserror::Error;

use crate::hdc::{self, Fold, HdcError, Hypervector};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodebookError {
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error("seed {0} is all zeros (a rule-90 fixed point)")]
    ZeroSeed(usize),
    #[error("seed {index} has width {found}, expected {expected}")]
    SeedWidth { index: usize, found: usize, expected: usize },
    #[error("item index {index} out of range for codebook of {len}")]
    Index { index: usize, len: usize },
    #[error("expansion needs at least one fold")]
    NoFolds,
    #[error("malformed codebook file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CodebookError>;

/// One rule-90 update with cyclic boundary:
/// `out[i] = f[(i - 1) mod W] XOR f[(i + 1) mod W]`.
pub fn ca90_step(f: &Fold) -> Fold {
    f.rotate_left(1).xor(&f.rotate_right(1))
}

/// `[seed, ca90(seed), ca90(ca90(seed)), ...]`, `num_folds` entries.
pub fn expand(seed: &Fold, num_folds: usize) -> Result<Vec<Fold>> {
    if num_folds < 1 {
        return Err(CodebookError::NoFolds);
    }
    let mut out = Vec::with_capacity(num_folds);
    out.push(seed.clone());
    for k in 1..num_folds {
        let next = ca90_step(&out[k - 1]);
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    name: String,
    dim: usize,
    fold_width: usize,
    seeds: Vec<Fold>,
}

const CBNK_VERSION: u16 = 1;

impl Codebook {
    pub fn new(name: impl Into<String>, dim: usize, fold_width: usize, seeds: Vec<Fold>) -> Result<Self> {
        hdc::check_shape(dim, fold_width)?;
        for (index, s) in seeds.iter().enumerate() {
            if s.width() != fold_width {
                return Err(CodebookError::SeedWidth { index, found: s.width(), expected: fold_width });
            }
            if s.is_zero() {
                return Err(CodebookError::ZeroSeed(index));
            }
        }
        Ok(Codebook { name: name.into(), dim, fold_width, seeds })
    }

    /// `n` random nonzero seeds drawn from `seed`.
    pub fn random(name: impl Into<String>, n: usize, dim: usize, fold_width: usize, seed: u64) -> Result<Self> {
        hdc::check_shape(dim, fold_width)?;
        let mut r = rng::stream(seed, 1);
        let seeds = (0..n)
            .map(|_| loop {
                let f = Fold::random(fold_width, &mut r);
                if !f.is_zero() {
                    break f;
                }
            })
            .collect();
        Codebook::new(name, dim, fold_width, seeds)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
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

    pub fn seeds(&self) -> &[Fold] {
        &self.seeds
    }

    pub fn seed(&self, index: usize) -> Result<&Fold> {
        self.seeds.get(index).ok_or(CodebookError::Index { index, len: self.seeds.len() })
    }

    pub fn item(&self, index: usize) -> Result<Hypervector> {
        let folds = expand(self.seed(index)?, self.num_folds())?;
        Ok(Hypervector::from_folds(&folds)?)
    }

    pub fn items(&self) -> Vec<Hypervector> {
        (0..self.len()).map(|i| self.item(i).expect("index in range")).collect()
    }

    /// Storage in bytes; compressed stores seeds only.
    pub fn footprint(&self, compressed: bool) -> usize {
        let bits = if compressed { self.fold_width } else { self.dim };
        self.len() * bits / 8
    }

    /// Header (`CBNK`, version u16, reserved u16, N u32, D u32, W u32) and
    /// then N seeds of `ceil(W/8)` little-endian bytes each.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"CBNK");
        out.extend_from_slice(&CBNK_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.fold_width as u32).to_le_bytes());
        for s in &self.seeds {
            out.extend_from_slice(&hdc::pack_bits(s.words(), self.fold_width));
        }
        out
    }

    pub fn from_bytes(name: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[0..4] != b"CBNK" {
            return Err(CodebookError::Format("missing CBNK header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CBNK_VERSION {
            return Err(CodebookError::Format(format!("unsupported version {version}")));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (n, dim, w) = (word(8), word(12), word(16));
        hdc::check_shape(dim, w)?;
        let per = w.div_ceil(8);
        let body = &bytes[20..];
        if body.len() != n * per {
            return Err(CodebookError::Format(format!(
                "expected {} seed bytes, found {}",
                n * per,
                body.len()
            )));
        }
        let seeds = body.chunks(per).map(|c| Fold::from_words(w, hdc::unpack_bits(c))).collect();
        Codebook::new(name, dim, w, seeds)
    }
}
