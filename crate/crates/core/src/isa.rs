//! Instruction Words, primitive operations, and the SOPC / MOPC schedulers.
//!
//! A word is 64 bits: seven 4-bit stage opcodes (S1 in the low nibble), a
//! 16-bit shared `PARAM` in bits 28..44, and twenty reserved zero bits. Words
//! carry only opcodes; register indices, addresses, and tile lanes live in
//! the [`PrimitiveOp`] stream that a [`Program`] keeps as metadata, the same
//! way a VLIW binary pairs with its compiler's schedule.
//!
//! A primitive occupies the stages of its path on consecutive cycles: path
//! position `i` executes at `start + i`, and stages a path skips cost nothing.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_STAGES: usize = 7;
const RESERVED_MASK: u64 = !((1u64 << 44) - 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Mem = 0,
    Gen = 1,
    Bind = 2,
    Mult = 3,
    Bnd = 4,
    SgnPop = 5,
    Dc = 6,
}

impl Stage {
    pub const ALL: [Stage; NUM_STAGES] =
        [Stage::Mem, Stage::Gen, Stage::Bind, Stage::Mult, Stage::Bnd, Stage::SgnPop, Stage::Dc];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Assembly field name.
    pub fn field(self) -> &'static str {
        ["MEM", "GEN", "BIND", "MUL", "BND", "SGN", "DC"][self.index()]
    }

    /// Conventional name, `S1_MEM` .. `S7_DC`.
    pub fn label(self) -> &'static str {
        ["S1_MEM", "S2_GEN", "S3_BIND", "S4_MULT", "S5_BND", "S6_SGN_POP", "S7_DC"][self.index()]
    }

    pub fn mnemonics(self) -> &'static [&'static str] {
        match self {
            Stage::Mem => &["NOP", "LD", "LDR", "LDQ"],
            Stage::Gen => &["NOP", "GEN", "RFW", "RFR"],
            Stage::Bind => &["NOP", "BSET", "BXOR", "XBUF"],
            Stage::Mult => &["NOP", "CVT", "SMULI", "SMULD"],
            Stage::Bnd => &["NOP", "ASET", "AACC", "ARD"],
            Stage::SgnPop => &["NOP", "SGN", "POP"],
            Stage::Dc => &["NOP", "DSET", "DACC", "AMAX", "ARST", "ARES", "ST"],
        }
    }

    pub fn mnemonic(self, opcode: u8) -> Option<&'static str> {
        self.mnemonics().get(opcode as usize).copied()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsaError {
    #[error("reserved bits set in word {0:#018x}")]
    Reserved(u64),
    #[error("unknown opcode {opcode} in field {stage}")]
    Opcode { stage: Stage, opcode: u8 },
    #[error("line {line}: {msg}")]
    Asm { line: usize, msg: String },
    #[error("malformed program file: {0}")]
    Format(String),
    #[error("op {index}: {msg}")]
    Shape { index: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, IsaError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionWord {
    pub types: [u8; NUM_STAGES],
    pub param: u16,
}

impl InstructionWord {
    pub const NOP: InstructionWord = InstructionWord { types: [0; NUM_STAGES], param: 0 };

    pub fn new(types: [u8; NUM_STAGES], param: u16) -> Result<Self> {
        let w = InstructionWord { types, param };
        w.check()?;
        Ok(w)
    }

    fn check(&self) -> Result<()> {
        for (stage, &opcode) in Stage::ALL.iter().zip(&self.types) {
            if stage.mnemonic(opcode).is_none() {
                return Err(IsaError::Opcode { stage: *stage, opcode });
            }
        }
        Ok(())
    }

    pub fn get(&self, stage: Stage) -> u8 {
        self.types[stage.index()]
    }

    pub fn active_stages(&self) -> usize {
        self.types.iter().filter(|&&t| t != 0).count()
    }

    pub fn is_nop(&self) -> bool {
        self.active_stages() == 0
    }

    pub fn encode(&self) -> u64 {
        let mut w = 0u64;
        for (i, &t) in self.types.iter().enumerate() {
            w |= u64::from(t & 0xF) << (4 * i);
        }
        w | (u64::from(self.param) << 28)
    }

    pub fn decode(word: u64) -> Result<Self> {
        if word & RESERVED_MASK != 0 {
            return Err(IsaError::Reserved(word));
        }
        let mut types = [0u8; NUM_STAGES];
        for (i, t) in types.iter_mut().enumerate() {
            *t = ((word >> (4 * i)) & 0xF) as u8;
        }
        InstructionWord::new(types, ((word >> 28) & 0xFFFF) as u16)
    }
}

impl fmt::Display for InstructionWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for stage in Stage::ALL {
            let m = stage.mnemonic(self.get(stage)).unwrap_or("?");
            write!(f, "{}={} ", stage.field(), m)?;
        }
        write!(f, "PARAM={:#06x}", self.param)
    }
}

/// Architectural state a micro-op touches; the unit of hazard tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Mem { tile: usize, addr: usize },
    Rf { tile: usize, reg: usize },
    Qry { tile: usize, fold: usize },
    Buf { tile: usize },
    Bnd { tile: usize, reg: usize },
    Dsum { tile: usize, reg: usize },
    Argmax { tile: usize },
    Result { slot: usize },
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Resource::Mem { tile, addr } => write!(f, "MEM[{tile}:{addr}]"),
            Resource::Rf { tile, reg } => write!(f, "CA90_RF[{tile}:{reg}]"),
            Resource::Qry { tile, fold } => write!(f, "QRY[{tile}:{fold}]"),
            Resource::Buf { tile } => write!(f, "BUF[{tile}]"),
            Resource::Bnd { tile, reg } => write!(f, "BND_RF[{tile}:{reg}]"),
            Resource::Dsum { tile, reg } => write!(f, "DSUM_RF[{tile}:{reg}]"),
            Resource::Argmax { tile } => write!(f, "ARGMAX[{tile}]"),
            Resource::Result { slot } => write!(f, "RESULT[{slot}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
    Modify,
}

impl Access {
    fn reads(self) -> bool {
        matches!(self, Access::Read | Access::Modify)
    }

    fn writes(self) -> bool {
        matches!(self, Access::Write | Access::Modify)
    }
}

/// One stage's work on one tile. Every micro-op moves data through the
/// owning primitive's private latch (`fold`, integer lanes, or a score).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Micro {
    /// S1: latch the fold stored at `addr` of `tile`.
    Load { tile: usize, addr: usize },
    /// S1: latch fold `fold` of the `folds`-fold vector at `base`, circularly
    /// rotated left by `shift` bits over its full dimension. `shift` is PARAM.
    LoadRot { tile: usize, base: usize, folds: usize, fold: usize, shift: u16 },
    /// S1: copy the fold at `src:addr` into `QRY[fold]` of `tile`.
    LoadQry { tile: usize, src: usize, addr: usize, fold: usize },
    /// S2: one CA-90 step on `RF[reg]`; the result is written back and latched.
    Gen { tile: usize, reg: usize },
    /// S2: write the latched fold into `RF[reg]`.
    RfWrite { tile: usize, reg: usize },
    /// S2: latch `RF[reg]`.
    RfRead { tile: usize, reg: usize },
    /// S3: `BUF = latch`.
    BufSet { tile: usize },
    /// S3: `BUF ^= latch`, latch the new BUF.
    BufXor { tile: usize },
    /// S3: `latch ^= BUF`, BUF unchanged.
    XorBuf { tile: usize },
    /// S4: latched bits to +1/-1 lanes.
    Cvt { tile: usize },
    /// S4: lanes = `weight` * bipolar(latch); `weight` is PARAM.
    ScaleImm { tile: usize, weight: i16 },
    /// S4: lanes = w * bipolar(latch) with `w` derived from `DSUM_RF[src:reg]`.
    ScaleDsum { tile: usize, src: usize, reg: usize },
    /// S5: `BND_RF[reg] = lanes`.
    AccSet { tile: usize, reg: usize },
    /// S5: `BND_RF[reg] += lanes`, saturating; latch the sum.
    AccAdd { tile: usize, reg: usize },
    /// S5: latch `BND_RF[reg]`.
    AccRead { tile: usize, reg: usize },
    /// S6: lanes to bits by sign.
    Sign { tile: usize },
    /// S6: partial dot of the latched fold against `QRY[fold]`.
    Popcnt { tile: usize, fold: usize },
    /// S7: `DSUM_RF[reg] = score`.
    DsumSet { tile: usize, reg: usize },
    /// S7: `DSUM_RF[reg] += score`, saturating.
    DsumAcc { tile: usize, reg: usize },
    /// S7: offer `DSUM_RF[reg]` as candidate `index` to the tile's ARGMAX.
    Argmax { tile: usize, reg: usize, index: usize },
    /// S7: clear the tile's ARGMAX.
    ArgmaxReset { tile: usize },
    /// S7: merge the ARGMAX units of `tiles` into result `slot`.
    ArgmaxResult { tile: usize, tiles: Vec<usize>, slot: usize },
    /// S7: store the latched fold to `addr` of `tile`.
    Store { tile: usize, addr: usize },
}

impl Micro {
    pub fn stage(&self) -> Stage {
        use Micro::*;
        match self {
            Load { .. } | LoadRot { .. } | LoadQry { .. } => Stage::Mem,
            Gen { .. } | RfWrite { .. } | RfRead { .. } => Stage::Gen,
            BufSet { .. } | BufXor { .. } | XorBuf { .. } => Stage::Bind,
            Cvt { .. } | ScaleImm { .. } | ScaleDsum { .. } => Stage::Mult,
            AccSet { .. } | AccAdd { .. } | AccRead { .. } => Stage::Bnd,
            Sign { .. } | Popcnt { .. } => Stage::SgnPop,
            DsumSet { .. } | DsumAcc { .. } | Argmax { .. } | ArgmaxReset { .. } | ArgmaxResult { .. } | Store { .. } => {
                Stage::Dc
            }
        }
    }

    /// Opcode within the stage's field; matches [`Stage::mnemonics`].
    pub fn opcode(&self) -> u8 {
        use Micro::*;
        match self {
            Load { .. } | Gen { .. } | BufSet { .. } | Cvt { .. } | AccSet { .. } | Sign { .. } | DsumSet { .. } => 1,
            LoadRot { .. } | RfWrite { .. } | BufXor { .. } | ScaleImm { .. } | AccAdd { .. } | Popcnt { .. }
            | DsumAcc { .. } => 2,
            LoadQry { .. } | RfRead { .. } | XorBuf { .. } | ScaleDsum { .. } | AccRead { .. } | Argmax { .. } => 3,
            ArgmaxReset { .. } => 4,
            ArgmaxResult { .. } => 5,
            Store { .. } => 6,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        self.stage().mnemonic(self.opcode()).expect("opcode table covers every micro-op")
    }

    /// The PARAM value this micro-op needs, if any.
    pub fn param(&self) -> Option<u16> {
        match *self {
            Micro::LoadRot { shift, .. } => Some(shift),
            Micro::ScaleImm { weight, .. } => Some(weight as u16),
            _ => None,
        }
    }

    /// The tile whose unit executes this micro-op.
    pub fn tile(&self) -> usize {
        use Micro::*;
        match *self {
            Load { tile, .. }
            | LoadRot { tile, .. }
            | LoadQry { tile, .. }
            | Gen { tile, .. }
            | RfWrite { tile, .. }
            | RfRead { tile, .. }
            | BufSet { tile }
            | BufXor { tile }
            | XorBuf { tile }
            | Cvt { tile }
            | ScaleImm { tile, .. }
            | ScaleDsum { tile, .. }
            | AccSet { tile, .. }
            | AccAdd { tile, .. }
            | AccRead { tile, .. }
            | Sign { tile }
            | Popcnt { tile, .. }
            | DsumSet { tile, .. }
            | DsumAcc { tile, .. }
            | Argmax { tile, .. }
            | ArgmaxReset { tile }
            | ArgmaxResult { tile, .. }
            | Store { tile, .. } => tile,
        }
    }

    pub fn accesses(&self) -> Vec<(Resource, Access)> {
        use Access::*;
        use Micro::*;
        match self {
            &Load { tile, addr } => vec![(Resource::Mem { tile, addr }, Read)],
            &LoadRot { tile, base, folds, .. } => {
                (base..base + folds).map(|addr| (Resource::Mem { tile, addr }, Read)).collect()
            }
            &LoadQry { tile, src, addr, fold } => {
                vec![(Resource::Mem { tile: src, addr }, Read), (Resource::Qry { tile, fold }, Write)]
            }
            &Gen { tile, reg } => vec![(Resource::Rf { tile, reg }, Modify)],
            &RfWrite { tile, reg } => vec![(Resource::Rf { tile, reg }, Write)],
            &RfRead { tile, reg } => vec![(Resource::Rf { tile, reg }, Read)],
            &BufSet { tile } => vec![(Resource::Buf { tile }, Write)],
            &BufXor { tile } => vec![(Resource::Buf { tile }, Modify)],
            &XorBuf { tile } => vec![(Resource::Buf { tile }, Read)],
            Cvt { .. } | ScaleImm { .. } | Sign { .. } => vec![],
            &ScaleDsum { src, reg, .. } => vec![(Resource::Dsum { tile: src, reg }, Read)],
            &AccSet { tile, reg } => vec![(Resource::Bnd { tile, reg }, Write)],
            &AccAdd { tile, reg } => vec![(Resource::Bnd { tile, reg }, Modify)],
            &AccRead { tile, reg } => vec![(Resource::Bnd { tile, reg }, Read)],
            &Popcnt { tile, fold } => vec![(Resource::Qry { tile, fold }, Read)],
            &DsumSet { tile, reg } => vec![(Resource::Dsum { tile, reg }, Write)],
            &DsumAcc { tile, reg } => vec![(Resource::Dsum { tile, reg }, Modify)],
            &Argmax { tile, reg, .. } => {
                vec![(Resource::Dsum { tile, reg }, Read), (Resource::Argmax { tile }, Modify)]
            }
            &ArgmaxReset { tile } => vec![(Resource::Argmax { tile }, Write)],
            ArgmaxResult { tiles, slot, .. } => {
                let mut v: Vec<_> = tiles.iter().map(|&tile| (Resource::Argmax { tile }, Read)).collect();
                v.push((Resource::Result { slot: *slot }, Write));
                v
            }
            &Store { tile, addr } => vec![(Resource::Mem { tile, addr }, Write)],
        }
    }
}

/// Descriptive class of a primitive, used for reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    LoadItem,
    GenFold,
    LoadQuery,
    Bind,
    ScalarMult,
    BundleAcc,
    Sign,
    Popcnt,
    DsumAcc,
    Argmax,
    Store,
}

/// A unit of scheduling: one path through the pipeline, replicated over
/// SIMD lanes. Every lane runs the same opcode sequence; lane `l` of each
/// micro-op shares latch `l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveOp {
    pub kind: OpKind,
    pub lanes: Vec<Vec<Micro>>,
}

impl PrimitiveOp {
    pub fn new(kind: OpKind, mut lanes: Vec<Vec<Micro>>) -> Self {
        // Long programs hold millions of these; drop growth slack.
        for l in &mut lanes {
            l.shrink_to_fit();
        }
        lanes.shrink_to_fit();
        PrimitiveOp { kind, lanes }
    }

    pub fn single(kind: OpKind, path: Vec<Micro>) -> Self {
        PrimitiveOp::new(kind, vec![path])
    }

    pub fn len(&self) -> usize {
        self.lanes.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stage_path(&self) -> Vec<Stage> {
        self.lanes.first().map(|l| l.iter().map(Micro::stage).collect()).unwrap_or_default()
    }

    /// Micro-ops at path position `pos`, one per lane.
    pub fn at(&self, pos: usize) -> impl Iterator<Item = &Micro> {
        self.lanes.iter().map(move |l| &l[pos])
    }

    pub fn param_at(&self, pos: usize) -> Option<u16> {
        self.lanes[0][pos].param()
    }

    /// Lanes agree on opcodes and params, and the path walks the stages in
    /// strictly increasing order.
    pub fn check(&self, index: usize) -> Result<()> {
        let shape = |msg: String| IsaError::Shape { index, msg };
        let first = self.lanes.first().ok_or_else(|| shape("no lanes".into()))?;
        if first.is_empty() {
            return Err(shape("empty path".into()));
        }
        if first.windows(2).any(|w| w[0].stage() >= w[1].stage()) {
            return Err(shape("stage path is not strictly increasing".into()));
        }
        for lane in &self.lanes[1..] {
            if lane.len() != first.len() {
                return Err(shape("lanes have different path lengths".into()));
            }
            for (a, b) in first.iter().zip(lane) {
                if a.stage() != b.stage() || a.opcode() != b.opcode() || a.param() != b.param() {
                    return Err(shape(format!("lanes disagree at {}", a.stage())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Sopc,
    Mopc,
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlMode::Sopc => "sopc",
            ControlMode::Mopc => "mopc",
        })
    }
}

impl std::str::FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sopc" => Ok(ControlMode::Sopc),
            "mopc" => Ok(ControlMode::Mopc),
            other => Err(format!("unknown control mode `{other}` (expected sopc or mopc)")),
        }
    }
}

/// Words plus the op stream and start cycles they were scheduled from.
/// Programs read back from text or binary carry words only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub mode: ControlMode,
    pub words: Vec<InstructionWord>,
    pub ops: Vec<PrimitiveOp>,
    pub starts: Vec<usize>,
}

impl Program {
    pub fn from_words(mode: ControlMode, words: Vec<InstructionWord>) -> Self {
        Program { mode, words, ops: Vec::new(), starts: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Total micro-op lane executions the program performs.
    pub fn micro_count(&self) -> usize {
        self.ops.iter().map(|o| o.len() * o.lanes.len()).sum()
    }
}

/// Builds the words for `ops` placed at `starts`. Later placements win on
/// conflicts; callers validate separately.
fn emit_words(ops: &[PrimitiveOp], starts: &[usize]) -> Vec<InstructionWord> {
    let end = ops.iter().zip(starts).map(|(o, &s)| s + o.len()).max().unwrap_or(0);
    let mut words = vec![InstructionWord::NOP; end];
    for (op, &s) in ops.iter().zip(starts) {
        for (pos, m) in op.lanes[0].iter().enumerate() {
            let w = &mut words[s + pos];
            w.types[m.stage().index()] = m.opcode();
            if let Some(p) = m.param() {
                w.param = p;
            }
        }
    }
    words
}

fn check_ops(ops: &[PrimitiveOp]) -> Result<()> {
    ops.iter().enumerate().try_for_each(|(i, o)| o.check(i))
}

/// One stage per cycle: every primitive's path is laid out back to back.
pub fn schedule_sopc(ops: Vec<PrimitiveOp>) -> Result<Program> {
    check_ops(&ops)?;
    let mut starts = Vec::with_capacity(ops.len());
    let mut at = 0;
    for op in &ops {
        starts.push(at);
        at += op.len();
    }
    let words = emit_words(&ops, &starts);
    Ok(Program { mode: ControlMode::Sopc, words, ops, starts })
}

/// Last read and write cycle of every resource touched so far.
#[derive(Default)]
struct HazardTable {
    last: HashMap<Resource, (Option<usize>, Option<usize>)>,
}

impl HazardTable {
    /// Earliest cycle at which `access` to `r` may happen.
    fn earliest(&self, r: &Resource, access: Access) -> usize {
        let Some(&(read, write)) = self.last.get(r) else { return 0 };
        let mut bound = write.map_or(0, |w| w + 1);
        if access.writes() {
            bound = bound.max(read.map_or(0, |c| c + 1));
        }
        bound
    }

    fn record(&mut self, r: Resource, access: Access, cycle: usize) {
        let e = self.last.entry(r).or_default();
        if access.reads() {
            e.0 = Some(e.0.map_or(cycle, |c| c.max(cycle)));
        }
        if access.writes() {
            e.1 = Some(e.1.map_or(cycle, |c| c.max(cycle)));
        }
    }
}

/// Greedy in-order list scheduling. Each primitive starts at the first cycle
/// after its predecessor's start such that (a) no stage it needs is taken,
/// (b) PARAM agrees with whatever already shares those words, and (c) every
/// access to a resource lands strictly after every earlier conflicting
/// access (read-after-write, write-after-read, write-after-write).
pub fn schedule_mopc(ops: Vec<PrimitiveOp>) -> Result<Program> {
    check_ops(&ops)?;
    let mut hazards = HazardTable::default();
    let mut busy: Vec<u8> = Vec::new();
    let mut params: Vec<Option<u16>> = Vec::new();
    let mut starts = Vec::with_capacity(ops.len());
    let mut prev: Option<usize> = None;
    for op in &ops {
        let mut lo = prev.map_or(0, |p| p + 1);
        for (pos, _) in op.lanes[0].iter().enumerate() {
            for m in op.at(pos) {
                for (r, a) in m.accesses() {
                    lo = lo.max(hazards.earliest(&r, a).saturating_sub(pos));
                }
            }
        }
        let fits = |s: usize| {
            op.lanes[0].iter().enumerate().all(|(pos, m)| {
                let c = s + pos;
                let taken = busy.get(c).is_some_and(|b| b & (1 << m.stage().index()) != 0);
                let clash = match (m.param(), params.get(c).copied().flatten()) {
                    (Some(p), Some(q)) => p != q,
                    _ => false,
                };
                !taken && !clash
            })
        };
        let mut s = lo;
        while !fits(s) {
            s += 1;
        }
        let end = s + op.len();
        if busy.len() < end {
            busy.resize(end, 0);
            params.resize(end, None);
        }
        for (pos, m) in op.lanes[0].iter().enumerate() {
            busy[s + pos] |= 1 << m.stage().index();
            if let Some(p) = m.param() {
                params[s + pos] = Some(p);
            }
        }
        for pos in 0..op.len() {
            for m in op.at(pos) {
                for (r, a) in m.accesses() {
                    hazards.record(r, a, s + pos);
                }
            }
        }
        starts.push(s);
        prev = Some(s);
    }
    let words = emit_words(&ops, &starts);
    Ok(Program { mode: ControlMode::Mopc, words, ops, starts })
}

/// Register-file and tile bounds that [`validate`] checks against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub tiles: usize,
    pub rf_regs: usize,
    pub bnd_regs: usize,
    pub dsum_regs: usize,
    pub mem_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Malformed { op: usize, msg: String },
    Metadata(String),
    WordMismatch { cycle: usize, expected: InstructionWord, found: InstructionWord },
    Structural { cycle: usize, stage: Stage, ops: (usize, usize) },
    ParamConflict { cycle: usize },
    MultiWriter { cycle: usize, resource: Resource },
    Hazard { resource: Resource, earlier: usize, later: usize, earlier_cycle: usize, later_cycle: usize },
    OutOfOrder { op: usize },
    Register { op: usize, resource: String, limit: usize },
    SopcOverlap { cycle: usize, active: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Malformed { op, msg } => write!(f, "op {op} malformed: {msg}"),
            Violation::Metadata(m) => write!(f, "metadata: {m}"),
            Violation::WordMismatch { cycle, expected, found } => {
                write!(f, "cycle {cycle}: word `{found}` does not match schedule `{expected}`")
            }
            Violation::Structural { cycle, stage, ops } => {
                write!(f, "cycle {cycle}: ops {} and {} both occupy {stage}", ops.0, ops.1)
            }
            Violation::ParamConflict { cycle } => write!(f, "cycle {cycle}: conflicting PARAM values"),
            Violation::MultiWriter { cycle, resource } => {
                write!(f, "cycle {cycle}: more than one writer of {resource}")
            }
            Violation::Hazard { resource, earlier, later, earlier_cycle, later_cycle } => write!(
                f,
                "{resource}: op {later} at cycle {later_cycle} does not follow op {earlier} at cycle {earlier_cycle}"
            ),
            Violation::OutOfOrder { op } => write!(f, "op {op} issues before its predecessor"),
            Violation::Register { op, resource, limit } => {
                write!(f, "op {op}: {resource} exceeds configured limit {limit}")
            }
            Violation::SopcOverlap { cycle, active } => {
                write!(f, "cycle {cycle}: {active} stages active under SOPC")
            }
        }
    }
}

fn check_bounds(index: usize, m: &Micro, lim: &Limits, out: &mut Vec<Violation>) {
    let mut bad = |what: String, limit: usize| out.push(Violation::Register { op: index, resource: what, limit });
    let mut tiles = vec![m.tile()];
    if let Micro::ArgmaxResult { tiles: t, .. } = m {
        tiles.extend(t);
    }
    for (r, _) in m.accesses() {
        match r {
            Resource::Mem { tile, addr } => {
                tiles.push(tile);
                if addr >= lim.mem_folds {
                    bad(r.to_string(), lim.mem_folds);
                }
            }
            Resource::Rf { tile, reg } => {
                tiles.push(tile);
                if reg >= lim.rf_regs {
                    bad(r.to_string(), lim.rf_regs);
                }
            }
            Resource::Bnd { tile, reg } => {
                tiles.push(tile);
                if reg >= lim.bnd_regs {
                    bad(r.to_string(), lim.bnd_regs);
                }
            }
            Resource::Dsum { tile, reg } => {
                tiles.push(tile);
                if reg >= lim.dsum_regs {
                    bad(r.to_string(), lim.dsum_regs);
                }
            }
            Resource::Qry { tile, .. } | Resource::Buf { tile } | Resource::Argmax { tile } => tiles.push(tile),
            Resource::Result { .. } => {}
        }
    }
    if let Some(&t) = tiles.iter().find(|&&t| t >= lim.tiles) {
        bad(format!("tile {t}"), lim.tiles);
    }
}

/// Re-derives every hazard from the words and their op-stream metadata.
/// Never fails; an empty list means the program is safe to run.
pub fn validate(p: &Program, lim: &Limits) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.ops.len() != p.starts.len() {
        out.push(Violation::Metadata(format!("{} ops but {} start cycles", p.ops.len(), p.starts.len())));
        return out;
    }
    for (i, op) in p.ops.iter().enumerate() {
        if let Err(e) = op.check(i) {
            out.push(Violation::Malformed { op: i, msg: e.to_string() });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for (i, w) in p.starts.windows(2).enumerate() {
        if w[1] <= w[0] {
            out.push(Violation::OutOfOrder { op: i + 1 });
        }
    }

    // Structural, PARAM, and word agreement.
    let end = p.ops.iter().zip(&p.starts).map(|(o, &s)| s + o.len()).max().unwrap_or(0);
    const FREE: u32 = u32::MAX;
    let mut owner: Vec<[u32; NUM_STAGES]> = vec![[FREE; NUM_STAGES]; end];
    let mut params: Vec<Option<u16>> = vec![None; end];
    for (i, (op, &s)) in p.ops.iter().zip(&p.starts).enumerate() {
        for (pos, m) in op.lanes[0].iter().enumerate() {
            let c = s + pos;
            let slot = &mut owner[c][m.stage().index()];
            match *slot {
                FREE => *slot = i as u32,
                j => out.push(Violation::Structural { cycle: c, stage: m.stage(), ops: (j as usize, i) }),
            }
            if let Some(v) = m.param() {
                match params[c] {
                    Some(q) if q != v => out.push(Violation::ParamConflict { cycle: c }),
                    _ => params[c] = Some(v),
                }
            }
        }
    }
    let expected = emit_words(&p.ops, &p.starts);
    let n = expected.len().max(p.words.len());
    for c in 0..n {
        let e = expected.get(c).copied().unwrap_or(InstructionWord::NOP);
        let f = p.words.get(c).copied().unwrap_or(InstructionWord::NOP);
        if e.check().is_err() || f.check().is_err() || e != f {
            out.push(Violation::WordMismatch { cycle: c, expected: e, found: f });
        }
        if p.mode == ControlMode::Sopc && f.active_stages() > 1 {
            out.push(Violation::SopcOverlap { cycle: c, active: f.active_stages() });
        }
    }

    // Data hazards in program order, plus same-cycle writer uniqueness.
    // Writers per cycle; with in-order issue no later op reaches a cycle
    // before its own start, so older cycles are dropped as the scan moves on.
    let in_order = p.starts.windows(2).all(|w| w[0] <= w[1]);
    let mut writers: HashMap<usize, Vec<Resource>> = HashMap::new();
    let mut pruned = 0;
    let mut last: HashMap<Resource, (Option<(usize, usize)>, Option<(usize, usize)>)> = HashMap::new();
    for (i, (op, &s)) in p.ops.iter().zip(&p.starts).enumerate() {
        if in_order {
            if s.saturating_sub(pruned) > writers.len() {
                writers.retain(|&c, _| c >= s);
            } else {
                for c in pruned..s {
                    writers.remove(&c);
                }
            }
            pruned = pruned.max(s);
        }
        let mut mine = Vec::new();
        for pos in 0..op.len() {
            for m in op.at(pos) {
                check_bounds(i, m, lim, &mut out);
                for (r, a) in m.accesses() {
                    let c = s + pos;
                    if a.writes() {
                        let list = writers.entry(c).or_default();
                        let seen = list.iter().filter(|&&x| x == r).count();
                        if seen == 1 {
                            out.push(Violation::MultiWriter { cycle: c, resource: r });
                        }
                        list.push(r);
                    }
                    if let Some(&(read, write)) = last.get(&r) {
                        let mut prior = write;
                        if a.writes() {
                            prior = prior.max(read);
                        }
                        if let Some((j, pc)) = prior {
                            if c <= pc && j != i {
                                out.push(Violation::Hazard {
                                    resource: r,
                                    earlier: j,
                                    later: i,
                                    earlier_cycle: pc,
                                    later_cycle: c,
                                });
                            }
                        }
                    }
                    mine.push((r, a, c));
                }
            }
        }
        for (r, a, c) in mine {
            let e = last.entry(r).or_default();
            if a.reads() && e.0.is_none_or(|(_, pc)| c >= pc) {
                e.0 = Some((i, c));
            }
            if a.writes() && e.1.is_none_or(|(_, pc)| c >= pc) {
                e.1 = Some((i, c));
            }
        }
    }
    out
}

/// Text form: one word per line, `FIELD=MNEMONIC` pairs for the seven
/// stages plus `PARAM=0xNNNN`. Missing fields default to NOP / 0, `#` starts
/// a comment, and an optional `.mode sopc|mopc` line sets the control mode.
pub fn assemble(text: &str) -> Result<Program> {
    let mut mode = ControlMode::Mopc;
    let mut words = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| IsaError::Asm { line, msg };
        if let Some(rest) = body.strip_prefix('.') {
            let mut parts = rest.split_whitespace();
            match (parts.next().map(str::to_ascii_lowercase).as_deref(), parts.next(), parts.next()) {
                (Some("mode"), Some(m), None) => mode = m.parse().map_err(err)?,
                _ => return Err(err(format!("unknown directive `{body}`"))),
            }
            continue;
        }
        let mut types = [0u8; NUM_STAGES];
        let mut seen = [false; NUM_STAGES + 1];
        let mut param = 0u16;
        for tok in body.split_whitespace() {
            let (key, value) = tok.split_once('=').ok_or_else(|| err(format!("expected FIELD=VALUE, found `{tok}`")))?;
            let key_up = key.to_ascii_uppercase();
            let value_up = value.to_ascii_uppercase();
            if key_up == "PARAM" {
                if seen[NUM_STAGES] {
                    return Err(err("field PARAM given twice".into()));
                }
                seen[NUM_STAGES] = true;
                param = parse_param(&value_up).ok_or_else(|| err(format!("field PARAM: bad value `{value}`")))?;
                continue;
            }
            let stage = Stage::ALL
                .into_iter()
                .find(|s| s.field() == key_up)
                .ok_or_else(|| err(format!("unknown field `{key}`")))?;
            if seen[stage.index()] {
                return Err(err(format!("field {} given twice", stage.field())));
            }
            seen[stage.index()] = true;
            let opcode = stage
                .mnemonics()
                .iter()
                .position(|m| *m == value_up)
                .ok_or_else(|| err(format!("field {}: unknown mnemonic `{value}`", stage.field())))?;
            types[stage.index()] = opcode as u8;
        }
        words.push(InstructionWord { types, param });
    }
    Ok(Program::from_words(mode, words))
}

fn parse_param(v: &str) -> Option<u16> {
    match v.strip_prefix("0X") {
        Some(hex) => u16::from_str_radix(hex, 16).ok(),
        None => v.parse().ok(),
    }
}

pub fn disassemble(p: &Program) -> String {
    let mut out = format!(".mode {}\n", p.mode);
    for w in &p.words {
        out.push_str(&w.to_string());
        out.push('\n');
    }
    out
}

const VSAP_VERSION: u16 = 1;

/// Binary form: `VSAP`, version u16, mode u8, reserved u8, word count u32,
/// then little-endian u64 words.
pub fn to_bytes(p: &Program) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * p.words.len());
    out.extend_from_slice(b"VSAP");
    out.extend_from_slice(&VSAP_VERSION.to_le_bytes());
    out.push(match p.mode {
        ControlMode::Sopc => 0,
        ControlMode::Mopc => 1,
    });
    out.push(0);
    out.extend_from_slice(&(p.words.len() as u32).to_le_bytes());
    for w in &p.words {
        out.extend_from_slice(&w.encode().to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Program> {
    if bytes.len() < 12 || &bytes[..4] != b"VSAP" {
        return Err(IsaError::Format("missing VSAP header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VSAP_VERSION {
        return Err(IsaError::Format(format!("unsupported version {version}")));
    }
    let mode = match bytes[6] {
        0 => ControlMode::Sopc,
        1 => ControlMode::Mopc,
        m => return Err(IsaError::Format(format!("unknown mode byte {m}"))),
    };
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != 8 * n {
        return Err(IsaError::Format(format!("expected {} word bytes, found {}", 8 * n, body.len())));
    }
    let words = body
        .chunks(8)
        .map(|c| InstructionWord::decode(u64::from_le_bytes(c.try_into().unwrap())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Program::from_words(mode, words))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_path(tile: usize, i: usize) -> PrimitiveOp {
        // touches nothing shared with other indices
        PrimitiveOp::single(
            OpKind::Store,
            vec![
                Micro::Load { tile, addr: 1000 + i },
                Micro::RfRead { tile, reg: 7 },
                Micro::XorBuf { tile },
                Micro::Cvt { tile },
                Micro::AccRead { tile, reg: 7 },
                Micro::Sign { tile },
                Micro::Store { tile, addr: 2000 + i },
            ],
        )
    }

    fn limits() -> Limits {
        Limits { tiles: 4, rf_regs: 8, bnd_regs: 8, dsum_regs: 8, mem_folds: 4096 }
    }

    #[test]
    fn nop_word_is_zero() {
        assert_eq!(InstructionWord::NOP.encode(), 0);
        assert_eq!(InstructionWord::decode(0).unwrap(), InstructionWord::NOP);
    }

    #[test]
    fn reserved_and_unknown_opcodes_rejected() {
        assert_eq!(InstructionWord::decode(1 << 63), Err(IsaError::Reserved(1 << 63)));
        assert!(matches!(InstructionWord::decode(0xF), Err(IsaError::Opcode { stage: Stage::Mem, opcode: 15 })));
        let w = InstructionWord::new([1, 2, 3, 3, 2, 2, 6], 0xBEEF).unwrap();
        assert_eq!(InstructionWord::decode(w.encode()).unwrap(), w);
        assert_eq!(w.encode() >> 28, 0xBEEF);
    }

    #[test]
    fn micro_opcodes_match_tables() {
        let all = [
            Micro::Load { tile: 0, addr: 0 },
            Micro::LoadRot { tile: 0, base: 0, folds: 1, fold: 0, shift: 0 },
            Micro::LoadQry { tile: 0, src: 0, addr: 0, fold: 0 },
            Micro::Gen { tile: 0, reg: 0 },
            Micro::RfWrite { tile: 0, reg: 0 },
            Micro::RfRead { tile: 0, reg: 0 },
            Micro::BufSet { tile: 0 },
            Micro::BufXor { tile: 0 },
            Micro::XorBuf { tile: 0 },
            Micro::Cvt { tile: 0 },
            Micro::ScaleImm { tile: 0, weight: -3 },
            Micro::ScaleDsum { tile: 0, src: 0, reg: 0 },
            Micro::AccSet { tile: 0, reg: 0 },
            Micro::AccAdd { tile: 0, reg: 0 },
            Micro::AccRead { tile: 0, reg: 0 },
            Micro::Sign { tile: 0 },
            Micro::Popcnt { tile: 0, fold: 0 },
            Micro::DsumSet { tile: 0, reg: 0 },
            Micro::DsumAcc { tile: 0, reg: 0 },
            Micro::Argmax { tile: 0, reg: 0, index: 0 },
            Micro::ArgmaxReset { tile: 0 },
            Micro::ArgmaxResult { tile: 0, tiles: vec![0], slot: 0 },
            Micro::Store { tile: 0, addr: 0 },
        ];
        let mut seen = std::collections::HashSet::new();
        for m in &all {
            assert!(seen.insert((m.stage(), m.opcode())), "{m:?}");
            assert_ne!(m.mnemonic(), "NOP");
        }
        let total: usize = Stage::ALL.iter().map(|s| s.mnemonics().len() - 1).sum();
        assert_eq!(seen.len(), total);
        assert_eq!(Micro::ScaleImm { tile: 0, weight: -3 }.param(), Some(0xFFFD));
    }

    #[test]
    fn sopc_word_counts() {
        assert!(schedule_sopc(vec![]).unwrap().is_empty());
        assert_eq!(schedule_sopc(vec![full_path(0, 0)]).unwrap().len(), 7);
        let p = schedule_sopc((0..5).map(|i| full_path(0, i)).collect()).unwrap();
        assert_eq!(p.len(), 35);
        assert!(p.words.iter().all(|w| w.active_stages() == 1));
        assert!(validate(&p, &limits()).is_empty());
    }

    #[test]
    fn mopc_independent_ops_pipeline() {
        let ops: Vec<_> = (0..10).map(|i| full_path(i % 4, i)).collect();
        let p = schedule_mopc(ops).unwrap();
        assert_eq!(p.len(), 10 + 6);
        assert!(validate(&p, &limits()).is_empty());
        let one = schedule_mopc(vec![full_path(0, 0)]).unwrap();
        assert_eq!(one.words, schedule_sopc(vec![full_path(0, 0)]).unwrap().words);
    }

    #[test]
    fn mopc_respects_bnd_read_after_write() {
        let a = PrimitiveOp::single(
            OpKind::BundleAcc,
            vec![Micro::Load { tile: 0, addr: 0 }, Micro::Cvt { tile: 0 }, Micro::AccSet { tile: 0, reg: 0 }],
        );
        let b = PrimitiveOp::single(
            OpKind::Sign,
            vec![Micro::Load { tile: 0, addr: 1 }, Micro::Cvt { tile: 0 }, Micro::AccAdd { tile: 0, reg: 0 }],
        );
        let p = schedule_mopc(vec![a, b]).unwrap();
        let s5 = |i: usize| p.starts[i] + 2;
        assert!(s5(1) > s5(0));
        assert!(validate(&p, &limits()).is_empty());
    }

    #[test]
    fn mopc_waits_for_late_writer() {
        // the store lands at S7; a later load of the same address must wait
        let st = PrimitiveOp::single(
            OpKind::Store,
            vec![Micro::Load { tile: 0, addr: 0 }, Micro::Store { tile: 0, addr: 5 }],
        );
        let ld = PrimitiveOp::single(OpKind::LoadItem, vec![Micro::Load { tile: 0, addr: 5 }, Micro::BufSet { tile: 0 }]);
        let p = schedule_mopc(vec![st, ld]).unwrap();
        assert_eq!(p.starts, vec![0, 2]);
        // write-after-read: a store into an address an earlier op still reads
        let rd = PrimitiveOp::single(
            OpKind::Store,
            vec![Micro::Load { tile: 0, addr: 9 }, Micro::Store { tile: 0, addr: 1 }],
        );
        let gen = PrimitiveOp::single(OpKind::GenFold, vec![Micro::RfRead { tile: 0, reg: 0 }, Micro::Store { tile: 0, addr: 9 }]);
        let p = schedule_mopc(vec![rd, gen]).unwrap();
        assert!(validate(&p, &limits()).is_empty());
    }

    #[test]
    fn param_conflicts_delay() {
        let rot = |shift| {
            PrimitiveOp::single(
                OpKind::LoadItem,
                vec![Micro::LoadRot { tile: 0, base: 0, folds: 2, fold: 0, shift }, Micro::BufSet { tile: 1 }],
            )
        };
        let imm = |w, addr| {
            PrimitiveOp::single(
                OpKind::ScalarMult,
                vec![Micro::Load { tile: 0, addr }, Micro::ScaleImm { tile: 0, weight: w }],
            )
        };
        let p = schedule_mopc(vec![rot(1), imm(1, 10), imm(5, 11)]).unwrap();
        // imm(1) shares its MULT word with nothing; imm(5) cannot share PARAM with rot(1)'s word
        assert!(validate(&p, &limits()).is_empty());
        let q = schedule_mopc(vec![rot(3), rot(4)]).unwrap();
        assert_eq!(q.starts, vec![0, 1]);
        assert_ne!(q.words[0].param, q.words[1].param);
    }

    #[test]
    fn validator_flags_double_dsum_writer() {
        let op = PrimitiveOp::new(
            OpKind::DsumAcc,
            vec![vec![Micro::DsumSet { tile: 0, reg: 1 }], vec![Micro::DsumSet { tile: 0, reg: 1 }]],
        );
        let p = Program {
            mode: ControlMode::Mopc,
            words: emit_words(std::slice::from_ref(&op), &[0]),
            ops: vec![op],
            starts: vec![0],
        };
        let v = validate(&p, &limits());
        assert!(v.iter().any(|v| matches!(v, Violation::MultiWriter { resource: Resource::Dsum { reg: 1, .. }, .. })));
    }

    #[test]
    fn validator_flags_register_bounds() {
        let op = PrimitiveOp::single(OpKind::BundleAcc, vec![Micro::AccRead { tile: 0, reg: 2 }]);
        let p = schedule_mopc(vec![op]).unwrap();
        let lim = Limits { bnd_regs: 2, ..limits() };
        assert!(matches!(validate(&p, &lim)[..], [Violation::Register { limit: 2, .. }]));
        let bad_tile = schedule_mopc(vec![PrimitiveOp::single(OpKind::Sign, vec![Micro::Sign { tile: 9 }])]).unwrap();
        assert!(!validate(&bad_tile, &limits()).is_empty());
    }

    #[test]
    fn validator_flags_hand_built_hazards() {
        let w = PrimitiveOp::single(OpKind::DsumAcc, vec![Micro::Popcnt { tile: 0, fold: 0 }, Micro::DsumSet { tile: 0, reg: 0 }]);
        let r = PrimitiveOp::single(OpKind::Argmax, vec![Micro::Argmax { tile: 0, reg: 0, index: 0 }]);
        // reader placed in the same cycle as the writer's S7
        let ops = vec![w, r];
        let starts = vec![0, 1];
        let p = Program { mode: ControlMode::Mopc, words: emit_words(&ops, &starts), ops, starts };
        let v = validate(&p, &limits());
        assert!(v.iter().any(|v| matches!(v, Violation::Structural { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::Hazard { .. })));
        // a tampered word is caught as well
        let mut q = schedule_mopc(vec![full_path(0, 0)]).unwrap();
        q.words[3].types[0] = 1;
        assert!(validate(&q, &limits()).iter().any(|v| matches!(v, Violation::WordMismatch { cycle: 3, .. })));
        let sopc = Program { mode: ControlMode::Sopc, ..schedule_mopc((0..3).map(|i| full_path(0, i)).collect()).unwrap() };
        assert!(validate(&sopc, &limits()).iter().any(|v| matches!(v, Violation::SopcOverlap { .. })));
    }

    #[test]
    fn assembler_basics() {
        let p = assemble("MEM=NOP GEN=NOP BIND=NOP MUL=NOP BND=NOP SGN=NOP DC=NOP PARAM=0x0000").unwrap();
        assert_eq!(p.words, vec![InstructionWord::NOP]);
        let p = assemble("# comment\n.mode sopc\n\nmem=ld dc=st param=0x10 # trailing\n").unwrap();
        assert_eq!(p.mode, ControlMode::Sopc);
        assert_eq!(p.words[0].types, [1, 0, 0, 0, 0, 0, 6]);
        assert_eq!(p.words[0].param, 0x10);
        assert!(assemble("").unwrap().is_empty());
    }

    #[test]
    fn assembler_diagnostics() {
        let e = assemble("MEM=LD\nBND=BOGUS").unwrap_err();
        assert_eq!(e, IsaError::Asm { line: 2, msg: "field BND: unknown mnemonic `BOGUS`".into() });
        assert!(e.to_string().contains("line 2") && e.to_string().contains("BND"));
        assert!(matches!(assemble("FOO=1"), Err(IsaError::Asm { line: 1, .. })));
        assert!(matches!(assemble("MEM=LD MEM=LD"), Err(IsaError::Asm { .. })));
        assert!(matches!(assemble("PARAM=0x10000"), Err(IsaError::Asm { .. })));
        assert!(matches!(assemble("MEM"), Err(IsaError::Asm { .. })));
        assert!(matches!(assemble(".mode fast"), Err(IsaError::Asm { .. })));
    }

    #[test]
    fn text_and_binary_round_trip() {
        let ops: Vec<_> = (0..6).map(|i| full_path(i % 2, i)).collect();
        let p = schedule_mopc(ops).unwrap();
        let text = disassemble(&p);
        let back = assemble(&text).unwrap();
        assert_eq!(back.words, p.words);
        assert_eq!(disassemble(&back), text);
        let bin = from_bytes(&to_bytes(&p)).unwrap();
        assert_eq!(bin.words, p.words);
        assert_eq!(bin.mode, ControlMode::Mopc);
        assert!(from_bytes(b"VSAX").is_err());
        let mut bad = to_bytes(&p);
        bad.pop();
        assert!(from_bytes(&bad).is_err());
    }
}
