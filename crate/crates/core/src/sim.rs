//! Cycle-level simulator of the tiled accelerator.
//!
//! Each tile owns the memory and codebook-generation units (SRAM, CA-90,
//! CA-90 RF, QRY), a vector-operation pipeline (bind buffer, MULT, BND RF,
//! SGN), and the distance units (POPCNT, DSUM RF, ARGMAX). One Instruction
//! Word issues per cycle and every unit has single-cycle latency. Within a
//! cycle the active stages run in order S1 to S7, so a primitive's data moves
//! forward exactly one stage per cycle through its private latch.
//!
//! Energy is an abstract proxy: every micro-op execution on a tile costs its
//! stage's weight and every active tile leaks a fixed amount per cycle.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codebook::{ca90_step, Codebook};
use crate::hdc::{self, Fold, HdcError, Hypervector, Precision};
use crate::isa::{self, InstructionWord, Limits, Micro, Program, Stage, Violation, NUM_STAGES};
use crate::kernels::similarity_weight;

pub const REPORT_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "cycle,tile,stage,opcode,energy_delta";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no active tiles in mask {0:#x}")]
    NoActiveTiles(u64),
    #[error("tile {tile} needs {needed} folds of memory but holds {available}")]
    Capacity { tile: usize, needed: usize, available: usize },
    #[error("program has words but no op stream to execute")]
    MissingSchedule,
    #[error("program failed validation: {}", .0.iter().take(5).map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("fault at cycle {cycle}: {msg}")]
    Fault { cycle: usize, msg: String },
    #[error("program already finished")]
    Finished,
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Dynamic energy per micro-op execution on one tile, per stage, and the
/// leakage of one active tile per cycle. Abstract units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    pub mem: f64,
    pub gen: f64,
    pub bind: f64,
    pub mult: f64,
    pub bnd: f64,
    pub sgn_pop: f64,
    pub dc: f64,
    pub leakage: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { mem: 4.0, gen: 1.5, bind: 1.0, mult: 2.0, bnd: 3.0, sgn_pop: 1.5, dc: 1.0, leakage: 2.0 }
    }
}

impl EnergyWeights {
    pub fn stage(&self, s: Stage) -> f64 {
        match s {
            Stage::Mem => self.mem,
            Stage::Gen => self.gen,
            Stage::Bind => self.bind,
            Stage::Mult => self.mult,
            Stage::Bnd => self.bnd,
            Stage::SgnPop => self.sgn_pop,
            Stage::Dc => self.dc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccConfig {
    #[serde(default)]
    pub name: String,
    pub fold_width: usize,
    pub tiles: usize,
    pub ca90_rf_regs: usize,
    pub bnd_rf_regs: usize,
    pub dsum_regs: usize,
    pub distance_bits: u32,
    pub bnd_bits: u32,
    /// Bytes, split evenly across tiles.
    pub memory_capacity: usize,
    #[serde(default)]
    pub energy: EnergyWeights,
    /// Bit `t` enables tile `t`; absent means every tile.
    #[serde(default)]
    pub active_tile_mask: Option<u64>,
}

impl AccConfig {
    fn preset(name: &str, k: usize) -> Self {
        AccConfig {
            name: name.into(),
            fold_width: 512,
            tiles: k,
            ca90_rf_regs: k,
            bnd_rf_regs: k,
            dsum_regs: k,
            distance_bits: 12,
            bnd_bits: 8,
            memory_capacity: k * 64 * 1024,
            energy: EnergyWeights::default(),
            active_tile_mask: None,
        }
    }

    pub fn acc2() -> Self {
        Self::preset("acc2", 2)
    }

    pub fn acc4() -> Self {
        Self::preset("acc4", 4)
    }

    pub fn acc8() -> Self {
        Self::preset("acc8", 8)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "acc2" => Some(Self::acc2()),
            "acc4" => Some(Self::acc4()),
            "acc8" => Some(Self::acc8()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fold_width", self.fold_width),
            ("tiles", self.tiles),
            ("ca90_rf_regs", self.ca90_rf_regs),
            ("bnd_rf_regs", self.bnd_rf_regs),
            ("dsum_regs", self.dsum_regs),
            ("memory_capacity", self.memory_capacity),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(SimError::Config(format!("{k} must be positive")));
        }
        if self.tiles > 64 {
            return Err(SimError::Config("at most 64 tiles".into()));
        }
        if !(2..=32).contains(&self.distance_bits) || !(2..=32).contains(&self.bnd_bits) {
            return Err(SimError::Config("distance_bits and bnd_bits must lie in 2..=32".into()));
        }
        if self.memory_capacity % self.tiles != 0 {
            return Err(SimError::Config("memory_capacity must split evenly across tiles".into()));
        }
        if self.tile_capacity_folds() == 0 {
            return Err(SimError::Config("per-tile memory smaller than one fold".into()));
        }
        if self.active_tiles().is_empty() {
            return Err(SimError::NoActiveTiles(self.mask()));
        }
        Ok(())
    }

    pub fn mask(&self) -> u64 {
        let all = if self.tiles >= 64 { u64::MAX } else { (1u64 << self.tiles) - 1 };
        self.active_tile_mask.map_or(all, |m| m & all)
    }

    pub fn active_tiles(&self) -> Vec<usize> {
        let m = self.mask();
        (0..self.tiles).filter(|t| m >> t & 1 == 1).collect()
    }

    pub fn precision(&self) -> Precision {
        Precision { bnd_bits: self.bnd_bits, dist_bits: self.distance_bits }
    }

    pub fn tile_capacity_folds(&self) -> usize {
        (self.memory_capacity / self.tiles) / self.fold_width.div_ceil(8)
    }

    pub fn limits(&self) -> Limits {
        Limits {
            tiles: self.tiles,
            rf_regs: self.ca90_rf_regs,
            bnd_regs: self.bnd_rf_regs,
            dsum_regs: self.dsum_regs,
            mem_folds: self.tile_capacity_folds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Loc {
    pub tile: usize,
    pub addr: usize,
}

/// Input data of a run: codebooks (stored as seeds) and full vectors
/// (stored fold by fold).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub dim: usize,
    pub codebooks: Vec<Codebook>,
    pub vectors: Vec<Hypervector>,
}

/// Where every input lives. Each codebook's items go round-robin over the
/// active tiles starting from the first, so item `i` sits on active tile
/// `i mod K`; vectors follow, also round-robin. Whatever remains on a tile is
/// scratch space handed out by [`Layout::alloc`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub active: Vec<usize>,
    pub folds: usize,
    pub capacity: usize,
    pub items: Vec<Vec<Loc>>,
    pub vectors: Vec<Loc>,
    next: Vec<usize>,
}

impl Layout {
    pub fn new(cfg: &AccConfig, dim: usize, codebook_sizes: &[usize], num_vectors: usize) -> Result<Self> {
        cfg.validate()?;
        hdc::check_shape(dim, cfg.fold_width)?;
        let active = cfg.active_tiles();
        let mut layout = Layout {
            folds: dim / cfg.fold_width,
            capacity: cfg.tile_capacity_folds(),
            items: Vec::new(),
            vectors: Vec::new(),
            next: vec![0; cfg.tiles],
            active,
        };
        for &n in codebook_sizes {
            let locs = (0..n)
                .map(|i| {
                    let tile = layout.active[i % layout.active.len()];
                    layout.alloc(tile, 1).map(|addr| Loc { tile, addr })
                })
                .collect::<Result<Vec<_>>>()?;
            layout.items.push(locs);
        }
        for v in 0..num_vectors {
            let tile = layout.active[v % layout.active.len()];
            let addr = layout.alloc(tile, layout.folds)?;
            layout.vectors.push(Loc { tile, addr });
        }
        Ok(layout)
    }

    pub fn for_dataset(cfg: &AccConfig, data: &Dataset) -> Result<Self> {
        let sizes: Vec<usize> = data.codebooks.iter().map(Codebook::len).collect();
        Layout::new(cfg, data.dim, &sizes, data.vectors.len())
    }

    /// `n` consecutive free folds on `tile`.
    pub fn alloc(&mut self, tile: usize, n: usize) -> Result<usize> {
        let at = self.next[tile];
        if at + n > self.capacity {
            return Err(SimError::Capacity { tile, needed: at + n, available: self.capacity });
        }
        self.next[tile] = at + n;
        Ok(at)
    }

    pub fn k(&self) -> usize {
        self.active.len()
    }

    pub fn lead(&self) -> usize {
        self.active[0]
    }

    pub fn used(&self, tile: usize) -> usize {
        self.next[tile]
    }
}

/// What the host reads back after the last word: result slots and vectors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outputs {
    pub slots: usize,
    pub vectors: Vec<Loc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchResults {
    pub indices: Vec<Option<usize>>,
    pub scores: Vec<Option<i64>>,
    #[serde(skip)]
    pub vectors: Vec<Hypervector>,
}

impl ArchResults {
    /// SHA-256 over indices, scores, and packed vectors.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.indices.len() as u64).to_le_bytes());
        for (i, s) in self.indices.iter().zip(&self.scores) {
            h.update(i.map_or(u64::MAX, |v| v as u64).to_le_bytes());
            h.update(s.unwrap_or(i64::MIN).to_le_bytes());
        }
        h.update((self.vectors.len() as u64).to_le_bytes());
        for v in &self.vectors {
            h.update(v.to_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub config: String,
    pub control: isa::ControlMode,
    pub total_cycles: usize,
    pub words_executed: usize,
    pub primitive_ops: usize,
    pub active_tiles: usize,
    pub utilization: BTreeMap<String, f64>,
    pub stage_activations: BTreeMap<String, u64>,
    pub energy_total: f64,
    pub energy_dynamic: f64,
    pub energy_leakage: f64,
    pub mean_power: f64,
    pub dsum_saturations: u64,
    pub bnd_saturations: u64,
    pub results_digest: String,
    #[serde(skip)]
    pub results: ArchResults,
}

/// One executed micro-op lane.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub tile: usize,
    pub stage: Stage,
    pub opcode: &'static str,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleTrace {
    pub cycle: usize,
    pub entries: Vec<TraceEntry>,
    pub leakage: f64,
    pub energy_delta: f64,
}

impl CycleTrace {
    /// CSV rows: one per micro-op lane, then one `LEAK` row per active tile.
    pub fn write_csv(&self, active: &[usize], per_tile_leak: f64, w: &mut dyn Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{},{},{},{},{}", self.cycle, e.tile, e.stage.label(), e.opcode, e.energy)?;
        }
        for t in active {
            writeln!(w, "{},{},-,LEAK,{}", self.cycle, t, per_tile_leak)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct TileState {
    mem: Vec<Option<Fold>>,
    rf: Vec<Fold>,
    qry: Vec<Fold>,
    buf: Fold,
    bnd: Vec<Vec<i32>>,
    dsum: Vec<i64>,
    argmax: Option<(i64, usize)>,
}

#[derive(Debug, Clone, Default)]
struct Latch {
    fold: Option<Fold>,
    lanes: Option<Vec<i32>>,
    score: Option<i64>,
}

#[derive(Debug)]
pub struct Machine {
    cfg: AccConfig,
    prec: Precision,
    folds: usize,
    active: Vec<usize>,
    tiles: Vec<TileState>,
    results: Vec<Option<(usize, i64)>>,
    outputs: Outputs,
    program: Program,
    raw: Vec<u64>,
    /// `(op, path position)` pairs due each cycle, flattened: cycle `c`
    /// owns `due[due_at[c]..due_at[c + 1]]`, sorted by stage.
    due: Vec<(u32, u8)>,
    due_at: Vec<u32>,
    latches: HashMap<u32, Vec<Latch>>,
    cycle: usize,
    energy_dynamic: f64,
    energy_leakage: f64,
    stage_cycles: [u64; NUM_STAGES],
    stage_activations: [u64; NUM_STAGES],
    dsum_saturations: u64,
    bnd_saturations: u64,
}

impl Machine {
    /// Places `data` per [`Layout`], checks the program against the
    /// configuration, and readies the machine at cycle 0.
    pub fn load(cfg: &AccConfig, program: Program, data: &Dataset, outputs: Outputs) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::for_dataset(cfg, data)?;
        if program.ops.is_empty() && program.words.iter().any(|w| !w.is_nop()) {
            return Err(SimError::MissingSchedule);
        }
        let violations = isa::validate(&program, &cfg.limits());
        if !violations.is_empty() {
            return Err(SimError::Validation(violations));
        }
        let w = cfg.fold_width;
        let folds = layout.folds;
        let capacity = layout.capacity;
        let mut tiles: Vec<TileState> = (0..cfg.tiles)
            .map(|_| TileState {
                mem: vec![None; capacity],
                rf: vec![Fold::zero(w); cfg.ca90_rf_regs],
                qry: vec![Fold::zero(w); folds],
                buf: Fold::zero(w),
                bnd: vec![vec![0; w]; cfg.bnd_rf_regs],
                dsum: vec![0; cfg.dsum_regs],
                argmax: None,
            })
            .collect();
        for (cb, locs) in data.codebooks.iter().zip(&layout.items) {
            if cb.fold_width() != w || cb.dim() != data.dim {
                return Err(SimError::Config(format!("codebook `{}` shape differs from the dataset", cb.name())));
            }
            for (seed, loc) in cb.seeds().iter().zip(locs) {
                tiles[loc.tile].mem[loc.addr] = Some(seed.clone());
            }
        }
        for (v, loc) in data.vectors.iter().zip(&layout.vectors) {
            if v.fold_width() != w || v.dim() != data.dim {
                return Err(SimError::Config("input vector shape differs from the dataset".into()));
            }
            for (k, f) in v.folds().into_iter().enumerate() {
                tiles[loc.tile].mem[loc.addr + k] = Some(f);
            }
        }
        for loc in &outputs.vectors {
            if loc.tile >= cfg.tiles || loc.addr + folds > capacity {
                return Err(SimError::Config(format!("output vector at {}:{} out of range", loc.tile, loc.addr)));
            }
        }
        let cycles = program.words.len();
        let mut due_at = vec![0u32; cycles + 1];
        for (op, &s) in program.ops.iter().zip(&program.starts) {
            for pos in 0..op.len() {
                due_at[s + pos + 1] += 1;
            }
        }
        for c in 0..cycles {
            due_at[c + 1] += due_at[c];
        }
        let mut fill: Vec<u32> = due_at[..cycles].to_vec();
        let mut due = vec![(0u32, 0u8); due_at[cycles] as usize];
        for (i, (op, &s)) in program.ops.iter().zip(&program.starts).enumerate() {
            for pos in 0..op.len() {
                due[fill[s + pos] as usize] = (i as u32, pos as u8);
                fill[s + pos] += 1;
            }
        }
        drop(fill);
        for c in 0..cycles {
            due[due_at[c] as usize..due_at[c + 1] as usize]
                .sort_by_key(|&(i, pos)| program.ops[i as usize].lanes[0][pos as usize].stage());
        }
        let raw = program.words.iter().map(InstructionWord::encode).collect();
        Ok(Machine {
            prec: cfg.precision(),
            active: cfg.active_tiles(),
            cfg: cfg.clone(),
            folds,
            tiles,
            results: vec![None; outputs.slots],
            outputs,
            program,
            raw,
            due,
            due_at,
            latches: HashMap::new(),
            cycle: 0,
            energy_dynamic: 0.0,
            energy_leakage: 0.0,
            stage_cycles: [0; NUM_STAGES],
            stage_activations: [0; NUM_STAGES],
            dsum_saturations: 0,
            bnd_saturations: 0,
        })
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn finished(&self) -> bool {
        self.cycle >= self.raw.len()
    }

    pub fn config(&self) -> &AccConfig {
        &self.cfg
    }

    /// Overwrites the encoded word at `cycle`; used to inject decode faults.
    pub fn patch_word(&mut self, cycle: usize, raw: u64) {
        self.raw[cycle] = raw;
    }

    /// Current DSUM register value, for inspection.
    pub fn dsum(&self, tile: usize, reg: usize) -> i64 {
        self.tiles[tile].dsum[reg]
    }

    /// Current BND RF lanes, for inspection.
    pub fn bnd(&self, tile: usize, reg: usize) -> &[i32] {
        &self.tiles[tile].bnd[reg]
    }

    fn fault(&self, msg: impl Into<String>) -> SimError {
        SimError::Fault { cycle: self.cycle, msg: msg.into() }
    }

    /// Executes one word.
    pub fn step(&mut self) -> Result<CycleTrace> {
        if self.finished() {
            return Err(SimError::Finished);
        }
        let word = InstructionWord::decode(self.raw[self.cycle]).map_err(|e| self.fault(e.to_string()))?;
        let active = self.due[self.due_at[self.cycle] as usize..self.due_at[self.cycle + 1] as usize].to_vec();
        let mut scheduled = [0u8; NUM_STAGES];
        for &(i, pos) in &active {
            let m = &self.program.ops[i as usize].lanes[0][pos as usize];
            scheduled[m.stage().index()] = m.opcode();
            if m.param().is_some_and(|p| p != word.param) {
                return Err(self.fault(format!("PARAM {:#06x} does not match {}", word.param, m.mnemonic())));
            }
        }
        if scheduled != word.types {
            return Err(self.fault(format!("word `{word}` has no matching operands in the op stream")));
        }

        let mut entries = Vec::new();
        for &(i, pos) in &active {
            let op = &self.program.ops[i as usize];
            let lanes = op.lanes.len();
            let mut latches = self.latches.remove(&i).unwrap_or_else(|| vec![Latch::default(); lanes]);
            let stage = op.lanes[0][pos as usize].stage();
            let weight = self.cfg.energy.stage(stage);
            let micros: Vec<Micro> = op.at(pos as usize).cloned().collect();
            let last = pos as usize + 1 == op.len();
            for (m, latch) in micros.iter().zip(latches.iter_mut()) {
                self.exec(m, latch)?;
                entries.push(TraceEntry { tile: m.tile(), stage, opcode: m.mnemonic(), energy: weight });
            }
            self.stage_cycles[stage.index()] += 1;
            self.stage_activations[stage.index()] += lanes as u64;
            if !last {
                self.latches.insert(i, latches);
            }
        }
        let dynamic: f64 = entries.iter().map(|e| e.energy).sum();
        let leakage = self.cfg.energy.leakage * self.active.len() as f64;
        self.energy_dynamic += dynamic;
        self.energy_leakage += leakage;
        let trace = CycleTrace { cycle: self.cycle, entries, leakage, energy_delta: dynamic + leakage };
        self.cycle += 1;
        Ok(trace)
    }

    fn exec(&mut self, m: &Micro, latch: &mut Latch) -> Result<()> {
        let w = self.cfg.fold_width;
        macro_rules! need {
            ($field:ident) => {
                latch.$field.take().ok_or_else(|| self.fault(format!("{} has no {} in its latch", m.mnemonic(), stringify!($field))))?
            };
        }
        match *m {
            Micro::Load { tile, addr } => latch.fold = Some(self.read_mem(tile, addr)?),
            Micro::LoadRot { tile, base, folds, fold, shift } => {
                let parts = (base..base + folds).map(|a| self.read_mem(tile, a)).collect::<Result<Vec<_>>>()?;
                let v = Hypervector::from_folds(&parts)?;
                if fold >= folds {
                    return Err(self.fault(format!("LDR fold {fold} of a {folds}-fold vector")));
                }
                latch.fold = Some(hdc::permute(&v, shift as usize).fold(fold));
            }
            Micro::LoadQry { tile, src, addr, fold } => {
                let f = self.read_mem(src, addr)?;
                let q = self.tiles[tile].qry.get_mut(fold).ok_or_else(|| SimError::Fault {
                    cycle: self.cycle,
                    msg: format!("QRY fold {fold} out of range"),
                })?;
                *q = f;
            }
            Micro::Gen { tile, reg } => {
                let next = ca90_step(&self.tiles[tile].rf[reg]);
                self.tiles[tile].rf[reg] = next.clone();
                latch.fold = Some(next);
            }
            Micro::RfWrite { tile, reg } => {
                let f = need!(fold);
                self.tiles[tile].rf[reg] = f.clone();
                latch.fold = Some(f);
            }
            Micro::RfRead { tile, reg } => latch.fold = Some(self.tiles[tile].rf[reg].clone()),
            Micro::BufSet { tile } => {
                let f = need!(fold);
                self.tiles[tile].buf = f.clone();
                latch.fold = Some(f);
            }
            Micro::BufXor { tile } => {
                let f = need!(fold);
                self.tiles[tile].buf.xor_assign(&f);
                latch.fold = Some(self.tiles[tile].buf.clone());
            }
            Micro::XorBuf { tile } => {
                let f = need!(fold);
                latch.fold = Some(f.xor(&self.tiles[tile].buf));
            }
            Micro::Cvt { .. } => {
                let f = need!(fold);
                latch.lanes = Some(scaled(&f, 1));
            }
            Micro::ScaleImm { weight, .. } => {
                let f = need!(fold);
                let wgt = crate::kernels::clamp_weight(i64::from(weight), self.prec.bnd_bits);
                latch.lanes = Some(scaled(&f, wgt as i32));
            }
            Micro::ScaleDsum { src, reg, .. } => {
                let f = need!(fold);
                let wgt = similarity_weight(self.tiles[src].dsum[reg], self.prec);
                latch.lanes = Some(scaled(&f, wgt as i32));
            }
            Micro::AccSet { tile, reg } => {
                let mut lanes = need!(lanes);
                for l in lanes.iter_mut() {
                    *l = self.sat_bnd(i64::from(*l));
                }
                self.tiles[tile].bnd[reg].clone_from(&lanes);
                latch.lanes = Some(lanes);
            }
            Micro::AccAdd { tile, reg } => {
                let lanes = need!(lanes);
                let mut acc = std::mem::take(&mut self.tiles[tile].bnd[reg]);
                for (a, l) in acc.iter_mut().zip(&lanes) {
                    *a = self.sat_bnd(i64::from(*a) + i64::from(*l));
                }
                self.tiles[tile].bnd[reg] = acc.clone();
                latch.lanes = Some(acc);
            }
            Micro::AccRead { tile, reg } => latch.lanes = Some(self.tiles[tile].bnd[reg].clone()),
            Micro::Sign { .. } => {
                let lanes = need!(lanes);
                let mut f = Fold::zero(w);
                for (i, &l) in lanes.iter().enumerate() {
                    if l < 0 {
                        f.set(i, true);
                    }
                }
                latch.fold = Some(f);
            }
            Micro::Popcnt { tile, fold } => {
                let f = need!(fold);
                let q = self.tiles[tile].qry.get(fold).ok_or_else(|| SimError::Fault {
                    cycle: self.cycle,
                    msg: format!("QRY fold {fold} out of range"),
                })?;
                latch.score = Some(w as i64 - 2 * i64::from(f.xor(q).count_ones()));
            }
            Micro::DsumSet { tile, reg } => {
                let s = need!(score);
                self.tiles[tile].dsum[reg] = self.sat_dist(s);
            }
            Micro::DsumAcc { tile, reg } => {
                let s = need!(score);
                self.tiles[tile].dsum[reg] = self.sat_dist(self.tiles[tile].dsum[reg] + s);
            }
            Micro::Argmax { tile, reg, index } => {
                let v = self.tiles[tile].dsum[reg];
                let t = &mut self.tiles[tile];
                if t.argmax.is_none_or(|(best, _)| v > best) {
                    t.argmax = Some((v, index));
                }
            }
            Micro::ArgmaxReset { tile } => self.tiles[tile].argmax = None,
            Micro::ArgmaxResult { ref tiles, slot, .. } => {
                let best = tiles
                    .iter()
                    .filter_map(|&t| self.tiles[t].argmax)
                    .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
                    .ok_or_else(|| self.fault("ARES over tiles with no candidates"))?;
                let r = self.results.get_mut(slot).ok_or_else(|| SimError::Fault {
                    cycle: self.cycle,
                    msg: format!("result slot {slot} out of range"),
                })?;
                *r = Some((best.1, best.0));
            }
            Micro::Store { tile, addr } => {
                let f = need!(fold);
                self.tiles[tile].mem[addr] = Some(f);
            }
        }
        Ok(())
    }

    fn read_mem(&self, tile: usize, addr: usize) -> Result<Fold> {
        self.tiles[tile].mem[addr].clone().ok_or_else(|| self.fault(format!("read of uninitialized MEM[{tile}:{addr}]")))
    }

    fn sat_bnd(&mut self, v: i64) -> i32 {
        let s = hdc::saturate(v, self.prec.bnd_bits);
        if s != v {
            self.bnd_saturations += 1;
        }
        s as i32
    }

    fn sat_dist(&mut self, v: i64) -> i64 {
        let s = hdc::saturate(v, self.prec.dist_bits);
        if s != v {
            self.dsum_saturations += 1;
        }
        s
    }

    /// Reads the declared outputs from the current state.
    pub fn results(&self) -> Result<ArchResults> {
        let vectors = self
            .outputs
            .vectors
            .iter()
            .map(|loc| {
                let folds = (0..self.folds).map(|k| self.read_mem(loc.tile, loc.addr + k)).collect::<Result<Vec<_>>>()?;
                Ok(Hypervector::from_folds(&folds)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ArchResults {
            indices: self.results.iter().map(|r| r.map(|(i, _)| i)).collect(),
            scores: self.results.iter().map(|r| r.map(|(_, s)| s)).collect(),
            vectors,
        })
    }

    pub fn report(&self) -> Result<RunReport> {
        let results = self.results()?;
        let cycles = self.cycle;
        let frac = |n: u64| if cycles == 0 { 0.0 } else { n as f64 / cycles as f64 };
        let energy_total = self.energy_dynamic + self.energy_leakage;
        Ok(RunReport {
            version: REPORT_VERSION,
            config: self.cfg.name.clone(),
            control: self.program.mode,
            total_cycles: cycles,
            words_executed: cycles,
            primitive_ops: self.program.ops.len(),
            active_tiles: self.active.len(),
            utilization: Stage::ALL.iter().map(|s| (s.label().to_string(), frac(self.stage_cycles[s.index()]))).collect(),
            stage_activations: Stage::ALL
                .iter()
                .map(|s| (s.label().to_string(), self.stage_activations[s.index()]))
                .collect(),
            energy_total,
            energy_dynamic: self.energy_dynamic,
            energy_leakage: self.energy_leakage,
            mean_power: if cycles == 0 { 0.0 } else { energy_total / cycles as f64 },
            dsum_saturations: self.dsum_saturations,
            bnd_saturations: self.bnd_saturations,
            results_digest: results.digest(),
            results,
        })
    }

    /// Runs to the end.
    pub fn run(&mut self) -> Result<RunReport> {
        while !self.finished() {
            self.step()?;
        }
        self.report()
    }

    /// Runs to the end, streaming the CSV trace to `out`.
    pub fn run_traced(&mut self, out: &mut dyn Write) -> Result<RunReport> {
        writeln!(out, "{TRACE_HEADER}")?;
        let active = self.active.clone();
        while !self.finished() {
            let t = self.step()?;
            t.write_csv(&active, self.cfg.energy.leakage, out)?;
        }
        self.report()
    }
}

fn scaled(f: &Fold, weight: i32) -> Vec<i32> {
    (0..f.width()).map(|i| if f.bit(i) { -weight } else { weight }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{schedule_mopc, schedule_sopc, ControlMode, OpKind, PrimitiveOp};

    fn tiny(k: usize) -> AccConfig {
        AccConfig { fold_width: 8, memory_capacity: k * 64, ..AccConfig::preset("tiny", k) }
    }

    fn data(dim: usize, w: usize, vectors: Vec<Hypervector>) -> Dataset {
        Dataset { dim, codebooks: vec![Codebook::random("c", 3, dim, w, 1).unwrap()], vectors }
    }

    #[test]
    fn presets_match_the_hardware_table() {
        for (cfg, k, kb) in [(AccConfig::acc2(), 2, 128), (AccConfig::acc4(), 4, 256), (AccConfig::acc8(), 8, 512)] {
            assert_eq!(
                (cfg.fold_width, cfg.tiles, cfg.ca90_rf_regs, cfg.bnd_rf_regs, cfg.dsum_regs),
                (512, k, k, k, k)
            );
            assert_eq!((cfg.distance_bits, cfg.bnd_bits, cfg.memory_capacity), (12, 8, kb * 1024));
            cfg.validate().unwrap();
        }
        assert_eq!(AccConfig::acc2().tile_capacity_folds(), 1024);
        let bad = AccConfig { memory_capacity: 1001, ..AccConfig::acc2() };
        assert!(bad.validate().is_err());
        let none = AccConfig { active_tile_mask: Some(0), ..AccConfig::acc2() };
        assert!(matches!(none.validate(), Err(SimError::NoActiveTiles(0))));
    }

    #[test]
    fn layout_round_robin_and_capacity() {
        let l = Layout::new(&AccConfig::acc2(), 2048, &[120], 0).unwrap();
        let on0 = l.items[0].iter().filter(|p| p.tile == 0).count();
        assert_eq!((on0, 120 - on0), (60, 60));
        let one = AccConfig { active_tile_mask: Some(0b01), ..AccConfig::acc2() };
        let l = Layout::new(&one, 2048, &[120], 0).unwrap();
        assert!(l.items[0].iter().all(|p| p.tile == 0));
        let small = AccConfig { memory_capacity: 2 * 64 * 10, ..AccConfig::acc2() };
        assert!(matches!(Layout::new(&small, 2048, &[120], 0), Err(SimError::Capacity { .. })));
    }

    #[test]
    fn nop_word_only_leaks() {
        let cfg = tiny(2);
        let p = Program::from_words(ControlMode::Sopc, vec![InstructionWord::NOP; 3]);
        let mut m = Machine::load(&cfg, p, &data(16, 8, vec![]), Outputs::default()).unwrap();
        let t = m.step().unwrap();
        assert!(t.entries.is_empty());
        assert_eq!(t.energy_delta, 2.0 * cfg.energy.leakage);
        let r = m.run().unwrap();
        assert_eq!(r.total_cycles, 3);
        assert_eq!(r.energy_total, 3.0 * 2.0 * cfg.energy.leakage);
        assert!(matches!(m.step(), Err(SimError::Finished)));
    }

    #[test]
    fn words_without_operands_are_rejected() {
        let p = Program::from_words(ControlMode::Sopc, vec![InstructionWord::new([1, 0, 0, 0, 0, 0, 0], 0).unwrap()]);
        assert!(matches!(Machine::load(&tiny(1), p, &data(16, 8, vec![]), Outputs::default()), Err(SimError::MissingSchedule)));
    }

    #[test]
    fn popcnt_does_not_touch_dsum_until_accumulated() {
        // word 0: LDQ, word 1: POP (latched only), word 2: DACC
        let cfg = tiny(1);
        let q = Hypervector::from_bit_str("1100110000001111", 8).unwrap();
        let d = data(16, 8, vec![q.clone()]);
        let layout = Layout::for_dataset(&cfg, &d).unwrap();
        let seed0 = layout.items[0][0];
        let vq = layout.vectors[0];
        let ops = vec![
            PrimitiveOp::single(OpKind::LoadQuery, vec![Micro::LoadQry { tile: 0, src: vq.tile, addr: vq.addr, fold: 0 }]),
            PrimitiveOp::single(
                OpKind::DsumAcc,
                vec![
                    Micro::Load { tile: 0, addr: seed0.addr },
                    Micro::Popcnt { tile: 0, fold: 0 },
                    Micro::DsumAcc { tile: 0, reg: 0 },
                ],
            ),
        ];
        let p = schedule_mopc(ops).unwrap();
        assert_eq!(p.len(), 4);
        let mut m = Machine::load(&cfg, p, &d, Outputs::default()).unwrap();
        m.step().unwrap();
        m.step().unwrap();
        let t = m.step().unwrap();
        assert_eq!(t.entries[0].opcode, "POP");
        assert_eq!(m.dsum(0, 0), 0);
        m.step().unwrap();
        let seed = d.codebooks[0].seed(0).unwrap();
        let expected = 8 - 2 * seed.xor(&q.fold(0)).count_ones() as i64;
        assert_eq!(m.dsum(0, 0), expected);
    }

    #[test]
    fn simd_fans_out_over_tiles() {
        let cfg = tiny(4);
        let d = data(16, 8, vec![]);
        let layout = Layout::for_dataset(&cfg, &d).unwrap();
        let lanes = (0..3)
            .map(|i| {
                let loc = layout.items[0][i];
                vec![Micro::Load { tile: loc.tile, addr: loc.addr }, Micro::BufSet { tile: loc.tile }]
            })
            .collect();
        let p = schedule_sopc(vec![PrimitiveOp::new(OpKind::Bind, lanes)]).unwrap();
        let mut m = Machine::load(&cfg, p, &d, Outputs::default()).unwrap();
        m.step().unwrap();
        let t = m.step().unwrap();
        assert_eq!(t.entries.len(), 3);
        assert!(t.entries.iter().all(|e| e.stage == Stage::Bind));
        let tiles: Vec<_> = t.entries.iter().map(|e| e.tile).collect();
        assert_eq!(tiles, vec![0, 1, 2]);
    }

    #[test]
    fn decode_faults_halt() {
        let cfg = tiny(1);
        let p = Program::from_words(ControlMode::Sopc, vec![InstructionWord::NOP; 2]);
        let mut m = Machine::load(&cfg, p, &data(16, 8, vec![]), Outputs::default()).unwrap();
        m.patch_word(1, 1 << 60);
        m.step().unwrap();
        assert!(matches!(m.step(), Err(SimError::Fault { cycle: 1, .. })));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = AccConfig::acc4();
        let text = toml::to_string(&cfg).unwrap();
        let back: AccConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
