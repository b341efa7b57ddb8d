//! Op-stream building blocks shared by the workload compilers.
//!
//! Programs are compiled for one configuration: item placement, register
//! counts, and the number of active tiles all shape the stream. Distance
//! work is SIMD across tiles (one item per tile per round); accumulation
//! that must follow item order for saturation to match runs on the lead
//! tile's vector pipeline, fed over the global datapath.

use crate::isa::{Micro, OpKind, PrimitiveOp};
use crate::sim::{AccConfig, Layout, Loc, Result};

/// Where a distance candidate's folds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Src {
    /// A codebook seed; later folds are generated by CA-90.
    Seed(Loc),
    /// A stored vector, fold `k` at `addr + k`.
    Vector(Loc),
}

impl Src {
    pub fn tile(&self) -> usize {
        match self {
            Src::Seed(l) | Src::Vector(l) => l.tile,
        }
    }
}

/// How a lane's fold enters the pipeline: the S1/S2 prefix of a path.
#[derive(Debug, Clone, Copy)]
pub struct FoldCursor {
    pub src: Src,
    pub tile: usize,
    pub reg: usize,
}

impl FoldCursor {
    /// Micro-ops that latch fold `k`. For seeds this assumes fold `k - 1`
    /// is in the RF register (true when folds are walked in order).
    pub fn fetch(&self, k: usize) -> Vec<Micro> {
        match self.src {
            Src::Vector(l) => vec![Micro::Load { tile: l.tile, addr: l.addr + k }],
            Src::Seed(l) if k == 0 => {
                vec![Micro::Load { tile: l.tile, addr: l.addr }, Micro::RfWrite { tile: self.tile, reg: self.reg }]
            }
            Src::Seed(_) => vec![Micro::Gen { tile: self.tile, reg: self.reg }],
        }
    }
}

pub struct Emitter<'a> {
    pub cfg: &'a AccConfig,
    pub layout: Layout,
    pub ops: Vec<PrimitiveOp>,
}

impl<'a> Emitter<'a> {
    pub fn new(cfg: &'a AccConfig, layout: Layout) -> Self {
        Emitter { cfg, layout, ops: Vec::new() }
    }

    pub fn folds(&self) -> usize {
        self.layout.folds
    }

    pub fn k(&self) -> usize {
        self.layout.k()
    }

    pub fn lead(&self) -> usize {
        self.layout.lead()
    }

    pub fn alloc(&mut self, tile: usize, n: usize) -> Result<usize> {
        self.layout.alloc(tile, n)
    }

    /// `n` vectors placed round-robin over the active tiles.
    pub fn alloc_vectors(&mut self, n: usize) -> Result<Vec<Loc>> {
        let l = self.folds();
        (0..n)
            .map(|i| {
                let tile = self.layout.active[i % self.k()];
                self.alloc(tile, l).map(|addr| Loc { tile, addr })
            })
            .collect()
    }

    pub fn push(&mut self, kind: OpKind, lanes: Vec<Vec<Micro>>) {
        self.ops.push(PrimitiveOp::new(kind, lanes));
    }

    pub fn push1(&mut self, kind: OpKind, path: Vec<Micro>) {
        self.ops.push(PrimitiveOp::single(kind, path));
    }

    /// Passes over the folds when only `bnd_rf_regs` fold accumulators fit.
    pub fn fold_passes(&self) -> Vec<std::ops::Range<usize>> {
        let (l, b) = (self.folds(), self.cfg.bnd_rf_regs);
        (0..l.div_ceil(b)).map(|p| p * b..l.min((p + 1) * b)).collect()
    }

    /// Copies fold `k` of the vector at `src` into `QRY[k]` of every active tile.
    pub fn load_query_fold(&mut self, src: Loc, k: usize) {
        let lanes = self
            .layout
            .active
            .iter()
            .map(|&tile| vec![Micro::LoadQry { tile, src: src.tile, addr: src.addr + k, fold: k }])
            .collect();
        self.push(OpKind::LoadQuery, lanes);
    }

    pub fn load_query(&mut self, src: Loc) {
        for k in 0..self.folds() {
            self.load_query_fold(src, k);
        }
    }

    pub fn argmax_reset(&mut self) {
        let lanes = self.layout.active.iter().map(|&tile| vec![Micro::ArgmaxReset { tile }]).collect();
        self.push(OpKind::Argmax, lanes);
    }

    pub fn argmax_result(&mut self, slot: usize) {
        let tiles = self.layout.active.clone();
        self.push1(OpKind::Argmax, vec![Micro::ArgmaxResult { tile: self.lead(), tiles, slot }]);
    }

    /// Folded distance of each lane's candidate against QRY into `DSUM[d]`
    /// of the candidate's tile. Lanes must sit on distinct tiles.
    pub fn distance_round(&mut self, cands: &[Src], d: usize, rf: usize) {
        for k in 0..self.folds() {
            let lanes = cands
                .iter()
                .map(|src| {
                    let tile = src.tile();
                    let mut path = FoldCursor { src: *src, tile, reg: rf }.fetch(k);
                    path.push(Micro::Popcnt { tile, fold: k });
                    path.push(if k == 0 { Micro::DsumSet { tile, reg: d } } else { Micro::DsumAcc { tile, reg: d } });
                    path
                })
                .collect();
            self.push(OpKind::Popcnt, lanes);
        }
    }

    fn argmax_round(&mut self, cands: &[(usize, Src)], d: usize) {
        let lanes = cands.iter().map(|&(index, src)| vec![Micro::Argmax { tile: src.tile(), reg: d, index }]).collect();
        self.push(OpKind::Argmax, lanes);
    }

    /// Candidates grouped into SIMD rounds: round `r` holds candidates
    /// `rK .. rK + K`, one per tile.
    pub fn rounds(&self, n: usize) -> Vec<std::ops::Range<usize>> {
        let k = self.k();
        (0..n.div_ceil(k)).map(|r| r * k..n.min((r + 1) * k)).collect()
    }

    /// Nearest neighbour of the query already in QRY among `cands`; the
    /// winning global index lands in result `slot`. The argmax of a round
    /// is issued after the next round's distance ops when a second DSUM
    /// register is available.
    pub fn search_loaded(&mut self, cands: &[Src], slot: usize) {
        self.argmax_reset();
        let dregs = self.cfg.dsum_regs;
        let mut pending: Option<(Vec<(usize, Src)>, usize)> = None;
        for (r, range) in self.rounds(cands.len()).into_iter().enumerate() {
            let d = r % dregs;
            let round: Vec<(usize, Src)> = range.map(|i| (i, cands[i])).collect();
            if dregs == 1 {
                if let Some((p, pd)) = pending.take() {
                    self.argmax_round(&p, pd);
                }
            }
            let srcs: Vec<Src> = round.iter().map(|&(_, s)| s).collect();
            self.distance_round(&srcs, d, 0);
            if let Some((p, pd)) = pending.take() {
                self.argmax_round(&p, pd);
            }
            pending = Some((round, d));
        }
        if let Some((p, pd)) = pending {
            self.argmax_round(&p, pd);
        }
        self.argmax_result(slot);
    }

    pub fn nn_search(&mut self, query: Loc, cands: &[Src], slot: usize) {
        self.load_query(query);
        self.search_loaded(cands, slot);
    }

    /// `sign(sum_i w_i * item_i)` into `dest`, accumulating on the lead tile
    /// in item order. With `weighted`, `w_i` comes from the distance of
    /// item `i` to the query in QRY; otherwise every weight is 1.
    pub fn project(&mut self, items: &[Loc], weighted: bool, dest: Loc) {
        let lead = self.lead();
        let dregs = self.cfg.dsum_regs;
        let preg = usize::from(self.cfg.ca90_rf_regs >= 2);
        let n = items.len();
        let rounds = self.rounds(n);
        let b = self.cfg.bnd_rf_regs;
        for pass in self.fold_passes() {
            let emit_items = |em: &mut Self, range: std::ops::Range<usize>, d: usize| {
                for i in range {
                    let tile = items[i].tile;
                    let cur = FoldCursor { src: Src::Seed(items[i]), tile, reg: preg };
                    for k in 0..pass.start {
                        em.push1(OpKind::GenFold, cur.fetch(k));
                    }
                    for k in pass.clone() {
                        let mut path = cur.fetch(k);
                        path.push(if weighted {
                            Micro::ScaleDsum { tile: lead, src: tile, reg: d }
                        } else {
                            Micro::Cvt { tile: lead }
                        });
                        let reg = k % b;
                        path.push(if i == 0 { Micro::AccSet { tile: lead, reg } } else { Micro::AccAdd { tile: lead, reg } });
                        if i + 1 == n {
                            path.push(Micro::Sign { tile: lead });
                            path.push(Micro::Store { tile: dest.tile, addr: dest.addr + k });
                        }
                        em.push1(OpKind::BundleAcc, path);
                    }
                }
            };
            if !weighted {
                emit_items(self, 0..n, 0);
                continue;
            }
            let mut pending: Option<(std::ops::Range<usize>, usize)> = None;
            for (r, range) in rounds.iter().enumerate() {
                let d = r % dregs;
                if dregs == 1 {
                    if let Some((p, pd)) = pending.take() {
                        emit_items(self, p, pd);
                    }
                }
                let srcs: Vec<Src> = range.clone().map(|i| Src::Seed(items[i])).collect();
                self.distance_round(&srcs, d, 0);
                if let Some((p, pd)) = pending.take() {
                    emit_items(self, p, pd);
                }
                pending = Some((range.clone(), d));
            }
            if let Some((p, pd)) = pending {
                emit_items(self, p, pd);
            }
        }
    }
}
