//! Random valid instruction words and primitive-op streams.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use vsa_forge::isa::{InstructionWord, Limits, Micro, OpKind, PrimitiveOp, Stage, NUM_STAGES};

pub fn random_word(r: &mut impl Rng) -> InstructionWord {
    let mut types = [0u8; NUM_STAGES];
    for (t, s) in types.iter_mut().zip(Stage::ALL) {
        *t = r.gen_range(0..s.mnemonics().len()) as u8;
    }
    InstructionWord::new(types, r.gen()).expect("opcodes drawn from the tables")
}

/// One micro-op of `stage` for a lane on `tile`. Writes stay on the lane's
/// tile; reads may reach any tile.
fn random_micro(r: &mut impl Rng, stage: Stage, tile: usize, lim: &Limits, shared: &Shared, single: bool) -> Micro {
    let addr = |r: &mut _| rand::Rng::gen_range(r, 0..lim.mem_folds);
    match stage {
        Stage::Mem => match shared.pick[0] % 3 {
            0 => Micro::Load { tile: r.gen_range(0..lim.tiles), addr: addr(r) },
            1 => Micro::LoadRot { tile: r.gen_range(0..lim.tiles), base: 0, folds: 4, fold: shared.pick[1] % 4, shift: shared.param },
            _ => Micro::LoadQry { tile, src: r.gen_range(0..lim.tiles), addr: addr(r), fold: shared.pick[1] % 4 },
        },
        Stage::Gen => {
            let reg = r.gen_range(0..lim.rf_regs);
            match shared.pick[2] % 3 {
                0 => Micro::Gen { tile, reg },
                1 => Micro::RfWrite { tile, reg },
                _ => Micro::RfRead { tile, reg },
            }
        }
        Stage::Bind => match shared.pick[3] % 3 {
            0 => Micro::BufSet { tile },
            1 => Micro::BufXor { tile },
            _ => Micro::XorBuf { tile },
        },
        Stage::Mult => match shared.pick[4] % 3 {
            0 => Micro::Cvt { tile },
            1 => Micro::ScaleImm { tile, weight: shared.param as i16 },
            _ => Micro::ScaleDsum { tile, src: r.gen_range(0..lim.tiles), reg: r.gen_range(0..lim.dsum_regs) },
        },
        Stage::Bnd => {
            let reg = r.gen_range(0..lim.bnd_regs);
            match shared.pick[5] % 3 {
                0 => Micro::AccSet { tile, reg },
                1 => Micro::AccAdd { tile, reg },
                _ => Micro::AccRead { tile, reg },
            }
        }
        Stage::SgnPop => match shared.pick[6] % 2 {
            0 => Micro::Sign { tile },
            _ => Micro::Popcnt { tile, fold: shared.pick[1] % 4 },
        },
        Stage::Dc => {
            let reg = r.gen_range(0..lim.dsum_regs);
            match shared.pick[7] % if single { 6 } else { 5 } {
                0 => Micro::DsumSet { tile, reg },
                1 => Micro::DsumAcc { tile, reg },
                2 => Micro::Argmax { tile, reg, index: r.gen_range(0..64) },
                3 => Micro::ArgmaxReset { tile },
                4 => Micro::Store { tile, addr: addr(r) },
                _ => Micro::ArgmaxResult { tile, tiles: (0..lim.tiles).collect(), slot: r.gen_range(0..8) },
            }
        }
    }
}

/// Choices every lane of an op must agree on.
struct Shared {
    pick: [usize; 8],
    param: u16,
}

/// A random op: a strictly increasing stage path and 1..=tiles lanes on
/// distinct tiles that agree on opcodes and PARAM.
pub fn random_op(r: &mut impl Rng, lim: &Limits) -> PrimitiveOp {
    let mut stages: Vec<Stage> = Stage::ALL.iter().copied().filter(|_| r.gen_bool(0.45)).collect();
    if stages.is_empty() {
        stages.push(*Stage::ALL.choose(r).unwrap());
    }
    let mut pick = [0usize; 8];
    for p in &mut pick {
        *p = r.gen();
    }
    let shared = Shared { pick, param: r.gen_range(0..64) };
    let mut tiles: Vec<usize> = (0..lim.tiles).collect();
    tiles.shuffle(r);
    tiles.truncate(r.gen_range(1..=lim.tiles));
    let single = tiles.len() == 1;
    let lanes = tiles
        .iter()
        .map(|&t| stages.iter().map(|&s| random_micro(r, s, t, lim, &shared, single)).collect())
        .collect();
    PrimitiveOp::new(OpKind::Bind, lanes)
}

pub fn random_ops(r: &mut impl Rng, n: usize, lim: &Limits) -> Vec<PrimitiveOp> {
    (0..n).map(|_| random_op(r, lim)).collect()
}

pub fn limits() -> Limits {
    Limits { tiles: 4, rf_regs: 4, bnd_regs: 4, dsum_regs: 4, mem_folds: 16 }
}
