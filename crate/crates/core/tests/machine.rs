mod common;

use vsa_forge::isa::{self, ControlMode, InstructionWord, Micro, OpKind, PrimitiveOp, Program};
use vsa_forge::sim::{AccConfig, Dataset, Machine, Outputs};
use vsa_forge::workloads::{ReactSizes, Sizes, Workload};

fn small_react() -> Workload {
    Workload::with_sizes(Sizes::React(ReactSizes { samples: 30, recalls: 8, ..Default::default() }), 11, 2048, 512).unwrap()
}

#[test]
fn trace_rows_sum_to_the_reported_energy() {
    let w = small_react();
    let cfg = AccConfig::acc4();
    let mut m = w.machine(&cfg, ControlMode::Mopc).unwrap();
    let mut csv = Vec::new();
    let report = m.run_traced(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cycle,tile,stage,opcode,energy_delta"));
    let mut sum = 0.0;
    let mut leak_rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5, "{line}");
        sum += cols[4].parse::<f64>().unwrap();
        leak_rows += usize::from(cols[3] == "LEAK");
    }
    assert_eq!(leak_rows, report.total_cycles * 4);
    assert!((sum - report.energy_total).abs() < 1e-6 * report.energy_total);
    assert!((report.energy_dynamic + report.energy_leakage - report.energy_total).abs() < 1e-9);
}

#[test]
fn leakage_scales_with_active_tiles() {
    let data = Dataset { dim: 2048, codebooks: vec![], vectors: vec![] };
    let idle = |cfg: &AccConfig| {
        let p = Program::from_words(ControlMode::Sopc, vec![InstructionWord::NOP; 100]);
        Machine::load(cfg, p, &data, Outputs::default()).unwrap().run().unwrap()
    };
    let (a2, a8) = (idle(&AccConfig::acc2()), idle(&AccConfig::acc8()));
    assert_eq!(a2.energy_dynamic, 0.0);
    assert_eq!(a8.energy_leakage / a2.energy_leakage, 4.0);
    let mut masked = AccConfig::acc8();
    masked.active_tile_mask = Some(0b11);
    assert_eq!(idle(&masked).energy_leakage, a2.energy_leakage);
}

#[test]
fn both_schedules_compute_the_same_thing() {
    let w = small_react();
    for cfg in [AccConfig::acc2(), AccConfig::acc8()] {
        let s = w.run(&cfg, ControlMode::Sopc).unwrap();
        let m = w.run(&cfg, ControlMode::Mopc).unwrap();
        assert_eq!(s.report.results, m.report.results);
        assert_eq!(s.report.results_digest, m.report.results_digest);
        assert!(m.report.total_cycles < s.report.total_cycles);
        assert_eq!(s.report.stage_activations, m.report.stage_activations);
        assert!((s.report.energy_dynamic - m.report.energy_dynamic).abs() < 1e-6);
    }
}

#[test]
fn sopc_keeps_one_stage_busy() {
    let full = |t: usize| {
        PrimitiveOp::single(
            OpKind::Popcnt,
            vec![
                Micro::Load { tile: t, addr: 0 },
                Micro::RfWrite { tile: t, reg: 0 },
                Micro::XorBuf { tile: t },
                Micro::Cvt { tile: t },
                Micro::AccRead { tile: t, reg: 0 },
                Micro::Sign { tile: t },
                Micro::Store { tile: t, addr: 1 + t },
            ],
        )
    };
    let cfg = AccConfig::acc2();
    let data = Dataset {
        dim: 2048,
        codebooks: vec![vsa_forge::codebook::Codebook::random("c", 2, 2048, 512, 1).unwrap()],
        vectors: vec![],
    };
    let ops: Vec<PrimitiveOp> = (0..20).map(|i| full(i % 2)).collect();
    for (mode, p) in [(ControlMode::Sopc, isa::schedule_sopc(ops.clone()).unwrap()), (ControlMode::Mopc, isa::schedule_mopc(ops).unwrap())] {
        let r = Machine::load(&cfg, p, &data, Outputs::default()).unwrap().run().unwrap();
        for (stage, u) in &r.utilization {
            if mode == ControlMode::Sopc {
                assert!(*u <= 1.0 / 7.0 + 1e-9, "{stage} {u}");
            } else {
                assert!(*u > 1.0 / 7.0, "{stage} {u}");
            }
        }
    }
}
