//! Benchmark workloads: synthetic data, expected results from the kernel
//! oracle, and a compiler from each workload to a primitive-op stream for
//! a given accelerator configuration.
//!
//! * `fact`: resonator factorization of bound composites.
//! * `mult`: role-value record encoding, class prototypes, classification.
//! * `tree`: trees as bundles of permuted paths; path-to-tree lookup.
//! * `react`: a state-action associative memory with noisy-key recall.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{Codebook, CodebookError};
use crate::codegen::{Emitter, FoldCursor, Src};
use crate::hdc::{self, HdcError, Hypervector, Precision};
use crate::isa::{self, ControlMode, IsaError, Micro, OpKind, PrimitiveOp, Program};
use crate::kernels::{self, KernelError, OperandArray};
use crate::rng;
use crate::sim::{AccConfig, ArchResults, Dataset, Layout, Loc, Machine, Outputs, RunReport, SimError};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error("invalid workload size: {0}")]
    Size(String),
    #[error("unknown workload `{0}` (expected mult, tree, fact, or react)")]
    Unknown(String),
    #[error("data has fold width {data}, configuration `{config}` has {cfg}")]
    FoldWidth { data: usize, cfg: usize, config: String },
}

pub type Result<T> = std::result::Result<T, WorkloadError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Mult,
    Tree,
    Fact,
    React,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 4] = [WorkloadKind::Mult, WorkloadKind::Tree, WorkloadKind::Fact, WorkloadKind::React];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Mult => "mult",
            WorkloadKind::Tree => "tree",
            WorkloadKind::Fact => "fact",
            WorkloadKind::React => "react",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = WorkloadError;
    fn from_str(s: &str) -> Result<Self> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| WorkloadError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactSizes {
    pub factors: usize,
    pub items: usize,
    pub composites: usize,
    pub max_iters: usize,
}

impl Default for FactSizes {
    fn default() -> Self {
        FactSizes { factors: 3, items: 13, composites: 120, max_iters: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultSizes {
    /// Codebook size; the first `roles` items are roles, the rest values.
    pub items: usize,
    pub roles: usize,
    pub classes: usize,
    pub samples: usize,
    pub queries: usize,
    /// Probability that a sample replaces a template value with a random one.
    pub noise: f64,
}

impl Default for MultSizes {
    fn default() -> Self {
        MultSizes { items: 120, roles: 4, classes: 16, samples: 300, queries: 100, noise: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeSizes {
    pub items: usize,
    pub trees: usize,
    pub queries: usize,
    /// Root-to-leaf paths per tree.
    pub paths: usize,
    /// Nodes per path.
    pub depth: usize,
}

impl Default for TreeSizes {
    fn default() -> Self {
        TreeSizes { items: 9, trees: 70, queries: 400, paths: 3, depth: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactSizes {
    pub states: usize,
    pub actions: usize,
    pub samples: usize,
    pub recalls: usize,
    /// Probability that a demonstration shows a random action.
    pub demo_noise: f64,
    /// Bit-flip probability of recall keys.
    pub key_noise: f64,
}

impl Default for ReactSizes {
    fn default() -> Self {
        ReactSizes { states: 40, actions: 15, samples: 500, recalls: 160, demo_noise: 0.1, key_noise: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "workload", rename_all = "lowercase")]
pub enum Sizes {
    Mult(MultSizes),
    Tree(TreeSizes),
    Fact(FactSizes),
    React(ReactSizes),
}

impl Sizes {
    pub fn default_for(kind: WorkloadKind) -> Sizes {
        match kind {
            WorkloadKind::Mult => Sizes::Mult(MultSizes::default()),
            WorkloadKind::Tree => Sizes::Tree(TreeSizes::default()),
            WorkloadKind::Fact => Sizes::Fact(FactSizes::default()),
            WorkloadKind::React => Sizes::React(ReactSizes::default()),
        }
    }

    pub fn kind(&self) -> WorkloadKind {
        match self {
            Sizes::Mult(_) => WorkloadKind::Mult,
            Sizes::Tree(_) => WorkloadKind::Tree,
            Sizes::Fact(_) => WorkloadKind::Fact,
            Sizes::React(_) => WorkloadKind::React,
        }
    }
}

/// Kind-specific data the compiler needs beyond the dataset.
#[derive(Debug, Clone, PartialEq)]
enum Plan {
    Fact {
        /// Resonator iterations the oracle ran for each composite.
        iterations: Vec<usize>,
    },
    Mult {
        /// Per sample (training, then query): the value item of each role.
        values: Vec<Vec<usize>>,
        labels: Vec<usize>,
    },
    Tree {
        /// Per tree: paths of item indices.
        trees: Vec<Vec<Vec<usize>>>,
        /// Per query: its path.
        queries: Vec<Vec<usize>>,
    },
    React {
        /// Demonstrations as (state item, action item).
        samples: Vec<(usize, usize)>,
    },
}

/// A generated workload instance. Programs are compiled per configuration.
#[derive(Debug, Clone)]
pub struct Workload {
    pub sizes: Sizes,
    pub seed: u64,
    pub data: Dataset,
    /// What a correct machine must produce, from the kernel oracle.
    pub expected: ArchResults,
    /// Ground truth of the synthetic task (factor indices, class labels,
    /// source trees, correct actions), one per result slot.
    pub truth: Vec<usize>,
    plan: Plan,
}

/// A compiled program plus what to read back after it ends.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub ops: Vec<PrimitiveOp>,
    pub outputs: Outputs,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    /// The machine's results equal the oracle's bit for bit.
    pub oracle_match: bool,
}

fn flip_bits(v: &Hypervector, p: f64, r: &mut rng::Rng) -> Hypervector {
    let mut out = v.clone();
    if p > 0.0 {
        for i in 0..v.dim() {
            if r.gen_bool(p) {
                out.set_bit(i, !v.bit(i));
            }
        }
    }
    out
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(WorkloadError::Size(msg()))
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    check((0.0..=1.0).contains(&p), || format!("{what} must be a probability, got {p}"))
}

impl Workload {
    /// Default-sized instance of `kind`.
    pub fn generate(kind: WorkloadKind, seed: u64, dim: usize, fold_width: usize) -> Result<Self> {
        Workload::with_sizes(Sizes::default_for(kind), seed, dim, fold_width)
    }

    pub fn with_sizes(sizes: Sizes, seed: u64, dim: usize, fold_width: usize) -> Result<Self> {
        let prec = Precision::ACC;
        match sizes {
            Sizes::Fact(s) => gen_fact(s, seed, dim, fold_width, prec),
            Sizes::Mult(s) => gen_mult(s, seed, dim, fold_width, prec),
            Sizes::Tree(s) => gen_tree(s, seed, dim, fold_width, prec),
            Sizes::React(s) => gen_react(s, seed, dim, fold_width, prec),
        }
    }

    pub fn kind(&self) -> WorkloadKind {
        self.sizes.kind()
    }

    /// Primitive-op stream for `cfg`. Data placement follows [`Layout`].
    pub fn compile(&self, cfg: &AccConfig) -> Result<Compiled> {
        if cfg.fold_width != self.data.codebooks[0].fold_width() {
            return Err(WorkloadError::FoldWidth {
                data: self.data.codebooks[0].fold_width(),
                cfg: cfg.fold_width,
                config: cfg.name.clone(),
            });
        }
        let mut em = Emitter::new(cfg, Layout::for_dataset(cfg, &self.data)?);
        let outputs = match (&self.plan, &self.sizes) {
            (Plan::Fact { iterations }, Sizes::Fact(_)) => compile_fact(&mut em, iterations)?,
            (Plan::Mult { values, labels }, Sizes::Mult(s)) => compile_mult(&mut em, s, values, labels)?,
            (Plan::Tree { trees, queries }, Sizes::Tree(_)) => compile_tree(&mut em, trees, queries)?,
            (Plan::React { samples }, Sizes::React(s)) => compile_react(&mut em, s, samples)?,
            _ => unreachable!("plan matches sizes by construction"),
        };
        Ok(Compiled { ops: em.ops, outputs })
    }

    pub fn program(&self, cfg: &AccConfig, mode: ControlMode) -> Result<(Program, Outputs)> {
        let c = self.compile(cfg)?;
        let program = match mode {
            ControlMode::Sopc => isa::schedule_sopc(c.ops)?,
            ControlMode::Mopc => isa::schedule_mopc(c.ops)?,
        };
        Ok((program, c.outputs))
    }

    pub fn machine(&self, cfg: &AccConfig, mode: ControlMode) -> Result<Machine> {
        let (program, outputs) = self.program(cfg, mode)?;
        Ok(Machine::load(cfg, program, &self.data, outputs)?)
    }

    pub fn run(&self, cfg: &AccConfig, mode: ControlMode) -> Result<Outcome> {
        let report = self.machine(cfg, mode)?.run()?;
        let oracle_match = report.results == self.expected;
        Ok(Outcome { report, oracle_match })
    }

    /// Fraction of result slots whose expected index equals the task's
    /// ground truth (the oracle's own accuracy).
    pub fn oracle_accuracy(&self) -> f64 {
        let n = self.truth.len().max(1);
        let hits = self.expected.indices.iter().zip(&self.truth).filter(|(e, t)| **e == Some(**t)).count();
        hits as f64 / n as f64
    }
}

fn expected_search(items: &[Hypervector], q: &Hypervector, prec: Precision, out: &mut ArchResults) -> Result<()> {
    let (i, s) = kernels::nn_search(items, q, prec)?;
    out.indices.push(Some(i));
    out.scores.push(Some(s.value));
    Ok(())
}

// ---------------------------------------------------------------- fact

fn gen_fact(s: FactSizes, seed: u64, dim: usize, w: usize, prec: Precision) -> Result<Workload> {
    check(s.factors >= 2, || "fact needs at least 2 factors".into())?;
    check(s.items >= 1 && s.composites >= 1 && s.max_iters >= 1, || "fact sizes must be positive".into())?;
    let codebooks = (0..s.factors)
        .map(|f| Codebook::random(format!("factor{f}"), s.items, dim, w, rng::derive_seed(seed, 100 + f as u64)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let items: Vec<Vec<Hypervector>> = codebooks.iter().map(Codebook::items).collect();
    let mut r = rng::stream(rng::derive_seed(seed, 1), 0);
    let mut composites = Vec::with_capacity(s.composites);
    let mut truth = Vec::new();
    for _ in 0..s.composites {
        let idx: Vec<usize> = (0..s.factors).map(|_| r.gen_range(0..s.items)).collect();
        let mut c = items[0][idx[0]].clone();
        for f in 1..s.factors {
            c = hdc::bind(&c, &items[f][idx[f]])?;
        }
        composites.push(c);
        truth.extend(idx);
    }
    let mut expected = ArchResults::default();
    let mut iterations = Vec::new();
    let mut last = Vec::new();
    for c in &composites {
        let res = kernels::resonator_factorize(c, &codebooks, s.max_iters, prec)?;
        iterations.push(res.iterations);
        for (set, e) in items.iter().zip(&res.estimates) {
            expected_search(set, e, prec, &mut expected)?;
        }
        last = res.estimates;
    }
    expected.vectors = last;
    Ok(Workload {
        sizes: Sizes::Fact(s),
        seed,
        data: Dataset { dim, codebooks, vectors: composites },
        expected,
        truth,
        plan: Plan::Fact { iterations },
    })
}

/// XOR of the listed vectors, fold by fold on the lead tile, into `dest`;
/// the query broadcast follows once every fold is stored.
fn emit_xor(em: &mut Emitter, srcs: &[Loc], dest: Loc, broadcast: bool) {
    let lead = em.lead();
    for k in 0..em.folds() {
        for (j, s) in srcs.iter().enumerate() {
            let mut path = vec![
                Micro::Load { tile: s.tile, addr: s.addr + k },
                if j == 0 { Micro::BufSet { tile: lead } } else { Micro::BufXor { tile: lead } },
            ];
            if j + 1 == srcs.len() {
                path.push(Micro::Store { tile: dest.tile, addr: dest.addr + k });
            }
            em.push1(OpKind::Bind, path);
        }
    }
    if broadcast {
        em.load_query(dest);
    }
}

/// Per composite: bundle-of-codebook initial estimates (computed once),
/// then exactly the oracle's number of resonator iterations, then a
/// nearest-neighbour decode of every estimate.
///
/// The unbinding query is kept as a running product: after factor `f` is
/// projected, `q_next = q_f XOR e_f(new) XOR e_next`, three XORs per fold
/// whatever the factor count.
fn compile_fact(em: &mut Emitter, iterations: &[usize]) -> Result<Outputs> {
    let lead = em.lead();
    let l = em.folds();
    let nf = em.layout.items.len();
    let composites = em.layout.vectors.clone();
    let items = em.layout.items.clone();
    let scratch = |em: &mut Emitter| em.alloc(lead, l).map(|addr| Loc { tile: lead, addr });
    let init = (0..nf).map(|_| scratch(em)).collect::<std::result::Result<Vec<_>, _>>()?;
    let est = (0..nf).map(|_| scratch(em)).collect::<std::result::Result<Vec<_>, _>>()?;
    let rest = scratch(em)?;
    let qbuf = [scratch(em)?, scratch(em)?];

    for f in 0..nf {
        em.project(&items[f], false, init[f]);
    }
    // Product of every initial estimate but the first factor's.
    emit_xor(em, &init[1..], rest, false);
    let mut qsel = 0;
    for (c, (&comp, &iters)) in composites.iter().zip(iterations).enumerate() {
        let mut cur = init.clone();
        emit_xor(em, &[comp, rest], qbuf[qsel], true);
        for it in 0..iters {
            for f in 0..nf {
                em.project(&items[f], true, est[f]);
                cur[f] = est[f];
                if it + 1 < iters || f + 1 < nf {
                    let next = (f + 1) % nf;
                    emit_xor(em, &[qbuf[qsel], cur[f], cur[next]], qbuf[qsel ^ 1], true);
                    qsel ^= 1;
                }
            }
        }
        for f in 0..nf {
            let cands: Vec<Src> = items[f].iter().map(|&l| Src::Seed(l)).collect();
            em.nn_search(cur[f], &cands, c * nf + f);
        }
    }
    Ok(Outputs { slots: composites.len() * nf, vectors: est })
}

// ---------------------------------------------------------------- mult

fn gen_mult(s: MultSizes, seed: u64, dim: usize, w: usize, prec: Precision) -> Result<Workload> {
    check(s.roles >= 1 && s.items > s.roles, || "mult needs roles and at least one value".into())?;
    check(s.classes >= 1 && s.samples >= s.classes && s.queries >= 1, || {
        "mult needs every class to have a training sample".into()
    })?;
    check_prob(s.noise, "noise")?;
    let cb = Codebook::random("items", s.items, dim, w, rng::derive_seed(seed, 100))?;
    let items = cb.items();
    let mut r = rng::stream(rng::derive_seed(seed, 2), 0);
    let nvals = s.items - s.roles;
    let templates: Vec<Vec<usize>> =
        (0..s.classes).map(|_| (0..s.roles).map(|_| s.roles + r.gen_range(0..nvals)).collect()).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for i in 0..s.samples + s.queries {
        let label = if i < s.samples { i % s.classes } else { r.gen_range(0..s.classes) };
        let v: Vec<usize> = templates[label]
            .iter()
            .map(|&t| if r.gen_bool(s.noise) { s.roles + r.gen_range(0..nvals) } else { t })
            .collect();
        values.push(v);
        labels.push(label);
    }
    let records = values
        .iter()
        .map(|v| {
            let groups = v.iter().enumerate().map(|(j, &x)| vec![items[j].clone(), items[x].clone()]).collect();
            kernels::encode(&OperandArray::new(groups), 1, 1, prec)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let prototypes = (0..s.classes)
        .map(|c| {
            let members: Vec<Hypervector> =
                (0..s.samples).filter(|&i| labels[i] == c).map(|i| records[i].clone()).collect();
            hdc::bundle(&members, prec.bnd_bits)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut expected = ArchResults::default();
    for q in &records[s.samples..] {
        expected_search(&prototypes, q, prec, &mut expected)?;
    }
    expected.vectors = prototypes;
    Ok(Workload {
        sizes: Sizes::Mult(s),
        seed,
        data: Dataset { dim, codebooks: vec![cb], vectors: Vec::new() },
        expected,
        truth: labels[s.samples..].to_vec(),
        plan: Plan::Mult { values, labels },
    })
}

/// Encodes one role-value record on the lead tile's vector pipeline:
/// `sign(sum_j role_j XOR value_j)` fold by fold, in BND-register passes.
/// Role folds stream through CA-90 register 0 of the role's tile, value
/// folds through register 1 (or 0 on single-register tiles) of theirs.
fn emit_record(em: &mut Emitter, pairs: &[(Loc, Loc)], dest: Loc) {
    let lead = em.lead();
    let b = em.cfg.bnd_rf_regs;
    let vreg = usize::from(em.cfg.ca90_rf_regs >= 2);
    let n = pairs.len();
    for pass in em.fold_passes() {
        for (j, &(role, value)) in pairs.iter().enumerate() {
            let rc = FoldCursor { src: Src::Seed(role), tile: role.tile, reg: 0 };
            let vc = FoldCursor { src: Src::Seed(value), tile: value.tile, reg: vreg };
            let shared = vreg == 0 && role.tile == value.tile;
            for k in pass.clone() {
                // With one register shared by both chains, reload from the seed.
                let fetch = |c: &FoldCursor, em: &mut Emitter| -> Vec<Micro> {
                    if shared && k > 0 {
                        for kk in 0..k {
                            em.push1(OpKind::GenFold, c.fetch(kk));
                        }
                    }
                    c.fetch(k)
                };
                if k == pass.start && !shared {
                    for kk in 0..pass.start {
                        em.push1(OpKind::GenFold, rc.fetch(kk));
                        em.push1(OpKind::GenFold, vc.fetch(kk));
                    }
                }
                let mut p1 = fetch(&rc, em);
                p1.push(Micro::BufSet { tile: lead });
                em.push1(OpKind::Bind, p1);
                let mut p2 = fetch(&vc, em);
                p2.push(Micro::XorBuf { tile: lead });
                p2.push(Micro::Cvt { tile: lead });
                let reg = k % b;
                p2.push(if j == 0 { Micro::AccSet { tile: lead, reg } } else { Micro::AccAdd { tile: lead, reg } });
                if j + 1 == n {
                    p2.push(Micro::Sign { tile: lead });
                    p2.push(Micro::Store { tile: dest.tile, addr: dest.addr + k });
                }
                em.push1(OpKind::BundleAcc, p2);
            }
        }
    }
}

fn compile_mult(em: &mut Emitter, s: &MultSizes, values: &[Vec<usize>], labels: &[usize]) -> Result<Outputs> {
    let lead = em.lead();
    let b = em.cfg.bnd_rf_regs;
    let items = em.layout.items[0].clone();
    let records = em.alloc_vectors(s.samples)?;
    let protos = em.alloc_vectors(s.classes)?;
    let qslots = [Loc { tile: lead, addr: em.alloc(lead, em.folds())? }, Loc { tile: lead, addr: em.alloc(lead, em.folds())? }];
    let pairs = |v: &[usize]| -> Vec<(Loc, Loc)> { v.iter().enumerate().map(|(j, &x)| (items[j], items[x])).collect() };

    for (i, rec) in records.iter().enumerate() {
        emit_record(em, &pairs(&values[i]), *rec);
    }
    for (c, proto) in protos.iter().enumerate() {
        let members: Vec<usize> = (0..s.samples).filter(|&i| labels[i] == c).collect();
        for pass in em.fold_passes() {
            for (m, &i) in members.iter().enumerate() {
                for k in pass.clone() {
                    let reg = k % b;
                    let mut path = vec![
                        Micro::Load { tile: records[i].tile, addr: records[i].addr + k },
                        Micro::Cvt { tile: lead },
                        if m == 0 { Micro::AccSet { tile: lead, reg } } else { Micro::AccAdd { tile: lead, reg } },
                    ];
                    if m + 1 == members.len() {
                        path.push(Micro::Sign { tile: lead });
                        path.push(Micro::Store { tile: proto.tile, addr: proto.addr + k });
                    }
                    em.push1(OpKind::BundleAcc, path);
                }
            }
        }
    }
    let cands: Vec<Src> = protos.iter().map(|&p| Src::Vector(p)).collect();
    for q in 0..s.queries {
        let slot = qslots[q % 2];
        emit_record(em, &pairs(&values[s.samples + q]), slot);
        em.nn_search(slot, &cands, q);
    }
    Ok(Outputs { slots: s.queries, vectors: protos })
}

// ---------------------------------------------------------------- tree

fn encode_path(items: &[Hypervector], path: &[usize]) -> Result<Hypervector> {
    let group: Vec<Hypervector> = path.iter().map(|&i| items[i].clone()).collect();
    Ok(kernels::encode(&OperandArray::new(vec![group]), 0, 3, Precision::ACC)?)
}

fn gen_tree(s: TreeSizes, seed: u64, dim: usize, w: usize, prec: Precision) -> Result<Workload> {
    check(s.items >= 1 && s.trees >= 1 && s.queries >= 1, || "tree sizes must be positive".into())?;
    check(s.paths >= 1 && s.depth >= 1, || "trees need at least one path of one node".into())?;
    let cb = Codebook::random("nodes", s.items, dim, w, rng::derive_seed(seed, 100))?;
    let items = cb.items();
    let mut r = rng::stream(rng::derive_seed(seed, 3), 0);
    let trees: Vec<Vec<Vec<usize>>> = (0..s.trees)
        .map(|_| (0..s.paths).map(|_| (0..s.depth).map(|_| r.gen_range(0..s.items)).collect()).collect())
        .collect();
    let vectors = trees
        .iter()
        .map(|paths| {
            let groups = paths.iter().map(|p| p.iter().map(|&i| items[i].clone()).collect()).collect();
            kernels::encode(&OperandArray::new(groups), 1, 3, prec)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut queries = Vec::new();
    let mut truth = Vec::new();
    let mut expected = ArchResults::default();
    for _ in 0..s.queries {
        let t = r.gen_range(0..s.trees);
        let p = trees[t][r.gen_range(0..s.paths)].clone();
        expected_search(&vectors, &encode_path(&items, &p)?, prec, &mut expected)?;
        queries.push(p);
        truth.push(t);
    }
    expected.vectors = vectors;
    Ok(Workload {
        sizes: Sizes::Tree(s),
        seed,
        data: Dataset { dim, codebooks: vec![cb], vectors: Vec::new() },
        expected,
        truth,
        plan: Plan::Tree { trees, queries },
    })
}

/// Bind chain `x_0 XOR rho^1(x_1) XOR ...` of one fold, SIMD over lanes
/// (one path per lane, all of equal depth); `tail` extends the last op.
fn emit_path_fold(
    em: &mut Emitter,
    expanded: &[Loc],
    lanes: &[(usize, &[usize])],
    k: usize,
    tail: &dyn Fn(usize) -> Vec<Micro>,
) {
    let l = em.folds();
    let depth = lanes[0].1.len();
    for j in 0..depth {
        let ops = lanes
            .iter()
            .map(|&(tile, path)| {
                let src = expanded[path[j]];
                let mut p = vec![
                    Micro::LoadRot { tile: src.tile, base: src.addr, folds: l, fold: k, shift: j as u16 },
                    if j == 0 { Micro::BufSet { tile } } else { Micro::BufXor { tile } },
                ];
                if j + 1 == depth {
                    p.extend(tail(tile));
                }
                p
            })
            .collect();
        em.push(OpKind::Bind, ops);
    }
}

fn compile_tree(em: &mut Emitter, trees: &[Vec<Vec<usize>>], queries: &[Vec<usize>]) -> Result<Outputs> {
    let l = em.folds();
    let b = em.cfg.bnd_rf_regs;
    let k_tiles = em.k();
    let seeds = em.layout.items[0].clone();
    // Full vectors of every node, so permuted folds can be read directly.
    let mut expanded = Vec::new();
    for s in &seeds {
        expanded.push(Loc { tile: s.tile, addr: em.alloc(s.tile, l)? });
    }
    for range in em.rounds(seeds.len()) {
        for k in 0..l {
            let lanes = range
                .clone()
                .map(|i| {
                    let mut p = FoldCursor { src: Src::Seed(seeds[i]), tile: seeds[i].tile, reg: 0 }.fetch(k);
                    p.push(Micro::Store { tile: expanded[i].tile, addr: expanded[i].addr + k });
                    p
                })
                .collect();
            em.push(OpKind::GenFold, lanes);
        }
    }
    let tvecs = em.alloc_vectors(trees.len())?;
    for range in em.rounds(trees.len()) {
        for k in 0..l {
            let reg = k % b;
            let npaths = trees[range.start].len();
            for p in 0..npaths {
                let lanes: Vec<(usize, &[usize])> = range.clone().map(|t| (tvecs[t].tile, trees[t][p].as_slice())).collect();
                let dest: Vec<Loc> = range.clone().map(|t| tvecs[t]).collect();
                let tail = |tile: usize| {
                    let mut v = vec![
                        Micro::Cvt { tile },
                        if p == 0 { Micro::AccSet { tile, reg } } else { Micro::AccAdd { tile, reg } },
                    ];
                    if p + 1 == npaths {
                        let d = dest.iter().find(|d| d.tile == tile).expect("lane tile");
                        v.push(Micro::Sign { tile });
                        v.push(Micro::Store { tile, addr: d.addr + k });
                    }
                    v
                };
                emit_path_fold(em, &expanded, &lanes, k, &tail);
            }
        }
    }
    // Query paths are encoded a batch of K at a time into per-lane slots
    // (double buffered), then each is searched against every tree.
    let mut slots = [Vec::new(), Vec::new()];
    for set in &mut slots {
        for j in 0..k_tiles {
            let tile = em.layout.active[j];
            set.push(Loc { tile, addr: em.alloc(tile, l)? });
        }
    }
    let cands: Vec<Src> = tvecs.iter().map(|&t| Src::Vector(t)).collect();
    for (batch, range) in em.rounds(queries.len()).into_iter().enumerate() {
        let set = slots[batch % 2].clone();
        for k in 0..l {
            let lanes: Vec<(usize, &[usize])> =
                range.clone().enumerate().map(|(j, q)| (set[j].tile, queries[q].as_slice())).collect();
            let tail = |tile: usize| {
                let d = set.iter().find(|d| d.tile == tile).expect("lane tile");
                vec![Micro::Store { tile, addr: d.addr + k }]
            };
            emit_path_fold(em, &expanded, &lanes, k, &tail);
        }
        for (j, q) in range.enumerate() {
            em.nn_search(set[j], &cands, q);
        }
    }
    Ok(Outputs { slots: queries.len(), vectors: tvecs })
}

// ---------------------------------------------------------------- react

fn gen_react(s: ReactSizes, seed: u64, dim: usize, w: usize, prec: Precision) -> Result<Workload> {
    check(s.states >= 1 && s.actions >= 1 && s.samples >= 1, || "react sizes must be positive".into())?;
    check_prob(s.demo_noise, "demo_noise")?;
    check_prob(s.key_noise, "key_noise")?;
    let cb = Codebook::random("items", s.states + s.actions, dim, w, rng::derive_seed(seed, 100))?;
    let items = cb.items();
    let mut r = rng::stream(rng::derive_seed(seed, 4), 0);
    let policy: Vec<usize> = (0..s.states).map(|_| s.states + r.gen_range(0..s.actions)).collect();
    let samples: Vec<(usize, usize)> = (0..s.samples)
        .map(|_| {
            let st = r.gen_range(0..s.states);
            let a = if r.gen_bool(s.demo_noise) { s.states + r.gen_range(0..s.actions) } else { policy[st] };
            (st, a)
        })
        .collect();
    let groups = samples.iter().map(|&(st, a)| vec![items[st].clone(), items[a].clone()]).collect();
    let memory = kernels::encode(&OperandArray::new(groups), 1, 1, prec)?;
    let mut keys = Vec::new();
    let mut truth = Vec::new();
    let mut expected = ArchResults::default();
    for _ in 0..s.recalls {
        let st = r.gen_range(0..s.states);
        let key = flip_bits(&items[st], s.key_noise, &mut r);
        let u = hdc::unbind(&memory, &key)?;
        expected_search(&items, &u, prec, &mut expected)?;
        keys.push(key);
        truth.push(policy[st]);
    }
    expected.vectors = vec![memory];
    Ok(Workload {
        sizes: Sizes::React(s),
        seed,
        data: Dataset { dim, codebooks: vec![cb], vectors: keys },
        expected,
        truth,
        plan: Plan::React { samples },
    })
}

fn compile_react(em: &mut Emitter, s: &ReactSizes, samples: &[(usize, usize)]) -> Result<Outputs> {
    let lead = em.lead();
    let l = em.folds();
    let b = em.cfg.bnd_rf_regs;
    let items = em.layout.items[0].clone();
    let keys = em.layout.vectors.clone();
    let memory = Loc { tile: lead, addr: em.alloc(lead, l)? };
    let qslots = [Loc { tile: lead, addr: em.alloc(lead, l)? }, Loc { tile: lead, addr: em.alloc(lead, l)? }];
    let areg = usize::from(em.cfg.ca90_rf_regs >= 2);
    let n = samples.len();
    for pass in em.fold_passes() {
        for (i, &(st, a)) in samples.iter().enumerate() {
            let sc = FoldCursor { src: Src::Seed(items[st]), tile: items[st].tile, reg: 0 };
            let ac = FoldCursor { src: Src::Seed(items[a]), tile: items[a].tile, reg: areg };
            let shared = areg == 0 && sc.tile == ac.tile;
            if !shared {
                for kk in 0..pass.start {
                    em.push1(OpKind::GenFold, sc.fetch(kk));
                    em.push1(OpKind::GenFold, ac.fetch(kk));
                }
            }
            for k in pass.clone() {
                for (c, first) in [(&sc, true), (&ac, false)] {
                    if shared {
                        for kk in 0..k {
                            em.push1(OpKind::GenFold, c.fetch(kk));
                        }
                    }
                    let mut p = c.fetch(k);
                    if first {
                        p.push(Micro::BufSet { tile: lead });
                        em.push1(OpKind::Bind, p);
                    } else {
                        let reg = k % b;
                        p.push(Micro::XorBuf { tile: lead });
                        p.push(Micro::Cvt { tile: lead });
                        p.push(if i == 0 { Micro::AccSet { tile: lead, reg } } else { Micro::AccAdd { tile: lead, reg } });
                        if i + 1 == n {
                            p.push(Micro::Sign { tile: lead });
                            p.push(Micro::Store { tile: lead, addr: memory.addr + k });
                        }
                        em.push1(OpKind::BundleAcc, p);
                    }
                }
            }
        }
    }
    let cands: Vec<Src> = items.iter().map(|&l| Src::Seed(l)).collect();
    for (r, key) in keys.iter().enumerate().take(s.recalls) {
        let q = qslots[r % 2];
        for k in 0..l {
            em.push1(OpKind::Bind, vec![Micro::Load { tile: lead, addr: memory.addr + k }, Micro::BufSet { tile: lead }]);
            em.push1(
                OpKind::Bind,
                vec![Micro::Load { tile: key.tile, addr: key.addr + k }, Micro::BufXor { tile: lead }, Micro::Store { tile: lead, addr: q.addr + k }],
            );
            em.load_query_fold(q, k);
        }
        em.search_loaded(&cands, r);
    }
    Ok(Outputs { slots: s.recalls, vectors: vec![memory] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_all_modes(w: &Workload, cfg: &AccConfig) -> Vec<Outcome> {
        [ControlMode::Sopc, ControlMode::Mopc].into_iter().map(|m| w.run(cfg, m).unwrap()).collect()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in WorkloadKind::ALL {
            assert_eq!(k.to_string().parse::<WorkloadKind>().unwrap(), k);
        }
        assert_eq!("FACT".parse::<WorkloadKind>().unwrap(), WorkloadKind::Fact);
        assert!(matches!("nope".parse::<WorkloadKind>(), Err(WorkloadError::Unknown(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Workload::generate(WorkloadKind::React, 9, 2048, 512).unwrap();
        let b = Workload::generate(WorkloadKind::React, 9, 2048, 512).unwrap();
        let c = Workload::generate(WorkloadKind::React, 10, 2048, 512).unwrap();
        assert_eq!(a.expected, b.expected);
        assert_eq!(a.data, b.data);
        assert_ne!(a.expected.digest(), c.expected.digest());
    }

    #[test]
    fn small_instances_match_the_oracle_on_every_preset() {
        let sizes = [
            Sizes::Fact(FactSizes { composites: 3, ..Default::default() }),
            Sizes::Mult(MultSizes { items: 20, classes: 4, samples: 12, queries: 6, ..Default::default() }),
            Sizes::Tree(TreeSizes { trees: 7, queries: 9, ..Default::default() }),
            Sizes::React(ReactSizes { samples: 40, recalls: 10, ..Default::default() }),
        ];
        for s in sizes {
            let w = Workload::with_sizes(s, 3, 2048, 512).unwrap();
            for cfg in [AccConfig::acc2(), AccConfig::acc4(), AccConfig::acc8()] {
                let runs = run_all_modes(&w, &cfg);
                for o in &runs {
                    assert!(o.oracle_match, "{} on {} {}", w.kind(), cfg.name, o.report.control);
                }
                assert!(runs[1].report.total_cycles < runs[0].report.total_cycles);
            }
        }
    }

    #[test]
    fn masked_tiles_change_timing_not_results() {
        let w = Workload::with_sizes(Sizes::React(ReactSizes { samples: 20, recalls: 6, ..Default::default() }), 5, 2048, 512)
            .unwrap();
        let mut cfg = AccConfig::acc8();
        cfg.active_tile_mask = Some(0b1010_0110);
        let masked = w.run(&cfg, ControlMode::Mopc).unwrap();
        let full = w.run(&AccConfig::acc8(), ControlMode::Mopc).unwrap();
        assert!(masked.oracle_match && full.oracle_match);
        assert_eq!(masked.report.active_tiles, 4);
        assert!(masked.report.total_cycles > full.report.total_cycles);
    }

    #[test]
    fn single_node_tree_is_its_item() {
        let s = TreeSizes { items: 5, trees: 4, queries: 4, paths: 1, depth: 1 };
        let w = Workload::with_sizes(Sizes::Tree(s), 2, 2048, 512).unwrap();
        let items = w.data.codebooks[0].items();
        let Plan::Tree { trees, .. } = &w.plan else { unreachable!() };
        for (t, v) in trees.iter().zip(&w.expected.vectors) {
            assert_eq!(*v, items[t[0][0]]);
        }
        assert!(w.run(&AccConfig::acc4(), ControlMode::Mopc).unwrap().oracle_match);
    }

    #[test]
    fn exact_key_recall_returns_the_taught_action() {
        let s = ReactSizes { states: 6, actions: 5, samples: 60, recalls: 20, demo_noise: 0.0, key_noise: 0.0 };
        let w = Workload::with_sizes(Sizes::React(s), 4, 2048, 512).unwrap();
        assert_eq!(w.oracle_accuracy(), 1.0);
        assert!(w.run(&AccConfig::acc2(), ControlMode::Mopc).unwrap().oracle_match);
    }

    #[test]
    fn default_tasks_are_solved_by_the_oracle() {
        for (kind, floor) in
            [(WorkloadKind::Fact, 0.95), (WorkloadKind::Mult, 0.85), (WorkloadKind::Tree, 0.8), (WorkloadKind::React, 0.85)]
        {
            let w = Workload::generate(kind, 1, 2048, 512).unwrap();
            assert!(w.oracle_accuracy() >= floor, "{kind}: {}", w.oracle_accuracy());
            assert_eq!(w.expected.indices.len(), w.truth.len());
        }
    }

    #[test]
    fn long_vectors_saturate_the_distance_registers() {
        // With one single-node path per tree, an exact query scores D = 8192,
        // far past the 12-bit register's 2047.
        let s = TreeSizes { items: 6, trees: 5, queries: 5, paths: 1, depth: 2 };
        let w = Workload::with_sizes(Sizes::Tree(s), 8, 8192, 512).unwrap();
        assert!(w.expected.scores.iter().all(|s| *s == Some(2047)));
        let o = w.run(&AccConfig::acc4(), ControlMode::Mopc).unwrap();
        assert!(o.oracle_match);
        assert!(o.report.dsum_saturations > 0);
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        let bad = [
            Sizes::Fact(FactSizes { factors: 1, ..Default::default() }),
            Sizes::Mult(MultSizes { samples: 3, ..Default::default() }),
            Sizes::Tree(TreeSizes { depth: 0, ..Default::default() }),
            Sizes::React(ReactSizes { key_noise: 1.5, ..Default::default() }),
        ];
        for s in bad {
            assert!(matches!(Workload::with_sizes(s, 1, 2048, 512), Err(WorkloadError::Size(_))), "{s:?}");
        }
    }

    #[test]
    fn fold_width_must_match_the_configuration() {
        let w = Workload::with_sizes(Sizes::React(ReactSizes { samples: 4, recalls: 2, ..Default::default() }), 1, 2048, 256)
            .unwrap();
        assert!(matches!(w.compile(&AccConfig::acc2()), Err(WorkloadError::FoldWidth { .. })));
    }
}
