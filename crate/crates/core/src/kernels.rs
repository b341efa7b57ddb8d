//! The programmable VSA kernel `F(y, (s1, s2, s3))` and its sub-functions.
//!
//! These are the functional reference for everything the simulator executes:
//! encoding (bind / permute / bundle), weighted projection, folded
//! similarity with nearest-neighbour search, and the resonator loop that
//! strings them together. All integer arithmetic saturates at the widths in
//! [`Precision`], exactly as the datapath does.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{Codebook, CodebookError};
use crate::hdc::{self, Accumulator, HdcError, Hypervector, Precision, SimilarityScore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error("selector ({s1}, {s2}, {s3}) out of range")]
    Selector { s1: u8, s2: u8, s3: u8 },
    #[error("operand array has no groups")]
    NoGroups,
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("s2={s2} needs a single-member group, got {len}")]
    GroupArity { s2: u8, len: usize },
    #[error("s1=0 takes exactly one group, got {0}")]
    MultipleGroups(usize),
    #[error("{items} items but {weights} weights")]
    LengthMismatch { items: usize, weights: usize },
    #[error("selector needs a query vector")]
    MissingQuery,
    #[error("selector needs per-group weights")]
    MissingWeights,
    #[error("search over an empty item list")]
    NoItems,
    #[error("factorization needs at least two codebooks, got {0}")]
    TooFewCodebooks(usize),
    #[error("max_iters must be at least 1")]
    NoIterations,
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Control variables of the compact kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSelector {
    pub s1: u8,
    pub s2: u8,
    pub s3: u8,
}

impl KernelSelector {
    pub fn new(s1: u8, s2: u8, s3: u8) -> Result<Self> {
        if s1 > 1 || s2 > 3 || s3 > 2 {
            return Err(KernelError::Selector { s1, s2, s3 });
        }
        Ok(KernelSelector { s1, s2, s3 })
    }
}

/// Kernel input `y`: groups of vectors plus the optional query and weights.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperandArray {
    pub groups: Vec<Vec<Hypervector>>,
    pub query: Option<Hypervector>,
    pub weights: Option<Vec<i64>>,
}

impl OperandArray {
    pub fn new(groups: Vec<Vec<Hypervector>>) -> Self {
        OperandArray { groups, query: None, weights: None }
    }

    pub fn with_query(mut self, q: Hypervector) -> Self {
        self.query = Some(q);
        self
    }

    pub fn with_weights(mut self, w: Vec<i64>) -> Self {
        self.weights = Some(w);
        self
    }

    fn singletons(&self) -> Result<Vec<Hypervector>> {
        if self.groups.is_empty() {
            return Err(KernelError::NoGroups);
        }
        self.groups
            .iter()
            .map(|g| match g.as_slice() {
                [one] => Ok(one.clone()),
                other => Err(KernelError::GroupArity { s2: 0, len: other.len() }),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelOutput {
    Vector(Hypervector),
    Index(usize),
}

/// Sub-function `b`. `position` is the group's 1-based index in the
/// enclosing array, used as the rotation count for `s2 = 2`.
pub fn encode_group(group: &[Hypervector], s2: u8, position: usize) -> Result<Hypervector> {
    let first = group.first().ok_or(KernelError::EmptyGroup(position.saturating_sub(1)))?;
    for v in group {
        first.compatible(v)?;
    }
    match s2 {
        0 | 2 if group.len() != 1 => Err(KernelError::GroupArity { s2, len: group.len() }),
        0 => Ok(first.clone()),
        2 => Ok(hdc::permute(first, position)),
        1 => {
            let mut out = first.clone();
            for v in &group[1..] {
                out = hdc::bind(&out, v)?;
            }
            Ok(out)
        }
        3 => {
            let mut out = first.clone();
            for (j, v) in group.iter().enumerate().skip(1) {
                out = hdc::bind(&out, &hdc::permute(v, j))?;
            }
            Ok(out)
        }
        _ => Err(KernelError::Selector { s1: 0, s2, s3: 0 }),
    }
}

/// Sub-function `a`: one encoded group (`s1 = 0`) or the bundle of all
/// encoded groups (`s1 = 1`).
pub fn encode(y: &OperandArray, s1: u8, s2: u8, prec: Precision) -> Result<Hypervector> {
    if y.groups.is_empty() {
        return Err(KernelError::NoGroups);
    }
    match s1 {
        0 => {
            if y.groups.len() != 1 {
                return Err(KernelError::MultipleGroups(y.groups.len()));
            }
            encode_group(&y.groups[0], s2, 1)
        }
        1 => {
            let encoded = y
                .groups
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    if g.is_empty() {
                        Err(KernelError::EmptyGroup(i))
                    } else {
                        encode_group(g, s2, i + 1)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(hdc::bundle(&encoded, prec.bnd_bits)?)
        }
        _ => Err(KernelError::Selector { s1, s2, s3: 0 }),
    }
}

/// Largest weight magnitude the H-bit accumulator accepts.
pub fn clamp_weight(w: i64, bnd_bits: u32) -> i64 {
    let max = (1i64 << (bnd_bits - 1)) - 1;
    w.clamp(-max, max)
}

/// Sub-function `c`: `sign(sum_i n_i * y_i)` with weights clamped to the
/// accumulator range and lanes saturating in item order.
pub fn project(items: &[Hypervector], weights: &[i64], prec: Precision) -> Result<Hypervector> {
    if items.len() != weights.len() {
        return Err(KernelError::LengthMismatch { items: items.len(), weights: weights.len() });
    }
    let first = items.first().ok_or(KernelError::NoItems)?;
    let mut acc = Accumulator::zeros(first.dim(), first.fold_width(), prec.bnd_bits)?;
    for (v, &w) in items.iter().zip(weights) {
        hdc::accumulate_into(&mut acc, v, clamp_weight(w, prec.bnd_bits))?;
    }
    Ok(hdc::sign(&acc))
}

/// Sub-function `e`: index of the item with the largest folded similarity
/// to `query`; ties resolve to the lowest index.
pub fn nn_search(items: &[Hypervector], query: &Hypervector, prec: Precision) -> Result<(usize, SimilarityScore)> {
    let mut best: Option<(usize, SimilarityScore)> = None;
    for (i, item) in items.iter().enumerate() {
        let s = hdc::fold_dot(item, query, prec.dist_bits)?;
        if best.is_none_or(|(_, b)| s.value > b.value) {
            best = Some((i, s));
        }
    }
    best.ok_or(KernelError::NoItems)
}

/// Compact kernel dispatch on `s3`.
pub fn kernel_dispatch(y: &OperandArray, s: KernelSelector, prec: Precision) -> Result<KernelOutput> {
    let s = KernelSelector::new(s.s1, s.s2, s.s3)?;
    match s.s3 {
        0 => Ok(KernelOutput::Vector(encode(y, s.s1, s.s2, prec)?)),
        1 => {
            let weights = y.weights.as_ref().ok_or(KernelError::MissingWeights)?;
            let items = y.singletons()?;
            Ok(KernelOutput::Vector(project(&items, weights, prec)?))
        }
        _ => {
            let query = y.query.as_ref().ok_or(KernelError::MissingQuery)?;
            let items = y.singletons()?;
            Ok(KernelOutput::Index(nn_search(&items, query, prec)?.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizationResult {
    pub factor_indices: Vec<usize>,
    pub iterations: usize,
    /// The estimates reached a fixed point and rebinding the decoded items
    /// reproduces the composite.
    pub converged: bool,
    /// The estimates stopped changing, whether or not the decode is valid.
    pub fixed_point: bool,
    #[serde(skip)]
    pub estimates: Vec<Hypervector>,
}

/// Converts a C-bit similarity into an H-bit scalar weight: drop the low
/// `C - H` bits with round-half-up, then clamp to the accumulator range.
pub fn similarity_weight(value: i64, prec: Precision) -> i64 {
    let shift = prec.dist_bits.saturating_sub(prec.bnd_bits);
    let scaled = if shift == 0 { value } else { (value + (1 << (shift - 1))) >> shift };
    clamp_weight(scaled, prec.bnd_bits)
}

/// Unbinds every other factor's estimate from the composite.
pub fn resonator_query(composite: &Hypervector, estimates: &[Hypervector], factor: usize) -> Result<Hypervector> {
    let mut q = composite.clone();
    for (g, e) in estimates.iter().enumerate() {
        if g != factor {
            q = hdc::bind(&q, e)?;
        }
    }
    Ok(q)
}

/// Resonator network. Estimates start as the bundle of each codebook. Each
/// iteration visits the factors in order; factor `f` unbinds the current
/// estimates of all other factors (already-updated ones included) from the
/// composite, weighs every item by its folded similarity to that query, and
/// projects. Stops at a fixed point or after `max_iters` iterations.
pub fn resonator_factorize(
    composite: &Hypervector,
    codebooks: &[Codebook],
    max_iters: usize,
    prec: Precision,
) -> Result<FactorizationResult> {
    if codebooks.len() < 2 {
        return Err(KernelError::TooFewCodebooks(codebooks.len()));
    }
    if max_iters < 1 {
        return Err(KernelError::NoIterations);
    }
    let items: Vec<Vec<Hypervector>> = codebooks.iter().map(|cb| cb.items()).collect();
    for set in &items {
        let first = set.first().ok_or(KernelError::NoItems)?;
        composite.compatible(first)?;
    }
    let mut estimates = items
        .iter()
        .map(|set| project(set, &vec![1; set.len()], prec))
        .collect::<Result<Vec<_>>>()?;

    let mut iterations = 0;
    let mut fixed_point = false;
    while iterations < max_iters {
        iterations += 1;
        let before = estimates.clone();
        resonator_step(composite, &items, &mut estimates, prec)?;
        if estimates == before {
            fixed_point = true;
            break;
        }
    }
    let factor_indices = items
        .iter()
        .zip(&estimates)
        .map(|(set, e)| nn_search(set, e, prec).map(|(i, _)| i))
        .collect::<Result<Vec<_>>>()?;
    let mut rebound = items[0][factor_indices[0]].clone();
    for (set, &i) in items.iter().zip(&factor_indices).skip(1) {
        rebound = hdc::bind(&rebound, &set[i])?;
    }
    let converged = fixed_point && rebound == *composite;
    Ok(FactorizationResult { factor_indices, iterations, converged, fixed_point, estimates })
}

/// One full resonator iteration, updating `estimates` factor by factor.
pub fn resonator_step(
    composite: &Hypervector,
    items: &[Vec<Hypervector>],
    estimates: &mut [Hypervector],
    prec: Precision,
) -> Result<()> {
    for (f, set) in items.iter().enumerate() {
        let q = resonator_query(composite, estimates, f)?;
        let weights = set
            .iter()
            .map(|item| hdc::fold_dot(item, &q, prec.dist_bits).map(|s| similarity_weight(s.value, prec)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        estimates[f] = project(set, &weights, prec)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdc::random_hv;

    fn rv(seed: u64) -> Hypervector {
        random_hv(64, 64, seed).unwrap()
    }

    #[test]
    fn selector_ranges() {
        assert!(KernelSelector::new(1, 3, 2).is_ok());
        assert!(KernelSelector::new(2, 0, 0).is_err());
        assert!(KernelSelector::new(0, 4, 0).is_err());
        assert!(KernelSelector::new(0, 0, 3).is_err());
    }

    #[test]
    fn encode_group_cases() {
        let (a, b, c) = (rv(1), rv(2), rv(3));
        let expected = hdc::bind(&a, &hdc::bind(&hdc::permute(&b, 1), &hdc::permute(&c, 2)).unwrap()).unwrap();
        assert_eq!(encode_group(&[a.clone(), b.clone(), c.clone()], 3, 1).unwrap(), expected);
        assert_eq!(encode_group(&[a.clone(), a.clone()], 1, 1).unwrap(), Hypervector::zeros(64, 64).unwrap());
        assert_eq!(encode_group(&[a.clone()], 0, 1).unwrap(), a);
        assert_eq!(encode_group(&[a.clone()], 2, 3).unwrap(), hdc::permute(&a, 3));
        assert!(matches!(encode_group(&[a.clone(), b.clone()], 0, 1), Err(KernelError::GroupArity { .. })));
        assert!(matches!(encode_group(&[a.clone(), b], 2, 1), Err(KernelError::GroupArity { .. })));
        assert!(matches!(encode_group(&[], 1, 1), Err(KernelError::EmptyGroup(0))));
        assert!(encode_group(&[a], 4, 1).is_err());
    }

    #[test]
    fn encode_records_and_single_group() {
        let (k1, v1, k2, v2) = (rv(1), rv(2), rv(3), rv(4));
        let y = OperandArray::new(vec![vec![k1.clone(), v1.clone()], vec![k2.clone(), v2.clone()]]);
        let rec = encode(&y, 1, 1, Precision::ACC).unwrap();
        let manual = hdc::bundle(&[hdc::bind(&k1, &v1).unwrap(), hdc::bind(&k2, &v2).unwrap()], 8).unwrap();
        assert_eq!(rec, manual);
        let one = OperandArray::new(vec![vec![k1.clone(), v1.clone()]]);
        assert_eq!(encode(&one, 0, 1, Precision::ACC).unwrap(), encode_group(&[k1, v1], 1, 1).unwrap());
        assert_eq!(encode(&y, 0, 1, Precision::ACC), Err(KernelError::MultipleGroups(2)));
        assert_eq!(encode(&OperandArray::default(), 1, 1, Precision::ACC), Err(KernelError::NoGroups));
    }

    #[test]
    fn project_cases() {
        let items: Vec<_> = (0..5).map(rv).collect();
        assert_eq!(project(&items, &[1; 5], Precision::ACC).unwrap(), hdc::bundle(&items, 8).unwrap());
        assert_eq!(project(&items[..1], &[-1], Precision::ACC).unwrap(), items[0].complement());
        assert!(matches!(project(&items, &[1, 2], Precision::ACC), Err(KernelError::LengthMismatch { .. })));
        assert_eq!(project(&[], &[], Precision::ACC), Err(KernelError::NoItems));
    }

    #[test]
    fn project_weighted_lane_by_lane() {
        let a = random_hv(16, 16, 21).unwrap();
        let b = random_hv(16, 16, 22).unwrap();
        let out = project(&[a.clone(), b.clone()], &[3, -1], Precision::ACC).unwrap();
        for i in 0..16 {
            let lane = 3 * a.bipolar(i) - b.bipolar(i);
            assert_eq!(out.bit(i), lane < 0, "lane {i}");
        }
    }

    #[test]
    fn project_clamps_weights() {
        let a = rv(1);
        let b = rv(2);
        // 1000 clamps to 127; -127 then ties lanes where a and b agree in sign
        let p = project(&[a.clone(), b.clone()], &[1000, -127], Precision::ACC).unwrap();
        for i in 0..64 {
            let lane = 127 * a.bipolar(i) - 127 * b.bipolar(i);
            assert_eq!(p.bit(i), lane < 0);
        }
    }

    #[test]
    fn nn_search_cases() {
        let items: Vec<_> = (0..8).map(rv).collect();
        assert_eq!(nn_search(&items, &items[5], Precision::ACC).unwrap().0, 5);
        let dup = vec![rv(1), rv(2), rv(2)];
        assert_eq!(nn_search(&dup, &rv(2), Precision::ACC).unwrap().0, 1);
        assert_eq!(nn_search(&[], &rv(1), Precision::ACC), Err(KernelError::NoItems));
        let wide = random_hv(128, 64, 1).unwrap();
        assert!(nn_search(&items, &wide, Precision::ACC).is_err());
    }

    #[test]
    fn dispatch_routes() {
        let (a, b) = (rv(1), rv(2));
        let y = OperandArray::new(vec![vec![a.clone(), b.clone()]]);
        let s = KernelSelector::new(0, 1, 0).unwrap();
        assert_eq!(kernel_dispatch(&y, s, Precision::ACC).unwrap(), KernelOutput::Vector(hdc::bind(&a, &b).unwrap()));

        let items: Vec<_> = (0..4).map(rv).collect();
        let y = OperandArray::new(items.iter().map(|v| vec![v.clone()]).collect()).with_query(items[2].clone());
        let s = KernelSelector::new(0, 0, 2).unwrap();
        assert_eq!(kernel_dispatch(&y, s, Precision::ACC).unwrap(), KernelOutput::Index(2));

        let seq = vec![rv(7), rv(8), rv(9)];
        let y = OperandArray::new(vec![seq.clone()]);
        let s = KernelSelector::new(1, 3, 0).unwrap();
        let manual = hdc::bind(
            &hdc::bind(&seq[0], &hdc::permute(&seq[1], 1)).unwrap(),
            &hdc::permute(&seq[2], 2),
        )
        .unwrap();
        assert_eq!(kernel_dispatch(&y, s, Precision::ACC).unwrap(), KernelOutput::Vector(manual));
    }

    #[test]
    fn dispatch_is_total_over_selectors() {
        let items: Vec<_> = (0..3).map(rv).collect();
        let full = OperandArray::new(items.iter().map(|v| vec![v.clone()]).collect())
            .with_query(items[0].clone())
            .with_weights(vec![1, 2, 3]);
        let bare = OperandArray::new(vec![vec![items[0].clone(), items[1].clone()]]);
        for s1 in 0..=1 {
            for s2 in 0..=3 {
                for s3 in 0..=2 {
                    let s = KernelSelector { s1, s2, s3 };
                    for y in [&full, &bare] {
                        // either a value or a typed error, never a panic
                        let _ = kernel_dispatch(y, s, Precision::ACC);
                    }
                }
            }
        }
        let s = KernelSelector { s1: 0, s2: 0, s3: 2 };
        assert_eq!(kernel_dispatch(&bare, s, Precision::ACC), Err(KernelError::MissingQuery));
        let s = KernelSelector { s1: 0, s2: 0, s3: 1 };
        assert_eq!(kernel_dispatch(&bare, s, Precision::ACC), Err(KernelError::MissingWeights));
    }

    #[test]
    fn resonator_trivial_codebooks() {
        let cbs: Vec<_> = (0..3).map(|i| Codebook::random(format!("f{i}"), 1, 256, 256, i).unwrap()).collect();
        let composite = cbs.iter().map(|c| c.item(0).unwrap()).reduce(|a, b| hdc::bind(&a, &b).unwrap()).unwrap();
        let r = resonator_factorize(&composite, &cbs, 60, Precision::ACC).unwrap();
        assert_eq!(r.factor_indices, vec![0, 0, 0]);
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn resonator_two_by_two_matches_exhaustive_search() {
        let a = Codebook::random("a", 2, 256, 256, 21).unwrap();
        let b = Codebook::random("b", 2, 256, 256, 22).unwrap();
        let composite = hdc::bind(&a.item(1).unwrap(), &b.item(1).unwrap()).unwrap();
        let mut exact = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                if hdc::bind(&a.item(i).unwrap(), &b.item(j).unwrap()).unwrap() == composite {
                    exact.push(vec![i, j]);
                }
            }
        }
        assert_eq!(exact, vec![vec![1, 1]]);
        let r = resonator_factorize(&composite, &[a, b], 60, Precision::ACC).unwrap();
        assert_eq!(r.factor_indices, exact[0]);
        assert!(r.converged);
    }

    #[test]
    fn similarity_weight_rounds_and_clamps() {
        assert_eq!(similarity_weight(2047, Precision::ACC), 127);
        assert_eq!(similarity_weight(-2048, Precision::ACC), -127);
        assert_eq!(similarity_weight(8, Precision::ACC), 1);
        assert_eq!(similarity_weight(7, Precision::ACC), 0);
        assert_eq!(similarity_weight(-8, Precision::ACC), 0);
        assert_eq!(similarity_weight(-9, Precision::ACC), -1);
        assert_eq!(similarity_weight(300, Precision::WIDE), 300);
    }

    #[test]
    fn resonator_errors() {
        let cb = Codebook::random("a", 2, 256, 256, 1).unwrap();
        let x = cb.item(0).unwrap();
        assert_eq!(
            resonator_factorize(&x, std::slice::from_ref(&cb), 5, Precision::ACC),
            Err(KernelError::TooFewCodebooks(1))
        );
        assert_eq!(resonator_factorize(&x, &[cb.clone(), cb.clone()], 0, Precision::ACC), Err(KernelError::NoIterations));
        let other = random_hv(512, 256, 1).unwrap();
        assert!(resonator_factorize(&other, &[cb.clone(), cb], 5, Precision::ACC).is_err());
    }
}
