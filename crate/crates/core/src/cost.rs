//! Tree-separable cost models over fully-fused loop nest forests.
//!
//! A forest at removed-index set `S` (the enclosing loops) costs
//! `⊕_r φ(S, r, terms under r, cost(children at S ∪ {r}))` over its trees,
//! combined with the cost of every buffer passed between two different trees
//! at that level. A buffer produced under `S` and consumed by a sibling tree
//! holds `out(producer) \ S`.

use std::fmt;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::index::{IndexId, IndexSet};
use crate::kernel::KernelSpec;
use crate::loopnest::{build_forest, ForestNode, FusedLoopForest, LoopOrder, TermOrder};
use crate::path::ContractionPath;

/// Scalar or lexicographic cost; ordered lexicographically.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CostValue {
    parts: [i128; 3],
    arity: u8,
}

impl CostValue {
    pub const fn scalar(v: i128) -> Self {
        CostValue {
            parts: [v, 0, 0],
            arity: 1,
        }
    }

    pub const fn tuple(parts: [i128; 3]) -> Self {
        CostValue { parts, arity: 3 }
    }

    pub fn parts(&self) -> &[i128] {
        &self.parts[..self.arity as usize]
    }

    /// First component.
    pub fn value(&self) -> i128 {
        self.parts[0]
    }

    fn add(self, other: CostValue) -> CostValue {
        let mut parts = self.parts;
        for (p, q) in parts.iter_mut().zip(other.parts) {
            *p = p.saturating_add(q);
        }
        CostValue {
            parts,
            arity: self.arity.max(other.arity),
        }
    }

    fn max(self, other: CostValue) -> CostValue {
        std::cmp::max(self, other)
    }
}

impl fmt::Display for CostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.arity == 1 {
            write!(f, "{}", self.parts[0])
        } else {
            let p: Vec<String> = self.parts().iter().map(|v| v.to_string()).collect();
            write!(f, "({})", p.join(","))
        }
    }
}

impl fmt::Debug for CostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Kernel and path facts cost models need.
#[derive(Clone, Debug)]
pub struct CostContext {
    dims: Vec<usize>,
    sparse: IndexSet,
    term_indices: Vec<IndexSet>,
    operands: Vec<[IndexSet; 3]>,
    outs: Vec<IndexSet>,
    reads_sparse: Vec<bool>,
    consumer: Vec<Option<usize>>,
}

impl CostContext {
    pub fn new(spec: &KernelSpec, path: &ContractionPath) -> Self {
        let terms = path.terms();
        CostContext {
            dims: spec.indices().iter().map(|d| d.dim).collect(),
            sparse: spec.sparse_indices(),
            term_indices: terms.iter().map(|t| t.indices()).collect(),
            operands: terms
                .iter()
                .map(|t| [t.lhs_indices, t.rhs_indices, t.out_indices])
                .collect(),
            outs: terms.iter().map(|t| t.out_indices).collect(),
            reads_sparse: terms.iter().map(|t| t.reads_sparse()).collect(),
            consumer: (0..terms.len()).map(|t| path.consumer(t)).collect(),
        }
    }

    pub fn num_terms(&self) -> usize {
        self.term_indices.len()
    }

    pub fn dim(&self, i: IndexId) -> usize {
        self.dims[i.pos()]
    }

    pub fn term_indices(&self, t: usize) -> IndexSet {
        self.term_indices[t]
    }

    /// Lhs, rhs and result index sets of term `t`.
    pub fn operands(&self, t: usize) -> &[IndexSet; 3] {
        &self.operands[t]
    }

    pub fn consumer(&self, t: usize) -> Option<usize> {
        self.consumer[t]
    }

    pub fn reads_sparse(&self, t: usize) -> bool {
        self.reads_sparse[t]
    }

    pub fn sparse_indices(&self) -> IndexSet {
        self.sparse
    }

    /// Indices of the buffer `producer` writes when it is separated from its
    /// consumer below the loops `removed`.
    pub fn buffer_indices(&self, removed: IndexSet, producer: usize) -> IndexSet {
        self.outs[producer].minus(removed)
    }

    pub fn volume(&self, set: IndexSet) -> i128 {
        set.iter()
            .fold(1i128, |acc, i| acc.saturating_mul(self.dim(i) as i128))
    }

    /// Whether a loop over `r` below `removed`, enclosing exactly `terms`,
    /// iterates the CSF.
    pub fn loop_is_sparse(&self, terms: RangeInclusive<usize>, r: IndexId) -> bool {
        self.sparse.contains(r) && terms.into_iter().any(|t| self.reads_sparse[t])
    }
}

/// A tree-separable cost function `f_{φ,⊕}`.
pub trait CostModel: Send + Sync {
    fn name(&self) -> String;

    /// Cost of an empty forest; the neutral element of [`CostModel::combine`].
    fn identity(&self) -> CostValue;

    /// `⊕`: associative and nondecreasing in both arguments.
    fn combine(&self, a: CostValue, b: CostValue) -> CostValue;

    /// `φ` for a loop over `r` nested in `removed` and enclosing `terms`,
    /// with children cost `x`. Nondecreasing in `x`.
    fn loop_cost(
        &self,
        ctx: &CostContext,
        removed: IndexSet,
        r: IndexId,
        terms: RangeInclusive<usize>,
        x: CostValue,
    ) -> CostValue;

    /// Cost of the buffer from `producer` to a sibling tree under `removed`.
    fn buffer_cost(&self, ctx: &CostContext, removed: IndexSet, producer: usize) -> CostValue;
}

/// Largest buffer order.
#[derive(Copy, Clone, Debug, Default)]
pub struct MaxBufferDim;

/// Largest buffer element count.
#[derive(Copy, Clone, Debug, Default)]
pub struct MaxBufferSize;

/// Cache misses when subtensors of up to `d` remaining modes stay resident.
#[derive(Copy, Clone, Debug)]
pub struct CacheMisses {
    pub d: usize,
}

/// Offloadable dense loops with a bound on buffer order.
///
/// Cost is `(buffers of order > bound, -independent trailing dense loops,
/// total buffer elements)`. A loop counts when it encloses a single term and
/// it and every loop below it are dense.
#[derive(Copy, Clone, Debug)]
pub struct DenseLoops {
    pub bound: usize,
}

pub fn max_buffer_dim_model() -> MaxBufferDim {
    MaxBufferDim
}

pub fn max_buffer_size_model() -> MaxBufferSize {
    MaxBufferSize
}

pub fn cache_miss_model(d: usize) -> CacheMisses {
    CacheMisses { d }
}

pub fn dense_loop_metric(bound: usize) -> DenseLoops {
    DenseLoops { bound }
}

impl CostModel for MaxBufferDim {
    fn name(&self) -> String {
        "max-buf-dim".into()
    }

    fn identity(&self) -> CostValue {
        CostValue::scalar(0)
    }

    fn combine(&self, a: CostValue, b: CostValue) -> CostValue {
        a.max(b)
    }

    fn loop_cost(
        &self,
        _: &CostContext,
        _: IndexSet,
        _: IndexId,
        _: RangeInclusive<usize>,
        x: CostValue,
    ) -> CostValue {
        x
    }

    fn buffer_cost(&self, ctx: &CostContext, removed: IndexSet, producer: usize) -> CostValue {
        CostValue::scalar(ctx.buffer_indices(removed, producer).len() as i128)
    }
}

impl CostModel for MaxBufferSize {
    fn name(&self) -> String {
        "max-buf-size".into()
    }

    fn identity(&self) -> CostValue {
        CostValue::scalar(0)
    }

    fn combine(&self, a: CostValue, b: CostValue) -> CostValue {
        a.max(b)
    }

    fn loop_cost(
        &self,
        _: &CostContext,
        _: IndexSet,
        _: IndexId,
        _: RangeInclusive<usize>,
        x: CostValue,
    ) -> CostValue {
        x
    }

    fn buffer_cost(&self, ctx: &CostContext, removed: IndexSet, producer: usize) -> CostValue {
        CostValue::scalar(ctx.volume(ctx.buffer_indices(removed, producer)))
    }
}

impl CacheMisses {
    /// Operands of `terms` containing `r` with more than `d` indices not in
    /// `removed`.
    pub fn tau(
        &self,
        ctx: &CostContext,
        removed: IndexSet,
        r: IndexId,
        terms: RangeInclusive<usize>,
    ) -> i128 {
        terms
            .flat_map(|t| ctx.operands(t).iter())
            .filter(|v| v.contains(r) && v.minus(removed).len() > self.d)
            .count() as i128
    }
}

impl CostModel for CacheMisses {
    fn name(&self) -> String {
        format!("cache:D={}", self.d)
    }

    fn identity(&self) -> CostValue {
        CostValue::scalar(0)
    }

    fn combine(&self, a: CostValue, b: CostValue) -> CostValue {
        a.add(b)
    }

    fn loop_cost(
        &self,
        ctx: &CostContext,
        removed: IndexSet,
        r: IndexId,
        terms: RangeInclusive<usize>,
        x: CostValue,
    ) -> CostValue {
        let tau = self.tau(ctx, removed, r, terms);
        CostValue::scalar((ctx.dim(r) as i128).saturating_mul(tau.saturating_add(x.value())))
    }

    fn buffer_cost(&self, _: &CostContext, _: IndexSet, _: usize) -> CostValue {
        CostValue::scalar(0)
    }
}

impl DenseLoops {
    /// Whether a loop over `r` enclosing only term `t` is dense along with
    /// every loop below it.
    pub fn independent_dense(ctx: &CostContext, removed: IndexSet, r: IndexId, t: usize) -> bool {
        if !ctx.reads_sparse(t) {
            return true;
        }
        let sparse_here = ctx.term_indices(t).intersect(ctx.sparse_indices());
        !sparse_here.contains(r) && sparse_here.is_subset(removed)
    }
}

impl CostModel for DenseLoops {
    fn name(&self) -> String {
        format!("dense-loops:bound={}", self.bound)
    }

    fn identity(&self) -> CostValue {
        CostValue::tuple([0, 0, 0])
    }

    fn combine(&self, a: CostValue, b: CostValue) -> CostValue {
        a.add(b)
    }

    fn loop_cost(
        &self,
        ctx: &CostContext,
        removed: IndexSet,
        r: IndexId,
        terms: RangeInclusive<usize>,
        x: CostValue,
    ) -> CostValue {
        let (a, b) = (*terms.start(), *terms.end());
        if a == b && Self::independent_dense(ctx, removed, r, a) {
            x.add(CostValue::tuple([0, -1, 0]))
        } else {
            x
        }
    }

    fn buffer_cost(&self, ctx: &CostContext, removed: IndexSet, producer: usize) -> CostValue {
        let set = ctx.buffer_indices(removed, producer);
        CostValue::tuple([(set.len() > self.bound) as i128, 0, ctx.volume(set)])
    }
}

/// Parses `max-buf-dim`, `max-buf-size`, `cache:D=<d>` or
/// `dense-loops:bound=<b>`.
pub fn parse_cost_model(text: &str) -> Result<Box<dyn CostModel>> {
    let text = text.trim();
    let param = |prefix: &str, key: &str| -> Option<Result<usize>> {
        let rest = text.strip_prefix(prefix)?;
        let value = rest.strip_prefix(key).unwrap_or(rest);
        Some(
            value
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad parameter in cost model '{}'", text))),
        )
    };
    match text {
        "max-buf-dim" => Ok(Box::new(MaxBufferDim)),
        "max-buf-size" => Ok(Box::new(MaxBufferSize)),
        _ => {
            if let Some(d) = param("cache:", "D=") {
                Ok(Box::new(CacheMisses { d: d? }))
            } else if let Some(b) = param("dense-loops:", "bound=") {
                Ok(Box::new(DenseLoops { bound: b? }))
            } else {
                Err(Error::invalid(format!("unknown cost model '{}'", text)))
            }
        }
    }
}

/// Charges every buffer whose producer is in `from` and whose consumer is in
/// `to`, both at removed set `removed`.
pub(crate) fn cross_cost(
    model: &dyn CostModel,
    ctx: &CostContext,
    removed: IndexSet,
    from: RangeInclusive<usize>,
    to: RangeInclusive<usize>,
) -> CostValue {
    let mut acc = model.identity();
    for x in from {
        if let Some(y) = ctx.consumer(x) {
            if to.contains(&y) {
                acc = model.combine(acc, model.buffer_cost(ctx, removed, x));
            }
        }
    }
    acc
}

/// Cost of `order` by recursion over peeling.
pub fn eval_cost(
    model: &dyn CostModel,
    ctx: &CostContext,
    path: &ContractionPath,
    order: &LoopOrder,
) -> Result<CostValue> {
    order.validate(path)?;
    let items: Vec<TermOrder> = order.terms().iter().cloned().enumerate().collect();
    eval_items(model, ctx, &items, IndexSet::EMPTY)
}

fn eval_items(
    model: &dyn CostModel,
    ctx: &CostContext,
    items: &[TermOrder],
    removed: IndexSet,
) -> Result<CostValue> {
    let Some((first, a)) = items.first() else {
        return Ok(model.identity());
    };
    let last = items.last().unwrap().0;
    if a.is_empty() {
        let rest = eval_items(model, ctx, &items[1..], removed)?;
        let edges = cross_cost(model, ctx, removed, *first..=*first, first + 1..=last);
        return Ok(model.combine(rest, edges));
    }
    // exhausted lists stay in the group as leaves of the peeled loop
    let index = a[0];
    let group_len = items
        .iter()
        .take_while(|(_, a)| a.first() == Some(&index))
        .count();
    let group_end = items[group_len - 1].0;
    let first_items: Vec<TermOrder> = items[..group_len]
        .iter()
        .map(|(t, a)| (*t, a[1..].to_vec()))
        .collect();
    let inner = eval_items(model, ctx, &first_items, removed.with(index))?;
    let here = model.loop_cost(ctx, removed, index, *first..=group_end, inner);
    let rest = eval_items(model, ctx, &items[group_len..], removed)?;
    let edges = cross_cost(
        model,
        ctx,
        removed,
        *first..=group_end,
        group_end + 1..=last,
    );
    Ok(model.combine(model.combine(here, rest), edges))
}

/// Cost evaluated bottom-up on a materialized forest.
pub fn eval_forest(
    model: &dyn CostModel,
    ctx: &CostContext,
    forest: &FusedLoopForest,
) -> CostValue {
    fn level(
        model: &dyn CostModel,
        ctx: &CostContext,
        forest: &FusedLoopForest,
        nodes: &[ForestNode],
        removed: IndexSet,
        depth: usize,
    ) -> CostValue {
        let mut acc = model.identity();
        for node in nodes {
            if let ForestNode::Loop(v) = node {
                let inner = level(
                    model,
                    ctx,
                    forest,
                    &v.children,
                    removed.with(v.index),
                    depth + 1,
                );
                acc = model.combine(
                    acc,
                    model.loop_cost(ctx, removed, v.index, v.terms.clone(), inner),
                );
            }
        }
        for b in forest.buffers() {
            let here =
                b.common.len() == depth && IndexSet::from_ids(b.common.iter().copied()) == removed;
            let split = nodes
                .iter()
                .any(|n| n.terms().contains(&b.producer) && !n.terms().contains(&b.consumer));
            if here && split {
                acc = model.combine(acc, model.buffer_cost(ctx, removed, b.producer));
            }
        }
        acc
    }
    level(model, ctx, forest, forest.roots(), IndexSet::EMPTY, 0)
}

/// Cost of `order` via its materialized forest.
pub fn eval_cost_direct(
    model: &dyn CostModel,
    ctx: &CostContext,
    path: &ContractionPath,
    order: &LoopOrder,
    csf_order: &[IndexId],
) -> Result<CostValue> {
    let forest = build_forest(path, order, csf_order)?;
    Ok(eval_forest(model, ctx, &forest))
}

/// All four models with default parameters, for reports.
pub fn standard_models() -> Vec<Box<dyn CostModel>> {
    vec![
        Box::new(MaxBufferDim),
        Box::new(MaxBufferSize),
        Box::new(CacheMisses { d: 1 }),
        Box::new(DenseLoops { bound: 2 }),
    ]
}
