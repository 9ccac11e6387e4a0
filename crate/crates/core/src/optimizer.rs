//! Loop-order search: exhaustive enumeration, the memoized dynamic program
//! over (term range, removed indices) subproblems, and joint search over
//! contraction paths.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cost::{cross_cost, eval_cost, CostContext, CostModel, CostValue};
use crate::error::{Error, Result};
use crate::index::{IndexId, IndexSet};
use crate::kernel::KernelSpec;
use crate::loopnest::{count_orders, LoopOrder, OrderIter, SparseConstraint};
use crate::path::{enumerate_paths, filter_min_depth, ContractionPath};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// CSF mode order of the sparse tensor; defaults to its kernel order.
    pub csf_order: Option<Vec<IndexId>>,
    pub memo: bool,
    /// Maximum number of orders the exhaustive search may scan.
    pub budget: u128,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            csf_order: None,
            memo: true,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl SearchOptions {
    fn csf<'a>(&'a self, spec: &'a KernelSpec) -> &'a [IndexId] {
        self.csf_order.as_deref().unwrap_or(&spec.sparse().indices)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Distinct subproblems solved (DP) or orders scanned (exhaustive).
    pub subproblems: u64,
    pub memo_hits: u64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: (LoopOrder, CostValue),
    /// Cheapest order whose forest has a different first root.
    pub second_best_diff_root: Option<(LoopOrder, CostValue)>,
    pub stats: SearchStats,
}

impl SearchResult {
    pub fn order(&self) -> &LoopOrder {
        &self.best.0
    }

    pub fn cost(&self) -> CostValue {
        self.best.1
    }
}

fn root_of(order: &LoopOrder) -> Option<IndexId> {
    order.terms().first().and_then(|a| a.first().copied())
}

fn check_terms(path: &ContractionPath) -> Result<()> {
    if let Some(t) = path.terms().iter().position(|t| t.indices().is_empty()) {
        return Err(Error::invalid(format!("term {} has no indices", t + 1)));
    }
    Ok(())
}

/// Scans every admissible order.
pub fn order_exhaustive(
    spec: &KernelSpec,
    path: &ContractionPath,
    model: &dyn CostModel,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    check_terms(path)?;
    let start = Instant::now();
    let cons = SparseConstraint::new(path, opts.csf(spec));
    let total = count_orders(path, &cons);
    if total > opts.budget {
        return Err(Error::BudgetExceeded {
            candidates: total,
            budget: opts.budget,
        });
    }
    let ctx = CostContext::new(spec, path);
    let mut best: Option<(LoopOrder, CostValue)> = None;
    let mut per_root: Vec<(IndexId, LoopOrder, CostValue)> = Vec::new();
    let mut scanned = 0u64;
    // orders arrive in increasing flattened order, so strict improvement
    // keeps the lexicographically smallest among ties
    for order in OrderIter::new(path, &cons) {
        scanned += 1;
        let c = eval_cost(model, &ctx, path, &order)?;
        let root = root_of(&order).expect("first term is nonempty");
        match per_root.iter_mut().find(|(r, _, _)| *r == root) {
            Some(slot) if c < slot.2 => {
                slot.1 = order.clone();
                slot.2 = c;
            }
            Some(_) => {}
            None => per_root.push((root, order.clone(), c)),
        }
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((order, c));
        }
    }
    let best = best.ok_or_else(|| Error::invalid("path has no admissible loop order"))?;
    let best_root = root_of(&best.0);
    let second = per_root
        .into_iter()
        .filter(|(r, _, _)| Some(*r) != best_root)
        .min_by(|a, b| a.2.cmp(&b.2).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, o, c)| (o, c));
    Ok(SearchResult {
        best,
        second_best_diff_root: second,
        stats: SearchStats {
            subproblems: scanned,
            memo_hits: 0,
            elapsed: start.elapsed(),
        },
    })
}

#[derive(Clone, Debug)]
struct Candidate {
    cost: CostValue,
    /// Orders of the subproblem's terms, first term first.
    orders: Vec<Vec<IndexId>>,
    root: Option<IndexId>,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => (self.cost, &self.orders) < (o.cost, &o.orders),
        }
    }
}

#[derive(Debug, Default)]
struct Entry {
    best: Option<Candidate>,
    second: Option<Candidate>,
}

struct Dp<'a> {
    model: &'a dyn CostModel,
    ctx: CostContext,
    cons: SparseConstraint,
    memo: Option<HashMap<(u8, u8, u64), Rc<Entry>>>,
    stats: SearchStats,
}

impl Dp<'_> {
    fn admissible(&self, t: usize, removed: IndexSet, q: IndexId) -> bool {
        self.ctx.term_indices(t).minus(removed).contains(q) && self.cons.allows(t, removed, q)
    }

    fn solve(&mut self, u: usize, v: usize, removed: IndexSet) -> Rc<Entry> {
        let key = (u as u8, v as u8, removed.0);
        if let Some(memo) = &self.memo {
            if let Some(e) = memo.get(&key) {
                self.stats.memo_hits += 1;
                return e.clone();
            }
        }
        self.stats.subproblems += 1;
        let entry = Rc::new(self.compute(u, v, removed));
        if let Some(memo) = &mut self.memo {
            memo.insert(key, entry.clone());
        }
        entry
    }

    fn compute(&mut self, u: usize, v: usize, removed: IndexSet) -> Entry {
        let remaining = self.ctx.term_indices(u).minus(removed);
        if remaining.is_empty() {
            // the first term is a leaf here; the rest forms its own forest
            if u == v {
                let best = Candidate {
                    cost: self.model.identity(),
                    orders: vec![Vec::new()],
                    root: None,
                };
                return Entry {
                    best: Some(best),
                    second: None,
                };
            }
            let y = self.solve(u + 1, v, removed);
            let Some(yb) = &y.best else {
                return Entry::default();
            };
            let edges = cross_cost(self.model, &self.ctx, removed, u..=u, u + 1..=v);
            let mut orders = vec![Vec::new()];
            orders.extend(yb.orders.iter().cloned());
            let best = Candidate {
                cost: self.model.combine(yb.cost, edges),
                orders,
                root: None,
            };
            return Entry {
                best: Some(best),
                second: None,
            };
        }
        let mut per_root: Vec<Candidate> = Vec::new();
        for q in remaining.iter() {
            if !self.cons.allows(u, removed, q) {
                continue;
            }
            let mut k = u;
            while k < v && self.admissible(k + 1, removed, q) {
                k += 1;
            }
            let mut best_q: Option<Candidate> = None;
            for s in u..=k {
                let x = self.solve(u, s, removed.with(q));
                let Some(xb) = &x.best else { continue };
                let phi = self.model.loop_cost(&self.ctx, removed, q, u..=s, xb.cost);
                let mut orders: Vec<Vec<IndexId>> = xb
                    .orders
                    .iter()
                    .map(|a| std::iter::once(q).chain(a.iter().copied()).collect())
                    .collect();
                let cost = if s == v {
                    phi
                } else {
                    let y = self.solve(s + 1, v, removed);
                    // a second tree rooted at q would fuse with this one
                    let yc = if y.best.as_ref().and_then(|c| c.root) == Some(q) {
                        &y.second
                    } else {
                        &y.best
                    };
                    let Some(yc) = yc else { continue };
                    orders.extend(yc.orders.iter().cloned());
                    let edges = cross_cost(self.model, &self.ctx, removed, u..=s, s + 1..=v);
                    self.model.combine(self.model.combine(phi, yc.cost), edges)
                };
                let cand = Candidate {
                    cost,
                    orders,
                    root: Some(q),
                };
                if cand.beats(&best_q) {
                    best_q = Some(cand);
                }
            }
            per_root.extend(best_q);
        }
        let mut best: Option<Candidate> = None;
        for c in &per_root {
            if c.beats(&best) {
                best = Some(c.clone());
            }
        }
        let best_root = best.as_ref().and_then(|c| c.root);
        let mut second: Option<Candidate> = None;
        for c in per_root.into_iter().filter(|c| c.root != best_root) {
            if c.beats(&second) {
                second = Some(c);
            }
        }
        Entry { best, second }
    }
}

/// Memoized dynamic program over `(u, v, S)` subproblems.
pub fn order_dp(
    spec: &KernelSpec,
    path: &ContractionPath,
    model: &dyn CostModel,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    check_terms(path)?;
    if path.num_terms() > u8::MAX as usize {
        return Err(Error::invalid("too many terms"));
    }
    let start = Instant::now();
    let mut dp = Dp {
        model,
        ctx: CostContext::new(spec, path),
        cons: SparseConstraint::new(path, opts.csf(spec)),
        memo: opts.memo.then(HashMap::new),
        stats: SearchStats::default(),
    };
    let entry = dp.solve(0, path.num_terms() - 1, IndexSet::EMPTY);
    let mut stats = dp.stats;
    stats.elapsed = start.elapsed();
    let best = entry
        .best
        .clone()
        .ok_or_else(|| Error::invalid("path has no admissible loop order"))?;
    Ok(SearchResult {
        best: (LoopOrder::new(best.orders), best.cost),
        second_best_diff_root: entry
            .second
            .clone()
            .map(|c| (LoopOrder::new(c.orders), c.cost)),
        stats,
    })
}

/// Best path and order over all contraction paths of the kernel.
#[derive(Clone, Debug)]
pub struct JointResult {
    pub path: ContractionPath,
    pub result: SearchResult,
    /// Every searched path with its result, in canonical enumeration order.
    pub candidates: Vec<(ContractionPath, SearchResult)>,
}

/// Searches every path (or only the minimum-depth ones) in parallel; ties
/// go to the earliest path in enumeration order.
pub fn joint_search(
    spec: &KernelSpec,
    model: &dyn CostModel,
    use_depth_filter: bool,
    opts: &SearchOptions,
) -> Result<JointResult> {
    let mut paths = enumerate_paths(spec)?;
    if use_depth_filter {
        paths = filter_min_depth(paths);
    }
    let results: Vec<Result<SearchResult>> = paths
        .par_iter()
        .map(|p| order_dp(spec, p, model, opts))
        .collect();
    let mut candidates = Vec::with_capacity(paths.len());
    for (p, r) in paths.into_iter().zip(results) {
        candidates.push((p, r?));
    }
    let mut win = 0;
    for (i, (_, r)) in candidates.iter().enumerate() {
        if r.cost() < candidates[win].1.cost() {
            win = i;
        }
    }
    Ok(JointResult {
        path: candidates[win].0.clone(),
        result: candidates[win].1.clone(),
        candidates,
    })
}

/// Up to `k` (path, order, cost) candidates ranked by model cost: each
/// path's best and second-best-root orders.
pub fn ranked_candidates(
    joint: &JointResult,
    k: usize,
) -> Vec<(ContractionPath, LoopOrder, CostValue)> {
    let mut all: Vec<(usize, ContractionPath, LoopOrder, CostValue)> = Vec::new();
    for (i, (p, r)) in joint.candidates.iter().enumerate() {
        all.push((i, p.clone(), r.best.0.clone(), r.best.1));
        if let Some((o, c)) = &r.second_best_diff_root {
            all.push((i, p.clone(), o.clone(), *c));
        }
    }
    all.sort_by(|a, b| a.3.cmp(&b.3).then(a.0.cmp(&b.0)));
    all.into_iter()
        .take(k)
        .map(|(_, p, o, c)| (p, o, c))
        .collect()
}
