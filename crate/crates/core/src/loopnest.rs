//! Loop orders, peeling, fully-fused loop nest forests and intermediate
//! buffers.

use std::fmt;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::index::{IndexId, IndexSet};
use crate::kernel::KernelSpec;
use crate::path::{intermediate_name, ContractionPath, Operand};

/// Per-term index orders `A = (A_1, ..., A_N)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LoopOrder {
    terms: Vec<Vec<IndexId>>,
}

impl LoopOrder {
    pub fn new(terms: Vec<Vec<IndexId>>) -> Self {
        LoopOrder { terms }
    }

    pub fn terms(&self) -> &[Vec<IndexId>] {
        &self.terms
    }

    pub fn term(&self, t: usize) -> &[IndexId] {
        &self.terms[t]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// All per-term lists concatenated; used for deterministic tie-breaks.
    pub fn flattened(&self) -> Vec<IndexId> {
        self.terms.iter().flatten().copied().collect()
    }

    /// Checks that every `A_i` is a permutation of term `i`'s indices.
    pub fn validate(&self, path: &ContractionPath) -> Result<()> {
        if self.terms.len() != path.num_terms() {
            return Err(Error::invalid(format!(
                "loop order has {} terms, path has {}",
                self.terms.len(),
                path.num_terms()
            )));
        }
        for (t, (a, term)) in self.terms.iter().zip(path.terms()).enumerate() {
            let set = IndexSet::from_ids(a.iter().copied());
            if set.len() != a.len() || set != term.indices() {
                return Err(Error::invalid(format!(
                    "order for term {} must be a permutation of its {} indices",
                    t + 1,
                    term.indices().len()
                )));
            }
        }
        Ok(())
    }

    /// `(i,j,k,s),(i,j,s,r)`
    pub fn describe(&self, spec: &KernelSpec) -> String {
        self.terms
            .iter()
            .map(|a| {
                let n: Vec<&str> = a.iter().map(|&i| spec.index_name(i)).collect();
                format!("({})", n.join(","))
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses `i,j,k,s;i,j,s,r` (terms separated by `;`).
    pub fn parse(spec: &KernelSpec, text: &str) -> Result<LoopOrder> {
        let mut terms = Vec::new();
        for part in text.split(';') {
            let mut a = Vec::new();
            for name in part.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let name = name.trim_matches(|c| c == '(' || c == ')');
                let id = spec.index_by_name(name).ok_or_else(|| {
                    Error::invalid(format!("unknown index '{}' in loop order", name))
                })?;
                a.push(id);
            }
            terms.push(a);
        }
        Ok(LoopOrder { terms })
    }
}

/// CSF-order restriction on loop orders.
///
/// A term whose left operand holds the sparse tensor (directly or through
/// intermediates) must visit its sparse indices in CSF level order.
#[derive(Clone, Debug)]
pub struct SparseConstraint {
    csf_order: Vec<IndexId>,
    /// Constrained indices per term, in CSF order.
    per_term: Vec<Vec<IndexId>>,
}

impl SparseConstraint {
    pub fn new(path: &ContractionPath, csf_order: &[IndexId]) -> Self {
        let sparse = IndexSet::from_ids(csf_order.iter().copied());
        let per_term = path
            .terms()
            .iter()
            .map(|t| {
                if t.sparse_derived() {
                    let mine = t.indices().intersect(sparse);
                    csf_order
                        .iter()
                        .copied()
                        .filter(|&i| mine.contains(i))
                        .collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        SparseConstraint {
            csf_order: csf_order.to_vec(),
            per_term,
        }
    }

    pub fn csf_order(&self) -> &[IndexId] {
        &self.csf_order
    }

    pub fn constrained(&self, term: usize) -> &[IndexId] {
        &self.per_term[term]
    }

    /// May `q` be the next loop of `term` once `placed` are already iterated?
    #[inline]
    pub fn allows(&self, term: usize, placed: IndexSet, q: IndexId) -> bool {
        let cons = &self.per_term[term];
        match cons.iter().position(|&c| c == q) {
            None => true,
            Some(p) => cons[..p].iter().all(|&c| placed.contains(c)),
        }
    }

    pub fn check(&self, order: &LoopOrder) -> Result<()> {
        for (t, a) in order.terms().iter().enumerate() {
            let seq: Vec<IndexId> = a
                .iter()
                .copied()
                .filter(|i| self.per_term[t].contains(i))
                .collect();
            if seq != self.per_term[t] {
                return Err(Error::invalid(format!(
                    "order for term {} visits sparse indices out of CSF order",
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

/// One term's remaining loop list during peeling.
pub type TermOrder = (usize, Vec<IndexId>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Peeled {
    pub index: IndexId,
    /// Inner orders of the peeled prefix, exhausted lists dropped.
    pub first: Vec<TermOrder>,
    pub rest: Vec<TermOrder>,
}

/// Removes the outermost loop: the longest prefix of terms sharing the same
/// first index loses that index.
pub fn peel(order: &[TermOrder]) -> Result<Peeled> {
    let Some((_, head)) = order.first() else {
        return Err(Error::invalid("cannot peel an empty loop order"));
    };
    let Some(&index) = head.first() else {
        return Err(Error::invalid("cannot peel: first term has no loops left"));
    };
    let r = order
        .iter()
        .take_while(|(_, a)| a.first() == Some(&index))
        .count();
    let first = order[..r]
        .iter()
        .filter(|(_, a)| a.len() > 1)
        .map(|(t, a)| (*t, a[1..].to_vec()))
        .collect();
    Ok(Peeled {
        index,
        first,
        rest: order[r..].to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForestNode {
    Loop(LoopVertex),
    Term(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopVertex {
    pub index: IndexId,
    pub sparse: bool,
    /// CSF level iterated when sparse.
    pub level: Option<usize>,
    /// Terms in this subtree (contiguous in path order).
    pub terms: RangeInclusive<usize>,
    pub children: Vec<ForestNode>,
}

impl ForestNode {
    pub fn terms(&self) -> RangeInclusive<usize> {
        match self {
            ForestNode::Loop(v) => v.terms.clone(),
            ForestNode::Term(t) => *t..=*t,
        }
    }
}

/// Dense intermediate between a producer term and its consumer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Buffer {
    pub producer: usize,
    pub consumer: usize,
    /// Buffer modes, in the producer's loop order.
    pub indices: Vec<IndexId>,
    /// Loops enclosing both producer and consumer.
    pub common: Vec<IndexId>,
}

impl Buffer {
    pub fn order(&self) -> usize {
        self.indices.len()
    }

    pub fn size(&self, spec: &KernelSpec) -> usize {
        self.indices.iter().map(|&i| spec.dim(i)).product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusedLoopForest {
    roots: Vec<ForestNode>,
    buffers: Vec<Buffer>,
    order: LoopOrder,
}

impl FusedLoopForest {
    pub fn roots(&self) -> &[ForestNode] {
        &self.roots
    }

    pub fn buffers(&self) -> &[Buffer] {
        &self.buffers
    }

    pub fn order(&self) -> &LoopOrder {
        &self.order
    }

    /// Buffer written by `term`, if it is not the final term.
    pub fn buffer_of(&self, term: usize) -> Option<&Buffer> {
        self.buffers.iter().find(|b| b.producer == term)
    }

    /// Root-to-leaf index sequences per term.
    pub fn flatten(&self) -> LoopOrder {
        let n = self.order.len();
        let mut out = vec![Vec::new(); n];
        fn walk(nodes: &[ForestNode], stack: &mut Vec<IndexId>, out: &mut [Vec<IndexId>]) {
            for node in nodes {
                match node {
                    ForestNode::Term(t) => out[*t] = stack.clone(),
                    ForestNode::Loop(v) => {
                        stack.push(v.index);
                        walk(&v.children, stack, out);
                        stack.pop();
                    }
                }
            }
        }
        walk(&self.roots, &mut Vec::new(), &mut out);
        LoopOrder::new(out)
    }

    /// No vertex (including the virtual super-root) has two consecutive
    /// loop children over the same index.
    pub fn is_fully_fused(&self) -> bool {
        fn ok(nodes: &[ForestNode]) -> bool {
            nodes.windows(2).all(|w| match (&w[0], &w[1]) {
                (ForestNode::Loop(a), ForestNode::Loop(b)) => a.index != b.index,
                _ => true,
            }) && nodes.iter().all(|n| match n {
                ForestNode::Loop(v) => ok(&v.children),
                ForestNode::Term(_) => true,
            })
        }
        ok(&self.roots)
    }

    /// Loop vertices on the path from the root to `term`, outermost first.
    pub fn term_path(&self, term: usize) -> Vec<&LoopVertex> {
        let mut out = Vec::new();
        let mut nodes = &self.roots[..];
        'outer: loop {
            for n in nodes {
                if let ForestNode::Loop(v) = n {
                    if v.terms.contains(&term) {
                        out.push(v);
                        nodes = &v.children;
                        continue 'outer;
                    }
                }
            }
            return out;
        }
    }

    /// `(order, element count)` per buffer.
    pub fn buffer_dims(&self, spec: &KernelSpec) -> Vec<(usize, usize)> {
        self.buffers
            .iter()
            .map(|b| (b.order(), b.size(spec)))
            .collect()
    }

    /// Pseudo-code rendering of the loop nest.
    pub fn render(&self, spec: &KernelSpec, path: &ContractionPath) -> String {
        let mut out = String::new();
        self.render_nodes(spec, path, &self.roots, 0, &mut out);
        out
    }

    fn render_nodes(
        &self,
        spec: &KernelSpec,
        path: &ContractionPath,
        nodes: &[ForestNode],
        depth: usize,
        out: &mut String,
    ) {
        let pad = "  ".repeat(depth);
        for node in nodes {
            // reset buffers whose producer lives in this child but whose
            // consumer does not
            for b in &self.buffers {
                if node.terms().contains(&b.producer)
                    && !node.terms().contains(&b.consumer)
                    && b.common.len() == depth
                {
                    out.push_str(&format!("{}{} = 0\n", pad, intermediate_name(b.producer)));
                }
            }
            match node {
                ForestNode::Loop(v) => {
                    let name = spec.index_name(v.index);
                    match v.level {
                        Some(l) if v.sparse => out.push_str(&format!(
                            "{}for {} in {}.csf[{}]:\n",
                            pad,
                            name,
                            spec.sparse().name,
                            l
                        )),
                        _ => out.push_str(&format!(
                            "{}for {} in 0..{}:\n",
                            pad,
                            name,
                            spec.dim(v.index)
                        )),
                    }
                    self.render_nodes(spec, path, &v.children, depth + 1, out);
                }
                ForestNode::Term(t) => {
                    let term = &path.terms()[*t];
                    let operand = |o: Operand| -> String {
                        match o {
                            Operand::Input(i) => {
                                let tr = &spec.inputs()[i];
                                let n: Vec<&str> =
                                    tr.indices.iter().map(|&x| spec.index_name(x)).collect();
                                format!("{}[{}]", tr.name, n.join(","))
                            }
                            Operand::Intermediate(p) => self.buffer_text(spec, p),
                        }
                    };
                    let lhs = if *t + 1 == path.num_terms() {
                        let o = spec.output();
                        let n: Vec<&str> = o.indices.iter().map(|&x| spec.index_name(x)).collect();
                        format!("{}[{}]", o.name, n.join(","))
                    } else {
                        self.buffer_text(spec, *t)
                    };
                    out.push_str(&format!(
                        "{}{} += {} * {}\n",
                        pad,
                        lhs,
                        operand(term.lhs),
                        operand(term.rhs)
                    ));
                }
            }
        }
    }

    fn buffer_text(&self, spec: &KernelSpec, producer: usize) -> String {
        let b = self.buffer_of(producer).expect("intermediate has a buffer");
        if b.indices.is_empty() {
            intermediate_name(producer)
        } else {
            let n: Vec<&str> = b.indices.iter().map(|&x| spec.index_name(x)).collect();
            format!("{}[{}]", intermediate_name(producer), n.join(","))
        }
    }
}

/// Builds the fully-fused forest of `order` by iterated peeling.
///
/// `csf_order` lists the sparse tensor's indices root to leaf; a loop is
/// sparse when its index is one of them and its subtree contains a term that
/// reads the sparse tensor directly.
pub fn build_forest(
    path: &ContractionPath,
    order: &LoopOrder,
    csf_order: &[IndexId],
) -> Result<FusedLoopForest> {
    order.validate(path)?;
    let items: Vec<(usize, &[IndexId])> = order
        .terms()
        .iter()
        .enumerate()
        .map(|(t, a)| (t, &a[..]))
        .collect();
    let roots = build_level(path, csf_order, &items);
    let mut forest = FusedLoopForest {
        roots,
        buffers: Vec::new(),
        order: order.clone(),
    };
    let mut buffers = Vec::new();
    for x in 0..path.num_terms() {
        let Some(y) = path.consumer(x) else { continue };
        let common: Vec<IndexId> = forest
            .term_path(x)
            .iter()
            .take_while(|v| v.terms.contains(&y))
            .map(|v| v.index)
            .collect();
        let cset = IndexSet::from_ids(common.iter().copied());
        let keep = path.terms()[x]
            .out_indices
            .intersect(path.terms()[y].indices())
            .minus(cset);
        let indices = order
            .term(x)
            .iter()
            .copied()
            .filter(|&i| keep.contains(i))
            .collect();
        buffers.push(Buffer {
            producer: x,
            consumer: y,
            indices,
            common,
        });
    }
    forest.buffers = buffers;
    Ok(forest)
}

fn build_level(
    path: &ContractionPath,
    csf_order: &[IndexId],
    items: &[(usize, &[IndexId])],
) -> Vec<ForestNode> {
    let mut out = Vec::new();
    let mut p = 0;
    while p < items.len() {
        let (t, a) = items[p];
        let Some(&head) = a.first() else {
            out.push(ForestNode::Term(t));
            p += 1;
            continue;
        };
        let mut e = p + 1;
        while e < items.len() && items[e].1.first() == Some(&head) {
            e += 1;
        }
        let inner: Vec<(usize, &[IndexId])> =
            items[p..e].iter().map(|(t, a)| (*t, &a[1..])).collect();
        let children = build_level(path, csf_order, &inner);
        let terms = items[p].0..=items[e - 1].0;
        let level = csf_order.iter().position(|&i| i == head);
        let sparse = level.is_some() && terms.clone().any(|t| path.terms()[t].reads_sparse());
        out.push(ForestNode::Loop(LoopVertex {
            index: head,
            sparse,
            level: if sparse { level } else { None },
            terms,
            children,
        }));
        p = e;
    }
    out
}

/// Admissible orders of one term, in lexicographic index-id order.
pub fn term_orders(
    path: &ContractionPath,
    constraint: &SparseConstraint,
    term: usize,
) -> Vec<Vec<IndexId>> {
    let all: Vec<IndexId> = path.terms()[term].indices().iter().collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(all.len());
    fn rec(
        all: &[IndexId],
        placed: IndexSet,
        term: usize,
        constraint: &SparseConstraint,
        cur: &mut Vec<IndexId>,
        out: &mut Vec<Vec<IndexId>>,
    ) {
        if cur.len() == all.len() {
            out.push(cur.clone());
            return;
        }
        for &q in all {
            if placed.contains(q) || !constraint.allows(term, placed, q) {
                continue;
            }
            cur.push(q);
            rec(all, placed.with(q), term, constraint, cur, out);
            cur.pop();
        }
    }
    rec(&all, IndexSet::EMPTY, term, constraint, &mut cur, &mut out);
    out
}

/// Number of admissible orders: `prod |I_i|! / k_i!`.
pub fn count_orders(path: &ContractionPath, constraint: &SparseConstraint) -> u128 {
    let fact = |n: usize| (1..=n as u128).product::<u128>();
    (0..path.num_terms())
        .map(|t| fact(path.terms()[t].indices().len()) / fact(constraint.constrained(t).len()))
        .product()
}

/// Cartesian product of per-term admissible orders, first term most
/// significant (so the sequence is sorted by flattened order).
pub struct OrderIter {
    choices: Vec<Vec<Vec<IndexId>>>,
    odometer: Vec<usize>,
    done: bool,
}

impl OrderIter {
    pub fn new(path: &ContractionPath, constraint: &SparseConstraint) -> Self {
        let choices: Vec<_> = (0..path.num_terms())
            .map(|t| term_orders(path, constraint, t))
            .collect();
        let done = choices.iter().any(|c| c.is_empty());
        OrderIter {
            odometer: vec![0; choices.len()],
            choices,
            done,
        }
    }
}

impl Iterator for OrderIter {
    type Item = LoopOrder;

    fn next(&mut self) -> Option<LoopOrder> {
        if self.done {
            return None;
        }
        let order = LoopOrder::new(
            self.odometer
                .iter()
                .zip(&self.choices)
                .map(|(&k, c)| c[k].clone())
                .collect(),
        );
        let mut p = self.odometer.len();
        loop {
            if p == 0 {
                self.done = true;
                break;
            }
            p -= 1;
            self.odometer[p] += 1;
            if self.odometer[p] < self.choices[p].len() {
                break;
            }
            self.odometer[p] = 0;
        }
        Some(order)
    }
}

/// All admissible loop orders for `path`.
pub fn enumerate_orders(path: &ContractionPath, constraint: &SparseConstraint) -> Vec<LoopOrder> {
    OrderIter::new(path, constraint).collect()
}

impl fmt::Display for LoopOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|a| {
                format!(
                    "({})",
                    a.iter()
                        .map(|i| i.0.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::path::{enumerate_paths, PathTree};

    fn path_of(spec: &KernelSpec, text: &str) -> ContractionPath {
        ContractionPath::from_tree(spec, &PathTree::parse(spec, text).unwrap()).unwrap()
    }

    fn ids(spec: &KernelSpec, names: &str) -> Vec<IndexId> {
        names
            .split(',')
            .map(|n| spec.index_by_name(n).unwrap())
            .collect()
    }

    fn names(spec: &KernelSpec, ids: &[IndexId]) -> String {
        ids.iter()
            .map(|&i| spec.index_name(i))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn forest(spec: &KernelSpec, path: &str, order: &str) -> (ContractionPath, FusedLoopForest) {
        let p = path_of(spec, path);
        let o = LoopOrder::parse(spec, order).unwrap();
        let f = build_forest(&p, &o, &spec.sparse().indices).unwrap();
        (p, f)
    }

    #[test]
    fn peel_shared_head() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let order = vec![(0, ids(&spec, "i,j,k,s")), (1, ids(&spec, "i,j,s,r"))];
        let p = peel(&order).unwrap();
        assert_eq!(p.index, spec.index_by_name("i").unwrap());
        assert_eq!(
            p.first,
            vec![(0, ids(&spec, "j,k,s")), (1, ids(&spec, "j,s,r"))]
        );
        assert!(p.rest.is_empty());
    }

    #[test]
    fn peel_no_shared_head() {
        let spec = fixtures::ttmc4(3, 2);
        let order = vec![(0, ids(&spec, "i,j")), (1, ids(&spec, "k,l"))];
        let p = peel(&order).unwrap();
        assert_eq!(p.first, vec![(0, ids(&spec, "j"))]);
        assert_eq!(p.rest, vec![(1, ids(&spec, "k,l"))]);
    }

    #[test]
    fn peel_drops_exhausted() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let order = vec![(0, ids(&spec, "s")), (1, ids(&spec, "s"))];
        let p = peel(&order).unwrap();
        assert!(p.first.is_empty() && p.rest.is_empty());
        assert!(peel(&[]).is_err());
    }

    #[test]
    fn ttmc_vector_buffer() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let (_, f) = forest(&spec, "((T*V)*U)", "i,j,k,s;i,j,s,r");
        let b = &f.buffers()[0];
        assert_eq!(names(&spec, &b.indices), "s");
        assert_eq!(names(&spec, &b.common), "i,j");
        assert_eq!(f.buffer_dims(&spec), vec![(1, 3)]);
        assert_eq!(f.roots().len(), 1);
        assert!(f.is_fully_fused());
    }

    #[test]
    fn ttmc_scalar_buffer() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let (_, f) = forest(&spec, "((T*V)*U)", "i,j,s,k;i,j,s,r");
        assert_eq!(f.buffer_dims(&spec), vec![(0, 1)]);
        assert_eq!(names(&spec, &f.buffers()[0].common), "i,j,s");
    }

    #[test]
    fn ttmc_unfusable_path() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let (_, f) = forest(&spec, "((U*V)*T)", "j,k,r,s;i,j,k,r,s");
        assert_eq!(f.roots().len(), 2);
        assert_eq!(names(&spec, &f.buffers()[0].indices), "j,k,r,s");
        assert_eq!(f.buffer_dims(&spec)[0].0, 4);
        // j and k of the first term are dense loops
        let ForestNode::Loop(root) = &f.roots()[0] else {
            panic!()
        };
        assert!(!root.sparse);
        let ForestNode::Loop(second) = &f.roots()[1] else {
            panic!()
        };
        assert!(second.sparse);
    }

    #[test]
    fn ttmc4_end_to_end_buffers() {
        let spec = fixtures::ttmc4(3, 2);
        let (p, f) = forest(&spec, "(((T*W)*V)*U)", "i,j,k,l,t;i,j,k,s,t;i,j,r,s,t");
        assert_eq!(p.max_loop_depth(), 5);
        assert_eq!(names(&spec, &f.buffers()[0].indices), "t");
        assert_eq!(names(&spec, &f.buffers()[1].indices), "s,t");
    }

    #[test]
    fn forest_rejects_non_permutation() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let p = path_of(&spec, "((T*V)*U)");
        for bad in ["i,j,k;i,j,s,r", "i,j,k,s,s;i,j,s,r", "i,j,k,r;i,j,s,r"] {
            let o = LoopOrder::parse(&spec, bad).unwrap();
            assert!(
                build_forest(&p, &o, &spec.sparse().indices).is_err(),
                "{}",
                bad
            );
        }
    }

    #[test]
    fn exhausted_terms_separate_siblings() {
        // (i),(i,j),(i): the middle loop over j must not merge across the leaves
        let spec = crate::kernel::parse_kernel(
            "T[i,j]*A[i]*B[i]*C[i]->S[j]",
            &[("i", 2), ("j", 2)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
        .unwrap();
        for path in enumerate_paths(&spec).unwrap() {
            let cons = SparseConstraint::new(&path, &spec.sparse().indices);
            for order in enumerate_orders(&path, &cons) {
                let f = build_forest(&path, &order, &spec.sparse().indices).unwrap();
                assert_eq!(f.flatten(), order);
                assert!(f.is_fully_fused());
            }
        }
    }

    #[test]
    fn order_counts() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let p = path_of(&spec, "((T*V)*U)");
        let cons = SparseConstraint::new(&p, &spec.sparse().indices);
        assert_eq!(term_orders(&p, &cons, 0).len(), 4);
        assert_eq!(term_orders(&p, &cons, 1).len(), 12);
        assert_eq!(enumerate_orders(&p, &cons).len(), 48);
        assert_eq!(count_orders(&p, &cons), 48);

        let q = path_of(&spec, "((U*V)*T)");
        let cons = SparseConstraint::new(&q, &spec.sparse().indices);
        assert_eq!(term_orders(&q, &cons, 0).len(), 24);
        assert_eq!(term_orders(&q, &cons, 1).len(), 20);
    }

    #[test]
    fn dense_only_term_has_all_permutations() {
        let spec = fixtures::tttc4(3, 2);
        // A*B touches no sparse index: 4 indices, no restriction
        let p = path_of(&spec, "(((A*B)*C)*T)");
        let cons = SparseConstraint::new(&p, &spec.sparse().indices);
        assert!(cons.constrained(0).is_empty());
        assert_eq!(term_orders(&p, &cons, 0).len(), 24);
    }

    #[test]
    fn reconstruction_and_fusion_on_all_orders() {
        for spec in fixtures::all_small() {
            for path in enumerate_paths(&spec).unwrap() {
                let cons = SparseConstraint::new(&path, &spec.sparse().indices);
                let expected = count_orders(&path, &cons);
                if expected > 5000 {
                    continue;
                }
                let mut n = 0u128;
                for order in OrderIter::new(&path, &cons) {
                    n += 1;
                    cons.check(&order).unwrap();
                    let f = build_forest(&path, &order, &spec.sparse().indices).unwrap();
                    assert_eq!(f.flatten(), order);
                    assert!(f.is_fully_fused());
                    for b in f.buffers() {
                        let c = IndexSet::from_ids(b.common.iter().copied());
                        assert!(IndexSet::from_ids(b.indices.iter().copied())
                            .intersect(c)
                            .is_empty());
                    }
                }
                assert_eq!(n, expected);
            }
        }
    }

    #[test]
    fn render_vector_buffer_listing() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        let (p, f) = forest(&spec, "((T*V)*U)", "i,j,k,s;i,j,s,r");
        let expected = "\
for i in T.csf[0]:
  for j in T.csf[1]:
    X1 = 0
    for k in T.csf[2]:
      for s in 0..3:
        X1[s] += T[i,j,k] * V[k,s]
    for s in 0..3:
      for r in 0..2:
        S[i,r,s] += X1[s] * U[j,r]
";
        assert_eq!(f.render(&spec, &p), expected);
    }
}
