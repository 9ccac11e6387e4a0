//! Contraction paths: binary contraction trees over the kernel's inputs,
//! stored as the ordered list of pairwise terms.

use std::fmt;

use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::kernel::KernelSpec;

/// An operand of a pairwise term.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    /// Kernel input by position (0 is the sparse tensor).
    Input(usize),
    /// Intermediate produced by the term at this position.
    Intermediate(usize),
}

/// One pairwise contraction. `lhs` is the operand whose subtree holds the
/// sparse tensor when either does.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionTerm {
    pub lhs: Operand,
    pub rhs: Operand,
    pub lhs_indices: IndexSet,
    pub rhs_indices: IndexSet,
    pub out_indices: IndexSet,
    /// Inputs below this term, as a bitmask over input positions.
    pub leaves: u32,
}

impl ContractionTerm {
    /// Union of operand and result indices: the loop depth this term needs.
    pub fn indices(&self) -> IndexSet {
        self.lhs_indices
            .union(self.rhs_indices)
            .union(self.out_indices)
    }

    pub fn reads_sparse(&self) -> bool {
        self.lhs == Operand::Input(0)
    }

    /// True when the sparse tensor is below this term (directly or through
    /// an intermediate).
    pub fn sparse_derived(&self) -> bool {
        self.leaves & 1 != 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionPath {
    terms: Vec<ContractionTerm>,
    num_inputs: usize,
}

impl ContractionPath {
    pub fn terms(&self) -> &[ContractionTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// Term reading the result of `term`; `None` for the final term.
    pub fn consumer(&self, term: usize) -> Option<usize> {
        let me = Operand::Intermediate(term);
        self.terms.iter().position(|t| t.lhs == me || t.rhs == me)
    }

    /// Loop depth of the deepest term.
    pub fn max_loop_depth(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.indices().len())
            .max()
            .unwrap_or(0)
    }

    /// Builds a path from an explicit contraction tree, terms in left-first
    /// postorder.
    pub fn from_tree(spec: &KernelSpec, tree: &PathTree) -> Result<ContractionPath> {
        let n = spec.num_inputs();
        let mut seen = vec![false; n];
        tree.check_leaves(&mut seen)?;
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid(
                "contraction tree must use every input exactly once",
            ));
        }
        if let PathTree::Leaf(_) = tree {
            return Err(Error::invalid(
                "contraction tree needs at least one contraction",
            ));
        }
        let mut pairs = Vec::new();
        fn post(t: &PathTree, pairs: &mut Vec<(u32, u32)>) -> u32 {
            match t {
                PathTree::Leaf(i) => 1 << i,
                PathTree::Node(a, b) => {
                    let la = post(a, pairs);
                    let lb = post(b, pairs);
                    pairs.push((la, lb));
                    la | lb
                }
            }
        }
        post(tree, &mut pairs);
        build_from_leaf_pairs(spec, &pairs)
    }

    /// Human-readable form, e.g. `(T*V)->X1 (X1*U)->S`.
    pub fn describe(&self, spec: &KernelSpec) -> String {
        let name = |o: Operand| match o {
            Operand::Input(i) => spec.inputs()[i].name.clone(),
            Operand::Intermediate(t) => intermediate_name(t),
        };
        let last = self.terms.len() - 1;
        self.terms
            .iter()
            .enumerate()
            .map(|(p, t)| {
                let out = if p == last {
                    spec.output().name.clone()
                } else {
                    intermediate_name(p)
                };
                format!("({}*{})->{}", name(t.lhs), name(t.rhs), out)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Name used for the intermediate written by `term`.
pub fn intermediate_name(term: usize) -> String {
    format!("X{}", term + 1)
}

/// Explicit contraction tree over input positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathTree {
    Leaf(usize),
    Node(Box<PathTree>, Box<PathTree>),
}

impl PathTree {
    fn check_leaves(&self, seen: &mut [bool]) -> Result<()> {
        match self {
            PathTree::Leaf(i) => {
                if *i >= seen.len() || seen[*i] {
                    return Err(Error::invalid(
                        "contraction tree must use every input exactly once",
                    ));
                }
                seen[*i] = true;
                Ok(())
            }
            PathTree::Node(a, b) => {
                a.check_leaves(seen)?;
                b.check_leaves(seen)
            }
        }
    }

    /// Parses `((T*V)*U)` style trees using the kernel's tensor names.
    pub fn parse(spec: &KernelSpec, text: &str) -> Result<PathTree> {
        let toks: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let tree = parse_tree(spec, &toks, &mut pos)?;
        if pos != toks.len() {
            return Err(Error::invalid(format!(
                "unexpected input in path at offset {}",
                pos
            )));
        }
        Ok(tree)
    }
}

fn parse_tree(spec: &KernelSpec, toks: &[char], pos: &mut usize) -> Result<PathTree> {
    if toks.get(*pos) == Some(&'(') {
        *pos += 1;
        let a = parse_tree(spec, toks, pos)?;
        if toks.get(*pos) != Some(&'*') {
            return Err(Error::invalid("expected '*' in path"));
        }
        *pos += 1;
        let b = parse_tree(spec, toks, pos)?;
        if toks.get(*pos) != Some(&')') {
            return Err(Error::invalid("expected ')' in path"));
        }
        *pos += 1;
        Ok(PathTree::Node(Box::new(a), Box::new(b)))
    } else {
        let start = *pos;
        while *pos < toks.len() && (toks[*pos].is_alphanumeric() || toks[*pos] == '_') {
            *pos += 1;
        }
        let name: String = toks[start..*pos].iter().collect();
        let found = spec.inputs().iter().position(|t| t.name == name);
        found
            .map(PathTree::Leaf)
            .ok_or_else(|| Error::invalid(format!("unknown input tensor '{}' in path", name)))
    }
}

#[derive(Clone, Debug)]
struct Live {
    leaves: u32,
    indices: IndexSet,
    operand: Operand,
}

fn initial_live(spec: &KernelSpec) -> Vec<Live> {
    spec.inputs()
        .iter()
        .enumerate()
        .map(|(p, t)| Live {
            leaves: 1 << p,
            indices: t.index_set(),
            operand: Operand::Input(p),
        })
        .collect()
}

/// Contracts live operands `a` and `b` (positions in `live`), returning the
/// new term and updating `live`. The result is appended at the end.
fn contract(
    spec: &KernelSpec,
    live: &mut Vec<Live>,
    a: usize,
    b: usize,
    term_pos: usize,
) -> ContractionTerm {
    let (x, y) = (live[a].clone(), live[b].clone());
    live.remove(b.max(a));
    live.remove(b.min(a));
    let needed = live
        .iter()
        .fold(spec.output().index_set(), |acc, l| acc.union(l.indices));
    let out = x.indices.union(y.indices).intersect(needed);
    let x_first = if x.leaves & 1 != 0 {
        true
    } else if y.leaves & 1 != 0 {
        false
    } else {
        x.leaves.trailing_zeros() < y.leaves.trailing_zeros()
    };
    let (l, r) = if x_first { (x, y) } else { (y, x) };
    let term = ContractionTerm {
        lhs: l.operand,
        rhs: r.operand,
        lhs_indices: l.indices,
        rhs_indices: r.indices,
        out_indices: out,
        leaves: l.leaves | r.leaves,
    };
    live.push(Live {
        leaves: term.leaves,
        indices: out,
        operand: Operand::Intermediate(term_pos),
    });
    term
}

fn build_from_leaf_pairs(spec: &KernelSpec, pairs: &[(u32, u32)]) -> Result<ContractionPath> {
    let mut live = initial_live(spec);
    let mut terms = Vec::with_capacity(pairs.len());
    for &(la, lb) in pairs {
        let a = live.iter().position(|l| l.leaves == la);
        let b = live.iter().position(|l| l.leaves == lb);
        let (Some(a), Some(b)) = (a, b) else {
            return Err(Error::invalid(
                "contraction sequence references an unavailable operand",
            ));
        };
        let pos = terms.len();
        terms.push(contract(spec, &mut live, a, b, pos));
    }
    Ok(ContractionPath {
        terms,
        num_inputs: spec.num_inputs(),
    })
}

/// Lazy depth-first enumeration of all contraction paths.
///
/// At every step each unordered pair of live operands is contracted, so the
/// number of paths for `n` inputs is `C(n,2) * C(n-1,2) * ... * 1`.
pub struct PathIter<'a> {
    spec: &'a KernelSpec,
    stack: Vec<Frame>,
}

struct Frame {
    live: Vec<Live>,
    terms: Vec<ContractionTerm>,
    next_pair: usize,
}

impl<'a> PathIter<'a> {
    pub fn new(spec: &'a KernelSpec) -> Result<Self> {
        if spec.num_inputs() < 2 {
            return Err(Error::invalid("a kernel needs at least two input tensors"));
        }
        if spec.num_inputs() > 32 {
            return Err(Error::invalid("at most 32 input tensors are supported"));
        }
        Ok(PathIter {
            spec,
            stack: vec![Frame {
                live: initial_live(spec),
                terms: Vec::new(),
                next_pair: 0,
            }],
        })
    }
}

fn pair_at(n: usize, mut k: usize) -> Option<(usize, usize)> {
    for a in 0..n {
        let row = n - a - 1;
        if k < row {
            return Some((a, a + 1 + k));
        }
        k -= row;
    }
    None
}

impl Iterator for PathIter<'_> {
    type Item = ContractionPath;

    fn next(&mut self) -> Option<ContractionPath> {
        loop {
            let frame = self.stack.last_mut()?;
            let Some((a, b)) = pair_at(frame.live.len(), frame.next_pair) else {
                self.stack.pop();
                continue;
            };
            frame.next_pair += 1;
            let mut live = frame.live.clone();
            let mut terms = frame.terms.clone();
            let pos = terms.len();
            terms.push(contract(self.spec, &mut live, a, b, pos));
            if live.len() == 1 {
                return Some(ContractionPath {
                    terms,
                    num_inputs: self.spec.num_inputs(),
                });
            }
            self.stack.push(Frame {
                live,
                terms,
                next_pair: 0,
            });
        }
    }
}

/// All contraction paths of the kernel, in canonical enumeration order.
pub fn enumerate_paths(spec: &KernelSpec) -> Result<Vec<ContractionPath>> {
    Ok(PathIter::new(spec)?.collect())
}

/// Number of paths for `n` inputs: `T(n) = C(n,2) T(n-1)`, `T(2) = 1`.
pub fn path_count(n: usize) -> u128 {
    (2..=n as u128).map(|k| k * (k - 1) / 2).product()
}

/// Paths achieving the minimum maximum loop depth.
pub fn filter_min_depth(paths: Vec<ContractionPath>) -> Vec<ContractionPath> {
    let Some(best) = paths.iter().map(|p| p.max_loop_depth()).min() else {
        return paths;
    };
    paths
        .into_iter()
        .filter(|p| p.max_loop_depth() == best)
        .collect()
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Input(i) => write!(f, "in{}", i),
            Operand::Intermediate(t) => f.write_str(&intermediate_name(*t)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn counts_follow_recurrence() {
        assert_eq!(path_count(2), 1);
        assert_eq!(path_count(3), 3);
        assert_eq!(path_count(4), 18);
        assert_eq!(path_count(5), 180);
        assert_eq!(path_count(6), 2700);
        for n in 2..=6 {
            let spec = fixtures::chain_kernel(n);
            assert_eq!(enumerate_paths(&spec).unwrap().len() as u128, path_count(n));
        }
    }

    #[test]
    fn single_input_rejected() {
        let spec = crate::kernel::parse_kernel(
            "T[i,j]->S[i]",
            &[("i", 2), ("j", 2)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            enumerate_paths(&spec),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn find(spec: &KernelSpec, text: &str) -> ContractionPath {
        let tree = PathTree::parse(spec, text).unwrap();
        let path = ContractionPath::from_tree(spec, &tree).unwrap();
        assert!(
            enumerate_paths(spec).unwrap().contains(&path),
            "{} not enumerated",
            text
        );
        path
    }

    #[test]
    fn ttmc_depths() {
        let spec = fixtures::ttmc3(4, 4, 4, 2, 3);
        assert_eq!(find(&spec, "((T*V)*U)").max_loop_depth(), 4);
        assert_eq!(find(&spec, "((T*U)*V)").max_loop_depth(), 4);
        let uv = find(&spec, "((U*V)*T)");
        assert_eq!(uv.max_loop_depth(), 5);
        // the U*V intermediate keeps j,k,r,s
        assert_eq!(uv.terms()[0].out_indices.len(), 4);
        let filtered = filter_min_depth(enumerate_paths(&spec).unwrap());
        assert_eq!(filtered.len(), 2);
        assert!(!filtered.contains(&uv));
    }

    #[test]
    fn mttkrp_depth() {
        let spec = fixtures::mttkrp3(4, 4, 4, 3);
        let p = find(&spec, "((T*C)*B)");
        assert_eq!(p.max_loop_depth(), 4);
        assert!(p.terms()[0].reads_sparse());
    }

    #[test]
    fn ttmc4_filter_keeps_depth_five() {
        let spec = fixtures::ttmc4(3, 2);
        let filtered = filter_min_depth(enumerate_paths(&spec).unwrap());
        assert!(filtered.iter().all(|p| p.max_loop_depth() == 5));
        let p = find(&spec, "(((T*W)*V)*U)");
        assert!(filtered.contains(&p));
    }

    #[test]
    fn two_inputs_identity_filter() {
        let spec = fixtures::spmm(3, 3, 2);
        let paths = enumerate_paths(&spec).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(filter_min_depth(paths.clone()), paths);
    }

    /// Replays each path: intermediates are produced once and consumed once,
    /// and no index needed later is dropped.
    #[test]
    fn postorder_replay_invariants() {
        for spec in fixtures::all_small() {
            for path in enumerate_paths(&spec).unwrap() {
                let n = path.num_terms();
                assert_eq!(n + 1, spec.num_inputs());
                let mut consumed = vec![0; n];
                let mut used_inputs = vec![0; spec.num_inputs()];
                for (p, t) in path.terms().iter().enumerate() {
                    assert!(t.out_indices.is_subset(t.lhs_indices.union(t.rhs_indices)));
                    for o in [t.lhs, t.rhs] {
                        match o {
                            Operand::Input(i) => used_inputs[i] += 1,
                            Operand::Intermediate(q) => {
                                assert!(q < p, "consumed before produced");
                                consumed[q] += 1;
                            }
                        }
                    }
                    // every index of a later operand or the output is kept
                    let later: IndexSet = path.terms()[p + 1..]
                        .iter()
                        .flat_map(|u| [(u.lhs, u.lhs_indices), (u.rhs, u.rhs_indices)])
                        .filter(|(o, _)| !matches!(o, Operand::Intermediate(q) if *q <= p))
                        .fold(spec.output().index_set(), |acc, (_, s)| acc.union(s));
                    let dropped = t.lhs_indices.union(t.rhs_indices).minus(t.out_indices);
                    assert!(dropped.intersect(later).is_empty());
                }
                assert!(used_inputs.iter().all(|&c| c == 1));
                assert_eq!(consumed[n - 1], 0);
                assert!(consumed[..n - 1].iter().all(|&c| c == 1));
                assert_eq!(path.terms()[n - 1].out_indices, spec.output().index_set());
            }
        }
    }
}
