//! Runtime execution of fully-fused loop nests over a CSF tensor, with
//! buffer resets, dense micro-kernel offload and operation counting.
//!
//! Counting convention: every scalar multiply that feeds an accumulate
//! counts one operation for the multiply and one for the add, so a pairwise
//! term body counts 2 and an unfactorized body over `k` factors counts `k`
//! (`k - 1` multiplies and one add).

pub mod microkernel;
mod reference;

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::index::{IndexId, IndexSet};
use crate::kernel::KernelSpec;
use crate::loopnest::{build_forest, ForestNode, FusedLoopForest, LoopOrder, SparseConstraint};
use crate::path::{ContractionPath, Operand};
use crate::tensor::{CsfTensor, DenseTensor, SparseCoo};

pub use microkernel::{MicroKernels, Portable};
pub use reference::execute_unfactorized;

/// Kernel output: dense, or values on the sparse input's pattern.
#[derive(Clone, Debug, PartialEq)]
pub enum ExecOutput {
    Dense(DenseTensor),
    /// Coordinates in the output tensor's index order.
    Sparse(SparseCoo),
}

impl ExecOutput {
    pub fn max_abs(&self) -> f64 {
        match self {
            ExecOutput::Dense(d) => d.max_abs(),
            ExecOutput::Sparse(s) => s.entries().iter().fold(0.0, |m, (_, v)| m.max(v.abs())),
        }
    }

    /// Largest elementwise difference; infinite when shapes or sparsity
    /// patterns differ.
    pub fn max_abs_diff(&self, other: &ExecOutput) -> f64 {
        match (self, other) {
            (ExecOutput::Dense(a), ExecOutput::Dense(b)) if a.dims() == b.dims() => a
                .data()
                .iter()
                .zip(b.data())
                .fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            (ExecOutput::Sparse(a), ExecOutput::Sparse(b))
                if a.nnz() == b.nnz() && a.dims() == b.dims() =>
            {
                let mut m: f64 = 0.0;
                for ((ca, va), (cb, vb)) in a.entries().iter().zip(b.entries()) {
                    if ca != cb {
                        return f64::INFINITY;
                    }
                    m = m.max((va - vb).abs());
                }
                m
            }
            _ => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecStats {
    /// Scalar operations under the counting convention in the module docs.
    pub multiply_adds: u64,
    /// Resets per buffer, indexed by producer term.
    pub buffer_resets: Vec<u64>,
    pub peak_buffer_bytes: usize,
    pub elapsed: Duration,
}

/// Innermost dense work a hook hands to the micro-kernels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// Scaled-vector accumulate over one index, or two flattened ones.
    Vector(Vec<IndexId>),
    /// Outer-product update over `(rows, cols)`.
    Rank1 {
        rows: IndexId,
        cols: IndexId,
        lhs_rows: bool,
    },
    /// Loop over `outer` around a vector kernel on `inner`.
    Dense2d { outer: IndexId, inner: IndexId },
}

/// Offload of a term's independent trailing dense loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hook {
    /// Leading offloaded loops run as generated loops.
    pub loops: Vec<IndexId>,
    pub kernel: Kernel,
}

impl Hook {
    /// `loop(r)+vector(s,t)` style summary.
    pub fn describe(&self, spec: &KernelSpec) -> String {
        let n = |ids: &[IndexId]| {
            ids.iter()
                .map(|&i| spec.index_name(i))
                .collect::<Vec<_>>()
                .join(",")
        };
        let k = match &self.kernel {
            Kernel::Vector(ids) => format!("vector({})", n(ids)),
            Kernel::Rank1 { rows, cols, .. } => format!("rank1({})", n(&[*rows, *cols])),
            Kernel::Dense2d { outer, inner } => {
                format!("loop({})+vector({})", n(&[*outer]), n(&[*inner]))
            }
        };
        if self.loops.is_empty() {
            k
        } else {
            format!("loop({})+{}", n(&self.loops), k)
        }
    }

    fn depth(&self) -> usize {
        self.loops.len()
            + match &self.kernel {
                Kernel::Vector(ids) => ids.len(),
                _ => 2,
            }
    }
}

/// Debug hooks into buffer handling.
pub trait ExecObserver {
    fn buffer_reset(&mut self, _buffer: usize) {}

    /// Entry into the subtree that produces `buffer`, after resets.
    fn producer_entry(&mut self, _buffer: usize, _contents: &[f64]) {}
}

struct NoObserver;

impl ExecObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    /// Total intermediate-buffer budget.
    pub buffer_limit_bytes: Option<usize>,
    pub offload: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            buffer_limit_bytes: None,
            offload: true,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Src {
    Sparse,
    Input(usize),
    Buffer(usize),
    Output,
}

#[derive(Clone, Debug)]
struct Access {
    src: Src,
    strides: Vec<(IndexId, usize)>,
}

impl Access {
    fn stride(&self, i: IndexId) -> usize {
        self.strides
            .iter()
            .find(|(j, _)| *j == i)
            .map_or(0, |(_, s)| *s)
    }

    #[inline]
    fn offset(&self, coords: &[usize]) -> usize {
        self.strides.iter().map(|&(i, s)| coords[i.pos()] * s).sum()
    }
}

#[derive(Clone, Debug)]
enum Node {
    Loop {
        index: IndexId,
        level: Option<usize>,
        extent: usize,
        children: Vec<Child>,
    },
    Term(usize),
    Hook(usize),
}

#[derive(Clone, Debug)]
struct Child {
    resets: Vec<usize>,
    node: Node,
}

/// A prepared loop nest bound to concrete tensors.
pub struct ExecPlan<'a> {
    spec: KernelSpec,
    path: ContractionPath,
    forest: FusedLoopForest,
    csf: &'a CsfTensor,
    dense: Vec<&'a DenseTensor>,
    hooks: Vec<Option<Hook>>,
    program: Vec<Child>,
    access: Vec<[Access; 3]>,
    buffer_sizes: Vec<usize>,
    /// Sparse output written at the current leaf instead of by lookup.
    direct_sparse_out: bool,
    kernels: Box<dyn MicroKernels>,
}

fn rowmajor_access(src: Src, indices: &[IndexId], spec: &KernelSpec) -> Access {
    let dims: Vec<usize> = indices.iter().map(|&i| spec.dim(i)).collect();
    let strides = crate::tensor::row_major_strides(&dims);
    Access {
        src,
        strides: indices.iter().copied().zip(strides).collect(),
    }
}

/// CSF level order of the sparse tensor as kernel indices.
pub fn csf_index_order(spec: &KernelSpec, csf: &CsfTensor) -> Vec<IndexId> {
    csf.mode_order()
        .iter()
        .map(|&m| spec.sparse().indices[m])
        .collect()
}

fn check_inputs(spec: &KernelSpec, csf: &CsfTensor, dense: &[&DenseTensor]) -> Result<()> {
    let sparse = spec.sparse();
    if csf.order() != sparse.indices.len() {
        return Err(Error::invalid(format!(
            "sparse tensor has order {}, kernel expects {}",
            csf.order(),
            sparse.indices.len()
        )));
    }
    for (l, &i) in csf_index_order(spec, csf).iter().enumerate() {
        if csf.level_dims()[l] != spec.dim(i) {
            return Err(Error::invalid(format!(
                "sparse tensor mode {} has size {}, kernel expects {}",
                spec.index_name(i),
                csf.level_dims()[l],
                spec.dim(i)
            )));
        }
    }
    if dense.len() + 1 != spec.num_inputs() {
        return Err(Error::invalid(format!(
            "expected {} dense tensors, got {}",
            spec.num_inputs() - 1,
            dense.len()
        )));
    }
    for (k, d) in dense.iter().enumerate() {
        let want = spec.shape_of(k + 1);
        if d.dims() != want.as_slice() {
            return Err(Error::invalid(format!(
                "tensor {} has shape {:?}, kernel expects {:?}",
                spec.inputs()[k + 1].name,
                d.dims(),
                want
            )));
        }
    }
    Ok(())
}

/// Checks that sparse loops on every root-to-leaf path iterate CSF levels
/// 0, 1, 2, ... without gaps.
fn check_levels(forest: &FusedLoopForest, num_terms: usize) -> Result<()> {
    for t in 0..num_terms {
        let levels: Vec<usize> = forest
            .term_path(t)
            .iter()
            .filter(|v| v.sparse)
            .filter_map(|v| v.level)
            .collect();
        if levels.iter().enumerate().any(|(k, &l)| k != l) {
            return Err(Error::UnsupportedOrder(format!(
                "term {} iterates CSF levels {:?}, which skips levels",
                t + 1,
                levels
            )));
        }
    }
    Ok(())
}

/// Independent trailing dense loops of term `t` (outermost first).
pub fn trailing_dense_loops(forest: &FusedLoopForest, t: usize) -> Vec<IndexId> {
    let path = forest.term_path(t);
    let n = path
        .iter()
        .rev()
        .take_while(|v| !v.sparse && v.terms.start() == v.terms.end())
        .count();
    path[path.len() - n..].iter().map(|v| v.index).collect()
}

fn choose_hook(spec: &KernelSpec, acc: &[Access; 3], loops: &[IndexId]) -> Option<Hook> {
    let p = loops.len();
    if p == 0 {
        return None;
    }
    if p == 1 {
        return Some(Hook {
            loops: Vec::new(),
            kernel: Kernel::Vector(loops.to_vec()),
        });
    }
    let (a, b) = (loops[p - 2], loops[p - 1]);
    let nb = spec.dim(b);
    let flat = acc.iter().all(|x| x.stride(a) == nb * x.stride(b));
    let [lhs, rhs, _] = acc;
    let kernel = if flat {
        Kernel::Vector(vec![a, b])
    } else if lhs.stride(b) == 0 && rhs.stride(a) == 0 {
        Kernel::Rank1 {
            rows: a,
            cols: b,
            lhs_rows: true,
        }
    } else if lhs.stride(a) == 0 && rhs.stride(b) == 0 {
        Kernel::Rank1 {
            rows: a,
            cols: b,
            lhs_rows: false,
        }
    } else {
        Kernel::Dense2d { outer: a, inner: b }
    };
    Some(Hook {
        loops: loops[..p - 2].to_vec(),
        kernel,
    })
}

/// Binds a path and loop order to tensors: validates shapes and the order,
/// builds the forest, allocates buffers and assigns offload hooks.
pub fn prepare<'a>(
    spec: &KernelSpec,
    path: &ContractionPath,
    order: &LoopOrder,
    csf: &'a CsfTensor,
    dense: &[&'a DenseTensor],
    opts: &PrepareOptions,
) -> Result<ExecPlan<'a>> {
    check_inputs(spec, csf, dense)?;
    let csf_order = csf_index_order(spec, csf);
    order.validate(path)?;
    SparseConstraint::new(path, &csf_order)
        .check(order)
        .map_err(|e| Error::UnsupportedOrder(e.to_string()))?;
    let forest = build_forest(path, order, &csf_order)?;
    check_levels(&forest, path.num_terms())?;

    let n = path.num_terms();
    let buffer_sizes: Vec<usize> = (0..n)
        .map(|t| forest.buffer_of(t).map_or(0, |b| b.size(spec)))
        .collect();
    let bytes: usize = buffer_sizes
        .iter()
        .map(|s| s.saturating_mul(8))
        .fold(0, usize::saturating_add);
    if let Some(limit) = opts.buffer_limit_bytes {
        if bytes > limit {
            return Err(Error::Resource(format!(
                "intermediate buffers need {} bytes, limit is {}",
                bytes, limit
            )));
        }
    }

    let operand_access = |o: Operand| -> Access {
        match o {
            Operand::Input(0) => Access {
                src: Src::Sparse,
                strides: Vec::new(),
            },
            Operand::Input(i) => {
                rowmajor_access(Src::Input(i - 1), &spec.inputs()[i].indices, spec)
            }
            Operand::Intermediate(p) => rowmajor_access(
                Src::Buffer(p),
                &forest.buffer_of(p).expect("buffer").indices,
                spec,
            ),
        }
    };
    let mut access = Vec::with_capacity(n);
    for (t, term) in path.terms().iter().enumerate() {
        let out = if t + 1 == n {
            if spec.output_sparse() {
                Access {
                    src: Src::Output,
                    strides: Vec::new(),
                }
            } else {
                rowmajor_access(Src::Output, &spec.output().indices, spec)
            }
        } else {
            rowmajor_access(
                Src::Buffer(t),
                &forest.buffer_of(t).expect("buffer").indices,
                spec,
            )
        };
        access.push([operand_access(term.lhs), operand_access(term.rhs), out]);
    }

    let hooks: Vec<Option<Hook>> = (0..n)
        .map(|t| {
            if !opts.offload || (t + 1 == n && spec.output_sparse()) {
                return None;
            }
            choose_hook(spec, &access[t], &trailing_dense_loops(&forest, t))
        })
        .collect();

    let direct_sparse_out = spec.output_sparse() && {
        let levels = forest.term_path(n - 1).iter().filter(|v| v.sparse).count();
        levels == csf.order()
    };

    let path_len: Vec<usize> = (0..n).map(|t| forest.term_path(t).len()).collect();
    let program = compile(spec, &forest, forest.roots(), 0, &hooks, &path_len);

    Ok(ExecPlan {
        spec: spec.clone(),
        path: path.clone(),
        forest,
        csf,
        dense: dense.to_vec(),
        hooks,
        program,
        access,
        buffer_sizes,
        direct_sparse_out,
        kernels: Box::new(Portable),
    })
}

fn compile(
    spec: &KernelSpec,
    forest: &FusedLoopForest,
    nodes: &[ForestNode],
    depth: usize,
    hooks: &[Option<Hook>],
    path_len: &[usize],
) -> Vec<Child> {
    nodes
        .iter()
        .map(|node| {
            let range = node.terms();
            let resets = forest
                .buffers()
                .iter()
                .filter(|b| {
                    b.common.len() == depth
                        && range.contains(&b.producer)
                        && !range.contains(&b.consumer)
                })
                .map(|b| b.producer)
                .collect();
            let node = match node {
                ForestNode::Term(t) => Node::Term(*t),
                ForestNode::Loop(v) => {
                    let t = *v.terms.start();
                    let hooked = v.terms.start() == v.terms.end()
                        && hooks[t]
                            .as_ref()
                            .is_some_and(|h| path_len[t] - h.depth() == depth);
                    if hooked {
                        Node::Hook(t)
                    } else {
                        Node::Loop {
                            index: v.index,
                            level: if v.sparse { v.level } else { None },
                            extent: spec.dim(v.index),
                            children: compile(
                                spec,
                                forest,
                                &v.children,
                                depth + 1,
                                hooks,
                                path_len,
                            ),
                        }
                    }
                }
            };
            Child { resets, node }
        })
        .collect()
}

impl<'a> ExecPlan<'a> {
    pub fn forest(&self) -> &FusedLoopForest {
        &self.forest
    }

    pub fn path(&self) -> &ContractionPath {
        &self.path
    }

    pub fn hooks(&self) -> &[Option<Hook>] {
        &self.hooks
    }

    /// Element count of each term's buffer (0 for the final term).
    pub fn buffer_sizes(&self) -> &[usize] {
        &self.buffer_sizes
    }

    pub fn buffer_bytes(&self) -> usize {
        self.buffer_sizes.iter().sum::<usize>() * 8
    }

    /// Swaps in other micro-kernel implementations.
    pub fn set_kernels(&mut self, kernels: Box<dyn MicroKernels>) {
        self.kernels = kernels;
    }

    pub fn hook_summary(&self) -> Vec<String> {
        self.hooks
            .iter()
            .map(|h| {
                h.as_ref()
                    .map_or_else(|| "none".to_string(), |h| h.describe(&self.spec))
            })
            .collect()
    }

    pub fn execute(&self) -> (ExecOutput, ExecStats) {
        self.execute_observed(&mut NoObserver)
    }

    pub fn execute_observed(&self, observer: &mut dyn ExecObserver) -> (ExecOutput, ExecStats) {
        let start = Instant::now();
        let n = self.path.num_terms();
        let out_len = if self.spec.output_sparse() {
            self.csf.nnz()
        } else {
            self.spec
                .output()
                .indices
                .iter()
                .map(|&i| self.spec.dim(i))
                .product()
        };
        let mut run = Runner {
            plan: self,
            coords: vec![0; self.spec.num_indices()],
            node: vec![0; self.csf.order()],
            buffers: self.buffer_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            out: vec![0.0; out_len],
            ops: 0,
            resets: vec![0; n],
            observer,
            level_coords: vec![0; self.csf.order()],
            csf_order: csf_index_order(&self.spec, self.csf),
        };
        run.nodes(&self.program);
        let stats = ExecStats {
            multiply_adds: run.ops,
            buffer_resets: run.resets,
            peak_buffer_bytes: self.buffer_bytes(),
            elapsed: start.elapsed(),
        };
        let output = if self.spec.output_sparse() {
            ExecOutput::Sparse(sparse_output(&self.spec, self.csf, run.out))
        } else {
            let dims = self
                .spec
                .output()
                .indices
                .iter()
                .map(|&i| self.spec.dim(i))
                .collect();
            ExecOutput::Dense(DenseTensor::new(dims, run.out).expect("output size"))
        };
        (output, stats)
    }
}

/// Leaf-aligned values on the sparse input's pattern, as a COO tensor in the
/// output's index order.
pub(crate) fn sparse_output(spec: &KernelSpec, csf: &CsfTensor, values: Vec<f64>) -> SparseCoo {
    let csf_order = csf_index_order(spec, csf);
    let out_idx = &spec.output().indices;
    let place: Vec<usize> = out_idx
        .iter()
        .map(|i| {
            csf_order
                .iter()
                .position(|j| j == i)
                .expect("output index is sparse")
        })
        .collect();
    let entries = csf
        .leaves()
        .into_iter()
        .zip(values)
        .map(|((lc, _), v)| (place.iter().map(|&l| lc[l]).collect(), v))
        .collect();
    let dims = out_idx.iter().map(|&i| spec.dim(i)).collect();
    SparseCoo::new(dims, entries).expect("pattern coordinates are valid")
}

struct Runner<'p, 'a, 'o> {
    plan: &'p ExecPlan<'a>,
    coords: Vec<usize>,
    node: Vec<usize>,
    buffers: Vec<Vec<f64>>,
    out: Vec<f64>,
    ops: u64,
    resets: Vec<u64>,
    observer: &'o mut dyn ExecObserver,
    level_coords: Vec<usize>,
    csf_order: Vec<IndexId>,
}

impl Runner<'_, '_, '_> {
    fn nodes(&mut self, children: &[Child]) {
        for c in children {
            for &b in &c.resets {
                self.buffers[b].fill(0.0);
                self.resets[b] += 1;
                self.observer.buffer_reset(b);
                self.observer.producer_entry(b, &self.buffers[b]);
            }
            self.node(&c.node);
        }
    }

    fn node(&mut self, node: &Node) {
        match node {
            Node::Term(t) => self.body(*t),
            Node::Hook(t) => self.hook(*t),
            Node::Loop {
                index,
                level,
                extent,
                children,
            } => match level {
                Some(l) => {
                    let parent = if *l == 0 { 0 } else { self.node[l - 1] };
                    let csf = self.plan.csf;
                    for p in csf.children(*l, parent) {
                        self.node[*l] = p;
                        self.coords[index.pos()] = csf.idx(*l)[p];
                        self.nodes(children);
                    }
                }
                None => {
                    for x in 0..*extent {
                        self.coords[index.pos()] = x;
                        self.nodes(children);
                    }
                }
            },
        }
    }

    fn leaf_value(&self) -> f64 {
        self.plan.csf.values()[self.node[self.plan.csf.order() - 1]]
    }

    #[inline]
    fn read(&self, a: &Access) -> f64 {
        match a.src {
            Src::Sparse => self.leaf_value(),
            Src::Input(i) => self.plan.dense[i].data()[a.offset(&self.coords)],
            Src::Buffer(p) => self.buffers[p][a.offset(&self.coords)],
            Src::Output => unreachable!("output is never read"),
        }
    }

    fn sparse_out_pos(&mut self) -> Option<usize> {
        if self.plan.direct_sparse_out {
            return Some(self.node[self.plan.csf.order() - 1]);
        }
        for (l, i) in self.csf_order.iter().enumerate() {
            self.level_coords[l] = self.coords[i.pos()];
        }
        self.plan.csf.locate(&self.level_coords)
    }

    fn body(&mut self, t: usize) {
        let [lhs, rhs, out] = &self.plan.access[t];
        let v = self.read(lhs) * self.read(rhs);
        self.ops += 2;
        match out.src {
            Src::Buffer(b) => self.buffers[b][out.offset(&self.coords)] += v,
            Src::Output if !self.plan.spec.output_sparse() => {
                self.out[out.offset(&self.coords)] += v
            }
            Src::Output => {
                if let Some(p) = self.sparse_out_pos() {
                    self.out[p] += v;
                }
            }
            _ => unreachable!("results go to a buffer or the output"),
        }
    }

    fn hook(&mut self, t: usize) {
        let hook = self.plan.hooks[t].as_ref().expect("hooked term");
        self.hook_loops(t, hook, 0);
    }

    fn hook_loops(&mut self, t: usize, hook: &Hook, k: usize) {
        if k < hook.loops.len() {
            let i = hook.loops[k];
            for x in 0..self.plan.spec.dim(i) {
                self.coords[i.pos()] = x;
                self.hook_loops(t, hook, k + 1);
            }
            return;
        }
        let spec = &self.plan.spec;
        let [lhs, rhs, out] = &self.plan.access[t];
        let inner: Vec<IndexId> = match &hook.kernel {
            Kernel::Vector(ids) => ids.clone(),
            Kernel::Rank1 { rows, cols, .. } => vec![*rows, *cols],
            Kernel::Dense2d { outer, inner } => vec![*outer, *inner],
        };
        for i in &inner {
            self.coords[i.pos()] = 0;
        }
        let scalar = [if lhs.src == Src::Sparse {
            self.leaf_value()
        } else {
            0.0
        }];
        let (l0, r0, o0) = (
            lhs.offset(&self.coords),
            rhs.offset(&self.coords),
            out.offset(&self.coords),
        );
        let mut dst = match out.src {
            Src::Buffer(b) => std::mem::take(&mut self.buffers[b]),
            _ => std::mem::take(&mut self.out),
        };
        {
            let view = |a: &Access, off: usize| -> &[f64] {
                match a.src {
                    Src::Sparse => &scalar,
                    Src::Input(i) => &self.plan.dense[i].data()[off..],
                    Src::Buffer(p) => &self.buffers[p][off..],
                    Src::Output => unreachable!("output is never read"),
                }
            };
            let (lv, rv) = (view(lhs, l0), view(rhs, r0));
            let o = &mut dst[o0..];
            let k = &self.plan.kernels;
            match &hook.kernel {
                Kernel::Vector(ids) => {
                    let last = *ids.last().expect("vector index");
                    let n: usize = ids.iter().map(|&i| spec.dim(i)).product();
                    k.vector(
                        n,
                        o,
                        out.stride(last),
                        lv,
                        lhs.stride(last),
                        rv,
                        rhs.stride(last),
                    );
                    self.ops += 2 * n as u64;
                }
                Kernel::Rank1 {
                    rows,
                    cols,
                    lhs_rows,
                } => {
                    let (m, n) = (spec.dim(*rows), spec.dim(*cols));
                    let (sm, sn) = (out.stride(*rows), out.stride(*cols));
                    if *lhs_rows {
                        k.rank1(
                            m,
                            n,
                            o,
                            sm,
                            sn,
                            lv,
                            lhs.stride(*rows),
                            rv,
                            rhs.stride(*cols),
                        );
                    } else {
                        k.rank1(
                            m,
                            n,
                            o,
                            sm,
                            sn,
                            rv,
                            rhs.stride(*rows),
                            lv,
                            lhs.stride(*cols),
                        );
                    }
                    self.ops += 2 * (m * n) as u64;
                }
                Kernel::Dense2d { outer, inner } => {
                    let (m, n) = (spec.dim(*outer), spec.dim(*inner));
                    let (so, sl, sr) = (out.stride(*outer), lhs.stride(*outer), rhs.stride(*outer));
                    for x in 0..m {
                        k.vector(
                            n,
                            &mut o[x * so..],
                            out.stride(*inner),
                            &lv[x * sl..],
                            lhs.stride(*inner),
                            &rv[x * sr..],
                            rhs.stride(*inner),
                        );
                    }
                    self.ops += 2 * (m * n) as u64;
                }
            }
        }
        match out.src {
            Src::Buffer(b) => self.buffers[b] = dst,
            _ => self.out = dst,
        }
    }
}

/// Predicted operation count of `order`: per term, 2 × (CSF nodes at the
/// deepest enclosing sparse level) × (product of enclosing dense extents).
pub fn flops_estimate(
    spec: &KernelSpec,
    path: &ContractionPath,
    order: &LoopOrder,
    csf: &CsfTensor,
) -> Result<u64> {
    let csf_order = csf_index_order(spec, csf);
    let forest = build_forest(path, order, &csf_order)?;
    check_levels(&forest, path.num_terms())?;
    let mut total = 0u64;
    for t in 0..path.num_terms() {
        let vs = forest.term_path(t);
        let depth = vs.iter().filter(|v| v.sparse).count();
        let mut n = if depth == 0 {
            1
        } else {
            csf.nnz_at_level(depth)? as u64
        };
        for v in vs.iter().filter(|v| !v.sparse) {
            n = n.saturating_mul(spec.dim(v.index) as u64);
        }
        total = total.saturating_add(2 * n);
    }
    Ok(total)
}

/// Builds the CSF of `coo` for the kernel's sparse tensor, levels ordered by
/// `csf_order` (default: the tensor's own index order).
pub fn build_sparse_input(
    spec: &KernelSpec,
    coo: &SparseCoo,
    csf_order: Option<&[IndexId]>,
) -> Result<CsfTensor> {
    let sparse = spec.sparse();
    let dims: Vec<usize> = sparse.indices.iter().map(|&i| spec.dim(i)).collect();
    if coo.dims() != dims.as_slice() {
        return Err(Error::invalid(format!(
            "sparse tensor has shape {:?}, kernel expects {:?}",
            coo.dims(),
            dims
        )));
    }
    let modes: Vec<usize> = match csf_order {
        None => (0..sparse.indices.len()).collect(),
        Some(order) => {
            if IndexSet::from_ids(order.iter().copied()) != sparse.index_set()
                || order.len() != sparse.indices.len()
            {
                return Err(Error::invalid(
                    "CSF order must be a permutation of the sparse tensor's indices",
                ));
            }
            order
                .iter()
                .map(|i| sparse.indices.iter().position(|j| j == i).expect("checked"))
                .collect()
        }
    };
    CsfTensor::build(coo, &modes)
}

impl fmt::Debug for ExecPlan<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecPlan")
            .field("path", &self.path.describe(&self.spec))
            .field("hooks", &self.hook_summary())
            .field("buffer_sizes", &self.buffer_sizes)
            .finish()
    }
}

#[cfg(test)]
mod tests;
