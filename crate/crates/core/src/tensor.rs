//! Dense tensors, coordinate-list sparse tensors and the compressed sparse
//! fiber (CSF) tree.
//!
//! All tensors here are shape-only: the mapping from modes to kernel indices
//! is carried by the kernel description, positionally.

use crate::error::{Error, Result};

/// Row-major dense tensor of `f64` (last mode fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid("dense tensor dimensions must be positive"));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::invalid(format!(
                "dense tensor of shape {:?} needs {} values, got {}",
                dims,
                len,
                data.len()
            )));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        DenseTensor {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.dims)
    }

    pub fn offset(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        let mut off = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            debug_assert!(c < d);
            off = off * d + c;
        }
        off
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.data[self.offset(coords)]
    }

    pub fn set(&mut self, coords: &[usize], value: f64) {
        let off = self.offset(coords);
        self.data[off] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for m in (0..dims.len().saturating_sub(1)).rev() {
        strides[m] = strides[m + 1] * dims[m + 1];
    }
    strides
}

/// Sparse tensor as a list of `(coordinates, value)` entries.
///
/// Construction normalizes: entries are sorted lexicographically and
/// duplicate coordinates are summed. Explicit zeros are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoo {
    dims: Vec<usize>,
    entries: Vec<(Vec<usize>, f64)>,
}

impl SparseCoo {
    pub fn new(dims: Vec<usize>, mut entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("sparse tensor must have at least one mode"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("sparse tensor dimensions must be positive"));
        }
        for (coords, _) in &entries {
            if coords.len() != dims.len() {
                return Err(Error::invalid(format!(
                    "coordinate {:?} has {} modes, tensor has {}",
                    coords,
                    coords.len(),
                    dims.len()
                )));
            }
            if let Some(m) = coords.iter().zip(&dims).position(|(c, d)| c >= d) {
                return Err(Error::invalid(format!(
                    "coordinate {:?} out of bounds in mode {} (dimension {})",
                    coords, m, dims[m]
                )));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Vec<usize>, f64)> = Vec::with_capacity(entries.len());
        for (coords, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == coords => last.1 += v,
                _ => merged.push((coords, v)),
            }
        }
        Ok(SparseCoo {
            dims,
            entries: merged,
        })
    }

    pub fn empty(dims: Vec<usize>) -> Result<Self> {
        SparseCoo::new(dims, Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    /// Drops explicitly stored zeros.
    pub fn prune_zeros(mut self) -> Self {
        self.entries.retain(|(_, v)| *v != 0.0);
        self
    }

    /// Reorders modes so that new mode `l` is old mode `mode_order[l]`.
    pub fn permuted(&self, mode_order: &[usize]) -> Result<SparseCoo> {
        check_permutation(mode_order, self.order())?;
        let dims = mode_order.iter().map(|&m| self.dims[m]).collect();
        let entries = self
            .entries
            .iter()
            .map(|(c, v)| (mode_order.iter().map(|&m| c[m]).collect(), *v))
            .collect();
        SparseCoo::new(dims, entries)
    }

    /// Dense copy; meant for small tensors in tests and oracles.
    pub fn to_dense(&self) -> DenseTensor {
        let mut d = DenseTensor::zeros(self.dims.clone());
        for (c, v) in &self.entries {
            let off = d.offset(c);
            d.data[off] += v;
        }
        d
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::invalid(format!(
            "mode order {:?} is not a permutation of {} modes",
            order, n
        )));
    }
    for &m in order {
        if m >= n || seen[m] {
            return Err(Error::invalid(format!(
                "mode order {:?} is not a permutation of {} modes",
                order, n
            )));
        }
        seen[m] = true;
    }
    Ok(())
}

/// Compressed sparse fiber tree.
///
/// Level `l` stores mode `mode_order[l]`. `idx[l][p]` is the coordinate of
/// node `p` at level `l`; for non-leaf levels the children of node `p` are
/// `ptr[l][p]..ptr[l][p + 1]` at level `l + 1`. Leaves carry `values`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsfTensor {
    mode_order: Vec<usize>,
    dims: Vec<usize>,
    idx: Vec<Vec<usize>>,
    ptr: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl CsfTensor {
    /// Builds the tree with root-to-leaf order `mode_order` (positions into
    /// the COO tensor's modes).
    pub fn build(coo: &SparseCoo, mode_order: &[usize]) -> Result<CsfTensor> {
        let order = coo.order();
        check_permutation(mode_order, order)?;
        let dims: Vec<usize> = mode_order.iter().map(|&m| coo.dims[m]).collect();

        let mut rows: Vec<(Vec<usize>, f64)> = coo
            .entries
            .iter()
            .map(|(c, v)| (mode_order.iter().map(|&m| c[m]).collect(), *v))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));

        let mut idx: Vec<Vec<usize>> = vec![Vec::new(); order];
        let mut ptr: Vec<Vec<usize>> = vec![Vec::new(); order - 1];
        let mut values = Vec::with_capacity(rows.len());
        let mut prev: Option<&[usize]> = None;
        for (coords, v) in &rows {
            // first level whose prefix differs from the previous leaf
            let start = match prev {
                None => 0,
                Some(p) => p
                    .iter()
                    .zip(coords)
                    .position(|(a, b)| a != b)
                    .unwrap_or(order - 1),
            };
            for l in start..order {
                if l + 1 < order {
                    ptr[l].push(idx[l + 1].len());
                }
                idx[l].push(coords[l]);
            }
            values.push(*v);
            prev = Some(coords);
        }
        for l in 0..order - 1 {
            ptr[l].push(idx[l + 1].len());
        }
        Ok(CsfTensor {
            mode_order: mode_order.to_vec(),
            dims,
            idx,
            ptr,
            values,
        })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn mode_order(&self) -> &[usize] {
        &self.mode_order
    }

    /// Dimension per level.
    pub fn level_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn idx(&self, level: usize) -> &[usize] {
        &self.idx[level]
    }

    /// Child pointers of a non-leaf level.
    pub fn ptr(&self, level: usize) -> &[usize] {
        &self.ptr[level]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of nodes at depth `k` (1-based), i.e. the number of distinct
    /// length-`k` coordinate prefixes.
    pub fn nnz_at_level(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.order() {
            return Err(Error::invalid(format!(
                "level {} out of range 1..={}",
                k,
                self.order()
            )));
        }
        Ok(self.idx[k - 1].len())
    }

    /// Node range at `level` below `parent` (the node at `level - 1`);
    /// `parent` is ignored at the root.
    #[inline]
    pub fn children(&self, level: usize, parent: usize) -> std::ops::Range<usize> {
        if level == 0 {
            0..self.idx[0].len()
        } else {
            let p = &self.ptr[level - 1];
            p[parent]..p[parent + 1]
        }
    }

    /// Leaf position of a full coordinate given in level order.
    pub fn locate(&self, level_coords: &[usize]) -> Option<usize> {
        debug_assert_eq!(level_coords.len(), self.order());
        let mut parent = 0;
        for (l, &c) in level_coords.iter().enumerate() {
            let range = self.children(l, parent);
            let slice = &self.idx[l][range.clone()];
            let off = slice.binary_search(&c).ok()?;
            parent = range.start + off;
        }
        Some(parent)
    }

    /// Depth-first leaf traversal with coordinates in level order.
    pub fn leaves(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        let mut path = vec![0usize; self.order()];
        self.walk(0, 0, &mut path, &mut out);
        out
    }

    fn walk(
        &self,
        level: usize,
        parent: usize,
        path: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        for p in self.children(level, parent) {
            path[level] = self.idx[level][p];
            if level + 1 == self.order() {
                out.push((path.clone(), self.values[p]));
            } else {
                self.walk(level + 1, p, path, out);
            }
        }
    }

    /// Converts back to coordinate form in the original mode layout.
    pub fn to_coo(&self) -> SparseCoo {
        let order = self.order();
        let mut dims = vec![0; order];
        for (l, &m) in self.mode_order.iter().enumerate() {
            dims[m] = self.dims[l];
        }
        let entries = self
            .leaves()
            .into_iter()
            .map(|(lc, v)| {
                let mut c = vec![0; order];
                for (l, &m) in self.mode_order.iter().enumerate() {
                    c[m] = lc[l];
                }
                (c, v)
            })
            .collect();
        SparseCoo::new(dims, entries).expect("CSF coordinates are in bounds")
    }
}

/// Counts distinct `k`-prefixes of coordinates in level order by brute force.
#[cfg(test)]
pub(crate) fn distinct_prefixes(coo: &SparseCoo, mode_order: &[usize], k: usize) -> usize {
    let mut set = std::collections::BTreeSet::new();
    for (c, _) in coo.entries() {
        let prefix: Vec<usize> = mode_order[..k].iter().map(|&m| c[m]).collect();
        set.insert(prefix);
    }
    set.len()
}
