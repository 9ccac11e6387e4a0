//! Unfactorized reference: one loop over the nonzeros and every other
//! index, multiplying all factors in the body.

use std::time::Instant;

use super::{check_inputs, csf_index_order, sparse_output, ExecOutput, ExecStats};
use crate::error::Result;
use crate::index::IndexId;
use crate::kernel::KernelSpec;
use crate::tensor::{CsfTensor, DenseTensor};

pub fn execute_unfactorized(
    spec: &KernelSpec,
    csf: &CsfTensor,
    dense: &[&DenseTensor],
) -> Result<(ExecOutput, ExecStats)> {
    check_inputs(spec, csf, dense)?;
    let start = Instant::now();
    let csf_order = csf_index_order(spec, csf);
    let sparse_set = spec.sparse_indices();
    let free: Vec<IndexId> = spec
        .all_indices()
        .iter()
        .filter(|&i| !sparse_set.contains(i))
        .collect();
    let extents: Vec<usize> = free.iter().map(|&i| spec.dim(i)).collect();
    let out_idx = &spec.output().indices;
    let out_dims: Vec<usize> = out_idx.iter().map(|&i| spec.dim(i)).collect();
    let out_strides = crate::tensor::row_major_strides(&out_dims);
    let factors: Vec<(&DenseTensor, Vec<IndexId>)> = dense
        .iter()
        .enumerate()
        .map(|(k, d)| (*d, spec.inputs()[k + 1].indices.clone()))
        .collect();
    let per_body = spec.num_inputs() as u64;

    let mut out = if spec.output_sparse() {
        vec![0.0; csf.nnz()]
    } else {
        vec![0.0; out_dims.iter().product()]
    };
    let mut coords = vec![0usize; spec.num_indices()];
    let mut ops = 0u64;
    let mut odo = vec![0usize; free.len()];
    let mut scratch = Vec::new();
    for (leaf, (lc, tv)) in csf.leaves().into_iter().enumerate() {
        for (l, &i) in csf_order.iter().enumerate() {
            coords[i.pos()] = lc[l];
        }
        if extents.contains(&0) {
            continue;
        }
        odo.iter_mut().for_each(|x| *x = 0);
        loop {
            for (k, &i) in free.iter().enumerate() {
                coords[i.pos()] = odo[k];
            }
            let mut v = tv;
            for (d, idx) in &factors {
                scratch.clear();
                scratch.extend(idx.iter().map(|i| coords[i.pos()]));
                v *= d.get(&scratch);
            }
            ops += per_body;
            let pos = if spec.output_sparse() {
                leaf
            } else {
                out_idx
                    .iter()
                    .zip(&out_strides)
                    .map(|(i, s)| coords[i.pos()] * s)
                    .sum()
            };
            out[pos] += v;
            // advance the odometer, last index fastest
            let mut k = free.len();
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                odo[k] += 1;
                if odo[k] < extents[k] {
                    break;
                }
                odo[k] = 0;
            }
            if odo.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    let stats = ExecStats {
        multiply_adds: ops,
        elapsed: start.elapsed(),
        ..ExecStats::default()
    };
    let output = if spec.output_sparse() {
        ExecOutput::Sparse(sparse_output(spec, csf, out))
    } else {
        ExecOutput::Dense(DenseTensor::new(out_dims, out).expect("output size"))
    };
    Ok((output, stats))
}
