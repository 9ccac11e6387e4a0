use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spttn_core::cost::standard_models;
use spttn_core::exec::ExecOutput;
use spttn_core::fixtures::{MTTKRP3, TTMC3, TTTP3};
use spttn_core::{
    build_sparse_input, flops_estimate, joint_search, parse_kernel, prepare, CsfTensor,
    DenseTensor, Error, KernelSpec, PrepareOptions, SearchOptions, SparseCoo,
};

fn random_coo(dims: &[usize], nnz: usize, rng: &mut ChaCha8Rng) -> SparseCoo {
    let entries = (0..nnz)
        .map(|_| {
            let c: Vec<usize> = dims.iter().map(|&d| rng.random_range(0..d)).collect();
            (c, rng.random_range(-1.0..1.0))
        })
        .collect();
    SparseCoo::new(dims.to_vec(), entries).unwrap()
}

fn random_dense(dims: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
    let n = dims.iter().product();
    DenseTensor::new(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Straight sum over nonzeros and every value of the remaining indices.
fn naive(spec: &KernelSpec, coo: &SparseCoo, dense: &[DenseTensor]) -> BTreeMap<Vec<usize>, f64> {
    let sparse = &spec.sparse().indices;
    let free: Vec<_> = spec
        .all_indices()
        .iter()
        .filter(|i| !sparse.contains(i))
        .collect();
    let mut out = BTreeMap::new();
    for (coords, v) in coo.entries() {
        let mut value = vec![0usize; spec.num_indices()];
        for (m, &i) in sparse.iter().enumerate() {
            value[i.pos()] = coords[m];
        }
        let mut odo = vec![0usize; free.len()];
        loop {
            for (f, &i) in free.iter().enumerate() {
                value[i.pos()] = odo[f];
            }
            let mut prod = *v;
            for (k, d) in dense.iter().enumerate() {
                let at: Vec<usize> = spec.inputs()[k + 1]
                    .indices
                    .iter()
                    .map(|i| value[i.pos()])
                    .collect();
                prod *= d.get(&at);
            }
            let key: Vec<usize> = spec
                .output()
                .indices
                .iter()
                .map(|i| value[i.pos()])
                .collect();
            *out.entry(key).or_insert(0.0) += prod;
            let mut f = 0;
            while f < free.len() {
                odo[f] += 1;
                if odo[f] < spec.dim(free[f]) {
                    break;
                }
                odo[f] = 0;
                f += 1;
            }
            if f == free.len() {
                break;
            }
        }
    }
    out
}

fn output_entries(out: &ExecOutput) -> BTreeMap<Vec<usize>, f64> {
    match out {
        ExecOutput::Sparse(s) => s.entries().iter().cloned().collect(),
        ExecOutput::Dense(d) => {
            let mut m = BTreeMap::new();
            let mut c = vec![0usize; d.order()];
            for &v in d.data() {
                m.insert(c.clone(), v);
                for k in (0..c.len()).rev() {
                    c[k] += 1;
                    if c[k] < d.dims()[k] {
                        break;
                    }
                    c[k] = 0;
                }
            }
            m
        }
    }
}

fn spec_for(kernel: &str, dims: &[(&str, usize)]) -> KernelSpec {
    let d = dims.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    parse_kernel(kernel, &d).unwrap()
}

fn check_planned(spec: &KernelSpec, seed: u64, nnz: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coo = random_coo(&spec.shape_of(0), nnz, &mut rng);
    let dense: Vec<DenseTensor> = (1..spec.num_inputs())
        .map(|k| random_dense(spec.shape_of(k), &mut rng))
        .collect();
    let refs: Vec<&DenseTensor> = dense.iter().collect();
    let csf = build_sparse_input(spec, &coo, None).unwrap();
    let want = naive(spec, &coo, &dense);
    for model in standard_models() {
        let j = joint_search(spec, model.as_ref(), true, &SearchOptions::default()).unwrap();
        let plan = prepare(
            spec,
            &j.path,
            j.result.order(),
            &csf,
            &refs,
            &PrepareOptions::default(),
        )
        .unwrap();
        let (out, stats) = plan.execute();
        let got = output_entries(&out);
        for (k, w) in &want {
            let g = got.get(k).copied().unwrap_or(0.0);
            assert!(
                (g - w).abs() <= 1e-10 * (1.0 + w.abs()),
                "{} {:?}: {} vs {}",
                model.name(),
                k,
                g,
                w
            );
        }
        for (k, g) in &got {
            assert!(
                want.contains_key(k) || *g == 0.0,
                "{} {:?} unexpected {}",
                model.name(),
                k,
                g
            );
        }
        let est = flops_estimate(spec, &j.path, j.result.order(), &csf).unwrap();
        assert_eq!(stats.multiply_adds, est);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planned_mttkrp_matches_naive(seed in any::<u64>(), i in 1usize..6, j in 1usize..6, k in 1usize..6, a in 1usize..4, nnz in 0usize..40) {
        check_planned(&spec_for(MTTKRP3, &[("i", i), ("j", j), ("k", k), ("a", a)]), seed, nnz);
    }

    #[test]
    fn planned_ttmc_matches_naive(seed in any::<u64>(), n in 1usize..5, r in 1usize..4, s in 1usize..4, nnz in 0usize..30) {
        check_planned(&spec_for(TTMC3, &[("i", n), ("j", n + 1), ("k", n), ("r", r), ("s", s)]), seed, nnz);
    }

    #[test]
    fn planned_tttp_matches_naive(seed in any::<u64>(), n in 1usize..5, r in 1usize..4, nnz in 0usize..30) {
        check_planned(&spec_for(TTTP3, &[("i", n), ("j", n), ("k", n + 1), ("r", r)]), seed, nnz);
    }

    #[test]
    fn csf_levels_count_distinct_prefixes(seed in any::<u64>(), dims in prop::collection::vec(1usize..6, 1..5), nnz in 0usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coo = random_coo(&dims, nnz, &mut rng);
        let modes: Vec<usize> = (0..dims.len()).rev().collect();
        let csf = CsfTensor::build(&coo, &modes).unwrap();
        let permuted = coo.permuted(&modes).unwrap();
        for k in 1..=dims.len() {
            let prefixes: HashSet<&[usize]> = permuted.entries().iter().map(|(c, _)| &c[..k]).collect();
            prop_assert_eq!(csf.nnz_at_level(k).unwrap(), prefixes.len());
        }
        for (c, v) in permuted.entries() {
            let at = csf.locate(c).expect("stored coordinate");
            prop_assert_eq!(csf.values()[at], *v);
        }
        prop_assert_eq!(csf.to_coo(), coo);
    }
}

#[test]
fn kernel_errors_are_reported() {
    let dims: BTreeMap<String, usize> = [("i", 2), ("j", 2), ("a", 2)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    assert!(matches!(
        parse_kernel("T[i,j]*B[j,a]->A[i,q]", &dims),
        Err(Error::Validation(_))
    ));
    assert!(parse_kernel("T[i,j]*B[j,a]->A[i,a]", &BTreeMap::new()).is_err());
    assert!(parse_kernel("T[i,j]*B[j,a]->A[i,a", &dims).is_err());
    assert!(parse_kernel("T[i,j]*B[j,a]->A[i,a]", &dims).is_ok());
}
