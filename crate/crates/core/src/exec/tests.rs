use super::*;
use crate::cost::{eval_cost, CostContext, DenseLoops};
use crate::fixtures;
use crate::loopnest::{count_orders, OrderIter};
use crate::path::{enumerate_paths, filter_min_depth, PathTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn path_of(spec: &KernelSpec, text: &str) -> ContractionPath {
    ContractionPath::from_tree(spec, &PathTree::parse(spec, text).unwrap()).unwrap()
}

fn three_entry() -> SparseCoo {
    SparseCoo::new(
        vec![2, 2, 3],
        vec![
            (vec![0, 0, 0], 1.0),
            (vec![0, 1, 2], 2.0),
            (vec![1, 0, 0], 3.0),
        ],
    )
    .unwrap()
}

fn random_inputs(spec: &KernelSpec, density: f64, seed: u64) -> (CsfTensor, Vec<DenseTensor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims: Vec<usize> = spec.shape_of(0);
    let total: usize = dims.iter().product();
    let mut entries = Vec::new();
    for lin in 0..total {
        if rng.random::<f64>() < density {
            let mut c = vec![0; dims.len()];
            let mut r = lin;
            for m in (0..dims.len()).rev() {
                c[m] = r % dims[m];
                r /= dims[m];
            }
            entries.push((c, rng.random_range(-1.0..1.0)));
        }
    }
    let coo = SparseCoo::new(dims, entries).unwrap();
    let csf = build_sparse_input(spec, &coo, None).unwrap();
    let dense = (1..spec.num_inputs())
        .map(|k| {
            let shape = spec.shape_of(k);
            let n = shape.iter().product();
            DenseTensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect();
    (csf, dense)
}

fn refs(d: &[DenseTensor]) -> Vec<&DenseTensor> {
    d.iter().collect()
}

#[test]
fn mttkrp_three_entry_matches_hand_sums() {
    let spec = fixtures::mttkrp3(2, 2, 3, 2);
    let coo = three_entry();
    let csf = build_sparse_input(&spec, &coo, None).unwrap();
    let b = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let c = DenseTensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 1.0, -0.5, 3.0]).unwrap();
    // A[i,a] = sum over nonzeros T[i,j,k] B[j,a] C[k,a]
    let mut want = [[0.0f64; 2]; 2];
    for (co, v) in coo.entries() {
        for (a, w) in want[co[0]].iter_mut().enumerate() {
            *w += v * b.get(&[co[1], a]) * c.get(&[co[2], a]);
        }
    }
    let p = path_of(&spec, "((T*C)*B)");
    for order in ["i,j,k,a;i,j,a", "i,j,a,k;i,j,a", "a,i,j,k;a,i,j"] {
        let o = LoopOrder::parse(&spec, order).unwrap();
        let plan = prepare(&spec, &p, &o, &csf, &[&b, &c], &PrepareOptions::default()).unwrap();
        let (out, stats) = plan.execute();
        let ExecOutput::Dense(d) = out else { panic!() };
        for (i, row) in want.iter().enumerate() {
            for (a, w) in row.iter().enumerate() {
                assert_eq!(d.get(&[i, a]), *w, "{}", order);
            }
        }
        assert_eq!(
            stats.multiply_adds,
            flops_estimate(&spec, &p, &o, &csf).unwrap()
        );
    }
    let (out, stats) = execute_unfactorized(&spec, &csf, &[&b, &c]).unwrap();
    let ExecOutput::Dense(d) = out else { panic!() };
    assert_eq!(d.get(&[0, 1]), want[0][1]);
    assert_eq!(stats.multiply_adds, 18);
}

#[test]
fn unfactorized_ttmc_count() {
    let spec = fixtures::ttmc3(2, 2, 3, 2, 2);
    let csf = build_sparse_input(&spec, &three_entry(), None).unwrap();
    let u = DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
    let v = DenseTensor::new(vec![3, 2], vec![1.0; 6]).unwrap();
    let (_, stats) = execute_unfactorized(&spec, &csf, &[&u, &v]).unwrap();
    assert_eq!(stats.multiply_adds, 36);
}

#[test]
fn empty_sparse_tensor() {
    let spec = fixtures::mttkrp3(2, 2, 3, 2);
    let coo = SparseCoo::empty(vec![2, 2, 3]).unwrap();
    let csf = build_sparse_input(&spec, &coo, None).unwrap();
    let b = DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
    let c = DenseTensor::new(vec![3, 2], vec![1.0; 6]).unwrap();
    let (out, stats) = execute_unfactorized(&spec, &csf, &[&b, &c]).unwrap();
    assert_eq!(out.max_abs(), 0.0);
    assert_eq!(stats.multiply_adds, 0);
    let p = path_of(&spec, "((T*C)*B)");
    let o = LoopOrder::parse(&spec, "i,j,k,a;i,j,a").unwrap();
    let (out, stats) = prepare(&spec, &p, &o, &csf, &[&b, &c], &PrepareOptions::default())
        .unwrap()
        .execute();
    assert_eq!(out.max_abs(), 0.0);
    assert_eq!(stats.multiply_adds, 0);
}

#[test]
fn zero_factor_gives_zero_output() {
    let spec = fixtures::ttmc3(4, 3, 5, 2, 3);
    let (csf, mut dense) = random_inputs(&spec, 0.3, 7);
    dense[1] = DenseTensor::zeros(dense[1].dims().to_vec());
    let p = path_of(&spec, "((T*V)*U)");
    let o = LoopOrder::parse(&spec, "i,j,k,s;i,j,s,r").unwrap();
    let (out, _) = prepare(
        &spec,
        &p,
        &o,
        &csf,
        &refs(&dense),
        &PrepareOptions::default(),
    )
    .unwrap()
    .execute();
    assert_eq!(out.max_abs(), 0.0);
}

#[test]
fn tttp_keeps_pattern() {
    let spec = fixtures::tttp3(4, 3, 5, 2);
    let (csf, dense) = random_inputs(&spec, 0.3, 11);
    let input = csf.to_coo();
    let p = path_of(&spec, "(((T*U)*V)*W)");
    let cons = SparseConstraint::new(&p, &spec.sparse().indices);
    for o in OrderIter::new(&p, &cons).step_by(97) {
        let (out, _) = prepare(
            &spec,
            &p,
            &o,
            &csf,
            &refs(&dense),
            &PrepareOptions::default(),
        )
        .unwrap()
        .execute();
        let ExecOutput::Sparse(s) = out else { panic!() };
        let got: Vec<&Vec<usize>> = s.entries().iter().map(|e| &e.0).collect();
        let want: Vec<&Vec<usize>> = input.entries().iter().map(|e| &e.0).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn ttmc4_end_to_end_hooks() {
    let spec = fixtures::ttmc4(3, 2);
    let (csf, dense) = random_inputs(&spec, 0.3, 3);
    let p = path_of(&spec, "(((T*W)*V)*U)");
    let o = LoopOrder::parse(&spec, "i,j,k,l,t;i,j,k,s,t;i,j,r,s,t").unwrap();
    let plan = prepare(
        &spec,
        &p,
        &o,
        &csf,
        &refs(&dense),
        &PrepareOptions::default(),
    )
    .unwrap();
    assert_eq!(
        plan.hook_summary(),
        vec!["vector(t)", "rank1(s,t)", "loop(r)+vector(s,t)"]
    );
    let (fused, _) = plan.execute();
    let (oracle, _) = execute_unfactorized(&spec, &csf, &refs(&dense)).unwrap();
    assert!(fused.max_abs_diff(&oracle) <= 1e-10 * (1.0 + oracle.max_abs()));
}

#[test]
fn scalar_buffer_order_has_no_first_hook() {
    let spec = fixtures::ttmc3(4, 3, 5, 2, 3);
    let (csf, dense) = random_inputs(&spec, 0.3, 5);
    let p = path_of(&spec, "((T*V)*U)");
    let o = LoopOrder::parse(&spec, "i,j,s,k;i,j,s,r").unwrap();
    let plan = prepare(
        &spec,
        &p,
        &o,
        &csf,
        &refs(&dense),
        &PrepareOptions::default(),
    )
    .unwrap();
    assert_eq!(plan.hook_summary(), vec!["none", "vector(r)"]);
}

#[test]
fn unit_extent_hook_is_scalar_update() {
    let spec = fixtures::spmm(3, 4, 1);
    let (csf, dense) = random_inputs(&spec, 0.5, 9);
    let p = path_of(&spec, "(T*U)");
    let o = LoopOrder::parse(&spec, "i,j,r").unwrap();
    let plan = prepare(
        &spec,
        &p,
        &o,
        &csf,
        &refs(&dense),
        &PrepareOptions::default(),
    )
    .unwrap();
    assert_eq!(plan.hook_summary(), vec!["vector(r)"]);
    let (out, stats) = plan.execute();
    let (oracle, ostats) = execute_unfactorized(&spec, &csf, &refs(&dense)).unwrap();
    assert_eq!(out.max_abs_diff(&oracle), 0.0);
    assert_eq!(stats.multiply_adds, ostats.multiply_adds);
}

#[test]
fn all_orders_match_oracle_and_estimate() {
    for (n, spec) in fixtures::all_small().into_iter().enumerate() {
        let (csf, dense) = random_inputs(&spec, 0.25, 100 + n as u64);
        let (oracle, _) = execute_unfactorized(&spec, &csf, &refs(&dense)).unwrap();
        let tol = 1e-10 * (1.0 + oracle.max_abs());
        for p in filter_min_depth(enumerate_paths(&spec).unwrap()) {
            let cons = SparseConstraint::new(&p, &spec.sparse().indices);
            let step = (count_orders(&p, &cons) / 300).max(1) as usize;
            for o in OrderIter::new(&p, &cons).step_by(step) {
                let plan = prepare(
                    &spec,
                    &p,
                    &o,
                    &csf,
                    &refs(&dense),
                    &PrepareOptions::default(),
                )
                .unwrap();
                let (out, stats) = plan.execute();
                assert!(
                    out.max_abs_diff(&oracle) <= tol,
                    "{} {}",
                    p.describe(&spec),
                    o.describe(&spec)
                );
                assert_eq!(
                    stats.multiply_adds,
                    flops_estimate(&spec, &p, &o, &csf).unwrap()
                );
                let plain = PrepareOptions {
                    offload: false,
                    ..PrepareOptions::default()
                };
                let (out2, stats2) = prepare(&spec, &p, &o, &csf, &refs(&dense), &plain)
                    .unwrap()
                    .execute();
                assert_eq!(out, out2, "offload changes results");
                assert_eq!(stats.multiply_adds, stats2.multiply_adds);
            }
        }
    }
}

#[test]
fn hooks_cover_the_dense_loop_count() {
    let spec = fixtures::ttmc4(3, 2);
    let (csf, dense) = random_inputs(&spec, 0.3, 1);
    let p = path_of(&spec, "(((T*W)*V)*U)");
    let ctx = CostContext::new(&spec, &p);
    let cons = SparseConstraint::new(&p, &spec.sparse().indices);
    for o in OrderIter::new(&p, &cons).step_by(53) {
        let plan = prepare(
            &spec,
            &p,
            &o,
            &csf,
            &refs(&dense),
            &PrepareOptions::default(),
        )
        .unwrap();
        let loops: usize = (0..p.num_terms())
            .map(|t| trailing_dense_loops(plan.forest(), t).len())
            .sum();
        let c = eval_cost(&DenseLoops { bound: 9 }, &ctx, &p, &o).unwrap();
        assert_eq!(-c.parts()[1], loops as i128, "{}", o.describe(&spec));
    }
}

#[derive(Default)]
struct ResetLog {
    resets: usize,
    dirty_entries: usize,
}

impl ExecObserver for ResetLog {
    fn buffer_reset(&mut self, _: usize) {
        self.resets += 1;
    }

    fn producer_entry(&mut self, _: usize, contents: &[f64]) {
        if contents.iter().any(|&v| v != 0.0) {
            self.dirty_entries += 1;
        }
    }
}

#[test]
fn buffers_are_zero_at_producer_entry() {
    let spec = fixtures::ttmc3(4, 3, 5, 2, 3);
    let (csf, dense) = random_inputs(&spec, 0.4, 21);
    let p = path_of(&spec, "((T*V)*U)");
    let o = LoopOrder::parse(&spec, "i,j,k,s;i,j,s,r").unwrap();
    let plan = prepare(
        &spec,
        &p,
        &o,
        &csf,
        &refs(&dense),
        &PrepareOptions::default(),
    )
    .unwrap();
    let mut log = ResetLog::default();
    let (_, stats) = plan.execute_observed(&mut log);
    assert_eq!(log.dirty_entries, 0);
    // one reset per (i,j) fiber
    assert_eq!(
        stats.buffer_resets[0] as usize,
        csf.nnz_at_level(2).unwrap()
    );
    assert_eq!(log.resets, csf.nnz_at_level(2).unwrap());
}

#[test]
fn buffer_limit_is_a_resource_error() {
    let spec = fixtures::ttmc3(4, 3, 5, 2, 3);
    let (csf, dense) = random_inputs(&spec, 0.4, 2);
    let p = path_of(&spec, "((U*V)*T)");
    let o = LoopOrder::parse(&spec, "j,k,r,s;i,j,k,r,s").unwrap();
    let opts = PrepareOptions {
        buffer_limit_bytes: Some(64),
        ..PrepareOptions::default()
    };
    let err = prepare(&spec, &p, &o, &csf, &refs(&dense), &opts).unwrap_err();
    assert!(matches!(err, Error::Resource(_)));
}

#[test]
fn shape_and_order_errors() {
    let spec = fixtures::ttmc3(4, 3, 5, 2, 3);
    let (csf, dense) = random_inputs(&spec, 0.4, 2);
    let p = path_of(&spec, "((T*V)*U)");
    let o = LoopOrder::parse(&spec, "i,j,k,s;i,j,s,r").unwrap();
    let wrong = DenseTensor::zeros(vec![3, 3]);
    assert!(matches!(
        prepare(
            &spec,
            &p,
            &o,
            &csf,
            &[&wrong, &dense[1]],
            &PrepareOptions::default()
        ),
        Err(Error::InvalidArgument(_))
    ));
    let bad = LoopOrder::parse(&spec, "i,k,j,s;i,j,s,r").unwrap();
    assert!(matches!(
        prepare(
            &spec,
            &p,
            &bad,
            &csf,
            &refs(&dense),
            &PrepareOptions::default()
        ),
        Err(Error::UnsupportedOrder(_))
    ));
}

#[test]
fn execution_is_deterministic() {
    let spec = fixtures::tttc4(3, 2);
    let (csf, dense) = random_inputs(&spec, 0.3, 4);
    for p in filter_min_depth(enumerate_paths(&spec).unwrap())
        .into_iter()
        .take(3)
    {
        let cons = SparseConstraint::new(&p, &spec.sparse().indices);
        let o = OrderIter::new(&p, &cons).next().unwrap();
        let plan = prepare(
            &spec,
            &p,
            &o,
            &csf,
            &refs(&dense),
            &PrepareOptions::default(),
        )
        .unwrap();
        let (a, _) = plan.execute();
        let (b, _) = plan.execute();
        assert_eq!(a, b);
    }
}

#[test]
fn custom_csf_order() {
    let spec = fixtures::mttkrp3(4, 3, 5, 2);
    let (csf0, dense) = random_inputs(&spec, 0.3, 8);
    let coo = csf0.to_coo();
    let ids = |s: &str| {
        s.split(',')
            .map(|n| spec.index_by_name(n).unwrap())
            .collect::<Vec<_>>()
    };
    let csf = build_sparse_input(&spec, &coo, Some(&ids("k,i,j"))).unwrap();
    let p = path_of(&spec, "((T*B)*C)");
    let o = LoopOrder::parse(&spec, "k,i,j,a;k,i,a").unwrap();
    let (out, _) = prepare(
        &spec,
        &p,
        &o,
        &csf,
        &refs(&dense),
        &PrepareOptions::default(),
    )
    .unwrap()
    .execute();
    let (oracle, _) = execute_unfactorized(&spec, &csf0, &refs(&dense)).unwrap();
    assert!(out.max_abs_diff(&oracle) < 1e-12);
    // the default order does not fit this CSF
    let o2 = LoopOrder::parse(&spec, "i,j,k,a;i,k,a").unwrap();
    assert!(prepare(
        &spec,
        &p,
        &o2,
        &csf,
        &refs(&dense),
        &PrepareOptions::default()
    )
    .is_err());
}
