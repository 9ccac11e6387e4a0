use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use spttn_core::cost::standard_models;
use spttn_core::exec::ExecOutput;
use spttn_core::loopnest::{build_forest, count_orders, OrderIter};
use spttn_core::optimizer::{ranked_candidates, JointResult};
use spttn_core::path::intermediate_name;
use spttn_core::{
    build_sparse_input, enumerate_paths, eval_cost, execute_unfactorized, filter_min_depth,
    flops_estimate, joint_search, kernel_signature, order_dp, parse_cost_model,
    parse_kernel_with_shapes, prepare, ContractionPath, CostContext, CostModel, CostValue,
    CsfTensor, DenseTensor, IndexId, KernelSpec, LoopOrder, PathTree, PrepareOptions,
    SearchOptions, SparseConstraint, SparseCoo,
};

use crate::args::{BenchArgs, Format, GenArgs, KernelArgs, RunArgs, VerifyArgs};
use crate::error::{CliError, Result};
use crate::generate::{gen_dense, gen_random, rng};
use crate::report::{
    to_json, to_kv, BenchReport, BenchRow, BufferRow, ExecRow, RunReport, SearchRow, VerifyRow,
    COUNTING_CONVENTION,
};
use crate::tns::{format_dense, format_sparse, read_dense, read_tns, write_text};

/// Parses `k=v,k=v`.
pub fn parse_dims(text: &str) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("bad --dims entry '{}', expected name=size", part))
        })?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad size in --dims entry '{}'", part)))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad --shape '{}'", text)))
        })
        .collect()
}

/// Kernel, sparse input and dense inputs resolved from flags.
pub struct Problem {
    pub spec: KernelSpec,
    pub coo: Option<SparseCoo>,
    pub csf_order: Vec<IndexId>,
}

pub fn load_problem(args: &KernelArgs, need_tensor: bool) -> Result<Problem> {
    let sig = kernel_signature(&args.kernel)?;
    let (sparse_name, sparse_idx) = sig[0].clone();
    let dims = match &args.dims {
        Some(d) => parse_dims(d)?,
        None => BTreeMap::new(),
    };
    let mut shapes = BTreeMap::new();
    let mut coo = None;
    if let Some(path) = &args.tns {
        // sizes from --dims win over the maximum coordinate in the file
        let given: Option<Vec<usize>> = sparse_idx.iter().map(|n| dims.get(n).copied()).collect();
        let raw = read_tns(path, Some(sparse_idx.len()), given.as_deref())?;
        let full = raw.dims().to_vec();
        shapes.insert(sparse_name.clone(), full);
        coo = Some(raw);
    }
    let spec = parse_kernel_with_shapes(&args.kernel, &dims, &shapes)?;
    if coo.is_none() && need_tensor {
        let shape = spec.shape_of(0);
        coo = Some(gen_random(&shape, args.density, args.seed)?);
    }
    if args.prune_zeros {
        coo = coo.map(SparseCoo::prune_zeros);
    }
    let csf_order = match &args.csf_order {
        Some(text) => text
            .split(',')
            .map(|n| {
                spec.index_by_name(n.trim())
                    .ok_or_else(|| CliError::Usage(format!("unknown index '{}' in --csf-order", n)))
            })
            .collect::<Result<Vec<_>>>()?,
        None => spec.sparse().indices.clone(),
    };
    Ok(Problem {
        spec,
        coo,
        csf_order,
    })
}

/// Dense inputs from `--factor` files, the rest seeded random.
pub fn load_factors(args: &KernelArgs, spec: &KernelSpec) -> Result<Vec<DenseTensor>> {
    let mut files = BTreeMap::new();
    for f in &args.factors {
        let (name, path) = f
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("bad --factor '{}', expected NAME=path", f)))?;
        if spec
            .tensor_by_name(name)
            .is_none_or(|k| k == 0 || k >= spec.num_inputs())
        {
            return Err(CliError::Usage(format!(
                "--factor names unknown dense input '{}'",
                name
            )));
        }
        files.insert(name.to_string(), std::path::PathBuf::from(path));
    }
    let mut r = rng(args.seed.wrapping_add(1));
    (1..spec.num_inputs())
        .map(|k| {
            let shape = spec.shape_of(k);
            match files.get(&spec.inputs()[k].name) {
                Some(path) => read_dense(path, &shape),
                None => Ok(gen_dense(&shape, &mut r)),
            }
        })
        .collect()
}

pub struct Plan {
    pub path: ContractionPath,
    pub order: LoopOrder,
    pub cost: CostValue,
    pub search: Option<SearchRow>,
}

fn search_options(p: &Problem) -> SearchOptions {
    SearchOptions {
        csf_order: Some(p.csf_order.clone()),
        ..SearchOptions::default()
    }
}

pub fn choose_plan(args: &KernelArgs, p: &Problem, model: &dyn CostModel) -> Result<Plan> {
    let spec = &p.spec;
    let start = Instant::now();
    let opts = search_options(p);
    match (&args.path, &args.order) {
        (None, Some(_)) => Err(CliError::Usage("--order needs --path".into())),
        (Some(text), order) => {
            let path = ContractionPath::from_tree(spec, &PathTree::parse(spec, text)?)?;
            match order {
                Some(o) => {
                    let order = LoopOrder::parse(spec, o)?;
                    order.validate(&path)?;
                    SparseConstraint::new(&path, &p.csf_order).check(&order)?;
                    let cost = eval_cost(model, &CostContext::new(spec, &path), &path, &order)?;
                    Ok(Plan {
                        path,
                        order,
                        cost,
                        search: None,
                    })
                }
                None => {
                    let r = order_dp(spec, &path, model, &opts)?;
                    let search = SearchRow {
                        paths_considered: 1,
                        subproblems: r.stats.subproblems,
                        memo_hits: r.stats.memo_hits,
                        wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    };
                    Ok(Plan {
                        path,
                        order: r.best.0,
                        cost: r.best.1,
                        search: Some(search),
                    })
                }
            }
        }
        (None, None) => {
            let j = joint_search(spec, model, !args.no_depth_filter, &opts)?;
            let search = SearchRow {
                paths_considered: j.candidates.len(),
                subproblems: j.candidates.iter().map(|(_, r)| r.stats.subproblems).sum(),
                memo_hits: j.candidates.iter().map(|(_, r)| r.stats.memo_hits).sum(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            Ok(Plan {
                path: j.path,
                order: j.result.best.0,
                cost: j.result.best.1,
                search: Some(search),
            })
        }
    }
}

fn names(spec: &KernelSpec, ids: &[IndexId]) -> String {
    ids.iter()
        .map(|&i| spec.index_name(i))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn base_report(
    command: &str,
    p: &Problem,
    plan: &Plan,
    model: &dyn CostModel,
) -> Result<RunReport> {
    let spec = &p.spec;
    let forest = build_forest(&plan.path, &plan.order, &p.csf_order)?;
    let buffers = forest
        .buffers()
        .iter()
        .map(|b| BufferRow {
            name: intermediate_name(b.producer),
            producer: b.producer + 1,
            consumer: b.consumer + 1,
            indices: names(spec, &b.indices),
            order: b.order(),
            elements: b.size(spec),
            bytes: b.size(spec) * 8,
        })
        .collect();
    let ctx = CostContext::new(spec, &plan.path);
    let mut costs = BTreeMap::new();
    for m in standard_models() {
        costs.insert(
            m.name(),
            eval_cost(m.as_ref(), &ctx, &plan.path, &plan.order)?.to_string(),
        );
    }
    let (nnz, levels, flops) = match &p.coo {
        Some(coo) => {
            let csf = build_sparse_input(spec, coo, Some(&p.csf_order))?;
            let levels = (1..=csf.order())
                .map(|k| csf.nnz_at_level(k))
                .collect::<spttn_core::Result<Vec<_>>>()?;
            let flops = flops_estimate(spec, &plan.path, &plan.order, &csf).ok();
            (Some(coo.nnz()), levels, flops)
        }
        None => (None, Vec::new(), None),
    };
    Ok(RunReport {
        command: command.to_string(),
        kernel: spec.canonical(),
        dims: spec.dims_map(),
        path: plan.path.describe(spec),
        max_loop_depth: plan.path.max_loop_depth(),
        orders: plan.order.terms().iter().map(|a| names(spec, a)).collect(),
        buffers,
        cost_model: model.name(),
        cost: plan.cost.to_string(),
        costs,
        search: plan.search.clone(),
        nnz,
        nnz_per_level: levels,
        flops_estimate: flops,
        hooks: Vec::new(),
        exec: None,
        verification: None,
        counting_convention: COUNTING_CONVENTION.to_string(),
    })
}

fn emit(args: &KernelArgs, report: &RunReport, out: &mut dyn Write) -> Result<()> {
    if let Some(path) = &args.report {
        write_text(path, &to_json(report))?;
    }
    let text = match args.format {
        Format::Text => to_kv(report),
        Format::Json => to_json(report) + "\n",
    };
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}

pub fn optimize(args: &KernelArgs, out: &mut dyn Write) -> Result<()> {
    let model = parse_cost_model(&args.cost)?;
    let p = load_problem(args, false)?;
    let plan = choose_plan(args, &p, model.as_ref())?;
    let report = base_report("optimize", &p, &plan, model.as_ref())?;
    emit(args, &report, out)
}

/// Pseudo-code listing with a short header.
pub fn explain_text(p: &Problem, plan: &Plan, model: &dyn CostModel) -> Result<String> {
    let spec = &p.spec;
    let forest = build_forest(&plan.path, &plan.order, &p.csf_order)?;
    let mut s = String::new();
    s.push_str(&format!("# kernel: {}\n", spec.canonical()));
    s.push_str(&format!("# path: {}\n", plan.path.describe(spec)));
    s.push_str(&format!("# order: {}\n", plan.order.describe(spec)));
    for b in forest.buffers() {
        s.push_str(&format!(
            "# buffer {}[{}]: order {}, {} elements\n",
            intermediate_name(b.producer),
            names(spec, &b.indices),
            b.order(),
            b.size(spec)
        ));
    }
    s.push_str(&format!("# cost {}: {}\n", model.name(), plan.cost));
    s.push_str(&forest.render(spec, &plan.path));
    Ok(s)
}

pub fn explain(args: &KernelArgs, out: &mut dyn Write) -> Result<()> {
    let model = parse_cost_model(&args.cost)?;
    let p = load_problem(args, false)?;
    let plan = choose_plan(args, &p, model.as_ref())?;
    let text = explain_text(&p, &plan, model.as_ref())?;
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

struct Executed {
    report: RunReport,
    output: ExecOutput,
    csf: CsfTensor,
    dense: Vec<DenseTensor>,
    problem: Problem,
}

fn execute_plan(command: &str, args: &KernelArgs) -> Result<Executed> {
    let model = parse_cost_model(&args.cost)?;
    let p = load_problem(args, true)?;
    let plan = choose_plan(args, &p, model.as_ref())?;
    let mut report = base_report(command, &p, &plan, model.as_ref())?;
    let coo = p.coo.as_ref().expect("tensor loaded");
    let csf = build_sparse_input(&p.spec, coo, Some(&p.csf_order))?;
    let dense = load_factors(args, &p.spec)?;
    let refs: Vec<&DenseTensor> = dense.iter().collect();
    let opts = PrepareOptions {
        buffer_limit_bytes: args.buffer_limit_bytes,
        offload: true,
    };
    let exec = prepare(&p.spec, &plan.path, &plan.order, &csf, &refs, &opts)?;
    let (output, stats) = exec.execute();
    report.hooks = exec.hook_summary();
    report.exec = Some(ExecRow {
        multiply_adds: stats.multiply_adds,
        peak_buffer_bytes: stats.peak_buffer_bytes,
        buffer_resets: stats.buffer_resets.clone(),
        wall_ms: stats.elapsed.as_secs_f64() * 1e3,
    });
    drop(exec);
    Ok(Executed {
        report,
        output,
        csf,
        dense,
        problem: p,
    })
}

/// Executes the planned kernel, returning the report and the result.
pub fn execute(args: &KernelArgs) -> Result<(RunReport, ExecOutput)> {
    let e = execute_plan("run", args)?;
    Ok((e.report, e.output))
}

pub fn format_output(output: &ExecOutput) -> String {
    match output {
        ExecOutput::Dense(d) => format_dense(d),
        ExecOutput::Sparse(s) => format_sparse(s),
    }
}

pub fn run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let e = execute_plan("run", &args.kernel)?;
    if let Some(path) = &args.out {
        write_text(path, &format_output(&e.output))?;
    }
    emit(&args.kernel, &e.report, out)
}

pub fn verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<()> {
    let mut e = execute_plan("verify", &args.kernel)?;
    let refs: Vec<&DenseTensor> = e.dense.iter().collect();
    let (oracle, ostats) = execute_unfactorized(&e.problem.spec, &e.csf, &refs)?;
    let diff = e.output.max_abs_diff(&oracle);
    let tolerance = args.tolerance * (1.0 + oracle.max_abs());
    let passed = diff <= tolerance;
    e.report.verification = Some(VerifyRow {
        oracle_multiply_adds: ostats.multiply_adds,
        max_abs_diff: diff,
        tolerance,
        passed,
    });
    emit(&args.kernel, &e.report, out)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification { diff, tolerance })
    }
}

/// Orders ranked by model cost: every order of each path when the path has
/// few enough, otherwise the searched best and runner-up.
fn ranked(
    args: &BenchArgs,
    p: &Problem,
    model: &dyn CostModel,
) -> Result<Vec<(ContractionPath, LoopOrder, CostValue)>> {
    let spec = &p.spec;
    let k = &args.kernel;
    if !args.compare.is_empty() {
        let text = k
            .path
            .as_ref()
            .ok_or_else(|| CliError::Usage("--compare needs --path".into()))?;
        let path = ContractionPath::from_tree(spec, &PathTree::parse(spec, text)?)?;
        let ctx = CostContext::new(spec, &path);
        let cons = SparseConstraint::new(&path, &p.csf_order);
        let mut out = Vec::new();
        for o in &args.compare {
            let order = LoopOrder::parse(spec, o)?;
            order.validate(&path)?;
            cons.check(&order)?;
            let c = eval_cost(model, &ctx, &path, &order)?;
            out.push((path.clone(), order, c));
        }
        out.sort_by_key(|a| a.2);
        return Ok(out);
    }
    let paths = match &k.path {
        Some(text) => vec![ContractionPath::from_tree(
            spec,
            &PathTree::parse(spec, text)?,
        )?],
        None if k.no_depth_filter => enumerate_paths(spec)?,
        None => filter_min_depth(enumerate_paths(spec)?),
    };
    let mut all = Vec::new();
    for path in paths {
        let cons = SparseConstraint::new(&path, &p.csf_order);
        if count_orders(&path, &cons) <= 20_000 {
            let ctx = CostContext::new(spec, &path);
            for o in OrderIter::new(&path, &cons) {
                let c = eval_cost(model, &ctx, &path, &o)?;
                all.push((path.clone(), o, c));
            }
        } else {
            let result = order_dp(spec, &path, model, &search_options(p))?;
            let j = JointResult {
                path: path.clone(),
                result: result.clone(),
                candidates: vec![(path, result)],
            };
            all.extend(ranked_candidates(&j, 2));
        }
    }
    // stable: ties keep path then order enumeration order
    all.sort_by_key(|a| a.2);
    all.truncate(args.top_k.max(1));
    Ok(all)
}

pub fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let k = &args.kernel;
    let model = parse_cost_model(&k.cost)?;
    let p = load_problem(k, true)?;
    let spec = &p.spec;
    let coo = p.coo.as_ref().expect("tensor loaded");
    let csf = build_sparse_input(spec, coo, Some(&p.csf_order))?;
    let dense = load_factors(k, spec)?;
    let refs: Vec<&DenseTensor> = dense.iter().collect();
    let opts = PrepareOptions {
        buffer_limit_bytes: k.buffer_limit_bytes,
        offload: true,
    };
    let mut rows = Vec::new();
    let mut costs = Vec::new();
    for (rank, (path, order, cost)) in ranked(args, &p, model.as_ref())?.into_iter().enumerate() {
        let plan = prepare(spec, &path, &order, &csf, &refs, &opts)?;
        let mut best = f64::INFINITY;
        let mut ops = 0;
        for _ in 0..args.repeats.max(1) {
            let (_, stats) = plan.execute();
            best = best.min(stats.elapsed.as_secs_f64() * 1e3);
            ops = stats.multiply_adds;
        }
        costs.push(cost);
        rows.push(BenchRow {
            rank: rank + 1,
            path: path.describe(spec),
            orders: order.terms().iter().map(|a| names(spec, a)).collect(),
            cost: cost.to_string(),
            multiply_adds: ops,
            best_ms: best,
        });
    }
    // pairs ranked strictly cheaper by the model yet measured slower
    let mut inversions = Vec::new();
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            if costs[a] < costs[b] && rows[a].best_ms > rows[b].best_ms {
                inversions.push((rows[a].rank, rows[b].rank));
            }
        }
    }
    let report = BenchReport {
        kernel: spec.canonical(),
        cost_model: model.name(),
        repeats: args.repeats.max(1),
        rows,
        inversions,
    };
    if let Some(path) = &k.report {
        write_text(path, &to_json(&report))?;
    }
    let text = match k.format {
        Format::Text => to_kv(&report),
        Format::Json => to_json(&report) + "\n",
    };
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

pub fn gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let t = gen_random(&parse_shape(&args.shape)?, args.density, args.seed)?;
    let text = format_sparse(&t);
    match &args.out {
        Some(path) => write_text(path, &text),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}
