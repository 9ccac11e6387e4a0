//! Planning and execution of sparse tensor times tensor network (SpTTN)
//! kernels.
//!
//! A kernel contracts one sparse tensor, stored in CSF form, with several
//! dense tensors. Planning enumerates contraction paths and per-term loop
//! orders, builds the fully-fused loop nest of each order and picks the
//! cheapest one under a tree-separable cost model. Execution runs the chosen
//! loop nest and can be checked against an unfactorized reference.

pub mod cost;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod index;
pub mod kernel;
pub mod loopnest;
pub mod optimizer;
pub mod path;
pub mod tensor;

pub use cost::{eval_cost, parse_cost_model, CostContext, CostModel, CostValue};
pub use error::{Error, Result};
pub use exec::{
    build_sparse_input, execute_unfactorized, flops_estimate, prepare, ExecOutput, ExecPlan,
    ExecStats, PrepareOptions,
};
pub use index::{IndexId, IndexSet};
pub use kernel::{
    kernel_indices, kernel_signature, parse_kernel, parse_kernel_with_shapes, KernelSpec,
    TensorKind, TensorRef,
};
pub use loopnest::{build_forest, enumerate_orders, FusedLoopForest, LoopOrder, SparseConstraint};
pub use optimizer::{joint_search, order_dp, order_exhaustive, SearchOptions, SearchResult};
pub use path::{
    enumerate_paths, filter_min_depth, ContractionPath, ContractionTerm, Operand, PathTree,
};
pub use tensor::{CsfTensor, DenseTensor, SparseCoo};
