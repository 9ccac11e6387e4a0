//! Run reports: a JSON document and an equivalent flat `key = value` text
//! form (nested keys joined with `.`, list items by position).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const COUNTING_CONVENTION: &str =
    "one multiply plus one add per pairwise term body; k factors per unfactorized body";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferRow {
    pub name: String,
    /// 1-based term ids.
    pub producer: usize,
    pub consumer: usize,
    pub indices: String,
    pub order: usize,
    pub elements: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub paths_considered: usize,
    pub subproblems: u64,
    pub memo_hits: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecRow {
    pub multiply_adds: u64,
    pub peak_buffer_bytes: usize,
    pub buffer_resets: Vec<u64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub oracle_multiply_adds: u64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub kernel: String,
    pub dims: BTreeMap<String, usize>,
    pub path: String,
    pub max_loop_depth: usize,
    /// Per-term loop orders, e.g. `i,j,k,s`.
    pub orders: Vec<String>,
    pub buffers: Vec<BufferRow>,
    pub cost_model: String,
    pub cost: String,
    /// Cost of the chosen order under each standard model.
    pub costs: BTreeMap<String, String>,
    pub search: Option<SearchRow>,
    pub nnz: Option<usize>,
    pub nnz_per_level: Vec<usize>,
    pub flops_estimate: Option<u64>,
    pub hooks: Vec<String>,
    pub exec: Option<ExecRow>,
    pub verification: Option<VerifyRow>,
    pub counting_convention: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// Position in the model ranking, from 1.
    pub rank: usize,
    pub path: String,
    pub orders: Vec<String>,
    pub cost: String,
    pub multiply_adds: u64,
    pub best_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub kernel: String,
    pub cost_model: String,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
    /// Rank pairs `(a, b)` with `a` cheaper by the model but slower measured.
    pub inversions: Vec<(usize, usize)>,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}

/// Flattens a JSON value into `key -> text` pairs.
pub fn flatten(value: &Value) -> BTreeMap<String, String> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{}.{}", prefix, k)
            }
        };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(&key(k), v, out)),
            Value::Array(a) => a
                .iter()
                .enumerate()
                .for_each(|(i, v)| walk(&key(&i.to_string()), v, out)),
            Value::String(s) => {
                out.insert(prefix.to_string(), s.clone());
            }
            other => {
                out.insert(prefix.to_string(), other.to_string());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", value, &mut out);
    out
}

/// `key = value` lines in key order.
pub fn to_kv<T: Serialize>(report: &T) -> String {
    let value = serde_json::to_value(report).expect("reports serialize");
    flatten(&value)
        .into_iter()
        .map(|(k, v)| format!("{} = {}\n", k, v))
        .collect()
}

pub fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
