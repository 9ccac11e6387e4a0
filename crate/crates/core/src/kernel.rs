//! SpTTN kernel descriptions: one sparse input, several dense inputs and an
//! output that is either dense or shares the sparse input's pattern.
//!
//! Text form:
//!
//! ```text
//! T[i,j,k] * B[j,a] * C[k,a] -> A[i,a]
//! T[i,j,k] * U[i,r] * V[j,r] * W[k,r] -> S[i,j,k] @sparse_out
//! ```
//!
//! The first factor is always the sparse tensor. Whitespace is ignored.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::index::{IndexId, IndexSet, MAX_INDICES};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TensorKind {
    SparseInput,
    DenseInput,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorRef {
    pub name: String,
    pub indices: Vec<IndexId>,
    pub kind: TensorKind,
}

impl TensorRef {
    pub fn index_set(&self) -> IndexSet {
        IndexSet::from_ids(self.indices.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexDef {
    pub name: String,
    pub dim: usize,
}

/// A validated kernel. Tensor 0 is the sparse input, the last tensor is the
/// output, everything in between is a dense input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    tensors: Vec<TensorRef>,
    indices: Vec<IndexDef>,
    output_sparse: bool,
}

impl KernelSpec {
    pub fn tensors(&self) -> &[TensorRef] {
        &self.tensors
    }

    /// Input tensors; position 0 is the sparse tensor.
    pub fn inputs(&self) -> &[TensorRef] {
        &self.tensors[..self.tensors.len() - 1]
    }

    pub fn num_inputs(&self) -> usize {
        self.tensors.len() - 1
    }

    pub fn sparse(&self) -> &TensorRef {
        &self.tensors[0]
    }

    pub fn output(&self) -> &TensorRef {
        self.tensors.last().expect("kernel has an output")
    }

    pub fn output_sparse(&self) -> bool {
        self.output_sparse
    }

    pub fn indices(&self) -> &[IndexDef] {
        &self.indices
    }

    pub fn num_indices(&self) -> usize {
        self.indices.len()
    }

    pub fn dim(&self, id: IndexId) -> usize {
        self.indices[id.pos()].dim
    }

    pub fn index_name(&self, id: IndexId) -> &str {
        &self.indices[id.pos()].name
    }

    pub fn index_by_name(&self, name: &str) -> Option<IndexId> {
        self.indices
            .iter()
            .position(|d| d.name == name)
            .map(|p| IndexId(p as u8))
    }

    pub fn tensor_by_name(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn dims_map(&self) -> BTreeMap<String, usize> {
        self.indices
            .iter()
            .map(|d| (d.name.clone(), d.dim))
            .collect()
    }

    pub fn sparse_indices(&self) -> IndexSet {
        self.sparse().index_set()
    }

    pub fn all_indices(&self) -> IndexSet {
        self.tensors
            .iter()
            .fold(IndexSet::EMPTY, |acc, t| acc.union(t.index_set()))
    }

    pub fn contracted_indices(&self) -> IndexSet {
        self.all_indices().minus(self.output().index_set())
    }

    pub fn shape_of(&self, tensor: usize) -> Vec<usize> {
        self.tensors[tensor]
            .indices
            .iter()
            .map(|&i| self.dim(i))
            .collect()
    }

    /// Canonical text; re-parses to an equal spec given the same dimensions.
    pub fn canonical(&self) -> String {
        let fmt_tensor = |t: &TensorRef| {
            let names: Vec<&str> = t.indices.iter().map(|&i| self.index_name(i)).collect();
            format!("{}[{}]", t.name, names.join(","))
        };
        let inputs: Vec<String> = self.inputs().iter().map(fmt_tensor).collect();
        let mut s = format!("{}->{}", inputs.join("*"), fmt_tensor(self.output()));
        if self.output_sparse {
            s.push_str(" @sparse_out");
        }
        s
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// All indices and the contracted (summed) ones.
pub fn kernel_indices(spec: &KernelSpec) -> (IndexSet, IndexSet) {
    (spec.all_indices(), spec.contracted_indices())
}

/// Parses and validates a kernel. `dims` must give a size for every index.
pub fn parse_kernel(text: &str, dims: &BTreeMap<String, usize>) -> Result<KernelSpec> {
    parse_kernel_with_shapes(text, dims, &BTreeMap::new())
}

/// Like [`parse_kernel`], additionally checking tensor shapes known from
/// data files. An index missing from `dims` takes its size from a shape.
pub fn parse_kernel_with_shapes(
    text: &str,
    dims: &BTreeMap<String, usize>,
    shapes: &BTreeMap<String, Vec<usize>>,
) -> Result<KernelSpec> {
    let parsed = Parser::new(text).kernel()?;
    build_spec(parsed, dims, shapes)
}

/// Tensor names with their index names, inputs first and the output last,
/// before any dimension checks.
pub fn kernel_signature(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let parsed = Parser::new(text).kernel()?;
    Ok(parsed
        .inputs
        .into_iter()
        .chain(std::iter::once(parsed.output))
        .map(|t| (t.name, t.indices))
        .collect())
}

struct RawTensor {
    name: String,
    indices: Vec<String>,
}

struct RawKernel {
    inputs: Vec<RawTensor>,
    output: RawTensor,
    sparse_out: bool,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            column: self.pos + 1,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok.as_bytes()) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", tok))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let ok =
                c.is_ascii_alphabetic() || c == b'_' || (self.pos > start && c.is_ascii_digit());
            if !ok {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected identifier");
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn tensor(&mut self) -> Result<RawTensor> {
        let name = self.ident()?;
        self.expect("[")?;
        let mut indices = vec![self.ident()?];
        while self.eat(",") {
            let col = self.pos;
            let idx = self.ident()?;
            if indices.contains(&idx) {
                return Err(Error::Parse {
                    column: col + 1,
                    message: format!("index '{}' repeated in tensor '{}'", idx, name),
                });
            }
            indices.push(idx);
        }
        self.expect("]")?;
        Ok(RawTensor { name, indices })
    }

    fn kernel(&mut self) -> Result<RawKernel> {
        let mut inputs = vec![self.tensor()?];
        while self.eat("*") {
            inputs.push(self.tensor()?);
        }
        self.expect("->")?;
        let output = self.tensor()?;
        let sparse_out = self.eat("@sparse_out");
        self.skip_ws();
        if self.pos != self.src.len() {
            return self.err("unexpected trailing input");
        }
        Ok(RawKernel {
            inputs,
            output,
            sparse_out,
        })
    }
}

fn build_spec(
    raw: RawKernel,
    dims: &BTreeMap<String, usize>,
    shapes: &BTreeMap<String, Vec<usize>>,
) -> Result<KernelSpec> {
    let sparse_name = raw.inputs[0].name.clone();
    let mut names: Vec<&str> = Vec::new();
    for t in raw.inputs.iter().chain(std::iter::once(&raw.output)) {
        if names.contains(&t.name.as_str()) {
            if t.name == sparse_name {
                return Err(Error::Validation(format!(
                    "sparse tensor '{}' used more than once; exactly one sparse input is allowed",
                    t.name
                )));
            }
            return Err(Error::Validation(format!(
                "tensor name '{}' used more than once",
                t.name
            )));
        }
        names.push(&t.name);
    }

    let mut index_names: Vec<String> = Vec::new();
    for t in raw.inputs.iter().chain(std::iter::once(&raw.output)) {
        for i in &t.indices {
            if !index_names.contains(i) {
                index_names.push(i.clone());
            }
        }
    }
    if index_names.len() > MAX_INDICES {
        return Err(Error::Validation(format!(
            "kernel uses {} indices, at most {} are supported",
            index_names.len(),
            MAX_INDICES
        )));
    }

    // sizes: explicit dims first, then shapes; all sources must agree
    let mut sizes: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    for name in &index_names {
        if let Some(&d) = dims.get(name) {
            sizes.insert(name, (d, "--dims".to_string()));
        }
    }
    for t in raw.inputs.iter().chain(std::iter::once(&raw.output)) {
        let Some(shape) = shapes.get(&t.name) else {
            continue;
        };
        if shape.len() != t.indices.len() {
            return Err(Error::Validation(format!(
                "tensor '{}' has {} modes in the kernel but {} in its data",
                t.name,
                t.indices.len(),
                shape.len()
            )));
        }
        for (i, &d) in t.indices.iter().zip(shape) {
            match sizes.get(i.as_str()) {
                Some((prev, from)) if *prev != d => {
                    return Err(Error::Validation(format!(
                        "dimension mismatch for index '{}': {} from {} vs {} from tensor '{}'",
                        i, prev, from, d, t.name
                    )));
                }
                Some(_) => {}
                None => {
                    sizes.insert(i, (d, format!("tensor '{}'", t.name)));
                }
            }
        }
    }
    let mut indices = Vec::with_capacity(index_names.len());
    for name in &index_names {
        let Some(&(dim, _)) = sizes.get(name.as_str()) else {
            return Err(Error::Validation(format!(
                "no dimension given for index '{}'",
                name
            )));
        };
        if dim == 0 {
            return Err(Error::Validation(format!(
                "index '{}' has dimension 0",
                name
            )));
        }
        indices.push(IndexDef {
            name: name.clone(),
            dim,
        });
    }

    let lookup = |n: &String| IndexId(index_names.iter().position(|x| x == n).unwrap() as u8);
    let mut tensors = Vec::with_capacity(raw.inputs.len() + 1);
    for (p, t) in raw.inputs.iter().enumerate() {
        tensors.push(TensorRef {
            name: t.name.clone(),
            indices: t.indices.iter().map(lookup).collect(),
            kind: if p == 0 {
                TensorKind::SparseInput
            } else {
                TensorKind::DenseInput
            },
        });
    }
    tensors.push(TensorRef {
        name: raw.output.name.clone(),
        indices: raw.output.indices.iter().map(lookup).collect(),
        kind: TensorKind::Output,
    });

    let spec = KernelSpec {
        tensors,
        indices,
        output_sparse: raw.sparse_out,
    };
    let input_set = spec
        .inputs()
        .iter()
        .fold(IndexSet::EMPTY, |acc, t| acc.union(t.index_set()));
    for &i in &spec.output().indices {
        if !input_set.contains(i) {
            return Err(Error::Validation(format!(
                "output index '{}' does not appear in any input",
                spec.index_name(i)
            )));
        }
    }
    if spec.output_sparse && spec.output().index_set() != spec.sparse_indices() {
        return Err(Error::Validation(
            "@sparse_out requires the output to have exactly the sparse tensor's indices".into(),
        ));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn dims(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn names(spec: &KernelSpec, set: IndexSet) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|i| spec.index_name(i).to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn mttkrp() {
        let d = dims(&[("i", 4), ("j", 5), ("k", 6), ("a", 3)]);
        let spec = parse_kernel("T[i,j,k]*B[j,a]*C[k,a]->A[i,a]", &d).unwrap();
        assert_eq!(spec.num_inputs(), 3);
        assert_eq!(spec.sparse().name, "T");
        assert_eq!(spec.output().name, "A");
        assert!(!spec.output_sparse());
        let (all, contracted) = kernel_indices(&spec);
        assert_eq!(names(&spec, all), ["a", "i", "j", "k"]);
        assert_eq!(names(&spec, contracted), ["j", "k"]);
    }

    #[test]
    fn ttmc_contracted() {
        let d = dims(&[("i", 4), ("j", 5), ("k", 6), ("r", 2), ("s", 3)]);
        let spec = parse_kernel("T[i,j,k]*U[j,r]*V[k,s]->S[i,r,s]", &d).unwrap();
        let (all, contracted) = kernel_indices(&spec);
        assert_eq!(all.len(), 5);
        assert_eq!(names(&spec, contracted), ["j", "k"]);
    }

    #[test]
    fn tttp_sparse_output() {
        let d = dims(&[("i", 4), ("j", 5), ("k", 6), ("r", 2)]);
        let spec = parse_kernel(
            " T[i, j, k] * U[i,r]*V[j,r]*W[k,r] -> S[i,j,k]  @sparse_out ",
            &d,
        )
        .unwrap();
        assert!(spec.output_sparse());
        assert_eq!(names(&spec, spec.contracted_indices()), ["r"]);
    }

    #[test]
    fn minimal_two_tensor_kernel() {
        let d = dims(&[("i", 4), ("j", 5), ("r", 2)]);
        let spec = parse_kernel("T[i,j]*U[j,r]->S[i,r]", &d).unwrap();
        assert_eq!(spec.num_inputs(), 2);
    }

    #[test]
    fn canonical_round_trip() {
        let d = dims(&[("i", 4), ("j", 5), ("k", 6), ("r", 2)]);
        for text in [
            "T[i,j,k]*U[i,r]*V[j,r]*W[k,r]->S[i,j,k] @sparse_out",
            "  T [ i , j ] * U [ j , r ] -> S [ i , r ] ",
        ] {
            let spec = parse_kernel(text, &d).unwrap();
            let again = parse_kernel(&spec.canonical(), &d).unwrap();
            assert_eq!(spec, again);
            assert_eq!(again.canonical(), spec.canonical());
        }
    }

    #[test]
    fn errors() {
        let d = dims(&[("i", 4), ("j", 5), ("k", 6), ("r", 2)]);
        assert!(matches!(
            parse_kernel("T[i,i]*U[i,r]->S[r]", &d),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_kernel("T[i,j]*T[j,r]->S[i,r]", &d),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_kernel("T[i,j]*U[j,r]->S[i,k]", &d),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_kernel("T[i,j]*U[j,q]->S[i,q]", &d),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_kernel("T[i,j]*U[j,r]->S[i,r] @sparse_out", &d),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_kernel("T[i,j]*U[j,r]", &d),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_kernel("T[i,j]*U[j,r]->S[i,r] x", &d),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn shape_mismatch_is_validation_error() {
        let d = dims(&[("r", 2)]);
        let mut shapes = BTreeMap::new();
        shapes.insert("T".to_string(), vec![4, 5]);
        let spec = parse_kernel_with_shapes("T[i,j]*U[j,r]->S[i,r]", &d, &shapes).unwrap();
        assert_eq!(spec.dim(spec.index_by_name("j").unwrap()), 5);
        shapes.insert("U".to_string(), vec![6, 2]);
        assert!(matches!(
            parse_kernel_with_shapes("T[i,j]*U[j,r]->S[i,r]", &d, &shapes),
            Err(Error::Validation(_))
        ));
    }
}
