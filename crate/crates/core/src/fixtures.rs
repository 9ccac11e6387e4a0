//! Kernel constructors for the canonical SpTTN kernels, used by tests,
//! benchmarks and the CLI examples.

use std::collections::BTreeMap;

use crate::kernel::{parse_kernel, KernelSpec};

pub const MTTKRP3: &str = "T[i,j,k]*B[j,a]*C[k,a]->A[i,a]";
pub const TTMC3: &str = "T[i,j,k]*U[j,r]*V[k,s]->S[i,r,s]";
pub const TTTP3: &str = "T[i,j,k]*U[i,r]*V[j,r]*W[k,r]->S[i,j,k] @sparse_out";
pub const TTMC4: &str = "T[i,j,k,l]*U[j,r]*V[k,s]*W[l,t]->S[i,r,s,t]";
pub const TTTC4: &str = "T[i,j,k,l]*A[i,a]*B[a,j,b]*C[b,k,c]->Z[c,l]";

fn dims(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn mttkrp3(i: usize, j: usize, k: usize, a: usize) -> KernelSpec {
    parse_kernel(MTTKRP3, &dims(&[("i", i), ("j", j), ("k", k), ("a", a)])).unwrap()
}

pub fn ttmc3(i: usize, j: usize, k: usize, r: usize, s: usize) -> KernelSpec {
    parse_kernel(
        TTMC3,
        &dims(&[("i", i), ("j", j), ("k", k), ("r", r), ("s", s)]),
    )
    .unwrap()
}

pub fn tttp3(i: usize, j: usize, k: usize, r: usize) -> KernelSpec {
    parse_kernel(TTTP3, &dims(&[("i", i), ("j", j), ("k", k), ("r", r)])).unwrap()
}

/// Order-4 TTMc with sparse modes of size `n` and ranks `rank`.
pub fn ttmc4(n: usize, rank: usize) -> KernelSpec {
    let d = dims(&[
        ("i", n),
        ("j", n),
        ("k", n),
        ("l", n),
        ("r", rank),
        ("s", rank),
        ("t", rank),
    ]);
    parse_kernel(TTMC4, &d).unwrap()
}

/// Order-4 tensor-train chain: contraction with all cores except the last.
pub fn tttc4(n: usize, rank: usize) -> KernelSpec {
    let d = dims(&[
        ("i", n),
        ("j", n),
        ("k", n),
        ("l", n),
        ("a", rank),
        ("b", rank),
        ("c", rank),
    ]);
    parse_kernel(TTTC4, &d).unwrap()
}

pub fn spmm(i: usize, j: usize, r: usize) -> KernelSpec {
    parse_kernel(
        "T[i,j]*U[j,r]->S[i,r]",
        &dims(&[("i", i), ("j", j), ("r", r)]),
    )
    .unwrap()
}

/// Chain `T[x0,x1]*F1[x1,x2]*...->S[x0,xn]` with `n` inputs.
pub fn chain_kernel(n: usize) -> KernelSpec {
    assert!(n >= 2);
    let mut factors = vec!["T[x0,x1]".to_string()];
    for f in 1..n {
        factors.push(format!("F{}[x{},x{}]", f, f, f + 1));
    }
    let text = format!("{}->S[x0,x{}]", factors.join("*"), n);
    let d: BTreeMap<String, usize> = (0..=n).map(|x| (format!("x{}", x), 2)).collect();
    parse_kernel(&text, &d).unwrap()
}

/// The five fixture kernels with small dimensions.
pub fn all_small() -> Vec<KernelSpec> {
    vec![
        mttkrp3(4, 3, 5, 2),
        ttmc3(4, 3, 5, 2, 3),
        tttp3(4, 3, 5, 2),
        ttmc4(3, 2),
        tttc4(3, 2),
    ]
}
