//! Dense inner kernels the executor offloads trailing dense loops to.
//!
//! Every kernel accumulates in the same order as the scalar loop nest it
//! replaces, so results are bit-identical with and without offload.

/// Dispatch seam for dense micro-kernels.
pub trait MicroKernels: Send + Sync {
    /// `out[x*so] += a[x*sa] * b[x*sb]` for `x < n`.
    #[allow(clippy::too_many_arguments)]
    fn vector(
        &self,
        n: usize,
        out: &mut [f64],
        so: usize,
        a: &[f64],
        sa: usize,
        b: &[f64],
        sb: usize,
    );

    /// `out[x*sm + y*sn] += a[x*sa] * b[y*sb]` for `x < m`, `y < n`.
    #[allow(clippy::too_many_arguments)]
    fn rank1(
        &self,
        m: usize,
        n: usize,
        out: &mut [f64],
        sm: usize,
        sn: usize,
        a: &[f64],
        sa: usize,
        b: &[f64],
        sb: usize,
    );
}

/// Straightforward in-repo kernels.
#[derive(Copy, Clone, Debug, Default)]
pub struct Portable;

impl MicroKernels for Portable {
    #[inline]
    fn vector(
        &self,
        n: usize,
        out: &mut [f64],
        so: usize,
        a: &[f64],
        sa: usize,
        b: &[f64],
        sb: usize,
    ) {
        if so == 1 && sa == 1 && sb == 1 {
            for ((o, x), y) in out[..n].iter_mut().zip(&a[..n]).zip(&b[..n]) {
                *o += x * y;
            }
        } else if so == 1 && sa == 0 && sb == 1 {
            let s = a[0];
            for (o, y) in out[..n].iter_mut().zip(&b[..n]) {
                *o += s * y;
            }
        } else if so == 1 && sa == 1 && sb == 0 {
            let s = b[0];
            for (o, x) in out[..n].iter_mut().zip(&a[..n]) {
                *o += x * s;
            }
        } else {
            for x in 0..n {
                out[x * so] += a[x * sa] * b[x * sb];
            }
        }
    }

    #[inline]
    fn rank1(
        &self,
        m: usize,
        n: usize,
        out: &mut [f64],
        sm: usize,
        sn: usize,
        a: &[f64],
        sa: usize,
        b: &[f64],
        sb: usize,
    ) {
        for x in 0..m {
            let ax = a[x * sa];
            let row = &mut out[x * sm..];
            for y in 0..n {
                row[y * sn] += ax * b[y * sb];
            }
        }
    }
}
