//! Dense kernels on row-major slices, generic over the scalar type.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used by the networks (`f32` for training, `f64`
/// for gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::iter::Sum
    + Default
    + core::fmt::Debug
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Dot product with eight independent accumulators so the compiler can
/// vectorize without reassociating.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let pa = &a[c * 8..c * 8 + 8];
        let pb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a·x`
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y[r×n] = x[r×k]·w[k×n] + b[n]`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], b: &[T], rows: usize, k: usize, n: usize, y: &mut [T]) {
    debug_assert_eq!(x.len(), rows * k);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(y.len(), rows * n);
    for i in 0..rows {
        let yi = &mut y[i * n..(i + 1) * n];
        yi.copy_from_slice(b);
        for (kk, &a) in x[i * k..(i + 1) * k].iter().enumerate() {
            if a != T::zero() {
                axpy(a, &w[kk * n..(kk + 1) * n], yi);
            }
        }
    }
}

/// `out[r×c] (+)= a[r×inner]·b[c×inner]ᵀ`.
pub fn matmul_bt<T: Scalar>(
    a: &[T],
    b: &[T],
    rows: usize,
    inner: usize,
    cols: usize,
    out: &mut [T],
    accumulate: bool,
) {
    for i in 0..rows {
        let ai = &a[i * inner..(i + 1) * inner];
        for j in 0..cols {
            let v = dot(ai, &b[j * inner..(j + 1) * inner]);
            let o = &mut out[i * cols + j];
            if accumulate {
                *o += v;
            } else {
                *o = v;
            }
        }
    }
}

/// `dw[k×n] += x[r×k]ᵀ·dy[r×n]` and, when given, `db[n] += colsum(dy)`.
pub fn accumulate_weight_grad<T: Scalar>(
    x: &[T],
    dy: &[T],
    rows: usize,
    k: usize,
    n: usize,
    dw: &mut [T],
    db: Option<&mut [T]>,
) {
    for i in 0..rows {
        let dyi = &dy[i * n..(i + 1) * n];
        for (kk, &a) in x[i * k..(i + 1) * k].iter().enumerate() {
            if a != T::zero() {
                axpy(a, dyi, &mut dw[kk * n..(kk + 1) * n]);
            }
        }
    }
    if let Some(db) = db {
        for i in 0..rows {
            for (d, &g) in db.iter_mut().zip(&dy[i * n..(i + 1) * n]) {
                *d += g;
            }
        }
    }
}

/// In-place softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = sum.recip();
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Log-softmax of `logits` in f64.
pub fn log_softmax(logits: &[f64]) -> alloc::vec::Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
