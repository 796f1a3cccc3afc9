//! Dense vector kernels with multiply-add accounting.
//!
//! Every kernel adds the number of scalar multiply-adds it performed to a
//! caller-owned counter. Kernels never branch on values, so the count depends
//! only on the vector length.

use crate::error::{Error, Result};

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            actual,
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64], flops: &mut u64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    *flops += a.len() as u64;
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += k * x`
#[inline]
pub(crate) fn axpy(k: f64, x: &[f64], y: &mut [f64], flops: &mut u64) {
    debug_assert_eq!(x.len(), y.len());
    *flops += x.len() as u64;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// `y *= k`
#[inline]
pub(crate) fn scale(k: f64, y: &mut [f64], flops: &mut u64) {
    *flops += y.len() as u64;
    for yi in y.iter_mut() {
        *yi *= k;
    }
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
