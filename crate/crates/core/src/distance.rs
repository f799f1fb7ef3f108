use crate::error::{Error, Result};

/// Euclidean (L2) distance between two coordinate sequences, accumulated in
/// 64-bit precision.
pub fn euclidean(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(l2(a, b))
}

/// Unchecked variant for hot loops where lengths are known to agree.
#[inline]
pub(crate) fn l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
