//! Hilbert curve keys for quantized sub-space projections.
//!
//! The mapping is the Butz construction in Skilling's "transpose" form: the
//! grid point is transformed in place into the Gray-coded transpose of its
//! curve index, whose bits are then interleaved most-significant first. All
//! state is computed on the fly, so any dimensionality works without tables.
//!
//! Keys are fixed-width big-endian byte strings, so byte order is curve order.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::types::Domain;

/// Largest supported order (bits per dimension).
pub const MAX_ORDER: u32 = 32;

/// Cell coordinates on the `2^order` grid of one partition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub cells: Vec<u32>,
}

impl GridPoint {
    pub fn new(cells: Vec<u32>) -> Self {
        Self { cells }
    }
}

/// Position of a grid cell along the curve, big-endian.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HilbertKey(Vec<u8>);

impl HilbertKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    /// Encodes `value` into `len` big-endian bytes; high bits beyond `len`
    /// are dropped.
    pub fn from_u128(value: u128, len: usize) -> Self {
        let full = value.to_be_bytes();
        let mut out = vec![0u8; len];
        for (i, b) in out.iter_mut().rev().enumerate() {
            if i < 16 {
                *b = full[15 - i];
            }
        }
        Self(out)
    }

    /// Numeric value for keys of at most 16 significant bytes.
    pub fn to_u128(&self) -> Option<u128> {
        let lead = self.0.len().saturating_sub(16);
        if self.0[..lead].iter().any(|&b| b != 0) {
            return None;
        }
        Some(
            self.0[lead..]
                .iter()
                .fold(0u128, |acc, &b| (acc << 8) | b as u128),
        )
    }
}

impl fmt::Debug for HilbertKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HilbertKey(0x")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// `|a - b|` for equal-width big-endian keys, written into `out`.
pub(crate) fn abs_diff_into(a: &[u8], b: &[u8], out: &mut Vec<u8>) {
    debug_assert_eq!(a.len(), b.len());
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    out.clear();
    out.resize(hi.len(), 0);
    let mut borrow = 0i16;
    for i in (0..hi.len()).rev() {
        let mut v = hi[i] as i16 - lo[i] as i16 - borrow;
        if v < 0 {
            v += 256;
            borrow = 1;
        } else {
            borrow = 0;
        }
        out[i] = v as u8;
    }
}

/// Compares `|a - probe|` with `|b - probe|`.
pub fn cmp_key_distance(probe: &[u8], a: &[u8], b: &[u8]) -> Ordering {
    let mut da = Vec::with_capacity(probe.len());
    let mut db = Vec::with_capacity(probe.len());
    abs_diff_into(a, probe, &mut da);
    abs_diff_into(b, probe, &mut db);
    da.cmp(&db)
}

/// A Hilbert curve over `dims` dimensions with `order` bits per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertCurve {
    dims: usize,
    order: u32,
}

impl HilbertCurve {
    pub fn new(dims: usize, order: u32) -> Result<Self> {
        if dims == 0 {
            return Err(Error::config("Hilbert curve needs at least one dimension"));
        }
        if order == 0 || order > MAX_ORDER {
            return Err(Error::config(format!(
                "Hilbert order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        Ok(Self { dims, order })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn key_bits(&self) -> usize {
        self.dims * self.order as usize
    }

    pub fn key_len(&self) -> usize {
        self.key_bits().div_ceil(8)
    }

    fn side(&self) -> u64 {
        1u64 << self.order
    }

    /// Floor-based affine map of each coordinate from the domain onto cells
    /// `[0, 2^order - 1]`, clamping out-of-range values to the boundary cells.
    pub fn quantize(&self, coords: &[f32], domain: Domain) -> Result<GridPoint> {
        if coords.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: coords.len(),
            });
        }
        quantize(coords, domain, self.order)
    }

    pub fn encode(&self, point: &GridPoint) -> Result<HilbertKey> {
        if point.cells.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: point.cells.len(),
            });
        }
        let side = self.side();
        if let Some(&c) = point.cells.iter().find(|&&c| c as u64 >= side) {
            return Err(Error::Domain(format!(
                "cell index {c} exceeds order {} grid",
                self.order
            )));
        }
        let mut x: Vec<u64> = point.cells.iter().map(|&c| c as u64).collect();
        axes_to_transpose(&mut x, self.order);
        Ok(HilbertKey(self.interleave(&x)))
    }

    pub fn decode(&self, key: &HilbertKey) -> Result<GridPoint> {
        let bytes = key.as_bytes();
        if bytes.len() != self.key_len() {
            return Err(Error::Domain(format!(
                "key of {} bytes does not match curve key width {}",
                bytes.len(),
                self.key_len()
            )));
        }
        let spare = self.key_len() * 8 - self.key_bits();
        if spare > 0 && bytes[0] >> (8 - spare) != 0 {
            return Err(Error::Domain(format!(
                "key exceeds 2^{} for this curve",
                self.key_bits()
            )));
        }
        let mut x = self.deinterleave(bytes);
        transpose_to_axes(&mut x, self.order);
        Ok(GridPoint::new(x.into_iter().map(|c| c as u32).collect()))
    }

    /// Quantize then encode.
    pub fn key_of(&self, coords: &[f32], domain: Domain) -> Result<HilbertKey> {
        self.encode(&self.quantize(coords, domain)?)
    }

    fn interleave(&self, x: &[u64]) -> Vec<u8> {
        let len = self.key_len();
        let total = self.key_bits();
        let mut out = vec![0u8; len];
        let mut pos = 0usize; // bit position counted from the most significant
        for bit in (0..self.order).rev() {
            for xi in x {
                if (xi >> bit) & 1 == 1 {
                    let idx = total - 1 - pos;
                    out[len - 1 - idx / 8] |= 1 << (idx % 8);
                }
                pos += 1;
            }
        }
        out
    }

    fn deinterleave(&self, bytes: &[u8]) -> Vec<u64> {
        let len = bytes.len();
        let total = self.key_bits();
        let mut x = vec![0u64; self.dims];
        let mut pos = 0usize;
        for bit in (0..self.order).rev() {
            for xi in x.iter_mut() {
                let idx = total - 1 - pos;
                if (bytes[len - 1 - idx / 8] >> (idx % 8)) & 1 == 1 {
                    *xi |= 1 << bit;
                }
                pos += 1;
            }
        }
        x
    }
}

/// Stand-alone quantizer; see [`HilbertCurve::quantize`].
pub fn quantize(coords: &[f32], domain: Domain, order: u32) -> Result<GridPoint> {
    if domain.lo.partial_cmp(&domain.hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::config(format!(
            "degenerate value domain [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    if order == 0 || order > MAX_ORDER {
        return Err(Error::config(format!(
            "Hilbert order must be in 1..={MAX_ORDER}"
        )));
    }
    let cells = (1u64 << order) as f64;
    let max = (1u64 << order) - 1;
    let width = domain.hi - domain.lo;
    let grid = coords
        .iter()
        .map(|&c| {
            let t = ((c as f64 - domain.lo) / width * cells).floor();
            if t <= 0.0 {
                0
            } else if t >= max as f64 {
                max as u32
            } else {
                t as u32
            }
        })
        .collect();
    Ok(GridPoint::new(grid))
}

fn axes_to_transpose(x: &mut [u64], order: u32) {
    let n = x.len();
    let m = 1u64 << (order - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0u64;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for xi in x.iter_mut() {
        *xi ^= t;
    }
}

fn transpose_to_axes(x: &mut [u64], order: u32) {
    let n = x.len();
    let end = 2u64 << (order - 1);
    let t = x[n - 1] >> 1;
    for i in (1..n).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    let mut q = 2u64;
    while q != end {
        let p = q - 1;
        for i in (0..n).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
}
