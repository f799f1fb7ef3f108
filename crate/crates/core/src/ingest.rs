//! fvecs / bvecs / ivecs reading and writing, plus dataset preprocessing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Dataset, Domain, VectorRecord};

/// Default factor for [`scale_to_integer`] on real-valued data.
pub const DEFAULT_SCALE: f64 = 1e5;

/// Element type of a vecs file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VecKind {
    /// `.fvecs`: 4-byte float.
    F32,
    /// `.bvecs`: 1-byte unsigned.
    U8,
    /// `.ivecs`: 4-byte signed integer.
    I32,
}

impl VecKind {
    pub fn element_size(self) -> usize {
        match self {
            VecKind::U8 => 1,
            VecKind::F32 | VecKind::I32 => 4,
        }
    }

    /// Guesses the kind from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecKind::F32),
            "bvecs" => Some(VecKind::U8),
            "ivecs" => Some(VecKind::I32),
            _ => None,
        }
    }
}

/// Summary of a vecs file on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VecFile {
    pub kind: VecKind,
    pub dim: usize,
    pub count: usize,
}

impl VecFile {
    /// Checks the file length against the dimension in its first record.
    pub fn inspect(path: impl AsRef<Path>, kind: VecKind) -> Result<Self> {
        let mut f = File::open(path)?;
        let len = f.metadata()?.len();
        if len == 0 {
            return Ok(Self {
                kind,
                dim: 0,
                count: 0,
            });
        }
        let mut head = [0u8; 4];
        f.read_exact(&mut head)
            .map_err(|_| Error::format("truncated record header"))?;
        let dim = read_dim(head, 0)?;
        let rec = 4 + dim as u64 * kind.element_size() as u64;
        if len % rec != 0 {
            return Err(Error::format(format!(
                "file length {len} is not a multiple of the record size {rec}"
            )));
        }
        Ok(Self {
            kind,
            dim,
            count: (len / rec) as usize,
        })
    }
}

fn read_dim(head: [u8; 4], record: usize) -> Result<usize> {
    let d = i32::from_le_bytes(head);
    if d <= 0 {
        return Err(Error::format(format!("record {record} has dimension {d}")));
    }
    Ok(d as usize)
}

/// Reads a vecs stream; ids follow file order. The dimension comes from
/// the first record. `u8` data gets the fixed domain `[0, 255]`; other
/// kinds take their bounds from a scan.
pub fn read_vecs_from(mut r: impl Read, kind: VecKind) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut dim = 0usize;
    let mut head = [0u8; 4];
    let mut buf = Vec::new();
    loop {
        let mut got = 0;
        while got < 4 {
            match r.read(&mut head[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        match got {
            0 => break,
            4 => {}
            _ => return Err(Error::format("truncated record header")),
        }
        let n = records.len();
        let d = read_dim(head, n)?;
        if n == 0 {
            dim = d;
        } else if d != dim {
            return Err(Error::format(format!(
                "record {n} has dimension {d}, expected {dim}"
            )));
        }
        buf.resize(d * kind.element_size(), 0);
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::format(format!("record {n} truncated")),
            _ => e.into(),
        })?;
        let coords: Vec<f32> = match kind {
            VecKind::U8 => buf.iter().map(|&b| b as f32).collect(),
            VecKind::F32 => buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            VecKind::I32 => buf
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32)
                .collect(),
        };
        records.push(VectorRecord::new(n as u64, coords));
    }
    match kind {
        VecKind::U8 => Dataset::with_domain(dim, records, Domain::new(0.0, 255.0)?),
        _ => Dataset::from_records(dim, records),
    }
}

pub fn read_vecs(path: impl AsRef<Path>, kind: VecKind) -> Result<Dataset> {
    read_vecs_from(BufReader::new(File::open(path)?), kind)
}

/// Writes records in order. Integer kinds require integral coordinates in
/// the element's range.
pub fn write_vecs_to(mut w: impl Write, kind: VecKind, data: &Dataset) -> Result<()> {
    let dim = i32::try_from(data.dim())
        .map_err(|_| Error::InvalidArgument("dimension too large".into()))?;
    for r in data.records() {
        w.write_all(&dim.to_le_bytes())?;
        for &c in &r.coords {
            match kind {
                VecKind::F32 => w.write_all(&c.to_le_bytes())?,
                VecKind::U8 => {
                    if c.fract() != 0.0 || !(0.0..=255.0).contains(&c) {
                        return Err(Error::Overflow {
                            record: r.id,
                            value: c as f64,
                        });
                    }
                    w.write_all(&[c as u8])?
                }
                VecKind::I32 => {
                    if c.fract() != 0.0 || !(i32::MIN as f32..i32::MAX as f32).contains(&c) {
                        return Err(Error::Overflow {
                            record: r.id,
                            value: c as f64,
                        });
                    }
                    w.write_all(&(c as i32).to_le_bytes())?
                }
            }
        }
    }
    Ok(())
}

pub fn write_vecs(path: impl AsRef<Path>, kind: VecKind, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vecs_to(&mut w, kind, data)?;
    w.flush()?;
    Ok(())
}

/// Rows of a dataset as plain vectors (e.g. a query set).
pub fn rows(data: &Dataset) -> Vec<Vec<f32>> {
    data.records().iter().map(|r| r.coords.clone()).collect()
}

fn coord_bits(coords: &[f32]) -> Vec<u32> {
    // -0.0 and 0.0 are the same point
    coords
        .iter()
        .map(|&c| if c == 0.0 { 0 } else { c.to_bits() })
        .collect()
}

/// Drops repeated points, keeping first occurrences; survivors get dense
/// ids in their original order. The domain is kept.
pub fn deduplicate(data: &Dataset) -> Dataset {
    let mut seen = HashSet::new();
    let records = data
        .records()
        .iter()
        .filter(|r| seen.insert(coord_bits(&r.coords)))
        .enumerate()
        .map(|(i, r)| VectorRecord::new(i as u64, r.coords.clone()))
        .collect();
    Dataset::with_domain(data.dim(), records, data.domain()).expect("subset of a valid dataset")
}

/// Multiplies every coordinate by `factor` and rounds to the nearest
/// integer. Values outside the 32-bit signed range are an error naming the
/// record.
pub fn scale_to_integer(data: &Dataset, factor: f64) -> Result<Dataset> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive, got {factor}"
        )));
    }
    let in_range = |v: f64| v >= i32::MIN as f64 && v <= i32::MAX as f64;
    let records = data
        .records()
        .iter()
        .map(|r| {
            let coords = r
                .coords
                .iter()
                .map(|&c| {
                    let v = (c as f64 * factor).round();
                    if in_range(v) {
                        Ok(v as f32)
                    } else {
                        Err(Error::Overflow {
                            record: r.id,
                            value: v,
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VectorRecord::new(r.id, coords))
        })
        .collect::<Result<Vec<_>>>()?;
    let d = data.domain();
    let (lo, hi) = ((d.lo * factor).floor(), (d.hi * factor).ceil());
    for v in [lo, hi] {
        if !in_range(v) {
            return Err(Error::InvalidArgument(format!(
                "scaled domain bound {v} overflows"
            )));
        }
    }
    Dataset::with_domain(data.dim(), records, Domain::new(lo, hi)?)
}

/// Splits `count` randomly chosen records off as queries. Both parts get
/// dense ids in original order.
pub fn reserve_queries(data: &Dataset, count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if count > data.len() {
        return Err(Error::DatasetTooSmall {
            needed: count,
            have: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: HashSet<usize> = rand::seq::index::sample(&mut rng, data.len(), count)
        .into_iter()
        .collect();
    let (mut base, mut queries) = (Vec::new(), Vec::new());
    for (i, r) in data.records().iter().enumerate() {
        let side = if picked.contains(&i) {
            &mut queries
        } else {
            &mut base
        };
        side.push(VectorRecord::new(side.len() as u64, r.coords.clone()));
    }
    Ok((
        Dataset::with_domain(data.dim(), base, data.domain())?,
        Dataset::with_domain(data.dim(), queries, data.domain())?,
    ))
}

/// SHA-256 over dimension, ids and coordinates.
pub fn dataset_checksum(data: &Dataset) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((data.dim() as u64).to_le_bytes());
    for r in data.records() {
        h.update(r.id.to_le_bytes());
        for c in &r.coords {
            h.update(c.to_le_bytes());
        }
    }
    h.finalize().into()
}

/// SHA-256 of a file's bytes.
pub fn file_checksum(path: impl AsRef<Path>) -> Result<[u8; 32]> {
    let mut f = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::exact_knn;
    use rand::Rng;

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_rows(
            dim,
            (0..n)
                .map(|_| (0..dim).map(|_| rng.gen::<f32>()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_file() {
        let d = read_vecs_from(&[][..], VecKind::F32).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn single_record() {
        let mut bytes = 4i32.to_le_bytes().to_vec();
        for v in [0.20f32, 0.74, 0.68, 0.73] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let d = read_vecs_from(&bytes[..], VecKind::F32).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.coords(0), &[0.20, 0.74, 0.68, 0.73]);
        assert_eq!(d.records()[0].id, 0);
    }

    #[test]
    fn byte_roundtrip_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [VecKind::F32, VecKind::U8, VecKind::I32] {
            let dim: i32 = 12;
            let mut bytes = Vec::new();
            for _ in 0..1000 {
                bytes.extend_from_slice(&dim.to_le_bytes());
                for _ in 0..dim {
                    match kind {
                        VecKind::F32 => bytes
                            .extend_from_slice(&(rng.gen::<f32>() * 100.0 - 50.0).to_le_bytes()),
                        VecKind::U8 => bytes.push(rng.gen()),
                        VecKind::I32 => bytes.extend_from_slice(
                            &rng.gen_range(-1_000_000i32..1_000_000).to_le_bytes(),
                        ),
                    }
                }
            }
            let d = read_vecs_from(&bytes[..], kind).unwrap();
            assert_eq!(d.len(), 1000);
            let mut out = Vec::new();
            write_vecs_to(&mut out, kind, &d).unwrap();
            assert_eq!(out, bytes, "{kind:?}");
        }
    }

    #[test]
    fn file_roundtrip_and_inspect() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.fvecs");
        let d = random_dataset(50, 7, 1);
        write_vecs(&p, VecKind::F32, &d).unwrap();
        assert_eq!(
            VecFile::inspect(&p, VecKind::F32).unwrap(),
            VecFile {
                kind: VecKind::F32,
                dim: 7,
                count: 50
            }
        );
        assert_eq!(read_vecs(&p, VecKind::F32).unwrap().records(), d.records());
        assert_eq!(VecKind::from_path(&p), Some(VecKind::F32));
    }

    #[test]
    fn malformed_files() {
        let mut bytes = 2i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[1, 2]);
        bytes.extend_from_slice(&3i32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3]);
        let err = read_vecs_from(&bytes[..], VecKind::U8)
            .unwrap_err()
            .to_string();
        assert!(err.contains("dimension 3, expected 2"), "{err}");

        let mut bytes = 2i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[1]);
        assert!(read_vecs_from(&bytes[..], VecKind::U8)
            .unwrap_err()
            .to_string()
            .contains("truncated"));
        assert!(read_vecs_from(&[2u8, 0][..], VecKind::U8)
            .unwrap_err()
            .to_string()
            .contains("truncated"));
    }

    #[test]
    fn bvecs_domain_is_byte_range() {
        let bytes = [2u8, 0, 0, 0, 10, 20];
        let d = read_vecs_from(&bytes[..], VecKind::U8).unwrap();
        assert_eq!((d.domain().lo, d.domain().hi), (0.0, 255.0));
    }

    #[test]
    fn dedup_cases() {
        let d = random_dataset(20, 3, 2);
        assert_eq!(deduplicate(&d).records(), d.records());

        let same = Dataset::from_rows(2, vec![vec![1.0, 2.0]; 9]).unwrap();
        assert_eq!(deduplicate(&same).len(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pool = rows(&random_dataset(30, 4, 6));
        let picks: Vec<Vec<f32>> = (0..200)
            .map(|_| pool[rng.gen_range(0..30)].clone())
            .collect();
        let d = Dataset::from_rows(4, picks.clone()).unwrap();
        let out = deduplicate(&d);
        let mut oracle: Vec<Vec<f32>> = Vec::new();
        for p in picks {
            if !oracle.contains(&p) {
                oracle.push(p);
            }
        }
        assert_eq!(rows(&out), oracle);
        assert!(out
            .records()
            .iter()
            .enumerate()
            .all(|(i, r)| r.id == i as u64));
        assert_eq!(deduplicate(&out).records(), out.records());
    }

    #[test]
    fn scaling() {
        let ints = Dataset::from_rows(2, vec![vec![3.0, -4.0], vec![7.0, 0.0]]).unwrap();
        assert_eq!(
            scale_to_integer(&ints, 1.0).unwrap().records(),
            ints.records()
        );

        let d = Dataset::from_rows(2, vec![vec![0.18, 0.87]]).unwrap();
        assert_eq!(
            scale_to_integer(&d, 100.0).unwrap().coords(0),
            &[18.0, 87.0]
        );

        let big = Dataset::from_rows(1, vec![vec![1.0], vec![3.0e9]]).unwrap();
        match scale_to_integer(&big, 1.0) {
            Err(Error::Overflow { record, .. }) => assert_eq!(record, 1),
            other => panic!("{other:?}"),
        }
        assert!(scale_to_integer(&d, 0.0).is_err());
    }

    #[test]
    fn scaling_preserves_neighbor_order() {
        let d = random_dataset(500, 6, 8);
        let s = scale_to_integer(&d, 1e4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let i = rng.gen_range(0..d.len());
            let a = exact_knn(&d, d.coords(i), 10).unwrap().ids();
            let b = exact_knn(&s, s.coords(i), 10).unwrap().ids();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reserved_queries_are_disjoint() {
        let d = random_dataset(100, 3, 4);
        let (base, q) = reserve_queries(&d, 10, 1).unwrap();
        assert_eq!((base.len(), q.len()), (90, 10));
        let all: HashSet<Vec<u32>> = rows(&d).iter().map(|r| coord_bits(r)).collect();
        let b: HashSet<Vec<u32>> = rows(&base).iter().map(|r| coord_bits(r)).collect();
        assert!(rows(&q)
            .iter()
            .all(|r| all.contains(&coord_bits(r)) && !b.contains(&coord_bits(r))));
        assert_eq!(reserve_queries(&d, 10, 1).unwrap().1.records(), q.records());
        assert!(reserve_queries(&d, 101, 1).is_err());
    }

    #[test]
    fn checksum_sensitivity() {
        let a = random_dataset(10, 3, 1);
        let mut rows_b = rows(&a);
        rows_b[4][1] += 1e-3;
        let b = Dataset::from_rows(3, rows_b).unwrap();
        assert_eq!(dataset_checksum(&a), dataset_checksum(&a.clone()));
        assert_ne!(dataset_checksum(&a), dataset_checksum(&b));
    }
}
