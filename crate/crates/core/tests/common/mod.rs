#![allow(dead_code)]

use std::path::PathBuf;

use hdindex::ingest::{self, VecKind};
use hdindex::{Dataset, Domain, ReferenceSet, VectorRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const Q: [f32; 4] = [0.18, 0.87, 0.76, 0.23];

pub fn running_example_rows() -> Vec<Vec<f32>> {
    vec![
        vec![0.20, 0.74, 0.68, 0.73],
        vec![0.84, 0.34, 0.49, 0.81],
        vec![0.97, 0.64, 0.32, 0.93],
        vec![0.42, 0.86, 0.12, 0.82],
        vec![0.62, 0.09, 0.56, 0.07],
        vec![0.84, 0.59, 0.49, 0.73],
        vec![0.05, 0.43, 0.52, 0.82],
        vec![0.40, 0.24, 0.10, 0.64],
    ]
}

pub fn unit() -> Domain {
    Domain::new(0.0, 1.0).unwrap()
}

pub fn running_example() -> Dataset {
    let records = running_example_rows()
        .into_iter()
        .enumerate()
        .map(|(i, c)| VectorRecord::new(i as u64, c))
        .collect();
    Dataset::with_domain(4, records, unit()).unwrap()
}

/// References taken from dataset members by id.
pub fn refs_from(data: &Dataset, ids: &[u64]) -> ReferenceSet {
    let members = ids
        .iter()
        .map(|&i| data.coords(i as usize).to_vec())
        .collect();
    ReferenceSet::from_members(ids.to_vec(), members, 0.0, 0.0)
}

pub fn uniform_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f32>()).collect())
        .collect()
}

pub fn uniform(n: usize, dim: usize, seed: u64) -> Dataset {
    let records = uniform_rows(n, dim, seed)
        .into_iter()
        .enumerate()
        .map(|(i, c)| VectorRecord::new(i as u64, c))
        .collect();
    Dataset::with_domain(dim, records, unit()).unwrap()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generator for 128-d SIFT-like descriptors: 4x4 cells of 8-bin gradient
/// histograms around cluster prototypes, perturbed along a shared
/// low-rank basis, then normalized, clipped at 0.2, renormalized and
/// scaled to integers in [0, 255].
pub struct SiftLike {
    centers: Vec<Vec<f64>>,
    basis: Vec<Vec<f64>>,
}

impl SiftLike {
    const DIM: usize = 128;
    const CLUSTERS: usize = 50;
    const RANK: usize = 12;

    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        let centers = (0..Self::CLUSTERS)
            .map(|_| {
                let mut c = vec![0.0; Self::DIM];
                for cell in 0..16 {
                    let flat = rng.gen::<f64>() < 0.3;
                    let peak = rng.gen_range(0..8) as f64;
                    let gain = rng.gen_range(0.5..1.5);
                    for o in 0..8 {
                        let d = (o as f64 - peak).abs();
                        let d = d.min(8.0 - d);
                        c[cell * 8 + o] = if flat {
                            rng.gen_range(0.0..0.2)
                        } else {
                            gain * (-d * d / 2.0).exp()
                        };
                    }
                }
                c
            })
            .collect();
        let basis = (0..Self::RANK)
            .map(|_| (0..Self::DIM).map(|_| 0.15 * gauss(rng)).collect())
            .collect();
        Self { centers, basis }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let c = &self.centers[rng.gen_range(0..Self::CLUSTERS)];
        let z: Vec<f64> = (0..Self::RANK).map(|_| gauss(rng)).collect();
        let mut v: Vec<f64> = (0..Self::DIM)
            .map(|i| {
                let low: f64 = self.basis.iter().zip(&z).map(|(b, z)| b[i] * z).sum();
                (c[i] + low + 0.05 * gauss(rng)).max(0.0)
            })
            .collect();
        normalize(&mut v);
        v.iter_mut().for_each(|x| *x = x.min(0.2));
        normalize(&mut v);
        v.iter()
            .map(|x| (x * 512.0).min(255.0).round() as f32)
            .collect()
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub struct Benchmark {
    pub name: String,
    pub base: Dataset,
    pub queries: Vec<Vec<f32>>,
}

/// The SIFT10K base/query pair from `$HDINDEX_SIFT_DIR` when present,
/// otherwise 10,000 + 100 generated SIFT-like vectors.
pub fn sift10k() -> Benchmark {
    if let Some(dir) = std::env::var_os("HDINDEX_SIFT_DIR").map(PathBuf::from) {
        let base = ingest::read_vecs(dir.join("siftsmall_base.fvecs"), VecKind::F32)
            .expect("siftsmall_base.fvecs");
        let queries = ingest::read_vecs(dir.join("siftsmall_query.fvecs"), VecKind::F32)
            .expect("siftsmall_query.fvecs");
        return Benchmark {
            name: "SIFT10K".into(),
            base: ingest::deduplicate(&base),
            queries: ingest::rows(&queries),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x51F7);
    let gen = SiftLike::new(&mut rng);
    let rows: Vec<Vec<f32>> = (0..10_100).map(|_| gen.sample(&mut rng)).collect();
    let all = Dataset::with_domain(
        128,
        rows.into_iter()
            .enumerate()
            .map(|(i, c)| VectorRecord::new(i as u64, c))
            .collect(),
        Domain::new(0.0, 255.0).unwrap(),
    )
    .unwrap();
    let all = ingest::deduplicate(&all);
    let (base, queries) = ingest::reserve_queries(&all, 100, 7).unwrap();
    Benchmark {
        name: "SIFT-like surrogate".into(),
        base,
        queries: ingest::rows(&queries),
    }
}
