use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdindex::ingest::{self, VecKind};
use hdindex::neighbors::NeighborFile;
use hdindex::{Dataset, Neighbor, ResultSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hdindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdindex"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hdindex(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    hdindex(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0..256) as f32).collect())
        .collect()
}

fn write_fvecs(path: &Path, rows: Vec<Vec<f32>>, dim: usize) {
    ingest::write_vecs(path, VecKind::F32, &Dataset::from_rows(dim, rows).unwrap()).unwrap();
}

fn manifest(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(n: usize, dim: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        write_fvecs(&root.join("base.fvecs"), random_rows(n, dim, 1), dim);
        write_fvecs(&root.join("queries.fvecs"), random_rows(20, dim, 2), dim);
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn build_records_defaults() {
    let f = Fixture::new(2_000, 128);
    let (data, idx) = (f.p("base.fvecs"), f.p("a.hdx"));
    ok(&["build", "--data", s(&data), "--out", s(&idx)]);
    let m = manifest(f.p("a.hdx.manifest.json"));
    assert_eq!(m["command"], "build");
    assert_eq!(m["config"]["tau"], 8);
    assert_eq!(m["config"]["m"], 10);
    assert_eq!(m["config"]["omega"], 8);
    assert!(m["timings_ms"]["build"].as_f64().unwrap() >= 0.0);
    assert!(m["metrics"]["index_bytes"].as_u64().unwrap() > 0);
    assert!(m["peak_memory_kb"].as_u64().unwrap() > 0);
}

#[test]
fn rebuild_is_byte_identical() {
    let f = Fixture::new(1_000, 32);
    let data = f.p("base.fvecs");
    for name in ["a.hdx", "b.hdx"] {
        ok(&[
            "build",
            "--data",
            s(&data),
            "--out",
            s(&f.p(name)),
            "--seed",
            "7",
            "--tau",
            "4",
        ]);
    }
    let (a, b) = (
        manifest(f.p("a.hdx.manifest.json")),
        manifest(f.p("b.hdx.manifest.json")),
    );
    assert_eq!(a["checksums"], b["checksums"]);
}

#[test]
fn bad_configuration_and_usage() {
    let f = Fixture::new(200, 32);
    let data = f.p("base.fvecs");
    let out = hdindex(&[
        "build",
        "--data",
        s(&data),
        "--out",
        s(&f.p("x")),
        "--tau",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nearest valid tree count is 8"));
    assert_eq!(
        code(&[
            "build",
            "--data",
            s(&data),
            "--out",
            s(&f.p("x")),
            "--bogus"
        ]),
        1
    );
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&[
            "build",
            "--data",
            s(&f.p("missing.fvecs")),
            "--out",
            s(&f.p("x"))
        ]),
        2
    );
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn gtruth_self_and_deterministic() {
    let f = Fixture::new(300, 16);
    let data = f.p("base.fvecs");
    ok(&[
        "gtruth",
        "--data",
        s(&data),
        "--queries",
        s(&data),
        "--k",
        "1",
        "--out",
        s(&f.p("t1")),
    ]);
    let t = NeighborFile::load(f.p("t1")).unwrap();
    let base = ingest::read_vecs(&data, VecKind::F32).unwrap();
    assert_eq!(t.checksum, ingest::dataset_checksum(&base));
    for (i, list) in t.lists.iter().enumerate() {
        // random integer rows are distinct with overwhelming probability
        assert_eq!(
            list.entries,
            vec![Neighbor {
                id: i as u64,
                dist: 0.0
            }]
        );
    }
    ok(&[
        "gtruth",
        "--data",
        s(&data),
        "--queries",
        s(&data),
        "--k",
        "1",
        "--out",
        s(&f.p("t2")),
    ]);
    assert_eq!(
        std::fs::read(f.p("t1")).unwrap(),
        std::fs::read(f.p("t2")).unwrap()
    );
    assert_eq!(
        code(&[
            "gtruth",
            "--data",
            s(&data),
            "--queries",
            s(&data),
            "--k",
            "301",
            "--out",
            s(&f.p("t3"))
        ]),
        2
    );
}

#[test]
fn gtruth_matches_plain_scan() {
    let dim = 24;
    let f = Fixture::new(10_000, dim);
    let queries = random_rows(100, dim, 3);
    write_fvecs(&f.p("q.fvecs"), queries.clone(), dim);
    ok(&[
        "gtruth",
        "--data",
        s(&f.p("base.fvecs")),
        "--queries",
        s(&f.p("q.fvecs")),
        "--k",
        "10",
        "--out",
        s(&f.p("t")),
    ]);
    let got = NeighborFile::load(f.p("t")).unwrap();
    let base = random_rows(10_000, dim, 1);
    for (q, list) in queries.iter().zip(&got.lists) {
        let mut d: Vec<(f64, u64)> = base
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let s: f64 = q.iter().zip(o).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
                (s.sqrt(), i as u64)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<u64> = d[..10].iter().map(|x| x.1).collect();
        assert_eq!(list.ids(), want);
    }
}

#[test]
fn exhaustive_query_reproduces_ground_truth() {
    let f = Fixture::new(1_000, 32);
    let (data, q, idx) = (f.p("base.fvecs"), f.p("queries.fvecs"), f.p("i.hdx"));
    ok(&["build", "--data", s(&data), "--out", s(&idx), "--tau", "4"]);
    ok(&[
        "gtruth",
        "--data",
        s(&data),
        "--queries",
        s(&q),
        "--k",
        "10",
        "--out",
        s(&f.p("truth")),
    ]);
    for filter in ["triangular", "triangular-ptolemaic"] {
        let res = f.p(&format!("res-{filter}"));
        ok(&[
            "query",
            "--index",
            s(&idx),
            "--queries",
            s(&q),
            "--out",
            s(&res),
            "--k",
            "10",
            "--alpha",
            "1000",
            "--gamma",
            "1000",
            "--filter",
            filter,
        ]);
        let a = NeighborFile::load(&res).unwrap();
        let t = NeighborFile::load(f.p("truth")).unwrap();
        assert_eq!(a.lists, t.lists);
        let report = ok(&[
            "eval",
            "--results",
            s(&res),
            "--truth",
            s(&f.p("truth")),
            "--k",
            "10",
        ]);
        assert!(
            report.contains("MAP@10 = 1.0000, mean ratio = 1.0000"),
            "{report}"
        );
        let m = manifest(f.p(&format!("res-{filter}.manifest.json")));
        assert_eq!(m["metrics"]["query_ms"].as_array().unwrap().len(), 20);
        assert!(m["metrics"]["mean_query_ms"].as_f64().is_some());
    }
}

#[test]
fn default_query_parameters_run() {
    let f = Fixture::new(3_000, 32);
    let (data, q, idx) = (f.p("base.fvecs"), f.p("queries.fvecs"), f.p("i.hdx"));
    ok(&[
        "--threads",
        "2",
        "build",
        "--data",
        s(&data),
        "--out",
        s(&idx),
        "--tau",
        "4",
    ]);
    ok(&[
        "query",
        "--index",
        s(&idx),
        "--queries",
        s(&q),
        "--out",
        s(&f.p("r")),
        "--k",
        "100",
    ]);
    let m = manifest(f.p("r.manifest.json"));
    assert_eq!(m["config"]["params"]["alpha"], 4096);
    assert_eq!(m["config"]["params"]["gamma"], 1024);
    assert_eq!(
        NeighborFile::load(f.p("r"))
            .unwrap()
            .lists
            .iter()
            .map(|l| l.len())
            .sum::<usize>(),
        2_000
    );
}

#[test]
fn empty_query_file() {
    let f = Fixture::new(500, 32);
    let idx = f.p("i.hdx");
    ok(&[
        "build",
        "--data",
        s(&f.p("base.fvecs")),
        "--out",
        s(&idx),
        "--tau",
        "4",
    ]);
    std::fs::write(f.p("empty.fvecs"), b"").unwrap();
    ok(&[
        "query",
        "--index",
        s(&idx),
        "--queries",
        s(&f.p("empty.fvecs")),
        "--out",
        s(&f.p("r")),
    ]);
    assert!(NeighborFile::load(f.p("r")).unwrap().lists.is_empty());
}

#[test]
fn query_errors() {
    let f = Fixture::new(500, 32);
    let idx = f.p("i.hdx");
    ok(&[
        "build",
        "--data",
        s(&f.p("base.fvecs")),
        "--out",
        s(&idx),
        "--tau",
        "4",
    ]);
    write_fvecs(&f.p("q16.fvecs"), random_rows(3, 16, 4), 16);
    assert_eq!(
        code(&[
            "query",
            "--index",
            s(&idx),
            "--queries",
            s(&f.p("q16.fvecs")),
            "--out",
            s(&f.p("r"))
        ]),
        2
    );
    let q = f.p("queries.fvecs");
    assert_eq!(
        code(&[
            "query",
            "--index",
            s(&idx),
            "--queries",
            s(&q),
            "--out",
            s(&f.p("r")),
            "--alpha",
            "10",
            "--gamma",
            "20"
        ]),
        1
    );
    let mut bytes = std::fs::read(&idx).unwrap();
    bytes[80] ^= 0x5a;
    std::fs::write(&idx, bytes).unwrap();
    assert_eq!(
        code(&[
            "query",
            "--index",
            s(&idx),
            "--queries",
            s(&q),
            "--out",
            s(&f.p("r"))
        ]),
        2
    );
}

fn neighbor_file(lists: &[&[u64]], k: usize) -> NeighborFile {
    NeighborFile {
        checksum: [0; 32],
        k,
        lists: lists
            .iter()
            .map(|ids| ResultSet {
                entries: ids
                    .iter()
                    .map(|&id| Neighbor {
                        id,
                        dist: id as f64,
                    })
                    .collect(),
            })
            .collect(),
    }
}

#[test]
fn eval_worked_example_and_rank_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let (res, truth, json) = (
        dir.path().join("r"),
        dir.path().join("t"),
        dir.path().join("r.json"),
    );
    neighbor_file(&[&[1, 2, 3], &[1, 2, 3]], 3)
        .save(&truth)
        .unwrap();
    neighbor_file(&[&[4, 3, 2], &[3, 2, 4]], 3)
        .save(&res)
        .unwrap();
    let out = ok(&[
        "eval",
        "--results",
        s(&res),
        "--truth",
        s(&truth),
        "--k",
        "3",
        "--json",
        s(&json),
    ]);
    assert!(out.contains("MAP@3 = 0.5278"), "{out}");
    let report = manifest(&json);
    assert!((report["map"].as_f64().unwrap() - 0.53).abs() < 0.005);
    assert_eq!(report["queries"].as_array().unwrap().len(), 2);

    // first three of a shuffled top-6 list
    neighbor_file(&[&[1, 2, 3, 4, 5, 6], &[1, 2, 3, 4, 5, 6]], 6)
        .save(&truth)
        .unwrap();
    neighbor_file(&[&[5, 2, 6], &[3, 1, 4]], 3)
        .save(&res)
        .unwrap();
    let out = ok(&[
        "eval",
        "--results",
        s(&res),
        "--truth",
        s(&truth),
        "--k",
        "3",
    ]);
    assert!(!out.contains("MAP@3 = 1.0000"), "{out}");

    neighbor_file(&[&[1, 2, 3]], 3).save(&res).unwrap();
    neighbor_file(&[&[1, 2, 3], &[1, 2, 3]], 3)
        .save(&truth)
        .unwrap();
    assert_eq!(
        code(&[
            "eval",
            "--results",
            s(&res),
            "--truth",
            s(&truth),
            "--k",
            "3"
        ]),
        2
    );
}

#[test]
fn dedup_reserve_and_borda() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let mut rows = random_rows(50, 8, 5);
    rows.extend(rows[..10].to_vec());
    write_fvecs(&p("d.fvecs"), rows, 8);
    ok(&[
        "dedup",
        "--data",
        s(&p("d.fvecs")),
        "--out",
        s(&p("u.fvecs")),
    ]);
    assert_eq!(
        ingest::read_vecs(p("u.fvecs"), VecKind::F32).unwrap().len(),
        50
    );

    ok(&[
        "reserve-queries",
        "--data",
        s(&p("u.fvecs")),
        "--count",
        "5",
        "--seed",
        "3",
        "--base-out",
        s(&p("b.fvecs")),
        "--queries-out",
        s(&p("q.fvecs")),
    ]);
    assert_eq!(
        ingest::read_vecs(p("b.fvecs"), VecKind::F32).unwrap().len(),
        45
    );
    assert_eq!(
        ingest::read_vecs(p("q.fvecs"), VecKind::F32).unwrap().len(),
        5
    );

    neighbor_file(&[&[10, 11, 12]], 3).save(p("res")).unwrap();
    std::fs::write(p("owners.txt"), "10 1\n11 2\n12 1\n").unwrap();
    let out = ok(&[
        "borda",
        "--results",
        s(&p("res")),
        "--owners",
        s(&p("owners.txt")),
        "--k",
        "3",
    ]);
    assert_eq!(out, "1\t4\n2\t2\n");
    std::fs::write(p("owners.txt"), "10 1\n").unwrap();
    assert_eq!(
        code(&[
            "borda",
            "--results",
            s(&p("res")),
            "--owners",
            s(&p("owners.txt")),
            "--k",
            "3"
        ]),
        2
    );
}
