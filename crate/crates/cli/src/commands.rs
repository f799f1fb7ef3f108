use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use hdindex::borda::{borda_scores, top_images, DescriptorMap};
use hdindex::eval::{evaluate, exact_knn_batch};
use hdindex::ingest::{self, VecKind};
use hdindex::neighbors::NeighborFile;
use hdindex::{Dataset, FilterMode, HDIndex, IndexConfig, QueryParams, QueryStats, ResultSet};
use rayon::prelude::*;
use serde_json::json;

use crate::manifest::{default_path, hex, RunManifest};
use crate::{
    BordaArgs, BuildArgs, Command, DedupArgs, EvalArgs, Failure, GtruthArgs, QueryArgs,
    ReserveArgs, VecsInput,
};

type Outcome = Result<(), Failure>;

pub fn run(command: Command, threads: Option<usize>) -> Outcome {
    let default_threads = match command {
        Command::Build(_) => 1,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(default_threads))
        .build_global()
        .map_err(|e| Failure::Internal(format!("thread pool: {e}")))?;
    match command {
        Command::Build(a) => build(a),
        Command::Gtruth(a) => gtruth(a),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a),
        Command::Dedup(a) => dedup(a),
        Command::ReserveQueries(a) => reserve(a),
        Command::Borda(a) => borda(a),
    }
}

fn kind_of(path: &Path, input: &VecsInput) -> Result<VecKind, Failure> {
    input
        .kind
        .map(VecKind::from)
        .or_else(|| VecKind::from_path(path))
        .ok_or_else(|| {
            Failure::Usage(format!(
                "cannot tell the element type of {}; pass --kind",
                path.display()
            ))
        })
}

fn read(path: &Path, input: &VecsInput) -> Result<(Dataset, VecKind), Failure> {
    let kind = kind_of(path, input)?;
    let data =
        ingest::read_vecs(path, kind).with_context(|| format!("reading {}", path.display()))?;
    Ok((data, kind))
}

fn build(a: BuildArgs) -> Outcome {
    let t0 = Instant::now();
    let (data, _) = read(&a.data, &a.input)?;
    let mut m = RunManifest::new(
        "build",
        json!({
            "data": a.data, "out": a.out, "tau": a.tau, "omega": a.omega, "m": a.m, "f": a.f,
            "selection": format!("{:?}", a.selection), "page_size": a.page_size, "seed": a.seed,
        }),
    );
    m.time("read", t0);

    let mut config = IndexConfig::recommended(data.dim(), a.omega);
    if let Some(tau) = a.tau {
        config.tau = tau;
    }
    config.m = a.m;
    config.f = a.f;
    config.selection = a.selection.into();
    config.page_size = a.page_size;
    config.seed = a.seed;
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let t1 = Instant::now();
    let index = HDIndex::build(&data, config)?;
    m.time("build", t1);
    for (i, t) in index.trees().iter().enumerate() {
        t.check_invariants(index.page_store())
            .map_err(|e| Failure::Internal(format!("tree {i} failed its invariant check: {e}")))?;
    }
    let t2 = Instant::now();
    let bytes = index
        .persist(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    m.time("persist", t2);
    m.time("total", t0);

    m.config = serde_json::to_value(index.config()).map_err(anyhow::Error::from)?;
    m.seed = Some(a.seed);
    m.checksum("data", &a.data)?;
    m.checksum("index", &a.out)?;
    m.metrics = json!({
        "n": data.len(),
        "dims": data.dim(),
        "index_bytes": bytes,
        "page_region_bytes": index.page_store().region_len(),
        "tree_heights": index.trees().iter().map(|t| t.height()).collect::<Vec<_>>(),
        "reference_ids": index.references().ids,
    });
    println!(
        "built {} objects, {} trees, {} bytes -> {}",
        data.len(),
        index.trees().len(),
        bytes,
        a.out.display()
    );
    m.write(&default_path(&a.out, a.manifest.as_ref()))?;
    Ok(())
}

fn gtruth(a: GtruthArgs) -> Outcome {
    let t0 = Instant::now();
    let (data, _) = read(&a.data, &a.input)?;
    let (queries, _) = read(&a.queries, &a.input)?;
    if a.k == 0 || a.k > data.len() {
        return Err(Failure::Data(anyhow!(
            "k = {} must be in 1..={} (dataset size)",
            a.k,
            data.len()
        )));
    }
    let t1 = Instant::now();
    let lists = exact_knn_batch(&data, &ingest::rows(&queries), a.k)?;
    let mut m = RunManifest::new(
        "gtruth",
        json!({"data": a.data, "queries": a.queries, "k": a.k, "out": a.out}),
    );
    m.time("scan", t1);
    let file = NeighborFile {
        checksum: ingest::dataset_checksum(&data),
        k: a.k,
        lists,
    };
    file.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    m.time("total", t0);
    m.checksum("data", &a.data)?;
    m.checksum("queries", &a.queries)?;
    m.checksum("truth", &a.out)?;
    m.metrics = json!({"dataset_checksum": hex(&file.checksum), "queries": file.lists.len()});
    println!(
        "ground truth for {} queries (k = {}) -> {}",
        file.lists.len(),
        a.k,
        a.out.display()
    );
    m.write(&default_path(&a.out, a.manifest.as_ref()))?;
    Ok(())
}

fn resolve_params(a: &QueryArgs, n: u64) -> Result<QueryParams, Failure> {
    let rec = QueryParams::recommended(n as usize, a.k);
    let alpha = a.alpha.unwrap_or(rec.alpha);
    let gamma = a
        .gamma
        .unwrap_or_else(|| rec.gamma.min(a.beta.unwrap_or(alpha)).max(a.k));
    let beta = match FilterMode::from(a.filter) {
        FilterMode::Triangular => gamma,
        FilterMode::TriangularPtolemaic => a.beta.unwrap_or(alpha),
    };
    let p = QueryParams {
        alpha,
        beta,
        gamma,
        k: a.k,
    };
    p.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(p)
}

fn query(a: QueryArgs) -> Outcome {
    let t0 = Instant::now();
    let index =
        HDIndex::load(&a.index).with_context(|| format!("opening {}", a.index.display()))?;
    let (queries, _) = read(&a.queries, &a.input)?;
    if !queries.is_empty() && queries.dim() != index.config().dims {
        return Err(Failure::Data(anyhow!(
            "queries have {} dimensions, index has {}",
            queries.dim(),
            index.config().dims
        )));
    }
    let params = resolve_params(&a, index.live_count())?;
    let mode = FilterMode::from(a.filter);
    let mut m = RunManifest::new(
        "query",
        json!({"index": a.index, "queries": a.queries, "out": a.out, "filter": format!("{:?}", a.filter)}),
    );
    m.time("open", t0);

    let t1 = Instant::now();
    let runs: Vec<(ResultSet, QueryStats, f64)> = queries
        .records()
        .par_iter()
        .map(|q| {
            let s = Instant::now();
            let (r, st) = index.knn_with_stats(&q.coords, &params, mode)?;
            Ok((r, st, s.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<hdindex::Result<_>>()?;
    m.time("queries", t1);

    let times: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let kappas: Vec<usize> = runs.iter().map(|r| r.1.kappa).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let file = NeighborFile {
        checksum: ingest::dataset_checksum(&queries),
        k: a.k,
        lists: runs.into_iter().map(|r| r.0).collect(),
    };
    file.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    m.time("total", t0);
    m.config = json!({"index": index.config(), "params": params, "filter": mode});
    m.seed = Some(index.config().seed);
    m.checksum("index", &a.index)?;
    m.checksum("queries", &a.queries)?;
    m.checksum("results", &a.out)?;
    m.metrics = json!({
        "queries": times.len(),
        "mean_query_ms": mean(&times),
        "query_ms": times,
        "mean_kappa": mean(&kappas.iter().map(|&k| k as f64).collect::<Vec<_>>()),
        "kappa": kappas,
    });
    println!(
        "{} queries, mean {:.3} ms/query -> {}",
        file.lists.len(),
        mean(&times),
        a.out.display()
    );
    m.write(&default_path(&a.out, a.manifest.as_ref()))?;
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let t0 = Instant::now();
    let results = NeighborFile::load(&a.results)
        .with_context(|| format!("reading {}", a.results.display()))?;
    let truth =
        NeighborFile::load(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    if a.k > truth.k {
        return Err(Failure::Data(anyhow!(
            "ground truth holds only {} neighbors, k = {}",
            truth.k,
            a.k
        )));
    }
    let report = evaluate(&results.lists, &truth.lists, a.k)?;
    for (i, q) in report.queries.iter().enumerate() {
        println!(
            "query {i}: AP@{} = {:.4}, ratio = {:.4}",
            a.k, q.ap, q.ratio
        );
    }
    println!(
        "MAP@{} = {:.4}, mean ratio = {:.4} over {} queries",
        a.k,
        report.map,
        report.mean_ratio,
        report.query_count()
    );
    if let Some(p) = &a.json {
        let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
        std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    let mut m = RunManifest::new(
        "eval",
        json!({"results": a.results, "truth": a.truth, "k": a.k}),
    );
    m.time("total", t0);
    m.checksum("results", &a.results)?;
    m.checksum("truth", &a.truth)?;
    m.metrics = json!({"map": report.map, "mean_ratio": report.mean_ratio, "queries": report.query_count()});
    let mut eval_path = a.results.as_os_str().to_owned();
    eval_path.push(".eval");
    m.write(&default_path(Path::new(&eval_path), a.manifest.as_ref()))?;
    Ok(())
}

fn dedup(a: DedupArgs) -> Outcome {
    let t0 = Instant::now();
    let (data, kind) = read(&a.data, &a.input)?;
    let out = ingest::deduplicate(&data);
    ingest::write_vecs(&a.out, kind, &out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} of {} records kept -> {}",
        out.len(),
        data.len(),
        a.out.display()
    );
    let mut m = RunManifest::new("dedup", json!({"data": a.data, "out": a.out}));
    m.time("total", t0);
    m.checksum("data", &a.data)?;
    m.checksum("out", &a.out)?;
    m.metrics = json!({"input": data.len(), "kept": out.len()});
    m.write(&default_path(&a.out, None))?;
    Ok(())
}

fn reserve(a: ReserveArgs) -> Outcome {
    let t0 = Instant::now();
    let (data, kind) = read(&a.data, &a.input)?;
    let (base, queries) = ingest::reserve_queries(&data, a.count, a.seed)?;
    ingest::write_vecs(&a.base_out, kind, &base)?;
    ingest::write_vecs(&a.queries_out, kind, &queries)?;
    println!("{} base records, {} queries", base.len(), queries.len());
    let mut m = RunManifest::new(
        "reserve-queries",
        json!({"data": a.data, "count": a.count, "seed": a.seed, "base_out": a.base_out, "queries_out": a.queries_out}),
    );
    m.seed = Some(a.seed);
    m.time("total", t0);
    m.checksum("data", &a.data)?;
    m.checksum("base", &a.base_out)?;
    m.checksum("queries", &a.queries_out)?;
    m.write(&default_path(&a.queries_out, None))?;
    Ok(())
}

fn borda(a: BordaArgs) -> Outcome {
    let results = NeighborFile::load(&a.results)
        .with_context(|| format!("reading {}", a.results.display()))?;
    let owners = DescriptorMap::load(&a.owners)
        .with_context(|| format!("reading {}", a.owners.display()))?;
    let table = borda_scores(&results.lists, &owners, a.k)?;
    for (image, score) in top_images(&table, a.top) {
        println!("{image}\t{score}");
    }
    Ok(())
}
