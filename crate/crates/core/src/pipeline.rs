//! prepare → solve → evaluate → report, plus a brute-force oracle check.
//!
//! Every stage reads and writes plain files (JSON manifests, JSONL records,
//! CSV reports) so runs can be resumed and compared.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bb::{brute_force_miqp, solve_miqp, BbOptions, MiqpStatus};
use crate::config::RunConfig;
use crate::dataset::{self, Dataset, Sample, SampleKind};
use crate::error::{Error, Result};
use crate::eval::{
    classify, confusion, confusion_on, deltas_vs_svm, ecdf, gap, linear_grid, metrics,
    ratios_vs_true, BenchmarkRecord, Method, MetricSet,
};
use crate::models::{
    big_m_initial, build_cs3vm, lift_svm_solution, solve_svm, FeasiblePoint, Hyperplane, Instance,
    PointProblem,
};
use crate::rcm::{ircm, rcm, IterationTrace};
use crate::wircm::wircm;

/// A sample of a prepared dataset, stored next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub instance: String,
    /// Dataset JSON, relative to the manifest's directory.
    pub dataset_file: String,
    pub sample: Sample,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Seed of sample `k` of a run seeded with `seed`.
pub fn sample_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(k as u64)
}

/// Loads, cleans and samples every configured dataset. Returns manifest paths.
pub fn prepare(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if cfg.datasets.is_empty() {
        return Err(Error::Config("no datasets configured".into()));
    }
    let mut out = Vec::new();
    for path in &cfg.datasets {
        let raw = dataset::load_csv(path, &cfg.label_column)?;
        let mut ds = dataset::preprocess(&raw)?;
        if cfg.rescale {
            ds = dataset::rescale(&ds);
        }
        let dir = out_dir.join(&ds.name);
        write_json(&dir.join("dataset.json"), &ds)?;
        for k in 0..cfg.samples {
            let seed = sample_seed(cfg.seed, k);
            let sample = match cfg.sampling {
                SampleKind::Biased => {
                    dataset::draw_biased_sample(&ds, cfg.labeled_fraction, cfg.p_pos, seed)?
                }
                SampleKind::Srs => dataset::draw_srs_sample(&ds, cfg.labeled_fraction, seed)?,
            };
            let manifest = Manifest {
                instance: format!("{}-{k}", ds.name),
                dataset_file: "dataset.json".into(),
                sample,
            };
            let p = dir.join(format!("sample_{k}.json"));
            write_json(&p, &manifest)?;
            out.push(p);
        }
    }
    Ok(out)
}

/// A manifest with its dataset loaded.
#[derive(Clone, Debug)]
pub struct LoadedInstance {
    pub manifest: Manifest,
    pub dataset: Dataset,
}

pub fn load_manifest(path: &Path) -> Result<LoadedInstance> {
    let manifest: Manifest = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let dataset: Dataset = read_json(&dir.join(&manifest.dataset_file))?;
    dataset.validate()?;
    manifest.sample.validate(&dataset)?;
    Ok(LoadedInstance { manifest, dataset })
}

/// What a single method run produced.
#[derive(Clone, Debug)]
pub struct MethodOutcome {
    pub status: String,
    pub point: FeasiblePoint,
    pub best_bound: Option<f64>,
    pub iterations: Option<usize>,
    pub fixed_points: Option<usize>,
    pub trace: Vec<IterationTrace>,
}

/// Runs `method` on `inst` with the run configuration.
pub fn run_method(
    inst: &Instance,
    method: Method,
    cfg: &RunConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    let pen = &cfg.penalties;
    let m = inst.m();
    if method != Method::Svm {
        cfg.check_ranges(m)?;
    }
    Ok(match method {
        Method::Svm => {
            let svm = solve_svm(inst, pen)?;
            MethodOutcome {
                status: "Optimal".into(),
                point: lift_svm_solution(&svm, inst, pen),
                best_bound: None,
                iterations: None,
                fixed_points: None,
                trace: Vec::new(),
            }
        }
        Method::Cs3vm => {
            let big_m = big_m_initial(inst, pen);
            let p = build_cs3vm(inst, pen, big_m)?;
            let pp = PointProblem {
                owners: (0..m).collect(),
                problem: p,
                fixed: Default::default(),
            };
            // the SVM lift is a valid starting incumbent
            let warm = solve_svm(inst, pen)
                .ok()
                .map(|s| pp.embed(&lift_svm_solution(&s, inst, pen)))
                .filter(|w| pp.problem.relaxation.max_violation(w) <= 1e-9);
            let opts = BbOptions::default()
                .with_time_limit(cfg.time_limit)
                .with_warm_start(warm);
            let sol = solve_miqp(&pp.problem, &opts)?;
            let v = sol
                .incumbent
                .ok_or_else(|| Error::Solver(format!("no incumbent ({:?})", sol.status)))?;
            MethodOutcome {
                status: format!("{:?}", sol.status),
                point: pp.extract(&v, inst, pen),
                best_bound: Some(sol.best_bound),
                iterations: Some(sol.nodes_explored),
                fixed_points: None,
                trace: Vec::new(),
            }
        }
        Method::Rcm | Method::Ircm => {
            let rc = cfg.rcm_config(m, seed);
            let r = if method == Method::Rcm {
                rcm(inst, &rc)?
            } else {
                ircm(inst, &rc)?
            };
            MethodOutcome {
                status: if r.hit_time_limit {
                    "TimeLimit"
                } else {
                    "Feasible"
                }
                .into(),
                point: r.lifted,
                best_bound: None,
                iterations: Some(r.iterations),
                fixed_points: None,
                trace: r.trace,
            }
        }
        Method::Wircm => {
            let r = wircm(inst, &cfg.wircm_config(m, seed))?;
            MethodOutcome {
                status: format!("{:?}", r.status),
                point: r.point,
                best_bound: r.best_bound.is_finite().then_some(r.best_bound),
                iterations: Some(r.ircm.iterations),
                fixed_points: Some(r.ledger.fixed.len()),
                trace: r.ircm.trace,
            }
        }
    })
}

fn empty_record(li: &LoadedInstance, method: Method) -> BenchmarkRecord {
    let s = &li.manifest.sample;
    BenchmarkRecord {
        instance: li.manifest.instance.clone(),
        dataset: li.dataset.name.clone(),
        sample_seed: s.seed,
        sample_kind: format!("{:?}", s.kind).to_lowercase(),
        method,
        wall_time: 0.0,
        status: "Error".into(),
        objective: None,
        best_bound: None,
        n: s.n(),
        m: s.m(),
        tau: s.tau,
        hyperplane: None,
        confusion_all: None,
        confusion_unlabeled: None,
        metrics_all: None,
        metrics_unlabeled: None,
        ratios_true: None,
        deltas_svm: None,
        gap: None,
        iterations: None,
        fixed_points: None,
        error: None,
    }
}

/// Solves one (instance, method) cell and scores it. Solver failures become
/// records with status `Error`.
pub fn solve_cell(
    li: &LoadedInstance,
    method: Method,
    cfg: &RunConfig,
) -> Result<(BenchmarkRecord, Vec<IterationTrace>)> {
    let mut rec = empty_record(li, method);
    let inst = Instance::from_sample(&li.dataset, &li.manifest.sample)?;
    let t0 = Instant::now();
    let out = run_method(&inst, method, cfg, li.manifest.sample.seed);
    rec.wall_time = t0.elapsed().as_secs_f64();
    let out = match out {
        Ok(o) => o,
        Err(e @ (Error::Config(_) | Error::Io { .. })) => return Err(e),
        Err(e) => {
            rec.error = Some(e.to_string());
            return Ok((rec, Vec::new()));
        }
    };
    let z = method.uses_indicators().then_some(out.point.z.as_slice());
    let pred = classify(
        &out.point.hyperplane,
        &li.dataset,
        &li.manifest.sample,
        method,
        z,
    )?;
    let cm_all = confusion(&pred, &li.dataset.labels)?;
    let cm_unl = confusion_on(&pred, &li.dataset.labels, &li.manifest.sample.unlabeled_idx)?;
    rec.status = out.status;
    rec.objective = Some(out.point.objective);
    rec.best_bound = out.best_bound;
    rec.hyperplane = Some(out.point.hyperplane);
    rec.confusion_all = Some(cm_all);
    rec.confusion_unlabeled = Some(cm_unl);
    rec.metrics_all = Some(metrics(&cm_all));
    rec.metrics_unlabeled = Some(metrics(&cm_unl));
    rec.iterations = out.iterations;
    rec.fixed_points = out.fixed_points;
    Ok((rec, out.trace))
}

/// Solves every (manifest, method) pair on `cfg.jobs` threads. Records come
/// back in manifest-major, method-minor order.
pub fn solve_all(
    manifests: &[PathBuf],
    cfg: &RunConfig,
    trace_dir: Option<&Path>,
) -> Result<Vec<BenchmarkRecord>> {
    let loaded: Vec<LoadedInstance> = manifests
        .iter()
        .map(|p| load_manifest(p))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, Method)> = (0..loaded.len())
        .flat_map(|i| cfg.methods.iter().map(move |&m| (i, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<(BenchmarkRecord, Vec<IterationTrace>)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, m)| solve_cell(&loaded[i], m, cfg))
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        let (rec, trace) = r?;
        if let Some(dir) = trace_dir {
            if !trace.is_empty() {
                let path = dir.join(format!("{}-{}.jsonl", rec.instance, rec.method));
                write_jsonl(&path, &trace)?;
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// SVM trained with every label visible; the reference for metric ratios.
pub fn true_hyperplane(ds: &Dataset, cfg: &RunConfig) -> Result<Hyperplane> {
    let inst = Instance::new(ds.points.clone(), ds.labels.clone(), Vec::new(), 0)?;
    Ok(solve_svm(&inst, &cfg.penalties)?.hyperplane)
}

/// Fills ratios against the fully labeled SVM, deltas against the SVM
/// record of the same instance, and gaps against the best proven optimum.
pub fn evaluate(
    records: &mut [BenchmarkRecord],
    manifests: &[PathBuf],
    cfg: &RunConfig,
) -> Result<()> {
    let mut truth: BTreeMap<String, MetricSet> = BTreeMap::new();
    for p in manifests {
        let li = load_manifest(p)?;
        if truth.contains_key(&li.manifest.instance) {
            continue;
        }
        let h = true_hyperplane(&li.dataset, cfg)?;
        let pred = classify(&h, &li.dataset, &li.manifest.sample, Method::Svm, None)?;
        truth.insert(
            li.manifest.instance.clone(),
            metrics(&confusion(&pred, &li.dataset.labels)?),
        );
    }
    let mut svm: BTreeMap<String, MetricSet> = BTreeMap::new();
    let mut optimum: BTreeMap<String, f64> = BTreeMap::new();
    for r in records.iter() {
        if r.method == Method::Svm {
            if let Some(m) = r.metrics_unlabeled {
                svm.insert(r.instance.clone(), m);
            }
        }
        if r.status == "Optimal" && r.method != Method::Svm {
            if let Some(f) = r.objective {
                let e = optimum.entry(r.instance.clone()).or_insert(f);
                *e = e.min(f);
            }
        }
    }
    for r in records.iter_mut() {
        if let (Some(m), Some(t)) = (r.metrics_all, truth.get(&r.instance)) {
            r.ratios_true = Some(ratios_vs_true(&m, t));
        }
        if r.method != Method::Svm {
            if let (Some(m), Some(s)) = (r.metrics_unlabeled, svm.get(&r.instance)) {
                r.deltas_svm = Some(deltas_vs_svm(&m, s));
            }
        }
        if let (Some(f), Some(&opt)) = (r.objective, optimum.get(&r.instance)) {
            r.gap = gap(f, opt).map(|g| g.max(0.0));
        }
    }
    Ok(())
}

/// Paths of the files written by [`report`].
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub ecdf: PathBuf,
    pub boxplot: PathBuf,
    pub summary: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Writes ECDF curves, boxplot source rows and a per-method summary.
pub fn report(
    records: &[BenchmarkRecord],
    censor_limit: f64,
    grid_points: usize,
    out_dir: &Path,
) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(Error::InvalidData("no records to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut by_method: BTreeMap<Method, Vec<&BenchmarkRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r);
    }

    let grid = linear_grid(censor_limit, grid_points);
    let ecdf_path = out_dir.join("ecdf.csv");
    let mut w = csv::Writer::from_path(&ecdf_path)?;
    let mut header = vec!["sigma".to_string()];
    header.extend(by_method.keys().map(|m| m.to_string()));
    w.write_record(&header)?;
    let curves: Vec<Vec<(f64, f64)>> = by_method
        .values()
        .map(|rs| {
            let times: Vec<f64> = rs
                .iter()
                .map(|r| {
                    if solved(r) {
                        r.wall_time
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            ecdf(&times, censor_limit, &grid)
        })
        .collect();
    for (g, &s) in grid.iter().enumerate() {
        let mut row = vec![format!("{s}")];
        row.extend(curves.iter().map(|c| format!("{}", c[g].1)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&ecdf_path, e))?;

    let box_path = out_dir.join("boxplot.csv");
    let mut w = csv::Writer::from_path(&box_path)?;
    w.write_record(["instance", "method", "metric", "value"])?;
    for r in records {
        let mut rows: Vec<(&str, Option<f64>)> = Vec::new();
        if let Some(m) = r.metrics_unlabeled {
            rows.extend([
                ("ac_unlabeled", m.ac),
                ("pr_unlabeled", m.pr),
                ("re_unlabeled", m.re),
                ("fpr_unlabeled", m.fpr),
            ]);
        }
        if let Some(m) = r.ratios_true {
            rows.extend([
                ("ac_ratio_true", m.ac),
                ("pr_ratio_true", m.pr),
                ("re_ratio_true", m.re),
                ("fpr_ratio_true", m.fpr),
            ]);
        }
        if let Some(d) = r.deltas_svm {
            rows.extend([("ac_delta_svm", d.ac), ("pr_delta_svm", d.pr)]);
        }
        rows.push(("gap", r.gap));
        for (name, v) in rows {
            // undefined values stay out of the plots
            if let Some(v) = v {
                w.write_record([r.instance.as_str(), r.method.name(), name, &format!("{v}")])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&box_path, e))?;

    let sum_path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&sum_path)?;
    w.write_record([
        "method",
        "runs",
        "solved",
        "errors",
        "median_time",
        "median_ac_unlabeled",
        "median_ac_delta_svm",
        "mean_gap",
    ])?;
    for (m, rs) in &by_method {
        let med = |f: &dyn Fn(&BenchmarkRecord) -> Option<f64>| {
            median(rs.iter().filter_map(|r| f(r)).collect())
        };
        let gaps: Vec<f64> = rs.iter().filter_map(|r| r.gap).collect();
        let mean_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
        w.write_record([
            m.name().to_string(),
            rs.len().to_string(),
            rs.iter().filter(|r| solved(r)).count().to_string(),
            rs.iter().filter(|r| r.error.is_some()).count().to_string(),
            fmt_opt(med(&|r| Some(r.wall_time))),
            fmt_opt(med(&|r| r.metrics_unlabeled.and_then(|x| x.ac))),
            fmt_opt(med(&|r| r.deltas_svm.and_then(|x| x.ac))),
            fmt_opt(mean_gap),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&sum_path, e))?;
    Ok(ReportFiles {
        ecdf: ecdf_path,
        boxplot: box_path,
        summary: sum_path,
    })
}

/// A run counts as solved when it finished without error or time limit.
fn solved(r: &BenchmarkRecord) -> bool {
    r.error.is_none() && r.status != "TimeLimit"
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub instance: String,
    pub m: usize,
    pub brute_force: Option<f64>,
    pub branch_and_bound: Option<f64>,
    pub agree: bool,
}

/// Compares branch-and-bound with full enumeration on a small manifest.
pub fn oracle_check(path: &Path, cfg: &RunConfig, max_binaries: usize) -> Result<OracleCheck> {
    let li = load_manifest(path)?;
    let inst = Instance::from_sample(&li.dataset, &li.manifest.sample)?;
    if inst.m() > max_binaries.min(20) {
        return Err(Error::InvalidArgument(format!(
            "{} has {} unlabeled points, oracle limit is {}",
            li.manifest.instance,
            inst.m(),
            max_binaries.min(20)
        )));
    }
    let p = build_cs3vm(&inst, &cfg.penalties, big_m_initial(&inst, &cfg.penalties))?;
    let bf = brute_force_miqp(&p)?;
    let bb = solve_miqp(&p, &BbOptions::default().with_time_limit(cfg.time_limit))?;
    let agree = match (bf.objective, bb.objective) {
        (Some(a), Some(b)) => bb.status == MiqpStatus::Optimal && (a - b).abs() <= 1e-6,
        (None, None) => true,
        _ => false,
    };
    Ok(OracleCheck {
        instance: li.manifest.instance,
        m: inst.m(),
        brute_force: bf.objective,
        branch_and_bound: bb.objective,
        agree,
    })
}
