//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! The small-instance oracle enumerates every side assignment of the
//! unlabeled points and solves the QP with the sides imposed directly, so it
//! shares no big-M logic with the library.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cs3vm::bb::{brute_force_miqp, solve_miqp, BbOptions, MiqpStatus};
use cs3vm::clustering::{compute_delta, quantile};
use cs3vm::config::RunConfig;
use cs3vm::dataset::{self, Dataset, SampleKind};
use cs3vm::eval::{
    classify, confusion_on, deltas_vs_svm, ecdf, gap, metrics, ratios_vs_true, ConfusionMatrix,
    Method, MetricSet,
};
use cs3vm::models::{
    big_m_initial, big_m_update, build_cs3vm, full_residual, lift_svm_solution, solve_svm,
    Hyperplane, Instance, PenaltyConfig,
};
use cs3vm::pipeline;
use cs3vm::qp::{solve_qp, QpOptions, QpProblem, QpStatus};
use cs3vm::rcm::{ircm, ircm_round_bound, rcm, rcm_round_bound, RcmConfig};
use cs3vm::wircm::{wircm, ProbeOutcome, WircmConfig};

const SUITE_SIZE: usize = 200;

struct Case {
    id: usize,
    inst: Instance,
    k1: usize,
    k_plus: usize,
    b_max: usize,
}

fn random_case(id: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + id as u64);
    let d = rng.gen_range(1..=3);
    let n = rng.gen_range(2..=8);
    let m = rng.gen_range(1..=10);
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = rng.gen_range(-0.5..0.5);
    let point = |rng: &mut ChaCha8Rng| -> (Vec<f64>, i8) {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: f64 = w.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>() + b;
        let mut y = if v >= 0.0 { 1 } else { -1 };
        if rng.gen::<f64>() < 0.15 {
            y = -y;
        }
        (x, y)
    };
    let mut labeled = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let (x, mut y) = point(&mut rng);
        // both classes among the labeled points
        if i == 0 {
            y = 1;
        } else if i == 1 {
            y = -1;
        }
        labeled.push(x);
        labels.push(y);
    }
    let mut unlabeled = Vec::new();
    let mut tau = 0;
    for _ in 0..m {
        let (x, y) = point(&mut rng);
        tau += (y == 1) as usize;
        unlabeled.push(x);
    }
    let inst = Instance::new(labeled, labels, unlabeled, tau).unwrap();
    Case {
        id,
        k1: rng.gen_range(1..=m),
        k_plus: rng.gen_range(1..=3),
        b_max: rng.gen_range(0..=m),
        inst,
    }
}

/// Optimal objective for every side assignment (bit `i` set = point `i`
/// on the nonnegative side), `None` when infeasible.
fn side_oracle(inst: &Instance, pen: &PenaltyConfig) -> Vec<Option<f64>> {
    let (d, n, m) = (inst.dim, inst.n(), inst.m());
    let opts = QpOptions::default();
    (0u32..1 << m)
        .map(|mask| {
            let mut qp = QpProblem::new(d + 1 + n);
            for j in 0..d {
                qp.quadratic_diag[j] = 1.0;
            }
            for (i, (x, &y)) in inst.labeled.iter().zip(&inst.labels).enumerate() {
                qp.linear_cost[d + 1 + i] = pen.c1;
                qp.set_bounds(d + 1 + i, 0.0, f64::INFINITY);
                let y = y as f64;
                let mut row: Vec<(usize, f64)> =
                    x.iter().enumerate().map(|(j, &v)| (j, y * v)).collect();
                row.push((d, y));
                row.push((d + 1 + i, 1.0));
                qp.add_row(row, 1.0, f64::INFINITY);
            }
            for (i, x) in inst.unlabeled.iter().enumerate() {
                let mut row: Vec<(usize, f64)> =
                    x.iter().enumerate().map(|(j, &v)| (j, v)).collect();
                row.push((d, 1.0));
                if mask >> i & 1 == 1 {
                    qp.add_row(row, 0.0, f64::INFINITY);
                } else {
                    qp.add_row(row, f64::NEG_INFINITY, 0.0);
                }
            }
            let count = mask.count_ones() as f64;
            let tau = inst.tau as f64;
            let card = pen.c2 * ((tau - count).max(0.0) + (count - tau).max(0.0));
            let s = solve_qp(&qp, None, &opts).unwrap();
            match s.status {
                QpStatus::Optimal => Some(s.objective + card),
                QpStatus::Infeasible => None,
                other => panic!("oracle QP ended with {other:?}"),
            }
        })
        .collect()
}

#[derive(Default)]
struct CaseOutcome {
    id: usize,
    m: usize,
    optimum: f64,
    fixed: usize,
    // criterion 1
    bb_vs_bf: Option<String>,
    // criterion 2
    bigm_vs_side: Option<String>,
    norm_bounds: Option<String>,
    // criterion 3
    lifts: Vec<String>,
    // criterion 4
    bounds: Vec<String>,
    // criterion 5
    wircm: Vec<String>,
    // criterion 6
    ircm_gap: Option<f64>,
    wircm_gap: Option<f64>,
}

fn run_case(c: &Case) -> CaseOutcome {
    let pen = PenaltyConfig::default();
    let inst = &c.inst;
    let mut out = CaseOutcome {
        id: c.id,
        m: inst.m(),
        ..Default::default()
    };
    let side = side_oracle(inst, &pen);
    let f_star = side.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    out.optimum = f_star;
    let tol = 1e-6;

    // 1: branch-and-bound vs enumeration of the big-M problem
    let big_m = big_m_initial(inst, &pen);
    let p = build_cs3vm(inst, &pen, big_m).unwrap();
    let bf = brute_force_miqp(&p).unwrap();
    let bb = solve_miqp(&p, &BbOptions::default()).unwrap();
    let (fb, fbb) = (bf.objective.unwrap(), bb.objective.unwrap());
    if bb.status != MiqpStatus::Optimal || (fb - fbb).abs() > tol {
        out.bb_vs_bf = Some(format!(
            "bb {fbb:.9} ({:?}) vs brute force {fb:.9}",
            bb.status
        ));
    }

    // 2: big-M problem vs direct side constraints, and the norm/offset bounds
    if (fbb - f_star).abs() > tol {
        out.bigm_vs_side = Some(format!("big-M optimum {fbb:.9} vs side oracle {f_star:.9}"));
    }
    let pp = cs3vm::models::build_reduced_problem(inst, &Default::default(), &pen, big_m).unwrap();
    let opt = pp.extract(bb.incumbent.as_ref().unwrap(), inst, &pen);
    let h = &opt.hyperplane;
    if h.norm() > (2.0 * f_star).sqrt() + tol || h.b.abs() > h.norm() * inst.radius + 1.0 + tol {
        out.norm_bounds = Some(format!(
            "|w| = {:.6}, sqrt(2f) = {:.6}, |b| = {:.6}, cap = {:.6}",
            h.norm(),
            (2.0 * f_star).sqrt(),
            h.b.abs(),
            h.norm() * inst.radius + 1.0
        ));
    }

    // 3: lifts are feasible for the full problem and no better than the optimum
    let svm = solve_svm(inst, &pen).unwrap();
    let svm_lift = lift_svm_solution(&svm, inst, &pen);
    let cfg = RcmConfig {
        k1: c.k1,
        k_plus: c.k_plus,
        ..RcmConfig::for_size(inst.m())
    };
    let r_rcm = rcm(inst, &cfg).unwrap();
    let r_ircm = ircm(inst, &cfg).unwrap();
    for (name, pt, timed_out) in [
        ("svm", &svm_lift, false),
        ("rcm", &r_rcm.lifted, r_rcm.hit_time_limit),
        ("ircm", &r_ircm.lifted, r_ircm.hit_time_limit),
    ] {
        if timed_out {
            out.lifts.push(format!("{name} hit the time limit"));
            continue;
        }
        let res = full_residual(pt, inst, big_m_update(pt.objective, inst.radius));
        let obj_err = (pt.recomputed_objective(&pen) - pt.objective).abs();
        if res > 1e-8 || obj_err > 1e-9 || pt.objective < f_star - tol {
            out.lifts.push(format!(
                "{name}: residual {res:.2e}, objective {:.9} (stored error {obj_err:.1e}) vs optimum {f_star:.9}",
                pt.objective
            ));
        }
    }

    // 4: round bounds
    let rb = rcm_round_bound(inst.m(), c.k1);
    if r_rcm.splitting_rounds() as f64 > rb + 1e-9 {
        out.bounds
            .push(format!("rcm {} rounds > {rb}", r_rcm.splitting_rounds()));
    }
    let ib = ircm_round_bound(inst.m(), c.k1, cfg.delta_hat_1, cfg.delta_tilde);
    if r_ircm.splitting_rounds() as f64 > (ib + 1e-9).floor() {
        out.bounds
            .push(format!("ircm {} rounds > {ib}", r_ircm.splitting_rounds()));
    }

    // 5: exactness of the fixing scheme
    let wcfg = WircmConfig {
        rcm: cfg.clone(),
        b_max: c.b_max,
        ..WircmConfig::for_size(inst.m())
    };
    let w = wircm(inst, &wcfg).unwrap();
    if w.status != MiqpStatus::Optimal || (w.point.objective - f_star).abs() > tol {
        out.wircm.push(format!(
            "objective {:.9} ({:?}) vs optimum {f_star:.9}",
            w.point.objective, w.status
        ));
    }
    for (set, bit) in [
        (&w.ledger.fixed.positive, 1u32),
        (&w.ledger.fixed.negative, 0u32),
    ] {
        for &s in set {
            let best_with = side
                .iter()
                .enumerate()
                .filter(|(mask, _)| (*mask as u32 >> s) & 1 == bit)
                .filter_map(|(_, f)| *f)
                .fold(f64::INFINITY, f64::min);
            if best_with > f_star + tol {
                out.wircm.push(format!(
                    "point {s} fixed to side {bit} but every optimum disagrees"
                ));
            }
        }
    }
    out.fixed = w.ledger.fixed.len();
    if w.ledger.fixed.len() > c.b_max {
        out.wircm.push("fixing budget exceeded".into());
    }
    let mut prev = w.ircm.lifted.objective;
    for p in &w.ledger.probes {
        if p.f_bar > prev {
            out.wircm
                .push(format!("incumbent rose from {prev} to {}", p.f_bar));
        }
        if p.outcome == ProbeOutcome::ImprovedIncumbent && p.f_bar >= prev {
            out.wircm.push("improvement without decrease".into());
        }
        prev = p.f_bar;
    }
    if w.point.objective > w.ircm.lifted.objective + 1e-9 {
        out.wircm
            .push("final objective above the warm start".into());
    }

    // 6: gaps
    if f_star > 1e-9 {
        out.ircm_gap = gap(r_ircm.lifted.objective, f_star);
        out.wircm_gap = gap(w.point.objective, f_star);
    }
    out
}

fn report(name: &str, ok: bool, detail: &str) -> bool {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn first_failures(lines: Vec<String>) -> String {
    let n = lines.len();
    let mut s: Vec<String> = lines.into_iter().take(3).collect();
    if n > 3 {
        s.push(format!("... {} more", n - 3));
    }
    s.join(" | ")
}

fn separable_family(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let w = [angle.cos(), angle.sin()];
    let b: f64 = rng.gen_range(-1.0..1.0);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    while points.len() < 200 {
        let x = vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let v = w[0] * x[0] + w[1] * x[1] + b;
        if v.abs() < 0.5 {
            continue;
        }
        labels.push(if v > 0.0 { 1 } else { -1 });
        points.push(x);
    }
    Dataset::new(points, labels, format!("sep{seed}")).unwrap()
}

struct DirectionRun {
    svm_ac: f64,
    cs3vm_ac: f64,
    delta_ac: Option<f64>,
}

fn direction_run(ds: &Dataset, kind: SampleKind, seed: u64, time_limit: f64) -> DirectionRun {
    let sample = match kind {
        SampleKind::Biased => dataset::draw_biased_sample(ds, 0.1, 0.85, seed).unwrap(),
        SampleKind::Srs => dataset::draw_srs_sample(ds, 0.1, seed).unwrap(),
    };
    let inst = Instance::from_sample(ds, &sample).unwrap();
    let cfg = RunConfig {
        time_limit,
        ..RunConfig::default()
    };
    let score = |method: Method| -> MetricSet {
        let out = pipeline::run_method(&inst, method, &cfg, seed).unwrap();
        let z = method.uses_indicators().then_some(out.point.z.as_slice());
        let pred = classify(&out.point.hyperplane, ds, &sample, method, z).unwrap();
        metrics(&confusion_on(&pred, &ds.labels, &sample.unlabeled_idx).unwrap())
    };
    let svm = score(Method::Svm);
    let cs = score(Method::Cs3vm);
    DirectionRun {
        svm_ac: svm.ac.unwrap(),
        cs3vm_ac: cs.ac.unwrap(),
        delta_ac: deltas_vs_svm(&cs, &svm).ac,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_7() -> (bool, String) {
    let t0 = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let runs = |kind: SampleKind| -> Vec<DirectionRun> {
        seeds
            .par_iter()
            .map(|&s| direction_run(&separable_family(500 + s), kind, s, 5.0))
            .collect()
    };
    let biased = runs(SampleKind::Biased);
    let srs = runs(SampleKind::Srs);
    let med = |rs: &[DirectionRun], f: &dyn Fn(&DirectionRun) -> Option<f64>| {
        median(rs.iter().filter_map(f).collect())
    };
    let b_svm = med(&biased, &|r| Some(r.svm_ac));
    let b_cs = med(&biased, &|r| Some(r.cs3vm_ac));
    let b_delta = med(&biased, &|r| r.delta_ac);
    let s_svm = med(&srs, &|r| Some(r.svm_ac));
    let s_cs = med(&srs, &|r| Some(r.cs3vm_ac));
    let secs = t0.elapsed().as_secs_f64();
    let ok = b_cs >= b_svm && b_delta >= 0.0 && (s_cs - s_svm).abs() <= 0.05 && secs <= 600.0;
    (
        ok,
        format!(
            "biased median AC cs3vm {b_cs:.4} vs svm {b_svm:.4}, median AC delta {b_delta:.4}; \
             srs medians {s_cs:.4} vs {s_svm:.4}; {secs:.1}s"
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let mut fails = Vec::new();
    let check = |fails: &mut Vec<String>, name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            fails.push(format!("{name}: {got} != {want}"));
        }
    };
    check(
        &mut fails,
        "quantile mid",
        quantile(&[10.0, 20.0, 30.0, 40.0], 0.5).unwrap(),
        25.0,
    );
    check(
        &mut fails,
        "quantile 0",
        quantile(&[3.0, 1.0, 2.0], 0.0).unwrap(),
        1.0,
    );
    check(
        &mut fails,
        "quantile 1",
        quantile(&[3.0, 1.0, 2.0], 1.0).unwrap(),
        3.0,
    );
    check(
        &mut fails,
        "quantile singleton",
        quantile(&[5.0], 0.37).unwrap(),
        5.0,
    );
    let h = Hyperplane::new(vec![1.0], 0.0);
    let cs = [vec![-1.0], vec![3.0]];
    let it = || cs.iter().map(Vec::as_slice);
    check(
        &mut fails,
        "delta 1",
        compute_delta(&h, it(), 1.0).unwrap(),
        3.0,
    );
    check(
        &mut fails,
        "delta 0",
        compute_delta(&h, it(), 0.0).unwrap(),
        1.0,
    );
    check(
        &mut fails,
        "delta 0.5",
        compute_delta(&h, it(), 0.5).unwrap(),
        2.0,
    );

    // random quantiles against numpy-style interpolation
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let len = rng.gen_range(1..30);
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let a: f64 = rng.gen();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let pos = a * (len - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        let want = s[lo] + (pos - lo as f64) * (s[hi] - s[lo]);
        let got = quantile(&v, a).unwrap();
        if (got - want).abs() > 1e-12 {
            fails.push(format!("random quantile {got} != {want}"));
            break;
        }
    }

    let m = metrics(&ConfusionMatrix {
        tp: 3,
        tn: 5,
        fp: 1,
        fn_: 1,
    });
    check(&mut fails, "AC", m.ac.unwrap(), 0.8);
    check(&mut fails, "PR", m.pr.unwrap(), 0.75);
    check(&mut fails, "RE", m.re.unwrap(), 0.75);
    check(&mut fails, "FPR", m.fpr.unwrap(), 1.0 / 6.0);
    let all = metrics(&ConfusionMatrix {
        tp: 2,
        tn: 2,
        fp: 0,
        fn_: 0,
    });
    check(&mut fails, "AC perfect", all.ac.unwrap(), 1.0);
    check(&mut fails, "FPR perfect", all.fpr.unwrap(), 0.0);
    if metrics(&ConfusionMatrix {
        tp: 0,
        tn: 3,
        fp: 0,
        fn_: 1,
    })
    .pr
    .is_some()
    {
        fails.push("PR with no predicted positives is defined".into());
    }
    let a = MetricSet {
        ac: Some(0.8),
        ..Default::default()
    };
    let t = MetricSet {
        ac: Some(0.9),
        ..Default::default()
    };
    check(
        &mut fails,
        "ratio",
        ratios_vs_true(&a, &t).ac.unwrap(),
        0.8 / 0.9,
    );
    check(
        &mut fails,
        "ratio equal",
        ratios_vs_true(&a, &a).ac.unwrap(),
        1.0,
    );
    let z = MetricSet {
        ac: Some(0.0),
        ..Default::default()
    };
    if ratios_vs_true(&a, &z).ac.is_some() {
        fails.push("ratio against 0 is defined".into());
    }
    let hi = MetricSet {
        ac: Some(0.9),
        ..Default::default()
    };
    check(
        &mut fails,
        "delta svm",
        deltas_vs_svm(&hi, &a).ac.unwrap(),
        0.125,
    );
    check(
        &mut fails,
        "delta svm equal",
        deltas_vs_svm(&a, &a).ac.unwrap(),
        0.0,
    );
    if deltas_vs_svm(&a, &z).ac.is_some() {
        fails.push("delta against 0 is defined".into());
    }
    check(&mut fails, "gap", gap(1.2, 1.0).unwrap(), 0.2);
    check(&mut fails, "gap zero", gap(1.0, 1.0).unwrap(), 0.0);
    if gap(1.0, 0.0).is_some() {
        fails.push("gap with zero optimum is defined".into());
    }
    let e = ecdf(&[10.0, 20.0, 4000.0], 3600.0, &[15.0, 3600.0]);
    check(&mut fails, "ecdf 15", e[0].1, 1.0 / 3.0);
    check(&mut fails, "ecdf 3600", e[1].1, 2.0 / 3.0);
    if !ecdf(&[1.0], 10.0, &[]).is_empty() {
        fails.push("empty grid gives points".into());
    }
    if ecdf(&[20.0, 30.0], 10.0, &[5.0, 100.0])
        .iter()
        .any(|p| p.1 != 0.0)
    {
        fails.push("censored values counted".into());
    }
    check(&mut fails, "big-M update 1", big_m_update(0.5, 1.0), 3.0);
    check(&mut fails, "big-M update 2", big_m_update(0.0, 7.0), 1.0);
    check(&mut fails, "big-M update 3", big_m_update(2.0, 3.0), 13.0);
    let inst = Instance::new(
        vec![vec![3.0], vec![0.0]],
        vec![-1, -1],
        vec![vec![0.0]; 4],
        2,
    )
    .unwrap();
    check(
        &mut fails,
        "big-M initial",
        big_m_initial(&inst, &PenaltyConfig::default()),
        6.0 * 12f64.sqrt() + 1.0,
    );
    (
        fails.is_empty(),
        if fails.is_empty() {
            "all closed-form examples match".into()
        } else {
            first_failures(fails)
        },
    )
}

fn criterion_9() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("toy.csv");
    let mut text = String::from("x1,x2,target\n");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let (a, b): (f64, f64) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let y = if a + 0.5 * b > 0.3 { 1 } else { 0 };
        text.push_str(&format!("{a:.4},{b:.4},{y}\n"));
    }
    std::fs::write(&csv_path, text).unwrap();
    let cfg = RunConfig {
        datasets: vec![csv_path],
        methods: Method::ALL.to_vec(),
        samples: 2,
        seed: 11,
        time_limit: 120.0,
        labeled_fraction: 0.3,
        jobs: 2,
        ..RunConfig::default()
    };
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let manifests = pipeline::prepare(&cfg, &out).unwrap();
        let mut recs = pipeline::solve_all(&manifests, &cfg, None).unwrap();
        pipeline::evaluate(&mut recs, &manifests, &cfg).unwrap();
        let bytes: Vec<Vec<u8>> = manifests
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        (recs, bytes)
    };
    let (a, ma) = run("a");
    let (b, mb) = run("b");
    let strip = |v: &[cs3vm::eval::BenchmarkRecord]| -> Vec<_> {
        v.iter().map(|r| r.without_timing()).collect()
    };
    let same = strip(&a) == strip(&b) && ma == mb;
    let errors = a.iter().filter(|r| r.error.is_some()).count();
    (
        same && errors == 0 && a.len() == 10,
        format!(
            "{} records, {errors} errors, identical modulo wall time: {same}",
            a.len()
        ),
    )
}

fn main() {
    let t0 = Instant::now();
    let cases: Vec<Case> = (0..SUITE_SIZE).map(random_case).collect();
    let outcomes: Vec<CaseOutcome> = cases.par_iter().map(run_case).collect();
    let suite_secs = t0.elapsed().as_secs_f64();
    let mut all_ok = true;

    let c1: Vec<String> = outcomes
        .iter()
        .filter_map(|o| o.bb_vs_bf.as_ref().map(|s| format!("#{}: {s}", o.id)))
        .collect();
    all_ok &= report(
        "1 oracle equivalence",
        c1.is_empty() && suite_secs <= 300.0,
        &if c1.is_empty() {
            format!("{SUITE_SIZE} instances agree within 1e-6; suite took {suite_secs:.1}s")
        } else {
            first_failures(c1)
        },
    );

    let c2: Vec<String> = outcomes
        .iter()
        .flat_map(|o| {
            o.bigm_vs_side
                .iter()
                .chain(o.norm_bounds.iter())
                .map(move |s| format!("#{}: {s}", o.id))
        })
        .collect();
    all_ok &= report(
        "2 big-M validity",
        c2.is_empty(),
        &if c2.is_empty() {
            "big-M optimum equals the side-constraint oracle; norm and offset bounds hold"
                .to_string()
        } else {
            first_failures(c2)
        },
    );

    let c3: Vec<String> = outcomes
        .iter()
        .flat_map(|o| o.lifts.iter().map(move |s| format!("#{}: {s}", o.id)))
        .collect();
    all_ok &= report(
        "3 feasibility lifts",
        c3.is_empty(),
        &if c3.is_empty() {
            format!(
                "{} lifts feasible to 1e-8 and above the optimum",
                3 * SUITE_SIZE
            )
        } else {
            first_failures(c3)
        },
    );

    let c4: Vec<String> = outcomes
        .iter()
        .flat_map(|o| o.bounds.iter().map(move |s| format!("#{}: {s}", o.id)))
        .collect();
    all_ok &= report(
        "4 termination bounds",
        c4.is_empty(),
        &if c4.is_empty() {
            "zero violations".to_string()
        } else {
            first_failures(c4)
        },
    );

    let c5: Vec<String> = outcomes
        .iter()
        .flat_map(|o| o.wircm.iter().map(move |s| format!("#{}: {s}", o.id)))
        .collect();
    all_ok &= report(
        "5 wircm exactness",
        c5.is_empty(),
        &if c5.is_empty() {
            "optimal on every instance; fixes sound; incumbent nonincreasing".to_string()
        } else {
            first_failures(c5)
        },
    );

    let gaps: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|o| Some((o.ircm_gap?, o.wircm_gap?)))
        .collect();
    let close = gaps.iter().filter(|(g, _)| *g <= 0.2).count();
    let share = close as f64 / gaps.len().max(1) as f64;
    let wircm_exact = gaps.iter().all(|(_, g)| *g <= 1e-6);
    let mean_ircm = gaps.iter().map(|g| g.0).sum::<f64>() / gaps.len().max(1) as f64;
    all_ok &= report(
        "6 upper-bound quality",
        share >= 0.8 && wircm_exact,
        &format!(
            "ircm gap <= 0.2 on {close}/{} ({:.1}%), mean ircm gap {mean_ircm:.4}, wircm gap 0 on all: {wircm_exact}",
            gaps.len(),
            100.0 * share
        ),
    );

    let (ok7, d7) = criterion_7();
    all_ok &= report("7 biased-sampling direction", ok7, &d7);
    let (ok8, d8) = criterion_8();
    all_ok &= report("8 unit formulas", ok8, &d8);
    let (ok9, d9) = criterion_9();
    all_ok &= report("9 determinism", ok9, &d9);

    let sizes: usize = outcomes.iter().map(|o| o.m).sum();
    let zero_opt = outcomes.iter().filter(|o| o.optimum <= 1e-9).count();
    let fixed: usize = outcomes.iter().map(|o| o.fixed).sum();
    println!(
        "suite: {SUITE_SIZE} instances, {sizes} unlabeled points in total, {fixed} points fixed by probing, \
         {zero_opt} with zero optimum; {:.1}s overall",
        t0.elapsed().as_secs_f64()
    );
    if !all_ok {
        std::process::exit(1);
    }
}
