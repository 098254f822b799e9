//! Re-clustering heuristics: solve the clustered problem, split every cluster
//! the hyperplane cuts, repeat. The improved variant also sets far clusters
//! aside, brings them back when the hyperplane moves towards them, and
//! tightens big-M from the best known objective after every round.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bb::{solve_miqp, BbOptions, MiqpStatus};
use crate::clustering::{
    cluster_is_cut, compute_delta, kmeans, side_of, ClusterLedger, Clustering,
};
use crate::error::{Error, Result};
use crate::models::{
    big_m_initial, big_m_update, build_clustered_weighted, hyperplane_of, lift_grouped,
    lift_hyperplane, FeasiblePoint, Hyperplane, Instance, PenaltyConfig, Side,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcmConfig {
    pub k1: usize,
    pub k_plus: usize,
    pub delta_hat_1: f64,
    pub delta_tilde: f64,
    pub penalties: PenaltyConfig,
    /// Seconds for the whole run.
    pub time_limit: f64,
    pub seed: u64,
    pub kmeans_max_iter: usize,
}

/// Initial cluster count by number of unlabeled points.
pub fn default_k1(m: usize) -> usize {
    let k = match m {
        0..=500 => 10,
        501..=1000 => 20,
        _ => 50,
    };
    k.min(m).max(1)
}

impl RcmConfig {
    pub fn for_size(m: usize) -> Self {
        RcmConfig {
            k1: default_k1(m),
            k_plus: 50,
            delta_hat_1: 0.8,
            delta_tilde: 0.1,
            penalties: PenaltyConfig::default(),
            time_limit: 3600.0,
            seed: 0,
            kmeans_max_iter: 100,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        self.penalties.validate()?;
        if m > 0 && (self.k1 == 0 || self.k1 > m) {
            return Err(Error::InvalidArgument(format!(
                "k1 = {} must lie in [1, {m}]",
                self.k1
            )));
        }
        if !(self.delta_hat_1 > 0.0 && self.delta_hat_1 <= 1.0) {
            return Err(Error::InvalidArgument(
                "delta_hat_1 must lie in (0, 1]".into(),
            ));
        }
        if !(self.delta_tilde > 0.0 && self.delta_tilde < 1.0) {
            return Err(Error::InvalidArgument(
                "delta_tilde must lie in (0, 1)".into(),
            ));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::InvalidArgument("time_limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Active clusters in this round's solve.
    pub k: usize,
    pub objective: f64,
    pub delta: Option<f64>,
    pub delta_hat: f64,
    pub discarded: usize,
    pub side_changes: usize,
    pub reactivated: usize,
    pub cut: usize,
    /// big-M used in this round's solve.
    pub big_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcmResult {
    /// Clustered point of the last solve.
    pub point: FeasiblePoint,
    /// Per-point lift of `point`.
    pub lifted: FeasiblePoint,
    /// Number of clustered solves.
    pub iterations: usize,
    pub final_k: usize,
    /// big-M of the last solve.
    pub final_m: f64,
    pub hit_time_limit: bool,
    pub trace: Vec<IterationTrace>,
}

impl RcmResult {
    /// Rounds that ended in a split or a reactivation.
    pub fn splitting_rounds(&self) -> usize {
        self.iterations.saturating_sub(1)
    }
}

/// Round bound for the plain method: `m − k1`.
pub fn rcm_round_bound(m: usize, k1: usize) -> f64 {
    m as f64 - k1 as f64
}

/// Round bound for the improved method: `2m − k1 + (1 − Δ̂¹)/Δ̃`.
pub fn ircm_round_bound(m: usize, k1: usize, delta_hat_1: f64, delta_tilde: f64) -> f64 {
    2.0 * m as f64 - k1 as f64 + (1.0 - delta_hat_1) / delta_tilde
}

struct Solved {
    h: Hyperplane,
    z: Vec<u8>,
    point: FeasiblePoint,
    timed_out: bool,
}

/// One clustered solve over `centroids`/`weights`, warm-started with the
/// side-of-centroid completion of `prev` when it is feasible.
fn solve_round(
    inst: &Instance,
    centroids: &[&[f64]],
    weights: &[usize],
    pen: &PenaltyConfig,
    big_m: f64,
    prev: Option<&Hyperplane>,
    time_left: f64,
) -> Result<Option<Solved>> {
    let p = build_clustered_weighted(inst, centroids, weights, pen, big_m)?;
    let wf: Vec<f64> = weights.iter().map(|&e| e as f64).collect();
    let warm = prev.and_then(|h| {
        let v = sign_point(h, centroids, &wf, inst, pen).to_vector();
        (p.relaxation.max_violation(&v) <= 1e-9).then_some(v)
    });
    let opts = BbOptions::default()
        .with_time_limit(time_left)
        .with_warm_start(warm);
    let sol = solve_miqp(&p, &opts)?;
    let Some(v) = sol.incumbent else {
        if sol.status == MiqpStatus::TimeLimit {
            return Ok(None);
        }
        return Err(Error::Solver(format!(
            "clustered problem ended with {:?}",
            sol.status
        )));
    };
    let mut h = hyperplane_of(&v, &p.meta);
    h.normalize_offset(inst.radius);
    let z: Vec<u8> = p.binary_idx.iter().map(|&j| (v[j] >= 0.5) as u8).collect();
    let point = FeasiblePoint::complete(h.clone(), z.clone(), &wf, inst, pen);
    Ok(Some(Solved {
        h,
        z,
        point,
        timed_out: sol.status == MiqpStatus::TimeLimit,
    }))
}

/// `z` from the side of each centroid, completed with the cheapest slacks.
fn sign_point(
    h: &Hyperplane,
    centroids: &[&[f64]],
    weights: &[f64],
    inst: &Instance,
    pen: &PenaltyConfig,
) -> FeasiblePoint {
    let z = centroids
        .iter()
        .map(|c| (side_of(h, h.value(c)) == Side::Positive) as u8)
        .collect();
    FeasiblePoint::complete(h.clone(), z, weights, inst, pen)
}

fn timed_out_result(
    inst: &Instance,
    pen: &PenaltyConfig,
    last: Option<FeasiblePoint>,
    iterations: usize,
    final_k: usize,
    final_m: f64,
    trace: Vec<IterationTrace>,
) -> RcmResult {
    let h = last
        .as_ref()
        .map(|p| p.hyperplane.clone())
        .unwrap_or_else(|| Hyperplane::new(vec![0.0; inst.dim], 0.0));
    let lifted = lift_hyperplane(&h, inst, pen);
    RcmResult {
        point: last.unwrap_or_else(|| lifted.clone()),
        lifted,
        iterations,
        final_k,
        final_m,
        hit_time_limit: true,
        trace,
    }
}

fn initial_clustering(inst: &Instance, cfg: &RcmConfig) -> Result<Clustering> {
    kmeans(&inst.unlabeled, cfg.k1, cfg.seed, cfg.kmeans_max_iter)
}

fn lift_or_fallback(
    point: &FeasiblePoint,
    owner: &[usize],
    inst: &Instance,
    pen: &PenaltyConfig,
) -> FeasiblePoint {
    lift_grouped(point, owner, inst, pen).unwrap_or_else(|e| {
        log::warn!("cluster lift failed ({e}), using the side-based lift");
        lift_hyperplane(&point.hyperplane, inst, pen)
    })
}

/// Plain re-clustering with big-M fixed at its initial value.
pub fn rcm(inst: &Instance, cfg: &RcmConfig) -> Result<RcmResult> {
    cfg.validate(inst.m())?;
    let pen = &cfg.penalties;
    let start = Instant::now();
    let big_m = big_m_initial(inst, pen);
    if inst.m() == 0 {
        return no_unlabeled(inst, pen, big_m, cfg.time_limit);
    }
    let mut c = initial_clustering(inst, cfg)?;
    let mut trace = Vec::new();
    let mut last: Option<FeasiblePoint> = None;
    let mut iterations = 0;
    loop {
        let left = cfg.time_limit - start.elapsed().as_secs_f64();
        if left <= 0.0 {
            return Ok(timed_out_result(
                inst, pen, last, iterations, c.k, big_m, trace,
            ));
        }
        let cs: Vec<&[f64]> = c.centroids.iter().map(Vec::as_slice).collect();
        let prev = last.as_ref().map(|p| &p.hyperplane);
        let Some(s) = solve_round(inst, &cs, &c.counts, pen, big_m, prev, left)? else {
            return Ok(timed_out_result(
                inst, pen, last, iterations, c.k, big_m, trace,
            ));
        };
        iterations += 1;
        let cut: Vec<usize> = (0..c.k)
            .filter(|&j| cluster_is_cut(&c, j, &inst.unlabeled, &s.h))
            .collect();
        trace.push(IterationTrace {
            iteration: iterations,
            k: c.k,
            objective: s.point.objective,
            delta: None,
            delta_hat: 0.0,
            discarded: 0,
            side_changes: 0,
            reactivated: 0,
            cut: cut.len(),
            big_m,
        });
        if s.timed_out {
            return Ok(timed_out_result(
                inst,
                pen,
                Some(s.point),
                iterations,
                c.k,
                big_m,
                trace,
            ));
        }
        if cut.is_empty() {
            let lifted = lift_or_fallback(&s.point, &c.membership, inst, pen);
            return Ok(RcmResult {
                point: s.point,
                lifted,
                iterations,
                final_k: c.k,
                final_m: big_m,
                hit_time_limit: false,
                trace,
            });
        }
        crate::clustering::split_clusters(&mut c, &cut, &inst.unlabeled, &s.h);
        last = Some(s.point);
    }
}

fn no_unlabeled(
    inst: &Instance,
    pen: &PenaltyConfig,
    big_m: f64,
    time_left: f64,
) -> Result<RcmResult> {
    let s = solve_round(inst, &[], &[], pen, big_m, None, time_left)?
        .ok_or_else(|| Error::Solver("time limit before the first solve".into()))?;
    Ok(RcmResult {
        point: s.point.clone(),
        lifted: s.point,
        iterations: 1,
        final_k: 0,
        final_m: big_m,
        hit_time_limit: false,
        trace: Vec::new(),
    })
}

/// Per-point owner positions for the current active set: active clusters map
/// to themselves, discarded ones to their residual.
fn owner_map(ledger: &ClusterLedger, active: &[usize]) -> Vec<usize> {
    let mut pos = vec![usize::MAX; ledger.clustering.k];
    for (p, &j) in active.iter().enumerate() {
        pos[j] = p;
    }
    ledger
        .clustering
        .membership
        .iter()
        .map(|&j| match ledger.absorbed.get(&j) {
            Some(&(r, _)) => pos[r],
            None => pos[j],
        })
        .collect()
}

fn members_side(
    ledger: &ClusterLedger,
    j: usize,
    points: &[Vec<f64>],
    h: &Hyperplane,
) -> Option<Side> {
    let mut side = None;
    for &i in &ledger.clustering.members[j] {
        let s = side_of(h, h.value(&points[i]));
        match side {
            None => side = Some(s),
            Some(t) if t != s => return None,
            _ => {}
        }
    }
    side
}

/// Re-clustering with discarding, reactivation and big-M updates.
pub fn ircm(inst: &Instance, cfg: &RcmConfig) -> Result<RcmResult> {
    cfg.validate(inst.m())?;
    let pen = &cfg.penalties;
    let start = Instant::now();
    let mut big_m = big_m_initial(inst, pen);
    if inst.m() == 0 {
        return no_unlabeled(inst, pen, big_m, cfg.time_limit);
    }
    let pts = &inst.unlabeled;
    let mut ledger = ClusterLedger::new(initial_clustering(inst, cfg)?);
    let mut delta_hat = cfg.delta_hat_1;
    let mut prev_h: Option<Hyperplane> = None;
    let mut last: Option<FeasiblePoint> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let left = cfg.time_limit - start.elapsed().as_secs_f64();
        let active = ledger.active();
        if left <= 0.0 {
            return Ok(timed_out_result(
                inst,
                pen,
                last,
                iterations,
                ledger.clustering.k,
                big_m,
                trace,
            ));
        }
        let cs: Vec<&[f64]> = active
            .iter()
            .map(|&j| ledger.clustering.centroids[j].as_slice())
            .collect();
        let counts: Vec<usize> = active.iter().map(|&j| ledger.effective_count(j)).collect();
        debug_assert_eq!(counts.iter().sum::<usize>(), inst.m());
        let Some(s) = solve_round(inst, &cs, &counts, pen, big_m, prev_h.as_ref(), left)? else {
            return Ok(timed_out_result(
                inst,
                pen,
                last,
                iterations,
                ledger.clustering.k,
                big_m,
                trace,
            ));
        };
        iterations += 1;
        let h = &s.h;
        let owner = owner_map(&ledger, &active);
        let z_of = |j: usize| -> u8 {
            let p = active.iter().position(|&a| a == j).expect("active cluster");
            s.z[p]
        };

        let delta = compute_delta(h, cs.iter().copied(), delta_hat)?;
        let cut: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| cluster_is_cut(&ledger.clustering, j, pts, h))
            .collect();

        // reactivation among clusters discarded before this round
        let before = ledger.discarded();
        let mut side_changed = Vec::new();
        let mut near = Vec::new();
        for &j in &before {
            let members = &ledger.clustering.members[j];
            let (res, _) = ledger.absorbed[&j];
            let res_side = if z_of(res) == 1 {
                Side::Positive
            } else {
                Side::Negative
            };
            let moved = prev_h.as_ref().is_some_and(|g| {
                members
                    .iter()
                    .any(|&i| side_of(g, g.value(&pts[i])) != side_of(h, h.value(&pts[i])))
            });
            let off_residual = members
                .iter()
                .any(|&i| side_of(h, h.value(&pts[i])) != res_side);
            if moved || off_residual {
                side_changed.push(j);
            } else if members.iter().any(|&i| h.value(&pts[i]).abs() <= delta) {
                near.push(j);
            }
        }
        let done = side_changed.is_empty() && cut.is_empty();

        let mut discarded_now = 0;
        if !done {
            for &j in side_changed.iter().chain(&near) {
                ledger.reactivate(j)?;
            }
            if !side_changed.is_empty() {
                delta_hat = (delta_hat + cfg.delta_tilde).min(1.0);
            }
            if active.len() > cfg.k_plus {
                discarded_now = discard_far(&mut ledger, &active, &cut, pts, h, delta, &z_of)?;
            }
        }
        trace.push(IterationTrace {
            iteration: iterations,
            k: active.len(),
            objective: s.point.objective,
            delta: Some(delta),
            delta_hat,
            discarded: discarded_now,
            side_changes: side_changed.len(),
            reactivated: side_changed.len() + near.len(),
            cut: cut.len(),
            big_m,
        });
        if s.timed_out {
            return Ok(timed_out_result(
                inst,
                pen,
                Some(s.point),
                iterations,
                ledger.clustering.k,
                big_m,
                trace,
            ));
        }
        if done {
            let lifted = lift_or_fallback(&s.point, &owner, inst, pen);
            return Ok(RcmResult {
                point: s.point,
                lifted,
                iterations,
                final_k: ledger.clustering.k,
                final_m: big_m,
                hit_time_limit: false,
                trace,
            });
        }

        ledger.split_active(pts, h);
        // upper bound for the next round from the side of every new centroid
        let next = ledger.active();
        let ncs: Vec<&[f64]> = next
            .iter()
            .map(|&j| ledger.clustering.centroids[j].as_slice())
            .collect();
        let nw: Vec<f64> = next
            .iter()
            .map(|&j| ledger.effective_count(j) as f64)
            .collect();
        let bound = sign_point(h, &ncs, &nw, inst, pen).objective;
        big_m = big_m_update(bound, inst.radius);
        prev_h = Some(s.h.clone());
        last = Some(s.point);
    }
}

/// Sets aside clusters lying entirely beyond `delta` on one side. Returns how
/// many were discarded.
fn discard_far(
    ledger: &mut ClusterLedger,
    active: &[usize],
    cut: &[usize],
    pts: &[Vec<f64>],
    h: &Hyperplane,
    delta: f64,
    z_of: &dyn Fn(usize) -> u8,
) -> Result<usize> {
    let mut count = 0;
    for side in [Side::Positive, Side::Negative] {
        let want_z = (side == Side::Positive) as u8;
        // clusters still active after reactivation, wholly on this side and
        // agreeing with their solved indicator
        let eligible: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| {
                ledger.is_active(j)
                    && !cut.contains(&j)
                    && members_side(ledger, j, pts, h) == Some(side)
                    && z_of(j) == want_z
            })
            .collect();
        let far: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|&j| {
                !ledger.is_residual(j)
                    && ledger.clustering.members[j]
                        .iter()
                        .all(|&i| h.value(&pts[i]).abs() > delta)
            })
            .collect();
        if far.is_empty() {
            continue;
        }
        let residual = match ledger.residual(side) {
            Some(r) if eligible.contains(&r) => r,
            Some(_) => continue,
            None => {
                let Some(&r) = eligible.iter().max_by(|&&a, &&b| {
                    let da = h.value(&ledger.clustering.centroids[a]).abs();
                    let db = h.value(&ledger.clustering.centroids[b]).abs();
                    da.total_cmp(&db)
                }) else {
                    continue;
                };
                ledger.set_residual(side, r);
                r
            }
        };
        for j in far {
            if j != residual {
                ledger.discard(j, residual)?;
                count += 1;
            }
        }
    }
    Ok(count)
}
