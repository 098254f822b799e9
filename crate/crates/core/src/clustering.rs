//! k-means over the unlabeled points, cut detection and splitting, and the
//! bookkeeping for clusters that are temporarily set aside.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::rng;
use crate::error::{Error, Result};
use crate::models::{Hyperplane, Side};

/// A partition of the unlabeled points. Member lists hold indices into the
/// unlabeled point slice the clustering was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Cluster id of every point.
    pub membership: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub k: usize,
}

pub fn mean(points: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    let mut c = vec![0.0; d];
    for &i in idx {
        for (cj, xj) in c.iter_mut().zip(&points[i]) {
            *cj += xj;
        }
    }
    let n = idx.len() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Clustering {
    /// Builds a clustering from a membership vector; cluster ids must be `0..k`
    /// and every id must be used.
    pub fn from_membership(points: &[Vec<f64>], membership: Vec<usize>) -> Result<Self> {
        if membership.len() != points.len() {
            return Err(Error::InvalidArgument("membership length mismatch".into()));
        }
        let k = membership.iter().max().map_or(0, |&j| j + 1);
        let mut members = vec![Vec::new(); k];
        for (i, &j) in membership.iter().enumerate() {
            members[j].push(i);
        }
        if let Some(j) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidData(format!("cluster {j} is empty")));
        }
        Ok(Self::from_members(points, members))
    }

    fn from_members(points: &[Vec<f64>], members: Vec<Vec<usize>>) -> Self {
        let mut membership = vec![0; points.len()];
        for (j, ms) in members.iter().enumerate() {
            for &i in ms {
                membership[i] = j;
            }
        }
        Clustering {
            centroids: members.iter().map(|ms| mean(points, ms)).collect(),
            counts: members.iter().map(Vec::len).collect(),
            membership,
            k: members.len(),
            members,
        }
    }

    /// Every point in its own cluster.
    pub fn singletons(points: &[Vec<f64>]) -> Self {
        Self::from_members(points, (0..points.len()).map(|i| vec![i]).collect())
    }

    /// Sum of squared distances to the assigned centroids.
    pub fn loss(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .zip(&self.membership)
            .map(|(x, &j)| sq_dist(x, &self.centroids[j]))
            .sum()
    }

    /// Checks counts, membership and centroid consistency.
    pub fn validate(&self, points: &[Vec<f64>]) -> Result<()> {
        if self.k != self.members.len()
            || self.k != self.centroids.len()
            || self.k != self.counts.len()
        {
            return Err(Error::InvalidData("cluster arrays disagree on k".into()));
        }
        if self.counts.iter().sum::<usize>() != points.len() {
            return Err(Error::InvalidData("counts do not add up".into()));
        }
        for (j, ms) in self.members.iter().enumerate() {
            if ms.is_empty() || ms.len() != self.counts[j] {
                return Err(Error::InvalidData(format!("cluster {j} has a bad count")));
            }
            if ms.iter().any(|&i| self.membership[i] != j) {
                return Err(Error::InvalidData(format!(
                    "cluster {j} membership mismatch"
                )));
            }
            let c = mean(points, ms);
            let scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if c.iter()
                .zip(&self.centroids[j])
                .any(|(a, b)| (a - b).abs() > 1e-9 * scale)
            {
                return Err(Error::InvalidData(format!("centroid {j} is stale")));
            }
        }
        Ok(())
    }
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if t < w {
                        break;
                    }
                    t -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.push(points[pick].clone());
        for (w, x) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(x, centers.last().unwrap()));
        }
    }
    centers
}

/// Lloyd's algorithm with k-means++ seeding. Returns the clustering and the
/// loss after every update step.
pub fn kmeans_traced(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(Clustering, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} points",
            points.len()
        )));
    }
    let mut rng = rng(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let mut assign = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, x) in points.iter().enumerate() {
            let mut best = assign[i];
            let mut best_d = if best == usize::MAX {
                f64::INFINITY
            } else {
                sq_dist(x, &centers[best])
            };
            for (j, c) in centers.iter().enumerate() {
                let d = sq_dist(x, c);
                // ties keep the current cluster
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }

        let mut sizes = vec![0usize; k];
        for &j in &assign {
            sizes[j] += 1;
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            // farthest point among clusters that can spare one
            let (far, _) = assign
                .iter()
                .enumerate()
                .filter(|(_, &j)| sizes[j] >= 2)
                .map(|(i, &j)| (i, sq_dist(&points[i], &centers[j])))
                .fold((usize::MAX, f64::NEG_INFINITY), |a, b| {
                    if b.1 > a.1 {
                        b
                    } else {
                        a
                    }
                });
            sizes[assign[far]] -= 1;
            assign[far] = empty;
            sizes[empty] = 1;
            centers[empty] = points[far].clone();
            changed = true;
        }

        let mut members = vec![Vec::new(); k];
        for (i, &j) in assign.iter().enumerate() {
            members[j].push(i);
        }
        centers = members.iter().map(|ms| mean(points, ms)).collect();
        let loss = points
            .iter()
            .zip(&assign)
            .map(|(x, &j)| sq_dist(x, &centers[j]))
            .sum();
        trace.push(loss);
        if !changed {
            break;
        }
    }
    let c = Clustering::from_membership(points, assign)?;
    Ok((c, trace))
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    kmeans_traced(points, k, seed, max_iter).map(|(c, _)| c)
}

/// Side of a point value; boundary values count as nonnegative.
pub fn side_of(h: &Hyperplane, value: f64) -> Side {
    if value < -h.band() {
        Side::Negative
    } else {
        Side::Positive
    }
}

/// True when the members straddle the hyperplane.
pub fn is_cut<'a>(members: impl IntoIterator<Item = &'a [f64]>, h: &Hyperplane) -> bool {
    let (mut pos, mut neg) = (false, false);
    for x in members {
        match side_of(h, h.value(x)) {
            Side::Positive => pos = true,
            Side::Negative => neg = true,
        }
        if pos && neg {
            return true;
        }
    }
    false
}

pub fn cluster_is_cut(c: &Clustering, j: usize, points: &[Vec<f64>], h: &Hyperplane) -> bool {
    is_cut(c.members[j].iter().map(|&i| points[i].as_slice()), h)
}

/// Splits the clusters in `ids` that `h` cuts. The nonnegative half keeps the
/// id; the negative half is appended. Returns `(old id, new id)` pairs.
pub fn split_clusters(
    c: &mut Clustering,
    ids: &[usize],
    points: &[Vec<f64>],
    h: &Hyperplane,
) -> Vec<(usize, usize)> {
    let mut made = Vec::new();
    for &j in ids {
        if !cluster_is_cut(c, j, points, h) {
            continue;
        }
        let (keep, moved): (Vec<usize>, Vec<usize>) = c.members[j]
            .iter()
            .partition(|&&i| side_of(h, h.value(&points[i])) == Side::Positive);
        let new_id = c.k;
        for &i in &moved {
            c.membership[i] = new_id;
        }
        c.centroids[j] = mean(points, &keep);
        c.counts[j] = keep.len();
        c.members[j] = keep;
        c.centroids.push(mean(points, &moved));
        c.counts.push(moved.len());
        c.members.push(moved);
        c.k += 1;
        made.push((j, new_id));
    }
    made
}

/// Splits every cut cluster.
pub fn split_cut_clusters(c: &Clustering, points: &[Vec<f64>], h: &Hyperplane) -> Clustering {
    let mut out = c.clone();
    let ids: Vec<usize> = (0..c.k).collect();
    split_clusters(&mut out, &ids, points, h);
    out
}

/// The `a`-quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], a: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&a) || values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "bad quantile input, level {a}"
        )));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let d = s.len();
    if d == 1 {
        return Ok(s[0]);
    }
    let step = |i: usize| (i - 1) as f64 / (d - 1) as f64;
    // 1-based positions bracketing the level
    let q = (1..=d).filter(|&i| step(i) <= a).max().unwrap_or(1);
    let r = (1..=d).filter(|&i| step(i) >= a).min().unwrap_or(d);
    if q == r {
        return Ok(s[q - 1]);
    }
    let t = a * (d - 1) as f64 - (q - 1) as f64;
    Ok(s[q - 1] + t * (s[r - 1] - s[q - 1]))
}

/// Discard threshold: the `delta_hat`-quantile of centroid distances |ωᵀc + b|.
pub fn compute_delta<'a>(
    h: &Hyperplane,
    centroids: impl IntoIterator<Item = &'a [f64]>,
    delta_hat: f64,
) -> Result<f64> {
    let dist: Vec<f64> = centroids.into_iter().map(|c| h.value(c).abs()).collect();
    quantile(&dist, delta_hat)
}

/// Active/discarded bookkeeping on top of a [`Clustering`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterLedger {
    pub clustering: Clustering,
    pub residual_pos: Option<usize>,
    pub residual_neg: Option<usize>,
    /// Discarded cluster id → (residual id, count moved).
    pub absorbed: BTreeMap<usize, (usize, usize)>,
}

impl ClusterLedger {
    pub fn new(clustering: Clustering) -> Self {
        ClusterLedger {
            clustering,
            residual_pos: None,
            residual_neg: None,
            absorbed: BTreeMap::new(),
        }
    }

    pub fn is_active(&self, j: usize) -> bool {
        !self.absorbed.contains_key(&j)
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.clustering.k)
            .filter(|&j| self.is_active(j))
            .collect()
    }

    pub fn discarded(&self) -> Vec<usize> {
        self.absorbed.keys().copied().collect()
    }

    pub fn residual(&self, side: Side) -> Option<usize> {
        match side {
            Side::Positive => self.residual_pos,
            Side::Negative => self.residual_neg,
        }
    }

    pub fn is_residual(&self, j: usize) -> bool {
        self.residual_pos == Some(j) || self.residual_neg == Some(j)
    }

    /// Own count plus everything absorbed from discarded clusters.
    pub fn effective_count(&self, j: usize) -> usize {
        self.clustering.counts[j]
            + self
                .absorbed
                .values()
                .filter(|(r, _)| *r == j)
                .map(|(_, n)| n)
                .sum::<usize>()
    }

    pub fn set_residual(&mut self, side: Side, j: usize) {
        match side {
            Side::Positive => self.residual_pos = Some(j),
            Side::Negative => self.residual_neg = Some(j),
        }
    }

    /// Moves cluster `j` out of the active set, adding its count to `residual`.
    pub fn discard(&mut self, j: usize, residual: usize) -> Result<()> {
        if !self.is_active(j) || !self.is_active(residual) || j == residual || self.is_residual(j) {
            return Err(Error::InvalidArgument(format!(
                "cannot discard cluster {j} into {residual}"
            )));
        }
        self.absorbed
            .insert(j, (residual, self.clustering.counts[j]));
        Ok(())
    }

    /// Restores a discarded cluster and subtracts its count from the residual.
    /// A residual left with nothing absorbed gives up its role.
    pub fn reactivate(&mut self, j: usize) -> Result<()> {
        let (res, _) = self
            .absorbed
            .remove(&j)
            .ok_or_else(|| Error::InvalidArgument(format!("cluster {j} is not discarded")))?;
        if !self.absorbed.values().any(|(r, _)| *r == res) {
            if self.residual_pos == Some(res) {
                self.residual_pos = None;
            }
            if self.residual_neg == Some(res) {
                self.residual_neg = None;
            }
        }
        Ok(())
    }

    /// Splits active cut clusters. A split residual hands its role and its
    /// absorbed counts to the half on its own side.
    pub fn split_active(&mut self, points: &[Vec<f64>], h: &Hyperplane) -> Vec<(usize, usize)> {
        let ids = self.active();
        let made = split_clusters(&mut self.clustering, &ids, points, h);
        for &(old, new) in &made {
            if self.residual_neg == Some(old) {
                self.residual_neg = Some(new);
                for v in self.absorbed.values_mut() {
                    if v.0 == old {
                        v.0 = new;
                    }
                }
            }
        }
        made
    }

    /// Σ effective counts over active clusters; equals the point count.
    pub fn active_total(&self) -> usize {
        self.active().iter().map(|&j| self.effective_count(j)).sum()
    }
}
