//! Problem builders for the plain SVM and the cardinality-constrained
//! variants, big-M values, and lifts of hyperplanes to feasible points.
//!
//! Every problem uses the variable layout `[ω, b, ξ, η₁, η₂, z]` and the
//! decision value `ωᵀx + b`.

use serde::{Deserialize, Serialize};

use crate::bb::{MiqpProblem, RoundingHints, VarLayout};
use crate::clustering::Clustering;
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::qp::{solve_qp, QpOptions, QpProblem, QpStatus};

/// Materialized labeled/unlabeled data for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub labeled: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
    pub unlabeled: Vec<Vec<f64>>,
    pub tau: usize,
    pub dim: usize,
    /// Largest Euclidean norm over labeled and unlabeled points.
    pub radius: f64,
}

pub fn max_norm<'a>(points: impl IntoIterator<Item = &'a Vec<f64>>) -> f64 {
    points.into_iter().map(|x| norm(x)).fold(0.0, f64::max)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Instance {
    pub fn new(
        labeled: Vec<Vec<f64>>,
        labels: Vec<i8>,
        unlabeled: Vec<Vec<f64>>,
        tau: usize,
    ) -> Result<Self> {
        if labeled.len() != labels.len() {
            return Err(Error::InvalidData(
                "labeled points and labels differ in length".into(),
            ));
        }
        if tau > unlabeled.len() {
            return Err(Error::InvalidData(format!(
                "tau = {tau} exceeds the {} unlabeled points",
                unlabeled.len()
            )));
        }
        let dim = labeled.first().or(unlabeled.first()).map_or(0, Vec::len);
        for x in labeled.iter().chain(&unlabeled) {
            if x.len() != dim {
                return Err(Error::InvalidData("points differ in dimension".into()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("instance point".into()));
            }
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::InvalidData("labels must be ±1".into()));
        }
        let radius = max_norm(labeled.iter().chain(&unlabeled));
        Ok(Instance {
            labeled,
            labels,
            unlabeled,
            tau,
            dim,
            radius,
        })
    }

    pub fn from_sample(ds: &Dataset, s: &Sample) -> Result<Self> {
        s.validate(ds)?;
        Self::new(
            s.labeled_idx
                .iter()
                .map(|&i| ds.points[i].clone())
                .collect(),
            s.labels.clone(),
            s.unlabeled_idx
                .iter()
                .map(|&i| ds.points[i].clone())
                .collect(),
            s.tau,
        )
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn m(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn labeled_negatives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == -1).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub omega: Vec<f64>,
    pub b: f64,
}

impl Hyperplane {
    pub fn new(omega: Vec<f64>, b: f64) -> Self {
        Hyperplane { omega, b }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.omega.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }

    pub fn norm(&self) -> f64 {
        norm(&self.omega)
    }

    /// Values within this distance of zero count as on the hyperplane.
    pub fn band(&self) -> f64 {
        1e-9 * (1.0 + self.norm())
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.value(x).abs() <= self.band()
    }

    /// Clamps `|b|` to `‖ω‖·radius + 1`, a bound every optimum satisfies.
    /// Beyond it all points sit on one side with value at least 1, so
    /// shrinking `b` keeps every side and never raises a hinge loss.
    pub fn normalize_offset(&mut self, radius: f64) {
        let cap = self.norm() * radius + 1.0;
        if self.b.abs() > cap {
            self.b = cap.copysign(self.b);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Positive => Side::Negative,
            Side::Negative => Side::Positive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub c1: f64,
    pub c2: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { c1: 1.0, c2: 1.0 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c1 > 0.0 && self.c2 > 0.0 && self.c1.is_finite() && self.c2.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "penalties must be positive, got C1 = {}, C2 = {}",
                self.c1, self.c2
            )))
        }
    }
}

/// A point of the cardinality-constrained problem, with per-point `z` or
/// per-cluster `z` depending on where it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub hyperplane: Hyperplane,
    pub xi: Vec<f64>,
    pub eta: (f64, f64),
    pub z: Vec<u8>,
    pub objective: f64,
}

pub fn objective(h: &Hyperplane, xi: &[f64], eta: (f64, f64), pen: &PenaltyConfig) -> f64 {
    0.5 * h.omega.iter().map(|w| w * w).sum::<f64>()
        + pen.c1 * xi.iter().sum::<f64>()
        + pen.c2 * (eta.0 + eta.1)
}

/// Hinge slacks `max(0, 1 − y(ωᵀx + b))`.
pub fn hinge_slacks(inst: &Instance, h: &Hyperplane) -> Vec<f64> {
    inst.labeled
        .iter()
        .zip(&inst.labels)
        .map(|(x, &y)| (1.0 - y as f64 * h.value(x)).max(0.0))
        .collect()
}

/// `(max(0, τ − count), max(0, count − τ))`.
pub fn cardinality_slacks(count: f64, tau: f64) -> (f64, f64) {
    ((tau - count).max(0.0), (count - tau).max(0.0))
}

impl FeasiblePoint {
    /// Completes `(ω, b, z)` with the cheapest slacks. `weights[j]` is the
    /// number of points behind `z[j]`.
    pub fn complete(
        h: Hyperplane,
        z: Vec<u8>,
        weights: &[f64],
        inst: &Instance,
        pen: &PenaltyConfig,
    ) -> Self {
        let xi = hinge_slacks(inst, &h);
        let count: f64 = z.iter().zip(weights).map(|(&zj, w)| zj as f64 * w).sum();
        let eta = cardinality_slacks(count, inst.tau as f64);
        let objective = objective(&h, &xi, eta, pen);
        FeasiblePoint {
            hyperplane: h,
            xi,
            eta,
            z,
            objective,
        }
    }

    /// Per-point completion with unit weights.
    pub fn complete_points(
        h: Hyperplane,
        z: Vec<u8>,
        inst: &Instance,
        pen: &PenaltyConfig,
    ) -> Self {
        let w = vec![1.0; z.len()];
        Self::complete(h, z, &w, inst, pen)
    }

    pub fn recomputed_objective(&self, pen: &PenaltyConfig) -> f64 {
        objective(&self.hyperplane, &self.xi, self.eta, pen)
    }

    /// Primal vector in the `[ω, b, ξ, η₁, η₂, z]` layout.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.hyperplane.omega.clone();
        v.push(self.hyperplane.b);
        v.extend(&self.xi);
        v.push(self.eta.0);
        v.push(self.eta.1);
        v.extend(self.z.iter().map(|&z| z as f64));
        v
    }
}

/// Big-M valid for the full problem before any solution is known.
pub fn big_m_initial(inst: &Instance, pen: &PenaltyConfig) -> f64 {
    let neg = inst.labeled_negatives() as f64;
    let rest = (inst.m() - inst.tau.min(inst.m())) as f64;
    let f = 2.0 * pen.c1 * neg + pen.c2 * rest;
    2.0 * (2.0 * f).sqrt() * inst.radius + 1.0
}

/// Big-M valid once a feasible objective `f_upper` is known.
pub fn big_m_update(f_upper: f64, radius: f64) -> f64 {
    2.0 * (2.0 * f_upper.max(0.0)).sqrt() * radius + 1.0
}

fn base_problem(inst: &Instance, c1: f64, layout: &VarLayout) -> QpProblem {
    let mut qp = QpProblem::new(layout.num_vars());
    for j in layout.omega.clone() {
        qp.quadratic_diag[j] = 1.0;
    }
    for (i, (x, &y)) in inst.labeled.iter().zip(&inst.labels).enumerate() {
        let xi = layout.xi.start + i;
        qp.linear_cost[xi] = c1;
        qp.set_bounds(xi, 0.0, f64::INFINITY);
        let y = y as f64;
        let mut row: Vec<(usize, f64)> = x.iter().enumerate().map(|(j, &v)| (j, y * v)).collect();
        row.push((layout.b, y));
        row.push((xi, 1.0));
        qp.add_row(row, 1.0, f64::INFINITY);
    }
    qp
}

/// The soft-margin SVM on the labeled points.
pub fn build_svm(inst: &Instance, c1: f64) -> (QpProblem, VarLayout) {
    let layout = VarLayout::new(inst.dim, inst.n(), 0, false);
    (base_problem(inst, c1, &layout), layout)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmSolution {
    pub hyperplane: Hyperplane,
    pub xi: Vec<f64>,
    pub objective: f64,
}

/// Solves the SVM and returns the normalized hyperplane with exact slacks.
pub fn solve_svm(inst: &Instance, pen: &PenaltyConfig) -> Result<SvmSolution> {
    pen.validate()?;
    if inst.n() == 0 {
        return Err(Error::InvalidArgument("SVM needs labeled points".into()));
    }
    let (qp, layout) = build_svm(inst, pen.c1);
    let sol = solve_qp(&qp, None, &QpOptions::default())?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Solver(format!(
            "SVM solve ended with {:?}",
            sol.status
        )));
    }
    let mut h = hyperplane_of(&sol.primal, &layout);
    h.normalize_offset(inst.radius);
    let xi = hinge_slacks(inst, &h);
    let objective = objective(&h, &xi, (0.0, 0.0), pen);
    Ok(SvmSolution {
        hyperplane: h,
        xi,
        objective,
    })
}

pub fn hyperplane_of(v: &[f64], layout: &VarLayout) -> Hyperplane {
    Hyperplane::new(v[layout.omega.clone()].to_vec(), v[layout.b])
}

/// How one point enters an indicator problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Entry {
    /// Binary with the given weight in the cardinality row.
    Free(f64),
    /// `ωᵀx + b ≥ 0`, no binary.
    FixedPositive,
    /// `ωᵀx + b ≤ 0`, no binary.
    FixedNegative,
    /// `0 ≤ ωᵀx + b ≤ zM`.
    ForcedPositive,
    /// `−(1 − z)M ≤ ωᵀx + b ≤ 0`.
    ForcedNegative,
}

fn value_row(x: &[f64], b: usize) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = x.iter().enumerate().map(|(j, &v)| (j, v)).collect();
    row.push((b, 1.0));
    row
}

/// Assembles an indicator problem. `offset` counts points fixed positive
/// outside `entries`; returned binaries follow the order of `entries` that
/// carry one.
pub fn assemble(
    inst: &Instance,
    entries: &[(&[f64], Entry)],
    offset: f64,
    pen: &PenaltyConfig,
    big_m: f64,
) -> Result<MiqpProblem> {
    pen.validate()?;
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "big-M must be positive, got {big_m}"
        )));
    }
    let k = entries
        .iter()
        .filter(|(_, e)| !matches!(e, Entry::FixedPositive | Entry::FixedNegative))
        .count();
    let layout = VarLayout::new(inst.dim, inst.n(), k, true);
    let mut qp = base_problem(inst, pen.c1, &layout);
    let (e1, e2) = layout.eta.expect("eta block");
    for e in [e1, e2] {
        qp.linear_cost[e] = pen.c2;
        qp.set_bounds(e, 0.0, f64::INFINITY);
    }

    let mut binary_idx = Vec::with_capacity(k);
    let mut act_rows = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let mut card = Vec::with_capacity(k);
    let mut zi = layout.z.start;
    for &(x, entry) in entries {
        let row = value_row(x, layout.b);
        let with_z = |c: f64| {
            let mut r = row.clone();
            r.push((zi, c));
            r
        };
        match entry {
            Entry::FixedPositive => {
                qp.add_row(row, 0.0, f64::INFINITY);
                continue;
            }
            Entry::FixedNegative => {
                qp.add_row(row, f64::NEG_INFINITY, 0.0);
                continue;
            }
            Entry::Free(w) => {
                if !(w > 0.0) {
                    return Err(Error::InvalidData(
                        "indicator weight must be positive".into(),
                    ));
                }
                act_rows.push(qp.add_row(with_z(-big_m), f64::NEG_INFINITY, 0.0));
                qp.add_row(with_z(-big_m), -big_m, f64::INFINITY);
                weights.push(w);
            }
            Entry::ForcedPositive => {
                act_rows.push(qp.add_row(with_z(-big_m), f64::NEG_INFINITY, 0.0));
                qp.add_row(row, 0.0, f64::INFINITY);
                weights.push(1.0);
            }
            Entry::ForcedNegative => {
                act_rows.push(qp.add_row(with_z(-big_m), -big_m, f64::INFINITY));
                qp.add_row(row, f64::NEG_INFINITY, 0.0);
                weights.push(1.0);
            }
        }
        qp.set_bounds(zi, 0.0, 1.0);
        binary_idx.push(zi);
        card.push((zi, *weights.last().unwrap()));
        zi += 1;
    }
    let target = inst.tau as f64 - offset;
    let mut lower = card.clone();
    lower.push((e1, 1.0));
    qp.add_row(lower, target, f64::INFINITY);
    let mut upper = card;
    upper.push((e2, -1.0));
    qp.add_row(upper, f64::NEG_INFINITY, target);

    Ok(MiqpProblem {
        relaxation: qp,
        binary_idx,
        meta: layout,
        big_m,
        hints: Some(RoundingHints {
            activation_rows: act_rows,
            weights,
            target,
        }),
    })
}

/// The full problem with one binary per unlabeled point.
pub fn build_cs3vm(inst: &Instance, pen: &PenaltyConfig, big_m: f64) -> Result<MiqpProblem> {
    let entries: Vec<(&[f64], Entry)> = inst
        .unlabeled
        .iter()
        .map(|x| (x.as_slice(), Entry::Free(1.0)))
        .collect();
    assemble(inst, &entries, 0.0, pen, big_m)
}

/// One binary per centroid, weighted by `counts`.
pub fn build_clustered_weighted(
    inst: &Instance,
    centroids: &[&[f64]],
    counts: &[usize],
    pen: &PenaltyConfig,
    big_m: f64,
) -> Result<MiqpProblem> {
    if centroids.len() != counts.len() {
        return Err(Error::InvalidArgument(
            "centroids and counts differ in length".into(),
        ));
    }
    if let Some(j) = counts.iter().position(|&e| e == 0) {
        return Err(Error::InvalidData(format!("cluster {j} is empty")));
    }
    let entries: Vec<(&[f64], Entry)> = centroids
        .iter()
        .zip(counts)
        .map(|(c, &e)| (*c, Entry::Free(e as f64)))
        .collect();
    assemble(inst, &entries, 0.0, pen, big_m)
}

pub fn build_clustered(
    inst: &Instance,
    c: &Clustering,
    pen: &PenaltyConfig,
    big_m: f64,
) -> Result<MiqpProblem> {
    let cs: Vec<&[f64]> = c.centroids.iter().map(Vec::as_slice).collect();
    build_clustered_weighted(inst, &cs, &c.counts, pen, big_m)
}

/// Unlabeled points already assigned to a side.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedSides {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl FixedSides {
    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self, i: usize) -> Option<Side> {
        if self.positive.contains(&i) {
            Some(Side::Positive)
        } else if self.negative.contains(&i) {
            Some(Side::Negative)
        } else {
            None
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        for &i in self.positive.iter().chain(&self.negative) {
            if i >= m {
                return Err(Error::InvalidArgument(format!(
                    "fixed index {i} out of range"
                )));
            }
        }
        if self.positive.iter().any(|i| self.negative.contains(i)) {
            return Err(Error::InvalidArgument(
                "a point is fixed to both sides".into(),
            ));
        }
        Ok(())
    }
}

/// A problem over a subset of unlabeled binaries; `owners[k]` is the
/// unlabeled index behind the `k`-th binary.
#[derive(Clone, Debug, PartialEq)]
pub struct PointProblem {
    pub problem: MiqpProblem,
    pub owners: Vec<usize>,
    pub fixed: FixedSides,
}

fn point_problem(
    inst: &Instance,
    fixed: &FixedSides,
    probe: Option<(usize, Side)>,
    pen: &PenaltyConfig,
    big_m: f64,
) -> Result<PointProblem> {
    fixed.check(inst.m())?;
    let mut entries = Vec::with_capacity(inst.m());
    let mut owners = Vec::new();
    for (i, x) in inst.unlabeled.iter().enumerate() {
        let entry = match (fixed.side(i), probe) {
            (Some(Side::Positive), _) => Entry::FixedPositive,
            (Some(Side::Negative), _) => Entry::FixedNegative,
            (None, Some((s, Side::Positive))) if s == i => Entry::ForcedPositive,
            (None, Some((s, Side::Negative))) if s == i => Entry::ForcedNegative,
            (None, _) => Entry::Free(1.0),
        };
        if !matches!(entry, Entry::FixedPositive | Entry::FixedNegative) {
            owners.push(i);
        }
        entries.push((x.as_slice(), entry));
    }
    let problem = assemble(inst, &entries, fixed.positive.len() as f64, pen, big_m)?;
    Ok(PointProblem {
        problem,
        owners,
        fixed: fixed.clone(),
    })
}

/// Side-fixed problem that additionally forces point `s` onto `side`.
pub fn build_fixing_problem(
    inst: &Instance,
    fixed: &FixedSides,
    s: usize,
    side: Side,
    pen: &PenaltyConfig,
    big_m: f64,
) -> Result<PointProblem> {
    if s >= inst.m() {
        return Err(Error::InvalidArgument(format!(
            "probe index {s} out of range"
        )));
    }
    if fixed.side(s).is_some() {
        return Err(Error::InvalidArgument(format!(
            "point {s} is already fixed"
        )));
    }
    point_problem(inst, fixed, Some((s, side)), pen, big_m)
}

/// Side-fixed problem with binaries only for unfixed points.
pub fn build_reduced_problem(
    inst: &Instance,
    fixed: &FixedSides,
    pen: &PenaltyConfig,
    big_m: f64,
) -> Result<PointProblem> {
    point_problem(inst, fixed, None, pen, big_m)
}

impl PointProblem {
    /// Per-point feasible point from a primal vector of this problem.
    pub fn extract(&self, v: &[f64], inst: &Instance, pen: &PenaltyConfig) -> FeasiblePoint {
        let mut h = hyperplane_of(v, &self.problem.meta);
        h.normalize_offset(inst.radius);
        let mut z = vec![0u8; inst.m()];
        for &i in &self.fixed.positive {
            z[i] = 1;
        }
        for (k, &i) in self.owners.iter().enumerate() {
            z[i] = (v[self.problem.binary_idx[k]] >= 0.5) as u8;
        }
        FeasiblePoint::complete_points(h, z, inst, pen)
    }

    /// Primal vector of this problem for a per-point `point`.
    pub fn embed(&self, point: &FeasiblePoint) -> Vec<f64> {
        let mut v = point.hyperplane.omega.clone();
        v.push(point.hyperplane.b);
        v.extend(&point.xi);
        v.push(point.eta.0);
        v.push(point.eta.1);
        v.extend(self.owners.iter().map(|&i| point.z[i] as f64));
        v
    }
}

/// Per-point completion of a hyperplane: strict sides decide `z`, and
/// boundary points are switched on in index order while the count stays
/// within τ.
pub fn lift_hyperplane(h: &Hyperplane, inst: &Instance, pen: &PenaltyConfig) -> FeasiblePoint {
    let band = h.band();
    let values: Vec<f64> = inst.unlabeled.iter().map(|x| h.value(x)).collect();
    let mut z: Vec<u8> = values.iter().map(|&v| (v > band) as u8).collect();
    let mut count = z.iter().map(|&v| v as usize).sum::<usize>();
    for (zi, &v) in z.iter_mut().zip(&values) {
        if v.abs() <= band && count < inst.tau {
            *zi = 1;
            count += 1;
        }
    }
    FeasiblePoint::complete_points(h.clone(), z, inst, pen)
}

pub fn lift_svm_solution(svm: &SvmSolution, inst: &Instance, pen: &PenaltyConfig) -> FeasiblePoint {
    lift_hyperplane(&svm.hyperplane, inst, pen)
}

/// Copies each group's `z` onto its points. `owner[i]` is the position in
/// `point.z` responsible for unlabeled point `i`.
pub fn lift_grouped(
    point: &FeasiblePoint,
    owner: &[usize],
    inst: &Instance,
    pen: &PenaltyConfig,
) -> Result<FeasiblePoint> {
    if owner.len() != inst.m() {
        return Err(Error::InvalidArgument("owner map length mismatch".into()));
    }
    let h = &point.hyperplane;
    let band = h.band();
    let mut z = Vec::with_capacity(inst.m());
    for (i, (&j, x)) in owner.iter().zip(&inst.unlabeled).enumerate() {
        let zj = *point
            .z
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("owner {j} out of range")))?;
        let v = h.value(x);
        if (zj == 0 && v > band) || (zj == 1 && v < -band) {
            return Err(Error::InvalidData(format!(
                "point {i} lies on the other side of its cluster's indicator"
            )));
        }
        z.push(zj);
    }
    Ok(FeasiblePoint::complete_points(h.clone(), z, inst, pen))
}

/// Lifts a clustered point to one binary per unlabeled point.
pub fn lift_clustered_solution(
    point: &FeasiblePoint,
    c: &Clustering,
    inst: &Instance,
    pen: &PenaltyConfig,
) -> Result<FeasiblePoint> {
    lift_grouped(point, &c.membership, inst, pen)
}

/// Largest violation of the full per-point problem's constraints by `p`.
pub fn full_residual(p: &FeasiblePoint, inst: &Instance, big_m: f64) -> f64 {
    let h = &p.hyperplane;
    let mut r: f64 = 0.0;
    if p.xi.len() != inst.n() || p.z.len() != inst.m() {
        return f64::INFINITY;
    }
    for ((x, &y), &xi) in inst.labeled.iter().zip(&inst.labels).zip(&p.xi) {
        r = r.max(-xi).max(1.0 - xi - y as f64 * h.value(x));
    }
    let mut count = 0.0;
    for (x, &z) in inst.unlabeled.iter().zip(&p.z) {
        if z > 1 {
            return f64::INFINITY;
        }
        let v = h.value(x);
        let z = z as f64;
        count += z;
        r = r.max(v - z * big_m).max(-(1.0 - z) * big_m - v);
    }
    let tau = inst.tau as f64;
    r.max(-p.eta.0)
        .max(-p.eta.1)
        .max(tau - p.eta.0 - count)
        .max(count - tau - p.eta.1)
}
