//! Branch-and-bound over the binary side-indicator variables.
//!
//! Node relaxations are solved by [`crate::qp`]. Selection plunges depth-first
//! until the first incumbent is known and switches to best-bound afterwards;
//! branching picks the most fractional binary. A primal heuristic rounds the
//! relaxation by the side of each indicator's hyperplane value and by a
//! cardinality target, then re-solves with the binaries fixed.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{solve_qp, QpOptions, QpProblem, QpSolution, QpStatus};

/// Index ranges of the variable blocks inside a primal vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub omega: Range<usize>,
    pub b: usize,
    pub xi: Range<usize>,
    /// `(η₁, η₂)`; absent for the plain SVM.
    pub eta: Option<(usize, usize)>,
    pub z: Range<usize>,
}

impl VarLayout {
    /// Layout `[ω (d), b, ξ (n), η₁, η₂, z (k)]`, or `[ω, b, ξ]` when `with_eta` is false.
    pub fn new(d: usize, n: usize, k: usize, with_eta: bool) -> Self {
        let omega = 0..d;
        let b = d;
        let xi = d + 1..d + 1 + n;
        let (eta, z_start) = if with_eta {
            (Some((d + 1 + n, d + 2 + n)), d + 3 + n)
        } else {
            (None, d + 1 + n)
        };
        VarLayout {
            omega,
            b,
            xi,
            eta,
            z: z_start..z_start + k,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.z.end
    }
}

/// Lets the primal heuristic read the hyperplane value behind each binary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingHints {
    /// For each binary (parallel to `binary_idx`), the row `… − M·z ≤ 0` whose
    /// other terms evaluate to `ωᵀx + b`.
    pub activation_rows: Vec<usize>,
    /// Weight of each binary in the cardinality row.
    pub weights: Vec<f64>,
    /// Target for the weighted binary sum.
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiqpProblem {
    pub relaxation: QpProblem,
    pub binary_idx: Vec<usize>,
    pub meta: VarLayout,
    pub big_m: f64,
    pub hints: Option<RoundingHints>,
}

impl MiqpProblem {
    pub fn validate(&self) -> Result<()> {
        self.relaxation.validate()?;
        for &j in &self.binary_idx {
            if j >= self.relaxation.num_vars {
                return Err(Error::InvalidArgument(format!(
                    "binary index {j} out of range"
                )));
            }
            if self.relaxation.var_lower[j] != 0.0 || self.relaxation.var_upper[j] != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "binary variable {j} must have bounds [0, 1]"
                )));
            }
        }
        if let Some(h) = &self.hints {
            if h.activation_rows.len() != self.binary_idx.len()
                || h.weights.len() != self.binary_idx.len()
            {
                return Err(Error::InvalidArgument(
                    "rounding hints must be parallel to binary_idx".into(),
                ));
            }
        }
        Ok(())
    }

    /// Largest distance of a binary entry from {0, 1}.
    pub fn integrality_violation(&self, v: &[f64]) -> f64 {
        self.binary_idx
            .iter()
            .map(|&j| v[j].min(1.0 - v[j]).abs().min((v[j] - v[j].round()).abs()))
            .fold(0.0, f64::max)
    }

    fn with_fixings(&self, fix: &[Option<bool>]) -> QpProblem {
        let mut qp = self.relaxation.clone();
        for (&j, f) in self.binary_idx.iter().zip(fix) {
            if let Some(v) = f {
                let v = if *v { 1.0 } else { 0.0 };
                qp.set_bounds(j, v, v);
            }
        }
        qp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiqpStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
    CutoffInfeasible,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MiqpSolution {
    pub status: MiqpStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub best_bound: f64,
    pub nodes_explored: usize,
    pub wall_time: f64,
    /// Global lower bound after every processed node.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bound_history: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BbOptions {
    /// Seconds; checked between node solves.
    pub time_limit: f64,
    /// Nodes whose bound reaches `cutoff` are pruned and only points strictly
    /// below it are reported.
    pub cutoff: Option<f64>,
    pub warm_start: Option<Vec<f64>>,
    pub mip_gap_tol: f64,
    pub int_tol: f64,
    pub feas_tol: f64,
    /// Run the rounding heuristic every this many nodes (0 disables it after the root).
    pub heuristic_every: usize,
    /// Optional cap on processed nodes; reaching it yields `Feasible` or `TimeLimit`.
    pub node_limit: Option<usize>,
    /// Emit one `log::info!` line per node.
    pub node_log: bool,
    pub qp: QpOptions,
}

impl Default for BbOptions {
    fn default() -> Self {
        BbOptions {
            time_limit: 3600.0,
            cutoff: None,
            warm_start: None,
            mip_gap_tol: 1e-8,
            int_tol: 1e-6,
            feas_tol: 1e-7,
            heuristic_every: 10,
            node_limit: None,
            node_log: false,
            qp: QpOptions::default(),
        }
    }
}

impl BbOptions {
    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = seconds;
        self
    }

    pub fn with_cutoff(mut self, cutoff: Option<f64>) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_warm_start(mut self, warm: Option<Vec<f64>>) -> Self {
        self.warm_start = warm;
        self
    }
}

/// Relative slack applied to cutoff comparisons.
pub const CUTOFF_REL_TOL: f64 = 1e-9;

pub fn cutoff_threshold(cutoff: f64) -> f64 {
    cutoff - CUTOFF_REL_TOL * cutoff.abs().max(1.0)
}

struct Node {
    fix: Vec<Option<bool>>,
    bound: f64,
    depth: usize,
}

struct Search<'a> {
    p: &'a MiqpProblem,
    opts: &'a BbOptions,
    incumbent: Option<(Vec<f64>, f64)>,
    cutoff_level: f64,
    tried: std::collections::HashSet<Vec<bool>>,
}

impl Search<'_> {
    fn prune_level(&self) -> f64 {
        let inc = match &self.incumbent {
            Some((_, f)) => f - self.opts.mip_gap_tol * f.abs().max(1.0),
            None => f64::INFINITY,
        };
        inc.min(self.cutoff_level)
    }

    fn offer(&mut self, v: Vec<f64>, f: f64) -> bool {
        let better = match &self.incumbent {
            Some((_, g)) => f < *g,
            None => true,
        };
        if better && f < self.cutoff_level {
            log::debug!("new incumbent {f:.10}");
            self.incumbent = Some((v, f));
            true
        } else {
            false
        }
    }

    /// Fixes every binary to `assign`, solves, and offers the result.
    fn try_assignment(&mut self, assign: Vec<bool>) -> Result<()> {
        if !self.tried.insert(assign.clone()) {
            return Ok(());
        }
        let fix: Vec<Option<bool>> = assign.into_iter().map(Some).collect();
        let sol = solve_qp(&self.p.with_fixings(&fix), None, &self.opts.qp)?;
        if sol.status == QpStatus::Optimal && sol.primal_residual <= self.opts.feas_tol {
            self.offer(sol.primal, sol.objective);
        }
        Ok(())
    }

    fn heuristic(&mut self, relax: &[f64], fix: &[Option<bool>]) -> Result<()> {
        let p = self.p;
        let Some(h) = &p.hints else {
            let assign = p
                .binary_idx
                .iter()
                .zip(fix)
                .map(|(&j, f)| f.unwrap_or(relax[j] >= 0.5))
                .collect();
            return self.try_assignment(assign);
        };
        // hyperplane value behind each binary
        let act: Vec<f64> = h
            .activation_rows
            .iter()
            .zip(&p.binary_idx)
            .map(|(&r, &j)| {
                let row = &p.relaxation.constraints[r];
                row.coeffs
                    .iter()
                    .filter(|(i, _)| *i != j)
                    .map(|&(i, a)| a * relax[i])
                    .sum::<f64>()
            })
            .collect();
        let by_sign: Vec<bool> = act
            .iter()
            .zip(fix)
            .map(|(&a, f)| f.unwrap_or(a >= 0.0))
            .collect();
        self.try_assignment(by_sign)?;

        // threshold rounding towards the cardinality target
        let mut order: Vec<usize> = (0..act.len()).filter(|&i| fix[i].is_none()).collect();
        order.sort_by(|&a, &b| act[b].total_cmp(&act[a]));
        let mut count: f64 = fix
            .iter()
            .zip(&h.weights)
            .filter(|(f, _)| **f == Some(true))
            .map(|(_, w)| w)
            .sum();
        let mut assign: Vec<bool> = fix.iter().map(|f| f.unwrap_or(false)).collect();
        for i in order {
            let w = h.weights[i];
            if (count + w - h.target).abs() < (count - h.target).abs() {
                assign[i] = true;
                count += w;
            } else {
                break;
            }
        }
        self.try_assignment(assign)
    }
}

/// Branch-and-bound solve of `p`.
pub fn solve_miqp(p: &MiqpProblem, opts: &BbOptions) -> Result<MiqpSolution> {
    p.validate()?;
    if opts.time_limit <= 0.0 {
        return Err(Error::InvalidArgument("time_limit must be positive".into()));
    }
    let start = Instant::now();
    let mut search = Search {
        p,
        opts,
        incumbent: None,
        cutoff_level: opts.cutoff.map_or(f64::INFINITY, cutoff_threshold),
        tried: Default::default(),
    };

    if let Some(w) = &opts.warm_start {
        if w.len() != p.relaxation.num_vars {
            return Err(Error::InvalidWarmStart(format!(
                "expected {} entries, got {}",
                p.relaxation.num_vars,
                w.len()
            )));
        }
        let viol = p.relaxation.max_violation(w);
        if viol > opts.feas_tol {
            return Err(Error::InvalidWarmStart(format!(
                "constraint violation {viol:.3e}"
            )));
        }
        let frac = p.integrality_violation(w);
        if frac > opts.int_tol {
            return Err(Error::InvalidWarmStart(format!(
                "integrality violation {frac:.3e}"
            )));
        }
        // the warm start is kept even when it does not beat the cutoff
        search.incumbent = Some((w.clone(), p.relaxation.objective(w)));
    }

    let k = p.binary_idx.len();
    let mut open = vec![Node {
        fix: vec![None; k],
        bound: f64::NEG_INFINITY,
        depth: 0,
    }];
    let mut nodes = 0usize;
    let mut history = Vec::new();
    let mut last_lb = f64::NEG_INFINITY;
    let mut timed_out = false;
    let mut node_capped = false;
    let mut root_failed = false;

    while !open.is_empty() {
        if start.elapsed().as_secs_f64() >= opts.time_limit {
            timed_out = true;
            break;
        }
        if opts.node_limit.is_some_and(|cap| nodes >= cap) {
            node_capped = true;
            break;
        }
        let pick = if search.incumbent.is_none() {
            open.len() - 1
        } else {
            let mut best = 0;
            for (i, n) in open.iter().enumerate() {
                if n.bound < open[best].bound
                    || (n.bound == open[best].bound && n.depth > open[best].depth)
                {
                    best = i;
                }
            }
            best
        };
        let node = open.swap_remove(pick);
        if node.bound >= search.prune_level() {
            continue;
        }
        let qp = p.with_fixings(&node.fix);
        let sol: QpSolution = solve_qp(&qp, None, &opts.qp)?;
        nodes += 1;

        let fully_fixed = node.fix.iter().all(Option::is_some);
        match sol.status {
            QpStatus::Infeasible => {}
            QpStatus::Unbounded => {
                return Err(Error::Solver("unbounded node relaxation".into()));
            }
            QpStatus::IterationLimit => {
                log::warn!("node {nodes}: relaxation did not converge, branching blindly");
                if nodes == 1 {
                    root_failed = true;
                }
                if !fully_fixed {
                    branch(&mut open, &node, &node.fix, None, p, &sol.primal);
                }
            }
            QpStatus::Optimal => {
                let bound = node.bound.max(sol.objective);
                if opts.node_log {
                    log::info!(
                        "node {nodes} depth {} bound {bound:.10} incumbent {}",
                        node.depth,
                        search
                            .incumbent
                            .as_ref()
                            .map_or("-".to_string(), |(_, f)| format!("{f:.10}"))
                    );
                }
                if bound < search.prune_level() {
                    let frac = p.integrality_violation(&sol.primal);
                    if frac <= opts.int_tol {
                        if fully_fixed {
                            if sol.primal_residual <= opts.feas_tol {
                                search.offer(sol.primal.clone(), sol.objective);
                            }
                        } else {
                            let assign =
                                p.binary_idx.iter().map(|&j| sol.primal[j] >= 0.5).collect();
                            search.try_assignment(assign)?;
                        }
                    } else {
                        if nodes == 1
                            || (opts.heuristic_every > 0 && nodes.is_multiple_of(opts.heuristic_every))
                        {
                            search.heuristic(&sol.primal, &node.fix)?;
                        }
                        if bound < search.prune_level() {
                            branch(&mut open, &node, &node.fix, Some(bound), p, &sol.primal);
                        }
                    }
                }
            }
        }

        let mut lb = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        if let Some((_, f)) = &search.incumbent {
            lb = lb.min(*f);
        }
        if lb.is_finite() {
            lb = lb.max(last_lb);
            last_lb = lb;
            history.push(lb);
        }
    }

    let wall_time = start.elapsed().as_secs_f64();
    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let (incumbent, objective) = match search.incumbent {
        Some((v, f)) => (Some(v), Some(f)),
        None => (None, None),
    };
    let status = if timed_out {
        MiqpStatus::TimeLimit
    } else if node_capped {
        if incumbent.is_some() {
            MiqpStatus::Feasible
        } else {
            MiqpStatus::TimeLimit
        }
    } else if root_failed && incumbent.is_none() {
        return Err(Error::Solver("root relaxation failed".into()));
    } else if incumbent.is_some() {
        MiqpStatus::Optimal
    } else if opts.cutoff.is_some() {
        MiqpStatus::CutoffInfeasible
    } else {
        MiqpStatus::Infeasible
    };
    let best_bound = match status {
        MiqpStatus::Optimal => objective.unwrap_or(f64::INFINITY),
        MiqpStatus::CutoffInfeasible => opts.cutoff.unwrap_or(f64::INFINITY),
        MiqpStatus::Infeasible => f64::INFINITY,
        _ => {
            let lb = open_bound.max(last_lb);
            objective.map_or(lb, |f| lb.min(f))
        }
    };
    Ok(MiqpSolution {
        status,
        incumbent,
        objective,
        best_bound,
        nodes_explored: nodes,
        wall_time,
        bound_history: history,
    })
}

fn branch(
    open: &mut Vec<Node>,
    node: &Node,
    fix: &[Option<bool>],
    bound: Option<f64>,
    p: &MiqpProblem,
    primal: &[f64],
) {
    // most fractional free binary
    let mut best: Option<(usize, f64)> = None;
    for (i, (&j, f)) in p.binary_idx.iter().zip(fix).enumerate() {
        if f.is_some() {
            continue;
        }
        let dist = (primal[j] - 0.5).abs();
        if best.is_none_or(|(_, d)| dist < d) {
            best = Some((i, dist));
        }
    }
    let Some((i, _)) = best else { return };
    let up_first = primal[p.binary_idx[i]] >= 0.5;
    let bound = bound.unwrap_or(node.bound);
    // the child pushed last is explored first while plunging
    for value in [!up_first, up_first] {
        let mut child = fix.to_vec();
        child[i] = Some(value);
        open.push(Node {
            fix: child,
            bound,
            depth: node.depth + 1,
        });
    }
}

/// Enumerates every binary assignment; a test oracle for small instances.
pub fn brute_force_miqp(p: &MiqpProblem) -> Result<MiqpSolution> {
    brute_force_with(p, |qp| solve_qp(qp, None, &QpOptions::default()))
}

/// Like [`brute_force_miqp`] with a caller-supplied QP routine per assignment.
pub fn brute_force_with<F>(p: &MiqpProblem, mut solve: F) -> Result<MiqpSolution>
where
    F: FnMut(&QpProblem) -> Result<QpSolution>,
{
    p.validate()?;
    let k = p.binary_idx.len();
    if k > 20 {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to 20 binaries, got {k}"
        )));
    }
    let start = Instant::now();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u64..(1u64 << k) {
        let fix: Vec<Option<bool>> = (0..k).map(|i| Some(mask >> i & 1 == 1)).collect();
        let sol = solve(&p.with_fixings(&fix))?;
        match sol.status {
            QpStatus::Optimal => {
                if best.as_ref().is_none_or(|(_, f)| sol.objective < *f) {
                    best = Some((sol.primal, sol.objective));
                }
            }
            QpStatus::Infeasible => {}
            QpStatus::Unbounded => return Err(Error::Solver("unbounded assignment".into())),
            QpStatus::IterationLimit => {
                return Err(Error::Solver(format!(
                    "assignment {mask:b} did not converge"
                )))
            }
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    Ok(match best {
        Some((v, f)) => MiqpSolution {
            status: MiqpStatus::Optimal,
            incumbent: Some(v),
            objective: Some(f),
            best_bound: f,
            nodes_explored: 1 << k,
            wall_time,
            bound_history: Vec::new(),
        },
        None => MiqpSolution {
            status: MiqpStatus::Infeasible,
            incumbent: None,
            objective: None,
            best_bound: f64::INFINITY,
            nodes_explored: 1 << k,
            wall_time,
            bound_history: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min ½w² + Σξ with labeled rows only and one knapsack-like binary block:
    /// two binaries with cost, at most one can be 1.
    fn toy() -> MiqpProblem {
        // vars: x0 continuous in [0, 2], z1, z2 binaries
        let mut qp = QpProblem::new(3);
        qp.quadratic_diag[0] = 1.0;
        qp.linear_cost = vec![-2.0, -1.0, -1.5];
        qp.set_bounds(0, 0.0, 2.0);
        qp.set_bounds(1, 0.0, 1.0);
        qp.set_bounds(2, 0.0, 1.0);
        qp.add_row(vec![(1, 1.0), (2, 1.0)], f64::NEG_INFINITY, 1.0);
        // x0 ≤ 1 + z1
        qp.add_row(vec![(0, 1.0), (1, -1.0)], f64::NEG_INFINITY, 1.0);
        MiqpProblem {
            relaxation: qp,
            binary_idx: vec![1, 2],
            meta: VarLayout::new(1, 0, 2, false),
            big_m: 1.0,
            hints: None,
        }
    }

    // assignments: (0,0): x=1 → -1.5 ; (1,0): x=2 → 2-4-1 = -3 ; (0,1): x=1 → -1.5-1.5 = -3
    #[test]
    fn brute_force_enumerates_all() {
        let s = brute_force_miqp(&toy()).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        assert!((s.objective.unwrap() + 3.0).abs() < 1e-7);
        assert_eq!(s.nodes_explored, 4);
    }

    #[test]
    fn bb_matches_brute_force_on_toy() {
        let s = solve_miqp(&toy(), &BbOptions::default()).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        assert!((s.objective.unwrap() + 3.0).abs() < 1e-7);
        assert!(s.best_bound <= s.objective.unwrap());
    }

    #[test]
    fn cutoff_below_optimum_is_certified() {
        let opts = BbOptions::default().with_cutoff(Some(-3.5));
        let s = solve_miqp(&toy(), &opts).unwrap();
        assert_eq!(s.status, MiqpStatus::CutoffInfeasible);
        assert!(s.incumbent.is_none());
    }

    #[test]
    fn no_binaries_is_a_single_qp() {
        let mut p = toy();
        p.binary_idx.clear();
        p.relaxation.set_bounds(1, 0.0, 0.0);
        p.relaxation.set_bounds(2, 0.0, 0.0);
        let s = solve_miqp(&p, &BbOptions::default()).unwrap();
        let b = brute_force_miqp(&p).unwrap();
        assert_eq!(b.nodes_explored, 1);
        assert!((s.objective.unwrap() - b.objective.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn infeasible_without_cutoff() {
        let mut p = toy();
        p.relaxation
            .add_row(vec![(1, 1.0), (2, 1.0)], 1.5, f64::INFINITY);
        let s = solve_miqp(&p, &BbOptions::default()).unwrap();
        assert_eq!(s.status, MiqpStatus::Infeasible);
        assert_eq!(brute_force_miqp(&p).unwrap().status, MiqpStatus::Infeasible);
    }

    #[test]
    fn violating_warm_start_is_an_error() {
        let opts = BbOptions::default().with_warm_start(Some(vec![0.0, 1.0, 1.0]));
        assert!(matches!(
            solve_miqp(&toy(), &opts),
            Err(Error::InvalidWarmStart(_))
        ));
        let frac = BbOptions::default().with_warm_start(Some(vec![0.0, 0.5, 0.0]));
        assert!(solve_miqp(&toy(), &frac).is_err());
    }

    #[test]
    fn valid_warm_start_never_hurts() {
        let opts = BbOptions::default().with_warm_start(Some(vec![1.0, 0.0, 0.0]));
        let s = solve_miqp(&toy(), &opts).unwrap();
        assert!((s.objective.unwrap() + 3.0).abs() < 1e-7);
    }

    #[test]
    fn too_many_binaries_for_brute_force() {
        let mut qp = QpProblem::new(21);
        for j in 0..21 {
            qp.set_bounds(j, 0.0, 1.0);
        }
        let p = MiqpProblem {
            relaxation: qp,
            binary_idx: (0..21).collect(),
            meta: VarLayout::new(0, 0, 21, false),
            big_m: 1.0,
            hints: None,
        };
        assert!(brute_force_miqp(&p).is_err());
    }

    #[test]
    fn binaries_need_unit_bounds() {
        let mut p = toy();
        p.relaxation.set_bounds(1, 0.0, 2.0);
        assert!(solve_miqp(&p, &BbOptions::default()).is_err());
    }

    #[test]
    fn layout_blocks_are_contiguous() {
        let l = VarLayout::new(2, 3, 4, true);
        assert_eq!(l.omega, 0..2);
        assert_eq!(l.b, 2);
        assert_eq!(l.xi, 3..6);
        assert_eq!(l.eta, Some((6, 7)));
        assert_eq!(l.z, 8..12);
        assert_eq!(l.num_vars(), 12);
        assert_eq!(VarLayout::new(2, 3, 0, false).num_vars(), 6);
    }
}
