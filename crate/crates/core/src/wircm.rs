//! Warm-started solve on top of the improved re-clustering point.
//!
//! Points far from the incumbent hyperplane are probed one at a time: the
//! problem is re-solved with the point forced to the other side and the
//! incumbent objective as cutoff. A certified cutoff fixes the point to its
//! current side; a cheaper point replaces the incumbent. The remaining
//! problem, with every fixed point's binary removed, is solved last.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bb::{solve_miqp, BbOptions, MiqpSolution, MiqpStatus};
use crate::error::{Error, Result};
use crate::models::{
    big_m_update, build_fixing_problem, build_reduced_problem, FeasiblePoint, FixedSides, Instance,
    Side,
};
use crate::rcm::{ircm, RcmConfig, RcmResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WircmConfig {
    pub rcm: RcmConfig,
    /// Largest number of points that may be fixed.
    pub b_max: usize,
    pub gamma: f64,
    /// Seconds per probe.
    pub t_max: f64,
    pub total_time_limit: f64,
}

/// `⌊x + ½⌋` for nonnegative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Fixing budget by number of unlabeled points.
pub fn default_b_max(m: usize) -> usize {
    let frac = match m {
        0..=100 => 0.2,
        101..=500 => 0.25,
        501..=1000 => 0.35,
        _ => 0.45,
    };
    round_half_up(frac * m as f64)
}

impl WircmConfig {
    pub fn for_size(m: usize) -> Self {
        WircmConfig {
            rcm: RcmConfig::for_size(m),
            b_max: default_b_max(m),
            gamma: 1.2,
            t_max: 40.0,
            total_time_limit: 3600.0,
        }
    }

    /// Number of points considered for probing.
    pub fn beta(&self, m: usize) -> usize {
        round_half_up(self.gamma * self.b_max as f64).min(m)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        self.rcm.validate(m)?;
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma = {} must be ≥ 1",
                self.gamma
            )));
        }
        if !(self.t_max > 0.0) || !(self.total_time_limit > 0.0) {
            return Err(Error::InvalidArgument(
                "time limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    ImprovedIncumbent,
    Fixed,
    TimedOut,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub index: usize,
    /// Side the point was forced to; absent when skipped on the boundary.
    pub tested_side: Option<Side>,
    pub outcome: ProbeOutcome,
    /// Incumbent objective after the probe.
    pub f_bar: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FixLedger {
    pub fixed: FixedSides,
    pub probes: Vec<Probe>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WircmResult {
    pub status: MiqpStatus,
    /// Best per-point solution found.
    pub point: FeasiblePoint,
    /// Solve of the reduced problem, absent when time ran out before it.
    pub reduced: Option<MiqpSolution>,
    pub ledger: FixLedger,
    pub ircm: RcmResult,
    pub big_m: f64,
    /// Lower bound on the optimum; `point.objective` when solved to optimality.
    pub best_bound: f64,
}

/// Result of a single probe.
pub struct ProbeResult {
    pub outcome: ProbeOutcome,
    pub improved: Option<FeasiblePoint>,
}

/// Forces point `s` to the side opposite to `current` and looks for a point
/// cheaper than `f_bar`.
#[allow(clippy::too_many_arguments)]
pub fn probe_point(
    inst: &Instance,
    ledger: &FixLedger,
    s: usize,
    current: Side,
    f_bar: f64,
    big_m: f64,
    t_max: f64,
    cfg: &RcmConfig,
) -> Result<ProbeResult> {
    let pen = &cfg.penalties;
    let p = build_fixing_problem(inst, &ledger.fixed, s, current.opposite(), pen, big_m)?;
    let opts = BbOptions::default()
        .with_time_limit(t_max)
        .with_cutoff(Some(f_bar));
    let sol = solve_miqp(&p.problem, &opts)?;
    if let Some(v) = &sol.incumbent {
        let point = p.extract(v, inst, pen);
        if point.objective < f_bar {
            return Ok(ProbeResult {
                outcome: ProbeOutcome::ImprovedIncumbent,
                improved: Some(point),
            });
        }
    }
    let outcome = match sol.status {
        MiqpStatus::CutoffInfeasible | MiqpStatus::Infeasible => ProbeOutcome::Fixed,
        _ => ProbeOutcome::TimedOut,
    };
    Ok(ProbeResult {
        outcome,
        improved: None,
    })
}

pub fn wircm(inst: &Instance, cfg: &WircmConfig) -> Result<WircmResult> {
    cfg.validate(inst.m())?;
    let start = Instant::now();
    let pen = &cfg.rcm.penalties;
    let mut rcfg = cfg.rcm.clone();
    rcfg.time_limit = rcfg.time_limit.min(cfg.total_time_limit);
    let base = ircm(inst, &rcfg)?;
    let mut incumbent = base.lifted.clone();
    let mut f_bar = incumbent.objective;
    let big_m = if base.hit_time_limit {
        big_m_update(f_bar, inst.radius)
    } else {
        base.final_m.max(big_m_update(f_bar, inst.radius))
    };
    let mut ledger = FixLedger::default();
    let left = |start: &Instant| cfg.total_time_limit - start.elapsed().as_secs_f64();

    let h0 = incumbent.hyperplane.clone();
    let mut order: Vec<usize> = (0..inst.m()).collect();
    order.sort_by(|&a, &b| {
        h0.value(&inst.unlabeled[b])
            .abs()
            .total_cmp(&h0.value(&inst.unlabeled[a]).abs())
    });
    let beta = cfg.beta(inst.m());
    let mut out_of_time = false;

    for &s in order.iter().take(beta) {
        if ledger.fixed.len() >= cfg.b_max {
            break;
        }
        let remaining = left(&start);
        if remaining <= 0.0 {
            out_of_time = true;
            break;
        }
        let h = &incumbent.hyperplane;
        let v = h.value(&inst.unlabeled[s]);
        if v.abs() <= h.band() {
            ledger.probes.push(Probe {
                index: s,
                tested_side: None,
                outcome: ProbeOutcome::Skipped,
                f_bar,
            });
            continue;
        }
        let current = if v > 0.0 {
            Side::Positive
        } else {
            Side::Negative
        };
        let r = probe_point(
            inst,
            &ledger,
            s,
            current,
            f_bar,
            big_m,
            cfg.t_max.min(remaining),
            &cfg.rcm,
        )?;
        match r.outcome {
            ProbeOutcome::ImprovedIncumbent => {
                incumbent = r.improved.expect("improved point");
                f_bar = incumbent.objective;
            }
            ProbeOutcome::Fixed => match current {
                Side::Positive => ledger.fixed.positive.push(s),
                Side::Negative => ledger.fixed.negative.push(s),
            },
            _ => {}
        }
        ledger.probes.push(Probe {
            index: s,
            tested_side: Some(current.opposite()),
            outcome: r.outcome,
            f_bar,
        });
    }

    let remaining = left(&start);
    if out_of_time || remaining <= 0.0 {
        return Ok(WircmResult {
            status: MiqpStatus::TimeLimit,
            best_bound: f64::NEG_INFINITY,
            point: incumbent,
            reduced: None,
            ledger,
            ircm: base,
            big_m,
        });
    }

    let reduced_p = build_reduced_problem(inst, &ledger.fixed, pen, big_m)?;
    let warm = reduced_p.embed(&incumbent);
    let warm = if reduced_p.problem.relaxation.max_violation(&warm) <= 1e-7 {
        Some(warm)
    } else {
        log::warn!("incumbent does not fit the reduced problem, solving cold");
        None
    };
    let opts = BbOptions::default()
        .with_time_limit(remaining)
        .with_cutoff(Some(f_bar))
        .with_warm_start(warm);
    let sol = solve_miqp(&reduced_p.problem, &opts)?;
    if let Some(v) = &sol.incumbent {
        let cand = reduced_p.extract(v, inst, pen);
        if cand.objective < incumbent.objective {
            incumbent = cand;
        }
    }
    let (status, best_bound) = match sol.status {
        MiqpStatus::Optimal | MiqpStatus::CutoffInfeasible => {
            (MiqpStatus::Optimal, incumbent.objective)
        }
        MiqpStatus::Infeasible => {
            return Err(Error::Solver("reduced problem is infeasible".into()));
        }
        other => (other, sol.best_bound.min(incumbent.objective)),
    };
    Ok(WircmResult {
        status,
        point: incumbent,
        reduced: Some(sol),
        ledger,
        ircm: base,
        big_m,
        best_bound,
    })
}
