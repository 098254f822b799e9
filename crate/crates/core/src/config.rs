//! Run configuration, read from TOML. Unset schedule fields fall back to the
//! size-dependent defaults of [`crate::rcm::default_k1`] and
//! [`crate::wircm::default_b_max`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SampleKind;
use crate::error::{Error, Result};
use crate::eval::Method;
use crate::models::PenaltyConfig;
use crate::rcm::{default_k1, RcmConfig};
use crate::wircm::{default_b_max, WircmConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<PathBuf>,
    pub methods: Vec<Method>,
    pub samples: usize,
    pub sampling: SampleKind,
    pub labeled_fraction: f64,
    pub p_pos: f64,
    pub seed: u64,
    /// Seconds per solve.
    pub time_limit: f64,
    pub label_column: String,
    pub rescale: bool,
    pub jobs: usize,
    /// Reject out-of-range hyperparameters instead of warning.
    pub strict: bool,
    pub penalties: PenaltyConfig,
    pub rcm: RcmSection,
    pub wircm: WircmSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcmSection {
    pub k1: Option<usize>,
    pub k_plus: usize,
    pub delta_hat_1: f64,
    pub delta_tilde: f64,
    pub kmeans_max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WircmSection {
    pub b_max: Option<usize>,
    pub gamma: f64,
    pub t_max: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datasets: Vec::new(),
            methods: vec![Method::Svm, Method::Cs3vm, Method::Ircm, Method::Wircm],
            samples: 5,
            sampling: SampleKind::Biased,
            labeled_fraction: 0.1,
            p_pos: 0.85,
            seed: 0,
            time_limit: 3600.0,
            label_column: "target".into(),
            rescale: true,
            jobs: 1,
            strict: false,
            penalties: PenaltyConfig::default(),
            rcm: RcmSection::default(),
            wircm: WircmSection::default(),
        }
    }
}

impl Default for RcmSection {
    fn default() -> Self {
        RcmSection {
            k1: None,
            k_plus: 50,
            delta_hat_1: 0.8,
            delta_tilde: 0.1,
            kmeans_max_iter: 100,
        }
    }
}

impl Default for WircmSection {
    fn default() -> Self {
        WircmSection {
            b_max: None,
            gamma: 1.2,
            t_max: 40.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Hard constraints; values that merely look implausible are reported by
    /// [`RunConfig::range_warnings`].
    pub fn validate(&self) -> Result<()> {
        self.penalties.validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction < 1.0) {
            return bad("labeled_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.p_pos) {
            return bad("p_pos must lie in [0, 1]");
        }
        if !(self.time_limit > 0.0) {
            return bad("time_limit must be positive");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if self.jobs == 0 {
            return bad("jobs must be positive");
        }
        if !(self.rcm.delta_hat_1 > 0.0 && self.rcm.delta_hat_1 <= 1.0) {
            return bad("rcm.delta_hat_1 must lie in (0, 1]");
        }
        if !(self.rcm.delta_tilde > 0.0 && self.rcm.delta_tilde < 1.0) {
            return bad("rcm.delta_tilde must lie in (0, 1)");
        }
        if !(self.wircm.gamma >= 1.0) || !(self.wircm.t_max > 0.0) {
            return bad("wircm.gamma must be at least 1 and wircm.t_max positive");
        }
        Ok(())
    }

    /// Values outside the plausible hyperparameter ranges for `m` unlabeled points.
    pub fn range_warnings(&self, m: usize) -> Vec<String> {
        let mut w = Vec::new();
        let (c1, c2) = (self.penalties.c1, self.penalties.c2);
        if c2 < 0.5 * c1 || c2 > 2.0 * c1 {
            w.push(format!("C2 = {c2} outside [0.5·C1, 2·C1]"));
        }
        let k1 = self.k1(m);
        if m >= 2 && (k1 < 2 || k1 > m) {
            w.push(format!("k1 = {k1} outside [2, {m}]"));
        }
        if self.rcm.k_plus < k1 || self.rcm.k_plus > m.max(k1) {
            w.push(format!("k_plus = {} outside [{k1}, {m}]", self.rcm.k_plus));
        }
        let dh = self.rcm.delta_hat_1;
        if !(0.5..=0.9).contains(&dh) {
            w.push(format!("delta_hat_1 = {dh} outside [0.5, 0.9]"));
        }
        let dt = self.rcm.delta_tilde;
        if dt < 0.1 || dt > 1.0 - dh + 1e-12 {
            w.push(format!("delta_tilde = {dt} outside [0.1, {}]", 1.0 - dh));
        }
        let b = self.b_max(m);
        if m >= 1 && (b < 1 || b > m) {
            w.push(format!("b_max = {b} outside [1, {m}]"));
        }
        let g = self.wircm.gamma;
        if b > 0 && (g < 1.1 || g > m as f64 / b as f64) {
            w.push(format!(
                "gamma = {g} outside [1.1, {}]",
                m as f64 / b as f64
            ));
        }
        let t = self.wircm.t_max;
        if !(10.0..=100.0).contains(&t) {
            w.push(format!("t_max = {t} outside [10, 100]"));
        }
        w
    }

    /// Fails in strict mode, logs otherwise.
    pub fn check_ranges(&self, m: usize) -> Result<()> {
        let w = self.range_warnings(m);
        if self.strict && !w.is_empty() {
            return Err(Error::Config(w.join("; ")));
        }
        for msg in w {
            log::warn!("{msg}");
        }
        Ok(())
    }

    pub fn k1(&self, m: usize) -> usize {
        self.rcm.k1.unwrap_or_else(|| default_k1(m)).min(m.max(1))
    }

    pub fn b_max(&self, m: usize) -> usize {
        self.wircm.b_max.unwrap_or_else(|| default_b_max(m)).min(m)
    }

    pub fn rcm_config(&self, m: usize, seed: u64) -> RcmConfig {
        RcmConfig {
            k1: self.k1(m),
            k_plus: self.rcm.k_plus,
            delta_hat_1: self.rcm.delta_hat_1,
            delta_tilde: self.rcm.delta_tilde,
            penalties: self.penalties,
            time_limit: self.time_limit,
            seed,
            kmeans_max_iter: self.rcm.kmeans_max_iter,
        }
    }

    pub fn wircm_config(&self, m: usize, seed: u64) -> WircmConfig {
        WircmConfig {
            rcm: self.rcm_config(m, seed),
            b_max: self.b_max(m),
            gamma: self.wircm.gamma,
            t_max: self.wircm.t_max,
            total_time_limit: self.time_limit,
        }
    }
}
