//! Raw CSV ingestion, cleaning, coordinate rescaling and labeled-subset sampling.
//!
//! All randomness goes through [`rng`], a `ChaCha8Rng` seeded from a `u64`,
//! so every sample is reproducible from its seed.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates are kept inside `[-BOX, BOX]` after [`rescale`].
pub const BOX: f64 = 100.0;

/// The generator used by every stochastic routine in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    /// Missing cells are stored as NaN.
    pub features: Vec<f64>,
    pub label: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub rows: Vec<RawRow>,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    /// Entries are -1 or +1.
    pub labels: Vec<i8>,
    pub name: String,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<i8>, name: impl Into<String>) -> Result<Self> {
        let ds = Dataset {
            points,
            labels,
            name: name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(Error::InvalidData(format!(
                "{} points but {} labels",
                self.points.len(),
                self.labels.len()
            )));
        }
        let d = self.dim();
        for (i, (x, &y)) in self.points.iter().zip(&self.labels).enumerate() {
            if x.len() != d {
                return Err(Error::InvalidData(format!(
                    "point {i} has dimension {}, expected {d}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("point {i}")));
            }
            if y != 1 && y != -1 {
                return Err(Error::InvalidData(format!(
                    "label {y} of point {i} is not ±1"
                )));
            }
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Biased,
    Srs,
}

impl std::str::FromStr for SampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(SampleKind::Biased),
            "srs" => Ok(SampleKind::Srs),
            other => Err(Error::InvalidArgument(format!(
                "unknown sample kind `{other}`"
            ))),
        }
    }
}

/// A labeled/unlabeled split of a [`Dataset`]. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
    /// Labels of `labeled_idx`, in the same order.
    pub labels: Vec<i8>,
    pub tau: usize,
    pub seed: u64,
    pub kind: SampleKind,
}

impl Sample {
    /// Builds a sample from a labeled index set, deriving labels and τ from `ds`.
    pub fn from_labeled(
        ds: &Dataset,
        mut labeled: Vec<usize>,
        seed: u64,
        kind: SampleKind,
    ) -> Result<Self> {
        labeled.sort_unstable();
        labeled.dedup();
        if labeled.last().is_some_and(|&i| i >= ds.len()) {
            return Err(Error::InvalidArgument("labeled index out of range".into()));
        }
        let set: HashSet<usize> = labeled.iter().copied().collect();
        let unlabeled: Vec<usize> = (0..ds.len()).filter(|i| !set.contains(i)).collect();
        let labels = labeled.iter().map(|&i| ds.labels[i]).collect();
        let tau = unlabeled.iter().filter(|&&i| ds.labels[i] == 1).count();
        Ok(Sample {
            labeled_idx: labeled,
            unlabeled_idx: unlabeled,
            labels,
            tau,
            seed,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.labeled_idx.len()
    }

    pub fn m(&self) -> usize {
        self.unlabeled_idx.len()
    }

    /// Checks the partition, label and τ invariants against `ds`.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let mut seen = vec![false; ds.len()];
        for &i in self.labeled_idx.iter().chain(&self.unlabeled_idx) {
            if i >= ds.len() || seen[i] {
                return Err(Error::InvalidData(format!(
                    "index {i} is out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidData(
                "sample does not cover the dataset".into(),
            ));
        }
        if self.labels.len() != self.labeled_idx.len()
            || self
                .labeled_idx
                .iter()
                .zip(&self.labels)
                .any(|(&i, &y)| ds.labels[i] != y)
        {
            return Err(Error::InvalidData(
                "sample labels disagree with dataset".into(),
            ));
        }
        let tau = self
            .unlabeled_idx
            .iter()
            .filter(|&&i| ds.labels[i] == 1)
            .count();
        if tau != self.tau {
            return Err(Error::InvalidData(format!(
                "tau is {} but the unlabeled set holds {tau} positives",
                self.tau
            )));
        }
        Ok(())
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") {
        None
    } else {
        t.parse().ok()
    }
}

/// Reads a headed CSV file. Every column except `label_column` is a feature.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, label_column, name)
}

/// [`load_csv`] over any reader.
pub fn read_csv(
    reader: impl std::io::Read,
    label_column: &str,
    name: String,
) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_pos = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::InvalidData(format!("label column `{label_column}` not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_pos)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} cells, found {}", headers.len(), rec.len()),
            });
        }
        let mut features = Vec::with_capacity(feature_names.len());
        let mut label = None;
        for (j, cell) in rec.iter().enumerate() {
            let missing = {
                let t = cell.trim();
                t.is_empty() || t.eq_ignore_ascii_case("na")
            };
            let value = parse_cell(cell);
            if !missing && !value.is_some_and(f64::is_finite) {
                return Err(Error::Parse {
                    row,
                    column: headers[j].to_string(),
                    message: format!("`{cell}` is not a finite number"),
                });
            }
            if j == label_pos {
                match value {
                    Some(v) if v.fract() == 0.0 => label = Some(v as i64),
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: headers[j].to_string(),
                            message: format!("`{cell}` is not an integer class label"),
                        })
                    }
                }
            } else {
                features.push(value.unwrap_or(f64::NAN));
            }
        }
        rows.push(RawRow {
            features,
            label: label.expect("label cell visited"),
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no rows".into()));
    }
    Ok(RawDataset {
        feature_dim: feature_names.len(),
        rows,
        feature_names,
        name,
    })
}

/// The raw class value mapped to +1: `1` when present, otherwise the largest value.
pub fn positive_class(labels: &[i64]) -> Option<i64> {
    if labels.contains(&1) {
        Some(1)
    } else {
        labels.iter().copied().max()
    }
}

/// Drops incomplete rows, maps classes to ±1 and removes exact duplicates.
pub fn preprocess(raw: &RawDataset) -> Result<Dataset> {
    if raw.rows.is_empty() {
        return Err(Error::InvalidData("no rows".into()));
    }
    let complete: Vec<&RawRow> = raw
        .rows
        .iter()
        .filter(|r| r.features.len() == raw.feature_dim && r.features.iter().all(|v| v.is_finite()))
        .collect();
    if complete.is_empty() {
        return Err(Error::InvalidData("every row has missing values".into()));
    }
    let mut classes: Vec<i64> = complete.iter().map(|r| r.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() > 3 {
        return Err(Error::InvalidData(format!(
            "{} distinct class labels, at most 3 supported",
            classes.len()
        )));
    }
    let pos = positive_class(&classes).expect("nonempty");

    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for r in complete {
        let y: i8 = if r.label == pos { 1 } else { -1 };
        let mut key: Vec<u64> = r.features.iter().map(|v| v.to_bits()).collect();
        key.push(y as u64);
        if seen.insert(key) {
            points.push(r.features.clone());
            labels.push(y);
        }
    }
    Dataset::new(points, labels, raw.name.clone())
}

/// Centers each coordinate on its range midpoint and maps it onto
/// `[-BOX, BOX]` when the centered range leaves that box.
pub fn rescale(ds: &Dataset) -> Dataset {
    let d = ds.dim();
    let mut points = ds.points.clone();
    for j in 0..d {
        let (lo, hi) = ds
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), x| {
                (l.min(x[j]), u.max(x[j]))
            });
        if lo == hi {
            for x in &mut points {
                x[j] = 0.0;
            }
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (lt, ut) = (lo - mid, hi - mid);
        let scale = lt < -BOX || ut > BOX;
        for x in &mut points {
            let c = x[j] - mid;
            x[j] = if scale {
                2.0 * BOX * (c - lt) / (ut - lt) - BOX
            } else {
                c
            };
        }
    }
    Dataset {
        points,
        labels: ds.labels.clone(),
        name: ds.name.clone(),
    }
}

/// Number of labeled points for a given fraction: `⌈fraction·N⌉`.
pub fn labeled_count(fraction: f64, total: usize) -> usize {
    // the epsilon keeps e.g. 0.1 * 30 from rounding up to 4
    (fraction * total as f64 - 1e-9).ceil().max(0.0) as usize
}

fn check_fraction(fraction: f64, total: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "labeled fraction {fraction} outside (0, 1)"
        )));
    }
    let n = labeled_count(fraction, total);
    if n == 0 || n >= total {
        return Err(Error::InvalidArgument(format!(
            "labeled fraction {fraction} of {total} points leaves no labeled or no unlabeled data"
        )));
    }
    Ok(n)
}

/// Draws the labeled set class-first: positive with probability `p_pos`,
/// uniformly within the class, without replacement.
pub fn draw_biased_sample(ds: &Dataset, fraction: f64, p_pos: f64, seed: u64) -> Result<Sample> {
    let n = check_fraction(fraction, ds.len())?;
    if !(0.0..=1.0).contains(&p_pos) {
        return Err(Error::InvalidArgument(format!(
            "p_pos {p_pos} outside [0, 1]"
        )));
    }
    let mut pos: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == -1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidData(
            "biased sampling needs points of both classes".into(),
        ));
    }
    let mut rng = rng(seed);
    let mut labeled = Vec::with_capacity(n);
    for _ in 0..n {
        let want_pos = rng.gen::<f64>() < p_pos;
        let pool = match (want_pos, pos.is_empty(), neg.is_empty()) {
            (true, false, _) | (false, _, true) => &mut pos,
            _ => &mut neg,
        };
        let k = rng.gen_range(0..pool.len());
        labeled.push(pool.swap_remove(k));
    }
    Sample::from_labeled(ds, labeled, seed, SampleKind::Biased)
}

/// Simple random sample without replacement.
pub fn draw_srs_sample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Sample> {
    let n = check_fraction(fraction, ds.len())?;
    let mut rng = rng(seed);
    let labeled = rand::seq::index::sample(&mut rng, ds.len(), n).into_vec();
    Sample::from_labeled(ds, labeled, seed, SampleKind::Srs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> Result<RawDataset> {
        read_csv(text.as_bytes(), "target", "t".into())
    }

    #[test]
    fn parses_small_file() {
        let r = raw("a,b,target\n1,2,0\n3,4,1\n5,6,1\n").unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.feature_dim, 2);
        assert_eq!(r.rows[1].features, vec![3.0, 4.0]);
    }

    #[test]
    fn bad_cell_is_named() {
        let err = raw("a,b,target\n1,x,0\n").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_file_has_no_rows() {
        let err = raw("a,b,target\n").unwrap_err();
        assert!(err.to_string().contains("no rows"));
        assert!(raw("").is_err());
    }

    #[test]
    fn missing_label_column() {
        assert!(raw("a,b,class\n1,2,0\n").is_err());
    }

    #[test]
    fn three_classes_map_one_to_positive() {
        let r = raw("a,target\n1,0\n2,1\n3,2\n4,1\n5,0\n6,2\n").unwrap();
        let ds = preprocess(&r).unwrap();
        assert_eq!(ds.positives(), 2);
        assert_eq!(ds.len() - ds.positives(), 4);
    }

    #[test]
    fn duplicates_and_missing_rows_are_dropped() {
        let r = raw("a,b,target\n1,2,0\n1,2,0\n3,,1\n4,NA,1\n5,6,1\n").unwrap();
        let ds = preprocess(&r).unwrap();
        assert_eq!(ds.points, vec![vec![1.0, 2.0], vec![5.0, 6.0]]);
    }

    #[test]
    fn four_classes_rejected() {
        let r = raw("a,target\n1,0\n2,1\n3,2\n4,3\n").unwrap();
        assert!(preprocess(&r).is_err());
    }

    #[test]
    fn all_missing_rejected() {
        let r = raw("a,target\n,0\nNA,1\n").unwrap();
        assert!(preprocess(&r).is_err());
    }

    fn col(values: &[f64]) -> Dataset {
        Dataset::new(
            values.iter().map(|&v| vec![v]).collect(),
            vec![1; values.len()],
            "c",
        )
        .unwrap()
    }

    #[test]
    fn rescale_shift_only() {
        let r = rescale(&col(&[0.0, 4.0]));
        assert_eq!(r.points, vec![vec![-2.0], vec![2.0]]);
    }

    #[test]
    fn rescale_maps_wide_range_onto_box() {
        let r = rescale(&col(&[0.0, 1000.0]));
        assert_eq!(r.points, vec![vec![-100.0], vec![100.0]]);
    }

    #[test]
    fn rescale_constant_to_zero() {
        let r = rescale(&col(&[7.0, 7.0, 7.0]));
        assert!(r.points.iter().all(|x| x[0] == 0.0));
    }

    fn balanced(n: usize) -> Dataset {
        let points = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        Dataset::new(points, labels, "b").unwrap()
    }

    #[test]
    fn biased_size_is_ceiling() {
        let ds = balanced(25);
        let s = draw_biased_sample(&ds, 0.1, 0.85, 3).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(
            draw_biased_sample(&balanced(30), 0.1, 0.85, 3).unwrap().n(),
            3
        );
        s.validate(&ds).unwrap();
    }

    #[test]
    fn forced_positive_draws() {
        let ds = balanced(40);
        let s = draw_biased_sample(&ds, 0.1, 1.0, 9).unwrap();
        assert!(s.labels.iter().all(|&y| y == 1));
    }

    #[test]
    fn exhausted_class_falls_through() {
        let ds = balanced(10);
        // 5 positives, 8 draws at p_pos = 1
        let s = draw_biased_sample(&ds, 0.8, 1.0, 1).unwrap();
        assert_eq!(s.n(), 8);
        assert_eq!(s.labels.iter().filter(|&&y| y == 1).count(), 5);
        assert_eq!(s.tau, 0);
    }

    #[test]
    fn biased_positive_share_near_p_pos() {
        let ds = balanced(400);
        let mut share = 0.0;
        for seed in 0..200 {
            let s = draw_biased_sample(&ds, 0.1, 0.85, seed).unwrap();
            share += s.labels.iter().filter(|&&y| y == 1).count() as f64 / s.n() as f64;
        }
        share /= 200.0;
        assert!((0.80..=0.90).contains(&share), "share {share}");
    }

    #[test]
    fn srs_distinct_and_deterministic() {
        let ds = balanced(10);
        let a = draw_srs_sample(&ds, 0.5, 42).unwrap();
        let b = draw_srs_sample(&ds, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 5);
        a.validate(&ds).unwrap();
    }

    #[test]
    fn srs_inclusion_frequency() {
        let ds = balanced(20);
        let runs = 200;
        let mut hits = [0usize; 20];
        for seed in 0..runs {
            for i in draw_srs_sample(&ds, 0.25, seed).unwrap().labeled_idx {
                hits[i] += 1;
            }
        }
        let p = 5.0 / 20.0;
        let mean = runs as f64 * p;
        let sd = (runs as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() <= 5.0 * sd);
        }
    }

    #[test]
    fn degenerate_fractions_rejected() {
        let ds = balanced(10);
        assert!(draw_srs_sample(&ds, 0.0, 0).is_err());
        assert!(draw_srs_sample(&ds, 0.99, 0).is_err());
        let one_class = col(&[1.0, 2.0, 3.0]);
        assert!(draw_biased_sample(&one_class, 0.5, 0.85, 0).is_err());
    }
}
