//! Prediction matrices and per-technique threshold tuning.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::LabelMap;
use crate::taxonomy::{LabelHierarchy, LabelSet, TechniqueId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Logits,
    Probabilities,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Logits => "logits",
            MatrixKind::Probabilities => "probabilities",
        }
    }
}

/// Instances × techniques scores, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    kind: MatrixKind,
    ids: Vec<String>,
    technique_order: Vec<TechniqueId>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRow {
    id: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    kind: MatrixKind,
    technique_order: Vec<TechniqueId>,
    rows: Vec<MatrixRow>,
}

impl PredictionMatrix {
    pub fn new(
        kind: MatrixKind,
        technique_order: Vec<TechniqueId>,
        rows: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let width = technique_order.len();
        let mut seen = HashSet::new();
        if let Some(t) = technique_order.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(Error::Malformed(format!("technique `{t}` appears twice")));
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut seen = HashSet::new();
        for (id, row) in rows {
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            if row.len() != width {
                return Err(Error::Malformed(format!(
                    "row `{id}` has {} values, expected {width}",
                    row.len()
                )));
            }
            for &v in &row {
                let ok = match kind {
                    MatrixKind::Logits => v.is_finite(),
                    MatrixKind::Probabilities => (0.0..=1.0).contains(&v),
                };
                if !ok {
                    return Err(Error::Malformed(format!(
                        "row `{id}`: value {v} is not a valid {}",
                        kind.name()
                    )));
                }
            }
            ids.push(id);
            values.extend(row);
        }
        Ok(PredictionMatrix {
            kind,
            ids,
            technique_order,
            values,
        })
    }

    pub fn parse(doc: &[u8]) -> Result<Self> {
        let doc: MatrixDoc = serde_json::from_slice(doc).map_err(Error::malformed)?;
        Self::new(
            doc.kind,
            doc.technique_order,
            doc.rows.into_iter().map(|r| (r.id, r.values)).collect(),
        )
    }

    pub fn to_json(&self) -> String {
        let doc = MatrixDoc {
            kind: self.kind,
            technique_order: self.technique_order.clone(),
            rows: self
                .ids
                .iter()
                .enumerate()
                .map(|(i, id)| MatrixRow {
                    id: id.clone(),
                    values: self.row(i).to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("matrix serializes")
    }

    /// Columns must be exactly the hierarchy's leaves in declared order.
    pub fn validate_against(&self, h: &LabelHierarchy) -> Result<()> {
        if self.technique_order != h.leaf_order() {
            return Err(Error::TechniqueMismatch(
                "matrix technique_order differs from the hierarchy's leaf_order".into(),
            ));
        }
        Ok(())
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn technique_order(&self) -> &[TechniqueId] {
        &self.technique_order
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.technique_order.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |r| self.get(r, col))
    }

    pub fn row_index(&self) -> BTreeMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    pub fn require_kind(&self, kind: MatrixKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongKind {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, techniques: &[TechniqueId]) -> Result<Self> {
        let cols = techniques
            .iter()
            .map(|t| {
                self.technique_order
                    .iter()
                    .position(|c| c == t)
                    .ok_or_else(|| Error::UnknownTechnique(t.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = (0..self.n_rows())
            .map(|r| (self.ids[r].clone(), cols.iter().map(|&c| self.get(r, c)).collect()))
            .collect();
        Self::new(self.kind, techniques.to_vec(), rows)
    }

    pub(crate) fn from_raw(
        kind: MatrixKind,
        ids: Vec<String>,
        technique_order: Vec<TechniqueId>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(ids.len() * technique_order.len(), values.len());
        PredictionMatrix {
            kind,
            ids,
            technique_order,
            values,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_matrix(m: &PredictionMatrix) -> Result<PredictionMatrix> {
    m.require_kind(MatrixKind::Logits)?;
    Ok(PredictionMatrix::from_raw(
        MatrixKind::Probabilities,
        m.ids.clone(),
        m.technique_order.clone(),
        m.values.iter().map(|&x| sigmoid(x)).collect(),
    ))
}

/// Candidate thresholds `lo, lo + step, .., <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lo: 0.01,
            hi: 0.70,
            step: 0.01,
        }
    }
}

impl Grid {
    /// Grid values, rounded to 10 decimals so that e.g. the 30th point of the
    /// default grid is exactly `0.3` and compares equal to a score of `0.3`.
    pub fn points(&self) -> Result<Vec<f64>> {
        let Grid { lo, hi, step } = *self;
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
            return Err(Error::EmptyGrid("non-finite bound".into()));
        }
        if step <= 0.0 {
            return Err(Error::EmptyGrid(format!("step must be positive, got {step}")));
        }
        if lo > hi {
            return Err(Error::EmptyGrid(format!("lo {lo} exceeds hi {hi}")));
        }
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::EmptyGrid(format!("[{lo}, {hi}] is not inside [0, 1]")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|k| ((lo + k as f64 * step) * 1e10).round() / 1e10)
            .filter(|&v| v <= hi + 1e-12)
            .collect())
    }
}

/// Per-technique decision thresholds.
///
/// Serialized as a flat JSON object of technique → threshold with an extra
/// `"grid"` entry holding the search grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdProfile {
    pub thresholds: BTreeMap<TechniqueId, f64>,
    pub grid: Grid,
}

const GRID_KEY: &str = "grid";

impl Serialize for ThresholdProfile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.thresholds.len() + 1))?;
        map.serialize_entry(GRID_KEY, &self.grid)?;
        for (t, v) in &self.thresholds {
            map.serialize_entry(t, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ThresholdProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut raw: BTreeMap<String, serde_json::Value> = BTreeMap::deserialize(d)?;
        let grid = raw
            .remove(GRID_KEY)
            .ok_or_else(|| de::Error::missing_field(GRID_KEY))?;
        let grid: Grid = serde_json::from_value(grid).map_err(de::Error::custom)?;
        let thresholds = raw
            .into_iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|f| (TechniqueId::from(k.as_str()), f))
                    .ok_or_else(|| de::Error::custom(format!("threshold for `{k}` is not a number")))
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(ThresholdProfile { thresholds, grid })
    }
}

impl ThresholdProfile {
    pub fn uniform(techniques: &[TechniqueId], value: f64) -> Self {
        ThresholdProfile {
            thresholds: techniques.iter().map(|t| (t.clone(), value)).collect(),
            grid: Grid {
                lo: value,
                hi: value,
                step: 0.01,
            },
        }
    }

    pub fn parse(doc: &[u8]) -> Result<Self> {
        let p: ThresholdProfile = serde_json::from_slice(doc).map_err(Error::malformed)?;
        for (t, &v) in &p.thresholds {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Malformed(format!("threshold for `{t}` is outside [0, 1]: {v}")));
            }
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// One threshold per leaf, each inside the declared grid bounds.
    pub fn validate_against(&self, h: &LabelHierarchy) -> Result<()> {
        if let Some(t) = h.leaf_order().iter().find(|t| !self.thresholds.contains_key(*t)) {
            return Err(Error::TechniqueMismatch(format!("no threshold for `{t}`")));
        }
        if let Some(t) = self.thresholds.keys().find(|t| !h.is_leaf(t.as_str())) {
            return Err(Error::UnknownTechnique(t.to_string()));
        }
        for (t, &v) in &self.thresholds {
            if v < self.grid.lo - 1e-12 || v > self.grid.hi + 1e-12 {
                return Err(Error::Malformed(format!(
                    "threshold {v} for `{t}` lies outside the grid [{}, {}]",
                    self.grid.lo, self.grid.hi
                )));
            }
        }
        Ok(())
    }
}

/// Labels every instance with the techniques whose probability reaches the
/// technique's threshold (inclusive).
pub fn apply_thresholds(m: &PredictionMatrix, p: &ThresholdProfile) -> Result<LabelMap> {
    m.require_kind(MatrixKind::Probabilities)?;
    let cuts = m
        .technique_order
        .iter()
        .map(|t| {
            p.thresholds
                .get(t)
                .copied()
                .ok_or_else(|| Error::TechniqueMismatch(format!("profile has no threshold for `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if p.thresholds.len() != cuts.len() {
        let extra = p
            .thresholds
            .keys()
            .find(|t| !m.technique_order.contains(t))
            .expect("profile has an extra technique");
        return Err(Error::TechniqueMismatch(format!(
            "profile technique `{extra}` is not a matrix column"
        )));
    }
    Ok(m
        .ids
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let labels: LabelSet = m
                .row(r)
                .iter()
                .zip(&cuts)
                .zip(&m.technique_order)
                .filter(|((v, c), _)| **v >= **c)
                .map(|(_, t)| t.clone())
                .collect();
            (id.clone(), labels)
        })
        .collect())
}

/// `2tp / (2tp + fp + fn)` kept as an exact fraction; 0/0 is 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct F1Fraction {
    pub num: u64,
    pub den: u64,
}

impl F1Fraction {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let num = 2 * tp as u64;
        let den = num + fp as u64 + fn_ as u64;
        if num == 0 {
            F1Fraction { num: 0, den: 1 }
        } else {
            F1Fraction { num, den }
        }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn beats(self, other: F1Fraction) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// Flat F1 of one technique when cutting `scores` at `threshold`.
pub fn f1_at(scores: &[f64], positives: &[bool], threshold: f64) -> F1Fraction {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&s, &pos) in scores.iter().zip(positives) {
        match (s >= threshold, pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    F1Fraction::from_counts(tp, fp, fn_)
}

/// Smallest grid value reaching the maximal F1 for one technique.
pub fn tune_column(scores: &[f64], positives: &[bool], grid: &[f64]) -> (f64, F1Fraction) {
    let mut best: Option<(f64, F1Fraction)> = None;
    for &g in grid {
        let f = f1_at(scores, positives, g);
        match best {
            Some((_, b)) if !f.beats(b) => {}
            _ => best = Some((g, f)),
        }
    }
    best.expect("grid is non-empty")
}

/// Tunes each matrix column independently against gold labels.
pub fn tune_thresholds(
    m: &PredictionMatrix,
    gold: &LabelMap,
    grid: Grid,
    h: &LabelHierarchy,
) -> Result<ThresholdProfile> {
    m.require_kind(MatrixKind::Probabilities)?;
    let points = grid.points()?;
    if m.ids.len() != gold.len() || m.ids.iter().any(|id| !gold.contains_key(id)) {
        return Err(Error::IdMismatch("matrix rows and gold ids differ".into()));
    }
    for (id, labels) in gold {
        if let Some(l) = labels.iter().find(|l| !h.contains(l.as_str())) {
            return Err(Error::UnknownLabel {
                id: id.clone(),
                label: l.to_string(),
            });
        }
    }
    if let Some(t) = m.technique_order.iter().find(|t| !h.is_leaf(t.as_str())) {
        return Err(Error::UnknownTechnique(t.to_string()));
    }

    let thresholds = m
        .technique_order
        .par_iter()
        .enumerate()
        .map(|(c, t)| {
            let scores: Vec<f64> = m.column(c).collect();
            let positives: Vec<bool> = m.ids.iter().map(|id| gold[id].contains(t)).collect();
            (t.clone(), tune_column(&scores, &positives, &points).0)
        })
        .collect();
    Ok(ThresholdProfile { thresholds, grid })
}
