//! Hierarchical and per-class precision/recall/F1.
//!
//! The hierarchical measures are micro-averaged over instances: every
//! instance contributes the sizes of its ancestor-closed gold and predicted
//! sets and of their intersection, and the three totals are divided once at
//! the end.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{LabelHierarchy, LabelSet, TechniqueId};

/// Label sets keyed by instance id.
pub type LabelMap = BTreeMap<String, LabelSet>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl ClassScore {
    /// Binary scores from confusion counts; any 0/0 ratio is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        ClassScore {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: tp + fn_,
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub h_precision: f64,
    pub h_recall: f64,
    pub h_f1: f64,
    pub per_class: BTreeMap<TechniqueId, ClassScore>,
}

impl ScoreReport {
    pub fn parse(doc: &[u8]) -> Result<Self> {
        serde_json::from_slice(doc).map_err(Error::malformed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn f1(&self, t: &str) -> Option<f64> {
        self.per_class.get(t).map(|c| c.f1)
    }
}

/// Raw totals behind a hierarchical score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HierarchicalCounts {
    pub intersection: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl HierarchicalCounts {
    /// (precision, recall, f1). Both totals zero is vacuously perfect; a
    /// single zero denominator makes that measure 0.
    pub fn scores(&self) -> (f64, f64, f64) {
        if self.predicted == 0 && self.gold == 0 {
            return (1.0, 1.0, 1.0);
        }
        let p = if self.predicted == 0 {
            0.0
        } else {
            self.intersection as f64 / self.predicted as f64
        };
        let r = if self.gold == 0 {
            0.0
        } else {
            self.intersection as f64 / self.gold as f64
        };
        (p, r, harmonic(p, r))
    }
}

fn check_ids(gold: &LabelMap, pred: &LabelMap) -> Result<()> {
    if let Some(id) = gold.keys().find(|k| !pred.contains_key(*k)) {
        return Err(Error::IdMismatch(format!("`{id}` has no prediction")));
    }
    if let Some(id) = pred.keys().find(|k| !gold.contains_key(*k)) {
        return Err(Error::IdMismatch(format!("`{id}` has no gold labels")));
    }
    Ok(())
}

pub fn hierarchical_counts(gold: &LabelMap, pred: &LabelMap, h: &LabelHierarchy) -> Result<HierarchicalCounts> {
    check_ids(gold, pred)?;
    let mut c = HierarchicalCounts::default();
    for (id, g) in gold {
        let g = h.ancestor_closure(g)?;
        let p = h.ancestor_closure(&pred[id])?;
        c.intersection += g.intersection(&p).count();
        c.predicted += p.len();
        c.gold += g.len();
    }
    Ok(c)
}

pub fn hierarchical_prf(gold: &LabelMap, pred: &LabelMap, h: &LabelHierarchy) -> Result<ScoreReport> {
    let (h_precision, h_recall, h_f1) = hierarchical_counts(gold, pred, h)?.scores();
    Ok(ScoreReport {
        h_precision,
        h_recall,
        h_f1,
        per_class: per_class_f1(gold, pred, h)?,
    })
}

/// Flat one-vs-rest scores for every leaf technique.
pub fn per_class_f1(
    gold: &LabelMap,
    pred: &LabelMap,
    h: &LabelHierarchy,
) -> Result<BTreeMap<TechniqueId, ClassScore>> {
    check_ids(gold, pred)?;
    let n = h.leaf_order().len();
    let (mut tp, mut fp, mut fn_) = (vec![0usize; n], vec![0usize; n], vec![0usize; n]);
    for (id, g) in gold {
        let p = &pred[id];
        for label in g.iter().chain(p.iter()) {
            h.node(label.as_str())?;
        }
        for (i, t) in h.leaf_order().iter().enumerate() {
            match (g.contains(t), p.contains(t)) {
                (true, true) => tp[i] += 1,
                (false, true) => fp[i] += 1,
                (true, false) => fn_[i] += 1,
                (false, false) => {}
            }
        }
    }
    Ok(h
        .leaf_order()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), ClassScore::from_counts(tp[i], fp[i], fn_[i])))
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub deltas: BTreeMap<TechniqueId, f64>,
}

/// Per-technique `after.f1 - before.f1`, rounded to 12 decimals so that
/// e.g. `0.53 - 0.50` is exactly `0.03` at the benefit boundary.
pub fn f1_delta(after: &ScoreReport, before: &ScoreReport) -> Result<DeltaReport> {
    let a: BTreeSet<_> = after.per_class.keys().collect();
    let b: BTreeSet<_> = before.per_class.keys().collect();
    if a != b {
        let odd = a.symmetric_difference(&b).next().expect("sets differ");
        return Err(Error::TechniqueMismatch(format!("`{odd}` is present in only one report")));
    }
    Ok(DeltaReport {
        deltas: after
            .per_class
            .iter()
            .map(|(t, s)| (t.clone(), round12(s.f1 - before.per_class[t].f1)))
            .collect(),
    })
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

pub const DEFAULT_EPSILON: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenefitSet {
    pub techniques: LabelSet,
    pub epsilon: f64,
}

impl BenefitSet {
    pub fn contains(&self, t: &str) -> bool {
        self.techniques.contains(t)
    }
}

/// Techniques whose F1 improved by strictly more than `epsilon`.
pub fn benefit_set(delta: &DeltaReport, epsilon: f64) -> Result<BenefitSet> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(BenefitSet {
        techniques: delta
            .deltas
            .iter()
            .filter(|(_, &d)| d > epsilon)
            .map(|(t, _)| t.clone())
            .collect(),
        epsilon,
    })
}
