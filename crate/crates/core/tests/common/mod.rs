//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use persuakit::scoring::LabelMap;
use persuakit::{LabelHierarchy, LabelSet, TechniqueId};
use rand::seq::SliceRandom;
use rand::Rng;

pub const ROOT: &str = "root";

/// A random rooted tree given as `parents[i]` = parent index of node `i + 1`
/// (index 0 is the root).
#[derive(Clone, Debug)]
pub struct Tree {
    pub parents: Vec<usize>,
}

impl Tree {
    pub fn name(i: usize) -> String {
        if i == 0 {
            ROOT.into()
        } else {
            format!("n{i}")
        }
    }

    pub fn random(rng: &mut impl Rng, max_nodes: usize) -> Tree {
        let k = rng.gen_range(1..=max_nodes);
        Tree {
            parents: (0..k).map(|i| rng.gen_range(0..=i)).collect(),
        }
    }

    pub fn from_choices(choices: &[usize]) -> Tree {
        Tree {
            parents: choices.iter().enumerate().map(|(i, c)| c % (i + 1)).collect(),
        }
    }

    pub fn node_names(&self) -> Vec<String> {
        (1..=self.parents.len()).map(Tree::name).collect()
    }

    pub fn leaves(&self) -> Vec<String> {
        let with_children: BTreeSet<usize> = self.parents.iter().copied().collect();
        let mut leaves: Vec<String> = (1..=self.parents.len())
            .filter(|i| !with_children.contains(i))
            .map(Tree::name)
            .collect();
        leaves.sort();
        leaves
    }

    pub fn hierarchy(&self) -> LabelHierarchy {
        let edges: Vec<(String, String)> = self
            .parents
            .iter()
            .enumerate()
            .map(|(i, &p)| (Tree::name(p), Tree::name(i + 1)))
            .collect();
        let doc = serde_json::json!({
            "root": ROOT,
            "edges": edges,
            "leaf_order": self.leaves(),
        });
        LabelHierarchy::parse(doc.to_string().as_bytes()).expect("random tree is valid")
    }

    /// Walks parent pointers of the raw tree; the root is never included.
    pub fn closure(&self, labels: &BTreeSet<String>) -> BTreeSet<String> {
        let index: BTreeMap<String, usize> = (1..=self.parents.len()).map(|i| (Tree::name(i), i)).collect();
        let mut out = BTreeSet::new();
        for l in labels {
            let mut cur = index[l];
            while cur != 0 {
                out.insert(Tree::name(cur));
                cur = self.parents[cur - 1];
            }
        }
        out
    }
}

pub fn random_subset(rng: &mut impl Rng, pool: &[String]) -> BTreeSet<String> {
    let k = rng.gen_range(0..=pool.len().min(4));
    pool.choose_multiple(rng, k).cloned().collect()
}

pub fn to_label_set(s: &BTreeSet<String>) -> LabelSet {
    s.iter().map(|l| TechniqueId::from(l.as_str())).collect()
}

pub fn to_map(rows: &[(String, BTreeSet<String>)]) -> LabelMap {
    rows.iter().map(|(id, s)| (id.clone(), to_label_set(s))).collect()
}

/// Brute-force hierarchical micro P/R/F1 from materialized closures.
pub fn oracle_prf(tree: &Tree, gold: &[(String, BTreeSet<String>)], pred: &[(String, BTreeSet<String>)]) -> (f64, f64, f64) {
    let mut inter = 0usize;
    let mut p_tot = 0usize;
    let mut g_tot = 0usize;
    for ((gid, g), (pid, p)) in gold.iter().zip(pred) {
        assert_eq!(gid, pid);
        let gc = tree.closure(g);
        let pc = tree.closure(p);
        inter += gc.iter().filter(|x| pc.contains(*x)).count();
        p_tot += pc.len();
        g_tot += gc.len();
    }
    if p_tot == 0 && g_tot == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if p_tot == 0 { 0.0 } else { inter as f64 / p_tot as f64 };
    let r = if g_tot == 0 { 0.0 } else { inter as f64 / g_tot as f64 };
    let f = if p_tot + g_tot == 0 { 0.0 } else { 2.0 * inter as f64 / (p_tot + g_tot) as f64 };
    (p, r, f)
}

/// The default 70-point grid, computed independently of the library.
pub fn oracle_grid() -> Vec<f64> {
    (1..=70).map(|i| i as f64 / 100.0).collect()
}

pub fn oracle_f1(scores: &[f64], positives: &[bool], thr: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(positives) {
        match (s >= thr, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// All grid values attaining the maximal flat F1.
pub fn oracle_argmax(scores: &[f64], positives: &[bool]) -> (f64, Vec<f64>) {
    let grid = oracle_grid();
    let f1s: Vec<f64> = grid.iter().map(|&t| oracle_f1(scores, positives, t)).collect();
    let best = f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let arg = grid
        .iter()
        .zip(&f1s)
        .filter(|(_, &f)| f == best)
        .map(|(&t, _)| t)
        .collect();
    (best, arg)
}

/// A toy hierarchy with three leaves under two branches.
pub fn toy_hierarchy() -> LabelHierarchy {
    LabelHierarchy::parse(
        br#"{"root":"R","edges":[["R","A"],["R","B"],["A","a1"],["A","a2"],["B","b1"]],"leaf_order":["a1","a2","b1"]}"#,
    )
    .unwrap()
}

pub fn set(labels: &[&str]) -> LabelSet {
    labels.iter().map(|l| TechniqueId::from(*l)).collect()
}
