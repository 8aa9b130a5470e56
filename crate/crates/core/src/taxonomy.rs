//! Persuasion-technique hierarchy.
//!
//! A hierarchy is a rooted tree read from a JSON document of the form
//! `{"root": .., "edges": [[parent, child], ..], "leaf_order": [..]}`. Only
//! leaves are predictable; inner nodes exist so the hierarchical metric can
//! give partial credit to relatives of the gold technique.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of a node in the technique hierarchy. Compared byte for byte.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TechniqueId(String);

impl TechniqueId {
    pub fn new(name: impl Into<String>) -> Self {
        TechniqueId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for TechniqueId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TechniqueId {
    fn from(s: &str) -> Self {
        TechniqueId(s.to_owned())
    }
}

impl From<String> for TechniqueId {
    fn from(s: String) -> Self {
        TechniqueId(s)
    }
}

pub type LabelSet = BTreeSet<TechniqueId>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HierarchyDoc {
    root: String,
    edges: Vec<(String, String)>,
    leaf_order: Vec<String>,
}

/// Validated, immutable technique tree.
#[derive(Clone, Debug)]
pub struct LabelHierarchy {
    root: TechniqueId,
    parent: HashMap<TechniqueId, TechniqueId>,
    nodes: BTreeSet<TechniqueId>,
    leaf_order: Vec<TechniqueId>,
    leaf_index: HashMap<TechniqueId, usize>,
    edges: Vec<(TechniqueId, TechniqueId)>,
}

const BUILTIN: &str = include_str!("../assets/persuasion_hierarchy.json");

impl LabelHierarchy {
    /// The bundled 20-technique persuasion taxonomy.
    pub fn persuasion() -> Self {
        Self::parse(BUILTIN.as_bytes()).expect("bundled hierarchy is valid")
    }

    pub fn parse(doc: &[u8]) -> Result<Self> {
        let doc: HierarchyDoc = serde_json::from_slice(doc).map_err(Error::malformed)?;
        Self::from_parts(doc.root, doc.edges, doc.leaf_order)
    }

    pub fn from_parts(
        root: impl Into<String>,
        edges: Vec<(String, String)>,
        leaf_order: Vec<String>,
    ) -> Result<Self> {
        let root = TechniqueId::new(root);
        if root.as_str().is_empty() {
            return Err(Error::Malformed("root name is empty".into()));
        }

        let mut nodes = BTreeSet::new();
        nodes.insert(root.clone());
        let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut seen_edges = BTreeSet::new();
        for (p, c) in &edges {
            if p.is_empty() || c.is_empty() {
                return Err(Error::Malformed("edge with empty node name".into()));
            }
            if !seen_edges.insert((p.as_str(), c.as_str())) {
                return Err(Error::DuplicateNode(c.clone()));
            }
            nodes.insert(TechniqueId::new(p.as_str()));
            nodes.insert(TechniqueId::new(c.as_str()));
            children.entry(p.as_str()).or_default().push(c.as_str());
        }

        // Cycles are reported before multi-parent problems: a back edge
        // always gives its target a second parent, and the cycle is the more
        // useful diagnostic.
        detect_cycle(&nodes, &children)?;

        let mut parent = HashMap::new();
        for (p, c) in &edges {
            if c == root.as_str() {
                return Err(Error::Cycle(c.clone()));
            }
            if parent
                .insert(TechniqueId::new(c.as_str()), TechniqueId::new(p.as_str()))
                .is_some()
            {
                return Err(Error::MultipleParents(c.clone()));
            }
        }

        for node in &nodes {
            let mut cur = node;
            while let Some(p) = parent.get(cur) {
                cur = p;
            }
            if *cur != root {
                return Err(Error::Orphan(node.to_string()));
            }
        }

        let mut leaf_index = HashMap::new();
        let mut order = Vec::with_capacity(leaf_order.len());
        for (i, name) in leaf_order.into_iter().enumerate() {
            let id = TechniqueId::new(name);
            if !nodes.contains(&id) {
                return Err(Error::UnknownTechnique(id.to_string()));
            }
            if children.contains_key(id.as_str()) {
                return Err(Error::Malformed(format!(
                    "`{id}` is listed in leaf_order but has children"
                )));
            }
            if leaf_index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(id.to_string()));
            }
            order.push(id);
        }
        if let Some(missing) = nodes
            .iter()
            .find(|n| !children.contains_key(n.as_str()) && !leaf_index.contains_key(*n))
        {
            return Err(Error::Malformed(format!(
                "leaf `{missing}` is missing from leaf_order"
            )));
        }

        let edges = edges
            .into_iter()
            .map(|(p, c)| (TechniqueId::new(p), TechniqueId::new(c)))
            .collect();
        Ok(LabelHierarchy {
            root,
            parent,
            nodes,
            leaf_order: order,
            leaf_index,
            edges,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = HierarchyDoc {
            root: self.root.to_string(),
            edges: self
                .edges
                .iter()
                .map(|(p, c)| (p.to_string(), c.to_string()))
                .collect(),
            leaf_order: self.leaf_order.iter().map(|l| l.to_string()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("hierarchy serializes")
    }

    pub fn root(&self) -> &TechniqueId {
        &self.root
    }

    pub fn nodes(&self) -> &BTreeSet<TechniqueId> {
        &self.nodes
    }

    pub fn contains(&self, t: &str) -> bool {
        self.nodes.contains(t)
    }

    pub fn leaf_order(&self) -> &[TechniqueId] {
        &self.leaf_order
    }

    pub fn is_leaf(&self, t: &str) -> bool {
        self.leaf_index.contains_key(t)
    }

    pub fn leaf_position(&self, t: &str) -> Option<usize> {
        self.leaf_index.get(t).copied()
    }

    pub fn parent(&self, t: &str) -> Option<&TechniqueId> {
        self.parent.get(t)
    }

    pub fn node(&self, t: &str) -> Result<&TechniqueId> {
        self.nodes
            .get(t)
            .ok_or_else(|| Error::UnknownTechnique(t.to_owned()))
    }

    /// Strict ancestors of `t`, not including the root.
    pub fn ancestors(&self, t: &str) -> Result<LabelSet> {
        let mut out = LabelSet::new();
        self.push_ancestors(t, &mut out)?;
        Ok(out)
    }

    fn push_ancestors(&self, t: &str, out: &mut LabelSet) -> Result<()> {
        self.node(t)?;
        let mut cur = t;
        while let Some(p) = self.parent.get(cur) {
            if *p == self.root {
                break;
            }
            out.insert(p.clone());
            cur = p.as_str();
        }
        Ok(())
    }

    /// `labels` together with every non-root ancestor of each label.
    pub fn ancestor_closure<'a, I, S>(&self, labels: I) -> Result<LabelSet>
    where
        I: IntoIterator<Item = &'a S>,
        S: Borrow<str> + ?Sized + 'a,
    {
        let mut out = LabelSet::new();
        for label in labels {
            let id = self.node(label.borrow())?;
            if *id != self.root {
                out.insert(id.clone());
            }
            self.push_ancestors(id.as_str(), &mut out)?;
        }
        Ok(out)
    }
}

fn detect_cycle(nodes: &BTreeSet<TechniqueId>, children: &HashMap<&str, Vec<&str>>) -> Result<()> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    for start in nodes {
        if marks.contains_key(start.as_str()) {
            continue;
        }
        // iterative DFS: (node, next child index)
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        marks.insert(start.as_str(), Mark::Open);
        while let Some((node, idx)) = stack.last_mut() {
            let kids = children.get(*node).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(&next) = kids.get(*idx) {
                *idx += 1;
                match marks.get(next) {
                    Some(Mark::Open) => return Err(Error::Cycle(next.to_owned())),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Open);
                        stack.push((next, 0));
                    }
                }
            } else {
                marks.insert(*node, Mark::Done);
                stack.pop();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1() -> LabelHierarchy {
        LabelHierarchy::parse(
            br#"{"root":"root","edges":[["root","A"],["root","B"],["A","a1"],["A","a2"],["B","b1"]],
                "leaf_order":["a1","a2","b1"]}"#,
        )
        .unwrap()
    }

    fn set(items: &[&str]) -> LabelSet {
        items.iter().map(|s| TechniqueId::from(*s)).collect()
    }

    #[test]
    fn minimal_tree() {
        let h = h1();
        let leaves: Vec<&str> = h.leaf_order().iter().map(|l| l.as_str()).collect();
        assert_eq!(leaves, ["a1", "a2", "b1"]);
        assert_eq!(h.parent("a1").unwrap().as_str(), "A");
        assert!(h.is_leaf("b1"));
        assert!(!h.is_leaf("B"));
    }

    #[test]
    fn two_node_cycle() {
        let err = LabelHierarchy::parse(
            br#"{"root":"root","edges":[["root","B"],["a1","A"],["A","a1"]],"leaf_order":["B"]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Cycle(_)), "{err}");

        // same back edge while A also hangs off the root
        let err = LabelHierarchy::parse(
            br#"{"root":"root","edges":[["root","A"],["A","a1"],["a1","A"]],"leaf_order":[]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Cycle(_)), "{err}");
    }

    #[test]
    fn structural_errors() {
        let orphan = br#"{"root":"r","edges":[["r","a"],["x","y"]],"leaf_order":["a","y"]}"#;
        assert!(matches!(LabelHierarchy::parse(orphan), Err(Error::Orphan(_))));

        let two_parents = br#"{"root":"r","edges":[["r","a"],["r","b"],["a","c"],["b","c"]],"leaf_order":["c"]}"#;
        assert!(matches!(
            LabelHierarchy::parse(two_parents),
            Err(Error::MultipleParents(_))
        ));

        let dup_leaf = br#"{"root":"r","edges":[["r","a"]],"leaf_order":["a","a"]}"#;
        assert!(matches!(LabelHierarchy::parse(dup_leaf), Err(Error::DuplicateNode(_))));

        let dup_edge = br#"{"root":"r","edges":[["r","a"],["r","a"]],"leaf_order":["a"]}"#;
        assert!(matches!(LabelHierarchy::parse(dup_edge), Err(Error::DuplicateNode(_))));

        let unknown_key = br#"{"root":"r","edges":[["r","a"]],"leaf_order":["a"],"extra":1}"#;
        assert!(matches!(LabelHierarchy::parse(unknown_key), Err(Error::Malformed(_))));

        let missing_leaf = br#"{"root":"r","edges":[["r","a"],["r","b"]],"leaf_order":["a"]}"#;
        assert!(matches!(LabelHierarchy::parse(missing_leaf), Err(Error::Malformed(_))));

        let inner_as_leaf = br#"{"root":"r","edges":[["r","a"],["a","b"]],"leaf_order":["a","b"]}"#;
        assert!(matches!(LabelHierarchy::parse(inner_as_leaf), Err(Error::Malformed(_))));

        assert!(matches!(LabelHierarchy::parse(b"not json"), Err(Error::Malformed(_))));
    }

    #[test]
    fn bundled_taxonomy() {
        let h = LabelHierarchy::persuasion();
        assert_eq!(h.leaf_order().len(), 20);
        for t in ["Loaded Language", "Smears", "Straw Man", "Slogans", "Name calling/Labelling"] {
            assert!(h.is_leaf(t), "{t}");
        }
        let reparsed = LabelHierarchy::parse(h.to_json().as_bytes()).unwrap();
        assert_eq!(reparsed.leaf_order(), h.leaf_order());
    }

    #[test]
    fn ancestors_exclude_root() {
        let h = h1();
        assert_eq!(h.ancestors("a1").unwrap(), set(&["A"]));
        assert!(h.ancestors("A").unwrap().is_empty());
        assert!(h.ancestors("root").unwrap().is_empty());
        assert!(matches!(h.ancestors("X"), Err(Error::UnknownTechnique(_))));
        // exact byte comparison
        assert!(h.ancestors("A1").is_err());
    }

    #[test]
    fn closure_examples() {
        let h = h1();
        assert_eq!(h.ancestor_closure(&set(&["a1"])).unwrap(), set(&["a1", "A"]));
        assert!(h.ancestor_closure(&set(&[])).unwrap().is_empty());
        assert_eq!(
            h.ancestor_closure(&set(&["a1", "b1"])).unwrap(),
            set(&["a1", "A", "b1", "B"])
        );
        assert!(h.ancestor_closure(&set(&["root"])).unwrap().is_empty());
        assert!(h.ancestor_closure(&set(&["zz"])).is_err());
    }

    #[test]
    fn deep_closure_in_bundled_taxonomy() {
        let h = LabelHierarchy::persuasion();
        assert_eq!(
            h.ancestor_closure(["Straw Man"].iter().copied()).unwrap(),
            set(&["Straw Man", "Distraction", "Reasoning", "Logos"])
        );
    }
}
