//! Instance datasets with label statistics, plus the legacy merge with
//! technique splitting.

use std::collections::{BTreeMap, HashSet};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{LabelHierarchy, LabelSet, TechniqueId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Original,
    Legacy,
    Paraphrase,
}

fn default_language() -> String {
    "en".to_owned()
}

fn is_default_origin(o: &Origin) -> bool {
    *o == Origin::Original
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "is_default_origin")]
    pub origin: Origin,
    #[serde(default = "default_language")]
    pub language: String,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: LabelSet) -> Self {
        Instance {
            id: id.into(),
            text: text.into(),
            labels,
            origin: Origin::Original,
            language: default_language(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Builds a dataset, checking id uniqueness and non-empty texts only.
    pub fn new(name: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.id.is_empty() {
                return Err(Error::Malformed("instance with empty id".into()));
            }
            if inst.text.is_empty() {
                return Err(Error::Malformed(format!("instance `{}` has empty text", inst.id)));
            }
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            instances,
        })
    }

    /// Parses a dataset without checking labels against a hierarchy; used
    /// for legacy data whose labels follow an older inventory.
    pub fn parse_unchecked(name: impl Into<String>, doc: &[u8]) -> Result<Self> {
        let instances: Vec<Instance> = serde_json::from_slice(doc).map_err(Error::malformed)?;
        Dataset::new(name, instances)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Every label must be a leaf of `h`.
    pub fn validate(&self, h: &LabelHierarchy) -> Result<()> {
        for inst in &self.instances {
            if let Some(bad) = inst.labels.iter().find(|l| !h.is_leaf(l.as_str())) {
                return Err(Error::UnknownLabel {
                    id: inst.id.clone(),
                    label: bad.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.instances).expect("dataset serializes")
    }

    /// Gold label sets keyed by id.
    pub fn label_map(&self) -> BTreeMap<String, LabelSet> {
        self.instances
            .iter()
            .map(|i| (i.id.clone(), i.labels.clone()))
            .collect()
    }
}

pub fn load_dataset(name: impl Into<String>, doc: &[u8], h: &LabelHierarchy) -> Result<Dataset> {
    let ds = Dataset::parse_unchecked(name, doc)?;
    ds.validate(h)?;
    Ok(ds)
}

/// Number of instances carrying each leaf technique; absent techniques map to 0.
pub fn label_counts(ds: &Dataset, h: &LabelHierarchy) -> BTreeMap<TechniqueId, usize> {
    let mut counts: BTreeMap<TechniqueId, usize> =
        h.leaf_order().iter().map(|t| (t.clone(), 0)).collect();
    for inst in &ds.instances {
        for label in &inst.labels {
            *counts.entry(label.clone()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardinalityStats {
    pub zero: f64,
    pub one: f64,
    pub multi: f64,
}

pub fn cardinality_stats(ds: &Dataset) -> Result<CardinalityStats> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut zero, mut one, mut multi) = (0usize, 0usize, 0usize);
    for inst in &ds.instances {
        match inst.labels.len() {
            0 => zero += 1,
            1 => one += 1,
            _ => multi += 1,
        }
    }
    let n = ds.len() as f64;
    Ok(CardinalityStats {
        zero: zero as f64 / n,
        one: one as f64 / n,
        multi: multi as f64 / n,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Rename,
    Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRule {
    pub pattern: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub kind: SplitKind,
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<SplitRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

/// Mapping from a legacy label inventory onto the current leaves.
///
/// Split entries resolve one current technique per instance: the first rule
/// whose pattern (case-insensitive regex) matches the text wins, otherwise
/// the entry's default.
#[derive(Clone, Debug)]
pub struct SplitMap {
    entries: BTreeMap<String, CompiledEntry>,
}

#[derive(Clone, Debug)]
struct CompiledEntry {
    kind: SplitKind,
    targets: Vec<TechniqueId>,
    rules: Vec<(Regex, TechniqueId)>,
    default: Option<TechniqueId>,
}

impl SplitMap {
    /// Bundled map from the older 14-label inventory (underscored names) onto
    /// the bundled taxonomy.
    pub fn legacy(h: &LabelHierarchy) -> Result<Self> {
        SplitMap::parse(include_bytes!("../assets/legacy_split_map.json"), h)
    }

    pub fn parse(doc: &[u8], h: &LabelHierarchy) -> Result<Self> {
        let raw: BTreeMap<String, SplitEntry> =
            serde_json::from_slice(doc).map_err(Error::malformed)?;
        Self::from_entries(raw, h)
    }

    pub fn from_entries(raw: BTreeMap<String, SplitEntry>, h: &LabelHierarchy) -> Result<Self> {
        let leaf = |name: &str| -> Result<TechniqueId> {
            if h.is_leaf(name) {
                Ok(TechniqueId::from(name))
            } else {
                Err(Error::UnknownTechnique(name.to_owned()))
            }
        };
        let mut entries = BTreeMap::new();
        for (legacy, e) in raw {
            let targets = e.targets.iter().map(|t| leaf(t)).collect::<Result<Vec<_>>>()?;
            if targets.is_empty() {
                return Err(Error::Malformed(format!("split map entry `{legacy}` has no targets")));
            }
            let in_targets = |t: &TechniqueId| -> Result<()> {
                if targets.contains(t) {
                    Ok(())
                } else {
                    Err(Error::Malformed(format!(
                        "split map entry `{legacy}`: `{t}` is not among its targets"
                    )))
                }
            };
            let compiled = match e.kind {
                SplitKind::Rename => {
                    if targets.len() != 1 || !e.rules.is_empty() || e.default.is_some() {
                        return Err(Error::Malformed(format!(
                            "rename entry `{legacy}` must have exactly one target and no rules"
                        )));
                    }
                    CompiledEntry {
                        kind: SplitKind::Rename,
                        targets,
                        rules: Vec::new(),
                        default: None,
                    }
                }
                SplitKind::Split => {
                    let mut rules = Vec::with_capacity(e.rules.len());
                    for r in &e.rules {
                        let re = RegexBuilder::new(&r.pattern)
                            .case_insensitive(true)
                            .build()
                            .map_err(Error::malformed)?;
                        let target = leaf(&r.target)?;
                        in_targets(&target)?;
                        rules.push((re, target));
                    }
                    let default = e
                        .default
                        .as_deref()
                        .ok_or_else(|| Error::Malformed(format!("split entry `{legacy}` has no default target")))
                        .and_then(leaf)?;
                    in_targets(&default)?;
                    CompiledEntry {
                        kind: SplitKind::Split,
                        targets,
                        rules,
                        default: Some(default),
                    }
                }
            };
            entries.insert(legacy, compiled);
        }
        Ok(SplitMap { entries })
    }

    pub fn contains(&self, legacy: &str) -> bool {
        self.entries.contains_key(legacy)
    }

    /// Current technique for a legacy label on a given text, or `None` if
    /// the label is not mapped.
    fn resolve(&self, legacy: &str, text: &str) -> Option<TechniqueId> {
        let e = self.entries.get(legacy)?;
        Some(match e.kind {
            SplitKind::Rename => e.targets[0].clone(),
            SplitKind::Split => e
                .rules
                .iter()
                .find(|(re, _)| re.is_match(text))
                .map(|(_, t)| t)
                .or(e.default.as_ref())
                .expect("split entries have a default")
                .clone(),
        })
    }
}

/// Concatenates `current` and a relabelled copy of `legacy`.
pub fn merge_with_split(
    current: &Dataset,
    legacy: &Dataset,
    map: &SplitMap,
    h: &LabelHierarchy,
) -> Result<Dataset> {
    let mut instances = current.instances.clone();
    instances.reserve(legacy.len());
    for inst in &legacy.instances {
        let mut labels = LabelSet::new();
        for label in &inst.labels {
            match map.resolve(label.as_str(), &inst.text) {
                Some(t) => {
                    labels.insert(t);
                }
                None if h.is_leaf(label.as_str()) => {
                    labels.insert(label.clone());
                }
                None => {
                    return Err(Error::UnmappedLegacyLabel {
                        id: inst.id.clone(),
                        label: label.to_string(),
                    })
                }
            }
        }
        instances.push(Instance {
            labels,
            origin: Origin::Legacy,
            ..inst.clone()
        });
    }
    Dataset::new(format!("{}+{}[split-merged]", current.name, legacy.name), instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_legacy_map() {
        let h = LabelHierarchy::persuasion();
        let map = SplitMap::legacy(&h).unwrap();
        assert!(map.contains("Name_Calling,Labeling"));
        let cur = Dataset::new("cur", vec![Instance::new("c1", "x", labels(&["Smears"]))]).unwrap();
        let leg = Dataset::parse_unchecked(
            "leg",
            br#"[{"id":"l1","text":"Like the Nazis did","labels":["Bandwagon,Reductio_ad_hitlerum","Flag-Waving"]},
                 {"id":"l2","text":"Everyone agrees","labels":["Bandwagon,Reductio_ad_hitlerum"]},
                 {"id":"l3","text":"So they want open borders for all","labels":["Whataboutism,Straw_Men,Red_Herring"]}]"#,
        )
        .unwrap();
        let merged = merge_with_split(&cur, &leg, &map, &h).unwrap();
        let m = merged.label_map();
        assert_eq!(m["l1"], labels(&["Flag-waving", "Reductio ad Hitlerum"]));
        assert_eq!(m["l2"], labels(&["Bandwagon"]));
        assert_eq!(m["l3"], labels(&["Straw Man"]));
    }

    fn labels(items: &[&str]) -> LabelSet {
        items.iter().map(|s| TechniqueId::from(*s)).collect()
    }

    #[test]
    fn load_figure_one_style_record() {
        let h = LabelHierarchy::persuasion();
        let doc = br#"[{"id":"1","text":"Don't expect a broken government to fix itself",
            "labels":["Loaded Language","Slogans","Name calling/Labelling"]},
            {"id":"2","text":"nothing here","labels":[]}]"#;
        let ds = load_dataset("train", doc, &h).unwrap();
        assert_eq!(ds.instances[0].labels.len(), 3);
        assert_eq!(ds.instances[0].origin, Origin::Original);
        assert_eq!(ds.instances[0].language, "en");
        assert!(ds.instances[1].labels.is_empty());
    }

    #[test]
    fn load_errors() {
        let h = LabelHierarchy::persuasion();
        let bad = br#"[{"id":"x","text":"t","labels":["NotATechnique"]}]"#;
        match load_dataset("d", bad, &h) {
            Err(Error::UnknownLabel { id, label }) => {
                assert_eq!(id, "x");
                assert_eq!(label, "NotATechnique");
            }
            other => panic!("{other:?}"),
        }
        let dup = br#"[{"id":"x","text":"t","labels":[]},{"id":"x","text":"u","labels":[]}]"#;
        assert!(matches!(load_dataset("d", dup, &h), Err(Error::DuplicateId(_))));
        assert!(matches!(load_dataset("d", b"{", &h), Err(Error::Malformed(_))));
        let empty_text = br#"[{"id":"x","text":"","labels":[]}]"#;
        assert!(matches!(load_dataset("d", empty_text, &h), Err(Error::Malformed(_))));
        // inner nodes are not predictable labels
        let inner = br#"[{"id":"x","text":"t","labels":["Ethos"]}]"#;
        assert!(matches!(load_dataset("d", inner, &h), Err(Error::UnknownLabel { .. })));
    }

    #[test]
    fn counts() {
        let h = LabelHierarchy::persuasion();
        let empty = Dataset::new("e", vec![]).unwrap();
        assert!(label_counts(&empty, &h).values().all(|&c| c == 0));
        assert_eq!(label_counts(&empty, &h).len(), 20);

        let ds = Dataset::new(
            "d",
            vec![
                Instance::new("1", "a", labels(&["Smears"])),
                Instance::new("2", "b", labels(&["Smears"])),
            ],
        )
        .unwrap();
        let c = label_counts(&ds, &h);
        assert_eq!(c["Smears"], 2);
        assert_eq!(c.values().sum::<usize>(), 2);
    }

    #[test]
    fn cardinality() {
        assert!(matches!(
            cardinality_stats(&Dataset::new("e", vec![]).unwrap()),
            Err(Error::EmptyDataset)
        ));
        let one = Dataset::new("d", vec![Instance::new("1", "a", labels(&[]))]).unwrap();
        let s = cardinality_stats(&one).unwrap();
        assert_eq!((s.zero, s.one, s.multi), (1.0, 0.0, 0.0));

        let ds = Dataset::new(
            "d",
            vec![
                Instance::new("0", "a", labels(&[])),
                Instance::new("1", "a", labels(&["Smears"])),
                Instance::new("2", "a", labels(&["Smears", "Doubt"])),
                Instance::new("3", "a", labels(&["Smears", "Doubt", "Slogans"])),
            ],
        )
        .unwrap();
        let s = cardinality_stats(&ds).unwrap();
        assert_eq!((s.zero, s.one, s.multi), (0.25, 0.25, 0.5));
    }

    fn split_map(h: &LabelHierarchy) -> SplitMap {
        SplitMap::parse(
            br#"{
              "Bandwagon,Reductio ad hitlerum": {"kind":"split","targets":["Bandwagon","Reductio ad Hitlerum"],
                 "rules":[{"pattern":"hitler","target":"Reductio ad Hitlerum"}],"default":"Bandwagon"},
              "Loaded Language": {"kind":"rename","targets":["Loaded Language"]},
              "Whataboutism,Straw Men": {"kind":"split","targets":["Whataboutism","Straw Man"],
                 "rules":[{"pattern":"what about","target":"Whataboutism"}],"default":"Straw Man"}
            }"#,
            h,
        )
        .unwrap()
    }

    #[test]
    fn merge_relabels_legacy() {
        let h = LabelHierarchy::persuasion();
        let map = split_map(&h);
        let current = Dataset::new("cur", vec![Instance::new("c1", "x", labels(&["Smears"]))]).unwrap();
        let legacy = Dataset::new(
            "leg",
            vec![
                Instance::new("l1", "Just like Hitler did", labels(&["Bandwagon,Reductio ad hitlerum"])),
                Instance::new("l2", "everyone is doing it", labels(&["Bandwagon,Reductio ad hitlerum"])),
                Instance::new("l3", "so wicked", labels(&["Loaded Language", "Doubt"])),
            ],
        )
        .unwrap();
        let merged = merge_with_split(&current, &legacy, &map, &h).unwrap();
        assert_eq!(merged.len(), 4);
        assert_eq!(merged.instances[1].labels, labels(&["Reductio ad Hitlerum"]));
        assert_eq!(merged.instances[2].labels, labels(&["Bandwagon"]));
        assert_eq!(merged.instances[3].labels, labels(&["Loaded Language", "Doubt"]));
        assert!(merged.instances[1..].iter().all(|i| i.origin == Origin::Legacy));
        assert_eq!(merged.instances[0].origin, Origin::Original);
        assert!(merged.name.contains("cur") && merged.name.contains("leg"));
        merged.validate(&h).unwrap();
    }

    #[test]
    fn merge_errors() {
        let h = LabelHierarchy::persuasion();
        let map = split_map(&h);
        let current = Dataset::new("cur", vec![]).unwrap();
        let unmapped = Dataset::new("leg", vec![Instance::new("l", "t", labels(&["Mystery"]))]).unwrap();
        assert!(matches!(
            merge_with_split(&current, &unmapped, &map, &h),
            Err(Error::UnmappedLegacyLabel { .. })
        ));
        let fallback =
            Dataset::new("leg", vec![Instance::new("l", "t", labels(&["Whataboutism,Straw Men"]))]).unwrap();
        let merged = merge_with_split(&current, &fallback, &map, &h).unwrap();
        assert_eq!(merged.instances[0].labels, labels(&["Straw Man"]));
    }

    #[test]
    fn split_map_targets_must_be_leaves() {
        let h = LabelHierarchy::persuasion();
        let bad = br#"{"X": {"kind":"rename","targets":["Ethos"]}}"#;
        assert!(matches!(SplitMap::parse(bad, &h), Err(Error::UnknownTechnique(_))));
        let stray = br#"{"X": {"kind":"split","targets":["Smears"],"default":"Doubt"}}"#;
        assert!(SplitMap::parse(stray, &h).is_err());
        let no_default = br#"{"X": {"kind":"split","targets":["Smears","Doubt"],"rules":[{"pattern":"a","target":"Doubt"}]}}"#;
        assert!(matches!(SplitMap::parse(no_default, &h), Err(Error::Malformed(_))));
    }
}
