//! Paraphrase augmentation: deterministic planning and plan execution.
//!
//! Three planners are provided:
//!
//! * [`plan_para_n`]: `n` paraphrases of every instance, carrying its labels.
//! * [`plan_para_benef`]: for an instance with labels `T` and a benefit set
//!   `B`, one request of `m` paraphrases per technique in `T ∩ B`, each
//!   labelled `T ∩ B`.
//! * [`plan_para_bal`]: greedy balancing. The rarest technique (by live
//!   projected count) is processed first and receives fixed-size batches,
//!   round-robin over its source instances, until it reaches the target.
//!   Paraphrases carry the full label set of their source, so co-occurring
//!   techniques grow too and are accounted for before they are processed.
//!
//! Planning never touches the network; [`execute_plan`] is the only step that
//! calls a [`ParaphraseProvider`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{label_counts, Dataset, Instance, Origin};
use crate::error::{Error, Result};
use crate::scoring::BenefitSet;
use crate::services::{ParaphraseProvider, ServiceError};
use crate::taxonomy::{LabelHierarchy, LabelSet, TechniqueId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ParaN,
    ParaBenef,
    ParaBal,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ParaN => "para_n",
            Strategy::ParaBenef => "para_benef",
            Strategy::ParaBal => "para_bal",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "para_n" => Ok(Strategy::ParaN),
            "para_benef" => Ok(Strategy::ParaBenef),
            "para_bal" => Ok(Strategy::ParaBal),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseRequest {
    pub source_id: String,
    pub count: usize,
    #[serde(rename = "labels")]
    pub assigned_labels: LabelSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPlan {
    pub strategy: Strategy,
    pub base: String,
    pub requests: Vec<ParaphraseRequest>,
    pub projected_counts: BTreeMap<TechniqueId, usize>,
    /// Techniques below target with no source instance to paraphrase.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsatisfiable: Vec<TechniqueId>,
}

impl AugmentationPlan {
    fn new(strategy: Strategy, ds: &Dataset, requests: Vec<ParaphraseRequest>, h: &LabelHierarchy) -> Self {
        let projected_counts = project(ds, &requests, h);
        AugmentationPlan {
            strategy,
            base: ds.name.clone(),
            requests,
            projected_counts,
            unsatisfiable: Vec::new(),
        }
    }

    pub fn parse(doc: &[u8]) -> Result<Self> {
        serde_json::from_slice(doc).map_err(Error::malformed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn paraphrase_total(&self) -> usize {
        self.requests.iter().map(|r| r.count).sum()
    }

    pub fn projected_size(&self, base_len: usize) -> usize {
        base_len + self.paraphrase_total()
    }

    /// Checks a (possibly hand-edited) plan against the dataset it targets.
    pub fn validate_for(&self, ds: &Dataset, h: &LabelHierarchy) -> Result<()> {
        let by_id: HashMap<&str, &Instance> = ds.instances.iter().map(|i| (i.id.as_str(), i)).collect();
        for r in &self.requests {
            let src = by_id
                .get(r.source_id.as_str())
                .ok_or_else(|| Error::IdMismatch(format!("plan references unknown source `{}`", r.source_id)))?;
            if r.count == 0 {
                return Err(Error::Malformed(format!("request for `{}` has count 0", r.source_id)));
            }
            if let Some(l) = r.assigned_labels.iter().find(|l| !h.is_leaf(l.as_str())) {
                return Err(Error::UnknownLabel {
                    id: r.source_id.clone(),
                    label: l.to_string(),
                });
            }
            if !r.assigned_labels.is_subset(&src.labels) {
                return Err(Error::Malformed(format!(
                    "request for `{}` assigns labels its source does not carry",
                    r.source_id
                )));
            }
        }
        if project(ds, &self.requests, h) != self.projected_counts {
            return Err(Error::Malformed("projected_counts do not match the requests".into()));
        }
        Ok(())
    }
}

fn project(ds: &Dataset, requests: &[ParaphraseRequest], h: &LabelHierarchy) -> BTreeMap<TechniqueId, usize> {
    let mut counts = label_counts(ds, h);
    for r in requests {
        for l in &r.assigned_labels {
            *counts.entry(l.clone()).or_insert(0) += r.count;
        }
    }
    counts
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidArgument(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

pub fn plan_para_n(ds: &Dataset, n: usize, h: &LabelHierarchy) -> Result<AugmentationPlan> {
    positive("n", n)?;
    let requests = ds
        .instances
        .iter()
        .map(|i| ParaphraseRequest {
            source_id: i.id.clone(),
            count: n,
            assigned_labels: i.labels.clone(),
        })
        .collect();
    Ok(AugmentationPlan::new(Strategy::ParaN, ds, requests, h))
}

pub fn plan_para_benef(ds: &Dataset, b: &BenefitSet, m: usize, h: &LabelHierarchy) -> Result<AugmentationPlan> {
    positive("m", m)?;
    let mut requests = Vec::new();
    for inst in &ds.instances {
        let shared: LabelSet = inst.labels.intersection(&b.techniques).cloned().collect();
        for _ in &shared {
            requests.push(ParaphraseRequest {
                source_id: inst.id.clone(),
                count: m,
                assigned_labels: shared.clone(),
            });
        }
    }
    Ok(AugmentationPlan::new(Strategy::ParaBenef, ds, requests, h))
}

pub fn plan_para_bal(ds: &Dataset, target: usize, batch: usize, h: &LabelHierarchy) -> Result<AugmentationPlan> {
    positive("target", target)?;
    positive("batch", batch)?;
    let mut counts = label_counts(ds, h);

    let mut sources: BTreeMap<&TechniqueId, Vec<&Instance>> = BTreeMap::new();
    for inst in &ds.instances {
        for l in &inst.labels {
            sources.entry(l).or_default().push(inst);
        }
    }
    for list in sources.values_mut() {
        list.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let mut pending: BTreeSet<TechniqueId> = counts.keys().cloned().collect();
    let mut requests = Vec::new();
    let mut unsatisfiable = Vec::new();
    while let Some(t) = pending
        .iter()
        .min_by(|a, b| counts[*a].cmp(&counts[*b]).then_with(|| a.cmp(b)))
        .cloned()
    {
        pending.remove(&t);
        if counts[&t] >= target {
            continue;
        }
        let Some(pool) = sources.get(&t) else {
            log::warn!("`{t}` has no source instances; cannot reach {target}");
            unsatisfiable.push(t);
            continue;
        };
        for inst in pool.iter().cycle() {
            if counts[&t] >= target {
                break;
            }
            for l in &inst.labels {
                *counts.get_mut(l).expect("label counted") += batch;
            }
            requests.push(ParaphraseRequest {
                source_id: inst.id.clone(),
                count: batch,
                assigned_labels: inst.labels.clone(),
            });
        }
    }

    let mut plan = AugmentationPlan::new(Strategy::ParaBal, ds, requests, h);
    debug_assert_eq!(plan.projected_counts, counts);
    plan.unsatisfiable = unsatisfiable;
    Ok(plan)
}

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error(transparent)]
    Invalid(#[from] Error),

    /// A provider call failed; `partial` holds the input plus every
    /// paraphrase generated for requests before `request`.
    #[error("request {request} (source `{source_id}`) failed: {source}")]
    Provider {
        request: usize,
        source_id: String,
        partial: Box<Dataset>,
        #[source]
        source: ServiceError,
    },
}

/// Runs `plan` against `provider`, appending generated instances after the
/// originals in plan order. Paraphrase ids are `{source}-p{k}`, with `k`
/// counting up across all requests for the same source.
pub fn execute_plan(
    plan: &AugmentationPlan,
    ds: &Dataset,
    provider: &dyn ParaphraseProvider,
    concurrency: usize,
) -> std::result::Result<Dataset, ExecuteError> {
    let by_id: HashMap<&str, &Instance> = ds.instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut taken: HashSet<String> = ds.instances.iter().map(|i| i.id.clone()).collect();
    let mut next_k: HashMap<&str, usize> = HashMap::new();
    let mut slots = Vec::with_capacity(plan.requests.len());
    for r in &plan.requests {
        let src = by_id
            .get(r.source_id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("plan references unknown source `{}`", r.source_id)))?;
        if r.count == 0 {
            return Err(Error::Malformed(format!("request for `{}` has count 0", r.source_id)).into());
        }
        let k = next_k.entry(r.source_id.as_str()).or_insert(0);
        let mut ids = Vec::with_capacity(r.count);
        for _ in 0..r.count {
            *k += 1;
            let id = format!("{}-p{}", r.source_id, k);
            if !taken.insert(id.clone()) {
                return Err(Error::DuplicateId(id).into());
            }
            ids.push(id);
        }
        slots.push((*src, ids));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let texts: Vec<std::result::Result<Vec<String>, ServiceError>> = pool.install(|| {
        plan.requests
            .par_iter()
            .zip(&slots)
            .map(|(r, (src, _))| {
                let out = provider.paraphrase(&src.text, r.count)?;
                if out.len() != r.count {
                    return Err(ServiceError::Malformed(format!(
                        "asked for {} paraphrases, got {}",
                        r.count,
                        out.len()
                    )));
                }
                Ok(out)
            })
            .collect()
    });

    let mut instances = ds.instances.clone();
    instances.reserve(plan.paraphrase_total());
    let name = format!("{}+{}", ds.name, plan.strategy.as_str());
    for (i, ((r, (src, ids)), result)) in plan.requests.iter().zip(&slots).zip(texts).enumerate() {
        match result {
            Ok(texts) => {
                for (id, text) in ids.iter().zip(texts) {
                    instances.push(Instance {
                        id: id.clone(),
                        text,
                        labels: r.assigned_labels.clone(),
                        origin: Origin::Paraphrase,
                        language: src.language.clone(),
                    });
                }
            }
            Err(source) => {
                return Err(ExecuteError::Provider {
                    request: i,
                    source_id: r.source_id.clone(),
                    partial: Box::new(Dataset {
                        name: format!("{name}[partial]"),
                        instances,
                    }),
                    source,
                })
            }
        }
    }
    Ok(Dataset::new(name, instances)?)
}
