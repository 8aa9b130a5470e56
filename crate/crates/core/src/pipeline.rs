//! End-to-end flows built from the other modules, plus run manifests and
//! the submission (label file) format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::ensembling::mean_ensemble;
use crate::error::{Error, Result};
use crate::scoring::LabelMap;
use crate::services::Translator;
use crate::taxonomy::{LabelHierarchy, LabelSet, TechniqueId};
use crate::thresholding::{apply_thresholds, sigmoid_matrix, MatrixKind, PredictionMatrix, ThresholdProfile};

/// Probabilities as-is; logits go through the sigmoid.
pub fn to_probabilities(m: PredictionMatrix) -> Result<PredictionMatrix> {
    match m.kind() {
        MatrixKind::Probabilities => Ok(m),
        MatrixKind::Logits => sigmoid_matrix(&m),
    }
}

/// Threshold the mean of the member probabilities.
pub fn predict_labels(
    members: &[PredictionMatrix],
    profile: &ThresholdProfile,
    h: &LabelHierarchy,
) -> Result<LabelMap> {
    for m in members {
        m.validate_against(h)?;
    }
    profile.validate_against(h)?;
    apply_thresholds(&mean_ensemble(members)?, profile)
}

/// Something that scores English texts, one matrix per ensemble member.
pub trait PredictionSource: Sync {
    fn predict(&self, texts: &[(String, String)]) -> Result<Vec<PredictionMatrix>>;
}

/// Matrices computed ahead of time (e.g. by the trainer) over the
/// translated texts; rows are looked up by id.
pub struct PrecomputedSource {
    pub members: Vec<PredictionMatrix>,
}

impl PredictionSource for PrecomputedSource {
    fn predict(&self, texts: &[(String, String)]) -> Result<Vec<PredictionMatrix>> {
        self.members
            .iter()
            .map(|m| {
                let idx = m.row_index();
                let rows = texts
                    .iter()
                    .map(|(id, _)| {
                        idx.get(id.as_str())
                            .map(|&r| (id.clone(), m.row(r).to_vec()))
                            .ok_or_else(|| Error::IdMismatch(format!("no precomputed row for `{id}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                PredictionMatrix::new(m.kind(), m.technique_order().to_vec(), rows)
            })
            .collect()
    }
}

/// Deterministic stand-in for trained models: each logit is derived from a
/// hash of (seed, member, technique, text). Useful for offline runs only.
pub struct HashingSource {
    pub technique_order: Vec<TechniqueId>,
    pub members: usize,
    pub seed: u64,
}

impl HashingSource {
    pub fn logit(&self, member: usize, technique: &TechniqueId, text: &str) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((member as u64).to_le_bytes());
        h.update(technique.as_str().as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        let d = h.finalize();
        let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        // map to [-4, 4)
        (x >> 11) as f64 / (1u64 << 53) as f64 * 8.0 - 4.0
    }
}

impl PredictionSource for HashingSource {
    fn predict(&self, texts: &[(String, String)]) -> Result<Vec<PredictionMatrix>> {
        (0..self.members.max(1))
            .map(|k| {
                let rows = texts
                    .iter()
                    .map(|(id, text)| {
                        let values = self.technique_order.iter().map(|t| self.logit(k, t, text)).collect();
                        (id.clone(), values)
                    })
                    .collect();
                PredictionMatrix::new(MatrixKind::Logits, self.technique_order.clone(), rows)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct ZeroShotOutcome {
    /// One entry per input instance; failed instances map to an empty set.
    pub labels: LabelMap,
    pub translated: Dataset,
    pub failures: Vec<InstanceFailure>,
}

/// Translate every text into `target_lang`, then predict on the
/// translations. A failed translation is recorded and does not stop the run.
pub fn zero_shot_predict(
    ds: &Dataset,
    translator: &dyn Translator,
    source: &dyn PredictionSource,
    profile: &ThresholdProfile,
    h: &LabelHierarchy,
    target_lang: &str,
) -> Result<ZeroShotOutcome> {
    let results: Vec<_> = ds
        .instances
        .par_iter()
        .map(|inst| {
            let src = (inst.language != "auto").then_some(inst.language.as_str());
            translator.translate(&inst.text, src, target_lang)
        })
        .collect();

    let mut failures = Vec::new();
    let mut translated = Vec::new();
    let mut texts = Vec::new();
    for (inst, res) in ds.instances.iter().zip(results) {
        match res {
            Ok(text) => {
                texts.push((inst.id.clone(), text.clone()));
                let mut t = inst.clone();
                t.text = text;
                t.language = target_lang.to_owned();
                translated.push(t);
            }
            Err(e) => {
                log::warn!("translation of `{}` failed: {e}", inst.id);
                failures.push(InstanceFailure {
                    id: inst.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    let mut labels: LabelMap = ds.instances.iter().map(|i| (i.id.clone(), LabelSet::new())).collect();
    if !texts.is_empty() {
        let members = source
            .predict(&texts)?
            .into_iter()
            .map(to_probabilities)
            .collect::<Result<Vec<_>>>()?;
        labels.extend(predict_labels(&members, profile, h)?);
    }
    Ok(ZeroShotOutcome {
        labels,
        translated: Dataset::new(format!("{}[{target_lang}]", ds.name), translated)?,
        failures,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    id: String,
    labels: LabelSet,
    // dataset files double as gold label files
    #[serde(default, skip_serializing)]
    #[allow(dead_code)]
    text: Option<String>,
    #[serde(default, skip_serializing)]
    #[allow(dead_code)]
    origin: Option<Value>,
    #[serde(default, skip_serializing)]
    #[allow(dead_code)]
    language: Option<String>,
}

/// Reads a submission-format label file (`[{"id", "labels"}]`). Dataset
/// files are accepted too; their extra fields are ignored.
pub fn parse_label_file(doc: &[u8]) -> Result<LabelMap> {
    let records: Vec<LabelRecord> = serde_json::from_slice(doc).map_err(Error::malformed)?;
    let mut out = LabelMap::new();
    for r in records {
        if out.insert(r.id.clone(), r.labels).is_some() {
            return Err(Error::DuplicateId(r.id));
        }
    }
    Ok(out)
}

pub fn label_file_json(labels: &LabelMap) -> String {
    let records: Vec<LabelRecord> = labels
        .iter()
        .map(|(id, l)| LabelRecord {
            id: id.clone(),
            labels: l.clone(),
            text: None,
            origin: None,
            language: None,
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("labels serialize")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        FileDigest {
            path: path.to_owned(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

/// Audit record written next to every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub parameters: BTreeMap<String, Value>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<InstanceFailure>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            command: command.into(),
            inputs: Vec::new(),
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters
            .insert(key.to_owned(), serde_json::to_value(value).expect("parameter serializes"));
    }

    /// Reads a file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.inputs.push(FileDigest::of(path, &bytes));
        Ok(bytes)
    }

    /// Writes a file and records its digest.
    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        let mut bytes = contents.as_bytes().to_vec();
        if !bytes.ends_with(b"\n") {
            bytes.push(b'\n');
        }
        std::fs::write(path, &bytes).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.outputs.push(FileDigest::of(path, &bytes));
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}
