//! Command-line front end. Every subcommand reads and writes the JSON file
//! formats of the library and leaves a run manifest next to its outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augmentation::{self, AugmentationPlan, ExecuteError, Strategy};
use crate::dataset::{self, Dataset, SplitMap};
use crate::ensembling::mean_ensemble;
use crate::error::{Error, Result};
use crate::pipeline::{self, HashingSource, PrecomputedSource, RunManifest};
use crate::scoring::{self, BenefitSet, ScoreReport};
use crate::services::{
    ChatParaphraser, HttpTranslator, MockParaphraser, MockTranslator, ParaphraseProvider, ProviderConfig,
    Translator,
};
use crate::taxonomy::{LabelHierarchy, LabelSet};
use crate::thresholding::{self, Grid, PredictionMatrix, ThresholdProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Invalid input, contract violation or bad usage.
    Invalid = 1,
    /// File system or provider failure.
    Environment = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Parser, Debug)]
#[command(name = "persuakit", version, about = "Persuasion-technique scoring, thresholds, ensembles and augmentation")]
struct Cli {
    /// Suppress log output on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    /// Seed for randomized fixture generation (mock prediction source).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Where to write the run manifest (default: `<out>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct HierarchyArg {
    /// Hierarchy file; the bundled persuasion taxonomy when omitted.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hierarchical and per-class scores of predicted labels against gold.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
        /// Report file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-technique thresholds maximizing flat F1 on validation predictions.
    TuneThresholds {
        /// Prediction matrix (logits are passed through the sigmoid).
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
        #[arg(long, default_value_t = 0.01)]
        lo: f64,
        #[arg(long, default_value_t = 0.70)]
        hi: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Unweighted mean of member probability matrices.
    Ensemble {
        #[arg(long = "member", required = true)]
        members: Vec<PathBuf>,
        #[command(flatten)]
        h: HierarchyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ensemble the members and apply a threshold profile.
    Predict {
        #[arg(long = "member", required = true)]
        members: Vec<PathBuf>,
        #[arg(long)]
        profile: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a paraphrase augmentation plan.
    PlanAugment {
        /// para_n, para_benef or para_bal.
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
        /// Paraphrases per instance (para_n).
        #[arg(long)]
        n: Option<usize>,
        /// Paraphrases per benefiting technique (para_benef).
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Benefit set file: a JSON list of techniques or {"techniques": [..], "epsilon": ..}.
        #[arg(long)]
        benefit: Option<PathBuf>,
        /// Score report before augmentation (derives the benefit set with --after).
        #[arg(long)]
        before: Option<PathBuf>,
        #[arg(long)]
        after: Option<PathBuf>,
        #[arg(long, default_value_t = scoring::DEFAULT_EPSILON)]
        epsilon: f64,
        /// Per-technique target count (para_bal).
        #[arg(long, default_value_t = 1500)]
        target: usize,
        /// Paraphrases per balancing request (para_bal).
        #[arg(long, default_value_t = 5)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the paraphrases of a plan and write the augmented dataset.
    ExecutePlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
        /// Use the offline mock provider.
        #[arg(long)]
        mock: bool,
        /// Live provider configuration (key from PERSUAKIT_LLM_KEY).
        #[arg(long)]
        provider_config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate a dataset to English and predict labels on the translations.
    TranslatePredict {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
        #[arg(long)]
        profile: PathBuf,
        /// Precomputed member matrices over the translated texts.
        #[arg(long = "member")]
        members: Vec<PathBuf>,
        /// Mock translator, and a hashing prediction source when no members are given.
        #[arg(long)]
        mock: bool,
        /// Number of mock ensemble members.
        #[arg(long, default_value_t = 3)]
        mock_members: usize,
        /// Live translator configuration (key from PERSUAKIT_TRANSLATE_KEY).
        #[arg(long)]
        translator_config: Option<PathBuf>,
        #[arg(long, default_value = "en")]
        target_lang: String,
        /// Also write the translated dataset here.
        #[arg(long)]
        translated_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label counts and label-cardinality fractions of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        h: HierarchyArg,
    },
    /// Check files against the hierarchy and each other.
    Validate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Requires --dataset.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        h: HierarchyArg,
    },
    /// Merge a legacy dataset into the current one, relabelling through a split map.
    MergeLegacy {
        #[arg(long)]
        current: PathBuf,
        #[arg(long)]
        legacy: PathBuf,
        /// Split map; the bundled map for the older label inventory when omitted.
        #[arg(long)]
        split_map: Option<PathBuf>,
        #[command(flatten)]
        h: HierarchyArg,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Score { .. } => "score",
            Command::TuneThresholds { .. } => "tune-thresholds",
            Command::Ensemble { .. } => "ensemble",
            Command::Predict { .. } => "predict",
            Command::PlanAugment { .. } => "plan-augment",
            Command::ExecutePlan { .. } => "execute-plan",
            Command::TranslatePredict { .. } => "translate-predict",
            Command::Stats { .. } => "stats",
            Command::Validate { .. } => "validate",
            Command::MergeLegacy { .. } => "merge-legacy",
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            Command::Score { out, .. } => out.as_deref(),
            Command::TuneThresholds { out, .. }
            | Command::Ensemble { out, .. }
            | Command::Predict { out, .. }
            | Command::PlanAugment { out, .. }
            | Command::ExecutePlan { out, .. }
            | Command::TranslatePredict { out, .. }
            | Command::MergeLegacy { out, .. } => Some(out),
            Command::Stats { .. } | Command::Validate { .. } => None,
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitStatus::Success,
                _ => ExitStatus::Invalid,
            };
        }
    };

    let _ = env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Off
        } else {
            log::LevelFilter::Info
        })
        .parse_env("PERSUAKIT_LOG")
        .target(env_logger::Target::Stderr)
        .try_init();

    let mut manifest = RunManifest::new(cli.command.name());
    manifest.param("seed", cli.seed);
    let manifest_path = cli
        .manifest
        .clone()
        .or_else(|| cli.command.out().map(|o| with_suffix(o, ".manifest.json")));

    let result = run(cli.command, cli.seed, &mut manifest);
    let status = match result {
        Ok(()) => ExitStatus::Success,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            if e.is_environmental() {
                ExitStatus::Environment
            } else {
                ExitStatus::Invalid
            }
        }
        Err(Failure::Provider(msg)) => {
            eprintln!("error: {msg}");
            ExitStatus::Environment
        }
    };
    if let Some(path) = manifest_path {
        manifest.param("exit_code", status.code());
        if let Err(e) = manifest.save(&path) {
            eprintln!("error: {e}");
            return ExitStatus::Environment;
        }
    }
    status
}

enum Failure {
    Core(Error),
    Provider(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn hierarchy(arg: &HierarchyArg, m: &mut RunManifest) -> Result<LabelHierarchy> {
    match &arg.hierarchy {
        Some(p) => {
            m.param("hierarchy", p);
            LabelHierarchy::parse(&m.read(p)?)
        }
        None => {
            m.param("hierarchy", "builtin:persuasion");
            Ok(LabelHierarchy::persuasion())
        }
    }
}

fn load_dataset(path: &Path, h: &LabelHierarchy, m: &mut RunManifest) -> Result<Dataset> {
    dataset::load_dataset(dataset_name(path), &m.read(path)?, h)
}

fn load_members(paths: &[PathBuf], h: &LabelHierarchy, m: &mut RunManifest) -> Result<Vec<PredictionMatrix>> {
    paths
        .iter()
        .map(|p| {
            let matrix = PredictionMatrix::parse(&m.read(p)?)?;
            matrix.validate_against(h)?;
            if matrix.kind() == thresholding::MatrixKind::Logits {
                log::info!("{}: applying sigmoid to logits", p.display());
            }
            pipeline::to_probabilities(matrix)
        })
        .collect()
}

fn emit(out: Option<&Path>, json: &str, m: &mut RunManifest) -> Result<()> {
    match out {
        Some(p) => m.write(p, json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(command: Command, seed: u64, m: &mut RunManifest) -> std::result::Result<(), Failure> {
    match command {
        Command::Score { gold, pred, h, out } => {
            let h = hierarchy(&h, m)?;
            let gold = pipeline::parse_label_file(&m.read(&gold)?)?;
            let pred = pipeline::parse_label_file(&m.read(&pred)?)?;
            let report = scoring::hierarchical_prf(&gold, &pred, &h)?;
            log::info!(
                "hP={:.4} hR={:.4} hF1={:.4}",
                report.h_precision,
                report.h_recall,
                report.h_f1
            );
            emit(out.as_deref(), &report.to_json(), m)?;
        }
        Command::TuneThresholds {
            pred,
            gold,
            h,
            lo,
            hi,
            step,
            out,
        } => {
            let h = hierarchy(&h, m)?;
            let matrix = load_members(&[pred], &h, m)?.remove(0);
            let gold = pipeline::parse_label_file(&m.read(&gold)?)?;
            let grid = Grid { lo, hi, step };
            m.param("grid", grid);
            let profile = thresholding::tune_thresholds(&matrix, &gold, grid, &h)?;
            m.write(&out, &profile.to_json())?;
        }
        Command::Ensemble { members, h, out } => {
            let h = hierarchy(&h, m)?;
            let members = load_members(&members, &h, m)?;
            m.param("members", members.len());
            m.write(&out, &mean_ensemble(&members)?.to_json())?;
        }
        Command::Predict {
            members,
            profile,
            h,
            out,
        } => {
            let h = hierarchy(&h, m)?;
            let members = load_members(&members, &h, m)?;
            let profile = ThresholdProfile::parse(&m.read(&profile)?)?;
            let labels = pipeline::predict_labels(&members, &profile, &h)?;
            m.write(&out, &pipeline::label_file_json(&labels))?;
        }
        Command::PlanAugment {
            strategy,
            dataset,
            h,
            n,
            m: per_technique,
            benefit,
            before,
            after,
            epsilon,
            target,
            batch,
            out,
        } => {
            let h = hierarchy(&h, m)?;
            let strategy: Strategy = strategy.parse()?;
            let ds = load_dataset(&dataset, &h, m)?;
            m.param("strategy", strategy.as_str());
            let plan = match strategy {
                Strategy::ParaN => {
                    let n = n.ok_or_else(|| Error::InvalidArgument("para_n needs --n".into()))?;
                    m.param("n", n);
                    augmentation::plan_para_n(&ds, n, &h)?
                }
                Strategy::ParaBenef => {
                    let b = benefit_set(benefit, before, after, epsilon, &h, m)?;
                    m.param("m", per_technique);
                    m.param("benefit_set", &b);
                    augmentation::plan_para_benef(&ds, &b, per_technique, &h)?
                }
                Strategy::ParaBal => {
                    m.param("target", target);
                    m.param("batch", batch);
                    augmentation::plan_para_bal(&ds, target, batch, &h)?
                }
            };
            if !plan.unsatisfiable.is_empty() {
                log::warn!("{} technique(s) cannot reach the target", plan.unsatisfiable.len());
            }
            log::info!(
                "{} requests, {} paraphrases, projected size {}",
                plan.requests.len(),
                plan.paraphrase_total(),
                plan.projected_size(ds.len())
            );
            m.write(&out, &plan.to_json())?;
        }
        Command::ExecutePlan {
            plan,
            dataset,
            h,
            mock,
            provider_config,
            concurrency,
            out,
        } => {
            let h = hierarchy(&h, m)?;
            let plan = AugmentationPlan::parse(&m.read(&plan)?)?;
            let ds = load_dataset(&dataset, &h, m)?;
            plan.validate_for(&ds, &h)?;
            let provider: Box<dyn ParaphraseProvider> = match (mock, provider_config) {
                (true, _) => Box::new(MockParaphraser),
                (false, Some(cfg)) => {
                    let cfg = ProviderConfig::parse(&m.read(&cfg)?).map_err(Error::from)?;
                    m.param("provider", &cfg);
                    Box::new(ChatParaphraser::from_env(cfg).map_err(Error::from)?)
                }
                (false, None) => {
                    return Err(Error::InvalidArgument("pass --mock or --provider-config".into()).into())
                }
            };
            m.param("mock", mock);
            m.param("concurrency", concurrency);
            match augmentation::execute_plan(&plan, &ds, provider.as_ref(), concurrency) {
                Ok(augmented) => m.write(&out, &augmented.to_json())?,
                Err(ExecuteError::Invalid(e)) => return Err(e.into()),
                Err(ExecuteError::Provider {
                    request,
                    source_id,
                    partial,
                    source,
                }) => {
                    let partial_path = with_suffix(&out, ".partial.json");
                    m.write(&partial_path, &partial.to_json())?;
                    return Err(Failure::Provider(format!(
                        "request {request} (source `{source_id}`) failed: {source}; partial output in {}",
                        partial_path.display()
                    )));
                }
            }
        }
        Command::TranslatePredict {
            dataset,
            h,
            profile,
            members,
            mock,
            mock_members,
            translator_config,
            target_lang,
            translated_out,
            out,
        } => {
            let h = hierarchy(&h, m)?;
            let ds = load_dataset(&dataset, &h, m)?;
            let profile = ThresholdProfile::parse(&m.read(&profile)?)?;
            let translator: Box<dyn Translator> = match (mock, translator_config) {
                (true, _) => Box::new(MockTranslator),
                (false, Some(cfg)) => {
                    let cfg = ProviderConfig::parse(&m.read(&cfg)?).map_err(Error::from)?;
                    m.param("translator", &cfg);
                    Box::new(HttpTranslator::from_env(cfg).map_err(Error::from)?)
                }
                (false, None) => {
                    return Err(Error::InvalidArgument("pass --mock or --translator-config".into()).into())
                }
            };
            m.param("target_lang", &target_lang);
            let outcome = if !members.is_empty() {
                let members = load_members(&members, &h, m)?;
                let source = PrecomputedSource { members };
                pipeline::zero_shot_predict(&ds, translator.as_ref(), &source, &profile, &h, &target_lang)?
            } else if mock {
                m.param("mock_members", mock_members);
                let source = HashingSource {
                    technique_order: h.leaf_order().to_vec(),
                    members: mock_members,
                    seed,
                };
                pipeline::zero_shot_predict(&ds, translator.as_ref(), &source, &profile, &h, &target_lang)?
            } else {
                return Err(Error::InvalidArgument("pass --member files or --mock".into()).into());
            };
            if let Some(p) = translated_out {
                m.write(&p, &outcome.translated.to_json())?;
            }
            log::info!(
                "{} instances, {} translation failures",
                outcome.labels.len(),
                outcome.failures.len()
            );
            m.failures = outcome.failures;
            m.write(&out, &pipeline::label_file_json(&outcome.labels))?;
        }
        Command::Stats { dataset, h } => {
            let h = hierarchy(&h, m)?;
            let ds = load_dataset(&dataset, &h, m)?;
            #[derive(Serialize)]
            struct Stats {
                size: usize,
                label_counts: std::collections::BTreeMap<crate::taxonomy::TechniqueId, usize>,
                cardinality: Option<dataset::CardinalityStats>,
            }
            let stats = Stats {
                size: ds.len(),
                label_counts: dataset::label_counts(&ds, &h),
                cardinality: dataset::cardinality_stats(&ds).ok(),
            };
            emit(None, &serde_json::to_string_pretty(&stats).expect("stats serialize"), m)?;
        }
        Command::Validate {
            dataset,
            matrix,
            profile,
            plan,
            h,
        } => {
            let h = hierarchy(&h, m)?;
            if dataset.is_none() && matrix.is_none() && profile.is_none() && plan.is_none() {
                return Err(Error::InvalidArgument("nothing to validate".into()).into());
            }
            let ds = dataset.as_deref().map(|p| load_dataset(p, &h, m)).transpose()?;
            if let Some(p) = &matrix {
                PredictionMatrix::parse(&m.read(p)?)?.validate_against(&h)?;
            }
            if let Some(p) = &profile {
                ThresholdProfile::parse(&m.read(p)?)?.validate_against(&h)?;
            }
            if let Some(p) = &plan {
                let ds = ds
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("--plan needs --dataset".into()))?;
                AugmentationPlan::parse(&m.read(p)?)?.validate_for(ds, &h)?;
            }
            log::info!("ok");
        }
        Command::MergeLegacy {
            current,
            legacy,
            split_map,
            h,
            out,
        } => {
            let h = hierarchy(&h, m)?;
            let cur = load_dataset(&current, &h, m)?;
            let leg = Dataset::parse_unchecked(dataset_name(&legacy), &m.read(&legacy)?)?;
            let map = match split_map {
                Some(p) => SplitMap::parse(&m.read(&p)?, &h)?,
                None => {
                    m.param("split_map", "builtin:legacy");
                    SplitMap::legacy(&h)?
                }
            };
            let merged = dataset::merge_with_split(&cur, &leg, &map, &h)?;
            log::info!("{} + {} = {} instances", cur.len(), leg.len(), merged.len());
            m.write(&out, &merged.to_json())?;
        }
    }
    Ok(())
}

fn benefit_set(
    file: Option<PathBuf>,
    before: Option<PathBuf>,
    after: Option<PathBuf>,
    epsilon: f64,
    h: &LabelHierarchy,
    m: &mut RunManifest,
) -> Result<BenefitSet> {
    let b = match (file, before, after) {
        (Some(f), None, None) => {
            let bytes = m.read(&f)?;
            match serde_json::from_slice::<LabelSet>(&bytes) {
                Ok(techniques) => BenefitSet { techniques, epsilon },
                Err(_) => serde_json::from_slice::<BenefitSet>(&bytes).map_err(Error::malformed)?,
            }
        }
        (None, Some(before), Some(after)) => {
            let before = ScoreReport::parse(&m.read(&before)?)?;
            let after = ScoreReport::parse(&m.read(&after)?)?;
            scoring::benefit_set(&scoring::f1_delta(&after, &before)?, epsilon)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "para_benef needs either --benefit or both --before and --after".into(),
            ))
        }
    };
    if let Some(t) = b.techniques.iter().find(|t| !h.is_leaf(t.as_str())) {
        return Err(Error::UnknownTechnique(t.to_string()));
    }
    Ok(b)
}
