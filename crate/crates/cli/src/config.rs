//! Run configuration: `section.key = value` lines plus `--set` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use orsm_core::eval::{ClassMetric, ClassifierHyper, ClassifierMode};
use orsm_core::orsm::SapConfig;
use orsm_core::{AisConfig, CdSchedule, InferenceMode, TrainHyper};

/// A configuration problem; reported with exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Every recognised key with its default (`None`: no default).
const KEYS: &[(&str, Option<&str>)] = &[
    ("paths.corpus", None),
    ("paths.vocab", None),
    ("paths.labels", None),
    ("paths.splits", None),
    ("paths.model", None),
    ("paths.init_model", None),
    ("paths.ais_cache", None),
    ("paths.features", None),
    ("paths.output_dir", Some("out")),
    ("ingest.docword", None),
    ("ingest.vocab", None),
    ("ingest.labels", None),
    ("ingest.vocab_size", Some("0")),
    ("ingest.valid_fraction", Some("0.0")),
    ("ingest.test_fraction", Some("0.0")),
    ("model.hidden", Some("128")),
    ("model.softmaxes", Some("100")),
    ("model.seed", None),
    ("train.learning_rate", Some("0.001")),
    ("train.decay_horizon", Some("10000")),
    ("train.weight_decay", Some("0.0001")),
    ("train.sparsity_target", Some("0.1")),
    ("train.sparsity_weight", Some("0.01")),
    ("train.minibatch", Some("128")),
    ("train.cd_start", Some("1")),
    ("train.cd_max", Some("20")),
    ("train.cd_every", Some("10000")),
    ("train.epochs", Some("50")),
    ("train.sap_epochs", Some("10")),
    ("train.chains", Some("1")),
    ("train.mf_steps", Some("5")),
    ("train.gibbs_steps", Some("20")),
    ("ais.betas", Some("1000")),
    ("ais.chains", Some("128")),
    ("ais.sweeps", Some("1")),
    ("eval.mode", Some("mean_field")),
    ("eval.split", Some("test")),
    ("eval.metric", Some("accuracy")),
    ("eval.classifier", Some("multinomial")),
    ("eval.classifier_learning_rate", Some("1.0")),
    ("eval.l2", Some("0.0001")),
    ("eval.max_iters", Some("2000")),
];

fn default_of(key: &str) -> Option<Option<&'static str>> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d)
}

/// Parses `section.key = value` lines. `#` starts a comment.
pub fn parse_lines(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = parse_assignment(line).map_err(|e| usage(format!("config line {}: {e}", i + 1)))?;
        out.insert(key, value);
    }
    Ok(out)
}

/// Splits `section.key=value` into a checked key and a value.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("expected section.key = value, got {s:?}"))?;
    let key = key.trim();
    if default_of(key).is_none() {
        return Err(format!("unknown key {key:?}"));
    }
    Ok((key.to_string(), value.trim().to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(file: Option<&str>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS
            .iter()
            .filter_map(|(k, d)| d.map(|d| (k.to_string(), d.to_string())))
            .collect();
        if let Some(text) = file {
            values.extend(parse_lines(text)?);
        }
        for o in overrides {
            let (k, v) = parse_assignment(o).map_err(|e| usage(format!("--set: {e}")))?;
            values.insert(k, v);
        }
        Ok(RunConfig { values })
    }

    /// Resolved `key = value` lines, sorted by key.
    pub fn snapshot(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn require(&self, key: &str) -> anyhow::Result<&str> {
        self.get(key).ok_or_else(|| usage(format!("{key} must be set")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse().map_err(|e| usage(format!("{key} = {raw:?}: {e}")))
    }

    pub fn path(&self, key: &str) -> anyhow::Result<PathBuf> {
        self.require(key).map(PathBuf::from)
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.parse("model.seed")
    }

    pub fn train_hyper(&self) -> anyhow::Result<TrainHyper> {
        let hyper = TrainHyper {
            learning_rate: self.parse("train.learning_rate")?,
            decay_horizon: self.parse("train.decay_horizon")?,
            weight_decay: self.parse("train.weight_decay")?,
            sparsity_target: self.parse("train.sparsity_target")?,
            sparsity_weight: self.parse("train.sparsity_weight")?,
            minibatch_size: self.parse("train.minibatch")?,
            cd_schedule: CdSchedule {
                start: self.parse("train.cd_start")?,
                max: self.parse("train.cd_max")?,
                every: self.parse("train.cd_every")?,
            },
        };
        hyper.validate().map_err(|e| usage(e.to_string()))?;
        Ok(hyper)
    }

    pub fn sap_config(&self) -> anyhow::Result<SapConfig> {
        Ok(SapConfig {
            epochs: self.parse("train.sap_epochs")?,
            chains_per_doc: self.parse("train.chains")?,
            mf_steps: self.parse("train.mf_steps")?,
            gibbs_steps: self.parse("train.gibbs_steps")?,
        })
    }

    pub fn ais_config(&self) -> anyhow::Result<AisConfig> {
        let cfg = AisConfig::uniform(self.parse("ais.betas")?, self.parse("ais.chains")?, self.parse("ais.sweeps")?);
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn inference_mode(&self) -> anyhow::Result<InferenceMode> {
        self.parse("eval.mode")
    }

    pub fn classifier(&self) -> anyhow::Result<(ClassifierMode, ClassMetric, ClassifierHyper)> {
        Ok((
            self.parse("eval.classifier")?,
            self.parse("eval.metric")?,
            ClassifierHyper {
                learning_rate: self.parse("eval.classifier_learning_rate")?,
                l2: self.parse("eval.l2")?,
                max_iters: self.parse("eval.max_iters")?,
                ..ClassifierHyper::default()
            },
        ))
    }
}
