//! Run configuration files and the data pipeline they describe.
//!
//! A config is a JSON object with a `train` section (see
//! [`TrainConfig`]), a `data` section and an optional `seeds` list used by
//! sweeps. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use ipcae_core::data::{
    assign_splits, gen_synthetic, impute_class_mean, impute_global_mean, minmax_scale, Dataset,
    SplitRatios, SyntheticSpec,
};
use ipcae_core::objectives::Task;
use ipcae_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::csvio::{read_csv, relabel, CsvOptions, LabelColumn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Per-class feature means; needs labels.
    #[default]
    ClassMean,
    GlobalMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Generate the data instead of reading it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelColumn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub impute: Imputation,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub split: SplitRatios,
}

impl DataConfig {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        DataConfig {
            csv: None,
            synthetic: Some(spec),
            label: None,
            exclude: Vec::new(),
            impute: Imputation::default(),
            split_seed: 0,
            split: SplitRatios::default(),
        }
    }

    pub fn validate(&self, task: Task) -> Result<()> {
        match (&self.csv, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::input(
                    "data: give either `csv` or `synthetic`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::input(
                    "data: one of `csv` or `synthetic` is required",
                ))
            }
            (None, Some(spec)) => {
                spec.validate()?;
                if task == Task::Classification && spec.task != Task::Classification {
                    return Err(Error::input(
                        "classification needs a labeled (classification) synthetic spec",
                    ));
                }
            }
            (Some(_), None) => {
                if task == Task::Classification && self.label.is_none() {
                    return Err(Error::input("data: classification needs a `label` column"));
                }
            }
        }
        self.split.validate()?;
        Ok(())
    }

    fn csv_options(&self) -> CsvOptions {
        let label = match (&self.label, &self.synthetic) {
            (Some(l), _) => Some(l.clone()),
            // files written from a classification spec carry a `label` column
            (None, Some(spec)) if spec.task == Task::Classification => {
                Some(LabelColumn::Name("label".into()))
            }
            _ => None,
        };
        CsvOptions {
            label,
            exclude: self.exclude.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Seeds for sweeps; the fixed ten seeds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    /// Reads and validates a config; a relative CSV path is resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg =
            Self::parse(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        if let Some(csv) = &cfg.data.csv {
            if csv.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.csv = Some(base.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::input(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.data.validate(self.train.task)?;
        if self.seeds.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::input("seeds must not be empty"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| ipcae_core::FIXED_SEEDS.to_vec())
    }
}

/// Dataset ready for training, with what was learned along the way.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
    /// Informative features when the data was generated.
    pub planted: Option<Vec<usize>>,
}

/// Loads or generates the raw dataset (before imputation and scaling).
/// `csv_override` replaces the configured source with a CSV file.
pub fn load_raw(
    data: &DataConfig,
    csv_override: Option<&Path>,
) -> Result<(Dataset, Option<Vec<usize>>)> {
    if let Some(path) = csv_override.or(data.csv.as_deref()) {
        return Ok((read_csv(path, &data.csv_options())?, None));
    }
    let spec = data
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::input("no data source"))?;
    let syn = gen_synthetic(spec)?;
    Ok((syn.dataset, Some(syn.planted)))
}

/// Imputation, split assignment and train-split min-max scaling. Labels are
/// first renumbered to `class_names` when given.
pub fn preprocess(
    data: &DataConfig,
    raw: &Dataset,
    class_names: Option<&[String]>,
) -> Result<(Dataset, Vec<String>)> {
    let raw = match class_names {
        Some(names) => relabel(raw, names)?,
        None => raw.clone(),
    };
    let (imputed, warnings) = match data.impute {
        Imputation::ClassMean if raw.labels.is_some() => impute_class_mean(&raw)?,
        Imputation::ClassMean if raw.has_missing() => {
            return Err(Error::input(
                "class-mean imputation needs a label column; set \"impute\": \"global_mean\" for unlabeled data",
            ))
        }
        Imputation::ClassMean => (raw, Vec::new()),
        Imputation::GlobalMean => (impute_global_mean(&raw)?, Vec::new()),
    };
    let split = assign_splits(&imputed, data.split, data.split_seed)?;
    let (scaled, _) = minmax_scale(&split)?;
    Ok((scaled, warnings))
}

pub fn prepare(data: &DataConfig) -> Result<Prepared> {
    let (raw, planted) = load_raw(data, None)?;
    let (dataset, warnings) = preprocess(data, &raw, None)?;
    Ok(Prepared {
        dataset,
        warnings,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "train": {"task": "reconstruction", "k": 3},
        "data": {"synthetic": {"task": "reconstruction", "n": 50, "d": 6, "k_true": 2}}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.train, TrainConfig::new(Task::Reconstruction, 3));
        assert_eq!(cfg.data.split, SplitRatios::default());
        assert_eq!(cfg.seeds().len(), 10);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            (
                MINIMAL.replace("\"k\": 3", "\"k\": 3, \"learning_rate\": 1"),
                "learning_rate",
            ),
            (
                MINIMAL.replace("\"data\"", "\"extra\": 1, \"data\""),
                "extra",
            ),
            (
                MINIMAL.replace("\"k_true\": 2", "\"k_true\": 2, \"sigma\": 1"),
                "sigma",
            ),
        ] {
            let err = RunConfig::parse(&text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn semantic_checks() {
        assert!(RunConfig::parse(&MINIMAL.replace("\"k\": 3", "\"k\": 0")).is_err());
        let both = MINIMAL.replace("\"synthetic\"", "\"csv\": \"a.csv\", \"synthetic\"");
        assert!(RunConfig::parse(&both).is_err());
        let unlabeled =
            r#"{"train": {"task": "classification", "k": 1}, "data": {"csv": "a.csv"}}"#;
        assert!(RunConfig::parse(unlabeled)
            .unwrap_err()
            .to_string()
            .contains("label"));
    }

    #[test]
    fn prepared_train_split_is_scaled() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let p = prepare(&cfg.data).unwrap();
        let train = p.dataset.features(ipcae_core::data::Split::Train);
        assert!(train.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p.planted.unwrap().len(), 2);
    }
}
