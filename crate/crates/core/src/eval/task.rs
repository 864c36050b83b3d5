use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{load_epochs, DatasetManifest, EpochSet, MIN_CALIB_TRIALS};
use crate::dsp::preprocess;
use crate::error::{Error, Result};

/// Domain-adaptation task names. `Custom` covers anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Benchmark,
    DryToDry,
    WetToWet,
    DryToWet,
    WetToDry,
    Custom,
}

impl TaskName {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Benchmark => "benchmark",
            TaskName::DryToDry => "dry_to_dry",
            TaskName::WetToWet => "wet_to_wet",
            TaskName::DryToWet => "dry_to_wet",
            TaskName::WetToDry => "wet_to_dry",
            TaskName::Custom => "custom",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evaluation settings shared by every fold. The datasets themselves are
/// passed separately as [`Cohort`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub name: TaskName,
    /// Calibration trials per stimulus; one sub-report per value.
    pub n_calib: Vec<usize>,
    /// Draw this many sources per fold instead of using all of them.
    pub n_source_subjects: Option<usize>,
    pub repeats: usize,
    pub seed: u64,
    /// Re-draw the calibration/test split on every repeat instead of taking
    /// the first trials of each stimulus.
    pub reshuffle_splits: bool,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            name: TaskName::Custom,
            n_calib: vec![MIN_CALIB_TRIALS],
            n_source_subjects: None,
            repeats: 10,
            seed: 0,
            reshuffle_splits: false,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_calib.is_empty() {
            return Err(Error::config("task.n_calib", "at least one value is required"));
        }
        if let Some(&n) = self.n_calib.iter().find(|&&n| n < MIN_CALIB_TRIALS) {
            return Err(Error::config(
                "task.n_calib",
                format!("{n} is below the minimum of {MIN_CALIB_TRIALS}"),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::config("task.repeats", "must be >= 1"));
        }
        if self.n_source_subjects == Some(0) {
            return Err(Error::config("task.n_source_subjects", "must be >= 1"));
        }
        Ok(())
    }
}

/// Execution knobs that do not change results (apart from `record_timing`,
/// which fills the `seconds` column with wall-clock times).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
pub struct Member {
    pub subject_id: String,
    /// Preprocessed epochs, or the reason loading failed.
    pub epochs: std::result::Result<EpochSet, String>,
}

/// The subjects of one dataset.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub name: String,
    pub members: Vec<Member>,
}

impl Cohort {
    pub fn from_sets(name: impl Into<String>, sets: Vec<EpochSet>) -> Self {
        Cohort {
            name: name.into(),
            members: sets
                .into_iter()
                .map(|s| Member {
                    subject_id: s.subject_id.clone(),
                    epochs: Ok(s),
                })
                .collect(),
        }
    }

    /// Loads and preprocesses every subject of `manifest`. Subjects that
    /// fail to load are kept with their error so the fold can be reported.
    pub fn load(name: impl Into<String>, manifest: &DatasetManifest) -> Result<Self> {
        manifest.validate()?;
        let members = manifest
            .subject_ids
            .iter()
            .map(|id| {
                let epochs = load_epochs(manifest.path_for(id), manifest, id)
                    .and_then(|raw| preprocess(&raw, manifest))
                    .map_err(|e| {
                        log::warn!("subject {id}: {e}");
                        e.to_string()
                    });
                Member {
                    subject_id: id.clone(),
                    epochs,
                }
            })
            .collect();
        Ok(Cohort {
            name: name.into(),
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, subject: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.subject_id == subject)
    }
}
