use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::align::DanVariant;
use crate::error::{Error, Result};

/// How the calibration pool of a target subject is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    /// Target calibration trials only.
    Baseline,
    /// Target calibration plus raw source trials.
    Concat,
    /// Target calibration plus LST-transformed source trials.
    Lst,
    /// Target calibration plus DAN-transformed source trials.
    Dan,
    DanNoStimIndep,
    DanNoPretrain,
    DanNoFinetune,
    DanNoTanh,
}

impl SchemeId {
    pub const ALL: [SchemeId; 8] = [
        SchemeId::Baseline,
        SchemeId::Concat,
        SchemeId::Lst,
        SchemeId::Dan,
        SchemeId::DanNoStimIndep,
        SchemeId::DanNoPretrain,
        SchemeId::DanNoFinetune,
        SchemeId::DanNoTanh,
    ];

    /// The four calibration schemes compared in the main experiments.
    pub const MAIN: [SchemeId; 4] = [SchemeId::Baseline, SchemeId::Concat, SchemeId::Lst, SchemeId::Dan];

    pub const ABLATIONS: [SchemeId; 4] = [
        SchemeId::DanNoStimIndep,
        SchemeId::DanNoPretrain,
        SchemeId::DanNoFinetune,
        SchemeId::DanNoTanh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Baseline => "baseline",
            SchemeId::Concat => "concat",
            SchemeId::Lst => "lst",
            SchemeId::Dan => "dan",
            SchemeId::DanNoStimIndep => "dan_no_stim_indep",
            SchemeId::DanNoPretrain => "dan_no_pretrain",
            SchemeId::DanNoFinetune => "dan_no_finetune",
            SchemeId::DanNoTanh => "dan_no_tanh",
        }
    }

    /// Network variant for the DAN family.
    pub fn dan_variant(self) -> Option<DanVariant> {
        match self {
            SchemeId::Dan => Some(DanVariant::Full),
            SchemeId::DanNoStimIndep => Some(DanVariant::NoStimIndep),
            SchemeId::DanNoPretrain => Some(DanVariant::NoPretrain),
            SchemeId::DanNoFinetune => Some(DanVariant::NoFinetune),
            SchemeId::DanNoTanh => Some(DanVariant::NoTanh),
            _ => None,
        }
    }

    pub fn uses_sources(self) -> bool {
        self != SchemeId::Baseline
    }

    /// Parses a comma-separated list such as `baseline,dan`. `main`,
    /// `ablations` and `all` expand to groups.
    pub fn parse_list(s: &str) -> Result<Vec<SchemeId>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let group: &[SchemeId] = match part {
                "main" => &SchemeId::MAIN,
                "ablations" => &SchemeId::ABLATIONS,
                "all" => &SchemeId::ALL,
                _ => &[part.parse()?],
            };
            for &g in group {
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::config("schemes", "no scheme given"));
        }
        Ok(out)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("schemes", format!("unknown scheme `{s}`")))
    }
}
