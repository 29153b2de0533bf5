use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::RunError;
use crate::ingestion::ScenarioConfig;
use crate::model::{Community, DateWindow, ParticipantId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Static,
    Static33,
    DefaultDynamic,
    CustomDynamic,
}

impl PolicyName {
    pub const ALL: [PolicyName; 4] = [
        PolicyName::Static,
        PolicyName::Static33,
        PolicyName::DefaultDynamic,
        PolicyName::CustomDynamic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Static => "static",
            PolicyName::Static33 => "static33",
            PolicyName::DefaultDynamic => "default-dynamic",
            PolicyName::CustomDynamic => "custom-dynamic",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (expected static, static33, default-dynamic or custom-dynamic)"))
    }
}

/// How the custom-dynamic waterfall is ordered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CustomOrder {
    /// Highest effective self-consumption value first.
    #[default]
    Economic,
    /// Ascending `priority_rank`.
    Rank,
}

/// Consumption history used to derive the static keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KorHistory {
    pub path: PathBuf,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl KorHistory {
    pub fn window(&self) -> Result<DateWindow, RunError> {
        DateWindow::new(self.first, self.last)
            .ok_or_else(|| RunError::Config(format!("kor_history: {} is after {}", self.first, self.last)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Meter CSV holding the production meter and every participant meter.
    pub meter_data: PathBuf,
    pub policies: Vec<PolicyName>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub custom_order: CustomOrder,
    /// Settlement window; defaults to the dates covered by production data.
    #[serde(default)]
    pub window: Option<DateWindow>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    pub community: Community,
    /// Explicit static keys. Takes precedence over `kor_history`.
    #[serde(default)]
    pub static_kors: Option<BTreeMap<ParticipantId, Decimal>>,
    #[serde(default)]
    pub kor_history: Option<KorHistory>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.meter_data = base.join(&cfg.meter_data);
        cfg.output_dir = base.join(&cfg.output_dir);
        if let Some(h) = &mut cfg.kor_history {
            h.path = base.join(&h.path);
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), RunError> {
        if self.policies.is_empty() {
            return Err(RunError::Config("at least one policy must be selected".into()));
        }
        let mut seen = self.policies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.policies.len() {
            return Err(RunError::Config("a policy is listed more than once".into()));
        }
        if self.policies.contains(&PolicyName::Static) && self.static_kors.is_none() && self.kor_history.is_none() {
            return Err(RunError::Config(
                "policy static needs either [static_kors] or [kor_history]".into(),
            ));
        }
        if let Some(h) = &self.kor_history {
            h.window()?;
        }
        self.scenario.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if let Some(id) = &self.scenario.datacentre_participant {
            if self.community.participant(id).is_none() {
                return Err(RunError::Config(format!("datacentre_participant {id} is not a participant")));
            }
        }
        Ok(())
    }

    /// Policies in name order, the order used for outputs and the ledger.
    pub fn sorted_policies(&self) -> Vec<PolicyName> {
        let mut ps = self.policies.clone();
        ps.sort_by_key(|p| p.as_str());
        ps
    }
}
