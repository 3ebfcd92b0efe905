//! Scenario scripts (YAML). Paths inside a script are relative to the
//! script's directory.
//!
//! ```yaml
//! name: sitting_approval
//! seed: 7
//! session: session.json          # or an inline session config mapping
//! pose_source: {path: sitting_typist.csv, rate: 1.0}
//! agents:
//!   user:
//!     actions:
//!       - {at_ms: 5500, event: {type: user_accept}}
//!   designer:
//!     actions:
//!       - {at_ms: 1000, event: {type: propose_dimension, field: height, value: 0.74}}
//!   ergonomist:
//!     policy: {review_reports: 30, reaction_ms: [100, 400], label: typing}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use coaug_core::session::{EventKind, Role, SessionConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Yaml { path: PathBuf, source: serde_yaml::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl ScriptError {
    pub fn is_io(&self) -> bool {
        matches!(self, ScriptError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SessionSource {
    Path(String),
    Inline(Box<SessionConfig>),
}

fn default_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSource {
    pub path: String,
    /// Playback speed; 2.0 plays twice as fast as recorded.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Virtual time of the first frame.
    #[serde(default)]
    pub start_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedAction {
    pub at_ms: u64,
    pub event: EventKind,
}

fn default_review_reports() -> usize {
    30
}

fn default_reaction() -> [u64; 2] {
    [100, 400]
}

fn default_label() -> String {
    "seated work".into()
}

/// Ergonomist behaviour: request a pose after the user accepts, then approve
/// iff the next `review_reports` reports have zero violations, else reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewPolicy {
    #[serde(default = "default_review_reports")]
    pub review_reports: usize,
    /// Inclusive range of seeded reaction delays, virtual ms.
    #[serde(default = "default_reaction")]
    pub reaction_ms: [u64; 2],
    #[serde(default = "default_label")]
    pub label: String,
}

impl Default for ReviewPolicy {
    fn default() -> Self {
        ReviewPolicy {
            review_reports: default_review_reports(),
            reaction_ms: default_reaction(),
            label: default_label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentScript {
    #[serde(default)]
    pub participant: Option<String>,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
    #[serde(default)]
    pub policy: Option<ReviewPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub session: SessionSource,
    #[serde(default)]
    pub pose_source: Option<PoseSource>,
    pub agents: BTreeMap<Role, AgentScript>,
}

/// A script with its files resolved and loaded.
#[derive(Debug, Clone)]
pub struct LoadedScript {
    pub script: ScenarioScript,
    pub session: SessionConfig,
    pub pose_path: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, ScriptError> {
    std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
        path: path.to_owned(),
        source,
    })
}

impl ScenarioScript {
    pub fn load(path: &Path) -> Result<LoadedScript, ScriptError> {
        let text = read(path)?;
        let script: ScenarioScript = serde_yaml::from_str(&text).map_err(|source| ScriptError::Yaml {
            path: path.to_owned(),
            source,
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        script.resolve(dir)
    }

    pub fn resolve(self, dir: &Path) -> Result<LoadedScript, ScriptError> {
        let session = match &self.session {
            SessionSource::Inline(c) => (**c).clone(),
            SessionSource::Path(p) => {
                let path = dir.join(p);
                serde_json::from_str(&read(&path)?).map_err(|source| ScriptError::Json { path, source })?
            }
        };
        let pose_path = match &self.pose_source {
            Some(src) => {
                if !(src.rate.is_finite() && src.rate > 0.0) {
                    return Err(ScriptError::Invalid(format!("pose_source.rate must be > 0, got {}", src.rate)));
                }
                let path = dir.join(&src.path);
                if !path.is_file() {
                    return Err(ScriptError::Io {
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "pose source not found"),
                        path,
                    });
                }
                if !self.agents.contains_key(&Role::User) {
                    return Err(ScriptError::Invalid("a pose source needs a user agent to stream it".into()));
                }
                Some(path)
            }
            None => None,
        };
        for (role, agent) in &self.agents {
            if let Some(p) = &agent.policy {
                if *role != Role::Ergonomist {
                    return Err(ScriptError::Invalid(format!("only the ergonomist can have a review policy, not {role}")));
                }
                if p.review_reports == 0 || p.reaction_ms[0] > p.reaction_ms[1] {
                    return Err(ScriptError::Invalid("policy needs review_reports > 0 and reaction_ms [lo, hi] with lo <= hi".into()));
                }
            }
        }
        Ok(LoadedScript {
            script: self,
            session,
            pose_path,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let yaml = "name: t\nseed: 3\nsession: {session_id: s}\nagents:\n  designer:\n    actions:\n      \
                    - {at_ms: 10, event: {type: set_color, color: [1, 2, 3]}}\n  ergonomist:\n    policy: {}\n";
        let s: ScenarioScript = serde_yaml::from_str(yaml).unwrap();
        let loaded = s.resolve(Path::new(".")).unwrap();
        assert_eq!(loaded.session.session_id, "s");
        assert_eq!(loaded.script.agents[&Role::Ergonomist].policy, Some(ReviewPolicy::default()));
        assert_eq!(loaded.script.agents[&Role::Designer].actions[0].at_ms, 10);
    }

    #[test]
    fn rejects_misplaced_policy_and_missing_files() {
        let yaml = "name: t\nsession: {}\nagents:\n  user:\n    policy: {}\n";
        let s: ScenarioScript = serde_yaml::from_str(yaml).unwrap();
        assert!(matches!(s.resolve(Path::new(".")), Err(ScriptError::Invalid(_))));

        let yaml = "name: t\nsession: {}\npose_source: {path: nope.csv}\nagents: {user: {}}\n";
        let s: ScenarioScript = serde_yaml::from_str(yaml).unwrap();
        assert!(s.resolve(Path::new(".")).unwrap_err().is_io());

        let yaml = "name: t\nsession: {}\nagents: {user: {actions: [{at_ms: -5, event: {type: user_accept}}]}}\n";
        assert!(serde_yaml::from_str::<ScenarioScript>(yaml).is_err());
    }
}
