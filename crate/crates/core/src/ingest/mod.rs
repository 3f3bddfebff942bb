//! Schema-driven ingestion of raw trajectory sources.
//!
//! Two source categories exist: `paired` files that already label one
//! follower/leader pair per row, and `scene` files that list every agent
//! around the ego vehicle and leave leader identification to the extraction
//! stage. A declarative [`AdapterConfig`] maps arbitrary CSV columns onto
//! roles so each public dataset becomes a config file rather than code.

mod paired;
mod scene;
mod synth;

pub use paired::load_paired_dataset;
pub use scene::{load_scene_dataset, AgentTrack, RawScene};
pub use synth::{
    generate_synthetic_scene, scene_rows_to_csv, synthetic_adapter_config, SyntheticScene,
    SyntheticSceneSpec, SYNTH_EGO_ID,
};

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::record::DEFAULT_VEHICLE_LENGTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetCategory {
    Paired,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateMode {
    /// Plane x/y positions; straightness and bearing filters apply.
    Euler,
    /// Longitudinal arc-length positions plus a lane id per timestamp.
    FrenetLane,
}

/// Which measured channel anchors the kinematic chain. The other channel is
/// derived; a channel is never differentiated and then re-integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionAnchor {
    Positions,
    Speeds,
}

/// How the leader column of the unified output is labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderIdPolicy {
    /// Human-driven leaders: every leader gets id -1.
    HumanMinusOne,
    /// Keep the source agent id (platoon-style datasets with AV leaders).
    AgentId,
}

/// Column roles an adapter can map. `SpeedFav`-style roles apply to paired
/// files; `X`/`Y`/`AgentId` roles to scene files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ColumnRole {
    Time,
    AgentId,
    X,
    Y,
    LaneId,
    Speed,
    Length,
    FollowerFlag,
    SceneId,
    PosFav,
    PosLv,
    SpeedFav,
    SpeedLv,
    SpaceHeadway,
    LengthFav,
    LengthLv,
    IdFav,
    IdLv,
}

impl ColumnRole {
    pub const ALL: [ColumnRole; 18] = [
        ColumnRole::Time,
        ColumnRole::AgentId,
        ColumnRole::X,
        ColumnRole::Y,
        ColumnRole::LaneId,
        ColumnRole::Speed,
        ColumnRole::Length,
        ColumnRole::FollowerFlag,
        ColumnRole::SceneId,
        ColumnRole::PosFav,
        ColumnRole::PosLv,
        ColumnRole::SpeedFav,
        ColumnRole::SpeedLv,
        ColumnRole::SpaceHeadway,
        ColumnRole::LengthFav,
        ColumnRole::LengthLv,
        ColumnRole::IdFav,
        ColumnRole::IdLv,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ColumnRole::Time => "time",
            ColumnRole::AgentId => "agent_id",
            ColumnRole::X => "x",
            ColumnRole::Y => "y",
            ColumnRole::LaneId => "lane_id",
            ColumnRole::Speed => "speed",
            ColumnRole::Length => "length",
            ColumnRole::FollowerFlag => "follower_flag",
            ColumnRole::SceneId => "scene_id",
            ColumnRole::PosFav => "pos_fav",
            ColumnRole::PosLv => "pos_lv",
            ColumnRole::SpeedFav => "speed_fav",
            ColumnRole::SpeedLv => "speed_lv",
            ColumnRole::SpaceHeadway => "space_headway",
            ColumnRole::LengthFav => "length_fav",
            ColumnRole::LengthLv => "length_lv",
            ColumnRole::IdFav => "id_fav",
            ColumnRole::IdLv => "id_lv",
        }
    }

    pub fn parse(s: &str) -> Option<ColumnRole> {
        ColumnRole::ALL.iter().copied().find(|r| r.key() == s)
    }
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Declarative description of one raw source file family.
#[derive(Debug, Clone)]
pub struct AdapterConfig {
    pub dataset_category: DatasetCategory,
    /// Source column name -> role.
    pub column_map: BTreeMap<String, ColumnRole>,
    pub delta_t: f64,
    pub coordinate_mode: CoordinateMode,
    pub position_anchor: PositionAnchor,
    pub default_length: f64,
    /// Multiplicative factor applied to values of a role after parsing.
    pub unit_scale: BTreeMap<ColumnRole, f64>,
    pub leader_id_policy: LeaderIdPolicy,
    /// Scene files without a follower flag can designate the ego agent id.
    pub ego_agent_id: Option<i64>,
}

impl AdapterConfig {
    pub fn new_paired(delta_t: f64, anchor: PositionAnchor) -> Self {
        AdapterConfig {
            dataset_category: DatasetCategory::Paired,
            column_map: BTreeMap::new(),
            delta_t,
            coordinate_mode: CoordinateMode::Euler,
            position_anchor: anchor,
            default_length: DEFAULT_VEHICLE_LENGTH,
            unit_scale: BTreeMap::new(),
            leader_id_policy: LeaderIdPolicy::HumanMinusOne,
            ego_agent_id: None,
        }
    }

    pub fn new_scene(delta_t: f64, mode: CoordinateMode) -> Self {
        AdapterConfig {
            dataset_category: DatasetCategory::Scene,
            column_map: BTreeMap::new(),
            delta_t,
            coordinate_mode: mode,
            position_anchor: PositionAnchor::Positions,
            default_length: DEFAULT_VEHICLE_LENGTH,
            unit_scale: BTreeMap::new(),
            leader_id_policy: LeaderIdPolicy::HumanMinusOne,
            ego_agent_id: None,
        }
    }

    pub fn map_column(mut self, name: &str, role: ColumnRole) -> Self {
        self.column_map.insert(name.to_string(), role);
        self
    }

    pub fn scale(&self, role: ColumnRole) -> f64 {
        self.unit_scale.get(&role).copied().unwrap_or(1.0)
    }

    /// Roles that must be mapped for this config to be usable.
    pub fn required_roles(&self) -> Vec<ColumnRole> {
        match self.dataset_category {
            DatasetCategory::Paired => match self.position_anchor {
                PositionAnchor::Positions => {
                    vec![ColumnRole::Time, ColumnRole::PosFav, ColumnRole::PosLv]
                }
                PositionAnchor::Speeds => vec![
                    ColumnRole::Time,
                    ColumnRole::SpeedFav,
                    ColumnRole::SpeedLv,
                    ColumnRole::SpaceHeadway,
                ],
            },
            DatasetCategory::Scene => {
                let mut roles = vec![ColumnRole::Time, ColumnRole::AgentId, ColumnRole::X];
                match self.coordinate_mode {
                    CoordinateMode::Euler => roles.push(ColumnRole::Y),
                    CoordinateMode::FrenetLane => roles.push(ColumnRole::LaneId),
                }
                roles
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_t <= 0.0 {
            return Err(Error::config(format!(
                "delta_t must be > 0, got {}",
                self.delta_t
            )));
        }
        if self.default_length <= 0.0 {
            return Err(Error::config(format!(
                "default_length must be > 0, got {}",
                self.default_length
            )));
        }
        for role in self.required_roles() {
            if !self.column_map.values().any(|&r| r == role) {
                return Err(Error::Schema(format!("{role} unmapped")));
            }
        }
        Ok(())
    }
}

/// Resolves the configured roles against a concrete CSV header.
///
/// Every required role must match exactly one column; columns without a
/// mapping are ignored.
pub fn validate_schema(
    config: &AdapterConfig,
    header: &[&str],
) -> Result<BTreeMap<ColumnRole, usize>> {
    if header.is_empty() {
        return Err(Error::Schema("empty header".to_string()));
    }
    config.validate()?;
    let mut mapping: BTreeMap<ColumnRole, usize> = BTreeMap::new();
    for (idx, name) in header.iter().enumerate() {
        if let Some(&role) = config.column_map.get(name.trim()) {
            if mapping.insert(role, idx).is_some() {
                return Err(Error::Schema(format!(
                    "role {role} mapped by more than one column"
                )));
            }
        }
    }
    for role in config.required_roles() {
        if !mapping.contains_key(&role) {
            return Err(Error::Schema(format!("{role} unmapped")));
        }
    }
    Ok(mapping)
}

/// A parsed `key = value` config file: top-level entries plus named sections.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    pub top: Vec<(String, String, usize)>,
    pub sections: BTreeMap<String, Vec<(String, String, usize)>>,
}

impl ConfigFile {
    pub fn top_value(&self, key: &str) -> Option<&str> {
        self.top
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    pub fn section(&self, name: &str) -> &[(String, String, usize)] {
        self.sections.get(name).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parses the adapter/config file format: UTF-8 `key = value` lines,
/// `[section]` headers, `#` comments. Errors carry the 1-based line number.
pub fn parse_config_file(text: &str) -> Result<ConfigFile> {
    let mut file = ConfigFile::default();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::config_at(line_no, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(Error::config_at(line_no, "empty section name"));
            }
            section = Some(name.to_string());
            file.sections.entry(name.to_string()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config_at(line_no, format!("expected key = value, got {line:?}")))?;
        let entry = (key.trim().to_string(), value.trim().to_string(), line_no);
        if entry.0.is_empty() {
            return Err(Error::config_at(line_no, "empty key"));
        }
        match &section {
            Some(name) => file.sections.get_mut(name).unwrap().push(entry),
            None => file.top.push(entry),
        }
    }
    Ok(file)
}

/// Builds an [`AdapterConfig`] from a parsed config file.
///
/// Expected layout: top-level keys `dataset_category`, `delta_t`,
/// `coordinate_mode`, `position_anchor`, `default_length`, `leader_id`,
/// `ego_agent_id`; a `[columns]` section mapping source column names to
/// roles; an optional `[unit_scale]` section with per-role factors.
pub fn adapter_from_config(file: &ConfigFile) -> Result<AdapterConfig> {
    let find = |key: &str| file.top.iter().find(|(k, _, _)| k == key);

    let (category, _) = match find("dataset_category") {
        Some((_, v, line)) => match v.as_str() {
            "paired" => (DatasetCategory::Paired, *line),
            "scene" => (DatasetCategory::Scene, *line),
            other => {
                return Err(Error::config_at(
                    *line,
                    format!("dataset_category must be paired or scene, got {other:?}"),
                ))
            }
        },
        None => return Err(Error::config("dataset_category missing")),
    };

    let delta_t = match find("delta_t") {
        Some((_, v, line)) => v
            .parse::<f64>()
            .map_err(|_| Error::config_at(*line, format!("invalid delta_t {v:?}")))?,
        None => return Err(Error::config("delta_t missing")),
    };

    let coordinate_mode = match find("coordinate_mode") {
        Some((_, v, line)) => match v.as_str() {
            "euler" => CoordinateMode::Euler,
            "frenet_lane" => CoordinateMode::FrenetLane,
            other => {
                return Err(Error::config_at(
                    *line,
                    format!("coordinate_mode must be euler or frenet_lane, got {other:?}"),
                ))
            }
        },
        None => CoordinateMode::Euler,
    };

    let position_anchor = match find("position_anchor") {
        Some((_, v, line)) => match v.as_str() {
            "positions" => PositionAnchor::Positions,
            "speeds" => PositionAnchor::Speeds,
            other => {
                return Err(Error::config_at(
                    *line,
                    format!("position_anchor must be positions or speeds, got {other:?}"),
                ))
            }
        },
        None => PositionAnchor::Positions,
    };

    let default_length = match find("default_length") {
        Some((_, v, line)) => v
            .parse::<f64>()
            .map_err(|_| Error::config_at(*line, format!("invalid default_length {v:?}")))?,
        None => DEFAULT_VEHICLE_LENGTH,
    };

    let leader_id_policy = match find("leader_id") {
        Some((_, v, line)) => match v.as_str() {
            "hv" => LeaderIdPolicy::HumanMinusOne,
            "agent" => LeaderIdPolicy::AgentId,
            other => {
                return Err(Error::config_at(
                    *line,
                    format!("leader_id must be hv or agent, got {other:?}"),
                ))
            }
        },
        None => LeaderIdPolicy::HumanMinusOne,
    };

    let ego_agent_id = match find("ego_agent_id") {
        Some((_, v, line)) => Some(
            v.parse::<i64>()
                .map_err(|_| Error::config_at(*line, format!("invalid ego_agent_id {v:?}")))?,
        ),
        None => None,
    };

    let mut column_map = BTreeMap::new();
    for (name, role_key, line) in file.section("columns") {
        let role = ColumnRole::parse(role_key)
            .ok_or_else(|| Error::config_at(*line, format!("unknown role {role_key:?}")))?;
        if column_map.insert(name.clone(), role).is_some() {
            return Err(Error::config_at(*line, format!("column {name:?} mapped twice")));
        }
    }

    let mut unit_scale = BTreeMap::new();
    for (role_key, factor, line) in file.section("unit_scale") {
        let role = ColumnRole::parse(role_key)
            .ok_or_else(|| Error::config_at(*line, format!("unknown role {role_key:?}")))?;
        let f = factor
            .parse::<f64>()
            .map_err(|_| Error::config_at(*line, format!("invalid scale factor {factor:?}")))?;
        unit_scale.insert(role, f);
    }

    let config = AdapterConfig {
        dataset_category: category,
        column_map,
        delta_t,
        coordinate_mode,
        position_anchor,
        default_length,
        unit_scale,
        leader_id_policy,
        ego_agent_id,
    };
    config.validate()?;
    Ok(config)
}
