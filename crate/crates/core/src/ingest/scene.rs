//! Loader for multi-agent scene recordings that require leader identification.

use std::collections::BTreeMap;

use super::{AdapterConfig, ColumnRole, CoordinateMode, DatasetCategory};
use crate::error::{Error, Result};
use crate::kinematics::Vec2;

/// One agent's samples on the scene's timestamp grid. Entries where the
/// presence mask is false hold placeholder values and must not be read.
#[derive(Debug, Clone)]
pub struct AgentTrack {
    pub agent_id: i64,
    /// Euler x/y, or Frenet longitudinal position in `x` with `y = 0`.
    pub positions: Vec<Vec2>,
    pub lanes: Option<Vec<i64>>,
    pub speeds: Option<Vec<f64>>,
    pub length: Option<f64>,
    pub present: Vec<bool>,
}

impl AgentTrack {
    fn new(agent_id: i64, n: usize, with_lanes: bool, with_speeds: bool) -> Self {
        AgentTrack {
            agent_id,
            positions: vec![Vec2::default(); n],
            lanes: with_lanes.then(|| vec![0; n]),
            speeds: with_speeds.then(|| vec![f64::NAN; n]),
            length: None,
            present: vec![false; n],
        }
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn lane_at(&self, t: usize) -> Option<i64> {
        self.lanes.as_ref().map(|l| l[t])
    }
}

/// A multi-agent recording before leader identification: the ego track plus
/// every surrounding agent, indexed on one strictly increasing constant-step
/// timestamp grid.
#[derive(Debug, Clone)]
pub struct RawScene {
    pub scene_id: i64,
    pub timestamps: Vec<f64>,
    pub ego: AgentTrack,
    pub agents: Vec<AgentTrack>,
    pub coordinate_mode: CoordinateMode,
    pub delta_t: f64,
}

impl RawScene {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct SceneRow {
    line: usize,
    scene_id: i64,
    time: f64,
    agent_id: i64,
    x: f64,
    y: f64,
    lane: Option<i64>,
    speed: Option<f64>,
    length: Option<f64>,
    is_ego: bool,
}

/// Loads a scene-category CSV into one [`RawScene`] per scene grouping key.
///
/// The ego track is the agent flagged by the `follower_flag` role, or the
/// configured `ego_agent_id`. A scene without an ego track is an error.
pub fn load_scene_dataset(config: &AdapterConfig, text: &str, source: &str) -> Result<Vec<RawScene>> {
    if config.dataset_category != DatasetCategory::Scene {
        return Err(Error::config("load_scene_dataset requires dataset_category = scene"));
    }
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ingest(source, 1, "empty file"))?;
    let header: Vec<&str> = header.trim_end().split(',').collect();
    let mapping = super::validate_schema(config, &header)?;

    let field_at = |fields: &[&str], role: ColumnRole, row: usize| -> Result<Option<f64>> {
        match mapping.get(&role) {
            Some(&idx) => {
                let field = fields
                    .get(idx)
                    .ok_or_else(|| Error::ingest(source, row, "short row"))?
                    .trim();
                if field.is_empty() {
                    return Ok(None);
                }
                field
                    .parse::<f64>()
                    .map(|v| Some(v * config.scale(role)))
                    .map_err(|_| {
                        Error::ingest(source, row, format!("invalid number in {role}: {field:?}"))
                    })
            }
            None => Ok(None),
        }
    };
    let required = |v: Option<f64>, role: ColumnRole, row: usize| -> Result<f64> {
        v.ok_or_else(|| Error::ingest(source, row, format!("missing value for {role}")))
    };

    let mut rows: Vec<SceneRow> = Vec::new();
    for (idx, line) in lines {
        let row_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let agent_id = required(field_at(&fields, ColumnRole::AgentId, row_no)?, ColumnRole::AgentId, row_no)? as i64;
        let flag = field_at(&fields, ColumnRole::FollowerFlag, row_no)?;
        let is_ego = match (flag, config.ego_agent_id) {
            (Some(f), _) => f != 0.0,
            (None, Some(ego)) => agent_id == ego,
            (None, None) => false,
        };
        rows.push(SceneRow {
            line: row_no,
            scene_id: field_at(&fields, ColumnRole::SceneId, row_no)?.unwrap_or(0.0) as i64,
            time: required(field_at(&fields, ColumnRole::Time, row_no)?, ColumnRole::Time, row_no)?,
            agent_id,
            x: required(field_at(&fields, ColumnRole::X, row_no)?, ColumnRole::X, row_no)?,
            y: match config.coordinate_mode {
                CoordinateMode::Euler => {
                    required(field_at(&fields, ColumnRole::Y, row_no)?, ColumnRole::Y, row_no)?
                }
                CoordinateMode::FrenetLane => 0.0,
            },
            lane: field_at(&fields, ColumnRole::LaneId, row_no)?.map(|v| v as i64),
            speed: field_at(&fields, ColumnRole::Speed, row_no)?,
            length: field_at(&fields, ColumnRole::Length, row_no)?,
            is_ego,
        });
    }

    let mut by_scene: BTreeMap<i64, Vec<SceneRow>> = BTreeMap::new();
    for row in rows {
        by_scene.entry(row.scene_id).or_default().push(row);
    }

    let mut scenes = Vec::with_capacity(by_scene.len());
    for (scene_id, rows) in by_scene {
        scenes.push(build_scene(config, scene_id, rows, source)?);
    }
    Ok(scenes)
}

fn build_scene(
    config: &AdapterConfig,
    scene_id: i64,
    rows: Vec<SceneRow>,
    source: &str,
) -> Result<RawScene> {
    // Timestamp grid: sorted unique times, constant step required.
    let mut timestamps: Vec<f64> = rows.iter().map(|r| r.time).collect();
    timestamps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    timestamps.dedup_by(|a, b| (*a - *b).abs() < 0.25 * config.delta_t);
    for w in timestamps.windows(2) {
        let dt = w[1] - w[0];
        if (dt - config.delta_t).abs() > 0.25 * config.delta_t {
            return Err(Error::ingest(
                source,
                0,
                format!(
                    "scene {scene_id}: timestamp step {dt} deviates from delta_t {}",
                    config.delta_t
                ),
            ));
        }
    }
    let n = timestamps.len();
    let grid_index = |t: f64| -> usize {
        timestamps
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
            .unwrap_or_else(|i| {
                // nearest slot under jitter
                if i == 0 {
                    0
                } else if i >= n {
                    n - 1
                } else if (t - timestamps[i - 1]).abs() <= (timestamps[i] - t).abs() {
                    i - 1
                } else {
                    i
                }
            })
    };

    let with_lanes = config.coordinate_mode == CoordinateMode::FrenetLane;
    let mut tracks: BTreeMap<i64, AgentTrack> = BTreeMap::new();
    let mut ego_id: Option<i64> = None;
    for row in &rows {
        if row.is_ego {
            match ego_id {
                Some(id) if id != row.agent_id => {
                    return Err(Error::ingest(
                        source,
                        row.line,
                        format!("scene {scene_id}: conflicting ego agents {id} and {}", row.agent_id),
                    ));
                }
                _ => ego_id = Some(row.agent_id),
            }
        }
        let track = tracks
            .entry(row.agent_id)
            .or_insert_with(|| AgentTrack::new(row.agent_id, n, with_lanes, true));
        let k = grid_index(row.time);
        if track.present[k] {
            return Err(Error::ingest(
                source,
                row.line,
                format!("scene {scene_id}: duplicate sample for agent {} at t={}", row.agent_id, row.time),
            ));
        }
        track.present[k] = true;
        track.positions[k] = Vec2::new(row.x, row.y);
        if let (Some(lanes), Some(lane)) = (track.lanes.as_mut(), row.lane) {
            lanes[k] = lane;
        }
        if let (Some(speeds), Some(speed)) = (track.speeds.as_mut(), row.speed) {
            speeds[k] = speed;
        }
        if track.length.is_none() {
            track.length = row.length.filter(|l| l.is_finite() && *l > 0.0);
        }
    }

    let ego_id = ego_id.ok_or_else(|| {
        Error::ingest(source, 0, format!("scene {scene_id} has no ego track (follower_flag/ego_agent_id)"))
    })?;
    let ego = tracks.remove(&ego_id).expect("ego track recorded");
    // Drop speed storage when the source never provided one.
    let strip = |mut t: AgentTrack| -> AgentTrack {
        if t.speeds.as_ref().is_some_and(|s| s.iter().all(|v| v.is_nan())) {
            t.speeds = None;
        }
        t
    };

    Ok(RawScene {
        scene_id,
        timestamps,
        ego: strip(ego),
        agents: tracks.into_values().map(strip).collect(),
        coordinate_mode: config.coordinate_mode,
        delta_t: config.delta_t,
    })
}
