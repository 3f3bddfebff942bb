//! Step 1: leader identification in raw scenes and assembly of unified
//! longitudinal trajectories.
//!
//! Euler scenes go through four gates: a straightness filter on the ego
//! track, a travel-direction filter and a bearing-alignment filter per
//! candidate, then nearest-headway selection. Frenet scenes use the lane id
//! directly. Segments with a stable leader are converted to the unified
//! format and checked for gap/speed-difference consistency.

use crate::error::{Error, Result};
use crate::ingest::{AgentTrack, CoordinateMode, LeaderIdPolicy, PositionAnchor, RawScene};
use crate::kinematics::{compute_gap, derive_accel_series, derive_speed_series, Vec2};
use crate::parallel::map_ordered;
use crate::record::{Dataset, LongitudinalTrajectory, UnifiedRecord, HUMAN_LEADER_ID};

/// Thresholds of the identification gates.
#[derive(Debug, Clone, Copy)]
pub struct CandidateFilterParams {
    /// Minimum R^2 for an ego track to count as straight-lane driving.
    pub r2_threshold: f64,
    /// Minimum cosine between ego heading and the bearing to a candidate.
    pub alignment_cos_threshold: f64,
    /// Maximum relative mismatch between measured and speed-integrated gap change.
    pub consistency_rel_threshold: f64,
    /// Optional cap on candidate headway; unlimited at this stage by default.
    pub max_leader_gap: Option<f64>,
}

impl Default for CandidateFilterParams {
    fn default() -> Self {
        CandidateFilterParams {
            r2_threshold: 0.9,
            alignment_cos_threshold: 0.984,
            consistency_rel_threshold: 0.2,
            max_leader_gap: None,
        }
    }
}

impl CandidateFilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.r2_threshold && self.r2_threshold <= 1.0) {
            return Err(Error::Argument(format!(
                "r2 threshold must be in (0, 1], got {}",
                self.r2_threshold
            )));
        }
        if !(0.0 < self.alignment_cos_threshold && self.alignment_cos_threshold <= 1.0) {
            return Err(Error::Argument(format!(
                "alignment cosine threshold must be in (0, 1], got {}",
                self.alignment_cos_threshold
            )));
        }
        if self.consistency_rel_threshold <= 0.0 {
            return Err(Error::Argument(format!(
                "consistency threshold must be > 0, got {}",
                self.consistency_rel_threshold
            )));
        }
        Ok(())
    }
}

/// Below this absolute gap change the consistency check switches from a
/// relative to an absolute criterion; steady-state following has a gap
/// change near zero and must not be divided by.
pub const CONSISTENCY_ABS_FALLBACK: f64 = 0.5;

fn ols_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // A constant response is fit perfectly by the constant line.
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    1.0 - ss_res / syy
}

/// Straightness of a planar track as the better of the two ordinary
/// least-squares fits (y on x and x on y), so vertical lanes score like
/// horizontal ones.
pub fn straightness_r2(track: &[Vec2]) -> Result<f64> {
    if track.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 points for a straightness fit, got {}",
            track.len()
        )));
    }
    let xs: Vec<f64> = track.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = track.iter().map(|p| p.y).collect();
    Ok(ols_r2(&xs, &ys).max(ols_r2(&ys, &xs)))
}

/// Keep a candidate whose travel direction does not oppose the ego's.
/// Removal is strict: a zero dot product (perpendicular or stationary over
/// one step) is kept and left to the alignment filter.
pub fn direction_filter(ego_dir: Vec2, agent_dir: Vec2) -> bool {
    ego_dir.dot(agent_dir) >= 0.0
}

/// Keep a candidate whose bearing from the ego aligns with the ego heading:
/// cosine of the unit-normalized vectors at or above the threshold. A zero
/// bearing or heading cannot be normalized and removes the candidate.
pub fn alignment_filter(ego_dir: Vec2, ego_to_agent: Vec2, threshold: f64) -> bool {
    let den = ego_dir.norm() * ego_to_agent.norm();
    if den == 0.0 {
        return false;
    }
    ego_dir.dot(ego_to_agent) / den >= threshold
}

/// Center-to-center spatial headway between two vehicles.
pub fn spatial_headway(ego: Vec2, agent: Vec2) -> f64 {
    agent.sub(ego).norm()
}

/// Nearest candidate by headway; ties break to the lowest agent id so the
/// result does not depend on candidate ordering.
pub fn select_leader(candidates: &[(i64, f64)]) -> Option<i64> {
    candidates
        .iter()
        .copied()
        .min_by(|(ida, ha), (idb, hb)| {
            ha.partial_cmp(hb)
                .expect("finite headways")
                .then(ida.cmp(idb))
        })
        .map(|(id, _)| id)
}

/// Travel direction of a track at grid index `t`, from the step into `t`.
/// The opening timestamp reuses the first available step; an isolated sample
/// has no direction and yields the zero vector.
fn travel_direction(track: &AgentTrack, t: usize) -> Vec2 {
    let n = track.present.len();
    if t > 0 && track.present[t] && track.present[t - 1] {
        return track.positions[t].sub(track.positions[t - 1]);
    }
    // first available consecutive pair at or after t
    for k in t..n.saturating_sub(1) {
        if track.present[k] && track.present[k + 1] {
            return track.positions[k + 1].sub(track.positions[k]);
        }
    }
    Vec2::default()
}

/// Per-timestamp leader ids for one scene, `None` marking free-flow
/// timestamps. Euler scenes must already have passed the straightness gate.
pub fn identify_leaders(scene: &RawScene, params: &CandidateFilterParams) -> Vec<Option<i64>> {
    let n = scene.len();
    let mut leaders = Vec::with_capacity(n);
    for t in 0..n {
        if !scene.ego.present[t] {
            leaders.push(None);
            continue;
        }
        let ego_pos = scene.ego.positions[t];
        let mut candidates: Vec<(i64, f64)> = Vec::new();
        match scene.coordinate_mode {
            CoordinateMode::Euler => {
                let ego_dir = travel_direction(&scene.ego, t);
                for agent in &scene.agents {
                    if !agent.present[t] {
                        continue;
                    }
                    if !direction_filter(ego_dir, travel_direction(agent, t)) {
                        continue;
                    }
                    let bearing = agent.positions[t].sub(ego_pos);
                    if !alignment_filter(ego_dir, bearing, params.alignment_cos_threshold) {
                        continue;
                    }
                    let h = spatial_headway(ego_pos, agent.positions[t]);
                    if params.max_leader_gap.is_some_and(|cap| h > cap) {
                        continue;
                    }
                    candidates.push((agent.agent_id, h));
                }
            }
            CoordinateMode::FrenetLane => {
                let ego_lane = scene.ego.lane_at(t);
                for agent in &scene.agents {
                    if !agent.present[t] {
                        continue;
                    }
                    if agent.lane_at(t) != ego_lane {
                        continue;
                    }
                    let ahead = agent.positions[t].x - ego_pos.x;
                    if ahead <= 0.0 {
                        continue;
                    }
                    if params.max_leader_gap.is_some_and(|cap| ahead > cap) {
                        continue;
                    }
                    candidates.push((agent.agent_id, ahead));
                }
            }
        }
        leaders.push(select_leader(&candidates));
    }
    leaders
}

/// A maximal run of timestamps with one constant leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeaderSegment {
    pub leader_id: i64,
    /// Grid index of the first timestamp in the run.
    pub start: usize,
    /// Number of timestamps in the run.
    pub len: usize,
}

/// Splits a per-timestamp leader series into maximal constant non-`None`
/// runs. Frenet scenes additionally break runs at ego lane changes.
pub fn segment_by_leader(scene: &RawScene, leaders: &[Option<i64>]) -> Vec<LeaderSegment> {
    let mut segments = Vec::new();
    let mut run: Option<LeaderSegment> = None;
    for (t, leader) in leaders.iter().enumerate() {
        let lane_break = t > 0 && scene.ego.lane_at(t) != scene.ego.lane_at(t - 1);
        match (leader, &mut run) {
            (Some(id), Some(seg)) if *id == seg.leader_id && !lane_break => seg.len += 1,
            (Some(id), _) => {
                if let Some(seg) = run.take() {
                    segments.push(seg);
                }
                run = Some(LeaderSegment {
                    leader_id: *id,
                    start: t,
                    len: 1,
                });
            }
            (None, _) => {
                if let Some(seg) = run.take() {
                    segments.push(seg);
                }
            }
        }
    }
    if let Some(seg) = run {
        segments.push(seg);
    }
    segments
}

/// Gap/speed-difference consistency: the measured gap change over a segment
/// must match the change integrated from speed differences. Relative
/// criterion above [`CONSISTENCY_ABS_FALLBACK`] meters of gap change,
/// absolute below it. Returns true when the segment is kept.
pub fn consistency_check(
    gaps: &[f64],
    speed_diffs: &[f64],
    delta_t: f64,
    rel_threshold: f64,
) -> bool {
    if gaps.len() < 2 {
        return false;
    }
    let measured = gaps[gaps.len() - 1] - gaps[0];
    let integrated: f64 = speed_diffs[..speed_diffs.len() - 1]
        .iter()
        .map(|dv| dv * delta_t)
        .sum();
    let err = (measured - integrated).abs();
    if measured.abs() < CONSISTENCY_ABS_FALLBACK {
        err <= CONSISTENCY_ABS_FALLBACK
    } else {
        err / measured.abs() <= rel_threshold
    }
}

/// Label series of one leader segment before unification.
struct SegmentLabels {
    pos_fav: Vec<f64>,
    speed_fav: Vec<f64>,
    speed_lv: Vec<f64>,
    acc_fav: Vec<f64>,
    acc_lv: Vec<f64>,
    headway: Vec<f64>,
    fav_length: f64,
    lv_length: f64,
    leader_id: i64,
}

fn build_segment_labels(
    scene: &RawScene,
    segment: LeaderSegment,
    anchor: PositionAnchor,
    default_length: f64,
) -> Result<Option<SegmentLabels>> {
    let leader = scene
        .agents
        .iter()
        .find(|a| a.agent_id == segment.leader_id)
        .ok_or_else(|| Error::Internal(format!("leader {} not in scene", segment.leader_id)))?;
    let range = segment.start..segment.start + segment.len;
    let dt = scene.delta_t;

    let ego_xy: Vec<Vec2> = range.clone().map(|t| scene.ego.positions[t]).collect();
    let lv_xy: Vec<Vec2> = range.clone().map(|t| leader.positions[t]).collect();
    let headway: Vec<f64> = match scene.coordinate_mode {
        CoordinateMode::Euler => ego_xy
            .iter()
            .zip(&lv_xy)
            .map(|(e, l)| spatial_headway(*e, *l))
            .collect(),
        CoordinateMode::FrenetLane => ego_xy.iter().zip(&lv_xy).map(|(e, l)| l.x - e.x).collect(),
    };

    let (pos_fav, speed_fav): (Vec<f64>, Vec<f64>) = match anchor {
        PositionAnchor::Positions => {
            if segment.len < 4 {
                return Ok(None);
            }
            let pos = match scene.coordinate_mode {
                // cumulative arc length along the ego path
                CoordinateMode::Euler => {
                    let mut s = Vec::with_capacity(segment.len);
                    let mut acc = 0.0;
                    s.push(0.0);
                    for w in ego_xy.windows(2) {
                        acc += w[1].sub(w[0]).norm();
                        s.push(acc);
                    }
                    s
                }
                CoordinateMode::FrenetLane => ego_xy.iter().map(|p| p.x).collect(),
            };
            let speed = derive_speed_series(&pos, dt)?;
            (pos, speed)
        }
        PositionAnchor::Speeds => {
            if segment.len < 3 {
                return Ok(None);
            }
            let speeds: Vec<f64> = match &scene.ego.speeds {
                Some(s) => range.clone().map(|t| s[t]).collect(),
                None => return Err(Error::config("position_anchor = speeds but the scene carries no speed channel")),
            };
            let pos = crate::kinematics::integrate_position(0.0, &speeds, dt)?;
            (pos, speeds)
        }
    };

    // Leader position per the unified format: follower position plus headway.
    let pos_lv: Vec<f64> = pos_fav.iter().zip(&headway).map(|(p, h)| p + h).collect();
    let speed_lv: Vec<f64> = match anchor {
        PositionAnchor::Positions => derive_speed_series(&pos_lv, dt)?,
        PositionAnchor::Speeds => match &leader.speeds {
            Some(s) => range.clone().map(|t| s[t]).collect(),
            None => return Err(Error::config("position_anchor = speeds but the leader track carries no speed channel")),
        },
    };
    let acc_fav = derive_accel_series(&speed_fav, dt)?;
    let acc_lv = derive_accel_series(&speed_lv, dt)?;

    Ok(Some(SegmentLabels {
        pos_fav,
        speed_fav,
        speed_lv,
        acc_fav,
        acc_lv,
        headway,
        fav_length: scene.ego.length.unwrap_or(default_length),
        lv_length: leader.length.unwrap_or(default_length),
        leader_id: segment.leader_id,
    }))
}

/// Converts one checked segment into a unified trajectory. All label series
/// are trimmed to the shortest derived length.
fn to_unified_from_labels(
    labels: &SegmentLabels,
    scene: &RawScene,
    leader_policy: LeaderIdPolicy,
    trajectory_id: i64,
) -> Result<Option<LongitudinalTrajectory>> {
    let n = labels
        .pos_fav
        .len()
        .min(labels.speed_fav.len())
        .min(labels.acc_fav.len())
        .min(labels.speed_lv.len())
        .min(labels.acc_lv.len())
        .min(labels.headway.len());
    if n < 2 {
        return Ok(None);
    }
    let id_lv = match leader_policy {
        LeaderIdPolicy::HumanMinusOne => HUMAN_LEADER_ID,
        LeaderIdPolicy::AgentId => labels.leader_id,
    };
    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        records.push(UnifiedRecord {
            trajectory_id,
            time_index: k as f64 * scene.delta_t,
            id_lv,
            pos_lv: labels.pos_fav[k] + labels.headway[k],
            speed_lv: labels.speed_lv[k],
            acc_lv: labels.acc_lv[k],
            id_fav: scene.ego.agent_id,
            pos_fav: labels.pos_fav[k],
            speed_fav: labels.speed_fav[k],
            acc_fav: labels.acc_fav[k],
            space_gap: compute_gap(labels.headway[k], labels.fav_length, labels.lv_length)?,
            space_headway: labels.headway[k],
            speed_diff: labels.speed_lv[k] - labels.speed_fav[k],
        });
    }
    Ok(Some(LongitudinalTrajectory {
        trajectory_id,
        delta_t: scene.delta_t,
        fav_length: labels.fav_length,
        lv_length: labels.lv_length,
        records,
    }))
}

/// Converts a raw segment's label series into a unified trajectory without
/// re-running the consistency gate; `trajectory_id` is assigned afterwards by
/// the caller. Exposed for paired sources and tests.
pub fn to_unified(
    scene: &RawScene,
    segment: LeaderSegment,
    anchor: PositionAnchor,
    default_length: f64,
    leader_policy: LeaderIdPolicy,
    trajectory_id: i64,
) -> Result<Option<LongitudinalTrajectory>> {
    match build_segment_labels(scene, segment, anchor, default_length)? {
        Some(labels) => to_unified_from_labels(&labels, scene, leader_policy, trajectory_id),
        None => Ok(None),
    }
}

/// Extraction options beyond the filter thresholds.
#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    pub anchor: PositionAnchor,
    pub default_length: f64,
    pub leader_policy: LeaderIdPolicy,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            anchor: PositionAnchor::Positions,
            default_length: crate::record::DEFAULT_VEHICLE_LENGTH,
            leader_policy: LeaderIdPolicy::HumanMinusOne,
        }
    }
}

/// Runs the full Step-1 pipeline over one scene. Returns trajectories with
/// placeholder ids; the dataset-level caller renumbers them.
fn extract_scene(
    scene: &RawScene,
    params: &CandidateFilterParams,
    options: &ExtractOptions,
) -> Result<Dataset> {
    if scene.len() < 3 {
        return Ok(Vec::new());
    }
    if scene.coordinate_mode == CoordinateMode::Euler {
        let track: Vec<Vec2> = scene
            .ego
            .positions
            .iter()
            .zip(&scene.ego.present)
            .filter(|(_, &p)| p)
            .map(|(v, _)| *v)
            .collect();
        if track.len() < 3 || straightness_r2(&track)? < params.r2_threshold {
            return Ok(Vec::new());
        }
    }
    let leaders = identify_leaders(scene, params);
    let mut out = Vec::new();
    for segment in segment_by_leader(scene, &leaders) {
        let Some(labels) = build_segment_labels(scene, segment, options.anchor, options.default_length)?
        else {
            continue;
        };
        let n = labels.acc_fav.len().min(labels.headway.len());
        if n < 2 {
            continue;
        }
        let gaps: Vec<f64> = labels.headway[..n]
            .iter()
            .map(|h| h - (labels.fav_length + labels.lv_length) / 2.0)
            .collect();
        let speed_diffs: Vec<f64> = labels.speed_lv[..n]
            .iter()
            .zip(&labels.speed_fav[..n])
            .map(|(l, f)| l - f)
            .collect();
        if !consistency_check(&gaps, &speed_diffs, scene.delta_t, params.consistency_rel_threshold) {
            continue;
        }
        if let Some(traj) = to_unified_from_labels(&labels, scene, options.leader_policy, 0)? {
            out.push(traj);
        }
    }
    Ok(out)
}

/// Extracts every scene, in parallel, with deterministic output order:
/// scenes by scene id, segments by start time, trajectory ids renumbered
/// sequentially.
pub fn extract_scenes(
    scenes: &[RawScene],
    params: &CandidateFilterParams,
    options: &ExtractOptions,
) -> Result<Dataset> {
    params.validate()?;
    let mut ordered: Vec<&RawScene> = scenes.iter().collect();
    ordered.sort_by_key(|s| s.scene_id);
    let per_scene = map_ordered(&ordered, |scene| extract_scene(scene, params, options));
    let mut dataset: Dataset = Vec::new();
    for result in per_scene {
        for mut traj in result? {
            let id = dataset.len() as i64;
            traj.trajectory_id = id;
            for r in &mut traj.records {
                r.trajectory_id = id;
            }
            dataset.push(traj);
        }
    }
    Ok(dataset)
}
