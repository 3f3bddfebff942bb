//! Seeded synthetic scene generator.
//!
//! Each scene plants one leader dead ahead of the ego in the same lane plus
//! distractor agents that the identification filters must reject: an
//! oncoming vehicle, an adjacent-lane vehicle, and a perpendicular crosser
//! placed beyond the leader. The planted leader is by construction the
//! nearest same-lane preceding agent at every timestamp, so generated scenes
//! double as ground truth for leader-identification tests.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{AgentTrack, RawScene};
use super::CoordinateMode;
use crate::error::{Error, Result};
use crate::kinematics::Vec2;

pub const SYNTH_EGO_ID: i64 = 0;
const LANE_WIDTH: f64 = 3.5;

/// Parameters for one planted-pair scene.
#[derive(Debug, Clone)]
pub struct SyntheticSceneSpec {
    pub scene_id: i64,
    pub n_timestamps: usize,
    pub delta_t: f64,
    /// Mean ego speed in m/s; drawn from [8, 25] when absent.
    pub base_speed: Option<f64>,
    /// Initial center-to-center headway in meters; drawn from [20, 60] when absent.
    pub initial_headway: Option<f64>,
    pub n_distractors: usize,
    /// Drive the ego through a U-turn arc instead of a straight lane. Such
    /// scenes fail the straightness filter and carry `expected_rejected`.
    pub curved: bool,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        SyntheticSceneSpec {
            scene_id: 0,
            n_timestamps: 120,
            delta_t: 0.1,
            base_speed: None,
            initial_headway: None,
            n_distractors: 3,
            curved: false,
        }
    }
}

/// A generated scene plus its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene: RawScene,
    pub leader_id: i64,
    pub expected_rejected: bool,
}

fn speed_profile(base: f64, amplitude: f64, angular: f64, phase: f64, n: usize, dt: f64) -> Vec<f64> {
    (0..n)
        .map(|k| base * (1.0 + amplitude * (angular * k as f64 * dt + phase).sin()))
        .collect()
}

fn cumulative(start: f64, speeds: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(speeds.len());
    let mut s = start;
    for (k, v) in speeds.iter().enumerate() {
        if k > 0 {
            s += v * dt;
        }
        out.push(s);
    }
    out
}

/// Generates one deterministic scene for `(spec, seed)`.
pub fn generate_synthetic_scene(spec: &SyntheticSceneSpec, seed: u64) -> Result<SyntheticScene> {
    if spec.n_timestamps < 4 {
        return Err(Error::Argument(format!(
            "need at least 4 timestamps, got {}",
            spec.n_timestamps
        )));
    }
    if spec.delta_t <= 0.0 {
        return Err(Error::Argument(format!("delta_t must be > 0, got {}", spec.delta_t)));
    }
    if let Some(v) = spec.base_speed {
        if !(0.5..=40.0).contains(&v) {
            return Err(Error::Argument(format!("base_speed {v} outside plausible range [0.5, 40]")));
        }
    }
    if let Some(h) = spec.initial_headway {
        if !(5.0..=115.0).contains(&h) {
            return Err(Error::Argument(format!(
                "initial_headway {h} outside plausible range (5, 115]"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(spec.scene_id as u64));
    let n = spec.n_timestamps;
    let dt = spec.delta_t;
    let horizon = n as f64 * dt;
    let base = spec.base_speed.unwrap_or_else(|| rng.gen_range(8.0..25.0));
    let headway0 = spec.initial_headway.unwrap_or_else(|| rng.gen_range(20.0..60.0));
    let ego_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let lv_phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let ego_speeds = speed_profile(base, 0.04, 0.25, ego_phase, n, dt);
    let lv_speeds = speed_profile(base, 0.03, 0.20, lv_phase, n, dt);
    let ego_arc = cumulative(0.0, &ego_speeds, dt);
    let lv_arc = cumulative(headway0, &lv_speeds, dt);

    // Straight scenes run along +x at y = 0; curved scenes sweep a U-turn.
    let turn_radius = base * horizon / std::f64::consts::PI;
    let place = |arc: f64, lateral: f64| -> Vec2 {
        if spec.curved {
            let phi = arc / turn_radius;
            Vec2::new(
                (turn_radius - lateral) * phi.sin(),
                turn_radius - (turn_radius - lateral) * phi.cos(),
            )
        } else {
            Vec2::new(arc, lateral)
        }
    };

    let track_from =
        |agent_id: i64, points: Vec<Vec2>, present: Vec<bool>, length: f64| AgentTrack {
            agent_id,
            positions: points,
            lanes: None,
            speeds: None,
            length: Some(length),
            present,
        };

    let ego = track_from(
        SYNTH_EGO_ID,
        ego_arc.iter().map(|&s| place(s, 0.0)).collect(),
        vec![true; n],
        rng.gen_range(4.2..5.0),
    );
    let leader_id = 1;
    let leader = track_from(
        leader_id,
        lv_arc.iter().map(|&s| place(s, 0.0)).collect(),
        vec![true; n],
        rng.gen_range(4.2..5.0),
    );

    let mut agents = vec![leader];
    for d in 0..spec.n_distractors {
        let agent_id = 2 + d as i64;
        let length = rng.gen_range(4.0..5.2);
        let track = match d % 3 {
            // Oncoming vehicle in the opposite lane; fails the direction filter.
            0 => {
                let start = ego_arc[0] + rng.gen_range(60.0..100.0);
                let speed = rng.gen_range(8.0..20.0);
                let points = (0..n)
                    .map(|k| place(start - speed * k as f64 * dt, -LANE_WIDTH))
                    .collect();
                track_from(agent_id, points, vec![true; n], length)
            }
            // Adjacent-lane vehicle at a short relative offset; fails the
            // alignment filter (or trails the ego). Present only part of the
            // scene to exercise the mask.
            1 => {
                let offset = rng.gen_range(-25.0..15.0);
                let points: Vec<Vec2> = ego_arc.iter().map(|&s| place(s + offset, LANE_WIDTH)).collect();
                let span = (n as f64 * 0.6) as usize;
                let start = rng.gen_range(0..n - span.min(n - 1));
                let present = (0..n).map(|k| k >= start && k < start + span.max(1)).collect();
                track_from(agent_id, points, present, length)
            }
            // Perpendicular crosser parked beyond the leader's reach; may pass
            // both filters but can never be the nearest candidate.
            _ => {
                let across = ego_arc[n - 1] + headway0 + rng.gen_range(30.0..60.0);
                let crossing_speed = rng.gen_range(3.0..8.0);
                let y0 = -rng.gen_range(5.0..15.0);
                let points = (0..n)
                    .map(|k| {
                        let along = place(across, 0.0);
                        let lateral = y0 + crossing_speed * k as f64 * dt;
                        if spec.curved {
                            // keep the crosser away from a curved ego entirely
                            Vec2::new(along.x, along.y + lateral)
                        } else {
                            Vec2::new(across, lateral)
                        }
                    })
                    .collect();
                track_from(agent_id, points, vec![true; n], length)
            }
        };
        agents.push(track);
    }

    Ok(SyntheticScene {
        scene: RawScene {
            scene_id: spec.scene_id,
            timestamps,
            ego,
            agents,
            coordinate_mode: CoordinateMode::Euler,
            delta_t: dt,
        },
        leader_id,
        expected_rejected: spec.curved,
    })
}

/// Serializes generated scenes to the CSV layout matched by
/// [`synthetic_adapter_config`]. Returns `(scene csv, ground-truth csv)`.
pub fn scene_rows_to_csv(scenes: &[SyntheticScene]) -> (String, String) {
    let mut data = String::from("Scene_ID,Time,Agent_ID,X,Y,Is_Ego,Length\n");
    let mut truth = String::from("Scene_ID,Leader_ID,Expected_Rejected\n");
    for s in scenes {
        let scene = &s.scene;
        for (k, t) in scene.timestamps.iter().enumerate() {
            let mut tracks: Vec<&AgentTrack> = Vec::with_capacity(1 + scene.agents.len());
            tracks.push(&scene.ego);
            tracks.extend(scene.agents.iter());
            tracks.sort_by_key(|a| a.agent_id);
            for track in tracks {
                if !track.present[k] {
                    continue;
                }
                let p = track.positions[k];
                let _ = writeln!(
                    data,
                    "{},{},{},{},{},{},{}",
                    scene.scene_id,
                    crate::csvio::fmt_f64(*t),
                    track.agent_id,
                    crate::csvio::fmt_f64(p.x),
                    crate::csvio::fmt_f64(p.y),
                    u8::from(track.agent_id == scene.ego.agent_id),
                    crate::csvio::fmt_f64(track.length.unwrap_or(0.0)),
                );
            }
        }
        let _ = writeln!(
            truth,
            "{},{},{}",
            scene.scene_id,
            s.leader_id,
            u8::from(s.expected_rejected)
        );
    }
    (data, truth)
}

/// Adapter config text matching [`scene_rows_to_csv`] output.
pub fn synthetic_adapter_config(delta_t: f64) -> String {
    format!(
        "# synthetic scene adapter\n\
         dataset_category = scene\n\
         delta_t = {delta_t}\n\
         coordinate_mode = euler\n\
         position_anchor = positions\n\
         \n\
         [columns]\n\
         Scene_ID = scene_id\n\
         Time = time\n\
         Agent_ID = agent_id\n\
         X = x\n\
         Y = y\n\
         Is_Ego = follower_flag\n\
         Length = length\n"
    )
}
