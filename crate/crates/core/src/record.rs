//! The unified 13-label record format and the longitudinal trajectory that
//! groups records under one follower/leader pair.

use crate::error::{Error, Result};

/// Leader ID used for human-driven lead vehicles.
pub const HUMAN_LEADER_ID: i64 = -1;

/// Default vehicle length in meters when the source does not provide one.
pub const DEFAULT_VEHICLE_LENGTH: f64 = 4.5;

/// One row of the unified longitudinal format.
///
/// Row invariants (checked by [`UnifiedRecord::validate`]):
/// - `speed_diff == speed_lv - speed_fav`
/// - `space_headway == pos_lv - pos_fav`
/// - `space_headway - space_gap == (fav_length + lv_length) / 2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnifiedRecord {
    pub trajectory_id: i64,
    /// Seconds; a multiple of the trajectory's time step.
    pub time_index: f64,
    pub id_lv: i64,
    pub pos_lv: f64,
    pub speed_lv: f64,
    pub acc_lv: f64,
    pub id_fav: i64,
    pub pos_fav: f64,
    pub speed_fav: f64,
    pub acc_fav: f64,
    pub space_gap: f64,
    pub space_headway: f64,
    pub speed_diff: f64,
}

impl UnifiedRecord {
    /// Checks the per-row invariants against the trajectory's half-length sum.
    pub fn validate(&self, length_offset: f64, tol: f64) -> Result<()> {
        if self.speed_diff != self.speed_lv - self.speed_fav {
            return Err(Error::Internal(format!(
                "speed_diff {} != speed_lv - speed_fav {}",
                self.speed_diff,
                self.speed_lv - self.speed_fav
            )));
        }
        if (self.space_headway - (self.pos_lv - self.pos_fav)).abs() > tol {
            return Err(Error::Internal(format!(
                "space_headway {} != pos_lv - pos_fav {}",
                self.space_headway,
                self.pos_lv - self.pos_fav
            )));
        }
        if ((self.space_headway - self.space_gap) - length_offset).abs() > tol {
            return Err(Error::Internal(format!(
                "headway - gap = {} but half-length sum is {length_offset}",
                self.space_headway - self.space_gap
            )));
        }
        Ok(())
    }
}

/// The five labels subject to sigma clipping (Step 2) or hard margins (Step 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    SpeedLv,
    AccLv,
    SpeedFav,
    AccFav,
    SpaceGap,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::SpeedLv,
        Label::AccLv,
        Label::SpeedFav,
        Label::AccFav,
        Label::SpaceGap,
    ];

    /// Lower-case key used in config files and CLI flags.
    pub fn key(self) -> &'static str {
        match self {
            Label::SpeedLv => "speed_lv",
            Label::AccLv => "acc_lv",
            Label::SpeedFav => "speed_fav",
            Label::AccFav => "acc_fav",
            Label::SpaceGap => "space_gap",
        }
    }

    /// Column name in the unified CSV header.
    pub fn column(self) -> &'static str {
        match self {
            Label::SpeedLv => "Speed_LV",
            Label::AccLv => "Acc_LV",
            Label::SpeedFav => "Speed_FAV",
            Label::AccFav => "Acc_FAV",
            Label::SpaceGap => "Space_Gap",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        Label::ALL.iter().copied().find(|l| l.key() == s)
    }

    pub fn get(self, r: &UnifiedRecord) -> f64 {
        match self {
            Label::SpeedLv => r.speed_lv,
            Label::AccLv => r.acc_lv,
            Label::SpeedFav => r.speed_fav,
            Label::AccFav => r.acc_fav,
            Label::SpaceGap => r.space_gap,
        }
    }

    pub fn set(self, r: &mut UnifiedRecord, v: f64) {
        match self {
            Label::SpeedLv => r.speed_lv = v,
            Label::AccLv => r.acc_lv = v,
            Label::SpeedFav => r.speed_fav = v,
            Label::AccFav => r.acc_fav = v,
            Label::SpaceGap => r.space_gap = v,
        }
    }
}

/// Ordered records sharing one trajectory ID, one follower, one leader and a
/// constant time step.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalTrajectory {
    pub trajectory_id: i64,
    /// Time step in seconds.
    pub delta_t: f64,
    pub fav_length: f64,
    pub lv_length: f64,
    pub records: Vec<UnifiedRecord>,
}

impl LongitudinalTrajectory {
    /// Half of the summed vehicle lengths; the constant headway-minus-gap offset.
    pub fn length_offset(&self) -> f64 {
        (self.fav_length + self.lv_length) / 2.0
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Extracts one label column.
    pub fn column(&self, label: Label) -> Vec<f64> {
        self.records.iter().map(|r| label.get(r)).collect()
    }

    /// Checks the structural invariants: at least two records, shared IDs, a
    /// gap-free time grid, plus every per-row invariant.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.records.len() < 2 {
            return Err(Error::Internal(format!(
                "trajectory {} has {} records, need at least 2",
                self.trajectory_id,
                self.records.len()
            )));
        }
        if self.delta_t <= 0.0 {
            return Err(Error::Internal(format!("delta_t {} must be > 0", self.delta_t)));
        }
        let offset = self.length_offset();
        let first = &self.records[0];
        for (k, r) in self.records.iter().enumerate() {
            if r.trajectory_id != self.trajectory_id {
                return Err(Error::Internal(format!(
                    "record {k} has trajectory_id {} in trajectory {}",
                    r.trajectory_id, self.trajectory_id
                )));
            }
            if r.id_fav != first.id_fav || r.id_lv != first.id_lv {
                return Err(Error::Internal(format!(
                    "record {k} changes vehicle ids within trajectory {}",
                    self.trajectory_id
                )));
            }
            let expected_t = first.time_index + k as f64 * self.delta_t;
            if (r.time_index - expected_t).abs() > self.delta_t * 0.25 {
                return Err(Error::Internal(format!(
                    "trajectory {}: time index {} at record {k}, expected {expected_t}",
                    self.trajectory_id, r.time_index
                )));
            }
            r.validate(offset, tol)?;
        }
        Ok(())
    }
}

/// A processed dataset is simply an ordered list of trajectories.
pub type Dataset = Vec<LongitudinalTrajectory>;

/// Total record count across a dataset.
pub fn record_count(dataset: &[LongitudinalTrajectory]) -> usize {
    dataset.iter().map(|t| t.records.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> UnifiedRecord {
        UnifiedRecord {
            trajectory_id: 0,
            time_index: t,
            id_lv: -1,
            pos_lv: 30.0,
            speed_lv: 20.0,
            acc_lv: 0.0,
            id_fav: 7,
            pos_fav: 0.0,
            speed_fav: 20.0,
            acc_fav: 0.0,
            space_gap: 25.5,
            space_headway: 30.0,
            speed_diff: 0.0,
        }
    }

    #[test]
    fn record_invariants_hold_for_consistent_row() {
        record(0.0).validate(4.5, 1e-9).unwrap();
    }

    #[test]
    fn record_invariants_reject_bad_speed_diff() {
        let mut r = record(0.0);
        r.speed_diff = 0.5;
        assert!(r.validate(4.5, 1e-9).is_err());
    }

    #[test]
    fn trajectory_rejects_time_hole() {
        let mut records = vec![record(0.0), record(0.1), record(0.3)];
        for (i, r) in records.iter_mut().enumerate() {
            r.pos_fav += i as f64;
            r.pos_lv = r.pos_fav + r.space_headway;
        }
        let traj = LongitudinalTrajectory {
            trajectory_id: 0,
            delta_t: 0.1,
            fav_length: 4.5,
            lv_length: 4.5,
            records,
        };
        assert!(traj.validate(1e-9).is_err());
    }

    #[test]
    fn label_roundtrip() {
        for l in Label::ALL {
            assert_eq!(Label::parse(l.key()), Some(l));
        }
        assert_eq!(Label::parse("speed"), None);
    }
}
