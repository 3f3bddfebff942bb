//! Loader for sources that already label the follower/leader pair per row.

use super::{AdapterConfig, ColumnRole, DatasetCategory, PositionAnchor};
use crate::error::{Error, Result};
use crate::kinematics::{compute_gap, derive_accel_series, derive_speed_series, integrate_position};
use crate::record::{Dataset, LongitudinalTrajectory, UnifiedRecord, HUMAN_LEADER_ID};

#[derive(Debug, Clone, Copy)]
struct PairedRow {
    line: usize,
    time: f64,
    pos_fav: f64,
    pos_lv: f64,
    speed_fav: f64,
    speed_lv: f64,
    headway: f64,
    length_fav: f64,
    length_lv: f64,
    id_fav: f64,
    id_lv: f64,
}

/// Loads a paired-category CSV into unified trajectories.
///
/// Rows are split into separate trajectories wherever the time stamp jumps by
/// more than 1.5 time steps; labels are derived from the configured anchor
/// channel so a measured signal is never differentiated and re-integrated.
pub fn load_paired_dataset(config: &AdapterConfig, text: &str, source: &str) -> Result<Dataset> {
    if config.dataset_category != DatasetCategory::Paired {
        return Err(Error::config("load_paired_dataset requires dataset_category = paired"));
    }
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ingest(source, 1, "empty file"))?;
    let header: Vec<&str> = header.trim_end().split(',').collect();
    let mapping = super::validate_schema(config, &header)?;

    let get = |fields: &[&str], role: ColumnRole, row: usize| -> Result<f64> {
        match mapping.get(&role) {
            Some(&idx) => {
                let field = fields
                    .get(idx)
                    .ok_or_else(|| Error::ingest(source, row, "short row"))?
                    .trim();
                if field.is_empty() {
                    return Ok(f64::NAN);
                }
                field
                    .parse::<f64>()
                    .map(|v| v * config.scale(role))
                    .map_err(|_| {
                        Error::ingest(source, row, format!("invalid number in {role}: {field:?}"))
                    })
            }
            None => Ok(f64::NAN),
        }
    };

    let mut rows: Vec<PairedRow> = Vec::new();
    for (idx, line) in lines {
        let row_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let time = get(&fields, ColumnRole::Time, row_no)?;
        if !time.is_finite() {
            return Err(Error::ingest(source, row_no, "missing or invalid time stamp"));
        }
        rows.push(PairedRow {
            line: row_no,
            time,
            pos_fav: get(&fields, ColumnRole::PosFav, row_no)?,
            pos_lv: get(&fields, ColumnRole::PosLv, row_no)?,
            speed_fav: get(&fields, ColumnRole::SpeedFav, row_no)?,
            speed_lv: get(&fields, ColumnRole::SpeedLv, row_no)?,
            headway: get(&fields, ColumnRole::SpaceHeadway, row_no)?,
            length_fav: get(&fields, ColumnRole::LengthFav, row_no)?,
            length_lv: get(&fields, ColumnRole::LengthLv, row_no)?,
            id_fav: get(&fields, ColumnRole::IdFav, row_no)?,
            id_lv: get(&fields, ColumnRole::IdLv, row_no)?,
        });
    }

    // Split into contiguous groups on the sampling grid.
    let mut groups: Vec<Vec<PairedRow>> = Vec::new();
    let mut current: Vec<PairedRow> = Vec::new();
    for row in rows {
        match current.last() {
            Some(prev) => {
                let dt = row.time - prev.time;
                if dt <= 0.0 {
                    return Err(Error::ingest(
                        source,
                        row.line,
                        format!("non-monotone time stamp {} after {}", row.time, prev.time),
                    ));
                }
                if dt < 0.5 * config.delta_t {
                    return Err(Error::ingest(
                        source,
                        row.line,
                        format!("time step {dt} is smaller than half the configured delta_t"),
                    ));
                }
                if dt > 1.5 * config.delta_t {
                    groups.push(std::mem::take(&mut current));
                }
                current.push(row);
            }
            None => current.push(row),
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }

    let mut dataset: Dataset = Vec::new();
    for group in &groups {
        if let Some(traj) = build_trajectory(config, group, dataset.len() as i64)? {
            dataset.push(traj);
        }
    }
    Ok(dataset)
}

fn first_finite(values: impl Iterator<Item = f64>, default: f64) -> f64 {
    values.filter(|v| v.is_finite()).next().unwrap_or(default)
}

fn build_trajectory(
    config: &AdapterConfig,
    group: &[PairedRow],
    trajectory_id: i64,
) -> Result<Option<LongitudinalTrajectory>> {
    let dt = config.delta_t;
    let fav_length = first_finite(group.iter().map(|r| r.length_fav), config.default_length);
    let lv_length = first_finite(group.iter().map(|r| r.length_lv), config.default_length);
    let id_fav = first_finite(group.iter().map(|r| r.id_fav), 0.0) as i64;
    let id_lv = first_finite(group.iter().map(|r| r.id_lv), HUMAN_LEADER_ID as f64) as i64;

    let (pos_fav, speed_fav, speed_lv, headway): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
    match config.position_anchor {
        PositionAnchor::Positions => {
            if group.len() < 4 {
                return Ok(None);
            }
            pos_fav = group.iter().map(|r| r.pos_fav).collect();
            let pos_lv: Vec<f64> = group.iter().map(|r| r.pos_lv).collect();
            headway = pos_lv.iter().zip(&pos_fav).map(|(l, f)| l - f).collect();
            speed_fav = derive_speed_series(&pos_fav, dt)?;
            speed_lv = derive_speed_series(&pos_lv, dt)?;
        }
        PositionAnchor::Speeds => {
            if group.len() < 3 {
                return Ok(None);
            }
            speed_fav = group.iter().map(|r| r.speed_fav).collect();
            speed_lv = group.iter().map(|r| r.speed_lv).collect();
            headway = group.iter().map(|r| r.headway).collect();
            pos_fav = integrate_position(0.0, &speed_fav, dt)?;
        }
    }
    let acc_fav = derive_accel_series(&speed_fav, dt)?;
    let acc_lv = derive_accel_series(&speed_lv, dt)?;

    let n = pos_fav
        .len()
        .min(speed_fav.len())
        .min(acc_fav.len())
        .min(headway.len());
    if n < 2 {
        return Ok(None);
    }

    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        let h = headway[k];
        records.push(UnifiedRecord {
            trajectory_id,
            time_index: k as f64 * dt,
            id_lv,
            pos_lv: pos_fav[k] + h,
            speed_lv: speed_lv[k],
            acc_lv: acc_lv[k],
            id_fav,
            pos_fav: pos_fav[k],
            speed_fav: speed_fav[k],
            acc_fav: acc_fav[k],
            space_gap: compute_gap(h, fav_length, lv_length)?,
            space_headway: h,
            speed_diff: speed_lv[k] - speed_fav[k],
        });
    }
    Ok(Some(LongitudinalTrajectory {
        trajectory_id,
        delta_t: dt,
        fav_length,
        lv_length,
        records,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn speeds_config() -> AdapterConfig {
        AdapterConfig::new_paired(0.1, PositionAnchor::Speeds)
            .map_column("t", ColumnRole::Time)
            .map_column("vf", ColumnRole::SpeedFav)
            .map_column("vl", ColumnRole::SpeedLv)
            .map_column("h", ColumnRole::SpaceHeadway)
    }

    fn make_csv(times: &[f64]) -> String {
        let mut text = String::from("t,vf,vl,h\n");
        for t in times {
            text.push_str(&format!("{t},20,21,30\n"));
        }
        text
    }

    #[test]
    fn contiguous_rows_form_one_trajectory() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let dataset = load_paired_dataset(&speeds_config(), &make_csv(&times), "mem").unwrap();
        assert_eq!(dataset.len(), 1);
        assert!(dataset[0].records.len() <= 100);
        assert_eq!(dataset[0].records.len(), 99);
        dataset[0].validate(1e-9).unwrap();
    }

    #[test]
    fn time_hole_splits_into_two_trajectories() {
        let mut times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        // two missing steps
        times.extend((52..100).map(|k| k as f64 * 0.1));
        let dataset = load_paired_dataset(&speeds_config(), &make_csv(&times), "mem").unwrap();
        assert_eq!(dataset.len(), 2);
        assert_eq!(dataset[0].trajectory_id, 0);
        assert_eq!(dataset[1].trajectory_id, 1);
    }

    #[test]
    fn unit_scale_converts_kmh_to_ms() {
        let mut config = speeds_config();
        config.unit_scale.insert(ColumnRole::SpeedFav, 1.0 / 3.6);
        config.unit_scale.insert(ColumnRole::SpeedLv, 1.0 / 3.6);
        let mut text = String::from("t,vf,vl,h\n");
        for k in 0..5 {
            text.push_str(&format!("{},72,72,30\n", k as f64 * 0.1));
        }
        let dataset = load_paired_dataset(&config, &text, "mem").unwrap();
        assert_abs_diff_eq!(dataset[0].records[0].speed_fav, 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dataset[0].records[0].speed_lv, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn non_monotone_time_reports_row() {
        let text = "t,vf,vl,h\n0.0,20,21,30\n0.1,20,21,30\n0.05,20,21,30\n";
        let err = load_paired_dataset(&speeds_config(), text, "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mem:4"), "{msg}");
        assert!(msg.contains("non-monotone"), "{msg}");
    }

    #[test]
    fn position_anchor_derives_speeds() {
        let config = AdapterConfig::new_paired(0.5, PositionAnchor::Positions)
            .map_column("t", ColumnRole::Time)
            .map_column("pf", ColumnRole::PosFav)
            .map_column("pl", ColumnRole::PosLv);
        let mut text = String::from("t,pf,pl\n");
        for k in 0..6 {
            let t = k as f64 * 0.5;
            text.push_str(&format!("{t},{},{}\n", 10.0 * t, 10.0 * t + 30.0));
        }
        let dataset = load_paired_dataset(&config, &text, "mem").unwrap();
        let traj = &dataset[0];
        assert_eq!(traj.records.len(), 4);
        for r in &traj.records {
            assert_abs_diff_eq!(r.speed_fav, 10.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.speed_diff, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(r.space_gap, 25.5, epsilon = 1e-9);
        }
        traj.validate(1e-9).unwrap();
    }
}
