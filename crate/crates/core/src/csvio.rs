//! Unified-format CSV serialization.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! serialize -> parse -> serialize is byte-identical and no precision is
//! lost. Rows are ordered by (Trajectory_ID, Time_Index).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::record::{record_count, Dataset, LongitudinalTrajectory, UnifiedRecord};

/// The exact unified header, in column order.
pub const UNIFIED_HEADER: &str = "Trajectory_ID,Time_Index,ID_LV,Pos_LV,Speed_LV,Acc_LV,ID_FAV,Pos_FAV,Speed_FAV,Acc_FAV,Space_Gap,Space_Headway,Speed_Diff";

/// Lossless float formatting shared by every CSV writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Serializes a dataset to unified CSV text.
pub fn unified_to_string(dataset: &[LongitudinalTrajectory]) -> String {
    let mut out = String::with_capacity(64 * (1 + record_count(dataset)));
    out.push_str(UNIFIED_HEADER);
    out.push('\n');
    for traj in dataset {
        for r in &traj.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.trajectory_id,
                fmt_f64(r.time_index),
                r.id_lv,
                fmt_f64(r.pos_lv),
                fmt_f64(r.speed_lv),
                fmt_f64(r.acc_lv),
                r.id_fav,
                fmt_f64(r.pos_fav),
                fmt_f64(r.speed_fav),
                fmt_f64(r.acc_fav),
                fmt_f64(r.space_gap),
                fmt_f64(r.space_headway),
                fmt_f64(r.speed_diff),
            );
        }
    }
    out
}

pub fn write_unified(path: &Path, dataset: &[LongitudinalTrajectory]) -> Result<()> {
    fs::write(path, unified_to_string(dataset))?;
    Ok(())
}

fn parse_i64(field: &str, source: &str, row: usize, col: &str) -> Result<i64> {
    field
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::ingest(source, row, format!("invalid integer in {col}: {field:?}")))
}

/// Empty fields read as NaN, the missing-value marker handled in Step 2.
fn parse_f64(field: &str, source: &str, row: usize, col: &str) -> Result<f64> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(f64::NAN);
    }
    t.parse::<f64>()
        .map_err(|_| Error::ingest(source, row, format!("invalid number in {col}: {field:?}")))
}

/// Parses unified CSV text back into trajectories.
///
/// Rows must be grouped by Trajectory_ID with ascending Time_Index; the time
/// step is inferred per trajectory and vehicle lengths are reconstructed from
/// the constant headway-minus-gap offset.
pub fn unified_from_string(text: &str, source: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ingest(source, 1, "empty file"))?;
    if header.trim_end() != UNIFIED_HEADER {
        return Err(Error::ingest(
            source,
            1,
            format!("unexpected header {:?}", header.trim_end()),
        ));
    }

    let mut dataset: Dataset = Vec::new();
    let mut current: Vec<UnifiedRecord> = Vec::new();
    let mut seen_ids: Vec<i64> = Vec::new();

    let flush = |records: &mut Vec<UnifiedRecord>, dataset: &mut Dataset| -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let delta_t = if records.len() >= 2 {
            records[1].time_index - records[0].time_index
        } else {
            return Err(Error::ingest(
                source,
                0,
                format!("trajectory {} has a single record", records[0].trajectory_id),
            ));
        };
        // Only the summed length is recoverable from headway - gap.
        let offset = records[0].space_headway - records[0].space_gap;
        dataset.push(LongitudinalTrajectory {
            trajectory_id: records[0].trajectory_id,
            delta_t,
            fav_length: offset,
            lv_length: offset,
            records: std::mem::take(records),
        });
        Ok(())
    };

    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(Error::ingest(
                source,
                row,
                format!("expected 13 fields, got {}", fields.len()),
            ));
        }
        let r = UnifiedRecord {
            trajectory_id: parse_i64(fields[0], source, row, "Trajectory_ID")?,
            time_index: parse_f64(fields[1], source, row, "Time_Index")?,
            id_lv: parse_i64(fields[2], source, row, "ID_LV")?,
            pos_lv: parse_f64(fields[3], source, row, "Pos_LV")?,
            speed_lv: parse_f64(fields[4], source, row, "Speed_LV")?,
            acc_lv: parse_f64(fields[5], source, row, "Acc_LV")?,
            id_fav: parse_i64(fields[6], source, row, "ID_FAV")?,
            pos_fav: parse_f64(fields[7], source, row, "Pos_FAV")?,
            speed_fav: parse_f64(fields[8], source, row, "Speed_FAV")?,
            acc_fav: parse_f64(fields[9], source, row, "Acc_FAV")?,
            space_gap: parse_f64(fields[10], source, row, "Space_Gap")?,
            space_headway: parse_f64(fields[11], source, row, "Space_Headway")?,
            speed_diff: parse_f64(fields[12], source, row, "Speed_Diff")?,
        };
        match current.last() {
            Some(prev) if prev.trajectory_id == r.trajectory_id => {
                if r.time_index <= prev.time_index {
                    return Err(Error::ingest(
                        source,
                        row,
                        format!(
                            "Time_Index not increasing within trajectory {} ({} after {})",
                            r.trajectory_id, r.time_index, prev.time_index
                        ),
                    ));
                }
                current.push(r);
            }
            Some(_) => {
                if seen_ids.contains(&r.trajectory_id) {
                    return Err(Error::ingest(
                        source,
                        row,
                        format!("trajectory {} appears non-contiguously", r.trajectory_id),
                    ));
                }
                seen_ids.push(current[0].trajectory_id);
                flush(&mut current, &mut dataset)?;
                current.push(r);
            }
            None => current.push(r),
        }
    }
    flush(&mut current, &mut dataset)?;
    Ok(dataset)
}

pub fn read_unified(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    unified_from_string(&text, &path.display().to_string())
}

/// Reads one numeric column from any CSV with a header row, skipping empty
/// cells. Used by the histogram export, which must work on both unified and
/// metrics files.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let source = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ingest(&source, 1, "empty file"))?;
    let col = header
        .trim_end()
        .split(',')
        .position(|c| c == column)
        .ok_or_else(|| Error::Schema(format!("column {column:?} not found in {source}")))?;
    let mut values = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(col)
            .ok_or_else(|| Error::ingest(&source, idx + 1, "short row"))?;
        let v = parse_f64(field, &source, idx + 1, column)?;
        if !v.is_nan() {
            values.push(v);
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let mut records = Vec::new();
        for k in 0..3 {
            let pos_fav = k as f64 * 2.0;
            records.push(UnifiedRecord {
                trajectory_id: 0,
                time_index: k as f64 * 0.1,
                id_lv: -1,
                pos_lv: pos_fav + 30.0,
                speed_lv: 20.0,
                acc_lv: 0.0,
                id_fav: 1,
                pos_fav,
                speed_fav: 20.0,
                acc_fav: 0.0,
                space_gap: 25.5,
                space_headway: 30.0,
                speed_diff: 0.0,
            });
        }
        vec![LongitudinalTrajectory {
            trajectory_id: 0,
            delta_t: 0.1,
            fav_length: 4.5,
            lv_length: 4.5,
            records,
        }]
    }

    #[test]
    fn header_is_exact() {
        let text = unified_to_string(&sample());
        assert!(text.starts_with(
            "Trajectory_ID,Time_Index,ID_LV,Pos_LV,Speed_LV,Acc_LV,ID_FAV,Pos_FAV,Speed_FAV,Acc_FAV,Space_Gap,Space_Headway,Speed_Diff\n"
        ));
    }

    #[test]
    fn serialize_parse_serialize_is_byte_identical() {
        let text = unified_to_string(&sample());
        let parsed = unified_from_string(&text, "mem").unwrap();
        assert_eq!(unified_to_string(&parsed), text);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(unified_from_string("A,B\n1,2\n", "mem").is_err());
    }

    #[test]
    fn rejects_non_monotone_time() {
        let mut text = unified_to_string(&sample());
        text.push_str("0,0.1,-1,30,20,0,1,0,20,0,25.5,30,0\n");
        assert!(unified_from_string(&text, "mem").is_err());
    }
}
