//! Step 2 general cleaning and Step 3 car-following hard margins.
//!
//! Both steps share one repair engine: mark cells per label, delete records
//! under long or boundary-touching mark runs, linearly interpolate short
//! runs, then re-organize trajectory and time numbering. Step 2 marks
//! missing values and iterative sigma-clip outliers; Step 3 marks values
//! outside fixed margins.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::parallel::map_ordered;
use crate::record::{Dataset, Label, LongitudinalTrajectory, UnifiedRecord};

/// A closed, open, or half-open interval of admissible values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub lo_open: bool,
    pub hi: f64,
    pub hi_open: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, lo_open: false, hi, hi_open: false }
    }

    pub fn at_least(lo: f64) -> Self {
        Interval { lo, lo_open: false, hi: f64::INFINITY, hi_open: true }
    }

    pub fn open_closed(lo: f64, hi: f64) -> Self {
        Interval { lo, lo_open: true, hi, hi_open: false }
    }

    /// Bound values themselves are inside unless the side is open. NaN is
    /// never contained.
    pub fn contains(&self, v: f64) -> bool {
        if v.is_nan() {
            return false;
        }
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        above && below
    }
}

/// Which population the sigma-clip statistics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipScope {
    /// One mean/std per label over the whole dataset (default).
    Dataset,
    /// Independent statistics per trajectory.
    Trajectory,
}

/// All thresholds of Steps 2 and 3.
#[derive(Debug, Clone)]
pub struct CleaningConfig {
    /// Sigma-clip width per label; labels without an entry are exempt.
    pub eta_by_label: BTreeMap<Label, f64>,
    /// Mark runs at least this long delete their records instead of
    /// interpolating.
    pub consecutive_limit: usize,
    /// Trajectories shorter than this after re-organization are dropped.
    pub min_trajectory_points: usize,
    /// Step-3 hard margins per label.
    pub step3_bounds: BTreeMap<Label, Interval>,
    pub scope: ClipScope,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        let mut eta_by_label = BTreeMap::new();
        eta_by_label.insert(Label::AccFav, 10.0);
        eta_by_label.insert(Label::AccLv, 10.0);
        eta_by_label.insert(Label::SpaceGap, 10.0);
        let mut step3_bounds = BTreeMap::new();
        step3_bounds.insert(Label::SpeedFav, Interval::at_least(0.1));
        step3_bounds.insert(Label::SpeedLv, Interval::at_least(0.1));
        step3_bounds.insert(Label::AccFav, Interval::closed(-5.0, 5.0));
        step3_bounds.insert(Label::AccLv, Interval::closed(-5.0, 5.0));
        step3_bounds.insert(Label::SpaceGap, Interval::open_closed(0.0, 120.0));
        CleaningConfig {
            eta_by_label,
            consecutive_limit: 10,
            min_trajectory_points: 70,
            step3_bounds,
            scope: ClipScope::Dataset,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        for (label, eta) in &self.eta_by_label {
            if *eta <= 0.0 {
                return Err(Error::Argument(format!("eta for {} must be > 0, got {eta}", label.key())));
            }
        }
        if self.consecutive_limit < 1 {
            return Err(Error::Argument("consecutive_limit must be >= 1".into()));
        }
        if self.min_trajectory_points < 2 {
            return Err(Error::Argument("min_trajectory_points must be >= 2".into()));
        }
        for (label, b) in &self.step3_bounds {
            if !(b.lo < b.hi) {
                return Err(Error::Argument(format!(
                    "bounds for {} are not well-ordered: [{}, {}]",
                    label.key(),
                    b.lo,
                    b.hi
                )));
            }
        }
        Ok(())
    }
}

/// Per-label mark columns aligned to one trajectory's records.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierMask {
    columns: BTreeMap<Label, Vec<bool>>,
    len: usize,
}

impl OutlierMask {
    pub fn empty(len: usize) -> Self {
        OutlierMask { columns: BTreeMap::new(), len }
    }

    /// Missing-value marks for every cleanable label of a trajectory.
    pub fn missing_only(traj: &LongitudinalTrajectory) -> Self {
        let mut mask = OutlierMask::empty(traj.len());
        for label in Label::ALL {
            let col: Vec<bool> = traj.records.iter().map(|r| label.get(r).is_nan()).collect();
            if col.iter().any(|&m| m) {
                mask.columns.insert(label, col);
            }
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn column(&self, label: Label) -> Option<&[bool]> {
        self.columns.get(&label).map(Vec::as_slice)
    }

    /// Unions a mark column into the mask.
    pub fn merge(&mut self, label: Label, marks: Vec<bool>) {
        assert_eq!(marks.len(), self.len, "mask column length mismatch");
        match self.columns.get_mut(&label) {
            Some(col) => {
                for (c, m) in col.iter_mut().zip(marks) {
                    *c |= m;
                }
            }
            None => {
                if marks.iter().any(|&m| m) {
                    self.columns.insert(label, marks);
                }
            }
        }
    }

    pub fn any(&self) -> bool {
        self.columns.values().any(|c| c.iter().any(|&m| m))
    }
}

/// Iterative sigma clipping of one series to a fixpoint.
///
/// NaN entries are missing values and start marked. Each pass recomputes the
/// mean and sample standard deviation over unmarked entries and marks
/// everything outside `mean +/- eta * std`; passes repeat until no new mark
/// appears. The marked set only ever grows.
pub fn mark_outliers_iterative(series: &[f64], eta: f64) -> Result<Vec<bool>> {
    if eta <= 0.0 {
        return Err(Error::Argument(format!("eta must be > 0, got {eta}")));
    }
    let mut marked: Vec<bool> = series.iter().map(|v| v.is_nan()).collect();
    loop {
        let mut n = 0usize;
        let mut sum = 0.0;
        for (v, &m) in series.iter().zip(&marked) {
            if !m {
                n += 1;
                sum += *v;
            }
        }
        if n <= 1 {
            break;
        }
        let mean = sum / n as f64;
        let mut ssd = 0.0;
        for (v, &m) in series.iter().zip(&marked) {
            if !m {
                let d = *v - mean;
                ssd += d * d;
            }
        }
        let std = (ssd / (n - 1) as f64).sqrt();
        let lo = mean - eta * std;
        let hi = mean + eta * std;
        let mut changed = false;
        for (v, m) in series.iter().zip(marked.iter_mut()) {
            if !*m && (*v < lo || *v > hi) {
                *m = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(marked)
}

/// Marks entries strictly outside a hard margin. NaN counts as outside.
pub fn mark_out_of_bounds(series: &[f64], interval: &Interval) -> Vec<bool> {
    series.iter().map(|&v| !interval.contains(v)).collect()
}

/// One linear interpolation written into a surviving record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolation {
    pub label: Label,
    pub index: usize,
    pub value: f64,
}

/// Outcome of the mark-resolution pass over one trajectory.
#[derive(Debug, Clone, Default)]
pub struct RepairPlan {
    /// Record indices to delete (union across labels).
    pub delete: Vec<bool>,
    pub interpolations: Vec<Interpolation>,
}

impl RepairPlan {
    /// Deleted index runs as `(start, len)`, for reporting and tests.
    pub fn delete_runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &d) in self.delete.iter().enumerate() {
            match (d, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - s));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.delete.len() - s));
        }
        runs
    }

    pub fn delete_count(&self) -> usize {
        self.delete.iter().filter(|&&d| d).count()
    }
}

/// Resolves the marks of one trajectory into deletions and interpolations.
///
/// Per label: runs of at least `consecutive_limit` marks delete their
/// records, runs touching a trajectory boundary delete theirs (no neighbor
/// to interpolate from), shorter interior runs interpolate linearly between
/// the nearest unmarked neighbors. Deletion applies to whole records.
pub fn repair_or_remove(
    traj: &LongitudinalTrajectory,
    mask: &OutlierMask,
    consecutive_limit: usize,
) -> RepairPlan {
    let n = traj.len();
    let mut plan = RepairPlan {
        delete: vec![false; n],
        interpolations: Vec::new(),
    };
    for label in Label::ALL {
        let Some(marks) = mask.column(label) else {
            continue;
        };
        let mut i = 0;
        while i < n {
            if !marks[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && marks[i] {
                i += 1;
            }
            let len = i - start;
            let at_boundary = start == 0 || i == n;
            if len >= consecutive_limit || at_boundary {
                for d in &mut plan.delete[start..i] {
                    *d = true;
                }
            } else {
                let left = start - 1;
                let right = i;
                let v_left = label.get(&traj.records[left]);
                let v_right = label.get(&traj.records[right]);
                let span = (right - left) as f64;
                for k in start..i {
                    let frac = (k - left) as f64 / span;
                    plan.interpolations.push(Interpolation {
                        label,
                        index: k,
                        value: v_left + (v_right - v_left) * frac,
                    });
                }
            }
        }
    }
    plan
}

/// Records that survive a repair plan, with interpolations written in and
/// the row identities restored where an interpolated cell broke them.
fn apply_repair(traj: &LongitudinalTrajectory, plan: &RepairPlan) -> Vec<UnifiedRecord> {
    let mut records = traj.records.clone();
    let offset = traj.length_offset();
    let mut speeds_touched = vec![false; records.len()];
    let mut gap_touched = vec![false; records.len()];
    for interp in &plan.interpolations {
        interp.label.set(&mut records[interp.index], interp.value);
        match interp.label {
            Label::SpeedFav | Label::SpeedLv => speeds_touched[interp.index] = true,
            Label::SpaceGap => gap_touched[interp.index] = true,
            Label::AccFav | Label::AccLv => {}
        }
    }
    for (k, r) in records.iter_mut().enumerate() {
        if speeds_touched[k] {
            r.speed_diff = r.speed_lv - r.speed_fav;
        }
        if gap_touched[k] {
            r.space_headway = r.space_gap + offset;
            r.pos_lv = r.pos_fav + r.space_headway;
        }
    }
    records
        .into_iter()
        .zip(&plan.delete)
        .filter(|(_, &d)| !d)
        .map(|(r, _)| r)
        .collect()
}

/// A trajectory between repair and re-organization: records may have time
/// holes where rows were deleted.
#[derive(Debug, Clone)]
pub struct PendingTrajectory {
    pub delta_t: f64,
    pub fav_length: f64,
    pub lv_length: f64,
    pub records: Vec<UnifiedRecord>,
}

/// Splits at time discontinuities, drops short survivors, renumbers
/// trajectory ids and time indices from zero, and rebases positions so
/// `Pos_FAV` restarts at 0 with `Pos_LV = Pos_FAV + Space_Headway` row-wise.
pub fn reorganize(parts: Vec<PendingTrajectory>, min_points: usize) -> Dataset {
    let mut out: Dataset = Vec::new();
    for part in parts {
        let mut segment: Vec<UnifiedRecord> = Vec::new();
        let flush = |segment: &mut Vec<UnifiedRecord>, out: &mut Dataset| {
            if segment.len() >= min_points {
                let id = out.len() as i64;
                let base = segment[0].pos_fav;
                let mut records = std::mem::take(segment);
                for (j, r) in records.iter_mut().enumerate() {
                    r.trajectory_id = id;
                    r.time_index = j as f64 * part.delta_t;
                    r.pos_fav -= base;
                    r.pos_lv = r.pos_fav + r.space_headway;
                }
                out.push(LongitudinalTrajectory {
                    trajectory_id: id,
                    delta_t: part.delta_t,
                    fav_length: part.fav_length,
                    lv_length: part.lv_length,
                    records,
                });
            } else {
                segment.clear();
            }
        };
        for r in &part.records {
            if let Some(prev) = segment.last() {
                if r.time_index - prev.time_index > 1.5 * part.delta_t {
                    flush(&mut segment, &mut out);
                }
            }
            segment.push(*r);
        }
        flush(&mut segment, &mut out);
    }
    out
}

fn structural_nan_rows(traj: &LongitudinalTrajectory) -> Vec<usize> {
    traj.records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            r.time_index.is_nan()
                || r.pos_fav.is_nan()
                || r.pos_lv.is_nan()
                || r.space_headway.is_nan()
                || r.speed_diff.is_nan()
        })
        .map(|(i, _)| i)
        .collect()
}

fn repair_all(
    dataset: &[LongitudinalTrajectory],
    masks: &[OutlierMask],
    consecutive_limit: usize,
) -> Vec<PendingTrajectory> {
    let indices: Vec<usize> = (0..dataset.len()).collect();
    map_ordered(&indices, |&i| {
        let traj = &dataset[i];
        let mut plan = repair_or_remove(traj, &masks[i], consecutive_limit);
        for row in structural_nan_rows(traj) {
            plan.delete[row] = true;
        }
        PendingTrajectory {
            delta_t: traj.delta_t,
            fav_length: traj.fav_length,
            lv_length: traj.lv_length,
            records: apply_repair(traj, &plan),
        }
    })
}

/// Dataset-scope sigma clipping of one label: one global mean/std per pass.
/// Per-trajectory partial sums merge sequentially in trajectory order, so
/// the result does not depend on the parallelism degree.
fn mark_dataset_scope(dataset: &[LongitudinalTrajectory], label: Label, eta: f64) -> Vec<Vec<bool>> {
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut marks: Vec<Vec<bool>> = map_ordered(&indices, |&i| {
        dataset[i]
            .records
            .iter()
            .map(|r| label.get(r).is_nan())
            .collect()
    });
    loop {
        let partials: Vec<(usize, f64)> = map_ordered(&indices, |&i| {
            let mut n = 0usize;
            let mut sum = 0.0;
            for (r, &m) in dataset[i].records.iter().zip(&marks[i]) {
                if !m {
                    n += 1;
                    sum += label.get(r);
                }
            }
            (n, sum)
        });
        let (n, sum) = partials
            .iter()
            .fold((0usize, 0.0), |(an, asum), (bn, bsum)| (an + bn, asum + bsum));
        if n <= 1 {
            break;
        }
        let mean = sum / n as f64;
        let ssds: Vec<f64> = map_ordered(&indices, |&i| {
            let mut ssd = 0.0;
            for (r, &m) in dataset[i].records.iter().zip(&marks[i]) {
                if !m {
                    let d = label.get(r) - mean;
                    ssd += d * d;
                }
            }
            ssd
        });
        let ssd: f64 = ssds.iter().sum();
        let std = (ssd / (n - 1) as f64).sqrt();
        let lo = mean - eta * std;
        let hi = mean + eta * std;
        let updates: Vec<(Vec<bool>, bool)> = map_ordered(&indices, |&i| {
            let mut col = marks[i].clone();
            let mut changed = false;
            for (r, m) in dataset[i].records.iter().zip(col.iter_mut()) {
                let v = label.get(r);
                if !*m && (v < lo || v > hi) {
                    *m = true;
                    changed = true;
                }
            }
            (col, changed)
        });
        let mut changed = false;
        for (i, (col, c)) in updates.into_iter().enumerate() {
            marks[i] = col;
            changed |= c;
        }
        if !changed {
            break;
        }
    }
    marks
}

fn build_masks_step2(
    dataset: &[LongitudinalTrajectory],
    config: &CleaningConfig,
) -> Result<Vec<OutlierMask>> {
    let mut masks: Vec<OutlierMask> = dataset.iter().map(OutlierMask::missing_only).collect();
    match config.scope {
        ClipScope::Dataset => {
            for (&label, &eta) in &config.eta_by_label {
                let cols = mark_dataset_scope(dataset, label, eta);
                for (mask, col) in masks.iter_mut().zip(cols) {
                    mask.merge(label, col);
                }
            }
        }
        ClipScope::Trajectory => {
            let indices: Vec<usize> = (0..dataset.len()).collect();
            for (&label, &eta) in &config.eta_by_label {
                let cols: Vec<Result<Vec<bool>>> = map_ordered(&indices, |&i| {
                    mark_outliers_iterative(&dataset[i].column(label), eta)
                });
                for (mask, col) in masks.iter_mut().zip(cols) {
                    mask.merge(label, col?);
                }
            }
        }
    }
    Ok(masks)
}

/// Step 2: iterative sigma clipping, repair-or-remove, re-organization.
/// Output is the longitudinal trajectory dataset (free flow included).
pub fn clean_step2(dataset: &[LongitudinalTrajectory], config: &CleaningConfig) -> Result<Dataset> {
    config.validate()?;
    let masks = build_masks_step2(dataset, config)?;
    let parts = repair_all(dataset, &masks, config.consecutive_limit);
    Ok(reorganize(parts, config.min_trajectory_points))
}

/// Step 3: hard margins, then the same repair engine. Output is the
/// car-following trajectory dataset.
pub fn clean_step3(dataset: &[LongitudinalTrajectory], config: &CleaningConfig) -> Result<Dataset> {
    config.validate()?;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let masks: Vec<OutlierMask> = map_ordered(&indices, |&i| {
        let traj = &dataset[i];
        let mut mask = OutlierMask::missing_only(traj);
        for (&label, interval) in &config.step3_bounds {
            mask.merge(label, mark_out_of_bounds(&traj.column(label), interval));
        }
        mask
    });
    let parts = repair_all(dataset, &masks, config.consecutive_limit);
    Ok(reorganize(parts, config.min_trajectory_points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_clip_marks_spike_then_stops() {
        let marks = mark_outliers_iterative(&[1.0, 1.0, 1.0, 1.0, 100.0], 1.0).unwrap();
        assert_eq!(marks, vec![false, false, false, false, true]);
    }

    #[test]
    fn sigma_clip_zero_variance_marks_nothing() {
        let marks = mark_outliers_iterative(&[5.0, 5.0, 5.0, 5.0], 3.0).unwrap();
        assert!(marks.iter().all(|&m| !m));
    }

    #[test]
    fn sigma_clip_missing_marker_always_marked() {
        let marks = mark_outliers_iterative(&[1.0, f64::NAN, 1.0], 100.0).unwrap();
        assert_eq!(marks, vec![false, true, false]);
    }

    #[test]
    fn sigma_clip_all_marked_series_stays_marked() {
        let marks = mark_outliers_iterative(&[f64::NAN, f64::NAN], 1.0).unwrap();
        assert_eq!(marks, vec![true, true]);
    }

    #[test]
    fn bounds_examples() {
        let speed = Interval::at_least(0.1);
        assert_eq!(mark_out_of_bounds(&[0.05, 0.1], &speed), vec![true, false]);
        let gap = Interval::open_closed(0.0, 120.0);
        assert_eq!(
            mark_out_of_bounds(&[121.0, 120.0, 0.0], &gap),
            vec![true, false, true]
        );
        let acc = Interval::closed(-5.0, 5.0);
        assert_eq!(mark_out_of_bounds(&[-5.0, -5.01], &acc), vec![false, true]);
    }

    fn steady_trajectory(n: usize) -> LongitudinalTrajectory {
        let dt = 0.1;
        let records = (0..n)
            .map(|k| {
                let pos_fav = 20.0 * k as f64 * dt;
                UnifiedRecord {
                    trajectory_id: 0,
                    time_index: k as f64 * dt,
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
                }
            })
            .collect();
        LongitudinalTrajectory {
            trajectory_id: 0,
            delta_t: dt,
            fav_length: 4.5,
            lv_length: 4.5,
            records,
        }
    }

    #[test]
    fn short_run_interpolates_midpoint() {
        let mut traj = steady_trajectory(80);
        traj.records[40].acc_fav = 400.0;
        let mut mask = OutlierMask::empty(traj.len());
        let mut col = vec![false; traj.len()];
        col[40] = true;
        mask.merge(Label::AccFav, col);
        let plan = repair_or_remove(&traj, &mask, 10);
        assert_eq!(plan.delete_count(), 0);
        assert_eq!(plan.interpolations.len(), 1);
        // neighbors are both 0, midpoint is 0
        assert_abs_diff_eq!(plan.interpolations[0].value, 0.0);

        // the [1, M, 3] -> [1, 2, 3] shape
        traj.records[50].acc_fav = 1.0;
        traj.records[51].acc_fav = 999.0;
        traj.records[52].acc_fav = 3.0;
        let mut col = vec![false; traj.len()];
        col[51] = true;
        let mut mask = OutlierMask::empty(traj.len());
        mask.merge(Label::AccFav, col);
        let plan = repair_or_remove(&traj, &mask, 10);
        assert_eq!(plan.interpolations.len(), 1);
        assert_abs_diff_eq!(plan.interpolations[0].value, 2.0);
    }

    #[test]
    fn ten_consecutive_marks_delete_records() {
        let traj = steady_trajectory(100);
        let mut col = vec![false; 100];
        for m in col.iter_mut().skip(30).take(10) {
            *m = true;
        }
        let mut mask = OutlierMask::empty(100);
        mask.merge(Label::SpaceGap, col);
        let plan = repair_or_remove(&traj, &mask, 10);
        assert_eq!(plan.delete_runs(), vec![(30, 10)]);
        assert!(plan.interpolations.is_empty());

        // nine in a row interpolate instead
        let mut col = vec![false; 100];
        for m in col.iter_mut().skip(30).take(9) {
            *m = true;
        }
        let mut mask = OutlierMask::empty(100);
        mask.merge(Label::SpaceGap, col);
        let plan = repair_or_remove(&traj, &mask, 10);
        assert_eq!(plan.delete_count(), 0);
        assert_eq!(plan.interpolations.len(), 9);
    }

    #[test]
    fn boundary_mark_deletes_record() {
        let traj = steady_trajectory(80);
        let mut col = vec![false; 80];
        col[0] = true;
        let mut mask = OutlierMask::empty(80);
        mask.merge(Label::AccFav, col);
        let plan = repair_or_remove(&traj, &mask, 10);
        assert_eq!(plan.delete_runs(), vec![(0, 1)]);
    }

    #[test]
    fn reorganize_splits_and_renumbers() {
        // 150 records with one hole at index 80 -> segments of 80 and 70
        let traj = steady_trajectory(151);
        let mut records = traj.records.clone();
        records.remove(80);
        let parts = vec![PendingTrajectory {
            delta_t: traj.delta_t,
            fav_length: traj.fav_length,
            lv_length: traj.lv_length,
            records,
        }];
        let out = reorganize(parts, 70);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].trajectory_id, 0);
        assert_eq!(out[1].trajectory_id, 1);
        assert_eq!(out[0].len(), 80);
        assert_eq!(out[1].len(), 70);
        for traj in &out {
            assert_eq!(traj.records[0].time_index, 0.0);
            assert_eq!(traj.records[0].pos_fav, 0.0);
            assert_abs_diff_eq!(
                traj.records[0].pos_lv,
                traj.records[0].space_headway,
                epsilon = 1e-12
            );
            traj.validate(1e-9).unwrap();
        }
    }

    #[test]
    fn reorganize_drops_short_segment() {
        let traj = steady_trajectory(69);
        let parts = vec![PendingTrajectory {
            delta_t: traj.delta_t,
            fav_length: traj.fav_length,
            lv_length: traj.lv_length,
            records: traj.records,
        }];
        assert!(reorganize(parts, 70).is_empty());
    }

    #[test]
    fn step2_removes_huge_spike() {
        let mut traj = steady_trajectory(200);
        // a wild sensor error in the middle
        traj.records[100].acc_fav = -447.5;
        let out = clean_step2(&[traj], &CleaningConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        for r in &out[0].records {
            assert!(r.acc_fav.abs() < 1.0, "spike survived: {}", r.acc_fav);
        }
        assert_eq!(out[0].len(), 200);
    }

    #[test]
    fn step2_is_idempotent_byte_for_byte() {
        let mut traj = steady_trajectory(200);
        traj.records[100].acc_fav = -447.5;
        traj.records[150].space_gap = f64::NAN;
        let config = CleaningConfig::default();
        let once = clean_step2(&[traj], &config).unwrap();
        let twice = clean_step2(&once, &config).unwrap();
        assert_eq!(
            crate::csvio::unified_to_string(&once),
            crate::csvio::unified_to_string(&twice)
        );
    }

    #[test]
    fn step2_drops_trajectory_shrunk_below_minimum() {
        let mut traj = steady_trajectory(75);
        // ten consecutive missing samples delete 10 records -> 30 + 35 < 70
        for k in 30..40 {
            traj.records[k].acc_lv = f64::NAN;
        }
        let out = clean_step2(&[traj], &CleaningConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn step3_excises_stationary_spell_and_splits() {
        let mut traj = steady_trajectory(350);
        for k in 100..250 {
            traj.records[k].speed_fav = 0.05;
            traj.records[k].speed_diff = traj.records[k].speed_lv - 0.05;
        }
        let out = clean_step3(&[traj], &CleaningConfig::default()).unwrap();
        assert_eq!(out.len(), 2, "stationary spell should split the trajectory");
        assert_eq!(out[0].len(), 100);
        assert_eq!(out[1].len(), 100);
        for traj in &out {
            for r in &traj.records {
                assert!(r.speed_fav >= 0.1);
            }
        }
    }

    #[test]
    fn step3_interpolates_single_gap_sample() {
        let mut traj = steady_trajectory(100);
        traj.records[50].space_gap = 125.0;
        traj.records[50].space_headway = 125.0 + 4.5;
        traj.records[50].pos_lv = traj.records[50].pos_fav + traj.records[50].space_headway;
        let out = clean_step3(&[traj], &CleaningConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 100);
        let r = &out[0].records[50];
        assert_abs_diff_eq!(r.space_gap, 25.5, epsilon = 1e-9);
        // row identities restored after interpolation
        assert_abs_diff_eq!(r.space_headway, 30.0, epsilon = 1e-9);
        out[0].validate(1e-9).unwrap();
    }

    #[test]
    fn step3_output_respects_all_bounds() {
        let mut traj = steady_trajectory(300);
        traj.records[40].acc_fav = 8.0;
        traj.records[90].acc_lv = -7.5;
        traj.records[140].space_gap = 130.0;
        traj.records[190].speed_lv = 0.0;
        traj.records[190].speed_diff = 0.0 - traj.records[190].speed_fav;
        let config = CleaningConfig::default();
        let out = clean_step3(&[traj], &config).unwrap();
        assert!(!out.is_empty());
        for traj in &out {
            for r in &traj.records {
                assert!(r.speed_fav >= 0.1 && r.speed_lv >= 0.1);
                assert!(r.acc_fav.abs() <= 5.0 && r.acc_lv.abs() <= 5.0);
                assert!(r.space_gap > 0.0 && r.space_gap <= 120.0);
            }
        }
    }

    #[test]
    fn trajectory_scope_clips_per_trajectory() {
        let mut a = steady_trajectory(150);
        a.records[50].acc_fav = 50.0;
        let config = CleaningConfig {
            scope: ClipScope::Trajectory,
            ..CleaningConfig::default()
        };
        let out = clean_step2(&[a], &config).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].records[50].acc_fav.abs() < 1.0);
    }
}
