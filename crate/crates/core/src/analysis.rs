//! Dataset-level statistics, correlation analysis, smoothing, plot-data
//! exports, and the linear car-following calibration example.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::parallel::map_ordered;
use crate::record::{Label, LongitudinalTrajectory};

/// Mean, sample standard deviation, minimum and maximum of one label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-label summary over a whole dataset.
pub type StatsSummary = BTreeMap<Label, LabelStats>;

/// Two-pass statistics per label, with per-trajectory partials merged in
/// trajectory order so the result is independent of the parallelism degree.
pub fn label_stats(dataset: &[LongitudinalTrajectory]) -> Result<StatsSummary> {
    let total: usize = dataset.iter().map(|t| t.len()).sum();
    if total == 0 {
        return Err(Error::Argument("label statistics of an empty dataset".into()));
    }
    let mut summary = StatsSummary::new();
    for label in Label::ALL {
        let partials: Vec<(f64, f64, f64)> = map_ordered(dataset, |traj| {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for r in &traj.records {
                let v = label.get(r);
                sum += v;
                min = min.min(v);
                max = max.max(v);
            }
            (sum, min, max)
        });
        let (sum, min, max) = partials.iter().fold(
            (0.0, f64::INFINITY, f64::NEG_INFINITY),
            |(s, lo, hi), &(ps, plo, phi)| (s + ps, lo.min(plo), hi.max(phi)),
        );
        let mean = sum / total as f64;
        let ssds: Vec<f64> = map_ordered(dataset, |traj| {
            traj.records
                .iter()
                .map(|r| {
                    let d = label.get(r) - mean;
                    d * d
                })
                .sum()
        });
        let ssd: f64 = ssds.iter().sum();
        let std = if total > 1 {
            (ssd / (total - 1) as f64).sqrt()
        } else {
            0.0
        };
        summary.insert(label, LabelStats { mean, std, min, max });
    }
    Ok(summary)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Correlation(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Correlation("need at least 2 samples".into()));
    }
    Ok(())
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Correlation("zero variance input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Fractional ranks with ties averaged.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values").then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // average 1-based rank of the tied block
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation: the product-moment coefficient of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Centered moving average; the window truncates to available neighbors at
/// the series boundaries, so the output keeps the input length.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Argument(format!("window must be odd and >= 1, got {window}")));
    }
    let half = window / 2;
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let slice = &series[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

/// A density histogram: `edges` has one more entry than `densities` and the
/// densities integrate to one over the binned range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

/// Bin count from the Freedman-Diaconis rule, falling back to Sturges when
/// the interquartile range collapses.
fn default_bin_count(sorted: &[f64]) -> usize {
    let n = sorted.len();
    let span = sorted[n - 1] - sorted[0];
    if span == 0.0 {
        return 1;
    }
    let quantile = |q: f64| -> f64 {
        let pos = q * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    };
    let iqr = quantile(0.75) - quantile(0.25);
    if iqr <= 0.0 {
        return ((n as f64).log2().ceil() as usize + 1).max(1);
    }
    let width = 2.0 * iqr / (n as f64).cbrt();
    ((span / width).ceil() as usize).clamp(1, 10_000)
}

/// Normalized histogram over the defined values of a series.
pub fn histogram(series: &[f64], bins: Option<usize>) -> Result<Histogram> {
    let values: Vec<f64> = series.iter().copied().filter(|v| !v.is_nan()).collect();
    if values.is_empty() {
        return Err(Error::Argument("histogram of an empty series".into()));
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let bins = match bins {
        Some(b) if b >= 1 => b,
        Some(b) => return Err(Error::Argument(format!("bin count must be >= 1, got {b}"))),
        None => default_bin_count(&sorted),
    };
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    // a point mass still needs a finite-width bin
    let (lo, hi) = if min == max { (min - 0.5, max + 0.5) } else { (min, max) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = values.len() as f64;
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
    })
}

/// One scatter row: trajectory-smoothed follower acceleration against the
/// three car-following regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub acc_fav_smoothed: f64,
    pub space_gap: f64,
    pub speed_fav: f64,
    pub speed_diff: f64,
}

/// Scatter-plot export with the acceleration smoothed by a window of three,
/// never across trajectory boundaries.
pub fn scatter_export(dataset: &[LongitudinalTrajectory]) -> Result<Vec<ScatterRow>> {
    let per_traj: Vec<Result<Vec<ScatterRow>>> = map_ordered(dataset, |traj| {
        let smoothed = moving_average(&traj.column(Label::AccFav), 3)?;
        Ok(traj
            .records
            .iter()
            .zip(smoothed)
            .map(|(r, a)| ScatterRow {
                acc_fav_smoothed: a,
                space_gap: r.space_gap,
                speed_fav: r.speed_fav,
                speed_diff: r.speed_diff,
            })
            .collect())
    });
    let mut rows = Vec::new();
    for part in per_traj {
        rows.extend(part?);
    }
    Ok(rows)
}

/// Pearson and Spearman coefficients of the follower acceleration against
/// each model regressor, over the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub pearson_gap: f64,
    pub pearson_speed: f64,
    pub pearson_speed_diff: f64,
    pub spearman_gap: f64,
    pub spearman_speed: f64,
    pub spearman_speed_diff: f64,
}

pub fn correlation_report(dataset: &[LongitudinalTrajectory]) -> Result<CorrelationReport> {
    let mut acc = Vec::new();
    let mut gap = Vec::new();
    let mut speed = Vec::new();
    let mut dv = Vec::new();
    for traj in dataset {
        for r in &traj.records {
            acc.push(r.acc_fav);
            gap.push(r.space_gap);
            speed.push(r.speed_fav);
            dv.push(r.speed_diff);
        }
    }
    Ok(CorrelationReport {
        pearson_gap: pearson(&acc, &gap)?,
        pearson_speed: pearson(&acc, &speed)?,
        pearson_speed_diff: pearson(&acc, &dv)?,
        spearman_gap: spearman(&acc, &gap)?,
        spearman_speed: spearman(&acc, &speed)?,
        spearman_speed_diff: spearman(&acc, &dv)?,
    })
}

/// Calibrated linear car-following model
/// `a_f = k_gap * gap + k_dv * speed_diff + k_v * v_f + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCFModel {
    pub k_gap: f64,
    pub k_dv: f64,
    pub k_v: f64,
    pub bias: f64,
    pub rmse: f64,
}

impl LinearCFModel {
    pub fn predict(&self, gap: f64, speed_diff: f64, speed: f64) -> f64 {
        self.k_gap * gap + self.k_dv * speed_diff + self.k_v * speed + self.bias
    }
}

/// Solves a small symmetric system by Gaussian elimination with partial
/// pivoting; near-zero pivots signal rank deficiency.
fn solve4(mut m: [[f64; 5]; 4]) -> Result<[f64; 4]> {
    let scale = m
        .iter()
        .flat_map(|row| row[..4].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = scale.max(1.0) * 1e-12;
    for col in 0..4 {
        let pivot_row = (col..4)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot_row][col].abs() <= tol {
            return Err(Error::Calibration(
                "regressor matrix is rank deficient".into(),
            ));
        }
        m.swap(col, pivot_row);
        for row in 0..4 {
            if row == col {
                continue;
            }
            let factor = m[row][col] / m[col][col];
            for k in col..5 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    Ok([
        m[0][4] / m[0][0],
        m[1][4] / m[1][1],
        m[2][4] / m[2][2],
        m[3][4] / m[3][3],
    ])
}

/// Least-squares fit of the linear car-following model via the normal
/// equations, reporting the RMSE on the fitting set.
pub fn calibrate_linear_cf(dataset: &[LongitudinalTrajectory]) -> Result<LinearCFModel> {
    let mut rows: Vec<[f64; 4]> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for traj in dataset {
        for r in &traj.records {
            rows.push([r.space_gap, r.speed_diff, r.speed_fav, 1.0]);
            targets.push(r.acc_fav);
        }
    }
    if rows.len() < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 records, got {}",
            rows.len()
        )));
    }
    // normal equations X^T X beta = X^T y
    let mut m = [[0.0f64; 5]; 4];
    for (row, &y) in rows.iter().zip(&targets) {
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += row[i] * row[j];
            }
            m[i][4] += row[i] * y;
        }
    }
    let beta = solve4(m)?;
    let sse: f64 = rows
        .iter()
        .zip(&targets)
        .map(|(row, &y)| {
            let pred = row[0] * beta[0] + row[1] * beta[1] + row[2] * beta[2] + beta[3];
            let e = y - pred;
            e * e
        })
        .sum();
    Ok(LinearCFModel {
        k_gap: beta[0],
        k_dv: beta[1],
        k_v: beta[2],
        bias: beta[3],
        rmse: (sse / rows.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Dataset, UnifiedRecord};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(pearson(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        // hand product-moment computation: sqrt(3)/2
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(r, 3f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.866, epsilon = 1e-3);
    }

    #[test]
    fn pearson_zero_variance_is_undefined() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_monotone_nonlinear() {
        let x = [0.5f64, 1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        assert_relative_eq!(spearman(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_relative_eq!(spearman(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn average_ranks_for_ties() {
        assert_eq!(fractional_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn moving_average_examples() {
        let out = moving_average(&[0.0, 3.0, 6.0, 9.0], 3).unwrap();
        assert_eq!(out, vec![1.5, 3.0, 6.0, 7.5]);
        let constant = moving_average(&[2.0, 2.0, 2.0], 3).unwrap();
        assert_eq!(constant, vec![2.0, 2.0, 2.0]);
        let identity = moving_average(&[5.0, -1.0, 4.0], 1).unwrap();
        assert_eq!(identity, vec![5.0, -1.0, 4.0]);
        assert!(moving_average(&[1.0], 2).is_err());
    }

    #[test]
    fn histogram_point_mass() {
        let h = histogram(&[7.0; 100], None).unwrap();
        assert_eq!(h.densities.len(), 1);
        let width = h.edges[1] - h.edges[0];
        assert_relative_eq!(h.densities[0] * width, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..5000).map(|_| rng.gen_range(-3.0..9.0)).collect();
        let h = histogram(&values, Some(40)).unwrap();
        let integral: f64 = h
            .densities
            .iter()
            .enumerate()
            .map(|(i, d)| d * (h.edges[i + 1] - h.edges[i]))
            .sum();
        assert_relative_eq!(integral, 1.0, epsilon = 1e-9);
        // roughly flat for uniform samples
        for d in &h.densities {
            assert_abs_diff_eq!(*d, 1.0 / 12.0, epsilon = 0.03);
        }
    }

    #[test]
    fn histogram_skips_undefined_values() {
        let h = histogram(&[1.0, f64::NAN, 2.0, f64::NAN], Some(2)).unwrap();
        let integral: f64 = h
            .densities
            .iter()
            .enumerate()
            .map(|(i, d)| d * (h.edges[i + 1] - h.edges[i]))
            .sum();
        assert_relative_eq!(integral, 1.0, epsilon = 1e-12);
        assert!(histogram(&[f64::NAN], None).is_err());
    }

    fn synthetic_cf_dataset(
        model: (f64, f64, f64, f64),
        noise_sigma: f64,
        n_traj: usize,
        len: usize,
        seed: u64,
    ) -> Dataset {
        let (k_gap, k_dv, k_v, bias) = model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dataset = Vec::new();
        for id in 0..n_traj {
            let records = (0..len)
                .map(|k| {
                    let gap = rng.gen_range(8.0..80.0);
                    let speed = rng.gen_range(3.0..30.0);
                    let dv = rng.gen_range(-3.0..3.0);
                    let noise = if noise_sigma > 0.0 {
                        // Box-Muller from two uniforms
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        noise_sigma
                            * (-2.0 * u1.ln()).sqrt()
                            * (std::f64::consts::TAU * u2).cos()
                    } else {
                        0.0
                    };
                    let acc = k_gap * gap + k_dv * dv + k_v * speed + bias + noise;
                    let pos_fav = k as f64;
                    UnifiedRecord {
                        trajectory_id: id as i64,
                        time_index: k as f64 * 0.1,
                        id_lv: -1,
                        pos_lv: pos_fav + gap + 4.5,
                        speed_lv: speed + dv,
                        acc_lv: 0.0,
                        id_fav: 1,
                        pos_fav,
                        speed_fav: speed,
                        acc_fav: acc,
                        space_gap: gap,
                        space_headway: gap + 4.5,
                        speed_diff: dv,
                    }
                })
                .collect();
            dataset.push(LongitudinalTrajectory {
                trajectory_id: id as i64,
                delta_t: 0.1,
                fav_length: 4.5,
                lv_length: 4.5,
                records,
            });
        }
        dataset
    }

    #[test]
    fn calibration_recovers_noiseless_coefficients() {
        let truth = (0.1, 0.5, -0.2, 0.0);
        let dataset = synthetic_cf_dataset(truth, 0.0, 2, 300, 5);
        let model = calibrate_linear_cf(&dataset).unwrap();
        assert_abs_diff_eq!(model.k_gap, truth.0, epsilon = 1e-9);
        assert_abs_diff_eq!(model.k_dv, truth.1, epsilon = 1e-9);
        assert_abs_diff_eq!(model.k_v, truth.2, epsilon = 1e-9);
        assert_abs_diff_eq!(model.bias, truth.3, epsilon = 1e-9);
        assert_abs_diff_eq!(model.rmse, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn calibration_rmse_tracks_injected_noise() {
        let sigma = 0.01;
        let dataset = synthetic_cf_dataset((0.1, 0.5, -0.2, 0.3), sigma, 4, 800, 6);
        let model = calibrate_linear_cf(&dataset).unwrap();
        assert!(
            (model.rmse - sigma).abs() / sigma < 0.3,
            "rmse {} vs sigma {sigma}",
            model.rmse
        );
    }

    #[test]
    fn calibration_rejects_degenerate_regressors() {
        // constant speed and gap leave the matrix rank deficient
        let mut dataset = synthetic_cf_dataset((0.0, 0.0, 0.0, 0.5), 0.0, 1, 50, 7);
        for r in &mut dataset[0].records {
            r.space_gap = 20.0;
            r.speed_fav = 10.0;
            r.speed_diff = 0.0;
            r.acc_fav = 0.5;
        }
        assert!(calibrate_linear_cf(&dataset).is_err());
    }

    #[test]
    fn calibration_residuals_are_orthogonal_to_regressors() {
        let dataset = synthetic_cf_dataset((0.08, 0.4, -0.15, 0.1), 0.05, 3, 400, 8);
        let model = calibrate_linear_cf(&dataset).unwrap();
        let mut dots = [0.0f64; 4];
        let mut n = 0.0;
        for traj in &dataset {
            for r in &traj.records {
                let resid = r.acc_fav - model.predict(r.space_gap, r.speed_diff, r.speed_fav);
                dots[0] += resid * r.space_gap;
                dots[1] += resid * r.speed_diff;
                dots[2] += resid * r.speed_fav;
                dots[3] += resid;
                n += 1.0;
            }
        }
        for d in dots {
            assert_abs_diff_eq!(d / n, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn correlation_signs_match_the_planted_model() {
        // positive gap and speed-difference influence, negative speed influence
        let dataset = synthetic_cf_dataset((0.05, 0.4, -0.08, 0.0), 0.05, 2, 500, 9);
        let report = correlation_report(&dataset).unwrap();
        assert!(report.pearson_gap > 0.0);
        assert!(report.pearson_speed_diff > 0.0);
        assert!(report.pearson_speed < 0.0);
        assert!(report.spearman_gap > 0.0);
        assert!(report.spearman_speed_diff > 0.0);
        assert!(report.spearman_speed < 0.0);
    }

    #[test]
    fn scatter_export_shapes() {
        let dataset = synthetic_cf_dataset((0.1, 0.5, -0.2, 0.0), 0.0, 2, 70, 10);
        let rows = scatter_export(&dataset).unwrap();
        assert_eq!(rows.len(), 140);
        // smoothing stays within each trajectory: the first row of the second
        // trajectory only averages its own first two accelerations
        let t1 = &dataset[1];
        let expected = (t1.records[0].acc_fav + t1.records[1].acc_fav) / 2.0;
        assert_relative_eq!(rows[70].acc_fav_smoothed, expected, epsilon = 1e-12);
    }

    #[test]
    fn stats_examples() {
        let dataset = synthetic_cf_dataset((0.1, 0.5, -0.2, 0.0), 0.0, 1, 100, 11);
        let summary = label_stats(&dataset).unwrap();
        for (_, s) in summary.iter() {
            assert!(s.min <= s.mean && s.mean <= s.max);
            assert!(s.std >= 0.0);
        }
        let speeds = dataset[0].column(Label::SpeedFav);
        let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(summary[&Label::SpeedFav].min, lo);
        assert!(label_stats(&[]).is_err());
    }

    #[test]
    fn stats_match_streaming_oracle() {
        // Welford single-pass oracle against the two-pass implementation
        let dataset = synthetic_cf_dataset((0.1, 0.5, -0.2, 0.0), 0.02, 3, 500, 12);
        let summary = label_stats(&dataset).unwrap();
        for label in Label::ALL {
            let mut count = 0.0;
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for traj in &dataset {
                for r in &traj.records {
                    let v = label.get(r);
                    count += 1.0;
                    let d = v - mean;
                    mean += d / count;
                    m2 += d * (v - mean);
                }
            }
            let std = (m2 / (count - 1.0)).sqrt();
            let s = &summary[&label];
            assert_relative_eq!(s.mean, mean, epsilon = 1e-9);
            assert_relative_eq!(s.std, std, epsilon = 1e-9);
        }
    }
}
