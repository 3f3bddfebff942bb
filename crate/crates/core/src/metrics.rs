//! Per-timestamp performance measures: safety (time to collision), mobility
//! (time headway), stability (squared acceleration error) and sustainability
//! (four microscopic fuel models plus their average).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::parallel::map_ordered;
use crate::record::LongitudinalTrajectory;

/// Polynomial-exponential fuel map coefficients, speed powers by row and
/// acceleration powers by column.
pub type FuelMatrix = [[f64; 4]; 4];

/// Coefficient set for the four fuel models.
#[derive(Debug, Clone)]
pub struct FuelCoefficients {
    pub vt_micro_k: FuelMatrix,
    /// Acceleration impact factor of the smoothed-acceleration model.
    pub mef_beta: f64,
    /// Number of historical accelerations averaged by that model.
    pub mef_history: usize,
    /// Road grade; zero on the assumption of flat test sites.
    pub vsp_grade: f64,
    /// Piecewise fuel-rate coefficients over vehicle specific power, g/s.
    pub vsp_f: [f64; 6],
    /// Polynomial fuel-rate coefficients, ml/s.
    pub arrb_gamma: [f64; 6],
    /// Fuel density used for unit conversion, g/L.
    pub fuel_density: f64,
}

impl Default for FuelCoefficients {
    fn default() -> Self {
        FuelCoefficients {
            vt_micro_k: [
                [-7.537, 0.4438, 0.1716, -0.0420],
                [0.0973, 0.0518, 0.0029, 0.0071],
                [-0.003, -7.42e-4, 1.09e-4, 1.16e-4],
                [5.3e-5, 6e-6, -1e-5, -6e-6],
            ],
            mef_beta: 0.5,
            mef_history: 9,
            vsp_grade: 0.0,
            vsp_f: [2.48e-3, 1.98e-3, 3.97e-2, 2.01e-1, 7.93e-2, 2.48e-3],
            arrb_gamma: [0.666, 0.019, 0.001, 0.0005, 0.122, 0.793],
            fuel_density: 800.0,
        }
    }
}

/// One row of the metrics output. `ttc` and `tau` are undefined at
/// timestamps where their defining condition fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub trajectory_id: i64,
    pub time_index: f64,
    pub ttc: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: f64,
    pub f_vtm: f64,
    pub f_mef: f64,
    pub f_vsp: f64,
    pub f_arrb: f64,
    pub f_all: f64,
}

/// Time to collision: gap over closing speed, defined only while the
/// follower is faster than the leader.
pub fn ttc(gap: f64, v_fav: f64, v_lv: f64) -> Option<f64> {
    (v_fav > v_lv).then(|| gap / (v_fav - v_lv))
}

/// Time headway: center-to-center headway over follower speed, undefined at
/// or below zero speed.
pub fn time_headway(headway: f64, v_fav: f64) -> Option<f64> {
    (v_fav > 0.0).then(|| headway / v_fav)
}

/// Squared error of each acceleration against the trajectory mean.
pub fn instability_alpha(accelerations: &[f64]) -> Vec<f64> {
    if accelerations.is_empty() {
        return Vec::new();
    }
    let mean = accelerations.iter().sum::<f64>() / accelerations.len() as f64;
    accelerations
        .iter()
        .map(|a| {
            let d = a - mean;
            d * d
        })
        .collect()
}

fn vt_micro_exponent(v: f64, a: f64, k: &FuelMatrix) -> f64 {
    let mut exponent = 0.0;
    let mut v_pow = 1.0;
    for row in k {
        let mut a_pow = 1.0;
        for &coeff in row {
            exponent += coeff * v_pow * a_pow;
            a_pow *= a;
        }
        v_pow *= v;
    }
    exponent
}

/// Exponential polynomial fuel map in L/s; strictly positive.
pub fn vt_micro(v: f64, a: f64, coeffs: &FuelCoefficients) -> f64 {
    vt_micro_exponent(v, a, &coeffs.vt_micro_k).exp()
}

/// Mean of the accelerations preceding the last history entry. Anchoring the
/// sum at the first element keeps a constant history exactly equal to its
/// value, which the blended model relies on.
fn prior_mean(history: &[f64]) -> Option<f64> {
    let prior = &history[..history.len().saturating_sub(1)];
    if prior.is_empty() {
        return None;
    }
    let first = prior[0];
    let shifted: f64 = prior.iter().map(|a| a - first).sum();
    Some(first + shifted / prior.len() as f64)
}

/// Fuel map with the acceleration blended against its recent history:
/// `beta * a_t + (1 - beta) * mean(previous accelerations)`, in L/s.
///
/// `a_history` holds the current acceleration last, preceded by up to
/// `mef_history` earlier samples; at a trajectory start the mean runs over
/// whatever is available and an empty history falls back to the current
/// acceleration itself.
pub fn mef(v: f64, a_history: &[f64], coeffs: &FuelCoefficients) -> f64 {
    let a_t = *a_history.last().expect("mef needs the current acceleration");
    let blended = match prior_mean(a_history) {
        Some(mean) => coeffs.mef_beta * a_t + (1.0 - coeffs.mef_beta) * mean,
        None => a_t,
    };
    vt_micro(v, blended, coeffs)
}

/// Vehicle specific power in W/kg for a flat-grade configuration.
pub fn vehicle_specific_power(v: f64, a: f64, coeffs: &FuelCoefficients) -> f64 {
    v * (1.1 * a + 9.81 * coeffs.vsp_grade + 0.132) + 3.02e-4 * v * v * v
}

/// Piecewise fuel rate over a vehicle-specific-power value, g/s. The middle
/// branch owns both endpoints.
pub fn vsp_fuel_from_power(vsp: f64, coeffs: &FuelCoefficients) -> f64 {
    let [f1, f2, f3, f4, f5, f6] = coeffs.vsp_f;
    if vsp < -10.0 {
        f1
    } else if vsp <= 10.0 {
        f2 * vsp * vsp + f3 * vsp + f4
    } else {
        f5 * vsp + f6
    }
}

/// Piecewise fuel rate over vehicle specific power, g/s.
pub fn vsp_fuel(v: f64, a: f64, coeffs: &FuelCoefficients) -> f64 {
    vsp_fuel_from_power(vehicle_specific_power(v, a, coeffs), coeffs)
}

/// Polynomial fuel rate in ml/s; the squared-acceleration term only engages
/// while accelerating.
pub fn arrb(v: f64, a: f64, coeffs: &FuelCoefficients) -> f64 {
    let [g1, g2, g3, g4, g5, g6] = coeffs.arrb_gamma;
    let a_pos = a.max(0.0);
    g1 + g2 * v + g3 * v * v + g4 * v * v * v + g5 * v * a + g6 * v * a_pos * a_pos
}

/// Average of the four models after unit conversion, L/s.
pub fn fuel_all(v: f64, a_history: &[f64], coeffs: &FuelCoefficients) -> f64 {
    let a_t = *a_history.last().expect("fuel_all needs the current acceleration");
    let vtm = vt_micro(v, a_t, coeffs);
    let mef = mef(v, a_history, coeffs);
    let vsp = vsp_fuel(v, a_t, coeffs);
    let arrb = arrb(v, a_t, coeffs);
    (vtm + mef + vsp / coeffs.fuel_density + arrb / 1000.0) / 4.0
}

/// Computes every metric for one trajectory. The acceleration history of the
/// blended fuel model is owned here and never crosses trajectory boundaries.
pub fn trajectory_metrics(
    traj: &LongitudinalTrajectory,
    coeffs: &FuelCoefficients,
) -> Vec<MetricsRecord> {
    let accs: Vec<f64> = traj.records.iter().map(|r| r.acc_fav).collect();
    let alphas = instability_alpha(&accs);
    let mut out = Vec::with_capacity(traj.len());
    for (k, r) in traj.records.iter().enumerate() {
        let window_start = k.saturating_sub(coeffs.mef_history);
        let history = &accs[window_start..=k];
        out.push(MetricsRecord {
            trajectory_id: r.trajectory_id,
            time_index: r.time_index,
            ttc: ttc(r.space_gap, r.speed_fav, r.speed_lv),
            tau: time_headway(r.space_headway, r.speed_fav),
            alpha: alphas[k],
            f_vtm: vt_micro(r.speed_fav, r.acc_fav, coeffs),
            f_mef: mef(r.speed_fav, history, coeffs),
            f_vsp: vsp_fuel(r.speed_fav, r.acc_fav, coeffs),
            f_arrb: arrb(r.speed_fav, r.acc_fav, coeffs),
            f_all: fuel_all(r.speed_fav, history, coeffs),
        });
    }
    out
}

/// Metrics for a whole dataset, trajectory-parallel with deterministic order.
pub fn dataset_metrics(
    dataset: &[LongitudinalTrajectory],
    coeffs: &FuelCoefficients,
) -> Vec<MetricsRecord> {
    map_ordered(dataset, |traj| trajectory_metrics(traj, coeffs))
        .into_iter()
        .flatten()
        .collect()
}

pub const METRICS_HEADER: &str =
    "Trajectory_ID,Time_Index,TTC,Tau,Alpha,F_VTM,F_MEF,F_VSP,F_ARRB,F_All";

/// Serializes metrics rows; undefined TTC/tau become empty fields.
pub fn metrics_to_string(records: &[MetricsRecord]) -> String {
    let fmt_opt = |v: Option<f64>| v.map(crate::csvio::fmt_f64).unwrap_or_default();
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trajectory_id,
            crate::csvio::fmt_f64(r.time_index),
            fmt_opt(r.ttc),
            fmt_opt(r.tau),
            crate::csvio::fmt_f64(r.alpha),
            crate::csvio::fmt_f64(r.f_vtm),
            crate::csvio::fmt_f64(r.f_mef),
            crate::csvio::fmt_f64(r.f_vsp),
            crate::csvio::fmt_f64(r.f_arrb),
            crate::csvio::fmt_f64(r.f_all),
        );
    }
    out
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    fs::write(path, metrics_to_string(records))?;
    Ok(())
}
