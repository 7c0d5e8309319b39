//! Joint temporal and spatial alignment of gyroscope and visual angular
//! velocities.
//!
//! The spatial part (sensor-to-camera rotation plus gyroscope bias) has a
//! closed-form optimum for any fixed clock offset, so the search alternates a
//! golden-section scan over the offset with exact rotation/bias fits at every
//! probe. A rotation-invariant cross-correlation of angular-speed magnitudes
//! seeds the scan inside the dominant basin, where the residual is unimodal.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kabsch::fit_rigid;
use crate::optim::golden_section;

/// Golden-section bracket tolerance on the clock offset, seconds.
pub const OFFSET_TOLERANCE: f64 = 1e-4;

/// Overlap shorter than this gets a diagnostic; the fit still runs.
const MIN_RECOMMENDED_OVERLAP: f64 = 5.0;

/// Joint alignment estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Sensor-to-camera rotation.
    pub rotation: Rotation3<f64>,
    /// Gyroscope bias expressed in the camera frame, rad/s.
    pub gyro_bias: Vector3<f64>,
    /// Clock offset: the IMU stream evaluated at `t + time_offset` matches the
    /// camera stream at `t`. Seconds.
    pub time_offset: f64,
    /// RMS of the angular-velocity residual at the optimum, rad/s.
    pub rms_residual: f64,
    /// Golden-section iterations.
    pub iterations: usize,
    /// Rotation fit was degenerate at the optimum (collinear angular
    /// velocities).
    pub degenerate: bool,
    /// The offset landed on the edge of the search bracket.
    pub boundary: bool,
    pub warnings: Vec<String>,
}

/// Closed-form fit of `omega_vis ≈ R · omega_imu + b`.
///
/// Returns the optimal rotation, bias, RMS residual, and a degeneracy flag set
/// when the centered angular velocities are collinear and the rotation about
/// that axis is unobservable.
#[allow(clippy::type_complexity)]
pub fn fit_rotation_bias(
    omega_imu: &[Vector3<f64>],
    omega_vis: &[Vector3<f64>],
) -> Result<(Rotation3<f64>, Vector3<f64>, f64, bool)> {
    if omega_imu.len() != omega_vis.len() {
        return Err(Error::Alignment(format!(
            "angular velocity series lengths differ: {} vs {}",
            omega_imu.len(),
            omega_vis.len()
        )));
    }
    if omega_imu.len() < 3 {
        return Err(Error::Alignment("rotation fit needs at least 3 samples".to_string()));
    }
    for v in omega_imu.iter().chain(omega_vis) {
        if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(Error::Alignment("non-finite angular velocity sample".to_string()));
        }
    }
    let fit = fit_rigid(omega_imu, omega_vis);
    Ok((fit.rotation, fit.translation, fit.rms_residual, fit.degenerate))
}

/// Coarse clock-offset estimate from normalized cross-correlation of
/// mean-removed angular-speed magnitudes. Speed is invariant to the unknown
/// sensor-to-camera rotation, so no spatial alignment is needed.
///
/// Positive lag means the IMU stream must be sampled at `t + lag` to match the
/// camera stream at `t`.
pub fn coarse_offset(
    speed_vis: &[f64],
    speed_imu: &[f64],
    rate: f64,
    max_lag: f64,
) -> Result<f64> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;

    let mv = mean(speed_vis);
    let mi = mean(speed_imu);
    if var(speed_vis, mv) < 1e-12 || var(speed_imu, mi) < 1e-12 {
        return Err(Error::Alignment(
            "angular-speed signals are flat; cannot align — record more rotational motion"
                .to_string(),
        ));
    }

    let a: Vec<f64> = speed_vis.iter().map(|x| x - mv).collect();
    let b: Vec<f64> = speed_imu.iter().map(|x| x - mi).collect();

    let max_shift = (max_lag * rate).floor() as i64;
    let mut best_lag = 0i64;
    let mut best_score = f64::NEG_INFINITY;
    for lag in -max_shift..=max_shift {
        let k_lo = (-lag).max(0) as usize;
        let k_hi = (a.len() as i64).min(b.len() as i64 - lag) as usize;
        if k_hi <= k_lo + 2 {
            continue;
        }
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for k in k_lo..k_hi {
            let x = a[k];
            let y = b[(k as i64 + lag) as usize];
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na <= 0.0 || nb <= 0.0 {
            continue;
        }
        let score = dot / (na * nb).sqrt();
        if score > best_score {
            best_score = score;
            best_lag = lag;
        }
    }
    Ok(best_lag as f64 / rate)
}

/// Linear interpolation of a vector series at fractional index `x`; `None`
/// outside `[0, len-1]`.
fn interp_at(series: &[Vector3<f64>], x: f64) -> Option<Vector3<f64>> {
    if x < 0.0 || x > (series.len() - 1) as f64 {
        return None;
    }
    let k = (x.floor() as usize).min(series.len() - 2);
    let u = x - k as f64;
    Some(series[k] + (series[k + 1] - series[k]) * u)
}

/// Joint estimate of the clock offset, sensor-to-camera rotation and
/// gyroscope bias from angular-velocity series on a common uniform `rate`.
///
/// The offset is searched within `±search_halfwidth` of zero; the coarse
/// cross-correlation stage re-centers the golden-section bracket inside that
/// window.
pub fn align(
    omega_imu: &[Vector3<f64>],
    omega_vis: &[Vector3<f64>],
    rate: f64,
    search_halfwidth: f64,
) -> Result<AlignmentResult> {
    if !search_halfwidth.is_finite() || search_halfwidth <= 0.0 {
        return Err(Error::Alignment("search halfwidth must be positive".to_string()));
    }
    let mut warnings = Vec::new();

    let speed_vis: Vec<f64> = omega_vis.iter().map(Vector3::norm).collect();
    let speed_imu: Vec<f64> = omega_imu.iter().map(Vector3::norm).collect();
    let t_d0 = coarse_offset(&speed_vis, &speed_imu, rate, search_halfwidth)?;

    // bracket centered on the coarse estimate, clamped to the global window
    let lo = (t_d0 - search_halfwidth).max(-search_halfwidth);
    let hi = (t_d0 + search_halfwidth).min(search_halfwidth);

    // index window valid for every probe in the bracket, so the objective is
    // comparable across probes
    let k_lo = ((-lo * rate).ceil().max(0.0)) as usize;
    let k_hi_f = ((omega_imu.len() - 1) as f64 - hi * rate)
        .floor()
        .min((omega_vis.len() - 1) as f64);
    if k_hi_f < k_lo as f64 + 2.0 {
        return Err(Error::Alignment(
            "overlap too short for the configured offset search window".to_string(),
        ));
    }
    let k_hi = k_hi_f as usize;
    let overlap = (k_hi - k_lo) as f64 / rate;
    if overlap < MIN_RECOMMENDED_OVERLAP {
        warnings.push(format!(
            "only {overlap:.1} s of overlap available; at least {MIN_RECOMMENDED_OVERLAP:.0} s is recommended"
        ));
    }

    let vis_window = &omega_vis[k_lo..=k_hi];
    let mut shifted = vec![Vector3::zeros(); vis_window.len()];
    let mut objective = |t_d: f64| -> f64 {
        let shift = t_d * rate;
        for (i, s) in shifted.iter_mut().enumerate() {
            let x = (k_lo + i) as f64 + shift;
            *s = interp_at(omega_imu, x).unwrap_or_else(|| {
                // clamp: probes at bracket edges can graze the boundary by
                // floating-point slack
                let edge = x.clamp(0.0, (omega_imu.len() - 1) as f64);
                interp_at(omega_imu, edge).unwrap()
            });
        }
        let fit = fit_rigid(&shifted, vis_window);
        fit.rms_residual
    };

    let golden = golden_section(&mut objective, lo, hi, OFFSET_TOLERANCE);
    let t_d = golden.x;

    // final fit at the selected offset
    let shift = t_d * rate;
    let resampled: Vec<Vector3<f64>> = (k_lo..=k_hi)
        .map(|k| {
            let x = (k as f64 + shift).clamp(0.0, (omega_imu.len() - 1) as f64);
            interp_at(omega_imu, x).unwrap()
        })
        .collect();
    let fit = fit_rigid(&resampled, vis_window);
    if fit.degenerate {
        warnings.push("rotation fit is degenerate: angular velocities are collinear".to_string());
    }

    let boundary = (t_d - lo).abs() < 2.0 * OFFSET_TOLERANCE || (hi - t_d).abs() < 2.0 * OFFSET_TOLERANCE;
    if boundary {
        warnings.push(format!(
            "offset estimate {t_d:.4} s sits on the search boundary; widen --search-halfwidth"
        ));
    }

    Ok(AlignmentResult {
        rotation: fit.rotation,
        gyro_bias: fit.translation,
        time_offset: t_d,
        rms_residual: fit.rms_residual,
        iterations: golden.iterations,
        degenerate: fit.degenerate,
        boundary,
        warnings,
    })
}
