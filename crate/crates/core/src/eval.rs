//! Evaluation utilities: rigid ground-point fitting with RMSE and
//! scale-error-vs-distance convergence curves.

use std::io::Write;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ImuSample, PoseSample};
use crate::kabsch::fit_rigid;
use crate::pipeline::{estimate, PipelineConfig};

/// Optimal rigid registration of estimated points onto ground points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    /// Root-mean-square error after the fit, meters.
    pub rmse: f64,
    pub degenerate: bool,
}

/// Closed-form rigid fit of `source` onto `target` with RMSE.
pub fn rigid_fit(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<FitResult> {
    if source.len() != target.len() {
        return Err(Error::Evaluation(format!(
            "point sets must correspond: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::Evaluation("rigid fit needs at least 3 points".to_string()));
    }
    let fit = fit_rigid(source, target);
    Ok(FitResult {
        rotation: fit.rotation,
        translation: fit.translation,
        rmse: fit.rms_residual,
        degenerate: fit.degenerate,
    })
}

/// Scale error after the camera has traveled a given distance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub distance_traveled: f64,
    pub scale_error_percent: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceCurve {
    pub points: Vec<ConvergencePoint>,
    pub notices: Vec<String>,
}

/// Scale error versus distance traveled.
///
/// Distance is measured on the truth-scaled smoothed positions of a full-data
/// run. For each checkpoint the input streams are truncated at the time that
/// distance was first reached and the whole pipeline reruns from scratch on
/// the prefix. The IMU stream keeps one offset-search margin beyond the
/// truncation time so the shorter prefixes can still resolve the clock offset.
pub fn convergence_curve(
    poses: &[PoseSample],
    imu: &[ImuSample],
    checkpoints: &[f64],
    truth_scale: f64,
    config: &PipelineConfig,
) -> Result<ConvergenceCurve> {
    if !truth_scale.is_finite() || truth_scale <= 0.0 {
        return Err(Error::Evaluation("truth scale must be positive".to_string()));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Evaluation("checkpoints must be strictly ascending".to_string()));
    }

    let full = estimate(poses, imu, config)?;
    let t0 = poses[0].t;
    let rate = full.smoothed.rate;

    // cumulative truth-scaled path length on the smoothed positions
    let smoothed = &full.smoothed.positions;
    let mut cumulative = Vec::with_capacity(smoothed.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for pair in smoothed.windows(2) {
        acc += (pair[1] - pair[0]).norm() * truth_scale;
        cumulative.push(acc);
    }
    let total = acc;

    let mut points = Vec::new();
    let mut notices = Vec::new();
    for &d in checkpoints {
        if d <= 0.0 {
            notices.push(format!("checkpoint {d} m omitted: not positive"));
            continue;
        }
        let Some(idx) = cumulative.iter().position(|&l| l >= d) else {
            notices.push(format!(
                "checkpoint {d} m omitted: total path length is only {total:.2} m"
            ));
            continue;
        };
        let out = if idx == cumulative.len() - 1 {
            // the checkpoint consumed the whole recording: identical to a
            // direct full run
            estimate(poses, imu, config)?
        } else {
            // truncation time in the original (unshifted) clock
            let t_cut = t0 + idx as f64 / rate;
            let pose_prefix: Vec<PoseSample> =
                poses.iter().filter(|p| p.t <= t_cut).copied().collect();
            let imu_prefix: Vec<ImuSample> = imu
                .iter()
                .filter(|s| s.t <= t_cut + config.search_halfwidth)
                .copied()
                .collect();
            estimate(&pose_prefix, &imu_prefix, config)?
        };
        points.push(ConvergencePoint {
            distance_traveled: d,
            scale_error_percent: 100.0 * (out.solution.scale - truth_scale).abs() / truth_scale,
        });
    }

    Ok(ConvergenceCurve { points, notices })
}

/// Writes a convergence curve as `distance_m,error_percent` CSV.
pub fn write_curve_csv(path: impl AsRef<Path>, points: &[ConvergencePoint]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "distance_m,error_percent")?;
    for p in points {
        writeln!(out, "{},{}", p.distance_traveled, p.scale_error_percent)?;
    }
    Ok(())
}
