//! Full estimation pipeline: resample → angular velocities → temporal/spatial
//! alignment → position smoothing → time-domain closed form → frequency-domain
//! refinement.

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::alignment::{align, AlignmentResult};
use crate::error::{Error, Result};
use crate::ingest::{
    resample_imu, resample_poses, ImuSample, PoseSample, CH_ACCEL, CH_GYRO, CH_ORIENTATION,
    CH_POSITION,
};
use crate::kinematics::{angular_velocity, rotate_world_to_camera, RotationSequence};
use crate::scale::{
    estimate_frequency_domain, estimate_time_domain, ScaleSolution, TimeDomainMode,
};
use crate::smoother::{double_difference, smooth_positions, SmootherConfig, StateTrajectory};
use crate::spectrum::{amplitude_spectra, Window};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Common resampling rate, Hz. `None` uses the median IMU rate.
    pub resample_rate: Option<f64>,
    /// Half-width of the clock-offset search window, seconds.
    pub search_halfwidth: f64,
    /// Frequency cutoff of the spectral stage, Hz.
    pub f_max: f64,
    /// Gravity magnitude constraint, m/s².
    pub g_norm: f64,
    pub smoother: SmootherConfig,
    pub window: Window,
    /// Stop after the time-domain closed form.
    pub skip_frequency_stage: bool,
    /// Replace the RTS smoother with raw double differentiation (ablation).
    pub skip_smoothing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resample_rate: None,
            search_halfwidth: 0.5,
            f_max: 1.2,
            g_norm: 9.81,
            smoother: SmootherConfig::default(),
            window: Window::Rectangular,
            skip_frequency_stage: false,
            skip_smoothing: false,
        }
    }
}

/// Wall-clock time per stage, milliseconds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub resample_ms: f64,
    pub alignment_ms: f64,
    pub smoothing_ms: f64,
    pub scale_ms: f64,
    pub total_ms: f64,
}

/// Everything the pipeline produced, including intermediate diagnostics.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub alignment: AlignmentResult,
    /// Closed-form time-domain solution (unconstrained gravity).
    pub time_domain: ScaleSolution,
    /// Final solution: frequency-domain refinement unless that stage was
    /// skipped.
    pub solution: ScaleSolution,
    pub q_star: f64,
    pub measurement_noise: f64,
    pub sample_rate: f64,
    /// Samples inside the analysis window after the offset shift.
    pub n_samples: usize,
    /// RTS-smoothed world-frame states on the common grid (raw double
    /// differences when smoothing is skipped).
    pub smoothed: StateTrajectory,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

fn median_rate(imu: &[ImuSample]) -> Result<f64> {
    if imu.len() < 2 {
        return Err(Error::Ingest("need at least 2 IMU samples".to_string()));
    }
    let mut dts: Vec<f64> = imu.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    let dt = dts[dts.len() / 2];
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Ingest("IMU timestamps are not increasing".to_string()));
    }
    Ok(1.0 / dt)
}

/// Linear interpolation of a uniform-grid vector series at fractional index.
fn interp_fractional(series: &[Vector3<f64>], x: f64) -> Vector3<f64> {
    let clamped = x.clamp(0.0, (series.len() - 1) as f64);
    let k = (clamped.floor() as usize).min(series.len() - 2);
    let u = clamped - k as f64;
    series[k] + (series[k + 1] - series[k]) * u
}

struct Prepared {
    poses: Vec<PoseSample>,
    pose_series: crate::series::UniformSeries,
    imu_series: crate::series::UniformSeries,
    rate: f64,
    warnings: Vec<String>,
}

/// Clock shift, coverage trimming, and resampling common to every entry
/// point.
fn prepare(poses: &[PoseSample], imu: &[ImuSample], config: &PipelineConfig) -> Result<Prepared> {
    let mut warnings = Vec::new();

    // Both clocks are shifted so the first pose is at zero; the offset search
    // absorbs any residual difference.
    let t0 = poses.first().ok_or_else(|| Error::Ingest("empty trajectory".to_string()))?.t;
    let mut poses: Vec<PoseSample> = poses.iter().map(|p| PoseSample { t: p.t - t0, ..*p }).collect();
    let imu: Vec<ImuSample> = imu.iter().map(|s| ImuSample { t: s.t - t0, ..*s }).collect();

    if imu.is_empty() {
        return Err(Error::Ingest("empty IMU log".to_string()));
    }
    let imu_first = imu[0].t;
    let imu_last = imu[imu.len() - 1].t;
    let before = poses.len();
    poses.retain(|p| p.t >= imu_first && p.t <= imu_last);
    if poses.len() < before {
        warnings.push(format!(
            "dropped {} pose(s) outside IMU coverage [{imu_first:.3}, {imu_last:.3}] s",
            before - poses.len()
        ));
    }
    if poses.len() < 2 {
        return Err(Error::Ingest("fewer than 2 poses overlap the IMU recording".to_string()));
    }

    let rate = match config.resample_rate {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(Error::Ingest(format!("resample rate must be positive, got {r}"))),
        None => median_rate(&imu)?,
    };
    let (pose_series, pose_warnings) = resample_poses(&poses, rate)?;
    warnings.extend(pose_warnings);
    let imu_series = resample_imu(&imu, &pose_series)?;
    Ok(Prepared { poses, pose_series, imu_series, rate, warnings })
}

/// Temporal and spatial alignment only: resamples, differentiates the
/// orientations, and matches them against the gyroscope.
pub fn align_only(
    poses: &[PoseSample],
    imu: &[ImuSample],
    config: &PipelineConfig,
) -> Result<(AlignmentResult, f64)> {
    let prep = prepare(poses, imu, config)?;
    let orientations = prep.pose_series.rotation_channel(CH_ORIENTATION).expect("orientation");
    let gyro = prep.imu_series.vector_channel(CH_GYRO).expect("gyro");
    let rotations = RotationSequence::from_quaternions(orientations);
    let omega_vis = angular_velocity(&rotations, prep.rate)?;
    let alignment = align(gyro, &omega_vis, prep.rate, config.search_halfwidth)?;
    Ok((alignment, prep.rate))
}

/// Runs the full scale-recovery pipeline on parsed inputs.
pub fn estimate(
    poses: &[PoseSample],
    imu: &[ImuSample],
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let t_start = Instant::now();

    let stage = Instant::now();
    let prep = prepare(poses, imu, config)?;
    let Prepared { poses, pose_series, imu_series, rate, mut warnings } = prep;
    let resample_ms = stage.elapsed().as_secs_f64() * 1e3;

    let positions = pose_series.vector_channel(CH_POSITION).expect("position channel");
    let orientations = pose_series.rotation_channel(CH_ORIENTATION).expect("orientation channel");
    let gyro = imu_series.vector_channel(CH_GYRO).expect("gyro channel");
    let accel = imu_series.vector_channel(CH_ACCEL).expect("accel channel");
    let rotations = RotationSequence::from_quaternions(orientations);

    // temporal + spatial alignment on angular velocities
    let stage = Instant::now();
    let omega_vis = angular_velocity(&rotations, rate)?;
    let alignment = align(gyro, &omega_vis, rate, config.search_halfwidth)?;
    warnings.extend(alignment.warnings.iter().cloned());
    let alignment_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Measurement noise belongs to the camera-rate poses, not the upsampled
    // grid. Estimate it on the raw positions and spread it over the grid
    // samples each camera frame turns into, so the upsampling does not
    // overcount information.
    let smoother_config = if config.smoother.r.is_none() {
        let raw_positions: Vec<Vector3<f64>> = poses.iter().map(|p| p.position).collect();
        let mut pose_dts: Vec<f64> = poses.windows(2).map(|w| w[1].t - w[0].t).collect();
        pose_dts.sort_by(f64::total_cmp);
        let upsample = (rate * pose_dts[pose_dts.len() / 2]).max(1.0);
        let r = crate::smoother::estimate_measurement_noise(&raw_positions) * upsample;
        SmootherConfig { r: Some(r), ..config.smoother.clone() }
    } else {
        config.smoother.clone()
    };

    // position smoothing (or the double-difference ablation)
    let stage = Instant::now();
    let (smoothed, q_star, measurement_noise) = if config.skip_smoothing {
        let accels = double_difference(positions, rate);
        let n = positions.len();
        let traj = StateTrajectory {
            rate,
            positions: positions.to_vec(),
            velocities: vec![Vector3::zeros(); n],
            accelerations: accels,
            axis_covariances: [Vec::new(), Vec::new(), Vec::new()],
        };
        warnings.push("smoothing skipped: accelerations from raw double differences".to_string());
        (traj, 0.0, 0.0)
    } else {
        let out = smooth_positions(positions, rate, &smoother_config)?;
        warnings.extend(out.warnings.iter().cloned());
        (out.trajectory, out.q_star, out.r)
    };
    let smoothing_ms = stage.elapsed().as_secs_f64() * 1e3;

    // analysis window: grid indices whose shifted IMU lookup stays covered
    let stage = Instant::now();
    let n = pose_series.len();
    let shift = alignment.time_offset * rate;
    let k_lo = (-shift).ceil().max(0.0) as usize;
    let k_hi = (((n - 1) as f64 - shift).floor().min((n - 1) as f64)) as usize;
    if k_hi < k_lo + 9 {
        return Err(Error::Scale("analysis window too short after the offset shift".to_string()));
    }

    let window_rotations = RotationSequence::from_quaternions(&orientations[k_lo..=k_hi]);
    let a_vis_w = &smoothed.accelerations[k_lo..=k_hi];
    let a_vis_c = rotate_world_to_camera(&window_rotations, a_vis_w)?;
    let r_s = alignment.rotation;
    let a_imu_c: Vec<Vector3<f64>> = (k_lo..=k_hi)
        .map(|k| r_s * interp_fractional(accel, k as f64 + shift))
        .collect();

    let time_domain =
        estimate_time_domain(&a_vis_c, &a_imu_c, &window_rotations, TimeDomainMode::ScaleBiasGravity)?;
    if time_domain.rank_deficient {
        return Err(Error::Scale(format!(
            "time-domain system is rank deficient (unobservable direction {:?}); \
             the recording needs more rotation and acceleration variety",
            time_domain.null_direction
        )));
    }
    if time_domain.scale <= 0.0 {
        return Err(Error::Scale(format!(
            "time-domain stage produced non-positive scale {:.4}; \
             check the trajectory orientation convention and IMU units",
            time_domain.scale
        )));
    }
    warnings.extend(time_domain.warnings.iter().cloned());

    let solution = if config.skip_frequency_stage {
        warnings.push("frequency-domain stage skipped".to_string());
        time_domain.clone()
    } else {
        let spectra = amplitude_spectra(&a_vis_c, &a_imu_c, &window_rotations, rate, config.window)?;
        let sol = estimate_frequency_domain(&spectra, config.f_max, &time_domain, config.g_norm)?;
        warnings.extend(sol.warnings.iter().cloned());
        sol
    };
    let scale_ms = stage.elapsed().as_secs_f64() * 1e3;

    Ok(PipelineOutput {
        alignment,
        time_domain,
        solution,
        q_star,
        measurement_noise,
        sample_rate: rate,
        n_samples: k_hi - k_lo + 1,
        smoothed,
        warnings,
        timings: StageTimings {
            resample_ms,
            alignment_ms,
            smoothing_ms,
            scale_ms,
            total_ms: t_start.elapsed().as_secs_f64() * 1e3,
        },
    })
}
