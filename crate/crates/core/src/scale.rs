//! Scale, accelerometer bias, and gravity estimation.
//!
//! The time-domain stage solves the linear least-squares system
//!
//! ```text
//! s·a_vis_C[k] + b + R[k]·g ≈ a_imu_C[k]
//! ```
//!
//! in closed form (unconstrained gravity). The frequency-domain stage then
//! matches per-axis amplitude spectra up to a frequency cutoff, which discards
//! high-frequency noise and is insensitive to residual phase misalignment
//! between the streams. Gravity is parameterized on the sphere of radius
//! `g_norm` there, so the norm constraint holds by construction.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::RotationSequence;
use crate::optim::nelder_mead;
use crate::spectrum::SpectrumSet;

/// Which unknowns the time-domain stage solves for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeDomainMode {
    Scale,
    ScaleBias,
    ScaleBiasGravity,
}

impl TimeDomainMode {
    fn unknowns(self) -> usize {
        match self {
            TimeDomainMode::Scale => 1,
            TimeDomainMode::ScaleBias => 4,
            TimeDomainMode::ScaleBiasGravity => 7,
        }
    }
}

/// Scale estimate with diagnostics from both stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleSolution {
    /// Metric meters per SfM unit.
    pub scale: f64,
    /// Accelerometer bias in the camera frame, m/s².
    pub accel_bias: Vector3<f64>,
    /// Gravity reaction vector in the world frame, m/s².
    pub gravity: Vector3<f64>,
    /// Sum of squared time-domain residuals.
    pub objective_time: f64,
    /// Frequency-domain objective value, when that stage ran.
    pub objective_freq: Option<f64>,
    /// Frequency cutoff used by the frequency-domain stage, Hz.
    pub f_max: Option<f64>,
    pub converged: bool,
    /// Normal equations were rank deficient (e.g. no rotation makes gravity
    /// and bias indistinguishable).
    pub rank_deficient: bool,
    /// Unit vector spanning the unobservable direction when rank deficient,
    /// in unknown order `(s, b_x, b_y, b_z, g_x, g_y, g_z)`.
    pub null_direction: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Singular-value ratio below which the normal equations count as rank
/// deficient.
const RANK_RATIO: f64 = 1e-12;

/// Closed-form time-domain estimate. Gravity (when solved for) is
/// unconstrained; use the frequency stage or external knowledge to enforce
/// its norm.
pub fn estimate_time_domain(
    a_vis_c: &[Vector3<f64>],
    a_imu_c: &[Vector3<f64>],
    rotations: &RotationSequence,
    mode: TimeDomainMode,
) -> Result<ScaleSolution> {
    let n = a_vis_c.len();
    if a_imu_c.len() != n || (mode == TimeDomainMode::ScaleBiasGravity && rotations.len() != n) {
        return Err(Error::Scale("acceleration series lengths differ".to_string()));
    }
    if n < 7 {
        return Err(Error::Scale(format!("time-domain fit needs at least 7 samples, got {n}")));
    }
    let p = mode.unknowns();

    // normal equations G x = h accumulated in one pass
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut h = DVector::<f64>::zeros(p);
    let mut row = DVector::<f64>::zeros(p);
    for k in 0..n {
        for axis in 0..3 {
            row.fill(0.0);
            row[0] = a_vis_c[k][axis];
            if p >= 4 {
                row[1 + axis] = 1.0;
            }
            if p >= 7 {
                let rm = rotations.get(k).matrix();
                row[4] = rm[(axis, 0)];
                row[5] = rm[(axis, 1)];
                row[6] = rm[(axis, 2)];
            }
            let y = a_imu_c[k][axis];
            for i in 0..p {
                h[i] += row[i] * y;
                for j in 0..p {
                    g[(i, j)] += row[i] * row[j];
                }
            }
        }
    }

    let svd = g.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max_sv = sv.max();
    let rank_deficient = sv.iter().any(|&s| s < RANK_RATIO * max_sv);

    let null_direction = if rank_deficient {
        let v_t = svd.v_t.as_ref().expect("SVD with vectors");
        let min_idx = sv.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let mut dir = vec![0.0; 7];
        for i in 0..p {
            dir[i] = v_t[(min_idx, i)];
        }
        Some(dir)
    } else {
        None
    };

    // pseudo-inverse solve tolerating the deficiency
    let x = svd
        .solve(&h, RANK_RATIO * max_sv)
        .map_err(|e| Error::Scale(format!("least-squares solve failed: {e}")))?;

    let scale = x[0];
    let accel_bias =
        if p >= 4 { Vector3::new(x[1], x[2], x[3]) } else { Vector3::zeros() };
    let gravity = if p >= 7 { Vector3::new(x[4], x[5], x[6]) } else { Vector3::zeros() };

    let mut objective_time = 0.0;
    for k in 0..n {
        let predicted = a_vis_c[k] * scale
            + accel_bias
            + if p >= 7 { rotations.get(k) * gravity } else { Vector3::zeros() };
        objective_time += (predicted - a_imu_c[k]).norm_squared();
    }

    let mut warnings = Vec::new();
    if rank_deficient {
        warnings.push(format!(
            "normal equations are rank deficient; unobservable direction {:?}",
            null_direction.as_ref().unwrap()
        ));
    }
    if scale <= 0.0 {
        warnings.push(format!("recovered scale {scale:.4} is not positive"));
    }

    Ok(ScaleSolution {
        scale,
        accel_bias,
        gravity,
        objective_time,
        objective_freq: None,
        f_max: None,
        converged: !rank_deficient && scale > 0.0,
        rank_deficient,
        null_direction,
        warnings,
    })
}

fn spherical_angles(g: &Vector3<f64>) -> (f64, f64) {
    let norm = g.norm();
    if norm < 1e-9 {
        return (std::f64::consts::FRAC_PI_2, 0.0);
    }
    ((g.z / norm).clamp(-1.0, 1.0).acos(), g.y.atan2(g.x))
}

fn gravity_from_angles(theta: f64, phi: f64, g_norm: f64) -> Vector3<f64> {
    let dir = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
    // renormalize so the norm constraint holds to machine precision even for
    // denormal-prone angle combinations
    dir.normalize() * g_norm
}

/// Frequency-domain objective over bins up to `max_bin` inclusive.
fn frequency_objective(
    spectra: &SpectrumSet,
    vis_mags: &[Vector3<f64>],
    max_bin: usize,
    params: &[f64],
    g_norm: f64,
) -> f64 {
    let s = params[0];
    if s <= 0.0 {
        // steer the simplex back to positive scale
        return 1e30 * (1.0 + s.abs());
    }
    let bias = Vector3::new(params[1], params[2], params[3]);
    let gravity = gravity_from_angles(params[4], params[5], g_norm);
    let mut total = 0.0;
    for (bin, vis) in vis_mags.iter().enumerate().take(max_bin + 1) {
        let imu = spectra.imu_magnitude(bin, &bias, &gravity);
        let diff = vis * s - imu;
        total += diff.norm_squared();
    }
    total
}

/// Refines a time-domain estimate by matching amplitude spectra up to `f_max`.
/// Gravity lives on the sphere of radius `g_norm`, eliminating the norm
/// constraint. Restarts once from a perturbed simplex when the scale moves by
/// more than 20% from the initial value.
pub fn estimate_frequency_domain(
    spectra: &SpectrumSet,
    f_max: f64,
    init: &ScaleSolution,
    g_norm: f64,
) -> Result<ScaleSolution> {
    if f_max >= spectra.rate() / 2.0 {
        return Err(Error::Scale(format!(
            "frequency cutoff {f_max} Hz must stay below the Nyquist rate {}",
            spectra.rate() / 2.0
        )));
    }
    if !init.scale.is_finite() || init.scale <= 0.0 {
        return Err(Error::Scale(format!(
            "frequency stage needs a positive initial scale, got {}",
            init.scale
        )));
    }

    let max_bin = (0..spectra.bins())
        .take_while(|&bin| spectra.bin_frequency(bin) <= f_max)
        .last()
        .ok_or_else(|| Error::Scale("no spectral bins below the frequency cutoff".to_string()))?;
    let vis_mags: Vec<Vector3<f64>> = (0..=max_bin).map(|bin| spectra.vis_magnitude(bin)).collect();

    let (theta0, phi0) = spherical_angles(&init.gravity);
    let x0 = vec![
        init.scale,
        init.accel_bias.x,
        init.accel_bias.y,
        init.accel_bias.z,
        theta0,
        phi0,
    ];
    let steps = [0.05 * init.scale.max(0.02), 0.02, 0.02, 0.02, 0.05, 0.05];

    let objective =
        |x: &[f64]| frequency_objective(spectra, &vis_mags, max_bin, x, g_norm);

    let mut run = nelder_mead(objective, &x0, &steps, 1e-8, 4000);
    let mut warnings = Vec::new();
    if (run.x[0] - init.scale).abs() > 0.2 * init.scale {
        // large move from the closed-form init: re-run from a wider simplex to
        // make sure it was not a local artifact
        let wide: Vec<f64> = steps.iter().map(|s| s * 4.0).collect();
        let retry = nelder_mead(objective, &run.x.clone(), &wide, 1e-8, 4000);
        warnings.push(format!(
            "scale moved {:.1}% from the time-domain value; restarted the simplex",
            100.0 * (run.x[0] - init.scale).abs() / init.scale
        ));
        if retry.value < run.value {
            run = retry;
        }
    }

    if run.x[0] <= 0.0 {
        let mut fallback = init.clone();
        fallback.converged = false;
        fallback.warnings.push(
            "frequency stage drove the scale non-positive; keeping the time-domain solution"
                .to_string(),
        );
        return Ok(fallback);
    }

    Ok(ScaleSolution {
        scale: run.x[0],
        accel_bias: Vector3::new(run.x[1], run.x[2], run.x[3]),
        gravity: gravity_from_angles(run.x[4], run.x[5], g_norm),
        objective_time: init.objective_time,
        objective_freq: Some(run.value),
        f_max: Some(f_max),
        converged: run.converged,
        rank_deficient: init.rank_deficient,
        null_direction: init.null_direction.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{amplitude_spectra, Window};
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use rand::Rng;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn rotations(n: usize, rate: f64) -> RotationSequence {
        let quats: Vec<UnitQuaternion<f64>> = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                UnitQuaternion::from_euler_angles(
                    0.5 * (2.0 * PI * 0.11 * t).sin(),
                    0.4 * (2.0 * PI * 0.17 * t + 0.9).sin(),
                    0.6 * (2.0 * PI * 0.23 * t + 2.1).sin(),
                )
            })
            .collect();
        RotationSequence::from_quaternions(&quats)
    }

    fn vis_accels(n: usize, rate: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                Vector3::new(
                    1.2 * (2.0 * PI * 0.31 * t).sin(),
                    0.9 * (2.0 * PI * 0.47 * t + 0.3).cos(),
                    1.1 * (2.0 * PI * 0.19 * t + 1.7).sin(),
                )
            })
            .collect()
    }

    #[test]
    fn pure_scale_recovered_exactly() {
        let n = 200;
        let a_vis = vis_accels(n, 100.0);
        let a_imu: Vec<Vector3<f64>> = a_vis.iter().map(|a| a * 2.0).collect();
        let rots = rotations(n, 100.0);
        let sol = estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::Scale).unwrap();
        assert_relative_eq!(sol.scale, 2.0, epsilon = 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn scale_and_bias_recovered_exactly() {
        let n = 200;
        let a_vis = vis_accels(n, 100.0);
        let bias = Vector3::new(0.1, -0.05, 0.2);
        let a_imu: Vec<Vector3<f64>> = a_vis.iter().map(|a| a * 0.37 + bias).collect();
        let rots = rotations(n, 100.0);
        let sol = estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::ScaleBias).unwrap();
        assert_relative_eq!(sol.scale, 0.37, epsilon = 1e-12);
        assert!((sol.accel_bias - bias).norm() < 1e-12);
    }

    #[test]
    fn full_model_recovered_exactly() {
        let n = 500;
        let rate = 100.0;
        let a_vis = vis_accels(n, rate);
        let rots = rotations(n, rate);
        let s_true = 0.37;
        let bias = Vector3::new(0.1, -0.05, 0.2);
        let gravity = Vector3::new(0.4, 9.7, -1.2).normalize() * 9.81;
        let a_imu: Vec<Vector3<f64>> = (0..n)
            .map(|k| a_vis[k] * s_true + bias + rots.get(k) * gravity)
            .collect();
        let sol =
            estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::ScaleBiasGravity).unwrap();
        assert_relative_eq!(sol.scale, s_true, epsilon = 1e-10);
        assert!((sol.accel_bias - bias).norm() < 1e-9);
        assert!((sol.gravity - gravity).norm() < 1e-9);
        assert_relative_eq!(sol.gravity.norm(), 9.81, epsilon = 1e-6);
        assert!(sol.objective_time < 1e-16);
    }

    #[test]
    fn constant_orientation_is_rank_deficient() {
        let n = 100;
        let a_vis = vis_accels(n, 100.0);
        let a_imu: Vec<Vector3<f64>> = a_vis.iter().map(|a| a * 1.5).collect();
        let rots = RotationSequence::from_quaternions(&vec![
            UnitQuaternion::from_euler_angles(
                0.3, -0.2, 0.9
            );
            n
        ]);
        let sol =
            estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::ScaleBiasGravity).unwrap();
        assert!(sol.rank_deficient);
        assert!(sol.null_direction.is_some());
        // the unobservable direction mixes bias and gravity, not scale
        let dir = sol.null_direction.unwrap();
        assert!(dir[0].abs() < 1e-6, "scale entered the null space: {dir:?}");
    }

    #[test]
    fn time_domain_scale_equivariance() {
        let n = 300;
        let a_vis = vis_accels(n, 100.0);
        let rots = rotations(n, 100.0);
        let a_imu: Vec<Vector3<f64>> = (0..n)
            .map(|k| a_vis[k] * 0.8 + Vector3::new(0.05, 0.1, -0.02))
            .collect();
        let base = estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::ScaleBias).unwrap();

        let c = 3.7;
        let scaled_vis: Vec<Vector3<f64>> = a_vis.iter().map(|a| a * c).collect();
        let scaled =
            estimate_time_domain(&scaled_vis, &a_imu, &rots, TimeDomainMode::ScaleBias).unwrap();
        assert_relative_eq!(scaled.scale, base.scale / c, epsilon = 1e-12);
    }

    fn constructed_spectra(
        n: usize,
        rate: f64,
        s_true: f64,
        bias: Vector3<f64>,
        gravity: Vector3<f64>,
    ) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>, RotationSequence) {
        let a_vis = vis_accels(n, rate);
        let rots = rotations(n, rate);
        let a_imu: Vec<Vector3<f64>> =
            (0..n).map(|k| a_vis[k] * s_true + bias + rots.get(k) * gravity).collect();
        (a_vis, a_imu, rots)
    }

    #[test]
    fn frequency_stage_polishes_constructed_problem() {
        let n = 2000;
        let rate = 100.0;
        let gravity = Vector3::new(0.2, 9.6, -1.5).normalize() * 9.81;
        let bias = Vector3::new(0.1, -0.05, 0.2);
        let (a_vis, a_imu, rots) = constructed_spectra(n, rate, 2.0, bias, gravity);
        let init =
            estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::ScaleBiasGravity).unwrap();
        let spectra =
            amplitude_spectra(&a_vis, &a_imu, &rots, rate, Window::Rectangular).unwrap();
        let sol = estimate_frequency_domain(&spectra, 1.2, &init, 9.81).unwrap();

        assert!((sol.scale - 2.0).abs() < 1e-3, "scale {}", sol.scale);
        let angle = sol.gravity.angle(&gravity).to_degrees();
        assert!(angle < 0.1, "gravity direction off by {angle}°");
        assert_relative_eq!(sol.gravity.norm(), 9.81, epsilon = 1e-9);
        assert!(sol.converged);
        assert!(sol.objective_freq.is_some());
    }

    #[test]
    fn frequency_objective_minimal_at_truth() {
        let n = 1000;
        let rate = 100.0;
        let gravity = Vector3::new(-0.3, 9.5, 2.0).normalize() * 9.81;
        let bias = Vector3::new(0.05, 0.15, -0.1);
        let s_true = 1.3;
        let (a_vis, a_imu, rots) = constructed_spectra(n, rate, s_true, bias, gravity);
        let spectra =
            amplitude_spectra(&a_vis, &a_imu, &rots, rate, Window::Rectangular).unwrap();

        let max_bin = (0..spectra.bins())
            .take_while(|&b| spectra.bin_frequency(b) <= 1.2)
            .last()
            .unwrap();
        let vis_mags: Vec<Vector3<f64>> =
            (0..=max_bin).map(|b| spectra.vis_magnitude(b)).collect();
        let (theta, phi) = spherical_angles(&gravity);
        let truth = [s_true, bias.x, bias.y, bias.z, theta, phi];
        let at_truth = frequency_objective(&spectra, &vis_mags, max_bin, &truth, 9.81);

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        for _ in 0..100 {
            let perturbed = [
                s_true * (1.0 + 0.2 * (rng.random::<f64>() - 0.5)),
                bias.x + 0.1 * (rng.random::<f64>() - 0.5),
                bias.y + 0.1 * (rng.random::<f64>() - 0.5),
                bias.z + 0.1 * (rng.random::<f64>() - 0.5),
                theta + 0.2 * (rng.random::<f64>() - 0.5),
                phi + 0.2 * (rng.random::<f64>() - 0.5),
            ];
            let value = frequency_objective(&spectra, &vis_mags, max_bin, &perturbed, 9.81);
            assert!(value >= at_truth, "perturbation beat the truth: {value} < {at_truth}");
        }
    }

    #[test]
    fn frequency_scale_equivariance() {
        let n = 1500;
        let rate = 100.0;
        let gravity = Vector3::new(0.0, 9.81, 0.0);
        let bias = Vector3::new(0.02, -0.03, 0.05);
        let (a_vis, a_imu, rots) = constructed_spectra(n, rate, 0.9, bias, gravity);

        let run = |vis: &[Vector3<f64>]| {
            let init =
                estimate_time_domain(vis, &a_imu, &rots, TimeDomainMode::ScaleBiasGravity).unwrap();
            let spectra = amplitude_spectra(vis, &a_imu, &rots, rate, Window::Rectangular).unwrap();
            estimate_frequency_domain(&spectra, 1.2, &init, 9.81).unwrap().scale
        };

        let base = run(&a_vis);
        let c = 2.5;
        let scaled_vis: Vec<Vector3<f64>> = a_vis.iter().map(|a| a * c).collect();
        let scaled = run(&scaled_vis);
        assert!(
            ((scaled - base / c) / (base / c)).abs() < 1e-6,
            "equivariance violated: {scaled} vs {}",
            base / c
        );
    }

    #[test]
    fn cutoff_at_or_above_nyquist_rejected() {
        let n = 128;
        let rate = 100.0;
        let (a_vis, a_imu, rots) =
            constructed_spectra(n, rate, 1.0, Vector3::zeros(), Vector3::new(0.0, 9.81, 0.0));
        let init =
            estimate_time_domain(&a_vis, &a_imu, &rots, TimeDomainMode::ScaleBiasGravity).unwrap();
        let spectra =
            amplitude_spectra(&a_vis, &a_imu, &rots, rate, Window::Rectangular).unwrap();
        assert!(estimate_frequency_domain(&spectra, 50.0, &init, 9.81).is_err());
    }
}
