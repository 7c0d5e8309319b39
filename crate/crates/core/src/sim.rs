//! Synthetic dataset generator with known ground truth.
//!
//! Trajectories are sums of sinusoids per position axis and per Euler angle,
//! so every derivative the measurement models need (velocity, acceleration,
//! angular velocity) has a closed form. Nothing in here differentiates
//! numerically, which keeps the generator independent of the estimation code
//! it is used to validate.

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ImuSample, PoseSample};

const TAU: f64 = std::f64::consts::TAU;

/// One sinusoidal component: `amplitude · sin(2π · frequency · t + phase)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self { amplitude, frequency, phase }
    }

    fn value(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }

    fn derivative(&self, t: f64) -> f64 {
        self.amplitude * TAU * self.frequency * (TAU * self.frequency * t + self.phase).cos()
    }

    fn second_derivative(&self, t: f64) -> f64 {
        -self.amplitude
            * (TAU * self.frequency).powi(2)
            * (TAU * self.frequency * t + self.phase).sin()
    }
}

/// Euler-angle track: a linear ramp plus sinusoids.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AngleTrack {
    /// Constant angular rate, rad/s.
    pub rate: f64,
    pub sinusoids: Vec<Sinusoid>,
}

impl AngleTrack {
    fn angle(&self, t: f64) -> f64 {
        self.rate * t + self.sinusoids.iter().map(|s| s.value(t)).sum::<f64>()
    }

    fn angle_rate(&self, t: f64) -> f64 {
        self.rate + self.sinusoids.iter().map(|s| s.derivative(t)).sum::<f64>()
    }
}

/// Sensor noise levels and clock imperfections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gyroscope noise σ, rad/s.
    pub gyro_std: f64,
    /// Accelerometer noise σ, m/s².
    pub accel_std: f64,
    /// Camera position noise σ, SfM units.
    pub pose_std: f64,
    /// Amplitude of sinusoidal IMU clock jitter, seconds.
    pub clock_jitter_amplitude: f64,
    /// Frequency of the clock jitter, Hz.
    pub clock_jitter_frequency: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            gyro_std: 0.0,
            accel_std: 0.0,
            pose_std: 0.0,
            clock_jitter_amplitude: 0.0,
            clock_jitter_frequency: 0.0,
        }
    }
}

/// Full scenario description: motion, ground-truth calibration, noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration: f64,
    pub imu_rate: f64,
    pub cam_rate: f64,
    /// Metric position per axis, meters.
    pub position: [Vec<Sinusoid>; 3],
    /// Euler-angle tracks of the world-to-camera rotation
    /// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub yaw: AngleTrack,
    pub pitch: AngleTrack,
    pub roll: AngleTrack,
    /// Metric meters per SfM unit.
    pub scale: f64,
    /// Camera-IMU clock offset: an IMU sample stamped `t` carries the signal
    /// from camera time `t - time_offset`. Seconds.
    pub time_offset: f64,
    /// Sensor-to-camera rotation.
    pub sensor_rotation: UnitQuaternion<f64>,
    /// Gyroscope bias in the camera frame, rad/s.
    pub gyro_bias: Vector3<f64>,
    /// Accelerometer bias in the camera frame, m/s².
    pub accel_bias: Vector3<f64>,
    /// Gravity reaction vector in the world frame, m/s².
    pub gravity: Vector3<f64>,
    pub noise: NoiseSpec,
}

/// Ground-truth sidecar stored next to generated datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub scale: f64,
    pub time_offset: f64,
    pub sensor_rotation: UnitQuaternion<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gravity: Vector3<f64>,
    pub path_length: f64,
    pub duration: f64,
    pub imu_rate: f64,
    pub cam_rate: f64,
    pub seed: u64,
}

/// Generator output: metric ground-truth poses, the noisy SfM-unit camera
/// trajectory, and the IMU log.
#[derive(Debug, Clone)]
pub struct Generated {
    pub truth_poses: Vec<PoseSample>,
    pub poses: Vec<PoseSample>,
    pub imu: Vec<ImuSample>,
    pub truth: Truth,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Error::Simulation("duration must be positive".to_string()));
        }
        for rate in [self.imu_rate, self.cam_rate] {
            if !rate.is_finite() || rate <= 0.0 {
                return Err(Error::Simulation("sample rates must be positive".to_string()));
            }
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::Simulation("scale must be positive".to_string()));
        }
        let max_freq = self.imu_rate.min(self.cam_rate) / 4.0;
        let freqs = self
            .position
            .iter()
            .flatten()
            .chain(&self.yaw.sinusoids)
            .chain(&self.pitch.sinusoids)
            .chain(&self.roll.sinusoids);
        for s in freqs {
            if s.frequency >= max_freq {
                return Err(Error::Simulation(format!(
                    "sinusoid frequency {} Hz too close to the sample rates (max {max_freq} Hz)",
                    s.frequency
                )));
            }
        }
        Ok(())
    }

    /// Metric position, meters.
    pub fn position_m(&self, t: f64) -> Vector3<f64> {
        Vector3::new(
            self.position[0].iter().map(|s| s.value(t)).sum(),
            self.position[1].iter().map(|s| s.value(t)).sum(),
            self.position[2].iter().map(|s| s.value(t)).sum(),
        )
    }

    pub fn velocity_m(&self, t: f64) -> Vector3<f64> {
        Vector3::new(
            self.position[0].iter().map(|s| s.derivative(t)).sum(),
            self.position[1].iter().map(|s| s.derivative(t)).sum(),
            self.position[2].iter().map(|s| s.derivative(t)).sum(),
        )
    }

    pub fn acceleration_m(&self, t: f64) -> Vector3<f64> {
        Vector3::new(
            self.position[0].iter().map(|s| s.second_derivative(t)).sum(),
            self.position[1].iter().map(|s| s.second_derivative(t)).sum(),
            self.position[2].iter().map(|s| s.second_derivative(t)).sum(),
        )
    }

    /// World-to-camera rotation `Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn orientation(&self, t: f64) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw.angle(t))
            * Rotation3::from_axis_angle(&Vector3::y_axis(), self.pitch.angle(t))
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll.angle(t))
    }

    /// Angular velocity consistent with differentiating [`Self::orientation`]:
    /// `[ω]× = dR/dt · Rᵀ`, i.e. the quantity the visual pipeline extracts
    /// from the orientation sequence.
    ///
    /// For `R = Rz·Ry·Rx` the chain rule gives
    /// `ω = yaw'·e_z + pitch'·Rz·e_y + roll'·Rz·Ry·e_x`.
    pub fn angular_velocity_camera(&self, t: f64) -> Vector3<f64> {
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw.angle(t));
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.pitch.angle(t));
        Vector3::z() * self.yaw.angle_rate(t)
            + rz * Vector3::y() * self.pitch.angle_rate(t)
            + rz * ry * Vector3::x() * self.roll.angle_rate(t)
    }

    /// Metric path length, integrated numerically at 1 kHz.
    pub fn path_length(&self) -> f64 {
        let steps = (self.duration * 1000.0) as usize;
        let dt = self.duration / steps as f64;
        (0..steps)
            .map(|k| self.velocity_m((k as f64 + 0.5) * dt).norm() * dt)
            .sum()
    }

    /// Desk-scale scenario: 60 s of handheld-style motion covering roughly
    /// 15 m, rotations on all axes, smartphone-grade noise.
    pub fn default_scenario() -> Self {
        Self {
            duration: 60.0,
            imu_rate: 100.0,
            cam_rate: 30.0,
            position: [
                vec![
                    Sinusoid::new(0.28, 0.11, 0.0),
                    Sinusoid::new(0.055, 0.35, 1.1),
                    Sinusoid::new(0.030, 0.55, 2.8),
                ],
                vec![
                    Sinusoid::new(0.20, 0.17, 0.7),
                    Sinusoid::new(0.060, 0.30, 2.3),
                    Sinusoid::new(0.026, 0.60, 4.1),
                ],
                vec![
                    Sinusoid::new(0.24, 0.13, 2.0),
                    Sinusoid::new(0.050, 0.40, 4.0),
                    Sinusoid::new(0.028, 0.50, 0.9),
                ],
            ],
            yaw: AngleTrack {
                rate: 0.0,
                sinusoids: vec![Sinusoid::new(0.50, 0.15, 0.3), Sinusoid::new(0.08, 0.65, 1.7)],
            },
            pitch: AngleTrack {
                rate: 0.0,
                sinusoids: vec![Sinusoid::new(0.35, 0.21, 1.2), Sinusoid::new(0.06, 0.85, 0.5)],
            },
            roll: AngleTrack {
                rate: 0.0,
                sinusoids: vec![Sinusoid::new(0.40, 0.09, 2.6), Sinusoid::new(0.07, 0.75, 3.9)],
            },
            scale: 0.37,
            time_offset: 0.15,
            sensor_rotation: UnitQuaternion::from_axis_angle(
                &Vector3::z_axis(),
                10.0_f64.to_radians(),
            ) * UnitQuaternion::from_axis_angle(
                &Vector3::x_axis(),
                90.0_f64.to_radians(),
            ),
            gyro_bias: Vector3::new(0.002, -0.001, 0.0015),
            accel_bias: Vector3::new(0.1, -0.05, 0.2),
            gravity: Vector3::new(0.05, 0.98, -0.12).normalize() * 9.81,
            noise: NoiseSpec {
                gyro_std: 0.005,
                accel_std: 0.05,
                pose_std: 0.002,
                clock_jitter_amplitude: 0.0,
                clock_jitter_frequency: 0.0,
            },
        }
    }
}

/// Generates the camera trajectory and IMU log for a scenario.
///
/// Camera poses sample the analytic trajectory at the camera rate, scaled to
/// SfM units with position noise. IMU samples stamped `t` carry the analytic
/// signals evaluated at `t - time_offset` (plus optional sinusoidal clock
/// jitter), rotated into the sensor frame and biased:
///
/// ```text
/// gyro(t)  = R_sᵀ · (ω_C(t') - b_gyro) + noise
/// accel(t) = R_sᵀ · (R(t')·(a(t') + g) + b_acc) + noise
/// ```
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let n_cam = (spec.duration * spec.cam_rate).round() as usize;
    let n_imu = (spec.duration * spec.imu_rate).round() as usize;

    let mut truth_poses = Vec::with_capacity(n_cam);
    let mut poses = Vec::with_capacity(n_cam);
    for i in 0..n_cam {
        let t = i as f64 / spec.cam_rate;
        let p_m = spec.position_m(t);
        let orientation = UnitQuaternion::from_rotation_matrix(&spec.orientation(t));
        truth_poses.push(PoseSample { t, position: p_m, orientation });

        let noise = Vector3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ) * spec.noise.pose_std;
        poses.push(PoseSample { t, position: p_m / spec.scale + noise, orientation });
    }

    let r_s_inv = spec.sensor_rotation.inverse();
    let mut imu = Vec::with_capacity(n_imu);
    for j in 0..n_imu {
        let stamp = j as f64 / spec.imu_rate;
        let jitter = if spec.noise.clock_jitter_amplitude != 0.0 {
            spec.noise.clock_jitter_amplitude
                * (TAU * spec.noise.clock_jitter_frequency * stamp).sin()
        } else {
            0.0
        };
        let t = stamp - spec.time_offset + jitter;

        let omega_c = spec.angular_velocity_camera(t);
        let gyro_noise = Vector3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ) * spec.noise.gyro_std;
        let gyro = r_s_inv * (omega_c - spec.gyro_bias) + gyro_noise;

        let a_c = spec.orientation(t) * (spec.acceleration_m(t) + spec.gravity);
        let accel_noise = Vector3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ) * spec.noise.accel_std;
        let accel = r_s_inv * (a_c + spec.accel_bias) + accel_noise;

        imu.push(ImuSample { t: stamp, gyro, accel });
    }

    let truth = Truth {
        scale: spec.scale,
        time_offset: spec.time_offset,
        sensor_rotation: spec.sensor_rotation,
        gyro_bias: spec.gyro_bias,
        accel_bias: spec.accel_bias,
        gravity: spec.gravity,
        path_length: spec.path_length(),
        duration: spec.duration,
        imu_rate: spec.imu_rate,
        cam_rate: spec.cam_rate,
        seed,
    };

    Ok(Generated { truth_poses, poses, imu, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stationary_spec() -> ScenarioSpec {
        let mut spec = ScenarioSpec::default_scenario();
        spec.position = [Vec::new(), Vec::new(), Vec::new()];
        spec.yaw = AngleTrack::default();
        spec.pitch = AngleTrack::default();
        spec.roll = AngleTrack::default();
        spec.noise = NoiseSpec::none();
        spec.time_offset = 0.0;
        spec
    }

    #[test]
    fn stationary_device_reads_gravity_and_bias() {
        let mut spec = stationary_spec();
        spec.accel_bias = Vector3::zeros();
        let out = generate(&spec, 1).unwrap();
        for s in &out.imu {
            assert_relative_eq!(s.accel.norm(), 9.81, epsilon = 1e-9);
            // gyro reads only the bias term
            let expected = spec.sensor_rotation.inverse() * (-spec.gyro_bias);
            assert!((s.gyro - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_z_spin_gives_constant_gyro() {
        let mut spec = stationary_spec();
        spec.sensor_rotation = UnitQuaternion::identity();
        spec.gyro_bias = Vector3::zeros();
        spec.accel_bias = Vector3::zeros();
        spec.yaw = AngleTrack { rate: 0.5, sinusoids: Vec::new() };
        let out = generate(&spec, 1).unwrap();
        for s in &out.imu {
            assert!((s.gyro - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12, "{}", s.gyro);
        }
    }

    #[test]
    fn analytic_acceleration_matches_finite_differences() {
        let spec = ScenarioSpec::default_scenario();
        let check = |h: f64| -> f64 {
            let mut worst: f64 = 0.0;
            for k in 1..200 {
                let t = k as f64 * 0.05;
                let fd = (spec.position_m(t + h) - spec.position_m(t) * 2.0
                    + spec.position_m(t - h))
                    / (h * h);
                worst = worst.max((fd - spec.acceleration_m(t)).norm());
            }
            worst
        };
        let coarse = check(0.01);
        let fine = check(0.005);
        assert!(coarse < 1e-3);
        // second-order convergence of the check itself
        assert!(fine < coarse / 3.0);
    }

    #[test]
    fn angular_velocity_closed_form_matches_rotation_derivative() {
        let spec = ScenarioSpec::default_scenario();
        let h = 1e-6;
        for k in 0..100 {
            let t = 0.3 + k as f64 * 0.37;
            let r = spec.orientation(t);
            let dr = (spec.orientation(t + h).matrix() - spec.orientation(t - h).matrix())
                / (2.0 * h);
            let m = dr * r.matrix().transpose();
            let omega_fd = Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
            let omega = spec.angular_velocity_camera(t);
            assert!((omega - omega_fd).norm() < 1e-6, "t = {t}: {omega} vs {omega_fd}");
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = ScenarioSpec::default_scenario();
        let a = generate(&spec, 42).unwrap();
        let b = generate(&spec, 42).unwrap();
        assert_eq!(a.poses.len(), b.poses.len());
        for (x, y) in a.poses.iter().zip(&b.poses) {
            assert_eq!(x.position, y.position);
        }
        for (x, y) in a.imu.iter().zip(&b.imu) {
            assert_eq!(x.gyro, y.gyro);
            assert_eq!(x.accel, y.accel);
        }
    }

    #[test]
    fn default_scenario_counts_and_path_length() {
        let spec = ScenarioSpec::default_scenario();
        let out = generate(&spec, 7).unwrap();
        assert_eq!(out.imu.len(), 6000);
        assert_eq!(out.poses.len(), 1800);
        let path = out.truth.path_length;
        assert!((14.0..=20.0).contains(&path), "path length {path} m");
        assert_relative_eq!(spec.gravity.norm(), 9.81, epsilon = 1e-9);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = ScenarioSpec::default_scenario();
        spec.imu_rate = -1.0;
        assert!(generate(&spec, 0).is_err());

        let mut spec2 = ScenarioSpec::default_scenario();
        spec2.position[0].push(Sinusoid::new(0.1, 20.0, 0.0));
        assert!(generate(&spec2, 0).is_err());
    }

    #[test]
    fn files_round_trip_through_ingest() {
        let spec = ScenarioSpec::default_scenario();
        let out = generate(&spec, 3).unwrap();
        let dir = std::env::temp_dir();
        let traj = dir.join(format!("sfmscale_sim_traj_{}", std::process::id()));
        let imu = dir.join(format!("sfmscale_sim_imu_{}", std::process::id()));
        crate::ingest::write_trajectory(&traj, &out.poses).unwrap();
        crate::ingest::write_imu_csv(&imu, &out.imu).unwrap();
        let poses_back = crate::ingest::parse_trajectory(&traj).unwrap();
        let imu_back = crate::ingest::parse_imu(&imu).unwrap();
        assert_eq!(poses_back.len(), out.poses.len());
        assert_eq!(imu_back.len(), out.imu.len());
        for (a, b) in out.poses.iter().zip(&poses_back) {
            assert_eq!(a.position, b.position);
        }
        for (a, b) in out.imu.iter().zip(&imu_back) {
            assert_eq!(a.accel, b.accel);
        }
        std::fs::remove_file(traj).ok();
        std::fs::remove_file(imu).ok();
    }
}
