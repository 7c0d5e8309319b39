//! Rotation algebra: frame transforms and differentiation of the orientation
//! sequence into visual angular velocities.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Orientation channel viewed as world-to-camera rotation matrices.
#[derive(Debug, Clone)]
pub struct RotationSequence {
    matrices: Vec<Rotation3<f64>>,
}

impl RotationSequence {
    pub fn from_quaternions(quats: &[UnitQuaternion<f64>]) -> Self {
        Self { matrices: quats.iter().map(|q| q.to_rotation_matrix()).collect() }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[Rotation3<f64>] {
        &self.matrices
    }

    pub fn get(&self, k: usize) -> &Rotation3<f64> {
        &self.matrices[k]
    }
}

/// Extracts the vector of a (near) skew-symmetric matrix after projecting out
/// its symmetric part.
fn skew_to_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let a = (m - m.transpose()) * 0.5;
    Vector3::new(a[(2, 1)], a[(0, 2)], a[(1, 0)])
}

/// Visual angular velocities from an orientation sequence sampled at `rate`.
///
/// The rotation-matrix derivative is approximated by central differences
/// (one-sided at the ends), and the angular velocity is read off the
/// antisymmetric part of `dR/dt · Rᵀ`.
pub fn angular_velocity(rotations: &RotationSequence, rate: f64) -> Result<Vec<Vector3<f64>>> {
    let rs = rotations.matrices();
    let n = rs.len();
    if n < 3 {
        return Err(Error::Alignment(format!(
            "angular velocity needs at least 3 orientation samples, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let drdt = if k == 0 {
            (rs[1].matrix() - rs[0].matrix()) * rate
        } else if k == n - 1 {
            (rs[n - 1].matrix() - rs[n - 2].matrix()) * rate
        } else {
            (rs[k + 1].matrix() - rs[k - 1].matrix()) * (rate / 2.0)
        };
        let m = drdt * rs[k].matrix().transpose();
        out.push(skew_to_vector(&m));
    }
    Ok(out)
}

/// Frobenius norm of the symmetric part of `dR/dt · Rᵀ` per interior sample.
/// Diagnostic for how well the discretized derivative stays on the rotation
/// manifold; vanishes as the rate grows on smooth input.
pub fn discarded_symmetric_norms(rotations: &RotationSequence, rate: f64) -> Vec<f64> {
    let rs = rotations.matrices();
    let n = rs.len();
    let mut out = Vec::new();
    for k in 1..n.saturating_sub(1) {
        let drdt = (rs[k + 1].matrix() - rs[k - 1].matrix()) * (rate / 2.0);
        let m = drdt * rs[k].matrix().transpose();
        let sym = (m + m.transpose()) * 0.5;
        out.push(sym.norm());
    }
    out
}

/// Applies the per-sample world-to-camera rotation to a series of world-frame
/// vectors: `out[k] = R[k] · v[k]`.
pub fn rotate_world_to_camera(
    rotations: &RotationSequence,
    v: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if rotations.len() != v.len() {
        return Err(Error::Alignment(format!(
            "length mismatch: {} rotations vs {} vectors",
            rotations.len(),
            v.len()
        )));
    }
    Ok(rotations.matrices().iter().zip(v).map(|(r, x)| r * x).collect())
}

/// Applies a constant world-frame vector per sample: `out[k] = R[k] · v`.
pub fn rotate_world_to_camera_const(
    rotations: &RotationSequence,
    v: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    rotations.matrices().iter().map(|r| r * v).collect()
}

/// Rotates a sensor-frame series into the camera frame with a fixed extrinsic
/// rotation. Rejects matrices that are not orthonormal.
pub fn rotate_sensor_to_camera(
    r_s: &Matrix3<f64>,
    series: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    let defect = (r_s.transpose() * r_s - Matrix3::identity()).norm();
    if defect > 1e-6 || (r_s.determinant() - 1.0).abs() > 1e-6 {
        return Err(Error::Alignment(format!(
            "sensor-to-camera matrix is not a rotation (orthogonality defect {defect:.2e})"
        )));
    }
    Ok(series.iter().map(|v| r_s * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spin_sequence(axis_rate: Vector3<f64>, rate: f64, n: usize) -> RotationSequence {
        let quats: Vec<UnitQuaternion<f64>> = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                let angle = axis_rate.norm() * t;
                if angle == 0.0 {
                    UnitQuaternion::identity()
                } else {
                    UnitQuaternion::from_axis_angle(
                        &nalgebra::Unit::new_normalize(axis_rate),
                        angle,
                    )
                }
            })
            .collect();
        RotationSequence::from_quaternions(&quats)
    }

    #[test]
    fn constant_orientation_gives_zero_omega() {
        let q = UnitQuaternion::from_euler_angles(0.4, -0.8, 0.2);
        let rots = RotationSequence::from_quaternions(&vec![q; 50]);
        let omega = angular_velocity(&rots, 100.0).unwrap();
        for w in omega {
            assert!(w.norm() < 1e-12);
        }
    }

    #[test]
    fn constant_axis_spin_recovers_rate_vector() {
        let rots = spin_sequence(Vector3::new(0.0, 0.0, 0.5), 100.0, 200);
        let omega = angular_velocity(&rots, 100.0).unwrap();
        assert_eq!(omega.len(), 200);
        for w in &omega[1..199] {
            assert_relative_eq!(w.z, 0.5, epsilon = 1e-5);
            assert!(w.x.abs() < 1e-5 && w.y.abs() < 1e-5);
        }
    }

    #[test]
    fn sinusoidal_rotation_error_is_second_order() {
        // fixed axis, sinusoidal angle: analytic omega = axis * d(angle)/dt
        let axis = nalgebra::Unit::new_normalize(Vector3::new(1.0, -2.0, 0.5));
        let amp = 0.8;
        let freq = 0.5;
        let max_err = |rate: f64| -> f64 {
            let n = (rate * 4.0) as usize;
            let quats: Vec<UnitQuaternion<f64>> = (0..n)
                .map(|k| {
                    let t = k as f64 / rate;
                    UnitQuaternion::from_axis_angle(
                        &axis,
                        amp * (2.0 * std::f64::consts::PI * freq * t).sin(),
                    )
                })
                .collect();
            let rots = RotationSequence::from_quaternions(&quats);
            let omega = angular_velocity(&rots, rate).unwrap();
            let mut worst: f64 = 0.0;
            for (k, w) in omega.iter().enumerate().skip(1).take(n - 2) {
                let t = k as f64 / rate;
                let dangle = amp
                    * 2.0
                    * std::f64::consts::PI
                    * freq
                    * (2.0 * std::f64::consts::PI * freq * t).cos();
                worst = worst.max((w - axis.into_inner() * dangle).norm());
            }
            worst
        };
        let e100 = max_err(100.0);
        let e200 = max_err(200.0);
        let ratio = e100 / e200;
        assert!(ratio > 3.0 && ratio < 5.5, "expected O(h^2) decay, ratio {ratio}");
    }

    #[test]
    fn omega_is_gauge_invariant_under_right_multiplication() {
        let rots = spin_sequence(Vector3::new(0.3, -0.2, 0.4), 100.0, 150);
        let gauge = Rotation3::from_euler_angles(1.0, -0.7, 0.3);
        let gauged: Vec<UnitQuaternion<f64>> = rots
            .matrices()
            .iter()
            .map(|r| UnitQuaternion::from_rotation_matrix(&(r * gauge)))
            .collect();
        let a = angular_velocity(&rots, 100.0).unwrap();
        let b = angular_velocity(&RotationSequence::from_quaternions(&gauged), 100.0).unwrap();
        for (wa, wb) in a.iter().zip(&b) {
            assert!((wa - wb).norm() < 1e-9);
        }
    }

    #[test]
    fn symmetric_part_vanishes_with_rate() {
        let seq = |rate: f64| {
            let n = (rate * 2.0) as usize;
            let quats: Vec<UnitQuaternion<f64>> = (0..n)
                .map(|k| {
                    let t = k as f64 / rate;
                    UnitQuaternion::from_euler_angles(
                        0.5 * (2.1 * t).sin(),
                        0.4 * (1.3 * t).cos(),
                        0.6 * (1.7 * t).sin(),
                    )
                })
                .collect();
            RotationSequence::from_quaternions(&quats)
        };
        let max_at = |rate: f64| {
            discarded_symmetric_norms(&seq(rate), rate)
                .into_iter()
                .fold(0.0f64, f64::max)
        };
        let coarse = max_at(100.0);
        let fine = max_at(400.0);
        assert!(fine < coarse / 8.0, "symmetric part should shrink ~h^2: {coarse} -> {fine}");
    }

    #[test]
    fn too_few_samples_rejected() {
        let rots = spin_sequence(Vector3::z() * 0.1, 10.0, 2);
        assert!(angular_velocity(&rots, 10.0).is_err());
    }

    #[test]
    fn world_to_camera_rotation_and_round_trip() {
        let quats: Vec<UnitQuaternion<f64>> = (0..20)
            .map(|k| UnitQuaternion::from_euler_angles(0.1 * k as f64, 0.0, -0.05 * k as f64))
            .collect();
        let rots = RotationSequence::from_quaternions(&quats);
        let series: Vec<Vector3<f64>> =
            (0..20).map(|k| Vector3::new(k as f64, 1.0, -2.0)).collect();
        let rotated = rotate_world_to_camera(&rots, &series).unwrap();
        for ((r, v), out) in rots.matrices().iter().zip(&series).zip(&rotated) {
            // norm preserved, and Rᵀ(Rv) = v
            assert_relative_eq!(out.norm(), v.norm(), epsilon = 1e-12);
            assert!((r.inverse() * out - v).norm() < 1e-12);
        }

        let quarter = RotationSequence::from_quaternions(&[UnitQuaternion::from_axis_angle(
            &Vector3::z_axis(),
            std::f64::consts::FRAC_PI_2,
        )]);
        let out = rotate_world_to_camera(&quarter, &[Vector3::x()]).unwrap();
        assert_relative_eq!(out[0].y.abs(), 1.0, epsilon = 1e-12);

        assert!(rotate_world_to_camera(&rots, &series[..5]).is_err());
    }

    #[test]
    fn sensor_to_camera_requires_orthogonal_matrix() {
        let series = vec![Vector3::new(1.0, 2.0, 3.0)];
        let ok = rotate_sensor_to_camera(&Matrix3::identity(), &series).unwrap();
        assert_eq!(ok[0], series[0]);

        let r = Rotation3::from_euler_angles(0.3, 0.1, -0.2);
        let fwd = rotate_sensor_to_camera(r.matrix(), &series).unwrap();
        let back = rotate_sensor_to_camera(&r.matrix().transpose(), &fwd).unwrap();
        assert!((back[0] - series[0]).norm() < 1e-12);
        assert_relative_eq!(fwd[0].norm(), series[0].norm(), epsilon = 1e-12);

        let skewed = Matrix3::identity() * 1.01;
        assert!(rotate_sensor_to_camera(&skewed, &series).is_err());
    }
}
