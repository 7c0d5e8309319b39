//! Closed-form optimal rigid fit between corresponded 3-vector sets
//! (Kabsch/Arun): the workhorse behind both the gyroscope alignment and the
//! ground-point evaluation.

use nalgebra::{Matrix3, Rotation3, Vector3, SVD};

/// Optimal rotation and offset minimizing `Σ ‖target[k] − (R·source[k] + t)‖²`.
#[derive(Debug, Clone)]
pub struct RigidFit {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
    /// Set when the two smallest singular values of the cross-covariance are
    /// negligible: the source points are collinear (after centering) and the
    /// rotation about that axis is unobservable.
    pub degenerate: bool,
}

/// Singular-value ratio below which the configuration counts as degenerate.
const DEGENERACY_RATIO: f64 = 1e-12;

pub fn fit_rigid(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> RigidFit {
    assert_eq!(source.len(), target.len(), "corresponded sets must match in length");
    assert!(source.len() >= 3, "rigid fit needs at least 3 correspondences");
    let n = source.len() as f64;

    let centroid_src: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / n;
    let centroid_tgt: Vector3<f64> = target.iter().sum::<Vector3<f64>>() / n;

    let mut cross = Matrix3::zeros();
    for (p, q) in source.iter().zip(target) {
        cross += (p - centroid_src) * (q - centroid_tgt).transpose();
    }

    let svd = SVD::new(cross, true, true);
    let u = svd.u.expect("3x3 SVD always yields U");
    let v_t = svd.v_t.expect("3x3 SVD always yields Vᵀ");
    let v = v_t.transpose();

    let sv = svd.singular_values;
    let degenerate = sv[1] < DEGENERACY_RATIO * sv[0] && sv[2] < DEGENERACY_RATIO * sv[0];

    // reflection guard: force det(R) = +1
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = Rotation3::from_matrix_unchecked(r);

    let translation = centroid_tgt - rotation * centroid_src;

    let ss: f64 = source
        .iter()
        .zip(target)
        .map(|(p, q)| (rotation * p + translation - q).norm_squared())
        .sum();
    let rms_residual = (ss / n).sqrt();

    RigidFit { rotation, translation, rms_residual, degenerate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn identity_on_equal_sets() {
        let pts: Vec<Vector3<f64>> = (0..5)
            .map(|k| Vector3::new(k as f64, (k * k) as f64, -(k as f64)))
            .collect();
        let fit = fit_rigid(&pts, &pts);
        assert!((fit.rotation.matrix() - Matrix3::identity()).amax() < 1e-12);
        assert!(fit.translation.norm() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
        assert!(!fit.degenerate);
    }

    #[test]
    fn recovers_random_rigid_motion() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let r0 = Rotation3::from_euler_angles(0.7, -0.4, 1.9);
        let t0 = Vector3::new(2.0, -1.0, 0.5);
        let src: Vec<Vector3<f64>> = (0..40)
            .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let tgt: Vec<Vector3<f64>> = src.iter().map(|p| r0 * p + t0).collect();
        let fit = fit_rigid(&src, &tgt);
        assert!((fit.rotation.matrix() - r0.matrix()).amax() < 1e-10);
        assert!((fit.translation - t0).norm() < 1e-10);
        assert!(fit.rms_residual < 1e-10);
        assert!((fit.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flags_collinear_sources() {
        let src: Vec<Vector3<f64>> = (0..6).map(|k| Vector3::new(k as f64, 0.0, 0.0)).collect();
        let tgt = src.clone();
        let fit = fit_rigid(&src, &tgt);
        assert!(fit.degenerate);
    }

    #[test]
    fn reflection_guard_keeps_det_positive_under_noise() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        // nearly-planar target with large noise tempts the SVD toward a reflection
        for _ in 0..20 {
            let src: Vec<Vector3<f64>> = (0..4)
                .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), 0.01 * rng.random::<f64>()))
                .collect();
            let tgt: Vec<Vector3<f64>> = src
                .iter()
                .map(|p| -p + Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let fit = fit_rigid(&src, &tgt);
            assert!((fit.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
        }
    }
}
