//! Kalman filter + Rauch-Tung-Striebel smoother over camera positions, with
//! marginal-maximum-likelihood selection of the process noise.
//!
//! Each axis runs an independent three-state model (position, velocity,
//! acceleration) driven by white-noise jerk:
//!
//! ```text
//! F = | 1  dt  dt²/2 |        Q = q · | dt⁵/20  dt⁴/8  dt³/6 |
//!     | 0   1  dt    |                | dt⁴/8   dt³/3  dt²/2 |
//!     | 0   0   1    |                | dt³/6   dt²/2  dt    |
//! ```
//!
//! with `H = [1 0 0]` observing position. The spectral density `q` is chosen
//! on a log grid by maximizing the marginal likelihood from the prediction
//! error decomposition, summed over the three axes; the measurement noise `r`
//! stays fixed. Smoothed accelerations come straight out of the third state,
//! avoiding the noise amplification of double-differencing the positions.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diffuse prior variance, as a multiple of the measurement noise.
const DIFFUSE_PRIOR_FACTOR: f64 = 1e6;

/// Relative diagonal jitter applied before inverting predicted covariances.
const INVERSION_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmootherConfig {
    /// Process-noise spectral densities to score, positive ascending.
    pub q_grid: Vec<f64>,
    /// Measurement noise variance (SfM units squared). `None` estimates it
    /// from the half-sample high-frequency residual of the positions.
    pub r: Option<f64>,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { q_grid: log_grid(1e-4, 1e4, 17), r: None }
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (step * k as f64).exp()).collect()
}

/// RTS-smoothed state trajectory.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub rate: f64,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub accelerations: Vec<Vector3<f64>>,
    /// Per-axis 3x3 state covariances, indexed `[axis][sample]`.
    pub axis_covariances: [Vec<Matrix3<f64>>; 3],
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Result of [`smooth_positions`].
#[derive(Debug, Clone)]
pub struct SmoothOutput {
    pub trajectory: StateTrajectory,
    pub q_star: f64,
    pub r: f64,
    pub warnings: Vec<String>,
}

/// Stored forward pass of the Kalman filter for one axis.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub filtered_states: Vec<Vector3<f64>>,
    pub filtered_covs: Vec<Matrix3<f64>>,
    /// One-step predictions; index 0 holds the prior.
    pub predicted_states: Vec<Vector3<f64>>,
    pub predicted_covs: Vec<Matrix3<f64>>,
    pub log_likelihood: f64,
}

fn transition(dt: f64) -> Matrix3<f64> {
    Matrix3::new(1.0, dt, dt * dt / 2.0, 0.0, 1.0, dt, 0.0, 0.0, 1.0)
}

fn process_noise(dt: f64, q: f64) -> Matrix3<f64> {
    let d2 = dt * dt;
    let d3 = d2 * dt;
    let d4 = d3 * dt;
    let d5 = d4 * dt;
    q * Matrix3::new(
        d5 / 20.0,
        d4 / 8.0,
        d3 / 6.0,
        d4 / 8.0,
        d3 / 3.0,
        d2 / 2.0,
        d3 / 6.0,
        d2 / 2.0,
        dt,
    )
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Forward Kalman pass over one scalar measurement channel.
///
/// The state starts at the first measurement with zero velocity and
/// acceleration under a diffuse prior. The returned log-likelihood is the sum
/// of innovation log-densities (prediction error decomposition).
pub fn kalman_forward(measurements: &[f64], dt: f64, q: f64, r: f64) -> Result<ForwardPass> {
    if measurements.len() < 2 {
        return Err(Error::Smoothing("Kalman pass needs at least 2 measurements".to_string()));
    }
    if dt <= 0.0 || q <= 0.0 || r <= 0.0 || !(dt * q * r).is_finite() {
        return Err(Error::Smoothing(format!("dt, q, r must be positive (dt={dt}, q={q}, r={r})")));
    }
    let n = measurements.len();
    let f = transition(dt);
    let qm = process_noise(dt, q);

    let mut x = Vector3::new(measurements[0], 0.0, 0.0);
    let mut p = Matrix3::identity() * (DIFFUSE_PRIOR_FACTOR * r);

    let mut pass = ForwardPass {
        filtered_states: Vec::with_capacity(n),
        filtered_covs: Vec::with_capacity(n),
        predicted_states: Vec::with_capacity(n),
        predicted_covs: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };

    for (k, &z) in measurements.iter().enumerate() {
        if k > 0 {
            x = f * x;
            p = symmetrize(&(f * p * f.transpose() + qm));
        }
        pass.predicted_states.push(x);
        pass.predicted_covs.push(p);

        let innovation = z - x[0];
        let s = p[(0, 0)] + r;
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Smoothing(format!(
                "innovation covariance became non-positive at sample {k} (S = {s:.3e})"
            )));
        }
        pass.log_likelihood +=
            -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + innovation * innovation / s);

        let gain = p.column(0) / s;
        x += gain * innovation;
        // Joseph-free form; symmetrization keeps P well conditioned
        let mut ikh = Matrix3::identity();
        ikh[(0, 0)] -= gain[0];
        ikh[(1, 0)] = -gain[1];
        ikh[(2, 0)] = -gain[2];
        p = symmetrize(&(ikh * p));

        pass.filtered_states.push(x);
        pass.filtered_covs.push(p);
    }
    Ok(pass)
}

/// Backward RTS recursion over a stored forward pass. Returns smoothed states
/// and covariances for one axis.
#[allow(clippy::type_complexity)]
pub fn rts_backward(pass: &ForwardPass, dt: f64) -> Result<(Vec<Vector3<f64>>, Vec<Matrix3<f64>>)> {
    let n = pass.filtered_states.len();
    if n == 0
        || pass.filtered_covs.len() != n
        || pass.predicted_states.len() != n
        || pass.predicted_covs.len() != n
    {
        return Err(Error::Smoothing("incomplete forward-pass storage".to_string()));
    }
    let f = transition(dt);

    let mut states = pass.filtered_states.clone();
    let mut covs = pass.filtered_covs.clone();

    for k in (0..n - 1).rev() {
        let p_pred = symmetrize(&pass.predicted_covs[k + 1]);
        // Cholesky handles the wide dynamic range of the diffuse transient
        // better than the adjugate inverse; jitter only as a rescue since it
        // perturbs the gain when applied blindly.
        let p_pred_inv = p_pred
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| p_pred.try_inverse())
            .or_else(|| {
                let jitter = INVERSION_JITTER * p_pred.trace().max(f64::MIN_POSITIVE);
                (p_pred + Matrix3::identity() * jitter).try_inverse()
            })
            .ok_or_else(|| {
                Error::Smoothing(format!("singular predicted covariance at sample {}", k + 1))
            })?;

        let gain = pass.filtered_covs[k] * f.transpose() * p_pred_inv;
        states[k] = pass.filtered_states[k] + gain * (states[k + 1] - pass.predicted_states[k + 1]);
        covs[k] = symmetrize(
            &(pass.filtered_covs[k] + gain * (covs[k + 1] - pass.predicted_covs[k + 1]) * gain.transpose()),
        );
    }
    Ok((states, covs))
}

/// Measurement-noise variance from the half-sample high-frequency residual
/// `p[k] - (p[k-1] + p[k+1]) / 2`, pooled over axes. For white noise the
/// residual variance is 1.5x the noise variance, hence the 2/3 factor.
pub fn estimate_measurement_noise(positions: &[Vector3<f64>]) -> f64 {
    let n = positions.len();
    let mut signal_var = 0.0;
    let mut r_est = 0.0;
    for axis in 0..3 {
        let series: Vec<f64> = positions.iter().map(|p| p[axis]).collect();
        let mean = series.iter().sum::<f64>() / n as f64;
        signal_var += series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64 / 3.0;

        let residuals: Vec<f64> =
            (1..n - 1).map(|k| series[k] - 0.5 * (series[k - 1] + series[k + 1])).collect();
        let rm = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let rv = residuals.iter().map(|x| (x - rm) * (x - rm)).sum::<f64>() / residuals.len() as f64;
        r_est += rv * (2.0 / 3.0) / 3.0;
    }
    // floor keeps noise-free inputs solvable
    r_est.max(signal_var * 1e-12).max(1e-24)
}

/// Selects the process-noise spectral density maximizing the summed per-axis
/// marginal log-likelihood. Ties break toward smaller `q` (more smoothing).
pub fn select_process_noise(
    positions: &[Vector3<f64>],
    dt: f64,
    config: &SmootherConfig,
    r: f64,
) -> Result<(f64, Vec<String>)> {
    if config.q_grid.is_empty() {
        return Err(Error::Smoothing("process-noise grid is empty".to_string()));
    }
    if config.q_grid.windows(2).any(|w| w[1] <= w[0]) || config.q_grid[0] <= 0.0 {
        return Err(Error::Smoothing("process-noise grid must be positive ascending".to_string()));
    }
    let axes: [Vec<f64>; 3] = [
        positions.iter().map(|p| p.x).collect(),
        positions.iter().map(|p| p.y).collect(),
        positions.iter().map(|p| p.z).collect(),
    ];

    let mut best_idx = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (i, &q) in config.q_grid.iter().enumerate() {
        let mut total = 0.0;
        for series in &axes {
            total += kalman_forward(series, dt, q, r)?.log_likelihood;
        }
        if total > best_ll {
            best_ll = total;
            best_idx = i;
        }
    }

    let mut warnings = Vec::new();
    if best_idx == 0 || best_idx == config.q_grid.len() - 1 {
        warnings.push(format!(
            "selected process noise q = {:.3e} sits on the grid boundary; widen the grid",
            config.q_grid[best_idx]
        ));
    }
    Ok((config.q_grid[best_idx], warnings))
}

/// Smooths a position series: selects the process noise, runs the per-axis
/// forward/backward passes, and exposes the acceleration directly from the
/// third state.
pub fn smooth_positions(
    positions: &[Vector3<f64>],
    rate: f64,
    config: &SmootherConfig,
) -> Result<SmoothOutput> {
    if positions.len() < 10 {
        return Err(Error::Smoothing(format!(
            "smoothing needs at least 10 samples, got {}",
            positions.len()
        )));
    }
    let dt = 1.0 / rate;
    let r = match config.r {
        Some(r) if r > 0.0 => r,
        Some(r) => {
            return Err(Error::Smoothing(format!("measurement noise must be positive, got {r}")))
        }
        None => estimate_measurement_noise(positions),
    };
    let (q_star, warnings) = select_process_noise(positions, dt, config, r)?;

    let n = positions.len();
    let mut trajectory = StateTrajectory {
        rate,
        positions: vec![Vector3::zeros(); n],
        velocities: vec![Vector3::zeros(); n],
        accelerations: vec![Vector3::zeros(); n],
        axis_covariances: [Vec::new(), Vec::new(), Vec::new()],
    };

    for axis in 0..3 {
        let series: Vec<f64> = positions.iter().map(|p| p[axis]).collect();
        let pass = kalman_forward(&series, dt, q_star, r)?;
        let (states, covs) = rts_backward(&pass, dt)?;
        for (k, s) in states.iter().enumerate() {
            trajectory.positions[k][axis] = s[0];
            trajectory.velocities[k][axis] = s[1];
            trajectory.accelerations[k][axis] = s[2];
        }
        trajectory.axis_covariances[axis] = covs;
    }

    Ok(SmoothOutput { trajectory, q_star, r, warnings })
}

/// Raw second central difference of positions, for comparison and the
/// no-smoothing ablation. Endpoints copy their nearest interior value.
pub fn double_difference(positions: &[Vector3<f64>], rate: f64) -> Vec<Vector3<f64>> {
    let n = positions.len();
    let mut out = vec![Vector3::zeros(); n];
    let r2 = rate * rate;
    for k in 1..n - 1 {
        out[k] = (positions[k + 1] - positions[k] * 2.0 + positions[k - 1]) * r2;
    }
    if n > 2 {
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    out
}
