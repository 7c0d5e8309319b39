//! Per-axis amplitude spectra of the visual and inertial accelerations.
//!
//! The inertial side depends linearly on the accelerometer bias and the
//! gravity vector, so the transform of `a_imu - b - R(t)·g` for *any* `(b, g)`
//! can be assembled from a fixed set of spectra: the raw accelerations, a
//! constant-one bias carrier, and the nine entries of the rotation sequence
//! as gravity carriers. The frequency-domain optimizer then never needs to
//! re-transform anything.

use nalgebra::Vector3;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::RotationSequence;

/// Taper applied before the transform. Rectangular keeps a constant bias
/// confined to bin 0; Hann trades that for less leakage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Rectangular,
    Hann,
}

/// Spectra of everything the frequency-domain objective needs.
#[derive(Debug, Clone)]
pub struct SpectrumSet {
    rate: f64,
    n_samples: usize,
    n_fft: usize,
    /// Per-axis transforms of the visual accelerations.
    vis: [Vec<Complex<f64>>; 3],
    /// Per-axis transforms of the inertial accelerations.
    imu: [Vec<Complex<f64>>; 3],
    /// Transform of the (windowed) constant 1: the bias carrier.
    ones: Vec<Complex<f64>>,
    /// `rot[i][j]` is the transform of the rotation entry `R[k][(i, j)]`:
    /// the gravity carriers.
    rot: [[Vec<Complex<f64>>; 3]; 3],
}

impl SpectrumSet {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Number of retained bins (`n_fft / 2 + 1`).
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.rate / self.n_fft as f64
    }

    /// Per-axis magnitude of the visual spectrum at `bin`.
    pub fn vis_magnitude(&self, bin: usize) -> Vector3<f64> {
        Vector3::new(self.vis[0][bin].norm(), self.vis[1][bin].norm(), self.vis[2][bin].norm())
    }

    /// Complex inertial spectrum for one axis with bias and gravity removed,
    /// assembled by linearity.
    pub fn imu_complex(
        &self,
        axis: usize,
        bin: usize,
        bias: &Vector3<f64>,
        gravity: &Vector3<f64>,
    ) -> Complex<f64> {
        let mut value = self.imu[axis][bin] - self.ones[bin] * bias[axis];
        for j in 0..3 {
            value -= self.rot[axis][j][bin] * gravity[j];
        }
        value
    }

    /// Per-axis magnitude of the assembled inertial spectrum at `bin`.
    pub fn imu_magnitude(&self, bin: usize, bias: &Vector3<f64>, gravity: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.imu_complex(0, bin, bias, gravity).norm(),
            self.imu_complex(1, bin, bias, gravity).norm(),
            self.imu_complex(2, bin, bias, gravity).norm(),
        )
    }

    pub fn vis_complex(&self, axis: usize, bin: usize) -> Complex<f64> {
        self.vis[axis][bin]
    }
}

fn window_weights(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()))
            .collect(),
    }
}

/// Transforms a real channel, zero-padded to `n_fft`, keeping bins
/// `0..=n_fft/2`.
fn transform(
    fft: &dyn rustfft::Fft<f64>,
    samples: impl Iterator<Item = f64>,
    weights: &[f64],
    n_fft: usize,
) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for (k, x) in samples.enumerate() {
        buf[k] = Complex::new(x * weights[k], 0.0);
    }
    fft.process(&mut buf);
    buf.truncate(n_fft / 2 + 1);
    buf
}

/// Computes the spectra of the visual and inertial accelerations plus the bias
/// and gravity carrier channels, all windowed identically and zero-padded to
/// the next power of two.
pub fn amplitude_spectra(
    a_vis_c: &[Vector3<f64>],
    a_imu_c: &[Vector3<f64>],
    rotations: &RotationSequence,
    rate: f64,
    window: Window,
) -> Result<SpectrumSet> {
    let n = a_vis_c.len();
    if n < 64 {
        return Err(Error::Scale(format!("spectra need at least 64 samples, got {n}")));
    }
    if a_imu_c.len() != n || rotations.len() != n {
        return Err(Error::Scale(format!(
            "spectra inputs must have equal lengths: vis {n}, imu {}, rotations {}",
            a_imu_c.len(),
            rotations.len()
        )));
    }
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::Scale(format!("sample rate must be positive, got {rate}")));
    }

    let n_fft = n.next_power_of_two();
    let weights = window_weights(window, n);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);

    let channel =
        |get: &dyn Fn(usize) -> f64| transform(fft.as_ref(), (0..n).map(get), &weights, n_fft);

    let vis = [
        channel(&|k| a_vis_c[k].x),
        channel(&|k| a_vis_c[k].y),
        channel(&|k| a_vis_c[k].z),
    ];
    let imu = [
        channel(&|k| a_imu_c[k].x),
        channel(&|k| a_imu_c[k].y),
        channel(&|k| a_imu_c[k].z),
    ];
    let ones = channel(&|_| 1.0);
    let rot = std::array::from_fn(|i| {
        std::array::from_fn(|j| channel(&|k| rotations.get(k).matrix()[(i, j)]))
    });

    Ok(SpectrumSet { rate, n_samples: n, n_fft, vis, imu, ones, rot })
}
