//! Fixed-rate multi-channel time series, the common currency after resampling.

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// One named channel of a [`UniformSeries`].
#[derive(Debug, Clone)]
pub struct Channel {
    pub name: String,
    pub samples: Samples,
}

#[derive(Debug, Clone)]
pub enum Samples {
    Scalar(Vec<f64>),
    Vector(Vec<Vector3<f64>>),
    Rotation(Vec<UnitQuaternion<f64>>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Scalar(v) => v.len(),
            Samples::Vector(v) => v.len(),
            Samples::Rotation(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Multi-channel series sampled at a fixed rate. Sample `k` is taken at
/// `t0 + k / rate` exactly; all channels have equal length.
#[derive(Debug, Clone)]
pub struct UniformSeries {
    t0: f64,
    rate: f64,
    len: usize,
    channels: Vec<Channel>,
}

impl UniformSeries {
    pub fn new(t0: f64, rate: f64, len: usize) -> Result<Self> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(Error::Ingest(format!("series rate must be positive, got {rate}")));
        }
        Ok(Self { t0, rate, len, channels: Vec::new() })
    }

    pub fn push_channel(&mut self, name: &str, samples: Samples) -> Result<()> {
        if samples.len() != self.len {
            return Err(Error::Ingest(format!(
                "channel '{}' has {} samples, series expects {}",
                name,
                samples.len(),
                self.len
            )));
        }
        self.channels.push(Channel { name: name.to_string(), samples });
        Ok(())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Timestamp of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.rate
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.time(k))
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn vector_channel(&self, name: &str) -> Option<&[Vector3<f64>]> {
        self.channels.iter().find_map(|c| match (&c.samples, c.name == name) {
            (Samples::Vector(v), true) => Some(v.as_slice()),
            _ => None,
        })
    }

    pub fn scalar_channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find_map(|c| match (&c.samples, c.name == name) {
            (Samples::Scalar(v), true) => Some(v.as_slice()),
            _ => None,
        })
    }

    pub fn rotation_channel(&self, name: &str) -> Option<&[UnitQuaternion<f64>]> {
        self.channels.iter().find_map(|c| match (&c.samples, c.name == name) {
            (Samples::Rotation(v), true) => Some(v.as_slice()),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_are_exact_multiples() {
        let s = UniformSeries::new(1.5, 100.0, 10).unwrap();
        for k in 0..10 {
            assert_eq!(s.time(k), 1.5 + k as f64 / 100.0);
        }
    }

    #[test]
    fn rejects_nonpositive_rate() {
        assert!(UniformSeries::new(0.0, 0.0, 1).is_err());
        assert!(UniformSeries::new(0.0, -5.0, 1).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        let mut s = UniformSeries::new(0.0, 10.0, 3).unwrap();
        let err = s.push_channel("x", Samples::Scalar(vec![1.0, 2.0]));
        assert!(err.is_err());
    }
}
