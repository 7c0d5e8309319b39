//! Machine-readable run report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sfmscale_core::{AlignmentResult, ScaleSolution, StageTimings};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &str) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { path: path.to_string(), sha256: hex })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmootherSummary {
    pub q_star: f64,
    pub measurement_noise: f64,
}

/// Full record of an estimation run. Everything except `timings_ms` is
/// deterministic given the same inputs, configuration and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub alignment: AlignmentResult,
    pub time_domain: ScaleSolution,
    pub solution: ScaleSolution,
    pub smoother: SmootherSummary,
    pub sample_rate: f64,
    pub n_samples: usize,
    pub warnings: Vec<String>,
    pub timings_ms: StageTimings,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Alignment-only report for the `align` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignReport {
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub alignment: AlignmentResult,
    pub sample_rate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    #[test]
    fn report_round_trips_losslessly() {
        let report = Report {
            config: RunConfig::default(),
            inputs: vec![InputDigest { path: "traj.txt".into(), sha256: "ab".repeat(32) }],
            alignment: AlignmentResult {
                rotation: Rotation3::from_euler_angles(0.1, -0.7, 2.3),
                gyro_bias: Vector3::new(0.002, -0.001, 0.0015),
                time_offset: 0.1486021729501355,
                rms_residual: 0.0113,
                iterations: 19,
                degenerate: false,
                boundary: false,
                warnings: vec!["w".into()],
            },
            time_domain: ScaleSolution {
                scale: 0.3690622034958957,
                accel_bias: Vector3::new(0.097, -0.053, 0.199),
                gravity: Vector3::new(0.493, 9.727, -1.187),
                objective_time: 14.148,
                objective_freq: None,
                f_max: None,
                converged: true,
                rank_deficient: false,
                null_direction: None,
                warnings: vec![],
            },
            solution: ScaleSolution {
                scale: 0.37058776051598474,
                accel_bias: Vector3::new(0.094, -0.052, 0.197),
                gravity: Vector3::new(0.496, 9.726, -1.184),
                objective_time: 14.148,
                objective_freq: Some(293.47),
                f_max: Some(1.2),
                converged: true,
                rank_deficient: false,
                null_direction: Some(vec![0.0, 0.7, 0.0, 0.0, -0.7, 0.0, 0.0]),
                warnings: vec![],
            },
            smoother: SmootherSummary { q_star: 1.0, measurement_noise: 1.378e-5 },
            sample_rate: 100.00000000000212,
            n_samples: 1982,
            warnings: vec!["a warning".into()],
            timings_ms: StageTimings {
                resample_ms: 1.1,
                alignment_ms: 3.6,
                smoothing_ms: 15.2,
                scale_ms: 21.3,
                total_ms: 41.6,
            },
        };
        let json = report.to_json();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(json, back.to_json());
    }
}
