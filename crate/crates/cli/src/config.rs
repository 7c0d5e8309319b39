//! Run configuration: defaults, optional config file, CLI flag overrides.

use serde::{Deserialize, Serialize};

use sfmscale_core::smoother::{log_grid, SmootherConfig};
use sfmscale_core::spectrum::Window;
use sfmscale_core::PipelineConfig;

/// Environment variable naming a JSON config file used as the default layer.
pub const CONFIG_ENV: &str = "SFMSCALE_CONFIG";

/// Everything a run depends on. Serialized verbatim into the report so runs
/// are reproducible from the report alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub trajectory: Option<String>,
    pub imu: Option<String>,
    /// Frequency cutoff of the spectral stage, Hz.
    pub f_max: f64,
    /// Gravity magnitude constraint, m/s².
    pub g_norm: f64,
    /// Clock-offset search half-width, seconds.
    pub search_halfwidth: f64,
    /// Common resampling rate, Hz (default: median IMU rate).
    pub resample_rate: Option<f64>,
    pub q_grid_min: f64,
    pub q_grid_max: f64,
    pub q_grid_points: usize,
    /// Measurement noise variance override, SfM units squared.
    pub measurement_noise: Option<f64>,
    /// Spectral window: "rect" or "hann".
    pub window: String,
    pub skip_frequency_stage: bool,
    pub skip_smoothing: bool,
    pub seed: u64,
    pub report: Option<String>,
    pub scaled_trajectory: Option<String>,
    pub gravity_aligned: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trajectory: None,
            imu: None,
            f_max: 1.2,
            g_norm: 9.81,
            search_halfwidth: 0.5,
            resample_rate: None,
            q_grid_min: 1e-4,
            q_grid_max: 1e4,
            q_grid_points: 17,
            measurement_noise: None,
            window: "rect".to_string(),
            skip_frequency_stage: false,
            skip_smoothing: false,
            seed: 0,
            report: None,
            scaled_trajectory: None,
            gravity_aligned: false,
        }
    }
}

impl RunConfig {
    /// Base configuration: ordinary defaults, overlaid by the file named in
    /// `SFMSCALE_CONFIG` when set.
    pub fn base() -> anyhow::Result<Self> {
        match std::env::var(CONFIG_ENV) {
            Ok(path) if !path.is_empty() => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| anyhow::anyhow!("cannot read {CONFIG_ENV}={path}: {e}"))?;
                Ok(serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("invalid config {path}: {e}"))?)
            }
            _ => Ok(Self::default()),
        }
    }

    pub fn window_kind(&self) -> anyhow::Result<Window> {
        match self.window.as_str() {
            "rect" | "rectangular" => Ok(Window::Rectangular),
            "hann" => Ok(Window::Hann),
            other => anyhow::bail!("unknown window '{other}' (expected 'rect' or 'hann')"),
        }
    }

    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        if !(self.q_grid_min > 0.0 && self.q_grid_max > self.q_grid_min && self.q_grid_points >= 1)
        {
            anyhow::bail!(
                "invalid process-noise grid: min {} max {} points {}",
                self.q_grid_min,
                self.q_grid_max,
                self.q_grid_points
            );
        }
        Ok(PipelineConfig {
            resample_rate: self.resample_rate,
            search_halfwidth: self.search_halfwidth,
            f_max: self.f_max,
            g_norm: self.g_norm,
            smoother: SmootherConfig {
                q_grid: if self.q_grid_points == 1 {
                    vec![self.q_grid_min]
                } else {
                    log_grid(self.q_grid_min, self.q_grid_max, self.q_grid_points)
                },
                r: self.measurement_noise,
            },
            window: self.window_kind()?,
            skip_frequency_stage: self.skip_frequency_stage,
            skip_smoothing: self.skip_smoothing,
        })
    }
}
