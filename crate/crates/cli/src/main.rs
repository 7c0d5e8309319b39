//! `sfmscale`: metric scale recovery for monocular SfM reconstructions from
//! simultaneously recorded IMU data.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Rotation3, UnitQuaternion, Vector3};

use sfmscale_core::error::Stage;
use sfmscale_core::eval::{convergence_curve, rigid_fit, write_curve_csv};
use sfmscale_core::ingest::{parse_imu, parse_trajectory, write_imu_csv, write_trajectory};
use sfmscale_core::pipeline::{align_only, estimate};
use sfmscale_core::sim::{generate, ScenarioSpec, Truth};
use sfmscale_core::PoseSample;

use config::RunConfig;
use report::{AlignReport, InputDigest, Report, SmootherSummary};

#[derive(Parser)]
#[command(
    name = "sfmscale",
    about = "Recover the metric scale of a monocular SfM reconstruction from IMU data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a JSON report.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset with a ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Estimate only the camera-IMU alignment (clock offset, rotation, bias).
    Align(AlignArgs),
    /// Evaluate scale convergence and/or fit against ground points.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Camera trajectory: 8 columns `t x y z qx qy qz qw`, '#' comments.
    #[arg(long)]
    trajectory: Option<String>,
    /// IMU log: CSV `t,gx,gy,gz,ax,ay,az` in SI units.
    #[arg(long)]
    imu: Option<String>,
    /// Clock-offset search half-width, seconds.
    #[arg(long)]
    search_halfwidth: Option<f64>,
    /// Common resampling rate, Hz (default: median IMU rate).
    #[arg(long)]
    resample_rate: Option<f64>,
    /// Report output path (default: stdout only).
    #[arg(long)]
    report: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Frequency cutoff of the spectral stage, Hz.
    #[arg(long)]
    f_max: Option<f64>,
    /// Gravity magnitude constraint, m/s².
    #[arg(long)]
    g_norm: Option<f64>,
    /// Smallest process-noise grid value.
    #[arg(long)]
    q_grid_min: Option<f64>,
    /// Largest process-noise grid value.
    #[arg(long)]
    q_grid_max: Option<f64>,
    /// Number of process-noise grid points.
    #[arg(long)]
    q_grid_points: Option<usize>,
    /// Measurement noise variance override, SfM units squared.
    #[arg(long)]
    measurement_noise: Option<f64>,
    /// Spectral window: rect or hann.
    #[arg(long)]
    window: Option<String>,
    /// Stop after the time-domain closed form.
    #[arg(long)]
    skip_frequency_stage: bool,
    /// Replace the RTS smoother with raw double differences (ablation).
    #[arg(long)]
    skip_smoothing: bool,
    /// Seed echoed into the report for provenance.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the input trajectory rescaled to meters here.
    #[arg(long)]
    scaled_trajectory: Option<String>,
    /// Rotate the scaled trajectory so gravity maps to (0, -g_norm, 0).
    #[arg(long)]
    gravity_aligned: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario description (JSON); defaults to the built-in scenario.
    #[arg(long)]
    scenario: Option<String>,
    /// Override the scenario duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for trajectory.txt, imu.csv, truth.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ground-truth sidecar (as written by `simulate`).
    #[arg(long)]
    truth: Option<String>,
    /// Known metric scale, meters per SfM unit.
    #[arg(long)]
    truth_scale: Option<f64>,
    /// Comma-separated distance checkpoints in meters.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<f64>,
    /// Convergence curve CSV output path.
    #[arg(long)]
    csv: Option<String>,
    /// Correspondence file for the rigid fit: rows of
    /// `est_x est_y est_z ground_x ground_y ground_z`.
    #[arg(long)]
    ground_points: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Align(args) => cmd_align(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<sfmscale_core::Error>() {
                Some(core) => match core.stage() {
                    Stage::Ingest => 2,
                    Stage::Alignment => 3,
                    Stage::Smoothing => 4,
                    Stage::Scale => 5,
                    Stage::Evaluation => 6,
                },
                None => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn merge_common(config: &mut RunConfig, common: &CommonArgs) {
    if common.trajectory.is_some() {
        config.trajectory = common.trajectory.clone();
    }
    if common.imu.is_some() {
        config.imu = common.imu.clone();
    }
    if let Some(v) = common.search_halfwidth {
        config.search_halfwidth = v;
    }
    if common.resample_rate.is_some() {
        config.resample_rate = common.resample_rate;
    }
    if common.report.is_some() {
        config.report = common.report.clone();
    }
}

fn required<'a>(value: &'a Option<String>, flag: &str) -> anyhow::Result<&'a str> {
    value.as_deref().ok_or_else(|| anyhow::anyhow!("missing required --{flag}"))
}

fn load_inputs(
    config: &RunConfig,
) -> anyhow::Result<(Vec<PoseSample>, Vec<sfmscale_core::ImuSample>, Vec<InputDigest>)> {
    let traj_path = required(&config.trajectory, "trajectory")?;
    let imu_path = required(&config.imu, "imu")?;
    let poses = parse_trajectory(traj_path)?;
    let imu = parse_imu(imu_path)?;
    let digests = vec![InputDigest::of(traj_path)?, InputDigest::of(imu_path)?];
    Ok((poses, imu, digests))
}

/// Rotation taking the estimated gravity direction to `(0, -1, 0)`.
fn gravity_alignment(gravity: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::rotation_between(gravity, &Vector3::new(0.0, -1.0, 0.0))
        .unwrap_or_else(Rotation3::identity)
}

fn cmd_estimate(args: EstimateArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::base()?;
    merge_common(&mut config, &args.common);
    if let Some(v) = args.f_max {
        config.f_max = v;
    }
    if let Some(v) = args.g_norm {
        config.g_norm = v;
    }
    if let Some(v) = args.q_grid_min {
        config.q_grid_min = v;
    }
    if let Some(v) = args.q_grid_max {
        config.q_grid_max = v;
    }
    if let Some(v) = args.q_grid_points {
        config.q_grid_points = v;
    }
    if args.measurement_noise.is_some() {
        config.measurement_noise = args.measurement_noise;
    }
    if let Some(v) = args.window {
        config.window = v;
    }
    if args.skip_frequency_stage {
        config.skip_frequency_stage = true;
    }
    if args.skip_smoothing {
        config.skip_smoothing = true;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if args.scaled_trajectory.is_some() {
        config.scaled_trajectory = args.scaled_trajectory.clone();
    }
    if args.gravity_aligned {
        config.gravity_aligned = true;
    }

    let (poses, imu, inputs) = load_inputs(&config)?;
    let pipeline_config = config.pipeline_config()?;
    let out = estimate(&poses, &imu, &pipeline_config)?;

    if let Some(path) = &config.scaled_trajectory {
        let rotation = if config.gravity_aligned {
            gravity_alignment(&out.solution.gravity)
        } else {
            Rotation3::identity()
        };
        let q_rot = UnitQuaternion::from_rotation_matrix(&rotation);
        let scaled: Vec<PoseSample> = poses
            .iter()
            .map(|p| PoseSample {
                t: p.t,
                position: rotation * (p.position * out.solution.scale),
                // world vectors were rotated by Q, so world-to-camera picks up Qᵀ
                orientation: p.orientation * q_rot.inverse(),
            })
            .collect();
        write_trajectory(path, &scaled)?;
    }

    let report = Report {
        config: config.clone(),
        inputs,
        alignment: out.alignment.clone(),
        time_domain: out.time_domain.clone(),
        solution: out.solution.clone(),
        smoother: SmootherSummary { q_star: out.q_star, measurement_noise: out.measurement_noise },
        sample_rate: out.sample_rate,
        n_samples: out.n_samples,
        warnings: out.warnings.clone(),
        timings_ms: out.timings.clone(),
    };
    if let Some(path) = &config.report {
        std::fs::write(path, report.to_json())?;
    }

    println!("scale: {:.6} m per SfM unit", out.solution.scale);
    println!("clock offset: {:.4} s", out.alignment.time_offset);
    let axis_angle = out.alignment.rotation.scaled_axis();
    println!(
        "sensor-to-camera rotation: {:.2} deg about [{:.3}, {:.3}, {:.3}]",
        axis_angle.norm().to_degrees(),
        axis_angle.normalize().x,
        axis_angle.normalize().y,
        axis_angle.normalize().z
    );
    println!(
        "gravity (world): [{:.3}, {:.3}, {:.3}] m/s²",
        out.solution.gravity.x, out.solution.gravity.y, out.solution.gravity.z
    );
    println!(
        "accelerometer bias: [{:.4}, {:.4}, {:.4}] m/s²",
        out.solution.accel_bias.x, out.solution.accel_bias.y, out.solution.accel_bias.z
    );
    println!("stage times: {:.1} ms total", out.timings.total_ms);
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut spec = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<ScenarioSpec>(&text)
                .map_err(|e| anyhow::anyhow!("invalid scenario {path}: {e}"))?
        }
        None => ScenarioSpec::default_scenario(),
    };
    if let Some(d) = args.duration {
        spec.duration = d;
    }
    let generated = generate(&spec, args.seed)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let traj = args.out_dir.join("trajectory.txt");
    let imu = args.out_dir.join("imu.csv");
    let truth = args.out_dir.join("truth.json");
    write_trajectory(&traj, &generated.poses)?;
    write_imu_csv(&imu, &generated.imu)?;
    let mut truth_json = serde_json::to_string_pretty(&generated.truth)?;
    truth_json.push('\n');
    std::fs::write(&truth, truth_json)?;

    println!(
        "wrote {} poses, {} IMU samples, path length {:.2} m",
        generated.poses.len(),
        generated.imu.len(),
        generated.truth.path_length
    );
    println!("  {}", traj.display());
    println!("  {}", imu.display());
    println!("  {}", truth.display());
    Ok(())
}

fn cmd_align(args: AlignArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::base()?;
    merge_common(&mut config, &args.common);
    let (poses, imu, inputs) = load_inputs(&config)?;
    let pipeline_config = config.pipeline_config()?;
    let (alignment, sample_rate) = align_only(&poses, &imu, &pipeline_config)?;

    let report = AlignReport { config: config.clone(), inputs, alignment: alignment.clone(), sample_rate };
    if let Some(path) = &config.report {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        std::fs::write(path, json)?;
    }

    println!("clock offset: {:.4} s", alignment.time_offset);
    let axis_angle = alignment.rotation.scaled_axis();
    println!(
        "sensor-to-camera rotation: {:.2} deg about [{:.3}, {:.3}, {:.3}]",
        axis_angle.norm().to_degrees(),
        axis_angle.normalize().x,
        axis_angle.normalize().y,
        axis_angle.normalize().z
    );
    println!(
        "gyro bias: [{:.5}, {:.5}, {:.5}] rad/s, residual {:.4} rad/s",
        alignment.gyro_bias.x, alignment.gyro_bias.y, alignment.gyro_bias.z, alignment.rms_residual
    );
    for w in &alignment.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[allow(clippy::type_complexity)]
fn parse_ground_points(path: &str) -> anyhow::Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut source = Vec::new();
    let mut target = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse())
            .collect::<Result<_, _>>()
            .map_err(|e| anyhow::anyhow!("{path}:{}: {e}", idx + 1))?;
        if fields.len() != 6 {
            anyhow::bail!("{path}:{}: expected 6 values, got {}", idx + 1, fields.len());
        }
        source.push(Vector3::new(fields[0], fields[1], fields[2]));
        target.push(Vector3::new(fields[3], fields[4], fields[5]));
    }
    Ok((source, target))
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::base()?;
    merge_common(&mut config, &args.common);

    let truth_scale = match (&args.truth, args.truth_scale) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let truth: Truth = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("invalid truth sidecar {path}: {e}"))?;
            Some(truth.scale)
        }
        (None, Some(s)) => Some(s),
        (None, None) => None,
    };

    let mut wrote_anything = false;
    let mut summary = serde_json::Map::new();
    summary.insert("config".to_string(), serde_json::to_value(&config)?);

    if !args.checkpoints.is_empty() {
        let Some(scale) = truth_scale else {
            return Err(sfmscale_core::Error::Evaluation(
                "convergence evaluation needs a truth source: pass --truth or --truth-scale"
                    .to_string(),
            )
            .into());
        };
        let (poses, imu, _) = load_inputs(&config)?;
        let pipeline_config = config.pipeline_config()?;
        let curve = convergence_curve(&poses, &imu, &args.checkpoints, scale, &pipeline_config)?;
        for n in &curve.notices {
            eprintln!("notice: {n}");
        }
        for p in &curve.points {
            println!("{:.2} m traveled: scale error {:.3}%", p.distance_traveled, p.scale_error_percent);
        }
        if let Some(csv) = &args.csv {
            write_curve_csv(csv, &curve.points)?;
        }
        summary.insert("convergence".to_string(), serde_json::to_value(&curve.points)?);
        summary.insert("notices".to_string(), serde_json::to_value(&curve.notices)?);
        wrote_anything = true;
    }

    if let Some(points_path) = &args.ground_points {
        let (source, target) = parse_ground_points(points_path)?;
        let fit = rigid_fit(&source, &target)?;
        println!("rigid fit RMSE: {:.4} m over {} points", fit.rmse, source.len());
        if fit.degenerate {
            eprintln!("warning: ground-point configuration is degenerate (collinear)");
        }
        summary.insert("fit".to_string(), serde_json::to_value(&fit)?);
        wrote_anything = true;
    }

    if !wrote_anything {
        return Err(sfmscale_core::Error::Evaluation(
            "nothing to evaluate: pass --checkpoints with a truth source, or --ground-points"
                .to_string(),
        )
        .into());
    }

    if let Some(path) = &config.report {
        let mut json = serde_json::to_string_pretty(&serde_json::Value::Object(summary))?;
        json.push('\n');
        std::fs::write(path, json)?;
    }
    Ok(())
}
