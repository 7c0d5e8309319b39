//! Trajectory and IMU file parsing, validation, and resampling onto a common
//! uniform time base.
//!
//! Trajectory files are 8-column text (`t x y z qx qy qz qw`, `#` comments
//! ignored), the format most SfM/SLAM tools can emit. The stored quaternion
//! rotates world-frame vectors into the camera frame. IMU files are CSV with
//! columns `t,gx,gy,gz,ax,ay,az` in SI units and an optional header row.

use std::io::Write;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::series::{Samples, UniformSeries};

/// Channel names used by the resamplers.
pub const CH_POSITION: &str = "position";
pub const CH_ORIENTATION: &str = "orientation";
pub const CH_GYRO: &str = "gyro";
pub const CH_ACCEL: &str = "accel";

/// Accelerometer sanity bound; readings beyond this are rejected as corrupt.
const MAX_ACCEL: f64 = 200.0;

/// One timestamped inertial reading in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Timestamp on the sensor clock, seconds.
    pub t: f64,
    /// Angular rate, rad/s.
    pub gyro: Vector3<f64>,
    /// Specific force (motion acceleration plus gravity reaction), m/s².
    pub accel: Vector3<f64>,
}

/// One timestamped camera pose in arbitrary SfM units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    /// Timestamp on the camera clock, seconds.
    pub t: f64,
    /// Camera position in the world frame, SfM units.
    pub position: Vector3<f64>,
    /// World-to-camera rotation: `v_camera = orientation * v_world`.
    pub orientation: UnitQuaternion<f64>,
}

fn parse_field(path: &str, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Malformed {
        path: path.to_string(),
        line,
        msg: format!("cannot parse {what} from '{field}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Malformed {
            path: path.to_string(),
            line,
            msg: format!("non-finite {what}: '{field}'"),
        });
    }
    Ok(v)
}

/// Parses an 8-column trajectory file into pose samples sorted by timestamp.
///
/// Quaternions are renormalized on load; duplicate timestamps and files with
/// fewer than 10 samples are rejected.
pub fn parse_trajectory(path: impl AsRef<Path>) -> Result<Vec<PoseSample>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::Malformed {
                path: display.clone(),
                line: line_no,
                msg: format!("expected 8 fields (t x y z qx qy qz qw), got {}", fields.len()),
            });
        }
        let mut v = [0.0; 8];
        for (i, f) in fields.iter().enumerate() {
            v[i] = parse_field(&display, line_no, f, "trajectory value")?;
        }
        let quat = Quaternion::new(v[7], v[4], v[5], v[6]);
        if quat.norm() < 1e-6 {
            return Err(Error::Malformed {
                path: display.clone(),
                line: line_no,
                msg: "quaternion has near-zero norm".to_string(),
            });
        }
        samples.push(PoseSample {
            t: v[0],
            position: Vector3::new(v[1], v[2], v[3]),
            orientation: UnitQuaternion::from_quaternion(quat),
        });
    }

    if samples.len() < 10 {
        return Err(Error::InvalidInput {
            path: display,
            msg: format!("trajectory has {} samples, need at least 10", samples.len()),
        });
    }

    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    for pair in samples.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::InvalidInput {
                path: display,
                msg: format!("duplicate timestamp {} in trajectory", pair[1].t),
            });
        }
    }
    Ok(samples)
}

/// Parses a CSV IMU log (`t,gx,gy,gz,ax,ay,az`). A header row is detected by a
/// non-numeric first field and skipped.
pub fn parse_imu(path: impl AsRef<Path>) -> Result<Vec<ImuSample>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if samples.is_empty() && line_no == 1 && fields[0].parse::<f64>().is_err() {
            continue; // header row
        }
        if fields.len() != 7 {
            return Err(Error::Malformed {
                path: display.clone(),
                line: line_no,
                msg: format!("expected 7 fields (t,gx,gy,gz,ax,ay,az), got {}", fields.len()),
            });
        }
        let mut v = [0.0; 7];
        for (i, f) in fields.iter().enumerate() {
            v[i] = parse_field(&display, line_no, f, "IMU value")?;
        }
        let accel = Vector3::new(v[4], v[5], v[6]);
        if accel.norm() >= MAX_ACCEL {
            return Err(Error::Malformed {
                path: display.clone(),
                line: line_no,
                msg: format!("accelerometer magnitude {:.1} m/s² exceeds sanity bound", accel.norm()),
            });
        }
        samples.push(ImuSample { t: v[0], gyro: Vector3::new(v[1], v[2], v[3]), accel });
    }

    if samples.is_empty() {
        return Err(Error::InvalidInput { path: display, msg: "IMU file is empty".to_string() });
    }

    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    for pair in samples.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::InvalidInput {
                path: display,
                msg: format!("duplicate timestamp {} in IMU log", pair[1].t),
            });
        }
    }
    Ok(samples)
}

/// Writes pose samples in the 8-column trajectory format read by
/// [`parse_trajectory`]. Values round-trip exactly.
pub fn write_trajectory(path: impl AsRef<Path>, poses: &[PoseSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# t x y z qx qy qz qw")?;
    for p in poses {
        let q = p.orientation.quaternion();
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.t, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
        )?;
    }
    Ok(())
}

/// Writes IMU samples in the CSV format read by [`parse_imu`].
pub fn write_imu_csv(path: impl AsRef<Path>, samples: &[ImuSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,gx,gy,gz,ax,ay,az")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
        )?;
    }
    Ok(())
}

/// Shortest-arc spherical interpolation. The later quaternion is sign-flipped
/// when the dot product is negative so the interpolation never takes the long
/// way around.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion();
    let mut qb = *b.quaternion();
    if qa.dot(&qb) < 0.0 {
        qb = -qb;
    }
    let dot = qa.dot(&qb).clamp(-1.0, 1.0);
    let omega = dot.acos();
    let q = if omega < 1e-8 {
        // nearly parallel: normalized linear interpolation
        qa.lerp(&qb, u)
    } else {
        let s = omega.sin();
        qa * ((1.0 - u) * omega).sin() / s + qb * (u * omega).sin() / s
    };
    UnitQuaternion::from_quaternion(q)
}

/// Resamples pose samples onto a uniform grid at `rate`.
///
/// Positions are interpolated linearly, orientations with shortest-arc slerp.
/// The output spans `[first, last]` pose time only; no extrapolation. Returns
/// the series plus diagnostics (downsampling, irregular frame intervals).
pub fn resample_poses(poses: &[PoseSample], rate: f64) -> Result<(UniformSeries, Vec<String>)> {
    if poses.len() < 2 {
        return Err(Error::Ingest("resampling needs at least 2 poses".to_string()));
    }
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::Ingest(format!("resampling rate must be positive, got {rate}")));
    }
    let mut warnings = Vec::new();

    let t0 = poses[0].t;
    let t_end = poses[poses.len() - 1].t;
    let span = t_end - t0;

    let mut dts: Vec<f64> = poses.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    let nominal_dt = dts[dts.len() / 2];
    if rate < 1.0 / nominal_dt {
        warnings.push(format!(
            "requested rate {:.3} Hz is below the pose rate {:.3} Hz; downsampling",
            rate,
            1.0 / nominal_dt
        ));
    }
    let irregular = dts
        .iter()
        .filter(|&&dt| (dt - nominal_dt).abs() > 0.25 * nominal_dt)
        .count();
    if irregular > 0 {
        warnings.push(format!(
            "{irregular} frame interval(s) deviate from the nominal {:.4} s by more than 25%",
            nominal_dt
        ));
    }

    // Small epsilon keeps the final pose on the grid despite rounding.
    let len = ((span * rate) * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
    let mut positions = Vec::with_capacity(len);
    let mut orientations = Vec::with_capacity(len);

    let mut seg = 0usize;
    for k in 0..len {
        let t = (t0 + k as f64 / rate).min(t_end);
        while seg + 2 < poses.len() && poses[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&poses[seg], &poses[seg + 1]);
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        positions.push(a.position + (b.position - a.position) * u);
        orientations.push(slerp(&a.orientation, &b.orientation, u));
    }

    let mut series = UniformSeries::new(t0, rate, len)?;
    series.push_channel(CH_POSITION, Samples::Vector(positions))?;
    series.push_channel(CH_ORIENTATION, Samples::Rotation(orientations))?;
    Ok((series, warnings))
}

/// Linearly interpolates a sorted sample set at time `t`. `None` outside the
/// covered range.
fn interp_imu(samples: &[ImuSample], t: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let n = samples.len();
    if t < samples[0].t || t > samples[n - 1].t {
        return None;
    }
    let idx = samples.partition_point(|s| s.t <= t);
    if idx == 0 {
        return Some((samples[0].gyro, samples[0].accel));
    }
    if idx == n {
        let s = &samples[n - 1];
        return Some((s.gyro, s.accel));
    }
    let (a, b) = (&samples[idx - 1], &samples[idx]);
    let u = (t - a.t) / (b.t - a.t);
    Some((a.gyro + (b.gyro - a.gyro) * u, a.accel + (b.accel - a.accel) * u))
}

/// Resamples IMU samples onto the time base of `grid` by linear interpolation.
/// Fails if the grid extends beyond IMU coverage.
pub fn resample_imu(samples: &[ImuSample], grid: &UniformSeries) -> Result<UniformSeries> {
    if samples.len() < 2 {
        return Err(Error::Ingest("resampling needs at least 2 IMU samples".to_string()));
    }
    let first = samples[0].t;
    let last = samples[samples.len() - 1].t;
    let g0 = grid.time(0);
    let g1 = grid.time(grid.len() - 1);
    if g0 < first || g1 > last {
        return Err(Error::GridNotCovered {
            from: if g0 < first { g0 } else { last },
            to: if g1 > last { g1 } else { first },
        });
    }

    let mut gyro = Vec::with_capacity(grid.len());
    let mut accel = Vec::with_capacity(grid.len());
    for t in grid.times() {
        // coverage checked above
        let (g, a) = interp_imu(samples, t).expect("grid time inside IMU coverage");
        gyro.push(g);
        accel.push(a);
    }

    let mut series = UniformSeries::new(grid.t0(), grid.rate(), grid.len())?;
    series.push_channel(CH_GYRO, Samples::Vector(gyro))?;
    series.push_channel(CH_ACCEL, Samples::Vector(accel))?;
    Ok(series)
}

/// Interpolates one vector channel of a uniform series at an arbitrary time.
/// `None` outside the covered range.
pub fn sample_vector_channel(series: &UniformSeries, name: &str, t: f64) -> Option<Vector3<f64>> {
    let data = series.vector_channel(name)?;
    let rel = (t - series.t0()) * series.rate();
    if rel < 0.0 || rel > (series.len() - 1) as f64 {
        return None;
    }
    let k = (rel.floor() as usize).min(series.len() - 2);
    let u = rel - k as f64;
    Some(data[k] + (data[k + 1] - data[k]) * u)
}
