//! Ingestion of recorded IMU CSVs into the pipeline's signal format.
//!
//! Expected layout: a flat directory of paired files named
//! `acc_<activity>_<placement>.csv` and `gyr_<activity>_<placement>.csv`
//! (`gyro_` also accepted), each with a header row naming a timestamp
//! column (`attr_time`, `time`, `timestamp`, or `t`) and three axis
//! columns (`attr_x`/`x`, ...). Rows with non-increasing timestamps are
//! dropped and counted. Streams are interpolated onto a uniform grid at
//! their estimated native rate, then resampled to the target rate with
//! the anti-aliasing path of [`crate::imu::resample`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::imu::{resample, write_imu_with_manifest, GravityConfig, ImuManifest, ImuSignal};
use crate::quat::Vec3;

use super::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// Decide per file: a median step of 1.5 or more is read as ms.
    Auto,
    Seconds,
    Millis,
}

/// Unit handling and axis conventions for recorded data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub time_unit: TimeUnit,
    /// Row-major 3x3 matrix applied to both accelerometer and gyroscope
    /// vectors (sensor mounting conventions differ between datasets).
    pub axis_matrix: [[f64; 3]; 3],
    pub accel_scale: f64,
    pub gyro_scale: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            time_unit: TimeUnit::Auto,
            axis_matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            accel_scale: 1.0,
            gyro_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestWarnings {
    pub dropped_non_monotonic: usize,
    pub dropped_duplicate: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestedFile {
    pub stem: String,
    pub activity: String,
    pub placement: String,
    pub samples: usize,
    pub source_rate_hz: f64,
    pub warnings: IngestWarnings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub target_fps: f64,
    pub files: Vec<IngestedFile>,
}

struct RawStream {
    times: Vec<f64>,
    rows: Vec<Vec3>,
    warnings: IngestWarnings,
}

fn find_column(header: &[String], candidates: &[&str]) -> Option<usize> {
    for cand in candidates {
        if let Some(idx) = header.iter().position(|h| h.eq_ignore_ascii_case(cand)) {
            return Some(idx);
        }
    }
    None
}

fn parse_stream(path: &Path, unit: TimeUnit) -> Result<RawStream> {
    let text = fs::read_to_string(path)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| SynmoError::Data(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let t_col = find_column(&header, &["attr_time", "time", "timestamp", "t"]).ok_or_else(|| {
        SynmoError::Data(format!("{}: no timestamp column in {header:?}", path.display()))
    })?;
    let x_col = find_column(&header, &["attr_x", "x", "ax", "gx"]);
    let y_col = find_column(&header, &["attr_y", "y", "ay", "gy"]);
    let z_col = find_column(&header, &["attr_z", "z", "az", "gz"]);
    let (x_col, y_col, z_col) = match (x_col, y_col, z_col) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => {
            return Err(SynmoError::Data(format!(
                "{}: missing axis columns in {header:?}",
                path.display()
            )))
        }
    };
    let mut times = Vec::new();
    let mut rows = Vec::new();
    let mut warnings = IngestWarnings::default();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let need = t_col.max(x_col).max(y_col).max(z_col);
        if cells.len() <= need {
            return Err(SynmoError::Data(format!(
                "{}: line {} has {} columns",
                path.display(),
                lineno + 2,
                cells.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            cells[i].trim().parse::<f64>().map_err(|e| {
                SynmoError::Data(format!("{}: line {}: {e}", path.display(), lineno + 2))
            })
        };
        let t = parse(t_col)?;
        if let Some(&last) = times.last() {
            if t == last {
                warnings.dropped_duplicate += 1;
                continue;
            }
            if t < last {
                warnings.dropped_non_monotonic += 1;
                continue;
            }
        }
        times.push(t);
        rows.push([parse(x_col)?, parse(y_col)?, parse(z_col)?]);
    }
    if times.len() < 3 {
        return Err(SynmoError::Data(format!(
            "{}: fewer than 3 usable rows",
            path.display()
        )));
    }
    // unit normalization to seconds
    let median_dt = {
        let mut dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        dts.sort_by(|a, b| a.partial_cmp(b).expect("finite timestamps"));
        dts[dts.len() / 2]
    };
    let to_seconds = match unit {
        TimeUnit::Seconds => 1.0,
        TimeUnit::Millis => 1e-3,
        TimeUnit::Auto => {
            if median_dt >= 1.5 {
                1e-3
            } else {
                1.0
            }
        }
    };
    for t in times.iter_mut() {
        *t *= to_seconds;
    }
    Ok(RawStream {
        times,
        rows,
        warnings,
    })
}

/// Linear interpolation of a (time, vec3) stream onto a uniform grid.
fn interp_to_grid(stream: &RawStream, t0: f64, fps: f64, count: usize) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(count);
    let mut cursor = 0usize;
    for k in 0..count {
        let t = t0 + k as f64 / fps;
        while cursor + 1 < stream.times.len() - 1 && stream.times[cursor + 1] < t {
            cursor += 1;
        }
        let (ta, tb) = (stream.times[cursor], stream.times[cursor + 1]);
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        let (a, b) = (stream.rows[cursor], stream.rows[cursor + 1]);
        out.push([
            a[0] * (1.0 - frac) + b[0] * frac,
            a[1] * (1.0 - frac) + b[1] * frac,
            a[2] * (1.0 - frac) + b[2] * frac,
        ]);
    }
    out
}

fn apply_axes(rows: &mut [Vec3], matrix: &[[f64; 3]; 3], scale: f64) {
    for row in rows.iter_mut() {
        let v = *row;
        for (i, m_row) in matrix.iter().enumerate() {
            row[i] = scale * (m_row[0] * v[0] + m_row[1] * v[1] + m_row[2] * v[2]);
        }
    }
}

/// Ingest every `acc_*.csv`/`gyr_*.csv` pair in `csv_dir` into pipeline
/// signal files at `target_fps`; writes an `ingest_summary.json`.
pub fn cmd_ingest_realworld(
    config: &PipelineConfig,
    csv_dir: &Path,
    out_dir: &Path,
    target_fps: f64,
) -> Result<IngestSummary> {
    if !(target_fps > 0.0) {
        return Err(SynmoError::Config(format!(
            "target fps must be > 0, got {target_fps}"
        )));
    }
    let mut acc_files: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut gyr_files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in
        fs::read_dir(csv_dir).map_err(|e| SynmoError::Data(format!("{}: {e}", csv_dir.display())))?
    {
        let path = entry?.path();
        let name = match path.file_name().and_then(|s| s.to_str()) {
            Some(n) if n.ends_with(".csv") => n.to_string(),
            _ => continue,
        };
        let stem = name.trim_end_matches(".csv");
        if let Some(rest) = stem.strip_prefix("acc_") {
            acc_files.insert(rest.to_string(), path);
        } else if let Some(rest) = stem.strip_prefix("gyr_").or_else(|| stem.strip_prefix("gyro_"))
        {
            gyr_files.insert(rest.to_string(), path);
        }
    }
    if acc_files.is_empty() {
        return Err(SynmoError::Data(format!(
            "{}: no acc_*.csv files found",
            csv_dir.display()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (key, acc_path) in &acc_files {
        let gyr_path = gyr_files.get(key).ok_or_else(|| {
            SynmoError::Data(format!("no gyroscope file pairs acc_{key}.csv"))
        })?;
        let mut acc = parse_stream(acc_path, config.ingest.time_unit)?;
        let mut gyr = parse_stream(gyr_path, config.ingest.time_unit)?;
        apply_axes(&mut acc.rows, &config.ingest.axis_matrix, config.ingest.accel_scale);
        apply_axes(&mut gyr.rows, &config.ingest.axis_matrix, config.ingest.gyro_scale);
        // overlapping span of the two streams
        let t0 = acc.times[0].max(gyr.times[0]);
        let t1 = acc.times[acc.times.len() - 1].min(gyr.times[gyr.times.len() - 1]);
        if t1 <= t0 {
            return Err(SynmoError::Data(format!(
                "acc_{key}.csv and its gyroscope stream do not overlap in time"
            )));
        }
        // estimated native rate from the accelerometer stream
        let native_rate = {
            let dur = acc.times[acc.times.len() - 1] - acc.times[0];
            ((acc.times.len() - 1) as f64 / dur).round().max(1.0)
        };
        let count = ((t1 - t0) * native_rate).floor() as usize + 1;
        let signal = ImuSignal {
            accel: interp_to_grid(&acc, t0, native_rate, count),
            gyro: interp_to_grid(&gyr, t0, native_rate, count),
            fps: native_rate,
            placement_name: key
                .rsplit('_')
                .next()
                .unwrap_or("unknown")
                .to_string(),
        };
        let signal = resample(&signal, target_fps)?;
        let (activity, placement) = match key.rsplit_once('_') {
            Some((a, p)) => (a.to_string(), p.to_string()),
            None => (key.clone(), "unknown".to_string()),
        };
        let stem = format!("{activity}__{placement}");
        let manifest = ImuManifest {
            fps: signal.fps,
            placement: placement.clone(),
            source_motion: acc_path.display().to_string(),
            gravity_config: GravityConfig::default(),
            label: Some(activity.clone()),
            seed: None,
            config_hash: Some(config.config_hash()),
        };
        write_imu_with_manifest(out_dir, &stem, &signal, &manifest)?;
        files.push(IngestedFile {
            stem,
            activity,
            placement,
            samples: signal.len(),
            source_rate_hz: native_rate,
            warnings: IngestWarnings {
                dropped_non_monotonic: acc.warnings.dropped_non_monotonic
                    + gyr.warnings.dropped_non_monotonic,
                dropped_duplicate: acc.warnings.dropped_duplicate
                    + gyr.warnings.dropped_duplicate,
            },
        });
    }
    let summary = IngestSummary {
        target_fps,
        files,
    };
    fs::write(
        out_dir.join("ingest_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(dir: &Path, activity: &str, placement: &str, hz: f64, seconds: f64) {
        let n = (hz * seconds) as usize;
        let mut acc = String::from("id,attr_time,attr_x,attr_y,attr_z\n");
        let mut gyr = String::from("id,attr_time,attr_x,attr_y,attr_z\n");
        for i in 0..n {
            let t_ms = i as f64 * 1000.0 / hz;
            acc.push_str(&format!("{i},{t_ms},{},{},{}\n", 0.1 * i as f64, 9.81, 0.0));
            gyr.push_str(&format!("{i},{t_ms},0.0,0.0,{}\n", 0.01 * i as f64));
        }
        fs::write(dir.join(format!("acc_{activity}_{placement}.csv")), acc).unwrap();
        fs::write(dir.join(format!("gyr_{activity}_{placement}.csv")), gyr).unwrap();
    }

    #[test]
    fn fifty_hz_ten_seconds_gives_two_hundred_samples() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "walking", "chest", 50.0, 10.0);
        let config = PipelineConfig::default();
        let summary = cmd_ingest_realworld(&config, dir.path(), out.path(), 20.0).unwrap();
        assert_eq!(summary.files.len(), 1);
        assert_eq!(summary.files[0].samples, 200);
        assert_eq!(summary.files[0].activity, "walking");
        assert_eq!(summary.files[0].placement, "chest");
        assert_eq!(summary.files[0].source_rate_hz, 50.0);
    }

    #[test]
    fn already_20hz_passes_through_values() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "sitting", "head", 20.0, 5.0);
        let config = PipelineConfig::default();
        cmd_ingest_realworld(&config, dir.path(), out.path(), 20.0).unwrap();
        let (signal, manifest) =
            crate::imu::read_imu_with_manifest(out.path(), "sitting__head").unwrap();
        assert_eq!(manifest.label.as_deref(), Some("sitting"));
        // grid-aligned linear interpolation reproduces the linear ramp
        for (i, a) in signal.accel.iter().enumerate() {
            assert!((a[0] - 0.1 * i as f64).abs() < 1e-9, "row {i}: {}", a[0]);
            assert!((a[1] - 9.81).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_and_backward_timestamps_dropped_with_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let mut acc = String::from("attr_time,attr_x,attr_y,attr_z\n");
        // 20 Hz in ms with one duplicate and one backward row
        let mut t = 0.0;
        for i in 0..100 {
            acc.push_str(&format!("{t},{},9.81,0.0\n", i as f64));
            if i == 10 {
                acc.push_str(&format!("{t},999,9.81,0.0\n")); // duplicate
            }
            if i == 20 {
                acc.push_str(&format!("{},999,9.81,0.0\n", t - 5.0)); // backward
            }
            t += 50.0;
        }
        fs::write(dir.path().join("acc_lying_waist.csv"), &acc).unwrap();
        fs::write(
            dir.path().join("gyr_lying_waist.csv"),
            acc.replace("9.81", "0.0"),
        )
        .unwrap();
        let config = PipelineConfig::default();
        let summary = cmd_ingest_realworld(&config, dir.path(), out.path(), 20.0).unwrap();
        assert_eq!(summary.files[0].warnings.dropped_duplicate, 2);
        assert_eq!(summary.files[0].warnings.dropped_non_monotonic, 2);
    }

    #[test]
    fn missing_gyro_pair_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let acc = "attr_time,attr_x,attr_y,attr_z\n0,0,9.8,0\n50,0,9.8,0\n100,0,9.8,0\n";
        fs::write(dir.path().join("acc_walking_head.csv"), acc).unwrap();
        let config = PipelineConfig::default();
        let err = cmd_ingest_realworld(&config, dir.path(), out.path(), 20.0)
            .err()
            .expect("must fail");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_axis_column_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("acc_walking_head.csv"),
            "attr_time,attr_x,attr_y\n0,0,9.8\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("gyr_walking_head.csv"),
            "attr_time,attr_x,attr_y,attr_z\n0,0,0,0\n",
        )
        .unwrap();
        let config = PipelineConfig::default();
        assert!(cmd_ingest_realworld(&config, dir.path(), out.path(), 20.0).is_err());
    }
}
