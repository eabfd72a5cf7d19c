//! Dataset CSV, report JSON/CSV and the per-grid SVG heat map.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::EvalReport;
use super::sweep::{Dataset, DatasetRow};
use super::HarnessError;
use crate::geometry::{Attitude, Pose, Vec3};
use crate::learn::Source;
use crate::vision::FeatureVector;

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRecord {
    x: f64,
    y: f64,
    z: f64,
    roll: f64,
    pitch: f64,
    yaw: f64,
    grid_i: usize,
    grid_j: usize,
    height: f64,
    u1: f64,
    v1: f64,
    u2: f64,
    v2: f64,
    u3: f64,
    v3: f64,
    u4: f64,
    v4: f64,
}

/// Columns `x,y,z,roll,pitch,yaw,grid_i,grid_j,height,u1,v1,…,u4,v4`.
pub fn write_features_csv<W: Write>(ds: &Dataset, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in &ds.rows {
        let p = r.pose.position;
        let a = r.pose.attitude;
        let f = r.features.0;
        w.serialize(FeatureRecord {
            x: p.x,
            y: p.y,
            z: p.z,
            roll: a.roll,
            pitch: a.pitch,
            yaw: a.yaw,
            grid_i: r.grid_i,
            grid_j: r.grid_j,
            height: r.height_m,
            u1: f[0],
            v1: f[1],
            u2: f[2],
            v2: f[3],
            u3: f[4],
            v3: f[5],
            u4: f[6],
            v4: f[7],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a features CSV; the file does not record its source, so the caller
/// supplies it.
pub fn read_features_csv<R: Read>(input: R, source: Source) -> Result<Dataset, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        let r: FeatureRecord = rec?;
        rows.push(DatasetRow {
            features: FeatureVector([r.u1, r.v1, r.u2, r.v2, r.u3, r.v3, r.u4, r.v4]),
            pose: Pose::new(Vec3::new(r.x, r.y, r.z), Attitude { roll: r.roll, pitch: r.pitch, yaw: r.yaw }),
            grid_i: r.grid_i,
            grid_j: r.grid_j,
            height_m: r.height,
            source,
        });
    }
    Ok(Dataset { rows })
}

/// `label,curve,error_cm,fraction` for the 3D and per-axis CDFs.
pub fn write_cdf_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "curve", "error_cm", "fraction"])?;
    for r in reports {
        let curves = [("3d", &r.cdf_3d), ("x", &r.cdf_axis[0]), ("y", &r.cdf_axis[1]), ("z", &r.cdf_axis[2])];
        for (name, cdf) in curves {
            for p in cdf {
                w.write_record([r.label.as_str(), name, &p.error_cm.to_string(), &p.fraction.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `label,grid_i,grid_j,count,mean_error_cm`.
pub fn write_grid_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "grid_i", "grid_j", "count", "mean_error_cm"])?;
    for r in reports {
        for c in &r.per_grid {
            w.write_record([
                r.label.as_str(),
                &c.grid_i.to_string(),
                &c.grid_j.to_string(),
                &c.count.to_string(),
                &c.mean_error_cm.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-grid mean error as a square heat map, white (0) to red (max).
pub fn grid_svg(report: &EvalReport) -> String {
    const CELL: usize = 60;
    const PAD: usize = 40;
    let n = report.per_grid.iter().map(|c| c.grid_i.max(c.grid_j) + 1).max().unwrap_or(1);
    let vmax = report.per_grid.iter().map(|c| c.mean_error_cm).fold(0.0, f64::max);
    let size = n * CELL + 2 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{}" font-family="sans-serif" font-size="11">"#,
        size + 20
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="20">{} mean error per grid cell, cm (max {vmax:.2})</text>"#,
        escape(&report.label)
    );
    for c in &report.per_grid {
        let t = if vmax > 0.0 { c.mean_error_cm / vmax } else { 0.0 };
        let gb = (255.0 * (1.0 - t)).round() as u8;
        // x grows right, y grows up
        let x = PAD + c.grid_i * CELL;
        let y = PAD + 20 + (n - 1 - c.grid_j) * CELL;
        let _ = writeln!(
            s,
            r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#ff{gb:02x}{gb:02x}" stroke="#888"/><text x="{}" y="{}" text-anchor="middle">{:.2}</text>"##,
            x + CELL / 2,
            y + CELL / 2 + 4,
            c.mean_error_cm
        );
    }
    s.push_str("</svg>\n");
    s
}
