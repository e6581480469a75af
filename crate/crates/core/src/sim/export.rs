//! Trajectory logs as CSV tables and SVG plots.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, UnitQuaternion};
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::run::{LogRow, TrajectoryLog};

/// Plots keep at most about this many samples per series.
pub const PLOT_POINTS: usize = 2000;

/// Floor applied to error norms before taking their logarithm.
const ERR_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Svg,
    Both,
}

impl ExportFormat {
    fn csv(self) -> bool {
        matches!(self, ExportFormat::Csv | ExportFormat::Both)
    }

    fn svg(self) -> bool {
        matches!(self, ExportFormat::Svg | ExportFormat::Both)
    }
}

/// One CSV record; field order is the column order.
#[derive(Debug, Serialize)]
struct CsvRecord {
    t: f64,
    uav_id: usize,
    px: f64,
    py: f64,
    pz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    vx: f64,
    err_norm: f64,
    rel_phi: f64,
    rel_theta: f64,
    rel_psi: f64,
    sat_flag: u8,
}

/// Unit quaternion `[w, x, y, z]` with `w >= 0`.
pub fn quaternion(rotation: &crate::lie::Rotation) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation.matrix()));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

impl From<&LogRow> for CsvRecord {
    fn from(r: &LogRow) -> Self {
        let [qw, qx, qy, qz] = quaternion(&r.pose.rotation);
        let p = &r.pose.position;
        let w = &r.twist.angular;
        CsvRecord {
            t: r.t,
            uav_id: r.uav_id,
            px: p.x,
            py: p.y,
            pz: p.z,
            qw,
            qx,
            qy,
            qz,
            wx: w.x,
            wy: w.y,
            wz: w.z,
            vx: r.twist.linear.x,
            err_norm: r.err_norm,
            rel_phi: r.rel.roll,
            rel_theta: r.rel.pitch,
            rel_psi: r.rel.yaw,
            sat_flag: r.sat_flags,
        }
    }
}

fn non_empty(log: &TrajectoryLog) -> Result<()> {
    if log.rows.is_empty() {
        Err(Error::EmptyLog)
    } else {
        Ok(())
    }
}

pub fn write_csv<W: Write>(log: &TrajectoryLog, out: W) -> Result<()> {
    non_empty(log)?;
    let mut w = csv::Writer::from_writer(out);
    for row in &log.rows {
        w.serialize(CsvRecord::from(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Tick indices kept for plotting; always includes the last tick.
pub fn decimate(ticks: usize, max_points: usize) -> Vec<usize> {
    if ticks == 0 {
        return Vec::new();
    }
    let stride = ticks.div_ceil(max_points.max(2) - 1).max(1);
    let mut idx: Vec<usize> = (0..ticks).step_by(stride).collect();
    if *idx.last().expect("non-empty") != ticks - 1 {
        idx.push(ticks - 1);
    }
    idx
}

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

/// Symmetric padding so flat ranges still span some width.
fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.05).max(1.0);
    (lo - pad)..(hi + pad)
}

fn projection<DB: DrawingBackend>(
    area: &DrawingArea<DB, Shift>,
    log: &TrajectoryLog,
    ticks: &[usize],
    axes: (usize, usize),
    labels: (&str, &str),
) -> Result<()> {
    let coord = |r: &LogRow, i: usize| r.pose.position[i];
    let range = |i: usize| {
        let (lo, hi) = log
            .rows
            .iter()
            .map(|r| coord(r, i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        padded(lo, hi)
    };
    let mut chart = ChartBuilder::on(area)
        .caption(format!("{}-{} projection", labels.0, labels.1), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .build_cartesian_2d(range(axes.0), range(axes.1))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(format!("{} [m]", labels.0))
        .y_desc(format!("{} [m]", labels.1))
        .draw()
        .map_err(plot_err)?;
    for id in 0..log.node_count {
        let color = Palette99::pick(id).to_rgba();
        let points = ticks.iter().map(|&k| {
            let r = log.row(k, id);
            (coord(r, axes.0), coord(r, axes.1))
        });
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(if id == 0 { 2 } else { 1 })))
            .map_err(plot_err)?
            .label(if id == 0 {
                "leader".to_string()
            } else {
                format!("uav {id}")
            })
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    Ok(())
}

fn error_panel<DB: DrawingBackend>(area: &DrawingArea<DB, Shift>, log: &TrajectoryLog, ticks: &[usize]) -> Result<()> {
    let t_end = log.row(log.ticks() - 1, 0).t.max(log.step);
    let lg = |e: f64| e.max(ERR_FLOOR).log10();
    let top = log
        .rows
        .iter()
        .map(|r| lg(r.err_norm))
        .fold(ERR_FLOOR.log10(), f64::max);
    let mut chart = ChartBuilder::on(area)
        .caption("tracking error", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, ERR_FLOOR.log10()..(top + 1.0))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc("log10 |X|")
        .draw()
        .map_err(plot_err)?;
    for id in 1..log.node_count {
        let color = Palette99::pick(id).to_rgba();
        let points = ticks.iter().map(|&k| {
            let r = log.row(k, id);
            (r.t, lg(r.err_norm))
        });
        chart.draw_series(LineSeries::new(points, color)).map_err(plot_err)?;
    }
    Ok(())
}

/// Three position projections and the follower error norms over time.
pub fn write_svg(log: &TrajectoryLog, path: &Path) -> Result<()> {
    non_empty(log)?;
    let ticks = decimate(log.ticks(), PLOT_POINTS);
    let root = SVGBackend::new(path, (1200, 1000)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((2, 2));
    projection(&panels[0], log, &ticks, (0, 1), ("x", "y"))?;
    projection(&panels[1], log, &ticks, (0, 2), ("x", "z"))?;
    projection(&panels[2], log, &ticks, (1, 2), ("y", "z"))?;
    error_panel(&panels[3], log, &ticks)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Writes `<stem>.csv` and/or `<stem>.svg` into `dir`, creating it if needed.
pub fn export(log: &TrajectoryLog, dir: &Path, stem: &str, format: ExportFormat) -> Result<Vec<PathBuf>> {
    non_empty(log)?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(format!("{stem}.csv"));
        let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write_csv(log, file)?;
        written.push(path);
    }
    if format.svg() {
        let path = dir.join(format!("{stem}.svg"));
        write_svg(log, &path)?;
        written.push(path);
    }
    Ok(written)
}
