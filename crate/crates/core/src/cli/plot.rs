//! `plotdata`: long-format series, comparison tables and SVG overlays.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use super::{print_report, user_error, CliResult, GlobalArgs};
use crate::fitter::EpochRecord;
use crate::geometry::Polygon;
use crate::io::{parse_labels, read_text, write_atomic, AnnotationFile, IoError};

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Fit trace CSV files; written to series.csv.
    #[arg(long)]
    pub trace: Vec<PathBuf>,
    /// Conversion summaries; merged into comparison.csv.
    #[arg(long)]
    pub summary: Vec<PathBuf>,
    /// Label file to draw; needs --width and --height.
    #[arg(long, requires_all = ["width", "height"])]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Annotation file; one SVG per image.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Format { path: path.display().to_string(), message: e.to_string() }
}

fn trace_series(paths: &[PathBuf]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "y"])?;
    for path in paths {
        let name = stem(path);
        let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e))?;
        for rec in r.deserialize::<EpochRecord>() {
            let rec = rec.map_err(|e| format_err(path, e))?;
            let x = rec.epoch.to_string();
            w.write_record([format!("{name}/iou"), x.clone(), rec.iou.to_string()])?;
            w.write_record([format!("{name}/loss"), x.clone(), rec.loss.to_string()])?;
            w.write_record([format!("{name}/lambda"), x, rec.lambda.to_string()])?;
        }
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

#[derive(Deserialize)]
struct SummaryMean {
    adaptive: Option<f64>,
    fixed: Option<f64>,
}

#[derive(Deserialize)]
struct SummaryHead {
    method: String,
    vertices: usize,
    instances: usize,
    mean_iou: SummaryMean,
}

fn comparison(paths: &[PathBuf]) -> CliResult<Vec<u8>> {
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["summary", "method", "vertices", "instances", "mean_iou_adaptive", "mean_iou_fixed"])?;
    for path in paths {
        let s: SummaryHead = serde_json::from_str(&read_text(path)?).map_err(|e| format_err(path, e))?;
        w.write_record([
            stem(path),
            s.method,
            s.vertices.to_string(),
            s.instances.to_string(),
            fmt(s.mean_iou.adaptive),
            fmt(s.mean_iou.fixed),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Polygons in pixel coordinates drawn over the image frame.
pub fn svg_overlay(width: usize, height: usize, polygons: &[(usize, Polygon)]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(s, r##"  <rect x="0" y="0" width="{width}" height="{height}" fill="none" stroke="#888"/>"##).unwrap();
    for (class_id, poly) in polygons {
        let points: Vec<String> = poly.vertices().iter().map(|p| format!("{:.3},{:.3}", p.x, p.y)).collect();
        writeln!(
            s,
            r#"  <polygon points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
            points.join(" "),
            PALETTE[class_id % PALETTE.len()]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn run(a: &PlotArgs, g: &GlobalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if a.trace.is_empty() && a.summary.is_empty() && a.labels.is_none() && a.annotations.is_none() {
        return Err(user_error("nothing to do: pass --trace, --summary, --labels or --annotations"));
    }
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: &[u8]| -> CliResult<()> {
        let path = g.output_dir.join(&name);
        write_atomic(&path, bytes)?;
        written.push(name);
        Ok(())
    };
    if !a.trace.is_empty() {
        emit("series.csv".into(), &trace_series(&a.trace)?)?;
    }
    if !a.summary.is_empty() {
        emit("comparison.csv".into(), &comparison(&a.summary)?)?;
    }
    if let (Some(path), Some(w), Some(h)) = (&a.labels, a.width, a.height) {
        let lines = parse_labels(&read_text(path)?).map_err(|e| format_err(path, e))?;
        let polys: Vec<(usize, Polygon)> = lines.iter().map(|l| (l.class_id, l.to_pixels(w, h))).collect();
        emit(format!("{}.svg", stem(path)), svg_overlay(w, h, &polys).as_bytes())?;
    }
    if let Some(path) = &a.annotations {
        let file = AnnotationFile::read(path)?;
        let anns = file.annotations();
        for img in &file.images {
            let polys: Vec<(usize, Polygon)> = anns[&img.id].iter().map(|x| (x.class_id, x.polygon.clone())).collect();
            emit(format!("overlay_{}.svg", img.id), svg_overlay(img.width, img.height, &polys).as_bytes())?;
        }
    }
    print_report(stdout, g.format, &json!({ "written": written }))
}
