//! `convert`: masks or polygon annotations to fixed-N polygons.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use super::{print_report, user_error, CliResult, GlobalArgs};
use crate::contour::{
    adaptive_simplify, extract_contours, fixed_step_simplify, mask_iou, optimal_vertex_count, ContourChain,
    InstanceMask,
};
use crate::geometry::{Point2, Polygon};
use crate::io::{
    format_labels, read_mask_png, to_json_bytes, write_atomic, AnnotationFile, ImageRecord, InstanceRecord,
    LabelLine,
};
use crate::shapes::paint_polygon;

pub const DEFAULT_DELTA: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexCount {
    Fixed(usize),
    /// Median of the per-instance optimal counts over the inputs.
    Auto,
}

impl FromStr for VertexCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(VertexCount::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 3 => Ok(VertexCount::Fixed(n)),
            Ok(n) => Err(format!("vertex count {n} is below 3")),
            Err(_) => Err(format!("expected an integer >= 3 or \"auto\", got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    /// PNG instance-id masks or annotation JSON files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Vertices per polygon, or "auto".
    #[arg(short = 'n', long = "vertices", default_value = "16")]
    pub vertices: VertexCount,
    #[arg(long, value_enum, default_value_t = Method::Adaptive)]
    pub method: Method,
    /// Class id given to every instance of a PNG mask.
    #[arg(long, default_value_t = 0)]
    pub class_id: usize,
    /// Minimum IoU gain per two extra vertices for "auto".
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
}

/// One instance ready for simplification, in pixel-index coordinates.
struct SourceInstance {
    instance_id: u32,
    class_id: usize,
    chain: ContourChain,
    mask: std::sync::Arc<InstanceMask>,
    mask_id: u32,
}

struct SourceImage {
    id: String,
    width: usize,
    height: usize,
    instances: Vec<SourceInstance>,
    skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, Serialize)]
struct SkipRecord {
    instance_id: u32,
    reason: String,
}

#[derive(Debug, Clone, Serialize)]
struct FileError {
    file: String,
    error: String,
}

#[derive(Debug, Clone, Serialize)]
struct InstanceSummary {
    instance_id: u32,
    class_id: usize,
    chain_points: usize,
    iou_adaptive: f64,
    iou_fixed: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ImageSummary {
    id: String,
    width: usize,
    height: usize,
    instances: Vec<InstanceSummary>,
    skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, Serialize)]
struct MeanIou {
    adaptive: Option<f64>,
    fixed: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    method: Method,
    vertices: usize,
    auto: bool,
    delta: f64,
    instances: usize,
    mean_iou: MeanIou,
    images: Vec<ImageSummary>,
    errors: Vec<FileError>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_mask(path: &Path, class_id: usize) -> Result<Vec<SourceImage>, String> {
    let mask = std::sync::Arc::new(read_mask_png(path).map_err(|e| e.to_string())?);
    let set = extract_contours(&mask);
    let instances = set
        .chains
        .into_iter()
        .map(|(id, chain)| SourceInstance { instance_id: id, class_id, chain, mask: mask.clone(), mask_id: id })
        .collect();
    let skipped = set
        .skipped
        .into_iter()
        .map(|s| SkipRecord {
            instance_id: s.instance_id,
            reason: format!("only {} boundary pixels", s.boundary_pixels),
        })
        .collect();
    Ok(vec![SourceImage { id: file_stem(path), width: mask.width(), height: mask.height(), instances, skipped }])
}

/// Boundary points at most one pixel apart along every edge, keeping the
/// original vertices.
fn densify(polygon: &Polygon) -> Vec<Point2> {
    let mut out = Vec::new();
    for (a, b) in polygon.edges() {
        let steps = a.distance(&b).ceil().max(1.0) as usize;
        for k in 0..steps {
            let t = k as f64 / steps as f64;
            out.push(Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
        }
    }
    out
}

fn load_annotations(path: &Path) -> Result<Vec<SourceImage>, String> {
    let file = AnnotationFile::read(path).map_err(|e| e.to_string())?;
    let mut images = Vec::new();
    for img in &file.images {
        let mut instances = Vec::new();
        let mut skipped = Vec::new();
        for (k, inst) in img.instances.iter().enumerate() {
            let instance_id = k as u32 + 1;
            // to pixel-index coordinates, where pixel centers are integers
            let (w, h) = (img.width as f64, img.height as f64);
            let pts: Vec<Point2> = inst
                .polygon
                .iter()
                .map(|p| Point2::new(p.x.clamp(0.0, w) - 0.5, p.y.clamp(0.0, h) - 0.5))
                .collect();
            let outline = Polygon::new(pts).map_err(|e| e.to_string())?;
            let mut mask = InstanceMask::empty(img.width, img.height).map_err(|e| e.to_string())?;
            paint_polygon(&mut mask, &outline, 1);
            match ContourChain::new(densify(&outline)) {
                Ok(chain) => instances.push(SourceInstance {
                    instance_id,
                    class_id: inst.class_id,
                    chain,
                    mask: std::sync::Arc::new(mask),
                    mask_id: 1,
                }),
                Err(e) => skipped.push(SkipRecord { instance_id, reason: e.to_string() }),
            }
        }
        images.push(SourceImage { id: img.id.clone(), width: img.width, height: img.height, instances, skipped });
    }
    Ok(images)
}

fn median_optimal_count(images: &[SourceImage], delta: f64) -> CliResult<usize> {
    let mut counts: Vec<usize> = images
        .par_iter()
        .flat_map_iter(|img| img.instances.iter())
        .map(|inst| optimal_vertex_count(&inst.chain, &inst.mask, inst.mask_id, delta))
        .collect::<crate::Result<Vec<usize>>>()?;
    if counts.is_empty() {
        return Err(user_error("no instances to choose a vertex count from"));
    }
    counts.sort_unstable();
    Ok(counts[(counts.len() - 1) / 2])
}

struct Converted {
    summary: InstanceSummary,
    /// Chosen polygon in continuous pixel coordinates.
    polygon: Polygon,
}

fn convert_instance(inst: &SourceInstance, n: usize, method: Method) -> Result<Converted, String> {
    let adaptive = adaptive_simplify(&inst.chain, n).map_err(|e| e.to_string())?;
    let fixed = fixed_step_simplify(&inst.chain, n).map_err(|e| e.to_string())?;
    let summary = InstanceSummary {
        instance_id: inst.instance_id,
        class_id: inst.class_id,
        chain_points: inst.chain.len(),
        iou_adaptive: mask_iou(&adaptive, &inst.mask, inst.mask_id),
        iou_fixed: mask_iou(&fixed, &inst.mask, inst.mask_id),
    };
    let chosen = match method {
        Method::Adaptive => adaptive,
        Method::Fixed => fixed,
    };
    Ok(Converted { summary, polygon: chosen.translate(Point2::new(0.5, 0.5)) })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn run(args: &ConvertArgs, g: &GlobalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if args.delta.is_nan() || args.delta < 0.0 {
        return Err(user_error(format!("delta {} must be >= 0", args.delta)));
    }
    let loaded: Vec<Result<Vec<SourceImage>, FileError>> = args
        .inputs
        .par_iter()
        .map(|path| {
            let r = if is_json(path) { load_annotations(path) } else { load_mask(path, args.class_id) };
            r.map_err(|error| FileError { file: path.display().to_string(), error })
        })
        .collect();

    let mut errors = Vec::new();
    let mut images: BTreeMap<String, SourceImage> = BTreeMap::new();
    for (path, r) in args.inputs.iter().zip(loaded) {
        match r {
            Ok(list) => {
                for img in list {
                    if images.contains_key(&img.id) {
                        errors.push(FileError {
                            file: path.display().to_string(),
                            error: format!("duplicate image id {:?}", img.id),
                        });
                    } else {
                        images.insert(img.id.clone(), img);
                    }
                }
            }
            Err(e) => errors.push(e),
        }
    }
    if images.is_empty() {
        let detail: Vec<String> = errors.iter().map(|e| format!("{}: {}", e.file, e.error)).collect();
        return Err(user_error(format!("no input could be read\n{}", detail.join("\n"))));
    }
    let images: Vec<SourceImage> = images.into_values().collect();

    let n = match args.vertices {
        VertexCount::Fixed(n) => n,
        VertexCount::Auto => median_optimal_count(&images, args.delta)?.max(3),
    };

    let converted: Vec<Vec<Result<Converted, String>>> = images
        .par_iter()
        .map(|img| img.instances.iter().map(|inst| convert_instance(inst, n, args.method)).collect())
        .collect();

    let mut annotations = AnnotationFile::default();
    let mut summaries = Vec::new();
    for (img, results) in images.iter().zip(converted) {
        let mut record = ImageRecord { id: img.id.clone(), width: img.width, height: img.height, instances: vec![] };
        let mut summary = ImageSummary {
            id: img.id.clone(),
            width: img.width,
            height: img.height,
            instances: vec![],
            skipped: img.skipped.clone(),
        };
        let mut labels = Vec::new();
        for (inst, r) in img.instances.iter().zip(results) {
            match r {
                Ok(Converted { summary: s, polygon: p }) => {
                    labels.push(LabelLine::from_pixels(inst.class_id, &p, img.width, img.height));
                    record.instances.push(InstanceRecord {
                        class_id: inst.class_id,
                        polygon: p.vertices().to_vec(),
                        confidence: None,
                    });
                    summary.instances.push(s);
                }
                Err(reason) => summary.skipped.push(SkipRecord { instance_id: inst.instance_id, reason }),
            }
        }
        let label_path = g.output_dir.join("labels").join(format!("{}.txt", img.id));
        write_atomic(&label_path, format_labels(&labels).as_bytes())?;
        annotations.images.push(record);
        summaries.push(summary);
    }

    let all: Vec<&InstanceSummary> = summaries.iter().flat_map(|s| s.instances.iter()).collect();
    let summary = Summary {
        method: args.method,
        vertices: n,
        auto: args.vertices == VertexCount::Auto,
        delta: args.delta,
        instances: all.len(),
        mean_iou: MeanIou {
            adaptive: mean(all.iter().map(|s| s.iou_adaptive)),
            fixed: mean(all.iter().map(|s| s.iou_fixed)),
        },
        images: summaries,
        errors,
    };
    annotations.write(&g.output_dir.join("annotations.json"))?;
    write_atomic(&g.output_dir.join("summary.json"), &to_json_bytes(&summary))?;

    let report = serde_json::json!({
        "images": summary.images.len(),
        "instances": summary.instances,
        "vertices": summary.vertices,
        "method": summary.method,
        "mean_iou_adaptive": summary.mean_iou.adaptive,
        "mean_iou_fixed": summary.mean_iou.fixed,
        "errors": summary.errors.len(),
    });
    print_report(stdout, g.format, &report)
}
