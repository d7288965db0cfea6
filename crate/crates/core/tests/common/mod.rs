#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use instapoly::geometry::{Point2, Polygon};
use instapoly::io::{write_mask_png, AnnotationFile, ImageRecord, InstanceRecord};
use instapoly::shapes::{fixture_set, SyntheticShape};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_instapoly"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes each shape's mask as `<name>.png` and returns the paths.
pub fn write_masks(dir: &Path, shapes: &[SyntheticShape]) -> Vec<PathBuf> {
    shapes
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.png", s.name));
            write_mask_png(&path, &s.mask).unwrap();
            path
        })
        .collect()
}

/// Analytic outlines as ground truth, shifted from pixel-center to
/// continuous pixel coordinates.
pub fn outline_annotations(shapes: &[SyntheticShape]) -> AnnotationFile {
    AnnotationFile {
        images: shapes
            .iter()
            .map(|s| ImageRecord {
                id: s.name.clone(),
                width: s.mask.width(),
                height: s.mask.height(),
                instances: vec![InstanceRecord {
                    class_id: 0,
                    polygon: s.outline.translate(Point2::new(0.5, 0.5)).into_vertices(),
                    confidence: None,
                }],
            })
            .collect(),
    }
}

pub fn shapes_named(names: &[&str]) -> Vec<SyntheticShape> {
    fixture_set().into_iter().filter(|s| names.contains(&s.name.as_str())).collect()
}

pub fn square(x: f64, y: f64, side: f64) -> Polygon {
    Polygon::from_xy(&[(x, y), (x + side, y), (x + side, y + side), (x, y + side)]).unwrap()
}
