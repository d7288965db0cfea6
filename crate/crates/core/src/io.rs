//! File formats: PNG id-masks, annotation JSON, label text and polygon files.
//!
//! Polygons in annotation and polygon files are in continuous pixel
//! coordinates, where pixel `(c, r)` covers `[c, c + 1] x [r, r + 1]`. Label
//! files hold the same coordinates divided by the image width and height.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::contour::InstanceMask;
use crate::geometry::{Point2, Polygon};
use crate::grid::{Detection, InstanceAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl IoError {
    fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format { path: path.display().to_string(), message: message.into() }
    }

    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.display().to_string(), source }
    }
}

pub type IoResult<T> = std::result::Result<T, IoError>;

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> IoResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| IoError::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| IoError::file(path, e))
}

pub fn read_text(path: &Path) -> IoResult<String> {
    fs::read_to_string(path).map_err(|e| IoError::file(path, e))
}

/// Reads an 8- or 16-bit single-channel PNG of instance ids.
pub fn read_mask_png(path: &Path) -> IoResult<InstanceMask> {
    let img = image::open(path).map_err(|e| IoError::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<u32> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(IoError::format(path, format!("expected a single-channel mask, got {:?}", other.color())));
        }
    };
    InstanceMask::new(w, h, pixels).map_err(|e| IoError::format(path, e.to_string()))
}

/// Writes 8-bit when every id fits, 16-bit otherwise.
pub fn write_mask_png(path: &Path, mask: &InstanceMask) -> IoResult<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let max = mask.pixels().iter().copied().max().unwrap_or(0);
    let img = if max <= u8::MAX as u32 {
        let raw = mask.pixels().iter().map(|&v| v as u8).collect();
        DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
    } else if max <= u16::MAX as u32 {
        let raw = mask.pixels().iter().map(|&v| v as u16).collect();
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).expect("buffer size"))
    } else {
        return Err(IoError::format(path, format!("instance id {max} does not fit in 16 bits")));
    };
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    write_atomic(path, bytes.get_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub class_id: usize,
    pub polygon: Vec<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<InstanceRecord>,
}

/// Ground truth or detections for a set of images.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub images: Vec<ImageRecord>,
}

impl AnnotationFile {
    pub fn read(path: &Path) -> IoResult<Self> {
        let file: AnnotationFile =
            serde_json::from_str(&read_text(path)?).map_err(|e| IoError::format(path, e.to_string()))?;
        file.validate().map_err(|m| IoError::format(path, m))?;
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        write_atomic(path, to_json_bytes(self).as_slice())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let mut ids = std::collections::BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.id.as_str()) {
                return Err(format!("duplicate image id {:?}", img.id));
            }
            for (k, inst) in img.instances.iter().enumerate() {
                if inst.polygon.len() < 3 {
                    return Err(format!("image {:?} instance {k}: fewer than 3 vertices", img.id));
                }
                if inst.polygon.iter().any(|p| !p.is_finite()) {
                    return Err(format!("image {:?} instance {k}: non-finite coordinate", img.id));
                }
            }
        }
        Ok(())
    }

    fn polygon(img: &ImageRecord, inst: &InstanceRecord) -> Polygon {
        let (w, h) = (img.width as f64, img.height as f64);
        let clipped = inst.polygon.iter().map(|p| Point2::new(p.x.clamp(0.0, w), p.y.clamp(0.0, h))).collect();
        Polygon::new(clipped).expect("validated on read")
    }

    /// Ground-truth instances per image id, clipped to the image.
    pub fn annotations(&self) -> std::collections::BTreeMap<String, Vec<InstanceAnnotation>> {
        self.images
            .iter()
            .map(|img| {
                let anns = img
                    .instances
                    .iter()
                    .map(|inst| InstanceAnnotation { class_id: inst.class_id, polygon: Self::polygon(img, inst) })
                    .collect();
                (img.id.clone(), anns)
            })
            .collect()
    }

    /// Detections per image id; a missing confidence counts as 1.
    pub fn detections(&self) -> std::collections::BTreeMap<String, Vec<Detection>> {
        self.images
            .iter()
            .map(|img| {
                let dets = img
                    .instances
                    .iter()
                    .map(|inst| Detection {
                        class_id: inst.class_id,
                        confidence: inst.confidence.unwrap_or(1.0),
                        polygon: Self::polygon(img, inst),
                    })
                    .collect();
                (img.id.clone(), dets)
            })
            .collect()
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    bytes
}

pub const LABEL_DECIMALS: usize = 6;

/// One label-file line: class id and normalized vertex coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelLine {
    pub class_id: usize,
    pub polygon: Polygon,
}

impl LabelLine {
    /// Normalizes a polygon in pixel coordinates by the image size.
    pub fn from_pixels(class_id: usize, polygon: &Polygon, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let pts = polygon
            .vertices()
            .iter()
            .map(|p| Point2::new((p.x / w).clamp(0.0, 1.0), (p.y / h).clamp(0.0, 1.0)))
            .collect();
        Self { class_id, polygon: Polygon::new(pts).expect("finite vertices") }
    }

    pub fn to_pixels(&self, width: usize, height: usize) -> Polygon {
        let pts = self
            .polygon
            .vertices()
            .iter()
            .map(|p| Point2::new(p.x * width as f64, p.y * height as f64))
            .collect();
        Polygon::new(pts).expect("finite vertices")
    }
}

pub fn format_labels(lines: &[LabelLine]) -> String {
    let mut out = String::new();
    for line in lines {
        write!(out, "{}", line.class_id).unwrap();
        for v in line.polygon.vertices() {
            write!(out, " {:.*} {:.*}", LABEL_DECIMALS, v.x, LABEL_DECIMALS, v.y).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_labels(text: &str) -> std::result::Result<Vec<LabelLine>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() < 7 || fields.len().is_multiple_of(2) {
                return Err(format!("line {}: expected class id and at least 3 x y pairs", i + 1));
            }
            let class_id = fields[0].parse().map_err(|e| format!("line {}: class id: {e}", i + 1))?;
            let coords = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(format!("line {}: coordinate outside [0, 1]", i + 1));
            }
            let polygon = Polygon::from_flat(&coords).map_err(|e| format!("line {}: {e}", i + 1))?;
            Ok(LabelLine { class_id, polygon })
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolygonFileRepr {
    Bare(Vec<Point2>),
    Wrapped { polygon: Vec<Point2> },
}

#[derive(Serialize)]
struct PolygonFileOut<'a> {
    polygon: &'a [Point2],
}

/// Reads `{"polygon": [[x, y], ...]}` or a bare `[[x, y], ...]`.
pub fn read_polygon(path: &Path) -> IoResult<Polygon> {
    let repr: PolygonFileRepr =
        serde_json::from_str(&read_text(path)?).map_err(|e| IoError::format(path, e.to_string()))?;
    let pts = match repr {
        PolygonFileRepr::Bare(p) | PolygonFileRepr::Wrapped { polygon: p } => p,
    };
    Polygon::new(pts).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_polygon(path: &Path, polygon: &Polygon) -> IoResult<()> {
    write_atomic(path, &to_json_bytes(&PolygonFileOut { polygon: polygon.vertices() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip_within_format_precision() {
        let poly = Polygon::from_xy(&[(0.1234567, 0.2), (0.9, 0.33333333), (0.5, 0.999999949)]).unwrap();
        let lines = vec![LabelLine { class_id: 3, polygon: poly.clone() }];
        let text = format_labels(&lines);
        assert_eq!(text, "3 0.123457 0.200000 0.900000 0.333333 0.500000 1.000000\n");
        let back = parse_labels(&text).unwrap();
        assert_eq!(back[0].class_id, 3);
        for (a, b) in back[0].polygon.vertices().iter().zip(poly.vertices()) {
            assert!((a.x - b.x).abs() <= 5e-7 && (a.y - b.y).abs() <= 5e-7);
        }
    }

    #[test]
    fn label_parse_errors() {
        assert!(parse_labels("0 0.1 0.1 0.2 0.2").is_err());
        assert!(parse_labels("0 0.1 0.1 0.2 0.2 0.3").is_err());
        assert!(parse_labels("0 0.1 0.1 0.2 0.2 0.3 1.5").is_err());
        assert!(parse_labels("x 0.1 0.1 0.2 0.2 0.3 0.5").is_err());
        assert!(parse_labels("\n").unwrap().is_empty());
    }

    #[test]
    fn pixel_normalization() {
        let poly = Polygon::from_xy(&[(0.0, 0.0), (64.0, 0.0), (64.0, 48.0)]).unwrap();
        let line = LabelLine::from_pixels(0, &poly, 128, 96);
        assert_eq!(line.polygon, Polygon::from_xy(&[(0.0, 0.0), (0.5, 0.0), (0.5, 0.5)]).unwrap());
        assert_eq!(line.to_pixels(128, 96), poly);
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for max_id in [7u32, 300] {
            let mut m = InstanceMask::empty(5, 4).unwrap();
            m.set(1, 1, max_id);
            m.set(3, 2, 2);
            let path = dir.path().join(format!("m{max_id}.png"));
            write_mask_png(&path, &m).unwrap();
            assert_eq!(read_mask_png(&path).unwrap(), m);
        }
    }

    #[test]
    fn rgb_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&path).unwrap();
        assert!(read_mask_png(&path).is_err());
    }

    #[test]
    fn annotation_json_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let file = AnnotationFile {
            images: vec![ImageRecord {
                id: "a".into(),
                width: 10,
                height: 10,
                instances: vec![InstanceRecord {
                    class_id: 1,
                    polygon: vec![Point2::new(-1.0, 0.0), Point2::new(5.0, 0.0), Point2::new(5.0, 12.0)],
                    confidence: Some(0.5),
                }],
            }],
        };
        let path = dir.path().join("ann.json");
        file.write(&path).unwrap();
        let back = AnnotationFile::read(&path).unwrap();
        assert_eq!(back, file);
        let anns = back.annotations();
        assert_eq!(anns["a"][0].polygon.vertices()[0], Point2::new(0.0, 0.0));
        assert_eq!(anns["a"][0].polygon.vertices()[2], Point2::new(5.0, 10.0));
        assert_eq!(back.detections()["a"][0].confidence, 0.5);

        fs::write(&path, r#"{"images":[{"id":"a","width":1,"height":1,"instances":[{"class_id":0,"polygon":[[0,0],[1,1]]}]}]}"#).unwrap();
        assert!(AnnotationFile::read(&path).is_err());
        fs::write(&path, r#"{"images":[{"id":"a","width":1,"height":1,"instances":[]},{"id":"a","width":1,"height":1,"instances":[]}]}"#).unwrap();
        assert!(AnnotationFile::read(&path).is_err());
    }

    #[test]
    fn polygon_file_forms() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, "[[0,0],[1,0],[0,1]]").unwrap();
        let bare = read_polygon(&path).unwrap();
        write_polygon(&path, &bare).unwrap();
        assert!(read_text(&path).unwrap().contains("\"polygon\""));
        assert_eq!(read_polygon(&path).unwrap(), bare);
    }
}
