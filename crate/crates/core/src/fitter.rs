//! Direct first-order optimization of polygon vertices against a target.
//!
//! Stands in for network training: the 2N coordinates of a predicted polygon
//! are the only parameters, updated with the combined localization loss and
//! the epoch-dependent regression weight.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{adaptive_simplify, extract_contours};
use crate::error::{Error, Result};
use crate::geometry::{centroid, is_self_intersecting, raster_iou, Point2, Polygon};
use crate::losses::{combined_localization_loss, lambda_schedule, IouKind, LossConfig};
use crate::shapes::fixture_set;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Gradient,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// Epoch-dependent weight from the loss configuration's schedule.
    Scheduled,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Updates per epoch; lambda is held fixed within an epoch.
    pub steps_per_epoch: usize,
    pub loss: LossConfig,
    pub lambda: LambdaMode,
    pub seed: u64,
    /// Grid resolution of the IoU recorded in the trace.
    pub iou_resolution: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            steps_per_epoch: 1,
            loss: LossConfig::default(),
            lambda: LambdaMode::Scheduled,
            seed: 0,
            iou_resolution: 512,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.steps_per_epoch < 1 {
            return Err(Error::InvalidConfig("steps per epoch must be >= 1".into()));
        }
        if self.iou_resolution < 1 {
            return Err(Error::InvalidConfig("IoU resolution must be >= 1".into()));
        }
        if let LambdaMode::Fixed(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidConfig(format!("lambda {l} not in [0, 1]")));
            }
        }
        self.loss.validate()
    }

    /// Pure log-cosh regression.
    pub fn regression(&self) -> Self {
        Self { lambda: LambdaMode::Fixed(1.0), ..self.clone() }
    }

    /// Scheduled blend of regression and the given IoU loss.
    pub fn with_iou(&self, kind: IouKind) -> Self {
        Self { lambda: LambdaMode::Scheduled, loss: LossConfig { iou_kind: kind, ..self.loss }, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub loss: f64,
    pub iou: f64,
    pub self_intersecting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Loss of the initialization under the last epoch's lambda, comparable
    /// with the final record.
    pub initial_loss: f64,
    pub initial_iou: f64,
    pub records: Vec<EpochRecord>,
    pub final_polygon: Polygon,
}

impl FitTrace {
    pub fn final_iou(&self) -> f64 {
        self.records.last().map_or(self.initial_iou, |r| r.iou)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn self_intersecting_epochs(&self) -> usize {
        self.records.iter().filter(|r| r.self_intersecting).count()
    }

    /// First epoch from which the IoU stays at or above `threshold`.
    pub fn convergence_epoch(&self, threshold: f64) -> Option<usize> {
        let last_below = self.records.iter().rposition(|r| r.iou < threshold);
        match last_below {
            None if self.initial_iou >= threshold => Some(0),
            None => self.records.first().map(|r| r.epoch),
            Some(i) => self.records.get(i + 1).map(|r| r.epoch),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A fit that stopped on a loss error, with the epochs completed before it.
#[derive(Debug, Clone, Error)]
#[error("fit aborted after {} epochs: {source}", partial.records.len())]
pub struct FitError {
    pub partial: FitTrace,
    pub source: Error,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn lambda_for(cfg: &FitConfig, epoch: usize) -> Result<f64> {
    match cfg.lambda {
        LambdaMode::Fixed(l) => Ok(l),
        LambdaMode::Scheduled => lambda_schedule(epoch as i64, &cfg.loss.schedule),
    }
}

fn record_iou(poly: &Polygon, gt: &Polygon, resolution: usize) -> f64 {
    raster_iou(poly, gt, resolution).unwrap_or(0.0)
}

/// Optimizes `init` towards `gt` for `cfg.epochs` epochs.
///
/// Each record holds the loss and IoU of the polygon at the end of its epoch;
/// the loss is evaluated with that epoch's lambda.
pub fn fit_polygon(init: &Polygon, gt: &Polygon, cfg: &FitConfig) -> std::result::Result<FitTrace, FitError> {
    let abort = |partial: FitTrace, source: Error| FitError { partial, source };
    let mut trace = FitTrace {
        initial_loss: f64::NAN,
        initial_iou: record_iou(init, gt, cfg.iou_resolution),
        records: Vec::with_capacity(cfg.epochs),
        final_polygon: init.clone(),
    };
    if let Err(e) = cfg.validate() {
        return Err(abort(trace, e));
    }
    if init.len() != gt.len() {
        let e = Error::ShapeMismatch(format!("init has {} vertices, ground truth {}", init.len(), gt.len()));
        return Err(abort(trace, e));
    }
    if is_self_intersecting(gt) {
        return Err(abort(trace, Error::SelfIntersecting));
    }
    let loss_at = |poly: &Polygon, lambda: f64| combined_localization_loss(poly, gt, lambda, &cfg.loss);

    let last_lambda = match lambda_for(cfg, cfg.epochs) {
        Ok(l) => l,
        Err(e) => return Err(abort(trace, e)),
    };
    match loss_at(init, last_lambda) {
        Ok(r) => trace.initial_loss = r.loss.value,
        Err(e) => return Err(abort(trace, e)),
    }

    let mut params = init.to_flat();
    let mut adam = Adam::new(params.len());
    let mut poly = init.clone();
    for epoch in 1..=cfg.epochs {
        let lambda = match lambda_for(cfg, epoch) {
            Ok(l) => l,
            Err(e) => return Err(abort(trace, e)),
        };
        for _ in 0..cfg.steps_per_epoch {
            let report = match loss_at(&poly, lambda) {
                Ok(r) => r,
                Err(e) => return Err(abort(trace, e)),
            };
            let grad = &report.loss.gradient;
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut params, grad, cfg.learning_rate),
                Optimizer::Gradient => {
                    for (p, g) in params.iter_mut().zip(grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
            }
            poly = match Polygon::from_flat(&params) {
                Ok(p) => p,
                Err(e) => return Err(abort(trace, e)),
            };
        }
        let loss = match loss_at(&poly, lambda) {
            Ok(r) => r.loss.value,
            Err(e) => return Err(abort(trace, e)),
        };
        trace.records.push(EpochRecord {
            epoch,
            lambda,
            loss,
            iou: record_iou(&poly, gt, cfg.iou_resolution),
            self_intersecting: is_self_intersecting(&poly),
        });
        trace.final_polygon = poly.clone();
    }
    Ok(trace)
}

/// How the initialization is derived from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    None,
    Translate { dx: f64, dy: f64 },
    /// Uniform scale about the vertex mean.
    Scale(f64),
    /// Cyclic relabeling: vertex `i` starts at ground-truth vertex `i + k`.
    ShiftIndex(usize),
    /// Independent Gaussian noise on every coordinate.
    Jitter { sigma: f64 },
}

impl Perturbation {
    pub const JITTER_SIGMA: f64 = 0.02;

    pub fn apply(&self, gt: &Polygon, seed: u64) -> Result<Polygon> {
        match *self {
            Perturbation::None => Ok(gt.clone()),
            Perturbation::Translate { dx, dy } => Ok(gt.translate(Point2::new(dx, dy))),
            Perturbation::Scale(s) => Ok(gt.scale_about(centroid(gt), s)),
            Perturbation::ShiftIndex(k) => Ok(gt.rotate_indices(k % gt.len())),
            Perturbation::Jitter { sigma } => {
                let normal = Normal::new(0.0, sigma)
                    .map_err(|e| Error::InvalidConfig(format!("jitter sigma {sigma}: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let flat: Vec<f64> = gt.to_flat().into_iter().map(|c| c + normal.sample(&mut rng)).collect();
                Polygon::from_flat(&flat)
            }
        }
    }
}

/// IoU above which a fit counts as converged.
pub const CONVERGED_IOU: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub fixtures: usize,
    pub failed: usize,
    pub mean_final_iou: f64,
    pub mean_initial_iou: f64,
    pub converged: usize,
    pub mean_convergence_epoch: Option<f64>,
    pub self_intersecting_epochs: usize,
}

/// Fits every ground truth under every variant and summarizes per variant.
///
/// Fixture `i` is perturbed with seed `cfg.seed + i`. Failed fits count as
/// IoU 0. An empty fixture set yields an empty table.
pub fn compare_losses(gts: &[Polygon], perturbation: Perturbation, variants: &[(String, FitConfig)]) -> Vec<ComparisonRow> {
    if gts.is_empty() {
        return Vec::new();
    }
    variants
        .iter()
        .map(|(name, cfg)| {
            let outcomes: Vec<Option<FitTrace>> = gts
                .par_iter()
                .enumerate()
                .map(|(i, gt)| {
                    let init = perturbation.apply(gt, cfg.seed.wrapping_add(i as u64)).ok()?;
                    fit_polygon(&init, gt, cfg).ok()
                })
                .collect();
            summarize(name, &outcomes)
        })
        .collect()
}

fn summarize(name: &str, outcomes: &[Option<FitTrace>]) -> ComparisonRow {
    let n = outcomes.len() as f64;
    let traces: Vec<&FitTrace> = outcomes.iter().flatten().collect();
    let epochs: Vec<usize> = traces.iter().filter_map(|t| t.convergence_epoch(CONVERGED_IOU)).collect();
    ComparisonRow {
        variant: name.to_string(),
        fixtures: outcomes.len(),
        failed: outcomes.len() - traces.len(),
        mean_final_iou: traces.iter().map(|t| t.final_iou()).sum::<f64>() / n,
        mean_initial_iou: traces.iter().map(|t| t.initial_iou).sum::<f64>() / n,
        converged: epochs.len(),
        mean_convergence_epoch: (!epochs.is_empty())
            .then(|| epochs.iter().sum::<usize>() as f64 / epochs.len() as f64),
        self_intersecting_epochs: traces.iter().map(|t| t.self_intersecting_epochs()).sum(),
    }
}

/// Regression, polar and cartesian variants of a base configuration.
pub fn standard_variants(base: &FitConfig) -> Vec<(String, FitConfig)> {
    vec![
        ("regression".to_string(), base.regression()),
        ("polar".to_string(), base.with_iou(IouKind::Polar)),
        ("cartesian".to_string(), base.with_iou(IouKind::Cartesian)),
    ]
}

/// Ground-truth polygons with `n` vertices in normalized image coordinates,
/// taken from the synthetic shape fixtures by contour extraction and adaptive
/// simplification.
pub fn standard_fixtures(n: usize) -> Result<Vec<Polygon>> {
    fixture_set()
        .iter()
        .map(|shape| {
            let set = extract_contours(&shape.mask);
            let chain = set.chains.values().next().ok_or(Error::TooFewPoints { needed: n, got: 0 })?;
            let poly = adaptive_simplify(chain, n)?;
            let (w, h) = (shape.mask.width() as f64, shape.mask.height() as f64);
            let scaled = poly.vertices().iter().map(|p| Point2::new((p.x + 0.5) / w, (p.y + 0.5) / h)).collect();
            Polygon::new(scaled)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::from_xy(&[(0.3, 0.3), (0.7, 0.3), (0.7, 0.7), (0.3, 0.7)]).unwrap()
    }

    fn hexagon() -> Polygon {
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                (0.5 + 0.25 * a.cos(), 0.5 + 0.2 * a.sin())
            })
            .collect();
        Polygon::from_xy(&pts).unwrap()
    }

    #[test]
    fn identical_init_stays_put() {
        let gt = hexagon();
        let trace = fit_polygon(&gt, &gt, &FitConfig::default()).unwrap();
        assert_eq!(trace.records.len(), 80);
        assert!(trace.records.iter().all(|r| r.loss == 0.0));
        assert_eq!(trace.final_polygon, gt);
        assert_eq!(trace.final_iou(), 1.0);
    }

    #[test]
    fn translated_regression_converges() {
        let gt = hexagon();
        let init = Perturbation::Translate { dx: 0.05, dy: 0.05 }.apply(&gt, 0).unwrap();
        let cfg = FitConfig::default().regression();
        let trace = fit_polygon(&init, &gt, &cfg).unwrap();
        assert!(trace.final_iou() > 0.99, "{}", trace.final_iou());
        assert!(trace.final_loss() <= trace.initial_loss);
    }

    #[test]
    fn plain_gradient_descends() {
        let gt = square();
        let init = Perturbation::Scale(1.2).apply(&gt, 0).unwrap();
        let cfg = FitConfig { optimizer: Optimizer::Gradient, learning_rate: 0.05, ..FitConfig::default() };
        let trace = fit_polygon(&init, &gt, &cfg).unwrap();
        assert!(trace.final_loss() < trace.initial_loss);
    }

    #[test]
    fn traces_are_deterministic() {
        let gt = hexagon();
        let init = Perturbation::Jitter { sigma: Perturbation::JITTER_SIGMA }.apply(&gt, 7).unwrap();
        assert_eq!(init, Perturbation::Jitter { sigma: 0.02 }.apply(&gt, 7).unwrap());
        assert_ne!(init, Perturbation::Jitter { sigma: 0.02 }.apply(&gt, 8).unwrap());
        let cfg = FitConfig::default();
        let a = fit_polygon(&init, &gt, &cfg).unwrap();
        let b = fit_polygon(&init, &gt, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shift_index_relabels() {
        let gt = square();
        let init = Perturbation::ShiftIndex(1).apply(&gt, 0).unwrap();
        assert_eq!(init.vertices()[0], gt.vertices()[1]);
        assert_eq!(Perturbation::ShiftIndex(4).apply(&gt, 0).unwrap(), gt);
    }

    #[test]
    fn mismatched_counts_abort() {
        let err = fit_polygon(&square(), &hexagon(), &FitConfig::default()).unwrap_err();
        assert!(matches!(err.source, Error::ShapeMismatch(_)));
        assert!(err.partial.records.is_empty());
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = FitConfig { epochs: 0, ..FitConfig::default() };
        assert!(bad.validate().is_err());
        let bad = FitConfig { learning_rate: 0.0, ..FitConfig::default() };
        assert!(bad.validate().is_err());
        let bad = FitConfig { lambda: LambdaMode::Fixed(1.5), ..FitConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_has_header_and_one_row_per_epoch() {
        let gt = square();
        let cfg = FitConfig { epochs: 3, ..FitConfig::default() };
        let trace = fit_polygon(&gt, &gt, &cfg).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,lambda,loss,iou,self_intersecting");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,1.0,0.0,1.0,false"));
    }

    #[test]
    fn comparison_edge_cases() {
        let variants = standard_variants(&FitConfig { epochs: 5, ..FitConfig::default() });
        assert!(compare_losses(&[], Perturbation::None, &variants).is_empty());
        let rows = compare_losses(&[hexagon()], Perturbation::None, &variants);
        assert_eq!(rows.len(), 3);
        for row in rows {
            assert_eq!(row.mean_final_iou, 1.0);
            assert_eq!(row.mean_convergence_epoch, Some(0.0));
        }
    }

    #[test]
    fn convergence_epoch_reads_tail() {
        let rec = |epoch, iou| EpochRecord { epoch, lambda: 1.0, loss: 0.0, iou, self_intersecting: false };
        let trace = FitTrace {
            initial_loss: 1.0,
            initial_iou: 0.5,
            records: vec![rec(1, 0.96), rec(2, 0.9), rec(3, 0.97), rec(4, 0.99)],
            final_polygon: square(),
        };
        assert_eq!(trace.convergence_epoch(0.95), Some(3));
        assert_eq!(trace.convergence_epoch(0.995), None);
        assert_eq!(trace.convergence_epoch(0.1), Some(0));
    }
}
