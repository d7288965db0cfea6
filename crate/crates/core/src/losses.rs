//! Loss terms for polygon regression and grid-level detection, with analytic
//! gradients with respect to the predicted vertex coordinates.
//!
//! Gradients are laid out as `[dx0, dy0, dx1, dy1, ...]` in the predicted
//! polygon's own vertex order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, is_self_intersecting, signed_area2, theta_order, Point2, Polygon};
use crate::grid::{GridTarget, GridTensor};

/// Scalar loss plus its gradient with respect to the predicted vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl LossReport {
    fn zero(n: usize) -> Self {
        Self { value: 0.0, gradient: vec![0.0; 2 * n] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Polar,
    Cartesian,
}

/// `lambda = clamp(a + b / epoch, floor, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub floor: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { floor: 0.2, a: 0.7822, b: 0.3429 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_noobj: f64,
    pub iou_kind: IouKind,
    pub schedule: LambdaSchedule,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_noobj: 0.5, iou_kind: IouKind::Cartesian, schedule: LambdaSchedule::default() }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(s.floor > 0.0 && s.floor <= 1.0) {
            return Err(Error::InvalidConfig(format!("schedule floor {} not in (0, 1]", s.floor)));
        }
        if !s.a.is_finite() || !s.b.is_finite() {
            return Err(Error::InvalidConfig("schedule constants must be finite".into()));
        }
        if self.lambda_noobj.is_nan() || self.lambda_noobj < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda_noobj {} < 0", self.lambda_noobj)));
        }
        Ok(())
    }
}

fn check_counts(pred: &Polygon, gt: &Polygon) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "predicted polygon has {} vertices, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// `log(cosh(x))` without overflow: `|x| + log1p(exp(-2|x|)) - log 2`.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mean log-cosh of the coordinate residuals, vertex `i` matched to vertex `i`.
pub fn logcosh_loss(pred: &Polygon, gt: &Polygon) -> Result<LossReport> {
    check_counts(pred, gt)?;
    let p = pred.to_flat();
    let g = gt.to_flat();
    let m = p.len() as f64;
    let mut value = 0.0;
    let gradient = p
        .iter()
        .zip(&g)
        .map(|(a, b)| {
            let r = a - b;
            value += log_cosh(r);
            r.tanh() / m
        })
        .collect();
    Ok(LossReport { value: value / m, gradient })
}

/// Vertices of both polygons sorted by angle about `center` and paired by
/// sorted position. Returns `(pred_index, gt_index)` per slot.
fn angular_matching(pred: &Polygon, gt: &Polygon, center: Point2) -> Result<Vec<(usize, usize)>> {
    let op = theta_order(pred.vertices(), center)?;
    let og = theta_order(gt.vertices(), center)?;
    Ok(op.into_iter().zip(og).collect())
}

/// Log ratio of summed max to summed min radial distances of angle-matched
/// vertices about `center`.
///
/// At a tie the predicted vertex takes the max branch. When every pair ties
/// the loss sits at its minimum and the zero subgradient is returned.
pub fn polar_iou_loss(pred: &Polygon, gt: &Polygon, center: Point2) -> Result<LossReport> {
    check_counts(pred, gt)?;
    let pairs = angular_matching(pred, gt, center)?;
    let mut sum_max = 0.0;
    let mut sum_min = 0.0;
    let mut slots = Vec::with_capacity(pairs.len());
    for &(ip, ig) in &pairs {
        let dp = pred.vertices()[ip].distance(&center);
        let dg = gt.vertices()[ig].distance(&center);
        let pred_is_max = dp >= dg;
        if pred_is_max {
            sum_max += dp;
            sum_min += dg;
        } else {
            sum_max += dg;
            sum_min += dp;
        }
        slots.push((ip, dp, pred_is_max));
    }
    let value = (sum_max / sum_min).ln();
    if value <= 0.0 {
        return Ok(LossReport::zero(pred.len()));
    }
    let mut gradient = vec![0.0; 2 * pred.len()];
    for (ip, dp, pred_is_max) in slots {
        let p = pred.vertices()[ip];
        let w = if pred_is_max { 1.0 / sum_max } else { -1.0 / sum_min };
        gradient[2 * ip] = w * (p.x - center.x) / dp;
        gradient[2 * ip + 1] = w * (p.y - center.y) / dp;
    }
    Ok(LossReport { value, gradient })
}

pub const MIN_POLYGON_AREA: f64 = 1e-12;

/// Log ratio of the areas of the max- and min-polygons built from
/// angle-matched vertex pairs about the ground-truth center.
///
/// Each slot contributes the farther of its two vertices to the max-polygon
/// and the nearer one to the min-polygon; a predicted vertex tied with its
/// ground-truth partner goes to the max-polygon. Areas use the absolute
/// shoelace value and the result is clamped at zero.
pub fn cartesian_iou_loss(pred: &Polygon, gt: &Polygon) -> Result<LossReport> {
    check_counts(pred, gt)?;
    let center = centroid(gt);
    let pairs = angular_matching(pred, gt, center)?;
    let n = pairs.len();
    let mut max_poly = Vec::with_capacity(n);
    let mut min_poly = Vec::with_capacity(n);
    let mut pred_is_max = Vec::with_capacity(n);
    for &(ip, ig) in &pairs {
        let p = pred.vertices()[ip];
        let g = gt.vertices()[ig];
        if p.distance(&center) >= g.distance(&center) {
            max_poly.push(p);
            min_poly.push(g);
            pred_is_max.push(true);
        } else {
            max_poly.push(g);
            min_poly.push(p);
            pred_is_max.push(false);
        }
    }
    let s_max = signed_area2(&max_poly) / 2.0;
    let s_min = signed_area2(&min_poly) / 2.0;
    if s_min.abs() < MIN_POLYGON_AREA {
        return Err(Error::DegenerateMinPolygon(s_min.abs()));
    }
    let value = (s_max.abs() / s_min.abs()).ln();
    if value <= 0.0 {
        return Ok(LossReport::zero(pred.len()));
    }
    let mut gradient = vec![0.0; 2 * n];
    for (slot, &(ip, _)) in pairs.iter().enumerate() {
        let (poly, scale) = if pred_is_max[slot] {
            (&max_poly, 1.0 / s_max)
        } else {
            (&min_poly, -1.0 / s_min)
        };
        let prev = poly[(slot + n - 1) % n];
        let next = poly[(slot + 1) % n];
        // d(signed area)/d(x_i, y_i)
        gradient[2 * ip] = scale * 0.5 * (next.y - prev.y);
        gradient[2 * ip + 1] = scale * 0.5 * (prev.x - next.x);
    }
    Ok(LossReport { value, gradient })
}

/// The configured IoU loss, using the ground-truth center for the polar form.
pub fn iou_loss(kind: IouKind, pred: &Polygon, gt: &Polygon) -> Result<LossReport> {
    match kind {
        IouKind::Polar => polar_iou_loss(pred, gt, centroid(gt)),
        IouKind::Cartesian => cartesian_iou_loss(pred, gt),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub loss: LossReport,
    /// The prediction self-intersected, so only the regression term was used.
    pub iou_skipped: bool,
}

/// `lambda * logcosh + (1 - lambda) * iou`, gradients combined the same way.
/// A self-intersecting prediction falls back to `lambda = 1`.
pub fn combined_localization_loss(
    pred: &Polygon,
    gt: &Polygon,
    lambda: f64,
    cfg: &LossConfig,
) -> Result<LocalizationReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} not in [0, 1]")));
    }
    check_counts(pred, gt)?;
    if lambda == 1.0 {
        return Ok(LocalizationReport { loss: logcosh_loss(pred, gt)?, iou_skipped: false });
    }
    if is_self_intersecting(pred) {
        return Ok(LocalizationReport { loss: logcosh_loss(pred, gt)?, iou_skipped: true });
    }
    let iou = iou_loss(cfg.iou_kind, pred, gt)?;
    if lambda == 0.0 {
        return Ok(LocalizationReport { loss: iou, iou_skipped: false });
    }
    let reg = logcosh_loss(pred, gt)?;
    let value = lambda * reg.value + (1.0 - lambda) * iou.value;
    let gradient = reg
        .gradient
        .iter()
        .zip(&iou.gradient)
        .map(|(r, i)| lambda * r + (1.0 - lambda) * i)
        .collect();
    Ok(LocalizationReport { loss: LossReport { value, gradient }, iou_skipped: false })
}

/// Regression weight for a 1-based epoch.
pub fn lambda_schedule(epoch: i64, schedule: &LambdaSchedule) -> Result<f64> {
    if epoch < 1 {
        return Err(Error::BadEpoch(epoch));
    }
    let raw = schedule.a + schedule.b / epoch as f64;
    Ok(raw.clamp(schedule.floor, 1.0))
}

/// Squared error of class probabilities, summed over object slots only.
pub fn classification_loss(pred: &[Vec<f64>], target: &[Vec<f64>], obj_mask: &[bool]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != obj_mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions, {} targets, {} mask entries",
            pred.len(),
            target.len(),
            obj_mask.len()
        )));
    }
    let mut total = 0.0;
    for ((p, t), &obj) in pred.iter().zip(target).zip(obj_mask) {
        if p.len() != t.len() {
            return Err(Error::ShapeMismatch(format!("{} vs {} classes", p.len(), t.len())));
        }
        if obj {
            total += p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    Ok(total)
}

/// Squared confidence error; responsible slots target 1, the rest target 0
/// and are down-weighted by `lambda_noobj`.
pub fn confidence_loss(pred: &[f64], responsible: &[bool], lambda_noobj: f64) -> Result<f64> {
    if pred.len() != responsible.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} confidences, {} responsibility flags",
            pred.len(),
            responsible.len()
        )));
    }
    let (mut obj, mut noobj) = (0.0, 0.0);
    for (&c, &r) in pred.iter().zip(responsible) {
        if r {
            obj += (c - 1.0).powi(2);
        } else {
            noobj += c * c;
        }
    }
    Ok(obj + lambda_noobj * noobj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub classification: f64,
    pub confidence: f64,
    pub localization: f64,
    pub total: f64,
    pub lambda: f64,
    /// Responsible slots whose IoU term was skipped for self-intersection.
    pub iou_skipped: usize,
}

/// Classification + confidence + localization over a batch.
///
/// Predictions are activated grids: confidence and class channels already
/// hold probabilities. Vertex channels are compared in grid units.
pub fn total_loss(
    preds: &[GridTensor],
    targets: &[GridTarget],
    epoch: i64,
    cfg: &LossConfig,
) -> Result<TotalLoss> {
    cfg.validate()?;
    if preds.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let lambda = lambda_schedule(epoch, &cfg.schedule)?;
    let mut out = TotalLoss {
        classification: 0.0,
        confidence: 0.0,
        localization: 0.0,
        total: 0.0,
        lambda,
        iou_skipped: 0,
    };
    for (pred, target) in preds.iter().zip(targets) {
        if !pred.same_shape(&target.values) {
            return Err(Error::ShapeMismatch("prediction and target grids differ".into()));
        }
        let layout = pred.layout();
        let mut class_pred = Vec::with_capacity(pred.slot_count());
        let mut class_target = Vec::with_capacity(pred.slot_count());
        let mut conf = Vec::with_capacity(pred.slot_count());
        for slot in 0..pred.slot_count() {
            let p = pred.slot(slot);
            let t = target.values.slot(slot);
            class_pred.push(p[layout.class_range()].to_vec());
            class_target.push(t[layout.class_range()].to_vec());
            conf.push(p[layout.confidence_channel()]);
            if target.responsibility[slot] {
                let pp = Polygon::from_flat(&p[layout.vertex_range()])?;
                let gp = Polygon::from_flat(&t[layout.vertex_range()])?;
                let r = combined_localization_loss(&pp, &gp, lambda, cfg)?;
                out.localization += r.loss.value;
                out.iou_skipped += r.iou_skipped as usize;
            }
        }
        out.classification += classification_loss(&class_pred, &class_target, &target.responsibility)?;
        out.confidence += confidence_loss(&conf, &target.responsibility, cfg.lambda_noobj)?;
    }
    out.total = out.classification + out.confidence + out.localization;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error};
    use crate::shapes::random_star;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(c: f64, half: f64) -> Polygon {
        Polygon::from_xy(&[(c - half, c - half), (c + half, c - half), (c + half, c + half), (c - half, c + half)])
            .unwrap()
    }

    #[test]
    fn logcosh_examples() {
        let gt = square(0.5, 0.2);
        let r = logcosh_loss(&gt, &gt).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.gradient.iter().all(|&g| g == 0.0));
        // small-residual and large-residual asymptotes
        assert!((log_cosh(0.01) - 0.01f64.powi(2) / 2.0).abs() < 1e-9);
        assert!((log_cosh(50.0) - (50.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!(log_cosh(1e6).is_finite());

        let mut shifted = gt.to_flat();
        shifted[3] += 0.01;
        let r = logcosh_loss(&Polygon::from_flat(&shifted).unwrap(), &gt).unwrap();
        assert!((r.value * 8.0 - log_cosh(0.01)).abs() < 1e-15);
        assert!((r.gradient[3] - 0.01f64.tanh() / 8.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let tri = Polygon::from_xy(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert!(matches!(logcosh_loss(&tri, &square(0.5, 0.2)), Err(Error::ShapeMismatch(_))));
        assert!(matches!(cartesian_iou_loss(&tri, &square(0.5, 0.2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn concentric_squares() {
        let outer = square(0.0, 1.0);
        let inner = square(0.0, 0.5);
        let c = Point2::new(0.0, 0.0);
        assert!((polar_iou_loss(&outer, &inner, c).unwrap().value - 2f64.ln()).abs() < 1e-12);
        assert!((cartesian_iou_loss(&outer, &inner).unwrap().value - 4f64.ln()).abs() < 1e-12);
        assert_eq!(polar_iou_loss(&outer, &outer, c).unwrap().value, 0.0);
        assert_eq!(cartesian_iou_loss(&outer, &outer).unwrap().value, 0.0);
    }

    #[test]
    fn vertex_at_center_errors() {
        let gt = square(0.0, 1.0);
        let pred = Polygon::from_xy(&[(0.0, 0.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert!(matches!(cartesian_iou_loss(&pred, &gt), Err(Error::VertexAtCenter { .. })));
        assert!(matches!(
            polar_iou_loss(&pred, &gt, Point2::new(0.0, 0.0)),
            Err(Error::VertexAtCenter { .. })
        ));
    }

    #[test]
    fn degenerate_min_polygon() {
        let gt = square(0.0, 1.0);
        // predicted vertices collapse onto a line through the center
        let pred =
            Polygon::from_xy(&[(0.5, 0.5), (-0.1, 0.1), (-0.5, -0.5), (0.1, -0.1)]).unwrap();
        let pred_flat = Polygon::from_xy(&[(0.3, 0.3), (-1e-14, 1e-14), (-0.3, -0.3), (1e-14, -1e-14)]).unwrap();
        assert!(cartesian_iou_loss(&pred, &gt).is_ok());
        assert!(matches!(cartesian_iou_loss(&pred_flat, &gt), Err(Error::DegenerateMinPolygon(_))));
    }

    #[test]
    fn combined_endpoints_are_bitwise() {
        let cfg = LossConfig::default();
        let gt = square(0.5, 0.2);
        let pred = gt.scale_about(Point2::new(0.5, 0.5), 1.3).translate(Point2::new(0.01, -0.02));
        let one = combined_localization_loss(&pred, &gt, 1.0, &cfg).unwrap();
        assert_eq!(one.loss, logcosh_loss(&pred, &gt).unwrap());
        let zero = combined_localization_loss(&pred, &gt, 0.0, &cfg).unwrap();
        assert_eq!(zero.loss, cartesian_iou_loss(&pred, &gt).unwrap());
        let same = combined_localization_loss(&gt, &gt, 0.0, &cfg).unwrap();
        assert_eq!(same.loss.value, 0.0);
    }

    #[test]
    fn combined_half_on_concentric_squares() {
        let cfg = LossConfig::default();
        let outer = square(0.0, 1.0);
        let inner = square(0.0, 0.5);
        let r = combined_localization_loss(&outer, &inner, 0.5, &cfg).unwrap();
        let expected = 0.5 * logcosh_loss(&outer, &inner).unwrap().value + 0.5 * 4f64.ln();
        assert!((r.loss.value - expected).abs() < 1e-12);
    }

    #[test]
    fn self_intersecting_prediction_skips_iou() {
        let cfg = LossConfig::default();
        let gt = square(0.5, 0.2);
        let bowtie = Polygon::from_xy(&[(0.3, 0.3), (0.7, 0.7), (0.7, 0.3), (0.3, 0.7)]).unwrap();
        let r = combined_localization_loss(&bowtie, &gt, 0.3, &cfg).unwrap();
        assert!(r.iou_skipped);
        assert_eq!(r.loss, logcosh_loss(&bowtie, &gt).unwrap());
    }

    #[test]
    fn schedule_values() {
        let s = LambdaSchedule::default();
        assert_eq!(lambda_schedule(1, &s).unwrap(), 1.0);
        assert_eq!(lambda_schedule(2, &s).unwrap(), 0.95365);
        assert!((lambda_schedule(1_000_000_000, &s).unwrap() - 0.7822).abs() < 1e-9);
        assert_eq!(lambda_schedule(0, &s).unwrap_err(), Error::BadEpoch(0));
        let mut prev = 1.0;
        for e in 1..=200 {
            let l = lambda_schedule(e, &s).unwrap();
            assert!(l <= prev && (0.7822..=1.0).contains(&l));
            prev = l;
        }
    }

    #[test]
    fn classification_examples() {
        let perfect = vec![vec![1.0, 0.0]];
        assert_eq!(classification_loss(&perfect, &perfect, &[true]).unwrap(), 0.0);
        let r = classification_loss(&[vec![0.5, 0.5]], &[vec![1.0, 0.0]], &[true]).unwrap();
        assert_eq!(r, 0.5);
        let r = classification_loss(&[vec![0.3, 0.9]], &[vec![0.0, 0.0]], &[false]).unwrap();
        assert_eq!(r, 0.0);
        assert!(classification_loss(&[vec![0.3]], &[vec![0.0, 1.0]], &[true]).is_err());
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_loss(&[1.0, 0.0], &[true, false], 0.5).unwrap(), 0.0);
        assert!((confidence_loss(&[0.8], &[true], 0.5).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(confidence_loss(&[0.5], &[false], 0.5).unwrap(), 0.125);
        assert!(confidence_loss(&[0.5], &[], 0.5).is_err());
    }

    /// Star-shaped pairs whose matching is stable under small perturbations.
    fn stable_pair(rng: &mut ChaCha8Rng, n: usize) -> (Polygon, Polygon) {
        loop {
            let gt = random_star(rng, n, Point2::new(0.5, 0.5), 0.15, 0.35);
            let jitter: Vec<f64> = gt.to_flat().iter().map(|v| v + rng.random_range(-0.03..0.03)).collect();
            let pred = Polygon::from_flat(&jitter).unwrap();
            if well_separated(&pred, &gt) {
                return (pred, gt);
            }
        }
    }

    fn well_separated(pred: &Polygon, gt: &Polygon) -> bool {
        let c = centroid(gt);
        let margin = 1e-3;
        for p in [pred, gt] {
            let mut t: Vec<f64> = p
                .vertices()
                .iter()
                .map(|v| crate::geometry::theta_degrees(v.x - c.x, v.y - c.y))
                .collect();
            t.sort_by(f64::total_cmp);
            if t[0] < margin || t[t.len() - 1] > 360.0 - margin {
                return false;
            }
            if t.windows(2).any(|w| w[1] - w[0] < margin) {
                return false;
            }
        }
        let Ok(pairs) = angular_matching(pred, gt, c) else { return false };
        !is_self_intersecting(pred)
            && pairs.iter().all(|&(ip, ig)| {
                (pred.vertices()[ip].distance(&c) - gt.vertices()[ig].distance(&c)).abs() > margin
            })
    }

    fn check_gradient(f: impl Fn(&Polygon) -> LossReport, pred: &Polygon) -> f64 {
        let analytic = f(pred).gradient;
        let numeric =
            central_difference(|x| f(&Polygon::from_flat(x).unwrap()).value, &pred.to_flat(), 1e-5);
        max_relative_error(&analytic, &numeric, 1e-6)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = LossConfig::default();
        for _ in 0..20 {
            let n = rng.random_range(4..12);
            let (pred, gt) = stable_pair(&mut rng, n);
            let c = centroid(&gt);
            assert!(check_gradient(|p| logcosh_loss(p, &gt).unwrap(), &pred) < 1e-4);
            assert!(check_gradient(|p| polar_iou_loss(p, &gt, c).unwrap(), &pred) < 1e-4);
            assert!(check_gradient(|p| cartesian_iou_loss(p, &gt).unwrap(), &pred) < 1e-4);
            assert!(
                check_gradient(|p| combined_localization_loss(p, &gt, 0.6, &cfg).unwrap().loss, &pred)
                    < 1e-4
            );
        }
    }

    #[test]
    fn polar_value_is_symmetric_with_fixed_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (pred, gt) = stable_pair(&mut rng, 8);
            let c = centroid(&gt);
            let a = polar_iou_loss(&pred, &gt, c).unwrap().value;
            let b = polar_iou_loss(&gt, &pred, c).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }
}
