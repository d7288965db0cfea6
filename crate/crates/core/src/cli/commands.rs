//! `losses`, `fit` and `eval`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use super::{print_report, user_error, CliResult, GlobalArgs};
use crate::eval::{evaluate, EvalConfig};
use crate::fitter::{fit_polygon, FitConfig, LambdaMode, Optimizer, Perturbation, CONVERGED_IOU};
use crate::geometry::DEFAULT_RESOLUTION;
use crate::io::{read_polygon, to_json_bytes, write_atomic, write_polygon, AnnotationFile};
use crate::losses::{
    combined_localization_loss, iou_loss, lambda_schedule, logcosh_loss, IouKind, LossConfig, LossReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Logcosh,
    Polar,
    Cartesian,
    /// Weighted regression plus IoU loss.
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IouArg {
    Polar,
    Cartesian,
}

impl From<IouArg> for IouKind {
    fn from(k: IouArg) -> Self {
        match k {
            IouArg::Polar => IouKind::Polar,
            IouArg::Cartesian => IouKind::Cartesian,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LossesArgs {
    /// Predicted polygon file.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth polygon file.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = LossKind::Cartesian)]
    pub kind: LossKind,
    /// IoU term of the combined loss.
    #[arg(long, value_enum, default_value_t = IouArg::Cartesian)]
    pub iou: IouArg,
    /// 1-based epoch; sets lambda from the schedule.
    #[arg(long, allow_negative_numbers = true)]
    pub epoch: Option<i64>,
    /// Explicit lambda for the combined loss.
    #[arg(long, conflicts_with = "epoch")]
    pub lambda: Option<f64>,
}

pub fn losses(a: &LossesArgs, g: &GlobalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let pred = read_polygon(&a.pred)?;
    let gt = read_polygon(&a.gt)?;
    let cfg = LossConfig { iou_kind: a.iou.into(), ..LossConfig::default() };
    let lambda = match (a.epoch, a.lambda) {
        (Some(e), _) => Some(lambda_schedule(e, &cfg.schedule)?),
        (None, l) => l,
    };
    let mut skipped = None;
    let report: LossReport = match a.kind {
        LossKind::Logcosh => logcosh_loss(&pred, &gt)?,
        LossKind::Polar => iou_loss(IouKind::Polar, &pred, &gt)?,
        LossKind::Cartesian => iou_loss(IouKind::Cartesian, &pred, &gt)?,
        LossKind::Combined => {
            let l = lambda.ok_or_else(|| user_error("the combined loss needs --epoch or --lambda"))?;
            let r = combined_localization_loss(&pred, &gt, l, &cfg)?;
            skipped = Some(r.iou_skipped);
            r.loss
        }
    };
    let kind = a.kind.to_possible_value().expect("no skipped variants");
    let mut out = json!({ "kind": kind.get_name(), "value": report.value, "gradient": report.gradient });
    if let Some(l) = lambda {
        out["lambda"] = json!(l);
    }
    if let Some(s) = skipped {
        out["iou_skipped"] = json!(s);
    }
    print_report(stdout, g.format, &out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PerturbArg {
    None,
    Translate,
    Scale,
    ShiftIndex,
    Jitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitLoss {
    /// Log-cosh only, lambda fixed at 1.
    Regression,
    Polar,
    Cartesian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Gradient,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Ground-truth polygon file, normalized coordinates.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = PerturbArg::ShiftIndex)]
    pub perturb: PerturbArg,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub dx: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub dy: f64,
    #[arg(long, default_value_t = 1.2)]
    pub factor: f64,
    #[arg(long, default_value_t = 1)]
    pub shift: usize,
    #[arg(long, default_value_t = Perturbation::JITTER_SIGMA)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = FitLoss::Cartesian)]
    pub loss: FitLoss,
    #[arg(long, default_value_t = 80)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1)]
    pub steps_per_epoch: usize,
}

impl FitArgs {
    fn perturbation(&self) -> Perturbation {
        match self.perturb {
            PerturbArg::None => Perturbation::None,
            PerturbArg::Translate => Perturbation::Translate { dx: self.dx, dy: self.dy },
            PerturbArg::Scale => Perturbation::Scale(self.factor),
            PerturbArg::ShiftIndex => Perturbation::ShiftIndex(self.shift),
            PerturbArg::Jitter => Perturbation::Jitter { sigma: self.sigma },
        }
    }

    fn config(&self, seed: u64) -> FitConfig {
        let base = FitConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            optimizer: match self.optimizer {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::Gradient => Optimizer::Gradient,
            },
            steps_per_epoch: self.steps_per_epoch,
            seed,
            ..FitConfig::default()
        };
        match self.loss {
            FitLoss::Regression => FitConfig { lambda: LambdaMode::Fixed(1.0), ..base },
            FitLoss::Polar => base.with_iou(IouKind::Polar),
            FitLoss::Cartesian => base.with_iou(IouKind::Cartesian),
        }
    }
}

pub fn fit(a: &FitArgs, g: &GlobalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let gt = read_polygon(&a.gt)?;
    let cfg = a.config(g.seed);
    cfg.validate()?;
    let init = a.perturbation().apply(&gt, g.seed)?;
    let (trace, failure) = match fit_polygon(&init, &gt, &cfg) {
        Ok(t) => (t, None),
        Err(e) => (e.partial.clone(), Some(e)),
    };
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_atomic(&g.output_dir.join("trace.csv"), &csv)?;
    write_polygon(&g.output_dir.join("init_polygon.json"), &init)?;
    write_polygon(&g.output_dir.join("final_polygon.json"), &trace.final_polygon)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let out = json!({
        "epochs": trace.records.len(),
        "initial_loss": trace.initial_loss,
        "final_loss": trace.final_loss(),
        "initial_iou": trace.initial_iou,
        "final_iou": trace.final_iou(),
        "convergence_epoch": trace.convergence_epoch(CONVERGED_IOU),
        "self_intersecting_epochs": trace.self_intersecting_epochs(),
    });
    print_report(stdout, g.format, &out)
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Detection annotation file; a missing confidence counts as 1.
    #[arg(long)]
    pub dets: PathBuf,
    /// Ground-truth annotation file.
    #[arg(long)]
    pub gts: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.75])]
    pub thresholds: Vec<f64>,
    /// Raster cells along the longer side of each compared pair.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
}

pub fn eval(a: &EvalArgs, g: &GlobalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if a.resolution == 0 {
        return Err(user_error("resolution must be >= 1"));
    }
    let dets = AnnotationFile::read(&a.dets)?.detections();
    let gts = AnnotationFile::read(&a.gts)?.annotations();
    let cfg = EvalConfig { thresholds: a.thresholds.clone(), resolution: a.resolution };
    let report = evaluate(&dets, &gts, &cfg)?;
    write_atomic(&g.output_dir.join("eval.json"), &to_json_bytes(&report))?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_atomic(&g.output_dir.join("eval.csv"), &csv)?;
    let mean: serde_json::Map<String, serde_json::Value> = report
        .summaries
        .iter()
        .map(|s| (format!("AP{}", (s.threshold * 100.0).round()), json!(s.mean_ap)))
        .collect();
    let out = json!({ "images": report.images, "mean_ap": mean });
    print_report(stdout, g.format, &out)
}
