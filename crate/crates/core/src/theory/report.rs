//! Assembles logged trajectory points into the theory summary.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bounds::{
    certification_time, check_envelope, drift_bound, flip_fraction_bound, gram_shift_bound,
    loss_envelope, theorem_thresholds, Envelope, EnvelopeCheck, ThresholdReport, KAPPA,
};
use super::trajectory::FlipCounts;
use crate::error::{Error, Result};

/// Slack on the drift line for discrete steps.
pub const DRIFT_SLACK: f64 = 1.1;

/// One logged step. `lambda_min`, `flips` and `gram_shift` are only present
/// on instrumented steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub t: f64,
    pub loss: f64,
    pub certified_error: f64,
    pub lambda_min: Option<f64>,
    pub drift: f64,
    pub flips: Option<FlipCounts>,
    /// `||H(t) - H(0)||_2`.
    pub gram_shift: Option<f64>,
}

pub const TRAJECTORY_HEADER: &str =
    "step,t,loss,certified_error,lambda_min,drift,flips_alpha,flips_beta,flips_gamma";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrajectoryPoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            self.t,
            self.loss,
            self.certified_error,
            opt(self.lambda_min),
            self.drift,
            opt(self.flips.map(|f| f.alpha)),
            opt(self.flips.map(|f| f.beta)),
            opt(self.flips.map(|f| f.gamma)),
        )
    }

    /// Inverse of [`csv_row`](Self::csv_row); flip counts other than the
    /// three triple counts are not stored in the CSV and come back as zero.
    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!(
                "trajectory row has {} fields: {line}",
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{s}' in trajectory row")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer '{s}' in trajectory row")))
        };
        let flips = if f[6].is_empty() {
            None
        } else {
            Some(FlipCounts {
                a_plus: 0,
                a_minus: 0,
                alpha: int(f[6])?,
                beta: int(f[7])?,
                gamma: int(f[8])?,
                triples_examined: 0,
                sampled: false,
            })
        };
        Ok(Self {
            step: int(f[0])?,
            t: num(f[1])?,
            loss: num(f[2])?,
            certified_error: num(f[3])?,
            lambda_min: if f[4].is_empty() {
                None
            } else {
                Some(num(f[4])?)
            },
            drift: num(f[5])?,
            flips,
            gram_shift: None,
        })
    }
}

/// Streams trajectory rows as they are produced.
pub struct TrajectoryCsvWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryCsvWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, p: &TrajectoryPoint) -> std::io::Result<()> {
        writeln!(self.out, "{}", p.csv_row())?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Run-level constants the report needs besides the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub xi: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda0_hat: Option<f64>,
    /// SGD runs are outside the gradient-flow model.
    pub out_of_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub slack: f64,
    pub passed: bool,
    /// Largest `drift / (n t / sqrt(m))` over steps with `t > 0`.
    pub worst_ratio: f64,
    pub bound_line: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipDiagnostic {
    pub measured_fraction: f64,
    pub bound: f64,
    pub within_factor_two: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramShiftDiagnostic {
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub context: ReportContext,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub loss_trajectory: Vec<f64>,
    pub certified_error_trajectory: Vec<f64>,
    pub lambda_min_trajectory: Vec<Option<f64>>,
    pub drift_trajectory: Vec<f64>,
    pub flip_counts: Vec<Option<FlipCounts>>,
    pub lambda_floor: Option<f64>,
    /// Built with `lambda0 := 2 lambda_floor`, i.e. decay rate `lambda_floor`.
    pub envelope: Option<Envelope>,
    pub envelope_check: Option<EnvelopeCheck>,
    pub drift_check: DriftCheck,
    pub flip_diagnostic: Option<FlipDiagnostic>,
    pub gram_shift_diagnostic: Option<GramShiftDiagnostic>,
    pub thresholds: Option<ThresholdReport>,
    pub r_threshold: Option<f64>,
    pub certification_time: Option<f64>,
    pub kappa: f64,
    pub constants_note: String,
}

impl TheoryReport {
    pub fn build(points: &[TrajectoryPoint], ctx: ReportContext) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        let times: Vec<f64> = points.iter().map(|p| p.t).collect();
        let losses: Vec<f64> = points.iter().map(|p| p.loss).collect();
        let l0 = losses[0];

        let lambda_floor = points
            .iter()
            .filter_map(|p| p.lambda_min)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            });
        let (envelope, envelope_check) = match lambda_floor {
            Some(lf) if l0 > 0.0 => (
                Some(loss_envelope(l0, 2.0 * lf, &times)),
                Some(check_envelope(l0, lf, &times, &losses)),
            ),
            _ => (None, None),
        };

        let bound_line: Vec<f64> = times
            .iter()
            .map(|&t| drift_bound(ctx.n, ctx.m, t))
            .collect();
        let mut worst_ratio = 0.0f64;
        let mut drift_ok = true;
        for (p, &b) in points.iter().zip(&bound_line) {
            if p.drift > DRIFT_SLACK * b {
                drift_ok = false;
            }
            if b > 0.0 {
                worst_ratio = worst_ratio.max(p.drift / b);
            }
        }

        let last = points.last().expect("non-empty");
        let flip_diagnostic = points.iter().rev().find_map(|p| p.flips).map(|f| {
            let measured_fraction = f.indicator_fraction(ctx.m, ctx.n);
            let bound = flip_fraction_bound(last.drift, ctx.epsilon, ctx.d, ctx.xi);
            FlipDiagnostic {
                measured_fraction,
                bound,
                within_factor_two: measured_fraction <= 2.0 * bound,
            }
        });
        let gram_shift_diagnostic = points.iter().rev().find_map(|p| {
            p.gram_shift.map(|s| GramShiftDiagnostic {
                measured: s,
                bound: gram_shift_bound(p.drift, ctx.epsilon, ctx.n, ctx.d, ctx.xi, ctx.delta),
            })
        });

        let thresholds = ctx
            .lambda0_hat
            .filter(|&l| l > 0.0)
            .map(|l| theorem_thresholds(ctx.n, ctx.d, ctx.xi, ctx.epsilon, l, ctx.delta));
        let r_threshold = thresholds.as_ref().map(|t| t.r);
        let certification_time = ctx
            .lambda0_hat
            .filter(|&l| l > 0.0)
            .map(|l| certification_time(l0, l));

        Ok(Self {
            steps: points.iter().map(|p| p.step).collect(),
            loss_trajectory: losses,
            certified_error_trajectory: points.iter().map(|p| p.certified_error).collect(),
            lambda_min_trajectory: points.iter().map(|p| p.lambda_min).collect(),
            drift_trajectory: points.iter().map(|p| p.drift).collect(),
            flip_counts: points.iter().map(|p| p.flips).collect(),
            times,
            lambda_floor,
            envelope,
            envelope_check,
            drift_check: DriftCheck {
                slack: DRIFT_SLACK,
                passed: drift_ok,
                worst_ratio,
                bound_line,
            },
            flip_diagnostic,
            gram_shift_diagnostic,
            thresholds,
            r_threshold,
            certification_time,
            kappa: KAPPA,
            constants_note: "all O(.) constants set to 1".into(),
            context: ctx,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
