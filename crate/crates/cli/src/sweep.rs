//! `sweep`: trains over a width or epsilon grid and aggregates final metrics.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use crate::args::{AxisArg, SweepArgs, TrainFlags};
use crate::exit::{Exit, CONFIG_ERROR};
use crate::run::{self, RunSummary};
use crate::svg::{self, Chart, Series};

pub const DEFAULT_WIDTHS: [f64; 6] = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
pub const DEFAULT_EPSILONS: [f64; 8] = [0.0, 0.001, 0.005, 0.01, 0.02, 0.04, 0.08, 0.16];
pub const SWEEP_HEADER: &str =
    "axis_value,seed,final_error,final_loss,lambda_min_last,drift_last,status";
pub const SUMMARY_HEADER: &str = "axis_value,runs_ok,mean_error,std_error,mean_loss";

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub status: String,
}

fn axis_name(axis: AxisArg) -> &'static str {
    match axis {
        AxisArg::Width => "width",
        AxisArg::Epsilon => "epsilon",
    }
}

fn fmt_value(axis: AxisArg, v: f64) -> String {
    match axis {
        AxisArg::Width => format!("{}", v as usize),
        AxisArg::Epsilon => format!("{v}"),
    }
}

pub fn grid(args: &SweepArgs) -> Result<Vec<f64>> {
    let values = if args.values.is_empty() {
        match args.axis {
            AxisArg::Width => DEFAULT_WIDTHS.to_vec(),
            AxisArg::Epsilon => DEFAULT_EPSILONS.to_vec(),
        }
    } else {
        args.values.clone()
    };
    let bad = |msg: String| -> anyhow::Error { Exit::new(CONFIG_ERROR, msg).into() };
    if values
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(bad(format!(
            "sweep values must be strictly increasing: {values:?}"
        )));
    }
    for &v in &values {
        let ok = match args.axis {
            AxisArg::Width => v >= 1.0 && v.fract() == 0.0,
            AxisArg::Epsilon => v.is_finite() && (0.0..1.0).contains(&v),
        };
        if !ok {
            return Err(bad(format!("invalid {} value {v}", axis_name(args.axis))));
        }
    }
    if args.seeds_per_point == 0 {
        return Err(bad("seeds-per-point must be at least 1".into()));
    }
    Ok(values)
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn row_csv(axis: AxisArg, r: &SweepRow) -> String {
    let s = r.summary.as_ref();
    format!(
        "{},{},{},{},{},{},{}",
        fmt_value(axis, r.axis_value),
        r.seed,
        csv_opt(s.map(|s| s.final_certified_error)),
        csv_opt(s.map(|s| s.final_loss)),
        csv_opt(s.and_then(|s| s.lambda_min_last)),
        csv_opt(s.map(|s| s.final_drift)),
        r.status
    )
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-value aggregates over completed runs: `(value, ok, mean err, std err, mean loss)`.
pub fn aggregate(values: &[f64], rows: &[SweepRow]) -> Vec<(f64, usize, f64, f64, f64)> {
    values
        .iter()
        .map(|&v| {
            let done: Vec<&RunSummary> = rows
                .iter()
                .filter(|r| r.axis_value == v && r.status == "completed")
                .filter_map(|r| r.summary.as_ref())
                .collect();
            let errs: Vec<f64> = done.iter().map(|s| s.final_certified_error).collect();
            let losses: Vec<f64> = done.iter().map(|s| s.final_loss).collect();
            let (me, se) = mean_std(&errs);
            (v, done.len(), me, se, mean_std(&losses).0)
        })
        .collect()
}

fn run_one(base: &TrainFlags, axis: AxisArg, value: f64, seed: u64, root: &Path) -> SweepRow {
    let mut flags = base.clone();
    match axis {
        AxisArg::Width => flags.width = value as usize,
        AxisArg::Epsilon => flags.epsilon = value,
    }
    flags.seed = seed;
    let dir = root.join("runs").join(format!(
        "{}-{}-s{seed}",
        axis_name(axis),
        fmt_value(axis, value)
    ));
    match run::execute(&flags, &dir) {
        Ok(s) => {
            let status = match s.status {
                ibplab_core::RunStatus::Completed => "completed".to_string(),
                ibplab_core::RunStatus::Diverged { step, .. } => format!("diverged@{step}"),
            };
            SweepRow {
                axis_value: value,
                seed,
                summary: Some(s),
                status,
            }
        }
        Err(e) => {
            log::error!("run {} failed: {e:#}", dir.display());
            SweepRow {
                axis_value: value,
                seed,
                summary: None,
                status: "error".into(),
            }
        }
    }
}

pub fn execute(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let values = grid(args)?;
    run::train_config(&args.flags)?;
    // fail on a bad dataset before spawning any run
    run::load_dataset(&args.flags.data)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let jobs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| (0..args.seeds_per_point as u64).map(move |k| (v, k)))
        .map(|(v, k)| (v, args.flags.seed + k))
        .collect();
    let workers = args
        .workers
        .unwrap_or_else(rayon::current_num_threads)
        .clamp(1, jobs.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, seed)| run_one(&args.flags, args.axis, v, seed, &args.out))
            .collect()
    });

    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        csv.push_str(&row_csv(args.axis, r));
        csv.push('\n');
    }
    std::fs::write(args.out.join("sweep.csv"), csv)?;

    let agg = aggregate(&values, &rows);
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for &(v, ok, me, se, ml) in &agg {
        let _ = writeln!(summary, "{},{ok},{me},{se},{ml}", fmt_value(args.axis, v));
    }
    std::fs::write(args.out.join("sweep_summary.csv"), summary)?;

    let log_x = args.axis == AxisArg::Width;
    let chart = Chart {
        title: format!("final certified error vs {}", axis_name(args.axis)),
        x_label: axis_name(args.axis).into(),
        y_label: "certified error".into(),
        x_log10: log_x,
        y_log10: false,
        series: vec![Series {
            name: format!("mean over {} seed(s)", args.seeds_per_point),
            points: agg
                .iter()
                .map(|&(v, _, me, _, _)| (if log_x { v.log10() } else { v }, me))
                .collect(),
            errors: Some(agg.iter().map(|a| a.3).collect()),
            dashed: false,
        }],
    };
    std::fs::write(args.out.join("sweep.svg"), svg::render(&chart))?;
    Ok(rows)
}
