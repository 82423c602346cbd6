//! `train`: one run directory with the resolved configuration, the streamed
//! trajectory, instrumented points, a summary and the final parameters.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ibplab_core::model::{standard_error, standard_margins};
use ibplab_core::theory::{ReportContext, TrajectoryCsvWriter};
use ibplab_core::trainer::{DEFAULT_GD_LEARNING_RATE, DEFAULT_SGD_LEARNING_RATE};
use ibplab_core::{
    certify_dataset, init_network, train_with_sink, CertificationReport, Dataset, EpsilonSchedule,
    PerturbationSpec, RunStatus, TheoryReport, TrainConfig, TrainMode,
};
use serde::{Deserialize, Serialize};

use crate::args::{ModeArg, TrainFlags};
use crate::exit::{Exit, CONFIG_ERROR};

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const INSTRUMENTATION_FILE: &str = "instrumentation.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const THEORY_FILE: &str = "theory.json";
pub const DEFAULT_DELTA: f64 = 0.1;

/// Contents of `config.json`. `args` holds every flag needed to rerun the
/// same training with `ibplab train --config config.json --out DIR`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub args: BTreeMap<String, String>,
    pub data: PathBuf,
    pub width: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub n: usize,
    pub d: usize,
    pub width: usize,
    pub epsilon: f64,
    pub mode: TrainMode,
    pub steps_logged: usize,
    pub final_step: usize,
    pub final_t: f64,
    pub final_loss: f64,
    pub final_standard_loss: f64,
    pub final_certified_error: f64,
    pub final_standard_error: f64,
    pub final_drift: f64,
    pub lambda_min_last: Option<f64>,
    pub loss_increases: usize,
    pub warnings: Vec<String>,
    pub certification: CertificationReport,
}

pub fn train_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg = match flags.mode {
        ModeArg::GdFlow => TrainConfig::gd_flow(flags.epsilon, flags.steps),
        ModeArg::Sgd => TrainConfig::sgd(flags.epsilon, flags.epochs),
    };
    cfg.learning_rate = flags.learning_rate.unwrap_or(match flags.mode {
        ModeArg::GdFlow => DEFAULT_GD_LEARNING_RATE,
        ModeArg::Sgd => DEFAULT_SGD_LEARNING_RATE,
    });
    cfg.batch_size = flags.batch_size;
    cfg.shuffle = !flags.no_shuffle;
    cfg.seed = flags.seed;
    cfg.log_every = flags.log_every;
    cfg.gram_every = flags.gram_every;
    cfg.gram_cap = flags.gram_cap;
    cfg.gram_subsample = flags.gram_subsample;
    if let (Some(start_step), Some(end_step)) = (flags.ramp_start, flags.ramp_end) {
        cfg.epsilon_schedule = EpsilonSchedule::LinearRamp {
            start_step,
            end_step,
        };
    }
    if flags.width == 0 {
        return Err(Exit::new(CONFIG_ERROR, "width must be at least 1").into());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolved_args(flags: &TrainFlags, data: &Path) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("data", data.display().to_string());
    put("width", flags.width.to_string());
    put("epsilon", flags.epsilon.to_string());
    put(
        "mode",
        match flags.mode {
            ModeArg::GdFlow => "gd-flow",
            ModeArg::Sgd => "sgd",
        }
        .into(),
    );
    if let Some(lr) = flags.learning_rate {
        put("learning-rate", lr.to_string());
    }
    put("steps", flags.steps.to_string());
    put("epochs", flags.epochs.to_string());
    put("batch-size", flags.batch_size.to_string());
    put("no-shuffle", flags.no_shuffle.to_string());
    put("seed", flags.seed.to_string());
    put("log-every", flags.log_every.to_string());
    put("gram-every", flags.gram_every.to_string());
    if let (Some(a), Some(b)) = (flags.ramp_start, flags.ramp_end) {
        put("ramp-start", a.to_string());
        put("ramp-end", b.to_string());
    }
    put("gram-cap", flags.gram_cap.to_string());
    put("gram-subsample", flags.gram_subsample.to_string());
    m
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_cache(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(CONFIG_FILE);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Trains and writes the run directory. Divergence is reported through the
/// returned summary's status; artifacts are written either way.
pub fn execute(flags: &TrainFlags, out: &Path) -> Result<RunSummary> {
    let config = train_config(flags)?;
    let ds = load_dataset(&flags.data)?;
    let data = std::fs::canonicalize(&flags.data).unwrap_or_else(|_| flags.data.clone());
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let run_config = RunConfig {
        args: resolved_args(flags, &data),
        data,
        width: flags.width,
        train: config.clone(),
    };
    write_json(&out.join(CONFIG_FILE), &run_config)?;

    let params = init_network(flags.width, ds.dim(), flags.seed)?;
    let traj_path = out.join(TRAJECTORY_FILE);
    let mut traj = TrajectoryCsvWriter::new(BufWriter::new(
        File::create(&traj_path).with_context(|| format!("creating {}", traj_path.display()))?,
    ))?;
    let inst_path = out.join(INSTRUMENTATION_FILE);
    let mut inst = BufWriter::new(
        File::create(&inst_path).with_context(|| format!("creating {}", inst_path.display()))?,
    );
    let io_err = |path: &Path, e: std::io::Error| ibplab_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    };

    let outcome = train_with_sink(&params, &ds, &config, |entry| {
        traj.write(&entry.point)
            .map_err(|e| io_err(&traj_path, e))?;
        if entry.point.lambda_min.is_some() {
            let line = serde_json::to_string(&entry.point)
                .map_err(|e| ibplab_core::Error::Config(e.to_string()))?;
            writeln!(inst, "{line}")
                .and_then(|_| inst.flush())
                .map_err(|e| io_err(&inst_path, e))?;
        }
        Ok(())
    })?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    outcome.params.write_checkpoint(&out.join(PARAMS_FILE))?;

    let last = outcome
        .log
        .last()
        .context("training produced no log entries")?;
    let spec = PerturbationSpec::new(config.epsilon)?;
    let certification = certify_dataset(&outcome.params, &ds, spec)?;
    let summary = RunSummary {
        status: outcome.status,
        n: ds.len(),
        d: ds.dim(),
        width: flags.width,
        epsilon: config.epsilon,
        mode: config.mode,
        steps_logged: outcome.log.len(),
        final_step: last.point.step,
        final_t: last.point.t,
        final_loss: last.point.loss,
        final_standard_loss: last.standard_loss,
        final_certified_error: last.point.certified_error,
        final_standard_error: standard_error(&standard_margins(&outcome.params, &ds)?),
        final_drift: last.point.drift,
        lambda_min_last: outcome
            .log
            .entries()
            .iter()
            .rev()
            .find_map(|e| e.point.lambda_min),
        loss_increases: outcome.loss_increases,
        warnings: outcome.warnings.clone(),
        certification,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;

    // a first report without the infinite-width estimate; `theory` refines it
    if summary.lambda_min_last.is_some() {
        let ctx = ReportContext {
            n: ds.len(),
            m: flags.width,
            d: ds.dim(),
            xi: ds.xi(),
            epsilon: config.epsilon,
            delta: DEFAULT_DELTA,
            lambda0_hat: None,
            out_of_model: config.mode == TrainMode::Sgd
                || config.epsilon_schedule != EpsilonSchedule::Fixed,
        };
        let report = TheoryReport::build(&outcome.log.points(), ctx)?;
        std::fs::write(out.join(THEORY_FILE), report.to_json()? + "\n")?;
    }
    Ok(summary)
}
