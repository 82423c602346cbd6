//! Training loops: full-batch gradient descent on the certified loss (an
//! Euler discretization of the gradient flow) and shuffled mini-batch SGD.
//! The output layer is never updated.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ibp::{certified_error, IbpForward, IndicatorSnapshot, PerturbationSpec};
use crate::model::{loss_from_margins, standard_loss, NetworkParams};
use crate::numerics::{DenseMatrix, Rng};
use crate::theory::{
    count_indicator_flips, gram_shift, gram_snapshot_fast, measure_drift, GramSnapshot,
    TrajectoryPoint,
};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;
pub const DEFAULT_GD_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_SGD_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_BATCH_SIZE: usize = 128;
/// Instrumented Grams use at most this many examples unchanged...
pub const DEFAULT_GRAM_CAP: usize = 512;
/// ...and a fixed random subset of this size beyond it.
pub const DEFAULT_GRAM_SUBSAMPLE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    GdFlow,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EpsilonSchedule {
    Fixed,
    /// Grows linearly from 0 at `start_step` to the target at `end_step`.
    LinearRamp {
        start_step: usize,
        end_step: usize,
    },
}

impl EpsilonSchedule {
    pub fn at(&self, target: f64, step: usize) -> f64 {
        match *self {
            EpsilonSchedule::Fixed => target,
            EpsilonSchedule::LinearRamp {
                start_step,
                end_step,
            } => {
                if step < start_step {
                    0.0
                } else if step >= end_step {
                    target
                } else {
                    target * (step - start_step) as f64 / (end_step - start_step) as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub mode: TrainMode,
    pub learning_rate: f64,
    /// Update count for gd-flow.
    pub steps: usize,
    /// Pass count for sgd.
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub log_every: usize,
    /// 0 disables Gram, flip and spectrum instrumentation.
    pub gram_every: usize,
    pub epsilon_schedule: EpsilonSchedule,
    pub gram_cap: usize,
    pub gram_subsample: usize,
    /// Keep full `H(t)` matrices in the log, not just their spectra.
    pub keep_gram_matrices: bool,
}

impl TrainConfig {
    pub fn gd_flow(epsilon: f64, steps: usize) -> Self {
        Self {
            epsilon,
            mode: TrainMode::GdFlow,
            learning_rate: DEFAULT_GD_LEARNING_RATE,
            steps,
            epochs: 0,
            batch_size: DEFAULT_BATCH_SIZE,
            shuffle: true,
            seed: 0,
            log_every: 1,
            gram_every: 0,
            epsilon_schedule: EpsilonSchedule::Fixed,
            gram_cap: DEFAULT_GRAM_CAP,
            gram_subsample: DEFAULT_GRAM_SUBSAMPLE,
            keep_gram_matrices: false,
        }
    }

    pub fn sgd(epsilon: f64, epochs: usize) -> Self {
        Self {
            mode: TrainMode::Sgd,
            learning_rate: DEFAULT_SGD_LEARNING_RATE,
            steps: 0,
            epochs,
            ..Self::gd_flow(epsilon, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        PerturbationSpec::new(self.epsilon).map_err(|e| Error::Config(e.to_string()))?;
        // zero is accepted as the degenerate no-op run
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if self.gram_every != 0 && self.gram_every % self.log_every != 0 {
            return Err(Error::Config(format!(
                "gram_every ({}) must be 0 or a multiple of log_every ({})",
                self.gram_every, self.log_every
            )));
        }
        if self.mode == TrainMode::Sgd && self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.gram_subsample == 0 || self.gram_subsample > self.gram_cap {
            return Err(Error::Config(format!(
                "gram_subsample must lie in [1, gram_cap = {}], got {}",
                self.gram_cap, self.gram_subsample
            )));
        }
        if let EpsilonSchedule::LinearRamp {
            start_step,
            end_step,
        } = self.epsilon_schedule
        {
            if end_step <= start_step {
                return Err(Error::Config(format!(
                    "ramp end ({end_step}) must come after its start ({start_step})"
                )));
            }
        }
        Ok(())
    }

    fn total_steps(&self, n: usize) -> usize {
        match self.mode {
            TrainMode::GdFlow => self.steps,
            TrainMode::Sgd => self.epochs * n.div_ceil(self.batch_size.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub point: TrajectoryPoint,
    pub standard_loss: f64,
    pub epsilon: f64,
    pub gram: Option<GramSnapshot>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    entries: Vec<LogEntry>,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: LogEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if e.point.step <= last.point.step || e.point.t < last.point.t {
                return Err(Error::InvalidArgument(format!(
                    "log step {} (t = {}) does not follow step {} (t = {})",
                    e.point.step, e.point.t, last.point.step, last.point.t
                )));
            }
        }
        self.entries.push(e);
        Ok(())
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn points(&self) -> Vec<TrajectoryPoint> {
        self.entries.iter().map(|e| e.point.clone()).collect()
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum RunStatus {
    Completed,
    Diverged { step: usize, loss: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: TrajectoryLog,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    /// gd-flow steps at which the certified loss went up.
    pub loss_increases: usize,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

fn diverging(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

/// Examples used for instrumented Grams: all of them up to `gram_cap`,
/// otherwise a fixed random subset of `gram_subsample` in index order.
pub fn gram_subset(dataset: &Dataset, config: &TrainConfig) -> Result<Dataset> {
    let n = dataset.len();
    if n <= config.gram_cap {
        return Ok(dataset.clone());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(config.seed).fork(u64::MAX).shuffle(&mut idx);
    idx.truncate(config.gram_subsample);
    idx.sort_unstable();
    dataset.subset(&idx)
}

/// State shared by logging calls within one run.
struct Instrument<'a> {
    config: &'a TrainConfig,
    dataset: &'a Dataset,
    init: NetworkParams,
    gram_data: Dataset,
    h0: Option<DenseMatrix>,
    init_bits: Option<(f64, IndicatorSnapshot)>,
}

impl<'a> Instrument<'a> {
    fn new(config: &'a TrainConfig, dataset: &'a Dataset, init: &NetworkParams) -> Result<Self> {
        Ok(Self {
            config,
            dataset,
            init: init.clone(),
            gram_data: gram_subset(dataset, config)?,
            h0: None,
            init_bits: None,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        params: &NetworkParams,
        step: usize,
        t: f64,
        eps: f64,
        fwd: &IbpForward<'_>,
        loss: f64,
        error: f64,
    ) -> Result<LogEntry> {
        let spec = PerturbationSpec::new(eps)?;
        let mut point = TrajectoryPoint {
            step,
            t,
            loss,
            certified_error: error,
            lambda_min: None,
            drift: measure_drift(params, &self.init)?,
            flips: None,
            gram_shift: None,
        };
        let mut gram = None;
        let every = self.config.gram_every;
        if every != 0 && step % every == 0 && !self.gram_data.is_empty() {
            let mut snap = gram_snapshot_fast(params, &self.gram_data, spec, t, step)?;
            point.lambda_min = Some(snap.lambda_min);
            let h = snap.h.as_ref().expect("fresh snapshot carries H");
            match &self.h0 {
                None if step == 0 => {
                    self.h0 = Some(h.clone());
                    point.gram_shift = Some(0.0);
                }
                Some(h0) => point.gram_shift = Some(gram_shift(h, h0)?),
                None => {}
            }
            let stale = self.init_bits.as_ref().map_or(true, |(e, _)| *e != eps);
            if stale {
                let f0 = IbpForward::new(&self.init, self.dataset, spec)?;
                self.init_bits = Some((eps, f0.indicators()));
            }
            let (_, bits0) = self.init_bits.as_ref().expect("just filled");
            point.flips = Some(count_indicator_flips(
                &fwd.indicators(),
                bits0,
                self.config.seed,
            )?);
            if !self.config.keep_gram_matrices {
                snap.h = None;
            }
            gram = Some(snap);
        }
        Ok(LogEntry {
            point,
            standard_loss: standard_loss(params, self.dataset)?,
            epsilon: eps,
            gram,
        })
    }
}

/// Trains with no external sink.
pub fn train(
    params: &NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_sink(params, dataset, config, |_| Ok(()))
}

/// Trains and hands every log entry to `sink` as soon as it is produced.
pub fn train_with_sink<F>(
    params: &NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
    mut sink: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&LogEntry) -> Result<()>,
{
    config.validate()?;
    params.check_input(dataset.dim())?;
    let mut warnings = Vec::new();
    if dataset.epsilon() < config.epsilon {
        let msg = format!(
            "dataset was normalized for eps = {} but training uses eps = {}; perturbed inputs can leave [0, 1]",
            dataset.epsilon(),
            config.epsilon
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let n = dataset.len();
    let total = config.total_steps(n);
    let eta = config.learning_rate;
    let mut cur = params.clone();
    let mut log = TrajectoryLog::new();
    let mut inst = Instrument::new(config, dataset, params)?;
    let mut t = 0.0;
    let mut loss_increases = 0;
    let mut prev_loss = f64::INFINITY;

    let mut order: Vec<usize> = (0..n).collect();
    let shuffler = Rng::new(config.seed);
    let per_epoch = n.div_ceil(config.batch_size.max(1)).max(1);

    let mut step = 0;
    loop {
        let eps = config.epsilon_schedule.at(config.epsilon, step);
        let spec = PerturbationSpec::new(eps)?;
        let at_log = step % config.log_every == 0 || step == total;
        let full_needed = at_log || config.mode == TrainMode::GdFlow;

        let mut full_grad = None;
        if full_needed {
            let fwd = IbpForward::new(&cur, dataset, spec)?;
            let margins = fwd.margins();
            let loss = loss_from_margins(&margins.values);
            if diverging(loss) {
                return Ok(finish(
                    cur,
                    log,
                    RunStatus::Diverged { step, loss },
                    warnings,
                    loss_increases,
                ));
            }
            if config.mode == TrainMode::GdFlow {
                if loss > prev_loss {
                    loss_increases += 1;
                    log::debug!("certified loss rose at step {step}: {prev_loss} -> {loss}");
                }
                prev_loss = loss;
            }
            if at_log {
                let entry =
                    inst.record(&cur, step, t, eps, &fwd, loss, certified_error(&margins))?;
                sink(&entry)?;
                log.push(entry)?;
            }
            if step < total && config.mode == TrainMode::GdFlow {
                full_grad = Some(fwd.loss_gradient_with(&margins));
            }
        }
        if step == total {
            break;
        }

        let grad = match config.mode {
            TrainMode::GdFlow => full_grad.expect("computed above"),
            TrainMode::Sgd => {
                let within = step % per_epoch;
                if within == 0 && config.shuffle {
                    order = (0..n).collect();
                    shuffler.fork((step / per_epoch) as u64).shuffle(&mut order);
                }
                let lo = within * config.batch_size;
                let hi = (lo + config.batch_size).min(n);
                let batch = dataset.subset(&order[lo..hi])?;
                let fwd = IbpForward::new(&cur, &batch, spec)?;
                let margins = fwd.margins();
                let loss = loss_from_margins(&margins.values);
                if diverging(loss) {
                    return Ok(finish(
                        cur,
                        log,
                        RunStatus::Diverged { step, loss },
                        warnings,
                        loss_increases,
                    ));
                }
                fwd.loss_gradient_with(&margins)
            }
        };
        cur.w.axpy(-eta, &grad)?;
        if !cur.w.all_finite() {
            return Ok(finish(
                cur,
                log,
                RunStatus::Diverged {
                    step: step + 1,
                    loss: f64::NAN,
                },
                warnings,
                loss_increases,
            ));
        }
        t += eta;
        step += 1;
    }
    Ok(finish(
        cur,
        log,
        RunStatus::Completed,
        warnings,
        loss_increases,
    ))
}

fn finish(
    params: NetworkParams,
    log: TrajectoryLog,
    status: RunStatus,
    warnings: Vec<String>,
    loss_increases: usize,
) -> TrainOutcome {
    TrainOutcome {
        params,
        log,
        status,
        warnings,
        loss_increases,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub n: usize,
    pub epsilon: f64,
    pub certified_error: f64,
    pub min_margin: f64,
    pub mean_margin: f64,
    pub max_margin: f64,
}

pub fn certify_dataset(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
) -> Result<CertificationReport> {
    let margins = IbpForward::new(params, dataset, spec)?.margins();
    Ok(CertificationReport {
        n: dataset.len(),
        epsilon: spec.epsilon(),
        certified_error: certified_error(&margins),
        min_margin: margins.min(),
        mean_margin: margins.mean(),
        max_margin: margins.max(),
    })
}
