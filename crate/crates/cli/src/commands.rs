//! `data prepare`, `theory`, `certify` and `gram`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ibplab_core::data::{check_assumption2, generate_synthetic, load_mnist_task, mnist_paths};
use ibplab_core::data::{MnistTaskSpec, SyntheticSpec};
use ibplab_core::ibp::{pgd_attack_margin, PgdConfig};
use ibplab_core::model::{standard_error, standard_margins};
use ibplab_core::numerics::derive_seed;
use ibplab_core::theory::{estimate_h_infinity, ReportContext};
use ibplab_core::{
    certify_dataset, gram_matrix, gram_subset, ibp_margins, init_network, DenseMatrix,
    EpsilonSchedule, NetworkParams, PerturbationSpec, TheoryReport, TrainMode, TrajectoryPoint,
};
use serde::Serialize;

use crate::args::{CertifyArgs, GramArgs, PrepareArgs, TheoryArgs};
use crate::exit::{Exit, CONFIG_ERROR, DATA_ERROR, MISSING_INSTRUMENTATION};
use crate::run::{self, load_dataset, write_json};
use crate::svg::{self, Chart, Series};

fn parse_labels(s: &str) -> Result<(u8, u8)> {
    let bad = || {
        Exit::new(
            CONFIG_ERROR,
            format!("--labels expects two digits like 2,5, got '{s}'"),
        )
    };
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let pos: u8 = a.trim().parse().map_err(|_| bad())?;
    let neg: u8 = b.trim().parse().map_err(|_| bad())?;
    if pos > 9 || neg > 9 || pos == neg {
        return Err(bad().into());
    }
    Ok((pos, neg))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn data_prepare(args: &PrepareArgs) -> Result<()> {
    let ds = if args.synthetic {
        let spec =
            SyntheticSpec::new(args.n, args.d, args.separation, args.seed).with_floor(args.floor);
        generate_synthetic(&spec)?
    } else {
        let Some(dir) = &args.mnist_dir else {
            return Err(Exit::new(CONFIG_ERROR, "give --mnist-dir or --synthetic").into());
        };
        for p in <[PathBuf; 2]>::from(mnist_paths(dir)) {
            if !p.is_file() {
                return Err(
                    Exit::new(DATA_ERROR, format!("missing MNIST file {}", p.display())).into(),
                );
            }
        }
        let (positive, negative) = parse_labels(&args.labels)?;
        load_mnist_task(
            dir,
            &MnistTaskSpec {
                positive,
                negative,
                limit: args.limit,
                epsilon: args.epsilon,
                downsample: args.downsample,
            },
        )?
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    ds.write_cache(&args.out)?;
    let report = check_assumption2(&ds, ds.epsilon());
    if !report.verified {
        log::warn!(
            "non-parallel condition not verified at eps = {} (min angle {:.4} rad)",
            ds.epsilon(),
            report.min_pairwise_angle
        );
    }
    write_json(&sidecar(&args.out, ".assumption2.json"), &report)?;
    let (pos, neg) = ds.labels_balanced();
    println!(
        "wrote {} (n = {}, d = {}, +1: {pos}, -1: {neg}, eps = {})",
        args.out.display(),
        ds.len(),
        ds.dim(),
        ds.epsilon()
    );
    Ok(())
}

fn read_points(dir: &Path) -> Result<Vec<TrajectoryPoint>> {
    let path = dir.join(run::TRAJECTORY_FILE);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        points.push(TrajectoryPoint::parse_csv_row(line)?);
    }
    // full flip counts and Gram shifts live in the instrumentation file
    let inst = dir.join(run::INSTRUMENTATION_FILE);
    if let Ok(text) = std::fs::read_to_string(&inst) {
        let mut by_step = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let p: TrajectoryPoint = serde_json::from_str(line)
                .with_context(|| format!("parsing {}", inst.display()))?;
            by_step.insert(p.step, p);
        }
        for p in &mut points {
            if let Some(full) = by_step.remove(&p.step) {
                p.flips = full.flips;
                p.gram_shift = full.gram_shift;
            }
        }
    }
    Ok(points)
}

fn envelope_chart(report: &TheoryReport) -> Chart {
    let ln10 = std::f64::consts::LN_10;
    let measured = report
        .times
        .iter()
        .zip(&report.loss_trajectory)
        .filter(|(_, &l)| l > 0.0)
        .map(|(&t, &l)| (t, l.log10()))
        .collect();
    let mut series = vec![Series {
        name: "measured loss".into(),
        points: measured,
        errors: None,
        dashed: false,
    }];
    if let Some(env) = &report.envelope {
        series.push(Series {
            name: "envelope".into(),
            points: report
                .times
                .iter()
                .zip(&env.log_values)
                .map(|(&t, &lv)| (t, lv / ln10))
                .collect(),
            errors: None,
            dashed: true,
        });
    }
    Chart {
        title: "certified loss and convergence envelope".into(),
        x_label: "t (accumulated step size)".into(),
        y_label: "loss".into(),
        x_log10: false,
        y_log10: true,
        series,
    }
}

pub fn theory(args: &TheoryArgs) -> Result<()> {
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(Exit::new(
            CONFIG_ERROR,
            format!("--delta must lie in (0, 1), got {}", args.delta),
        )
        .into());
    }
    let cfg = run::read_run_config(&args.run)?;
    let points = read_points(&args.run)?;
    if !points.iter().any(|p| p.lambda_min.is_some()) {
        return Err(Exit::new(
            MISSING_INSTRUMENTATION,
            format!(
                "{} has no Gram snapshots; rerun train with --gram-every N (a multiple of --log-every)",
                args.run.display()
            ),
        )
        .into());
    }
    let ds = load_dataset(&cfg.data)?;
    let spec = PerturbationSpec::new(cfg.train.epsilon)?;
    let sub = gram_subset(&ds, &cfg.train)?;
    let est = estimate_h_infinity(&sub, spec, args.m_probe, args.num_inits, args.hinf_seed)?;
    let ctx = ReportContext {
        n: ds.len(),
        m: cfg.width,
        d: ds.dim(),
        xi: ds.xi(),
        epsilon: cfg.train.epsilon,
        delta: args.delta,
        lambda0_hat: Some(est.lambda0),
        out_of_model: cfg.train.mode == TrainMode::Sgd
            || cfg.train.epsilon_schedule != EpsilonSchedule::Fixed,
    };
    let report = TheoryReport::build(&points, ctx)?;
    let json_path = args.run.join(run::THEORY_FILE);
    std::fs::write(&json_path, report.to_json()? + "\n")
        .with_context(|| format!("writing {}", json_path.display()))?;
    std::fs::write(
        args.run.join("envelope.svg"),
        svg::render(&envelope_chart(&report)),
    )?;

    let flag = |b: bool| if b { "PASS" } else { "FAIL" };
    println!(
        "lambda0 estimate: {:.6e} (subset n = {})",
        est.lambda0,
        sub.len()
    );
    if let Some(lf) = report.lambda_floor {
        println!("lambda_min floor: {lf:.6e}");
    }
    if let Some(c) = &report.envelope_check {
        println!(
            "envelope: {} (worst log gap {:.3e})",
            flag(c.passed),
            c.worst_log_gap
        );
    }
    println!(
        "drift: {} (worst ratio {:.3})",
        flag(report.drift_check.passed),
        report.drift_check.worst_ratio
    );
    if let Some(f) = &report.flip_diagnostic {
        println!(
            "flip fraction {:.3e} vs bound {:.3e}",
            f.measured_fraction, f.bound
        );
    }
    if let Some(t) = &report.thresholds {
        println!("R = {:.3e}, guaranteed: {}", t.r, t.guaranteed);
    }
    if report.context.out_of_model {
        println!("note: run is outside the gradient-flow model (sgd or ramped epsilon)");
    }
    println!("wrote {}", json_path.display());
    Ok(())
}

#[derive(Serialize)]
struct CertifyReport {
    #[serde(flatten)]
    certification: ibplab_core::CertificationReport,
    standard_error: f64,
    attacked_error: Option<f64>,
    pgd: Option<PgdConfig>,
}

pub fn certify(args: &CertifyArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let params = NetworkParams::read_checkpoint(&args.params)
        .with_context(|| format!("loading {}", args.params.display()))?;
    let spec = PerturbationSpec::new(args.epsilon)?;
    let certification = certify_dataset(&params, &ds, spec)?;
    let standard = standard_margins(&params, &ds)?;

    let pgd = args.pgd.then(|| PgdConfig {
        steps: args.pgd_steps,
        restarts: args.pgd_restarts,
        ..PgdConfig::default()
    });
    let attacked = match &pgd {
        Some(cfg) => {
            let mut broken = 0usize;
            for i in 0..ds.len() {
                let (x, y) = ds.example(i);
                if pgd_attack_margin(&params, x, y, spec, cfg, derive_seed(args.seed, i as u64))?
                    <= 0.0
                {
                    broken += 1;
                }
            }
            Some(broken as f64 / ds.len() as f64)
        }
        None => None,
    };

    if let Some(path) = &args.margins {
        let ibp = ibp_margins(&params, &ds, spec)?;
        let mut csv = String::from("index,label,certified_margin,standard_margin\n");
        for (i, (l, s)) in ibp.values.iter().zip(&standard.values).enumerate() {
            let _ = writeln!(csv, "{i},{},{l},{s}", ds.y()[i]);
        }
        std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }

    let report = CertifyReport {
        certification,
        standard_error: standard_error(&standard),
        attacked_error: attacked,
        pgd,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn matrix_csv(h: &DenseMatrix) -> String {
    let mut s = String::new();
    for i in 0..h.rows() {
        let row: Vec<String> = h.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn gram(args: &GramArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let spec = PerturbationSpec::new(args.epsilon)?;
    if ds.len() > ibplab_core::trainer::DEFAULT_GRAM_CAP {
        log::warn!("Gram over {} examples; cost grows as n^2 m d", ds.len());
    }
    let (h, lambda) = if args.hinf {
        let est = estimate_h_infinity(&ds, spec, args.m_probe, args.num_inits, args.seed)?;
        (est.h.context("estimate kept no matrix")?, est.lambda0)
    } else {
        let params = match &args.params {
            Some(p) => NetworkParams::read_checkpoint(p)
                .with_context(|| format!("loading {}", p.display()))?,
            None => init_network(args.width, ds.dim(), args.seed)?,
        };
        let snap = gram_matrix(&params, &ds, spec, 0.0, 0)?;
        (snap.h.context("snapshot kept no matrix")?, snap.lambda_min)
    };
    if let Some(out) = &args.out {
        std::fs::write(out, matrix_csv(&h))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    println!("lambda_min = {lambda:e}");
    Ok(())
}
