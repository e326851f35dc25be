//! The four subcommands. Each writes its files under the configured output
//! directory and reports whether its checks passed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use asaukit::activation::{asau_partials, AsauParams};
use asaukit::approx::{beta_sweep, build_curve_table, fmt17, CurveTable};
use asaukit::gradcheck::{run_scalar_suite, ScalarSuiteReport};
use asaukit::nn::{
    numeric_grad_check, to_checkpoint, weighted_sum, ActivationSpec, AsauMask, GradCheckReport, Granularity, LayerSpec,
    Network,
};
use asaukit::{SplitMix64, Tensor};
use serde::Serialize;

use crate::config::{ExperimentConfig, TaskKind};
use crate::experiments::{run_roster, RowResult};
use crate::CliError;

/// What a command produced: the files it wrote and whether every check
/// passed.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    passed: bool,
    results: R,
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn write_manifest<R: Serialize>(
    cfg: &ExperimentConfig,
    command: &'static str,
    passed: bool,
    results: R,
) -> Result<(), CliError> {
    let m = Manifest {
        tool: "asaukit",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config: cfg,
        passed,
        results,
    };
    write(&cfg.out_dir, "manifest.json", to_json(&m))
}

fn usage(e: asaukit::Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// One CSV per `(a, b)` family holding every `(alpha, beta)` combination.
pub fn cmd_curves(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let c = &cfg.curves;
    c.grid.validate().map_err(usage)?;
    if c.families.is_empty() || c.alphas.is_empty() || c.betas.is_empty() {
        return Err(CliError::Usage(
            "curves need at least one family, alpha and beta".into(),
        ));
    }
    let mut names: Vec<&str> = c.families.iter().map(|f| f.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) || names.iter().any(|n| n.is_empty() || n.contains(['/', '\\'])) {
        return Err(CliError::Usage(
            "family names must be unique file-name fragments".into(),
        ));
    }
    let mut tables: Vec<(String, CurveTable)> = Vec::new();
    for fam in &c.families {
        let mut params = Vec::new();
        for &alpha in &c.alphas {
            for &beta in &c.betas {
                if !(alpha > 0.0 && beta > 0.0) {
                    return Err(CliError::Usage(format!(
                        "alpha and beta must be positive, got {alpha}, {beta}"
                    )));
                }
                params.push(AsauParams::new(fam.a, fam.b, alpha, beta).map_err(usage)?);
            }
        }
        tables.push((fam.name.clone(), build_curve_table(c.grid, &params).map_err(usage)?));
    }
    prepare_out(&cfg.out_dir)?;
    let mut files = Vec::new();
    for (name, table) in &tables {
        let file = format!("curves_{name}.csv");
        write(&cfg.out_dir, &file, table.to_csv())?;
        files.push(file);
    }
    write_manifest(cfg, "curves", true, &files)?;
    Ok(Outcome {
        passed: true,
        summary: format!("wrote {}", files.join(", ")),
    })
}

/// Sup-error sweep over beta; passes iff the errors strictly decrease.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = &cfg.sweep;
    let base = AsauParams::new(s.a, s.b, s.alpha, s.betas.first().copied().unwrap_or(1.0)).map_err(usage)?;
    let report = beta_sweep(base, &s.betas, s.grid).map_err(usage)?;
    let passed = report.is_strictly_decreasing();
    prepare_out(&cfg.out_dir)?;
    write(&cfg.out_dir, "sweep.csv", report.to_csv())?;
    write_manifest(cfg, "sweep", passed, &report)?;
    let mut summary = String::new();
    for (b, e) in report.betas.iter().zip(&report.sup_errors) {
        let _ = writeln!(summary, "beta={b:<10} sup_error={e:.6e}");
    }
    if !passed {
        summary.push_str("sup error is not strictly decreasing in beta\n");
    }
    Ok(Outcome { passed, summary })
}

/// Three parameterized layers (conv, dense, dense) with per-channel and
/// per-layer ASAU units whose four parameters all train.
pub fn micro_network(seed: u64) -> asaukit::Result<Network> {
    let asau = |g: Granularity, p: AsauParams| {
        LayerSpec::Activation(ActivationSpec::Asau {
            params: p,
            trainable: AsauMask::ALL,
            granularity: g,
        })
    };
    Network::build(
        &[1, 4, 4],
        &[
            LayerSpec::Conv2d { in_ch: 1, out_ch: 2 },
            asau(Granularity::PerChannel, AsauParams::new(0.1, 0.9, 1.3, 2.0)?),
            LayerSpec::MaxPool2x2,
            LayerSpec::Flatten,
            LayerSpec::Dense { in_dim: 8, out_dim: 4 },
            asau(Granularity::PerLayer, AsauParams::new(-0.2, 1.1, 0.8, 1.5)?),
            LayerSpec::Dense { in_dim: 4, out_dim: 3 },
        ],
        &mut SplitMix64::new(seed),
    )
}

/// Finite-difference check of every trainable scalar of [`micro_network`].
pub fn micro_network_check(seed: u64, h: f64) -> asaukit::Result<GradCheckReport> {
    let mut net = micro_network(seed)?;
    let mut rng = SplitMix64::new(seed).derive(7);
    let x = Tensor::from_fn(&[3, 1, 4, 4], |_| rng.uniform(-1.0, 1.0));
    let w = Tensor::from_fn(&[3, 3], |_| rng.uniform(-1.0, 1.0));
    numeric_grad_check(&mut net, &x, &weighted_sum(w), h)
}

#[derive(Serialize)]
struct NetworkEntry {
    name: String,
    analytic: f64,
    numeric: f64,
    rel_err: f64,
    pooling_tie: bool,
}

#[derive(Serialize)]
struct NetworkSummary {
    checked: usize,
    tolerance: f64,
    max_rel_err: f64,
    passed: bool,
    /// Entries excluded because a perturbation flipped a pooling winner.
    ties: Vec<String>,
    worst: Vec<NetworkEntry>,
}

#[derive(Serialize)]
struct GradcheckReportFile<'a> {
    passed: bool,
    scalar: &'a ScalarSuiteReport,
    network: NetworkSummary,
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let g = &cfg.gradcheck;
    if g.samples == 0 {
        return Err(CliError::Usage("gradcheck needs at least one sample".into()));
    }
    if !(g.network_tol > 0.0 && g.network_step > 0.0) {
        return Err(CliError::Usage("network tolerance and step must be positive".into()));
    }
    let negate = g.negate_d_alpha;
    let scalar = run_scalar_suite(g.samples, cfg.seed, |x, p| {
        let mut d = asau_partials(x, p);
        if negate {
            d.d_alpha = -d.d_alpha;
        }
        d
    });
    let net = micro_network_check(cfg.seed, g.network_step).map_err(|e| CliError::Failed(e.to_string()))?;
    let net_passed = net.passes(g.network_tol);
    let network = NetworkSummary {
        checked: net.entries.len(),
        tolerance: g.network_tol,
        max_rel_err: net.max_rel_err(),
        passed: net_passed,
        ties: net.ties().map(|e| e.name.clone()).collect(),
        worst: net
            .entries
            .iter()
            .take(10)
            .map(|e| NetworkEntry {
                name: e.name.clone(),
                analytic: e.analytic,
                numeric: e.numeric,
                rel_err: e.rel_err,
                pooling_tie: e.pooling_tie,
            })
            .collect(),
    };
    let passed = scalar.passed() && net_passed;
    let report = GradcheckReportFile {
        passed,
        scalar: &scalar,
        network,
    };
    prepare_out(&cfg.out_dir)?;
    write(&cfg.out_dir, "gradcheck_report.json", to_json(&report))?;
    write_manifest(cfg, "gradcheck", passed, ())?;

    let mut summary = format!(
        "scalar suite: {} samples, {} checks, {} failures\n",
        scalar.samples, scalar.checks, scalar.failures
    );
    for w in &scalar.worst {
        let _ = writeln!(
            summary,
            "  worst {:<8} error={:.3e} at x={:.6} {}",
            w.partial,
            w.error,
            w.x,
            if w.passed { "ok" } else { "FAIL" }
        );
    }
    for o in scalar.offenders.iter().take(5) {
        let _ = writeln!(
            summary,
            "  offender {} analytic={:.9e} numeric={:.9e}",
            o.partial, o.analytic, o.numeric
        );
    }
    let _ = writeln!(
        summary,
        "network suite: {} scalars, max rel err {:.3e} (tolerance {:.0e}) {}",
        report.network.checked,
        report.network.max_rel_err,
        g.network_tol,
        if net_passed { "ok" } else { "FAIL" }
    );
    Ok(Outcome { passed, summary })
}

fn metrics_csv(rows: &[RowResult]) -> String {
    let mut out = String::from("activation");
    if let Some(first) = rows.first() {
        for (k, _) in first.metrics.entries() {
            out.push(',');
            out.push_str(k);
        }
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.activation);
        for (_, v) in r.metrics.entries() {
            out.push(',');
            out.push_str(&fmt17(v));
        }
        out.push('\n');
    }
    out
}

/// Trains the roster and writes the metrics table, per-row histories and
/// checkpoints, and the run manifest.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let c = &cfg.compare;
    let roster = c.roster_specs()?;
    let train = c.train_for_task();
    train.validate().map_err(usage)?;
    if c.model.hidden == 0 || c.model.channels == 0 {
        return Err(CliError::Usage("model widths must be positive".into()));
    }
    let dataset = c.dataset_for_task();
    let rows =
        run_roster(c.task, &roster, &dataset, &c.model, &train, c.standardize, cfg.seed).map_err(|e| match e {
            asaukit::Error::InvalidParam(_) | asaukit::Error::Io(_) => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.to_string()),
        })?;

    prepare_out(&cfg.out_dir)?;
    let ckpt_dir = cfg.out_dir.join("checkpoints");
    let hist_dir = cfg.out_dir.join("history");
    prepare_out(&ckpt_dir)?;
    prepare_out(&hist_dir)?;
    for r in &rows {
        let model = r.model.as_ref().expect("freshly trained row");
        write(
            &ckpt_dir,
            &format!("{}.ckpt", r.activation),
            to_checkpoint(&model.network),
        )?;
        write(&hist_dir, &format!("{}.csv", r.activation), model.history_csv())?;
    }
    write(&cfg.out_dir, "metrics.csv", metrics_csv(&rows))?;
    write(&cfg.out_dir, "metrics.json", to_json(&rows))?;
    let diverged: Vec<&str> = rows
        .iter()
        .filter(|r| r.diverged)
        .map(|r| r.activation.as_str())
        .collect();
    write_manifest(cfg, "compare", true, &rows)?;

    let mut summary = metrics_csv(&rows);
    let key = match c.task {
        TaskKind::Classification => "accuracy",
        TaskKind::Segmentation => "mdsc",
    };
    for r in &rows {
        let v = r
            .metrics
            .entries()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map_or(f64::NAN, |e| e.1);
        let _ = writeln!(
            summary,
            "{:<8} {key}={v:.4} best_epoch={} epochs={}",
            r.activation, r.best_epoch, r.epochs_run
        );
    }
    if !diverged.is_empty() {
        let _ = writeln!(summary, "diverged: {}", diverged.join(", "));
    }
    Ok(Outcome { passed: true, summary })
}
