//! Command-line front end: `train`, `check`, `sweep` and `report`.
//!
//! Exit codes: 0 success, 1 failed check or unreadable metrics, 2 bad
//! configuration or arguments, 3 runtime abort.

pub mod config;
pub mod metrics_io;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::check::{run_all, CheckHooks};
use crate::scheduler::StrategyKind;
use crate::trainer::{MetricsRow, TrainError, Trainer};
use config::{ConfigError, ExperimentConfig};
use metrics_io::{read_metrics, MetricsHeader, MetricsWriter};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.tsv";

#[derive(Debug, Parser)]
#[command(name = "gpclip", version, about = "Entropy-controlled clipping experiments on a tabular testbed")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with one configuration file.
    Train { config: PathBuf },
    /// Run every self-verification suite.
    Check,
    /// Train once per phase ratio and tabulate the outcomes.
    Sweep {
        config: PathBuf,
        /// Comma separated phase ratios, e.g. 0.3,0.4,0.5,0.6
        #[arg(long)]
        ratios: String,
    },
    /// Summarise a metrics file and write plot-ready columns next to it.
    Report { metrics: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Check(String),
    #[error("{0}")]
    Report(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) | CliError::Report(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_abort(what: &str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{what} {}: {e}", path.display()))
}

/// Dispatches a parsed command line and returns the process exit code.
/// Errors are reported on `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Train { config } => cmd_train(&config, out).map(|_| ()),
        Command::Check => cmd_check(&CheckHooks::default(), out),
        Command::Sweep { config, ratios } => parse_ratios(&ratios).and_then(|r| cmd_sweep(&config, &r, out)),
        Command::Report { metrics } => cmd_report(&metrics, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn parse_ratios(text: &str) -> Result<Vec<f64>, CliError> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Config("--ratios needs at least one value".into()));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad ratio `{s}`: {e}")))
        })
        .collect()
}

/// Trains with `cfg` into `dir`, writing the resolved config and the metrics
/// file. Returns the metrics path and all rows.
fn train_into(cfg: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, Vec<MetricsRow>), CliError> {
    let train_cfg = cfg.train_config()?;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;

    let resolved = dir.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&resolved, cfg.to_toml()).map_err(|e| io_abort("cannot write", &resolved, e))?;

    let metrics_path = dir.join(cfg.metrics_file_name());
    let file = File::create(&metrics_path).map_err(|e| io_abort("cannot create", &metrics_path, e))?;
    let header = MetricsHeader::new(cfg.run.seed, cfg.run.rounds, cfg.strategy.kind);
    let mut writer = MetricsWriter::new(BufWriter::new(file), cfg.run.metrics_format, &header)
        .map_err(|e| io_abort("cannot write", &metrics_path, e))?;

    let mut trainer = Trainer::new(train_cfg)?;
    let mut rows = Vec::with_capacity(cfg.run.rounds as usize);
    for _ in 0..cfg.run.rounds {
        let row = trainer.step()?;
        writer
            .write_row(&row)
            .map_err(|e| io_abort("cannot write", &metrics_path, e))?;
        rows.push(row);
    }
    writer.finish().map_err(|e| io_abort("cannot write", &metrics_path, e))?;
    Ok((metrics_path, rows))
}

pub fn cmd_train(config_path: &Path, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let dir = cfg.resolved_output_dir();
    let (path, rows) = train_into(&cfg, &dir)?;
    let last = rows.last().expect("rounds >= 1");
    let _ = writeln!(
        out,
        "wrote {} rows to {} (final entropy {:.4}, final reward {:.4})",
        rows.len(),
        path.display(),
        last.entropy,
        last.reward_mean
    );
    Ok(path)
}

pub fn cmd_check(hooks: &CheckHooks, out: &mut dyn Write) -> Result<(), CliError> {
    let reports = run_all(hooks);
    let mut failing = Vec::new();
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status} {:<22} {} cases, {} failures", r.name, r.cases, r.failures.len());
        for f in r.failures.iter().take(20) {
            let _ = writeln!(out, "    {f}");
        }
        if r.failures.len() > 20 {
            let _ = writeln!(out, "    ... {} more", r.failures.len() - 20);
        }
        if !r.passed() {
            failing.push(r.name);
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("failing suites: {}", failing.join(", "))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepLine {
    pub ratio: f64,
    pub final_entropy: f64,
    pub final_reward: f64,
    pub max_entropy: f64,
    pub argmax_round: u64,
}

pub fn cmd_sweep(config_path: &Path, ratios: &[f64], out: &mut dyn Write) -> Result<(), CliError> {
    if ratios.is_empty() {
        return Err(CliError::Config("sweep needs at least one ratio".into()));
    }
    let base = ExperimentConfig::load(config_path)?;
    if !matches!(base.strategy.kind, StrategyKind::Id | StrategyKind::Did) {
        return Err(CliError::Config(format!(
            "phase ratio sweeps need strategy id or did, config has {:?}",
            base.strategy.kind
        )));
    }
    let root = base.resolved_output_dir();
    let mut lines = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut cfg = base.clone();
        cfg.strategy.phase_ratio = ratio;
        let (_, rows) = train_into(&cfg, &root.join(format!("rho_{ratio}")))?;
        let (argmax, max) = rows
            .iter()
            .map(|r| (r.step, r.entropy))
            .fold((0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
        let last = rows.last().expect("rounds >= 1");
        lines.push(SweepLine {
            ratio,
            final_entropy: last.entropy,
            final_reward: last.reward_mean,
            max_entropy: max,
            argmax_round: argmax,
        });
    }

    let mut table = String::from("ratio\tfinal_entropy\tfinal_reward\tmax_entropy\targmax_round\n");
    for l in &lines {
        table.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
            l.ratio, l.final_entropy, l.final_reward, l.max_entropy, l.argmax_round
        ));
    }
    let summary = root.join(SWEEP_SUMMARY_FILE);
    std::fs::write(&summary, &table).map_err(|e| io_abort("cannot write", &summary, e))?;
    let _ = write!(out, "{table}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seed: u64,
    pub strategy: StrategyKind,
    pub rows: usize,
    pub entropy_min: f64,
    pub entropy_max: f64,
    pub entropy_final: f64,
    pub reward_final: f64,
    /// Clip fraction averaged over rounds.
    pub clip_frac_mean: f64,
    /// Changes of `od_state` between consecutive rounds, counting from the
    /// initial suppress state.
    pub od_switches: usize,
}

pub fn summarise(header: &MetricsHeader, rows: &[MetricsRow]) -> Option<Summary> {
    let last = rows.last()?;
    let ent = rows.iter().map(|r| r.entropy);
    let mut prev = 0u8;
    let mut switches = 0;
    for r in rows {
        if r.od_state != prev {
            switches += 1;
            prev = r.od_state;
        }
    }
    Some(Summary {
        seed: header.seed,
        strategy: header.strategy,
        rows: rows.len(),
        entropy_min: ent.clone().fold(f64::INFINITY, f64::min),
        entropy_max: ent.fold(f64::NEG_INFINITY, f64::max),
        entropy_final: last.entropy,
        reward_final: last.reward_mean,
        clip_frac_mean: rows.iter().map(|r| r.clip_frac).sum::<f64>() / rows.len() as f64,
        od_switches: switches,
    })
}

/// Path of the plot-ready column file written by `report`.
pub fn columns_path(metrics: &Path) -> PathBuf {
    let stem = metrics.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    metrics.with_file_name(format!("{stem}.columns.tsv"))
}

fn plot_columns(rows: &[MetricsRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    let mut s = String::from(
        "step\tentropy\treward_mean\tgrad_norm\tclip_frac\teps_up_mean\teps_lo_mean\te1\te2\te3\te4\tneutral\tod_state\tpass1\tpassk\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.step,
            r.entropy,
            r.reward_mean,
            r.grad_norm,
            r.clip_frac,
            r.eps_up_mean,
            r.eps_lo_mean,
            r.regions.e1,
            r.regions.e2,
            r.regions.e3,
            r.regions.e4,
            r.regions.neutral,
            r.od_state,
            cell(r.pass1),
            cell(r.passk),
        ));
    }
    s
}

pub fn cmd_report(metrics: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let (header, rows) =
        read_metrics(metrics).map_err(|e| CliError::Report(format!("{}: {e}", metrics.display())))?;
    let s = summarise(&header, &rows)
        .ok_or_else(|| CliError::Report(format!("{}: no metric rows", metrics.display())))?;
    let _ = writeln!(out, "file           {}", metrics.display());
    let _ = writeln!(out, "seed           {}", s.seed);
    let _ = writeln!(out, "strategy       {:?}", s.strategy);
    let _ = writeln!(out, "rows           {}", s.rows);
    let _ = writeln!(out, "entropy min    {:.6}", s.entropy_min);
    let _ = writeln!(out, "entropy max    {:.6}", s.entropy_max);
    let _ = writeln!(out, "entropy final  {:.6}", s.entropy_final);
    let _ = writeln!(out, "reward final   {:.6}", s.reward_final);
    let _ = writeln!(out, "clip frac mean {:.6}", s.clip_frac_mean);
    let _ = writeln!(out, "od switches    {}", s.od_switches);
    let cols = columns_path(metrics);
    std::fs::write(&cols, plot_columns(&rows)).map_err(|e| io_abort("cannot write", &cols, e))?;
    let _ = writeln!(out, "columns        {}", cols.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::RegionHistogram;

    fn row(step: u64, entropy: f64, od_state: u8) -> MetricsRow {
        MetricsRow {
            step,
            entropy,
            reward_mean: 0.5,
            grad_norm: 0.1,
            clip_frac: 0.25,
            eps_up_mean: 0.2,
            eps_lo_mean: 0.2,
            regions: RegionHistogram::default(),
            od_state,
            pass1: None,
            passk: None,
            elapsed_s: None,
        }
    }

    #[test]
    fn ratios_parse() {
        assert_eq!(parse_ratios("0.3, 0.4,0.5").unwrap(), vec![0.3, 0.4, 0.5]);
        assert_eq!(parse_ratios("").unwrap_err().exit_code(), 2);
        assert_eq!(parse_ratios(" , ").unwrap_err().exit_code(), 2);
        assert_eq!(parse_ratios("0.3,x").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn switch_count_starts_from_suppress() {
        let header = MetricsHeader::new(1, 5, StrategyKind::Od);
        let rows = [row(0, 1.0, 0), row(1, 0.5, 1), row(2, 0.7, 1), row(3, 0.9, 0), row(4, 0.2, 1)];
        let s = summarise(&header, &rows).unwrap();
        assert_eq!(s.od_switches, 3);
        assert_eq!((s.entropy_min, s.entropy_max, s.entropy_final), (0.2, 1.0, 0.2));
        assert_eq!(s.clip_frac_mean, 0.25);
        assert!(summarise(&header, &[]).is_none());
    }

    #[test]
    fn columns_file_sits_next_to_metrics() {
        assert_eq!(
            columns_path(Path::new("/a/b/metrics.jsonl")),
            PathBuf::from("/a/b/metrics.columns.tsv")
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Check(String::new()).exit_code(), 1);
        assert_eq!(CliError::Report(String::new()).exit_code(), 1);
        assert_eq!(CliError::from(TrainError::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 3);
    }
}
