//! Command-line front end.
//!
//! ```text
//! unlearn-audit run --config experiments/tree_blobs.toml --seed 3 --format flat-table
//! unlearn-audit reproduce lemma44
//! unlearn-audit reproduce table4 --workers 4 --output /tmp/reports
//! unlearn-audit list-presets
//! unlearn-audit version
//! ```
//!
//! Exit status is 0 when every assertion holds, 1 when one fails and 2 on
//! a configuration or I/O error.

pub mod config;
pub mod presets;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use self::config::{BuiltAttacker, ExperimentConfig, GameKind, OutputFormat, Overrides};
use self::presets::{PresetOptions, PRESETS};
use self::report::{Check, Comparison, FlatTable, Report, Summary, SCHEMA_VERSION};
use crate::attacks::tune_lambda;
use crate::compliance::{di_env_adapter, run_compliance, CoinEnv, Environment};
use crate::error::{AuditError, Result};
use crate::games::{run_deletion_inference, run_known_instance, run_reconstruction};
use crate::rng::derive_seed;

/// Overrides the default output directory (`./reports`).
pub const OUTPUT_DIR_ENV: &str = "UNLEARN_AUDIT_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "reports";

#[derive(Parser, Debug)]
#[command(name = "unlearn-audit", about = "Deletion-inference and reconstruction audits for machine unlearning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the experiment described by a TOML config.
    ///
    /// Example: unlearn-audit run --config tree.toml --trials 500
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a named experiment suite and print a verdict per criterion.
    ///
    /// Example: unlearn-audit reproduce thm52 --seed 11
    Reproduce {
        preset: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// List the named suites.
    ListPresets,
    /// Print the tool and report schema versions.
    Version,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial count; overrides the config or every count in a preset.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub output: Option<String>,
    /// `flat-table` also writes a tab-separated table next to the report.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Report,
    FlatTable,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Report => OutputFormat::Report,
            FormatArg::FlatTable => OutputFormat::FlatTable,
        }
    }
}

/// Everything a `run` produces before it is written out.
pub struct RunOutput {
    pub report: Report,
    pub table: FlatTable,
}

fn real_labels(dist: &crate::data::DatasetDistribution) -> bool {
    dist.num_classes().is_none() && dist.corpus().is_none()
}

/// Executes a resolved config. The report's `wall_clock_seconds` is the
/// only field that differs between two runs of the same config.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let game = cfg.game_config()?;
    let built = cfg.attacker.build(&cfg.learner, real_labels(&game.data))?;
    let (summary, table) = match (cfg.game_kind(), built) {
        (GameKind::Inference, BuiltAttacker::Inference(a)) => {
            let r = run_deletion_inference(&game, a.as_ref())?;
            (Summary::from(&r), FlatTable::inference(&r))
        }
        (GameKind::Reconstruction, BuiltAttacker::Reconstruction(a)) => {
            let r = run_reconstruction(&game, a.as_ref())?;
            (Summary::from(&r), FlatTable::reconstruction(&r))
        }
        (GameKind::KnownInstance, BuiltAttacker::KnownInstance { lambda, grid, tune_trials }) => {
            let lambda = match lambda {
                Some(l) => l,
                None => tune_lambda(&game.learner, &game.data, &grid, tune_trials, derive_seed(game.seed, 0, "tune"))?,
            };
            let r = run_known_instance(&game, lambda)?;
            (Summary::from(&r), FlatTable::known_instance(&r))
        }
        (GameKind::Compliance, BuiltAttacker::Inference(a)) => {
            let section = cfg.compliance.clone().unwrap_or_default();
            let env: Box<dyn Environment> = match section.env.as_str() {
                "attacker" => Box::new(di_env_adapter(a, game.data.clone(), game.aux_size)),
                "coin" => Box::new(CoinEnv),
                other => return Err(AuditError::config("compliance.env", format!("unknown environment `{other}`"))),
            };
            let r = run_compliance(&cfg.compliance_config(&game.data), env.as_ref())?;
            (Summary::from(&r), FlatTable::compliance(&r))
        }
        (kind, _) => return Err(AuditError::config("attacker.kind", format!("does not fit a {kind:?} game"))),
    };
    let mut checks = Vec::new();
    let name = summary.headline_name();
    if let Some(min) = cfg.assertions.min {
        checks.push(Check::new(name, summary.headline(), Comparison::AtLeast, min));
    }
    if let Some(max) = cfg.assertions.max {
        checks.push(Check::new(name, summary.headline(), Comparison::AtMost, max));
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool_version: report::tool_version().into(),
        command: "run".into(),
        config: cfg.to_toml(),
        seed: cfg.game.seed,
        pass: checks.iter().all(|c| c.pass),
        results: vec![summary],
        checks,
        criteria: Vec::new(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { report, table })
}

fn output_dir(flag: Option<&str>, config: Option<&str>) -> PathBuf {
    PathBuf::from(flag.or(config).unwrap_or(DEFAULT_OUTPUT_DIR))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| AuditError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))
}

/// Writes `<dir>/<name>.json` and, for flat tables, `<dir>/<name>.tsv`.
fn write_outputs(dir: &Path, name: &str, report: &Report, table: Option<&FlatTable>) -> Result<Vec<PathBuf>> {
    let mut written = vec![dir.join(format!("{name}.json"))];
    write_file(&written[0], &report.to_json())?;
    if let Some(t) = table {
        written.push(dir.join(format!("{name}.tsv")));
        write_file(&written[1], &t.render())?;
    }
    Ok(written)
}

fn cmd_run(path: &Path, common: &CommonArgs, out: &mut (dyn std::io::Write + Send)) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&Overrides { seed: common.seed, trials: common.trials, output: None, format: common.format.map(Into::into) });
    let run = execute(&cfg)?;
    for s in &run.report.results {
        writeln!(out, "{} = {:.4}", s.headline_name(), s.headline())?;
    }
    for c in &run.report.checks {
        writeln!(out, "{} {}", if c.pass { "PASS" } else { "FAIL" }, c.render())?;
    }
    let dir = output_dir(common.output.as_deref(), cfg.output.dir.as_deref());
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = cfg.output.name.clone().unwrap_or_else(|| stem.to_string());
    let table = (cfg.output.format == OutputFormat::FlatTable).then_some(&run.table);
    for p in write_outputs(&dir, &name, &run.report, table)? {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(run.report.pass)
}

fn criteria_table(criteria: &[report::CriterionOutcome]) -> FlatTable {
    let mut rows = Vec::new();
    for c in criteria {
        for k in &c.checks {
            rows.push(vec![
                c.criterion.to_string(),
                k.label.clone(),
                k.measured.to_string(),
                k.comparison.symbol().into(),
                k.bound.to_string(),
                k.pass.to_string(),
            ]);
        }
    }
    FlatTable { header: vec!["criterion", "check", "measured", "comparison", "bound", "pass"], rows }
}

fn cmd_reproduce(preset: &str, common: &CommonArgs, out: &mut (dyn std::io::Write + Send)) -> Result<bool> {
    let start = Instant::now();
    let opts = PresetOptions { seed: common.seed.unwrap_or(presets::DEFAULT_SEED), trials: common.trials };
    let run = presets::run_preset(preset, opts)?;
    for c in &run.criteria {
        writeln!(out, "{}", c.line())?;
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool_version: report::tool_version().into(),
        command: "reproduce".into(),
        config: preset.into(),
        seed: opts.seed,
        pass: run.criteria.iter().all(|c| c.pass),
        results: run.results,
        checks: Vec::new(),
        criteria: run.criteria,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let table = (common.format == Some(FormatArg::FlatTable)).then(|| criteria_table(&report.criteria));
    for p in write_outputs(&output_dir(common.output.as_deref(), None), preset, &report, table.as_ref())? {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(report.pass)
}

fn dispatch(cli: &Cli, out: &mut (dyn std::io::Write + Send)) -> Result<bool> {
    match &cli.command {
        Command::Run { config, common } => with_workers(common.workers, || cmd_run(config, common, out)),
        Command::Reproduce { preset, common } => {
            presets::find_preset(preset)?;
            with_workers(common.workers, || cmd_reproduce(preset, common, out))
        }
        Command::ListPresets => {
            for p in PRESETS {
                let ids: Vec<String> = p.criteria.iter().map(u32::to_string).collect();
                writeln!(out, "{:<8} criteria {:<6} {}", p.name, ids.join(","), p.description)?;
            }
            Ok(true)
        }
        Command::Version => {
            writeln!(out, "unlearn-audit {} (report schema {SCHEMA_VERSION})", report::tool_version())?;
            Ok(true)
        }
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(0) => Err(AuditError::InvalidArgument("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AuditError::InvalidArgument(format!("worker pool: {e}")))?
            .install(f),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run_cli<I, T>(args: I, out: &mut (dyn std::io::Write + Send), err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match dispatch(&cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("unlearn-audit").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn version_and_presets() {
        let (code, out, _) = run(&["version"]);
        assert_eq!(code, 0);
        assert!(out.contains(env!("CARGO_PKG_VERSION")));
        let (code, out, _) = run(&["list-presets"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), PRESETS.len());
    }

    #[test]
    fn unknown_preset_and_bad_flags_exit_2() {
        assert_eq!(run(&["reproduce", "table9"]).0, 2);
        assert_eq!(run(&["run"]).0, 2);
        assert_eq!(run(&["reproduce", "lemma44", "--workers", "0"]).0, 2);
        let (code, _, err) = run(&["run", "--config", "/nonexistent/x.toml"]);
        assert_eq!(code, 2);
        assert!(err.contains("/nonexistent/x.toml"));
    }
}
