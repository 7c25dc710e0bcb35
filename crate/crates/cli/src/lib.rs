//! Command-line front end: `validate`, `run`, `sweep` and `report`.
//!
//! Every command returns its outcome or a [`Failure`] carrying the exit status
//! instead of exiting the process, so the commands can be driven from tests.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cavround::plot::write_plot_data;
use cavround::scenario::{
    apply_overrides, export_results, load_run_record, parse_scenario, LoadError, ScenarioError,
};
use cavround::sim::{compute_metrics, run, Metrics, ScenarioSpec, SimError, SimResult};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "cavround",
    version,
    about = "Energy-optimal roundabout scheduling for connected automated vehicles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a scenario file.
    Validate(ScenarioArgs),
    /// Schedule and simulate a scenario, writing all exports.
    Run(RunArgs),
    /// Run the Cartesian product of parameter variations.
    Sweep(SweepArgs),
    /// Rebuild plot data from an existing result directory.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override a scenario field, e.g. `params.t_h=1.5` or `arrivals.2.time=4.0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--set sim.seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Values to sweep, e.g. `params.t_h=0.5,1.0`. Repeat for more axes.
    #[arg(long = "vary", value_name = "KEY=V1,V2,...")]
    pub vary: Vec<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Clone)]
pub struct ReportArgs {
    /// A directory written by `run`.
    #[arg(long = "out", alias = "dir")]
    pub dir: PathBuf,
}

/// A failed command: exit status plus the message for stderr. `stdout` holds
/// whatever partial report the command produced before failing.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub stdout: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            stdout: String::new(),
        }
    }

    fn io(context: &Path, e: io::Error) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", context.display()))
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_parse_error() {
            EXIT_PARSE
        } else {
            EXIT_INVARIANT
        };
        Self::new(code, format!("{} error: {e}", e.kind()))
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(m) => Self::new(EXIT_INVARIANT, m),
            SimError::Schedule {
                index,
                vehicle,
                source,
            } => Self::new(
                EXIT_INFEASIBLE,
                format!(
                    "infeasible: arrival #{index} ({vehicle}) could not be scheduled: {source}"
                ),
            ),
            other => Self::new(EXIT_INFEASIBLE, other.to_string()),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Missing(_) | LoadError::Io(_) => Self::new(EXIT_IO, e.to_string()),
            LoadError::Malformed(..) => Self::new(EXIT_PARSE, e.to_string()),
            LoadError::Scenario(s) => s.into(),
        }
    }
}

/// Output of a successful command; `stdout` is what the binary prints.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

pub type CmdResult = Result<Outcome, Failure>;

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(&a.dir),
    }
}

/// Reads the scenario with overrides applied. Shared by every command so that
/// `validate` accepts exactly what `run` accepts.
pub fn load_scenario(args: &ScenarioArgs, extra: &[String]) -> Result<ScenarioSpec, Failure> {
    let doc = fs::read_to_string(&args.scenario).map_err(|e| Failure::io(&args.scenario, e))?;
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("sim.seed={seed}"));
    }
    overrides.extend_from_slice(extra);
    let doc = apply_overrides(&doc, &overrides)?;
    Ok(parse_scenario(&doc)?)
}

pub fn cmd_validate(args: &ScenarioArgs) -> CmdResult {
    let spec = load_scenario(args, &[])?;
    let nodes: std::collections::BTreeSet<_> =
        spec.geoms.iter().flat_map(|g| g.node_ids()).collect();
    Ok(Outcome {
        stdout: format!(
            "{}: ok ({} paths, {} nodes, {} arrivals)\n",
            args.scenario.display(),
            spec.geoms.len(),
            nodes.len(),
            spec.arrivals.len()
        ),
        files: Vec::new(),
    })
}

/// Runs a scenario and writes its exports; metrics are absent for an empty
/// arrival list.
pub fn run_to_dir(
    spec: &ScenarioSpec,
    out: &Path,
) -> Result<(SimResult, Option<Metrics>, Vec<PathBuf>), Failure> {
    let result = run(spec)?;
    let metrics = match compute_metrics(&result) {
        Ok(m) => Some(m),
        Err(SimError::EmptyResult) => None,
        Err(e) => return Err(e.into()),
    };
    let files = export_results(&result, metrics.as_ref(), out).map_err(|e| Failure::io(out, e))?;
    Ok((result, metrics, files))
}

pub fn cmd_run(args: &RunArgs) -> CmdResult {
    let spec = load_scenario(&args.scenario, &[])?;
    let (result, metrics, files) = run_to_dir(&spec, &args.out)?;
    let mut stdout = summary_table(&result, metrics.as_ref());
    let _ = writeln!(
        stdout,
        "wrote {} files to {}",
        files.len(),
        args.out.display()
    );
    Ok(Outcome { stdout, files })
}

/// Per-vehicle table in the layout of the published results table, followed
/// by the aggregate line.
pub fn summary_table(result: &SimResult, metrics: Option<&Metrics>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>7} {:>4} {:>9} {:>9} {:>10} {:>10} {:>9}",
        "vehicle", "path", "v_min", "v_avg", "travel_s", "sched_s", "rmse_%"
    );
    for tr in &result.traces {
        let v_min = tr.samples.iter().map(|x| x.v).fold(f64::INFINITY, f64::min);
        let travel = tr.travel_time();
        let sched = tr.scheduled_exit - tr.entry_time;
        let err = 100.0 * (tr.achieved_exit - tr.scheduled_exit).abs() / travel;
        let _ = writeln!(
            s,
            "{:>7} {:>4} {:>9.4} {:>9.4} {:>10.3} {:>10.3} {:>9.3}",
            tr.vehicle.0,
            tr.path.0,
            v_min,
            tr.zone_length / travel,
            travel,
            sched,
            err
        );
    }
    match metrics {
        Some(m) => {
            let _ = writeln!(
                s,
                "overall: v_min {:.4} m/s, v_avg {:.4} m/s, exit-time RMSE {:.3} %, violations {}",
                m.v_min_overall, m.v_avg_overall, m.exit_time_rmse_pct, m.violation_count
            );
        }
        None => s.push_str("no vehicles scheduled\n"),
    }
    s
}

/// One sweep axis: a key and the literal values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_axis(raw: &str) -> Result<Axis, Failure> {
    let bad = || {
        Failure::new(
            EXIT_PARSE,
            format!("bad --vary `{raw}`: expected key=v1,v2,..."),
        )
    };
    let (key, values) = raw.split_once('=').ok_or_else(bad)?;
    let key = key.trim();
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.is_empty() || values.iter().any(String::is_empty) {
        return Err(bad());
    }
    Ok(Axis {
        key: key.to_string(),
        values,
    })
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn sweep_points(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.key.clone(), v.clone()));
                    p
                })
            })
            .collect()
    })
}

#[derive(Debug, Serialize)]
struct IndexEntry {
    point: usize,
    dir: String,
    overrides: Vec<String>,
    status: &'static str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chosen_horizons: Option<Vec<(u32, f64)>>,
}

pub const SWEEP_INDEX_FILE: &str = "index.json";

pub fn point_dir_name(i: usize) -> String {
    format!("point_{i:03}")
}

/// Runs every point; a failing point is recorded in the index and the sweep
/// carries on. The exit status is that of the first failing point.
pub fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    let axes = args
        .vary
        .iter()
        .map(|v| parse_axis(v))
        .collect::<Result<Vec<_>, _>>()?;
    // fail fast on a broken base file rather than once per point
    load_scenario(&args.scenario, &[])?;
    let points = sweep_points(&axes);
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(&args.out, e))?;

    let run_point = |(i, point): (usize, &Vec<(String, String)>)| -> IndexEntry {
        let overrides: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let dir = point_dir_name(i);
        let outcome = load_scenario(&args.scenario, &overrides)
            .and_then(|spec| run_to_dir(&spec, &args.out.join(&dir)));
        match outcome {
            Ok((result, metrics, _)) => IndexEntry {
                point: i,
                dir,
                overrides,
                status: "ok",
                exit_code: EXIT_OK,
                error: None,
                metrics,
                chosen_horizons: Some(
                    result
                        .schedule
                        .iter()
                        .map(|o| (o.plan.vehicle.0, o.chosen_horizon))
                        .collect(),
                ),
            },
            Err(f) => IndexEntry {
                point: i,
                dir,
                overrides,
                status: "failed",
                exit_code: f.code,
                error: Some(f.message),
                metrics: None,
                chosen_horizons: None,
            },
        }
    };

    let entries: Vec<IndexEntry> = if args.jobs == 1 {
        points.iter().enumerate().map(run_point).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Failure::new(EXIT_IO, format!("thread pool: {e}")))?;
        pool.install(|| points.par_iter().enumerate().map(run_point).collect())
    };

    let index = args.out.join(SWEEP_INDEX_FILE);
    let mut json = serde_json::to_string_pretty(&entries).expect("index serializes");
    json.push('\n');
    fs::write(&index, json).map_err(|e| Failure::io(&index, e))?;

    let mut stdout = String::new();
    for e in &entries {
        let _ = writeln!(
            stdout,
            "{} [{}] {}{}",
            e.dir,
            e.overrides.join(" "),
            e.status,
            e.error
                .as_deref()
                .map(|m| format!(": {m}"))
                .unwrap_or_default()
        );
    }
    let failed = entries.iter().filter(|e| e.exit_code != EXIT_OK).count();
    let _ = writeln!(
        stdout,
        "{} points, {} failed; index at {}",
        entries.len(),
        failed,
        index.display()
    );
    match entries.iter().find(|e| e.exit_code != EXIT_OK) {
        Some(first) => Err(Failure {
            stdout,
            ..Failure::new(
                first.exit_code,
                format!("{failed} of {} sweep points failed", entries.len()),
            )
        }),
        None => Ok(Outcome {
            stdout,
            files: vec![index],
        }),
    }
}

pub fn cmd_report(dir: &Path) -> CmdResult {
    let record = load_run_record(dir)?;
    let files = write_plot_data(&record, dir).map_err(|e| Failure::io(dir, e))?;
    let mut stdout = String::new();
    for f in &files {
        let _ = writeln!(stdout, "wrote {}", f.display());
    }
    Ok(Outcome { stdout, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sweep_covers_every_combination_once(sizes in prop::collection::vec(1usize..4, 0..4)) {
            let axes: Vec<Axis> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| Axis { key: format!("k{i}"), values: (0..n).map(|v| v.to_string()).collect() })
                .collect();
            let pts = sweep_points(&axes);
            prop_assert_eq!(pts.len(), sizes.iter().product::<usize>());
            let unique: std::collections::BTreeSet<_> = pts.iter().collect();
            prop_assert_eq!(unique.len(), pts.len());
            prop_assert!(pts.iter().all(|p| p.len() == axes.len()));
        }
    }

    #[test]
    fn axis_parsing() {
        let a = parse_axis("params.t_h=0.5, 1.0").unwrap();
        assert_eq!(a.key, "params.t_h");
        assert_eq!(a.values, ["0.5", "1.0"]);
        assert_eq!(parse_axis("params.t_h").unwrap_err().code, EXIT_PARSE);
        assert_eq!(parse_axis("params.t_h=1.0,").unwrap_err().code, EXIT_PARSE);
    }

    #[test]
    fn cartesian_product_order() {
        let axes = [
            Axis {
                key: "a".into(),
                values: vec!["1".into(), "2".into()],
            },
            Axis {
                key: "b".into(),
                values: vec!["x".into(), "y".into(), "z".into()],
            },
        ];
        let pts = sweep_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], [("a".into(), "1".into()), ("b".into(), "x".into())]);
        assert_eq!(pts[5], [("a".into(), "2".into()), ("b".into(), "z".into())]);
        assert_eq!(sweep_points(&[]), vec![Vec::<(String, String)>::new()]);
    }

    #[test]
    fn error_codes() {
        let f: Failure = ScenarioError::UnknownField { field: "x".into() }.into();
        assert_eq!(f.code, EXIT_PARSE);
        let f: Failure = ScenarioError::Invariant {
            field: "x".into(),
            message: "y".into(),
        }
        .into();
        assert_eq!(f.code, EXIT_INVARIANT);
        let f: Failure = ScenarioError::DanglingReference {
            field: "x".into(),
            target: "path 3".into(),
        }
        .into();
        assert_eq!(f.code, EXIT_INVARIANT);
        let f: Failure = LoadError::Missing("schedule.csv".into()).into();
        assert_eq!(f.code, EXIT_IO);
        assert!(f.message.contains("schedule.csv"));
    }

    #[test]
    fn point_names_sort() {
        assert_eq!(point_dir_name(7), "point_007");
        assert!(point_dir_name(9) < point_dir_name(10));
    }
}
