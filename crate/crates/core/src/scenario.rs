//! Scenario files (TOML) and result export.
//!
//! A scenario has four top-level sections: `params`, `paths`, `arrivals` and
//! `sim`. All quantities are SI without unit suffixes. `params` and `sim` are
//! optional and fall back to the scaled-city defaults.
//!
//! ```toml
//! [params]
//! t_h = 1.0
//!
//! [[paths]]
//! id = 1
//! length = 3.0
//! nodes = [{ id = 2, station = 1.6 }, { id = 3, station = 2.3 }]
//!
//! [[arrivals]]
//! vehicle = 1
//! path = 1
//! time = 0.0
//! speed = 0.1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, PathId, VehicleId};
use crate::plot::{self, RunRecord, ScheduleRow, TrajectoryRow};
use crate::scheduler::InfeasibilityPolicy;
use crate::sim::{Metrics, ScenarioSpec, SimResult, SimSettings};
use crate::{Arrival, PathGeometry, VehicleParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("syntax error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Syntax {
        line: Option<usize>,
        message: String,
    },
    #[error("schema error: {message}")]
    Schema { message: String },
    #[error("unknown field `{field}`")]
    UnknownField { field: String },
    #[error("`{field}` references unknown {target}")]
    DanglingReference { field: String, target: String },
    #[error("`{field}`: {message}")]
    Invariant { field: String, message: String },
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
}

impl ScenarioError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Syntax { .. } => "syntax",
            Self::Schema { .. } => "schema",
            Self::UnknownField { .. } => "unknown_field",
            Self::DanglingReference { .. } => "dangling_reference",
            Self::Invariant { .. } => "invariant",
            Self::BadOverride(_) => "bad_override",
        }
    }

    /// True for failures to read the document, false for well-formed documents
    /// describing an invalid scenario.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            Self::Syntax { .. }
                | Self::Schema { .. }
                | Self::UnknownField { .. }
                | Self::BadOverride(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    #[default]
    Error,
    Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct ParamsSection {
    v_min: f64,
    v_max: f64,
    u_min: f64,
    u_max: f64,
    gamma: f64,
    phi: f64,
    length: f64,
    t_h: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let p = VehicleParams::default();
        Self {
            v_min: p.v_min,
            v_max: p.v_max,
            u_min: p.u_min,
            u_max: p.u_max,
            gamma: p.gamma,
            phi: p.phi,
            length: p.length,
            t_h: p.t_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeSection {
    id: u32,
    station: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathSection {
    id: u32,
    length: f64,
    #[serde(default)]
    nodes: Vec<NodeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrivalSection {
    vehicle: u32,
    path: u32,
    time: f64,
    speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct SimSection {
    sample_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    seed: u64,
    disturbance_std: f64,
    grid_step: f64,
    infeasibility_policy: PolicyName,
    /// Hold step of the delay policy.
    delay_step: f64,
    /// Longest hold the delay policy may impose.
    max_delay: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            sample_rate: s.sample_rate,
            duration: s.duration,
            seed: s.seed,
            disturbance_std: s.disturbance_std,
            grid_step: s.grid_step,
            infeasibility_policy: PolicyName::Error,
            delay_step: 0.1,
            max_delay: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    params: ParamsSection,
    paths: Vec<PathSection>,
    #[serde(default)]
    arrivals: Vec<ArrivalSection>,
    #[serde(default)]
    sim: SimSection,
}

fn line_of(doc: &str, offset: usize) -> usize {
    doc[..offset.min(doc.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

fn syntax(doc: &str, e: toml::de::Error) -> ScenarioError {
    ScenarioError::Syntax {
        line: e.span().map(|s| line_of(doc, s.start)),
        message: e.message().to_string(),
    }
}

fn read_file(doc: &str) -> Result<ScenarioFile, ScenarioError> {
    let de = toml::Deserializer::parse(doc).map_err(|e| syntax(doc, e))?;
    let mut unknown = Vec::new();
    let file: ScenarioFile = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| {
            let line = e.span().map(|s| line_of(doc, s.start));
            ScenarioError::Schema {
                message: match line {
                    Some(l) => format!("line {l}: {}", e.message()),
                    None => e.message().to_string(),
                },
            }
        })?;
    if let Some(field) = unknown.into_iter().next() {
        return Err(ScenarioError::UnknownField { field });
    }
    Ok(file)
}

struct Checker;

impl Checker {
    fn finite(field: impl Into<String>, v: f64) -> Result<f64, ScenarioError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ScenarioError::Invariant {
                field: field.into(),
                message: format!("{v} is not finite"),
            })
        }
    }

    fn require(
        ok: bool,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Result<(), ScenarioError> {
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invariant {
                field: field.into(),
                message: message.into(),
            })
        }
    }
}

fn validate(file: &ScenarioFile) -> Result<ScenarioSpec, ScenarioError> {
    let p = &file.params;
    for (name, v) in [
        ("v_min", p.v_min),
        ("v_max", p.v_max),
        ("u_min", p.u_min),
        ("u_max", p.u_max),
        ("gamma", p.gamma),
        ("phi", p.phi),
        ("length", p.length),
        ("t_h", p.t_h),
    ] {
        Checker::finite(format!("params.{name}"), v)?;
    }
    Checker::require(p.u_min < 0.0, "params.u_min", "must be negative")?;
    Checker::require(p.u_max > 0.0, "params.u_max", "must be positive")?;
    Checker::require(p.v_min > 0.0, "params.v_min", "must be positive")?;
    Checker::require(p.v_max >= p.v_min, "params.v_max", "must be at least v_min")?;
    Checker::require(p.gamma >= 0.0, "params.gamma", "must be non-negative")?;
    Checker::require(p.phi >= 0.0, "params.phi", "must be non-negative")?;
    Checker::require(p.length > 0.0, "params.length", "must be positive")?;
    Checker::require(p.t_h > 0.0, "params.t_h", "must be positive")?;
    let params = VehicleParams {
        u_min: p.u_min,
        u_max: p.u_max,
        v_min: p.v_min,
        v_max: p.v_max,
        gamma: p.gamma,
        phi: p.phi,
        length: p.length,
        t_h: p.t_h,
    };

    let mut geoms = Vec::with_capacity(file.paths.len());
    let mut path_ids = BTreeSet::new();
    for (i, path) in file.paths.iter().enumerate() {
        let f = |name: &str| format!("paths[{i}].{name}");
        Checker::require(
            path_ids.insert(path.id),
            f("id"),
            format!("duplicate path id {}", path.id),
        )?;
        Checker::finite(f("length"), path.length)?;
        Checker::require(path.length > 0.0, f("length"), "must be positive")?;
        let mut seen = BTreeSet::new();
        let mut prev = 0.0;
        for (k, node) in path.nodes.iter().enumerate() {
            let nf = |name: &str| format!("paths[{i}].nodes[{k}].{name}");
            Checker::require(
                seen.insert(node.id),
                nf("id"),
                format!("node {} listed twice", node.id),
            )?;
            Checker::finite(nf("station"), node.station)?;
            Checker::require(
                node.station > 0.0 && node.station < path.length,
                nf("station"),
                format!("must lie strictly inside (0, {})", path.length),
            )?;
            Checker::require(
                node.station > prev,
                nf("station"),
                "stations must increase along the path",
            )?;
            prev = node.station;
        }
        let geom = PathGeometry::new(
            PathId(path.id),
            path.length,
            path.nodes
                .iter()
                .map(|n| (NodeId(n.id), n.station))
                .collect(),
        )
        .map_err(|e| ScenarioError::Invariant {
            field: format!("paths[{i}]"),
            message: e.to_string(),
        })?;
        geoms.push(geom);
    }

    let mut arrivals = Vec::with_capacity(file.arrivals.len());
    let mut vehicles = BTreeSet::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, a) in file.arrivals.iter().enumerate() {
        let f = |name: &str| format!("arrivals[{i}].{name}");
        if !path_ids.contains(&a.path) {
            return Err(ScenarioError::DanglingReference {
                field: f("path"),
                target: PathId(a.path).to_string(),
            });
        }
        Checker::require(
            vehicles.insert(a.vehicle),
            f("vehicle"),
            format!("duplicate vehicle id {}", a.vehicle),
        )?;
        Checker::finite(f("time"), a.time)?;
        Checker::finite(f("speed"), a.speed)?;
        Checker::require(a.time >= 0.0, f("time"), "must be non-negative")?;
        Checker::require(
            a.time >= last_time,
            f("time"),
            "arrivals must be sorted by time",
        )?;
        Checker::require(
            a.speed >= params.v_min && a.speed <= params.v_max,
            f("speed"),
            format!(
                "must lie in [v_min, v_max] = [{}, {}]",
                params.v_min, params.v_max
            ),
        )?;
        last_time = a.time;
        arrivals.push(Arrival {
            vehicle: VehicleId(a.vehicle),
            path: PathId(a.path),
            entry_time: a.time,
            entry_speed: a.speed,
        });
    }

    let s = &file.sim;
    Checker::finite("sim.sample_rate", s.sample_rate)?;
    Checker::require(s.sample_rate > 0.0, "sim.sample_rate", "must be positive")?;
    if let Some(d) = s.duration {
        Checker::finite("sim.duration", d)?;
        Checker::require(d > 0.0, "sim.duration", "must be positive")?;
    }
    Checker::finite("sim.disturbance_std", s.disturbance_std)?;
    Checker::require(
        s.disturbance_std >= 0.0,
        "sim.disturbance_std",
        "must be non-negative",
    )?;
    Checker::finite("sim.grid_step", s.grid_step)?;
    Checker::require(s.grid_step > 0.0, "sim.grid_step", "must be positive")?;
    Checker::finite("sim.delay_step", s.delay_step)?;
    Checker::require(s.delay_step > 0.0, "sim.delay_step", "must be positive")?;
    Checker::finite("sim.max_delay", s.max_delay)?;
    Checker::require(s.max_delay >= 0.0, "sim.max_delay", "must be non-negative")?;
    let policy = match s.infeasibility_policy {
        PolicyName::Error => InfeasibilityPolicy::Error,
        PolicyName::Delay => InfeasibilityPolicy::Delay {
            step: s.delay_step,
            max_delay: s.max_delay,
        },
    };

    Ok(ScenarioSpec {
        geoms,
        params,
        arrivals,
        sim: SimSettings {
            sample_rate: s.sample_rate,
            duration: s.duration,
            seed: s.seed,
            disturbance_std: s.disturbance_std,
            grid_step: s.grid_step,
            policy,
        },
    })
}

/// Parses and validates a scenario document.
pub fn parse_scenario(doc: &str) -> Result<ScenarioSpec, ScenarioError> {
    validate(&read_file(doc)?)
}

/// Serializes a scenario back to TOML; `parse_scenario` inverts it exactly.
pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    let p = &spec.params;
    let (policy, delay_step, max_delay) = match spec.sim.policy {
        InfeasibilityPolicy::Error => {
            let d = SimSection::default();
            (PolicyName::Error, d.delay_step, d.max_delay)
        }
        InfeasibilityPolicy::Delay { step, max_delay } => (PolicyName::Delay, step, max_delay),
    };
    let file = ScenarioFile {
        params: ParamsSection {
            v_min: p.v_min,
            v_max: p.v_max,
            u_min: p.u_min,
            u_max: p.u_max,
            gamma: p.gamma,
            phi: p.phi,
            length: p.length,
            t_h: p.t_h,
        },
        paths: spec
            .geoms
            .iter()
            .map(|g| PathSection {
                id: g.id().0,
                length: g.zone_length(),
                nodes: g
                    .nodes()
                    .iter()
                    .map(|&(n, station)| NodeSection { id: n.0, station })
                    .collect(),
            })
            .collect(),
        arrivals: spec
            .arrivals
            .iter()
            .map(|a| ArrivalSection {
                vehicle: a.vehicle.0,
                path: a.path.0,
                time: a.entry_time,
                speed: a.entry_speed,
            })
            .collect(),
        sim: SimSection {
            sample_rate: spec.sim.sample_rate,
            duration: spec.sim.duration,
            seed: spec.sim.seed,
            disturbance_std: spec.sim.disturbance_std,
            grid_step: spec.sim.grid_step,
            infeasibility_policy: policy,
            delay_step,
            max_delay,
        },
    };
    toml::to_string(&file).expect("scenario is always representable in TOML")
}

/// Applies `key=value` overrides to a scenario document and returns the
/// rewritten document. Keys are dotted paths; array elements are addressed by
/// index (`arrivals.2.time=4.5`). Values are TOML literals, with bare words
/// taken as strings.
pub fn apply_overrides(doc: &str, overrides: &[String]) -> Result<String, ScenarioError> {
    if overrides.is_empty() {
        return Ok(doc.to_string());
    }
    let mut root: toml::Table = doc.parse().map_err(|e| syntax(doc, e))?;
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| ScenarioError::BadOverride(raw.clone()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ScenarioError::BadOverride(raw.clone()));
        }
        let value = parse_value(value.trim());
        set_path(&mut root, key, value)?;
    }
    Ok(toml::to_string(&root).expect("table serializes"))
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ScenarioError> {
    let parts: Vec<&str> = key.split('.').collect();
    let unknown = || ScenarioError::UnknownField {
        field: key.to_string(),
    };
    let (last, head) = parts.split_last().ok_or_else(unknown)?;
    let mut cur: &mut toml::Value = &mut *root
        .entry(head.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| {
            if head.is_empty() {
                value.clone()
            } else {
                toml::Value::Table(toml::Table::new())
            }
        });
    if head.is_empty() {
        *cur = value;
        return Ok(());
    }
    for part in head.iter().skip(1).chain(std::iter::once(last)) {
        let is_last = std::ptr::eq(part, last);
        cur = match cur {
            toml::Value::Table(t) => {
                if is_last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| unknown())?;
                let slot = a.get_mut(idx).ok_or_else(unknown)?;
                if is_last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(unknown()),
        };
    }
    Ok(())
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Files written by [`export_results`].
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const CROSSINGS_FILE: &str = "crossings.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const VIOLATIONS_FILE: &str = "violations.csv";
pub const METRICS_FILE: &str = "metrics.json";

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub(crate) fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}

/// Flattens a result into the rows that go to disk.
pub fn run_record(result: &SimResult) -> RunRecord {
    let trajectories = result
        .traces
        .iter()
        .flat_map(|tr| {
            tr.samples.iter().map(move |s| TrajectoryRow {
                vehicle: tr.vehicle.0,
                t: s.t,
                p: s.p,
                v: s.v,
                u: s.u,
            })
        })
        .collect();
    let schedule = result
        .schedule
        .iter()
        .zip(&result.traces)
        .map(|(o, tr)| ScheduleRow {
            vehicle: o.plan.vehicle.0,
            t0: o.plan.entry_time,
            t_lo: o.window.t_lo,
            t_hi: o.window.t_hi,
            chosen_tf: o.chosen_horizon,
            achieved_tf: tr.achieved_exit - tr.entry_time,
        })
        .collect();
    let crossings = result
        .crossings
        .iter()
        .map(|c| (c.vehicle.0, c.node.0, c.time))
        .collect();
    RunRecord {
        scenario: result.scenario.clone(),
        trajectories,
        schedule,
        crossings,
    }
}

/// Writes every export of a run into `out_dir` and returns the file manifest.
pub fn export_results(
    result: &SimResult,
    metrics: Option<&Metrics>,
    out_dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let record = run_record(result);
    let mut manifest = Vec::new();

    let path = out_dir.join(SCENARIO_FILE);
    fs::write(&path, serialize_scenario(&record.scenario))?;
    manifest.push(path);

    manifest.extend(plot::write_run_tables(&record, out_dir)?);

    let path = out_dir.join(VIOLATIONS_FILE);
    write_csv(
        &path,
        &["vehicle", "other", "kind", "node", "time", "margin"],
        result.violations.iter().map(|v| {
            let (kind, node, time) = match v.kind {
                crate::safety::ViolationKind::RearEnd { time } => {
                    ("rear_end", String::new(), fmt_num(time))
                }
                crate::safety::ViolationKind::Lateral { node } => {
                    ("lateral", node.0.to_string(), String::new())
                }
            };
            vec![
                v.vehicle.0.to_string(),
                v.other.0.to_string(),
                kind.to_string(),
                node,
                time,
                fmt_num(v.margin),
            ]
        }),
    )?;
    manifest.push(path);

    if let Some(m) = metrics {
        let path = out_dir.join(METRICS_FILE);
        let mut json = serde_json::to_string_pretty(m).map_err(io::Error::other)?;
        json.push('\n');
        fs::write(&path, json)?;
        manifest.push(path);
    }

    manifest.extend(plot::write_plot_data(&record, out_dir)?);
    Ok(manifest)
}

/// Loads the tables written by [`export_results`] back from `dir`.
pub fn load_run_record(dir: &Path) -> Result<RunRecord, LoadError> {
    let need = |name: &str| {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(LoadError::Missing(p))
        }
    };
    let scenario_path = need(SCENARIO_FILE)?;
    let schedule_path = need(SCHEDULE_FILE)?;
    let traj_path = need(TRAJECTORIES_FILE)?;
    let cross_path = need(CROSSINGS_FILE)?;

    let doc = fs::read_to_string(&scenario_path)?;
    let scenario = parse_scenario(&doc)?;

    let read = |p: &Path| -> Result<Vec<Vec<String>>, LoadError> {
        let mut r = csv::Reader::from_path(p)
            .map_err(|e| LoadError::Malformed(p.to_path_buf(), e.to_string()))?;
        r.records()
            .map(|rec| {
                rec.map(|r| r.iter().map(str::to_string).collect())
                    .map_err(|e| LoadError::Malformed(p.to_path_buf(), e.to_string()))
            })
            .collect()
    };
    let num = |p: &Path, s: &str| -> Result<f64, LoadError> {
        s.parse()
            .map_err(|_| LoadError::Malformed(p.to_path_buf(), format!("bad number `{s}`")))
    };
    let id = |p: &Path, s: &str| -> Result<u32, LoadError> {
        s.parse()
            .map_err(|_| LoadError::Malformed(p.to_path_buf(), format!("bad id `{s}`")))
    };
    let width = |p: &Path, row: &[String], n: usize| {
        if row.len() == n {
            Ok(())
        } else {
            Err(LoadError::Malformed(
                p.to_path_buf(),
                format!("expected {n} columns, got {}", row.len()),
            ))
        }
    };

    let mut schedule = Vec::new();
    for row in read(&schedule_path)? {
        width(&schedule_path, &row, 6)?;
        schedule.push(ScheduleRow {
            vehicle: id(&schedule_path, &row[0])?,
            t0: num(&schedule_path, &row[1])?,
            t_lo: num(&schedule_path, &row[2])?,
            t_hi: num(&schedule_path, &row[3])?,
            chosen_tf: num(&schedule_path, &row[4])?,
            achieved_tf: num(&schedule_path, &row[5])?,
        });
    }
    let mut trajectories = Vec::new();
    for row in read(&traj_path)? {
        width(&traj_path, &row, 5)?;
        trajectories.push(TrajectoryRow {
            vehicle: id(&traj_path, &row[0])?,
            t: num(&traj_path, &row[1])?,
            p: num(&traj_path, &row[2])?,
            v: num(&traj_path, &row[3])?,
            u: num(&traj_path, &row[4])?,
        });
    }
    let mut crossings = Vec::new();
    for row in read(&cross_path)? {
        width(&cross_path, &row, 3)?;
        crossings.push((
            id(&cross_path, &row[0])?,
            id(&cross_path, &row[1])?,
            num(&cross_path, &row[2])?,
        ));
    }
    Ok(RunRecord {
        scenario,
        trajectories,
        schedule,
        crossings,
    })
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing file {}", .0.display())]
    Missing(PathBuf),
    #[error("malformed {}: {}", .0.display(), .1)]
    Malformed(PathBuf, String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Vehicle to path assignment of a scenario.
pub fn vehicle_paths(spec: &ScenarioSpec) -> BTreeMap<u32, u32> {
    spec.arrivals
        .iter()
        .map(|a| (a.vehicle.0, a.path.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[[paths]]
id = 1
length = 2.0
nodes = [{ id = 1, station = 1.0 }]

[[arrivals]]
vehicle = 1
path = 1
time = 0.0
speed = 0.1
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let spec = parse_scenario(MINIMAL).unwrap();
        assert_eq!(spec.params, VehicleParams::default());
        assert_eq!(spec.sim, SimSettings::default());
        assert_eq!(spec.geoms.len(), 1);
        assert_eq!(spec.arrivals.len(), 1);
        assert_eq!(spec.geoms[0].station(NodeId(1)), Some(1.0));
    }

    #[test]
    fn dangling_path_reference() {
        let doc = MINIMAL.replace("path = 1", "path = 4");
        match parse_scenario(&doc) {
            Err(ScenarioError::DanglingReference { field, .. }) => {
                assert_eq!(field, "arrivals[0].path")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distinct_error_kinds() {
        let e = parse_scenario("[[paths]\nid = 1").unwrap_err();
        assert_eq!(e.kind(), "syntax");
        assert!(matches!(e, ScenarioError::Syntax { line: Some(1), .. }));

        let e = parse_scenario(&format!("{MINIMAL}\n[sim]\nsample_rat = 3.0\n")).unwrap_err();
        match &e {
            ScenarioError::UnknownField { field } => assert_eq!(field, "sim.sample_rat"),
            other => panic!("{other:?}"),
        }

        let e = parse_scenario(&MINIMAL.replace("length = 2.0", "length = \"long\"")).unwrap_err();
        assert_eq!(e.kind(), "schema");
        assert!(e.is_parse_error());

        let e = parse_scenario(&MINIMAL.replace("speed = 0.1", "speed = 0.9")).unwrap_err();
        match &e {
            ScenarioError::Invariant { field, .. } => assert_eq!(field, "arrivals[0].speed"),
            other => panic!("{other:?}"),
        }
        assert!(!e.is_parse_error());

        let e = parse_scenario(&MINIMAL.replace("station = 1.0", "station = 2.5")).unwrap_err();
        assert!(
            matches!(e, ScenarioError::Invariant { ref field, .. } if field == "paths[0].nodes[0].station")
        );

        let e = parse_scenario(&MINIMAL.replace("time = 0.0", "time = nan")).unwrap_err();
        assert!(
            matches!(e, ScenarioError::Invariant { ref field, .. } if field == "arrivals[0].time")
        );
    }

    #[test]
    fn overrides_rewrite_fields() {
        let doc = apply_overrides(
            MINIMAL,
            &[
                "params.t_h=2.5".into(),
                "arrivals.0.time=3".into(),
                "sim.infeasibility_policy=delay".into(),
            ],
        )
        .unwrap();
        let spec = parse_scenario(&doc).unwrap();
        assert_eq!(spec.params.t_h, 2.5);
        assert_eq!(spec.arrivals[0].entry_time, 3.0);
        assert!(matches!(spec.sim.policy, InfeasibilityPolicy::Delay { .. }));

        assert!(matches!(
            apply_overrides(MINIMAL, &["arrivals.7.time=1.0".into()]),
            Err(ScenarioError::UnknownField { .. })
        ));
        assert!(matches!(
            apply_overrides(MINIMAL, &["oops".into()]),
            Err(ScenarioError::BadOverride(_))
        ));
        let doc = apply_overrides(MINIMAL, &["params.bogus=1.0".into()]).unwrap();
        assert!(matches!(
            parse_scenario(&doc),
            Err(ScenarioError::UnknownField { .. })
        ));
    }

    fn spec_strategy() -> impl Strategy<Value = ScenarioSpec> {
        (
            0.01f64..0.1,
            0.0f64..0.3,
            prop::collection::vec(
                (1.0f64..10.0, prop::collection::vec(0.05f64..0.95, 0..4)),
                1..4,
            ),
            prop::collection::vec((0.0f64..5.0, 0.0f64..=1.0), 0..6),
            any::<u32>(),
            prop::option::of(1.0f64..100.0),
            any::<bool>(),
        )
            .prop_map(|(v_min, dv, paths, arr, seed, duration, delay)| {
                let params = VehicleParams {
                    v_min,
                    v_max: v_min + dv,
                    ..VehicleParams::default()
                };
                let geoms: Vec<_> = paths
                    .iter()
                    .enumerate()
                    .map(|(i, (len, fracs))| {
                        let mut f = fracs.clone();
                        f.sort_by(f64::total_cmp);
                        f.dedup();
                        PathGeometry::new(
                            PathId(i as u32 + 1),
                            *len,
                            f.iter()
                                .enumerate()
                                .map(|(k, x)| (NodeId(k as u32 + 1), x * len))
                                .collect(),
                        )
                        .unwrap()
                    })
                    .collect();
                let mut t = 0.0;
                let arrivals = arr
                    .iter()
                    .enumerate()
                    .map(|(i, (dt, vf))| {
                        t += dt;
                        Arrival {
                            vehicle: VehicleId(i as u32),
                            path: PathId((i % geoms.len()) as u32 + 1),
                            entry_time: t,
                            entry_speed: params.v_min + vf * (params.v_max - params.v_min),
                        }
                    })
                    .collect();
                ScenarioSpec {
                    geoms,
                    params,
                    arrivals,
                    sim: SimSettings {
                        seed: seed as u64,
                        duration,
                        policy: if delay {
                            InfeasibilityPolicy::Delay {
                                step: 0.25,
                                max_delay: 30.0,
                            }
                        } else {
                            InfeasibilityPolicy::Error
                        },
                        ..SimSettings::default()
                    },
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(spec in spec_strategy()) {
            let doc = serialize_scenario(&spec);
            let back = parse_scenario(&doc).unwrap();
            prop_assert_eq!(back, spec);
        }
    }
}
