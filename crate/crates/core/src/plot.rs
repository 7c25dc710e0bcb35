//! Plot-ready tables derived from a run.
//!
//! These are plain CSVs meant for whatever plotting tool is at hand. They are
//! computed only from the exported run tables plus the scenario, so `report`
//! can rebuild them from an output directory without rerunning anything.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use crate::scenario::{
    fmt_num, vehicle_paths, write_csv, CROSSINGS_FILE, SCHEDULE_FILE, TRAJECTORIES_FILE,
};
use crate::sim::ScenarioSpec;

pub const EXIT_TIME_BARS_FILE: &str = "exit_time_bars.csv";
pub const SPEED_ENVELOPE_FILE: &str = "speed_envelope.csv";
pub const POSITION_BANDS_FILE: &str = "position_bands.csv";
pub const CROSSING_BANDS_FILE: &str = "crossing_bands.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub vehicle: u32,
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub u: f64,
}

/// Horizons are relative to the entry time `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub vehicle: u32,
    pub t0: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub chosen_tf: f64,
    pub achieved_tf: f64,
}

/// Everything a report needs, in on-disk form.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: ScenarioSpec,
    pub trajectories: Vec<TrajectoryRow>,
    pub schedule: Vec<ScheduleRow>,
    /// (vehicle, node, time)
    pub crossings: Vec<(u32, u32, f64)>,
}

/// trajectories.csv, crossings.csv and schedule.csv.
pub(crate) fn write_run_tables(rec: &RunRecord, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let traj = dir.join(TRAJECTORIES_FILE);
    write_csv(
        &traj,
        &["vehicle", "t", "p", "v", "u"],
        rec.trajectories.iter().map(|r| {
            vec![
                r.vehicle.to_string(),
                fmt_num(r.t),
                fmt_num(r.p),
                fmt_num(r.v),
                fmt_num(r.u),
            ]
        }),
    )?;
    let cross = dir.join(CROSSINGS_FILE);
    write_csv(
        &cross,
        &["vehicle", "node", "time"],
        rec.crossings
            .iter()
            .map(|&(v, n, t)| vec![v.to_string(), n.to_string(), fmt_num(t)]),
    )?;
    let sched = dir.join(SCHEDULE_FILE);
    write_csv(
        &sched,
        &["vehicle", "t0", "t_lo", "t_hi", "chosen_tf", "achieved_tf"],
        rec.schedule.iter().map(|r| {
            vec![
                r.vehicle.to_string(),
                fmt_num(r.t0),
                fmt_num(r.t_lo),
                fmt_num(r.t_hi),
                fmt_num(r.chosen_tf),
                fmt_num(r.achieved_tf),
            ]
        }),
    )?;
    Ok(vec![traj, cross, sched])
}

/// Writes the four plot tables.
///
/// * exit-time bars: feasible window against chosen and achieved horizon
/// * speed envelope: per path, min/avg/max speed over the vehicles on it as a
///   function of time since entry, next to the admissible band
/// * position bands: position and the rear clearance a follower must respect
/// * crossing bands: each node crossing widened by half a headway on both
///   sides, so overlapping bands on one node mean a headway violation
pub fn write_plot_data(rec: &RunRecord, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let p = &rec.scenario.params;
    let paths = vehicle_paths(&rec.scenario);
    let path_of = |v: u32| paths.get(&v).map(u32::to_string).unwrap_or_default();

    let bars = dir.join(EXIT_TIME_BARS_FILE);
    write_csv(
        &bars,
        &[
            "vehicle",
            "path",
            "t0",
            "t_lo",
            "t_hi",
            "chosen_tf",
            "achieved_tf",
        ],
        rec.schedule.iter().map(|r| {
            vec![
                r.vehicle.to_string(),
                path_of(r.vehicle),
                fmt_num(r.t0),
                fmt_num(r.t_lo),
                fmt_num(r.t_hi),
                fmt_num(r.chosen_tf),
                fmt_num(r.achieved_tf),
            ]
        }),
    )?;

    let env = dir.join(SPEED_ENVELOPE_FILE);
    write_csv(
        &env,
        &[
            "path", "t_rel", "v_min", "v_avg", "v_max", "vehicles", "limit_lo", "limit_hi",
        ],
        speed_envelope(rec).into_iter().map(|e| {
            vec![
                e.path.to_string(),
                fmt_num(e.t_rel),
                fmt_num(e.v_min),
                fmt_num(e.v_avg),
                fmt_num(e.v_max),
                e.vehicles.to_string(),
                fmt_num(p.v_min),
                fmt_num(p.v_max),
            ]
        }),
    )?;

    let bands = dir.join(POSITION_BANDS_FILE);
    write_csv(
        &bands,
        &["vehicle", "path", "t", "p", "rear_clearance"],
        rec.trajectories.iter().map(|r| {
            vec![
                r.vehicle.to_string(),
                path_of(r.vehicle),
                fmt_num(r.t),
                fmt_num(r.p),
                fmt_num(r.p - p.length - p.gamma - p.phi * r.v),
            ]
        }),
    )?;

    let mut crossings = rec.crossings.clone();
    crossings.sort_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)));
    let half = p.t_h / 2.0;
    let cb = dir.join(CROSSING_BANDS_FILE);
    write_csv(
        &cb,
        &["node", "vehicle", "time", "band_lo", "band_hi"],
        crossings.iter().map(|&(v, n, t)| {
            vec![
                n.to_string(),
                v.to_string(),
                fmt_num(t),
                fmt_num(t - half),
                fmt_num(t + half),
            ]
        }),
    )?;

    Ok(vec![bars, env, bands, cb])
}

/// One row of a per-path speed envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub path: u32,
    pub t_rel: f64,
    pub v_min: f64,
    pub v_avg: f64,
    pub v_max: f64,
    pub vehicles: usize,
}

/// Speed statistics across the vehicles of each path, on a grid of time since
/// entry with the sampling period as step. Each trace is linearly
/// interpolated and only contributes while it has samples on both sides.
pub fn speed_envelope(rec: &RunRecord) -> Vec<EnvelopePoint> {
    let paths = vehicle_paths(&rec.scenario);
    let dt = 1.0 / rec.scenario.sim.sample_rate;
    // (t0, samples as (t, v)) per vehicle, grouped by path
    type Trace = (f64, Vec<(f64, f64)>);
    let mut by_path: BTreeMap<u32, Vec<Trace>> = BTreeMap::new();
    for row in &rec.schedule {
        let Some(&path) = paths.get(&row.vehicle) else {
            continue;
        };
        let samples: Vec<(f64, f64)> = rec
            .trajectories
            .iter()
            .filter(|r| r.vehicle == row.vehicle)
            .map(|r| (r.t, r.v))
            .collect();
        if !samples.is_empty() {
            by_path.entry(path).or_default().push((row.t0, samples));
        }
    }

    let mut out = Vec::new();
    for (path, traces) in by_path {
        let horizon = traces
            .iter()
            .map(|(t0, s)| s.last().map_or(0.0, |l| l.0 - t0))
            .fold(0.0, f64::max);
        let steps = (horizon / dt).floor() as usize;
        for k in 0..=steps {
            let tau = k as f64 * dt;
            let vs: Vec<f64> = traces
                .iter()
                .filter_map(|(t0, s)| interp(s, t0 + tau))
                .collect();
            if vs.is_empty() {
                continue;
            }
            let v_min = vs.iter().copied().fold(f64::INFINITY, f64::min);
            let v_max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // clamp guards the last ulp of the summation
            let v_avg = (vs.iter().sum::<f64>() / vs.len() as f64).clamp(v_min, v_max);
            out.push(EnvelopePoint {
                path,
                t_rel: tau,
                v_min,
                v_avg,
                v_max,
                vehicles: vs.len(),
            });
        }
    }
    out
}

fn interp(samples: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = samples.first()?;
    let last = samples.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let i = samples.partition_point(|s| s.0 < t);
    if i < samples.len() && samples[i].0 == t {
        return Some(samples[i].1);
    }
    let (a, b) = (samples[i - 1], samples[i]);
    Some(a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0))
}
