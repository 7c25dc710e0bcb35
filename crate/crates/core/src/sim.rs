//! Deterministic scenario execution.
//!
//! Arrivals are fed to the coordinator in entry order; every committed plan is
//! then evaluated at the global sample ticks `k / sample_rate`. Without
//! disturbance the plan is evaluated in closed form, so achieved and
//! scheduled states coincide exactly. With a speed-noise disturbance the
//! position is integrated from the perturbed speed at the sample step.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::ids::{NodeId, PathId, VehicleId};
use crate::safety::{check_lateral, rear_end_worst, SafetyError, ViolationKind};
use crate::scheduler::{InfeasibilityPolicy, ScheduleError};
use crate::{
    Arrival, CoordinatorDb, PathGeometry, PathMap, SafetyViolation, ScheduleOutcome,
    SchedulerConfig, VehicleParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    /// Sampling rate of the logged trajectories, Hz.
    pub sample_rate: f64,
    /// Stop logging after this absolute time; `None` runs until the last exit.
    pub duration: Option<f64>,
    pub seed: u64,
    /// Standard deviation of the zero-mean speed-tracking noise, m/s.
    pub disturbance_std: f64,
    pub grid_step: f64,
    pub policy: InfeasibilityPolicy<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            sample_rate: 20.0,
            duration: None,
            seed: 0,
            disturbance_std: 0.0,
            grid_step: 0.01,
            policy: InfeasibilityPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub geoms: Vec<PathGeometry>,
    pub params: VehicleParams,
    /// Sorted by entry time.
    pub arrivals: Vec<Arrival>,
    pub sim: SimSettings,
}

impl ScenarioSpec {
    pub fn path_map(&self) -> PathMap {
        self.geoms.iter().map(|g| (g.id(), g.clone())).collect()
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            grid_step: self.sim.grid_step,
            policy: self.sim.policy,
            ..SchedulerConfig::default()
        }
    }

    fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if !(self.sim.sample_rate.is_finite() && self.sim.sample_rate > 0.0) {
            return bad(format!(
                "sample_rate {} must be positive",
                self.sim.sample_rate
            ));
        }
        if !(self.sim.disturbance_std >= 0.0 && self.sim.disturbance_std.is_finite()) {
            return bad(format!(
                "disturbance_std {} must be non-negative",
                self.sim.disturbance_std
            ));
        }
        let paths = self.path_map();
        for pair in self.arrivals.windows(2) {
            if pair[1].entry_time < pair[0].entry_time {
                return bad(format!("arrivals not sorted at {}", pair[1].vehicle));
            }
        }
        if let Some(a) = self.arrivals.iter().find(|a| !paths.contains_key(&a.path)) {
            return bad(format!("{} references unknown {}", a.vehicle, a.path));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("scheduling arrival #{index} ({vehicle}) failed: {source}")]
    Schedule {
        index: usize,
        vehicle: VehicleId,
        #[source]
        source: ScheduleError,
    },
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error("no vehicles in result")]
    EmptyResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrace {
    pub vehicle: VehicleId,
    pub path: PathId,
    pub entry_time: f64,
    pub zone_length: f64,
    pub scheduled_exit: f64,
    pub achieved_exit: f64,
    pub samples: Vec<Sample>,
}

impl VehicleTrace {
    pub fn travel_time(&self) -> f64 {
        self.achieved_exit - self.entry_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingRecord {
    pub vehicle: VehicleId,
    pub node: NodeId,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub scenario: ScenarioSpec,
    pub traces: Vec<VehicleTrace>,
    pub crossings: Vec<CrossingRecord>,
    pub schedule: Vec<ScheduleOutcome>,
    pub violations: Vec<SafetyViolation>,
}

/// Runs a scenario end to end.
pub fn run(spec: &ScenarioSpec) -> Result<SimResult, SimError> {
    spec.check()?;
    let geoms = spec.path_map();
    let mut db = CoordinatorDb::new(geoms.clone(), spec.params, spec.scheduler_config())
        .map_err(|e| SimError::InvalidSpec(e.to_string()))?;

    let mut schedule = Vec::with_capacity(spec.arrivals.len());
    for (index, arrival) in spec.arrivals.iter().enumerate() {
        db.release_exited(arrival.entry_time);
        let outcome = db
            .register_arrival(*arrival)
            .map_err(|source| SimError::Schedule {
                index,
                vehicle: arrival.vehicle,
                source,
            })?;
        schedule.push(outcome);
    }

    let rate = spec.sim.sample_rate;
    let mut traces = Vec::with_capacity(schedule.len());
    let mut crossings = Vec::new();
    for outcome in &schedule {
        let geom = &geoms[&outcome.plan.path];
        let (trace, crossed) = if spec.sim.disturbance_std > 0.0 {
            disturbed_trace(
                outcome,
                geom,
                rate,
                spec.sim.duration,
                spec.sim.seed,
                spec.sim.disturbance_std,
            )
        } else {
            exact_trace(outcome, geom, rate, spec.sim.duration)?
        };
        traces.push(trace);
        crossings.extend(crossed);
    }
    crossings.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.vehicle.cmp(&b.vehicle)));

    let violations = if spec.sim.disturbance_std > 0.0 {
        sampled_violations(&traces, &crossings, &spec.params, rate)
    } else {
        exact_violations(&schedule, &geoms, &spec.params)?
    };

    Ok(SimResult {
        scenario: spec.clone(),
        traces,
        crossings,
        schedule,
        violations,
    })
}

fn tick_range(from: f64, to: f64, rate: f64) -> std::ops::RangeInclusive<i64> {
    let first = (from * rate).ceil() as i64;
    let last = (to * rate).floor() as i64;
    first..=last
}

fn exact_trace(
    outcome: &ScheduleOutcome,
    geom: &PathGeometry,
    rate: f64,
    duration: Option<f64>,
) -> Result<(VehicleTrace, Vec<CrossingRecord>), SimError> {
    let plan = &outcome.plan;
    let c = &plan.coefficients;
    let end = duration.map_or(plan.exit_time(), |d| d.min(plan.exit_time()));
    let mut samples = Vec::new();
    for k in tick_range(plan.entry_time, end, rate) {
        let t = k as f64 / rate;
        let local = (t - plan.entry_time).clamp(0.0, c.horizon());
        samples.push(Sample {
            t,
            p: c.position_at(local),
            v: c.speed_at(local),
            u: c.accel_at(local),
        });
    }
    let crossed = crate::safety::plan_crossings(plan, geom)?
        .into_iter()
        .map(|(node, time)| CrossingRecord {
            vehicle: plan.vehicle,
            node,
            time,
        })
        .collect();
    Ok((
        VehicleTrace {
            vehicle: plan.vehicle,
            path: plan.path,
            entry_time: plan.entry_time,
            zone_length: c.zone_length(),
            scheduled_exit: plan.exit_time(),
            achieved_exit: plan.exit_time(),
            samples,
        },
        crossed,
    ))
}

fn disturbed_trace(
    outcome: &ScheduleOutcome,
    geom: &PathGeometry,
    rate: f64,
    duration: Option<f64>,
    seed: u64,
    std: f64,
) -> (VehicleTrace, Vec<CrossingRecord>) {
    let plan = &outcome.plan;
    let c = &plan.coefficients;
    let s = c.zone_length();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(plan.vehicle.0));
    let noise = Normal::new(0.0, std).expect("finite non-negative std");

    let nominal = |t: f64| {
        let local = t - plan.entry_time;
        if local >= c.horizon() {
            (c.exit_speed(), 0.0)
        } else {
            let local = local.max(0.0);
            (c.speed_at(local), c.accel_at(local))
        }
    };

    let mut samples = Vec::new();
    let mut crossed = Vec::new();
    let mut nodes = geom.nodes().iter().peekable();
    let (mut t_prev, mut p_prev) = (plan.entry_time, 0.0);
    let mut v_prev = (nominal(t_prev).0 + noise.sample(&mut rng)).max(0.0);
    let mut k = (plan.entry_time * rate).ceil() as i64;
    if (k as f64 / rate) <= plan.entry_time {
        samples.push(Sample {
            t: plan.entry_time,
            p: 0.0,
            v: v_prev,
            u: nominal(t_prev).1,
        });
        k += 1;
    }
    // Bounded so a pathological noise draw cannot loop forever.
    let max_ticks = k + ((c.horizon() * 20.0 + 60.0) * rate) as i64;
    let achieved_exit = loop {
        let t = k as f64 / rate;
        let p = p_prev + v_prev * (t - t_prev);
        while let Some(&&(node, station)) = nodes.peek() {
            if p < station {
                break;
            }
            crossed.push(CrossingRecord {
                vehicle: plan.vehicle,
                node,
                time: t_prev + (station - p_prev) / v_prev,
            });
            nodes.next();
        }
        if p >= s {
            break t_prev + (s - p_prev) / v_prev;
        }
        if k >= max_ticks {
            break f64::NAN;
        }
        let (v_nom, u_nom) = nominal(t);
        let v = (v_nom + noise.sample(&mut rng)).max(0.0);
        if duration.is_none_or(|d| t <= d) {
            samples.push(Sample { t, p, v, u: u_nom });
        }
        t_prev = t;
        p_prev = p;
        v_prev = v;
        k += 1;
    };
    (
        VehicleTrace {
            vehicle: plan.vehicle,
            path: plan.path,
            entry_time: plan.entry_time,
            zone_length: s,
            scheduled_exit: plan.exit_time(),
            achieved_exit,
            samples,
        },
        crossed,
    )
}

/// Every pairwise headway and consecutive same-path rear-end check on the committed plans.
fn exact_violations(
    schedule: &[ScheduleOutcome],
    geoms: &PathMap,
    params: &VehicleParams,
) -> Result<Vec<SafetyViolation>, SimError> {
    let plans: Vec<_> = schedule.iter().map(|o| o.plan).collect();
    let mut out = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        out.extend(check_lateral(plan, &plans[i + 1..], geoms, params.t_h)?);
        let leader = plans[..i]
            .iter()
            .rev()
            .find(|q| q.path == plan.path && q.entry_time <= plan.entry_time);
        if let Some(leader) = leader {
            if let Some((margin, time)) = rear_end_worst(plan, leader, params)? {
                if margin < 0.0 {
                    out.push(SafetyViolation {
                        vehicle: plan.vehicle,
                        other: leader.vehicle,
                        kind: ViolationKind::RearEnd { time },
                        margin,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Violations measured on the achieved (disturbed) trajectories.
fn sampled_violations(
    traces: &[VehicleTrace],
    crossings: &[CrossingRecord],
    params: &VehicleParams,
    rate: f64,
) -> Vec<SafetyViolation> {
    let mut out = Vec::new();
    let mut by_node: BTreeMap<NodeId, Vec<&CrossingRecord>> = BTreeMap::new();
    for c in crossings {
        by_node.entry(c.node).or_default().push(c);
    }
    for (node, list) in &by_node {
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                let gap = (b.time - a.time).abs();
                if gap < params.t_h {
                    out.push(SafetyViolation {
                        vehicle: b.vehicle,
                        other: a.vehicle,
                        kind: ViolationKind::Lateral { node: *node },
                        margin: gap - params.t_h,
                    });
                }
            }
        }
    }
    let tick = |t: f64| (t * rate).round() as i64;
    for (i, follower) in traces.iter().enumerate() {
        let Some(leader) = traces[..i].iter().rev().find(|l| l.path == follower.path) else {
            continue;
        };
        let lead: BTreeMap<i64, &Sample> = leader.samples.iter().map(|s| (tick(s.t), s)).collect();
        let worst = follower
            .samples
            .iter()
            .filter_map(|s| {
                lead.get(&tick(s.t)).map(|l| {
                    let g = l.p - s.p - params.length - params.gamma - params.phi * s.v;
                    (g, s.t)
                })
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((margin, time)) = worst {
            if margin < 0.0 {
                out.push(SafetyViolation {
                    vehicle: follower.vehicle,
                    other: leader.vehicle,
                    kind: ViolationKind::RearEnd { time },
                    margin,
                });
            }
        }
    }
    out
}

/// Summary statistics mirroring the columns of a per-vehicle results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub vehicles: usize,
    pub v_min_overall: f64,
    /// Time-average speed over each vehicle's residence, averaged over vehicles.
    pub v_avg_overall: f64,
    pub travel_times: BTreeMap<u32, f64>,
    /// Smallest gap between consecutive crossings of each node.
    pub node_min_headway: BTreeMap<u32, f64>,
    pub violation_count: usize,
    /// Root-mean-square of (achieved - scheduled exit) / travel time, percent.
    pub exit_time_rmse_pct: f64,
}

pub fn compute_metrics(result: &SimResult) -> Result<Metrics, SimError> {
    if result.traces.is_empty() {
        return Err(SimError::EmptyResult);
    }
    let v_min_overall = result
        .traces
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| s.v))
        .fold(f64::INFINITY, f64::min);
    let n = result.traces.len() as f64;
    let v_avg_overall = result
        .traces
        .iter()
        .map(|t| t.zone_length / t.travel_time())
        .sum::<f64>()
        / n;
    let travel_times = result
        .traces
        .iter()
        .map(|t| (t.vehicle.0, t.travel_time()))
        .collect();

    let mut by_node: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for c in &result.crossings {
        by_node.entry(c.node.0).or_default().push(c.time);
    }
    let node_min_headway = by_node
        .into_iter()
        .filter(|(_, times)| times.len() >= 2)
        .map(|(node, mut times)| {
            times.sort_by(f64::total_cmp);
            let gap = times
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            (node, gap)
        })
        .collect();

    let sq = result
        .traces
        .iter()
        .map(|t| {
            let scheduled = t.scheduled_exit - t.entry_time;
            ((t.achieved_exit - t.scheduled_exit) / scheduled).powi(2)
        })
        .sum::<f64>();
    Ok(Metrics {
        vehicles: result.traces.len(),
        v_min_overall,
        v_avg_overall,
        travel_times,
        node_min_headway,
        violation_count: result.violations.len(),
        exit_time_rmse_pct: 100.0 * (sq / n).sqrt(),
    })
}
