//! Coordinator database and the single-variable exit-time search.
//!
//! The coordinator makes no decisions: it stores committed plans. Each
//! arriving vehicle reads a snapshot of it, scans its admissible window for
//! the smallest horizon whose primitive violates no headway or rear-end
//! constraint, and commits that plan. Committed plans are never revised.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ids::{NodeId, PathId, VehicleId};
use crate::primitive::{
    build_primitive, exit_time_window, ExitTimeWindow, PrimitiveError, VehicleParams,
};
use crate::safety::{
    lateral_violations, plan_crossings, rear_end_violations, PathGeometry, PathMap, SafetyError,
    SafetyViolation, TrajectoryPlan, ViolationKind,
};
use crate::scalar::Scalar;

/// What to do when no horizon in the window is admissible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InfeasibilityPolicy<T> {
    /// Reject the arrival with the blocking constraints.
    Error,
    /// Hold the vehicle at the zone boundary, retrying every `step` seconds
    /// for at most `max_delay` seconds.
    Delay { step: T, max_delay: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerConfig<T> {
    /// Spacing of the horizon scan.
    pub grid_step: T,
    /// Width at which bisection between a rejected and an accepted grid point stops.
    pub refine_tol: T,
    pub policy: InfeasibilityPolicy<T>,
}

impl<T: Scalar> Default for SchedulerConfig<T> {
    fn default() -> Self {
        Self {
            grid_step: T::lit(0.01),
            refine_tol: T::lit(1e-4),
            policy: InfeasibilityPolicy::Error,
        }
    }
}

/// Entry state of a vehicle reaching the control-zone boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival<T> {
    pub vehicle: VehicleId,
    pub path: PathId,
    pub entry_time: T,
    pub entry_speed: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleOutcome<T> {
    pub plan: TrajectoryPlan<T>,
    pub window: ExitTimeWindow<T>,
    pub chosen_horizon: T,
    /// Number of candidate horizons checked against the snapshot.
    pub search_evaluations: usize,
    /// Time the vehicle was held at the boundary (zero unless the delay policy kicked in).
    pub delay: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockingKind {
    RearEnd,
    Lateral(NodeId),
}

/// A constraint that rejected every scanned horizon at least once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockingConstraint {
    pub other: VehicleId,
    pub kind: BlockingKind,
    /// Most negative margin seen over the scan.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("{vehicle} arrives at {time} before the previous arrival at {previous}")]
    OutOfOrder {
        vehicle: VehicleId,
        time: f64,
        previous: f64,
    },
    #[error("{vehicle} has an invalid entry time {time}")]
    InvalidEntryTime { vehicle: VehicleId, time: f64 },
    #[error("{vehicle} references unknown {path}")]
    UnknownPath { vehicle: VehicleId, path: PathId },
    #[error("{0} already has a plan in the control zone")]
    DuplicateVehicle(VehicleId),
    #[error("{vehicle}: {source}")]
    InfeasibleEntry {
        vehicle: VehicleId,
        #[source]
        source: PrimitiveError,
    },
    #[error("{vehicle}: no admissible exit time in [{t_lo}, {t_hi}] ({} blocking constraints)", blocking.len())]
    Infeasible {
        vehicle: VehicleId,
        t_lo: f64,
        t_hi: f64,
        blocking: Vec<BlockingConstraint>,
    },
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

#[derive(Debug, Clone)]
struct Committed<T> {
    plan: TrajectoryPlan<T>,
    crossings: Vec<(NodeId, T)>,
}

/// Plans visible to an arriving vehicle, with their node crossings precomputed.
#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    plans: Vec<TrajectoryPlan<T>>,
    crossings: Vec<Vec<(NodeId, T)>>,
}

impl<T: Scalar> Snapshot<T> {
    pub fn plans(&self) -> &[TrajectoryPlan<T>] {
        &self.plans
    }

    /// Every violation of `plan` against the snapshot.
    pub fn violations(
        &self,
        plan: &TrajectoryPlan<T>,
        geom: &PathGeometry<T>,
        params: &VehicleParams<T>,
    ) -> Result<Vec<SafetyViolation<T>>, SafetyError> {
        let own = plan_crossings(plan, geom)?;
        let others = self
            .plans
            .iter()
            .zip(&self.crossings)
            .filter(|(p, _)| p.vehicle != plan.vehicle)
            .map(|(p, c)| (p.vehicle, c.as_slice()));
        let mut out = lateral_violations(plan.vehicle, &own, others, params.t_h);
        out.extend(rear_end_violations(plan, &self.plans, params)?);
        Ok(out)
    }
}

/// Smallest admissible horizon found by [`solve_exit_time`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution<T> {
    pub horizon: T,
    pub evaluations: usize,
}

/// Minimum-horizon search over `window` for a vehicle entering `geom` at
/// `entry_time` with `entry_speed`.
///
/// Scans `t_lo, t_lo + grid_step, ...` up to `t_hi`. `t_lo` is returned
/// exactly when admissible; otherwise the first admissible grid point is
/// refined by bisection against the rejected point before it. The admissible
/// set may be disconnected, so the scan never assumes monotonicity.
#[allow(clippy::too_many_arguments)]
pub fn solve_exit_time<T: Scalar>(
    vehicle: VehicleId,
    geom: &PathGeometry<T>,
    entry_time: T,
    entry_speed: T,
    window: &ExitTimeWindow<T>,
    snapshot: &Snapshot<T>,
    params: &VehicleParams<T>,
    config: &SchedulerConfig<T>,
) -> Result<Solution<T>, ScheduleError> {
    let mut evaluations = 0usize;
    let mut blocking: BTreeMap<(VehicleId, BlockingKind), f64> = BTreeMap::new();
    let mut admissible = |h: T| -> Result<bool, ScheduleError> {
        evaluations += 1;
        let coefficients = build_primitive(geom.zone_length(), entry_speed, h)?;
        let plan = TrajectoryPlan::new(vehicle, geom.id(), entry_time, coefficients);
        let violations = snapshot.violations(&plan, geom, params)?;
        for v in &violations {
            let kind = match v.kind {
                ViolationKind::RearEnd { .. } => BlockingKind::RearEnd,
                ViolationKind::Lateral { node } => BlockingKind::Lateral(node),
            };
            let m = v.margin.to_f64_lossy();
            blocking
                .entry((v.other, kind))
                .and_modify(|w| *w = w.min(m))
                .or_insert(m);
        }
        Ok(violations.is_empty())
    };

    let (t_lo, t_hi) = (window.t_lo, window.t_hi);
    if admissible(t_lo)? {
        return Ok(Solution {
            horizon: t_lo,
            evaluations,
        });
    }
    let mut prev = t_lo;
    let mut k = 1usize;
    loop {
        let mut h = t_lo + T::from_usize(k).unwrap() * config.grid_step;
        let last = h >= t_hi;
        if last {
            h = t_hi;
        }
        if admissible(h)? {
            let (mut lo, mut hi) = (prev, h);
            while hi - lo > config.refine_tol {
                let mid = T::lit(0.5) * (lo + hi);
                if admissible(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Solution {
                horizon: hi,
                evaluations,
            });
        }
        if last {
            break;
        }
        prev = h;
        k += 1;
    }
    Err(ScheduleError::Infeasible {
        vehicle,
        t_lo: t_lo.to_f64_lossy(),
        t_hi: t_hi.to_f64_lossy(),
        blocking: blocking
            .into_iter()
            .map(|((other, kind), worst_margin)| BlockingConstraint {
                other,
                kind,
                worst_margin,
            })
            .collect(),
    })
}

/// Time-ordered record of committed plans.
///
/// Single writer: arrivals must be registered in nondecreasing entry-time order.
#[derive(Debug, Clone)]
pub struct CoordinatorDb<T> {
    geoms: PathMap<T>,
    params: VehicleParams<T>,
    config: SchedulerConfig<T>,
    active: Vec<Committed<T>>,
    archive: Vec<Committed<T>>,
    last_arrival: Option<T>,
}

impl<T: Scalar> CoordinatorDb<T> {
    pub fn new(
        geoms: PathMap<T>,
        params: VehicleParams<T>,
        config: SchedulerConfig<T>,
    ) -> Result<Self, ScheduleError> {
        params.validate()?;
        Ok(Self {
            geoms,
            params,
            config,
            active: Vec::new(),
            archive: Vec::new(),
            last_arrival: None,
        })
    }

    pub fn geoms(&self) -> &PathMap<T> {
        &self.geoms
    }

    pub fn params(&self) -> &VehicleParams<T> {
        &self.params
    }

    pub fn config(&self) -> &SchedulerConfig<T> {
        &self.config
    }

    /// Plans not yet released.
    pub fn active_plans(&self) -> impl Iterator<Item = &TrajectoryPlan<T>> {
        self.active.iter().map(|c| &c.plan)
    }

    /// Every plan ever committed, in commit order.
    pub fn committed_plans(&self) -> Vec<TrajectoryPlan<T>> {
        let mut all: Vec<_> = self
            .archive
            .iter()
            .chain(&self.active)
            .map(|c| c.plan)
            .collect();
        all.sort_by(|a, b| a.entry_time.partial_cmp(&b.entry_time).unwrap());
        all
    }

    /// Moves plans with `exit_time <= now` to the archive; returns how many moved.
    pub fn release_exited(&mut self, now: T) -> usize {
        let (gone, keep): (Vec<_>, Vec<_>) = self
            .active
            .drain(..)
            .partition(|c| c.plan.exit_time() <= now);
        self.active = keep;
        let n = gone.len();
        self.archive.extend(gone);
        self.archive
            .sort_by(|a, b| a.plan.entry_time.partial_cmp(&b.plan.entry_time).unwrap());
        n
    }

    /// Plans a vehicle entering at `now` must respect: everything still in the
    /// zone, plus recently exited plans whose node crossings may still lie
    /// within one headway of `now`.
    pub fn snapshot(&self, now: T) -> Snapshot<T> {
        let horizon = now - self.params.t_h;
        let mut picked: Vec<&Committed<T>> = self
            .archive
            .iter()
            .chain(&self.active)
            .filter(|c| c.plan.exit_time() > horizon)
            .collect();
        picked.sort_by(|a, b| a.plan.entry_time.partial_cmp(&b.plan.entry_time).unwrap());
        Snapshot {
            plans: picked.iter().map(|c| c.plan).collect(),
            crossings: picked.iter().map(|c| c.crossings.clone()).collect(),
        }
    }

    /// Schedules and commits the plan of one arriving vehicle.
    pub fn register_arrival(
        &mut self,
        arrival: Arrival<T>,
    ) -> Result<ScheduleOutcome<T>, ScheduleError> {
        let vehicle = arrival.vehicle;
        if !(arrival.entry_time.is_finite() && arrival.entry_time >= T::zero()) {
            return Err(ScheduleError::InvalidEntryTime {
                vehicle,
                time: arrival.entry_time.to_f64_lossy(),
            });
        }
        if let Some(prev) = self.last_arrival {
            if arrival.entry_time < prev {
                return Err(ScheduleError::OutOfOrder {
                    vehicle,
                    time: arrival.entry_time.to_f64_lossy(),
                    previous: prev.to_f64_lossy(),
                });
            }
        }
        let geom = self
            .geoms
            .get(&arrival.path)
            .ok_or(ScheduleError::UnknownPath {
                vehicle,
                path: arrival.path,
            })?
            .clone();
        if self
            .active
            .iter()
            .any(|c| c.plan.vehicle == vehicle && c.plan.exit_time() > arrival.entry_time)
        {
            return Err(ScheduleError::DuplicateVehicle(vehicle));
        }
        let window = exit_time_window(geom.zone_length(), arrival.entry_speed, &self.params)
            .map_err(|source| ScheduleError::InfeasibleEntry { vehicle, source })?;

        let mut delay = T::zero();
        let solution = loop {
            let entry_time = arrival.entry_time + delay;
            let snapshot = self.snapshot(entry_time);
            match solve_exit_time(
                vehicle,
                &geom,
                entry_time,
                arrival.entry_speed,
                &window,
                &snapshot,
                &self.params,
                &self.config,
            ) {
                Ok(s) => break s,
                Err(e @ ScheduleError::Infeasible { .. }) => match self.config.policy {
                    InfeasibilityPolicy::Delay { step, max_delay } if delay + step <= max_delay => {
                        delay = delay + step;
                    }
                    _ => return Err(e),
                },
                Err(e) => return Err(e),
            }
        };

        self.last_arrival = Some(arrival.entry_time);
        let coefficients =
            build_primitive(geom.zone_length(), arrival.entry_speed, solution.horizon)?;
        let plan = TrajectoryPlan::new(
            vehicle,
            arrival.path,
            arrival.entry_time + delay,
            coefficients,
        );
        let crossings = plan_crossings(&plan, &geom)?;
        self.active.push(Committed { plan, crossings });
        Ok(ScheduleOutcome {
            plan,
            window,
            chosen_horizon: solution.horizon,
            search_evaluations: solution.evaluations,
            delay,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::{check_lateral, rear_end_margin};
    use proptest::prelude::*;

    fn geoms() -> PathMap<f64> {
        let mk = |id: u32, s: f64, nodes: &[(u32, f64)]| {
            (
                PathId(id),
                PathGeometry::new(
                    PathId(id),
                    s,
                    nodes.iter().map(|&(n, l)| (NodeId(n), l)).collect(),
                )
                .unwrap(),
            )
        };
        [
            mk(1, 3.0, &[(2, 1.6), (3, 2.3)]),
            mk(2, 2.8, &[(1, 1.1), (2, 2.0)]),
            mk(3, 3.2, &[(1, 1.5), (3, 2.6)]),
        ]
        .into()
    }

    fn db() -> CoordinatorDb<f64> {
        CoordinatorDb::new(
            geoms(),
            VehicleParams::default(),
            SchedulerConfig::default(),
        )
        .unwrap()
    }

    fn arrival(v: u32, path: u32, t0: f64, v0: f64) -> Arrival<f64> {
        Arrival {
            vehicle: VehicleId(v),
            path: PathId(path),
            entry_time: t0,
            entry_speed: v0,
        }
    }

    /// Exhaustive 1e-4 s grid: smallest admissible horizon in the window.
    fn grid_oracle(db: &CoordinatorDb<f64>, a: &Arrival<f64>) -> Option<f64> {
        let geom = &db.geoms()[&a.path];
        let w = exit_time_window(geom.zone_length(), a.entry_speed, db.params()).unwrap();
        let snap = db.snapshot(a.entry_time);
        let n = ((w.t_hi - w.t_lo) / 1e-4).floor() as usize;
        (0..=n + 1)
            .map(|k| (w.t_lo + k as f64 * 1e-4).min(w.t_hi))
            .find(|&h| {
                let plan = TrajectoryPlan::new(
                    a.vehicle,
                    a.path,
                    a.entry_time,
                    build_primitive(geom.zone_length(), a.entry_speed, h).unwrap(),
                );
                snap.violations(&plan, geom, db.params())
                    .unwrap()
                    .is_empty()
            })
    }

    #[test]
    fn empty_database_takes_window_lower_bound() {
        let mut db = db();
        let out = db.register_arrival(arrival(1, 1, 0.0, 0.1)).unwrap();
        assert_eq!(out.chosen_horizon, out.window.t_lo);
        assert_eq!(out.search_evaluations, 1);
        assert_eq!(out.plan.exit_time(), out.window.t_lo);
    }

    #[test]
    fn leader_gone_before_follower_enters() {
        let mut db = db();
        let first = db.register_arrival(arrival(1, 1, 0.0, 0.1)).unwrap();
        let t = first.plan.exit_time() + 5.0;
        let second = db.register_arrival(arrival(2, 1, t, 0.1)).unwrap();
        assert_eq!(second.chosen_horizon, second.window.t_lo);
    }

    #[test]
    fn headway_pushes_conflicting_vehicle_later() {
        let mut db = db();
        let first = db.register_arrival(arrival(1, 2, 0.0, 0.1)).unwrap();
        // Path 1 reaches node 2 at 1.6 m; pick the entry so both would cross 0.3 s apart at t_lo.
        let geom1 = db.geoms()[&PathId(1)].clone();
        let w1 = exit_time_window(3.0, 0.1, db.params()).unwrap();
        let probe = TrajectoryPlan::new(
            VehicleId(2),
            PathId(1),
            0.0,
            build_primitive(3.0, 0.1, w1.t_lo).unwrap(),
        );
        let local = crate::safety::node_crossing_time(&probe, &geom1, NodeId(2)).unwrap();
        let cross1 =
            crate::safety::node_crossing_time(&first.plan, &db.geoms()[&PathId(2)], NodeId(2))
                .unwrap();
        let t0 = cross1 - local + 0.3;
        assert!(t0 >= 0.0, "{t0}");
        let a = arrival(2, 1, t0, 0.1);
        let oracle = grid_oracle(&db, &a).unwrap();
        let out = db.register_arrival(a).unwrap();
        assert!(out.chosen_horizon > out.window.t_lo);
        assert!(
            (out.chosen_horizon - oracle).abs() < 1e-3,
            "{} vs {oracle}",
            out.chosen_horizon
        );
        let c2 = crate::safety::node_crossing_time(&out.plan, &geom1, NodeId(2)).unwrap();
        assert!(c2 - cross1 >= 1.0);
        assert!(c2 - cross1 - 1.0 < 1e-3);
    }

    #[test]
    fn exact_safe_gap_keeps_lower_bound() {
        // Both at v_max: t_lo is the constant-speed plan; entry gap of
        // (L + gamma + phi v_max) / v_max gives a zero rear-end margin.
        let mut db = db();
        let p = *db.params();
        let first = db.register_arrival(arrival(1, 1, 0.0, p.v_max)).unwrap();
        let gap = (p.length + p.gamma + p.phi * p.v_max) / p.v_max;
        let second = db.register_arrival(arrival(2, 1, gap, p.v_max)).unwrap();
        assert_eq!(second.chosen_horizon, second.window.t_lo);
        let m = rear_end_margin(&second.plan, &first.plan, &p).unwrap();
        assert!(m.abs() < 1e-9 && m >= -1e-12, "{m}");
    }

    #[test]
    fn protocol_errors() {
        let mut db = db();
        db.register_arrival(arrival(1, 1, 5.0, 0.1)).unwrap();
        assert!(matches!(
            db.register_arrival(arrival(2, 1, 4.0, 0.1)),
            Err(ScheduleError::OutOfOrder { .. })
        ));
        assert!(matches!(
            db.register_arrival(arrival(3, 9, 6.0, 0.1)),
            Err(ScheduleError::UnknownPath { .. })
        ));
        assert!(matches!(
            db.register_arrival(arrival(1, 2, 6.0, 0.1)),
            Err(ScheduleError::DuplicateVehicle(_))
        ));
        assert!(matches!(
            db.register_arrival(arrival(4, 2, 6.0, 0.3)),
            Err(ScheduleError::InfeasibleEntry { .. })
        ));
        assert!(matches!(
            db.register_arrival(arrival(5, 2, f64::NAN, 0.1)),
            Err(ScheduleError::InvalidEntryTime { .. })
        ));
    }

    #[test]
    fn infeasible_reports_blocking_constraints() {
        let params = VehicleParams {
            t_h: 1e9,
            ..VehicleParams::default()
        };
        let mut db = CoordinatorDb::new(geoms(), params, SchedulerConfig::default()).unwrap();
        db.register_arrival(arrival(1, 1, 0.0, 0.1)).unwrap();
        match db.register_arrival(arrival(2, 2, 1.0, 0.1)) {
            Err(ScheduleError::Infeasible {
                vehicle, blocking, ..
            }) => {
                assert_eq!(vehicle, VehicleId(2));
                assert_eq!(blocking.len(), 1);
                assert_eq!(blocking[0].other, VehicleId(1));
                assert_eq!(blocking[0].kind, BlockingKind::Lateral(NodeId(2)));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn delay_policy_holds_vehicle_at_boundary() {
        let config = SchedulerConfig {
            policy: InfeasibilityPolicy::Delay {
                step: 0.5,
                max_delay: 120.0,
            },
            ..SchedulerConfig::default()
        };
        let mut db = CoordinatorDb::new(geoms(), VehicleParams::default(), config).unwrap();
        db.register_arrival(arrival(1, 1, 0.0, 0.05)).unwrap();
        // Same path, same instant, entering faster: only waiting can separate them.
        let out = db.register_arrival(arrival(2, 1, 0.0, 0.15)).unwrap();
        assert!(out.delay > 0.0);
        assert_eq!(out.plan.entry_time, out.delay);
        let first = db.committed_plans()[0];
        assert!(rear_end_margin(&out.plan, &first, db.params()).unwrap() >= 0.0);
    }

    #[test]
    fn release_exited_counts() {
        let mut db = db();
        assert_eq!(db.release_exited(100.0), 0);
        let a = db.register_arrival(arrival(1, 1, 0.0, 0.1)).unwrap();
        let b = db.register_arrival(arrival(2, 3, 10.0, 0.1)).unwrap();
        let c = db.register_arrival(arrival(3, 2, 30.0, 0.1)).unwrap();
        let now = b.plan.exit_time();
        let expected = [a, b, c]
            .iter()
            .filter(|o| o.plan.exit_time() <= now)
            .count();
        assert_eq!(expected, 2);
        assert_eq!(db.release_exited(now), 2);
        assert_eq!(db.active_plans().count(), 1);
        assert_eq!(db.committed_plans().len(), 3);
        assert_eq!(db.release_exited(now), 0);
    }

    #[test]
    fn identical_inputs_give_identical_schedules() {
        let run = || {
            let mut db = db();
            [
                arrival(1, 1, 0.0, 0.1),
                arrival(2, 2, 1.0, 0.12),
                arrival(3, 3, 1.5, 0.07),
                arrival(4, 1, 6.0, 0.15),
            ]
            .into_iter()
            .map(|a| db.register_arrival(a).unwrap().chosen_horizon.to_bits())
            .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    fn arrivals_strategy() -> impl Strategy<Value = Vec<Arrival<f64>>> {
        prop::collection::vec((1u32..=3, 0.0f64..8.0, 0.05f64..=0.15), 1..=4).prop_map(|raw| {
            let mut t = 0.0;
            raw.into_iter()
                .enumerate()
                .map(|(i, (path, dt, v0))| {
                    t += dt;
                    arrival(i as u32 + 1, path, t, v0)
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn schedules_are_safe_and_inside_windows(arrivals in arrivals_strategy()) {
            let mut db = db();
            for a in &arrivals {
                match db.register_arrival(*a) {
                    Ok(out) => prop_assert!(out.window.contains(out.chosen_horizon)),
                    Err(ScheduleError::Infeasible { .. }) => {}
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
            let plans = db.committed_plans();
            for (i, p) in plans.iter().enumerate() {
                let others: Vec<_> = plans.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| *q).collect();
                prop_assert!(check_lateral(p, &others, db.geoms(), db.params().t_h).unwrap().is_empty());
                if let Some(leader) = plans[..i].iter().rev().find(|q| q.path == p.path) {
                    prop_assert!(rear_end_margin(p, leader, db.params()).unwrap() >= 0.0);
                }
            }
        }

        #[test]
        fn extra_committed_plan_never_speeds_up_a_later_arrival(
            arrivals in arrivals_strategy(), extra_path in 1u32..=3, extra_v in 0.05f64..=0.15, frac in 0.0f64..=1.0,
        ) {
            let last = *arrivals.last().unwrap();
            let mut base = db();
            for a in &arrivals[..arrivals.len() - 1] {
                let _ = base.register_arrival(*a);
            }
            let mut more = base.clone();
            let t_prev = if arrivals.len() > 1 { arrivals[arrivals.len() - 2].entry_time } else { 0.0 };
            let extra = arrival(99, extra_path, t_prev + frac * (last.entry_time - t_prev), extra_v);
            prop_assume!(more.register_arrival(extra).is_ok());
            let h_base = base.register_arrival(last).ok().map(|o| o.chosen_horizon);
            let h_more = more.register_arrival(last).ok().map(|o| o.chosen_horizon);
            match (h_base, h_more) {
                (Some(b), Some(m)) => prop_assert!(m >= b, "{m} < {b}"),
                (None, Some(_)) => prop_assert!(false, "extra plan made an infeasible arrival feasible"),
                _ => {}
            }
        }
    }
}
