//! Conflict sets and the two safety predicates evaluated on cubic plans:
//! node time-headway between vehicles sharing a lateral node, and rear-end
//! spacing between consecutive vehicles on one path.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::{NodeId, PathId, VehicleId};
use crate::primitive::{PrimitiveCoefficients, PrimitiveError, VehicleParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SafetyError {
    #[error("{node} is not on {path}")]
    NodeNotOnPath { node: NodeId, path: PathId },
    #[error("rear-end check needs a common path, got {follower} and {leader}")]
    DifferentPaths { follower: PathId, leader: PathId },
    #[error("leader entered at {leader_entry} after follower at {follower_entry}")]
    LeaderEntersLater {
        leader_entry: f64,
        follower_entry: f64,
    },
    #[error("unknown {0}")]
    UnknownPath(PathId),
    #[error("invalid path geometry for {path}: {reason}")]
    InvalidGeometry { path: PathId, reason: String },
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

/// Control-zone length of a path and the stations of its lateral nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry<T> {
    id: PathId,
    zone_length: T,
    nodes: Vec<(NodeId, T)>,
}

pub type PathMap<T> = BTreeMap<PathId, PathGeometry<T>>;

impl<T: Scalar> PathGeometry<T> {
    /// `nodes` are `(node, station)` pairs ordered along the path.
    pub fn new(id: PathId, zone_length: T, nodes: Vec<(NodeId, T)>) -> Result<Self, SafetyError> {
        let invalid = |reason: String| SafetyError::InvalidGeometry { path: id, reason };
        if !(zone_length.is_finite() && zone_length > T::zero()) {
            return Err(invalid(format!(
                "zone length {zone_length} must be positive"
            )));
        }
        let mut seen = BTreeSet::new();
        let mut prev = T::zero();
        for (i, &(node, station)) in nodes.iter().enumerate() {
            if !(station > T::zero() && station < zone_length) {
                return Err(invalid(format!(
                    "{node} station {station} must lie strictly inside (0, {zone_length})"
                )));
            }
            if i > 0 && station <= prev {
                return Err(invalid(format!(
                    "{node} station {station} is not increasing"
                )));
            }
            if !seen.insert(node) {
                return Err(invalid(format!("{node} listed twice")));
            }
            prev = station;
        }
        Ok(Self {
            id,
            zone_length,
            nodes,
        })
    }

    pub fn id(&self) -> PathId {
        self.id
    }

    pub fn zone_length(&self) -> T {
        self.zone_length
    }

    pub fn nodes(&self) -> &[(NodeId, T)] {
        &self.nodes
    }

    pub fn station(&self, node: NodeId) -> Option<T> {
        self.nodes.iter().find(|(n, _)| *n == node).map(|&(_, s)| s)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|&(n, _)| n)
    }
}

/// Nodes shared by two paths.
pub fn conflict_set<T: Scalar>(
    geom_i: &PathGeometry<T>,
    geom_j: &PathGeometry<T>,
) -> BTreeSet<NodeId> {
    let nj: BTreeSet<NodeId> = geom_j.node_ids().collect();
    geom_i.node_ids().filter(|n| nj.contains(n)).collect()
}

/// A committed plan bound to a path and an absolute entry time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPlan<T> {
    pub vehicle: VehicleId,
    pub path: PathId,
    pub entry_time: T,
    pub coefficients: PrimitiveCoefficients<T>,
}

impl<T: Scalar> TrajectoryPlan<T> {
    pub fn new(
        vehicle: VehicleId,
        path: PathId,
        entry_time: T,
        coefficients: PrimitiveCoefficients<T>,
    ) -> Self {
        Self {
            vehicle,
            path,
            entry_time,
            coefficients,
        }
    }

    pub fn exit_time(&self) -> T {
        self.entry_time + self.coefficients.horizon()
    }

    /// Position along the path at absolute time `t`, clamped to the plan's horizon.
    pub fn position_at(&self, t: T) -> T {
        let local = (t - self.entry_time)
            .max(T::zero())
            .min(self.coefficients.horizon());
        self.coefficients.position_at(local)
    }

    pub fn speed_at(&self, t: T) -> T {
        let local = (t - self.entry_time)
            .max(T::zero())
            .min(self.coefficients.horizon());
        self.coefficients.speed_at(local)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind<T> {
    /// Rear-end gap fell short; `time` is the absolute instant of the worst margin.
    RearEnd { time: T },
    /// Node crossings closer than the time headway.
    Lateral { node: NodeId },
}

/// A breached constraint. `margin` is negative: metres for rear-end, seconds for lateral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyViolation<T> {
    pub vehicle: VehicleId,
    pub other: VehicleId,
    pub kind: ViolationKind<T>,
    pub margin: T,
}

/// Absolute time at which `plan` reaches `node`.
pub fn node_crossing_time<T: Scalar>(
    plan: &TrajectoryPlan<T>,
    geom: &PathGeometry<T>,
    node: NodeId,
) -> Result<T, SafetyError> {
    let station = geom.station(node).ok_or(SafetyError::NodeNotOnPath {
        node,
        path: geom.id,
    })?;
    Ok(plan.entry_time + plan.coefficients.inverse_position(station)?)
}

/// Crossing times of every node on the plan's path, in station order.
pub fn plan_crossings<T: Scalar>(
    plan: &TrajectoryPlan<T>,
    geom: &PathGeometry<T>,
) -> Result<Vec<(NodeId, T)>, SafetyError> {
    geom.nodes
        .iter()
        .map(|&(node, station)| {
            Ok((
                node,
                plan.entry_time + plan.coefficients.inverse_position(station)?,
            ))
        })
        .collect()
}

/// Headway check on precomputed crossing tables.
///
/// Reports one violation per shared node whose crossings are less than `t_h` apart.
pub fn lateral_violations<'a, T, I>(
    vehicle: VehicleId,
    crossings: &[(NodeId, T)],
    others: I,
    t_h: T,
) -> Vec<SafetyViolation<T>>
where
    T: Scalar,
    I: IntoIterator<Item = (VehicleId, &'a [(NodeId, T)])>,
{
    let mut out = Vec::new();
    for (other, other_crossings) in others {
        for &(node, t_i) in crossings {
            if let Some(&(_, t_j)) = other_crossings.iter().find(|(n, _)| *n == node) {
                let gap = (t_i - t_j).abs();
                if gap < t_h {
                    out.push(SafetyViolation {
                        vehicle,
                        other,
                        kind: ViolationKind::Lateral { node },
                        margin: gap - t_h,
                    });
                }
            }
        }
    }
    out
}

fn geom_of<T>(geoms: &PathMap<T>, path: PathId) -> Result<&PathGeometry<T>, SafetyError> {
    geoms.get(&path).ok_or(SafetyError::UnknownPath(path))
}

/// Time-headway constraint of `plan` against every committed plan that shares a node with it.
pub fn check_lateral<T: Scalar>(
    plan: &TrajectoryPlan<T>,
    committed: &[TrajectoryPlan<T>],
    geoms: &PathMap<T>,
    t_h: T,
) -> Result<Vec<SafetyViolation<T>>, SafetyError> {
    let own = plan_crossings(plan, geom_of(geoms, plan.path)?)?;
    let tables = committed
        .iter()
        .filter(|j| j.vehicle != plan.vehicle)
        .map(|j| Ok((j.vehicle, plan_crossings(j, geom_of(geoms, j.path)?)?)))
        .collect::<Result<Vec<_>, SafetyError>>()?;
    Ok(lateral_violations(
        plan.vehicle,
        &own,
        tables.iter().map(|(v, c)| (*v, c.as_slice())),
        t_h,
    ))
}

/// Worst rear-end margin and the absolute time it occurs, or `None` if the
/// two plans never share the zone.
pub fn rear_end_worst<T: Scalar>(
    follower: &TrajectoryPlan<T>,
    leader: &TrajectoryPlan<T>,
    params: &VehicleParams<T>,
) -> Result<Option<(T, T)>, SafetyError> {
    if follower.path != leader.path {
        return Err(SafetyError::DifferentPaths {
            follower: follower.path,
            leader: leader.path,
        });
    }
    if leader.entry_time > follower.entry_time {
        return Err(SafetyError::LeaderEntersLater {
            leader_entry: leader.entry_time.to_f64_lossy(),
            follower_entry: follower.entry_time.to_f64_lossy(),
        });
    }
    let end = follower.exit_time().min(leader.exit_time());
    if end <= follower.entry_time {
        return Ok(None);
    }
    // Follower-local time s in [0, w]; the leader is `head` seconds into its plan.
    let w = end - follower.entry_time;
    let head = follower.entry_time - leader.entry_time;
    let fc = &follower.coefficients;
    let lc = &leader.coefficients;
    let offset = params.length + params.gamma;
    let g = |s: T| {
        let ls = (s + head).min(lc.horizon());
        lc.position_at(ls) - fc.position_at(s) - offset - params.phi * fc.speed_at(s)
    };

    // g(s) = A s^3 + B s^2 + C s + D with the leader cubic shifted by `head`.
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let cap_a = lc.a() - fc.a();
    let cap_b = three * lc.a() * head + lc.b() - fc.b() - three * params.phi * fc.a();
    let cap_c = three * lc.a() * head * head + two * lc.b() * head + lc.c()
        - fc.c()
        - two * params.phi * fc.b();

    let mut best = (g(T::zero()), follower.entry_time);
    let wv = g(w);
    if wv < best.0 {
        best = (wv, end);
    }
    for s in quadratic_roots(three * cap_a, two * cap_b, cap_c) {
        if s > T::zero() && s < w {
            let v = g(s);
            if v < best.0 {
                best = (v, follower.entry_time + s);
            }
        }
    }
    Ok(Some(best))
}

/// Minimum over the shared residence window of `p_leader - p_follower - L - gamma - phi v_follower`.
///
/// Returns `+inf` when the leader exits before the follower enters.
pub fn rear_end_margin<T: Scalar>(
    follower: &TrajectoryPlan<T>,
    leader: &TrajectoryPlan<T>,
    params: &VehicleParams<T>,
) -> Result<T, SafetyError> {
    Ok(rear_end_worst(follower, leader, params)?.map_or(T::infinity(), |(m, _)| m))
}

/// Real roots of `a x^2 + b x + c`, degrading to the linear case when `a == 0`.
fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    if a == T::zero() {
        if b == T::zero() {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = T::lit(-0.5) * (b + if b >= T::zero() { sq } else { -sq });
    let mut roots = vec![];
    if q != T::zero() {
        roots.push(q / a);
        roots.push(c / q);
    } else {
        roots.push(T::zero());
    }
    roots
}

fn rear_end_violation<T: Scalar>(
    follower: &TrajectoryPlan<T>,
    leader: &TrajectoryPlan<T>,
    params: &VehicleParams<T>,
) -> Result<Option<SafetyViolation<T>>, SafetyError> {
    Ok(match rear_end_worst(follower, leader, params)? {
        Some((margin, time)) if margin < T::zero() => Some(SafetyViolation {
            vehicle: follower.vehicle,
            other: leader.vehicle,
            kind: ViolationKind::RearEnd { time },
            margin,
        }),
        _ => None,
    })
}

/// Rear-end constraints of `plan` on its own path: against its predecessor
/// (the most recently committed plan that entered no later) and, as leader,
/// against any committed plan that enters after it.
pub fn rear_end_violations<T: Scalar>(
    plan: &TrajectoryPlan<T>,
    snapshot: &[TrajectoryPlan<T>],
    params: &VehicleParams<T>,
) -> Result<Vec<SafetyViolation<T>>, SafetyError> {
    let mut out = Vec::new();
    let same_path = snapshot
        .iter()
        .filter(|j| j.path == plan.path && j.vehicle != plan.vehicle);
    if let Some(leader) = same_path
        .clone()
        .filter(|j| j.entry_time <= plan.entry_time)
        .last()
    {
        out.extend(rear_end_violation(plan, leader, params)?);
    }
    for follower in same_path.filter(|j| j.entry_time > plan.entry_time) {
        out.extend(rear_end_violation(follower, plan, params)?);
    }
    Ok(out)
}

/// All violations of `plan` against a database snapshot; empty iff the plan is admissible.
pub fn check_plan<T: Scalar>(
    plan: &TrajectoryPlan<T>,
    snapshot: &[TrajectoryPlan<T>],
    geoms: &PathMap<T>,
    params: &VehicleParams<T>,
) -> Result<Vec<SafetyViolation<T>>, SafetyError> {
    let mut out = check_lateral(plan, snapshot, geoms, params.t_h)?;
    out.extend(rear_end_violations(plan, snapshot, params)?);
    Ok(out)
}
