//! Energy-optimal, safety-constrained scheduling of connected automated
//! vehicles through a multi-lane roundabout.
//!
//! Each vehicle entering the control zone commits to a cubic motion
//! primitive whose only free parameter is the exit horizon. The scheduler
//! picks the smallest horizon inside the closed-form speed/control window
//! that keeps node time-headways and rear-end gaps against every plan already
//! committed to the coordinator database.
//!
//! The planning core ([`primitive`], [`safety`], [`scheduler`]) is generic over
//! [`Scalar`]; the simulator and file formats work in `f64` through the
//! aliases below.

pub mod ids;
pub mod plot;
pub mod primitive;
pub mod safety;
pub mod scalar;
pub mod scenario;
pub mod scheduler;
pub mod sim;

pub use ids::{NodeId, PathId, VehicleId};
pub use scalar::Scalar;

pub type Primitive = primitive::PrimitiveCoefficients<f64>;
pub type VehicleParams = primitive::VehicleParams<f64>;
pub type ExitTimeWindow = primitive::ExitTimeWindow<f64>;
pub type PathGeometry = safety::PathGeometry<f64>;
pub type PathMap = safety::PathMap<f64>;
pub type TrajectoryPlan = safety::TrajectoryPlan<f64>;
pub type SafetyViolation = safety::SafetyViolation<f64>;
pub type CoordinatorDb = scheduler::CoordinatorDb<f64>;
pub type Arrival = scheduler::Arrival<f64>;
pub type ScheduleOutcome = scheduler::ScheduleOutcome<f64>;
pub type SchedulerConfig = scheduler::SchedulerConfig<f64>;
