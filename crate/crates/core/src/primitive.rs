//! Cubic energy-optimal motion primitive.
//!
//! A vehicle entering a control zone of length `S` at speed `v0` follows
//!
//! ```text
//! p(t) = a t^3 + b t^2 + c t + d,   t in [0, t_f]
//! ```
//!
//! with `p(0) = 0`, `v(0) = v0`, `p(t_f) = S` and `u(t_f) = 0`. Those four
//! conditions pin every coefficient once the horizon `t_f` is chosen, so a
//! plan is a one-parameter family in `t_f`. The control `u(t) = 2b(1 - t/t_f)`
//! never changes sign, which puts the extreme control at entry and the extreme
//! speed at exit. [`exit_time_window`] uses that to bound the horizons whose
//! primitive respects the speed and control limits.

use thiserror::Error;

use crate::scalar::Scalar;

const INVERSE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrimitiveError {
    #[error("invalid argument: {what} must be positive and finite, got {value}")]
    InvalidArgument { what: &'static str, value: f64 },
    #[error("{what} = {value} is outside the domain [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("plan is not strictly increasing: minimum speed {min_speed} is not positive")]
    NonMonotone { min_speed: f64 },
    #[error("entry speed {speed} is outside the admissible range [{v_min}, {v_max}]")]
    InfeasibleEntry { speed: f64, v_min: f64, v_max: f64 },
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
}

fn positive<T: Scalar>(what: &'static str, value: T) -> Result<T, PrimitiveError> {
    if value.is_finite() && value > T::zero() {
        Ok(value)
    } else {
        Err(PrimitiveError::InvalidArgument {
            what,
            value: value.to_f64_lossy(),
        })
    }
}

/// Speed and control limits plus the safety parameters shared by every vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams<T> {
    /// Maximum deceleration (negative).
    pub u_min: T,
    pub u_max: T,
    pub v_min: T,
    pub v_max: T,
    /// Standstill distance of the rear-end gap.
    pub gamma: T,
    /// Reaction time of the rear-end gap.
    pub phi: T,
    /// Bumper-to-bumper vehicle length.
    pub length: T,
    /// Minimum time headway between two vehicles crossing the same node.
    pub t_h: T,
}

impl<T: Scalar> Default for VehicleParams<T> {
    /// Scaled-city limits with a 0.2 m vehicle, 0.1 m standstill gap and 1 s reaction time.
    fn default() -> Self {
        Self {
            u_min: T::lit(-0.45),
            u_max: T::lit(0.45),
            v_min: T::lit(0.05),
            v_max: T::lit(0.15),
            gamma: T::lit(0.1),
            phi: T::lit(1.0),
            length: T::lit(0.2),
            t_h: T::lit(1.0),
        }
    }
}

impl<T: Scalar> VehicleParams<T> {
    pub fn validate(&self) -> Result<(), PrimitiveError> {
        let finite = [
            self.u_min,
            self.u_max,
            self.v_min,
            self.v_max,
            self.gamma,
            self.phi,
            self.length,
            self.t_h,
        ]
        .iter()
        .all(|x| x.is_finite());
        let fail = |msg: &str| Err(PrimitiveError::InvalidParams(msg.to_string()));
        if !finite {
            return fail("all parameters must be finite");
        }
        if !(self.u_min < T::zero() && T::zero() < self.u_max) {
            return fail("require u_min < 0 < u_max");
        }
        if !(T::zero() < self.v_min && self.v_min <= self.v_max) {
            return fail("require 0 < v_min <= v_max");
        }
        if self.gamma < T::zero() || self.phi < T::zero() {
            return fail("require gamma >= 0 and phi >= 0");
        }
        if self.length <= T::zero() {
            return fail("require length > 0");
        }
        if self.t_h <= T::zero() {
            return fail("require t_h > 0");
        }
        Ok(())
    }
}

/// Coefficients of a committed cubic primitive in local time `t in [0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveCoefficients<T> {
    a: T,
    b: T,
    c: T,
    d: T,
    horizon: T,
    zone_length: T,
    entry_speed: T,
}

/// Builds the primitive that enters at `entry_speed` and reaches `zone_length`
/// with zero control after `horizon` seconds.
pub fn build_primitive<T: Scalar>(
    zone_length: T,
    entry_speed: T,
    horizon: T,
) -> Result<PrimitiveCoefficients<T>, PrimitiveError> {
    let s = positive("zone_length", zone_length)?;
    let v0 = positive("entry_speed", entry_speed)?;
    let tf = positive("horizon", horizon)?;
    let b = T::lit(3.0) * (s - v0 * tf) / (T::lit(2.0) * tf * tf);
    let a = -b / (T::lit(3.0) * tf);
    Ok(PrimitiveCoefficients {
        a,
        b,
        c: v0,
        d: T::zero(),
        horizon: tf,
        zone_length: s,
        entry_speed: v0,
    })
}

impl<T: Scalar> PrimitiveCoefficients<T> {
    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn d(&self) -> T {
        self.d
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn zone_length(&self) -> T {
        self.zone_length
    }

    pub fn entry_speed(&self) -> T {
        self.entry_speed
    }

    fn check_time(&self, t: T) -> Result<(), PrimitiveError> {
        if t >= T::zero() && t <= self.horizon {
            Ok(())
        } else {
            Err(PrimitiveError::OutOfDomain {
                what: "t",
                value: t.to_f64_lossy(),
                lo: 0.0,
                hi: self.horizon.to_f64_lossy(),
            })
        }
    }

    pub fn position(&self, t: T) -> Result<T, PrimitiveError> {
        self.check_time(t)?;
        Ok(self.position_at(t))
    }

    pub fn speed(&self, t: T) -> Result<T, PrimitiveError> {
        self.check_time(t)?;
        Ok(self.speed_at(t))
    }

    pub fn accel(&self, t: T) -> Result<T, PrimitiveError> {
        self.check_time(t)?;
        Ok(self.accel_at(t))
    }

    /// Cubic value without the domain check.
    #[inline]
    pub fn position_at(&self, t: T) -> T {
        ((self.a * t + self.b) * t + self.c) * t + self.d
    }

    #[inline]
    pub fn speed_at(&self, t: T) -> T {
        (T::lit(3.0) * self.a * t + T::lit(2.0) * self.b) * t + self.c
    }

    #[inline]
    pub fn accel_at(&self, t: T) -> T {
        T::lit(6.0) * self.a * t + T::lit(2.0) * self.b
    }

    /// Speed at the end of the horizon, `b t_f + v0`.
    pub fn exit_speed(&self) -> T {
        self.b * self.horizon + self.c
    }

    /// Speed is monotone on the horizon, so its extremes sit at the endpoints.
    pub fn min_speed(&self) -> T {
        self.c.min(self.exit_speed())
    }

    pub fn max_speed(&self) -> T {
        self.c.max(self.exit_speed())
    }

    /// Control at entry, which is the extreme control of the whole plan.
    pub fn entry_control(&self) -> T {
        T::lit(2.0) * self.b
    }

    /// Local time at which the plan reaches `station`.
    ///
    /// Safeguarded Newton iteration on the bracket `[0, horizon]`; any Newton
    /// step leaving the current bracket is replaced by a bisection step.
    pub fn inverse_position(&self, station: T) -> Result<T, PrimitiveError> {
        if !(station >= T::zero() && station <= self.zone_length) {
            return Err(PrimitiveError::OutOfDomain {
                what: "station",
                value: station.to_f64_lossy(),
                lo: 0.0,
                hi: self.zone_length.to_f64_lossy(),
            });
        }
        let min_speed = self.min_speed();
        if min_speed <= T::zero() {
            return Err(PrimitiveError::NonMonotone {
                min_speed: min_speed.to_f64_lossy(),
            });
        }
        if station == T::zero() {
            return Ok(T::zero());
        }
        if station == self.zone_length {
            return Ok(self.horizon);
        }

        let tol = T::lit(1e-12).max(T::lit(8.0) * T::epsilon() * self.horizon);
        let (mut lo, mut hi) = (T::zero(), self.horizon);
        let mut t = self.horizon * station / self.zone_length;
        for _ in 0..INVERSE_MAX_ITER {
            let f = self.position_at(t) - station;
            if f == T::zero() {
                return Ok(t);
            }
            if f < T::zero() {
                lo = t;
            } else {
                hi = t;
            }
            let mut next = t - f / self.speed_at(t);
            if !(next > lo && next < hi) {
                next = T::lit(0.5) * (lo + hi);
            }
            if (next - t).abs() <= tol || hi - lo <= tol {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }
}

/// Which limit produced the lower end of an [`ExitTimeWindow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LowerBinding {
    ControlBound,
    SpeedBound,
}

/// Which limit produced the upper end of an [`ExitTimeWindow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpperBinding {
    ControlBound,
    SpeedBound,
    /// The deceleration limit can never be reached; the minimum speed binds.
    NoRealRoot,
}

/// Horizons whose primitive respects every speed and control limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitTimeWindow<T> {
    pub t_lo: T,
    pub t_hi: T,
    pub binding_lo: LowerBinding,
    pub binding_hi: UpperBinding,
    /// Horizon at which the entry control equals `u_max`.
    pub t_u_max: T,
    /// Horizon at which the exit speed equals `v_max`.
    pub t_v_max: T,
    /// Smaller horizon at which the entry control equals `u_min`, if it exists.
    pub t_u_min: Option<T>,
    /// Horizon at which the exit speed equals `v_min`.
    pub t_v_min: T,
}

impl<T: Scalar> ExitTimeWindow<T> {
    pub fn contains(&self, t: T) -> bool {
        t >= self.t_lo && t <= self.t_hi
    }

    pub fn width(&self) -> T {
        self.t_hi - self.t_lo
    }
}

/// Closed-form window of admissible horizons for one entry state.
///
/// The lower end is the larger of the `u_max` and `v_max` horizons and the
/// upper end the smaller of the `u_min` and `v_min` horizons; every horizon in
/// between yields a primitive inside all four limits.
pub fn exit_time_window<T: Scalar>(
    zone_length: T,
    entry_speed: T,
    params: &VehicleParams<T>,
) -> Result<ExitTimeWindow<T>, PrimitiveError> {
    params.validate()?;
    let s = positive("zone_length", zone_length)?;
    let v0 = positive("entry_speed", entry_speed)?;
    if v0 < params.v_min || v0 > params.v_max {
        return Err(PrimitiveError::InfeasibleEntry {
            speed: v0.to_f64_lossy(),
            v_min: params.v_min.to_f64_lossy(),
            v_max: params.v_max.to_f64_lossy(),
        });
    }
    let three = T::lit(3.0);
    let six = T::lit(6.0);
    let nine_v0_sq = T::lit(9.0) * v0 * v0;

    // Positive root of u_max t^2 + 3 v0 t - 3S = 0, written as 6S / (sqrt(disc) + 3 v0)
    // to avoid cancellation when u_max S is small against v0^2.
    let disc_max = nine_v0_sq + T::lit(12.0) * s * params.u_max;
    let t_u_max = six * s / (disc_max.sqrt() + three * v0);
    let t_v_max = three * s / (v0 + T::lit(2.0) * params.v_max);
    let t_v_min = three * s / (v0 + T::lit(2.0) * params.v_min);

    let (t_lo, binding_lo) = if t_u_max >= t_v_max {
        (t_u_max, LowerBinding::ControlBound)
    } else {
        (t_v_max, LowerBinding::SpeedBound)
    };

    let disc_min = nine_v0_sq + T::lit(12.0) * s * params.u_min;
    let (t_u_min, t_hi, binding_hi) = if disc_min < T::zero() {
        (None, t_v_min, UpperBinding::NoRealRoot)
    } else {
        // Smaller of the two positive roots of u_min t^2 + 3 v0 t - 3S = 0.
        let small = six * s / (three * v0 + disc_min.sqrt());
        if small < t_v_min {
            (Some(small), small, UpperBinding::ControlBound)
        } else {
            (Some(small), t_v_min, UpperBinding::SpeedBound)
        }
    };

    Ok(ExitTimeWindow {
        t_lo,
        t_hi,
        binding_lo,
        binding_hi,
        t_u_max,
        t_v_max,
        t_u_min,
        t_v_min,
    })
}

/// Horizon of the zero-control plan, `S / v0`.
pub fn constant_speed_time<T: Scalar>(zone_length: T, entry_speed: T) -> Result<T, PrimitiveError> {
    let s = positive("zone_length", zone_length)?;
    let v0 = positive("entry_speed", entry_speed)?;
    Ok(s / v0)
}
