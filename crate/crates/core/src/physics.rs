//! Forward model of one robot: kinematic bicycle, DC drive and battery.
//!
//! The electrical side follows the usual permanent-magnet DC motor
//! accounting. Motor current is `i = (V_m − K_m ω) / R_m` with `ω = v / r_w`,
//! demand power is the motor's electrical input `τ_m ω + i² R_m`, and the
//! battery sees that demand through the sigmoid efficiency blend of
//! [`power_split`]. Rolling resistance `μ (M + w) g` acts at the wheel as a
//! resistive torque, gated to vanish at standstill so that a parked robot
//! stays parked.
//!
//! Integration is fixed-step RK4 on the five vehicle states augmented with
//! three running integrals (battery energy, SOC-tracking error, yaw rate
//! squared), so every cost reported by [`Trajectory`] carries fourth-order
//! accuracy.

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::FrictionField;
use crate::math;
use crate::model::{BatteryParams, ControlInput, RobotParams, RobotState};
use crate::{Error, Result, GRAVITY};

/// Speed below which resistive torques fade linearly to zero, m/s.
pub const STANDSTILL_SPEED: f64 = 1e-3;

/// Default integration step, s.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerRecord {
    pub t: f64,
    pub p_demand: f64,
    pub p_loss: f64,
    pub p_battery: f64,
    pub i_battery: f64,
    pub ocv: f64,
}

/// Time derivative of [`RobotState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateRate {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub soc: f64,
}

/// Everything the model computes at one (state, control) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveOutputs {
    pub rate: StateRate,
    pub motor_current: f64,
    pub motor_torque: f64,
    pub power: PowerRecord,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// Battery power for a given demand: `P/(η(1+e^{−P})) + Pη/(1+e^{P})`, with
/// the exponent read in watts. Tends to `P/η` when drawing and `ηP` when
/// regenerating. Returns `(p_battery, p_loss)` with `p_loss = p_battery − P`.
pub fn power_split(p_demand: f64, efficiency: f64) -> (f64, f64) {
    let p_battery =
        p_demand * logistic(p_demand) / efficiency + p_demand * efficiency * logistic(-p_demand);
    (p_battery, p_battery - p_demand)
}

fn standstill_gate(speed: f64) -> f64 {
    (speed / STANDSTILL_SPEED).clamp(0.0, 1.0)
}

/// Equivalent inertia term `m r_w (1 + J_m / (m r_w²))` of the drive.
pub fn drive_inertia(params: &RobotParams, payload: f64) -> f64 {
    let m = params.mass + payload;
    m * params.wheel_radius + params.motor_inertia / params.wheel_radius
}

/// Rolling-resistance torque at the wheel while moving.
pub fn rolling_torque(params: &RobotParams, payload: f64, mu: f64) -> f64 {
    mu * (params.mass + payload) * GRAVITY * params.wheel_radius
}

/// State derivative and power flows for one robot.
pub fn derivatives(
    state: &RobotState,
    control: &ControlInput,
    params: &RobotParams,
    battery: &BatteryParams,
    payload: f64,
    mu: f64,
) -> Result<DriveOutputs> {
    let omega = state.speed / params.wheel_radius;
    let current = (control.voltage - params.motor_constant * omega) / params.motor_resistance;
    let torque = params.motor_constant * current;
    let gate = standstill_gate(state.speed);
    let resist = (control.brake + rolling_torque(params, payload, mu)) * gate;
    let mut accel = (torque - resist) / drive_inertia(params, payload);
    // The drive does not reverse.
    if state.speed <= 0.0 && accel < 0.0 {
        accel = 0.0;
    }

    let p_demand = torque * omega + current * current * params.motor_resistance;
    let (p_battery, p_loss) = power_split(p_demand, params.efficiency);
    let ocv = battery.ocv(state.soc);
    let i_battery = p_battery / ocv;

    let (sin_h, cos_h) = (math::sin(state.heading), math::cos(state.heading));
    let rate = StateRate {
        x: state.speed * cos_h,
        y: state.speed * sin_h,
        heading: state.speed / params.wheelbase * math::tan(control.steer),
        speed: accel,
        soc: -i_battery / battery.capacity,
    };
    let finite = rate.x.is_finite()
        && rate.y.is_finite()
        && rate.heading.is_finite()
        && rate.speed.is_finite()
        && rate.soc.is_finite()
        && p_battery.is_finite();
    if !finite {
        return Err(Error::ModelBlowUp { t: f64::NAN });
    }
    Ok(DriveOutputs {
        rate,
        motor_current: current,
        motor_torque: torque,
        power: PowerRecord {
            t: 0.0,
            p_demand,
            p_loss,
            p_battery,
            i_battery,
            ocv,
        },
    })
}

/// Feedback or open-loop control law.
pub trait ControlPolicy {
    fn control(&self, t: f64, state: &RobotState) -> ControlInput;
}

impl<F> ControlPolicy for F
where
    F: Fn(f64, &RobotState) -> ControlInput,
{
    fn control(&self, t: f64, state: &RobotState) -> ControlInput {
        self(t, state)
    }
}

/// Adapts a time-only control signal.
pub struct OpenLoop<F>(pub F);

impl<F: Fn(f64) -> ControlInput> ControlPolicy for OpenLoop<F> {
    fn control(&self, t: f64, _state: &RobotState) -> ControlInput {
        (self.0)(t)
    }
}

/// One recorded integration point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: RobotState,
    pub control: ControlInput,
    pub power: PowerRecord,
}

/// Running integrals accumulated alongside the state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostIntegrals {
    /// `∫ P_battery dt`, J.
    pub energy: f64,
    /// `∫ (soc_max − soc)² dt`.
    pub soc_error: f64,
    /// `∫ ψ̇² dt`.
    pub yaw_rate_sq: f64,
}

impl CostIntegrals {
    pub fn objective(&self, w1: f64, w2: f64, w3: f64) -> f64 {
        w1 * self.energy + w2 * self.soc_error + w3 * self.yaw_rate_sq
    }

    pub fn add(&mut self, other: &CostIntegrals) {
        self.energy += other.energy;
        self.soc_error += other.soc_error;
        self.yaw_rate_sq += other.yaw_rate_sq;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub costs: CostIntegrals,
}

impl Trajectory {
    pub fn energy(&self) -> f64 {
        self.costs.energy
    }

    pub fn final_state(&self) -> Option<RobotState> {
        self.samples.last().map(|s| s.state)
    }
}

/// Integration failure carrying what was simulated before it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationFault {
    pub error: Error,
    pub partial: Trajectory,
}

/// Model bundle for one robot carrying a fixed payload over a friction field.
#[derive(Debug, Clone, Copy)]
pub struct Plant<'a> {
    pub params: &'a RobotParams,
    pub battery: &'a BatteryParams,
    pub field: &'a FrictionField,
    pub payload: f64,
}

type Augmented = [f64; 8];

impl Plant<'_> {
    fn eval(&self, t: f64, y: &Augmented, policy: &dyn ControlPolicy) -> Result<(Augmented, ControlInput, DriveOutputs)> {
        let state = unpack(y);
        let control = policy.control(t, &state).clamped(self.params);
        let mu = self.field.mu_at(state.position());
        let out = derivatives(&state, &control, self.params, self.battery, self.payload, mu)
            .map_err(|_| Error::ModelBlowUp { t })?;
        let soc_gap = self.battery.soc_max - state.soc;
        let r = out.rate;
        Ok((
            [
                r.x,
                r.y,
                r.heading,
                r.speed,
                r.soc,
                out.power.p_battery,
                soc_gap * soc_gap,
                r.heading * r.heading,
            ],
            control,
            out,
        ))
    }

    /// Fixed-step RK4 from `t_span.0` to `t_span.1`. The step is shrunk so a
    /// whole number of steps lands exactly on the end time.
    pub fn integrate(
        &self,
        state0: RobotState,
        policy: &dyn ControlPolicy,
        t_span: (f64, f64),
        dt: f64,
    ) -> core::result::Result<Trajectory, Box<SimulationFault>> {
        let (t0, t1) = t_span;
        let fail = |error: Error, partial: Trajectory| Box::new(SimulationFault { error, partial });
        if !(dt > 0.0 && dt.is_finite()) || !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(fail(
                Error::invalid("t_span/dt", "need dt > 0 and t1 ≥ t0"),
                Trajectory::default(),
            ));
        }
        if !state0.is_finite() {
            return Err(fail(Error::NonFinite("initial state"), Trajectory::default()));
        }
        let steps = math::ceil((t1 - t0) / dt - 1e-9).max(0.0) as usize;
        let h = if steps == 0 { 0.0 } else { (t1 - t0) / steps as f64 };

        let mut traj = Trajectory {
            samples: Vec::with_capacity(steps + 1),
            costs: CostIntegrals::default(),
        };
        let mut y = pack(&state0);
        let mut t = t0;
        for k in 0..=steps {
            let (k1, control, out) = match self.eval(t, &y, policy) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, traj)),
            };
            let state = unpack(&y);
            traj.samples.push(Sample {
                t,
                state,
                control,
                power: PowerRecord { t, ..out.power },
            });
            traj.costs = CostIntegrals {
                energy: y[5],
                soc_error: y[6],
                yaw_rate_sq: y[7],
            };
            if state.soc < self.battery.soc_min {
                return Err(fail(
                    Error::Depleted {
                        t,
                        soc: state.soc,
                        soc_min: self.battery.soc_min,
                    },
                    traj,
                ));
            }
            if k == steps {
                break;
            }
            let stage = |c: f64, base: &Augmented, slope: &Augmented| -> Augmented {
                let mut out = *base;
                for (o, s) in out.iter_mut().zip(slope) {
                    *o += c * h * s;
                }
                out
            };
            let step = (|| -> Result<Augmented> {
                let k2 = self.eval(t + 0.5 * h, &stage(0.5, &y, &k1), policy)?.0;
                let k3 = self.eval(t + 0.5 * h, &stage(0.5, &y, &k2), policy)?.0;
                let k4 = self.eval(t + h, &stage(1.0, &y, &k3), policy)?.0;
                let mut next = y;
                for i in 0..8 {
                    next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                Ok(next)
            })();
            match step {
                Ok(next) => y = next,
                Err(e) => return Err(fail(e, traj)),
            }
            // Speed is bounded below by the non-reversing drive; RK4 stages may
            // undershoot by rounding.
            if y[3] < 0.0 {
                y[3] = 0.0;
            }
            t = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * h };
            if !unpack(&y).is_finite() {
                return Err(fail(Error::ModelBlowUp { t }, traj));
            }
        }
        Ok(traj)
    }
}

fn pack(s: &RobotState) -> Augmented {
    [s.x, s.y, s.heading, s.speed, s.soc, 0.0, 0.0, 0.0]
}

fn unpack(y: &Augmented) -> RobotState {
    RobotState {
        x: y[0],
        y: y[1],
        heading: y[2],
        speed: y[3],
        soc: y[4],
    }
}

/// Convenience wrapper around [`Plant::integrate`].
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    state0: RobotState,
    policy: &dyn ControlPolicy,
    params: &RobotParams,
    battery: &BatteryParams,
    field: &FrictionField,
    payload: f64,
    t_span: (f64, f64),
    dt: f64,
) -> core::result::Result<Trajectory, Box<SimulationFault>> {
    Plant {
        params,
        battery,
        field,
        payload,
    }
    .integrate(state0, policy, t_span, dt)
}

/// Speed at which constant motor voltage balances the resistive torque.
pub fn steady_state_speed(params: &RobotParams, payload: f64, mu: f64, voltage: f64) -> f64 {
    let current = rolling_torque(params, payload, mu) / params.motor_constant;
    (voltage - params.motor_resistance * current) * params.wheel_radius / params.motor_constant
}
