//! Fixed-step RK4 integration generic over the scalar type, plus loss
//! readout from the cost-augmentation states.
//!
//! RK4 with a fixed step keeps runs deterministic and keeps gradients
//! well-defined: with dual scalars the step schedule is decided by primal
//! quantities only, so the tangent flow is exactly the sensitivity ODE of
//! the primal trajectory.

use crate::scalar::Real;
use crate::{Error, Result};
use std::io::Write;

/// Denominator guard in both loss ratios.
pub const COST_EPSILON: f64 = 1e-6;

/// Relaxation time constant of the running-max (L∞) cost states.
pub const DEFAULT_TAU: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record every k-th step into the trajectory (1 = every step).
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        SimConfig { dt, t_final, record_every: 1 }
    }

    /// Record only the endpoints; for loss-only runs.
    pub fn loss_only(dt: f64, t_final: f64) -> Self {
        SimConfig { dt, t_final, record_every: usize::MAX }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Contract("dt and t_final must be positive".into()));
        }
        if self.t_final / self.dt < 10.0 {
            return Err(Error::Contract(format!(
                "horizon {} too short for dt {}",
                self.t_final, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Contract("record_every must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimResult<T> {
    pub times: Vec<f64>,
    pub states: Vec<Vec<T>>,
    pub final_time: f64,
    pub final_state: Vec<T>,
}

impl<T: Real> SimResult<T> {
    /// Cost-augmentation states (c_w1, c_y1, c_w2, c_y2); by convention the
    /// last four entries of the state vector.
    pub fn cost_states(&self) -> [T; 4] {
        let n = self.final_state.len();
        assert!(n >= 4, "state has no cost block");
        [
            self.final_state[n - 4],
            self.final_state[n - 3],
            self.final_state[n - 2],
            self.final_state[n - 1],
        ]
    }

    pub fn loss_l2(&self) -> T {
        let [c_w1, c_y1, _, _] = self.cost_states();
        loss_l2(c_w1, c_y1)
    }

    pub fn loss_linf(&self) -> T {
        let [_, _, c_w2, c_y2] = self.cost_states();
        loss_linf(c_w2, c_y2)
    }

    pub fn aggregate_loss(&self) -> T {
        aggregate_loss(self.loss_l2(), self.loss_linf())
    }
}

/// √(c_y1 / (ε + c_w1)); the zero-output case short-circuits so dual
/// tangents stay finite through the sqrt.
pub fn loss_l2<T: Real>(c_w1: T, c_y1: T) -> T {
    if c_y1.re() == 0.0 {
        return T::zero();
    }
    (c_y1 / (T::from_f64(COST_EPSILON) + c_w1)).sqrt()
}

/// c_y2 / (ε + c_w2).
pub fn loss_linf<T: Real>(c_w2: T, c_y2: T) -> T {
    c_y2 / (T::from_f64(COST_EPSILON) + c_w2)
}

pub fn aggregate_loss<T: Real>(l2: T, linf: T) -> T {
    l2 + linf
}

/// Classical RK4 over [0, T] with step dt; `rhs(x, t, xdot)`.
pub fn integrate<T, F>(mut rhs: F, x0: &[T], cfg: &SimConfig) -> Result<SimResult<T>>
where
    T: Real,
    F: FnMut(&[T], f64, &mut [T]) -> Result<()>,
{
    cfg.validate()?;
    let n = x0.len();
    let steps = cfg.steps();
    let dt = cfg.dt;
    let mut x = x0.to_vec();
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut xt = vec![T::zero(); n];

    let mut times = Vec::new();
    let mut states = Vec::new();
    times.push(0.0);
    states.push(x.clone());

    let half = T::from_f64(dt / 2.0);
    let full = T::from_f64(dt);
    let sixth = T::from_f64(dt / 6.0);
    let two = T::from_f64(2.0);

    for step in 0..steps {
        let t = step as f64 * dt;
        rhs(&x, t, &mut k1)?;
        for i in 0..n {
            xt[i] = x[i] + half * k1[i];
        }
        rhs(&xt, t + dt / 2.0, &mut k2)?;
        for i in 0..n {
            xt[i] = x[i] + half * k2[i];
        }
        rhs(&xt, t + dt / 2.0, &mut k3)?;
        for i in 0..n {
            xt[i] = x[i] + full * k3[i];
        }
        rhs(&xt, t + dt, &mut k4)?;
        for i in 0..n {
            x[i] += sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        for (i, xi) in x.iter().enumerate() {
            if !xi.is_finite() {
                return Err(Error::Integration {
                    t: t + dt,
                    reason: format!("state component {i} became non-finite"),
                });
            }
        }
        if (step + 1) % cfg.record_every == 0 || step + 1 == steps {
            times.push((step + 1) as f64 * dt);
            states.push(x.clone());
        }
    }

    Ok(SimResult {
        times,
        states,
        final_time: steps as f64 * dt,
        final_state: x,
    })
}

/// Trajectory CSV: `t,q_r…,qd_r…,q_c…,qd_c…,c_w1,c_y1,c_w2,c_y2`, one row
/// per recorded sample, shortest round-trip decimal formatting.
pub fn write_trajectory_csv<W: Write>(
    result: &SimResult<f64>,
    n_r: usize,
    n_c: usize,
    out: &mut W,
) -> Result<()> {
    let mut header = String::from("t");
    for i in 0..n_r {
        header.push_str(&format!(",q_r{i}"));
    }
    for i in 0..n_r {
        header.push_str(&format!(",qd_r{i}"));
    }
    for i in 0..n_c {
        header.push_str(&format!(",q_c{i}"));
    }
    for i in 0..n_c {
        header.push_str(&format!(",qd_c{i}"));
    }
    header.push_str(",c_w1,c_y1,c_w2,c_y2");
    writeln!(out, "{header}")?;
    for (t, state) in result.times.iter().zip(&result.states) {
        let mut row = format!("{t}");
        for v in state {
            row.push_str(&format!(",{v}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}
