//! The coupled robot–controller ODE: robot mechanism, virtual mechanism,
//! interface elements, gravity compensation, exogenous-signal wiring,
//! performance outputs, and the four cost-augmentation states.
//!
//! State layout: x = (q_r, q̇_r, q_c, q̇_c, c_w1, c_y1, c_w2, c_y2), so the
//! dimension is 2·n_r + 2·n_c + 4. The robot and virtual mechanism act as
//! admittances (forces in, motion out); the interface elements act as
//! impedances (motion in, forces out). Controller-side computations see the
//! measured state (q + n_q, q̇ + n_q̇); the plant integrates the true state.

use crate::elements::{
    add_force_to_joints, DamperLaw, InterfaceComponent, SpringLaw,
};
use crate::linalg::{Transform, Vec3};
use crate::mech::{forward_dynamics_after_fk, KinState, Mechanism, PointAttachment};
use crate::scalar::Real;
use crate::scenarios::{LiftedScenario, Scenario};
use crate::sim::{integrate, SimConfig, SimResult};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A component parameter: either a fixed value or an entry of the mapped
/// parameter vector θ̂.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamRef {
    Fixed(f64),
    Tuned { param: usize },
}

impl ParamRef {
    pub fn resolve<T: Real>(&self, theta_hat: &[T]) -> T {
        match *self {
            ParamRef::Fixed(v) => T::from_f64(v),
            ParamRef::Tuned { param } => theta_hat[param],
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            ParamRef::Fixed(_) => None,
            ParamRef::Tuned { param } => Some(param),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum SpringSpec {
    Linear { k: ParamRef },
    Tanh { k: ParamRef, sigma: ParamRef },
    Power { k: ParamRef, p: ParamRef },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum DamperSpec {
    Linear {
        c: ParamRef,
    },
    Saturating {
        c: ParamRef,
        sigma: ParamRef,
    },
    Localized {
        c: ParamRef,
        center: [f64; 3],
        radius: f64,
        smoothness: f64,
    },
}

impl SpringSpec {
    pub fn resolve<T: Real>(&self, theta_hat: &[T]) -> SpringLaw<T> {
        match self {
            SpringSpec::Linear { k } => SpringLaw::Linear { k: k.resolve(theta_hat) },
            SpringSpec::Tanh { k, sigma } => SpringLaw::Tanh {
                k: k.resolve(theta_hat),
                sigma: sigma.resolve(theta_hat),
            },
            SpringSpec::Power { k, p } => SpringLaw::Power {
                k: k.resolve(theta_hat),
                p: p.resolve(theta_hat),
            },
        }
    }
}

impl DamperSpec {
    pub fn resolve<T: Real>(&self, theta_hat: &[T]) -> DamperLaw<T> {
        match self {
            DamperSpec::Linear { c } => DamperLaw::Linear { c: c.resolve(theta_hat) },
            DamperSpec::Saturating { c, sigma } => DamperLaw::Saturating {
                c: c.resolve(theta_hat),
                sigma: sigma.resolve(theta_hat),
            },
            DamperSpec::Localized { c, center, radius, smoothness } => DamperLaw::Localized {
                c: c.resolve(theta_hat),
                center: Vec3(*center),
                radius: *radius,
                smoothness: *smoothness,
            },
        }
    }
}

/// Where a component terminal lives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mech", rename_all = "lowercase")]
pub enum Terminal {
    Robot { body: usize, offset: [f64; 3] },
    Virtual { body: usize, offset: [f64; 3] },
    World { offset: [f64; 3] },
    /// The moving end-effector reference point r_ee(t) = r₀ + r(t).
    Reference,
}

impl Terminal {
    fn attachment(&self) -> Option<(bool, PointAttachment)> {
        match *self {
            Terminal::Robot { body, offset } => Some((true, PointAttachment { body, offset: Vec3(offset) })),
            Terminal::Virtual { body, offset } => Some((false, PointAttachment { body, offset: Vec3(offset) })),
            Terminal::World { .. } | Terminal::Reference => None,
        }
    }
}

/// Spring and/or damper between two terminals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spring: Option<SpringSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub damper: Option<DamperSpec>,
    pub a: Terminal,
    pub b: Terminal,
    #[serde(default = "zero3")]
    pub rest_offset: [f64; 3],
}

fn zero3() -> [f64; 3] {
    [0.0; 3]
}

/// Viscous damper acting directly on one robot joint (arrests null-space
/// drift that Cartesian elements cannot see).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointDamperSpec {
    pub joint: usize,
    pub c: ParamRef,
}

/// Constant force applied at a mechanism point; part of the controller
/// design (e.g. the drive force pulling a reaching cart), not a scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriveForce {
    pub at: Terminal,
    pub force: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum ChannelTarget {
    /// Force at a robot point; dirs are the basis vectors of the channel.
    Disturbance {
        body: usize,
        offset: [f64; 3],
        dirs: Vec<[f64; 3]>,
    },
    NoiseQ,
    NoiseQd,
    /// Displacement of the end-effector reference.
    Reference { dirs: Vec<[f64; 3]> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WiringChannel {
    pub target: ChannelTarget,
    /// Diagonal input weight block (length = channel dimension).
    pub weight: Vec<f64>,
}

impl WiringChannel {
    pub fn dim(&self, n_r: usize) -> usize {
        match &self.target {
            ChannelTarget::Disturbance { dirs, .. } => dirs.len(),
            ChannelTarget::NoiseQ | ChannelTarget::NoiseQd => n_r,
            ChannelTarget::Reference { dirs } => dirs.len(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExogenousWiring {
    pub channels: Vec<WiringChannel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// x_ee − r_ee (3 components).
    TrackingError,
    /// x/y of the RCM point in the instrument frame (2 components).
    RcmError,
    RobotPositions,
    RobotVelocities,
    /// Controller torque on the robot (interface + joint dampers).
    ControlTorque,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputChannel {
    pub kind: OutputKind,
    /// Diagonal output weight (length = output dimension).
    pub weight: Vec<f64>,
    /// Feed the L2 slot y₁.
    pub y1: bool,
    /// Feed the L∞ slot y₂.
    pub y2: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PerformanceOutput {
    pub channels: Vec<OutputChannel>,
}

/// Frame rigidly attached to a robot body whose z-axis is the instrument
/// axis.
#[derive(Clone, Debug)]
pub struct InstrumentFrame {
    pub body: usize,
    pub local: Transform<f64>,
}

#[derive(Clone, Debug)]
pub struct ClosedLoopSystem {
    pub name: String,
    pub robot: Mechanism,
    /// Virtual mechanism with inertances already assembled; may have 0 DOF.
    pub virtual_mech: Mechanism,
    pub elements: Vec<ElementSpec>,
    pub joint_dampers: Vec<JointDamperSpec>,
    pub drive_forces: Vec<DriveForce>,
    /// External constant torques on robot joints (perturbation studies).
    pub constant_joint_torques: Vec<(usize, f64)>,
    pub gravity_comp: bool,
    pub wiring: ExogenousWiring,
    pub outputs: PerformanceOutput,
    /// Dimension of the mapped parameter vector θ̂ referenced by Tuned refs.
    pub n_params: usize,
    /// Robot end-effector point (needed by TrackingError / Reference).
    pub ee: Option<PointAttachment>,
    /// Initial end-effector position; the reference is r₀ + r(t).
    pub r0: Vec3<f64>,
    pub instrument: Option<InstrumentFrame>,
    pub rcm: Option<Vec3<f64>>,
    /// Embedded rest state (full state vector including zero cost states).
    pub x0: Vec<f64>,
    /// Relaxation time constant of the L∞ cost states.
    pub tau: f64,
    pub metadata: BTreeMap<String, String>,
}

impl ClosedLoopSystem {
    pub fn n_r(&self) -> usize {
        self.robot.dof()
    }

    pub fn n_c(&self) -> usize {
        self.virtual_mech.dof()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n_r() + 2 * self.n_c() + 4
    }

    pub fn channel_dims(&self) -> Vec<usize> {
        self.wiring
            .channels
            .iter()
            .map(|c| c.dim(self.n_r()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.virtual_mech.validate()?;
        let check_term = |t: &Terminal, what: &str| -> Result<()> {
            match t.attachment() {
                Some((true, att)) if att.body > self.n_r() => Err(Error::Contract(format!(
                    "{what}: robot terminal body {} out of range",
                    att.body
                ))),
                Some((false, att)) if att.body > self.n_c() => Err(Error::Contract(format!(
                    "{what}: virtual terminal body {} out of range",
                    att.body
                ))),
                _ => Ok(()),
            }
        };
        let mut max_param = None::<usize>;
        let mut track = |r: Option<usize>| {
            if let Some(i) = r {
                max_param = Some(max_param.map_or(i, |m| m.max(i)));
            }
        };
        for el in &self.elements {
            check_term(&el.a, &el.name)?;
            check_term(&el.b, &el.name)?;
            if el.spring.is_none() && el.damper.is_none() {
                return Err(Error::Contract(format!(
                    "element {}: needs a spring or a damper",
                    el.name
                )));
            }
            if let Some(s) = &el.spring {
                match s {
                    SpringSpec::Linear { k } => track(k.max_index()),
                    SpringSpec::Tanh { k, sigma } => {
                        track(k.max_index());
                        track(sigma.max_index());
                    }
                    SpringSpec::Power { k, p } => {
                        track(k.max_index());
                        track(p.max_index());
                    }
                }
            }
            if let Some(d) = &el.damper {
                match d {
                    DamperSpec::Linear { c } => track(c.max_index()),
                    DamperSpec::Saturating { c, sigma } => {
                        track(c.max_index());
                        track(sigma.max_index());
                    }
                    DamperSpec::Localized { c, .. } => track(c.max_index()),
                }
            }
        }
        for jd in &self.joint_dampers {
            if jd.joint >= self.n_r() {
                return Err(Error::Contract(format!(
                    "joint damper index {} out of range",
                    jd.joint
                )));
            }
            track(jd.c.max_index());
        }
        if let Some(m) = max_param {
            if m >= self.n_params {
                return Err(Error::Contract(format!(
                    "parameter index {m} exceeds n_params {}",
                    self.n_params
                )));
            }
        }
        for (i, ch) in self.wiring.channels.iter().enumerate() {
            if ch.weight.len() != ch.dim(self.n_r()) {
                return Err(Error::Contract(format!(
                    "wiring channel {i}: weight length {} != dim {}",
                    ch.weight.len(),
                    ch.dim(self.n_r())
                )));
            }
            if ch.weight.iter().any(|w| *w < 0.0) {
                return Err(Error::Contract(format!("wiring channel {i}: negative weight")));
            }
            if let ChannelTarget::Disturbance { body, .. } = ch.target {
                if body > self.n_r() {
                    return Err(Error::Contract(format!(
                        "wiring channel {i}: disturbance body out of range"
                    )));
                }
            }
        }
        for (i, oc) in self.outputs.channels.iter().enumerate() {
            let dim = match oc.kind {
                OutputKind::TrackingError => 3,
                OutputKind::RcmError => 2,
                OutputKind::RobotPositions | OutputKind::RobotVelocities | OutputKind::ControlTorque => {
                    self.n_r()
                }
            };
            if oc.weight.len() != dim {
                return Err(Error::Contract(format!(
                    "output channel {i}: weight length {} != dim {dim}",
                    oc.weight.len()
                )));
            }
            if oc.weight.iter().any(|w| *w < 0.0) {
                return Err(Error::Contract(format!("output channel {i}: negative weight")));
            }
        }
        let needs_ee = self
            .outputs
            .channels
            .iter()
            .any(|c| c.kind == OutputKind::TrackingError)
            || self
                .elements
                .iter()
                .any(|e| e.a == Terminal::Reference || e.b == Terminal::Reference);
        if needs_ee && self.ee.is_none() {
            return Err(Error::Contract("system needs an end-effector point".into()));
        }
        let needs_rcm = self
            .outputs
            .channels
            .iter()
            .any(|c| c.kind == OutputKind::RcmError);
        if needs_rcm && (self.instrument.is_none() || self.rcm.is_none()) {
            return Err(Error::Contract(
                "RCM outputs need an instrument frame and an RCM point".into(),
            ));
        }
        if self.x0.len() != self.state_dim() {
            return Err(Error::Contract(format!(
                "x0 length {} != state dimension {}",
                self.x0.len(),
                self.state_dim()
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Contract("tau must be positive".into()));
        }
        Ok(())
    }
}

/// The 2-vector RCM error: the RCM point expressed in the instrument frame,
/// x/y components. Its norm is the point-to-axis distance; translating the
/// RCM along the axis (the frame z) leaves it unchanged.
pub fn rcm_error<T: Real>(instrument_frame: &Transform<T>, rcm: Vec3<T>) -> [T; 2] {
    let local = instrument_frame.inverse_apply(rcm);
    [local.x(), local.y()]
}

/// Gravity-compensation torques: inverse dynamics at rest under gravity.
pub fn gravity_compensation<T: Real>(sys: &ClosedLoopSystem, q_r: &[T]) -> Result<Vec<T>> {
    crate::mech::gravity_torques(&sys.robot, q_r)
}

// ---------------------------------------------------------------------------
// Evaluator: per-simulation resolved system with reusable buffers
// ---------------------------------------------------------------------------

struct ResolvedElement<T> {
    component: InterfaceComponent<T>,
    a: Terminal,
    b: Terminal,
}

/// Resolved right-hand side of the closed loop for one scalar type, one θ̂,
/// and one scenario. Owns every buffer the hot path needs.
pub struct Evaluator<'a, T: Real> {
    sys: &'a ClosedLoopSystem,
    scenario: LiftedScenario<T>,
    elements: Vec<ResolvedElement<T>>,
    joint_dampers: Vec<(usize, T)>,
    tau_inv: T,
    // kinematics: true robot (plant + dynamics sweeps), measured robot
    // (controller view), virtual mechanism (controller state + dynamics)
    ks_true: KinState<T>,
    ks_meas: KinState<T>,
    ks_virt: KinState<T>,
    // per-channel signal buffers
    w_vals: Vec<Vec<T>>,
    wdot_vals: Vec<Vec<T>>,
    // controller view
    q_meas: Vec<T>,
    qd_meas: Vec<T>,
    // torques
    u_ctl: Vec<T>,
    u_ext: Vec<T>,
    u_total_r: Vec<T>,
    u_virt: Vec<T>,
    // solver scratch
    m_r: Vec<T>,
    bias_r: Vec<T>,
    qdd_r: Vec<T>,
    m_c: Vec<T>,
    bias_c: Vec<T>,
    qdd_c: Vec<T>,
    jac_a: Vec<Vec3<T>>,
    jac_b: Vec<Vec3<T>>,
    // reference state for this step
    r_ee: Vec3<T>,
    r_vel: Vec3<T>,
}

impl<'a, T: Real> Evaluator<'a, T> {
    pub fn new(
        sys: &'a ClosedLoopSystem,
        theta_hat: &[T],
        scenario: LiftedScenario<T>,
    ) -> Result<Self> {
        if theta_hat.len() != sys.n_params {
            return Err(Error::Contract(format!(
                "θ̂ has {} entries, system declares {}",
                theta_hat.len(),
                sys.n_params
            )));
        }
        if scenario.channels.len() != sys.wiring.channels.len() {
            return Err(Error::Contract(format!(
                "scenario has {} channels, wiring has {}",
                scenario.channels.len(),
                sys.wiring.channels.len()
            )));
        }
        let elements = sys
            .elements
            .iter()
            .map(|el| {
                let component = InterfaceComponent {
                    spring: el.spring.as_ref().map(|s| s.resolve(theta_hat)),
                    damper: el.damper.as_ref().map(|d| d.resolve(theta_hat)),
                    rest_offset: Vec3(el.rest_offset),
                };
                if let Some(s) = &component.spring {
                    s.validate()?;
                }
                if let Some(d) = &component.damper {
                    d.validate()?;
                }
                Ok(ResolvedElement { component, a: el.a, b: el.b })
            })
            .collect::<Result<Vec<_>>>()?;
        let joint_dampers = sys
            .joint_dampers
            .iter()
            .map(|jd| (jd.joint, jd.c.resolve(theta_hat)))
            .collect();
        let n_r = sys.n_r();
        let n_c = sys.n_c();
        let dims = sys.channel_dims();
        Ok(Evaluator {
            sys,
            scenario,
            elements,
            joint_dampers,
            tau_inv: T::from_f64(1.0 / sys.tau),
            ks_true: KinState::new(&sys.robot),
            ks_meas: KinState::new(&sys.robot),
            ks_virt: KinState::new(&sys.virtual_mech),
            w_vals: dims.iter().map(|&d| vec![T::zero(); d]).collect(),
            wdot_vals: dims.iter().map(|&d| vec![T::zero(); d]).collect(),
            q_meas: vec![T::zero(); n_r],
            qd_meas: vec![T::zero(); n_r],
            u_ctl: vec![T::zero(); n_r],
            u_ext: vec![T::zero(); n_r],
            u_total_r: vec![T::zero(); n_r],
            u_virt: vec![T::zero(); n_c],
            m_r: vec![T::zero(); n_r * n_r],
            bias_r: vec![T::zero(); n_r],
            qdd_r: vec![T::zero(); n_r],
            m_c: vec![T::zero(); n_c * n_c],
            bias_c: vec![T::zero(); n_c],
            qdd_c: vec![T::zero(); n_c],
            jac_a: vec![Vec3::zeros(); n_r.max(n_c)],
            jac_b: vec![Vec3::zeros(); n_r.max(n_c)],
            r_ee: Vec3::zeros(),
            r_vel: Vec3::zeros(),
        })
    }

    fn terminal_state(
        &self,
        term: &Terminal,
        // measured robot kinematics; virtual kinematics
    ) -> (Vec3<T>, Vec3<T>) {
        match *term {
            Terminal::Robot { body, offset } => {
                let att = PointAttachment { body, offset: Vec3(offset) };
                (self.ks_meas.point_pos(&att), self.ks_meas.point_vel(&att))
            }
            Terminal::Virtual { body, offset } => {
                let att = PointAttachment { body, offset: Vec3(offset) };
                (self.ks_virt.point_pos(&att), self.ks_virt.point_vel(&att))
            }
            Terminal::World { offset } => (Vec3(offset).lift(), Vec3::zeros()),
            Terminal::Reference => (self.r_ee, self.r_vel),
        }
    }

    /// Evaluate signals, kinematics, and all torques at (x, t). Returns the
    /// slices of x for the integration stage.
    fn prepare(&mut self, x: &[T], t: f64) -> Result<()> {
        let n_r = self.sys.n_r();
        let n_c = self.sys.n_c();
        let (q_r, rest) = x.split_at(n_r);
        let (qd_r, rest) = rest.split_at(n_r);
        let (q_c, rest) = rest.split_at(n_c);
        let (qd_c, _) = rest.split_at(n_c);

        // Exogenous signals.
        for i in 0..self.w_vals.len() {
            // Split-borrow dance: take the buffers out, fill, put back.
            let mut w = std::mem::take(&mut self.w_vals[i]);
            let mut wd = std::mem::take(&mut self.wdot_vals[i]);
            self.scenario.eval_channel(i, t, &mut w, &mut wd);
            self.w_vals[i] = w;
            self.wdot_vals[i] = wd;
        }

        // Measured state and reference.
        self.q_meas.copy_from_slice(q_r);
        self.qd_meas.copy_from_slice(qd_r);
        self.r_ee = self.sys.r0.lift();
        self.r_vel = Vec3::zeros();
        for (i, ch) in self.sys.wiring.channels.iter().enumerate() {
            match &ch.target {
                ChannelTarget::NoiseQ => {
                    for j in 0..n_r {
                        self.q_meas[j] += self.w_vals[i][j] * T::from_f64(ch.weight[j]);
                    }
                }
                ChannelTarget::NoiseQd => {
                    for j in 0..n_r {
                        self.qd_meas[j] += self.w_vals[i][j] * T::from_f64(ch.weight[j]);
                    }
                }
                ChannelTarget::Reference { dirs } => {
                    for (k, dir) in dirs.iter().enumerate() {
                        let w = T::from_f64(ch.weight[k]);
                        self.r_ee = self.r_ee.add(Vec3(*dir).lift().scale(self.w_vals[i][k] * w));
                        self.r_vel =
                            self.r_vel.add(Vec3(*dir).lift().scale(self.wdot_vals[i][k] * w));
                    }
                }
                ChannelTarget::Disturbance { .. } => {}
            }
        }

        // Kinematics: true robot (plant geometry), measured robot
        // (controller view), virtual mechanism (controller state).
        self.ks_true.fk(&self.sys.robot, q_r);
        self.ks_meas.fk(&self.sys.robot, &self.q_meas);
        self.ks_meas.vel(&self.sys.robot, &self.qd_meas);
        if n_c > 0 {
            self.ks_virt.fk(&self.sys.virtual_mech, q_c);
            self.ks_virt.vel(&self.sys.virtual_mech, qd_c);
        }

        for u in self.u_ctl.iter_mut() {
            *u = T::zero();
        }
        for u in self.u_virt.iter_mut() {
            *u = T::zero();
        }

        // Interface elements.
        for idx in 0..self.elements.len() {
            let (pos_a, vel_a) = self.terminal_state(&self.elements[idx].a);
            let (pos_b, vel_b) = self.terminal_state(&self.elements[idx].b);
            let el = &self.elements[idx];
            let z = pos_a.sub(pos_b).sub(el.component.rest_offset.lift());
            let zd = vel_a.sub(vel_b);
            let f = el.component.force(z, zd);
            let (a, b) = (el.a, el.b);
            self.apply_terminal_force(&a, f, -1.0);
            self.apply_terminal_force(&b, f, 1.0);
        }

        // Joint dampers on measured rates.
        for &(j, c) in &self.joint_dampers {
            self.u_ctl[j] -= c * self.qd_meas[j];
        }

        // Drive forces: on the virtual mechanism they are part of the
        // controller; on the robot they act as external pushes.
        self.u_ext.iter_mut().for_each(|u| *u = T::zero());
        for df in &self.sys.drive_forces {
            let f = Vec3(df.force).lift();
            match df.at {
                Terminal::Robot { body, offset } => {
                    let att = PointAttachment { body, offset: Vec3(offset) };
                    self.ks_true
                        .point_jacobian_into(&self.sys.robot, &att, &mut self.jac_b[..n_r]);
                    add_force_to_joints(&self.jac_b[..n_r], f, 1.0, &mut self.u_ext);
                }
                _ => self.apply_terminal_force(&df.at, f, 1.0),
            }
        }
        for &(j, tq) in &self.sys.constant_joint_torques {
            self.u_ext[j] += T::from_f64(tq);
        }

        // Total robot torque: gravity compensation + controller +
        // external pushes + disturbances.
        self.u_total_r.copy_from_slice(&self.u_ctl);
        for j in 0..n_r {
            let e = self.u_ext[j];
            self.u_total_r[j] += e;
        }
        if self.sys.gravity_comp {
            // Gravity torques via the Newton-Euler sweep at rest, on the
            // fk already computed for the true state.
            for v in self.qdd_r.iter_mut() {
                *v = T::zero();
            }
            let qdd_zero = std::mem::take(&mut self.qdd_r);
            self.ks_true
                .rnea_after_fk(&self.sys.robot, &qdd_zero, &qdd_zero, &mut self.bias_r);
            self.qdd_r = qdd_zero;
            for j in 0..n_r {
                self.u_total_r[j] += self.bias_r[j];
            }
        }
        for (i, ch) in self.sys.wiring.channels.iter().enumerate() {
            if let ChannelTarget::Disturbance { body, offset, dirs } = &ch.target {
                let att = PointAttachment { body: *body, offset: Vec3(*offset) };
                let mut f = Vec3::zeros();
                for (k, dir) in dirs.iter().enumerate() {
                    f = f.add(
                        Vec3(*dir)
                            .lift()
                            .scale(self.w_vals[i][k] * T::from_f64(ch.weight[k])),
                    );
                }
                self.ks_true
                    .point_jacobian_into(&self.sys.robot, &att, &mut self.jac_a[..n_r]);
                add_force_to_joints(&self.jac_a[..n_r], f, 1.0, &mut self.u_total_r);
            }
        }
        Ok(())
    }

    /// Apply an element force F (convention: −F on terminal a, +F on b)
    /// with the given sign to whichever mechanism holds the terminal.
    fn apply_terminal_force(&mut self, term: &Terminal, f: Vec3<T>, sign: f64) {
        match *term {
            Terminal::Robot { body, offset } => {
                let att = PointAttachment { body, offset: Vec3(offset) };
                let n_r = self.sys.n_r();
                self.ks_meas
                    .point_jacobian_into(&self.sys.robot, &att, &mut self.jac_b[..n_r]);
                add_force_to_joints(&self.jac_b[..n_r], f, sign, &mut self.u_ctl);
            }
            Terminal::Virtual { body, offset } => {
                let att = PointAttachment { body, offset: Vec3(offset) };
                let n_c = self.sys.n_c();
                self.ks_virt
                    .point_jacobian_into(&self.sys.virtual_mech, &att, &mut self.jac_b[..n_c]);
                add_force_to_joints(&self.jac_b[..n_c], f, sign, &mut self.u_virt);
            }
            Terminal::World { .. } | Terminal::Reference => {}
        }
    }

    /// Weighted output values for one channel into `buf`; returns the dim.
    fn output_values(&self, oc: &OutputChannel, q_r: &[T], qd_r: &[T], buf: &mut [T]) -> usize {
        match oc.kind {
            OutputKind::TrackingError => {
                let ee = self.sys.ee.as_ref().expect("validated");
                let p = self.ks_true.point_pos(ee);
                let e = p.sub(self.r_ee);
                for i in 0..3 {
                    buf[i] = e.0[i] * T::from_f64(oc.weight[i]);
                }
                3
            }
            OutputKind::RcmError => {
                let inst = self.sys.instrument.as_ref().expect("validated");
                let frame = self.ks_true.x[inst.body - 1].compose(&inst.local.lift());
                let rcm = self.sys.rcm.expect("validated").lift();
                let e = rcm_error(&frame, rcm);
                buf[0] = e[0] * T::from_f64(oc.weight[0]);
                buf[1] = e[1] * T::from_f64(oc.weight[1]);
                2
            }
            OutputKind::RobotPositions => {
                for (i, q) in q_r.iter().enumerate() {
                    buf[i] = *q * T::from_f64(oc.weight[i]);
                }
                q_r.len()
            }
            OutputKind::RobotVelocities => {
                for (i, q) in qd_r.iter().enumerate() {
                    buf[i] = *q * T::from_f64(oc.weight[i]);
                }
                qd_r.len()
            }
            OutputKind::ControlTorque => {
                for (i, u) in self.u_ctl.iter().enumerate() {
                    buf[i] = *u * T::from_f64(oc.weight[i]);
                }
                self.u_ctl.len()
            }
        }
    }

    /// Full right-hand side ẋ = f(x, t).
    pub fn rhs(&mut self, x: &[T], t: f64, dx: &mut [T]) -> Result<()> {
        let n_r = self.sys.n_r();
        let n_c = self.sys.n_c();
        self.prepare(x, t)?;
        let (q_r, rest) = x.split_at(n_r);
        let (qd_r, rest) = rest.split_at(n_r);
        let (q_c, rest) = rest.split_at(n_c);
        let (qd_c, cost) = rest.split_at(n_c);

        // Both mechanisms' fk were computed in prepare; the dynamics
        // sweeps run on top of them.
        forward_dynamics_after_fk(
            &self.sys.robot,
            &mut self.ks_true,
            q_r,
            qd_r,
            &self.u_total_r,
            &mut self.m_r,
            &mut self.bias_r,
            &mut self.qdd_r,
        )?;
        if n_c > 0 {
            forward_dynamics_after_fk(
                &self.sys.virtual_mech,
                &mut self.ks_virt,
                q_c,
                qd_c,
                &self.u_virt,
                &mut self.m_c,
                &mut self.bias_c,
                &mut self.qdd_c,
            )?;
        }

        // Cost-state derivatives.
        let mut w1_sq = T::zero();
        let mut w2_sq = T::zero();
        for (i, w) in self.w_vals.iter().enumerate() {
            let mut s = T::zero();
            for v in w {
                s += *v * *v;
            }
            if self.scenario.w1[i] {
                w1_sq += s;
            }
            if self.scenario.w2[i] {
                w2_sq += s;
            }
        }
        let mut y1_sq = T::zero();
        let mut y2_sq = T::zero();
        let mut buf = [T::zero(); 16];
        for oc in &self.sys.outputs.channels {
            if !oc.y1 && !oc.y2 {
                continue;
            }
            let dim = self.output_values(oc, q_r, qd_r, &mut buf);
            let mut s = T::zero();
            for v in &buf[..dim] {
                s += *v * *v;
            }
            if oc.y1 {
                y1_sq += s;
            }
            if oc.y2 {
                y2_sq += s;
            }
        }

        dx[..n_r].copy_from_slice(qd_r);
        dx[n_r..2 * n_r].copy_from_slice(&self.qdd_r);
        dx[2 * n_r..2 * n_r + n_c].copy_from_slice(qd_c);
        dx[2 * n_r + n_c..2 * n_r + 2 * n_c].copy_from_slice(&self.qdd_c);
        let base = 2 * n_r + 2 * n_c;
        dx[base] = w1_sq;
        dx[base + 1] = y1_sq;
        // τ ċ = max(c, |·|) − c : a lagged running max.
        let w2_norm = if w2_sq.re() == 0.0 { T::zero() } else { w2_sq.sqrt() };
        let y2_norm = if y2_sq.re() == 0.0 { T::zero() } else { y2_sq.sqrt() };
        dx[base + 2] = (cost[2].max(w2_norm) - cost[2]) * self.tau_inv;
        dx[base + 3] = (cost[3].max(y2_norm) - cost[3]) * self.tau_inv;
        Ok(())
    }

    /// Masked weighted outputs (y₁, y₂) at (x, t); inspection path.
    pub fn performance_outputs(&mut self, x: &[T], t: f64) -> Result<(Vec<T>, Vec<T>)> {
        let n_r = self.sys.n_r();
        self.prepare(x, t)?;
        let (q_r, rest) = x.split_at(n_r);
        let (qd_r, _) = rest.split_at(n_r);
        let mut y1 = Vec::new();
        let mut y2 = Vec::new();
        let mut buf = [T::zero(); 16];
        for oc in &self.sys.outputs.channels {
            let dim = self.output_values(oc, q_r, qd_r, &mut buf);
            for v in &buf[..dim] {
                if oc.y1 {
                    y1.push(*v);
                }
                if oc.y2 {
                    y2.push(*v);
                }
            }
        }
        Ok((y1, y2))
    }

    /// Controller torque on the robot at (x, t) (no gravity comp, no
    /// disturbances).
    pub fn control_torque(&mut self, x: &[T], t: f64) -> Result<Vec<T>> {
        self.prepare(x, t)?;
        Ok(self.u_ctl.clone())
    }
}

/// One-shot right-hand side evaluation (allocating wrapper around
/// [`Evaluator`]).
pub fn rhs<T: Real>(
    sys: &ClosedLoopSystem,
    x: &[T],
    t: f64,
    theta_hat: &[T],
    scenario: &Scenario,
) -> Result<Vec<T>> {
    let mut ev = Evaluator::new(sys, theta_hat, LiftedScenario::lift(scenario))?;
    let mut dx = vec![T::zero(); x.len()];
    ev.rhs(x, t, &mut dx)?;
    Ok(dx)
}

/// Simulate the closed loop from its embedded rest state.
pub fn simulate<T: Real>(
    sys: &ClosedLoopSystem,
    theta_hat: &[T],
    scenario: &LiftedScenario<T>,
    cfg: &SimConfig,
) -> Result<SimResult<T>> {
    let mut ev = Evaluator::new(sys, theta_hat, scenario.clone())?;
    let x0: Vec<T> = sys.x0.iter().map(|&v| T::from_f64(v)).collect();
    integrate(|x, t, dx| ev.rhs(x, t, dx), &x0, cfg)
}

/// Simulate from an explicit initial state.
pub fn simulate_from<T: Real>(
    sys: &ClosedLoopSystem,
    x0: &[T],
    theta_hat: &[T],
    scenario: &LiftedScenario<T>,
    cfg: &SimConfig,
) -> Result<SimResult<T>> {
    let mut ev = Evaluator::new(sys, theta_hat, scenario.clone())?;
    integrate(|x, t, dx| ev.rhs(x, t, dx), x0, cfg)
}

/// Total storage of the autonomous closed loop at state x: kinetic energy
/// of both mechanisms, gravity potential where it is not compensated,
/// spring potentials, and constant-force potentials. With zero exogenous
/// input its time derivative is −(damper dissipation) ≤ 0.
pub fn total_storage(sys: &ClosedLoopSystem, theta_hat: &[f64], x: &[f64]) -> Result<f64> {
    let n_r = sys.n_r();
    let n_c = sys.n_c();
    let (q_r, rest) = x.split_at(n_r);
    let (qd_r, rest) = rest.split_at(n_r);
    let (q_c, rest) = rest.split_at(n_c);
    let (qd_c, _) = rest.split_at(n_c);

    let e_robot = crate::mech::mechanical_energy(&sys.robot, q_r, qd_r)?;
    let mut total = e_robot;
    if sys.gravity_comp {
        // Compensation cancels the gravity potential exactly.
        let zero = vec![0.0; n_r];
        total -= crate::mech::mechanical_energy(&sys.robot, q_r, &zero)?;
    }
    if n_c > 0 {
        total += crate::mech::mechanical_energy(&sys.virtual_mech, q_c, qd_c)?;
    }

    let mut ks_r: KinState<f64> = KinState::new(&sys.robot);
    ks_r.fk(&sys.robot, q_r);
    let mut ks_c: KinState<f64> = KinState::new(&sys.virtual_mech);
    if n_c > 0 {
        ks_c.fk(&sys.virtual_mech, q_c);
    }
    let term_pos = |t: &Terminal| -> Vec3<f64> {
        match *t {
            Terminal::Robot { body, offset } => {
                ks_r.point_pos(&PointAttachment { body, offset: Vec3(offset) })
            }
            Terminal::Virtual { body, offset } => {
                ks_c.point_pos(&PointAttachment { body, offset: Vec3(offset) })
            }
            Terminal::World { offset } => Vec3(offset),
            Terminal::Reference => sys.r0,
        }
    };
    for el in &sys.elements {
        if let Some(spec) = &el.spring {
            let law = spec.resolve::<f64>(theta_hat);
            let z = term_pos(&el.a).sub(term_pos(&el.b)).sub(Vec3(el.rest_offset));
            total += crate::elements::spring_potential(&law, z);
        }
    }
    for df in &sys.drive_forces {
        // Constant force ≡ linear potential −Fᵀp.
        total -= Vec3(df.force).dot(term_pos(&df.at));
    }
    Ok(total)
}

#[cfg(test)]
pub mod test_fixtures {
    use super::*;
    use crate::linalg::Mat3;
    use crate::mech::{Body, Joint, JointKind};
    use crate::sim::DEFAULT_TAU;

    /// 1-DOF cart with a PD controller (spring k, damper b to ground),
    /// wired with the disturbance/noise channels and output weights of the
    /// linear benchmark. Takes resolved θ̂ = (k, b) via Tuned refs.
    pub fn cart_system(mass: f64) -> ClosedLoopSystem {
        let robot = Mechanism {
            bodies: vec![Body {
                name: "cart".into(),
                mass,
                com: Vec3::zeros(),
                inertia: Mat3::zeros(),
            }],
            joints: vec![Joint {
                kind: JointKind::Prismatic,
                axis: Vec3::new(1.0, 0.0, 0.0),
                parent_body: 0,
                origin: Transform::identity(),
            }],
            gravity: Vec3::zeros(),
            inertances: Vec::new(),
        };
        let virtual_mech = Mechanism {
            bodies: vec![],
            joints: vec![],
            gravity: Vec3::zeros(),
            inertances: Vec::new(),
        };
        let mut metadata = BTreeMap::new();
        metadata.insert("cart_mass".into(), format!("{mass}"));
        ClosedLoopSystem {
            name: "cart".into(),
            robot,
            virtual_mech,
            elements: vec![ElementSpec {
                name: "pd".into(),
                spring: Some(SpringSpec::Linear { k: ParamRef::Tuned { param: 0 } }),
                damper: Some(DamperSpec::Linear { c: ParamRef::Tuned { param: 1 } }),
                a: Terminal::Robot { body: 1, offset: [0.0; 3] },
                b: Terminal::World { offset: [0.0; 3] },
                rest_offset: [0.0; 3],
            }],
            joint_dampers: vec![],
            drive_forces: vec![],
            constant_joint_torques: vec![],
            gravity_comp: false,
            wiring: ExogenousWiring {
                channels: vec![
                    WiringChannel {
                        target: ChannelTarget::Disturbance {
                            body: 1,
                            offset: [0.0; 3],
                            dirs: vec![[1.0, 0.0, 0.0]],
                        },
                        weight: vec![5.0],
                    },
                    WiringChannel { target: ChannelTarget::NoiseQ, weight: vec![0.01] },
                    WiringChannel { target: ChannelTarget::NoiseQd, weight: vec![0.1] },
                ],
            },
            outputs: PerformanceOutput {
                channels: vec![
                    OutputChannel {
                        kind: OutputKind::RobotPositions,
                        weight: vec![100.0],
                        y1: true,
                        y2: false,
                    },
                    OutputChannel {
                        kind: OutputKind::RobotVelocities,
                        weight: vec![0.0],
                        y1: true,
                        y2: false,
                    },
                    OutputChannel {
                        kind: OutputKind::ControlTorque,
                        weight: vec![1.0],
                        y1: true,
                        y2: false,
                    },
                ],
            },
            n_params: 2,
            ee: None,
            r0: Vec3::zeros(),
            instrument: None,
            rcm: None,
            x0: vec![0.0; 6],
            tau: DEFAULT_TAU,
            metadata,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::cart_system;
    use super::*;
    use crate::linalg::Mat3;
    use crate::scenarios::{ChannelSignal, Scenario};
    use crate::sim::DEFAULT_TAU;

    fn zero_scenario3() -> Scenario {
        Scenario::zero(&[1, 1, 1], "zero")
    }

    #[test]
    fn cart_rhs_matches_hand_dynamics() {
        let sys = cart_system(1.0);
        sys.validate().unwrap();
        let (k, b) = (120.0, 14.0);
        let x = [0.02, -0.3, 0.0, 0.0, 0.0, 0.0];
        let dx = rhs(&sys, &x, 0.7, &[k, b], &zero_scenario3()).unwrap();
        assert_eq!(dx[0], x[1]);
        let acc = (-k * x[0] - b * x[1]) / 1.0;
        assert!((dx[1] - acc).abs() < 1e-12);
        // Zero input: ċ_w1 = 0; L∞ states pinned at zero by masks.
        assert_eq!(dx[2], 0.0);
        assert_eq!(dx[4], 0.0);
        assert_eq!(dx[5], 0.0);
        // ċ_y1 = |y|² with y = (100 q, 0, u).
        let u = -k * x[0] - b * x[1];
        let expect = (100.0 * x[0]).powi(2) + u * u;
        assert!((dx[3] - expect).abs() < 1e-10);
    }

    #[test]
    fn all_zero_state_is_equilibrium() {
        let sys = cart_system(1.0);
        let dx = rhs(&sys, &[0.0; 6], 0.0, &[50.0, 5.0], &zero_scenario3()).unwrap();
        for v in dx {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn performance_outputs_weighting() {
        let sys = cart_system(1.0);
        // q = 0.02 and a velocity that makes u = 1.5 via u = −k q − b q̇.
        let (k, b) = (100.0, 10.0);
        let qd = -(1.5 + k * 0.02) / b;
        let x = [0.02, qd, 0.0, 0.0, 0.0, 0.0];
        let mut ev = Evaluator::new(
            &sys,
            &[k, b],
            crate::scenarios::LiftedScenario::lift(&zero_scenario3()),
        )
        .unwrap();
        let (y1, y2) = ev.performance_outputs(&x, 0.0).unwrap();
        assert!(y2.is_empty());
        assert!((y1[0] - 2.0).abs() < 1e-12);
        assert_eq!(y1[1], 0.0);
        assert!((y1[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cart_noise_feeds_controller_not_plant() {
        // u = −k(q + n_q) − b(q̇ + n_q̇); the plant itself sees d only.
        let sys = cart_system(1.0);
        let (k, b) = (80.0, 9.0);
        let sc = Scenario {
            label: "noise".into(),
            signals: vec![
                ChannelSignal::Zero,
                ChannelSignal::Sinusoid { eta: vec![1.0], omega: 3.0 },
                ChannelSignal::Sinusoid { eta: vec![1.0], omega: 5.0 },
            ],
            w1: vec![true; 3],
            w2: vec![false; 3],
        };
        let t = 0.37;
        let n_q = 0.01 * (3.0 * t).sin();
        let n_qd = 0.1 * (5.0 * t).sin();
        let x = [0.05, 0.2, 0.0, 0.0, 0.0, 0.0];
        let dx = rhs(&sys, &x, t, &[k, b], &sc).unwrap();
        let u = -k * (x[0] + n_q) - b * (x[1] + n_qd);
        assert!((dx[1] - u).abs() < 1e-10, "{} vs {u}", dx[1]);
    }

    #[test]
    fn zero_gain_controller_ignores_noise() {
        // With no elements at all, trajectories are independent of noise.
        let mut sys = cart_system(1.0);
        sys.elements.clear();
        sys.n_params = 0;
        let noisy = Scenario {
            label: "n".into(),
            signals: vec![
                ChannelSignal::Zero,
                ChannelSignal::Sinusoid { eta: vec![1.0], omega: 7.0 },
                ChannelSignal::Sinusoid { eta: vec![1.0], omega: 11.0 },
            ],
            w1: vec![true; 3],
            w2: vec![false; 3],
        };
        let quiet = zero_scenario3();
        let cfg = SimConfig::loss_only(1e-3, 10.0);
        let x0 = [0.1, 0.05, 0.0, 0.0, 0.0, 0.0];
        let a = simulate_from(
            &sys,
            &x0,
            &[],
            &crate::scenarios::LiftedScenario::lift(&noisy),
            &cfg,
        )
        .unwrap();
        let b = simulate_from(
            &sys,
            &x0,
            &[],
            &crate::scenarios::LiftedScenario::lift(&quiet),
            &cfg,
        )
        .unwrap();
        assert_eq!(a.final_state[0].to_bits(), b.final_state[0].to_bits());
        assert_eq!(a.final_state[1].to_bits(), b.final_state[1].to_bits());
    }

    #[test]
    fn torque_superposition_across_components() {
        let mut one = cart_system(1.0);
        let mut two = cart_system(1.0);
        two.elements.push(ElementSpec {
            name: "extra".into(),
            spring: Some(SpringSpec::Tanh {
                k: ParamRef::Fixed(40.0),
                sigma: ParamRef::Fixed(2.0),
            }),
            damper: None,
            a: Terminal::Robot { body: 1, offset: [0.0; 3] },
            b: Terminal::World { offset: [0.3, 0.0, 0.0] },
            rest_offset: [0.0; 3],
        });
        let mut only_extra = cart_system(1.0);
        only_extra.elements = vec![two.elements[1].clone()];
        only_extra.n_params = 2;
        one.n_params = 2;

        let x = [0.12, -0.4, 0.0, 0.0, 0.0, 0.0];
        let th = [70.0, 8.0];
        let sc = zero_scenario3();
        let lifted = crate::scenarios::LiftedScenario::lift(&sc);
        let u = |sys: &ClosedLoopSystem| {
            let mut ev = Evaluator::new(sys, &th, lifted.clone()).unwrap();
            ev.control_torque(&x, 0.0).unwrap()[0]
        };
        assert!((u(&two) - (u(&one) + u(&only_extra))).abs() < 1e-12);
    }

    #[test]
    fn rcm_error_geometry() {
        let frame = Transform::<f64>::identity();
        let e = rcm_error(&frame, Vec3::new(0.03, -0.04, 0.5));
        assert!((e[0] - 0.03).abs() < 1e-15);
        assert!((e[1] + 0.04).abs() < 1e-15);
        assert!(((e[0] * e[0] + e[1] * e[1]).sqrt() - 0.05).abs() < 1e-15);
        // On-axis RCM: zero error; translations along z don't matter.
        let tilted = Transform {
            rot: Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), 0.6),
            pos: Vec3::new(0.2, -0.1, 0.4),
        };
        let axis_dir = tilted.rot.mul_vec(Vec3::new(0.0, 0.0, 1.0));
        let on_axis = tilted.pos.add(axis_dir.scale(0.33));
        let e = rcm_error(&tilted, on_axis);
        assert!(e[0].abs() < 1e-14 && e[1].abs() < 1e-14);
        let shifted = on_axis.add(axis_dir.scale(-0.7));
        let e2 = rcm_error(&tilted, shifted);
        assert!(e2[0].abs() < 1e-14 && e2[1].abs() < 1e-14);
        // Off-axis by a known offset.
        let off = tilted.apply(Vec3::new(0.05, 0.0, 1.0));
        let e3 = rcm_error(&tilted, off);
        assert!((e3[0] - 0.05).abs() < 1e-14 && e3[1].abs() < 1e-14);
    }

    #[test]
    fn gravity_compensation_holds_robot_at_rest() {
        use crate::mech::testing::planar_two_link;
        let mut robot = planar_two_link();
        robot.gravity = Vec3::new(0.0, -9.81, 0.0);
        let sys = ClosedLoopSystem {
            name: "grav".into(),
            robot,
            virtual_mech: Mechanism {
                bodies: vec![],
                joints: vec![],
                gravity: Vec3::zeros(),
                inertances: Vec::new(),
            },
            elements: vec![],
            joint_dampers: vec![],
            drive_forces: vec![],
            constant_joint_torques: vec![],
            gravity_comp: true,
            wiring: ExogenousWiring { channels: vec![] },
            outputs: PerformanceOutput { channels: vec![] },
            n_params: 0,
            ee: None,
            r0: Vec3::zeros(),
            instrument: None,
            rcm: None,
            x0: vec![0.0; 8],
            tau: DEFAULT_TAU,
            metadata: BTreeMap::new(),
        };
        sys.validate().unwrap();
        let sc = Scenario::zero(&[], "none");
        let x = [0.4, -0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let dx = rhs(&sys, &x, 0.0, &[], &sc).unwrap();
        assert!(dx[2].abs() < 1e-10 && dx[3].abs() < 1e-10, "{dx:?}");
        // Textbook check of the torque itself.
        let g = gravity_compensation(&sys, &[std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        assert!(g[0].is_finite() && g[1].is_finite());
        // Zero gravity: zero compensation.
        let mut zg = sys.clone();
        zg.robot.gravity = Vec3::zeros();
        let g0 = gravity_compensation(&zg, &[0.3, 0.2]).unwrap();
        assert!(g0[0].abs() < 1e-14 && g0[1].abs() < 1e-14);
    }

    #[test]
    fn cart_storage_decays_passively() {
        let sys = cart_system(1.0);
        let cfg = SimConfig::new(1e-3, 5.0);
        let x0 = [0.2, 0.0, 0.0, 0.0, 0.0, 0.0];
        let res = simulate_from(
            &sys,
            &x0,
            &[150.0, 12.0],
            &crate::scenarios::LiftedScenario::lift(&zero_scenario3()),
            &cfg,
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        let mut worst = 0.0f64;
        for state in res.states.iter().step_by(50) {
            let s = total_storage(&sys, &[150.0, 12.0], state).unwrap();
            worst = worst.max(s - prev);
            prev = s;
        }
        assert!(worst <= 1e-9, "storage increased by {worst}");
    }

    #[test]
    fn cost_state_matches_trapezoid_postprocessing() {
        let sys = cart_system(1.0);
        let sc = Scenario {
            label: "probe".into(),
            signals: vec![
                ChannelSignal::Sinusoid { eta: vec![1.0], omega: 5.0 },
                ChannelSignal::Zero,
                ChannelSignal::Zero,
            ],
            w1: vec![true; 3],
            w2: vec![false; 3],
        };
        let cfg = SimConfig::new(1e-3, 10.0);
        let res = simulate(
            &sys,
            &[150.0, 12.0],
            &crate::scenarios::LiftedScenario::lift(&sc),
            &cfg,
        )
        .unwrap();
        // c_w1(T) vs trapezoid of |w|² over the recorded grid.
        let mut acc = 0.0;
        for k in 1..res.times.len() {
            let f = |t: f64| (5.0 * t).sin().powi(2);
            acc += 0.5 * (f(res.times[k - 1]) + f(res.times[k])) * (res.times[k] - res.times[k - 1]);
        }
        let c_w1 = res.cost_states()[0];
        assert!(
            (c_w1 - acc).abs() / acc < 1e-4,
            "ode {c_w1} vs trapezoid {acc}"
        );
    }

    #[test]
    fn validation_catches_bad_param_index() {
        let mut sys = cart_system(1.0);
        sys.n_params = 1;
        assert!(sys.validate().is_err());
    }
}
