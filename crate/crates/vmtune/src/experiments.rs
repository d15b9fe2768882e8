//! Pre-wired experiment presets: the PD cart, the reaching cart-on-rail
//! mechanism, and a desk-scale RCM virtual instrument on a declared 6-DOF
//! arm.
//!
//! The arm is a stand-in with declared inertial parameters, not an
//! identified industrial model, so the surgical preset is judged by
//! properties (equilibrium, passivity, cost improvement), never by
//! replaying specific tuned values.

use crate::closedloop::{
    ChannelTarget, ClosedLoopSystem, DamperSpec, DriveForce, ElementSpec, ExogenousWiring,
    InstrumentFrame, JointDamperSpec, OutputChannel, OutputKind, ParamRef, PerformanceOutput,
    SpringSpec, Terminal, WiringChannel,
};
use crate::elements::{assemble_inertance, Inerter};
use crate::linalg::{Mat3, Transform, Vec3};
use crate::mech::{
    forward_kinematics, Body, Joint, JointKind, Mechanism, PointAttachment,
};
use crate::optimize::{Aggregate, ParamKind, ParameterMap, TuneOptions};
use crate::scalar::Real;
use crate::scenarios::{grid_scenarios, surgical_scenarios, Provenance, Scenario, ScenarioSet};
use crate::schema::SystemDoc;
use crate::sim::DEFAULT_TAU;
use crate::{Error, Result};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct ExperimentPreset {
    pub name: String,
    pub system: ClosedLoopSystem,
    pub map: ParameterMap,
    pub theta0: Vec<f64>,
    pub scenarios: ScenarioSet,
    pub base_dt: f64,
    pub banded_dt: bool,
}

impl ExperimentPreset {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cart" => Ok(build_cart()),
            "reach" => Ok(build_reach()),
            "rcm" => Ok(build_rcm()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (available: cart, reach, rcm)"
            ))),
        }
    }

    pub fn to_doc(&self) -> SystemDoc {
        SystemDoc::from_parts(&self.system, &self.map, &self.theta0)
    }

    /// Tuning defaults for this preset.
    pub fn tune_options(&self) -> TuneOptions {
        match self.name.as_str() {
            "cart" => TuneOptions {
                iters: 500,
                alpha: 1.0,
                aggregate: Aggregate::Max,
                regularize: false,
                base_dt: self.base_dt,
                banded_dt: self.banded_dt,
                // Fast probes need only their four periods plus transient
                // washout (~15 plant time constants at the loosest tuning).
                horizon_floor: 3.0,
                ..TuneOptions::default()
            },
            "rcm" => TuneOptions {
                iters: 200,
                alpha: 1.0,
                aggregate: Aggregate::Max,
                regularize: true,
                base_dt: self.base_dt,
                banded_dt: self.banded_dt,
                ..TuneOptions::default()
            },
            _ => TuneOptions {
                iters: 0,
                base_dt: self.base_dt,
                banded_dt: self.banded_dt,
                ..TuneOptions::default()
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Cart
// ---------------------------------------------------------------------------

/// Default cart mass. The benchmark description leaves the mass open, so it
/// is pinned here and recorded in the preset metadata.
pub const CART_MASS_DEFAULT: f64 = 1.0;

/// Input weights (d, n_q, n_q̇) of the cart benchmark: disturbance forces
/// up to 5 N, position noise to 0.01 m, velocity noise to 0.1 m/s —
/// velocity noise above position noise, forces dominant, matching the
/// surgical channel scaling.
pub const CART_INPUT_WEIGHTS: [f64; 3] = [5.0, 0.01, 0.1];
/// Output weights (q, q̇, u) of the cart benchmark.
pub const CART_OUTPUT_WEIGHTS: [f64; 3] = [100.0, 0.0, 1.0];

/// 1-DOF cart under PD control: θ = (k, b) bound raw to a linear spring and
/// damper anchored at the origin. Probes: disturbance force, position noise,
/// velocity noise; outputs: weighted position and control effort.
pub fn build_cart() -> ExperimentPreset {
    build_cart_with_mass(CART_MASS_DEFAULT)
}

pub fn build_cart_with_mass(mass: f64) -> ExperimentPreset {
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
    metadata.insert(
        "cart_mass_note".into(),
        "default value chosen by this toolkit; oracle comparisons are conditional on it".into(),
    );
    let cart_point = Terminal::Robot { body: 1, offset: [0.0; 3] };
    let system = ClosedLoopSystem {
        name: "cart".into(),
        robot,
        virtual_mech,
        elements: vec![
            ElementSpec {
                name: "p-spring".into(),
                spring: Some(SpringSpec::Linear { k: ParamRef::Tuned { param: 0 } }),
                damper: None,
                a: cart_point,
                b: Terminal::World { offset: [0.0; 3] },
                rest_offset: [0.0; 3],
            },
            ElementSpec {
                name: "d-damper".into(),
                spring: None,
                damper: Some(DamperSpec::Linear { c: ParamRef::Tuned { param: 1 } }),
                a: cart_point,
                b: Terminal::World { offset: [0.0; 3] },
                rest_offset: [0.0; 3],
            },
        ],
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
                    weight: vec![CART_INPUT_WEIGHTS[0]],
                },
                WiringChannel {
                    target: ChannelTarget::NoiseQ,
                    weight: vec![CART_INPUT_WEIGHTS[1]],
                },
                WiringChannel {
                    target: ChannelTarget::NoiseQd,
                    weight: vec![CART_INPUT_WEIGHTS[2]],
                },
            ],
        },
        outputs: PerformanceOutput {
            channels: vec![
                OutputChannel {
                    kind: OutputKind::RobotPositions,
                    weight: vec![CART_OUTPUT_WEIGHTS[0]],
                    y1: true,
                    y2: false,
                },
                OutputChannel {
                    kind: OutputKind::RobotVelocities,
                    weight: vec![CART_OUTPUT_WEIGHTS[1]],
                    y1: true,
                    y2: false,
                },
                OutputChannel {
                    kind: OutputKind::ControlTorque,
                    weight: vec![CART_OUTPUT_WEIGHTS[2]],
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
    };
    ExperimentPreset {
        name: "cart".into(),
        system,
        map: ParameterMap { kinds: vec![ParamKind::Raw, ParamKind::Raw] },
        theta0: vec![100.0, 10.0],
        scenarios: grid_scenarios(24, 0, &[1, 1, 1]).expect("static grid"),
        base_dt: 1e-3,
        banded_dt: true,
    }
}

// ---------------------------------------------------------------------------
// Reaching cart-on-rail
// ---------------------------------------------------------------------------

/// Declared reach parameters (toolkit choices at desk scale).
pub const REACH_CART_MASS: f64 = 2.0;
pub const REACH_CART_DRAG: f64 = 10.0;
pub const REACH_DRIVE_FORCE: f64 = 5.0;
const REACH_SPRING_K: f64 = 400.0;
const REACH_DAMPER_C: f64 = 40.0;

/// Planar 2-link arm coupled by a spring-damper to a driven cart on a
/// linear rail: a reach primitive whose speed comes from the drag/drive
/// balance and whose smoothness comes from the cart mass.
pub fn build_reach() -> ExperimentPreset {
    build_reach_with(REACH_CART_MASS, REACH_CART_DRAG, REACH_DRIVE_FORCE, false)
}

pub fn build_reach_with(
    cart_mass: f64,
    cart_drag: f64,
    drive_force: f64,
    saturating: bool,
) -> ExperimentPreset {
    let link = |name: &str| Body {
        name: name.into(),
        mass: 1.0,
        com: Vec3::new(1.0, 0.0, 0.0),
        inertia: Mat3::zeros(),
    };
    let robot = Mechanism {
        bodies: vec![link("upper"), link("fore")],
        joints: vec![
            Joint {
                kind: JointKind::Revolute,
                axis: Vec3::new(0.0, 0.0, 1.0),
                parent_body: 0,
                origin: Transform::identity(),
            },
            Joint {
                kind: JointKind::Revolute,
                axis: Vec3::new(0.0, 0.0, 1.0),
                parent_body: 1,
                origin: Transform { rot: Mat3::identity(), pos: Vec3::new(1.0, 0.0, 0.0) },
            },
        ],
        gravity: Vec3::new(0.0, -9.81, 0.0),
        inertances: Vec::new(),
    };
    // Rest pose symmetric about the y-axis: the tip starts at (0, 1),
    // moving tangentially to its circle about the base, which keeps the
    // rail-direction force balance clean and leaves a long workspace pass
    // along the rail.
    let q0 = [
        std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_3,
        -2.0 * std::f64::consts::FRAC_PI_3,
    ];
    let tip = PointAttachment { body: 2, offset: Vec3::new(1.0, 0.0, 0.0) };
    let x6 = forward_kinematics(&robot, &q0).expect("static FK");
    let ee0 = x6[1].apply(tip.offset);

    let virtual_mech = Mechanism {
        bodies: vec![Body {
            name: "rail-cart".into(),
            mass: cart_mass,
            com: Vec3::zeros(),
            inertia: Mat3::zeros(),
        }],
        joints: vec![Joint {
            kind: JointKind::Prismatic,
            axis: Vec3::new(1.0, 0.0, 0.0),
            parent_body: 0,
            origin: Transform { rot: Mat3::identity(), pos: ee0 },
        }],
        gravity: Vec3::zeros(),
        inertances: Vec::new(),
    };

    let ee_term = Terminal::Robot { body: 2, offset: [1.0, 0.0, 0.0] };
    let cart_term = Terminal::Virtual { body: 1, offset: [0.0; 3] };
    let spring = if saturating {
        SpringSpec::Tanh {
            k: ParamRef::Fixed(REACH_SPRING_K),
            sigma: ParamRef::Fixed(30.0),
        }
    } else {
        SpringSpec::Linear { k: ParamRef::Fixed(REACH_SPRING_K) }
    };
    let damper = if saturating {
        DamperSpec::Saturating {
            c: ParamRef::Fixed(REACH_DAMPER_C),
            sigma: ParamRef::Fixed(30.0),
        }
    } else {
        DamperSpec::Linear { c: ParamRef::Fixed(REACH_DAMPER_C) }
    };

    let mut metadata = BTreeMap::new();
    metadata.insert(
        "parameters_note".into(),
        "cart mass/drag/drive and interface gains are toolkit choices at desk scale".into(),
    );
    let system = ClosedLoopSystem {
        name: "reach".into(),
        robot,
        virtual_mech,
        elements: vec![
            ElementSpec {
                name: "constraint-spring".into(),
                spring: Some(spring),
                damper: None,
                a: ee_term,
                b: cart_term,
                rest_offset: [0.0; 3],
            },
            ElementSpec {
                name: "constraint-damper".into(),
                spring: None,
                damper: Some(damper),
                a: ee_term,
                b: cart_term,
                rest_offset: [0.0; 3],
            },
            ElementSpec {
                name: "cart-drag".into(),
                spring: None,
                damper: Some(DamperSpec::Linear { c: ParamRef::Fixed(cart_drag) }),
                a: cart_term,
                b: Terminal::World { offset: ee0.0 },
                rest_offset: [0.0; 3],
            },
        ],
        joint_dampers: vec![],
        drive_forces: vec![DriveForce {
            at: cart_term,
            force: [drive_force, 0.0, 0.0],
        }],
        constant_joint_torques: vec![],
        gravity_comp: true,
        wiring: ExogenousWiring { channels: vec![] },
        outputs: PerformanceOutput { channels: vec![] },
        n_params: 0,
        ee: Some(tip),
        r0: ee0,
        instrument: None,
        rcm: None,
        x0: {
            let mut x0 = vec![0.0; 10];
            x0[0] = q0[0];
            x0[1] = q0[1];
            x0
        },
        tau: DEFAULT_TAU,
        metadata,
    };
    ExperimentPreset {
        name: "reach".into(),
        system,
        map: ParameterMap { kinds: vec![] },
        theta0: vec![],
        scenarios: ScenarioSet {
            scenarios: vec![Scenario::zero(&[], "nominal")],
            provenance: Provenance::Handcrafted,
        },
        base_dt: 1e-3,
        banded_dt: false,
    }
}

// ---------------------------------------------------------------------------
// RCM virtual instrument
// ---------------------------------------------------------------------------

const INSTRUMENT_LENGTH: f64 = 0.25;
/// RCM sits at this fraction of the instrument length from its base.
const RCM_FRACTION: f64 = 0.6;
/// Initial θ for all eight tuned parameters (stiffnesses map to ≈ 1000,
/// dampings to ≈ 10).
pub const RCM_THETA0: f64 = 6.91;

fn rcm_robot() -> Mechanism {
    let body = |name: &str, m: f64, com: [f64; 3], i: [f64; 3]| Body {
        name: name.into(),
        mass: m,
        com: Vec3(com),
        inertia: Mat3::from_diag(Vec3(i)),
    };
    let joint = |axis: [f64; 3], parent: usize, xyz: [f64; 3]| Joint {
        kind: JointKind::Revolute,
        axis: Vec3(axis),
        parent_body: parent,
        origin: Transform { rot: Mat3::identity(), pos: Vec3(xyz) },
    };
    Mechanism {
        bodies: vec![
            body("shoulder", 2.0, [0.0, 0.0, 0.05], [0.02, 0.02, 0.01]),
            body("upper_arm", 1.5, [0.15, 0.0, 0.0], [0.002, 0.02, 0.02]),
            body("forearm", 1.2, [0.125, 0.0, 0.0], [0.002, 0.015, 0.015]),
            body("wrist_roll", 0.5, [0.05, 0.0, 0.0], [0.0005, 0.001, 0.001]),
            body("wrist_pitch", 0.4, [0.03, 0.0, 0.0], [0.0004, 0.0008, 0.0008]),
            body("flange", 0.3, [0.04, 0.0, 0.0], [0.0003, 0.0006, 0.0006]),
        ],
        joints: vec![
            joint([0.0, 0.0, 1.0], 0, [0.0, 0.0, 0.15]),
            joint([0.0, 1.0, 0.0], 1, [0.0, 0.0, 0.10]),
            joint([0.0, 1.0, 0.0], 2, [0.30, 0.0, 0.0]),
            joint([1.0, 0.0, 0.0], 3, [0.25, 0.0, 0.0]),
            joint([0.0, 1.0, 0.0], 4, [0.10, 0.0, 0.0]),
            joint([1.0, 0.0, 0.0], 5, [0.06, 0.0, 0.0]),
        ],
        gravity: Vec3::new(0.0, 0.0, -9.81),
        inertances: Vec::new(),
    }
}

/// Desk-scale RCM preset: a 6-DOF arm holding an instrument, coupled to a
/// virtual instrument (3 co-located revolutes at the RCM + 1 prismatic
/// along the axis) by spring-damper pairs at the instrument base and tip,
/// plus an end-effector reference coupling and joint dampers on J1/J4.
/// θ = 8 parameters through the exp mapping.
pub fn build_rcm() -> ExperimentPreset {
    build_rcm_with(None)
}

/// `saturating_sigma`: replace the two instrument-coupling springs with
/// saturating springs of that force limit.
pub fn build_rcm_with(saturating_sigma: Option<f64>) -> ExperimentPreset {
    let robot = rcm_robot();
    let q0 = [0.0, 0.4, 0.5, 0.0, 0.45, 0.0];

    let base_off = [0.06, 0.0, 0.0];
    let tip_off = [0.06 + INSTRUMENT_LENGTH, 0.0, 0.0];
    let frames = forward_kinematics(&robot, &q0).expect("static FK");
    let x6 = frames[5];
    let base_w = x6.apply(Vec3(base_off));
    let tip_w = x6.apply(Vec3(tip_off));
    let dir = tip_w.sub(base_w).scale(1.0 / INSTRUMENT_LENGTH);
    let rcm_w = base_w.add(dir.scale(RCM_FRACTION * INSTRUMENT_LENGTH));
    let port_off = x6.inverse_apply(rcm_w);

    // Virtual instrument orientation matching the real instrument axis:
    // yaw-pitch about the RCM, then a prismatic slide along the axis.
    let yaw = dir.y().atan2(dir.x());
    let pitch = dir.z().clamp(-1.0, 1.0).acos();
    let rod_base_z = -RCM_FRACTION * INSTRUMENT_LENGTH;
    let rod_tip_z = (1.0 - RCM_FRACTION) * INSTRUMENT_LENGTH;
    let rod_center_z = 0.5 * (rod_base_z + rod_tip_z);

    let massless = |name: &str| Body {
        name: name.into(),
        mass: 0.0,
        com: Vec3::zeros(),
        inertia: Mat3::zeros(),
    };
    let virtual_base = Mechanism {
        bodies: vec![
            massless("gimbal_z"),
            massless("gimbal_y"),
            massless("gimbal_x"),
            Body {
                name: "rod".into(),
                mass: 0.0,
                com: Vec3::new(0.0, 0.0, rod_center_z),
                inertia: Mat3::from_diag(Vec3::new(0.05, 0.05, 0.05)),
            },
        ],
        joints: vec![
            Joint {
                kind: JointKind::Revolute,
                axis: Vec3::new(0.0, 0.0, 1.0),
                parent_body: 0,
                origin: Transform { rot: Mat3::identity(), pos: rcm_w },
            },
            Joint {
                kind: JointKind::Revolute,
                axis: Vec3::new(0.0, 1.0, 0.0),
                parent_body: 1,
                origin: Transform::identity(),
            },
            Joint {
                kind: JointKind::Revolute,
                axis: Vec3::new(1.0, 0.0, 0.0),
                parent_body: 2,
                origin: Transform::identity(),
            },
            Joint {
                kind: JointKind::Prismatic,
                axis: Vec3::new(0.0, 0.0, 1.0),
                parent_body: 3,
                origin: Transform::identity(),
            },
        ],
        gravity: Vec3::zeros(),
        inertances: Vec::new(),
    };
    let virtual_mech = assemble_inertance(
        &[Inerter {
            inertance: 1.0,
            a: PointAttachment { body: 4, offset: Vec3::new(0.0, 0.0, rod_center_z) },
            b: PointAttachment::world(Vec3::zeros()),
        }],
        &virtual_base,
    )
    .expect("static inerter");

    let ee_term = Terminal::Robot { body: 6, offset: tip_off };
    let base_term = Terminal::Robot { body: 6, offset: base_off };
    let rod_base_term = Terminal::Virtual { body: 4, offset: [0.0, 0.0, rod_base_z] };
    let rod_tip_term = Terminal::Virtual { body: 4, offset: [0.0, 0.0, rod_tip_z] };

    let coupling_spring = |param: usize| -> SpringSpec {
        match saturating_sigma {
            Some(sigma) => SpringSpec::Tanh {
                k: ParamRef::Tuned { param },
                sigma: ParamRef::Fixed(sigma),
            },
            None => SpringSpec::Linear { k: ParamRef::Tuned { param } },
        }
    };

    let elements = vec![
        ElementSpec {
            name: "ee-ref-spring".into(),
            spring: Some(SpringSpec::Linear { k: ParamRef::Tuned { param: 0 } }),
            damper: None,
            a: ee_term,
            b: Terminal::Reference,
            rest_offset: [0.0; 3],
        },
        ElementSpec {
            name: "base-vi-spring".into(),
            spring: Some(coupling_spring(1)),
            damper: None,
            a: base_term,
            b: rod_base_term,
            rest_offset: [0.0; 3],
        },
        ElementSpec {
            name: "ee-vi-spring".into(),
            spring: Some(coupling_spring(2)),
            damper: None,
            a: ee_term,
            b: rod_tip_term,
            rest_offset: [0.0; 3],
        },
        ElementSpec {
            name: "ee-ref-damper".into(),
            spring: None,
            damper: Some(DamperSpec::Linear { c: ParamRef::Tuned { param: 3 } }),
            a: ee_term,
            b: Terminal::Reference,
            rest_offset: [0.0; 3],
        },
        ElementSpec {
            name: "base-vi-damper".into(),
            spring: None,
            damper: Some(DamperSpec::Linear { c: ParamRef::Tuned { param: 4 } }),
            a: base_term,
            b: rod_base_term,
            rest_offset: [0.0; 3],
        },
        ElementSpec {
            name: "ee-vi-damper".into(),
            spring: None,
            damper: Some(DamperSpec::Linear { c: ParamRef::Tuned { param: 5 } }),
            a: ee_term,
            b: rod_tip_term,
            rest_offset: [0.0; 3],
        },
    ];

    let unit_dirs = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "robot_note".into(),
        "declared desk-scale 6-DOF arm; inertial values are toolkit choices".into(),
    );
    let n_r = 6;
    let mut x0 = vec![0.0; 2 * n_r + 2 * 4 + 4];
    x0[..6].copy_from_slice(&q0);
    x0[12] = yaw;
    x0[13] = pitch;

    let system = ClosedLoopSystem {
        name: "rcm".into(),
        robot,
        virtual_mech,
        elements,
        joint_dampers: vec![
            JointDamperSpec { joint: 0, c: ParamRef::Tuned { param: 6 } },
            JointDamperSpec { joint: 3, c: ParamRef::Tuned { param: 7 } },
        ],
        drive_forces: vec![],
        constant_joint_torques: vec![],
        gravity_comp: true,
        wiring: ExogenousWiring {
            channels: vec![
                WiringChannel {
                    target: ChannelTarget::Disturbance {
                        body: 6,
                        offset: tip_off,
                        dirs: unit_dirs.clone(),
                    },
                    weight: vec![8.0; 3],
                },
                WiringChannel {
                    target: ChannelTarget::Disturbance {
                        body: 6,
                        offset: port_off.0,
                        dirs: unit_dirs.clone(),
                    },
                    weight: vec![4.0; 3],
                },
                WiringChannel { target: ChannelTarget::NoiseQ, weight: vec![0.002; 6] },
                WiringChannel { target: ChannelTarget::NoiseQd, weight: vec![0.1; 6] },
                WiringChannel {
                    target: ChannelTarget::Reference { dirs: unit_dirs },
                    weight: vec![0.05; 3],
                },
            ],
        },
        outputs: PerformanceOutput {
            channels: vec![
                OutputChannel {
                    kind: OutputKind::TrackingError,
                    weight: vec![1.0; 3],
                    y1: true,
                    y2: false,
                },
                OutputChannel {
                    kind: OutputKind::RcmError,
                    weight: vec![0.2_f64.sqrt(); 2],
                    y1: true,
                    y2: false,
                },
            ],
        },
        n_params: 8,
        ee: Some(PointAttachment { body: 6, offset: Vec3(tip_off) }),
        r0: tip_w,
        instrument: Some(InstrumentFrame {
            body: 6,
            local: Transform {
                rot: Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), std::f64::consts::FRAC_PI_2),
                pos: Vec3(base_off),
            },
        }),
        rcm: Some(rcm_w),
        x0,
        tau: DEFAULT_TAU,
        metadata,
    };
    ExperimentPreset {
        name: "rcm".into(),
        system,
        map: ParameterMap {
            kinds: vec![
                ParamKind::Stiffness,
                ParamKind::Stiffness,
                ParamKind::Stiffness,
                ParamKind::Damping,
                ParamKind::Damping,
                ParamKind::Damping,
                ParamKind::Damping,
                ParamKind::Damping,
            ],
        },
        theta0: vec![RCM_THETA0; 8],
        scenarios: surgical_scenarios(6),
        base_dt: 2e-3,
        banded_dt: false,
    }
}

/// Instrument tip speed from a recorded state (used by the reach checks).
pub fn tip_speed(sys: &ClosedLoopSystem, state: &[f64]) -> Result<f64> {
    let ee = sys
        .ee
        .ok_or_else(|| Error::Contract("system has no end-effector point".into()))?;
    let n_r = sys.n_r();
    let q = &state[..n_r];
    let qd = &state[n_r..2 * n_r];
    let jac = crate::mech::point_jacobian(&sys.robot, q, &ee)?;
    let v = jac
        .iter()
        .zip(qd)
        .fold(Vec3::zeros(), |acc, (col, &w)| acc.add(col.scale(w)));
    Ok(v.norm_guarded())
}

/// World position of the end-effector at a recorded state.
pub fn tip_position<T: Real>(sys: &ClosedLoopSystem, state: &[T]) -> Result<Vec3<T>> {
    let ee = sys
        .ee
        .ok_or_else(|| Error::Contract("system has no end-effector point".into()))?;
    let q = &state[..sys.n_r()];
    crate::mech::point_position(&sys.robot, q, &ee)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedloop::rhs;
    use crate::scenarios::LiftedScenario;
    use crate::sim::SimConfig;

    #[test]
    fn presets_validate() {
        for name in ["cart", "reach", "rcm"] {
            let preset = ExperimentPreset::by_name(name).unwrap();
            preset.system.validate().unwrap();
            assert_eq!(preset.theta0.len(), preset.map.len());
        }
        assert!(ExperimentPreset::by_name("nope").is_err());
    }

    #[test]
    fn cart_weights_appear_in_serialized_config() {
        let preset = build_cart();
        let json = preset.to_doc().to_json_pretty().unwrap();
        for w in ["0.01", "0.1", "5.0", "100.0"] {
            assert!(json.contains(w), "missing weight {w}");
        }
        assert!(json.contains("\"schema\": 1"));
    }

    #[test]
    fn rcm_rest_state_is_equilibrium() {
        let preset = build_rcm();
        let sys = &preset.system;
        let theta_hat = preset.map.apply(&preset.theta0);
        let sc = Scenario::zero(&sys.channel_dims(), "zero");
        let dx = rhs(sys, &sys.x0, 0.0, &theta_hat, &sc).unwrap();
        let norm: f64 = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "‖ẋ‖ = {norm} at rest");
    }

    #[test]
    fn rcm_initial_mapped_parameters() {
        let preset = build_rcm();
        let th = preset.map.apply(&preset.theta0);
        for i in 0..3 {
            assert!((th[i] - 1000.0).abs() < 5.0, "stiffness {i}: {}", th[i]);
        }
        for i in 3..8 {
            assert!((th[i] - 10.0).abs() < 0.1, "damping {i}: {}", th[i]);
        }
    }

    #[test]
    fn rcm_instrument_axis_passes_through_rcm_at_rest() {
        let preset = build_rcm();
        let sys = &preset.system;
        let frames = forward_kinematics(&sys.robot, &sys.x0[..6]).unwrap();
        let inst = sys.instrument.as_ref().unwrap();
        let frame = frames[inst.body - 1].compose(&inst.local.lift());
        let e = crate::closedloop::rcm_error(&frame, sys.rcm.unwrap());
        assert!(e[0].abs() < 1e-12 && e[1].abs() < 1e-12);
    }

    #[test]
    fn preset_round_trips_through_schema() {
        for name in ["cart", "reach", "rcm"] {
            let preset = ExperimentPreset::by_name(name).unwrap();
            let json = preset.to_doc().to_json_pretty().unwrap();
            let (sys, map, theta0) = SystemDoc::from_json(&json).unwrap().into_parts().unwrap();
            let json2 = SystemDoc::from_parts(&sys, &map, &theta0)
                .to_json_pretty()
                .unwrap();
            assert_eq!(json, json2, "round trip of {name}");
        }
    }

    #[test]
    fn reach_runs_and_moves_forward() {
        let preset = build_reach();
        let sys = &preset.system;
        let cfg = SimConfig::loss_only(1e-3, 2.0);
        let lifted = LiftedScenario::<f64>::lift(&preset.scenarios.scenarios[0]);
        let res = crate::closedloop::simulate(sys, &[], &lifted, &cfg).unwrap();
        // Cart has been pulled along +x and the tip follows.
        let cart_q = res.final_state[4];
        assert!(cart_q > 0.3, "cart moved {cart_q}");
        let speed = tip_speed(sys, &res.final_state).unwrap();
        assert!(speed > 0.2, "tip speed {speed}");
    }
}
