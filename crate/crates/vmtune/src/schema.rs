//! Versioned JSON document for a full closed-loop system: mechanisms,
//! components, wiring, outputs, and the θ binding. `schema: 1`.

use crate::closedloop::{
    ClosedLoopSystem, DamperSpec, DriveForce, ElementSpec, ExogenousWiring, InstrumentFrame,
    JointDamperSpec, PerformanceOutput, SpringSpec, Terminal,
};
use crate::elements::{assemble_inertance, Inerter};
use crate::linalg::{Transform, Vec3};
use crate::mech::{rot_to_rpy, rpy_to_rot, Mechanism, MechanismDoc, PointAttachment};
use crate::optimize::ParameterMap;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

fn zero3() -> [f64; 3] {
    [0.0; 3]
}

fn default_name() -> String {
    String::new()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ComponentDoc {
    Spring {
        #[serde(flatten)]
        law: SpringSpec,
        a: Terminal,
        b: Terminal,
        #[serde(default = "zero3")]
        rest_offset: [f64; 3],
        #[serde(default = "default_name")]
        name: String,
    },
    Damper {
        #[serde(flatten)]
        law: DamperSpec,
        a: Terminal,
        b: Terminal,
        #[serde(default = "zero3")]
        rest_offset: [f64; 3],
        #[serde(default = "default_name")]
        name: String,
    },
    Inerter {
        m: f64,
        a: Terminal,
        b: Terminal,
    },
}

#[derive(Serialize, Deserialize)]
struct InstrumentDoc {
    body: usize,
    xyz: [f64; 3],
    rpy: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct ThetaDoc {
    map: ParameterMap,
    initial: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct SystemDoc {
    schema: u32,
    name: String,
    robot: MechanismDoc,
    #[serde(rename = "virtual")]
    virtual_mech: MechanismDoc,
    components: Vec<ComponentDoc>,
    #[serde(default)]
    joint_dampers: Vec<JointDamperSpec>,
    #[serde(default)]
    drive_forces: Vec<DriveForce>,
    gravity_comp: bool,
    wiring: ExogenousWiring,
    outputs: PerformanceOutput,
    theta: ThetaDoc,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    ee: Option<AttachmentDoc>,
    r0: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    instrument: Option<InstrumentDoc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    rcm: Option<[f64; 3]>,
    x0: Vec<f64>,
    tau: f64,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct AttachmentDoc {
    body: usize,
    offset: [f64; 3],
}

fn terminal_to_virtual_attachment(t: &Terminal, what: &str) -> Result<PointAttachment> {
    match *t {
        Terminal::Virtual { body, offset } => Ok(PointAttachment { body, offset: Vec3(offset) }),
        Terminal::World { offset } => Ok(PointAttachment::world(Vec3(offset))),
        _ => Err(Error::Config(format!(
            "{what}: inerter terminals must be on the virtual mechanism or ground \
             (robot accelerations are not available to the controller)"
        ))),
    }
}

impl SystemDoc {
    pub fn from_parts(sys: &ClosedLoopSystem, map: &ParameterMap, theta0: &[f64]) -> Self {
        let mut components = Vec::new();
        for el in &sys.elements {
            if let Some(s) = &el.spring {
                components.push(ComponentDoc::Spring {
                    law: s.clone(),
                    a: el.a,
                    b: el.b,
                    rest_offset: el.rest_offset,
                    name: el.name.clone(),
                });
            }
            if let Some(d) = &el.damper {
                components.push(ComponentDoc::Damper {
                    law: d.clone(),
                    a: el.a,
                    b: el.b,
                    rest_offset: el.rest_offset,
                    name: el.name.clone(),
                });
            }
        }
        // Inertances live on the assembled virtual mechanism; emit them as
        // components and strip them from the mechanism document.
        let mut virt = sys.virtual_mech.clone();
        for pi in virt.inertances.drain(..) {
            let to_term = |att: &PointAttachment| -> Terminal {
                if att.body == 0 {
                    Terminal::World { offset: att.offset.0 }
                } else {
                    Terminal::Virtual { body: att.body, offset: att.offset.0 }
                }
            };
            components.push(ComponentDoc::Inerter {
                m: pi.inertance,
                a: to_term(&pi.a),
                b: to_term(&pi.b),
            });
        }
        SystemDoc {
            schema: SCHEMA_VERSION,
            name: sys.name.clone(),
            robot: sys.robot.to_doc(),
            virtual_mech: virt.to_doc(),
            components,
            joint_dampers: sys.joint_dampers.clone(),
            drive_forces: sys.drive_forces.clone(),
            gravity_comp: sys.gravity_comp,
            wiring: sys.wiring.clone(),
            outputs: sys.outputs.clone(),
            theta: ThetaDoc { map: map.clone(), initial: theta0.to_vec() },
            ee: sys.ee.map(|a| AttachmentDoc { body: a.body, offset: a.offset.0 }),
            r0: sys.r0.0,
            instrument: sys.instrument.as_ref().map(|i| InstrumentDoc {
                body: i.body,
                xyz: i.local.pos.0,
                rpy: rot_to_rpy(&i.local.rot),
            }),
            rcm: sys.rcm.map(|r| r.0),
            x0: sys.x0.clone(),
            tau: sys.tau,
            metadata: sys.metadata.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(ClosedLoopSystem, ParameterMap, Vec<f64>)> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let robot = Mechanism::from_doc(&self.robot)?;
        let virtual_base = Mechanism::from_doc(&self.virtual_mech)?;
        let mut elements = Vec::new();
        let mut inerters = Vec::new();
        for comp in self.components {
            match comp {
                ComponentDoc::Spring { law, a, b, rest_offset, name } => {
                    elements.push(ElementSpec {
                        name,
                        spring: Some(law),
                        damper: None,
                        a,
                        b,
                        rest_offset,
                    });
                }
                ComponentDoc::Damper { law, a, b, rest_offset, name } => {
                    elements.push(ElementSpec {
                        name,
                        spring: None,
                        damper: Some(law),
                        a,
                        b,
                        rest_offset,
                    });
                }
                ComponentDoc::Inerter { m, a, b } => {
                    inerters.push(Inerter {
                        inertance: m,
                        a: terminal_to_virtual_attachment(&a, "component")?,
                        b: terminal_to_virtual_attachment(&b, "component")?,
                    });
                }
            }
        }
        let virtual_mech = assemble_inertance(&inerters, &virtual_base)?;
        let n_params = self.theta.map.len();
        let sys = ClosedLoopSystem {
            name: self.name,
            robot,
            virtual_mech,
            elements,
            joint_dampers: self.joint_dampers,
            drive_forces: self.drive_forces,
            constant_joint_torques: Vec::new(),
            gravity_comp: self.gravity_comp,
            wiring: self.wiring,
            outputs: self.outputs,
            n_params,
            ee: self.ee.map(|a| PointAttachment { body: a.body, offset: Vec3(a.offset) }),
            r0: Vec3(self.r0),
            instrument: self.instrument.map(|i| InstrumentFrame {
                body: i.body,
                local: Transform { rot: rpy_to_rot(i.rpy), pos: Vec3(i.xyz) },
            }),
            rcm: self.rcm.map(Vec3),
            x0: self.x0,
            tau: self.tau,
            metadata: self.metadata,
        };
        sys.validate()?;
        if self.theta.initial.len() != n_params {
            return Err(Error::Config(format!(
                "theta.initial has {} entries, map has {}",
                self.theta.initial.len(),
                n_params
            )));
        }
        Ok((sys, self.theta.map, self.theta.initial))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDoc = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "system JSON parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        Ok(doc)
    }
}

/// Run provenance written next to every artifact a command emits.
#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
    pub version: String,
    pub unix_time_s: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: String, config: &str, seed: u64, dt: f64, t_final: f64) -> Self {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(config.as_bytes());
        let hash = hasher.finalize();
        RunManifest {
            command,
            config_sha256: hex_string(&hash),
            seed,
            dt,
            t_final,
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
        }
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
