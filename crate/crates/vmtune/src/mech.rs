//! Kinematic-tree rigid-body modeling: forward kinematics, point Jacobians,
//! mass matrix, bias forces, forward dynamics, and mechanical energy.
//!
//! Bodies form a tree rooted at the world (index 0); body i is driven by
//! joint i and its parent must precede it. All quantities are computed in
//! world coordinates, which keeps the recursions free of frame bookkeeping:
//! the Newton-Euler sweep accumulates wrenches about the world origin and
//! the composite-rigid-body pass sums world-frame spatial inertias.

use crate::linalg::{Cholesky, Mat3, Transform, Vec3};
use crate::scalar::Real;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One-DOF joint connecting a body to its parent.
///
/// `origin` places the joint frame in the parent frame; `axis` is expressed
/// in the joint frame. The child body frame coincides with the joint frame
/// displaced by the joint motion.
#[derive(Clone, Debug)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: Vec3<f64>,
    /// 0 = world, i > 0 = body i.
    pub parent_body: usize,
    pub origin: Transform<f64>,
}

#[derive(Clone, Debug)]
pub struct Body {
    pub name: String,
    pub mass: f64,
    /// Centre of mass in the body frame.
    pub com: Vec3<f64>,
    /// Rotational inertia about the com, body frame.
    pub inertia: Mat3<f64>,
}

/// A point rigidly attached to a body (0 = world/ground).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAttachment {
    pub body: usize,
    pub offset: Vec3<f64>,
}

impl PointAttachment {
    pub fn world(offset: Vec3<f64>) -> Self {
        PointAttachment { body: 0, offset }
    }
}

/// Two-terminal inertance folded into a mechanism: contributes
/// m·(J_a − J_b)ᵀ(J_a − J_b) to the mass matrix and the matching velocity
/// products to the bias, but no gravity load.
#[derive(Clone, Debug)]
pub struct PointInertance {
    pub a: PointAttachment,
    pub b: PointAttachment,
    pub inertance: f64,
}

#[derive(Clone, Debug)]
pub struct Mechanism {
    pub bodies: Vec<Body>,
    pub joints: Vec<Joint>,
    pub gravity: Vec3<f64>,
    pub inertances: Vec<PointInertance>,
}

impl Mechanism {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bodies.len() != self.joints.len() {
            return Err(Error::Contract(format!(
                "joint count {} must equal body count {}",
                self.joints.len(),
                self.bodies.len()
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm_f64() - 1.0).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "joint {i}: axis norm {} is not 1",
                    j.axis.norm_f64()
                )));
            }
            if j.parent_body > i {
                return Err(Error::Contract(format!(
                    "joint {i}: parent {} does not precede body {}",
                    j.parent_body,
                    i + 1
                )));
            }
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if b.mass < 0.0 {
                return Err(Error::Contract(format!("body {i}: negative mass")));
            }
            for r in 0..3 {
                for c in 0..3 {
                    if (b.inertia.0[r][c] - b.inertia.0[c][r]).abs() > 1e-12 {
                        return Err(Error::Contract(format!(
                            "body {i}: inertia not symmetric"
                        )));
                    }
                }
            }
            let ev = b.inertia.symmetric_eigenvalues();
            if ev[0] < -1e-9 {
                return Err(Error::Contract(format!(
                    "body {i}: inertia has negative eigenvalue {}",
                    ev[0]
                )));
            }
            // Principal moments of any mass distribution satisfy the
            // triangle inequality.
            if ev[0] + ev[1] < ev[2] - 1e-9 {
                return Err(Error::Contract(format!(
                    "body {i}: principal moments {ev:?} violate the triangle inequality"
                )));
            }
        }
        for (k, pi) in self.inertances.iter().enumerate() {
            if pi.a.body > self.bodies.len() || pi.b.body > self.bodies.len() {
                return Err(Error::Contract(format!(
                    "inertance {k}: attachment body out of range"
                )));
            }
            if pi.inertance <= 0.0 {
                return Err(Error::Contract(format!("inertance {k}: must be positive")));
            }
        }
        Ok(())
    }

    fn check_attachment(&self, p: &PointAttachment) -> Result<()> {
        if p.body > self.bodies.len() {
            return Err(Error::Contract(format!(
                "attachment body index {} out of range (n bodies = {})",
                p.body,
                self.bodies.len()
            )));
        }
        Ok(())
    }

    fn check_dim(&self, v: &[impl Sized], what: &str) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::Contract(format!(
                "{what} has length {}, mechanism has {} DOF",
                v.len(),
                self.dof()
            )));
        }
        Ok(())
    }
}

/// Scratch state for kinematic/dynamic sweeps; reuse across calls to avoid
/// per-step allocation in the integration loop.
#[derive(Clone, Debug)]
pub struct KinState<T> {
    /// Body-frame-to-world transform per body.
    pub x: Vec<Transform<T>>,
    /// World joint axis per body.
    pub axis_w: Vec<Vec3<T>>,
    pub omega: Vec<Vec3<T>>,
    /// Velocity of the body-frame origin.
    pub vel_org: Vec<Vec3<T>>,
    pub alpha: Vec<Vec3<T>>,
    /// Acceleration of the body-frame origin, with the −g baseline folded in.
    pub acc_org: Vec<Vec3<T>>,
    pub com_w: Vec<Vec3<T>>,
    pub inertia_w: Vec<Mat3<T>>,
    // backward-sweep accumulators (wrench about world origin)
    f_lin: Vec<Vec3<T>>,
    n_org: Vec<Vec3<T>>,
    // composite spatial inertia (world origin): mass, first moment, I_origin
    ci_mass: Vec<T>,
    ci_h: Vec<Vec3<T>>,
    ci_i: Vec<Mat3<T>>,
    // solver scratch
    scratch_zero: Vec<T>,
    scratch_rhs: Vec<T>,
    // bodies whose rotational inertia is exactly zero (skip R·I·Rᵀ)
    zero_inertia: Vec<bool>,
}

impl<T: Real> KinState<T> {
    pub fn new(mech: &Mechanism) -> Self {
        let n = mech.bodies.len();
        KinState {
            x: vec![Transform::identity(); n],
            axis_w: vec![Vec3::zeros(); n],
            omega: vec![Vec3::zeros(); n],
            vel_org: vec![Vec3::zeros(); n],
            alpha: vec![Vec3::zeros(); n],
            acc_org: vec![Vec3::zeros(); n],
            com_w: vec![Vec3::zeros(); n],
            inertia_w: vec![Mat3::zeros(); n],
            f_lin: vec![Vec3::zeros(); n],
            n_org: vec![Vec3::zeros(); n],
            ci_mass: vec![T::zero(); n],
            ci_h: vec![Vec3::zeros(); n],
            ci_i: vec![Mat3::zeros(); n],
            scratch_zero: vec![T::zero(); n],
            scratch_rhs: vec![T::zero(); n],
            zero_inertia: mech
                .bodies
                .iter()
                .map(|b| b.inertia.0.iter().flatten().all(|v| *v == 0.0))
                .collect(),
        }
    }

    /// Forward kinematics sweep; fills transforms, world axes, world coms
    /// and world inertias. Every other sweep assumes this ran for the same q.
    pub fn fk(&mut self, mech: &Mechanism, q: &[T]) {
        for i in 0..mech.bodies.len() {
            let joint = &mech.joints[i];
            let parent: Transform<T> = if joint.parent_body == 0 {
                Transform::identity()
            } else {
                self.x[joint.parent_body - 1]
            };
            let frame = parent.compose(&joint.origin.lift());
            let axis = joint.axis.lift::<T>();
            let xi = match joint.kind {
                JointKind::Revolute => Transform {
                    rot: frame.rot.mul_mat(&Mat3::rotation(axis, q[i])),
                    pos: frame.pos,
                },
                JointKind::Prismatic => Transform {
                    rot: frame.rot,
                    pos: frame.pos.add(frame.rot.mul_vec(axis.scale(q[i]))),
                },
            };
            // A revolute motion preserves its own axis, so the child
            // rotation can be used for both joint kinds.
            self.axis_w[i] = xi.rot.mul_vec(axis);
            let body = &mech.bodies[i];
            self.com_w[i] = xi.apply(body.com.lift());
            if self.zero_inertia[i] {
                self.inertia_w[i] = Mat3::zeros();
            } else {
                let r = xi.rot;
                self.inertia_w[i] = r.mul_mat(&body.inertia.lift()).mul_mat(&r.transpose());
            }
            self.x[i] = xi;
        }
    }

    /// Velocity sweep (requires `fk`).
    pub fn vel(&mut self, mech: &Mechanism, qd: &[T]) {
        for i in 0..mech.bodies.len() {
            let joint = &mech.joints[i];
            let (om_p, v_p, o_p) = if joint.parent_body == 0 {
                (Vec3::zeros(), Vec3::zeros(), Vec3::zeros())
            } else {
                let p = joint.parent_body - 1;
                (self.omega[p], self.vel_org[p], self.x[p].pos)
            };
            let o_i = self.x[i].pos;
            let v_carried = v_p.add(om_p.cross(o_i.sub(o_p)));
            match joint.kind {
                JointKind::Revolute => {
                    self.omega[i] = om_p.add(self.axis_w[i].scale(qd[i]));
                    self.vel_org[i] = v_carried;
                }
                JointKind::Prismatic => {
                    self.omega[i] = om_p;
                    self.vel_org[i] = v_carried.add(self.axis_w[i].scale(qd[i]));
                }
            }
        }
    }

    pub fn point_pos(&self, att: &PointAttachment) -> Vec3<T> {
        if att.body == 0 {
            att.offset.lift()
        } else {
            self.x[att.body - 1].apply(att.offset.lift())
        }
    }

    /// Velocity of an attached point (requires `vel`).
    pub fn point_vel(&self, att: &PointAttachment) -> Vec3<T> {
        if att.body == 0 {
            return Vec3::zeros();
        }
        let b = att.body - 1;
        let p = self.point_pos(att);
        self.vel_org[b].add(self.omega[b].cross(p.sub(self.x[b].pos)))
    }

    /// Acceleration of an attached point in the −g-baseline convention
    /// (requires `acc`); ground points return −g.
    pub fn point_acc_baseline(&self, att: &PointAttachment, gravity: Vec3<T>) -> Vec3<T> {
        if att.body == 0 {
            return gravity.neg();
        }
        let b = att.body - 1;
        let p = self.point_pos(att);
        let r = p.sub(self.x[b].pos);
        self.acc_org[b]
            .add(self.alpha[b].cross(r))
            .add(self.omega[b].cross(self.omega[b].cross(r)))
    }

    /// Fill the 3×n point Jacobian as n column vectors (requires `fk`).
    pub fn point_jacobian_into(
        &self,
        mech: &Mechanism,
        att: &PointAttachment,
        cols: &mut [Vec3<T>],
    ) {
        for c in cols.iter_mut() {
            *c = Vec3::zeros();
        }
        if att.body == 0 {
            return;
        }
        let p = self.point_pos(att);
        let mut b = att.body;
        while b != 0 {
            let i = b - 1;
            cols[i] = match mech.joints[i].kind {
                JointKind::Revolute => self.axis_w[i].cross(p.sub(self.x[i].pos)),
                JointKind::Prismatic => self.axis_w[i],
            };
            b = mech.joints[i].parent_body;
        }
    }
}

impl<T: Real> KinState<T> {
    /// Acceleration sweep (requires `vel`). The world root carries a −g
    /// baseline acceleration, which folds gravity into the wrench sweep.
    pub fn acc_with_rates(&mut self, mech: &Mechanism, qd: &[T], qdd: &[T]) {
        let g = mech.gravity.lift::<T>();
        for i in 0..mech.bodies.len() {
            let joint = &mech.joints[i];
            let (om_p, al_p, a_p, o_p) = if joint.parent_body == 0 {
                (Vec3::zeros(), Vec3::zeros(), g.neg(), Vec3::zeros())
            } else {
                let p = joint.parent_body - 1;
                (self.omega[p], self.alpha[p], self.acc_org[p], self.x[p].pos)
            };
            let r = self.x[i].pos.sub(o_p);
            let a_carried = a_p.add(al_p.cross(r)).add(om_p.cross(om_p.cross(r)));
            let axis = self.axis_w[i];
            match joint.kind {
                JointKind::Revolute => {
                    self.alpha[i] = al_p
                        .add(axis.scale(qdd[i]))
                        .add(om_p.cross(axis).scale(qd[i]));
                    self.acc_org[i] = a_carried;
                }
                JointKind::Prismatic => {
                    self.alpha[i] = al_p;
                    self.acc_org[i] = a_carried
                        .add(axis.scale(qdd[i]))
                        .add(om_p.cross(axis.scale(qd[i])).scale(T::from_f64(2.0)));
                }
            }
        }
    }

    /// Inverse dynamics via the Newton-Euler sweeps: torques that realize
    /// (q, q̇, q̈) including gravity, velocity products, and inertances.
    pub fn rnea_into(&mut self, mech: &Mechanism, q: &[T], qd: &[T], qdd: &[T], u: &mut [T]) {
        self.fk(mech, q);
        self.rnea_after_fk(mech, qd, qdd, u);
    }

    /// Newton-Euler sweeps on top of an existing fk.
    pub fn rnea_after_fk(&mut self, mech: &Mechanism, qd: &[T], qdd: &[T], u: &mut [T]) {
        self.vel(mech, qd);
        self.acc_with_rates(mech, qd, qdd);
        let g = mech.gravity.lift::<T>();
        let n = mech.bodies.len();
        for i in 0..n {
            let body = &mech.bodies[i];
            let m = T::from_f64(body.mass);
            let c = self.com_w[i];
            let r = c.sub(self.x[i].pos);
            let a_c = self.acc_org[i]
                .add(self.alpha[i].cross(r))
                .add(self.omega[i].cross(self.omega[i].cross(r)));
            let f = a_c.scale(m);
            let iw = &self.inertia_w[i];
            let n_com = iw
                .mul_vec(self.alpha[i])
                .add(self.omega[i].cross(iw.mul_vec(self.omega[i])));
            self.f_lin[i] = f;
            self.n_org[i] = n_com.add(c.cross(f));
        }
        // Inertance loads: element force m·z̈ pulls terminal a toward b.
        for pi in &mech.inertances {
            let za = self.point_acc_baseline(&pi.a, g);
            let zb = self.point_acc_baseline(&pi.b, g);
            let f = za.sub(zb).scale(T::from_f64(pi.inertance));
            if pi.a.body != 0 {
                let pa = self.point_pos(&pi.a);
                self.f_lin[pi.a.body - 1] = self.f_lin[pi.a.body - 1].add(f);
                self.n_org[pi.a.body - 1] = self.n_org[pi.a.body - 1].add(pa.cross(f));
            }
            if pi.b.body != 0 {
                let pb = self.point_pos(&pi.b);
                self.f_lin[pi.b.body - 1] = self.f_lin[pi.b.body - 1].sub(f);
                self.n_org[pi.b.body - 1] = self.n_org[pi.b.body - 1].sub(pb.cross(f));
            }
        }
        // Backward accumulation and joint projection.
        for i in (0..n).rev() {
            let o = self.x[i].pos;
            let axis = self.axis_w[i];
            u[i] = match mech.joints[i].kind {
                JointKind::Revolute => axis.dot(self.n_org[i].sub(o.cross(self.f_lin[i]))),
                JointKind::Prismatic => axis.dot(self.f_lin[i]),
            };
            let parent = mech.joints[i].parent_body;
            if parent != 0 {
                self.f_lin[parent - 1] = self.f_lin[parent - 1].add(self.f_lin[i]);
                self.n_org[parent - 1] = self.n_org[parent - 1].add(self.n_org[i]);
            }
        }
    }

    /// Composite-rigid-body mass matrix (row-major n×n) including inertance
    /// contributions. Runs its own fk.
    pub fn crba_into(&mut self, mech: &Mechanism, q: &[T], m_out: &mut [T]) {
        self.fk(mech, q);
        self.crba_after_fk(mech, m_out);
    }

    /// Composite-rigid-body pass on top of an existing fk.
    pub fn crba_after_fk(&mut self, mech: &Mechanism, m_out: &mut [T]) {
        let n = mech.bodies.len();
        for v in m_out.iter_mut() {
            *v = T::zero();
        }
        for i in 0..n {
            let body = &mech.bodies[i];
            let m = T::from_f64(body.mass);
            let c = self.com_w[i];
            // Spatial inertia about the world origin.
            let c_sq = Mat3::skew(c);
            let shift = c_sq.mul_mat(&c_sq.transpose()); // (cᵀc)I − ccᵀ
            self.ci_mass[i] = m;
            self.ci_h[i] = c.scale(m);
            self.ci_i[i] = self.inertia_w[i].add(&shift.scale(m));
        }
        for i in (0..n).rev() {
            let parent = mech.joints[i].parent_body;
            if parent != 0 {
                let p = parent - 1;
                self.ci_mass[p] = self.ci_mass[p] + self.ci_mass[i];
                self.ci_h[p] = self.ci_h[p].add(self.ci_h[i]);
                self.ci_i[p] = self.ci_i[p].add(&self.ci_i[i]);
            }
        }
        for i in 0..n {
            let (w_i, v_i) = self.motion_subspace(mech, i);
            // Wrench of the subtree inertia driven by joint i's subspace.
            let n_f = self.ci_i[i]
                .mul_vec(w_i)
                .add(self.ci_h[i].cross(v_i));
            let f_f = v_i.scale(self.ci_mass[i]).add(w_i.cross(self.ci_h[i]));
            let mut j = i;
            loop {
                let (w_j, v_j) = self.motion_subspace(mech, j);
                let mij = w_j.dot(n_f) + v_j.dot(f_f);
                m_out[i * n + j] = mij;
                m_out[j * n + i] = mij;
                let parent = mech.joints[j].parent_body;
                if parent == 0 {
                    break;
                }
                j = parent - 1;
            }
        }
        // Inertances: m·(J_a − J_b)ᵀ(J_a − J_b).
        if !mech.inertances.is_empty() {
            let mut ja = vec![Vec3::zeros(); n];
            let mut jb = vec![Vec3::zeros(); n];
            for pi in &mech.inertances {
                self.point_jacobian_into(mech, &pi.a, &mut ja);
                self.point_jacobian_into(mech, &pi.b, &mut jb);
                let m = T::from_f64(pi.inertance);
                for r in 0..n {
                    let jr = ja[r].sub(jb[r]);
                    for c in 0..=r {
                        let add = jr.dot(ja[c].sub(jb[c])) * m;
                        m_out[r * n + c] += add;
                        if r != c {
                            m_out[c * n + r] += add;
                        }
                    }
                }
            }
        }
    }

    /// World motion subspace (ω, v at world origin) of joint i.
    fn motion_subspace(&self, mech: &Mechanism, i: usize) -> (Vec3<T>, Vec3<T>) {
        let axis = self.axis_w[i];
        match mech.joints[i].kind {
            JointKind::Revolute => (axis, self.x[i].pos.cross(axis)),
            JointKind::Prismatic => (Vec3::zeros(), axis),
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Body-frame-to-world transforms at configuration q.
pub fn forward_kinematics<T: Real>(mech: &Mechanism, q: &[T]) -> Result<Vec<Transform<T>>> {
    mech.check_dim(q, "q")?;
    for qi in q {
        if !qi.is_finite() {
            return Err(Error::Contract("non-finite joint value".into()));
        }
    }
    let mut ks = KinState::new(mech);
    ks.fk(mech, q);
    Ok(ks.x)
}

/// World position of an attached point.
pub fn point_position<T: Real>(mech: &Mechanism, q: &[T], att: &PointAttachment) -> Result<Vec3<T>> {
    mech.check_dim(q, "q")?;
    mech.check_attachment(att)?;
    let mut ks = KinState::new(mech);
    ks.fk(mech, q);
    Ok(ks.point_pos(att))
}

/// 3×n point Jacobian, returned as n columns.
pub fn point_jacobian<T: Real>(
    mech: &Mechanism,
    q: &[T],
    att: &PointAttachment,
) -> Result<Vec<Vec3<T>>> {
    mech.check_dim(q, "q")?;
    mech.check_attachment(att)?;
    let mut ks = KinState::new(mech);
    ks.fk(mech, q);
    let mut cols = vec![Vec3::zeros(); mech.dof()];
    ks.point_jacobian_into(mech, att, &mut cols);
    Ok(cols)
}

/// Joint-space mass matrix (row-major n×n).
pub fn mass_matrix<T: Real>(mech: &Mechanism, q: &[T]) -> Result<Vec<T>> {
    mech.check_dim(q, "q")?;
    let mut ks = KinState::new(mech);
    let n = mech.dof();
    let mut m = vec![T::zero(); n * n];
    ks.crba_into(mech, q, &mut m);
    Ok(m)
}

/// Torques realizing (q, q̇, q̈), gravity and velocity products included.
pub fn inverse_dynamics<T: Real>(mech: &Mechanism, q: &[T], qd: &[T], qdd: &[T]) -> Result<Vec<T>> {
    mech.check_dim(q, "q")?;
    mech.check_dim(qd, "qd")?;
    mech.check_dim(qdd, "qdd")?;
    let mut ks = KinState::new(mech);
    let mut u = vec![T::zero(); mech.dof()];
    ks.rnea_into(mech, q, qd, qdd, &mut u);
    Ok(u)
}

/// Joint accelerations under torque u: solves M(q)q̈ = u − h(q, q̇).
pub fn forward_dynamics<T: Real>(mech: &Mechanism, q: &[T], qd: &[T], u: &[T]) -> Result<Vec<T>> {
    mech.check_dim(q, "q")?;
    mech.check_dim(qd, "qd")?;
    mech.check_dim(u, "u")?;
    let mut ks = KinState::new(mech);
    let n = mech.dof();
    let mut m = vec![T::zero(); n * n];
    let mut bias = vec![T::zero(); n];
    let mut qdd = vec![T::zero(); n];
    ks.fk(mech, q);
    forward_dynamics_after_fk(mech, &mut ks, q, qd, u, &mut m, &mut bias, &mut qdd)?;
    Ok(qdd)
}

/// Buffer-reusing forward dynamics for the integration hot path. The
/// KinState must hold a fresh fk for q; the bias and mass passes share it.
#[allow(clippy::too_many_arguments)]
pub fn forward_dynamics_after_fk<T: Real>(
    mech: &Mechanism,
    ks: &mut KinState<T>,
    q: &[T],
    qd: &[T],
    u: &[T],
    m_buf: &mut [T],
    bias_buf: &mut [T],
    qdd_out: &mut [T],
) -> Result<()> {
    let n = mech.dof();
    let mut zero = std::mem::take(&mut ks.scratch_zero);
    let mut rhs = std::mem::take(&mut ks.scratch_rhs);
    zero.clear();
    zero.resize(n, T::zero());
    rhs.clear();
    rhs.resize(n, T::zero());
    ks.rnea_after_fk(mech, qd, &zero, bias_buf);
    ks.crba_after_fk(mech, m_buf);
    let chol = Cholesky::new(m_buf, n);
    if let Some(chol) = &chol {
        for i in 0..n {
            rhs[i] = u[i] - bias_buf[i];
        }
        chol.solve(&rhs, qdd_out);
    }
    ks.scratch_zero = zero;
    ks.scratch_rhs = rhs;
    match chol {
        Some(_) => Ok(()),
        None => Err(Error::SingularMass {
            config: q.iter().map(|v| v.re()).collect(),
        }),
    }
}

/// Kinetic plus gravitational potential energy (inertances count as kinetic).
pub fn mechanical_energy<T: Real>(mech: &Mechanism, q: &[T], qd: &[T]) -> Result<T> {
    mech.check_dim(q, "q")?;
    mech.check_dim(qd, "qd")?;
    let mut ks = KinState::new(mech);
    ks.fk(mech, q);
    ks.vel(mech, qd);
    let g = mech.gravity.lift::<T>();
    let half = T::from_f64(0.5);
    let mut e = T::zero();
    for i in 0..mech.bodies.len() {
        let body = &mech.bodies[i];
        let m = T::from_f64(body.mass);
        let c = ks.com_w[i];
        let v_c = ks.vel_org[i].add(ks.omega[i].cross(c.sub(ks.x[i].pos)));
        e += v_c.norm_sq() * m * half;
        e += ks.omega[i].dot(ks.inertia_w[i].mul_vec(ks.omega[i])) * half;
        e -= g.dot(c) * m; // V = −m gᵀc
    }
    for pi in &mech.inertances {
        let zd = ks.point_vel(&pi.a).sub(ks.point_vel(&pi.b));
        e += zd.norm_sq() * T::from_f64(pi.inertance) * half;
    }
    Ok(e)
}

/// Gravity-only torques: inverse dynamics at rest.
pub fn gravity_torques<T: Real>(mech: &Mechanism, q: &[T]) -> Result<Vec<T>> {
    let zero = vec![T::zero(); mech.dof()];
    inverse_dynamics(mech, q, &zero, &zero)
}

// ---------------------------------------------------------------------------
// JSON description
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct BodyDoc {
    name: String,
    mass: f64,
    com: [f64; 3],
    /// Upper-triangular (Ixx, Ixy, Ixz, Iyy, Iyz, Izz).
    inertia: [f64; 6],
}

#[derive(Serialize, Deserialize)]
struct OriginDoc {
    xyz: [f64; 3],
    rpy: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct JointDoc {
    kind: JointKind,
    axis: [f64; 3],
    parent: usize,
    origin: OriginDoc,
}

#[derive(Serialize, Deserialize)]
pub struct MechanismDoc {
    gravity: [f64; 3],
    bodies: Vec<BodyDoc>,
    joints: Vec<JointDoc>,
}

pub fn rpy_to_rot(rpy: [f64; 3]) -> Mat3<f64> {
    let rx = Mat3::rotation(Vec3::new(1.0, 0.0, 0.0), rpy[0]);
    let ry = Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), rpy[1]);
    let rz = Mat3::rotation(Vec3::new(0.0, 0.0, 1.0), rpy[2]);
    rz.mul_mat(&ry).mul_mat(&rx)
}

pub fn rot_to_rpy(r: &Mat3<f64>) -> [f64; 3] {
    // Inverse of Rz(y)·Ry(p)·Rx(r); pitch singularity is not hit by the
    // origins this toolkit generates.
    let pitch = (-r.0[2][0]).asin();
    let roll = r.0[2][1].atan2(r.0[2][2]);
    let yaw = r.0[1][0].atan2(r.0[0][0]);
    [roll, pitch, yaw]
}

impl Mechanism {
    pub fn to_doc(&self) -> MechanismDoc {
        MechanismDoc {
            gravity: self.gravity.0,
            bodies: self
                .bodies
                .iter()
                .map(|b| BodyDoc {
                    name: b.name.clone(),
                    mass: b.mass,
                    com: b.com.0,
                    inertia: [
                        b.inertia.0[0][0],
                        b.inertia.0[0][1],
                        b.inertia.0[0][2],
                        b.inertia.0[1][1],
                        b.inertia.0[1][2],
                        b.inertia.0[2][2],
                    ],
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| JointDoc {
                    kind: j.kind,
                    axis: j.axis.0,
                    parent: j.parent_body,
                    origin: OriginDoc {
                        xyz: j.origin.pos.0,
                        rpy: rot_to_rpy(&j.origin.rot),
                    },
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &MechanismDoc) -> Result<Self> {
        let bodies = doc
            .bodies
            .iter()
            .map(|b| Body {
                name: b.name.clone(),
                mass: b.mass,
                com: Vec3(b.com),
                inertia: Mat3([
                    [b.inertia[0], b.inertia[1], b.inertia[2]],
                    [b.inertia[1], b.inertia[3], b.inertia[4]],
                    [b.inertia[2], b.inertia[4], b.inertia[5]],
                ]),
            })
            .collect();
        let joints = doc
            .joints
            .iter()
            .map(|j| Joint {
                kind: j.kind,
                axis: Vec3(j.axis),
                parent_body: j.parent,
                origin: Transform {
                    rot: rpy_to_rot(j.origin.rpy),
                    pos: Vec3(j.origin.xyz),
                },
            })
            .collect();
        let mech = Mechanism {
            bodies,
            joints,
            gravity: Vec3(doc.gravity),
            inertances: Vec::new(),
        };
        mech.validate()?;
        Ok(mech)
    }
}

// ---------------------------------------------------------------------------

/// Small mechanism generators shared by unit, property, and acceptance
/// tests.
pub mod testing {
    use super::*;
    use rand::Rng;

    /// Planar 2-link arm in the x-y plane, revolute about z, unit links,
    /// point masses at the link tips.
    pub fn planar_two_link() -> Mechanism {
        let link = |name: &str| Body {
            name: name.into(),
            mass: 1.0,
            com: Vec3::new(1.0, 0.0, 0.0),
            inertia: Mat3::zeros(),
        };
        Mechanism {
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
                    origin: Transform {
                        rot: Mat3::identity(),
                        pos: Vec3::new(1.0, 0.0, 0.0),
                    },
                },
            ],
            gravity: Vec3::zeros(),
            inertances: Vec::new(),
        }
    }

    /// Random serial chain with mixed joints and box-equivalent inertias.
    pub fn random_chain<R: Rng>(rng: &mut R, n: usize) -> Mechanism {
        let mut bodies = Vec::new();
        let mut joints = Vec::new();
        for i in 0..n {
            let mass: f64 = rng.gen_range(0.5..2.0);
            let dims = [
                rng.gen_range(0.1..0.5),
                rng.gen_range(0.1..0.5),
                rng.gen_range(0.1..0.5),
            ];
            let principal = Vec3::new(
                mass / 12.0 * (dims[1] * dims[1] + dims[2] * dims[2]),
                mass / 12.0 * (dims[0] * dims[0] + dims[2] * dims[2]),
                mass / 12.0 * (dims[0] * dims[0] + dims[1] * dims[1]),
            );
            bodies.push(Body {
                name: format!("b{i}"),
                mass,
                com: Vec3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                ),
                inertia: Mat3::from_diag(principal),
            });
            let raw = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            );
            let axis = raw.scale(1.0 / raw.norm_f64());
            joints.push(Joint {
                kind: if rng.gen_bool(0.5) {
                    JointKind::Revolute
                } else {
                    JointKind::Prismatic
                },
                axis,
                parent_body: i,
                origin: Transform {
                    rot: Mat3::rotation(
                        Vec3::new(0.0, 1.0, 0.0),
                        rng.gen_range(-0.5..0.5),
                    ),
                    pos: Vec3::new(
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(0.1..0.4),
                    ),
                },
            });
        }
        Mechanism {
            bodies,
            joints,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            inertances: Vec::new(),
        }
    }
}
