//! Two-terminal virtual elements: spring laws, damper laws, inerters, and
//! the mapping of element forces onto joint torques.
//!
//! Sign convention, used everywhere: with extension z = pos_a − pos_b −
//! rest_offset, the element force is F = ∂V/∂z (springs) or the dissipative
//! law F(z, ż) (dampers); F acts as −F on terminal a and +F on terminal b,
//! so a stretched spring pulls its terminals together. The power identity
//! Fᵀ(ż_a − ż_b) + u_aᵀq̇_a + u_bᵀq̇_b = 0 pins the convention down.

use crate::linalg::Vec3;
use crate::mech::{Mechanism, PointAttachment};
use crate::scalar::{ln_cosh_from_sq, tanhc_from_sq, Real};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum SpringLaw<T> {
    /// V = ½ k zᵀz
    Linear { k: T },
    /// V = (σ²/k) ln cosh(k|z|/σ); force saturates at σ.
    Tanh { k: T, sigma: T },
    /// V = k (zᵀz)ᵖ / (2p), p > 1; stiffens beyond |z| = 1.
    Power { k: T, p: T },
}

#[derive(Clone, Copy, Debug)]
pub enum DamperLaw<T> {
    /// F = c ż
    Linear { c: T },
    /// F = σ₂ tanh(c|ż|/σ₂) ż/|ż|; force saturates at σ₂.
    Saturating { c: T, sigma: T },
    /// F = c μ(z) ż with a smooth radial window μ = ½(1 − tanh((|z−z₀|−r)/s)).
    Localized {
        c: T,
        center: Vec3<f64>,
        radius: f64,
        smoothness: f64,
    },
}

impl<T: Real> SpringLaw<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SpringLaw::Linear { k } => k.re() > 0.0,
            SpringLaw::Tanh { k, sigma } => k.re() > 0.0 && sigma.re() > 0.0,
            SpringLaw::Power { k, p } => k.re() > 0.0 && p.re() > 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid spring parameters {self:?}")))
        }
    }
}

impl<T: Real> DamperLaw<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DamperLaw::Linear { c } => c.re() >= 0.0,
            DamperLaw::Saturating { c, sigma } => c.re() >= 0.0 && sigma.re() > 0.0,
            DamperLaw::Localized { c, radius, smoothness, .. } => {
                c.re() >= 0.0 && *radius > 0.0 && *smoothness > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid damper parameters {self:?}")))
        }
    }
}

/// Potential energy of a spring at extension z; V(0) = 0 for every law.
pub fn spring_potential<T: Real>(law: &SpringLaw<T>, z: Vec3<T>) -> T {
    let s = z.norm_sq();
    match *law {
        SpringLaw::Linear { k } => k * s * T::from_f64(0.5),
        SpringLaw::Tanh { k, sigma } => {
            // (σ²/k) ln cosh(k|z|/σ), with r² = (k/σ)² zᵀz kept polynomial.
            let ratio = k / sigma;
            sigma * sigma / k * ln_cosh_from_sq(ratio * ratio * s)
        }
        SpringLaw::Power { k, p } => k * s.powf_nonneg(p) / (p + p),
    }
}

/// Spring force F = ∂V/∂z. Saturating laws evaluate through the k·z series
/// limit at the origin instead of the singular z/|z| form.
pub fn spring_force<T: Real>(law: &SpringLaw<T>, z: Vec3<T>) -> Vec3<T> {
    let s = z.norm_sq();
    match *law {
        SpringLaw::Linear { k } => z.scale(k),
        SpringLaw::Tanh { k, sigma } => {
            let ratio = k / sigma;
            z.scale(k * tanhc_from_sq(ratio * ratio * s))
        }
        SpringLaw::Power { k, p } => z.scale(k * s.powf_nonneg(p - T::one())),
    }
}

/// Damper force; Fᵀż ≥ 0 holds for every law and every input.
pub fn damper_force<T: Real>(law: &DamperLaw<T>, z: Vec3<T>, zd: Vec3<T>) -> Vec3<T> {
    match *law {
        DamperLaw::Linear { c } => zd.scale(c),
        DamperLaw::Saturating { c, sigma } => {
            let ratio = c / sigma;
            zd.scale(c * tanhc_from_sq(ratio * ratio * zd.norm_sq()))
        }
        DamperLaw::Localized { c, center, radius, smoothness } => {
            let d = z.sub(center.lift()).norm_guarded();
            let arg = (d - T::from_f64(radius)) * T::from_f64(1.0 / smoothness);
            let mu = (T::one() - arg.tanh()) * T::from_f64(0.5);
            zd.scale(c * mu)
        }
    }
}

/// Map an element force to joint torques on both terminals' mechanisms:
/// u_a = −J_aᵀF, u_b = +J_bᵀF.
pub fn map_force_to_joints<T: Real>(
    j_a: &[Vec3<T>],
    j_b: &[Vec3<T>],
    f: Vec3<T>,
) -> (Vec<T>, Vec<T>) {
    let u_a = j_a.iter().map(|col| -col.dot(f)).collect();
    let u_b = j_b.iter().map(|col| col.dot(f)).collect();
    (u_a, u_b)
}

/// Accumulating form of [`map_force_to_joints`] for the hot path.
pub fn add_force_to_joints<T: Real>(j: &[Vec3<T>], f: Vec3<T>, sign: f64, u: &mut [T]) {
    let s = T::from_f64(sign);
    for (ui, col) in u.iter_mut().zip(j) {
        *ui += col.dot(f) * s;
    }
}

/// Two-terminal inertance component. Terminals must live on the virtual
/// mechanism (or ground): robot accelerations are not reliably available,
/// so inerters never attach to robot bodies.
#[derive(Clone, Debug)]
pub struct Inerter {
    pub inertance: f64,
    pub a: PointAttachment,
    pub b: PointAttachment,
}

/// Fold inerters into a virtual mechanism's dynamics. A ground-anchored
/// inerter of inertance m acts as a gravity-free point mass m at its moving
/// terminal; two-terminal inertances superpose.
pub fn assemble_inertance(inerters: &[Inerter], virtual_mech: &Mechanism) -> Result<Mechanism> {
    let mut mech = virtual_mech.clone();
    for (idx, inr) in inerters.iter().enumerate() {
        if inr.inertance <= 0.0 {
            return Err(Error::Contract(format!("inerter {idx}: inertance must be > 0")));
        }
        let nb = virtual_mech.bodies.len();
        if inr.a.body > nb || inr.b.body > nb {
            return Err(Error::Contract(format!(
                "inerter {idx}: terminal not on the virtual mechanism"
            )));
        }
        mech.inertances.push(crate::mech::PointInertance {
            a: inr.a,
            b: inr.b,
            inertance: inr.inertance,
        });
    }
    mech.validate()?;
    Ok(mech)
}

/// A spring and/or damper between two terminals with a rest offset:
/// z = pos_a − pos_b − rest_offset.
#[derive(Clone, Debug)]
pub struct InterfaceComponent<T> {
    pub spring: Option<SpringLaw<T>>,
    pub damper: Option<DamperLaw<T>>,
    pub rest_offset: Vec3<f64>,
}

impl<T: Real> InterfaceComponent<T> {
    pub fn force(&self, z: Vec3<T>, zd: Vec3<T>) -> Vec3<T> {
        let mut f = Vec3::zeros();
        if let Some(s) = &self.spring {
            f = f.add(spring_force(s, z));
        }
        if let Some(d) = &self.damper {
            f = f.add(damper_force(d, z, zd));
        }
        f
    }

    pub fn potential(&self, z: Vec3<T>) -> T {
        match &self.spring {
            Some(s) => spring_potential(s, z),
            None => T::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec3<R: Rng>(rng: &mut R, scale: f64) -> Vec3<f64> {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    #[test]
    fn potential_examples() {
        let lin = SpringLaw::Linear { k: 10.0 };
        let v = spring_potential(&lin, Vec3::new(0.1, 0.0, 0.0));
        assert!((v - 0.05).abs() < 1e-15);

        let tanh = SpringLaw::Tanh { k: 1.0, sigma: 1.0 };
        assert_eq!(spring_potential(&tanh, Vec3::zeros()), 0.0);

        let pow = SpringLaw::Power { k: 2.0, p: 2.0 };
        let v = spring_potential(&pow, Vec3::new(1.0, 1.0, 0.0));
        assert!((v - 2.0).abs() < 1e-14); // k (zᵀz)ᵖ/(2p) = 2·4/4
    }

    #[test]
    fn force_examples() {
        let lin = SpringLaw::Linear { k: 10.0 };
        let f = spring_force(&lin, Vec3::new(0.1, 0.0, 0.0));
        assert!((f.x() - 1.0).abs() < 1e-14);

        let tanh = SpringLaw::Tanh { k: 3.0, sigma: 2.0 };
        let f = spring_force(&tanh, Vec3::new(1.0, 0.0, 0.0));
        assert!((f.x() - 2.0 * 1.5f64.tanh()).abs() < 1e-12);
        assert!((f.x() - 1.81029).abs() < 1e-5);
    }

    #[test]
    fn spring_force_is_potential_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let laws = [
            SpringLaw::Linear { k: 35.0 },
            SpringLaw::Tanh { k: 120.0, sigma: 4.0 },
            SpringLaw::Power { k: 7.0, p: 1.7 },
        ];
        for law in &laws {
            for _ in 0..200 {
                let z = rand_vec3(&mut rng, 1.5);
                if z.norm_f64() < 1e-3 {
                    continue;
                }
                let f = spring_force(law, z);
                let h = 1e-6 * (1.0 + z.norm_f64());
                for i in 0..3 {
                    let mut zp = z;
                    let mut zm = z;
                    zp.0[i] += h;
                    zm.0[i] -= h;
                    let fd = (spring_potential(law, zp) - spring_potential(law, zm)) / (2.0 * h);
                    let rel = (fd - f.0[i]).abs() / (1.0 + f.0[i].abs());
                    assert!(rel < 1e-7, "{law:?} comp {i}: fd {fd} vs {}", f.0[i]);
                }
            }
        }
    }

    #[test]
    fn damper_examples() {
        let lin = DamperLaw::Linear { c: 5.0 };
        let f = damper_force(&lin, Vec3::zeros(), Vec3::new(0.0, 2.0, 0.0));
        assert_eq!(f.y(), 10.0);

        // Deep saturation pins the force at sigma.
        let sat = DamperLaw::Saturating { c: 100.0, sigma: 3.0 };
        let f = damper_force(&sat, Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0));
        assert!((f.x() - 3.0).abs() < 1e-9);

        let loc = DamperLaw::Localized {
            c: 50.0,
            center: Vec3::zeros(),
            radius: 0.1,
            smoothness: 0.01,
        };
        // Far outside the window: the force vanishes.
        let f = damper_force(&loc, Vec3::new(5.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0));
        assert!(f.norm_f64() < 1e-12);
        // Inside the window: nearly the full linear coefficient.
        let f = damper_force(&loc, Vec3::zeros(), Vec3::new(0.0, 3.0, 0.0));
        assert!((f.y() - 150.0).abs() < 1e-6);
    }

    #[test]
    fn dissipation_nonnegative_for_all_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let laws = [
            DamperLaw::Linear { c: 12.0 },
            DamperLaw::Saturating { c: 40.0, sigma: 2.0 },
            DamperLaw::Localized {
                c: 8.0,
                center: Vec3::new(0.1, 0.0, 0.0),
                radius: 0.3,
                smoothness: 0.05,
            },
        ];
        for law in &laws {
            for _ in 0..10_000 {
                let z = rand_vec3(&mut rng, 2.0);
                let zd = rand_vec3(&mut rng, 5.0);
                let f = damper_force(law, z, zd);
                assert!(f.dot(zd) >= 0.0, "{law:?} at z={z:?} zd={zd:?}");
            }
        }
    }

    #[test]
    fn tanh_spring_force_bounded_by_sigma() {
        let law = SpringLaw::Tanh { k: 500.0, sigma: 5.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let z = rand_vec3(&mut rng, 50.0);
            assert!(spring_force(&law, z).norm_f64() <= 5.0 + 1e-12);
        }
    }

    #[test]
    fn force_laws_smooth_at_origin_under_duals() {
        // Dual evaluation at z = 0 / ż = 0 must carry finite tangents.
        let k = Dual::<1>::variable(100.0, 0);
        let lin = SpringLaw::Linear { k };
        let tanh = SpringLaw::Tanh { k, sigma: Dual::constant(3.0) };
        let pow = SpringLaw::Power { k, p: Dual::constant(2.0) };
        let z = Vec3::<Dual<1>>::zeros();
        for law in [&lin, &tanh, &pow] {
            let f = spring_force(law, z);
            for i in 0..3 {
                assert!(f.0[i].re.is_finite() && f.0[i].eps[0].is_finite());
            }
            let v = spring_potential(law, z);
            assert!(v.re.is_finite() && v.eps[0].is_finite());
        }
        let sat = DamperLaw::Saturating { c: k, sigma: Dual::constant(2.0) };
        let f = damper_force(&sat, z, z);
        assert!(f.0[0].eps[0].is_finite());
        let loc = DamperLaw::Localized {
            c: k,
            center: Vec3::zeros(),
            radius: 0.2,
            smoothness: 0.05,
        };
        let f = damper_force(&loc, z, z);
        assert!(f.0[0].eps[0].is_finite());
    }

    #[test]
    fn map_force_examples_and_power_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // Ground terminal: u_b is empty.
        let j_a = vec![Vec3::new(1.0, 0.0, 0.0)];
        let (u_a, u_b) = map_force_to_joints::<f64>(&j_a, &[], Vec3::new(3.0, 1.0, 0.0));
        assert_eq!(u_a, vec![-3.0]);
        assert!(u_b.is_empty());

        for _ in 0..200 {
            let na = 3;
            let nb = 2;
            let j_a: Vec<Vec3<f64>> = (0..na).map(|_| rand_vec3(&mut rng, 1.0)).collect();
            let j_b: Vec<Vec3<f64>> = (0..nb).map(|_| rand_vec3(&mut rng, 1.0)).collect();
            let qd_a: Vec<f64> = (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let qd_b: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = rand_vec3(&mut rng, 10.0);
            let (u_a, u_b) = map_force_to_joints(&j_a, &j_b, f);
            let zd_a = j_a
                .iter()
                .zip(&qd_a)
                .fold(Vec3::zeros(), |acc, (c, &v)| acc.add(c.scale(v)));
            let zd_b = j_b
                .iter()
                .zip(&qd_b)
                .fold(Vec3::zeros(), |acc, (c, &v)| acc.add(c.scale(v)));
            let port = f.dot(zd_a.sub(zd_b));
            let mech: f64 = u_a.iter().zip(&qd_a).map(|(u, q)| u * q).sum::<f64>()
                + u_b.iter().zip(&qd_b).map(|(u, q)| u * q).sum::<f64>();
            assert!((port + mech).abs() < 1e-12 * (1.0 + port.abs()));
        }
    }

    #[test]
    fn cart_spring_reproduces_proportional_term() {
        // 1-DOF cart, linear spring to the world origin: u = −k q.
        use crate::mech::{point_jacobian, Body, Joint, JointKind, Mechanism};
        use crate::linalg::{Mat3, Transform};
        let mech = Mechanism {
            bodies: vec![Body {
                name: "cart".into(),
                mass: 1.0,
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
        let q = [0.37];
        let att = PointAttachment {
            body: 1,
            offset: Vec3::zeros(),
        };
        let j = point_jacobian(&mech, &q, &att).unwrap();
        let z = Vec3::new(q[0], 0.0, 0.0); // pos_a − origin
        let k = 10.0;
        let f = spring_force(&SpringLaw::Linear { k }, z);
        let (u, _) = map_force_to_joints(&j, &[], f);
        assert!((u[0] + k * q[0]).abs() < 1e-14);
    }

    #[test]
    fn assemble_inertance_cases() {
        use crate::mech::{mass_matrix, Body, Joint, JointKind};
        use crate::linalg::{Mat3, Transform};
        let slider = Mechanism {
            bodies: vec![Body {
                name: "s".into(),
                mass: 0.0,
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
        let at = PointAttachment {
            body: 1,
            offset: Vec3::zeros(),
        };
        let ground = PointAttachment::world(Vec3::zeros());

        let one = assemble_inertance(
            &[Inerter { inertance: 1.0, a: at, b: ground }],
            &slider,
        )
        .unwrap();
        let m = mass_matrix(&one, &[0.0]).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14);

        // No inerters: unchanged.
        let same = assemble_inertance(&[], &slider).unwrap();
        assert!(mass_matrix(&same, &[0.0]).is_err() || same.inertances.is_empty());

        // Two half-inertances superpose to one.
        let two = assemble_inertance(
            &[
                Inerter { inertance: 0.5, a: at, b: ground },
                Inerter { inertance: 0.5, a: at, b: ground },
            ],
            &slider,
        )
        .unwrap();
        let m2 = mass_matrix(&two, &[0.0]).unwrap();
        assert!((m2[0] - m[0]).abs() < 1e-14);

        // Out-of-range terminal is rejected.
        let bad = Inerter {
            inertance: 1.0,
            a: PointAttachment { body: 5, offset: Vec3::zeros() },
            b: ground,
        };
        assert!(assemble_inertance(&[bad], &slider).is_err());
    }

    #[test]
    fn spring_energy_rate_matches_force_power() {
        // d/dt V(z(t)) = F(z)ᵀ ż along a smooth path.
        let law = SpringLaw::Tanh { k: 80.0, sigma: 6.0 };
        let path = |t: f64| Vec3::new((0.7 * t).sin(), 0.3 * t, (1.3 * t).cos() - 1.0);
        let dt = 1e-6;
        for step in 1..50 {
            let t = 0.1 * step as f64;
            let z = path(t);
            let zd = path(t + dt).sub(path(t - dt)).scale(0.5 / dt);
            let vdot_num = (spring_potential(&law, path(t + dt))
                - spring_potential(&law, path(t - dt)))
                / (2.0 * dt);
            let power = spring_force(&law, z).dot(zd);
            assert!((vdot_num - power).abs() < 1e-6 * (1.0 + power.abs()));
        }
    }
}
