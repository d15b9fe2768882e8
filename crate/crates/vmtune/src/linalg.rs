//! Small fixed-size linear algebra, generic over the scalar type.
//!
//! The dynamics path has to run on dual numbers, so these types are kept
//! deliberately minimal instead of reaching for a matrix library.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T>(pub [T; 3]);

impl Vec3<f64> {
    pub fn lift<T: Real>(self) -> Vec3<T> {
        Vec3([
            T::from_f64(self.0[0]),
            T::from_f64(self.0[1]),
            T::from_f64(self.0[2]),
        ])
    }

    pub fn norm_f64(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn zeros() -> Self {
        Vec3([T::zero(); 3])
    }

    #[inline]
    pub fn x(&self) -> T {
        self.0[0]
    }
    #[inline]
    pub fn y(&self) -> T {
        self.0[1]
    }
    #[inline]
    pub fn z(&self) -> T {
        self.0[2]
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    #[inline]
    pub fn neg(self) -> Self {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    /// Euclidean norm, guarded so a dual evaluation at the origin yields a
    /// finite (zero) tangent instead of 0/0.
    #[inline]
    pub fn norm_guarded(self) -> T {
        let s = self.norm_sq();
        if s.re() == 0.0 {
            T::zero()
        } else {
            s.sqrt()
        }
    }
}

/// 3×3 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl Mat3<f64> {
    pub fn lift<T: Real>(self) -> Mat3<T> {
        let mut m = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = T::from_f64(self.0[i][j]);
            }
        }
        m
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigenvalues(&self) -> [f64; 3] {
        let mut a = self.0;
        for _ in 0..50 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            if off < 1e-30 {
                break;
            }
            for p in 0..2 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let mut b = a;
                    for k in 0..3 {
                        b[p][k] = c * a[p][k] - s * a[q][k];
                        b[q][k] = s * a[p][k] + c * a[q][k];
                    }
                    let mut d = b;
                    for k in 0..3 {
                        d[k][p] = c * b[k][p] - s * b[k][q];
                        d[k][q] = s * b[k][p] + c * b[k][q];
                    }
                    a = d;
                }
            }
        }
        let mut ev = [a[0][0], a[1][1], a[2][2]];
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }
}

impl<T: Real> Mat3<T> {
    #[inline]
    pub fn zeros() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    #[inline]
    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = T::one();
        }
        m
    }

    pub fn from_diag(d: Vec3<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = d.0[i];
        }
        m
    }

    /// Skew-symmetric matrix of v: skew(v)·w = v × w.
    pub fn skew(v: Vec3<T>) -> Self {
        let z = T::zero();
        Mat3([
            [z, -v.0[2], v.0[1]],
            [v.0[2], z, -v.0[0]],
            [-v.0[1], v.0[0], z],
        ])
    }

    /// Rotation about a unit axis by angle (Rodrigues).
    pub fn rotation(axis: Vec3<T>, angle: T) -> Self {
        let c = angle.cos();
        let s = angle.sin();
        let one_c = T::one() - c;
        let (x, y, z) = (axis.0[0], axis.0[1], axis.0[2]);
        Mat3([
            [c + x * x * one_c, x * y * one_c - z * s, x * z * one_c + y * s],
            [y * x * one_c + z * s, c + y * y * one_c, y * z * one_c - x * s],
            [z * x * one_c - y * s, z * y * one_c + x * s, c + z * z * one_c],
        ])
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3([
            self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1] + self.0[0][2] * v.0[2],
            self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1] + self.0[1][2] * v.0[2],
            self.0[2][0] * v.0[0] + self.0[2][1] * v.0[1] + self.0[2][2] * v.0[2],
        ])
    }

    /// Rᵀ·v without forming the transpose.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3([
            self.0[0][0] * v.0[0] + self.0[1][0] * v.0[1] + self.0[2][0] * v.0[2],
            self.0[0][1] * v.0[0] + self.0[1][1] * v.0[1] + self.0[2][1] * v.0[2],
            self.0[0][2] * v.0[0] + self.0[1][2] * v.0[1] + self.0[2][2] * v.0[2],
        ])
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut r = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s += self.0[i][k] * o.0[k][j];
                }
                r.0[i][j] = s;
            }
        }
        r
    }

    pub fn transpose(&self) -> Self {
        let mut r = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = self.0[j][i];
            }
        }
        r
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = self.0[i][j] + o.0[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: T) -> Self {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] *= s;
            }
        }
        r
    }
}

/// Rigid transform: x_world = rot · x_local + pos.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform<T> {
    pub rot: Mat3<T>,
    pub pos: Vec3<T>,
}

impl Transform<f64> {
    pub fn lift<T: Real>(self) -> Transform<T> {
        Transform {
            rot: self.rot.lift(),
            pos: self.pos.lift(),
        }
    }
}

impl<T: Real> Transform<T> {
    pub fn identity() -> Self {
        Transform {
            rot: Mat3::identity(),
            pos: Vec3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rot.mul_vec(p).add(self.pos)
    }

    /// Express a world point in this frame.
    #[inline]
    pub fn inverse_apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rot.tr_mul_vec(p.sub(self.pos))
    }

    pub fn compose(&self, o: &Self) -> Self {
        Transform {
            rot: self.rot.mul_mat(&o.rot),
            pos: self.apply(o.pos),
        }
    }
}

/// Dense symmetric positive-definite solve via Cholesky, for the joint-space
/// mass matrix. Returns None when a pivot collapses relative to the matrix
/// scale (singular or indefinite input).
pub struct Cholesky<T> {
    l: Vec<T>,
    n: usize,
}

impl<T: Real> Cholesky<T> {
    /// `a` is n×n row-major, only the lower triangle is read.
    pub fn new(a: &[T], n: usize) -> Option<Self> {
        let mut l = vec![T::zero(); n * n];
        let mut max_diag = 0.0_f64;
        for i in 0..n {
            max_diag = max_diag.max(a[i * n + i].re().abs());
        }
        if max_diag == 0.0 {
            return None;
        }
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    // Pivot tolerance keyed to the matrix scale; 1e-12 tracks
                    // the condition-number contract of forward dynamics.
                    if s.re() <= 1e-12 * max_diag {
                        return None;
                    }
                    l[i * n + j] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { l, n })
    }

    pub fn solve(&self, b: &[T], x: &mut [T]) {
        let n = self.n;
        // forward: L y = b
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_orientation() {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(x.cross(y), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn rotation_about_z_quarter_turn() {
        let r = Mat3::rotation(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let v = r.mul_vec(Vec3::new(1.0, 0.0, 0.0));
        assert!((v.x() - 0.0).abs() < 1e-15);
        assert!((v.y() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transform_round_trip() {
        let t = Transform {
            rot: Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), 0.7),
            pos: Vec3::new(0.3, -0.2, 1.0),
        };
        let p = Vec3::new(0.5, 1.5, -0.4);
        let q = t.inverse_apply(t.apply(p));
        for i in 0..3 {
            assert!((q.0[i] - p.0[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = Bᵀ B + I is SPD.
        let b = [1.0, 2.0, 0.5, -1.0, 0.3, 2.0, 0.7, 0.1, 1.5];
        let mut a = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a[i * 3 + j] += b[k * 3 + i] * b[k * 3 + j];
                }
            }
            a[i * 3 + i] += 1.0;
        }
        let chol = Cholesky::new(&a, 3).unwrap();
        let rhs = [1.0, -2.0, 3.0];
        let mut x = [0.0; 3];
        chol.solve(&rhs, &mut x);
        for i in 0..3 {
            let mut r = 0.0;
            for j in 0..3 {
                r += a[i * 3 + j] * x[j];
            }
            assert!((r - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = [1.0, 0.0, 0.0, 0.0]; // second DOF carries no inertia
        assert!(Cholesky::new(&a, 2).is_none());
    }

    #[test]
    fn jacobi_eigenvalues_of_diag_plus_coupling() {
        let m = Mat3([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        let ev = m.symmetric_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
        assert!((ev[2] - 5.0).abs() < 1e-12);
    }
}
