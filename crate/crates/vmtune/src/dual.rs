//! Forward-mode differentiation with fixed-width dual numbers.
//!
//! A [`Dual<K>`] carries a primal value and K tangent slots. Propagating K
//! tangents through an ODE integration is equivalent to integrating the
//! extended sensitivity system alongside the state, which is how gradients
//! of simulation losses are obtained here. Parameter counts stay small
//! (≤ 8 in every experiment), so forward mode is the right trade.

use crate::scalar::Real;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Dual number with `K` tangent slots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const K: usize> {
    pub re: f64,
    pub eps: [f64; K],
}

impl<const K: usize> Dual<K> {
    #[inline]
    pub fn constant(x: f64) -> Self {
        Dual { re: x, eps: [0.0; K] }
    }

    /// Variable seeded with tangent 1 in slot `slot`.
    #[inline]
    pub fn variable(x: f64, slot: usize) -> Self {
        let mut eps = [0.0; K];
        eps[slot] = 1.0;
        Dual { re: x, eps }
    }

    #[inline]
    fn map(self, re: f64, scale: f64) -> Self {
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = self.eps[i] * scale;
        }
        Dual { re, eps }
    }
}

/// Identity seeding of a parameter vector: element i gets tangent eᵢ.
pub fn lift<const K: usize>(theta: &[f64]) -> Vec<Dual<K>> {
    assert_eq!(theta.len(), K, "lift: parameter count must equal tangent width");
    theta
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i))
        .collect()
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = self.eps[i] + rhs.eps[i];
        }
        Dual { re: self.re + rhs.re, eps }
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = self.eps[i] - rhs.eps[i];
        }
        Dual { re: self.re - rhs.re, eps }
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual { re: self.re * rhs.re, eps }
    }
}

impl<const K: usize> Div for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let re = self.re / rhs.re;
        let inv = 1.0 / rhs.re;
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = [0.0; K];
        for i in 0..K {
            eps[i] = -self.eps[i];
        }
        Dual { re: -self.re, eps }
    }
}

impl<const K: usize> AddAssign for Dual<K> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.re += rhs.re;
        for i in 0..K {
            self.eps[i] += rhs.eps[i];
        }
    }
}

impl<const K: usize> SubAssign for Dual<K> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.re -= rhs.re;
        for i in 0..K {
            self.eps[i] -= rhs.eps[i];
        }
    }
}

impl<const K: usize> MulAssign for Dual<K> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const K: usize> Real for Dual<K> {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.map(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.map(self.re.ln(), 1.0 / self.re)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.map(s, 0.5 / s)
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.map(s, c)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.map(c, -s)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.map(t, 1.0 - t * t)
    }
    #[inline]
    fn cosh(self) -> Self {
        self.map(self.re.cosh(), self.re.sinh())
    }
    #[inline]
    fn abs(self) -> Self {
        // Subgradient convention: d|x|/dx = 0 at x = 0.
        let s = if self.re > 0.0 {
            1.0
        } else if self.re < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.map(self.re.abs(), s)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if other.re > self.re {
            other
        } else {
            self
        }
    }
    #[inline]
    fn min(self, other: Self) -> Self {
        if other.re < self.re {
            other
        } else {
            self
        }
    }
    #[inline]
    fn powf_nonneg(self, e: Self) -> Self {
        if self.re == 0.0 {
            return Dual::constant(0.0);
        }
        // x^e = exp(e ln x)
        (e * self.ln()).exp()
    }
}

/// A scalar loss evaluated generically over the scalar type.
///
/// The trait object form is needed so one gradient driver can monomorphize
/// the same loss for several tangent widths.
pub trait ScalarLoss {
    fn eval<T: Real>(&self, theta: &[T]) -> T;
}

fn gradient_fixed<const K: usize, L: ScalarLoss + ?Sized>(
    loss: &L,
    theta: &[f64],
) -> (f64, Vec<f64>) {
    let lifted: Vec<Dual<K>> = lift(theta);
    let out = loss.eval(&lifted);
    (out.re, out.eps.to_vec())
}

/// Value and gradient of `loss` at `theta` by forward-mode dual propagation.
///
/// Dispatches to a monomorphized tangent width for m ≤ 8 parameters; wider
/// vectors fall back to passes of 8 seeded slots each.
pub fn gradient<L: ScalarLoss + ?Sized>(loss: &L, theta: &[f64]) -> (f64, Vec<f64>) {
    match theta.len() {
        0 => (loss.eval(theta), Vec::new()),
        1 => gradient_fixed::<1, L>(loss, theta),
        2 => gradient_fixed::<2, L>(loss, theta),
        3 => gradient_fixed::<3, L>(loss, theta),
        4 => gradient_fixed::<4, L>(loss, theta),
        5 => gradient_fixed::<5, L>(loss, theta),
        6 => gradient_fixed::<6, L>(loss, theta),
        7 => gradient_fixed::<7, L>(loss, theta),
        8 => gradient_fixed::<8, L>(loss, theta),
        m => {
            // Chunked passes: seed 8 slots at a time.
            let mut grad = vec![0.0; m];
            let mut value = 0.0;
            for chunk in 0..m.div_ceil(8) {
                let base = chunk * 8;
                let vars: Vec<Dual<8>> = theta
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        if i >= base && i < base + 8 {
                            Dual::variable(v, i - base)
                        } else {
                            Dual::constant(v)
                        }
                    })
                    .collect();
                let out = loss.eval(&vars);
                value = out.re;
                for (j, g) in out.eps.iter().enumerate() {
                    if base + j < m {
                        grad[base + j] = *g;
                    }
                }
            }
            (value, grad)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_seeds_identity() {
        let vars: Vec<Dual<2>> = lift(&[3.0, 5.0]);
        assert_eq!(vars[0].re, 3.0);
        assert_eq!(vars[0].eps, [1.0, 0.0]);
        assert_eq!(vars[1].eps, [0.0, 1.0]);
        assert_eq!(Dual::<2>::constant(7.0).eps, [0.0, 0.0]);
    }

    #[test]
    fn product_rule() {
        struct Prod;
        impl ScalarLoss for Prod {
            fn eval<T: Real>(&self, th: &[T]) -> T {
                th[0] * th[1]
            }
        }
        let (v, g) = gradient(&Prod, &[3.0, 5.0]);
        assert_eq!(v, 15.0);
        assert_eq!(g, vec![5.0, 3.0]);
    }

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let x = Dual::<1>::variable(0.0, 0);
        assert_eq!(x.tanh().eps[0], 1.0);
    }

    #[test]
    fn exp_sensitivity_matches_phi_mapping() {
        // d/dθ exp(θ) at θ = ln 3000 is 3000.
        let x = Dual::<1>::variable(3000.0_f64.ln(), 0);
        let y = x.exp();
        assert!((y.eps[0] - 3000.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_loss_gradient() {
        struct Quad;
        impl ScalarLoss for Quad {
            fn eval<T: Real>(&self, th: &[T]) -> T {
                let t0 = th[0] - T::from_f64(1.0);
                let t1 = th[1] - T::from_f64(-2.0);
                t0 * t0 + t1 * t1
            }
        }
        let (_, g) = gradient(&Quad, &[4.0, 0.0]);
        assert_eq!(g, vec![6.0, 4.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        struct Konst;
        impl ScalarLoss for Konst {
            fn eval<T: Real>(&self, _th: &[T]) -> T {
                T::from_f64(42.0)
            }
        }
        let (v, g) = gradient(&Konst, &[1.0, 2.0, 3.0]);
        assert_eq!(v, 42.0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn max_ties_take_first_argument() {
        let a = Dual::<1> { re: 2.0, eps: [1.0] };
        let b = Dual::<1> { re: 2.0, eps: [7.0] };
        assert_eq!(a.max(b).eps[0], 1.0);
        assert_eq!(b.max(a).eps[0], 7.0);
    }

    #[test]
    fn chunked_gradient_beyond_eight_params() {
        struct SumSq;
        impl ScalarLoss for SumSq {
            fn eval<T: Real>(&self, th: &[T]) -> T {
                let mut s = T::zero();
                for &t in th {
                    s += t * t;
                }
                s
            }
        }
        let theta: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let (v, g) = gradient(&SumSq, &theta);
        assert_eq!(v, theta.iter().map(|x| x * x).sum::<f64>());
        for (i, gi) in g.iter().enumerate() {
            assert_eq!(*gi, 2.0 * i as f64);
        }
    }

    #[test]
    fn primal_matches_plain_f64_bitwise() {
        // Same expression on f64 and on Dual with zero tangents.
        fn expr<T: Real>(x: T) -> T {
            ((x * T::from_f64(1.7) + T::from_f64(0.3)).tanh() / (x + T::from_f64(2.0))).exp()
                * x.cosh().ln()
                + x.sqrt()
        }
        for &x in &[0.17, 1.0, 3.5, 42.0] {
            let plain = expr(x);
            let dual = expr(Dual::<3>::constant(x));
            assert_eq!(plain.to_bits(), dual.re.to_bits());
        }
    }
}
