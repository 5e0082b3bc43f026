//! Fixed-width forward-mode dual numbers and a 3-vector over them.
//!
//! Just enough arithmetic for the similarity-registration loss, whose
//! parameter space is small and fixed: every value carries its derivatives
//! along N seed directions, so one loss evaluation yields the full
//! gradient. Not a general AD library.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dual<const N: usize> {
    pub val: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(val: f64) -> Self {
        Dual { val, eps: [0.0; N] }
    }

    /// The variable seeded along direction `dir`.
    pub fn var(val: f64, dir: usize) -> Self {
        let mut eps = [0.0; N];
        eps[dir] = 1.0;
        Dual { val, eps }
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        Dual { val: e, eps: self.eps.map(|d| d * e) }
    }

    /// Requires val > 0: the derivative blows up at zero and callers guard
    /// degeneracy before dividing by a norm.
    pub fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        let half = 0.5 / s;
        Dual { val: s, eps: self.eps.map(|d| d * half) }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e += r;
        }
        Dual { val: self.val + rhs.val, eps }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e -= r;
        }
        Dual { val: self.val - rhs.val, eps }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.val + self.val * rhs.eps[i];
        }
        Dual { val: self.val * rhs.val, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.val;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (self.eps[i] - self.val * inv * rhs.eps[i]) * inv;
        }
        Dual { val: self.val * inv, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { val: -self.val, eps: self.eps.map(|d| -d) }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Dual { val: self.val * rhs, eps: self.eps.map(|d| d * rhs) }
    }
}

impl<const N: usize> Mul<Dual<N>> for f64 {
    type Output = Dual<N>;
    fn mul(self, rhs: Dual<N>) -> Dual<N> {
        rhs * self
    }
}

/// 3-vector of duals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DVec3<const N: usize> {
    pub x: Dual<N>,
    pub y: Dual<N>,
    pub z: Dual<N>,
}

impl<const N: usize> DVec3<N> {
    pub fn new(x: Dual<N>, y: Dual<N>, z: Dual<N>) -> Self {
        DVec3 { x, y, z }
    }

    pub fn constant(v: Vector3<f64>) -> Self {
        DVec3 {
            x: Dual::constant(v.x),
            y: Dual::constant(v.y),
            z: Dual::constant(v.z),
        }
    }

    pub fn value(&self) -> Vector3<f64> {
        Vector3::new(self.x.val, self.y.val, self.z.val)
    }

    pub fn dot(&self, other: &Self) -> Dual<N> {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(&self) -> Dual<N> {
        self.dot(self)
    }

    #[cfg(test)]
    pub fn norm(&self) -> Dual<N> {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: Dual<N>) -> Self {
        DVec3 { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn scale_f64(&self, s: f64) -> Self {
        DVec3 { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn cross(&self, other: &Self) -> Self {
        DVec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }
}

impl<const N: usize> Add for DVec3<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        DVec3 { x: self.x + rhs.x, y: self.y + rhs.y, z: self.z + rhs.z }
    }
}

impl<const N: usize> Sub for DVec3<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        DVec3 { x: self.x - rhs.x, y: self.y - rhs.y, z: self.z - rhs.z }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// f(a, b) = exp(a) * sqrt(b) / (a + b), checked against central
    /// differences in both directions.
    #[test]
    fn chain_matches_finite_differences() {
        let f = |a: f64, b: f64| a.exp() * b.sqrt() / (a + b);
        let (a0, b0) = (0.35, 1.7);
        let a = Dual::<2>::var(a0, 0);
        let b = Dual::<2>::var(b0, 1);
        let y = a.exp() * b.sqrt() / (a + b);
        assert_relative_eq!(y.val, f(a0, b0), epsilon = 1e-15);
        let h = 1e-6;
        let da = (f(a0 + h, b0) - f(a0 - h, b0)) / (2.0 * h);
        let db = (f(a0, b0 + h) - f(a0, b0 - h)) / (2.0 * h);
        assert_relative_eq!(y.eps[0], da, epsilon = 1e-8);
        assert_relative_eq!(y.eps[1], db, epsilon = 1e-8);
    }

    #[test]
    fn constants_carry_no_derivative() {
        let c = Dual::<3>::constant(4.0);
        let x = Dual::<3>::var(2.0, 1);
        let y = (c * x + c).sqrt() * -x;
        assert_eq!(y.eps[0], 0.0);
        assert_eq!(y.eps[2], 0.0);
        assert!(y.eps[1] != 0.0);
    }

    #[test]
    fn vector_ops_match_nalgebra_values() {
        let u = Vector3::new(0.3, -1.2, 2.0);
        let v = Vector3::new(1.5, 0.4, -0.7);
        let du = DVec3::<1>::constant(u);
        let dv = DVec3::<1>::constant(v);
        assert_relative_eq!(du.dot(&dv).val, u.dot(&v), epsilon = 1e-15);
        assert_relative_eq!(du.norm().val, u.norm(), epsilon = 1e-15);
        assert_relative_eq!(
            (du.cross(&dv).value() - u.cross(&v)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(((du - dv) + dv).value().x, u.x, epsilon = 1e-15);
    }

    #[test]
    fn norm_derivative_is_unit_direction() {
        // d|p|/dp = p/|p|; seed each coordinate.
        let p = Vector3::new(0.6, -0.8, 0.0);
        let dp = DVec3::<3>::new(
            Dual::var(p.x, 0),
            Dual::var(p.y, 1),
            Dual::var(p.z, 2),
        );
        let n = dp.norm();
        let unit = p / p.norm();
        for i in 0..3 {
            assert_relative_eq!(n.eps[i], unit[i], epsilon = 1e-15);
        }
    }
}
