//! Minimal linear algebra generic over a scalar type.
//!
//! Everything the geometry, rasterization, and fitting code needs is written
//! against the [`Real`] trait so the same formulas evaluate with plain `f64`
//! or with [`dual::Dual`] numbers for forward-mode differentiation. Vector
//! and matrix types derive `Copy` when the scalar is `Copy`, so the `f64`
//! paths read like ordinary math code.

pub mod dual;
mod sym_eig;

pub use dual::Dual;
pub use sym_eig::sym_eigen;

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction: `f64` for plain evaluation, [`Dual`] for gradients.
///
/// Transcendentals on `f64` route through `libm` so the crate stays `no_std`
/// and results are identical across build configurations.
pub trait Real:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Value part (the gradient is dropped for duals).
    fn value(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    /// Floor; the derivative is zero almost everywhere.
    fn floor(&self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn is_finite_value(&self) -> bool {
        self.value().is_finite()
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(&self) -> Self {
        libm::sqrt(*self)
    }
    #[inline]
    fn sin(&self) -> Self {
        libm::sin(*self)
    }
    #[inline]
    fn cos(&self) -> Self {
        libm::cos(*self)
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn exp(&self) -> Self {
        libm::exp(*self)
    }
    #[inline]
    fn ln(&self) -> Self {
        libm::log(*self)
    }
    #[inline]
    fn floor(&self) -> Self {
        libm::floor(*self)
    }
}

/// 2D vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

/// 3D vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

pub type V2 = Vec2<f64>;
pub type V3 = Vec3<f64>;

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Vec2::new(self.x.clone() - o.x.clone(), self.y.clone() - o.y.clone())
    }

    pub fn norm(&self) -> T {
        (self.x.clone() * self.x.clone() + self.y.clone() * self.y.clone()).sqrt()
    }

    pub fn value(&self) -> V2 {
        Vec2::new(self.x.value(), self.y.value())
    }
}

impl V2 {
    pub const ZERO: V2 = Vec2 { x: 0.0, y: 0.0 };
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn splat(v: T) -> Self {
        Vec3::new(v.clone(), v.clone(), v)
    }

    pub fn from_f64(v: V3) -> Self {
        Vec3::new(T::from_f64(v.x), T::from_f64(v.y), T::from_f64(v.z))
    }

    pub fn add(&self, o: &Self) -> Self {
        Vec3::new(
            self.x.clone() + o.x.clone(),
            self.y.clone() + o.y.clone(),
            self.z.clone() + o.z.clone(),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        Vec3::new(
            self.x.clone() - o.x.clone(),
            self.y.clone() - o.y.clone(),
            self.z.clone() - o.z.clone(),
        )
    }

    pub fn scale(&self, s: &T) -> Self {
        Vec3::new(
            self.x.clone() * s.clone(),
            self.y.clone() * s.clone(),
            self.z.clone() * s.clone(),
        )
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x.clone() * o.x.clone() + self.y.clone() * o.y.clone() + self.z.clone() * o.z.clone()
    }

    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y.clone() * o.z.clone() - self.z.clone() * o.y.clone(),
            self.z.clone() * o.x.clone() - self.x.clone() * o.z.clone(),
            self.x.clone() * o.y.clone() - self.y.clone() * o.x.clone(),
        )
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Vec3::new(
            self.x.clone() / n.clone(),
            self.y.clone() / n.clone(),
            self.z.clone() / n,
        )
    }

    pub fn value(&self) -> V3 {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite_value() && self.y.is_finite_value() && self.z.is_finite_value()
    }
}

impl V3 {
    pub const ZERO: V3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    /// Normalize, falling back to `fallback` when the norm is below `eps`.
    pub fn normalized_or(&self, fallback: V3, eps: f64) -> V3 {
        let n = self.norm();
        if n <= eps {
            fallback
        } else {
            self.scale(&(1.0 / n))
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> V3 {
        Vec3::new(a[0], a[1], a[2])
    }
}

/// 3x3 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

pub type M3 = Mat3<f64>;

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let o = T::one;
        let z = T::zero;
        Mat3 {
            m: [[o(), z(), z()], [z(), o(), z()], [z(), z(), o()]],
        }
    }

    pub fn from_rows(r0: Vec3<T>, r1: Vec3<T>, r2: Vec3<T>) -> Self {
        Mat3 {
            m: [[r0.x, r0.y, r0.z], [r1.x, r1.y, r1.z], [r2.x, r2.y, r2.z]],
        }
    }

    pub fn from_cols(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Mat3 {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3::new(self.m[i][0].clone(), self.m[i][1].clone(), self.m[i][2].clone())
    }

    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j].clone(), self.m[1][j].clone(), self.m[2][j].clone())
    }

    pub fn transpose(&self) -> Self {
        Mat3::from_rows(self.col(0), self.col(1), self.col(2))
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        Mat3::from_cols(
            self.mul_vec(&o.col(0)),
            self.mul_vec(&o.col(1)),
            self.mul_vec(&o.col(2)),
        )
    }

    pub fn scale(&self, s: &T) -> Self {
        Mat3::from_rows(
            self.row(0).scale(s),
            self.row(1).scale(s),
            self.row(2).scale(s),
        )
    }

    /// Rodrigues rotation from an axis-angle vector.
    ///
    /// Switches to the second-order Taylor expansion of `sin t / t` and
    /// `(1 - cos t) / t^2` below `t^2 = 1e-12` so the formula stays smooth
    /// (and dual-number derivatives stay exact) through the identity.
    pub fn from_axis_angle(w: &Vec3<T>) -> Self {
        let t2 = w.norm_sq();
        let (a, b) = if t2.value() < 1e-12 {
            let six = T::from_f64(6.0);
            let twenty_four = T::from_f64(24.0);
            (
                T::one() - t2.clone() / six,
                T::from_f64(0.5) - t2.clone() / twenty_four,
            )
        } else {
            let t = t2.clone().sqrt();
            (
                t.sin() / t.clone(),
                (T::one() - t.cos()) / t2.clone(),
            )
        };
        let k = skew(w);
        let k2 = k.mul_mat(&k);
        let mut m: Mat3<T> = Mat3::identity();
        for i in 0..3 {
            for j in 0..3 {
                m.m[i][j] = m.m[i][j].clone()
                    + a.clone() * k.m[i][j].clone()
                    + b.clone() * k2.m[i][j].clone();
            }
        }
        m
    }

    pub fn value(&self) -> M3 {
        Mat3 {
            m: [
                [self.m[0][0].value(), self.m[0][1].value(), self.m[0][2].value()],
                [self.m[1][0].value(), self.m[1][1].value(), self.m[1][2].value()],
                [self.m[2][0].value(), self.m[2][1].value(), self.m[2][2].value()],
            ],
        }
    }
}

impl M3 {
    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn lift<T: Real>(&self) -> Mat3<T> {
        Mat3 {
            m: [
                [
                    T::from_f64(self.m[0][0]),
                    T::from_f64(self.m[0][1]),
                    T::from_f64(self.m[0][2]),
                ],
                [
                    T::from_f64(self.m[1][0]),
                    T::from_f64(self.m[1][1]),
                    T::from_f64(self.m[1][2]),
                ],
                [
                    T::from_f64(self.m[2][0]),
                    T::from_f64(self.m[2][1]),
                    T::from_f64(self.m[2][2]),
                ],
            ],
        }
    }
}

fn skew<T: Real>(w: &Vec3<T>) -> Mat3<T> {
    let z = T::zero;
    Mat3 {
        m: [
            [z(), -w.z.clone(), w.y.clone()],
            [w.z.clone(), z(), -w.x.clone()],
            [-w.y.clone(), w.x.clone(), z()],
        ],
    }
}

/// Unit quaternion (w, x, y, z), plain `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        if n <= 0.0 {
            Quat::IDENTITY
        } else {
            Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
        }
    }

    pub fn mul(&self, o: &Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn to_mat3(&self) -> M3 {
        let Quat { w, x, y, z } = *self;
        Mat3 {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    /// Rotation matrix to quaternion (Shepperd's method).
    pub fn from_mat3(m: &M3) -> Quat {
        let t = m.m[0][0] + m.m[1][1] + m.m[2][2];
        let q = if t > 0.0 {
            let s = libm::sqrt(t + 1.0) * 2.0;
            Quat::new(
                0.25 * s,
                (m.m[2][1] - m.m[1][2]) / s,
                (m.m[0][2] - m.m[2][0]) / s,
                (m.m[1][0] - m.m[0][1]) / s,
            )
        } else if m.m[0][0] > m.m[1][1] && m.m[0][0] > m.m[2][2] {
            let s = libm::sqrt(1.0 + m.m[0][0] - m.m[1][1] - m.m[2][2]) * 2.0;
            Quat::new(
                (m.m[2][1] - m.m[1][2]) / s,
                0.25 * s,
                (m.m[0][1] + m.m[1][0]) / s,
                (m.m[0][2] + m.m[2][0]) / s,
            )
        } else if m.m[1][1] > m.m[2][2] {
            let s = libm::sqrt(1.0 + m.m[1][1] - m.m[0][0] - m.m[2][2]) * 2.0;
            Quat::new(
                (m.m[0][2] - m.m[2][0]) / s,
                (m.m[0][1] + m.m[1][0]) / s,
                0.25 * s,
                (m.m[1][2] + m.m[2][1]) / s,
            )
        } else {
            let s = libm::sqrt(1.0 + m.m[2][2] - m.m[0][0] - m.m[1][1]) * 2.0;
            Quat::new(
                (m.m[1][0] - m.m[0][1]) / s,
                (m.m[0][2] + m.m[2][0]) / s,
                (m.m[1][2] + m.m[2][1]) / s,
                0.25 * s,
            )
        };
        q.normalized()
    }

    /// Geodesic angle (radians) between two rotations.
    pub fn angle_to(&self, o: &Quat) -> f64 {
        let d = (self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z).abs();
        2.0 * libm::acos(d.clamp(-1.0, 1.0))
    }
}

/// FNV-1a 64-bit hash, used to derive independent named RNG streams.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for the RNG stream identified by `name`, fanned out from a base seed.
pub fn stream_seed(name: &str, seed: u64) -> u64 {
    fnv1a64(name.as_bytes()) ^ seed
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn rodrigues_matches_reference_rotation() {
        // 90 degrees about x: y -> z, z -> -y.
        let r = Mat3::from_axis_angle(&Vec3::new(core::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let v = r.mul_vec(&Vec3::new(0.0, 1.0, 0.0));
        assert!((v.x - 0.0).abs() < 1e-12);
        assert!((v.y - 0.0).abs() < 1e-12);
        assert!((v.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rodrigues_small_angle_branch_is_continuous() {
        let w = Vec3::new(5e-7, -3e-7, 2e-7);
        let r_small = Mat3::from_axis_angle(&w);
        let w_big = w.scale(&4.0); // above the branch threshold
        let r_big = Mat3::from_axis_angle(&w_big);
        // Both close to identity; the small branch must not jump.
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((r_small.m[i][j] - id).abs() < 1e-6);
                assert!((r_big.m[i][j] - id).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn quat_mat_roundtrip() {
        let q = Quat::new(0.8, 0.1, -0.5, 0.3).normalized();
        let m = q.to_mat3();
        let q2 = Quat::from_mat3(&m);
        // q and -q represent the same rotation.
        let d = (q.w * q2.w + q.x * q2.x + q.y * q2.y + q.z * q2.z).abs();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((m.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stream_seeds_differ_per_name() {
        let names = ["alpha", "beta", "gamma", "alph", "a"];
        let seeds: Vec<u64> = names.iter().map(|n| stream_seed(n, 42)).collect();
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
