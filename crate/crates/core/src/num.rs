//! Scalar abstraction shared by every numerical module.
//!
//! All physics code is written against [`Real`], so the same builders run in
//! `f64` (the default used by the drivers and acceptance suite) or `f32`.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the simulator.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn epsilon() -> Self;
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

/// Complex amplitude over a [`Real`] scalar.
pub type C<T> = Complex<T>;

#[inline]
pub fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub fn cis<T: Real>(angle: T) -> C<T> {
    Complex::new(angle.cos(), angle.sin())
}

#[inline]
pub fn abs2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    abs2(z).sqrt()
}

/// Euclidean norm of a complex vector.
pub fn norm<T: Real>(v: &[C<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + abs2(*z)).sqrt()
}

/// `<a|b>` with the first argument conjugated.
pub fn inner<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(C::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn normalize<T: Real>(v: &mut [C<T>]) {
    let n = norm(v);
    if n > T::zero() {
        let inv = T::one() / n;
        for z in v.iter_mut() {
            *z = z.scale(inv);
        }
    }
}
