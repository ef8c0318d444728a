//! Matrix entry types: 64-bit real and complex scalars.

use num_complex::Complex64;
use num_traits::{One, Zero};

/// Entry type of a [`crate::numerics::DenseMatrix`].
///
/// Implemented by `f64` and [`Complex64`] only; all arithmetic in the crate
/// is 64-bit floating point.
pub trait Scalar:
    Copy
    + PartialEq
    + std::fmt::Debug
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + 'static
{
    /// Embeds a real number.
    fn from_real(value: f64) -> Self;

    /// Complex conjugate; the identity on real scalars.
    fn conj(self) -> Self;

    /// Real part.
    fn real_part(self) -> f64;

    /// Modulus `|x|`.
    fn modulus(self) -> f64;

    /// Squared modulus `|x|^2`, computed without a square root.
    fn modulus_sq(self) -> f64;

    /// Multiplication by a real factor.
    fn scale(self, factor: f64) -> Self;

    /// True when every component is finite (no NaN, no infinity).
    fn is_finite_scalar(self) -> bool;
}

impl Scalar for f64 {
    fn from_real(value: f64) -> Self {
        value
    }

    fn conj(self) -> Self {
        self
    }

    fn real_part(self) -> f64 {
        self
    }

    fn modulus(self) -> f64 {
        self.abs()
    }

    fn modulus_sq(self) -> f64 {
        self * self
    }

    fn scale(self, factor: f64) -> Self {
        self * factor
    }

    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Complex64 {
    fn from_real(value: f64) -> Self {
        Complex64::new(value, 0.0)
    }

    fn conj(self) -> Self {
        Complex64::conj(&self)
    }

    fn real_part(self) -> f64 {
        self.re
    }

    fn modulus(self) -> f64 {
        self.norm()
    }

    fn modulus_sq(self) -> f64 {
        self.norm_sqr()
    }

    fn scale(self, factor: f64) -> Self {
        self * factor
    }

    fn is_finite_scalar(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}
