//! Scalar abstractions.
//!
//! The lattice machinery is generic over a floating-point [`Real`], while the
//! moment recursions are generic over [`MomentScalar`] so the same code runs in
//! exact rational arithmetic and in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating-point type a lattice PMF can be stored in.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + Default + 'static
{
    /// Absolute tolerance on total mass used by the PMF invariants.
    const MASS_TOL: f64;
    /// Short name recorded in reports.
    const NAME: &'static str;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const MASS_TOL: f64 = 1e-12;
    const NAME: &'static str = "f64";
}

impl Real for f32 {
    const MASS_TOL: f64 = 1e-4;
    const NAME: &'static str = "f32";
}

/// Numeric type in which a moment recursion can be evaluated.
pub trait MomentScalar: Clone + Num + FromPrimitive + Debug {
    /// Sum a sequence of terms; floating types use compensated summation.
    fn accumulate<I: IntoIterator<Item = Self>>(terms: I) -> Self;

    fn to_f64_value(&self) -> f64;
}

impl MomentScalar for BigRational {
    fn accumulate<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        terms
            .into_iter()
            .fold(BigRational::from_integer(BigInt::from(0)), |acc, t| acc + t)
    }

    fn to_f64_value(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl MomentScalar for f64 {
    fn accumulate<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        neumaier_sum(terms)
    }

    fn to_f64_value(&self) -> f64 {
        *self
    }
}

/// Neumaier's variant of Kahan summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let terms = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(terms), 2.0);
    }

    #[test]
    fn rational_accumulate_is_exact() {
        let third = BigRational::new(1.into(), 3.into());
        let s = BigRational::accumulate(vec![third.clone(), third.clone(), third]);
        assert_eq!(s, BigRational::from_integer(1.into()));
    }
}
