//! Analytic facts about the fixed point of `X = UX + U(1-U)`.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::bounds::ModulusSpec;
use crate::error::{Error, Result};
use crate::lattice::DensityEstimate;
use crate::scalar::{MomentScalar, Real};

/// Moments kept in exact rational arithmetic.
pub const EXACT_MOMENTS: usize = 30;
/// Largest moment order served by [`moment_f64`].
pub const MAX_MOMENT: usize = 128;

/// `E X^k = (k+1)!(k-1)! sum_{j<k} E X^j / (j! (2k-j+1)!)` for `k = 0..=k_max`,
/// evaluated in `T`.
///
/// `seed` supplies already known leading moments; the recursion continues from there.
pub fn moment_recursion<T: MomentScalar>(k_max: usize, seed: &[T]) -> Vec<T> {
    let mut m: Vec<T> = Vec::with_capacity(k_max + 1);
    m.push(T::one());
    let int = |i: usize| T::from_usize(i).expect("small integers convert");
    for k in 1..=k_max {
        if let Some(v) = seed.get(k) {
            m.push(v.clone());
            continue;
        }
        let terms = (0..k).map(|j| {
            // (k-1)!/j! and (k+1)!/(2k-j+1)! as running products
            let up = ((j + 1)..k).fold(T::one(), |acc, i| acc * int(i));
            let down = ((k + 2)..=(2 * k - j + 1)).fold(T::one(), |acc, i| acc * int(i));
            m[j].clone() * up / down
        });
        m.push(T::accumulate(terms.collect::<Vec<_>>()));
    }
    m
}

/// Exact moments `E X^k`, `k = 0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub values: Vec<BigRational>,
}

impl MomentTable {
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64_value()).collect()
    }
}

pub fn moments(k_max: usize) -> MomentTable {
    MomentTable { values: moment_recursion::<BigRational>(k_max, &[]) }
}

fn moment_cache() -> &'static [f64] {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let exact = moments(EXACT_MOMENTS).to_f64();
        moment_recursion::<f64>(MAX_MOMENT, &exact)
    })
}

/// `E X^k` in `f64`: exact up to order 30, compensated floating point beyond.
pub fn moment_f64(k: usize) -> f64 {
    assert!(k <= MAX_MOMENT, "moment order {k} exceeds {MAX_MOMENT}");
    moment_cache()[k]
}

/// `P(X >= 1 - eps) <= min_{k <= kappa} 2^{(k^2-k)/4} eps^{k/2}`, clamped to 1.
pub fn tail_bound(eps: f64, kappa: u32) -> f64 {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    (1..=kappa.max(1))
        .map(|k| {
            let k = k as f64;
            2f64.powf((k * k - k) / 4.0) * eps.powf(k / 2.0)
        })
        .fold(1.0, f64::min)
}

/// Partial sum of `f(0) = E[1/(1+X)] = sum_k (-1)^k E X^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on the omitted tail: the first omitted term.
    pub error: f64,
    pub terms: usize,
}

/// `f(0)` to within `tol`, or the first `max_terms` terms if those come first.
pub fn f_zero_partial(tol: f64, max_terms: usize) -> SeriesValue {
    let mut value = 0.0;
    let mut terms = 0;
    while terms < max_terms.min(MAX_MOMENT) {
        let t = moment_f64(terms);
        if t <= tol && terms > 0 {
            break;
        }
        value += if terms % 2 == 0 { t } else { -t };
        terms += 1;
    }
    SeriesValue { value, error: moment_f64(terms), terms }
}

pub fn f_zero(tol: f64) -> f64 {
    assert!(tol > 0.0, "tolerance must be positive");
    f_zero_partial(tol, MAX_MOMENT).value
}

/// `g(x, t) = 1 / sqrt((1+x)^2 - 4t)`.
pub fn g_kernel(x: f64, t: f64) -> f64 {
    1.0 / ((1.0 + x).powi(2) - 4.0 * t).sqrt()
}

/// Lower integration limit `p_t = 2 sqrt(t) - 1`.
pub fn p_t(t: f64) -> f64 {
    2.0 * t.sqrt() - 1.0
}

/// `G(x, t) = ln(1 + x + sqrt((1+x)^2 - 4t))`, an antiderivative of `g` in `x`.
pub fn g_antiderivative(x: f64, t: f64) -> f64 {
    let disc = ((1.0 + x).powi(2) - 4.0 * t).max(0.0);
    (1.0 + x + disc.sqrt()).ln()
}

/// `h(t) = ln(1 + ((1-sqrt t)^2 + (1-sqrt t) sqrt(1 + 6 sqrt t + t)) / (4 sqrt t))`.
pub fn h(t: f64) -> f64 {
    let r = t.sqrt();
    (1.0 + ((1.0 - r).powi(2) + (1.0 - r) * (1.0 + 6.0 * r + t).sqrt()) / (4.0 * r)).ln()
}

/// Data behind the a-priori bound `||f_X||_inf <= 18`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityBoundLedger {
    /// `b_0 = 0`, `b_i = ((1 + b_{i-1})/2)^2`
    pub b: Vec<f64>,
    /// `alpha_n`: the left end of the `n`-th interval, for `n >= 1`
    pub alpha: Vec<f64>,
    pub m: Vec<u64>,
    pub global_sup: f64,
}

impl DensityBoundLedger {
    /// Printable table of `n, alpha_n, h(alpha_n), M_n`.
    pub fn table(&self) -> String {
        let mut out = format!("{:>3} {:>12} {:>12} {:>4}\n", "n", "alpha_n", "h(alpha_n)", "M_n");
        out += &format!("{:>3} {:>12} {:>12} {:>4}\n", 0, "-", "-", self.m[0]);
        for (i, a) in self.alpha.iter().enumerate() {
            out += &format!("{:>3} {:>12.8} {:>12.8} {:>4}\n", i + 1, a, h(*a), self.m[i + 1]);
        }
        out
    }
}

/// `M_0 = ceil(4 sqrt2 ln(1 + (1+sqrt17)/8) + 16/sqrt17)`.
pub fn m_zero() -> u64 {
    let r17 = 17f64.sqrt();
    (4.0 * std::f64::consts::SQRT_2 * (1.0 + (1.0 + r17) / 8.0).ln() + 16.0 / r17).ceil() as u64
}

pub fn density_bound_ledger() -> DensityBoundLedger {
    let mut b = vec![0.0f64];
    let mut alpha = Vec::new();
    let mut m = vec![m_zero()];
    let b_at = |b: &mut Vec<f64>, i: usize| {
        while b.len() <= i {
            let prev = *b.last().unwrap();
            b.push(((1.0 + prev) / 2.0).powi(2));
        }
        b[i]
    };
    for n in 1usize.. {
        let k = n.div_ceil(2);
        let a = if n % 2 == 1 { b_at(&mut b, k) } else { (b_at(&mut b, k) + b_at(&mut b, k + 1)) / 2.0 };
        let prev = m[n - 1].max(m[n.saturating_sub(2)]) as f64;
        let next = (2.0 * h(a) * prev + 4.0 * std::f64::consts::SQRT_2).ceil() as u64;
        alpha.push(a);
        m.push(next);
        if next < m[n - 1] {
            break;
        }
    }
    let global_sup = *m.iter().max().unwrap() as f64;
    DensityBoundLedger { b, alpha, m, global_sup }
}

/// `|f(t) - f(s)| <= 9 ||f||_inf sqrt|t - s|`.
pub fn holder_modulus(density_sup: f64) -> ModulusSpec {
    ModulusSpec::Holder { c: 9.0 * density_sup, alpha: 0.5 }
}

/// Right side of the integral equation for the step density `f`:
/// `2 int_{p_t}^t g(x,t) f(x) dx + int_t^1 g(x,t) f(x) dx`.
///
/// Each lattice cell `[k/s, (k+1)/s)` carries the constant value `D[k]`, so the
/// integral is exact through the antiderivative of `g`.
pub fn integral_rhs<T: Real>(density: &DensityEstimate<T>, t: f64) -> f64 {
    let sf = density.s() as f64;
    let lo_limit = p_t(t);
    let mut total = 0.0;
    for (k, x, v) in density.iter() {
        if v == 0.0 {
            continue;
        }
        let (a, b) = (x, (k + 1) as f64 / sf);
        let mut add = |lo: f64, hi: f64, w: f64| {
            let (lo, hi) = (lo.max(a), hi.min(b));
            if hi > lo {
                total += w * v * (g_antiderivative(hi, t) - g_antiderivative(lo, t));
            }
        };
        add(lo_limit, t, 2.0);
        add(t, 1.0, 1.0);
    }
    total
}

/// Diagnostic residual of the integral equation on a `t`-grid.
///
/// Interior points stay `2 delta` away from `0` and `1`, where smoothing
/// distorts the step density; the `t = 0` row compares the right side with
/// the series value of `f(0)`.
pub fn integral_residual<T: Real>(density: &DensityEstimate<T>) -> f64 {
    const GRID: usize = 101;
    let margin = 2.0 * density.delta();
    let mut worst = (integral_rhs(density, 0.0) - f_zero(1e-12)).abs();
    let (lo, hi) = (margin, 1.0 - margin);
    if hi > lo {
        for i in 0..GRID {
            let t = lo + (hi - lo) * i as f64 / (GRID - 1) as f64;
            worst = worst.max((density.value_at(t) - integral_rhs(density, t)).abs());
        }
    }
    worst
}

/// Exact `E X^2` cross-check: `(2 E[U^2(1-U)] E X + E[U^2(1-U)^2]) / (1 - E U^2)`.
pub fn second_moment_oracle() -> BigRational {
    let r = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));
    let e_u2_1mu = r(1, 12);
    let e_u2_1mu2 = r(1, 30);
    let e_u2 = r(1, 3);
    (r(2, 1) * e_u2_1mu * r(1, 3) + e_u2_1mu2) / (BigRational::one() - e_u2)
}

/// Checks `E X^k (1 - 1/(k+1)) = sum_{j<k} C(k,j) E X^j B(k+1, k-j+1)` exactly.
pub fn fixed_point_identity_holds(table: &MomentTable, k: usize) -> Result<bool> {
    if k == 0 || k >= table.values.len() {
        return Err(Error::InvalidArgument(format!("identity needs 1 <= k < {}", table.values.len())));
    }
    let fact = |n: usize| (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i));
    let binom = |n: usize, r: usize| BigRational::new(fact(n), fact(r) * fact(n - r));
    // B(a, b) = (a-1)!(b-1)!/(a+b-1)! for integer a, b
    let beta = |a: usize, b: usize| BigRational::new(fact(a - 1) * fact(b - 1), fact(a + b - 1));
    let lhs = table.values[k].clone()
        * (BigRational::one() - BigRational::new(BigInt::one(), BigInt::from(k + 1)));
    let rhs = (0..k).fold(BigRational::zero(), |acc, j| {
        acc + binom(k, j) * table.values[j].clone() * beta(k + 1, k - j + 1)
    });
    Ok(lhs == rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{extract_density, LatticePmf};
    use num_traits::FromPrimitive;
    use proptest::prelude::*;

    fn rational(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from_i64(a).unwrap(), BigInt::from_i64(b).unwrap())
    }

    #[test]
    fn leading_moments() {
        let t = moments(4);
        assert_eq!(t.values[0], rational(1, 1));
        assert_eq!(t.values[1], rational(1, 3));
        assert_eq!(t.values[2], rational(2, 15));
        assert_eq!(second_moment_oracle(), rational(2, 15));
    }

    #[test]
    fn identity_through_order_ten() {
        let t = moments(10);
        for k in 1..=10 {
            assert!(fixed_point_identity_holds(&t, k).unwrap(), "k = {k}");
        }
    }

    #[test]
    fn float_moments_track_exact() {
        let exact = moments(EXACT_MOMENTS).to_f64();
        let float = moment_recursion::<f64>(EXACT_MOMENTS, &[]);
        for (k, (e, f)) in exact.iter().zip(&float).enumerate() {
            assert!(((e - f) / e).abs() < 1e-13, "k = {k}: {e} vs {f}");
        }
        for k in 1..MAX_MOMENT {
            assert!(moment_f64(k + 1) < moment_f64(k) && moment_f64(k + 1) > 0.0);
        }
    }

    #[test]
    fn tail_bound_examples() {
        assert!((tail_bound(0.01, 2) - 2f64.sqrt() * 0.01).abs() < 1e-15);
        let near_one = tail_bound(1.0 - 1e-9, 3);
        assert!(near_one <= 1.0 && near_one > 0.999);
        assert!(tail_bound(0.5, 1) <= 1.0);
    }

    #[test]
    fn f_zero_value() {
        assert!((f_zero(1e-9) - 0.759947956).abs() < 1e-8);
        let one = f_zero_partial(1e-300, 1);
        assert_eq!(one.value, 1.0);
        assert!((one.error - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f_zero_partial_sums_bracket() {
        let v = f_zero(1e-14);
        for n in 1..40 {
            let a = f_zero_partial(0.0, n).value;
            let b = f_zero_partial(0.0, n + 1).value;
            assert!(a.min(b) <= v + 1e-15 && v <= a.max(b) + 1e-15, "n = {n}");
        }
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(g_kernel(1.0, 0.0), 0.5);
        assert_eq!(p_t(0.25), 0.0);
        let exact = g_antiderivative(1.0, 0.0) - g_antiderivative(0.0, 0.0);
        assert!((exact - 2f64.ln()).abs() < 1e-15);
        // midpoint quadrature oracle
        let n = 100_000;
        let quad: f64 = (0..n).map(|i| g_kernel((i as f64 + 0.5) / n as f64, 0.2)).sum::<f64>() / n as f64;
        let closed = g_antiderivative(1.0, 0.2) - g_antiderivative(0.0, 0.2);
        assert!((quad - closed).abs() < 1e-8);
    }

    #[test]
    fn ledger_values() {
        let l = density_bound_ledger();
        assert_eq!(l.m, vec![7, 13, 17, 18, 17]);
        assert_eq!(l.global_sup, 18.0);
        assert_eq!(l.b[1], 0.25);
        assert_eq!(l.b[2], 0.390625);
        assert!((h(0.25) - 0.494933).abs() < 1e-6);
        assert_eq!((2.0 * h(0.25) * 7.0 + 4.0 * std::f64::consts::SQRT_2).ceil(), 13.0);
        assert!(l.table().lines().count() == 6);
    }

    #[test]
    fn holder_modulus_example() {
        let m = holder_modulus(18.0);
        assert_eq!(m, ModulusSpec::Holder { c: 162.0, alpha: 0.5 });
        assert!((m.evaluate(0.01) - 16.2).abs() < 1e-12);
        assert_eq!(m.evaluate(0.0), 0.0);
    }

    #[test]
    fn junk_density_is_flagged() {
        let s = 200u64;
        let pmf = LatticePmf::new(s, 0, vec![1.0 / (2 * s) as f64; 2 * s as usize]).unwrap();
        let dens = extract_density(&pmf, 4).unwrap();
        assert!(integral_residual(&dens) > 0.1);
    }

    proptest! {
        #[test]
        fn tail_bound_monotone_in_eps(e1 in 1e-6f64..0.99, e2 in 1e-6f64..0.99, kappa in 1u32..12) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(tail_bound(lo, kappa) <= tail_bound(hi, kappa));
            prop_assert!(tail_bound(lo, kappa + 1) <= tail_bound(lo, kappa));
        }
    }
}
