//! Probability mass functions on the lattice `{k/s : k in Z}`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{Interval, PerpetuitySpec};
use crate::scalar::{neumaier_sum, Real};

/// Largest `k` with `k/s <= x`, robust against rounding in `x * s`.
#[inline]
pub fn lattice_floor(x: f64, s: u64) -> i64 {
    let sf = s as f64;
    let mut k = (x * sf).floor();
    if k / sf > x {
        k -= 1.0;
    } else if (k + 1.0) / sf <= x {
        k += 1.0;
    }
    k as i64
}

/// Formats with 17 significant digits so values round-trip exactly.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Distribution of `X_n`: `mass[i] = P(X_n = (k_min + i)/s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePmf<T> {
    s: u64,
    k_min: i64,
    mass: Vec<T>,
}

impl<T: Real> LatticePmf<T> {
    pub fn new(s: u64, k_min: i64, mass: Vec<T>) -> Result<Self> {
        if s == 0 || mass.is_empty() {
            return Err(Error::InvalidArgument("lattice needs s >= 1 and at least one atom".into()));
        }
        if mass.iter().any(|m| !(*m >= T::zero())) {
            return Err(Error::InvalidArgument("masses must be nonnegative".into()));
        }
        let pmf = LatticePmf { s, k_min, mass };
        let total = pmf.total_mass();
        if (total - 1.0).abs() > T::MASS_TOL {
            return Err(Error::InvalidArgument(format!("total mass {total} is not 1")));
        }
        Ok(pmf)
    }

    pub(crate) fn from_raw(s: u64, k_min: i64, mass: Vec<T>) -> Self {
        LatticePmf { s, k_min, mass }
    }

    pub fn point_mass(s: u64, k: i64) -> Self {
        LatticePmf { s, k_min: k, mass: vec![T::one()] }
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.mass.len() as i64 - 1
    }

    pub fn atoms(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn mass_at(&self, k: i64) -> T {
        let i = k - self.k_min;
        if i < 0 || i >= self.mass.len() as i64 {
            T::zero()
        } else {
            self.mass[i as usize]
        }
    }

    #[inline]
    pub fn x(&self, k: i64) -> f64 {
        k as f64 / self.s as f64
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.mass.iter().map(|m| m.to_f64_lossy()))
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(
            self.mass
                .iter()
                .enumerate()
                .map(|(i, m)| m.to_f64_lossy() * self.x(self.k_min + i as i64)),
        )
    }

    /// Smallest and largest atom carrying positive mass.
    pub fn occupied_range(&self) -> (i64, i64) {
        let first = self.mass.iter().position(|m| *m > T::zero()).unwrap_or(0);
        let last = self.mass.iter().rposition(|m| *m > T::zero()).unwrap_or(0);
        (self.k_min + first as i64, self.k_min + last as i64)
    }

    pub fn step_cdf(&self) -> StepCdf {
        let mut acc = 0.0;
        let cum = self
            .mass
            .iter()
            .map(|m| {
                acc += m.to_f64_lossy();
                acc.min(1.0)
            })
            .collect();
        StepCdf { s: self.s, k_min: self.k_min, cum }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        cdf(self, x)
    }

    /// Writes `k,x,mass,cdf` rows in ascending `k` over the occupied range.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,x,mass,cdf")?;
        let cdf = self.step_cdf();
        let (lo, hi) = self.occupied_range();
        for k in lo..=hi {
            let i = (k - self.k_min) as usize;
            let m = &self.mass[i];
            writeln!(w, "{},{},{},{}", k, fmt17(self.x(k)), fmt17(m.to_f64_lossy()), fmt17(cdf.cum[i]))?;
        }
        Ok(())
    }

    /// Converts the storage scalar.
    pub fn cast<U: Real>(&self) -> LatticePmf<U> {
        LatticePmf {
            s: self.s,
            k_min: self.k_min,
            mass: self.mass.iter().map(|m| U::from_f64_lossy(m.to_f64_lossy())).collect(),
        }
    }
}

/// `P(X_n <= x)`.
pub fn cdf<T: Real>(pmf: &LatticePmf<T>, x: f64) -> f64 {
    let k = lattice_floor(x, pmf.s);
    if k < pmf.k_min {
        return 0.0;
    }
    if k >= pmf.k_max() {
        return 1.0;
    }
    let upto = (k - pmf.k_min) as usize;
    neumaier_sum(pmf.mass[..=upto].iter().map(|m| m.to_f64_lossy())).clamp(0.0, 1.0)
}

/// Precomputed distribution function of a lattice PMF.
#[derive(Clone, Debug)]
pub struct StepCdf {
    s: u64,
    k_min: i64,
    cum: Vec<f64>,
}

impl StepCdf {
    pub fn s(&self) -> u64 {
        self.s
    }

    /// Value just after atom `k`.
    pub fn at_atom(&self, k: i64) -> f64 {
        let i = k - self.k_min;
        if i < 0 {
            0.0
        } else if i as usize >= self.cum.len() - 1 {
            1.0
        } else {
            self.cum[i as usize]
        }
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }
}

/// A reference distribution function for [`kolmogorov_vs`].
pub trait CdfReference {
    fn at(&self, x: f64) -> f64;

    /// `F(x-)`; equals `at` for continuous references.
    fn left_limit(&self, x: f64) -> f64 {
        self.at(x)
    }
}

impl<F: Fn(f64) -> f64> CdfReference for F {
    fn at(&self, x: f64) -> f64 {
        self(x)
    }
}

impl CdfReference for StepCdf {
    fn at(&self, x: f64) -> f64 {
        self.at_atom(lattice_floor(x, self.s))
    }

    fn left_limit(&self, x: f64) -> f64 {
        let k = lattice_floor(x, self.s);
        if k as f64 / self.s as f64 == x {
            self.at_atom(k - 1)
        } else {
            self.at_atom(k)
        }
    }
}

/// `sup_x |F_pmf(x) - F_ref(x)|`.
///
/// Exact for continuous references and for step references whose jumps lie
/// on atoms of `pmf`: between atoms the lattice CDF is flat, so the supremum
/// is attained at an atom or as a left limit at one.
pub fn kolmogorov_vs<T: Real, R: CdfReference + ?Sized>(pmf: &LatticePmf<T>, reference: &R) -> f64 {
    let cdf = pmf.step_cdf();
    let mut left = 0.0;
    let mut worst = 0.0f64;
    let last = pmf.atoms() - 1;
    for (i, &c) in cdf.cum.iter().enumerate() {
        let x = pmf.x(pmf.k_min + i as i64);
        let right = if i == last { 1.0 } else { c };
        worst = worst
            .max((right - reference.at(x)).abs())
            .max((left - reference.left_limit(x)).abs());
        left = right;
    }
    worst
}

/// `sup_x |F_a(x) - F_b(x)|` for two lattice PMFs, possibly on different lattices.
pub fn kolmogorov_between<T: Real, U: Real>(a: &LatticePmf<T>, b: &LatticePmf<U>) -> f64 {
    let (ca, cb) = (a.step_cdf(), b.step_cdf());
    let (sa, sb) = (a.s as i128, b.s as i128);
    let (mut i, mut j) = (a.k_min, b.k_min);
    let mut worst = 0.0f64;
    // merge jump points k/sa and l/sb in increasing order
    while i <= a.k_max() || j <= b.k_max() {
        let order = if i > a.k_max() {
            std::cmp::Ordering::Greater
        } else if j > b.k_max() {
            std::cmp::Ordering::Less
        } else {
            (i as i128 * sb).cmp(&(j as i128 * sa))
        };
        let (fa, fb) = match order {
            std::cmp::Ordering::Less => {
                let v = (ca.at_atom(i), cb.at_atom(floor_ratio(i, a.s, b.s)));
                i += 1;
                v
            }
            std::cmp::Ordering::Greater => {
                let v = (ca.at_atom(floor_ratio(j, b.s, a.s)), cb.at_atom(j));
                j += 1;
                v
            }
            std::cmp::Ordering::Equal => {
                let v = (ca.at_atom(i), cb.at_atom(j));
                i += 1;
                j += 1;
                v
            }
        };
        worst = worst.max((fa - fb).abs());
    }
    worst
}

/// `floor(k * to / from)` computed exactly.
fn floor_ratio(k: i64, from: u64, to: u64) -> i64 {
    (k as i128 * to as i128).div_euclid(from as i128) as i64
}

/// Finite-difference density `D[k] = s/(2d) * sum_{j=k-d+1}^{k+d} mass[j]`.
///
/// `D[k]` equals `(F(x + delta) - F(x - delta)) / (2 delta)` at `x = k/s`
/// with `delta = d/s`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate<T> {
    s: u64,
    d: u64,
    k_start: i64,
    values: Vec<T>,
}

impl<T: Real> DensityEstimate<T> {
    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn delta(&self) -> f64 {
        self.d as f64 / self.s as f64
    }

    pub fn k_start(&self) -> i64 {
        self.k_start
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn domain(&self) -> Interval {
        let sf = self.s as f64;
        Interval {
            lo: self.k_start as f64 / sf,
            hi: (self.k_start + self.values.len() as i64 - 1) as f64 / sf,
        }
    }

    /// `(k, x, value)` triples in ascending `k`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64, f64)> + '_ {
        let sf = self.s as f64;
        self.values.iter().enumerate().map(move |(i, v)| {
            let k = self.k_start + i as i64;
            (k, k as f64 / sf, v.to_f64_lossy())
        })
    }

    /// Value at the lattice point `floor(x s)/s`; zero off the domain.
    pub fn value_at(&self, x: f64) -> f64 {
        let i = lattice_floor(x, self.s) - self.k_start;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize].to_f64_lossy()
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().map(|v| v.to_f64_lossy()).fold(0.0, f64::max)
    }

    /// Riemann mass `sum values / s`.
    pub fn riemann_mass(&self) -> f64 {
        neumaier_sum(self.values.iter().map(|v| v.to_f64_lossy())) / self.s as f64
    }

    /// Writes `k,x,density` rows in ascending `k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,x,density")?;
        for (k, x, v) in self.iter() {
            writeln!(w, "{},{},{}", k, fmt17(x), fmt17(v))?;
        }
        Ok(())
    }
}

pub fn extract_density<T: Real>(pmf: &LatticePmf<T>, d: u64) -> Result<DensityEstimate<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("averaging half-width d must be >= 1".into()));
    }
    if d as usize > pmf.atoms() {
        return Err(Error::WindowExceedsSupport { d, atoms: pmf.atoms() });
    }
    let d_i = d as i64;
    // prefix[i] = sum of mass over the first i atoms
    let mut prefix = Vec::with_capacity(pmf.atoms() + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0;
    for m in &pmf.mass {
        acc += m.to_f64_lossy();
        prefix.push(acc);
    }
    let upto = |k: i64| -> f64 {
        let i = (k - pmf.k_min + 1).clamp(0, pmf.atoms() as i64);
        prefix[i as usize]
    };
    let k_start = pmf.k_min - d_i;
    let k_end = pmf.k_max() + d_i - 1;
    let scale = pmf.s as f64 / (2 * d) as f64;
    let values = (k_start..=k_end)
        .map(|k| T::from_f64_lossy(((upto(k + d_i) - upto(k - d_i)) * scale).max(0.0)))
        .collect();
    Ok(DensityEstimate { s: pmf.s, d, k_start, values })
}

/// Bound on the support of `X_n`: either `[-Q_n, Q_n]` or a clipped interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportBound {
    pub q: u64,
    pub clipped: Option<Interval>,
}

impl SupportBound {
    /// Inclusive index range covering the support at resolution `s`.
    pub fn k_range(&self, s: u64) -> (i64, i64) {
        match self.clipped {
            Some(iv) => (lattice_floor(iv.lo, s), lattice_floor(iv.hi, s)),
            None => {
                let r = (s as i64).saturating_mul(self.q as i64);
                (-r, r)
            }
        }
    }
}

/// `Q_n = ceil(||A||_inf Q_{n-1} + ||b||_inf)` with `Q_0 = max(1, ceil|E X|)`.
pub fn q_recursion(spec: &PerpetuitySpec, n: u32) -> u64 {
    let (a, b) = (spec.a_sup(), spec.b_sup());
    let mut q = spec.mean_x().abs().ceil().max(1.0);
    for _ in 0..n {
        q = (a * q + b).ceil().max(1.0);
    }
    q as u64
}

pub fn support_q(spec: &PerpetuitySpec, n: u32) -> SupportBound {
    SupportBound { q: q_recursion(spec, n), clipped: spec.support_hint() }
}
