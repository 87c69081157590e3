use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A coefficient function on `[0, 1]`, drawn from a closed set so that its
/// Lipschitz constant and sup-norm are known rather than guessed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientFn {
    /// `u`
    Identity,
    /// `u (1 - u)`
    UOneMinusU,
    /// `(1 + u) / 2`
    HalfOnePlus,
    Constant { value: f64 },
    /// `intercept + slope * u`
    Affine { intercept: f64, slope: f64 },
    Piecewise(PiecewisePolynomial),
}

/// User-supplied piecewise polynomial with declared metadata.
///
/// `breaks` partitions `[0, 1]`; piece `i` covers `[breaks[i], breaks[i + 1])`
/// (the last piece is closed) and evaluates `sum_k coeffs[i][k] * u^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolynomial {
    pub breaks: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub lipschitz: f64,
    pub sup: f64,
}

impl PiecewisePolynomial {
    pub fn validate(&self) -> Result<()> {
        let b = &self.breaks;
        if b.len() < 2 || b.len() != self.coeffs.len() + 1 {
            return Err(Error::InvalidSpec(
                "piecewise polynomial needs breaks.len() == coeffs.len() + 1 >= 2".into(),
            ));
        }
        if b[0] != 0.0 || *b.last().unwrap() != 1.0 || b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(
                "piecewise breaks must increase strictly from 0 to 1".into(),
            ));
        }
        if !(self.lipschitz >= 0.0 && self.sup >= 0.0) {
            return Err(Error::InvalidSpec("piecewise metadata must be nonnegative".into()));
        }
        Ok(())
    }

    fn eval(&self, u: f64) -> f64 {
        let piece = match self.breaks[1..].iter().position(|&b| u < b) {
            Some(i) => i,
            None => self.coeffs.len() - 1,
        };
        self.coeffs[piece].iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

impl CoefficientFn {
    pub fn constant(value: f64) -> Self {
        CoefficientFn::Constant { value }
    }

    pub fn affine(intercept: f64, slope: f64) -> Self {
        CoefficientFn::Affine { intercept, slope }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            CoefficientFn::Identity => u,
            CoefficientFn::UOneMinusU => u * (1.0 - u),
            CoefficientFn::HalfOnePlus => 0.5 * (1.0 + u),
            CoefficientFn::Constant { value } => *value,
            CoefficientFn::Affine { intercept, slope } => intercept + slope * u,
            CoefficientFn::Piecewise(p) => p.eval(u),
        }
    }

    /// `(intercept, slope)` when the function is affine in `u`.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            CoefficientFn::Identity => Some((0.0, 1.0)),
            CoefficientFn::HalfOnePlus => Some((0.5, 0.5)),
            CoefficientFn::Constant { value } => Some((*value, 0.0)),
            CoefficientFn::Affine { intercept, slope } => Some((*intercept, *slope)),
            CoefficientFn::UOneMinusU | CoefficientFn::Piecewise(_) => None,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            CoefficientFn::UOneMinusU => 1.0,
            CoefficientFn::Piecewise(p) => p.lipschitz,
            other => other.as_affine().map(|(_, b)| b.abs()).unwrap_or(f64::INFINITY),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            CoefficientFn::UOneMinusU => 0.25,
            CoefficientFn::Piecewise(p) => p.sup,
            other => {
                let (a, b) = other.as_affine().expect("remaining variants are affine");
                a.abs().max((a + b).abs())
            }
        }
    }

    /// True when `|f(floor(s u)/s)| <= |f(u)|` for every `u` and `s`.
    pub fn floor_dominated(&self) -> bool {
        match self.as_affine() {
            // floor moves u down, so |a + b u| cannot grow when a, b >= 0 (or both <= 0)
            Some((a, b)) => b == 0.0 || (a >= 0.0 && b >= 0.0) || (a <= 0.0 && b <= 0.0),
            None => false,
        }
    }

    /// `E |f(U)|^p` for `U` uniform on `[0, 1]`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        if let Some((a, b)) = self.as_affine() {
            return affine_abs_moment(a, b, p);
        }
        if let CoefficientFn::UOneMinusU = self {
            if p.fract() == 0.0 && p <= 80.0 {
                // Beta(p + 1, p + 1) = (p!)^2 / (2p + 1)!
                let k = p as u32;
                let mut v = 1.0;
                for i in 1..=k {
                    v *= i as f64 / (k + i) as f64;
                }
                return v / (2 * k + 1) as f64;
            }
        }
        gauss_legendre_unit(|u| self.eval(u).abs().powf(p))
    }
}

fn affine_abs_moment(a: f64, b: f64, p: f64) -> f64 {
    if b == 0.0 {
        return a.abs().powf(p);
    }
    let prim = |y: f64| y.signum() * y.abs().powf(p + 1.0) / (p + 1.0);
    let (lo, hi) = if b > 0.0 { (a, a + b) } else { (a + b, a) };
    (prim(hi) - prim(lo)) / b.abs()
}

/// Composite 8-point Gauss–Legendre rule on `[0, 1]` with 256 panels.
pub(crate) fn gauss_legendre_unit<F: Fn(f64) -> f64>(f: F) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_26,
    ];
    const PANELS: usize = 256;
    let h = 1.0 / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let mid = (i as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            acc += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += acc * half;
    }
    total
}

/// A Skorohod branch `(A, b) = (phi(U), psi(U))` with its metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBranch {
    pub phi: CoefficientFn,
    pub psi: CoefficientFn,
    pub lip_phi: f64,
    pub lip_psi: f64,
    pub sup_phi: f64,
    pub sup_psi: f64,
    pub monotone_dominated: bool,
}

impl CoefficientBranch {
    pub fn new(phi: CoefficientFn, psi: CoefficientFn) -> Result<Self> {
        if let CoefficientFn::Piecewise(p) = &phi {
            p.validate()?;
        }
        if let CoefficientFn::Piecewise(p) = &psi {
            p.validate()?;
        }
        let branch = CoefficientBranch {
            lip_phi: phi.lipschitz(),
            lip_psi: psi.lipschitz(),
            sup_phi: phi.sup(),
            sup_psi: psi.sup(),
            monotone_dominated: phi.floor_dominated(),
            phi,
            psi,
        };
        branch.validate()?;
        Ok(branch)
    }

    /// Spot-checks the declared metadata on a dense grid.
    pub fn validate(&self) -> Result<()> {
        if self.sup_phi > 1.0 {
            return Err(Error::InvalidSpec(format!(
                "sup |phi| = {} exceeds 1",
                self.sup_phi
            )));
        }
        const GRID: usize = 2048;
        let slack = 1e-12;
        let mut prev: Option<(f64, f64, f64)> = None;
        for i in 0..=GRID {
            let u = i as f64 / GRID as f64;
            let (a, b) = (self.phi.eval(u), self.psi.eval(u));
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidSpec(format!("non-finite coefficient at u = {u}")));
            }
            if a.abs() > self.sup_phi + slack || b.abs() > self.sup_psi + slack {
                return Err(Error::InvalidSpec(format!("declared sup violated at u = {u}")));
            }
            if let Some((pu, pa, pb)) = prev {
                let du = u - pu;
                if (a - pa).abs() > self.lip_phi * du + slack
                    || (b - pb).abs() > self.lip_psi * du + slack
                {
                    return Err(Error::InvalidSpec(format!(
                        "declared Lipschitz constant violated near u = {u}"
                    )));
                }
            }
            prev = Some((u, a, b));
        }
        Ok(())
    }

    /// Whether `||A^(n)||_p <= ||A||_p` holds exactly under `mode`.
    ///
    /// Floor discretisation needs pointwise domination; the midpoint rule is
    /// dominated in norm for affine `phi` by convexity of `|.|^p`.
    pub fn norm_dominated(&self, mode: super::UMode) -> bool {
        match mode {
            super::UMode::Floor => self.monotone_dominated,
            super::UMode::Symmetric => self.phi.as_affine().is_some(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_metadata() {
        let qs = CoefficientBranch::new(CoefficientFn::Identity, CoefficientFn::UOneMinusU).unwrap();
        assert_eq!((qs.lip_phi, qs.lip_psi, qs.sup_phi, qs.sup_psi), (1.0, 1.0, 1.0, 0.25));
        assert!(qs.monotone_dominated);
    }

    #[test]
    fn rejects_expansive_phi() {
        let err = CoefficientBranch::new(CoefficientFn::affine(0.5, 1.0), CoefficientFn::constant(0.0));
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn rejects_wrong_declared_lipschitz() {
        let pw = PiecewisePolynomial {
            breaks: vec![0.0, 1.0],
            coeffs: vec![vec![0.0, 0.0, 1.0]],
            lipschitz: 1.0, // true constant is 2
            sup: 1.0,
        };
        let err = CoefficientBranch::new(CoefficientFn::constant(0.0), CoefficientFn::Piecewise(pw));
        assert!(err.is_err());
    }

    #[test]
    fn affine_moments_closed_form() {
        // A uniform on [1/2, 1]: E A = 3/4
        assert!((CoefficientFn::HalfOnePlus.abs_moment(1.0) - 0.75).abs() < 1e-15);
        // E U^p = 1/(p+1)
        assert!((CoefficientFn::Identity.abs_moment(12.0) - 1.0 / 13.0).abs() < 1e-15);
        // sign change: E|2U - 1| = 1/2
        assert!((CoefficientFn::affine(-1.0, 2.0).abs_moment(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadrature_matches_beta() {
        let exact = CoefficientFn::UOneMinusU.abs_moment(3.0);
        let quad = gauss_legendre_unit(|u| (u * (1.0 - u)).powi(3));
        assert!((exact - 1.0 / 140.0).abs() < 1e-15);
        assert!((exact - quad).abs() < 1e-14);
    }

    #[test]
    fn piecewise_eval() {
        let pw = PiecewisePolynomial {
            breaks: vec![0.0, 0.5, 1.0],
            coeffs: vec![vec![0.0, 1.0], vec![1.0, -1.0]],
            lipschitz: 1.0,
            sup: 0.5,
        };
        let f = CoefficientFn::Piecewise(pw);
        assert_eq!(f.eval(0.25), 0.25);
        assert_eq!(f.eval(0.75), 0.25);
        assert_eq!(f.eval(1.0), 0.0);
    }
}
