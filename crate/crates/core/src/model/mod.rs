//! Problem instances: coefficient branches, schedules and moment metadata.

mod coefficient;
pub mod presets;
mod schedule;

pub use coefficient::{CoefficientBranch, CoefficientFn, PiecewisePolynomial};
pub use schedule::{discretise_u, grid_u, schedule_s, DiscretisationSchedule, ScheduleKind, UMode};

use serde::{Deserialize, Serialize};

use crate::bounds::ModulusSpec;
use crate::error::{Error, Result};
use crate::quickselect;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidSpec(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Supplier of `||X||_p` for the fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentProvider {
    /// Exact moment recursion of `X = UX + U(1-U)`.
    QuickselectRecursion,
    /// `X ~ Beta(alpha, beta)`: `E X^p = prod_{s<p} (alpha+s)/(alpha+beta+s)`.
    Beta { alpha: f64, beta: f64 },
    /// `||X||_p <= max(|lo|, |hi|)` from the support alone.
    SupportBound { lo: f64, hi: f64 },
}

impl MomentProvider {
    pub fn x_norm(&self, p: u32) -> f64 {
        assert!(p >= 1, "moment order must be >= 1");
        match self {
            MomentProvider::QuickselectRecursion => quickselect::moment_f64(p as usize).powf(1.0 / p as f64),
            MomentProvider::Beta { alpha, beta } => {
                let m: f64 = (0..p).map(|s| (alpha + s as f64) / (alpha + beta + s as f64)).product();
                m.powf(1.0 / p as f64)
            }
            MomentProvider::SupportBound { lo, hi } => lo.abs().max(hi.abs()),
        }
    }
}

/// Known law of the fixed point, when one exists; used as ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KnownLaw {
    /// Beta law with integer parameters.
    Beta { alpha: u32, beta: u32 },
    PointMass { at: f64 },
}

impl KnownLaw {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            KnownLaw::Beta { alpha, beta } => {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                // I_x(a, b) = sum_{j=a}^{a+b-1} C(a+b-1, j) x^j (1-x)^{a+b-1-j}
                let m = alpha + beta - 1;
                (alpha..=m)
                    .map(|j| binomial(m, j) * x.powi(j as i32) * (1.0 - x).powi((m - j) as i32))
                    .sum()
            }
            KnownLaw::PointMass { at } => {
                if x >= at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> Option<f64> {
        match *self {
            KnownLaw::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return Some(0.0);
                }
                // 1/B(a,b) = (a+b-1)! / ((a-1)! (b-1)!)
                let norm = (alpha + beta - 1) as f64 * binomial(alpha + beta - 2, alpha - 1);
                Some(norm * x.powi(alpha as i32 - 1) * (1.0 - x).powi(beta as i32 - 1))
            }
            KnownLaw::PointMass { .. } => None,
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Which discretisation errors enter the `l_p` recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorBudget {
    /// `C_X + C_A ||X||_p + C_b`: every term of the triangle inequality.
    #[default]
    Full,
    /// `C_X` only: the lattice rounding of `X_n`. This is the convention under
    /// which the published Quickselect certificates (e.g. 5.1842e-4 at n = 80)
    /// come out; it is not implied by the triangle inequality.
    RoundingOnly,
}

/// How the density modulus of continuity depends on a sup-norm bound `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModulusRule {
    Fixed { modulus: ModulusSpec },
    /// `Delta(delta) = factor * B * delta^alpha`
    HolderScaled { factor: f64, alpha: f64 },
}

impl ModulusRule {
    pub fn at_sup(&self, sup: f64) -> ModulusSpec {
        match self {
            ModulusRule::Fixed { modulus } => modulus.clone(),
            ModulusRule::HolderScaled { factor, alpha } => ModulusSpec::Holder { c: factor * sup, alpha: *alpha },
        }
    }
}

/// Analytic facts about the fixed-point density used by the certificates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityFacts {
    /// Best established bound on `||f_X||_inf`.
    pub sup: f64,
    /// Bound available before any computation.
    pub a_priori_sup: f64,
    pub modulus: ModulusRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBranch {
    pub weight: f64,
    pub branch: CoefficientBranch,
}

/// A perpetuity `X = AX + b` with `(A, b)` a finite mixture of Skorohod branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerpetuitySpec {
    pub name: String,
    branches: Vec<WeightedBranch>,
    support_hint: Option<Interval>,
    mean_x: f64,
    moments: MomentProvider,
    pub error_budget: ErrorBudget,
    pub density: Option<DensityFacts>,
    pub law: Option<KnownLaw>,
}

impl PerpetuitySpec {
    pub fn new(
        name: impl Into<String>,
        branches: Vec<WeightedBranch>,
        support_hint: Option<Interval>,
        mean_x: f64,
        moments: MomentProvider,
    ) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidSpec("at least one branch required".into()));
        }
        if branches.iter().any(|b| !(b.weight > 0.0 && b.weight <= 1.0)) {
            return Err(Error::InvalidSpec("branch weights must lie in (0, 1]".into()));
        }
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!("branch weights sum to {total}, not 1")));
        }
        for b in &branches {
            b.branch.validate()?;
        }
        if !mean_x.is_finite() {
            return Err(Error::InvalidSpec("mean must be finite".into()));
        }
        if let Some(h) = support_hint {
            if !h.contains(mean_x) {
                return Err(Error::InvalidSpec(format!(
                    "mean {mean_x} outside support hint [{}, {}]",
                    h.lo, h.hi
                )));
            }
        }
        Ok(PerpetuitySpec {
            name: name.into(),
            branches,
            support_hint,
            mean_x,
            moments,
            error_budget: ErrorBudget::Full,
            density: None,
            law: None,
        })
    }

    pub fn with_budget(mut self, budget: ErrorBudget) -> Self {
        self.error_budget = budget;
        self
    }

    pub fn with_density(mut self, facts: DensityFacts) -> Self {
        self.density = Some(facts);
        self
    }

    pub fn with_law(mut self, law: KnownLaw) -> Self {
        self.law = Some(law);
        self
    }

    pub fn branches(&self) -> &[WeightedBranch] {
        &self.branches
    }

    pub fn support_hint(&self) -> Option<Interval> {
        self.support_hint
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn moments(&self) -> &MomentProvider {
        &self.moments
    }

    /// Starting point `X_0 = floor(E X)`.
    pub fn x0(&self) -> f64 {
        self.mean_x.floor()
    }

    /// `||A||_p` under the exact mixture law.
    pub fn a_norm(&self, p: f64) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * b.branch.phi.abs_moment(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// `||b||_p` under the exact mixture law.
    pub fn b_norm(&self, p: f64) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * b.branch.psi.abs_moment(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    pub fn x_norm(&self, p: u32) -> f64 {
        self.moments.x_norm(p)
    }

    pub fn a_sup(&self) -> f64 {
        self.branches.iter().map(|b| b.branch.sup_phi).fold(0.0, f64::max)
    }

    pub fn b_sup(&self) -> f64 {
        self.branches.iter().map(|b| b.branch.sup_psi).fold(0.0, f64::max)
    }
}

/// Constants with `R_A(n) <= C_A/s(n)`, `R_b(n) <= C_b/s(n)`, `R_X(n) <= C_X/s(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorConstants {
    pub c_a: f64,
    pub c_b: f64,
    pub c_x: f64,
}

pub fn error_constants(spec: &PerpetuitySpec, sched: &DiscretisationSchedule) -> ErrorConstants {
    let c_u = sched.u_mode.error_factor();
    let (c_a, c_b) = spec.branches().iter().fold((0.0f64, 0.0f64), |(a, b), w| {
        (a.max(w.branch.lip_phi * c_u), b.max(w.branch.lip_psi * c_u))
    });
    ErrorConstants { c_a, c_b, c_x: 1.0 }
}

/// A uniform bound `xi >= ||A^(n)||_p` over all steps `n >= 1`.
pub fn xi_bound(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    let base = spec.a_norm(p as f64);
    let dominated = spec.branches().iter().all(|b| b.branch.norm_dominated(sched.u_mode));
    let xi = if dominated {
        base
    } else {
        // s(1) = 1 is the coarsest step, so the slack is C_A itself.
        base + error_constants(spec, sched).c_a / sched.s(1)? as f64
    };
    if xi >= 1.0 {
        return Err(Error::NotContraction { p, xi });
    }
    Ok(xi)
}
