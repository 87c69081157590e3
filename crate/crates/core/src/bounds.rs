//! Certified error arithmetic: `l_p` recursion, Kolmogorov conversion,
//! density error and the sup-norm bootstrap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    error_constants, xi_bound, DiscretisationSchedule, ErrorBudget, ModulusRule, PerpetuitySpec, ScheduleKind,
};

/// A modulus of continuity `delta -> Delta(delta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModulusSpec {
    /// `c delta^alpha`
    Holder { c: f64, alpha: f64 },
    /// `c delta`
    Linear { c: f64 },
    /// Upper step function: `Delta(delta) = values[i]` for the first `deltas[i] >= delta`,
    /// infinite beyond the table.
    Tabulated { deltas: Vec<f64>, values: Vec<f64> },
    Sum { terms: Vec<ModulusSpec> },
}

impl ModulusSpec {
    pub fn evaluate(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 0.0;
        }
        match self {
            ModulusSpec::Holder { c, alpha } => c * delta.powf(*alpha),
            ModulusSpec::Linear { c } => c * delta,
            ModulusSpec::Tabulated { deltas, values } => match deltas.iter().position(|&d| d >= delta) {
                Some(i) => values[i],
                None => f64::INFINITY,
            },
            ModulusSpec::Sum { terms } => terms.iter().map(|t| t.evaluate(delta)).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("invalid modulus: {m}")));
        match self {
            ModulusSpec::Holder { c, alpha } => {
                if !(*c >= 0.0 && *alpha > 0.0 && *alpha <= 1.0) {
                    return bad("Holder needs c >= 0 and alpha in (0, 1]");
                }
            }
            ModulusSpec::Linear { c } => {
                if !(*c >= 0.0) {
                    return bad("Linear needs c >= 0");
                }
            }
            ModulusSpec::Tabulated { deltas, values } => {
                if deltas.is_empty()
                    || deltas.len() != values.len()
                    || deltas.windows(2).any(|w| w[0] >= w[1])
                    || values.windows(2).any(|w| w[0] > w[1])
                    || deltas[0] <= 0.0
                    || values[0] < 0.0
                {
                    return bad("table must be nonempty, increasing in delta and nondecreasing in value");
                }
            }
            ModulusSpec::Sum { terms } => {
                for t in terms {
                    t.validate()?;
                }
            }
        }
        Ok(())
    }

    /// `(c, alpha)` when the modulus is a single power law.
    fn power_law(&self) -> Option<(f64, f64)> {
        match self {
            ModulusSpec::Holder { c, alpha } => Some((*c, *alpha)),
            ModulusSpec::Linear { c } => Some((*c, 1.0)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpMode {
    DirectSum,
    ClosedFormPoly,
    ClosedFormExp,
}

/// Certified bound on `l_p(X_n, X)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpBound {
    pub p: u32,
    pub n: u32,
    pub value: f64,
    pub mode: LpMode,
    pub xi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovCertificate {
    pub n: u32,
    pub bound: f64,
    pub p_used: u32,
    pub density_sup_used: f64,
    pub lp: LpBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCertificate {
    pub n: u32,
    pub s: u64,
    pub delta: f64,
    pub d: u64,
    pub bound: f64,
    pub kolmogorov: f64,
    pub modulus: ModulusSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DChoice {
    Auto,
    Fixed(u64),
}

/// `K` in `K / s(n)`: the per-step discretisation error entering the recursion.
fn step_error_constant(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, p: u32) -> f64 {
    let c = error_constants(spec, sched);
    match spec.error_budget {
        ErrorBudget::Full => c.c_x + c.c_a * spec.x_norm(p) + c.c_b,
        ErrorBudget::RoundingOnly => c.c_x,
    }
}

/// `||X - X_0||_p <= ||X||_p + |X_0|`.
fn initial_distance(spec: &PerpetuitySpec, p: u32) -> f64 {
    spec.x_norm(p) + spec.x0().abs()
}

fn resolutions(sched: &DiscretisationSchedule, n: u32) -> Result<Vec<f64>> {
    (0..=n).map(|m| sched.s(m).map(|s| s as f64)).collect()
}

/// `xi^n ||X - X_0||_p + K sum_{i<n} xi^i / s(n - i)` with precomputed `s`.
fn lp_direct_with(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, n: u32, p: u32, s: &[f64]) -> Result<LpBound> {
    let xi = xi_bound(spec, sched, p)?;
    let k = step_error_constant(spec, sched, p);
    let mut tail = 0.0;
    let mut pow = 1.0;
    for i in 0..n as usize {
        tail += pow / s[n as usize - i];
        pow *= xi;
    }
    let value = pow * initial_distance(spec, p) + k * tail;
    Ok(LpBound { p, n, value, mode: LpMode::DirectSum, xi })
}

pub fn lp_bound_direct(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, n: u32, p: u32) -> Result<LpBound> {
    lp_direct_with(spec, sched, n, p, &resolutions(sched, n)?)
}

/// `C_r` with `l_p(X_n, X) <= C_r / n^r`.
pub fn rate_constant_poly(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, r: u32, p: u32) -> Result<f64> {
    let xi = xi_bound(spec, sched, p)?;
    let k = step_error_constant(spec, sched, p);
    let r_f = r as f64;
    let first = if xi == 0.0 {
        0.0
    } else {
        r_f.powf(r_f) * initial_distance(spec, p) / (std::f64::consts::E * (1.0 / xi).ln()).powf(r_f)
    };
    let r_fact: f64 = (1..=r).map(|i| i as f64).product();
    Ok(first + r_fact * k / (1.0 - xi).powi(r as i32 + 1))
}

/// `max_m gamma^m / s(m)`: slack from `s(1) = 1` and rounding `gamma^m`.
fn exp_rounding_factor(sched: &DiscretisationSchedule, gamma: f64) -> Result<f64> {
    let mut kappa = 1.0f64;
    for m in 0u32.. {
        let g = gamma.powi(m as i32);
        if g > 1e15 {
            break;
        }
        kappa = kappa.max(g / sched.s(m)? as f64);
    }
    Ok(kappa)
}

/// `C_gamma` with `l_p(X_n, X) <= C_gamma / gamma^n`.
///
/// The schedule's `s(m)` may fall below `gamma^m`; the geometric tail is
/// scaled by `max_m gamma^m / s(m)` so the bound holds for the realized `s`.
pub fn rate_constant_exp(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, gamma: f64, p: u32) -> Result<f64> {
    let xi = xi_bound(spec, sched, p)?;
    if !(gamma > 1.0) {
        return Err(Error::InvalidArgument("gamma must exceed 1".into()));
    }
    let limit = if xi == 0.0 { f64::INFINITY } else { 1.0 / xi };
    if gamma >= limit {
        return Err(Error::ScheduleTooAggressive { gamma, limit });
    }
    let k = step_error_constant(spec, sched, p);
    let kappa = exp_rounding_factor(sched, gamma)?;
    Ok(initial_distance(spec, p) + kappa * k / (1.0 - xi * gamma))
}

/// The closed-form bound for the schedule's own kind.
pub fn lp_bound_closed(spec: &PerpetuitySpec, sched: &DiscretisationSchedule, n: u32, p: u32) -> Result<LpBound> {
    let xi = xi_bound(spec, sched, p)?;
    let (value, mode) = match sched.kind {
        ScheduleKind::Polynomial { r } => {
            (rate_constant_poly(spec, sched, r, p)? / (n.max(1) as f64).powi(r as i32), LpMode::ClosedFormPoly)
        }
        ScheduleKind::Exponential { gamma } => {
            (rate_constant_exp(spec, sched, gamma, p)? / gamma.powi(n as i32), LpMode::ClosedFormExp)
        }
    };
    Ok(LpBound { p, n, value, mode, xi })
}

/// Fill–Janson: `rho <= ((p+1)^{1/p} ||f_X||_inf l_p)^{p/(p+1)}`, clamped to 1.
pub fn kolmogorov_from_lp(lp: &LpBound, density_sup: f64) -> KolmogorovCertificate {
    let p = lp.p as f64;
    let raw = ((p + 1.0).powf(1.0 / p) * density_sup * lp.value).powf(p / (p + 1.0));
    KolmogorovCertificate { n: lp.n, bound: raw.min(1.0), p_used: lp.p, density_sup_used: density_sup, lp: *lp }
}

/// Minimizes the Kolmogorov bound over `p_range`; ties go to the smallest `p`.
pub fn optimize_p(
    spec: &PerpetuitySpec,
    sched: &DiscretisationSchedule,
    n: u32,
    density_sup: f64,
    p_range: impl IntoIterator<Item = u32>,
) -> Result<KolmogorovCertificate> {
    if !(density_sup > 0.0) {
        return Err(Error::InvalidArgument("density sup must be positive".into()));
    }
    let s = resolutions(sched, n)?;
    let mut best: Option<KolmogorovCertificate> = None;
    for p in p_range {
        let lp = match lp_direct_with(spec, sched, n, p, &s) {
            Ok(lp) => lp,
            Err(Error::NotContraction { .. }) => continue,
            Err(e) => return Err(e),
        };
        let cert = kolmogorov_from_lp(&lp, density_sup);
        if best.is_none_or(|b| cert.bound < b.bound) {
            best = Some(cert);
        }
    }
    best.ok_or(Error::NoFeasibleP)
}

/// Default `p` search range.
pub const P_RANGE: std::ops::RangeInclusive<u32> = 1..=64;

/// `sup |f_n - f_X| <= rho/delta + Delta(delta)` with `delta = d/s`.
///
/// The automatic window search is confined to `delta <= 1`.
pub fn density_certificate(
    kol: &KolmogorovCertificate,
    modulus: &ModulusSpec,
    s: u64,
    d_choice: DChoice,
) -> Result<DensityCertificate> {
    modulus.validate()?;
    let rho = kol.bound;
    let objective = |d: u64| {
        let delta = d as f64 / s as f64;
        rho / delta + modulus.evaluate(delta)
    };
    let d = match d_choice {
        DChoice::Fixed(0) => return Err(Error::InvalidArgument("d must be >= 1".into())),
        DChoice::Fixed(d) => d,
        DChoice::Auto if rho == 0.0 => 1,
        DChoice::Auto => {
            let seed = match modulus.power_law() {
                Some((c, alpha)) if c > 0.0 => {
                    let delta = (rho / (c * alpha)).powf(1.0 / (alpha + 1.0));
                    let d_star = delta * s as f64;
                    if d_star < 1.0 {
                        return Err(Error::LatticeTooCoarse { optimal_d: d_star });
                    }
                    (d_star.round() as u64).clamp(1, s)
                }
                _ => doubling_seed(&objective, s),
            };
            descend(&objective, seed, s)
        }
    };
    let delta = d as f64 / s as f64;
    Ok(DensityCertificate {
        n: kol.n,
        s,
        delta,
        d,
        bound: objective(d),
        kolmogorov: rho,
        modulus: modulus.clone(),
    })
}

fn doubling_seed(objective: &impl Fn(u64) -> f64, d_max: u64) -> u64 {
    let mut d = 1u64;
    while 2 * d <= d_max && objective(2 * d) < objective(d) {
        d *= 2;
    }
    d
}

/// Walks to the local minimum of a unimodal objective over `1 <= d <= d_max`.
fn descend(objective: &impl Fn(u64) -> f64, mut d: u64, d_max: u64) -> u64 {
    while d > 1 && objective(d - 1) <= objective(d) {
        d -= 1;
    }
    while d < d_max && objective(d + 1) < objective(d) {
        d += 1;
    }
    d
}

/// One pass of the sup-norm bootstrap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStep {
    pub sup: f64,
    pub p: u32,
    pub kolmogorov: f64,
    pub delta: f64,
    pub d: u64,
    pub density_bound: f64,
    pub next_sup: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapResult {
    pub kolmogorov: KolmogorovCertificate,
    pub density: DensityCertificate,
    pub final_sup: f64,
    pub chain: Vec<BootstrapStep>,
}

pub const BOOTSTRAP_MAX_ITER: usize = 100;

/// Iterates `B -> observed_max + density_bound(B)` until it settles.
///
/// Every `B` in the chain is a valid bound on `||f_X||_inf`, so the returned
/// certificates (computed at the last accepted `B`) are valid too.
pub fn bootstrap_density_bound(
    spec: &PerpetuitySpec,
    sched: &DiscretisationSchedule,
    n: u32,
    modulus_family: &ModulusRule,
    initial_sup: f64,
    observed_max: f64,
    tol: f64,
) -> Result<BootstrapResult> {
    if initial_sup < observed_max {
        return Err(Error::InvalidArgument("initial sup bound is below the observed maximum".into()));
    }
    let s = sched.s(n)?;
    let mut b = initial_sup;
    let mut chain = Vec::new();
    for _ in 0..BOOTSTRAP_MAX_ITER {
        let kol = optimize_p(spec, sched, n, b, P_RANGE)?;
        let dens = density_certificate(&kol, &modulus_family.at_sup(b), s, DChoice::Auto)?;
        let next = observed_max + dens.bound;
        chain.push(BootstrapStep {
            sup: b,
            p: kol.p_used,
            kolmogorov: kol.bound,
            delta: dens.delta,
            d: dens.d,
            density_bound: dens.bound,
            next_sup: next,
        });
        if (next - b).abs() < tol || next >= b {
            return Ok(BootstrapResult { kolmogorov: kol, density: dens, final_sup: next.min(b), chain });
        }
        b = next;
    }
    Err(Error::NoConvergence { iterations: BOOTSTRAP_MAX_ITER })
}

/// The machine-readable certificate emitted by the command line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub preset: String,
    pub schedule: String,
    pub budget: ErrorBudget,
    pub n: u32,
    pub s: u64,
    pub p: u32,
    pub lp: f64,
    pub kolmogorov: f64,
    pub density_sup: f64,
    pub delta: Option<f64>,
    pub d: Option<u64>,
    pub density_bound: Option<f64>,
    pub density_sup_chain: Vec<f64>,
}

impl CertificateReport {
    pub fn new(
        spec: &PerpetuitySpec,
        sched: &DiscretisationSchedule,
        kol: &KolmogorovCertificate,
        density: Option<&DensityCertificate>,
        chain: Vec<f64>,
    ) -> Result<Self> {
        Ok(CertificateReport {
            preset: spec.name.clone(),
            schedule: sched.label(),
            budget: spec.error_budget,
            n: kol.n,
            s: sched.s(kol.n)?,
            p: kol.p_used,
            lp: kol.lp.value,
            kolmogorov: kol.bound,
            density_sup: kol.density_sup_used,
            delta: density.map(|d| d.delta),
            d: density.map(|d| d.d),
            density_bound: density.map(|d| d.bound),
            density_sup_chain: chain,
        })
    }
}

/// Certificates for `X_n` using the spec's own density facts.
///
/// `density_sup` overrides the spec's established sup-norm bound.
pub fn certify(
    spec: &PerpetuitySpec,
    sched: &DiscretisationSchedule,
    n: u32,
    density_sup: Option<f64>,
    d_choice: DChoice,
) -> Result<(KolmogorovCertificate, Option<DensityCertificate>, CertificateReport)> {
    let facts = spec.density.as_ref();
    let sup = density_sup
        .or(facts.map(|f| f.sup))
        .ok_or_else(|| Error::InvalidSpec(format!("{} carries no density sup bound", spec.name)))?;
    let kol = optimize_p(spec, sched, n, sup, P_RANGE)?;
    let dens = match facts {
        Some(f) => Some(density_certificate(&kol, &f.modulus.at_sup(sup), sched.s(n)?, d_choice)?),
        None => None,
    };
    let report = CertificateReport::new(spec, sched, &kol, dens.as_ref(), vec![sup])?;
    Ok((kol, dens, report))
}
