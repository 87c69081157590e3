//! Named problem instances.

use super::*;
use crate::ax1;

/// `X = UX + U(1-U)`, the key-exchange limit of Quickselect.
///
/// The density facts carry the bootstrapped sup bound 3.561 (a-priori 18) and
/// the Hölder-1/2 modulus `9 B sqrt(delta)`.
pub fn quickselect() -> PerpetuitySpec {
    let branch = CoefficientBranch::new(CoefficientFn::Identity, CoefficientFn::UOneMinusU)
        .expect("builtin branch is valid");
    PerpetuitySpec::new(
        "quickselect",
        vec![WeightedBranch { weight: 1.0, branch }],
        Some(Interval { lo: 0.0, hi: 1.0 }),
        1.0 / 3.0,
        MomentProvider::QuickselectRecursion,
    )
    .expect("builtin spec is valid")
    .with_budget(ErrorBudget::RoundingOnly)
    .with_density(DensityFacts {
        sup: 3.561,
        a_priori_sup: crate::quickselect::density_bound_ledger().global_sup,
        modulus: ModulusRule::HolderScaled { factor: 9.0, alpha: 0.5 },
    })
}

/// `X = (1+U)/2 X + G (1-U)/2` with `G ~ Bernoulli(1/2)`; the fixed point is Beta(2,2).
///
/// `G` is carried exactly as two equally weighted branches.
pub fn interval_splitting() -> PerpetuitySpec {
    let with_g = CoefficientBranch::new(CoefficientFn::HalfOnePlus, CoefficientFn::affine(0.5, -0.5))
        .expect("builtin branch is valid");
    let without_g = CoefficientBranch::new(CoefficientFn::HalfOnePlus, CoefficientFn::constant(0.0))
        .expect("builtin branch is valid");
    PerpetuitySpec::new(
        "interval-splitting",
        vec![
            WeightedBranch { weight: 0.5, branch: with_g },
            WeightedBranch { weight: 0.5, branch: without_g },
        ],
        Some(Interval { lo: 0.0, hi: 1.0 }),
        0.5,
        MomentProvider::Beta { alpha: 2.0, beta: 2.0 },
    )
    .expect("builtin spec is valid")
    .with_law(KnownLaw::Beta { alpha: 2, beta: 2 })
    .with_density(DensityFacts {
        sup: 1.5,
        a_priori_sup: 1.5,
        modulus: ModulusRule::Fixed { modulus: ModulusSpec::Linear { c: 6.0 } },
    })
}

/// `X = AX + 1` with `A ~ U[0, q]`, `0 < q < 1`.
pub fn ax1_uniform(q: f64) -> Result<PerpetuitySpec> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidSpec(format!("ax1-uniform needs 0 < q < 1, got {q}")));
    }
    let branch = CoefficientBranch::new(CoefficientFn::affine(0.0, q), CoefficientFn::constant(1.0))?;
    let hi = 1.0 / (1.0 - q);
    let spec = PerpetuitySpec::new(
        format!("ax1-uniform({q})"),
        vec![WeightedBranch { weight: 1.0, branch }],
        Some(Interval { lo: 1.0, hi }),
        1.0 / (1.0 - q / 2.0),
        MomentProvider::SupportBound { lo: 1.0, hi },
    )?;
    let desc = ax1::ADensityDescriptor::from_spec(&spec)?;
    let sup = ax1::transfer_sup(&desc);
    let modulus = ax1::transfer_modulus(&desc, sup);
    Ok(spec.with_density(DensityFacts {
        sup,
        a_priori_sup: sup,
        modulus: ModulusRule::Fixed { modulus },
    }))
}

/// `X = aX + c` with constants `0 <= a < 1`, `c >= 0`; `X = c/(1-a)` almost surely.
pub fn degenerate(a: f64, c: f64) -> Result<PerpetuitySpec> {
    if !(0.0..1.0).contains(&a) || c < 0.0 {
        return Err(Error::InvalidSpec("degenerate preset needs 0 <= a < 1, c >= 0".into()));
    }
    let branch = CoefficientBranch::new(CoefficientFn::constant(a), CoefficientFn::constant(c))?;
    let m = c / (1.0 - a);
    Ok(PerpetuitySpec::new(
        format!("constant({a},{c})"),
        vec![WeightedBranch { weight: 1.0, branch }],
        Some(Interval { lo: m.floor(), hi: m }),
        m,
        MomentProvider::SupportBound { lo: m.floor(), hi: m },
    )?
    .with_law(KnownLaw::PointMass { at: m }))
}

/// Resolves `quickselect`, `interval-splitting` and `ax1-uniform(q)`.
pub fn by_name(name: &str) -> Result<PerpetuitySpec> {
    let name = name.trim();
    match name {
        "quickselect" => Ok(quickselect()),
        "interval-splitting" => Ok(interval_splitting()),
        "ax1-uniform" => ax1_uniform(0.5),
        _ => {
            if let Some(arg) = name.strip_prefix("ax1-uniform(").and_then(|r| r.strip_suffix(')')) {
                let q: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad ax1-uniform parameter {arg:?}")))?;
                ax1_uniform(q)
            } else {
                Err(Error::InvalidSpec(format!("unknown preset {name:?}")))
            }
        }
    }
}
