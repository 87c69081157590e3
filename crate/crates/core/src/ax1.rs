//! Density bounds for `X = AX + 1` with `A >= 0`, transferred from the law of `A`.

use crate::bounds::{certify, DChoice, DensityCertificate, KolmogorovCertificate, ModulusSpec};
use crate::error::{Error, Result};
use crate::iterator::{run, IterationPlan};
use crate::lattice::{extract_density, DensityEstimate, LatticePmf};
use crate::model::{presets, DiscretisationSchedule, PerpetuitySpec};

/// The density of `A`: sup-norm, modulus of its jump-free part, and jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct ADensityDescriptor {
    pub sup: f64,
    pub modulus_continuous: ModulusSpec,
    /// `(location, height)` with `location > 0`, locations distinct.
    pub jumps: Vec<(f64, f64)>,
}

impl ADensityDescriptor {
    pub fn new(sup: f64, modulus_continuous: ModulusSpec, jumps: Vec<(f64, f64)>) -> Result<Self> {
        if !(sup >= 0.0) {
            return Err(Error::InvalidSpec("density sup must be nonnegative".into()));
        }
        modulus_continuous.validate()?;
        for (i, (loc, _)) in jumps.iter().enumerate() {
            if !(*loc > 0.0) {
                return Err(Error::InvalidSpec("jump locations must be positive".into()));
            }
            if jumps[..i].iter().any(|(l, _)| l == loc) {
                return Err(Error::InvalidSpec(format!("duplicate jump location {loc}")));
            }
        }
        Ok(ADensityDescriptor { sup, modulus_continuous, jumps })
    }

    /// Reads the law of `A` off a spec with `b = 1` and affine nonconstant `phi` branches.
    ///
    /// Each branch makes `A` uniform on `phi([0,1])`, so `f_A` is piecewise
    /// constant: its jump-free part is constant and all variation sits in jumps.
    pub fn from_spec(spec: &PerpetuitySpec) -> Result<Self> {
        let mut pieces = Vec::new();
        for wb in spec.branches() {
            if wb.branch.psi.as_affine() != Some((1.0, 0.0)) {
                return Err(Error::InvalidSpec("this class needs b = 1".into()));
            }
            let (a, b) = wb
                .branch
                .phi
                .as_affine()
                .ok_or_else(|| Error::InvalidSpec("A must be affine in u".into()))?;
            if b == 0.0 {
                return Err(Error::InvalidSpec("A has an atom; a density is required".into()));
            }
            let (lo, hi) = (a.min(a + b), a.max(a + b));
            if lo < 0.0 {
                return Err(Error::InvalidSpec("A must be nonnegative".into()));
            }
            pieces.push((lo, hi, wb.weight / b.abs()));
        }
        let density = |x: f64| -> f64 {
            pieces.iter().filter(|(lo, hi, _)| *lo <= x && x < *hi).map(|(_, _, h)| h).sum()
        };
        let mut points: Vec<f64> = pieces.iter().flat_map(|(lo, hi, _)| [*lo, *hi]).collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let sup = points.iter().map(|&x| density(x)).fold(0.0, f64::max);
        let jumps = points
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| {
                let left: f64 = pieces.iter().filter(|(lo, hi, _)| *lo < x && x <= *hi).map(|(_, _, h)| h).sum();
                (x, density(x) - left)
            })
            .filter(|(_, h)| *h != 0.0)
            .collect();
        ADensityDescriptor::new(sup, ModulusSpec::Linear { c: 0.0 }, jumps)
    }
}

/// `||f_X||_inf <= ||f_A||_inf`.
pub fn transfer_sup(desc: &ADensityDescriptor) -> f64 {
    desc.sup
}

/// `Delta_X(delta) <= Delta_A(delta) + ||f_X||_inf sum |jump| delta / location`.
pub fn transfer_modulus(desc: &ADensityDescriptor, density_sup_x: f64) -> ModulusSpec {
    let slope: f64 = density_sup_x * desc.jumps.iter().map(|(loc, h)| h.abs() / loc).sum::<f64>();
    if slope == 0.0 {
        return desc.modulus_continuous.clone();
    }
    match &desc.modulus_continuous {
        ModulusSpec::Linear { c } => ModulusSpec::Linear { c: c + slope },
        other => ModulusSpec::Sum { terms: vec![other.clone(), ModulusSpec::Linear { c: slope }] },
    }
}

/// Output of [`run_ax1_preset`].
#[derive(Clone, Debug)]
pub struct Ax1Run {
    pub spec: PerpetuitySpec,
    pub pmf: LatticePmf<f64>,
    pub kolmogorov: KolmogorovCertificate,
    pub density_certificate: DensityCertificate,
    pub density: DensityEstimate<f64>,
}

/// Iterates `A ~ U[0, q]`, `b = 1` and certifies with the transferred constants.
pub fn run_ax1_preset(q: f64, sched: DiscretisationSchedule, n: u32, threads: Option<usize>) -> Result<Ax1Run> {
    let spec = presets::ax1_uniform(q)?;
    let mut plan = IterationPlan::new(spec.clone(), sched, n);
    plan.threads = threads;
    let pmf = run::<f64>(&plan)?.final_pmf;
    let (kolmogorov, density_certificate, _) = certify(&spec, &sched, n, None, DChoice::Auto)?;
    let density_certificate = density_certificate.expect("ax1 presets carry density facts");
    let density = extract_density(&pmf, density_certificate.d)?;
    Ok(Ax1Run { spec, pmf, kolmogorov, density_certificate, density })
}
