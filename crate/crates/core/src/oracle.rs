//! Monte-Carlo ground truth from the backward series `X = b_1 + A_1 b_2 + A_1 A_2 b_3 + ...`.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{fmt17, CdfReference};
use crate::model::PerpetuitySpec;

/// Generator identity recorded alongside simulated output.
pub const GENERATOR: &str = "xoshiro256++";
/// Environment variable overriding the default seed.
pub const SEED_ENV: &str = "PERPETUA_SEED";
pub const DEFAULT_SEED: u64 = 0x5eed_2024_ca11_ab1e;
/// Target `L_1` truncation error of the series.
pub const TRUNCATION_TOL: f64 = 1e-6;
const BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    /// Series length; `None` derives it from [`TRUNCATION_TOL`].
    pub truncation: Option<usize>,
    pub rng_seed: u64,
}

impl McConfig {
    pub fn new(samples: usize, rng_seed: u64) -> Self {
        McConfig { samples, truncation: None, rng_seed }
    }

    /// Uses `PERPETUA_SEED` when set and parseable.
    pub fn from_env(samples: usize) -> Self {
        let seed = std::env::var(SEED_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_SEED);
        McConfig::new(samples, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McSamples {
    pub values: Vec<f64>,
    pub truncation: usize,
    /// `||A||_1^M ||b||_1 / (1 - ||A||_1)`
    pub truncation_error: f64,
    pub seed: u64,
}

impl McSamples {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Standard error of the sample mean.
    pub fn std_error(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        let var = self.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (var / n).sqrt()
    }

    pub fn ecdf(&self) -> EmpiricalCdf {
        EmpiricalCdf::new(self.values.clone())
    }

    /// Single-column CSV with header `x`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x")?;
        for v in &self.values {
            writeln!(w, "{}", fmt17(*v))?;
        }
        Ok(())
    }
}

/// Smallest `M` with `||A||_1^M ||b||_1 / (1 - ||A||_1) <= tol`.
pub fn truncation_length(spec: &PerpetuitySpec, tol: f64) -> Result<(usize, f64)> {
    let a = spec.a_norm(1.0);
    let b = spec.b_norm(1.0);
    if !(a < 1.0) {
        return Err(Error::NotContraction { p: 1, xi: a });
    }
    let err = |m: usize| a.powi(m as i32) * b / (1.0 - a);
    if b == 0.0 || a == 0.0 {
        return Ok((1, err(1)));
    }
    let mut m = ((tol * (1.0 - a) / b).ln() / a.ln()).ceil().max(1.0) as usize;
    while err(m) > tol {
        m += 1;
    }
    Ok((m, err(m)))
}

/// Draws from the truncated backward series; block `i` uses the seed's stream jumped `i` times.
pub fn sample(spec: &PerpetuitySpec, cfg: &McConfig) -> Result<McSamples> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let (truncation, truncation_error) = match cfg.truncation {
        Some(m) => {
            let a = spec.a_norm(1.0);
            (m, a.powi(m as i32) * spec.b_norm(1.0) / (1.0 - a))
        }
        None => truncation_length(spec, TRUNCATION_TOL)?,
    };
    let branches = spec.branches();
    let cumulative: Vec<f64> = branches
        .iter()
        .scan(0.0, |acc, b| {
            *acc += b.weight;
            Some(*acc)
        })
        .collect();
    let blocks = cfg.samples.div_ceil(BLOCK);
    let values: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|blk| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.rng_seed);
            for _ in 0..blk {
                rng.jump();
            }
            let count = BLOCK.min(cfg.samples - blk * BLOCK);
            let cumulative = &cumulative;
            (0..count)
                .map(move |_| {
                    let mut x = 0.0;
                    let mut prod = 1.0;
                    for _ in 0..truncation {
                        let pick: f64 = rng.gen();
                        let i = cumulative.iter().position(|&c| pick < c).unwrap_or(branches.len() - 1);
                        let u: f64 = rng.gen();
                        let br = &branches[i].branch;
                        x += prod * br.psi.eval(u);
                        prod *= br.phi.eval(u);
                        if prod == 0.0 {
                            break;
                        }
                    }
                    x
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(McSamples { values, truncation, truncation_error, seed: cfg.rng_seed })
}

/// Half-width of the DKW band: `sqrt(ln(2/(1-confidence)) / (2 samples))`.
pub fn dkw_band(samples: usize, confidence: f64) -> f64 {
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * samples as f64)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        EmpiricalCdf { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Kolmogorov–Smirnov statistic against a continuous distribution function.
    pub fn ks_statistic(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let fx = f(x);
                ((i + 1) as f64 / n - fx).max(fx - i as f64 / n)
            })
            .fold(0.0, f64::max)
    }
}

impl CdfReference for EmpiricalCdf {
    fn at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    fn left_limit(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v < x) as f64 / self.sorted.len() as f64
    }
}
