use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use perpetua::bounds::{
    bootstrap_density_bound, density_certificate, optimize_p, CertificateReport, DChoice, DensityCertificate,
    KolmogorovCertificate, P_RANGE,
};
use perpetua::iterator::{op_count_model, run, run_with_progress};
use perpetua::oracle::{self, dkw_band};
use perpetua::{extract_density, kolmogorov_vs, Density, Error, IterationPlan, Pmf};

use crate::config::{resolve, ApproximateArgs, BenchArgs, CertifyArgs, RunConfig};
use crate::document::{report_text, BootstrapSummary, CertificateDocument, McCheck, Measured, RunSummary};
use crate::error::{io_error, CliError};

/// Confidence of the DKW band in the Monte-Carlo check.
pub const MC_CONFIDENCE: f64 = 0.999;
/// Stopping tolerance of the sup-norm bootstrap.
pub const BOOTSTRAP_TOL: f64 = 1e-4;

/// Certificates issued before any iteration.
#[derive(Clone, Debug)]
pub struct Certified {
    pub kolmogorov: KolmogorovCertificate,
    pub density: Option<DensityCertificate>,
    pub density_note: Option<String>,
}

/// Kolmogorov certificate at the optimal `p`, and the density certificate when the problem allows one.
pub fn certify_config(cfg: &RunConfig, n: u32) -> Result<Certified, CliError> {
    let spec = &cfg.spec;
    let sup = cfg.density_sup.or(spec.density.as_ref().map(|f| f.sup)).ok_or_else(|| {
        CliError::Config(format!("{} declares no density sup bound; pass --density-sup", spec.name))
    })?;
    let kolmogorov = optimize_p(spec, &cfg.sched, n, sup, P_RANGE)?;
    let (density, density_note) = match &spec.density {
        None => (None, Some("the problem declares no density modulus".to_string())),
        Some(facts) => match density_certificate(&kolmogorov, &facts.modulus.at_sup(sup), cfg.sched.s(n)?, cfg.d_choice) {
            Ok(d) => (Some(d), None),
            Err(e @ Error::LatticeTooCoarse { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        },
    };
    Ok(Certified { kolmogorov, density, density_note })
}

/// What `approximate` produced.
#[derive(Debug)]
pub struct Artifacts {
    pub out_dir: PathBuf,
    pub document: CertificateDocument,
    pub pmf: Pmf,
    pub density: Option<Density>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
}

/// Runs the iteration and writes `pmf.csv`, `density.csv`, `certificate.json`, `report.txt`.
///
/// Artifacts are written even when a measured check fails; the failure is
/// then returned so the exit code reflects it.
pub fn approximate(args: &ApproximateArgs) -> Result<Artifacts, CliError> {
    let cfg = resolve(&args.problem, args.out.as_deref(), args.mc_check, args.snapshot_every)?;
    let n = cfg.steps()?;
    let spec = &cfg.spec;
    // certificates first: a bad density sup should not cost a long run
    let cert = certify_config(&cfg, n)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_error(&cfg.out_dir, e))?;

    let mut plan = IterationPlan::new(spec.clone(), cfg.sched, n);
    plan.threads = cfg.threads;
    plan.snapshot_every = cfg.snapshot_every;
    let quiet = args.quiet;
    let result = run_with_progress::<f64>(&plan, |p| {
        if !quiet {
            eprintln!("step {:>4}/{n}  s = {:<10} ops = {:<14} {:.1} s", p.step, p.s, p.op_count, p.elapsed.as_secs_f64());
        }
    })?;
    let pmf = result.final_pmf;

    let mut density_note = cert.density_note.clone();
    let d = match (&cert.density, cfg.d_choice) {
        (Some(dc), _) => Some(dc.d),
        (None, DChoice::Fixed(d)) => Some(d),
        (None, DChoice::Auto) => None,
    };
    let density = match d.map(|d| extract_density(&pmf, d)) {
        Some(Ok(est)) => Some(est),
        Some(Err(e @ Error::WindowExceedsSupport { .. })) => {
            density_note = Some(e.to_string());
            None
        }
        Some(Err(e)) => return Err(e.into()),
        None => None,
    };

    let report = CertificateReport::new(spec, &cfg.sched, &cert.kolmogorov, cert.density.as_ref(), vec![cert.kolmogorov.density_sup_used])?;
    let mut doc = CertificateDocument::new(report);
    doc.density_note = density_note;
    doc.run = Some(RunSummary {
        steps: n,
        s: pmf.s(),
        k_min: pmf.k_min(),
        atoms: pmf.atoms(),
        op_count: result.op_count,
        op_count_model: op_count_model(spec, &cfg.sched, n)?,
        elapsed_seconds: result.elapsed.as_secs_f64(),
        max_defect: result.defects.iter().fold(0.0, |m, d| m.max(d.abs())),
        threads: cfg.threads,
    });
    doc.measured = measure(&cfg, &pmf, density.as_ref());
    if let Some(mc) = &cfg.mc_check {
        let samples = oracle::sample(spec, mc)?;
        let band = dkw_band(mc.samples, MC_CONFIDENCE);
        let ks = kolmogorov_vs(&pmf, &samples.ecdf());
        let allowed = cert.kolmogorov.bound + band + samples.truncation_error;
        doc.mc_check = Some(McCheck {
            samples: mc.samples,
            seed: mc.rng_seed,
            generator: oracle::GENERATOR.into(),
            truncation: samples.truncation,
            truncation_error: samples.truncation_error,
            confidence: MC_CONFIDENCE,
            dkw_band: band,
            ks_statistic: ks,
            allowed,
            passed: ks <= allowed,
        });
    }

    let out = &cfg.out_dir;
    write_with(&out.join("pmf.csv"), |w| pmf.write_csv(w))?;
    for (step, snap) in &result.snapshots {
        write_with(&out.join(format!("pmf_step{step}.csv")), |w| snap.write_csv(w))?;
    }
    if let Some(est) = &density {
        write_with(&out.join("density.csv"), |w| est.write_csv(w))?;
    }
    write_with(&out.join("certificate.json"), |w| w.write_all(doc.to_json().as_bytes()))?;
    write_with(&out.join("report.txt"), |w| w.write_all(report_text(&doc).as_bytes()))?;

    let artifacts = Artifacts { out_dir: out.clone(), document: doc, pmf, density };
    check_measurements(&artifacts.document)?;
    Ok(artifacts)
}

/// Distances to the known law and the observed density maximum.
fn measure(cfg: &RunConfig, pmf: &Pmf, density: Option<&Density>) -> Option<Measured> {
    let law = cfg.spec.law;
    if law.is_none() && density.is_none() {
        return None;
    }
    let mut m = Measured {
        kolmogorov_to_law: law.map(|law| kolmogorov_vs(pmf, &|x: f64| law.cdf(x))),
        density_observed_max: density.map(|d| d.max()),
        ..Measured::default()
    };
    // the finite-difference estimate is biased where the density is cut off, so trim 5% per side
    if let (Some(law), Some(est), Some(hint)) = (law, density, cfg.spec.support_hint()) {
        let trim = 0.05 * (hint.hi - hint.lo);
        let (lo, hi) = (hint.lo + trim, hint.hi - trim);
        let err = est
            .iter()
            .filter(|&(_, x, _)| lo <= x && x <= hi)
            .filter_map(|(_, x, v)| law.pdf(x).map(|f| (v - f).abs()))
            .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
        if err.is_some() {
            m.density_max_error = err;
            m.density_error_window = Some([lo, hi]);
        }
    }
    Some(m)
}

fn check_measurements(doc: &CertificateDocument) -> Result<(), CliError> {
    let bound = doc.certificate.kolmogorov;
    if let Some(k) = doc.measured.as_ref().and_then(|m| m.kolmogorov_to_law) {
        if k > bound {
            return Err(CliError::Numeric(format!("measured distance {k:e} to the known law exceeds the certified {bound:e}")));
        }
    }
    if let Some(mc) = &doc.mc_check {
        if !mc.passed {
            return Err(CliError::Numeric(format!(
                "Monte-Carlo KS statistic {:e} exceeds the allowed {:e}",
                mc.ks_statistic, mc.allowed
            )));
        }
    }
    Ok(())
}

/// Certificate without iterating; `--observed-max` runs the sup-norm bootstrap first.
pub fn certify(args: &CertifyArgs) -> Result<CertificateDocument, CliError> {
    let cfg = resolve(&args.problem, args.out.as_deref(), None, None)?;
    let n = cfg.steps()?;
    let spec = &cfg.spec;
    let doc = match args.observed_max {
        Some(observed) => {
            let facts = spec
                .density
                .as_ref()
                .ok_or_else(|| CliError::Config(format!("{} declares no density facts to bootstrap", spec.name)))?;
            if !(observed >= 0.0 && observed.is_finite()) {
                return Err(CliError::Config("--observed-max must be nonnegative".into()));
            }
            let initial = cfg.density_sup.unwrap_or(facts.a_priori_sup);
            let res = bootstrap_density_bound(spec, &cfg.sched, n, &facts.modulus, initial, observed, BOOTSTRAP_TOL)?;
            let chain = res.chain.iter().map(|s| s.sup).collect();
            let report = CertificateReport::new(spec, &cfg.sched, &res.kolmogorov, Some(&res.density), chain)?;
            let mut doc = CertificateDocument::new(report);
            doc.bootstrap = Some(BootstrapSummary {
                initial_sup: initial,
                observed_max: observed,
                final_sup: res.final_sup,
                steps: res.chain,
            });
            doc
        }
        None => {
            let cert = certify_config(&cfg, n)?;
            let report = CertificateReport::new(
                spec,
                &cfg.sched,
                &cert.kolmogorov,
                cert.density.as_ref(),
                vec![cert.kolmogorov.density_sup_used],
            )?;
            let mut doc = CertificateDocument::new(report);
            doc.density_note = cert.density_note;
            doc
        }
    };
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write_with(&dir.join("certificate.json"), |w| w.write_all(doc.to_json().as_bytes()))?;
    }
    Ok(doc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: u32,
    pub s: u64,
    pub op_count: u64,
    pub model: u64,
    pub seconds: f64,
}

/// Runs each rung of the ladder; fails if a measured op count differs from the model.
pub fn bench(args: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    let cfg = resolve(&args.problem, None, None, None)?;
    if args.ladder.is_empty() || args.ladder.contains(&0) {
        return Err(CliError::Config("--ladder needs positive step counts".into()));
    }
    let mut rows = Vec::with_capacity(args.ladder.len());
    for &n in &args.ladder {
        let mut plan = IterationPlan::new(cfg.spec.clone(), cfg.sched, n);
        plan.threads = cfg.threads;
        let start = Instant::now();
        let result = run::<f64>(&plan)?;
        rows.push(BenchRow {
            n,
            s: cfg.sched.s(n)?,
            op_count: result.op_count,
            model: op_count_model(&cfg.spec, &cfg.sched, n)?,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

/// Table with per-rung scaling: `d ln(ops) / d ln(N)` and `d ln(ops) / dN`.
pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:>6} {:>12} {:>16} {:>16} {:>10} {:>9} {:>11} {:>11}\n",
        "N", "s(N)", "op_count", "model", "seconds", "ns/op", "dlnops/dlnN", "dlnops/dN"
    );
    for (i, r) in rows.iter().enumerate() {
        let (log_slope, lin_slope) = match i.checked_sub(1).map(|j| &rows[j]) {
            Some(prev) if prev.n != r.n && prev.op_count > 0 => {
                let dl = (r.op_count as f64 / prev.op_count as f64).ln();
                (
                    format!("{:.3}", dl / (r.n as f64 / prev.n as f64).ln()),
                    format!("{:.4}", dl / (r.n as f64 - prev.n as f64)),
                )
            }
            _ => ("-".into(), "-".into()),
        };
        out.push_str(&format!(
            "{:>6} {:>12} {:>16} {:>16} {:>10.3} {:>9.3} {:>11} {:>11}\n",
            r.n,
            r.s,
            r.op_count,
            r.model,
            r.seconds,
            r.seconds * 1e9 / r.op_count.max(1) as f64,
            log_slope,
            lin_slope
        ));
    }
    out
}

pub fn check_bench(rows: &[BenchRow]) -> Result<(), CliError> {
    match rows.iter().find(|r| r.op_count != r.model) {
        Some(r) => Err(CliError::Numeric(format!("N = {}: measured {} ops, model {}", r.n, r.op_count, r.model))),
        None => Ok(()),
    }
}
