//! `certificate.json` and the plain-text report.

use std::fmt::Write as _;

use perpetua::bounds::{BootstrapStep, CertificateReport};
use serde::{Deserialize, Serialize};

/// JSON Schema every emitted `certificate.json` satisfies.
pub const CERTIFICATE_SCHEMA: &str = include_str!("../schema/certificate.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateDocument {
    pub tool: String,
    pub version: String,
    pub certificate: CertificateReport,
    /// Why no density certificate was issued, when none was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<Measured>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_check: Option<McCheck>,
}

impl CertificateDocument {
    pub fn new(certificate: CertificateReport) -> Self {
        CertificateDocument {
            tool: "perpetua".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            certificate,
            density_note: None,
            bootstrap: None,
            run: None,
            measured: None,
            mc_check: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serialises") + "\n"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub initial_sup: f64,
    pub observed_max: f64,
    pub final_sup: f64,
    pub steps: Vec<BootstrapStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u32,
    pub s: u64,
    pub k_min: i64,
    pub atoms: usize,
    pub op_count: u64,
    pub op_count_model: u64,
    pub elapsed_seconds: f64,
    /// Largest `|total mass - 1|` before renormalisation.
    pub max_defect: f64,
    pub threads: Option<usize>,
}

/// Distances to the known law, when the preset has one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Measured {
    pub kolmogorov_to_law: Option<f64>,
    pub density_max_error: Option<f64>,
    /// Interval over which `density_max_error` was taken.
    pub density_error_window: Option<[f64; 2]>,
    pub density_observed_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub samples: usize,
    pub seed: u64,
    pub generator: String,
    pub truncation: usize,
    pub truncation_error: f64,
    pub confidence: f64,
    pub dkw_band: f64,
    pub ks_statistic: f64,
    /// certified bound + DKW band + truncation error
    pub allowed: f64,
    pub passed: bool,
}

/// Human-readable summary of a document.
pub fn report_text(doc: &CertificateDocument) -> String {
    let c = &doc.certificate;
    let mut out = String::new();
    let _ = writeln!(out, "problem        {}", c.preset);
    let _ = writeln!(out, "schedule       {}  (N = {}, s(N) = {}, budget {:?})", c.schedule, c.n, c.s, c.budget);
    let _ = writeln!(out, "l_p bound      {:.6e} at p = {}", c.lp, c.p);
    let _ = writeln!(out, "kolmogorov     <= {:.6e}  (density sup {})", c.kolmogorov, c.density_sup);
    match (c.delta, c.d, c.density_bound) {
        (Some(delta), Some(d), Some(b)) => {
            let _ = writeln!(out, "density error  <= {b:.6e}  (delta = {delta:.6e}, d = {d})");
        }
        _ => {
            let _ = writeln!(out, "density error  not certified{}", doc.density_note.as_deref().map(|n| format!(": {n}")).unwrap_or_default());
        }
    }
    if let Some(b) = &doc.bootstrap {
        let chain: Vec<String> = b.steps.iter().map(|s| format!("{:.4}", s.sup)).collect();
        let _ = writeln!(
            out,
            "bootstrap      {} -> {:.4} via observed max {}  [{}]",
            b.initial_sup,
            b.final_sup,
            b.observed_max,
            chain.join(", ")
        );
    }
    if let Some(r) = &doc.run {
        let _ = writeln!(
            out,
            "run            {} atoms, {} ops (model {}), {:.2} s, max defect {:.2e}",
            r.atoms, r.op_count, r.op_count_model, r.elapsed_seconds, r.max_defect
        );
    }
    if let Some(m) = &doc.measured {
        if let Some(k) = m.kolmogorov_to_law {
            let _ = writeln!(out, "measured       kolmogorov to known law {k:.6e}");
        }
        if let (Some(e), Some([lo, hi])) = (m.density_max_error, m.density_error_window) {
            let _ = writeln!(out, "measured       density error {e:.6e} on [{lo}, {hi}]");
        }
        if let Some(mx) = m.density_observed_max {
            let _ = writeln!(out, "measured       density max {mx:.6}");
        }
    }
    if let Some(mc) = &doc.mc_check {
        let _ = writeln!(
            out,
            "mc check       {}: ks {:.6e} <= {:.6e} ({} samples, seed {}, {})",
            if mc.passed { "pass" } else { "FAIL" },
            mc.ks_statistic,
            mc.allowed,
            mc.samples,
            mc.seed,
            mc.generator
        );
    }
    out
}
