//! Experiment specifications and their execution.
//!
//! A spec is the complete, serializable parameter record of one command.
//! Outputs embed it, so feeding a JSON output back through `--config`
//! reruns the same experiment.

use dcsi_core::csi::{distortion_bounds, empirical_distortion, BitMatrix, CsiModel, CsiScalingMatrix};
use dcsi_core::doftheory::{
    dof_apzf, dof_apzf_hq, dof_bzf, dof_czf, dof_czf_hq, select_passive_set, DofReport, PassiveSet,
};
use dcsi_core::feedback_alloc::{allocation_sweep, sweep_csv, AllocScheme, AllocationPlan};
use dcsi_core::precoders::{PrecoderOptions, Scheme};
use dcsi_core::ratesim::{ergodic_curve, RateCurve, SimConfig};
use dcsi_core::RngSeed;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Rate(RateSpec),
    Dof(DofSpec),
    Alloc(AllocSpec),
    Quantcheck(QuantSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub k: usize,
    pub alpha: CsiScalingMatrix,
    pub model: CsiModel,
    #[serde(default)]
    pub bits: Option<BitMatrix>,
    #[serde(default)]
    pub nested: bool,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub passive: Option<PassiveSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DofSpec {
    pub alpha: CsiScalingMatrix,
    pub schemes: Vec<String>,
    #[serde(default)]
    pub passive: Option<PassiveSet>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocSpec {
    pub schemes: Vec<AllocScheme>,
    pub gamma: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSpec {
    pub k: Vec<usize>,
    pub bits: Vec<u32>,
    pub codebooks: usize,
    pub per_codebook: usize,
    pub seed: u64,
}

pub const DOF_SCHEMES: [&str; 5] = ["czf", "bzf", "apzf", "czf-hq", "apzf-hq"];

impl ExperimentSpec {
    pub fn seed(&self) -> u64 {
        match self {
            ExperimentSpec::Rate(s) => s.seed,
            ExperimentSpec::Dof(s) => s.seed,
            ExperimentSpec::Alloc(s) => s.seed,
            ExperimentSpec::Quantcheck(s) => s.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            ExperimentSpec::Rate(s) => {
                if s.schemes.is_empty() {
                    return Err(CliError::Usage("no schemes given".into()));
                }
                for &scheme in &s.schemes {
                    s.sim_config(scheme).validate()?;
                }
            }
            ExperimentSpec::Dof(s) => {
                if s.schemes.is_empty() {
                    return Err(CliError::Usage("no schemes given".into()));
                }
                for name in &s.schemes {
                    if !DOF_SCHEMES.contains(&name.as_str()) {
                        return Err(CliError::Usage(format!(
                            "unknown DoF scheme {name:?} (expected one of {})",
                            DOF_SCHEMES.join(", ")
                        )));
                    }
                }
                if let Some(p) = &s.passive {
                    p.validate(s.alpha.k())?;
                }
            }
            ExperimentSpec::Alloc(s) => {
                if s.schemes.is_empty() {
                    return Err(CliError::Usage("no schemes given".into()));
                }
                if s.gamma.is_empty() {
                    return Err(CliError::Usage("empty budget grid".into()));
                }
            }
            ExperimentSpec::Quantcheck(s) => {
                if s.k.is_empty() || s.bits.is_empty() {
                    return Err(CliError::Usage("quantcheck needs at least one K and one bit count".into()));
                }
                if s.k.iter().any(|&k| k < 2) {
                    return Err(CliError::Usage("quantcheck needs K >= 2".into()));
                }
                if s.codebooks == 0 || s.per_codebook == 0 {
                    return Err(CliError::Usage("quantcheck needs at least one trial".into()));
                }
            }
        }
        Ok(())
    }
}

impl RateSpec {
    fn sim_config(&self, scheme: Scheme) -> SimConfig {
        SimConfig {
            k: self.k,
            alpha: self.alpha.clone(),
            model: self.model,
            bits: self.bits.clone(),
            nested: self.nested,
            scheme,
            snr_db: self.snr_db.clone(),
            trials: self.trials,
            seed: self.seed,
            options: PrecoderOptions { beacon: None, passive: self.passive.clone() },
        }
    }
}

/// The result of running a spec, ready for rendering.
pub struct Outcome {
    pub csv: String,
    pub table: Option<String>,
    pub json: Value,
}

pub fn run(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    match spec {
        ExperimentSpec::Rate(s) => run_rate(s),
        ExperimentSpec::Dof(s) => run_dof(s),
        ExperimentSpec::Alloc(s) => run_alloc(s),
        ExperimentSpec::Quantcheck(s) => run_quantcheck(s),
    }
}

fn run_rate(s: &RateSpec) -> Result<Outcome, CliError> {
    let curves: Vec<RateCurve> =
        s.schemes.iter().map(|&scheme| ergodic_curve(&s.sim_config(scheme))).collect::<Result<_, _>>()?;
    let mut csv = format!("scheme,{}\n", RateCurve::csv_header(s.k));
    for c in &curves {
        for line in c.to_csv().lines().skip(1) {
            csv.push_str(&format!("{},{line}\n", c.scheme));
        }
    }
    Ok(Outcome { csv, table: None, json: serde_json::to_value(&curves).expect("curves serialize") })
}

pub fn dof_report(alpha: &CsiScalingMatrix, scheme: &str, passive: Option<&PassiveSet>) -> Result<DofReport, CliError> {
    let plain = || passive.cloned().unwrap_or_else(|| select_passive_set(alpha, false));
    Ok(match scheme {
        "czf" => dof_czf(alpha),
        "bzf" => dof_bzf(alpha),
        "apzf" => dof_apzf(alpha, &plain())?,
        "czf-hq" => dof_czf_hq(alpha),
        "apzf-hq" => dof_apzf_hq(alpha, passive)?,
        other => return Err(CliError::Usage(format!("unknown DoF scheme {other:?}"))),
    })
}

fn fmt_num(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    format!("{r}")
}

fn run_dof(s: &DofSpec) -> Result<Outcome, CliError> {
    let k = s.alpha.k();
    let reports: Vec<DofReport> =
        s.schemes.iter().map(|name| dof_report(&s.alpha, name, s.passive.as_ref())).collect::<Result<_, _>>()?;
    let mut csv = String::from("scheme,dof");
    for i in 1..=k {
        csv.push_str(&format!(",dof_user_{i}"));
    }
    csv.push_str(",passive_set\n");
    let mut rows = Vec::new();
    for r in &reports {
        let passive = r.passive_set.as_ref().map(|p| p.to_string()).unwrap_or_default();
        let users: Vec<String> = r.per_user.iter().map(|&x| fmt_num(x)).collect();
        csv.push_str(&format!("{},{},{},\"{passive}\"\n", r.scheme, fmt_num(r.total), users.join(",")));
        rows.push([r.scheme.clone(), fmt_num(r.total), users.join(" "), passive]);
    }
    let table = render_table(&["scheme", "dof", "per user", "passive set"], &rows);
    Ok(Outcome { csv, table: Some(table), json: serde_json::to_value(&reports).expect("reports serialize") })
}

fn run_alloc(s: &AllocSpec) -> Result<Outcome, CliError> {
    let mut plans: Vec<AllocationPlan> = Vec::new();
    for &scheme in &s.schemes {
        plans.extend(allocation_sweep(&s.gamma, scheme)?);
    }
    Ok(Outcome { csv: sweep_csv(&plans), table: None, json: serde_json::to_value(&plans).expect("plans serialize") })
}

fn run_quantcheck(s: &QuantSpec) -> Result<Outcome, CliError> {
    let mut csv = String::from(
        "k,bits,trials,mean_sin2,stderr_sin2,mean_lower,mean_upper,mean_neg_log2,stderr_neg_log2,log_lower,log_upper,status\n",
    );
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &k in &s.k {
        for &b in &s.bits {
            let seed = RngSeed::new(s.seed, ((k as u64) << 32) | b as u64);
            let stats = empirical_distortion(k, b, s.codebooks, s.per_codebook, seed)?;
            let bounds = distortion_bounds(k, b);
            // Bounds only hold for large codebooks; outside that regime the
            // cell is informational.
            let (lo, hi) = (bounds.mean_lower * 0.95, bounds.mean_upper * 1.05);
            let (llo, lhi) = (bounds.log_lower - 0.2, bounds.log_upper + 0.2);
            let status = if b == 0 || !bounds.large_enough {
                "INFO"
            } else if (lo..=hi).contains(&stats.mean_sin2) && (llo..=lhi).contains(&stats.mean_neg_log2) {
                "PASS"
            } else {
                "FAIL"
            };
            csv.push_str(&format!(
                "{k},{b},{},{},{},{lo},{hi},{},{},{llo},{lhi},{status}\n",
                stats.trials, stats.mean_sin2, stats.stderr_sin2, stats.mean_neg_log2, stats.stderr_neg_log2
            ));
            rows.push([
                k.to_string(),
                b.to_string(),
                format!("{:.4e}", stats.mean_sin2),
                format!("[{lo:.4e}, {hi:.4e}]"),
                format!("{:.3}", stats.mean_neg_log2),
                format!("[{llo:.3}, {lhi:.3}]"),
                status.to_string(),
            ]);
            cells.push(json!({
                "k": k,
                "bits": b,
                "status": status,
                "stats": stats,
                "bounds": bounds,
                "mean_window": [lo, hi],
                "log_window": [llo, lhi],
            }));
        }
    }
    let table = render_table(&["K", "B", "E[sin2]", "window", "E[-log2 sin2]", "window", "status"], &rows);
    Ok(Outcome { csv, table: Some(table), json: Value::Array(cells) })
}

fn render_table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}
