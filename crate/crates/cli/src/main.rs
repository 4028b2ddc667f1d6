//! `dcsi`: rate simulations, DoF tables, feedback allocation sweeps and
//! codebook checks from the command line.

mod grid;
mod output;
mod spec;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use dcsi_core::csi::{BitMatrix, CsiScalingMatrix};
use output::{json_document, write_atomic, Provenance};
use spec::{ExperimentSpec, DOF_SCHEMES};

const DEFAULT_SEED: u64 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(dcsi_core::Error),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(dcsi_core::Error::ResourceCap { .. }) => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<dcsi_core::Error> for CliError {
    fn from(e: dcsi_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "dcsi", version, about = "Distributed-CSI network MIMO precoding experiments")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, env = "DCSI_SEED")]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte-Carlo runs. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON spec whose keys override the flags. Accepts a previous JSON
    /// output, whose embedded spec is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ergodic rate curves against SNR.
    Rate(RateArgs),
    /// Closed-form DoF comparison for a CSI scaling matrix.
    Dof(DofArgs),
    /// Optimal feedback allocation over a budget grid.
    Alloc(AllocArgs),
    /// Random codebook distortion against the analytical bounds.
    Quantcheck(QuantArgs),
    /// Canned experiments.
    Repro {
        #[arg(value_enum)]
        target: Target,
        /// Override the Monte-Carlo trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Fig2,
    Fig3,
    Fig4,
    #[value(name = "appD")]
    AppD,
}

#[derive(Args, Debug)]
struct RateArgs {
    /// Number of users; inferred from --alpha or --bits.
    #[arg(long)]
    k: Option<usize>,
    /// CSI scaling matrix, rows separated by ';' (row i = user i, column j = TX j).
    #[arg(long)]
    alpha: Option<String>,
    /// Feedback bits per (user, TX) for the quantized models.
    #[arg(long)]
    bits: Option<String>,
    /// statistical, rvq or hier-rvq.
    #[arg(long)]
    model: Option<String>,
    /// Nested statistical noise across TXs.
    #[arg(long)]
    nested: bool,
    /// Comma-separated scheme list.
    #[arg(long)]
    schemes: Option<String>,
    /// SNR grid in dB: start:step:stop or a comma list.
    #[arg(long)]
    snr: Option<String>,
    /// Channel realizations per SNR point.
    #[arg(long)]
    trials: Option<usize>,
    /// Passive TX per stream, 1-based, comma-separated.
    #[arg(long)]
    passive: Option<String>,
}

#[derive(Args, Debug)]
struct DofArgs {
    /// CSI scaling matrix, rows separated by ';'.
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated subset of czf, bzf, apzf, czf-hq, apzf-hq.
    #[arg(long)]
    schemes: Option<String>,
    /// Passive TX per stream for apzf, 1-based, comma-separated.
    #[arg(long)]
    passive: Option<String>,
}

#[derive(Args, Debug)]
struct AllocArgs {
    /// czf, apzf or a comma list of both.
    #[arg(long)]
    scheme: Option<String>,
    /// Budget grid: start:step:stop or a comma list.
    #[arg(long)]
    gamma: Option<String>,
}

#[derive(Args, Debug)]
struct QuantArgs {
    /// Comma-separated user counts.
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated codebook sizes in bits.
    #[arg(long)]
    bits: Option<String>,
    /// Total trials per cell, split into codebooks of --per-codebook channels.
    #[arg(long)]
    trials: Option<usize>,
    /// Channels quantized with each codebook draw.
    #[arg(long)]
    per_codebook: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dcsi: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let (command, mut fields) = flag_fields(&cli.command)?;
    if let Some(seed) = cli.seed {
        fields.insert("seed".into(), json!(seed));
    }
    if let Some(path) = &cli.config {
        merge_config(&mut fields, path, command)?;
    }
    fields.entry("seed").or_insert(json!(DEFAULT_SEED));
    complete_rate_fields(command, &mut fields)?;
    fields.insert("command".into(), json!(command));
    let spec: ExperimentSpec =
        serde_json::from_value(Value::Object(fields)).map_err(|e| CliError::Usage(format!("invalid spec: {e}")))?;
    spec.validate()?;

    let has_table = matches!(spec, ExperimentSpec::Dof(_) | ExperimentSpec::Quantcheck(_));
    let format = cli.format.unwrap_or(if has_table { Format::Table } else { Format::Csv });
    if format == Format::Table && !has_table {
        return Err(CliError::Usage("table output is available for dof and quantcheck only".into()));
    }

    let outcome = spec::run(&spec)?;
    let prov = Provenance::of(&spec);
    let text = match format {
        Format::Csv => prov.header_line() + &outcome.csv,
        Format::Table => prov.header_line() + outcome.table.as_deref().unwrap_or(&outcome.csv),
        Format::Json => json_document(&prov, &spec, outcome.json),
    };
    match &cli.out {
        Some(path) => write_atomic(path, &text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn split_list(text: &str) -> Vec<String> {
    text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn grid(text: &str) -> Result<Value, CliError> {
    grid::parse_grid(text).map(|g| json!(g)).map_err(CliError::Usage)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    split_list(text).iter().map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad {what} {s:?}")))).collect()
}

/// Spec fields set by flags or defaults, plus the command tag.
fn flag_fields(command: &Command) -> Result<(&'static str, Map<String, Value>), CliError> {
    let mut m = Map::new();
    let name = match command {
        Command::Rate(a) => {
            m.insert("model".into(), json!(a.model.as_deref().unwrap_or("statistical")));
            m.insert("nested".into(), json!(a.nested));
            m.insert("schemes".into(), json!(split_list(a.schemes.as_deref().unwrap_or("czf,bzf,apzf,perfect-zf"))));
            m.insert("snr_db".into(), grid(a.snr.as_deref().unwrap_or("0:10:80"))?);
            m.insert("trials".into(), json!(a.trials.unwrap_or(2000)));
            for (key, v) in [("k", a.k.map(|k| json!(k))), ("alpha", a.alpha.as_ref().map(|s| json!(s)))] {
                if let Some(v) = v {
                    m.insert(key.into(), v);
                }
            }
            if let Some(b) = &a.bits {
                m.insert("bits".into(), json!(b));
            }
            if let Some(p) = &a.passive {
                m.insert("passive".into(), json!(p));
            }
            "rate"
        }
        Command::Dof(a) => {
            let schemes =
                a.schemes.as_deref().map(split_list).unwrap_or_else(|| DOF_SCHEMES.map(String::from).to_vec());
            m.insert("schemes".into(), json!(schemes));
            if let Some(al) = &a.alpha {
                m.insert("alpha".into(), json!(al));
            }
            if let Some(p) = &a.passive {
                m.insert("passive".into(), json!(p));
            }
            "dof"
        }
        Command::Alloc(a) => {
            m.insert("schemes".into(), json!(split_list(a.scheme.as_deref().unwrap_or("czf"))));
            if let Some(g) = &a.gamma {
                m.insert("gamma".into(), grid(g)?);
            }
            "alloc"
        }
        Command::Quantcheck(a) => {
            let per = a.per_codebook.unwrap_or(100);
            let trials = a.trials.unwrap_or(100_000);
            m.insert("k".into(), json!(parse_list::<usize>(a.k.as_deref().unwrap_or("2,3"), "user count")?));
            m.insert("bits".into(), json!(parse_list::<u32>(a.bits.as_deref().unwrap_or("4,8,12"), "bit count")?));
            m.insert("per_codebook".into(), json!(per));
            m.insert("codebooks".into(), json!(trials.div_ceil(per.max(1))));
            "quantcheck"
        }
        Command::Repro { target, trials } => {
            let trials = trials.unwrap_or(2000);
            match target {
                Target::Fig2 => {
                    m.insert("k".into(), json!(2));
                    m.insert("alpha".into(), json!("1,0.5;0,0.7"));
                    m.insert("model".into(), json!("statistical"));
                    m.insert("schemes".into(), json!(["perfect-zf", "czf", "bzf", "apzf"]));
                    m.insert("snr_db".into(), grid("0:10:80")?);
                    m.insert("trials".into(), json!(trials));
                    "rate"
                }
                Target::Fig3 => {
                    m.insert("k".into(), json!(2));
                    m.insert("alpha".into(), json!("1,1;1,1"));
                    m.insert("bits".into(), json!("6,3;3,6"));
                    m.insert("model".into(), json!("rvq"));
                    m.insert("schemes".into(), json!(["perfect-zf", "czf", "bzf", "apzf-heuristic", "apzf-qpower:3"]));
                    m.insert("snr_db".into(), grid("0:5:40")?);
                    m.insert("trials".into(), json!(trials));
                    "rate"
                }
                Target::Fig4 => {
                    m.insert("schemes".into(), json!(["czf", "apzf"]));
                    m.insert("gamma".into(), grid("0:0.5:40")?);
                    "alloc"
                }
                Target::AppD => {
                    let mut rows = vec![vec!["1"; 7]; 7];
                    rows[0][0] = "0";
                    rows[4][5] = "0.3";
                    let text: Vec<String> = rows.iter().map(|r| r.join(",")).collect();
                    m.insert("alpha".into(), json!(text.join(";")));
                    m.insert("schemes".into(), json!(DOF_SCHEMES));
                    "dof"
                }
            }
        }
    };
    Ok((name, m))
}

fn merge_config(fields: &mut Map<String, Value>, path: &PathBuf, command: &str) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let value = match value {
        Value::Object(mut o) if o.contains_key("spec") => o.remove("spec").unwrap_or(Value::Null),
        v => v,
    };
    let Value::Object(obj) = value else {
        return Err(CliError::Usage(format!("{}: config must be a JSON object", path.display())));
    };
    if let Some(c) = obj.get("command") {
        if c != command {
            return Err(CliError::Usage(format!("{}: config is for command {c}, not {command:?}", path.display())));
        }
    }
    fields.extend(obj);
    Ok(())
}

/// Fill `k` and `alpha` for rate specs from whichever of `alpha` and `bits`
/// is present.
fn complete_rate_fields(command: &str, fields: &mut Map<String, Value>) -> Result<(), CliError> {
    if command != "rate" {
        return Ok(());
    }
    let text = |key: &str| fields.get(key).and_then(Value::as_str).map(str::to_string);
    let alpha_k = match text("alpha") {
        Some(a) => Some(a.parse::<CsiScalingMatrix>()?.k()),
        None => None,
    };
    let bits_k = match text("bits") {
        Some(b) => Some(b.parse::<BitMatrix>()?.k()),
        None => None,
    };
    let k = match (alpha_k, bits_k) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Usage(format!("--alpha is {a}x{a} but --bits is {b}x{b}")));
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(CliError::Usage("rate needs --alpha or --bits".into())),
    };
    if alpha_k.is_none() {
        fields.insert("alpha".into(), json!(CsiScalingMatrix::uniform(k, 1.0)?.to_string()));
    }
    match fields.get("k").and_then(Value::as_u64) {
        Some(given) if given as usize != k => {
            return Err(CliError::Usage(format!("--k {given} does not match the {k}x{k} matrix")));
        }
        _ => {
            fields.insert("k".into(), json!(k));
        }
    }
    Ok(())
}
