use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use icbell::concat::enumerate_protocol;
use icbell::ic::{ic_quadratic_lhs, ic_verdict, VERDICT_TOL};
use icbell::ml::{
    block_diagonalize, ml_feasibility_numeric_with, ml_verdict_analytic, symmetrized_moment_matrix,
    witness_free, NumericOptions, OracleStatus,
};
use icbell::nsbox::{guessing_profile, validate_box, BoxDistribution, GuessingProfile};
use icbell::scan::{scan_region, write_csv, Family, FamilySpec, ScanOptions};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "icbell",
    version,
    about = "Quadratic IC / ML Bell inequalities for d2dd boxes"
)]
struct Cli {
    /// Tolerance for inequality verdicts.
    #[arg(long, global = true, default_value_t = VERDICT_TOL)]
    tol: f64,

    /// Exit with status 1 when a verdict is violated.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check normalization and nonsignaling of a box.
    Validate { path: PathBuf },
    /// Print the guessing profile of a box.
    Profile { path: PathBuf },
    /// Evaluate the quadratic inequalities on a profile.
    IcCheck {
        path: PathBuf,
        /// Also evaluate the aggregated criterion at this concatenation depth.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Macroscopic Locality verdict for a profile.
    MlCheck {
        path: PathBuf,
        /// Also run the alternating-projection feasibility search.
        #[arg(long)]
        numeric: bool,
    },
    /// Dump the blocks of the symmetrized moment matrix at the witness completion.
    Blocks { path: PathBuf },
    /// Scan a two-parameter profile family and write CSV.
    Scan {
        #[arg(long, default_value = "fig2")]
        family: String,
        /// Grid resolution as NxM (mu values x eta values).
        #[arg(long, default_value = "200x200")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        numeric: bool,
        #[arg(long, default_value = "0,1")]
        mu_range: String,
        #[arg(long, default_value = "0,1")]
        eta_range: String,
    },
    /// Exact error law of the concatenated protocol for one target index.
    Protocol {
        path: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        b: usize,
    },
}

/// Process outcome separate from input errors.
enum Status {
    Ok,
    Violated,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_box(path: &Path) -> Result<BoxDistribution> {
    BoxDistribution::from_json(&read(path)?)
        .with_context(|| format!("invalid box in {}", path.display()))
}

fn load_profile(path: &Path) -> Result<GuessingProfile> {
    GuessingProfile::from_json(&read(path)?)
        .with_context(|| format!("invalid profile in {}", path.display()))
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("grid must look like NxM, got `{s}`"))?;
    Ok((
        a.trim()
            .parse()
            .with_context(|| format!("bad grid size `{a}`"))?,
        b.trim()
            .parse()
            .with_context(|| format!("bad grid size `{b}`"))?,
    ))
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| anyhow!("range must look like LO,HI, got `{s}`"))?;
    Ok((
        a.trim()
            .parse()
            .with_context(|| format!("bad range bound `{a}`"))?,
        b.trim()
            .parse()
            .with_context(|| format!("bad range bound `{b}`"))?,
    ))
}

fn print(value: serde_json::Value) {
    println!("{value}");
}

fn run(cli: Cli) -> Result<Status> {
    let tol = cli.tol;
    match cli.command {
        Command::Validate { path } => {
            let b = load_box(&path)?;
            let report = validate_box(&b)?;
            print(serde_json::to_value(&report)?);
            if !report.is_valid() {
                bail!("{}: {}", path.display(), report.describe());
            }
            Ok(Status::Ok)
        }
        Command::Profile { path } => {
            let p = guessing_profile(&load_box(&path)?)
                .with_context(|| format!("box in {}", path.display()))?;
            println!("{}", p.to_json());
            Ok(Status::Ok)
        }
        Command::IcCheck { path, n } => {
            let p = load_profile(&path)?;
            let v = ic_verdict(&p, tol);
            let mut out = json!({
                "verdict": v.verdict,
                "per_m": v.per_m,
                "max_lhs": v.max_lhs,
            });
            let mut violated = !v.satisfied;
            if let Some(n) = n {
                let r = ic_quadratic_lhs(&p, n)?;
                violated |= !r.satisfied;
                out["quadratic"] = serde_json::to_value(&r)?;
            }
            print(out);
            Ok(if violated {
                Status::Violated
            } else {
                Status::Ok
            })
        }
        Command::MlCheck { path, numeric } => {
            let p = load_profile(&path)?;
            let v = ml_verdict_analytic(&p, tol);
            let mut out = json!({
                "verdict": v.verdict,
                "per_m": v.per_m,
                "max_lhs": v.max_lhs,
            });
            let mut violated = !v.satisfied;
            if numeric {
                let r = ml_feasibility_numeric_with(&p, &NumericOptions::default());
                violated |= r.status == OracleStatus::Infeasible;
                out["numeric"] = json!({
                    "status": r.status,
                    "residual": r.residual,
                    "blocks": r.blocks,
                });
            }
            print(out);
            Ok(if violated {
                Status::Violated
            } else {
                Status::Ok
            })
        }
        Command::Blocks { path } => {
            let p = load_profile(&path)?;
            let g = symmetrized_moment_matrix(&p, &witness_free(&p)?)?;
            println!("{}", block_diagonalize(&g)?.to_json());
            Ok(Status::Ok)
        }
        Command::Scan {
            family,
            grid,
            out,
            numeric,
            mu_range,
            eta_range,
        } => {
            let spec = FamilySpec {
                family: family.parse::<Family>()?,
                mu_range: parse_range(&mu_range)?,
                eta_range: parse_range(&eta_range)?,
                grid: parse_grid(&grid)?,
            };
            let records = scan_region(&spec, &ScanOptions { tol, numeric })?;
            let file =
                File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_csv(&records, &mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("cannot write {}", out.display()))?;
            Ok(Status::Ok)
        }
        Command::Protocol { path, n, b } => {
            let bx = load_box(&path)?;
            let e = enumerate_protocol(&bx, n, b)?;
            print(json!({ "d": e.d, "n": e.n, "b": b, "k": e.k, "probs": e.probs }));
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let strict = cli.strict;
    match run(cli) {
        Ok(Status::Violated) if strict => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
