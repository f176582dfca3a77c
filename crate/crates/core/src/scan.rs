//! Two-parameter slices of the profile space and CSV output for plotting the
//! region allowed by the quadratic inequalities.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ic::{ic_verdict, VERDICT_TOL};
use crate::ml::{ml_feasibility_numeric_with, ml_verdict_analytic, NumericOptions, OracleStatus};
use crate::nsbox::GuessingProfile;

pub const CSV_HEADER: &str =
    "mu,eta,lhs_m1,lhs_m2,ic_satisfied,ml_analytic,ml_numeric,oracle_status";

const SIMPLEX_TOL: f64 = 1e-12;

/// `d = 4` slice with the same column for both settings:
/// `p(0) = mu`, `p(1) = p(2) = eta/2`, `p(3) = 1 - mu - eta`.
pub fn figure2_family(mu: f64, eta: f64) -> Result<GuessingProfile> {
    if !(mu >= 0.0 && eta >= 0.0 && mu + eta <= 1.0 + SIMPLEX_TOL) {
        return Err(Error::Range(format!(
            "(mu, eta) = ({mu}, {eta}) outside the simplex mu, eta >= 0, mu + eta <= 1"
        )));
    }
    let rest = (1.0 - mu - eta).max(0.0);
    GuessingProfile::symmetric(vec![mu, eta / 2.0, eta / 2.0, rest])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Fig2,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Family::Fig2),
            other => Err(Error::Validation(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub family: Family,
    pub mu_range: (f64, f64),
    pub eta_range: (f64, f64),
    /// Number of `mu` and `eta` values.
    pub grid: (usize, usize),
}

impl FamilySpec {
    pub fn fig2(grid: (usize, usize)) -> Self {
        Self {
            family: Family::Fig2,
            mu_range: (0.0, 1.0),
            eta_range: (0.0, 1.0),
            grid,
        }
    }

    pub fn d(&self) -> usize {
        match self.family {
            Family::Fig2 => 4,
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = self.grid;
        if n == 0 || m == 0 {
            return Err(Error::Validation(
                "grid must have at least one point per axis".into(),
            ));
        }
        for (name, (lo, hi)) in [("mu", self.mu_range), ("eta", self.eta_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Validation(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        Ok(())
    }

    /// Grid coordinate `idx` of `count` over `range`; a single point sits at
    /// the lower end.
    pub fn coordinate(range: (f64, f64), count: usize, idx: usize) -> f64 {
        if count == 1 {
            range.0
        } else {
            range.0 + (range.1 - range.0) * idx as f64 / (count - 1) as f64
        }
    }

    /// Grid points inside the simplex, `mu` outer and `eta` inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let (n, m) = self.grid;
        let mut pts = Vec::new();
        for a in 0..n {
            let mu = Self::coordinate(self.mu_range, n, a);
            for b in 0..m {
                let eta = Self::coordinate(self.eta_range, m, b);
                if mu >= 0.0 && eta >= 0.0 && mu + eta <= 1.0 + SIMPLEX_TOL {
                    pts.push((mu, eta));
                }
            }
        }
        pts
    }

    pub fn profile(&self, mu: f64, eta: f64) -> Result<GuessingProfile> {
        match self.family {
            Family::Fig2 => figure2_family(mu, eta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRecord {
    pub mu: f64,
    pub eta: f64,
    pub per_m: Vec<f64>,
    pub ic_satisfied: bool,
    pub ml_analytic: bool,
    pub ml_numeric: Option<bool>,
    pub oracle_status: Option<OracleStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub tol: f64,
    /// Run the numeric feasibility search at every point.
    pub numeric: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tol: VERDICT_TOL,
            numeric: false,
        }
    }
}

fn evaluate(spec: &FamilySpec, mu: f64, eta: f64, opts: &ScanOptions) -> Result<ScanRecord> {
    let profile = spec.profile(mu, eta)?;
    let ic = ic_verdict(&profile, opts.tol);
    let ml = ml_verdict_analytic(&profile, opts.tol);
    if ic.satisfied != ml.satisfied {
        return Err(Error::Structural(format!(
            "IC and ML verdicts disagree at mu = {mu}, eta = {eta}"
        )));
    }
    let (ml_numeric, oracle_status) = if opts.numeric {
        let res = ml_feasibility_numeric_with(&profile, &NumericOptions::default());
        let flag = match res.status {
            OracleStatus::Feasible => Some(true),
            OracleStatus::Infeasible => Some(false),
            OracleStatus::BoundaryIndeterminate => None,
        };
        (flag, Some(res.status))
    } else {
        (None, None)
    };
    Ok(ScanRecord {
        mu,
        eta,
        per_m: ic.per_m,
        ic_satisfied: ic.satisfied,
        ml_analytic: ml.satisfied,
        ml_numeric,
        oracle_status,
    })
}

/// Evaluates every grid point in parallel; records come back in grid order.
pub fn scan_region(spec: &FamilySpec, opts: &ScanOptions) -> Result<Vec<ScanRecord>> {
    spec.validate()?;
    spec.points()
        .into_par_iter()
        .map(|(mu, eta)| evaluate(spec, mu, eta, opts))
        .collect()
}

/// Formats with 12 significant digits, fixed notation for moderate
/// magnitudes and trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".to_string()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

pub fn write_csv<W: Write>(records: &[ScanRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        let lhs = |i: usize| {
            r.per_m
                .get(i)
                .map_or_else(|| "na".to_string(), |v| format_sig(*v))
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            format_sig(r.mu),
            format_sig(r.eta),
            lhs(0),
            lhs(1),
            r.ic_satisfied,
            r.ml_analytic,
            r.ml_numeric.map_or("na".to_string(), |b| b.to_string()),
            r.oracle_status.map_or("na", OracleStatus::as_str),
        )?;
    }
    Ok(())
}
