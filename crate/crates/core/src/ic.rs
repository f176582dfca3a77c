//! Information-Causality side: entropy bounds, the quadratic criterion
//! aggregated over all walks of the concatenated protocol, and the family of
//! quadratic inequalities it reduces to. All entropies are in nats.

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::omega;
use crate::concat::{self, fourier_coefficient, squared_deviation_sum};
use crate::error::{check_dimension, Error, Result};
use crate::nsbox::{BoxDistribution, GuessingProfile, PROB_TOL};

/// Default tolerance for inequality verdicts.
pub const VERDICT_TOL: f64 = 1e-9;

const SUM_TOL: f64 = 1e-9;

fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::Validation("empty distribution".into()));
    }
    if let Some(x) = dist.iter().find(|x| !x.is_finite() || **x < -PROB_TOL) {
        return Err(Error::Validation(format!("invalid probability {x}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::Validation(format!("distribution sums to {total}")));
    }
    Ok(())
}

fn entropy_unchecked<'a>(dist: impl IntoIterator<Item = &'a f64>) -> f64 {
    dist.into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// `H = -sum p ln p`, with `0 ln 0 = 0`.
pub fn shannon_entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(entropy_unchecked(dist))
}

/// `I(a; b) = H(a) + H(b) - H(a, b)` for `joint[a][b]`.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let cols = joint.first().map_or(0, Vec::len);
    if cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(Error::Validation(
            "joint distribution must be a non-empty rectangle".into(),
        ));
    }
    let flat: Vec<f64> = joint.iter().flatten().copied().collect();
    check_distribution(&flat)?;
    let row_marg: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let col_marg: Vec<f64> = (0..cols)
        .map(|c| joint.iter().map(|r| r[c]).sum())
        .collect();
    let mi = entropy_unchecked(&row_marg) + entropy_unchecked(&col_marg) - entropy_unchecked(&flat);
    // Rounding can push a zero into the negatives.
    Ok(mi.max(0.0))
}

/// Constant in the quadratic upper bound on entropy:
/// `(d^2 (ln d - 1) + d) / (d - 1)^2`.
pub fn kappa(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Range(format!("kappa needs d >= 2, got {d}")));
    }
    let df = d as f64;
    Ok((df * df * (df.ln() - 1.0) + df) / ((df - 1.0) * (df - 1.0)))
}

/// Right-hand side of the quadratic criterion, `ln d / kappa(d)`.
pub fn ic_rhs(d: usize) -> Result<f64> {
    Ok((d as f64).ln() / kappa(d)?)
}

/// `ln d - H(e)`: lower bound on `I(a; a + e)` for uniform `a`.
pub fn fano_lower_bound(error_dist: &[f64], d: usize) -> Result<f64> {
    check_dimension(d)?;
    if error_dist.len() != d {
        return Err(Error::Validation(format!(
            "error distribution has {} entries, expected {d}",
            error_dist.len()
        )));
    }
    Ok((d as f64).ln() - shannon_entropy(error_dist)?)
}

/// `ln d - kappa(d) sum_i (p_i - 1/d)^2`, an upper bound on `H(dist)`.
pub fn entropy_quadratic_bound(dist: &[f64], d: usize) -> Result<f64> {
    check_dimension(d)?;
    if dist.len() != d {
        return Err(Error::Validation(format!(
            "distribution has {} entries, expected {d}",
            dist.len()
        )));
    }
    let h = shannon_entropy(dist)?;
    let inv = 1.0 / d as f64;
    let spread: f64 = dist.iter().map(|p| (p - inv).powi(2)).sum();
    let bound = (d as f64).ln() - kappa(d)? * spread;
    if h > bound + 1e-12 {
        return Err(Error::Structural(format!(
            "entropy {h} exceeds quadratic bound {bound}"
        )));
    }
    Ok(bound)
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k)
        .map(|t| (((n - k + t) as f64) / t as f64).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcQuadraticReport {
    pub d: usize,
    pub n: usize,
    /// Collapsed left-hand side.
    pub lhs: f64,
    /// Left-hand side summed over walk weights.
    pub lhs_direct: f64,
    pub rhs: f64,
    /// `(|l_i(0)|^2 + |l_i(1)|^2)^n` for `i = 1..=floor(d/2)`.
    pub per_index: Vec<f64>,
    pub agreement: f64,
    pub satisfied: bool,
}

/// Quadratic criterion for depth `n`:
///
/// ```text
/// sum_k C(n,k) sum_E (P(E|k) - 1/d)^2  <=  ln d / kappa(d)
/// ```
///
/// The left side is evaluated both term by term and through the binomial
/// collapse into `(|l_i(0)|^2 + |l_i(1)|^2)^n`.
pub fn ic_quadratic_lhs(profile: &GuessingProfile, n: usize) -> Result<IcQuadraticReport> {
    if n == 0 {
        return Err(Error::Range("depth n must be at least 1".into()));
    }
    let d = profile.d();
    let df = d as f64;

    let mut lhs_direct = 0.0;
    for k in 0..=n {
        let s = squared_deviation_sum(profile, n, k)?;
        if s > 0.0 {
            lhs_direct += (ln_binomial(n, k) + s.ln()).exp();
        }
    }

    let per_index: Vec<f64> = (1..=d / 2)
        .map(|i| {
            let base = fourier_coefficient(profile, 0, i).norm_sqr()
                + fourier_coefficient(profile, 1, i).norm_sqr();
            base.powi(n as i32)
        })
        .collect();
    let mut lhs = 0.0;
    for (idx, v) in per_index.iter().enumerate() {
        let i = idx + 1;
        lhs += if 2 * i == d { v / df } else { 2.0 * v / df };
    }

    let rhs = ic_rhs(d)?;
    Ok(IcQuadraticReport {
        d,
        n,
        lhs,
        lhs_direct,
        rhs,
        per_index,
        agreement: (lhs - lhs_direct).abs(),
        satisfied: lhs <= rhs,
    })
}

/// `|sum_e p(e|0) w^{e m}|^2 + |sum_e p(e|1) w^{e m}|^2`.
pub fn main_inequality_lhs(profile: &GuessingProfile, m: usize) -> Result<f64> {
    let d = profile.d();
    if m == 0 || m > d / 2 {
        return Err(Error::Range(format!("index m = {m} outside 1..={}", d / 2)));
    }
    let amp = |j: usize| -> Complex64 {
        (0..d)
            .map(|e| omega(d, (e * m) as i64) * profile.p(e, j))
            .sum()
    };
    Ok(amp(0).norm_sqr() + amp(1).norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Saturated,
    Violated,
}

impl Verdict {
    /// Classifies the largest left-hand side against the bound 1.
    pub fn classify(max_lhs: f64, tol: f64) -> Self {
        if (max_lhs - 1.0).abs() <= tol {
            Verdict::Saturated
        } else if max_lhs < 1.0 {
            Verdict::Satisfied
        } else {
            Verdict::Violated
        }
    }

    /// True unless the bound is exceeded beyond tolerance.
    pub fn holds(self) -> bool {
        self != Verdict::Violated
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Saturated => "saturated",
            Verdict::Violated => "violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcVerdict {
    pub d: usize,
    /// Left-hand sides for `m = 1..=floor(d/2)`.
    pub per_m: Vec<f64>,
    pub max_lhs: f64,
    pub satisfied: bool,
    pub verdict: Verdict,
}

pub fn ic_verdict(profile: &GuessingProfile, tol: f64) -> IcVerdict {
    let d = profile.d();
    let per_m: Vec<f64> = (1..=d / 2)
        .map(|m| main_inequality_lhs(profile, m).expect("index in range"))
        .collect();
    let max_lhs = per_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = Verdict::classify(max_lhs, tol);
    IcVerdict {
        d,
        per_m,
        max_lhs,
        satisfied: verdict.holds(),
        verdict,
    }
}

/// `sum_y I(a_y; g | b = y)` for the depth-`n` protocol, from exact
/// enumeration. Compare with the message capacity `ln d`.
pub fn ic_statement_exact(b: &BoxDistribution, n: usize) -> Result<f64> {
    ic_statement_exact_with_budget(b, n, concat::DEFAULT_ENUMERATION_BUDGET)
}

pub fn ic_statement_exact_with_budget(b: &BoxDistribution, n: usize, budget: f64) -> Result<f64> {
    let d = b.d();
    let mut total = 0.0;
    for y in 0..(1usize << n.min(concat::MAX_ENUMERATION_DEPTH)) {
        let flat = concat::protocol_joint(b, n, y, budget)?;
        let joint: Vec<Vec<f64>> = flat.chunks(d).map(<[f64]>::to_vec).collect();
        total += mutual_information(&joint)?;
    }
    Ok(total)
}
