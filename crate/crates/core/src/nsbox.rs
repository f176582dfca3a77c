//! Nonsignaling boxes in the `d2dd` scenario (Alice: `d` settings, Bob: two
//! settings, `d` outcomes each) and the guessing profile
//!
//! ```text
//! p(e|j) = (1/d) sum_i Pr(A + B = i*j + e | alpha = i, beta = j)   (mod d)
//! ```
//!
//! which is the only information about a box that the inequalities and the
//! moment-matrix analysis depend on.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::algebra::modd;
use crate::error::{check_dimension, Error, Result};

/// Tolerance for normalization and marginal checks.
pub const PROB_TOL: f64 = 1e-10;

/// `Pr(A = k, B = l | alpha = i, beta = j)` for `k, l, i` in `[d]` and `j`
/// in `[2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDistribution {
    d: usize,
    prob: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxFile {
    d: usize,
    prob: Vec<Vec<Vec<Vec<f64>>>>,
}

impl BoxDistribution {
    /// Takes the flattened tensor in `[k][l][i][j]` row-major order.
    pub fn new(d: usize, prob: Vec<f64>) -> Result<Self> {
        check_dimension(d)?;
        if prob.len() != d * d * d * 2 {
            return Err(Error::Validation(format!(
                "box tensor for d = {d} needs {} entries, got {}",
                d * d * d * 2,
                prob.len()
            )));
        }
        if let Some(x) = prob.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidProbability(format!("non-finite entry {x}")));
        }
        Ok(Self { d, prob })
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        check_dimension(d)?;
        let mut prob = Vec::with_capacity(d * d * d * 2);
        for k in 0..d {
            for l in 0..d {
                for i in 0..d {
                    for j in 0..2 {
                        prob.push(f(k, l, i, j));
                    }
                }
            }
        }
        Self::new(d, prob)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn index(&self, k: usize, l: usize, i: usize, j: usize) -> usize {
        ((k * self.d + l) * self.d + i) * 2 + j
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        self.prob[self.index(k, l, i, j)]
    }

    pub fn entries(&self) -> &[f64] {
        &self.prob
    }

    /// `Pr(A = k | alpha = i)` computed with Bob's setting `j`.
    pub fn alice_marginal(&self, k: usize, i: usize, j: usize) -> f64 {
        (0..self.d).map(|l| self.get(k, l, i, j)).sum()
    }

    /// `Pr(B = l | beta = j)` computed with Alice's setting `i`.
    pub fn bob_marginal(&self, l: usize, i: usize, j: usize) -> f64 {
        (0..self.d).map(|k| self.get(k, l, i, j)).sum()
    }

    /// Alice's outcome distribution for setting `i` (taken at `beta = 0`).
    pub fn alice_marginals(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|k| self.alice_marginal(k, i, 0)).collect()
    }

    /// Bob's outcome distribution for setting `j` (taken at `alpha = 0`).
    pub fn bob_marginals(&self, j: usize) -> Vec<f64> {
        (0..self.d).map(|l| self.bob_marginal(l, 0, j)).collect()
    }

    /// Outcome relabeling `(A, B) -> (A + r, B - r)`.
    pub fn relabel_outcomes(&self, r: usize) -> Self {
        let d = self.d as i64;
        let r = r as i64;
        Self::from_fn(self.d, |k, l, i, j| {
            self.get(modd(k as i64 - r, self.d), modd(l as i64 + r, self.d), i, j)
        })
        .inspect(|b| {
            debug_assert_eq!(b.d as i64, d);
        })
        .expect("relabeling preserves shape")
    }

    /// Setting relabeling `(alpha, B) -> (alpha + s, B + s*j)`.
    pub fn relabel_settings(&self, s: usize) -> Self {
        let s = s as i64;
        Self::from_fn(self.d, |k, l, i, j| {
            self.get(
                k,
                modd(l as i64 - s * j as i64, self.d),
                modd(i as i64 - s, self.d),
                j,
            )
        })
        .expect("relabeling preserves shape")
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &Self, weight: f64) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::Validation(format!(
                "cannot mix boxes with d = {} and d = {}",
                self.d, other.d
            )));
        }
        let prob = self
            .prob
            .iter()
            .zip(&other.prob)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        Self::new(self.d, prob)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BoxFile =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("box JSON: {e}")))?;
        let d = file.d;
        check_dimension(d)?;
        let shape_err = || {
            Error::Validation(format!(
                "box JSON: `prob` must have shape [{d}][{d}][{d}][2]"
            ))
        };
        if file.prob.len() != d {
            return Err(shape_err());
        }
        let mut prob = Vec::with_capacity(d * d * d * 2);
        for row in &file.prob {
            if row.len() != d {
                return Err(shape_err());
            }
            for cell in row {
                if cell.len() != d {
                    return Err(shape_err());
                }
                for pair in cell {
                    if pair.len() != 2 {
                        return Err(shape_err());
                    }
                    prob.extend_from_slice(pair);
                }
            }
        }
        Self::new(d, prob)
    }

    pub fn to_json(&self) -> String {
        let d = self.d;
        let prob = (0..d)
            .map(|k| {
                (0..d)
                    .map(|l| {
                        (0..d)
                            .map(|i| vec![self.get(k, l, i, 0), self.get(k, l, i, 1)])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string(&BoxFile { d, prob }).expect("box serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub normalized: bool,
    pub nonsignaling: bool,
    pub max_violation: f64,
    /// Largest deviation of any `(i, j)` block sum from 1.
    pub normalization_violation: f64,
    /// Largest mismatch between marginals computed at different settings.
    pub signaling_violation: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.normalized && self.nonsignaling
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.normalized {
            parts.push(format!(
                "normalization violated by {:.3e}",
                self.normalization_violation
            ));
        }
        if !self.nonsignaling {
            parts.push(format!(
                "nonsignaling violated by {:.3e}",
                self.signaling_violation
            ));
        }
        if parts.is_empty() {
            "valid".to_string()
        } else {
            parts.join("; ")
        }
    }
}

/// Checks normalization of every `(i, j)` block and that each party's
/// marginals do not depend on the other party's setting.
pub fn validate_box(b: &BoxDistribution) -> Result<ValidationReport> {
    let d = b.d;
    if let Some(x) = b.prob.iter().find(|&&x| x < -PROB_TOL) {
        return Err(Error::InvalidProbability(format!("negative entry {x}")));
    }

    let mut norm = 0.0f64;
    for i in 0..d {
        for j in 0..2 {
            let total: f64 = (0..d)
                .flat_map(|k| (0..d).map(move |l| (k, l)))
                .map(|(k, l)| b.get(k, l, i, j))
                .sum();
            norm = norm.max((total - 1.0).abs());
        }
    }

    let mut signaling = 0.0f64;
    for i in 0..d {
        for k in 0..d {
            signaling =
                signaling.max((b.alice_marginal(k, i, 0) - b.alice_marginal(k, i, 1)).abs());
        }
    }
    for j in 0..2 {
        for l in 0..d {
            let reference = b.bob_marginal(l, 0, j);
            for i in 1..d {
                signaling = signaling.max((b.bob_marginal(l, i, j) - reference).abs());
            }
        }
    }

    Ok(ValidationReport {
        normalized: norm <= PROB_TOL,
        nonsignaling: signaling <= PROB_TOL,
        max_violation: norm.max(signaling),
        normalization_violation: norm,
        signaling_violation: signaling,
    })
}

/// The box with `A + B = alpha * beta (mod d)` and uniform marginals.
pub fn pr_box(d: usize) -> Result<BoxDistribution> {
    check_dimension(d)?;
    let w = 1.0 / d as f64;
    BoxDistribution::from_fn(
        d,
        |k, l, i, j| if (k + l) % d == (i * j) % d { w } else { 0.0 },
    )
}

pub fn uniform_box(d: usize) -> Result<BoxDistribution> {
    check_dimension(d)?;
    let w = 1.0 / (d * d) as f64;
    BoxDistribution::from_fn(d, |_, _, _, _| w)
}

/// `visibility * pr_box(d) + (1 - visibility) * uniform_box(d)`.
pub fn isotropic_box(d: usize, visibility: f64) -> Result<BoxDistribution> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::Range(format!(
            "visibility {visibility} outside [0, 1]"
        )));
    }
    pr_box(d)?.mix(&uniform_box(d)?, visibility)
}

/// Local deterministic box: Alice outputs `alice[i]` on setting `i`, Bob
/// outputs `bob[j]` on setting `j`.
pub fn deterministic_box(d: usize, alice: &[usize], bob: [usize; 2]) -> Result<BoxDistribution> {
    check_dimension(d)?;
    if alice.len() != d || alice.iter().chain(bob.iter()).any(|&x| x >= d) {
        return Err(Error::Validation(
            "deterministic box needs d Alice outputs and outputs in [d]".into(),
        ));
    }
    BoxDistribution::from_fn(d, |k, l, i, j| {
        if alice[i] == k && bob[j] == l {
            1.0
        } else {
            0.0
        }
    })
}

/// Random convex mixture of PR-type, uniform and local deterministic boxes.
/// Nonsignaling by construction.
pub fn random_mixture_box<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<BoxDistribution> {
    check_dimension(d)?;
    let mut parts = vec![
        pr_box(d)?.relabel_settings(rng.random_range(0..d)),
        pr_box(d)?.relabel_outcomes(rng.random_range(0..d)),
        uniform_box(d)?,
    ];
    for _ in 0..3 {
        let alice: Vec<usize> = (0..d).map(|_| rng.random_range(0..d)).collect();
        let bob = [rng.random_range(0..d), rng.random_range(0..d)];
        parts.push(deterministic_box(d, &alice, bob)?);
    }
    let weights = dirichlet(parts.len(), 1.0, rng);
    let mut prob = vec![0.0; parts[0].prob.len()];
    for (part, w) in parts.iter().zip(&weights) {
        for (acc, p) in prob.iter_mut().zip(&part.prob) {
            *acc += w * p;
        }
    }
    BoxDistribution::new(d, prob)
}

/// Symmetric Dirichlet sample from normalized Gamma draws.
pub(crate) fn dirichlet<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut xs: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = xs.iter().sum();
    if total <= 0.0 {
        xs.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    } else {
        xs.iter_mut().for_each(|x| *x /= total);
    }
    xs
}

/// The `2d` numbers `p(e|j)`, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessingProfile {
    d: usize,
    cols: [Vec<f64>; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileFile {
    d: usize,
    p: Vec<Vec<f64>>,
}

impl GuessingProfile {
    /// Builds a profile from the two columns `p(.|0)` and `p(.|1)`.
    pub fn new(col0: Vec<f64>, col1: Vec<f64>) -> Result<Self> {
        let d = col0.len();
        check_dimension(d)?;
        if col1.len() != d {
            return Err(Error::Validation(format!(
                "profile columns have lengths {} and {}",
                d,
                col1.len()
            )));
        }
        for (j, col) in [&col0, &col1].into_iter().enumerate() {
            if let Some(x) = col.iter().find(|x| !x.is_finite() || **x < -PROB_TOL) {
                return Err(Error::Validation(format!("p(.|{j}) has invalid entry {x}")));
            }
            let total: f64 = col.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::Validation(format!(
                    "p(.|{j}) sums to {total}, not 1"
                )));
            }
        }
        Ok(Self {
            d,
            cols: [col0, col1],
        })
    }

    /// Same distribution for both of Bob's settings.
    pub fn symmetric(col: Vec<f64>) -> Result<Self> {
        Self::new(col.clone(), col)
    }

    pub fn uniform(d: usize) -> Result<Self> {
        check_dimension(d)?;
        Self::symmetric(vec![1.0 / d as f64; d])
    }

    /// Point mass at `e = 0` for both settings.
    pub fn pr(d: usize) -> Result<Self> {
        check_dimension(d)?;
        let mut col = vec![0.0; d];
        col[0] = 1.0;
        Self::symmetric(col)
    }

    /// `p(0|j) = q` and the remaining mass spread evenly, for both `j`.
    pub fn isotropic(d: usize, q: f64) -> Result<Self> {
        check_dimension(d)?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Range(format!("q = {q} outside [0, 1]")));
        }
        let rest = (1.0 - q) / (d - 1) as f64;
        let mut col = vec![rest; d];
        col[0] = q;
        Self::symmetric(col)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn p(&self, e: usize, j: usize) -> f64 {
        self.cols[j][e]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    /// Profile with Bob's two settings exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            d: self.d,
            cols: [self.cols[1].clone(), self.cols[0].clone()],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProfileFile = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("profile JSON: {e}")))?;
        if file.p.len() != file.d || file.p.iter().any(|row| row.len() != 2) {
            return Err(Error::Validation(format!(
                "profile JSON: `p` must have shape [{}][2]",
                file.d
            )));
        }
        profile_from_values(&file.p)
    }

    pub fn to_json(&self) -> String {
        let p = (0..self.d)
            .map(|e| vec![self.p(e, 0), self.p(e, 1)])
            .collect();
        serde_json::to_string(&ProfileFile { d: self.d, p }).expect("profile serializes")
    }
}

/// Builds a profile from a `[e][j]` table.
pub fn profile_from_values(values: &[Vec<f64>]) -> Result<GuessingProfile> {
    if values.iter().any(|row| row.len() != 2) {
        return Err(Error::Validation(
            "profile rows must have two entries".into(),
        ));
    }
    GuessingProfile::new(
        values.iter().map(|r| r[0]).collect(),
        values.iter().map(|r| r[1]).collect(),
    )
}

/// Extracts `p(e|j)` from a valid box.
pub fn guessing_profile(b: &BoxDistribution) -> Result<GuessingProfile> {
    let report = validate_box(b)?;
    if !report.is_valid() {
        return Err(Error::Validation(report.describe()));
    }
    let d = b.d;
    let mut cols = [vec![0.0; d], vec![0.0; d]];
    for (j, col) in cols.iter_mut().enumerate() {
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    // A + B = i*j + e
                    let e = modd((k + l) as i64 - (i * j) as i64, d);
                    col[e] += b.get(k, l, i, j);
                }
            }
        }
        col.iter_mut().for_each(|x| *x /= d as f64);
    }
    let [c0, c1] = cols;
    GuessingProfile::new(c0, c1)
}

/// Random point of the probability simplex: Dirichlet with a concentration
/// drawn log-uniformly from `[0.1, 3]`, so samples range from sparse to
/// nearly uniform.
pub fn random_distribution<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let alpha = rng.random_range(0.1f64.ln()..3.0f64.ln()).exp();
    dirichlet(d, alpha, rng)
}

/// Random profile with independent [`random_distribution`] columns.
pub fn random_profile<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<GuessingProfile> {
    check_dimension(d)?;
    let c0 = random_distribution(d, rng);
    let c1 = random_distribution(d, rng);
    GuessingProfile::new(c0, c1)
}
