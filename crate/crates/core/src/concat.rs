//! Error propagation through concatenated boxes.
//!
//! Each box on Bob's decoding walk adds an independent error with law
//! `p(.|j)` (mod d), so the accumulated error after `k` aims in direction `j`
//! follows a circulant Markov chain. [`enumerate_protocol`] evaluates the
//! full layered protocol term by term and serves as the reference for the
//! Markov-chain formulas.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{modd, omega};
use crate::error::{Error, Result};
use crate::nsbox::{BoxDistribution, GuessingProfile};

/// Default cap on the number of weighted terms the protocol enumerator may
/// visit.
pub const DEFAULT_ENUMERATION_BUDGET: f64 = 1e7;

/// Largest concatenation depth the enumerator accepts.
pub const MAX_ENUMERATION_DEPTH: usize = 3;

fn check_setting(j: usize) -> Result<()> {
    if j > 1 {
        return Err(Error::Range(format!(
            "Bob's setting must be 0 or 1, got {j}"
        )));
    }
    Ok(())
}

/// `M_j(e', e) = p(e' - e | j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub d: usize,
    pub j: usize,
    pub entries: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Largest deviation of any row or column sum from 1.
    pub fn stochastic_residual(&self) -> f64 {
        let rows = self.entries.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.entries.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn is_circulant(&self) -> bool {
        let d = self.d;
        (0..d).all(|r| {
            (0..d).all(|c| self.entries[(r, c)] == self.entries[((r + 1) % d, (c + 1) % d)])
        })
    }

    /// `M^k |0>` by repeated application.
    pub fn power_apply(&self, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.d);
        v[0] = 1.0;
        for _ in 0..k {
            v = &self.entries * v;
        }
        v
    }
}

pub fn transition_matrix(profile: &GuessingProfile, j: usize) -> Result<TransitionMatrix> {
    check_setting(j)?;
    let d = profile.d();
    let entries = DMatrix::from_fn(d, d, |r, c| profile.p(modd(r as i64 - c as i64, d), j));
    Ok(TransitionMatrix { d, j, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionMethod {
    /// Repeated application of the transition matrix.
    Power,
    /// Fourier closed form.
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDistribution {
    pub d: usize,
    pub k: usize,
    pub j: usize,
    pub q: Vec<f64>,
}

/// `l_i(j) = sum_e p(e|j) w^{-e i}` for `i = 1..=floor(d/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    pub d: usize,
    pub j: usize,
    values: Vec<Complex64>,
}

impl FourierCoefficients {
    /// `l_i` for `1 <= i <= floor(d/2)`.
    pub fn get(&self, i: usize) -> Complex64 {
        assert!(i >= 1 && i <= self.values.len(), "index {i} out of range");
        self.values[i - 1]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Single Fourier coefficient for any `i`.
pub(crate) fn fourier_coefficient(profile: &GuessingProfile, j: usize, i: usize) -> Complex64 {
    let d = profile.d();
    (0..d)
        .map(|e| omega(d, -((e * i) as i64)) * profile.p(e, j))
        .sum()
}

pub fn fourier_coefficients(profile: &GuessingProfile, j: usize) -> Result<FourierCoefficients> {
    check_setting(j)?;
    let d = profile.d();
    let values = (1..=d / 2)
        .map(|i| fourier_coefficient(profile, j, i))
        .collect();
    Ok(FourierCoefficients { d, j, values })
}

/// Distribution of the error accumulated over `k` boxes aimed in direction `j`.
pub fn error_distribution(
    profile: &GuessingProfile,
    j: usize,
    k: usize,
    method: DistributionMethod,
) -> Result<ErrorDistribution> {
    check_setting(j)?;
    let d = profile.d();
    let q = match method {
        DistributionMethod::Power => transition_matrix(profile, j)?
            .power_apply(k)
            .as_slice()
            .to_vec(),
        DistributionMethod::Closed => {
            let ls: Vec<Complex64> = (1..=d / 2)
                .map(|i| fourier_coefficient(profile, j, i).powu(k as u32))
                .collect();
            spectral_inverse(d, |i| ls[i - 1])
        }
    };
    Ok(ErrorDistribution { d, k, j, q })
}

/// Inverts a real-signal spectrum given on `i = 1..=floor(d/2)` (the `i = 0`
/// entry is 1):
///
/// ```text
/// f(E) = 1/d + (2/d) sum_{i=1}^{floor((d-1)/2)} Re(L_i w^{E i})  [+ (1/d) L_{d/2} (-1)^E]
/// ```
fn spectral_inverse(d: usize, coeff: impl Fn(usize) -> Complex64) -> Vec<f64> {
    let df = d as f64;
    (0..d)
        .map(|e| {
            let mut v = 1.0 / df;
            for i in 1..=(d - 1) / 2 {
                let l = coeff(i);
                let angle = 2.0 * std::f64::consts::PI * ((e * i) % d) as f64 / df;
                v += 2.0 / df * (l.re * angle.cos() - l.im * angle.sin());
            }
            if d.is_multiple_of(2) {
                let sign = if e % 2 == 0 { 1.0 } else { -1.0 };
                v += sign * coeff(d / 2).re / df;
            }
            v
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessMethod {
    /// Cyclic convolution of the two matrix-power error distributions.
    Convolution,
    /// Fourier closed form.
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessErrorVector {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub probs: Vec<f64>,
}

impl GuessErrorVector {
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_depth(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Range(
            "concatenation depth must be at least 1".into(),
        ));
    }
    if k > n {
        return Err(Error::Range(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

/// `P(E|k)`: error law of Bob's final guess when `k` of the `n` boxes on his
/// walk are used with setting 0 and `n - k` with setting 1.
pub fn guess_error_probabilities(
    profile: &GuessingProfile,
    n: usize,
    k: usize,
    method: GuessMethod,
) -> Result<GuessErrorVector> {
    check_depth(n, k)?;
    let d = profile.d();
    let probs = match method {
        GuessMethod::Convolution => {
            let q0 = error_distribution(profile, 0, k, DistributionMethod::Power)?.q;
            let q1 = error_distribution(profile, 1, n - k, DistributionMethod::Power)?.q;
            (0..d)
                .map(|big_e| {
                    (0..d)
                        .map(|e| q0[e] * q1[modd(big_e as i64 - e as i64, d)])
                        .sum()
                })
                .collect()
        }
        GuessMethod::Closed => {
            let coeff: Vec<Complex64> = (1..=d / 2)
                .map(|i| {
                    fourier_coefficient(profile, 0, i).powu(k as u32)
                        * fourier_coefficient(profile, 1, i).powu((n - k) as u32)
                })
                .collect();
            spectral_inverse(d, |i| coeff[i - 1])
        }
    };
    Ok(GuessErrorVector { d, n, k, probs })
}

/// Spectral form of `sum_E (P(E|k) - 1/d)^2`.
pub fn squared_deviation_spectral(profile: &GuessingProfile, n: usize, k: usize) -> Result<f64> {
    check_depth(n, k)?;
    let d = profile.d();
    let df = d as f64;
    let term = |i: usize| {
        let a = fourier_coefficient(profile, 0, i).norm_sqr();
        let b = fourier_coefficient(profile, 1, i).norm_sqr();
        a.powi(k as i32) * b.powi((n - k) as i32)
    };
    let mut total: f64 = (1..=(d - 1) / 2).map(|i| 2.0 / df * term(i)).sum();
    if d.is_multiple_of(2) {
        total += term(d / 2) / df;
    }
    Ok(total)
}

/// `sum_E (P(E|k) - 1/d)^2` by direct summation. Cross-checked against the
/// spectral form; a mismatch is reported as a structural error.
pub fn squared_deviation_sum(profile: &GuessingProfile, n: usize, k: usize) -> Result<f64> {
    let p = guess_error_probabilities(profile, n, k, GuessMethod::Convolution)?;
    let inv = 1.0 / profile.d() as f64;
    let direct: f64 = p.probs.iter().map(|x| (x - inv).powi(2)).sum();
    let spectral = squared_deviation_spectral(profile, n, k)?;
    if (direct - spectral).abs() > 1e-10 * direct.abs().max(1.0) {
        return Err(Error::Structural(format!(
            "squared deviation mismatch: direct {direct}, spectral {spectral}"
        )));
    }
    Ok(direct)
}

/// Number of weighted terms visited by the enumerator.
pub fn enumeration_terms(d: usize, n: usize) -> f64 {
    let leaves = 1usize << n;
    (d as f64).powi((2 * leaves - 1 + n) as i32)
}

/// Joint law of `(a_b, g)` for the layered protocol, flattened as
/// `joint[target * d + guess]`.
///
/// Layer `n - 1` pairs the data dits; box `i` of a layer receives
/// `alpha = -x_{2i} + x_{2i+1}` and forwards `x_{2i} + A`. The single dit
/// left after layer 0 is the message. Bob walks from layer 0 downwards,
/// reading the bits of `b` most significant first, and adds his outputs to
/// the message.
pub fn protocol_joint(
    b_dist: &BoxDistribution,
    n: usize,
    b: usize,
    budget: f64,
) -> Result<Vec<f64>> {
    if n == 0 || n > MAX_ENUMERATION_DEPTH {
        return Err(Error::Range(format!(
            "enumeration depth must be in 1..={MAX_ENUMERATION_DEPTH}, got {n}"
        )));
    }
    let leaves = 1usize << n;
    if b >= leaves {
        return Err(Error::Range(format!(
            "b = {b} must be below 2^n = {leaves}"
        )));
    }
    let d = b_dist.d();
    let needed = enumeration_terms(d, n);
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }

    let bits: Vec<usize> = (0..n).map(|m| (b >> (n - 1 - m)) & 1).collect();
    // Box index on the walk for each layer.
    let mut walk = vec![0usize; n];
    for m in 1..n {
        walk[m] = 2 * walk[m - 1] + bits[m - 1];
    }

    let alice: Vec<Vec<f64>> = (0..d).map(|i| b_dist.alice_marginals(i)).collect();
    let weight_data = (1.0 / d as f64).powi(leaves as i32);

    let ctx = Walker {
        box_dist: b_dist,
        d,
        n,
        bits: &bits,
        walk: &walk,
        alice: &alice,
    };

    let partials: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|first| {
            let mut joint = vec![0.0; d * d];
            let mut data = vec![0usize; leaves];
            data[0] = first;
            let mut odometer = vec![0usize; leaves - 1];
            loop {
                data[1..].copy_from_slice(&odometer);
                ctx.accumulate_data(&data, b, weight_data, &mut joint);
                if !advance(&mut odometer, d) {
                    break;
                }
            }
            joint
        })
        .collect();

    let mut joint = vec![0.0; d * d];
    for part in partials {
        for (acc, x) in joint.iter_mut().zip(part) {
            *acc += x;
        }
    }
    Ok(joint)
}

/// Increments a base-`d` counter; returns false after wrapping around.
fn advance(digits: &mut [usize], d: usize) -> bool {
    for x in digits.iter_mut() {
        *x += 1;
        if *x < d {
            return true;
        }
        *x = 0;
    }
    false
}

struct Walker<'a> {
    box_dist: &'a BoxDistribution,
    d: usize,
    n: usize,
    bits: &'a [usize],
    walk: &'a [usize],
    alice: &'a [Vec<f64>],
}

impl Walker<'_> {
    /// Sums over all Alice outputs and Bob's walk outputs for one data set.
    fn accumulate_data(&self, data: &[usize], b: usize, weight: f64, joint: &mut [f64]) {
        let d = self.d;
        let n_boxes = (1usize << self.n) - 1;
        let target = data[b];
        let mut outputs = vec![0usize; n_boxes];
        let mut bob = vec![0usize; self.n];
        loop {
            // Alice's encoding, bottom layer first. Box (m, i) sits at flat
            // index 2^m - 1 + i.
            let mut level: Vec<usize> = data.to_vec();
            let mut alphas = vec![0usize; n_boxes];
            let mut w_alice = weight;
            for m in (0..self.n).rev() {
                let width = 1usize << m;
                let mut next = Vec::with_capacity(width);
                for i in 0..width {
                    let idx = width - 1 + i;
                    let alpha = modd(level[2 * i + 1] as i64 - level[2 * i] as i64, d);
                    alphas[idx] = alpha;
                    let a_out = outputs[idx];
                    if self.walk[m] != i {
                        w_alice *= self.alice[alpha][a_out];
                    }
                    next.push((level[2 * i] + a_out) % d);
                }
                level = next;
            }
            let message = level[0];

            if w_alice != 0.0 {
                loop {
                    let mut w = w_alice;
                    let mut guess = message;
                    for m in 0..self.n {
                        let idx = (1usize << m) - 1 + self.walk[m];
                        w *= self
                            .box_dist
                            .get(outputs[idx], bob[m], alphas[idx], self.bits[m]);
                        guess = (guess + bob[m]) % d;
                    }
                    joint[target * d + guess] += w;
                    if !advance(&mut bob, d) {
                        break;
                    }
                }
            }
            if !advance(&mut outputs, d) {
                break;
            }
        }
    }
}

/// Exact law of `g - a_b` from full enumeration of the protocol.
pub fn enumerate_protocol(
    b_dist: &BoxDistribution,
    n: usize,
    b: usize,
) -> Result<GuessErrorVector> {
    enumerate_protocol_with_budget(b_dist, n, b, DEFAULT_ENUMERATION_BUDGET)
}

pub fn enumerate_protocol_with_budget(
    b_dist: &BoxDistribution,
    n: usize,
    b: usize,
    budget: f64,
) -> Result<GuessErrorVector> {
    let d = b_dist.d();
    let joint = protocol_joint(b_dist, n, b, budget)?;
    let mut probs = vec![0.0; d];
    for t in 0..d {
        for g in 0..d {
            probs[modd(g as i64 - t as i64, d)] += joint[t * d + g];
        }
    }
    let weight = (b as u32).count_ones() as usize;
    Ok(GuessErrorVector {
        d,
        n,
        k: n - weight,
        probs,
    })
}
