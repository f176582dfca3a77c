//! Macroscopic Locality as the first level of the NPA hierarchy.
//!
//! The moment matrix `Gamma` is indexed by the identity, Alice's projectors
//! `A^i_k` and Bob's projectors `B^j_l`:
//!
//! ```text
//! 0                   identity
//! 1 + i d + k         A^i_k
//! 1 + d^2 + j d + l   B^j_l
//! ```
//!
//! Averaging over the relabeling group leaves a matrix that depends on the box
//! only through its guessing profile plus the free circulant values
//! `v[D][delta]`. A fixed unitary then splits it into one constant block and
//! `d - 1` Hermitian blocks `Gamma_m` of size `d + 2`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::{error_perm, hadamard, modd, omega, ComplexMatrix};
use crate::error::{check_dimension, Error, Result};
use crate::ic::Verdict;
use crate::nsbox::{validate_box, BoxDistribution, GuessingProfile};

/// Tolerance for fixed entries and marginal constraints.
pub const MOMENT_TOL: f64 = 1e-10;

/// Eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-9;

/// Largest admissible off-block entry after the unitary change of basis.
pub const BLOCK_TOL: f64 = 1e-10;

#[inline]
pub fn moment_size(d: usize) -> usize {
    (d + 1) * (d + 1)
}

#[inline]
pub fn alice_index(d: usize, i: usize, k: usize) -> usize {
    1 + i * d + k
}

#[inline]
pub fn bob_index(d: usize, j: usize, l: usize) -> usize {
    1 + d * d + j * d + l
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue_real(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Values of the unconstrained entries of `Gamma`: the cross-setting blocks
/// `V^{i,i'}` (`i < i'`) of Alice and `W^{0,1}` of Bob.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeMoments {
    d: usize,
    alice: Vec<DMatrix<f64>>,
    bob: DMatrix<f64>,
}

fn pair_index(d: usize, i: usize, ip: usize) -> usize {
    debug_assert!(i < ip && ip < d);
    i * d - i * (i + 1) / 2 + (ip - i - 1)
}

impl FreeMoments {
    /// `alice` lists `V^{i,i'}` for `i < i'` in lexicographic order.
    pub fn new(d: usize, alice: Vec<DMatrix<f64>>, bob: DMatrix<f64>) -> Result<Self> {
        check_dimension(d)?;
        if alice.len() != d * (d - 1) / 2 {
            return Err(Error::Validation(format!(
                "expected {} Alice cross blocks, got {}",
                d * (d - 1) / 2,
                alice.len()
            )));
        }
        if alice
            .iter()
            .chain(std::iter::once(&bob))
            .any(|m| m.shape() != (d, d))
        {
            return Err(Error::Validation(format!("free blocks must be {d}x{d}")));
        }
        Ok(Self { d, alice, bob })
    }

    /// Product of marginals, `V^{i,i'}_{k,k'} = P(k|i) P(k'|i')`.
    pub fn product(b: &BoxDistribution) -> Self {
        let d = b.d();
        let alice_m: Vec<Vec<f64>> = (0..d).map(|i| b.alice_marginals(i)).collect();
        let mut alice = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for ip in i + 1..d {
                alice.push(DMatrix::from_fn(d, d, |k, kp| {
                    alice_m[i][k] * alice_m[ip][kp]
                }));
            }
        }
        let b0 = b.bob_marginals(0);
        let b1 = b.bob_marginals(1);
        let bob = DMatrix::from_fn(d, d, |l, lp| b0[l] * b1[lp]);
        Self { d, alice, bob }
    }

    pub fn alice_block(&self, i: usize, ip: usize) -> &DMatrix<f64> {
        &self.alice[pair_index(self.d, i, ip)]
    }

    pub fn bob_block(&self) -> &DMatrix<f64> {
        &self.bob
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    pub d: usize,
    pub matrix: DMatrix<f64>,
}

fn check_sums(block: &DMatrix<f64>, rows: &[f64], cols: &[f64], what: &str) -> Result<()> {
    let d = rows.len();
    for r in 0..d {
        let s = block.row(r).sum();
        if (s - rows[r]).abs() > MOMENT_TOL {
            return Err(Error::Validation(format!(
                "{what}: row {r} sums to {s}, marginal is {}",
                rows[r]
            )));
        }
    }
    for cidx in 0..d {
        let s = block.column(cidx).sum();
        if (s - cols[cidx]).abs() > MOMENT_TOL {
            return Err(Error::Validation(format!(
                "{what}: column {cidx} sums to {s}, marginal is {}",
                cols[cidx]
            )));
        }
    }
    Ok(())
}

/// Assembles `Gamma` from a box and an assignment of the free blocks.
pub fn build_moment_matrix(b: &BoxDistribution, free: &FreeMoments) -> Result<MomentMatrix> {
    let report = validate_box(b)?;
    if !report.is_valid() {
        return Err(Error::Validation(report.describe()));
    }
    let d = b.d();
    if free.d != d {
        return Err(Error::Validation(format!(
            "free assignment has d = {}, box has d = {d}",
            free.d
        )));
    }
    let alice_m: Vec<Vec<f64>> = (0..d).map(|i| b.alice_marginals(i)).collect();
    let bob_m = [b.bob_marginals(0), b.bob_marginals(1)];
    for i in 0..d {
        for ip in i + 1..d {
            check_sums(
                free.alice_block(i, ip),
                &alice_m[i],
                &alice_m[ip],
                &format!("V^{{{i},{ip}}}"),
            )?;
        }
    }
    check_sums(&free.bob, &bob_m[0], &bob_m[1], "W^{0,1}")?;

    let n = moment_size(d);
    let mut g = DMatrix::zeros(n, n);
    let mut set = |x: usize, y: usize, v: f64| {
        g[(x, y)] = v;
        g[(y, x)] = v;
    };
    set(0, 0, 1.0);
    for i in 0..d {
        for k in 0..d {
            let a = alice_index(d, i, k);
            set(0, a, alice_m[i][k]);
            set(a, a, alice_m[i][k]);
            for ip in i + 1..d {
                for kp in 0..d {
                    set(a, alice_index(d, ip, kp), free.alice_block(i, ip)[(k, kp)]);
                }
            }
            for j in 0..2 {
                for l in 0..d {
                    set(a, bob_index(d, j, l), b.get(k, l, i, j));
                }
            }
        }
    }
    for j in 0..2 {
        for l in 0..d {
            let bi = bob_index(d, j, l);
            set(0, bi, bob_m[j][l]);
            set(bi, bi, bob_m[j][l]);
        }
    }
    for l in 0..d {
        for lp in 0..d {
            set(bob_index(d, 0, l), bob_index(d, 1, lp), free.bob[(l, lp)]);
        }
    }
    Ok(MomentMatrix { d, matrix: g })
}

/// Index permutation of the relabeling `(r, s)`:
/// `A^i_k -> A^{i+s}_{k+r}`, `B^j_l -> B^j_{l-r+s j}`.
pub fn relabel_index(d: usize, r: usize, s: usize, x: usize) -> usize {
    if x == 0 {
        return 0;
    }
    let y = x - 1;
    if y < d * d {
        let (i, k) = (y / d, y % d);
        alice_index(d, (i + s) % d, (k + r) % d)
    } else {
        let y = y - d * d;
        let (j, l) = (y / d, y % d);
        bob_index(d, j, modd(l as i64 - r as i64 + (s * j) as i64, d))
    }
}

/// `Gamma'(x, y) = Gamma(pi(x), pi(y))` for the relabeling `(r, s)`.
pub fn group_action(matrix: &DMatrix<f64>, d: usize, r: usize, s: usize) -> DMatrix<f64> {
    let n = moment_size(d);
    let perm: Vec<usize> = (0..n).map(|x| relabel_index(d, r, s, x)).collect();
    DMatrix::from_fn(n, n, |x, y| matrix[(perm[x], perm[y])])
}

/// `(1/d) sum_{r,s} Gamma(pi(x), pi(y))`.
pub fn symmetrize(gamma: &MomentMatrix) -> DMatrix<f64> {
    let d = gamma.d;
    let n = moment_size(d);
    let mut acc = DMatrix::zeros(n, n);
    for r in 0..d {
        for s in 0..d {
            acc += group_action(&gamma.matrix, d, r, s);
        }
    }
    acc / d as f64
}

/// The free circulant values `v[D][delta]` of the symmetrized matrix, for
/// `D = 1..d-1` and `delta in [d]`. Alice's entry `(A^i_k, A^{i+D}_{k+delta})`
/// equals `v[D][delta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedFree {
    d: usize,
    values: Vec<Vec<f64>>,
}

impl SymmetrizedFree {
    /// Checks `sum_delta v[D][delta] = 1` and `v[d-D][delta] = v[D][-delta]`.
    pub fn new(d: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        check_dimension(d)?;
        if values.len() != d - 1 || values.iter().any(|r| r.len() != d) {
            return Err(Error::Validation(format!(
                "free values must have shape [{}][{d}]",
                d - 1
            )));
        }
        for (idx, row) in values.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > MOMENT_TOL {
                return Err(Error::Validation(format!("v[{}] sums to {s}", idx + 1)));
            }
            let mirror = &values[d - 2 - idx];
            for delta in 0..d {
                if (row[delta] - mirror[(d - delta) % d]).abs() > MOMENT_TOL {
                    return Err(Error::Validation(format!(
                        "v[{}] is not the reflection of v[{}]",
                        idx + 1,
                        d - 1 - idx
                    )));
                }
            }
        }
        Ok(Self { d, values })
    }

    /// All free values equal to `1/d`, which zeroes `nu_m` for `m >= 1`.
    pub fn flat(d: usize) -> Result<Self> {
        check_dimension(d)?;
        Ok(Self {
            d,
            values: vec![vec![1.0 / d as f64; d]; d - 1],
        })
    }

    /// Reads the orbit averages off a full moment matrix.
    pub fn from_moment(gamma: &MomentMatrix) -> Self {
        let d = gamma.d;
        let values = (1..d)
            .map(|big| {
                (0..d)
                    .map(|delta| {
                        let mut s = 0.0;
                        for i in 0..d {
                            for k in 0..d {
                                s += gamma.matrix[(
                                    alice_index(d, i, k),
                                    alice_index(d, (i + big) % d, (k + delta) % d),
                                )];
                            }
                        }
                        s / d as f64
                    })
                    .collect()
            })
            .collect();
        Self { d, values }
    }

    /// Inverse transform of block values: `nu[m][D]` for `m = 1..d-1` (index
    /// `m - 1`), with `nu_0 = 1` implied.
    pub fn from_block_values(d: usize, nu: &[Vec<Complex64>]) -> Result<Self> {
        check_dimension(d)?;
        if nu.len() != d - 1 || nu.iter().any(|r| r.len() != d) {
            return Err(Error::Validation(format!(
                "block values must have shape [{}][{d}]",
                d - 1
            )));
        }
        let mut values = vec![vec![0.0; d]; d - 1];
        for big in 1..d {
            for delta in 0..d {
                let mut z = c(1.0);
                for m in 1..d {
                    z += nu[m - 1][big] * omega(d, (delta * m) as i64);
                }
                z /= d as f64;
                if z.im.abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "block values do not come from real free entries (imaginary part {})",
                        z.im
                    )));
                }
                values[big - 1][delta] = z.re;
            }
        }
        Self::new(d, values)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `v[D][delta]` for `1 <= D < d`.
    pub fn get(&self, big: usize, delta: usize) -> f64 {
        self.values[big - 1][delta % self.d]
    }

    /// `nu_m^D = sum_delta v[D][delta] w^{-delta m}` for `D in [d]` (`nu^0 = 1`).
    pub fn block_values(&self, m: usize) -> Vec<Complex64> {
        let d = self.d;
        let mut nu = vec![c(1.0); d];
        for (big, slot) in nu.iter_mut().enumerate().skip(1) {
            *slot = (0..d)
                .map(|delta| omega(d, -((delta * m) as i64)) * self.get(big, delta))
                .sum();
        }
        nu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedMoment {
    pub d: usize,
    pub matrix: DMatrix<f64>,
    pub profile: GuessingProfile,
    pub free: SymmetrizedFree,
}

/// Builds the group-averaged moment matrix directly from a profile:
/// top-left `d`, unit borders, identity diagonal blocks, circulant Alice cross
/// blocks, `P~^{i,j}_{k,l} = p(k + l - i j | j)` and Bob cross block `J/d`.
pub fn symmetrized_moment_matrix(
    profile: &GuessingProfile,
    free: &SymmetrizedFree,
) -> Result<SymmetrizedMoment> {
    let d = profile.d();
    if free.d != d {
        return Err(Error::Validation(format!(
            "free values have d = {}, profile has d = {d}",
            free.d
        )));
    }
    let n = moment_size(d);
    let mut g = DMatrix::zeros(n, n);
    g[(0, 0)] = d as f64;
    for x in 1..n {
        g[(0, x)] = 1.0;
        g[(x, 0)] = 1.0;
        g[(x, x)] = 1.0;
    }
    for i in 0..d {
        for ip in 0..d {
            if i == ip {
                continue;
            }
            let big = (ip + d - i) % d;
            for k in 0..d {
                for kp in 0..d {
                    g[(alice_index(d, i, k), alice_index(d, ip, kp))] =
                        free.get(big, (kp + d - k) % d);
                }
            }
        }
        for j in 0..2 {
            for k in 0..d {
                for l in 0..d {
                    let e = modd((k + l) as i64 - (i * j) as i64, d);
                    let v = profile.p(e, j);
                    g[(alice_index(d, i, k), bob_index(d, j, l))] = v;
                    g[(bob_index(d, j, l), alice_index(d, i, k))] = v;
                }
            }
        }
    }
    let inv = 1.0 / d as f64;
    for l in 0..d {
        for lp in 0..d {
            g[(bob_index(d, 0, l), bob_index(d, 1, lp))] = inv;
            g[(bob_index(d, 1, lp), bob_index(d, 0, l))] = inv;
        }
    }
    Ok(SymmetrizedMoment {
        d,
        matrix: g,
        profile: profile.clone(),
        free: free.clone(),
    })
}

/// `diag(1, H, ..., H, S_{d-1} H, S_{d-1} H)`.
pub fn block_unitary(d: usize) -> Result<ComplexMatrix> {
    let h = hadamard(d)?;
    let sh = error_perm(d, d as i64 - 1)? * &h;
    let n = moment_size(d);
    let mut u = ComplexMatrix::zeros(n, n);
    u[(0, 0)] = c(1.0);
    for i in 0..d {
        let o = alice_index(d, i, 0);
        u.view_mut((o, o), (d, d)).copy_from(&h);
    }
    for j in 0..2 {
        let o = bob_index(d, j, 0);
        u.view_mut((o, o), (d, d)).copy_from(&sh);
    }
    Ok(u)
}

/// Indices of block `m` within the rotated matrix.
pub fn block_indices(d: usize, m: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(d + 3);
    if m == 0 {
        idx.push(0);
    }
    idx.extend((0..d).map(|i| alice_index(d, i, m)));
    idx.extend((0..2).map(|j| bob_index(d, j, m)));
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFamily {
    pub d: usize,
    /// `blocks[m]` is `Gamma_m`; `blocks[0]` is the constant block.
    pub blocks: Vec<ComplexMatrix>,
    /// Largest entry outside the blocks after the change of basis.
    pub off_block_residual: f64,
    /// Largest deviation of a block from its closed-form structure.
    pub structure_residual: f64,
}

#[derive(Debug, Serialize)]
struct BlockDump {
    m: usize,
    size: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl BlockFamily {
    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn to_json(&self) -> String {
        let dump: Vec<BlockDump> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(m, b)| BlockDump {
                m,
                size: b.nrows(),
                entries: b
                    .row_iter()
                    .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                    .collect(),
            })
            .collect();
        serde_json::to_string(&dump).expect("blocks serialize")
    }
}

/// The constant block: `[[d, sqrt(d) 1^T], [sqrt(d) 1, J]]` of size `d + 3`.
pub fn constant_block(d: usize) -> ComplexMatrix {
    let n = d + 3;
    let sd = (d as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |x, y| match (x, y) {
        (0, 0) => c(d as f64),
        (0, _) | (_, 0) => c(sd),
        _ => c(1.0),
    })
}

/// Rotates `Gamma~` by [`block_unitary`] and cuts it into blocks. Each block
/// is checked against its closed form.
pub fn block_diagonalize(gamma_tilde: &SymmetrizedMoment) -> Result<BlockFamily> {
    let d = gamma_tilde.d;
    let u = block_unitary(d)?;
    let g = gamma_tilde.matrix.map(c);
    let rotated = u.adjoint() * g * &u;

    let n = moment_size(d);
    let mut owner = vec![usize::MAX; n];
    let groups: Vec<Vec<usize>> = (0..d).map(|m| block_indices(d, m)).collect();
    for (m, idx) in groups.iter().enumerate() {
        for &x in idx {
            owner[x] = m;
        }
    }
    if owner.contains(&usize::MAX) {
        return Err(Error::Structural(
            "block indices do not cover the matrix".into(),
        ));
    }
    let mut off = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            if owner[x] != owner[y] {
                off = off.max(rotated[(x, y)].norm());
            }
        }
    }
    if off > BLOCK_TOL {
        return Err(Error::Structural(format!("off-block residual {off:.3e}")));
    }

    let blocks: Vec<ComplexMatrix> = groups
        .iter()
        .map(|idx| ComplexMatrix::from_fn(idx.len(), idx.len(), |x, y| rotated[(idx[x], idx[y])]))
        .collect();

    let mut structure = crate::algebra::max_abs_diff(&blocks[0], &constant_block(d));
    for m in 1..d {
        let expect = build_block(&gamma_tilde.profile, m, &gamma_tilde.free.block_values(m))?;
        structure = structure.max(crate::algebra::max_abs_diff(&blocks[m], &expect));
    }
    if structure > BLOCK_TOL {
        return Err(Error::Structural(format!(
            "block structure residual {structure:.3e}"
        )));
    }

    Ok(BlockFamily {
        d,
        blocks,
        off_block_residual: off,
        structure_residual: structure,
    })
}

/// `p_m^j = sum_e w^{m (1 + e)} p(e|j)`.
pub fn block_amplitude(profile: &GuessingProfile, m: usize, j: usize) -> Complex64 {
    let d = profile.d();
    (0..d)
        .map(|e| omega(d, (m * (1 + e)) as i64) * profile.p(e, j))
        .sum()
}

fn check_block_index(d: usize, m: usize) -> Result<()> {
    if m == 0 || m >= d {
        return Err(Error::Range(format!("block index m = {m} outside 1..{d}")));
    }
    Ok(())
}

/// `P_m`: column `j = 0` is `p_m^0` on every row, column `j = 1` is
/// `w^{m i} p_m^1`.
pub fn fixed_columns(profile: &GuessingProfile, m: usize) -> ComplexMatrix {
    let d = profile.d();
    let p0 = block_amplitude(profile, m, 0);
    let p1 = block_amplitude(profile, m, 1);
    ComplexMatrix::from_fn(d, 2, |i, j| {
        if j == 0 {
            p0
        } else {
            omega(d, (m * i) as i64) * p1
        }
    })
}

/// `V_m` with `V_m(i, i') = nu^{i' - i}`.
fn alice_part(d: usize, nu: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |i, ip| nu[(ip + d - i) % d])
}

fn check_nu(d: usize, nu: &[Complex64]) -> Result<()> {
    if nu.len() != d {
        return Err(Error::Validation(format!(
            "need {d} block values, got {}",
            nu.len()
        )));
    }
    if (nu[0] - c(1.0)).norm() > 1e-12 {
        return Err(Error::Validation(format!("nu^0 must be 1, got {}", nu[0])));
    }
    for big in 1..d {
        if (nu[d - big] - nu[big].conj()).norm() > 1e-12 {
            return Err(Error::Validation(format!(
                "nu^{} is not the conjugate of nu^{big}",
                d - big
            )));
        }
    }
    Ok(())
}

/// `Gamma_m = [[V_m, P_m], [P_m^dagger, I_2]]`.
pub fn build_block(profile: &GuessingProfile, m: usize, nu: &[Complex64]) -> Result<ComplexMatrix> {
    let d = profile.d();
    check_block_index(d, m)?;
    check_nu(d, nu)?;
    let p = fixed_columns(profile, m);
    let mut g = ComplexMatrix::identity(d + 2, d + 2);
    g.view_mut((0, 0), (d, d)).copy_from(&alice_part(d, nu));
    g.view_mut((0, d), (d, 2)).copy_from(&p);
    g.view_mut((d, 0), (2, d)).copy_from(&p.adjoint());
    Ok(g)
}

/// `nu` equal to the off-diagonal entries of `P_m P_m^dagger`, so that
/// `V_m - P_m P_m^dagger` is a multiple of the identity.
pub fn witness_assignment(profile: &GuessingProfile, m: usize) -> Result<Vec<Complex64>> {
    let d = profile.d();
    check_block_index(d, m)?;
    let p = fixed_columns(profile, m);
    let pp = &p * p.adjoint();
    let mut nu: Vec<Complex64> = (0..d).map(|big| pp[(0, big)]).collect();
    nu[0] = c(1.0);
    Ok(nu)
}

/// Witness values for every block, lifted back to real free entries.
pub fn witness_free(profile: &GuessingProfile) -> Result<SymmetrizedFree> {
    let d = profile.d();
    let nu: Vec<Vec<Complex64>> = (1..d)
        .map(|m| witness_assignment(profile, m))
        .collect::<Result<_>>()?;
    SymmetrizedFree::from_block_values(d, &nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchurResult {
    pub psd: bool,
    pub min_eigenvalue: f64,
}

/// Positivity of the Schur complement `V_m - P_m P_m^dagger`.
pub fn schur_condition(
    profile: &GuessingProfile,
    m: usize,
    nu: &[Complex64],
) -> Result<SchurResult> {
    let d = profile.d();
    check_block_index(d, m)?;
    check_nu(d, nu)?;
    let p = fixed_columns(profile, m);
    let schur = alice_part(d, nu) - &p * p.adjoint();
    let min = min_eigenvalue(&schur);
    Ok(SchurResult {
        psd: min >= -PSD_TOL,
        min_eigenvalue: min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlVerdict {
    pub d: usize,
    /// `|p_m^0|^2 + |p_m^1|^2` for `m = 1..=floor(d/2)`.
    pub per_m: Vec<f64>,
    pub max_lhs: f64,
    pub satisfied: bool,
    pub verdict: Verdict,
}

pub fn ml_verdict_analytic(profile: &GuessingProfile, tol: f64) -> MlVerdict {
    let d = profile.d();
    let per_m: Vec<f64> = (1..=d / 2)
        .map(|m| {
            block_amplitude(profile, m, 0).norm_sqr() + block_amplitude(profile, m, 1).norm_sqr()
        })
        .collect();
    let max_lhs = per_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = Verdict::classify(max_lhs, tol);
    MlVerdict {
        d,
        per_m,
        max_lhs,
        satisfied: verdict.holds(),
        verdict,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleStatus {
    Feasible,
    Infeasible,
    BoundaryIndeterminate,
}

impl OracleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleStatus::Feasible => "feasible",
            OracleStatus::Infeasible => "infeasible",
            OracleStatus::BoundaryIndeterminate => "boundary-indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub stall_window: usize,
    pub stall_rel_decrease: f64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 5000,
            stall_window: 100,
            stall_rel_decrease: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSearch {
    pub m: usize,
    pub status: OracleStatus,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericResult {
    pub status: OracleStatus,
    /// Largest final residual over the blocks.
    pub residual: f64,
    pub blocks: Vec<BlockSearch>,
}

/// Searches for a PSD completion by alternating projections, block by block.
/// Blocks `m` and `d - m` are conjugate, so only `m <= d/2` are searched.
pub fn ml_feasibility_numeric(
    profile: &GuessingProfile,
    tol: f64,
    max_iter: usize,
) -> NumericResult {
    ml_feasibility_numeric_with(
        profile,
        &NumericOptions {
            tol,
            max_iter,
            ..NumericOptions::default()
        },
    )
}

pub fn ml_feasibility_numeric_with(
    profile: &GuessingProfile,
    opts: &NumericOptions,
) -> NumericResult {
    let d = profile.d();
    let blocks: Vec<BlockSearch> = (1..=d / 2)
        .map(|m| search_block(profile, m, opts))
        .collect();
    let status = if blocks.iter().any(|b| b.status == OracleStatus::Infeasible) {
        OracleStatus::Infeasible
    } else if blocks
        .iter()
        .any(|b| b.status == OracleStatus::BoundaryIndeterminate)
    {
        OracleStatus::BoundaryIndeterminate
    } else {
        OracleStatus::Feasible
    };
    let residual = blocks.iter().map(|b| b.residual).fold(0.0, f64::max);
    NumericResult {
        status,
        residual,
        blocks,
    }
}

fn project_psd(x: &ComplexMatrix) -> ComplexMatrix {
    let mut eig = SymmetricEigen::new(x.clone());
    eig.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
    eig.recompose()
}

/// Orthogonal projection onto block matrices with the fixed entries of
/// `Gamma_m` and a Hermitian circulant Alice part.
fn project_affine(x: &ComplexMatrix, d: usize, fixed: &ComplexMatrix, real: bool) -> ComplexMatrix {
    let mut nu = vec![c(1.0); d];
    for (big, slot) in nu.iter_mut().enumerate().skip(1) {
        let mut acc = c(0.0);
        for i in 0..d {
            let ip = (i + big) % d;
            acc += x[(i, ip)] + x[(ip, i)].conj();
        }
        let mut v = acc / (2 * d) as f64;
        if real {
            v.im = 0.0;
        }
        *slot = v;
    }
    let mut y = fixed.clone();
    y.view_mut((0, 0), (d, d)).copy_from(&alice_part(d, &nu));
    y
}

fn search_block(profile: &GuessingProfile, m: usize, opts: &NumericOptions) -> BlockSearch {
    let d = profile.d();
    let real = 2 * m == d;
    let mut start = vec![c(0.0); d];
    start[0] = c(1.0);
    let fixed = build_block(profile, m, &start).expect("valid start block");

    let mut x = fixed.clone();
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_iter);
    for it in 1..=opts.max_iter {
        let y = project_psd(&x);
        let next = project_affine(&y, d, &fixed, real);
        let residual = (&y - &next).norm();
        x = next;
        history.push(residual);
        if residual < opts.tol {
            return BlockSearch {
                m,
                status: OracleStatus::Feasible,
                residual,
                iterations: it,
            };
        }
        if it > opts.stall_window && residual > 10.0 * opts.tol {
            let past = history[it - 1 - opts.stall_window];
            if (past - residual) / past < opts.stall_rel_decrease {
                return BlockSearch {
                    m,
                    status: OracleStatus::Infeasible,
                    residual,
                    iterations: it,
                };
            }
        }
    }
    BlockSearch {
        m,
        status: OracleStatus::BoundaryIndeterminate,
        residual: *history.last().unwrap_or(&f64::NAN),
        iterations: opts.max_iter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsbox::{
        deterministic_box, guessing_profile, pr_box, random_mixture_box, random_profile,
    };
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn tsirelson() -> GuessingProfile {
        GuessingProfile::isotropic(2, 0.5 + 1.0 / (2.0 * 2f64.sqrt())).unwrap()
    }

    #[test]
    fn moment_matrix_shape_and_pr_entries() {
        let b = pr_box(2).unwrap();
        let g = build_moment_matrix(&b, &FreeMoments::product(&b)).unwrap();
        assert_eq!(g.matrix.shape(), (9, 9));
        assert_eq!(g.matrix, g.matrix.transpose());
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let v = g.matrix[(alice_index(2, i, k), bob_index(2, j, l))];
                        assert!(v == 0.0 || v == 0.5);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_box_gives_gram_matrix() {
        let b = deterministic_box(3, &[2, 0, 1], [1, 2]).unwrap();
        let g = build_moment_matrix(&b, &FreeMoments::product(&b)).unwrap();
        assert!(min_eigenvalue_real(&g.matrix) > -1e-12);
    }

    #[test]
    fn rejects_inconsistent_free_blocks() {
        let b = pr_box(2).unwrap();
        let free = FreeMoments::new(
            2,
            vec![DMatrix::from_element(2, 2, 0.3)],
            DMatrix::from_element(2, 2, 0.25),
        )
        .unwrap();
        assert!(matches!(
            build_moment_matrix(&b, &free),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn symmetrization_matches_direct_construction() {
        let mut rng = StdRng::seed_from_u64(21);
        for d in 2..=5 {
            let b = random_mixture_box(d, &mut rng).unwrap();
            let g = build_moment_matrix(&b, &FreeMoments::product(&b)).unwrap();
            let averaged = symmetrize(&g);
            let free = SymmetrizedFree::from_moment(&g);
            let direct = symmetrized_moment_matrix(&guessing_profile(&b).unwrap(), &free).unwrap();
            let diff = (&averaged - &direct.matrix).abs().max();
            assert!(diff < 1e-12, "d = {d}: {diff}");
            assert_eq!(direct.matrix[(0, 0)], d as f64);
        }
    }

    #[test]
    fn symmetrized_matrix_is_invariant() {
        let mut rng = StdRng::seed_from_u64(4);
        let d = 4;
        let p = random_profile(d, &mut rng).unwrap();
        let g = symmetrized_moment_matrix(&p, &witness_free(&p).unwrap()).unwrap();
        for (r, s) in [(1, 0), (0, 1), (3, 2)] {
            assert!((group_action(&g.matrix, d, r, s) - &g.matrix).abs().max() < 1e-12);
        }
    }

    #[test]
    fn pr_profile_cross_blocks_are_permutations() {
        let d = 3;
        let g = symmetrized_moment_matrix(
            &GuessingProfile::pr(d).unwrap(),
            &SymmetrizedFree::flat(d).unwrap(),
        )
        .unwrap();
        for i in 0..d {
            for j in 0..2 {
                for k in 0..d {
                    for l in 0..d {
                        let expect = if (k + l) % d == (i * j) % d { 1.0 } else { 0.0 };
                        assert_eq!(g.matrix[(alice_index(d, i, k), bob_index(d, j, l))], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn unitary_and_blocks() {
        let mut rng = StdRng::seed_from_u64(9);
        for d in 2..=6 {
            let u = block_unitary(d).unwrap();
            assert!(crate::algebra::unitarity_residual(&u) < 1e-12);
            let p = random_profile(d, &mut rng).unwrap();
            let g = symmetrized_moment_matrix(&p, &witness_free(&p).unwrap()).unwrap();
            let fam = block_diagonalize(&g).unwrap();
            assert_eq!(fam.sizes().iter().sum::<usize>(), moment_size(d));
            assert_eq!(fam.blocks[0].nrows(), d + 3);
            assert!(min_eigenvalue(&fam.blocks[0]) > -1e-10);
            for m in 1..d {
                let conj = fam.blocks[m].map(|z| z.conj());
                assert!(crate::algebra::max_abs_diff(&fam.blocks[d - m], &conj) < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_blocks_have_no_coupling() {
        let d = 4;
        let u = GuessingProfile::uniform(d).unwrap();
        let g = symmetrized_moment_matrix(&u, &SymmetrizedFree::flat(d).unwrap()).unwrap();
        let fam = block_diagonalize(&g).unwrap();
        for m in 1..d {
            assert!(
                crate::algebra::max_abs_diff(
                    &fam.blocks[m],
                    &ComplexMatrix::identity(d + 2, d + 2)
                ) < 1e-12
            );
        }
    }

    #[test]
    fn tsirelson_block_saturates() {
        let p = tsirelson();
        let a = block_amplitude(&p, 1, 0).norm_sqr() + block_amplitude(&p, 1, 1).norm_sqr();
        assert!((a - 1.0).abs() < 1e-12);
        let nu = witness_assignment(&p, 1).unwrap();
        let s = schur_condition(&p, 1, &nu).unwrap();
        assert!(s.min_eigenvalue.abs() < 1e-9 && s.psd);
        assert!(min_eigenvalue(&build_block(&p, 1, &nu).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn witness_makes_scalar_schur_complement() {
        let mut rng = StdRng::seed_from_u64(13);
        for d in 2..=7 {
            let p = random_profile(d, &mut rng).unwrap();
            for m in 1..d {
                let nu = witness_assignment(&p, m).unwrap();
                let pm = fixed_columns(&p, m);
                let schur = alice_part(d, &nu) - &pm * pm.adjoint();
                let scale = 1.0
                    - block_amplitude(&p, m, 0).norm_sqr()
                    - block_amplitude(&p, m, 1).norm_sqr();
                let target = ComplexMatrix::identity(d, d) * c(scale);
                assert!(crate::algebra::max_abs_diff(&schur, &target) < 1e-12);
            }
        }
    }

    #[test]
    fn schur_extremes() {
        let u = GuessingProfile::uniform(3).unwrap();
        let s = schur_condition(&u, 1, &witness_assignment(&u, 1).unwrap()).unwrap();
        assert!((s.min_eigenvalue - 1.0).abs() < 1e-12);
        let pr = GuessingProfile::pr(3).unwrap();
        let s = schur_condition(&pr, 1, &witness_assignment(&pr, 1).unwrap()).unwrap();
        assert!((s.min_eigenvalue + 1.0).abs() < 1e-12);
        assert!(!s.psd);
    }

    #[test]
    fn build_block_validates_nu() {
        let p = GuessingProfile::uniform(3).unwrap();
        let bad = vec![c(1.0), Complex64::new(0.1, 0.2), Complex64::new(0.1, 0.2)];
        assert!(build_block(&p, 1, &bad).is_err());
        assert!(build_block(&p, 0, &[c(1.0), c(0.0), c(0.0)]).is_err());
        assert!(build_block(&p, 3, &[c(1.0), c(0.0), c(0.0)]).is_err());
    }

    #[test]
    fn numeric_oracle_extremes() {
        assert_eq!(
            ml_feasibility_numeric(&GuessingProfile::uniform(3).unwrap(), 1e-7, 5000).status,
            OracleStatus::Feasible
        );
        assert_eq!(
            ml_feasibility_numeric(&GuessingProfile::pr(3).unwrap(), 1e-7, 5000).status,
            OracleStatus::Infeasible
        );
    }

    #[test]
    fn block_dump_shape() {
        let p = tsirelson();
        let fam =
            block_diagonalize(&symmetrized_moment_matrix(&p, &witness_free(&p).unwrap()).unwrap())
                .unwrap();
        let v: serde_json::Value = serde_json::from_str(&fam.to_json()).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 2);
        assert_eq!(arr[0]["size"], 5);
        assert_eq!(arr[1]["m"], 1);
        assert_eq!(arr[1]["entries"][0][0].as_array().unwrap().len(), 2);
    }
}
