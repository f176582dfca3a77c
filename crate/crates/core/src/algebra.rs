//! Structured complex matrices over `Z_d`: the Fourier (Hadamard) matrix,
//! generalized Pauli shift and clock, the error permutations `S_E` and the
//! all-ones matrix, together with the Dirichlet-kernel sums used when
//! collapsing trigonometric series.
//!
//! Conventions (basis `|0>, ..., |d-1>`, arithmetic mod `d`):
//!
//! ```text
//! H   = d^{-1/2} sum_{i,j} w^{-ij} |i><j|
//! X^m = sum_i |i><i - m|            (X^m |j> = |j + m>)
//! Z^m = sum_i w^{im} |i><i|
//! S_E = sum_i |i><E - i|            (S_E |j> = |E - j>)
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dimension, Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Default absolute tolerance for matrix comparisons.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Tolerance below which a csc/sec factor is treated as a pole.
pub const POLE_TOL: f64 = 1e-9;

/// Reduces `x` into `[0, d)`.
#[inline]
pub fn modd(x: i64, d: usize) -> usize {
    x.rem_euclid(d as i64) as usize
}

/// `exp(2 pi i power / d)`, with the exponent reduced mod `d` first.
pub fn omega(d: usize, power: i64) -> Complex64 {
    let p = modd(power, d) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * p / d as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootOfUnity {
    d: usize,
    power: i64,
}

impl RootOfUnity {
    pub fn new(d: usize, power: i64) -> Result<Self> {
        check_dimension(d)?;
        Ok(Self { d, power })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn power(&self) -> i64 {
        self.power
    }

    pub fn value(&self) -> Complex64 {
        omega(self.d, self.power)
    }

    pub fn pow(&self, k: i64) -> Self {
        Self {
            d: self.d,
            power: (self.power * k).rem_euclid(self.d as i64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Hadamard,
    PauliShift,
    PauliClock,
    ErrorPerm,
    AllOnes,
}

/// Builds `H`, `X^m`, `Z^m`, `S_m` or the all-ones matrix. `m` is read mod
/// `d` and ignored for `Hadamard` and `AllOnes`.
pub fn structured_matrix(kind: MatrixKind, d: usize, m: i64) -> Result<ComplexMatrix> {
    check_dimension(d)?;
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mat = match kind {
        MatrixKind::Hadamard => {
            let s = 1.0 / (d as f64).sqrt();
            DMatrix::from_fn(d, d, |i, j| omega(d, -((i * j) as i64)) * s)
        }
        MatrixKind::PauliShift => DMatrix::from_fn(d, d, |i, j| {
            if modd(i as i64 - m, d) == j {
                one
            } else {
                zero
            }
        }),
        MatrixKind::PauliClock => {
            DMatrix::from_fn(
                d,
                d,
                |i, j| {
                    if i == j {
                        omega(d, i as i64 * m)
                    } else {
                        zero
                    }
                },
            )
        }
        MatrixKind::ErrorPerm => DMatrix::from_fn(d, d, |i, j| {
            if modd(m - i as i64, d) == j {
                one
            } else {
                zero
            }
        }),
        MatrixKind::AllOnes => DMatrix::from_element(d, d, one),
    };
    Ok(mat)
}

pub fn hadamard(d: usize) -> Result<ComplexMatrix> {
    structured_matrix(MatrixKind::Hadamard, d, 0)
}

pub fn pauli_shift(d: usize, m: i64) -> Result<ComplexMatrix> {
    structured_matrix(MatrixKind::PauliShift, d, m)
}

pub fn pauli_clock(d: usize, m: i64) -> Result<ComplexMatrix> {
    structured_matrix(MatrixKind::PauliClock, d, m)
}

pub fn error_perm(d: usize, e: i64) -> Result<ComplexMatrix> {
    structured_matrix(MatrixKind::ErrorPerm, d, e)
}

pub fn all_ones(d: usize) -> Result<ComplexMatrix> {
    structured_matrix(MatrixKind::AllOnes, d, 0)
}

/// Largest entrywise modulus of `a - b`. Shapes must agree.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn approx_eq(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && max_abs_diff(a, b) <= tol
}

/// Deviation of `m^dagger m` from the identity.
pub fn unitarity_residual(m: &ComplexMatrix) -> f64 {
    let id = ComplexMatrix::identity(m.nrows(), m.ncols());
    max_abs_diff(&(m.adjoint() * m), &id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirichletForm {
    /// `sum_{k=1}^{n-1} sin(x + k y)`
    A1,
    /// `sum_{k=1}^{n-1} cos(x + k y)`
    A2,
    /// `sum_{k=1}^{n-1} (-1)^k sin(x + k y)`
    A3,
    /// `sum_{k=1}^{2n-1} (-1)^k cos(x + k y)`
    A4,
}

/// Closed form of the selected Dirichlet-kernel sum.
///
/// The kernel identities are stated for sums starting at `k = 0`; the
/// `k = 0` term is subtracted so the value equals the sum from `k = 1`.
pub fn dirichlet_sum(form: DirichletForm, x: f64, y: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::Range("dirichlet_sum needs n >= 1".into()));
    }
    let nf = n as f64;
    match form {
        DirichletForm::A1 | DirichletForm::A2 => {
            let s = (y / 2.0).sin();
            if s.abs() < POLE_TOL {
                return Err(Error::Singularity(format!("csc(y/2) pole at y = {y}")));
            }
            let phase = x + (nf - 1.0) / 2.0 * y;
            let ratio = (nf * y / 2.0).sin() / s;
            Ok(match form {
                DirichletForm::A1 => phase.sin() * ratio - x.sin(),
                _ => phase.cos() * ratio - x.cos(),
            })
        }
        DirichletForm::A3 => {
            let c = (y / 2.0).cos();
            if c.abs() < POLE_TOL {
                return Err(Error::Singularity(format!("sec(y/2) pole at y = {y}")));
            }
            let shifted = y + PI;
            let full = (x + (nf - 1.0) / 2.0 * shifted).sin() * (nf * shifted / 2.0).sin() / c;
            Ok(full - x.sin())
        }
        DirichletForm::A4 => {
            let c = (y / 2.0).cos();
            if c.abs() < POLE_TOL {
                return Err(Error::Singularity(format!("sec(y/2) pole at y = {y}")));
            }
            let full = (x + (2.0 * nf - 1.0) / 2.0 * y).sin() * (nf * y).sin() / c;
            Ok(full - x.cos())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub d: usize,
    /// `max_m |H^dagger X^m H - Z^m|`
    pub fourier_conjugation: f64,
    /// `max_i |S_i S_{d-1} - X^{i+1}|`
    pub perm_product: f64,
    /// `max_m |S_{d-1}^dagger X^m S_{d-1} - X^{-m}|`
    pub perm_reflection: f64,
    pub max_residual: f64,
    pub passed: bool,
}

/// Checks the three operator identities relating `H`, `X`, `Z` and `S`.
pub fn verify_identities(d: usize) -> Result<IdentityReport> {
    check_dimension(d)?;
    let h = hadamard(d)?;
    let h_adj = h.adjoint();
    let s_last = error_perm(d, d as i64 - 1)?;
    let s_last_adj = s_last.adjoint();

    let mut fourier = 0.0f64;
    let mut product = 0.0f64;
    let mut reflection = 0.0f64;
    for m in 0..d as i64 {
        let x = pauli_shift(d, m)?;
        fourier = fourier.max(max_abs_diff(&(&h_adj * &x * &h), &pauli_clock(d, m)?));
        reflection = reflection.max(max_abs_diff(
            &(&s_last_adj * &x * &s_last),
            &pauli_shift(d, -m)?,
        ));
        product = product.max(max_abs_diff(
            &(error_perm(d, m)? * &s_last),
            &pauli_shift(d, m + 1)?,
        ));
    }
    let max_residual = fourier.max(product).max(reflection);
    Ok(IdentityReport {
        d,
        fourier_conjugation: fourier,
        perm_product: product,
        perm_reflection: reflection,
        max_residual,
        passed: max_residual <= 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn bit_flip() {
        let x = pauli_shift(2, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        assert!(approx_eq(&x, &expected, 0.0));
    }

    #[test]
    fn error_perm_three() {
        let s = error_perm(3, 0).unwrap();
        // rows 0,1,2 -> cols 0,2,1
        for (row, col) in [(0, 0), (1, 2), (2, 1)] {
            assert_eq!(s[(row, col)], c(1.0));
        }
        assert_eq!(s.iter().filter(|z| z.norm() > 0.0).count(), 3);
    }

    #[test]
    fn hadamard_unitary() {
        assert!(unitarity_residual(&hadamard(4).unwrap()) <= 1e-12);
    }

    #[test]
    fn rejects_small_dimension() {
        assert_eq!(hadamard(1), Err(Error::InvalidDimension(1)));
        assert!(verify_identities(0).is_err());
        assert!(RootOfUnity::new(1, 0).is_err());
    }

    #[test]
    fn root_of_unity_cycles() {
        let w = RootOfUnity::new(7, 3).unwrap();
        assert!((w.pow(7).value() - c(1.0)).norm() < 1e-12);
        let mut acc = c(1.0);
        for _ in 0..7 {
            acc *= w.value();
        }
        assert!((acc - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn dirichlet_examples() {
        let v = dirichlet_sum(DirichletForm::A2, 0.0, 2.0 * PI / 5.0, 5).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
        for y in [0.3, 1.7, -2.2] {
            assert_eq!(dirichlet_sum(DirichletForm::A1, 0.0, y, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn dirichlet_poles() {
        assert!(matches!(
            dirichlet_sum(DirichletForm::A2, 0.1, 0.0, 3),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            dirichlet_sum(DirichletForm::A3, 0.1, PI, 3),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            dirichlet_sum(DirichletForm::A4, 0.1, -PI, 3),
            Err(Error::Singularity(_))
        ));
        assert!(dirichlet_sum(DirichletForm::A1, 0.1, 1.0, 0).is_err());
    }

    #[test]
    fn identities_small() {
        let r = verify_identities(2).unwrap();
        assert!(r.max_residual < 1e-15, "{r:?}");
        for d in [3, 7] {
            let r = verify_identities(d).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }
}
