//! Linear algebra on the cone of positive semi-definite matrices.
//!
//! Covariances in this crate are routinely singular: a degenerate process
//! noise, or a drop burst that has only excited part of the state space,
//! leaves the innovation supported on a proper subspace. Everything here
//! therefore works through a symmetric eigendecomposition `M = U D Uᵀ`
//! and treats eigenvalues below a relative threshold as exact zeros, which
//! gives the Moore-Penrose pseudo-inverse, the pseudo-determinant (product
//! of the nonzero eigenvalues) and the square-root factor `U √D`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative eigenvalue threshold used when none is given explicitly.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative tolerance for the two semidefinite orderings in [`check_dominance`].
pub const DOMINANCE_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-10;
const IMAGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col}): {upper} vs {lower}")]
    NotSymmetric {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },
    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue} < -{threshold}")]
    NotPsd { eigenvalue: f64, threshold: f64 },
    #[error("pseudo-determinant of the zero matrix is undefined")]
    ZeroMatrix,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(
        "dominance violated: min eig(Σ-Ψ) = {sigma_minus_psi:e}, \
         min eig(Ψ⁺-Σ⁺) = {psi_inv_minus_sigma_inv:e}, ranks {sigma_rank}/{psi_rank}"
    )]
    DominanceViolation {
        sigma_minus_psi: f64,
        psi_inv_minus_sigma_inv: f64,
        sigma_rank: usize,
        psi_rank: usize,
    },
}

/// A symmetric, numerically positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(Matrix);

impl PsdMatrix {
    /// Validates symmetry and semi-definiteness. The stored matrix is the
    /// exact symmetric part of `m`.
    pub fn new(m: Matrix) -> Result<Self, LinalgError> {
        check_symmetric(&m)?;
        let sym = symmetrize(m);
        spectral_of(&sym, DEFAULT_RANK_TOL)?;
        Ok(Self(sym))
    }

    /// Symmetrizes without checking definiteness. Only for values that are
    /// PSD by construction (congruences, sums of PSD terms).
    pub(crate) fn from_psd_unchecked(m: Matrix) -> Self {
        Self(symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    /// Diagonal matrix; negative entries are rejected.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    /// Row-major constructor.
    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self, LinalgError> {
        if data.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Self::new(Matrix::from_row_slice(n, n, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    /// Nonnegative multiple.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0, "PSD cone is closed under nonnegative scaling only");
        Self(&self.0 * factor)
    }

    pub fn spectral(&self) -> SpectralFactorization {
        // Construction already validated PSD-ness.
        spectral_of(&self.0, DEFAULT_RANK_TOL).expect("validated PSD matrix")
    }

    pub fn rank(&self) -> usize {
        self.spectral().rank
    }

    pub fn pseudo_inverse(&self) -> PsdMatrix {
        self.spectral().pseudo_inverse()
    }
}

impl Deref for PsdMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl AsRef<Matrix> for PsdMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// `M = U diag(D) Uᵀ` with eigenvalues in descending order.
///
/// Eigenvalues whose magnitude is below `rank_tol · max|D|` are stored as
/// exact zeros, so `rank` counts only the retained ones and the first
/// `rank` columns of `vectors` span the image of `M`.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    pub vectors: Matrix,
    pub values: Vec<f64>,
    pub rank: usize,
}

impl SpectralFactorization {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let d = Matrix::from_diagonal(&Vector::from_column_slice(&self.values));
        &self.vectors * d * self.vectors.transpose()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// The `i`-th smallest nonzero eigenvalue, counting from 1.
    pub fn nonzero_ascending(&self, i: usize) -> Option<f64> {
        if i == 0 || i > self.rank {
            return None;
        }
        Some(self.values[self.rank - i])
    }

    /// Orthonormal basis of the image, `n x rank`.
    pub fn support_basis(&self) -> Matrix {
        self.vectors.columns(0, self.rank).into_owned()
    }

    /// Orthogonal projector onto the image.
    pub fn projector(&self) -> Matrix {
        let basis = self.support_basis();
        &basis * basis.transpose()
    }

    pub fn pseudo_inverse(&self) -> PsdMatrix {
        let inv: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < self.rank { 1.0 / v } else { 0.0 })
            .collect();
        let d = Matrix::from_diagonal(&Vector::from_vec(inv));
        PsdMatrix::from_psd_unchecked(&self.vectors * d * self.vectors.transpose())
    }

    pub fn pseudo_det(&self) -> Result<f64, LinalgError> {
        if self.rank == 0 {
            return Err(LinalgError::ZeroMatrix);
        }
        Ok(self.values[..self.rank].iter().product())
    }

    /// `U √D`, so that `S Sᵀ` reproduces the factored matrix.
    pub fn sqrt_factor(&self) -> Matrix {
        let mut s = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let root = v.max(0.0).sqrt();
            s.column_mut(j).scale_mut(root);
        }
        s
    }

    /// Columns of the square-root factor that span the image, `n x rank`.
    pub fn support_factor(&self) -> Matrix {
        let mut s = self.support_basis();
        for j in 0..self.rank {
            s.column_mut(j).scale_mut(self.values[j].sqrt());
        }
        s
    }
}

fn symmetrize(m: Matrix) -> Matrix {
    let t = m.transpose();
    (m + t) * 0.5
}

fn check_square(m: &Matrix) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_symmetric(m: &Matrix) -> Result<(), LinalgError> {
    check_square(m)?;
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let (upper, lower) = (m[(i, j)], m[(j, i)]);
            if (upper - lower).abs() > SYMMETRY_TOL * (1.0 + upper.abs()) {
                return Err(LinalgError::NotSymmetric {
                    row: i,
                    col: j,
                    upper,
                    lower,
                });
            }
        }
    }
    Ok(())
}

fn sorted_eigen(m: &Matrix) -> (Matrix, Vec<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        values.push(eig.eigenvalues[src]);
    }
    (vectors, values)
}

fn spectral_of(m: &Matrix, rank_tol: f64) -> Result<SpectralFactorization, LinalgError> {
    let (vectors, mut values) = sorted_eigen(m);
    let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let threshold = rank_tol * scale;
    if let Some(&min) = values.last() {
        if min < -threshold {
            return Err(LinalgError::NotPsd {
                eigenvalue: min,
                threshold,
            });
        }
    }
    let mut rank = 0;
    for v in values.iter_mut() {
        if *v > threshold && *v > 0.0 {
            rank += 1;
        } else {
            *v = 0.0;
        }
    }
    Ok(SpectralFactorization {
        vectors,
        values,
        rank,
    })
}

/// Eigendecomposition of a symmetric PSD matrix with relative rank
/// threshold `rank_tol`.
pub fn spectral(m: &Matrix, rank_tol: f64) -> Result<SpectralFactorization, LinalgError> {
    check_symmetric(m)?;
    spectral_of(&symmetrize(m.clone()), rank_tol)
}

pub fn pseudo_inverse(m: &Matrix) -> Result<PsdMatrix, LinalgError> {
    Ok(spectral(m, DEFAULT_RANK_TOL)?.pseudo_inverse())
}

pub fn pseudo_det(m: &Matrix) -> Result<f64, LinalgError> {
    spectral(m, DEFAULT_RANK_TOL)?.pseudo_det()
}

pub fn sqrt_factor(m: &Matrix) -> Result<Matrix, LinalgError> {
    Ok(spectral(m, DEFAULT_RANK_TOL)?.sqrt_factor())
}

/// Smallest eigenvalue of a symmetric matrix that need not be PSD.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let sym = symmetrize(m.clone());
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// Number of eigenvalues of a symmetric matrix above `DEFAULT_RANK_TOL`
/// times the largest eigenvalue magnitude. Does not require PSD input.
pub fn numerical_rank(m: &Matrix) -> usize {
    let sym = symmetrize(m.clone());
    let values = SymmetricEigen::new(sym).eigenvalues;
    let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    values
        .iter()
        .filter(|&&v| v > DEFAULT_RANK_TOL * scale && v > 0.0)
        .count()
}

/// Outcome of [`check_dominance`] with the quantities it was decided on.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// Smallest eigenvalue of `Σ - Ψ`.
    pub sigma_minus_psi: f64,
    /// Smallest eigenvalue of `Ψ⁺ - Σ⁺`.
    pub psi_inv_minus_sigma_inv: f64,
    pub sigma_rank: usize,
    pub psi_rank: usize,
    /// Frobenius distance between the orthogonal projectors onto the two images.
    pub image_gap: f64,
    pub holds: bool,
}

impl DominanceReport {
    pub(crate) fn violation(&self) -> LinalgError {
        LinalgError::DominanceViolation {
            sigma_minus_psi: self.sigma_minus_psi,
            psi_inv_minus_sigma_inv: self.psi_inv_minus_sigma_inv,
            sigma_rank: self.sigma_rank,
            psi_rank: self.psi_rank,
        }
    }
}

/// Decides `Σ ⪰ Ψ` and `Ψ⁺ ⪰ Σ⁺`. When both orderings hold the report also
/// requires equal ranks and equal images of the square-root factors.
pub fn check_dominance(sigma: &PsdMatrix, psi: &PsdMatrix) -> Result<DominanceReport, LinalgError> {
    if sigma.dim() != psi.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: sigma.dim(),
            found: psi.dim(),
        });
    }
    let s_spec = sigma.spectral();
    let p_spec = psi.spectral();
    Ok(dominance_from_spectra(sigma, psi, &s_spec, &p_spec))
}

pub(crate) fn dominance_from_spectra(
    sigma: &PsdMatrix,
    psi: &PsdMatrix,
    s_spec: &SpectralFactorization,
    p_spec: &SpectralFactorization,
) -> DominanceReport {
    let s_inv = s_spec.pseudo_inverse();
    let p_inv = p_spec.pseudo_inverse();
    let sigma_minus_psi = min_eigenvalue(&(sigma.as_matrix() - psi.as_matrix()));
    let psi_inv_minus_sigma_inv = min_eigenvalue(&(p_inv.as_matrix() - s_inv.as_matrix()));
    let image_gap = (s_spec.projector() - p_spec.projector()).norm();

    let s_scale = s_spec.max_eigenvalue().max(f64::MIN_POSITIVE);
    let inv_scale = p_inv.spectral().max_eigenvalue().max(f64::MIN_POSITIVE);
    let ordered = sigma_minus_psi >= -DOMINANCE_TOL * s_scale
        && psi_inv_minus_sigma_inv >= -DOMINANCE_TOL * inv_scale;
    let holds = ordered && s_spec.rank == p_spec.rank && image_gap <= IMAGE_TOL;
    DominanceReport {
        sigma_minus_psi,
        psi_inv_minus_sigma_inv,
        sigma_rank: s_spec.rank,
        psi_rank: p_spec.rank,
        image_gap,
        holds,
    }
}

/// `Φ = (Σ^{1/2})ᵀ Ψ⁺ Σ^{1/2}` for a dominant pair.
pub fn phi_matrix(sigma: &PsdMatrix, psi: &PsdMatrix) -> Result<PsdMatrix, LinalgError> {
    let report = check_dominance(sigma, psi)?;
    if !report.holds {
        return Err(report.violation());
    }
    let root = sigma.spectral().sqrt_factor();
    let p_inv = psi.pseudo_inverse();
    Ok(PsdMatrix::from_psd_unchecked(
        root.transpose() * p_inv.as_matrix() * root,
    ))
}

/// Gaussian `N(μ, Σ)` with a possibly singular `Σ`, living on the affine
/// set `μ + Im(Σ^{1/2})`.
#[derive(Debug, Clone)]
pub struct DegenerateGaussian {
    mean: Vector,
    spectral: SpectralFactorization,
    factor: Matrix,
}

impl DegenerateGaussian {
    pub fn new(mean: Vector, cov: &PsdMatrix) -> Result<Self, LinalgError> {
        if mean.len() != cov.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        let spectral = cov.spectral();
        let factor = spectral.support_factor();
        Ok(Self {
            mean,
            spectral,
            factor,
        })
    }

    pub fn rank(&self) -> usize {
        self.spectral.rank
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.factor.ncols(), |_, _| rng.sample(StandardNormal));
        &self.mean + &self.factor * z
    }

    /// Log-density with respect to Lebesgue measure on the support, or
    /// `None` when `x` is off the support. Diagnostic only.
    pub fn log_density(&self, x: &Vector) -> Option<f64> {
        let d = x - &self.mean;
        let basis = self.spectral.support_basis();
        let coords = basis.transpose() * &d;
        let off = (&d - &basis * &coords).norm();
        if off > 1e-9 * (1.0 + d.norm()) {
            return None;
        }
        let r = self.spectral.rank;
        let quad: f64 = (0..r)
            .map(|i| coords[i] * coords[i] / self.spectral.values[i])
            .sum();
        let log_pdet: f64 = self.spectral.values[..r].iter().map(|v| v.ln()).sum();
        Some(-0.5 * quad - 0.5 * (r as f64 * (2.0 * std::f64::consts::PI).ln() + log_pdet))
    }
}

/// One draw from `N(mean, cov)`.
pub fn sample_degenerate_gaussian<R: Rng + ?Sized>(
    mean: &Vector,
    cov: &PsdMatrix,
    rng: &mut R,
) -> Result<Vector, LinalgError> {
    Ok(DegenerateGaussian::new(mean.clone(), cov)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_sigma() -> PsdMatrix {
        PsdMatrix::from_diagonal(&[5.0, 5.0, 0.0]).unwrap()
    }

    fn example_psi() -> PsdMatrix {
        PsdMatrix::from_row_slice(3, &[3.0, -1.0, 0.0, -1.0, 3.0, 0.0, 0.0, 0.0, 0.0]).unwrap()
    }

    // Characteristic polynomial of a 2x2 symmetric block: x² - tr x + det.
    fn char_poly_roots(a: f64, b: f64, d: f64) -> (f64, f64) {
        let tr = a + d;
        let det = a * d - b * b;
        let disc = (tr * tr - 4.0 * det).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }

    #[test]
    fn spectral_examples() {
        let f = example_sigma().spectral();
        assert_eq!(f.values, vec![5.0, 5.0, 0.0]);
        assert_eq!(f.rank, 2);

        let f = PsdMatrix::identity(3).spectral();
        assert_eq!(f.rank, 3);
        for v in &f.values {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
        }

        let f = example_psi().spectral();
        let (hi, lo) = char_poly_roots(3.0, -1.0, 3.0);
        assert_relative_eq!(hi, 4.0);
        assert_relative_eq!(lo, 2.0);
        assert_relative_eq!(f.values[0], hi, epsilon = 1e-12);
        assert_relative_eq!(f.values[1], lo, epsilon = 1e-12);
        assert_eq!(f.values[2], 0.0);
        assert_eq!(f.rank, 2);
        assert_eq!(f.nonzero_ascending(1), Some(f.values[1]));
        assert_eq!(f.nonzero_ascending(3), None);
    }

    #[test]
    fn spectral_invariants() {
        let m = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let f = spectral(&m, DEFAULT_RANK_TOL).unwrap();
        assert!((f.reconstruct() - &m).norm() / m.norm() < 1e-9);
        let gram = f.vectors.transpose() * &f.vectors;
        assert!((gram - Matrix::identity(3, 3)).norm() < 1e-10);
        assert!(f.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn spectral_errors() {
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            spectral(&asym, DEFAULT_RANK_TOL),
            Err(LinalgError::NotSymmetric { .. })
        ));
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spectral(&indefinite, DEFAULT_RANK_TOL),
            Err(LinalgError::NotPsd { .. })
        ));
        assert!(matches!(
            PsdMatrix::new(Matrix::zeros(2, 3)),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn pseudo_inverse_examples() {
        let inv = example_sigma().pseudo_inverse();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.2, 0.2, 0.0]));
        assert!((inv.as_matrix() - expected).norm() < 1e-14);

        let inv = PsdMatrix::identity(4).pseudo_inverse();
        assert!((inv.as_matrix() - Matrix::identity(4, 4)).norm() < 1e-14);

        // Adjugate of [[3,-1],[-1,3]] over det 8.
        let psi = example_psi();
        let inv = psi.pseudo_inverse();
        let expected =
            Matrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0]) / 8.0;
        assert!((inv.as_matrix() - &expected).norm() < 1e-12);
        let back = psi.as_matrix() * inv.as_matrix() * psi.as_matrix();
        assert!((back - psi.as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn pseudo_det_examples() {
        assert_relative_eq!(example_sigma().spectral().pseudo_det().unwrap(), 25.0, epsilon = 1e-12);
        assert_relative_eq!(example_psi().spectral().pseudo_det().unwrap(), 8.0, epsilon = 1e-12);
        assert_relative_eq!(PsdMatrix::identity(5).spectral().pseudo_det().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(
            PsdMatrix::zeros(3).spectral().pseudo_det(),
            Err(LinalgError::ZeroMatrix)
        );
    }

    #[test]
    fn sqrt_factor_examples() {
        let s = sqrt_factor(&Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 0.0]))).unwrap();
        assert_relative_eq!(s[(0, 0)].abs(), 2.0, epsilon = 1e-14);
        assert_eq!(s[(1, 1)], 0.0);
        assert_eq!(s[(1, 0)], 0.0);

        let s = sqrt_factor(&Matrix::identity(2, 2)).unwrap();
        let sst = &s * s.transpose();
        assert!((sst - Matrix::identity(2, 2)).norm() < 1e-14);
        for j in 0..2 {
            assert_relative_eq!(s.column(j).norm(), 1.0, epsilon = 1e-14);
        }

        let sigma = example_sigma();
        let s = sigma.spectral().sqrt_factor();
        let sst = &s * s.transpose();
        assert!((sst - sigma.as_matrix()).norm() / sigma.norm() < 1e-9);
    }

    #[test]
    fn phi_examples() {
        let phi = phi_matrix(&example_sigma(), &example_psi()).unwrap();
        let f = phi.spectral();
        assert_eq!(f.rank, 2);
        assert_relative_eq!(f.values[0], 2.5, epsilon = 1e-12);
        assert_relative_eq!(f.values[1], 1.25, epsilon = 1e-12);
        let det_identity = example_sigma().spectral().pseudo_det().unwrap()
            * example_psi().pseudo_inverse().spectral().pseudo_det().unwrap();
        assert_relative_eq!(f.pseudo_det().unwrap(), 25.0 / 8.0, epsilon = 1e-12);
        assert_relative_eq!(det_identity, 25.0 / 8.0, epsilon = 1e-12);

        let m = PsdMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let phi = phi_matrix(&m, &m).unwrap();
        assert!((phi.as_matrix() - Matrix::identity(2, 2)).norm() < 1e-12);

        let phi = phi_matrix(&PsdMatrix::identity(2).scaled(2.0), &PsdMatrix::identity(2)).unwrap();
        assert!((phi.as_matrix() - Matrix::identity(2, 2) * 2.0).norm() < 1e-12);
    }

    #[test]
    fn phi_rejects_non_dominant_pair() {
        let err = phi_matrix(&PsdMatrix::identity(2), &PsdMatrix::identity(2).scaled(2.0));
        assert!(matches!(err, Err(LinalgError::DominanceViolation { .. })));
    }

    #[test]
    fn dominance_examples() {
        let r = check_dominance(&example_sigma(), &example_psi()).unwrap();
        assert!(r.holds);
        assert_eq!((r.sigma_rank, r.psi_rank), (2, 2));
        assert!(r.image_gap < 1e-12);

        let r = check_dominance(&PsdMatrix::identity(2), &PsdMatrix::identity(2).scaled(2.0)).unwrap();
        assert!(!r.holds);
        assert!(r.sigma_minus_psi < 0.0);

        let psi = PsdMatrix::from_diagonal(&[3.0, 3.0, 1.0]).unwrap();
        let r = check_dominance(&example_sigma(), &psi).unwrap();
        assert!(!r.holds);
        assert_relative_eq!(r.sigma_minus_psi, -1.0, epsilon = 1e-12);
        assert!(r.psi_inv_minus_sigma_inv >= 0.0);

        assert!(matches!(
            check_dominance(&PsdMatrix::identity(2), &PsdMatrix::identity(3)),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sampling_zero_covariance_is_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = Vector::from_vec(vec![1.5, -2.0]);
        for _ in 0..10 {
            let x = sample_degenerate_gaussian(&mu, &PsdMatrix::zeros(2), &mut rng).unwrap();
            assert_eq!(x, mu);
        }
    }

    #[test]
    fn sampling_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mu = Vector::from_vec(vec![0.0, 1.0, 7.25]);
        let g = DegenerateGaussian::new(mu.clone(), &example_sigma()).unwrap();
        for _ in 0..1000 {
            let x = g.sample(&mut rng);
            assert_eq!(x[2], 7.25);
            assert!(g.log_density(&x).is_some());
        }
        let off = Vector::from_vec(vec![0.0, 1.0, 8.0]);
        assert!(g.log_density(&off).is_none());
    }

    #[test]
    fn sampling_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DegenerateGaussian::new(Vector::zeros(2), &PsdMatrix::identity(2)).unwrap();
        let n = 100_000;
        let mut acc = Matrix::zeros(2, 2);
        for _ in 0..n {
            let x = g.sample(&mut rng);
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((acc[(i, j)] - target).abs() < 0.03, "{acc}");
            }
        }
    }

    #[test]
    fn log_density_matches_standard_normal() {
        let g = DegenerateGaussian::new(Vector::zeros(1), &PsdMatrix::identity(1)).unwrap();
        let ld = g.log_density(&Vector::from_vec(vec![0.0])).unwrap();
        assert_relative_eq!(ld, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);
    }
}
