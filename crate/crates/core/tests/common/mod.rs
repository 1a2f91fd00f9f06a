//! Test-side oracles, written independently of the library routines they
//! check.
#![allow(dead_code)]

use ddpc::psdlin::{Matrix, PsdMatrix, Vector};
use nalgebra::{Matrix2, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random orthonormal `n × n` matrix.
pub fn orthonormal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    gaussian_matrix(n, n, rng).qr().q()
}

/// Builds a dominant pair from its shape: a random `r`-dimensional support
/// `U_r`, `Σ = U_r D U_rᵀ`, and `Φ` with eigenvalues `phi_eigs ≥ 1` in
/// support coordinates, then `Ψ = Σ^{1/2} Φ⁻¹ (Σ^{1/2})ᵀ`.
pub fn phi_first_pair<R: Rng + ?Sized>(n: usize, phi_eigs: &[f64], rng: &mut R) -> (PsdMatrix, PsdMatrix) {
    let r = phi_eigs.len();
    assert!(r >= 1 && r <= n && phi_eigs.iter().all(|&l| l >= 1.0));
    let u = orthonormal(n, rng);
    let ur = u.columns(0, r).into_owned();
    let d = Vector::from_fn(r, |_, _| 0.2 + 4.0 * rng.random::<f64>());
    let root = &ur * Matrix::from_diagonal(&d.map(f64::sqrt));
    let v = orthonormal(r, rng);
    let phi_inv = &v * Matrix::from_diagonal(&Vector::from_iterator(r, phi_eigs.iter().map(|l| 1.0 / l))) * v.transpose();
    let sigma = &root * root.transpose();
    let psi = &root * phi_inv * root.transpose();
    (
        PsdMatrix::new((&sigma + sigma.transpose()) * 0.5).unwrap(),
        PsdMatrix::new((&psi + psi.transpose()) * 0.5).unwrap(),
    )
}

/// Random PSD matrix of exact rank `r`.
pub fn random_psd<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> PsdMatrix {
    let l = gaussian_matrix(n, r, rng);
    let m = &l * l.transpose();
    PsdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Steady-state filtered and predicted covariances of a 2-state plant by
/// plain iteration of the prediction-form Riccati map.
pub fn riccati_oracle(a: Matrix2<f64>, c: Matrix2<f64>, q: Matrix2<f64>, r: Matrix2<f64>) -> (Matrix2<f64>, Matrix2<f64>) {
    let mut pred = Matrix2::identity();
    for _ in 0..10_000 {
        let s = c * pred * c.transpose() + r;
        let gain = pred * c.transpose() * s.try_inverse().unwrap();
        let filt = pred - gain * c * pred;
        let next = a * filt * a.transpose() + q;
        if (next - pred).norm() < 1e-15 {
            pred = next;
            break;
        }
        pred = next;
    }
    let s = c * pred * c.transpose() + r;
    let filt = pred - pred * c.transpose() * s.try_inverse().unwrap() * c * pred;
    (filt, pred)
}

pub fn benchmark_matrices() -> (Matrix2<f64>, Matrix2<f64>, Matrix2<f64>, Matrix2<f64>) {
    (
        Matrix2::new(0.99, 0.3, 0.1, 0.7),
        Matrix2::new(2.3, 1.0, 1.0, 1.8),
        Matrix2::identity(),
        Matrix2::identity(),
    )
}

pub fn to_dynamic(m: &Matrix2<f64>) -> Matrix {
    Matrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Eigenvalues and eigenvectors of a symmetric 2×2 matrix.
pub fn sym_eigen(m: &Matrix2<f64>) -> SymmetricEigen<f64, nalgebra::U2> {
    SymmetricEigen::new(*m)
}

/// `max_ij |Ĉ_ij - C_ij| / √(C_ii C_jj)`.
pub fn entrywise_gap(empirical: &Matrix, expected: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..expected.nrows() {
        for j in 0..expected.ncols() {
            let scale = (expected[(i, i)] * expected[(j, j)]).sqrt();
            worst = worst.max((empirical[(i, j)] - expected[(i, j)]).abs() / scale);
        }
    }
    worst
}

/// Standard normal CDF via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance of `z` from `N(0, 1)`.
pub fn ks_distance(mut z: Vec<f64>) -> f64 {
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
