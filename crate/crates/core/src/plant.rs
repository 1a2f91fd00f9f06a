//! The monitored plant and the sensor's on-board Kalman filter.
//!
//! The plant is `x_{k+1} = A x_k + w_k`, `y_k = C x_k + v_k` with
//! `w ~ N(0, Q)`, `v ~ N(0, R)`. The sensor runs a Kalman filter and, after
//! a short transient, operates at the steady-state filtered covariance `P̄`.
//!
//! Covariance propagation uses `h(X) = A X Aᵀ + Q`, the one-step open-loop
//! prediction. With this operator `h(P̄) - P̄` is the covariance of the
//! steady-state correction `K (y - C A x̂)`, i.e. of the one-step increment
//! of the local estimate.

use std::borrow::Cow;

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::psdlin::{LinalgError, Matrix, PsdMatrix, Vector};

/// Iteration tolerance on the Frobenius change of the Riccati recursion.
pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 100_000;

/// The local filter switches to the frozen steady-state gain once its
/// covariance is this close to `P̄`.
const STEADY_SWITCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{name} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        name: &'static str,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("(A, C) is not detectable: unobservable mode {re}{im:+}i")]
    NotDetectable { re: f64, im: f64 },
    #[error("(A, Q^1/2) is not stabilizable: unreachable mode {re}{im:+}i")]
    NotStabilizable { re: f64, im: f64 },
    #[error("R is not positive definite (min eigenvalue {min_eigenvalue})")]
    SingularMeasurementNoise { min_eigenvalue: f64 },
    #[error("Riccati recursion did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
}

/// LTI plant with Gaussian process and measurement noise.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: Matrix,
    c: Matrix,
    q: PsdMatrix,
    r: PsdMatrix,
    pi0: PsdMatrix,
    q_factor: Matrix,
    r_factor: Matrix,
}

fn check_shape(
    name: &'static str,
    m: &Matrix,
    rows: usize,
    cols: usize,
) -> Result<(), ModelError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(ModelError::Shape {
            name,
            rows: m.nrows(),
            cols: m.ncols(),
            expected_rows: rows,
            expected_cols: cols,
        });
    }
    Ok(())
}

impl SystemModel {
    /// Builds a model after checking that `(A, C)` is detectable and
    /// `(A, Q^{1/2})` is stabilizable (PBH rank tests on the modes outside
    /// the open unit disc), which is what the Riccati recursion needs.
    ///
    /// When `pi0` is `None` the initial covariance defaults to the
    /// stationary covariance of the state if `A` is Schur stable, and to
    /// the steady-state filtered covariance `P̄` otherwise.
    pub fn new(
        a: Matrix,
        c: Matrix,
        q: PsdMatrix,
        r: PsdMatrix,
        pi0: Option<PsdMatrix>,
    ) -> Result<Self, ModelError> {
        let n = a.nrows();
        check_shape("A", &a, n, n)?;
        let m = c.nrows();
        check_shape("C", &c, m, n)?;
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;

        let r_spec = r.spectral();
        if r_spec.rank < m {
            return Err(ModelError::SingularMeasurementNoise {
                min_eigenvalue: r_spec.values[m - 1],
            });
        }
        let q_factor = q.spectral().support_factor();
        check_pbh(&a, &c, &q_factor)?;
        let r_factor = r_spec.support_factor();
        let pi0_given = pi0.is_some();
        if let Some(p) = &pi0 {
            check_shape("Pi0", p, n, n)?;
        }
        let mut model = Self {
            pi0: pi0.unwrap_or_else(|| PsdMatrix::zeros(n)),
            a,
            c,
            q,
            r,
            q_factor,
            r_factor,
        };
        if !pi0_given {
            model.pi0 = if model.is_stable() {
                stationary_state_covariance(&model.a, &model.q)
            } else {
                steady_state_covariance(&model, RICCATI_TOL, RICCATI_MAX_ITER)?
            };
        }
        Ok(model)
    }

    /// Two-state benchmark plant with `Q = R = I`, used throughout the
    /// examples and tests. Its `A` has spectral radius of about 1.071.
    pub fn two_state_benchmark() -> Self {
        let a = Matrix::from_row_slice(2, 2, &[0.99, 0.3, 0.1, 0.7]);
        let c = Matrix::from_row_slice(2, 2, &[2.3, 1.0, 1.0, 1.8]);
        Self::new(a, c, PsdMatrix::identity(2), PsdMatrix::identity(2), None)
            .expect("benchmark plant is valid")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn q(&self) -> &PsdMatrix {
        &self.q
    }

    pub fn r(&self) -> &PsdMatrix {
        &self.r
    }

    pub fn pi0(&self) -> &PsdMatrix {
        &self.pi0
    }

    pub fn with_pi0(mut self, pi0: PsdMatrix) -> Result<Self, ModelError> {
        let n = self.state_dim();
        check_shape("Pi0", &pi0, n, n)?;
        self.pi0 = pi0;
        Ok(self)
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    pub(crate) fn sample_process_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        gaussian_from_factor(&self.q_factor, rng)
    }

    pub(crate) fn sample_measurement_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        gaussian_from_factor(&self.r_factor, rng)
    }
}

fn gaussian_from_factor<R: Rng + ?Sized>(factor: &Matrix, rng: &mut R) -> Vector {
    let z = Vector::from_fn(factor.ncols(), |_, _| rng.sample(StandardNormal));
    factor * z
}

fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    let tol = 1e-9 * max.max(1.0) * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&v| v > tol).count()
}

fn check_pbh(a: &Matrix, c: &Matrix, q_factor: &Matrix) -> Result<(), ModelError> {
    let n = a.nrows();
    let to_complex = |m: &Matrix| m.map(|v| Complex::new(v, 0.0));
    let ac = to_complex(a);
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.norm() < 1.0 {
            continue;
        }
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * *lambda;

        let mut obs = DMatrix::<Complex<f64>>::zeros(n + c.nrows(), n);
        obs.view_mut((0, 0), (n, n)).copy_from(&shifted);
        obs.view_mut((n, 0), (c.nrows(), n)).copy_from(&to_complex(c));
        if complex_rank(&obs) < n {
            return Err(ModelError::NotDetectable {
                re: lambda.re,
                im: lambda.im,
            });
        }

        let mut reach = DMatrix::<Complex<f64>>::zeros(n, n + q_factor.ncols());
        reach.view_mut((0, 0), (n, n)).copy_from(&shifted);
        reach
            .view_mut((0, n), (n, q_factor.ncols()))
            .copy_from(&to_complex(q_factor));
        if complex_rank(&reach) < n {
            return Err(ModelError::NotStabilizable {
                re: lambda.re,
                im: lambda.im,
            });
        }
    }
    Ok(())
}

fn spectral_radius(a: &Matrix) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solution of `X = A X Aᵀ + Q` by the doubling iteration. Requires a
/// Schur-stable `A`.
pub fn stationary_state_covariance(a: &Matrix, q: &PsdMatrix) -> PsdMatrix {
    let mut x = q.as_matrix().clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let step = &ak * &x * ak.transpose();
        let done = step.norm() <= f64::EPSILON * x.norm();
        x += step;
        if done {
            break;
        }
        ak = &ak * &ak;
    }
    PsdMatrix::from_psd_unchecked(x)
}

/// `h(X) = A X Aᵀ + Q`.
pub fn lyapunov_step(x: &PsdMatrix, model: &SystemModel) -> Result<PsdMatrix, LinalgError> {
    if x.dim() != model.state_dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: model.state_dim(),
            found: x.dim(),
        });
    }
    Ok(PsdMatrix::from_psd_unchecked(
        model.a() * x.as_matrix() * model.a().transpose() + model.q().as_matrix(),
    ))
}

/// `h` applied `times` times.
pub fn lyapunov_power(x: &PsdMatrix, model: &SystemModel, times: usize) -> Result<PsdMatrix, LinalgError> {
    let mut cur = x.clone();
    for _ in 0..times {
        cur = lyapunov_step(&cur, model)?;
    }
    Ok(cur)
}

/// One predict-correct step of the covariance recursion. Returns the
/// filtered covariance and the gain.
fn riccati_step(p: &Matrix, model: &SystemModel) -> (Matrix, Matrix) {
    let a = model.a();
    let c = model.c();
    let prior = a * p * a.transpose() + model.q().as_matrix();
    let s = c * &prior * c.transpose() + model.r().as_matrix();
    let s_inv = s
        .cholesky()
        .expect("innovation covariance is positive definite")
        .inverse();
    let gain = &prior * c.transpose() * s_inv;
    let n = model.state_dim();
    let ikc = Matrix::identity(n, n) - &gain * c;
    // Joseph form keeps the iterate symmetric PSD.
    let post = &ikc * &prior * ikc.transpose() + &gain * model.r().as_matrix() * gain.transpose();
    let post = (&post + post.transpose()) * 0.5;
    (post, gain)
}

/// Fixed point `P̄` of the filtered Riccati recursion, iterated from `Π₀`.
pub fn steady_state_covariance(
    model: &SystemModel,
    tol: f64,
    max_iter: usize,
) -> Result<PsdMatrix, ModelError> {
    steady_state_from(model, model.pi0(), tol, max_iter)
}

/// As [`steady_state_covariance`] with an explicit starting covariance.
pub fn steady_state_from(
    model: &SystemModel,
    start: &PsdMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<PsdMatrix, ModelError> {
    let mut p = start.as_matrix().clone();
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let (next, _) = riccati_step(&p, model);
        change = (&next - &p).norm();
        p = next;
        if change < tol {
            return Ok(PsdMatrix::from_psd_unchecked(p));
        }
    }
    Err(ModelError::NoConvergence {
        iterations: max_iter,
        change,
    })
}

/// Steady-state quantities of the local filter.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Filtered covariance `P̄`.
    pub p_bar: PsdMatrix,
    /// `h(P̄)`.
    pub predicted: PsdMatrix,
    /// Steady-state Kalman gain, `n x m`.
    pub gain: Matrix,
    /// `h(P̄) - P̄`, the covariance of the one-step increment of the local estimate.
    pub increment: PsdMatrix,
}

impl SteadyState {
    pub fn compute(model: &SystemModel) -> Result<Self, ModelError> {
        let p_bar = steady_state_covariance(model, RICCATI_TOL, RICCATI_MAX_ITER)?;
        let (_, gain) = riccati_step(p_bar.as_matrix(), model);
        let predicted = lyapunov_step(&p_bar, model)?;
        let diff = predicted.as_matrix() - p_bar.as_matrix();
        let increment = PsdMatrix::new(diff)?;
        Ok(Self {
            p_bar,
            predicted,
            gain,
            increment,
        })
    }
}

/// Advances the plant one slot: `x' = A x + w`, `y' = C x' + v`.
pub fn simulate_step<R: Rng + ?Sized>(
    x: &Vector,
    model: &SystemModel,
    rng: &mut R,
) -> (Vector, Vector) {
    let w = model.sample_process_noise(rng);
    let x_next = model.a() * x + w;
    let v = model.sample_measurement_noise(rng);
    let y_next = model.c() * &x_next + v;
    (x_next, y_next)
}

/// Draws an initial state from `N(0, Π₀)`.
pub fn sample_initial_state<R: Rng + ?Sized>(model: &SystemModel, rng: &mut R) -> Vector {
    gaussian_from_factor(&model.pi0().spectral().support_factor(), rng)
}

/// The sensor's Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFilter {
    pub estimate: Vector,
    pub covariance: PsdMatrix,
    steady: bool,
}

impl LocalFilter {
    /// `x̂ = 0`, `P = Π₀`.
    pub fn new(model: &SystemModel) -> Self {
        Self {
            estimate: Vector::zeros(model.state_dim()),
            covariance: model.pi0().clone(),
            steady: false,
        }
    }

    /// A filter already at steady state.
    pub fn at_steady_state(estimate: Vector, steady: &SteadyState) -> Self {
        Self {
            estimate,
            covariance: steady.p_bar.clone(),
            steady: true,
        }
    }

    pub fn is_steady(&self) -> bool {
        self.steady
    }

    /// Pins the covariance to `P̄` and switches to the fixed gain.
    pub fn freeze(mut self, steady: &SteadyState) -> Self {
        self.covariance = steady.p_bar.clone();
        self.steady = true;
        self
    }

    /// Predict with `(A, Q)` and correct with `(C, R)`.
    pub fn kalman_update(self, y: &Vector, model: &SystemModel, steady: &SteadyState) -> Self {
        let predicted = model.a() * &self.estimate;
        let innovation = y - model.c() * &predicted;
        if self.steady {
            return Self {
                estimate: predicted + &steady.gain * innovation,
                covariance: steady.p_bar.clone(),
                steady: true,
            };
        }
        let (post, gain) = riccati_step(self.covariance.as_matrix(), model);
        let estimate = predicted + gain * innovation;
        if (&post - steady.p_bar.as_matrix()).norm() < STEADY_SWITCH_TOL {
            Self {
                estimate,
                covariance: steady.p_bar.clone(),
                steady: true,
            }
        } else {
            Self {
                estimate,
                covariance: PsdMatrix::from_psd_unchecked(post),
                steady: false,
            }
        }
    }
}

/// `A^k` by repeated squaring.
pub fn matrix_power(a: &Matrix, mut k: usize) -> Matrix {
    let n = a.nrows();
    let mut result = Matrix::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Powers of `A` precomputed up to a fixed exponent; larger exponents
/// fall back to repeated squaring. Read-only once built.
#[derive(Debug, Clone)]
pub struct MatrixPowers {
    base: Matrix,
    table: Vec<Matrix>,
}

impl MatrixPowers {
    pub fn new(base: &Matrix, max_cached: usize) -> Self {
        let n = base.nrows();
        let mut table = Vec::with_capacity(max_cached + 1);
        table.push(Matrix::identity(n, n));
        for k in 1..=max_cached {
            let next = &table[k - 1] * base;
            table.push(next);
        }
        Self {
            base: base.clone(),
            table,
        }
    }

    pub fn get(&self, k: usize) -> Cow<'_, Matrix> {
        match self.table.get(k) {
            Some(m) => Cow::Borrowed(m),
            None => Cow::Owned(matrix_power(&self.base, k)),
        }
    }
}

/// `ε = x̂ˢ_now - A^τ x̂ˢ_last`.
pub fn incremental_innovation(
    local_now: &Vector,
    last_received: &Vector,
    tau: usize,
    powers: &MatrixPowers,
) -> Vector {
    debug_assert!(tau >= 1);
    local_now - &*powers.get(tau) * last_received
}
