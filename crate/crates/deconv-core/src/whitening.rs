//! Covariance estimation and the approximate inverse square root that yields
//! the decorrelating transform.
//!
//! Given a patch matrix `X` (one flattened receptive field per row), the
//! transform is `(X − μ) · D` with `D ≈ (Cov + εI)^(−1/2)`. Two routes to `D`
//! are provided: the coupled Newton–Schulz iteration used in training, and a
//! full Jacobi eigendecomposition that serves as an independent reference for
//! it. The two share no code beyond the tensor kernels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Iterations of the spectral-bound power method; fixed so runs are
/// reproducible bit-for-bit.
const POWER_ITERS: usize = 24;
/// Residual above which a [`DeconvMatrix`] carries a convergence warning.
const RESIDUAL_WARN: f64 = 0.1;
/// Largest matrix the eigendecomposition route accepts.
const EIGEN_MAX_DIM: usize = 512;
/// Off-diagonal reduction target of the Jacobi sweep, relative to ‖A‖_F.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Covariance summary of an N×d sample matrix.
///
/// `cov` already contains the ε ridge on its diagonal; `epsilon` records how
/// much was added.
#[derive(Debug, Clone)]
pub struct CovarianceStats<T> {
    pub cov: Tensor<T>,
    pub mean: Tensor<T>,
    pub sample_count: usize,
    pub epsilon: T,
}

impl<T: Scalar> CovarianceStats<T> {
    /// Wrap an existing (already regularized) covariance matrix.
    pub fn from_parts(cov: Tensor<T>, mean: Tensor<T>, sample_count: usize, epsilon: T) -> Result<Self> {
        let (m, n) = cov.dims2("CovarianceStats")?;
        if m != n || mean.len() != n {
            return Err(Error::ShapeMismatch {
                op: "CovarianceStats",
                left: cov.shape().to_vec(),
                right: mean.shape().to_vec(),
            });
        }
        Ok(CovarianceStats { cov, mean, sample_count, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Decorrelating transform produced by one of the inverse-square-root routes.
#[derive(Debug, Clone)]
pub struct DeconvMatrix<T> {
    pub matrix: Tensor<T>,
    pub iterations_used: usize,
    /// ‖D·Cov·D − I‖_F, always recomputed from the final `D`, never taken
    /// from the iteration's own bookkeeping.
    pub residual: f64,
    /// False when `residual` exceeds the warning threshold.
    pub converged: bool,
}

impl<T: Scalar> DeconvMatrix<T> {
    fn from_matrix(matrix: Tensor<T>, cov: &Tensor<T>, iterations_used: usize) -> Result<Self> {
        let residual = recompute_residual(&matrix, cov)?;
        if !residual.is_finite() {
            return Err(Error::NotPositiveDefinite {
                detail: "inverse square root diverged to non-finite values".into(),
            });
        }
        Ok(DeconvMatrix {
            matrix,
            iterations_used,
            residual,
            converged: residual <= RESIDUAL_WARN,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[0]
    }
}

/// ‖D·A·D − I‖_F.
fn recompute_residual<T: Scalar>(d: &Tensor<T>, a: &Tensor<T>) -> Result<f64> {
    let mut m = d.matmul(a)?.matmul(d)?;
    m.add_diagonal(-T::one())?;
    Ok(m.frobenius_norm().as_f64())
}

/// Sample covariance of the rows of `x`, divided by N (not N−1), with an
/// ε ridge added to the diagonal. The result is exactly symmetric.
pub fn covariance<T: Scalar>(x: &Tensor<T>, epsilon: T) -> Result<CovarianceStats<T>> {
    let (n, _) = x.dims2("covariance")?;
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n });
    }
    if epsilon < T::zero() {
        return Err(Error::InvalidConfig(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if !x.is_all_finite() {
        return Err(Error::NonFinite { context: "covariance input".into() });
    }
    let mean = x.col_means()?;
    let centered = center_rows(x, &mean)?;
    let mut cov = centered.matmul_tn(&centered)?;
    cov.scale_assign(T::one() / T::from_usize(n));
    // Kill the floating-point asymmetry of the accumulated product so the
    // symmetry invariant holds exactly.
    symmetrize(&mut cov);
    cov.add_diagonal(epsilon)?;
    Ok(CovarianceStats { cov, mean, sample_count: n, epsilon })
}

/// [`covariance`] with the ridge chosen relative to the spectrum:
/// ε = `coeff` · trace(Cov)/d, i.e. proportional to the mean eigenvalue.
pub fn covariance_with_relative_epsilon<T: Scalar>(x: &Tensor<T>, coeff: T) -> Result<CovarianceStats<T>> {
    let mut stats = covariance(x, T::zero())?;
    let d = stats.dim();
    let epsilon = coeff * stats.cov.trace()? / T::from_usize(d);
    stats.cov.add_diagonal(epsilon)?;
    stats.epsilon = epsilon;
    Ok(stats)
}

fn center_rows<T: Scalar>(x: &Tensor<T>, mean: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, d) = x.dims2("center_rows")?;
    if mean.len() != d {
        return Err(Error::ShapeMismatch {
            op: "center_rows",
            left: x.shape().to_vec(),
            right: mean.shape().to_vec(),
        });
    }
    let mut out = x.clone();
    let m = mean.data();
    for row in out.data_mut().chunks_exact_mut(d) {
        for (v, &mu) in row.iter_mut().zip(m.iter()) {
            *v = *v - mu;
        }
    }
    Ok(out)
}

fn symmetrize<T: Scalar>(a: &mut Tensor<T>) {
    let d = a.shape()[0];
    let half = T::from_f64(0.5);
    let data = a.data_mut();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = (data[i * d + j] + data[j * d + i]) * half;
            data[i * d + j] = v;
            data[j * d + i] = v;
        }
    }
}

/// Coupled Newton–Schulz iteration for `Cov^(−1/2)`.
///
/// With `A` the stored covariance, the iteration runs on `A/s`:
/// `Y₀ = A/s`, `Z₀ = I`, `P = (3I − ZₖYₖ)/2`, `Yₖ₊₁ = YₖP`, `Zₖ₊₁ = PZₖ`,
/// and `D = Z_K/√s`. The scaling `s` is the midpoint of a power-method
/// estimate of the spectral interval, which maps every eigenvalue of `A/s`
/// into the iteration's convergence region and roughly equalizes the
/// convergence rate of both spectral edges.
pub fn inverse_sqrt_newton<T: Scalar>(stats: &CovarianceStats<T>, iterations: usize) -> Result<DeconvMatrix<T>> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("newton iterations must be >= 1".into()));
    }
    let a = &stats.cov;
    let d = stats.dim();
    if !a.is_all_finite() {
        return Err(Error::NonFinite { context: "inverse_sqrt_newton input".into() });
    }
    let (lam_max, lam_min) = spectral_interval(a)?;
    // The shifted power method overestimates the smallest eigenvalue in exact
    // arithmetic, so an estimate below the rounding floor proves the matrix
    // is not positive definite. Estimates inside the floor (e.g. a ridge of
    // 1e-5·trace/d measured in f32) are clamped to it.
    let floor = lam_max * T::epsilon() * T::from_f64(64.0);
    if !lam_max.is_finite() || lam_max <= T::zero() || lam_min < -floor {
        return Err(Error::NotPositiveDefinite {
            detail: format!("estimated spectral interval [{lam_min}, {lam_max}] of the {d}x{d} covariance"),
        });
    }
    let lam_min = lam_min.max(floor);
    let s = (lam_max + lam_min) / T::from_f64(2.0);

    let mut y = a.clone();
    y.scale_assign(T::one() / s);
    let mut z = Tensor::identity(d);
    let neg_half = T::from_f64(-0.5);
    let three_half = T::from_f64(1.5);
    for _ in 0..iterations {
        let mut p = z.matmul(&y)?;
        p.scale_assign(neg_half);
        p.add_diagonal(three_half)?;
        y = y.matmul(&p)?;
        z = p.matmul(&z)?;
        if !z.is_all_finite() {
            return Err(Error::NotPositiveDefinite {
                detail: "Newton–Schulz iteration produced non-finite values".into(),
            });
        }
    }
    z.scale_assign(T::one() / s.sqrt());
    DeconvMatrix::from_matrix(z, a, iterations)
}

/// `Cov^(−1/2)` via full symmetric eigendecomposition (cyclic Jacobi).
///
/// Exact to solver tolerance; independent of the Newton route and therefore
/// usable as a reference for it. O(d³) per sweep, capped at d ≤ 512.
pub fn inverse_sqrt_eigen<T: Scalar>(stats: &CovarianceStats<T>) -> Result<DeconvMatrix<T>> {
    let a = &stats.cov;
    let d = stats.dim();
    if d > EIGEN_MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "eigendecomposition route accepts at most {EIGEN_MAX_DIM}x{EIGEN_MAX_DIM}, got {d}x{d}"
        )));
    }
    if !a.is_all_finite() {
        return Err(Error::NonFinite { context: "inverse_sqrt_eigen input".into() });
    }
    let (eigvals, eigvecs, sweeps) = jacobi_eigen(a)?;
    for &lam in &eigvals {
        if lam <= T::zero() {
            return Err(Error::NotPositiveDefinite {
                detail: format!("eigenvalue {lam} <= 0"),
            });
        }
    }
    // D = V · diag(λ^(-1/2)) · Vᵀ
    let mut scaled = eigvecs.clone(); // columns are eigenvectors
    {
        let data = scaled.data_mut();
        for (j, &lam) in eigvals.iter().enumerate() {
            let inv = T::one() / lam.sqrt();
            for i in 0..d {
                data[i * d + j] *= inv;
            }
        }
    }
    let vt = eigvecs.transpose()?;
    let dm = scaled.matmul(&vt)?;
    DeconvMatrix::from_matrix(dm, a, sweeps)
}

/// Apply the decorrelating transform: `(x − mean) · D` with the mean
/// broadcast across rows.
pub fn apply_decorrelation<T: Scalar>(
    x: &Tensor<T>,
    stats: &CovarianceStats<T>,
    d: &DeconvMatrix<T>,
) -> Result<Tensor<T>> {
    let (_, cols) = x.dims2("apply_decorrelation")?;
    if cols != stats.dim() || cols != d.dim() {
        return Err(Error::ShapeMismatch {
            op: "apply_decorrelation",
            left: x.shape().to_vec(),
            right: d.matrix.shape().to_vec(),
        });
    }
    let centered = center_rows(x, &stats.mean)?;
    centered.matmul(&d.matrix)
}

/// Power-method estimate of `[λ_min, λ_max]` of a symmetric matrix.
///
/// `λ_max` comes from a Rayleigh quotient after a fixed number of
/// max-normalized power steps; `λ_min` from the same procedure applied to
/// `2λ̂_max·I − A`. Both Rayleigh quotients shade toward the interior of the
/// spectrum, so the returned interval is contained in the true one.
fn spectral_interval<T: Scalar>(a: &Tensor<T>) -> Result<(T, T)> {
    let lam_max = rayleigh_top(a)?;
    if lam_max <= T::zero() {
        return Ok((lam_max, lam_max));
    }
    let two = T::from_f64(2.0);
    let mut shifted = a.clone();
    shifted.scale_assign(-T::one());
    shifted.add_diagonal(two * lam_max)?;
    let top_shifted = rayleigh_top(&shifted)?;
    let lam_min = two * lam_max - top_shifted;
    Ok((lam_max, lam_min))
}

fn rayleigh_top<T: Scalar>(a: &Tensor<T>) -> Result<T> {
    let (d, _) = a.dims2("rayleigh_top")?;
    let mut v = vec![T::one(); d];
    let mut w = vec![T::zero(); d];
    for _ in 0..POWER_ITERS {
        matvec(a, &v, &mut w);
        let peak = w.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        if peak == T::zero() {
            return Ok(T::zero());
        }
        let inv = T::one() / peak;
        for (vi, &wi) in v.iter_mut().zip(w.iter()) {
            *vi = wi * inv;
        }
    }
    matvec(a, &v, &mut w);
    let num = v.iter().zip(w.iter()).map(|(&x, &y)| x * y).fold(T::zero(), |s, t| s + t);
    let den = v.iter().map(|&x| x * x).fold(T::zero(), |s, t| s + t);
    Ok(num / den)
}

fn matvec<T: Scalar>(a: &Tensor<T>, v: &[T], out: &mut [T]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a.data()[i * d..(i + 1) * d];
        *o = row.iter().zip(v.iter()).map(|(&x, &y)| x * y).fold(T::zero(), |s, t| s + t);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns (eigenvalues, eigenvector matrix with eigenvectors as columns,
/// sweeps used).
fn jacobi_eigen<T: Scalar>(a: &Tensor<T>) -> Result<(Vec<T>, Tensor<T>, usize)> {
    let (d, _) = a.dims2("jacobi_eigen")?;
    let mut m = a.clone().into_data();
    let mut v = Tensor::<T>::identity(d).into_data();
    let norm = a.frobenius_norm();
    let tol = norm * T::from_f64(JACOBI_TOL);

    let off = |m: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                s = s + m[i * d + j] * m[i * d + j];
            }
        }
        (s + s).sqrt()
    };

    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS && off(&m) > tol {
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                // Rotation angle: tan(2θ) = 2a_pq / (a_qq − a_pp)
                let theta = (aqq - app) / (T::from_f64(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
    }

    let eigvals = (0..d).map(|i| m[i * d + i]).collect();
    Ok((eigvals, Tensor::new(vec![d, d], v)?, sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn stats_from_cov(cov: Tensor<f64>) -> CovarianceStats<f64> {
        let d = cov.shape()[0];
        CovarianceStats::from_parts(cov, Tensor::zeros(vec![d]).unwrap(), 2, 0.0).unwrap()
    }

    /// Naive two-pass covariance used as the oracle.
    fn covariance_oracle(x: &Tensor<f64>, epsilon: f64) -> Tensor<f64> {
        let (n, d) = x.dims2("oracle").unwrap();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for c in 0..d {
                mean[c] += x.data()[r * d + c];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += (x.data()[r * d + i] - mean[i]) * (x.data()[r * d + j] - mean[j]);
                }
                cov[i * d + j] = acc / n as f64 + if i == j { epsilon } else { 0.0 };
            }
        }
        t64(&[d, d], &cov)
    }

    /// Random SPD matrix with a prescribed condition number: QᵀΛQ with Q from
    /// Gram–Schmidt on a Gaussian matrix and log-spaced eigenvalues.
    fn random_spd(d: usize, cond: f64, rng: &mut Rng) -> Tensor<f64> {
        let g = Tensor::<f64>::randn(vec![d, d], rng).unwrap();
        let mut q = g.into_data();
        for i in 0..d {
            for j in 0..i {
                let dot: f64 = (0..d).map(|k| q[i * d + k] * q[j * d + k]).sum();
                for k in 0..d {
                    q[i * d + k] -= dot * q[j * d + k];
                }
            }
            let norm: f64 = (0..d).map(|k| q[i * d + k] * q[i * d + k]).sum::<f64>().sqrt();
            for k in 0..d {
                q[i * d + k] /= norm;
            }
        }
        let mut a = vec![0.0; d * d];
        for e in 0..d {
            let frac = if d == 1 { 0.0 } else { e as f64 / (d - 1) as f64 };
            let lam = cond.powf(-frac); // log-spaced in [1/cond, 1]
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] += lam * q[e * d + i] * q[e * d + j];
                }
            }
        }
        t64(&[d, d], &a)
    }

    #[test]
    fn covariance_two_sample_hand_case() {
        let x = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let s = covariance(&x, 0.0).unwrap();
        assert_eq!(s.mean.data(), &[0.5, 0.5]);
        let want = [0.25, -0.25, -0.25, 0.25];
        for (got, want) in s.cov.data().iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(s.sample_count, 2);
    }

    #[test]
    fn covariance_identical_rows_is_pure_ridge() {
        let x = t64(&[3, 2], &[2.0, -1.0, 2.0, -1.0, 2.0, -1.0]);
        let s = covariance(&x, 0.1).unwrap();
        let want = [0.1, 0.0, 0.0, 0.1];
        for (got, want) in s.cov.data().iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let mut rng = Rng::new(31);
        let x = Tensor::<f64>::randn(vec![1000, 8], &mut rng).unwrap();
        let s = covariance(&x, 0.0).unwrap();
        let want = covariance_oracle(&x, 0.0);
        assert!(s.cov.max_abs_diff(&want).unwrap() <= 1e-10);
    }

    #[test]
    fn covariance_rejects_bad_input() {
        let x = t64(&[1, 3], &[1.0, 2.0, 3.0]);
        assert!(matches!(covariance(&x, 0.0), Err(Error::InsufficientSamples { got: 1 })));
        let x = t64(&[2, 1], &[f64::NAN, 1.0]);
        assert!(matches!(covariance(&x, 0.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn covariance_is_exactly_symmetric() {
        let mut rng = Rng::new(77);
        let x = Tensor::<f64>::randn(vec![200, 13], &mut rng).unwrap();
        let s = covariance(&x, 1e-5).unwrap();
        let d = 13;
        for i in 0..d {
            for j in 0..d {
                assert_eq!(s.cov.data()[i * d + j], s.cov.data()[j * d + i]);
            }
        }
    }

    #[test]
    fn newton_identity_is_exact_fixed_point() {
        let s = stats_from_cov(Tensor::identity(4));
        for iters in [1, 5, 15] {
            let d = inverse_sqrt_newton(&s, iters).unwrap();
            assert_eq!(d.matrix, Tensor::<f64>::identity(4));
            assert_eq!(d.residual, 0.0);
            assert!(d.converged);
        }
    }

    #[test]
    fn newton_diagonal_analytic_case() {
        let s = stats_from_cov(t64(&[2, 2], &[4.0, 0.0, 0.0, 0.25]));
        let d = inverse_sqrt_newton(&s, 15).unwrap();
        let want = t64(&[2, 2], &[0.5, 0.0, 0.0, 2.0]);
        assert!(d.matrix.max_abs_diff(&want).unwrap() < 1e-6);
    }

    #[test]
    fn newton_agrees_with_eigen_route_on_random_spd() {
        let mut rng = Rng::new(5);
        let x = Tensor::<f64>::randn(vec![500, 27], &mut rng).unwrap();
        let mut stats = covariance(&x, 0.0).unwrap();
        stats.cov.add_diagonal(0.001).unwrap();
        let newton = inverse_sqrt_newton(&stats, 15).unwrap();
        let eigen = inverse_sqrt_eigen(&stats).unwrap();
        let rel = newton.matrix.sub(&eigen.matrix).unwrap().frobenius_norm()
            / eigen.matrix.frobenius_norm();
        assert!(rel <= 1e-4, "relative error {rel}");
    }

    #[test]
    fn newton_rejects_non_positive_definite() {
        let s = stats_from_cov(t64(&[2, 2], &[1.0, 0.0, 0.0, -1.0]));
        assert!(matches!(
            inverse_sqrt_newton(&s, 15),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let zero = stats_from_cov(Tensor::zeros(vec![3, 3]).unwrap());
        assert!(inverse_sqrt_newton(&zero, 5).is_err());
    }

    #[test]
    fn newton_warns_when_underiterated() {
        let mut rng = Rng::new(40);
        let a = random_spd(16, 1e4, &mut rng);
        let d = inverse_sqrt_newton(&stats_from_cov(a), 1).unwrap();
        assert!(!d.converged);
        assert!(d.residual > RESIDUAL_WARN);
    }

    #[test]
    fn eigen_identity_and_scalar_cases() {
        let d = inverse_sqrt_eigen(&stats_from_cov(Tensor::identity(3))).unwrap();
        assert!(d.matrix.max_abs_diff(&Tensor::identity(3)).unwrap() < 1e-12);

        let d = inverse_sqrt_eigen(&stats_from_cov(t64(&[1, 1], &[9.0]))).unwrap();
        assert!((d.matrix.data()[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_rejects_nonpositive_eigenvalue() {
        let s = stats_from_cov(t64(&[2, 2], &[1.0, 2.0, 2.0, 1.0])); // eigenvalues 3, -1
        assert!(matches!(
            inverse_sqrt_eigen(&s),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn eigen_inverts_spd_square() {
        // D·A·D should be I to solver tolerance.
        let mut rng = Rng::new(8);
        let a = random_spd(10, 100.0, &mut rng);
        let d = inverse_sqrt_eigen(&stats_from_cov(a)).unwrap();
        assert!(d.residual < 1e-10, "residual {}", d.residual);
    }

    #[test]
    fn apply_identity_transform_is_identity() {
        let mut rng = Rng::new(2);
        let x = Tensor::<f64>::randn(vec![10, 4], &mut rng).unwrap();
        let stats = CovarianceStats::from_parts(
            Tensor::identity(4),
            Tensor::zeros(vec![4]).unwrap(),
            10,
            0.0,
        )
        .unwrap();
        let d = DeconvMatrix::from_matrix(Tensor::identity(4), &stats.cov, 0).unwrap();
        let y = apply_decorrelation(&x, &stats, &d).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn whitening_own_stats_gives_identity_covariance() {
        let mut rng = Rng::new(9);
        let x = Tensor::<f64>::randn(vec![1000, 8], &mut rng).unwrap();
        let stats = covariance(&x, 1e-5).unwrap();
        let d = inverse_sqrt_eigen(&stats).unwrap();
        let y = apply_decorrelation(&x, &stats, &d).unwrap();
        let mut out_cov = covariance(&y, 0.0).unwrap().cov;
        out_cov.add_diagonal(-1.0).unwrap();
        let dev = out_cov.frobenius_norm();
        assert!(dev < 0.05, "deviation from identity {dev}");
    }

    #[test]
    fn whitening_two_sample_case_maps_to_one_direction() {
        // Two samples: centered data is rank one, so whitened rows are ± the
        // same vector.
        let x = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let stats = covariance(&x, 1e-9).unwrap();
        let d = inverse_sqrt_eigen(&stats).unwrap();
        let y = apply_decorrelation(&x, &stats, &d).unwrap();
        let r0: Vec<f64> = y.row(0).to_vec();
        let r1: Vec<f64> = y.row(1).to_vec();
        assert!((r0[0] + r1[0]).abs() < 1e-6);
        assert!((r0[1] + r1[1]).abs() < 1e-6);
        assert!(r0.iter().map(|v| v * v).sum::<f64>() > 0.1);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let x = t64(&[2, 3], &[0.0; 6]);
        let stats = stats_from_cov(Tensor::identity(2));
        let d = DeconvMatrix::from_matrix(Tensor::identity(2), &stats.cov, 0).unwrap();
        assert!(apply_decorrelation(&x, &stats, &d).is_err());
    }

    #[test]
    fn newton_symmetry_preserved() {
        let mut rng = Rng::new(12);
        let a = random_spd(20, 50.0, &mut rng);
        let d = inverse_sqrt_newton(&stats_from_cov(a), 15).unwrap();
        let dt = d.matrix.transpose().unwrap();
        assert!(d.matrix.max_abs_diff(&dt).unwrap() < 1e-9);
    }

    #[test]
    fn newton_residual_is_monotone_in_iterations() {
        let mut rng = Rng::new(13);
        for &cond in &[10.0, 1e3, 1e4] {
            let a = random_spd(12, cond, &mut rng);
            let stats = stats_from_cov(a);
            let mut prev = f64::INFINITY;
            for iters in 1..=12 {
                let d = inverse_sqrt_newton(&stats, iters).unwrap();
                assert!(
                    d.residual <= prev + 1e-12,
                    "residual rose at iter {iters}: {} -> {}",
                    prev,
                    d.residual
                );
                prev = d.residual;
            }
        }
    }

    #[test]
    fn newton_scale_covariance() {
        let mut rng = Rng::new(14);
        let a = random_spd(9, 40.0, &mut rng);
        let base = inverse_sqrt_newton(&stats_from_cov(a.clone()), 15).unwrap();
        for &c in &[0.1, 0.5, 2.0, 10.0] {
            let mut scaled = a.clone();
            scaled.scale_assign(c);
            let d = inverse_sqrt_newton(&stats_from_cov(scaled), 15).unwrap();
            let mut want = base.matrix.clone();
            want.scale_assign(1.0 / c.sqrt());
            let rel = d.matrix.sub(&want).unwrap().frobenius_norm() / want.frobenius_norm();
            assert!(rel < 1e-8, "c={c}: relative deviation {rel}");
        }
    }

    #[test]
    fn relative_epsilon_scales_with_trace() {
        let mut rng = Rng::new(15);
        let x = Tensor::<f64>::randn(vec![100, 6], &mut rng).unwrap();
        let s = covariance_with_relative_epsilon(&x, 1e-5).unwrap();
        let raw = covariance(&x, 0.0).unwrap();
        let expected = 1e-5 * raw.cov.trace().unwrap() / 6.0;
        assert!((s.epsilon - expected).abs() < 1e-15);
    }
}
