//! Symmetric eigendecomposition by cyclic Jacobi rotations, and the
//! generalized inverse square root built on top of it.
//!
//! Jacobi is the right tool here: every matrix in this crate is at most a
//! handful of rows, the method is unconditionally convergent for symmetric
//! input, and it preserves symmetry exactly.

use crate::error::{Error, Result};
use crate::numerics::matrix::Mat;

/// Maximum matrix order accepted by `sym_eigen`.
const MAX_ORDER: usize = 64;

/// Relative symmetry tolerance on input matrices.
const SYM_TOL: f64 = 1e-12;

/// Default relative rank tolerance shared by the pseudo-inverse and the
/// diffusion-matrix inverse.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Eigendecomposition `A = U diag(eigenvalues) U^T` of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order; column `i` of `eigenvectors`
/// is the unit eigenvector paired with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat,
}

impl SymmetricEigen {
    /// Reassembles `U diag(lambda) U^T`.
    pub fn reconstruct(&self) -> Mat {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut out = Mat::zeros(n, n);
        for l in 0..n {
            let lam = self.eigenvalues[l];
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += lam * u[(i, l)] * u[(j, l)];
                }
            }
        }
        out
    }
}

/// Decomposes a symmetric matrix with cyclic Jacobi sweeps.
///
/// Rejects non-square input, matrices larger than 64x64 and matrices whose
/// asymmetry exceeds `1e-12` relative to the largest entry. Output is
/// deterministic for identical input.
pub fn sym_eigen(a: &Mat) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::RejectedInput(format!(
            "sym_eigen requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 || n > MAX_ORDER {
        return Err(Error::RejectedInput(format!(
            "sym_eigen supports orders 1..={MAX_ORDER}, got {n}"
        )));
    }
    let scale = a.max_abs();
    if a.max_asymmetry() > SYM_TOL * scale {
        return Err(Error::RejectedInput(format!(
            "matrix is not symmetric (asymmetry {:.3e}, scale {:.3e})",
            a.max_asymmetry(),
            scale
        )));
    }

    let mut m = a.symmetrized();
    let mut u = Mat::identity(n);
    let stop = 1e-15 * scale.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].abs());
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= stop {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J with J the plane rotation in (p, q).
                for r in 0..n {
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    m[(r, p)] = c * arp - s * arq;
                    m[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = m[(p, r)];
                    let aqr = m[(q, r)];
                    m[(p, r)] = c * apr - s * aqr;
                    m[(q, r)] = s * apr + c * aqr;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for r in 0..n {
                    let urp = u[(r, p)];
                    let urq = u[(r, q)];
                    u[(r, p)] = c * urp - s * urq;
                    u[(r, q)] = s * urp + c * urq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = Mat::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok(SymmetricEigen { eigenvalues, eigenvectors })
}

/// Generalized inverse of the square root of a symmetric PSD matrix.
///
/// Writes `A = U D U^T` and returns `U D~ U^T` where `D~_ii = 1/sqrt(d_ii)`
/// for eigenvalues above `rank_tol * lambda_max` and `0` otherwise.
/// Eigenvalues in `[-rank_tol * lambda_max, 0)` are treated as rounding noise
/// and clamped to zero; anything more negative is rejected as not PSD.
pub fn pinv_sqrt(a: &Mat, rank_tol: f64) -> Result<Mat> {
    pinv_sqrt_with_rank(a, rank_tol).map(|(m, _)| m)
}

/// As `pinv_sqrt`, additionally reporting the numerical rank.
pub fn pinv_sqrt_with_rank(a: &Mat, rank_tol: f64) -> Result<(Mat, usize)> {
    let eig = sym_eigen(a)?;
    let n = eig.eigenvalues.len();
    let lambda_max = eig.eigenvalues[0].max(0.0);
    let cut = rank_tol * lambda_max;

    let mut inv_sqrt = vec![0.0; n];
    let mut rank = 0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut {
            inv_sqrt[i] = 1.0 / lam.sqrt();
            rank += 1;
        } else if lam < -cut {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lam });
        }
    }

    let u = &eig.eigenvectors;
    let mut out = Mat::zeros(n, n);
    for l in 0..rank {
        let w = inv_sqrt[l];
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * u[(i, l)] * u[(j, l)];
            }
        }
    }
    Ok((out, rank))
}

/// Symmetric PSD square root `U sqrt(D) U^T`.
///
/// Same PSD admission rule as `pinv_sqrt`.
pub fn sqrt_psd(a: &Mat, rank_tol: f64) -> Result<Mat> {
    let eig = sym_eigen(a)?;
    let n = eig.eigenvalues.len();
    let lambda_max = eig.eigenvalues[0].max(0.0);
    let cut = rank_tol * lambda_max;
    let u = &eig.eigenvectors;
    let mut out = Mat::zeros(n, n);
    for (l, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -cut {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lam });
        }
        let w = lam.max(0.0).sqrt();
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * u[(i, l)] * u[(j, l)];
            }
        }
    }
    Ok(out)
}

/// Numerical rank: count of eigenvalues above `rank_tol * lambda_max`.
pub fn numerical_rank(eigenvalues: &[f64], rank_tol: f64) -> usize {
    let lambda_max = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    eigenvalues.iter().filter(|&&v| v > rank_tol * lambda_max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::NoiseSource;

    fn orthogonality_defect(u: &Mat) -> f64 {
        u.transpose().matmul(u).sub(&Mat::identity(u.nrows())).max_abs()
    }

    #[test]
    fn diagonal_matrix() {
        let eig = sym_eigen(&Mat::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(eig.eigenvalues, vec![3.0, 1.0]);
        for c in 0..2 {
            for r in 0..2 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((eig.eigenvectors[(r, c)].abs() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exchange_matrix() {
        let eig = sym_eigen(&Mat::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] + 1.0).abs() < 1e-14);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for c in 0..2 {
            let col = [eig.eigenvectors[(0, c)], eig.eigenvectors[(1, c)]];
            let sign = if c == 0 { 1.0 } else { -1.0 };
            // (1,1)/sqrt(2) and (1,-1)/sqrt(2), up to sign.
            let fits = (col[0].abs() - inv_sqrt2).abs() < 1e-12
                && (col[1] - sign * col[0]).abs() < 1e-12;
            assert!(fits, "column {c} was {col:?}");
        }
    }

    /// Random orthogonal matrix assembled from explicit plane rotations, so
    /// the construction is independent of the Jacobi code under test.
    fn random_orthogonal(n: usize, g: &mut crate::numerics::rng::GaussianStream) -> Mat {
        let mut q = Mat::identity(n);
        for p in 0..n {
            for r in (p + 1)..n {
                let angle = g.next_normal();
                let (s, c) = angle.sin_cos();
                for row in 0..n {
                    let qp = q[(row, p)];
                    let qr = q[(row, r)];
                    q[(row, p)] = c * qp - s * qr;
                    q[(row, r)] = s * qp + c * qr;
                }
            }
        }
        q
    }

    #[test]
    fn recovers_spectrum_of_constructed_matrix() {
        let spectrum = [5.0, 2.0, 1.0, 0.0];
        let mut g = NoiseSource::new(42, 0).gaussians();
        for _ in 0..10 {
            let q = random_orthogonal(4, &mut g);
            let a = q.matmul(&Mat::diag(&spectrum)).matmul(&q.transpose()).symmetrized();
            let eig = sym_eigen(&a).unwrap();
            for (got, want) in eig.eigenvalues.iter().zip(&spectrum) {
                assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn reconstruction_and_orthogonality_bounds() {
        let mut g = NoiseSource::new(7, 0).gaussians();
        for &n in &[2usize, 3, 4, 8] {
            for _ in 0..25 {
                let raw = Mat::from_fn(n, n, |_, _| g.next_normal());
                let a = raw.add(&raw.transpose()).scaled(0.5);
                let eig = sym_eigen(&a).unwrap();
                let bound = 1e-10 * a.inf_norm().max(1.0);
                assert!(eig.reconstruct().sub(&a).max_abs() <= bound);
                assert!(orthogonality_defect(&eig.eigenvectors) <= 1e-10);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eigen(&a), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn pinv_sqrt_identity_and_rank_one() {
        let b = pinv_sqrt(&Mat::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert!(b.sub(&Mat::identity(3)).max_abs() < 1e-12);

        let (b, rank) = pinv_sqrt_with_rank(&Mat::diag(&[4.0, 0.0]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 1);
        assert!((b[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(b[(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn pinv_sqrt_rejects_indefinite() {
        assert!(matches!(
            pinv_sqrt(&Mat::diag(&[1.0, -1.0]), DEFAULT_RANK_TOL),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn pinv_sqrt_projector_property() {
        // B A B^T must be the orthogonal projector onto range(A):
        // symmetric, idempotent, trace = rank.
        let mut g = NoiseSource::new(13, 0).gaussians();
        for _ in 0..20 {
            let q = random_orthogonal(4, &mut g);
            let spectrum = [3.0 + g.next_normal().abs(), 1.0, 0.5, 0.0];
            let a = q.matmul(&Mat::diag(&spectrum)).matmul(&q.transpose()).symmetrized();
            let (b, rank) = pinv_sqrt_with_rank(&a, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(rank, 3);
            assert!(b.max_asymmetry() <= 1e-12 * b.max_abs());
            let proj = b.matmul(&a).matmul(&b.transpose());
            assert!(proj.matmul(&proj).sub(&proj).max_abs() <= 1e-9);
            let trace: f64 = (0..4).map(|i| proj[(i, i)]).sum();
            assert!((trace - rank as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut g = NoiseSource::new(99, 0).gaussians();
        let q = random_orthogonal(3, &mut g);
        let a = q.matmul(&Mat::diag(&[2.5, 0.3, 0.0])).matmul(&q.transpose()).symmetrized();
        let r = sqrt_psd(&a, DEFAULT_RANK_TOL).unwrap();
        assert!(r.matmul(&r).sub(&a).max_abs() <= 1e-10);
    }
}
