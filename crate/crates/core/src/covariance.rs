//! Correlation kernels, Kronecker-structured covariance assembly and the
//! canonical-partial-correlation parameterization of correlation matrices.
//!
//! Stacking conventions: latent factors are stacked by factor
//! (`θ[k·n + i]`), auxiliary variables by item (`z[j·n + i]`), and fixed
//! effects by factor (`β[k·p + l]`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, CholFactor};

/// Exponential correlation `exp(-u / φ)`.
pub fn exp_correlation(u: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::Invalid(format!("correlation scale must be positive, got {phi}")));
    }
    if !(u >= 0.0) {
        return Err(Error::Invalid(format!("distance must be non-negative, got {u}")));
    }
    Ok((-u / phi).exp())
}

#[inline]
pub fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Pairwise distances between two sets of locations.
pub fn distance_matrix(a: &[[f64; 2]], b: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| distance(&a[i], &b[j]))
}

/// Unit-variance correlation matrix of one process from precomputed distances.
pub fn correlation_from_distances(dist: &DMatrix<f64>, phi: f64) -> DMatrix<f64> {
    let inv = 1.0 / phi;
    dist.map(|u| (-u * inv).exp())
}

/// Unit-variance covariance matrix `ρ(‖s_i − s_j‖)` of one Gaussian process.
pub fn gp_cov_matrix(coords: &[[f64; 2]], phi: f64) -> Result<DMatrix<f64>> {
    exp_correlation(0.0, phi)?;
    let n = coords.len();
    let mut out = DMatrix::identity(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let r = (-distance(&coords[i], &coords[j]) / phi).exp();
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    Ok(out)
}

/// Residual covariance `D R D`.
pub fn residual_cov(d: &[f64], r: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(r.nrows(), r.ncols(), |k, l| d[k] * r[(k, l)] * d[l])
}

/// Covariance of stacked factors together with its factorization.
#[derive(Clone, Debug)]
pub struct FactorCovariance {
    pub cov: DMatrix<f64>,
    pub factor: CholFactor,
}

impl FactorCovariance {
    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }
}

/// Assembles `(T ⊗ I_n) Σ_ψ (Tᵀ ⊗ I_n) + (D R D) ⊗ I_n` without factorizing.
///
/// `gp` holds the `g` diagonal blocks of `Σ_ψ`, each `n × n`.
pub fn factor_cov_matrix(
    t: &DMatrix<f64>,
    gp: &[DMatrix<f64>],
    d: &[f64],
    r: &DMatrix<f64>,
    n: usize,
) -> Result<DMatrix<f64>> {
    let m = t.nrows();
    if t.ncols() != gp.len() {
        return Err(Error::Dimension {
            context: "loading columns vs processes",
            expected: t.ncols(),
            got: gp.len(),
        });
    }
    if let Some(bad) = gp.iter().find(|s| s.nrows() != n || s.ncols() != n) {
        return Err(Error::Dimension {
            context: "process covariance size",
            expected: n,
            got: bad.nrows(),
        });
    }
    if d.len() != m || r.nrows() != m || r.ncols() != m {
        return Err(Error::Dimension {
            context: "residual covariance",
            expected: m,
            got: r.nrows(),
        });
    }
    let resid = residual_cov(d, r);
    let mut out = DMatrix::zeros(m * n, m * n);
    for k in 0..m {
        for l in 0..=k {
            let mut block = out.view_mut((k * n, l * n), (n, n));
            for (h, s) in gp.iter().enumerate() {
                let w = t[(k, h)] * t[(l, h)];
                if w != 0.0 {
                    block.zip_apply(s, |a, b| *a += w * b);
                }
            }
            for i in 0..n {
                block[(i, i)] += resid[(k, l)];
            }
        }
    }
    for k in 0..m {
        for l in 0..k {
            let upper = out.view((k * n, l * n), (n, n)).transpose();
            out.view_mut((l * n, k * n), (n, n)).copy_from(&upper);
        }
    }
    Ok(out)
}

/// [`factor_cov_matrix`] followed by a jittered Cholesky factorization.
pub fn factor_cov(
    t: &DMatrix<f64>,
    gp: &[DMatrix<f64>],
    d: &[f64],
    r: &DMatrix<f64>,
    n: usize,
) -> Result<FactorCovariance> {
    let cov = factor_cov_matrix(t, gp, d, r, n)?;
    let factor = cholesky_jittered(&cov, "factor covariance")?;
    Ok(FactorCovariance { cov, factor })
}

/// Marginal mean and covariance of the stacked auxiliary variables once the
/// latent factors are integrated out (unit noise variance included).
#[allow(clippy::too_many_arguments)]
pub fn marginal_z_moments(
    c: &[f64],
    a_star: &DMatrix<f64>,
    beta: &[f64],
    x: &DMatrix<f64>,
    t: &DMatrix<f64>,
    gp: &[DMatrix<f64>],
    d: &[f64],
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (q, m) = a_star.shape();
    let n = x.nrows();
    let p = x.ncols();
    if c.len() != q {
        return Err(Error::Dimension {
            context: "easiness vector",
            expected: q,
            got: c.len(),
        });
    }
    if beta.len() != m * p {
        return Err(Error::Dimension {
            context: "fixed effects",
            expected: m * p,
            got: beta.len(),
        });
    }
    if t.nrows() != m {
        return Err(Error::Dimension {
            context: "loading rows",
            expected: m,
            got: t.nrows(),
        });
    }
    // Factor means X b_k.
    let b = DMatrix::from_column_slice(p, m, beta);
    let theta_mean = x * &b; // n × m
    let mut mu = DVector::zeros(q * n);
    for j in 0..q {
        for i in 0..n {
            let mut v = c[j];
            for k in 0..m {
                v += a_star[(j, k)] * theta_mean[(i, k)];
            }
            mu[j * n + i] = v;
        }
    }
    let sigma_theta = factor_cov_matrix(t, gp, d, r, n)?;
    let mut cov = DMatrix::zeros(q * n, q * n);
    for j in 0..q {
        for jj in 0..q {
            let mut block = cov.view_mut((j * n, jj * n), (n, n));
            for k in 0..m {
                for l in 0..m {
                    let w = a_star[(j, k)] * a_star[(jj, l)];
                    if w != 0.0 {
                        block.zip_apply(&sigma_theta.view((k * n, l * n), (n, n)), |a, b| *a += w * b);
                    }
                }
            }
        }
    }
    for i in 0..q * n {
        cov[(i, i)] += 1.0;
    }
    Ok((mu, cov))
}

/// Unnormalized LKJ log density `(η − 1) log det R`.
pub fn lkj_log_density(r: &DMatrix<f64>, eta: f64) -> Result<f64> {
    let f = nalgebra::Cholesky::new(r.clone())
        .ok_or_else(|| Error::Invalid("LKJ density needs a positive definite matrix".into()))?;
    let l = f.l_dirty();
    let log_det = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok((eta - 1.0) * log_det)
}

/// Number of factors implied by a vector of `m(m−1)/2` free correlation parameters.
pub fn corr_dim(n_free: usize) -> Option<usize> {
    let m = ((1.0 + (1.0 + 8.0 * n_free as f64).sqrt()) / 2.0).round() as usize;
    (m * (m - 1) / 2 == n_free).then_some(m)
}

/// Maps unconstrained reals to a correlation matrix through canonical partial
/// correlations `tanh(ν)`, filled row-major over the strict lower triangle
/// (`(1,0), (2,0), (2,1), …`).
pub fn cpc_transform(nu: &[f64], m: usize) -> Result<DMatrix<f64>> {
    let l = cpc_cholesky(nu, m)?;
    let mut r = &l * l.transpose();
    for i in 0..m {
        r[(i, i)] = 1.0;
    }
    Ok(r)
}

/// Lower Cholesky factor of the correlation matrix built from `ν`.
pub fn cpc_cholesky(nu: &[f64], m: usize) -> Result<DMatrix<f64>> {
    if nu.len() != m * m.saturating_sub(1) / 2 {
        return Err(Error::Dimension {
            context: "canonical partial correlations",
            expected: m * m.saturating_sub(1) / 2,
            got: nu.len(),
        });
    }
    let mut l = DMatrix::zeros(m, m);
    if m == 0 {
        return Ok(l);
    }
    l[(0, 0)] = 1.0;
    let mut idx = 0;
    for i in 1..m {
        let mut sum_sq = 0.0f64;
        for j in 0..i {
            let z = nu[idx].tanh();
            idx += 1;
            let v = z * (1.0 - sum_sq).max(0.0).sqrt();
            l[(i, j)] = v;
            sum_sq += v * v;
        }
        l[(i, i)] = (1.0 - sum_sq).max(0.0).sqrt();
    }
    Ok(l)
}

/// Inverse of [`cpc_transform`].
pub fn cpc_inverse(r: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = r.nrows();
    let chol = nalgebra::Cholesky::new(r.clone()).ok_or_else(|| {
        Error::Invalid("canonical partial correlations need a positive definite matrix".into())
    })?;
    let l = chol.l();
    let mut nu = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 1..m {
        let mut sum_sq = 0.0f64;
        for j in 0..i {
            let v = l[(i, j)];
            let z = v / (1.0 - sum_sq).sqrt();
            nu.push(z.atanh());
            sum_sq += v * v;
        }
    }
    Ok(nu)
}

/// `log |∂ vech(R) / ∂ν|` for the map of [`cpc_transform`].
///
/// The partial correlation at lower-triangle column `j` contributes
/// `(m − 2 − j)/2 · log(1 − z²)` from the Cholesky construction and
/// `log(1 − z²)` from the `tanh` link.
pub fn cpc_log_jacobian(nu: &[f64], m: usize) -> f64 {
    let mut out = 0.0;
    let mut idx = 0;
    for i in 1..m {
        for j in 0..i {
            let z = nu[idx].tanh();
            idx += 1;
            let one_minus = (1.0 - z * z).max(f64::MIN_POSITIVE);
            let power = (m as f64 - 2.0 - j as f64) / 2.0 + 1.0;
            out += power * one_minus.ln();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_reference_values() {
        assert_eq!(exp_correlation(0.0, 2.0).unwrap(), 1.0);
        assert!((exp_correlation(2.0, 2.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert!((exp_correlation(20.0, 2.0).unwrap() - 4.539_992_976_248_485e-5).abs() < 1e-18);
        assert!(exp_correlation(1.0, 0.0).is_err());
        assert!(exp_correlation(1.0, -1.0).is_err());
    }

    #[test]
    fn gp_matrix_basics() {
        assert_eq!(gp_cov_matrix(&[[3.0, 4.0]], 1.0).unwrap(), DMatrix::identity(1, 1));
        let two = gp_cov_matrix(&[[0.0, 0.0], [3.0, 4.0]], 5.0).unwrap();
        assert!((two[(0, 1)] - (-1f64).exp()).abs() < 1e-16);
        let line = gp_cov_matrix(&[[0.0, 0.0], [0.7, 0.0], [1.4, 0.0]], 0.9).unwrap();
        assert!((line[(0, 2)] - line[(0, 1)] * line[(1, 2)]).abs() < 1e-15);
    }

    #[test]
    fn factor_cov_special_cases() {
        let n = 3;
        let coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let gp = vec![gp_cov_matrix(&coords, 1.0).unwrap()];
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let d = [1.0, 2.0];
        let zero_t = DMatrix::zeros(2, 1);
        let cov = factor_cov_matrix(&zero_t, &gp, &d, &r, n).unwrap();
        let expected = residual_cov(&d, &r).kronecker(&DMatrix::<f64>::identity(n, n));
        assert!((&cov - &expected).amax() < 1e-15);

        let scalar = factor_cov(
            &DMatrix::from_element(1, 1, 0.7),
            &[DMatrix::identity(1, 1)],
            &[1.0],
            &DMatrix::identity(1, 1),
            1,
        )
        .unwrap();
        assert!((scalar.cov[(0, 0)] - (0.49 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn marginal_z_special_cases() {
        let x = DMatrix::zeros(2, 0);
        let gp = vec![DMatrix::identity(2, 2)];
        let t = DMatrix::from_element(1, 1, 0.5);
        let (mu, cov) = marginal_z_moments(
            &[0.2, -0.3],
            &DMatrix::zeros(2, 1),
            &[],
            &x,
            &t,
            &gp,
            &[1.0],
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        assert_eq!(cov, DMatrix::identity(4, 4));
        assert_eq!(mu.as_slice(), &[0.2, 0.2, -0.3, -0.3]);

        let (_, cov) = marginal_z_moments(
            &[0.0],
            &DMatrix::from_element(1, 1, 2.0),
            &[],
            &DMatrix::zeros(1, 0),
            &DMatrix::from_element(1, 1, 0.6),
            &[DMatrix::identity(1, 1)],
            &[1.0],
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!((cov[(0, 0)] - (4.0 * (0.36 + 1.0) + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn lkj_values() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(lkj_log_density(&r, 1.0).unwrap(), 0.0);
        assert!(lkj_log_density(&DMatrix::identity(3, 3), 4.0).unwrap().abs() < 1e-15);
        assert!((lkj_log_density(&r, 2.0).unwrap() - 0.75f64.ln()).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(lkj_log_density(&bad, 2.0).is_err());
    }

    #[test]
    fn cpc_examples() {
        assert_eq!(cpc_transform(&[0.0, 0.0, 0.0], 3).unwrap(), DMatrix::identity(3, 3));
        let r = cpc_transform(&[0.5f64.atanh()], 2).unwrap();
        assert!((r[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((0.5f64.atanh() - 0.549_306_144_334_054_8).abs() < 1e-15);
        assert_eq!(corr_dim(3), Some(3));
        assert_eq!(corr_dim(0), Some(1));
        assert_eq!(corr_dim(2), None);
    }

    #[test]
    fn cpc_jacobian_matches_finite_differences() {
        // Oracle: numerical Jacobian of ν ↦ strict lower triangle of R.
        let m = 4;
        let nu = [0.3, -0.8, 0.5, 1.1, -0.2, 0.7];
        let vech = |v: &[f64]| -> Vec<f64> {
            let r = cpc_transform(v, m).unwrap();
            let mut out = Vec::new();
            for i in 1..m {
                for j in 0..i {
                    out.push(r[(i, j)]);
                }
            }
            out
        };
        let k = nu.len();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut up = nu.to_vec();
            let mut dn = nu.to_vec();
            up[c] += h;
            dn[c] -= h;
            let (fu, fd) = (vech(&up), vech(&dn));
            for rr in 0..k {
                jac[(rr, c)] = (fu[rr] - fd[rr]) / (2.0 * h);
            }
        }
        let numeric = jac.determinant().abs().ln();
        assert!((numeric - cpc_log_jacobian(&nu, m)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn cpc_round_trip(nu in prop::collection::vec(-3.0f64..3.0, 6)) {
            let r = cpc_transform(&nu, 4).unwrap();
            prop_assert!(crate::linalg::asymmetry(&r) < 1e-12);
            for i in 0..4 { prop_assert_eq!(r[(i, i)], 1.0); }
            let back = cpc_inverse(&r).unwrap();
            for (a, b) in nu.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            }
        }

        #[test]
        fn gp_matrix_is_isotropic(angle in 0.0f64..std::f64::consts::TAU, dx in -5.0f64..5.0, dy in -5.0f64..5.0,
                                  pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..6)) {
            let coords: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
            let (s, c) = angle.sin_cos();
            let moved: Vec<[f64; 2]> = coords.iter()
                .map(|p| [c * p[0] - s * p[1] + dx, s * p[0] + c * p[1] + dy]).collect();
            let a = gp_cov_matrix(&coords, 1.3).unwrap();
            let b = gp_cov_matrix(&moved, 1.3).unwrap();
            prop_assert!((&a - &b).amax() < 1e-12);
        }

        #[test]
        fn assembled_covariance_is_symmetric(t11 in 0.1f64..2.0, t21 in 0.1f64..2.0, rho in -0.9f64..0.9) {
            let coords = [[0.0, 0.0], [0.5, 0.1], [1.0, 1.0]];
            let gp = vec![gp_cov_matrix(&coords, 0.7).unwrap()];
            let t = DMatrix::from_row_slice(2, 1, &[t11, t21]);
            let r = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let fc = factor_cov(&t, &gp, &[1.0, 1.0], &r, 3).unwrap();
            prop_assert!(crate::linalg::asymmetry(&fc.cov) < 1e-12);
        }
    }
}
