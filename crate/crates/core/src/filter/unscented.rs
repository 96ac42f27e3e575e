//! Symmetric sigma-point set and the unscented moment approximation.
//!
//! For an `n`-dimensional Gaussian `N(m, P)` the set is the `2n` points
//! `m ± √n·Lᵢ`, where `Lᵢ` are the columns of the Cholesky factor of `P`,
//! all weighted `1/(2n)`. There is no center point and no spread parameter.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::linalg;

/// The `2N` sigma points of `N(mean, cov)`; the first `N` are `mean + √N·Lᵢ`,
/// the rest mirror them.
pub fn symmetric_sigma_points<const N: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
) -> Result<Vec<SVector<f64, N>>> {
    let l = linalg::psd_sqrt(cov)? * (N as f64).sqrt();
    let mut points = Vec::with_capacity(2 * N);
    for i in 0..N {
        points.push(mean + l.column(i));
    }
    for i in 0..N {
        points.push(mean - l.column(i));
    }
    Ok(points)
}

/// Moments of `h(X)` estimated from a sigma-point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtMoments<const N: usize> {
    /// Mean of `h` over the points.
    pub ybar: f64,
    /// Variance of `h` over the points.
    pub f: f64,
    /// Cross-covariance between the points and `h`.
    pub pxy: SVector<f64, N>,
}

/// Equal-weight mean, variance and cross-covariance of `h` over `points`.
pub fn ut_moments<const N: usize, H>(points: &[SVector<f64, N>], h: H) -> Result<UtMoments<N>>
where
    H: Fn(&SVector<f64, N>) -> Result<f64>,
{
    if points.is_empty() {
        return Err(Error::invalid("unscented moments need at least one point"));
    }
    let w = 1.0 / points.len() as f64;
    let mut values = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let y = h(p).map_err(|e| Error::numerical(format!("sigma point {i}: {e}")))?;
        if !y.is_finite() {
            return Err(Error::numerical(format!(
                "measurement function is {y} at sigma point {i} ({:?})",
                p.as_slice()
            )));
        }
        values.push(y);
    }
    let center = points.iter().fold(SVector::<f64, N>::zeros(), |a, p| a + p) * w;
    let ybar = values.iter().sum::<f64>() * w;
    let mut f = 0.0;
    let mut pxy = SVector::<f64, N>::zeros();
    for (p, y) in points.iter().zip(&values) {
        let dy = y - ybar;
        f += dy * dy;
        pxy += (p - center) * dy;
    }
    Ok(UtMoments {
        ybar,
        f: f * w,
        pxy: pxy * w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix6, SMatrix, Vector1, Vector6};
    use proptest::prelude::*;

    fn random_psd(seed: &[f64; 36], scale: f64) -> Matrix6<f64> {
        let a = Matrix6::from_column_slice(seed);
        a * a.transpose() * scale + Matrix6::identity() * 1e-3
    }

    #[test]
    fn identity_covariance_points() {
        let m = Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 0.0);
        let pts = symmetric_sigma_points(&m, &Matrix6::identity()).unwrap();
        assert_eq!(pts.len(), 12);
        let s = 6f64.sqrt();
        for i in 0..6 {
            let mut e = Vector6::zeros();
            e[i] = s;
            assert!((pts[i] - (m + e)).abs().max() < 1e-15);
            assert!((pts[i + 6] - (m - e)).abs().max() < 1e-15);
        }
    }

    #[test]
    fn scalar_quadratic_and_cubic() {
        let pts = symmetric_sigma_points(&Vector1::new(0.0), &SMatrix::<f64, 1, 1>::new(1.0)).unwrap();
        assert_eq!(pts.len(), 2);
        let sq = ut_moments(&pts, |x| Ok(x[0] * x[0])).unwrap();
        assert!((sq.ybar - 1.0).abs() < 1e-15);
        let cube = ut_moments(&pts, |x| Ok(x[0].powi(3))).unwrap();
        assert!(cube.ybar.abs() < 1e-15);
    }

    #[test]
    fn constant_function_has_no_spread() {
        let m = Vector6::repeat(3.0);
        let p = random_psd(&[0.3; 36], 1.0);
        let pts = symmetric_sigma_points(&m, &p).unwrap();
        let c = ut_moments(&pts, |_| Ok(7.5)).unwrap();
        assert_eq!(c.ybar, 7.5);
        assert_eq!(c.f, 0.0);
        assert_eq!(c.pxy, Vector6::zeros());
    }

    #[test]
    fn errors_name_the_point() {
        let pts = vec![Vector1::new(1.0), Vector1::new(-1.0)];
        let err = ut_moments(&pts, |x| Ok(if x[0] < 0.0 { f64::NAN } else { 1.0 })).unwrap_err();
        assert!(err.to_string().contains("sigma point 1"), "{err}");
        let empty: Vec<Vector1<f64>> = vec![];
        assert!(ut_moments(&empty, |_| Ok(0.0)).is_err());
    }

    proptest! {
        #[test]
        fn points_reproduce_mean_and_covariance(
            seed in proptest::array::uniform32(-1.0f64..1.0),
            extra in proptest::array::uniform4(-1.0f64..1.0),
            mean in proptest::array::uniform6(-100.0f64..100.0),
            scale in 0.1f64..1e3,
        ) {
            let mut s = [0.0; 36];
            s[..32].copy_from_slice(&seed);
            s[32..].copy_from_slice(&extra);
            let p = random_psd(&s, scale);
            let m = Vector6::from(mean);
            let pts = symmetric_sigma_points(&m, &p).unwrap();
            let n = pts.len() as f64;
            let emp_mean = pts.iter().fold(Vector6::zeros(), |a, x| a + x) / n;
            prop_assert!((emp_mean - m).abs().max() <= 1e-12 * m.abs().max().max(1.0));
            // brute-force outer-product sum
            let mut emp_cov = Matrix6::zeros();
            for x in &pts {
                for i in 0..6 {
                    for j in 0..6 {
                        emp_cov[(i, j)] += (x[i] - m[i]) * (x[j] - m[j]) / n;
                    }
                }
            }
            prop_assert!((emp_cov - p).abs().max() <= 1e-10 * p.abs().max());
            // odd central moments vanish
            for i in 0..6 {
                let third: f64 = pts.iter().map(|x| (x[i] - m[i]).powi(3)).sum::<f64>() / n;
                prop_assert!(third.abs() <= 1e-9 * p[(i, i)].powf(1.5).max(1.0));
            }
        }

        #[test]
        fn affine_and_quadratic_exactness(
            seed in proptest::array::uniform32(-1.0f64..1.0),
            a in proptest::array::uniform6(-2.0f64..2.0),
            c in -5.0f64..5.0,
        ) {
            let mut s = [0.1; 36];
            s[..32].copy_from_slice(&seed);
            let p = random_psd(&s, 1.0);
            let m = Vector6::new(0.5, -1.0, 2.0, 0.0, 1.0, 0.0);
            let a = Vector6::from(a);
            let pts = symmetric_sigma_points(&m, &p).unwrap();

            let lin = ut_moments(&pts, |x| Ok(a.dot(x) + c)).unwrap();
            prop_assert!((lin.ybar - (a.dot(&m) + c)).abs() < 1e-8);
            prop_assert!((lin.f - (a.transpose() * p * a)[0]).abs() < 1e-8);
            prop_assert!((lin.pxy - p * a).abs().max() < 1e-8);

            // E[(x - m)ᵀ A (x - m)] = tr(A P) for symmetric A = a aᵀ
            let quad = ut_moments(&pts, |x| {
                let d = x - m;
                Ok(a.dot(&d).powi(2))
            }).unwrap();
            prop_assert!((quad.ybar - (a.transpose() * p * a)[0]).abs() < 1e-8);
        }
    }
}
