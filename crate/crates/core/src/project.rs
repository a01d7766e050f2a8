//! Two-component PCA by power iteration with deflation.
//!
//! Deterministic: iteration starts from the coordinate axes, tolerance
//! 1e-10, and the output axes are variance-ordered.

use crate::error::{Error, Result};
use crate::vecmath::{add_scaled, dot, normalized};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

/// A fitted 2-component projection.
#[derive(Debug, Clone)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit principal directions, variance-ordered.
    pub axes: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// The input embeddings projected to the plane.
    pub points: Vec<[f64; 2]>,
}

impl Pca2 {
    /// Project an arbitrary vector with the fitted transform.
    pub fn transform(&self, v: &[f64]) -> Result<[f64; 2]> {
        if v.len() != self.mean.len() {
            return Err(Error::Dimension {
                context: "pca transform",
                expected: self.mean.len(),
                got: v.len(),
            });
        }
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok([dot(&centered, &self.axes[0]), dot(&centered, &self.axes[1])])
    }
}

fn covariance(embeddings: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let m = mean.len();
    let n = embeddings.len() as f64;
    let mut c = vec![vec![0.0; m]; m];
    for e in embeddings {
        let centered: Vec<f64> = e.iter().zip(mean).map(|(a, b)| a - b).collect();
        for i in 0..m {
            if centered[i] == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += centered[i] * centered[j] / n;
            }
        }
    }
    c
}

fn mat_vec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

/// Dominant eigenpair of `c`, orthogonalized against `held` at every
/// iteration. Starts from the first coordinate axis that is not
/// annihilated by `c` after orthogonalization.
fn dominant_eigenpair(c: &[Vec<f64>], held: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
    let m = c.len();
    let orthogonalize = |v: &mut Vec<f64>| {
        if let Some(h) = held {
            let proj = dot(v, h);
            add_scaled(v, h, -proj);
        }
    };
    let mut start = None;
    for axis in 0..m {
        let mut v = vec![0.0; m];
        v[axis] = 1.0;
        orthogonalize(&mut v);
        let image = mat_vec(c, &v);
        if dot(&image, &image) > 1e-30 {
            start = Some(v);
            break;
        }
    }
    let Some(v) = start else {
        // The operator is (numerically) zero on the admissible subspace:
        // any deterministic unit vector orthogonal to `held` works, with
        // eigenvalue zero.
        if let Some(h) = held {
            let axis = (0..m)
                .min_by(|&a, &b| h[a].abs().partial_cmp(&h[b].abs()).unwrap())
                .unwrap();
            let mut v = vec![0.0; m];
            v[axis] = 1.0;
            let proj = dot(&v, h);
            add_scaled(&mut v, h, -proj);
            let unit = normalized(&v).ok_or(Error::ZeroNorm {
                context: "pca deflated axis",
            })?;
            return Ok((unit, 0.0));
        }
        return Err(Error::InvalidArgument(
            "pca needs data with nonzero variance".to_string(),
        ));
    };
    let mut v = normalized(&v).expect("unit start vector");
    let mut eigenvalue = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let mut image = mat_vec(c, &v);
        orthogonalize(&mut image);
        let norm = dot(&image, &image).sqrt();
        if norm < 1e-30 {
            eigenvalue = 0.0;
            break;
        }
        let next: Vec<f64> = image.iter().map(|x| x / norm).collect();
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        eigenvalue = norm;
        if delta < TOLERANCE {
            break;
        }
    }
    Ok((v, eigenvalue))
}

/// Mean-center and project onto the top-2 principal directions.
/// Needs at least 3 embeddings of dimension at least 2 and nonzero
/// variance.
pub fn project_pca(embeddings: &[Vec<f64>]) -> Result<Pca2> {
    if embeddings.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "pca needs at least 3 embeddings, got {}",
            embeddings.len()
        )));
    }
    let m = embeddings[0].len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "pca needs dimension at least 2".to_string(),
        ));
    }
    if let Some(bad) = embeddings.iter().find(|e| e.len() != m) {
        return Err(Error::Dimension {
            context: "pca embeddings",
            expected: m,
            got: bad.len(),
        });
    }
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; m];
    for e in embeddings {
        add_scaled(&mut mean, e, 1.0 / n);
    }
    let cov = covariance(embeddings, &mean);
    let total_variance: f64 = (0..m).map(|i| cov[i][i]).sum();
    if total_variance <= 0.0 {
        return Err(Error::InvalidArgument(
            "pca needs data with nonzero variance (all points identical)".to_string(),
        ));
    }

    let (v1, lambda1) = dominant_eigenpair(&cov, None)?;
    let mut deflated = cov.clone();
    for i in 0..m {
        for j in 0..m {
            deflated[i][j] -= lambda1 * v1[i] * v1[j];
        }
    }
    let (v2, lambda2) = dominant_eigenpair(&deflated, Some(&v1))?;

    let (first, second, l1, l2) = if lambda2 > lambda1 {
        (v2, v1, lambda2, lambda1)
    } else {
        (v1, v2, lambda1, lambda2)
    };
    let points = embeddings
        .iter()
        .map(|e| {
            let centered: Vec<f64> = e.iter().zip(&mean).map(|(a, b)| a - b).collect();
            [dot(&centered, &first), dot(&centered, &second)]
        })
        .collect();
    Ok(Pca2 {
        mean,
        axes: [first, second],
        eigenvalues: [l1, l2],
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_aligned_2d_data_projects_to_itself_up_to_sign() {
        let embeddings = vec![
            vec![3.0, 0.1],
            vec![-3.0, -0.1],
            vec![2.0, 0.05],
            vec![-2.0, -0.2],
            vec![0.0, 0.15],
        ];
        let pca = project_pca(&embeddings).unwrap();
        for (original, projected) in embeddings.iter().zip(&pca.points) {
            // Axis 0 dominates: the first component tracks x0 up to sign.
            assert!(
                (projected[0].abs() - original[0].abs()).abs() < 0.05,
                "{projected:?} vs {original:?}"
            );
        }
        assert!(pca.eigenvalues[0] >= pca.eigenvalues[1]);
    }

    #[test]
    fn identical_points_are_a_rank_error() {
        let embeddings = vec![vec![1.0, 2.0, 3.0]; 5];
        assert!(project_pca(&embeddings).is_err());
    }

    #[test]
    fn fewer_than_three_points_is_an_error() {
        assert!(project_pca(&[vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
    }

    /// Jacobi eigendecomposition of a symmetric 3x3, used as the oracle.
    fn jacobi_3x3(mut a: [[f64; 3]; 3]) -> [f64; 3] {
        for _ in 0..200 {
            let (mut p, mut q, mut biggest) = (0, 1, 0.0f64);
            for i in 0..3 {
                for j in (i + 1)..3 {
                    if a[i][j].abs() > biggest {
                        biggest = a[i][j].abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if biggest < 1e-15 {
                break;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rotated = a;
            for k in 0..3 {
                rotated[p][k] = c * a[p][k] - s * a[q][k];
                rotated[q][k] = s * a[p][k] + c * a[q][k];
            }
            let tmp = rotated;
            for k in 0..3 {
                rotated[k][p] = c * tmp[k][p] - s * tmp[k][q];
                rotated[k][q] = s * tmp[k][p] + c * tmp[k][q];
            }
            a = rotated;
        }
        [a[0][0], a[1][1], a[2][2]]
    }

    #[test]
    fn planar_3d_data_reconstructs_from_two_components() {
        // Points on a tilted plane through the origin.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u = [1.0, 1.0, 0.0];
        let w = [0.0, 1.0, 1.0];
        let embeddings: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                (0..3).map(|i| a * u[i] + b * w[i]).collect()
            })
            .collect();
        let pca = project_pca(&embeddings).unwrap();

        let mut worst = 0.0f64;
        for (e, p) in embeddings.iter().zip(&pca.points) {
            for i in 0..3 {
                let rebuilt = pca.mean[i] + p[0] * pca.axes[0][i] + p[1] * pca.axes[1][i];
                worst = worst.max((rebuilt - e[i]).abs());
            }
        }
        assert!(worst < 1e-8, "reconstruction error {worst}");

        // Cross-check the eigenvalues against the Jacobi oracle.
        let n = embeddings.len() as f64;
        let mean: Vec<f64> = (0..3)
            .map(|i| embeddings.iter().map(|e| e[i]).sum::<f64>() / n)
            .collect();
        let mut cov = [[0.0; 3]; 3];
        for e in &embeddings {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (e[i] - mean[i]) * (e[j] - mean[j]) / n;
                }
            }
        }
        let mut oracle = jacobi_3x3(cov);
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((pca.eigenvalues[0] - oracle[0]).abs() < 1e-8);
        assert!((pca.eigenvalues[1] - oracle[1]).abs() < 1e-8);
        assert!(oracle[2].abs() < 1e-12);
    }

    #[test]
    fn axes_are_orthogonal_and_variance_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let embeddings: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let pca = project_pca(&embeddings).unwrap();
        assert!(dot(&pca.axes[0], &pca.axes[1]).abs() < 1e-8);
        assert!(pca.eigenvalues[0] >= pca.eigenvalues[1]);
        let var = |k: usize| {
            let mean: f64 = pca.points.iter().map(|p| p[k]).sum::<f64>() / 40.0;
            pca.points
                .iter()
                .map(|p| (p[k] - mean).powi(2))
                .sum::<f64>()
                / 40.0
        };
        assert!(var(0) >= var(1) - 1e-12);
    }

    #[test]
    fn transform_matches_fitted_points() {
        let embeddings = vec![
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.0, 1.5],
            vec![0.5, -2.0, 0.0],
            vec![2.0, 1.0, -1.0],
        ];
        let pca = project_pca(&embeddings).unwrap();
        for (e, p) in embeddings.iter().zip(&pca.points) {
            let t = pca.transform(e).unwrap();
            assert!((t[0] - p[0]).abs() < 1e-12);
            assert!((t[1] - p[1]).abs() < 1e-12);
        }
    }
}
