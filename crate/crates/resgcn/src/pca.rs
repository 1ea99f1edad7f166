//! Principal-component reduction of node attributes.
//!
//! Columns are centered but not scaled: attribute injection compares rows by
//! Euclidean distance, which unit-variance scaling would distort. Components
//! are ordered by decreasing explained variance with a deterministic sign
//! convention (the largest-magnitude loading of each component is positive).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// A fitted PCA basis.
#[derive(Debug, Clone)]
pub struct Pca {
    /// d x k matrix whose columns are principal directions.
    pub components: Tensor2,
    /// Variance captured by each component, decreasing.
    pub explained_variance: Vec<f64>,
    /// `explained_variance` divided by the total variance of the input.
    pub explained_variance_ratio: Vec<f64>,
    /// Column means subtracted before projection.
    pub mean: Vec<f64>,
}

impl Pca {
    pub fn fit(x: &Tensor2, target_dim: usize) -> Result<Pca> {
        let (n, d) = x.shape();
        if target_dim == 0 || target_dim > n.min(d) {
            return Err(Error::InvalidArgument(format!(
                "target_dim {} must be in 1..={} for a {}x{} input",
                target_dim,
                n.min(d),
                n,
                d
            )));
        }
        x.ensure_finite("pca input")?;

        let mean: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| x.at(i, j)).sum::<f64>() / n as f64)
            .collect();
        let mut centered = Tensor2::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                centered.set(i, j, x.at(i, j) - mean[j]);
            }
        }
        let denom = (n.max(2) - 1) as f64;
        let total_variance = centered.frob_norm_sq() / denom;

        // Eigendecompose whichever Gram form is smaller: X^T X (d x d) or
        // X X^T (n x n); both share the nonzero spectrum.
        let use_gram = d > n;
        let sym = if use_gram {
            centered.matmul_nt(&centered)?
        } else {
            centered.matmul_tn(&centered)?
        };
        let k = sym.rows();
        let m = DMatrix::from_row_slice(k, k, sym.data()).unscale(denom);
        let eig = m.symmetric_eigen();

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("eigenvalues are finite")
                .then(a.cmp(&b))
        });

        let mut components = Tensor2::zeros(d, target_dim);
        let mut explained_variance = Vec::with_capacity(target_dim);
        for (c, &idx) in order.iter().take(target_dim).enumerate() {
            let lambda = eig.eigenvalues[idx].max(0.0);
            explained_variance.push(lambda);
            let mut direction = vec![0.0; d];
            if use_gram {
                // Map the n-space eigenvector u back to attribute space:
                // v = X^T u / sqrt((n - 1) * lambda).
                let norm = (denom * lambda).sqrt();
                if norm > 1e-12 {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for i in 0..n {
                            acc += centered.at(i, j) * eig.eigenvectors[(i, idx)];
                        }
                        direction[j] = acc / norm;
                    }
                }
            } else {
                for (j, dj) in direction.iter_mut().enumerate() {
                    *dj = eig.eigenvectors[(j, idx)];
                }
            }
            fix_sign(&mut direction);
            for (j, &v) in direction.iter().enumerate() {
                components.set(j, c, v);
            }
        }
        let explained_variance_ratio = explained_variance
            .iter()
            .map(|&v| if total_variance > 0.0 { v / total_variance } else { 0.0 })
            .collect();

        Ok(Pca {
            components,
            explained_variance,
            explained_variance_ratio,
            mean,
        })
    }

    /// Project rows of `x` onto the fitted components.
    pub fn transform(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                what: "pca input columns".into(),
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let mut centered = x.clone();
        for i in 0..x.rows() {
            for (j, &mu) in self.mean.iter().enumerate() {
                centered.set(i, j, x.at(i, j) - mu);
            }
        }
        centered.matmul(&self.components)
    }
}

/// Flip a direction so its largest-magnitude entry (first on ties) is
/// positive.
fn fix_sign(direction: &mut [f64]) {
    let mut best = 0usize;
    for (j, v) in direction.iter().enumerate() {
        if v.abs() > direction[best].abs() {
            best = j;
        }
    }
    if direction[best] < 0.0 {
        for v in direction.iter_mut() {
            *v = -*v;
        }
    }
}

/// Reduce an n x d attribute matrix to its top `target_dim` principal
/// components.
pub fn pca_reduce(x: &Tensor2, target_dim: usize) -> Result<Tensor2> {
    Pca::fit(x, target_dim)?.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::glorot_init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigenvalue iteration, used as an independent oracle for
    /// the covariance spectrum.
    fn jacobi_eigenvalues(sym: &Tensor2) -> Vec<f64> {
        let n = sym.rows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| sym.row(i).to_vec()).collect();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    fn covariance(x: &Tensor2) -> Tensor2 {
        let (n, d) = x.shape();
        let mean: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| x.at(i, j)).sum::<f64>() / n as f64)
            .collect();
        let mut c = x.clone();
        for i in 0..n {
            for j in 0..d {
                c.set(i, j, x.at(i, j) - mean[j]);
            }
        }
        c.matmul_tn(&c).unwrap().scale(1.0 / (n as f64 - 1.0))
    }

    #[test]
    fn identical_rows_project_to_zero() {
        let x = Tensor2::from_rows(&[vec![3.0, -1.0], vec![3.0, -1.0], vec![3.0, -1.0]]).unwrap();
        let reduced = pca_reduce(&x, 1).unwrap();
        assert!(reduced.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rank_one_input_is_reconstructed_from_one_component() {
        let u = [1.0, -2.0, 0.5, 3.0, -1.5];
        let v = [2.0, 1.0, -1.0];
        let rows: Vec<Vec<f64>> = u
            .iter()
            .map(|&ui| v.iter().map(|&vj| ui * vj).collect())
            .collect();
        let x = Tensor2::from_rows(&rows).unwrap();
        let pca = Pca::fit(&x, 1).unwrap();
        let scores = pca.transform(&x).unwrap();
        let recon = scores.matmul(&pca.components.transpose()).unwrap();
        // recon approximates the centered input
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let centered = x.at(i, j) - pca.mean[j];
                assert!((recon.at(i, j) - centered).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn explained_variance_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = glorot_init(50, 30, &mut rng);
        let pca = Pca::fit(&x, 20).unwrap();
        let oracle = jacobi_eigenvalues(&covariance(&x));
        let total: f64 = oracle.iter().sum();
        for (i, ratio) in pca.explained_variance_ratio.iter().enumerate() {
            assert!(
                (ratio - oracle[i] / total).abs() < 1e-8,
                "component {i}: {ratio} vs oracle {}",
                oracle[i] / total
            );
        }
    }

    #[test]
    fn gram_path_agrees_with_covariance_path() {
        // d > n exercises the n x n Gram route; compare against the spectrum
        // of the full covariance.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = glorot_init(12, 25, &mut rng);
        let pca = Pca::fit(&x, 5).unwrap();
        let oracle = jacobi_eigenvalues(&covariance(&x));
        for i in 0..5 {
            assert!((pca.explained_variance[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn reduced_covariance_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = glorot_init(40, 10, &mut rng);
        let reduced = pca_reduce(&x, 6).unwrap();
        let cov = covariance(&reduced);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(cov.at(i, j).abs() < 1e-8, "cov[{i},{j}] = {}", cov.at(i, j));
                }
            }
        }
        // components sorted by decreasing variance
        for i in 1..6 {
            assert!(cov.at(i - 1, i - 1) >= cov.at(i, i) - 1e-12);
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = glorot_init(20, 7, &mut rng);
        let pca = Pca::fit(&x, 4).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = (0..7).map(|j| pca.components.at(j, c)).collect();
            let best = col
                .iter()
                .cloned()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            assert!(best >= 0.0, "component {c} has negative dominant loading");
        }
    }

    #[test]
    fn rejects_oversized_target_dim() {
        let x = Tensor2::zeros(5, 3);
        assert!(matches!(
            Pca::fit(&x, 4),
            Err(Error::InvalidArgument(_))
        ));
    }
}
