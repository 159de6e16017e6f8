//! Principal component analysis over dense samples.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// A fitted projection onto the top-`k` principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `k` rows of length `D`, orthonormal.
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Fits PCA on `samples` (N rows of length D) keeping `k` components.
    ///
    /// Components are ordered by non-increasing variance and each one is
    /// signed so that its largest-magnitude coordinate is non-negative.
    pub fn fit(samples: &[Vec<f64>], k: usize) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Invalid(format!(
                "PCA needs at least 2 samples, got {n}"
            )));
        }
        let d = samples[0].len();
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: bad.len(),
            });
        }
        if k == 0 || k > n.min(d) {
            return Err(Error::Invalid(format!(
                "PCA dimension k={k} must be in 1..={} (N={n}, D={d})",
                n.min(d)
            )));
        }

        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }

        let centered = DMatrix::from_fn(n, d, |i, j| samples[i][j] - mean[j]);
        if centered.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroVariance);
        }
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });

        let mut components = Vec::with_capacity(k);
        let mut explained_variance = Vec::with_capacity(k);
        for &idx in order.iter().take(k) {
            let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            orient(&mut axis);
            components.push(axis);
            explained_variance.push(eig.eigenvalues[idx].max(0.0));
        }

        Ok(PcaModel {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// `components · (v - mean)`.
    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                found: v.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(a, (x, m))| a * (x - m))
                    .sum()
            })
            .collect())
    }

    /// `mean + componentsᵀ · z`.
    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                found: z.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(z) {
            for (o, a) in out.iter_mut().zip(c) {
                *o += w * a;
            }
        }
        Ok(out)
    }
}

/// Flips `axis` so its largest-magnitude coordinate (first on ties) is >= 0.
fn orient(axis: &mut [f64]) {
    let mut best = 0;
    for (i, x) in axis.iter().enumerate() {
        if x.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        for x in axis.iter_mut() {
            *x = -*x;
        }
    }
}
