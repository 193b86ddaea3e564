//! Seeded synthetic multi-view benchmark data.
//!
//! Samples are drawn around class centers in a shared generative latent
//! space, then pushed through fixed random nonlinear maps into each view.
//! Views can be given *confusions* — class pairs whose centers are pulled
//! together in that view only — so that no single view separates every
//! class but the views jointly do. That shape is what makes missing-view
//! experiments informative: dropping views destroys exactly the complementary
//! information a method is supposed to recover.

use ndarray::{Array1, Array2};

use crate::dataio::{min_max_scale, MultiViewDataset};
use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub name: String,
    pub samples: usize,
    pub classes: usize,
    pub dims: Vec<usize>,
    /// Width of the shared generative latent space.
    pub latent_dim: usize,
    /// Distance scale between class centers.
    pub cluster_sep: f64,
    /// Within-class standard deviation in the latent space.
    pub within_scatter: f64,
    /// Additive feature-space noise standard deviation.
    pub feature_noise: f64,
    /// Per-view class pairs whose centers are pulled together in that view.
    pub confusions: Vec<Vec<(usize, usize)>>,
    /// Fraction of the original center separation kept for confused pairs
    /// (0 collapses them, 1 disables the confusion).
    pub confusion_residual: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn generate(&self) -> Result<MultiViewDataset> {
        let (n, k, ell) = (self.samples, self.classes, self.latent_dim);
        if self.dims.len() != self.confusions.len() {
            return Err(Error::InvalidConfig(
                "confusions must list one entry per view".into(),
            ));
        }
        if k < 2 || n < k {
            return Err(Error::InvalidConfig("need n >= k >= 2".into()));
        }
        for pairs in &self.confusions {
            for &(a, b) in pairs {
                if a >= k || b >= k || a == b {
                    return Err(Error::InvalidConfig(format!(
                        "bad confusion pair ({a}, {b}) for k={k}"
                    )));
                }
            }
        }
        let mut rng = SeededRng::derive(self.seed, Stream::Synth);

        // Class centers on a scaled Gaussian cloud.
        let scale = self.cluster_sep / (ell as f64).sqrt();
        let centers = Array2::from_shape_fn((k, ell), |_| scale * rng.normal());

        // Per-view centers: confused pairs move toward their midpoint.
        let mut view_centers = vec![centers.clone(); self.dims.len()];
        for (v, pairs) in self.confusions.iter().enumerate() {
            for &(a, b) in pairs {
                let mid = (&centers.row(a) + &centers.row(b)) * 0.5;
                let res = self.confusion_residual;
                let ca = &mid + &((&centers.row(a) - &mid) * res);
                let cb = &mid + &((&centers.row(b) - &mid) * res);
                view_centers[v].row_mut(a).assign(&ca);
                view_centers[v].row_mut(b).assign(&cb);
            }
        }

        // Balanced labels in shuffled positions.
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        rng.shuffle(&mut labels);

        // Shared per-sample latent scatter.
        let scatter = Array2::from_shape_fn((n, ell), |_| self.within_scatter * rng.normal());

        // Fixed random observation maps per view.
        let mut views = Vec::with_capacity(self.dims.len());
        for (v, &d) in self.dims.iter().enumerate() {
            let a = Array2::from_shape_fn((ell, d), |_| rng.normal() / (ell as f64).sqrt());
            let bias = Array1::from_shape_fn(d, |_| 0.3 * rng.normal());
            let mut x = Array2::zeros((n, d));
            for i in 0..n {
                // View latent: shared scatter around the view's class center.
                let u = &view_centers[v].row(labels[i]) + &scatter.row(i);
                let mut row = u.dot(&a) + &bias;
                row.mapv_inplace(f64::tanh);
                for e in row.iter_mut() {
                    *e += self.feature_noise * rng.normal();
                }
                x.row_mut(i).assign(&row);
            }
            min_max_scale(&mut x);
            views.push(x);
        }

        MultiViewDataset::new(self.name.clone(), views, labels, k, None)
    }
}

/// A desk-scale stand-in with the shape of the three-view handwritten-digits
/// benchmark: 2000 samples, 10 classes, feature widths 76 / 216 / 64. Each
/// view confuses a different subset of class pairs, so full-view fusion
/// separates all ten classes while any single view caps out lower.
pub fn hw_like(seed: u64) -> SynthSpec {
    SynthSpec {
        name: "hw-synth".into(),
        samples: 2000,
        classes: 10,
        dims: vec![76, 216, 64],
        latent_dim: 16,
        cluster_sep: 8.0,
        within_scatter: 0.9,
        feature_noise: 0.03,
        confusions: vec![
            vec![(0, 1), (2, 3)],
            vec![(4, 5), (6, 7)],
            vec![(8, 9), (1, 2)],
        ],
        confusion_residual: 0.08,
        seed,
    }
}

/// A small two-view dataset whose views are 8x8 "images" (64 features),
/// for exercising the sample-grid rendering.
pub fn image_like(seed: u64) -> Result<MultiViewDataset> {
    let spec = SynthSpec {
        name: "img-synth".into(),
        samples: 90,
        classes: 3,
        dims: vec![64, 64],
        latent_dim: 6,
        cluster_sep: 5.0,
        within_scatter: 0.6,
        feature_noise: 0.02,
        confusions: vec![vec![], vec![]],
        confusion_residual: 1.0,
        seed,
    };
    let ds = spec.generate()?;
    MultiViewDataset::new(
        ds.name,
        ds.views,
        ds.labels,
        ds.k,
        Some(vec![Some((8, 8)), Some((8, 8))]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{assign_clusters, init_centroids, metrics, soft_assign};
    use ndarray::Axis;

    #[test]
    fn generated_data_is_valid_and_deterministic() {
        let spec = hw_like(1);
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.num_samples(), 2000);
        assert_eq!(a.dims(), vec![76, 216, 64]);
        assert_eq!(a.k, 10);
        assert_eq!(a.views[0], b.views[0]);
        assert_eq!(a.labels, b.labels);
        for view in &a.views {
            assert!(view.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        // Balanced classes.
        let mut counts = vec![0usize; 10];
        for &y in &a.labels {
            counts[y] += 1;
        }
        assert!(counts.iter().all(|&c| c == 200));
    }

    #[test]
    fn confused_views_are_weaker_than_concatenation() {
        let ds = hw_like(2).generate().unwrap();
        // k-means accuracy using view 0 alone vs. all views concatenated.
        let singles: Vec<f64> = (0..3)
            .map(|v| kmeans_acc(&ds.views[v], &ds.labels, 10))
            .collect();
        let views: Vec<_> = ds.views.iter().map(|v| v.view()).collect();
        let cat = ndarray::concatenate(Axis(1), &views).unwrap();
        let joint = kmeans_acc(&cat, &ds.labels, 10);
        let best = singles.iter().cloned().fold(0.0, f64::max);
        let mean = singles.iter().sum::<f64>() / singles.len() as f64;
        assert!(
            joint > best + 0.02 && joint > mean + 0.1,
            "joint {joint:.3} vs singles {singles:?}"
        );
    }

    fn kmeans_acc(x: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
        let mu = init_centroids(x.view(), k, 0).unwrap();
        let q = soft_assign(x.view(), &mu, 1.0).unwrap();
        metrics::clustering_accuracy(&assign_clusters(&q), labels).unwrap()
    }
}
