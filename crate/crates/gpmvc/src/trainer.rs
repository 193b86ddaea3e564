//! Three-stage training: autoencoding on paired data, adversarial view
//! generation on all data, then joint refinement of the full objective on
//! the completed dataset.
//!
//! * **Step 1** trains encoders and generators on paired samples only with
//!   the reconstruction loss, then seeds the cluster centroids by k-means on
//!   the fused paired latents.
//! * **Step 2** trains generators and discriminators on every sample.
//!   Unpaired samples are completed per epoch by random re-pairing: each
//!   missing view slot borrows a seeded-random observed row of that view, so
//!   batches always carry full tuples. Afterwards every missing view is
//!   imputed from the retained view's latent and the dataset is "completed".
//! * **Step 3** optimizes the full objective on the completed data. Once per
//!   epoch the imputations, the common representation, and the self-training
//!   target are refreshed; within an epoch the target distribution stays
//!   frozen. Discriminators ascend their term; encoders, generators, fusion
//!   weights, and centroids descend.
//!
//! Reductions: reconstruction-style terms are mean-per-sample (see
//! [`crate::losses`]); the KL term is divided by the batch row count inside
//! the trainer for the same batch-size invariance.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::backprop;
use crate::checkpoint;
use crate::clustering::{
    self, assign_clusters, init_centroids, metrics, reseed_empty_clusters, soft_assign,
    target_distribution, ClusterResult, ClusterState,
};
use crate::dataio::{matrix_to_csv, MultiViewDataset, PartialSplit};
use crate::error::{Error, Result};
use crate::fusion::{self, FusionMode};
use crate::losses::{self, LossWeights};
use crate::networks::{
    Adam, MatrixAdam, ModelGrads, ModelState, NetworkConfig, UpdateGroups,
};
use crate::rng::{stream_seed, SeededRng, Stream};

/// Which loss terms participate, mirroring the ablation rows
/// (reconstruction only / plus adversarial / the full objective).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "AE+AT")]
    AeAt,
    #[serde(rename = "ALL")]
    All,
}

impl AblationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::Ae => "AE",
            AblationMode::AeAt => "AE+AT",
            AblationMode::All => "ALL",
        }
    }

    fn adversarial(&self) -> bool {
        !matches!(self, AblationMode::Ae)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs_per_step: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub ablation_mode: AblationMode,
    pub weights: LossWeights,
    pub network: NetworkConfig,
    pub fusion_mode: FusionMode,
    /// Student's-t degrees of freedom for the clustering head.
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_per_step: 20,
            batch_size: 256,
            learning_rate: 1e-4,
            seed: 0,
            ablation_mode: AblationMode::All,
            weights: LossWeights::default(),
            network: NetworkConfig::default(),
            fusion_mode: FusionMode::Projected,
            alpha: clustering::DEFAULT_ALPHA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dims: &[usize], k: usize) -> Result<()> {
        if self.epochs_per_step == 0 {
            return Err(Error::InvalidConfig("epochs_per_step must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        self.weights.validate()?;
        self.network.validate(dims, k)
    }

    /// Loss weights with the ablation mode applied.
    pub fn effective_weights(&self) -> LossWeights {
        match self.ablation_mode {
            AblationMode::Ae => LossWeights {
                lambda_adv: 0.0,
                lambda_fusion: 0.0,
                lambda_kl: 0.0,
                ..self.weights
            },
            AblationMode::AeAt => LossWeights {
                lambda_fusion: 0.0,
                lambda_kl: 0.0,
                ..self.weights
            },
            AblationMode::All => self.weights,
        }
    }
}

/// Per-epoch loss record; one row per epoch per step in `train_log.csv`.
#[derive(Debug, Clone)]
pub struct EpochLosses {
    pub step: usize,
    pub epoch: usize,
    pub l_ae: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub l_cyc: f64,
    pub l_fu: f64,
    pub l_kl: f64,
    pub total: f64,
}

/// Instrumentation counters for the training-access invariants.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainStats {
    /// Rows fed to the step-1 loop, counted per (sample, view) access.
    pub step1_row_touches: usize,
    /// Missing (sample, view) entries imputed at the end of step 2.
    pub imputation_count: usize,
}

/// Everything a finished run produces.
pub struct TrainOutcome {
    pub model: ModelState,
    pub cluster: ClusterState,
    /// Final common representation over all samples.
    pub z: Array2<f64>,
    /// Completed per-view data: observed entries verbatim, missing imputed.
    pub completed: Vec<Array2<f64>>,
    pub result: ClusterResult,
    pub log: Vec<EpochLosses>,
    pub stats: TrainStats,
}

pub struct TrainRun<'a> {
    dataset: &'a MultiViewDataset,
    split: &'a PartialSplit,
    config: TrainConfig,
    model: ModelState,
    adam: Adam,
    centroid_adam: Option<MatrixAdam>,
    centroids: Option<Array2<f64>>,
    completed: Option<Vec<Array2<f64>>>,
    log: Vec<EpochLosses>,
    stats: TrainStats,
    batch_rng: SeededRng,
    pairing_rng: SeededRng,
}

fn gather(view: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    view.select(Axis(0), idx)
}

impl<'a> TrainRun<'a> {
    pub fn new(
        dataset: &'a MultiViewDataset,
        split: &'a PartialSplit,
        config: &TrainConfig,
    ) -> Result<Self> {
        if dataset.num_views() < 2 {
            return Err(Error::TooFewViews {
                required: 2,
                got: dataset.num_views(),
            });
        }
        if split.num_samples() != dataset.num_samples() {
            return Err(Error::ShapeMismatch(format!(
                "split covers {} samples, dataset has {}",
                split.num_samples(),
                dataset.num_samples()
            )));
        }
        if dataset.k < 2 {
            return Err(Error::InvalidConfig("clustering needs k >= 2".into()));
        }
        config.validate(&dataset.dims(), dataset.k)?;
        let mut init_rng = SeededRng::derive(config.seed, Stream::ModelInit);
        let model = ModelState::init(
            &config.network,
            &dataset.dims(),
            config.fusion_mode,
            &mut init_rng,
        );
        let adam = Adam::new(&model, config.learning_rate);
        Ok(TrainRun {
            dataset,
            split,
            config: config.clone(),
            model,
            adam,
            centroid_adam: None,
            centroids: None,
            completed: None,
            log: Vec::new(),
            stats: TrainStats::default(),
            batch_rng: SeededRng::derive(config.seed, Stream::Batches),
            pairing_rng: SeededRng::derive(config.seed, Stream::Pairing),
        })
    }

    pub fn centroids(&self) -> Option<&Array2<f64>> {
        self.centroids.as_ref()
    }

    pub fn completed_views(&self) -> Option<&[Array2<f64>]> {
        self.completed.as_deref()
    }

    pub fn stats(&self) -> TrainStats {
        self.stats
    }

    pub fn log(&self) -> &[EpochLosses] {
        self.log.last().map(|_| &self.log[..]).unwrap_or(&[])
    }

    /// Train encoders and generators on paired data, then seed centroids by
    /// k-means on the fused paired latents.
    pub fn step1(&mut self) -> Result<()> {
        let paired = &self.split.paired_idx;
        let k = self.dataset.k;
        if paired.len() < k {
            return Err(Error::Invalid(format!(
                "step 1 needs at least k={k} paired samples, got {}",
                paired.len()
            )));
        }
        let views = self.dataset.num_views();
        for epoch in 0..self.config.epochs_per_step {
            let mut order = paired.clone();
            self.batch_rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            let mut rows = 0usize;
            for chunk in order.chunks(self.config.batch_size) {
                let xs: Vec<Array2<f64>> = (0..views)
                    .map(|v| gather(&self.dataset.views[v], chunk))
                    .collect();
                let caches: Vec<_> = xs
                    .iter()
                    .enumerate()
                    .map(|(v, x)| self.model.encode_cached(v, x.view()))
                    .collect::<Result<_>>()?;
                let mut grads = ModelGrads::zeros_like(&self.model);
                let (loss, d_latents) =
                    backprop::autoencoder_path(&self.model, &xs, &caches, &mut grads, 1.0)?;
                for (cache, dz) in caches.iter().zip(d_latents) {
                    self.model.encode_backward(cache, dz, Some(&mut grads));
                }
                self.adam
                    .apply(&mut self.model, &grads, UpdateGroups::autoencoder());
                loss_sum += loss * chunk.len() as f64;
                rows += chunk.len();
                self.stats.step1_row_touches += chunk.len() * views;
            }
            let l_ae = loss_sum / rows as f64;
            self.log.push(EpochLosses {
                step: 1,
                epoch,
                l_ae,
                d_loss: 0.0,
                g_loss: 0.0,
                l_cyc: 0.0,
                l_fu: 0.0,
                l_kl: 0.0,
                total: l_ae,
            });
        }

        // Fused common representation of the paired samples seeds k-means.
        let z = self.fused_latent_rows(&self.dataset.views, paired)?;
        let mu = init_centroids(z.view(), k, stream_seed(self.config.seed, Stream::Kmeans))?;
        self.centroid_adam = Some(MatrixAdam::new((k, self.config.network.latent_dim)));
        self.centroids = Some(mu);
        Ok(())
    }

    pub fn fused_latent_rows(&self, views: &[Array2<f64>], rows: &[usize]) -> Result<Array2<f64>> {
        let z_list: Vec<Array2<f64>> = (0..views.len())
            .map(|v| {
                let x = gather(&views[v], rows);
                self.model.encode(v, x.view())
            })
            .collect::<Result<_>>()?;
        fusion::fuse(&z_list, &self.model.fusion)
    }

    /// Observed row indices per view.
    fn observers(&self) -> Vec<Vec<usize>> {
        (0..self.dataset.num_views())
            .map(|v| self.split.observed_rows(v))
            .collect()
    }

    /// Per-epoch slot table: `slots[v][i]` is the row of view `v` standing in
    /// for sample `i` (the sample itself when observed, otherwise a random
    /// observed companion re-drawn every epoch).
    fn draw_slots(&mut self, observers: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = self.dataset.num_samples();
        let views = self.dataset.num_views();
        let mut slots: Vec<Vec<usize>> = (0..views).map(|_| (0..n).collect()).collect();
        for (&j, &retained) in self.split.unpaired.iter() {
            for (v, slot) in slots.iter_mut().enumerate() {
                if v != retained {
                    let pool = &observers[v];
                    slot[j] = pool[self.pairing_rng.index(pool.len())];
                }
            }
        }
        slots
    }

    /// Train generators and discriminators adversarially on all data, then
    /// impute every missing view from its sample's retained view.
    pub fn step2(&mut self) -> Result<()> {
        let views = self.dataset.num_views();
        let n = self.dataset.num_samples();
        let observers = self.observers();
        for v in 0..views {
            if observers[v].is_empty() {
                return Err(Error::UnobservedView(v));
            }
        }

        if self.config.ablation_mode.adversarial() {
            let lambda_cyc = self.config.weights.lambda_cyc;
            for epoch in 0..self.config.epochs_per_step {
                let slots = self.draw_slots(&observers);
                let order = self.batch_rng.permutation(n);
                let mut sums = (0.0, 0.0, 0.0, 0.0); // d, g, cyc, ae
                let mut rows = 0usize;
                for chunk in order.chunks(self.config.batch_size) {
                    let xs: Vec<Array2<f64>> = (0..views)
                        .map(|v| {
                            let rows: Vec<usize> = chunk.iter().map(|&i| slots[v][i]).collect();
                            gather(&self.dataset.views[v], &rows)
                        })
                        .collect();
                    let (d, g, cyc, ae) =
                        self.adversarial_batch(&xs, false, true, 1.0, lambda_cyc)?;
                    sums.0 += d * chunk.len() as f64;
                    sums.1 += g * chunk.len() as f64;
                    sums.2 += cyc * chunk.len() as f64;
                    sums.3 += ae * chunk.len() as f64;
                    rows += chunk.len();
                }
                let nf = rows as f64;
                let (d_loss, g_loss, l_cyc, l_ae) =
                    (sums.0 / nf, sums.1 / nf, sums.2 / nf, sums.3 / nf);
                self.log.push(EpochLosses {
                    step: 2,
                    epoch,
                    l_ae,
                    d_loss,
                    g_loss,
                    l_cyc,
                    l_fu: 0.0,
                    l_kl: 0.0,
                    total: l_ae + g_loss + lambda_cyc * l_cyc,
                });
            }
        } else {
            // Reconstruction-only mode: the same epoch budget goes to
            // per-view autoencoding over every observed row.
            for epoch in 0..self.config.epochs_per_step {
                let mut loss_sum = 0.0;
                let mut rows = 0usize;
                for v in 0..views {
                    let mut order = observers[v].clone();
                    self.batch_rng.shuffle(&mut order);
                    for chunk in order.chunks(self.config.batch_size) {
                        let x = gather(&self.dataset.views[v], chunk);
                        let cache = self.model.encode_cached(v, x.view())?;
                        let mut grads = ModelGrads::zeros_like(&self.model);
                        let (loss, dz) = backprop::autoencoder_view_path(
                            &self.model,
                            v,
                            &x,
                            &cache,
                            &mut grads,
                            1.0,
                        )?;
                        self.model.encode_backward(&cache, dz, Some(&mut grads));
                        self.adam
                            .apply(&mut self.model, &grads, UpdateGroups::autoencoder());
                        loss_sum += loss * chunk.len() as f64;
                        rows += chunk.len();
                    }
                }
                let l_ae = loss_sum / rows as f64;
                self.log.push(EpochLosses {
                    step: 2,
                    epoch,
                    l_ae,
                    d_loss: 0.0,
                    g_loss: 0.0,
                    l_cyc: 0.0,
                    l_fu: 0.0,
                    l_kl: 0.0,
                    total: l_ae,
                });
            }
        }

        // Impute: for each unpaired sample, generate every missing view from
        // the retained view's latent.
        let mut completed: Vec<Array2<f64>> = self.dataset.views.to_vec();
        self.stats.imputation_count += self.impute_into(&mut completed)?;
        self.completed = Some(completed);
        Ok(())
    }

    /// One adversarial batch: a discriminator ascent step on real vs
    /// generated rows, then a generator step on the non-saturating GAN loss
    /// plus the cycle term. With `ae_anchor` the generator step also carries
    /// the reconstruction term of the overall objective, keeping the
    /// generators decoders of their own view while they learn to translate.
    /// Returns `(d_loss, sum of g terms, cycle total, ae loss)`.
    fn adversarial_batch(
        &mut self,
        xs: &[Array2<f64>],
        update_encoders: bool,
        ae_anchor: bool,
        adv_scale: f64,
        cyc_scale_base: f64,
    ) -> Result<(f64, f64, f64, f64)> {
        let views = xs.len();

        // Discriminator phase: generated rows are constants.
        let mut d_total = 0.0;
        {
            let z: Vec<Array2<f64>> = (0..views)
                .map(|v| self.model.encode(v, xs[v].view()))
                .collect::<Result<_>>()?;
            let mut grads = ModelGrads::zeros_like(&self.model);
            for v in 0..views {
                let fakes: Vec<Array2<f64>> = (0..views)
                    .filter(|&w| w != v)
                    .map(|w| self.model.generate(v, z[w].view()))
                    .collect::<Result<_>>()?;
                let fake_views: Vec<_> = fakes.iter().map(|f| f.view()).collect();
                let fake = ndarray::concatenate(Axis(0), &fake_views)
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
                d_total +=
                    backprop::discriminator_path(&self.model, v, &xs[v], &fake, &mut grads, 1.0)?;
            }
            self.adam
                .apply(&mut self.model, &grads, UpdateGroups::discriminators_only());
        }

        // Generator phase against the updated discriminators.
        let caches: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(v, x)| self.model.encode_cached(v, x.view()))
            .collect::<Result<_>>()?;
        let mut grads = ModelGrads::zeros_like(&self.model);
        let (g_terms, dz_adv) =
            backprop::generator_adversarial_path(&self.model, &caches, &mut grads, adv_scale)?;
        let (cyc_total, dz_cyc, _terms) = backprop::cycle_path(
            &self.model,
            xs,
            &caches,
            &mut grads,
            update_encoders,
            adv_scale * cyc_scale_base,
        )?;
        let mut l_ae = 0.0;
        if ae_anchor {
            let (ae, _dz_ae) = backprop::autoencoder_path(&self.model, xs, &caches, &mut grads, 1.0)?;
            l_ae = ae;
        }
        if update_encoders {
            for ((cache, a), c) in caches.iter().zip(dz_adv).zip(dz_cyc) {
                self.model.encode_backward(cache, a + c, Some(&mut grads));
            }
            self.adam.apply(
                &mut self.model,
                &grads,
                UpdateGroups {
                    encoders: true,
                    generators: true,
                    ..Default::default()
                },
            );
        } else {
            self.adam
                .apply(&mut self.model, &grads, UpdateGroups::generators_only());
        }
        Ok((d_total, g_terms.iter().sum(), cyc_total, l_ae))
    }

    /// Overwrite missing entries of `completed` with generator imputations
    /// from each sample's retained view. Returns the number of imputed rows.
    fn impute_into(&self, completed: &mut [Array2<f64>]) -> Result<usize> {
        let views = completed.len();
        let mut count = 0;
        // Batch by retained view so generation runs on whole matrices.
        for retained in 0..views {
            let rows: Vec<usize> = self
                .split
                .unpaired
                .iter()
                .filter(|&(_, &r)| r == retained)
                .map(|(&j, _)| j)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let x = gather(&self.dataset.views[retained], &rows);
            let z = self.model.encode(retained, x.view())?;
            for (v, view) in completed.iter_mut().enumerate() {
                if v == retained {
                    continue;
                }
                let gen = self.model.generate(v, z.view())?;
                for (slot, &j) in rows.iter().enumerate() {
                    view.row_mut(j).assign(&gen.row(slot));
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// Joint refinement of the full objective on the completed data.
    pub fn step3(&mut self) -> Result<()> {
        let views = self.dataset.num_views();
        let n = self.dataset.num_samples();
        let _k = self.dataset.k;
        let alpha = self.config.alpha;
        let mut completed = self
            .completed
            .take()
            .ok_or_else(|| Error::Invalid("step 3 requires step 2".into()))?;
        let mut mu = self
            .centroids
            .take()
            .ok_or_else(|| Error::Invalid("step 3 requires step 1 centroids".into()))?;
        let weights = self.config.effective_weights();
        let adversarial = self.config.ablation_mode.adversarial();
        let clustered = self.config.ablation_mode == AblationMode::All;
        let all_rows: Vec<usize> = (0..n).collect();

        for epoch in 0..self.config.epochs_per_step {
            // Epoch-boundary refresh: imputations, common representation,
            // centroids (warm-start Lloyd so they track representation
            // drift), and the frozen self-training target.
            self.impute_into(&mut completed)?;
            let p_full = if clustered {
                let z_full = self.fused_latent_rows(&completed, &all_rows)?;
                clustering::lloyd_refine(z_full.view(), &mut mu, 20, 1e-6);
                let mut q_full = soft_assign(z_full.view(), &mu, alpha)?;
                if reseed_empty_clusters(z_full.view(), &mut mu, &q_full) {
                    q_full = soft_assign(z_full.view(), &mu, alpha)?;
                }
                Some(target_distribution(&q_full)?)
            } else {
                None
            };

            let order = self.batch_rng.permutation(n);
            let mut sums = [0.0f64; 6]; // ae, d, g, cyc, fu, kl
            let mut rows = 0usize;
            for chunk in order.chunks(self.config.batch_size) {
                let xs: Vec<Array2<f64>> = (0..views)
                    .map(|v| gather(&completed[v], chunk))
                    .collect();
                let nb = chunk.len() as f64;

                let (d_loss, g_loss, cyc) = if adversarial {
                    let (d, g, cyc, _) = self.adversarial_batch(
                        &xs,
                        true,
                        false,
                        weights.lambda_adv.max(0.0),
                        // Cycle weight rides inside the adversarial term.
                        self.config.weights.lambda_cyc,
                    )?;
                    (d, g, cyc)
                } else {
                    (0.0, 0.0, 0.0)
                };

                // Joint pass: reconstruction plus (in the full mode) fusion
                // and self-training terms, one encoder backward for the sum.
                let caches: Vec<_> = xs
                    .iter()
                    .enumerate()
                    .map(|(v, x)| self.model.encode_cached(v, x.view()))
                    .collect::<Result<_>>()?;
                let mut grads = ModelGrads::zeros_like(&self.model);
                let (l_ae, mut dz_total) =
                    backprop::autoencoder_path(&self.model, &xs, &caches, &mut grads, 1.0)?;

                let mut l_fu = 0.0;
                let mut l_kl = 0.0;
                if clustered {
                    let z_list: Vec<Array2<f64>> =
                        caches.iter().map(|c| c.latent().clone()).collect();
                    let (fu, dz_fu) = fusion::fusion_loss_backward(
                        &z_list,
                        &self.model.fusion,
                        weights.lambda_fusion,
                        &mut grads.fusion,
                    )?;
                    l_fu = fu;
                    for (total, d) in dz_total.iter_mut().zip(dz_fu) {
                        *total += &d;
                    }

                    let z_fused = fusion::fuse(&z_list, &self.model.fusion)?;
                    let q_b = soft_assign(z_fused.view(), &mu, alpha)?;
                    let p_full = p_full.as_ref().expect("clustered mode has target");
                    let p_b = gather(p_full, chunk);
                    l_kl = clustering::kl_clustering_loss(&p_b, &q_b)? / nb;
                    let (d_zfused, d_mu) = clustering::kl_grads(
                        z_fused.view(),
                        &mu,
                        alpha,
                        &p_b,
                        weights.lambda_kl / nb,
                    )?;
                    let dz_kl = fusion::fuse_backward(
                        &z_list,
                        &self.model.fusion,
                        &d_zfused,
                        &mut grads.fusion,
                    )?;
                    for (total, d) in dz_total.iter_mut().zip(dz_kl) {
                        *total += &d;
                    }
                    self.centroid_adam
                        .as_mut()
                        .expect("centroid optimizer initialized in step 1")
                        .step(self.config.learning_rate, &mut mu, &d_mu);
                }

                for (cache, dz) in caches.iter().zip(dz_total) {
                    self.model.encode_backward(cache, dz, Some(&mut grads));
                }
                self.adam.apply(
                    &mut self.model,
                    &grads,
                    UpdateGroups {
                        encoders: true,
                        generators: true,
                        fusion: clustered,
                        ..Default::default()
                    },
                );

                sums[0] += l_ae * nb;
                sums[1] += d_loss * nb;
                sums[2] += g_loss * nb;
                sums[3] += cyc * nb;
                sums[4] += l_fu * nb;
                sums[5] += l_kl * nb;
                rows += chunk.len();
            }
            let nf = rows as f64;
            let [l_ae, d_loss, g_loss, l_cyc, l_fu, l_kl] = sums.map(|s| s / nf);
            let l_at = losses::adversarial_training_loss(
                &[g_loss],
                l_cyc,
                self.config.weights.lambda_cyc,
            );
            let total = losses::total_objective(l_ae, l_at, l_fu, l_kl, &weights)?;
            self.log.push(EpochLosses {
                step: 3,
                epoch,
                l_ae,
                d_loss,
                g_loss,
                l_cyc,
                l_fu,
                l_kl,
                total,
            });
        }

        // Final refresh so downstream artifacts see the trained generators.
        self.impute_into(&mut completed)?;
        self.completed = Some(completed);
        self.centroids = Some(mu);
        Ok(())
    }

    /// Final clustering readout: the trained soft assignment in the full
    /// mode, or k-means on the final representation for the ablations that
    /// never train the clustering head.
    pub fn finalize(mut self) -> Result<TrainOutcome> {
        let completed = self
            .completed
            .take()
            .ok_or_else(|| Error::Invalid("finalize requires completed data".into()))?;
        let all_rows: Vec<usize> = (0..self.dataset.num_samples()).collect();
        let z = self.fused_latent_rows(&completed, &all_rows)?;
        let k = self.dataset.k;
        let alpha = self.config.alpha;

        let mut mu = match (self.config.ablation_mode, self.centroids.take()) {
            (AblationMode::All, Some(mu)) => mu,
            _ => init_centroids(
                z.view(),
                k,
                stream_seed(self.config.seed, Stream::Kmeans).wrapping_add(1),
            )?,
        };
        let mut q = soft_assign(z.view(), &mu, alpha)?;
        if reseed_empty_clusters(z.view(), &mut mu, &q) {
            q = soft_assign(z.view(), &mu, alpha)?;
        }
        let p = target_distribution(&q)?;
        let labels = assign_clusters(&q);

        let truth = &self.dataset.labels;
        let result = ClusterResult {
            acc: metrics::clustering_accuracy(&labels, truth)?,
            nmi: metrics::nmi(&labels, truth)?,
            purity: metrics::purity(&labels, truth)?,
            labels,
            ratio: self.split.impartial_ratio,
            seed: self.config.seed,
            mode: self.config.ablation_mode.as_str().to_string(),
        };
        Ok(TrainOutcome {
            model: self.model,
            cluster: ClusterState {
                centroids: mu,
                alpha,
                q,
                p,
            },
            z,
            completed,
            result,
            log: self.log,
            stats: self.stats,
        })
    }
}

/// Where a run writes its artifacts: the run directory plus the dataset
/// manifest path echoed into `config.json` so later tooling can reload the
/// data.
#[derive(Debug, Clone)]
pub struct RunSink {
    pub dir: std::path::PathBuf,
    pub dataset_path: Option<std::path::PathBuf>,
}

/// Mask, train all three steps, evaluate, and (optionally) write the run
/// directory. The seed drives both the mask and the training streams.
pub fn run_pipeline(
    dataset: &MultiViewDataset,
    ratio: f64,
    seed: u64,
    config: &TrainConfig,
    sink: Option<&RunSink>,
) -> Result<TrainOutcome> {
    let split = crate::dataio::make_partial_split(dataset, ratio, seed)?;
    let mut config = config.clone();
    config.seed = seed;
    run_pipeline_with_split(dataset, &split, &config, sink)
}

/// Train with a caller-supplied mask; the training seed comes from the
/// config.
pub fn run_pipeline_with_split(
    dataset: &MultiViewDataset,
    split: &PartialSplit,
    config: &TrainConfig,
    sink: Option<&RunSink>,
) -> Result<TrainOutcome> {
    let mut run = TrainRun::new(dataset, split, config)?;
    run.step1()?;
    run.step2()?;
    run.step3()?;
    let outcome = run.finalize()?;
    if let Some(sink) = sink {
        write_run_dir(sink, dataset, split, config, &outcome)?;
    }
    Ok(outcome)
}

/// The fill-and-cluster reference: mean-impute the missing views, train the
/// same autoencoder stack on the filled data (three stages' worth of
/// epochs, no adversarial terms), then k-means on the fused representation.
pub fn run_mean_impute_baseline(
    dataset: &MultiViewDataset,
    split: &PartialSplit,
    config: &TrainConfig,
) -> Result<ClusterResult> {
    let filled = crate::dataio::mean_impute(dataset, split)?;
    let views = filled.num_views();
    let n = filled.num_samples();
    config.validate(&filled.dims(), filled.k)?;

    let mut init_rng = SeededRng::derive(config.seed, Stream::ModelInit);
    let mut model = ModelState::init(
        &config.network,
        &filled.dims(),
        config.fusion_mode,
        &mut init_rng,
    );
    let mut adam = Adam::new(&model, config.learning_rate);
    let mut batch_rng = SeededRng::derive(config.seed, Stream::Batches);

    for _ in 0..config.epochs_per_step * 3 {
        let order = batch_rng.permutation(n);
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<Array2<f64>> = (0..views)
                .map(|v| gather(&filled.views[v], chunk))
                .collect();
            let caches: Vec<_> = xs
                .iter()
                .enumerate()
                .map(|(v, x)| model.encode_cached(v, x.view()))
                .collect::<Result<_>>()?;
            let mut grads = ModelGrads::zeros_like(&model);
            let (_, d_latents) = backprop::autoencoder_path(&model, &xs, &caches, &mut grads, 1.0)?;
            for (cache, dz) in caches.iter().zip(d_latents) {
                model.encode_backward(cache, dz, Some(&mut grads));
            }
            adam.apply(&mut model, &grads, UpdateGroups::autoencoder());
        }
    }

    let z_list: Vec<Array2<f64>> = (0..views)
        .map(|v| model.encode(v, filled.views[v].view()))
        .collect::<Result<_>>()?;
    let z = fusion::fuse(&z_list, &model.fusion)?;
    let mu = init_centroids(
        z.view(),
        filled.k,
        stream_seed(config.seed, Stream::Kmeans).wrapping_add(2),
    )?;
    let q = soft_assign(z.view(), &mu, config.alpha)?;
    let labels = assign_clusters(&q);
    Ok(ClusterResult {
        acc: metrics::clustering_accuracy(&labels, &filled.labels)?,
        nmi: metrics::nmi(&labels, &filled.labels)?,
        purity: metrics::purity(&labels, &filled.labels)?,
        labels,
        ratio: split.impartial_ratio,
        seed: config.seed,
        mode: "mean_impute_baseline".to_string(),
    })
}

// ---------------------------------------------------------------------------
// Run directory artifacts
// ---------------------------------------------------------------------------

/// Config echo written into each run directory.
#[derive(Serialize)]
struct RunConfigFile<'a> {
    dataset: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_path: Option<&'a Path>,
    #[serde(flatten)]
    config: &'a TrainConfig,
}

/// Owned form of `config.json` for readers of a finished run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigInfo {
    pub dataset: String,
    #[serde(default)]
    pub dataset_path: Option<std::path::PathBuf>,
    #[serde(flatten)]
    pub config: TrainConfig,
}

pub fn read_run_config(path: &Path) -> Result<RunConfigInfo> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Metrics document: `metrics.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
    pub ratio: f64,
    pub seed: u64,
    pub mode: String,
    /// Learned view weights (diagnostic of view importance).
    pub beta: Vec<f64>,
}

pub fn render_train_log(log: &[EpochLosses]) -> String {
    let mut out = String::from("epoch,step,l_ae,d_loss,g_loss,l_cyc,l_fu,l_kl,total\n");
    for row in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.epoch, row.step, row.l_ae, row.d_loss, row.g_loss, row.l_cyc, row.l_fu, row.l_kl,
            row.total
        );
    }
    out
}

/// Write the full run directory: `config.json`, `mask.json`,
/// `checkpoint.bin`, `train_log.csv`, `metrics.json`, completed views under
/// `imputed/`, and sample grids under `generated_samples/` for image views.
pub fn write_run_dir(
    sink: &RunSink,
    dataset: &MultiViewDataset,
    split: &PartialSplit,
    config: &TrainConfig,
    outcome: &TrainOutcome,
) -> Result<()> {
    let dir = sink.dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_file = RunConfigFile {
        dataset: &dataset.name,
        dataset_path: sink.dataset_path.as_deref(),
        config,
    };
    let mut config_bytes = serde_json::to_vec_pretty(&config_file)?;
    config_bytes.push(b'\n');
    std::fs::write(dir.join("config.json"), config_bytes)
        .map_err(|e| Error::io(dir.join("config.json"), e))?;

    split.save(&dir.join("mask.json"))?;

    checkpoint::save_checkpoint(
        &dir.join("checkpoint.bin"),
        &outcome.model,
        dataset.k,
        Some(&outcome.cluster.centroids),
    )?;

    std::fs::write(dir.join("train_log.csv"), render_train_log(&outcome.log))
        .map_err(|e| Error::io(dir.join("train_log.csv"), e))?;

    let metrics = MetricsFile {
        acc: outcome.result.acc,
        nmi: outcome.result.nmi,
        purity: outcome.result.purity,
        ratio: outcome.result.ratio,
        seed: outcome.result.seed,
        mode: outcome.result.mode.clone(),
        beta: outcome.model.fusion.beta().to_vec(),
    };
    let mut metrics_bytes = serde_json::to_vec_pretty(&metrics)?;
    metrics_bytes.push(b'\n');
    std::fs::write(dir.join("metrics.json"), metrics_bytes)
        .map_err(|e| Error::io(dir.join("metrics.json"), e))?;

    let imputed = dir.join("imputed");
    std::fs::create_dir_all(&imputed).map_err(|e| Error::io(&imputed, e))?;
    for (v, view) in outcome.completed.iter().enumerate() {
        let path = imputed.join(format!("view_{v}.csv"));
        std::fs::write(&path, matrix_to_csv(view)).map_err(|e| Error::io(&path, e))?;
    }

    if dataset.image_shapes.iter().any(Option::is_some) {
        let samples_dir = dir.join("generated_samples");
        std::fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;
        for (v, shape) in dataset.image_shapes.iter().enumerate() {
            if shape.is_none() {
                continue;
            }
            if let Some(source) = (0..dataset.num_views()).find(|&w| w != v) {
                let count = dataset.num_samples().min(8);
                let grid = crate::viz::generation_grid(
                    dataset,
                    &outcome.model,
                    v,
                    source,
                    count,
                )?;
                let path = samples_dir.join(format!("view_{v}_from_{source}.png"));
                crate::viz::save_gray_png(&path, &grid)?;
            }
        }
    }
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::make_partial_split;
    use crate::synth;

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs_per_step: 10,
            batch_size: 32,
            learning_rate: 5e-4,
            seed,
            network: NetworkConfig {
                latent_dim: 8,
                encoder_hidden: vec![24, 16],
                discriminator_hidden: [16, 8],
                ..NetworkConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn toy(seed: u64) -> MultiViewDataset {
        synth::SynthSpec {
            name: "toy2".into(),
            samples: 80,
            classes: 2,
            dims: vec![10, 12],
            latent_dim: 4,
            cluster_sep: 4.0,
            within_scatter: 0.4,
            feature_noise: 0.02,
            confusions: vec![vec![], vec![]],
            confusion_residual: 1.0,
            seed,
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn step1_requires_enough_paired_samples() {
        let ds = toy(1);
        let split = make_partial_split(&ds, 0.0, 1).unwrap();
        let config = quick_config(1);
        let mut run = TrainRun::new(&ds, &split, &config).unwrap();
        assert!(run.step1().is_err());
    }

    #[test]
    fn step1_touches_only_paired_and_reduces_loss() {
        let ds = toy(2);
        let split = make_partial_split(&ds, 0.5, 2).unwrap();
        let config = quick_config(2);
        let mut run = TrainRun::new(&ds, &split, &config).unwrap();
        run.step1().unwrap();
        assert_eq!(
            run.stats().step1_row_touches,
            split.paired_idx.len() * config.epochs_per_step * 2
        );
        let log = run.log();
        assert!(log.last().unwrap().l_ae < log.first().unwrap().l_ae);
        assert!(run.centroids().is_some());
    }

    #[test]
    fn step1_linear_identity_toy_reaches_tiny_loss() {
        // m = d_v with no hidden layers: the reconstruction optimum is exact.
        let mut rng = SeededRng::new(3);
        let views = vec![
            Array2::from_shape_fn((40, 4), |_| rng.uniform()),
            Array2::from_shape_fn((40, 4), |_| rng.uniform()),
        ];
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let ds = MultiViewDataset::new("lin", views, labels, 2, None).unwrap();
        let split = make_partial_split(&ds, 1.0, 3).unwrap();
        let config = TrainConfig {
            epochs_per_step: 2500,
            batch_size: 40,
            learning_rate: 1e-2,
            seed: 3,
            network: NetworkConfig {
                latent_dim: 4,
                encoder_hidden: vec![],
                discriminator_hidden: [4, 3],
                output_activation: crate::networks::Activation::Linear,
                ..NetworkConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut run = TrainRun::new(&ds, &split, &config).unwrap();
        run.step1().unwrap();
        assert!(
            run.log().last().unwrap().l_ae < 1e-3,
            "final AE loss {}",
            run.log().last().unwrap().l_ae
        );
    }

    #[test]
    fn step2_imputation_count_and_range() {
        let ds = toy(4);
        let split = make_partial_split(&ds, 0.5, 4).unwrap();
        let config = quick_config(4);
        let mut run = TrainRun::new(&ds, &split, &config).unwrap();
        run.step1().unwrap();
        run.step2().unwrap();
        assert_eq!(run.stats().imputation_count, split.unpaired.len());
        let completed = run.completed_views().unwrap();
        for (&j, &retained) in split.unpaired.iter() {
            for v in 0..2 {
                if v != retained {
                    let row = completed[v].row(j);
                    assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
                }
            }
        }
        // Observed rows are untouched.
        for &i in &split.paired_idx {
            assert_eq!(completed[0].row(i), ds.views[0].row(i));
        }
    }

    #[test]
    fn full_ratio_passes_data_through_unchanged() {
        let ds = toy(5);
        let outcome = run_pipeline(&ds, 1.0, 5, &quick_config(5), None).unwrap();
        for v in 0..2 {
            assert_eq!(outcome.completed[v], ds.views[v]);
        }
        assert_eq!(outcome.stats.imputation_count, 0);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let ds = toy(6);
        let config = quick_config(6);
        let a = run_pipeline(&ds, 0.6, 9, &config, None).unwrap();
        let b = run_pipeline(&ds, 0.6, 9, &config, None).unwrap();
        assert_eq!(a.result.acc, b.result.acc);
        assert_eq!(a.result.nmi, b.result.nmi);
        assert_eq!(a.result.labels, b.result.labels);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn ablation_mode_tags_results() {
        let ds = toy(7);
        for (mode, tag) in [
            (AblationMode::Ae, "AE"),
            (AblationMode::AeAt, "AE+AT"),
            (AblationMode::All, "ALL"),
        ] {
            let config = TrainConfig {
                ablation_mode: mode,
                epochs_per_step: 2,
                ..quick_config(7)
            };
            let outcome = run_pipeline(&ds, 0.5, 7, &config, None).unwrap();
            assert_eq!(outcome.result.mode, tag);
        }
    }

    #[test]
    fn separable_toy_reaches_high_accuracy() {
        let ds = toy(8);
        let outcome = run_pipeline(&ds, 1.0, 8, &quick_config(8), None).unwrap();
        assert!(
            outcome.result.acc >= 0.95,
            "accuracy {} on separable toy",
            outcome.result.acc
        );
    }

    #[test]
    fn kl_trajectory_is_stable_late_in_training() {
        let ds = toy(9);
        let config = TrainConfig {
            epochs_per_step: 10,
            ..quick_config(9)
        };
        let outcome = run_pipeline(&ds, 0.7, 9, &config, None).unwrap();
        let kl: Vec<f64> = outcome
            .log
            .iter()
            .filter(|r| r.step == 3)
            .map(|r| r.l_kl)
            .collect();
        let tail = &kl[kl.len() - 5..];
        for pair in tail.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.05,
                "KL rose too fast late in training: {:?}",
                tail
            );
        }
    }

    #[test]
    fn self_training_does_not_hurt_toy_accuracy() {
        // Post-step-3 accuracy at least matches the post-step-2 state (same
        // completed data, k-means readout) in the vast majority of repeats.
        let mut wins = 0;
        for seed in 0..10u64 {
            let ds = toy(100 + seed);
            let split = make_partial_split(&ds, 0.8, seed).unwrap();
            let config = quick_config(seed);
            let mut run = TrainRun::new(&ds, &split, &config).unwrap();
            run.step1().unwrap();
            run.step2().unwrap();

            // Pre-step-3 readout: k-means on the completed-data latents.
            let all: Vec<usize> = (0..ds.num_samples()).collect();
            let completed = run.completed_views().unwrap().to_vec();
            let z0 = run.fused_latent_rows(&completed, &all).unwrap();
            let mu0 = init_centroids(z0.view(), ds.k, seed).unwrap();
            let q0 = soft_assign(z0.view(), &mu0, 1.0).unwrap();
            let before =
                metrics::clustering_accuracy(&assign_clusters(&q0), &ds.labels).unwrap();

            run.step3().unwrap();
            let after = run.finalize().unwrap().result.acc;
            if after + 1e-9 >= before {
                wins += 1;
            }
        }
        assert!(wins >= 8, "step 3 helped in only {wins}/10 seeds");
    }

    #[test]
    fn gradient_isolation_between_adversaries() {
        let ds = toy(11);
        let split = make_partial_split(&ds, 0.8, 11).unwrap();
        let config = quick_config(11);
        let run = TrainRun::new(&ds, &split, &config).unwrap();
        let xs: Vec<Array2<f64>> = (0..2)
            .map(|v| gather(&ds.views[v], &[0, 1, 2, 3]))
            .collect();

        // d_loss gradients never reach encoders.
        let z: Vec<Array2<f64>> = (0..2)
            .map(|v| run.model.encode(v, xs[v].view()).unwrap())
            .collect();
        let fake = run.model.generate(0, z[1].view()).unwrap();
        let mut grads = ModelGrads::zeros_like(&run.model);
        backprop::discriminator_path(&run.model, 0, &xs[0], &fake, &mut grads, 1.0).unwrap();
        assert_eq!(grads.encoders[0].max_abs(), 0.0);
        assert_eq!(grads.shared.max_abs(), 0.0);
        assert_eq!(grads.generators[0].max_abs(), 0.0);

        // Reconstruction/fusion/KL gradients never reach discriminators.
        let caches: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(v, x)| run.model.encode_cached(v, x.view()).unwrap())
            .collect();
        let mut grads = ModelGrads::zeros_like(&run.model);
        let (_, dz) =
            backprop::autoencoder_path(&run.model, &xs, &caches, &mut grads, 1.0).unwrap();
        let z_list: Vec<Array2<f64>> = caches.iter().map(|c| c.latent().clone()).collect();
        fusion::fusion_loss_backward(&z_list, &run.model.fusion, 1.0, &mut grads.fusion).unwrap();
        for (cache, d) in caches.iter().zip(dz) {
            run.model.encode_backward(cache, d, Some(&mut grads));
        }
        assert_eq!(grads.discriminators[0].max_abs(), 0.0);
        assert_eq!(grads.discriminators[1].max_abs(), 0.0);
    }
}
