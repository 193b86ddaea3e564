//! Weighted adaptive fusion of per-view latents into one common
//! representation.
//!
//! Per-view latents are combined through learnable weights `beta`
//! (a softmax over raw weights, so `beta` is always a probability vector).
//! Two modes:
//!
//! * `weighted_sum` — the fused code is exactly `sum_v beta_v Z_v`; the
//!   fusion loss is identically zero (the degenerate reading, kept for
//!   ablation).
//! * `projected` (default) — the fused code is a learnable linear map of the
//!   concatenated latents, and the fusion loss penalizes its squared
//!   Frobenius gap to the beta-weighted sum, pulling the projection toward
//!   a consistent convex combination without making it vacuous.
//!
//! The projection is initialized to stacked `I/V` so both modes start at the
//! same point (zero initial fusion loss).

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    WeightedSum,
    Projected,
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub mode: FusionMode,
    /// Raw per-view weights; `beta = softmax(raw_weights)`.
    pub raw_weights: Array1<f64>,
    /// Projection over concatenated latents, `(V * m) x m`.
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

impl FusionParams {
    /// Uniform beta; projection starts as the stacked average so the
    /// projected output equals the weighted sum at initialization.
    pub fn init(views: usize, latent_dim: usize, mode: FusionMode) -> Self {
        let mut proj_w = Array2::zeros((views * latent_dim, latent_dim));
        for v in 0..views {
            for j in 0..latent_dim {
                proj_w[[v * latent_dim + j, j]] = 1.0 / views as f64;
            }
        }
        FusionParams {
            mode,
            raw_weights: Array1::zeros(views),
            proj_w,
            proj_b: Array1::zeros(latent_dim),
        }
    }

    pub fn num_views(&self) -> usize {
        self.raw_weights.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.proj_b.len()
    }

    /// Normalized view weights: `softmax(raw_weights)`.
    pub fn beta(&self) -> Array1<f64> {
        softmax(&self.raw_weights)
    }
}

fn softmax(raw: &Array1<f64>) -> Array1<f64> {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = raw.mapv(|x| (x - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

fn check_latents(z_list: &[Array2<f64>], params: &FusionParams) -> Result<(usize, usize)> {
    if z_list.len() != params.num_views() {
        return Err(Error::ShapeMismatch(format!(
            "fusion expects {} latents, got {}",
            params.num_views(),
            z_list.len()
        )));
    }
    let n = z_list[0].nrows();
    let m = params.latent_dim();
    for (v, z) in z_list.iter().enumerate() {
        if z.nrows() != n || z.ncols() != m {
            return Err(Error::ShapeMismatch(format!(
                "latent {v}: expected {n}x{m}, got {}x{}",
                z.nrows(),
                z.ncols()
            )));
        }
    }
    Ok((n, m))
}

fn weighted_sum(z_list: &[Array2<f64>], beta: &Array1<f64>) -> Array2<f64> {
    let mut acc = &z_list[0] * beta[0];
    for (z, &b) in z_list.iter().zip(beta.iter()).skip(1) {
        acc.scaled_add(b, z);
    }
    acc
}

fn concat(z_list: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = z_list.iter().map(|z| z.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("latent shapes checked")
}

/// Fuse per-view latents into the common representation.
pub fn fuse(z_list: &[Array2<f64>], params: &FusionParams) -> Result<Array2<f64>> {
    check_latents(z_list, params)?;
    let beta = params.beta();
    match params.mode {
        FusionMode::WeightedSum => Ok(weighted_sum(z_list, &beta)),
        FusionMode::Projected => Ok(concat(z_list).dot(&params.proj_w) + &params.proj_b),
    }
}

/// Fuse with only a subset of views observed per sample: the weighted sum
/// over observed latents with beta renormalized over that subset. Used when
/// imputation has not produced the missing latents yet.
pub fn fuse_partial(
    z_list: &[Array2<f64>],
    observed: &[Vec<usize>],
    params: &FusionParams,
) -> Result<Array2<f64>> {
    let (n, m) = check_latents(z_list, params)?;
    if observed.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "observed mask rows {} != latent rows {n}",
            observed.len()
        )));
    }
    let beta = params.beta();
    let mut out = Array2::zeros((n, m));
    for (i, views) in observed.iter().enumerate() {
        if views.is_empty() {
            return Err(Error::Invalid(format!("sample {i} observes no view")));
        }
        let norm: f64 = views.iter().map(|&v| beta[v]).sum();
        for &v in views {
            let w = beta[v] / norm;
            let mut row = out.row_mut(i);
            row.scaled_add(w, &z_list[v].row(i));
        }
    }
    Ok(out)
}

/// Squared Frobenius gap between the projected fusion and the beta-weighted
/// sum, divided by the number of rows. Exactly zero in weighted-sum mode.
pub fn fusion_loss(z_list: &[Array2<f64>], params: &FusionParams) -> Result<f64> {
    check_latents(z_list, params)?;
    if params.mode == FusionMode::WeightedSum {
        return Ok(0.0);
    }
    let n = z_list[0].nrows() as f64;
    let beta = params.beta();
    let gap = concat(z_list).dot(&params.proj_w) + &params.proj_b - weighted_sum(z_list, &beta);
    Ok(gap.mapv(|g| g * g).sum() / n)
}

/// Gradients for [`FusionParams`].
#[derive(Debug, Clone)]
pub struct FusionGrads {
    pub raw_weights: Array1<f64>,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

impl FusionGrads {
    pub fn zeros_like(params: &FusionParams) -> Self {
        FusionGrads {
            raw_weights: Array1::zeros(params.raw_weights.raw_dim()),
            proj_w: Array2::zeros(params.proj_w.raw_dim()),
            proj_b: Array1::zeros(params.proj_b.raw_dim()),
        }
    }

    /// Chain a gradient w.r.t. beta back through the softmax into raw weights.
    pub fn add_beta_grad(&mut self, params: &FusionParams, d_beta: &Array1<f64>) {
        let beta = params.beta();
        let dot = d_beta
            .iter()
            .zip(beta.iter())
            .map(|(&d, &b)| d * b)
            .sum::<f64>();
        for v in 0..beta.len() {
            self.raw_weights[v] += beta[v] * (d_beta[v] - dot);
        }
    }
}

/// Backprop `d_fused` through [`fuse`]; returns per-view latent gradients and
/// accumulates parameter gradients.
pub fn fuse_backward(
    z_list: &[Array2<f64>],
    params: &FusionParams,
    d_fused: &Array2<f64>,
    grads: &mut FusionGrads,
) -> Result<Vec<Array2<f64>>> {
    let (_, m) = check_latents(z_list, params)?;
    let beta = params.beta();
    match params.mode {
        FusionMode::WeightedSum => {
            let mut d_beta = Array1::zeros(beta.len());
            let d_list = z_list
                .iter()
                .enumerate()
                .map(|(v, z)| {
                    d_beta[v] = (d_fused * z).sum();
                    d_fused * beta[v]
                })
                .collect();
            grads.add_beta_grad(params, &d_beta);
            Ok(d_list)
        }
        FusionMode::Projected => {
            let cat = concat(z_list);
            grads.proj_w += &cat.t().dot(d_fused);
            grads.proj_b += &d_fused.sum_axis(Axis(0));
            let d_cat = d_fused.dot(&params.proj_w.t());
            Ok((0..z_list.len())
                .map(|v| d_cat.slice(s![.., v * m..(v + 1) * m]).to_owned())
                .collect())
        }
    }
}

/// Fusion loss plus its gradients, scaled by `scale` (the loss weight over
/// batch-dependent factors). Returns the unscaled loss and per-view latent
/// gradients; parameter gradients accumulate into `grads`.
pub fn fusion_loss_backward(
    z_list: &[Array2<f64>],
    params: &FusionParams,
    scale: f64,
    grads: &mut FusionGrads,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let (n, m) = check_latents(z_list, params)?;
    if params.mode == FusionMode::WeightedSum {
        let zero = vec![Array2::zeros((n, m)); z_list.len()];
        return Ok((0.0, zero));
    }
    let nf = n as f64;
    let beta = params.beta();
    let cat = concat(z_list);
    let gap = cat.dot(&params.proj_w) + &params.proj_b - weighted_sum(z_list, &beta);
    let loss = gap.mapv(|g| g * g).sum() / nf;

    // d loss / d gap = 2 gap / n, then scaled.
    let d_gap = gap * (2.0 * scale / nf);
    grads.proj_w += &cat.t().dot(&d_gap);
    grads.proj_b += &d_gap.sum_axis(Axis(0));

    let mut d_beta = Array1::zeros(beta.len());
    let d_cat = d_gap.dot(&params.proj_w.t());
    let d_list: Vec<Array2<f64>> = z_list
        .iter()
        .enumerate()
        .map(|(v, z)| {
            d_beta[v] = -(&d_gap * z).sum();
            let mut d = d_cat.slice(s![.., v * m..(v + 1) * m]).to_owned();
            d.scaled_add(-beta[v], &d_gap);
            d
        })
        .collect();
    grads.add_beta_grad(params, &d_beta);
    Ok((loss, d_list))
}

/// Adam slots for the fusion parameters.
pub struct FusionAdam {
    t: u64,
    m_raw: Array1<f64>,
    v_raw: Array1<f64>,
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

impl FusionAdam {
    pub fn zeros_like(params: &FusionParams) -> Self {
        FusionAdam {
            t: 0,
            m_raw: Array1::zeros(params.raw_weights.raw_dim()),
            v_raw: Array1::zeros(params.raw_weights.raw_dim()),
            m_w: Array2::zeros(params.proj_w.raw_dim()),
            v_w: Array2::zeros(params.proj_w.raw_dim()),
            m_b: Array1::zeros(params.proj_b.raw_dim()),
            v_b: Array1::zeros(params.proj_b.raw_dim()),
        }
    }

    pub fn step(&mut self, lr: f64, params: &mut FusionParams, grads: &FusionGrads) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        for i in 0..params.raw_weights.len() {
            update(
                &mut params.raw_weights[i],
                &mut self.m_raw[i],
                &mut self.v_raw[i],
                grads.raw_weights[i],
            );
        }
        ndarray::Zip::from(&mut params.proj_w)
            .and(&mut self.m_w)
            .and(&mut self.v_w)
            .and(&grads.proj_w)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        for i in 0..params.proj_b.len() {
            update(
                &mut params.proj_b[i],
                &mut self.m_b[i],
                &mut self.v_b[i],
                grads.proj_b[i],
            );
        }
    }
}
