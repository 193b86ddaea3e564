//! Per-loss forward/backward paths through the network stacks.
//!
//! Each function computes one loss component on a batch and accumulates the
//! parameter gradients it owns into a [`ModelGrads`]. Gradients w.r.t. the
//! per-view latents are returned to the caller, which sums contributions
//! across losses before a single encoder backward pass. This keeps the
//! gradient routing of the min-max objective explicit:
//!
//! * the discriminator path touches only discriminator parameters;
//! * the generator-side adversarial path passes through the discriminators
//!   without accumulating into them;
//! * encoder parameters move only when the caller feeds the returned latent
//!   gradients through [`ModelState::encode_backward`].

use ndarray::{Array1, Array2, Axis};

use crate::error::Result;
use crate::losses;
use crate::networks::{EncodeCache, MlpCache, ModelGrads, ModelState, PROB_EPS};

/// Reconstruction term for a single view: forward through its generator,
/// accumulate that generator's gradients, and return the loss plus `dL/dZ_v`.
pub fn autoencoder_view_path(
    state: &ModelState,
    v: usize,
    x: &Array2<f64>,
    enc_cache: &EncodeCache,
    grads: &mut ModelGrads,
    scale: f64,
) -> Result<(f64, Array2<f64>)> {
    let gen_cache = state.generators[v].forward_cached(enc_cache.latent().view());
    let recon = gen_cache.output();
    let loss = losses::autoencoder_loss(&[x.view()], &[recon.view()])?;
    let n = x.nrows() as f64;
    let d_recon = (recon - x) * (2.0 * scale / n);
    let dz = state.generators[v].backward(&gen_cache, d_recon, Some(&mut grads.generators[v]));
    Ok((loss, dz))
}

/// Reconstruction term for every view: forward through the generators,
/// accumulate generator gradients, and return the loss plus `dL/dZ_v`.
pub fn autoencoder_path(
    state: &ModelState,
    x_list: &[Array2<f64>],
    enc_caches: &[EncodeCache],
    grads: &mut ModelGrads,
    scale: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut loss = 0.0;
    let mut d_latents = Vec::with_capacity(x_list.len());
    for (v, (x, cache)) in x_list.iter().zip(enc_caches).enumerate() {
        let (view_loss, dz) = autoencoder_view_path(state, v, x, cache, grads, scale)?;
        loss += view_loss;
        d_latents.push(dz);
    }
    Ok((loss, d_latents))
}

/// Discriminator forward with the probability clamp applied.
fn disc_forward(state: &ModelState, v: usize, x: &Array2<f64>) -> (MlpCache, Array1<f64>) {
    let cache = state.discriminators[v].forward_cached(x.view());
    let probs = cache
        .output()
        .column(0)
        .mapv(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS));
    (cache, probs)
}

/// Gradient w.r.t. the raw sigmoid output, zeroed where the clamp was active.
fn gate_clamp(cache: &MlpCache, d_prob: Array1<f64>) -> Array2<f64> {
    let raw = cache.output().column(0);
    let gated = Array1::from_iter(
        raw.iter()
            .zip(d_prob.iter())
            .map(|(&r, &d)| if (PROB_EPS..=1.0 - PROB_EPS).contains(&r) { d } else { 0.0 }),
    );
    gated.insert_axis(Axis(1))
}

/// Discriminator update path for one view: `-mean ln D(real) - mean ln(1 - D(fake))`.
/// The generated batch is treated as constant; only discriminator parameters
/// receive gradients.
pub fn discriminator_path(
    state: &ModelState,
    v: usize,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    grads: &mut ModelGrads,
    scale: f64,
) -> Result<f64> {
    let (real_cache, real_probs) = disc_forward(state, v, real);
    let (fake_cache, fake_probs) = disc_forward(state, v, fake);
    let (d_loss, _) = losses::gan_losses(real_probs.view(), fake_probs.view())?;

    if !real_probs.is_empty() {
        let n = real_probs.len() as f64;
        let d_prob = real_probs.mapv(|p| -scale / (n * p));
        let d_out = gate_clamp(&real_cache, d_prob);
        state.discriminators[v].backward(&real_cache, d_out, Some(&mut grads.discriminators[v]));
    }
    if !fake_probs.is_empty() {
        let n = fake_probs.len() as f64;
        let d_prob = fake_probs.mapv(|p| scale / (n * (1.0 - p)));
        let d_out = gate_clamp(&fake_cache, d_prob);
        state.discriminators[v].backward(&fake_cache, d_out, Some(&mut grads.discriminators[v]));
    }
    Ok(d_loss)
}

/// Generator-side adversarial path: every view `v` is generated from every
/// other view's latent; `g_loss_v = -mean ln D_v(G_v(Z_w))` over all sources.
/// Accumulates generator gradients, passes through the discriminators frozen,
/// and returns `dL/dZ_w` for the caller.
pub fn generator_adversarial_path(
    state: &ModelState,
    enc_caches: &[EncodeCache],
    grads: &mut ModelGrads,
    scale: f64,
) -> Result<(Vec<f64>, Vec<Array2<f64>>)> {
    let views = state.num_views();
    let nb = enc_caches[0].latent().nrows();
    let mut g_terms = Vec::with_capacity(views);
    let mut d_latents: Vec<Array2<f64>> =
        (0..views).map(|_| Array2::zeros((nb, state.config.latent_dim))).collect();

    for v in 0..views {
        // Collect the per-source pieces so the mean runs over the full fake set.
        let mut pieces = Vec::with_capacity(views - 1);
        let mut all_probs = Vec::new();
        for w in 0..views {
            if w == v {
                continue;
            }
            let gen_cache = state.generators[v].forward_cached(enc_caches[w].latent().view());
            let (disc_cache, probs) = disc_forward(state, v, gen_cache.output());
            all_probs.extend(probs.iter().copied());
            pieces.push((w, gen_cache, disc_cache, probs));
        }
        let probs_view = Array1::from_vec(all_probs);
        let (_, g_loss) = losses::gan_losses(probs_view.view(), probs_view.view())?;
        g_terms.push(g_loss);

        let total = probs_view.len() as f64;
        for (w, gen_cache, disc_cache, probs) in pieces {
            let d_prob = probs.mapv(|p| -scale / (total * p));
            let d_out = gate_clamp(&disc_cache, d_prob);
            let d_fake = state.discriminators[v].backward(&disc_cache, d_out, None);
            let dz = state.generators[v].backward(&gen_cache, d_fake, Some(&mut grads.generators[v]));
            d_latents[w] += &dz;
        }
    }
    Ok((g_terms, d_latents))
}

/// Cycle-consistency path over all ordered view pairs `(v, w)`, `w != v`:
/// `x_v -> E_v -> G_w -> E_w -> G_v` compared to `x_v` in L1. Generator
/// gradients always accumulate; the inner encoder accumulates only when
/// `update_encoders` is set (the entry encoder's gradient is returned via
/// the latent slot for the caller to apply). Returns the summed cycle loss,
/// per-view entry latent gradients, and the number of ordered-pair terms.
pub fn cycle_path(
    state: &ModelState,
    x_list: &[Array2<f64>],
    enc_caches: &[EncodeCache],
    grads: &mut ModelGrads,
    update_encoders: bool,
    scale: f64,
) -> Result<(f64, Vec<Array2<f64>>, usize)> {
    let views = state.num_views();
    let nb = enc_caches[0].latent().nrows();
    let mut total = 0.0;
    let mut terms = 0;
    let mut d_latents: Vec<Array2<f64>> =
        (0..views).map(|_| Array2::zeros((nb, state.config.latent_dim))).collect();

    for v in 0..views {
        for w in 0..views {
            if w == v {
                continue;
            }
            let gen_w = state.generators[w].forward_cached(enc_caches[v].latent().view());
            let enc_w = state.encode_cached(w, gen_w.output().view())?;
            let gen_v = state.generators[v].forward_cached(enc_w.latent().view());
            let recon = gen_v.output();
            total += losses::cycle_loss(x_list[v].view(), recon.view())?;
            terms += 1;

            let n = x_list[v].nrows() as f64;
            let mut d_recon = recon - &x_list[v];
            d_recon.mapv_inplace(|r| scale * r.signum() / n);
            let d_inner =
                state.generators[v].backward(&gen_v, d_recon, Some(&mut grads.generators[v]));
            let d_fake = if update_encoders {
                state.encode_backward(&enc_w, d_inner, Some(grads))
            } else {
                state.encode_backward(&enc_w, d_inner, None)
            };
            let dz =
                state.generators[w].backward(&gen_w, d_fake, Some(&mut grads.generators[w]));
            d_latents[v] += &dz;
        }
    }
    Ok((total, d_latents, terms))
}
