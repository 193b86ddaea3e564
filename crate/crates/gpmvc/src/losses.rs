//! Training losses: per-view reconstruction, the two-sided GAN objective,
//! cycle consistency, and the overall weighted objective.
//!
//! All reconstruction-style terms use a mean-per-sample reduction (sum over
//! features, mean over batch rows) so the loss weights are batch-size
//! invariant.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights for the adversarial, fusion, and self-training terms of the
/// overall objective, plus the cycle-consistency weight inside the
/// adversarial term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    /// lambda_1: adversarial training term.
    pub lambda_adv: f64,
    /// lambda_2: fusion consistency term.
    pub lambda_fusion: f64,
    /// lambda_3: KL self-training term.
    pub lambda_kl: f64,
    /// Weight of the cycle term inside the adversarial loss.
    pub lambda_cyc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_adv: 1.0,
            lambda_fusion: 1.0,
            lambda_kl: 1.0,
            lambda_cyc: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_fusion", self.lambda_fusion),
            ("lambda_kl", self.lambda_kl),
            ("lambda_cyc", self.lambda_cyc),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Sum over views of the squared Frobenius reconstruction error, divided by
/// the batch size.
pub fn autoencoder_loss(x_list: &[ArrayView2<f64>], recon_list: &[ArrayView2<f64>]) -> Result<f64> {
    if x_list.len() != recon_list.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs vs {} reconstructions",
            x_list.len(),
            recon_list.len()
        )));
    }
    let mut total = 0.0;
    for (v, (x, r)) in x_list.iter().zip(recon_list).enumerate() {
        if x.dim() != r.dim() {
            return Err(Error::ShapeMismatch(format!(
                "view {v}: input {:?} vs reconstruction {:?}",
                x.dim(),
                r.dim()
            )));
        }
        let n = x.nrows() as f64;
        let sq: f64 = x
            .iter()
            .zip(r.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        total += sq / n;
    }
    Ok(total)
}

/// Two-sided GAN losses from discriminator probabilities on a real and a
/// generated batch:
///
/// * `d_loss = -mean(ln real) - mean(ln(1 - fake))` — descent form of the
///   discriminator's ascent objective;
/// * `g_loss = -mean(ln fake)` — the non-saturating generator objective.
///
/// Probabilities must already be clamped inside (0, 1); an empty batch
/// contributes zero to its term.
pub fn gan_losses(real_probs: ArrayView1<f64>, fake_probs: ArrayView1<f64>) -> Result<(f64, f64)> {
    for (name, probs) in [("real", &real_probs), ("fake", &fake_probs)] {
        if probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Invalid(format!(
                "{name} probabilities must lie strictly inside (0, 1)"
            )));
        }
    }
    let mean_ln = |xs: ArrayView1<f64>, f: fn(f64) -> f64| -> f64 {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().map(|&p| f(p)).sum::<f64>() / xs.len() as f64
        }
    };
    let d_loss = -mean_ln(real_probs, |p| p.ln()) - mean_ln(fake_probs, |p| (1.0 - p).ln());
    let g_loss = -mean_ln(fake_probs, |p| p.ln());
    Ok((d_loss, g_loss))
}

/// Mean-per-sample elementwise absolute error between a view batch and its
/// round-trip reconstruction through another view.
pub fn cycle_loss(x: ArrayView2<f64>, cycle_recon: ArrayView2<f64>) -> Result<f64> {
    if x.dim() != cycle_recon.dim() {
        return Err(Error::ShapeMismatch(format!(
            "cycle: input {:?} vs reconstruction {:?}",
            x.dim(),
            cycle_recon.dim()
        )));
    }
    let n = x.nrows() as f64;
    Ok(x.iter()
        .zip(cycle_recon.iter())
        .map(|(&a, &b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Adversarial training loss: per-view GAN terms plus the weighted total of
/// all ordered-pair cycle terms.
pub fn adversarial_training_loss(gan_terms: &[f64], cycle_total: f64, lambda_cyc: f64) -> f64 {
    gan_terms.iter().sum::<f64>() + lambda_cyc * cycle_total
}

/// `L = L_AE + lambda_1 L_AT + lambda_2 L_FU + lambda_3 L_KL`.
pub fn total_objective(
    l_ae: f64,
    l_at: f64,
    l_fu: f64,
    l_kl: f64,
    weights: &LossWeights,
) -> Result<f64> {
    for (name, v) in [("L_AE", l_ae), ("L_AT", l_at), ("L_FU", l_fu), ("L_KL", l_kl)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(match name {
                "L_AE" => "autoencoder loss",
                "L_AT" => "adversarial loss",
                "L_FU" => "fusion loss",
                _ => "clustering loss",
            }));
        }
    }
    Ok(l_ae + weights.lambda_adv * l_at + weights.lambda_fusion * l_fu + weights.lambda_kl * l_kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};

    #[test]
    fn autoencoder_loss_cases() {
        let x = array![[1.0, 2.0]];
        let perfect = x.clone();
        assert_eq!(
            autoencoder_loss(&[x.view()], &[perfect.view()]).unwrap(),
            0.0
        );
        let zero = array![[0.0, 0.0]];
        assert_abs_diff_eq!(
            autoencoder_loss(&[x.view()], &[zero.view()]).unwrap(),
            5.0,
            epsilon = 1e-12
        );
        // Doubling every residual quadruples the loss.
        let x2 = array![[2.0, 4.0]];
        assert_abs_diff_eq!(
            autoencoder_loss(&[x2.view()], &[zero.view()]).unwrap(),
            20.0,
            epsilon = 1e-12
        );
        let bad = array![[0.0]];
        assert!(autoencoder_loss(&[x.view()], &[bad.view()]).is_err());
    }

    #[test]
    fn gan_losses_balanced_point() {
        let half = Array1::from_elem(4, 0.5);
        let (d, g) = gan_losses(half.view(), half.view()).unwrap();
        assert_abs_diff_eq!(d, 2.0 * 2.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(g, 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn gan_losses_limit_cases() {
        let eps = crate::networks::PROB_EPS;
        let real = Array1::from_elem(3, 1.0 - eps);
        let fake = Array1::from_elem(3, eps);
        let (d, _) = gan_losses(real.view(), fake.view()).unwrap();
        assert!(d < 1e-6, "perfect discriminator loss {d}");
        let fake_wins = Array1::from_elem(3, 1.0 - eps);
        let (_, g) = gan_losses(real.view(), fake_wins.view()).unwrap();
        assert!(g < 1e-6, "winning generator loss {g}");
    }

    #[test]
    fn gan_losses_reject_out_of_range() {
        let ok = Array1::from_elem(2, 0.5);
        let bad = array![0.5, 1.0];
        assert!(gan_losses(bad.view(), ok.view()).is_err());
        assert!(gan_losses(ok.view(), array![0.0, 0.5].view()).is_err());
    }

    #[test]
    fn cycle_loss_cases() {
        let x = array![[1.0, -1.0]];
        assert_eq!(cycle_loss(x.view(), x.view()).unwrap(), 0.0);
        let zero = array![[0.0, 0.0]];
        assert_abs_diff_eq!(cycle_loss(x.view(), zero.view()).unwrap(), 2.0, epsilon = 1e-12);
        assert!(cycle_loss(x.view(), array![[0.0]].view()).is_err());
    }

    #[test]
    fn adversarial_training_loss_assembly() {
        assert_eq!(adversarial_training_loss(&[], 0.0, 10.0), 0.0);
        let total = adversarial_training_loss(&[0.5, 0.5], 0.1, 10.0);
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn total_objective_cases() {
        let w = LossWeights {
            lambda_adv: 0.0,
            lambda_fusion: 0.0,
            lambda_kl: 0.0,
            lambda_cyc: 10.0,
        };
        assert_eq!(total_objective(3.0, 9.0, 9.0, 9.0, &w).unwrap(), 3.0);

        let ones = LossWeights {
            lambda_adv: 1.0,
            lambda_fusion: 1.0,
            lambda_kl: 1.0,
            lambda_cyc: 10.0,
        };
        assert_abs_diff_eq!(
            total_objective(2.0, 3.0, 4.0, 5.0, &ones).unwrap(),
            14.0,
            epsilon = 1e-12
        );

        // Scaling lambda_kl by 2 adds exactly L_KL.
        let doubled = LossWeights {
            lambda_kl: 2.0,
            ..ones
        };
        let base = total_objective(2.0, 3.0, 4.0, 5.0, &ones).unwrap();
        let more = total_objective(2.0, 3.0, 4.0, 5.0, &doubled).unwrap();
        assert_abs_diff_eq!(more - base, 5.0, epsilon = 1e-12);

        assert!(total_objective(f64::NAN, 0.0, 0.0, 0.0, &ones).is_err());
    }
}
