//! Per-view encoders with a shared latent layer, mirrored generators, and
//! discriminators, all as stacked fully connected maps with hand-rolled
//! backward passes.
//!
//! The encoder for view `v` is a view-private stack `d_v -> hidden...`
//! followed by one latent layer shared across every view (the shared block
//! theta). Generators mirror the encoder widths in reverse and end in the
//! configured output activation; discriminators are three stacked layers
//! ending in a sigmoid head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionGrads, FusionMode, FusionParams};
use crate::rng::SeededRng;

/// Slope of the leaky rectifier's negative half.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// `y = x . w + b` with `w: (in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    /// Glorot-uniform weights, zero bias, row-major draw order.
    pub fn glorot(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        let w = Array2::from_shape_fn((input, output), |_| rng.range(-scale, scale));
        Linear {
            w,
            b: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub lin: Linear,
    pub act: Activation,
}

/// A stack of dense layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Forward cache: `xs[0]` is the input, `xs[i + 1]` the output of layer `i`.
pub struct MlpCache {
    pub xs: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.xs.last().expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LinearGrad>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| LinearGrad {
                    w: Array2::zeros(l.lin.w.raw_dim()),
                    b: Array1::zeros(l.lin.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0f64, |m, &g| m.max(g.abs()))
    }
}

impl Mlp {
    pub fn new(widths: &[usize], acts: &[Activation], rng: &mut SeededRng) -> Self {
        assert_eq!(widths.len(), acts.len() + 1);
        let layers = widths
            .windows(2)
            .zip(acts)
            .map(|(w, &act)| DenseLayer {
                lin: Linear::glorot(w[0], w[1], rng),
                act,
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.lin.w.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.lin.w.ncols())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = h.dot(&layer.lin.w) + &layer.lin.b;
            h.mapv_inplace(|u| layer.act.apply(u));
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> MlpCache {
        let mut xs = Vec::with_capacity(self.layers.len() + 1);
        xs.push(x.to_owned());
        for layer in &self.layers {
            let mut h = xs.last().unwrap().dot(&layer.lin.w) + &layer.lin.b;
            h.mapv_inplace(|u| layer.act.apply(u));
            xs.push(h);
        }
        MlpCache { xs }
    }

    /// Backpropagate `d_out` (gradient w.r.t. the stack output). When `grads`
    /// is `Some`, parameter gradients are accumulated into it; passing `None`
    /// propagates through frozen layers. Returns the gradient w.r.t. the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        d_out: Array2<f64>,
        mut grads: Option<&mut MlpGrads>,
    ) -> Array2<f64> {
        let mut d = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.xs[i + 1];
            // d_pre = d * act'(pre), derivative taken from the output.
            let mut d_pre = d;
            d_pre.zip_mut_with(y, |g, &out| *g *= layer.act.grad_from_output(out));
            if let Some(g) = grads.as_deref_mut() {
                g.layers[i].w += &cache.xs[i].t().dot(&d_pre);
                g.layers[i].b += &d_pre.sum_axis(Axis(0));
            }
            d = d_pre.dot(&layer.lin.w.t());
        }
        d
    }
}

// ---------------------------------------------------------------------------
// Network configuration
// ---------------------------------------------------------------------------

/// Which encoder layers share parameters across views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharedBlock {
    /// The latent-producing final layer is shared; earlier layers are
    /// view-private to absorb differing input widths.
    FinalLayer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Latent width `m`.
    pub latent_dim: usize,
    /// View-private encoder widths; generators mirror them reversed.
    pub encoder_hidden: Vec<usize>,
    /// Two hidden widths; the discriminator is `d_v -> h0 -> h1 -> 1`.
    pub discriminator_hidden: [usize; 2],
    pub hidden_activation: Activation,
    /// Generator output head; sigmoid assumes data scaled to `[0, 1]`.
    pub output_activation: Activation,
    pub shared_block: SharedBlock,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            latent_dim: 32,
            encoder_hidden: vec![512, 256],
            discriminator_hidden: [256, 64],
            hidden_activation: Activation::LeakyRelu,
            output_activation: Activation::Sigmoid,
            shared_block: SharedBlock::FinalLayer,
        }
    }
}

impl NetworkConfig {
    /// Default sized for the given views: latent 64 when any view is wider
    /// than 256 features (image-scale), otherwise 32.
    pub fn for_dims(dims: &[usize]) -> Self {
        let latent = if dims.iter().any(|&d| d > 256) { 64 } else { 32 };
        NetworkConfig {
            latent_dim: latent,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self, dims: &[usize], k: usize) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be positive".into()));
        }
        if self.latent_dim < k {
            return Err(Error::InvalidConfig(format!(
                "latent_dim {} must be >= number of clusters {k}",
                self.latent_dim
            )));
        }
        if self.encoder_hidden.iter().any(|&w| w == 0)
            || self.discriminator_hidden.iter().any(|&w| w == 0)
        {
            return Err(Error::InvalidConfig("zero layer width".into()));
        }
        if self.encoder_hidden.is_empty() {
            let first = dims.first().copied().unwrap_or(0);
            if dims.iter().any(|&d| d != first) {
                return Err(Error::InvalidConfig(
                    "empty encoder_hidden requires equal view widths (shared latent layer)".into(),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model state
// ---------------------------------------------------------------------------

/// All trainable parameters: per-view encoder stacks with the shared latent
/// layer, per-view generators and discriminators, and the fusion weights.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: NetworkConfig,
    pub dims: Vec<usize>,
    /// View-private encoder parts (`d_v -> hidden...`, hidden activations).
    pub encoders: Vec<Mlp>,
    /// Shared latent layer theta (`last_hidden -> m`, linear).
    pub shared: Mlp,
    /// Per-view generators (`m -> reversed hidden -> d_v`).
    pub generators: Vec<Mlp>,
    /// Per-view discriminators (`d_v -> h0 -> h1 -> 1`, sigmoid head).
    pub discriminators: Vec<Mlp>,
    pub fusion: FusionParams,
}

impl ModelState {
    /// Seeded Glorot initialization. Components are drawn in a fixed order
    /// (private encoders by view, shared layer, generators, discriminators)
    /// so states regenerate exactly from `(config, dims, seed)`.
    pub fn init(
        config: &NetworkConfig,
        dims: &[usize],
        fusion_mode: FusionMode,
        rng: &mut SeededRng,
    ) -> Self {
        let hact = config.hidden_activation;
        let mut encoders = Vec::with_capacity(dims.len());
        for &d in dims {
            let mut widths = vec![d];
            widths.extend(&config.encoder_hidden);
            let acts = vec![hact; config.encoder_hidden.len()];
            encoders.push(Mlp::new(&widths, &acts, rng));
        }
        let shared_in = *config.encoder_hidden.last().unwrap_or(&dims[0]);
        let shared = Mlp::new(&[shared_in, config.latent_dim], &[Activation::Linear], rng);

        let mut generators = Vec::with_capacity(dims.len());
        for &d in dims {
            let mut widths = vec![config.latent_dim];
            widths.extend(config.encoder_hidden.iter().rev());
            widths.push(d);
            let mut acts = vec![hact; config.encoder_hidden.len()];
            acts.push(config.output_activation);
            generators.push(Mlp::new(&widths, &acts, rng));
        }

        let mut discriminators = Vec::with_capacity(dims.len());
        for &d in dims {
            let [h0, h1] = config.discriminator_hidden;
            discriminators.push(Mlp::new(
                &[d, h0, h1, 1],
                &[hact, hact, Activation::Sigmoid],
                rng,
            ));
        }

        let fusion = FusionParams::init(dims.len(), config.latent_dim, fusion_mode);

        ModelState {
            config: config.clone(),
            dims: dims.to_vec(),
            encoders,
            shared,
            generators,
            discriminators,
            fusion,
        }
    }

    pub fn num_views(&self) -> usize {
        self.dims.len()
    }

    fn check_width(&self, got: usize, expected: usize, what: &str) -> Result<()> {
        if got != expected {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected width {expected}, got {got}"
            )));
        }
        Ok(())
    }

    /// Map view-`v` inputs to `N x m` latent codes.
    pub fn encode(&self, v: usize, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols(), self.dims[v], "encode input")?;
        Ok(self.shared.forward(self.encoders[v].forward(x).view()))
    }

    pub fn encode_cached(&self, v: usize, x: ArrayView2<f64>) -> Result<EncodeCache> {
        self.check_width(x.ncols(), self.dims[v], "encode input")?;
        let private = self.encoders[v].forward_cached(x);
        let shared = self.shared.forward_cached(private.output().view());
        Ok(EncodeCache { view: v, private, shared })
    }

    /// Backprop through encoder `v`; accumulates into the shared-theta and
    /// view-private grads when given.
    pub fn encode_backward(
        &self,
        cache: &EncodeCache,
        d_latent: Array2<f64>,
        grads: Option<&mut ModelGrads>,
    ) -> Array2<f64> {
        match grads {
            Some(g) => {
                let d_hidden = self
                    .shared
                    .backward(&cache.shared, d_latent, Some(&mut g.shared));
                self.encoders[cache.view].backward(
                    &cache.private,
                    d_hidden,
                    Some(&mut g.encoders[cache.view]),
                )
            }
            None => {
                let d_hidden = self.shared.backward(&cache.shared, d_latent, None);
                self.encoders[cache.view].backward(&cache.private, d_hidden, None)
            }
        }
    }

    /// Map latent codes to generated view-`v` samples.
    pub fn generate(&self, v: usize, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(z.ncols(), self.config.latent_dim, "generate input")?;
        Ok(self.generators[v].forward(z))
    }

    /// Authenticity probabilities for view-`v` samples, strictly inside (0, 1).
    pub fn discriminate(&self, v: usize, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_width(x.ncols(), self.dims[v], "discriminate input")?;
        let out = self.discriminators[v].forward(x);
        Ok(out
            .column(0)
            .mapv(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS)))
    }
}

/// Cache for one `encode` call (private stack + shared layer).
pub struct EncodeCache {
    pub view: usize,
    pub private: MlpCache,
    pub shared: MlpCache,
}

impl EncodeCache {
    pub fn latent(&self) -> &Array2<f64> {
        self.shared.output()
    }
}

/// Gradients mirroring [`ModelState`].
pub struct ModelGrads {
    pub encoders: Vec<MlpGrads>,
    pub shared: MlpGrads,
    pub generators: Vec<MlpGrads>,
    pub discriminators: Vec<MlpGrads>,
    pub fusion: FusionGrads,
}

impl ModelGrads {
    pub fn zeros_like(state: &ModelState) -> Self {
        ModelGrads {
            encoders: state.encoders.iter().map(MlpGrads::zeros_like).collect(),
            shared: MlpGrads::zeros_like(&state.shared),
            generators: state.generators.iter().map(MlpGrads::zeros_like).collect(),
            discriminators: state
                .discriminators
                .iter()
                .map(MlpGrads::zeros_like)
                .collect(),
            fusion: FusionGrads::zeros_like(&state.fusion),
        }
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct AdamSlot {
    t: u64,
    mw: Array2<f64>,
    vw: Array2<f64>,
    mb: Array1<f64>,
    vb: Array1<f64>,
}

impl AdamSlot {
    fn zeros_like(lin: &Linear) -> Self {
        AdamSlot {
            t: 0,
            mw: Array2::zeros(lin.w.raw_dim()),
            vw: Array2::zeros(lin.w.raw_dim()),
            mb: Array1::zeros(lin.b.raw_dim()),
            vb: Array1::zeros(lin.b.raw_dim()),
        }
    }
}

/// Which parameter groups an optimizer step applies to.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateGroups {
    pub encoders: bool,
    pub generators: bool,
    pub discriminators: bool,
    pub fusion: bool,
}

impl UpdateGroups {
    pub fn autoencoder() -> Self {
        UpdateGroups {
            encoders: true,
            generators: true,
            ..Default::default()
        }
    }

    pub fn generators_only() -> Self {
        UpdateGroups {
            generators: true,
            ..Default::default()
        }
    }

    pub fn discriminators_only() -> Self {
        UpdateGroups {
            discriminators: true,
            ..Default::default()
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with default moment coefficients; each parameter tensor keeps its
/// own step counter so groups trained at different cadences stay
/// bias-corrected.
pub struct Adam {
    pub learning_rate: f64,
    encoders: Vec<Vec<AdamSlot>>,
    shared: Vec<AdamSlot>,
    generators: Vec<Vec<AdamSlot>>,
    discriminators: Vec<Vec<AdamSlot>>,
    fusion: crate::fusion::FusionAdam,
}

impl Adam {
    pub fn new(state: &ModelState, learning_rate: f64) -> Self {
        let slots = |m: &Mlp| -> Vec<AdamSlot> {
            m.layers.iter().map(|l| AdamSlot::zeros_like(&l.lin)).collect()
        };
        Adam {
            learning_rate,
            encoders: state.encoders.iter().map(slots).collect(),
            shared: slots(&state.shared),
            generators: state.generators.iter().map(slots).collect(),
            discriminators: state.discriminators.iter().map(slots).collect(),
            fusion: crate::fusion::FusionAdam::zeros_like(&state.fusion),
        }
    }

    fn step_mlp(lr: f64, mlp: &mut Mlp, grads: &MlpGrads, slots: &mut [AdamSlot]) {
        for ((layer, g), slot) in mlp.layers.iter_mut().zip(&grads.layers).zip(slots) {
            slot.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(slot.t as i32);
            let c2 = 1.0 - ADAM_BETA2.powi(slot.t as i32);
            ndarray::Zip::from(&mut layer.lin.w)
                .and(&mut slot.mw)
                .and(&mut slot.vw)
                .and(&g.w)
                .for_each(|p, m, v, &grad| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * grad;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * grad * grad;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
            ndarray::Zip::from(&mut layer.lin.b)
                .and(&mut slot.mb)
                .and(&mut slot.vb)
                .and(&g.b)
                .for_each(|p, m, v, &grad| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * grad;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * grad * grad;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
        }
    }

    /// Apply one Adam step to the selected groups. The shared latent layer
    /// moves with the encoders.
    pub fn apply(&mut self, state: &mut ModelState, grads: &ModelGrads, groups: UpdateGroups) {
        let lr = self.learning_rate;
        if groups.encoders {
            for ((enc, g), slots) in state
                .encoders
                .iter_mut()
                .zip(&grads.encoders)
                .zip(&mut self.encoders)
            {
                Self::step_mlp(lr, enc, g, slots);
            }
            Self::step_mlp(lr, &mut state.shared, &grads.shared, &mut self.shared);
        }
        if groups.generators {
            for ((gen, g), slots) in state
                .generators
                .iter_mut()
                .zip(&grads.generators)
                .zip(&mut self.generators)
            {
                Self::step_mlp(lr, gen, g, slots);
            }
        }
        if groups.discriminators {
            for ((disc, g), slots) in state
                .discriminators
                .iter_mut()
                .zip(&grads.discriminators)
                .zip(&mut self.discriminators)
            {
                Self::step_mlp(lr, disc, g, slots);
            }
        }
        if groups.fusion {
            self.fusion.step(lr, &mut state.fusion, &grads.fusion);
        }
    }
}

/// Standalone Adam state for one matrix-shaped parameter (used for the
/// cluster centroids).
pub struct MatrixAdam {
    t: u64,
    m: Array2<f64>,
    v: Array2<f64>,
}

impl MatrixAdam {
    pub fn new(shape: (usize, usize)) -> Self {
        MatrixAdam {
            t: 0,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    pub fn step(&mut self, lr: f64, param: &mut Array2<f64>, grad: &Array2<f64>) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        ndarray::Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
    }
}
