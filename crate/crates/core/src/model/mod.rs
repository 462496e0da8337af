//! Architecture assembly: encoder stages, sigmoid gating, latent
//! nonlinearity, decoder stages with the dual-receptive-field branch, fusion,
//! and the classifier head, for all three ablation variants.

mod count;
pub mod gradcam;

pub use count::{FlopRow, ParamRow, REFERENCE_GFLOPS, REFERENCE_TOTAL_PARAMS};
pub use gradcam::{grad_cam, heatmap_argmax};

use crate::error::{Error, Result};
use crate::layers::act::{cross_entropy, relu_backward, relu_mask, sigmoid, softmax, softmax_xent_backward};
use crate::layers::dropout::{dropout_backward, dropout_forward, DropoutCtx};
use crate::layers::linear::{linear_backward, linear_forward};
use crate::layers::norm::{BnUpdate, Mode};
use crate::layers::pool::{
    average_pool2d, average_pool2d_backward, global_average_pool, global_average_pool_backward,
    pool_out_extent,
};
use crate::layers::sepconv::{BnOrder, SepConvBlock, SepConvCtx};
use crate::layers::upsample::{nearest_upsample, nearest_upsample_backward};
use crate::layers::pool::PoolCtx;
use crate::parallel::Exec;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{channel_scale, concat_channels, split_channels, Tensor};

pub const POOL_KERNEL: usize = 2;
pub const POOL_STRIDE: usize = 2;
pub const UPSAMPLE_FACTOR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    EncoderOnly,
    DecoderI,
    Full,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::EncoderOnly => "encoder_only",
            Variant::DecoderI => "decoder_i",
            Variant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "encoder_only" => Some(Variant::EncoderOnly),
            "decoder_i" => Some(Variant::DecoderI),
            "full" => Some(Variant::Full),
            _ => None,
        }
    }

    pub fn decoder_stages(self) -> usize {
        match self {
            Variant::EncoderOnly => 0,
            Variant::DecoderI => 1,
            Variant::Full => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_size: (usize, usize),
    pub in_channels: usize,
    pub encoder_widths: Vec<usize>,
    pub encoder_kernel: usize,
    pub decoder_kernel_a: usize,
    pub decoder_kernel_b: usize,
    pub decoder_width: usize,
    pub num_classes: usize,
    pub variant: Variant,
    pub dropout_rate: f64,
    pub bn_order: BnOrder,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: (224, 224),
            in_channels: 3,
            encoder_widths: vec![32, 64, 128, 256, 512, 1024],
            encoder_kernel: 3,
            decoder_kernel_a: 3,
            decoder_kernel_b: 5,
            decoder_width: 1024,
            num_classes: 22,
            variant: Variant::Full,
            dropout_rate: 0.2,
            bn_order: BnOrder::Literal,
            seed: 42,
        }
    }
}

/// Spatial sizes the built network will produce, derived from the config.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapePlan {
    /// Spatial extents entering each encoder stage plus the bottleneck:
    /// len(encoder_widths) + 1 entries.
    pub encoder_spatial: Vec<(usize, usize)>,
    /// Spatial extents after each decoder upsample stage.
    pub decoder_spatial: Vec<(usize, usize)>,
    /// Input width of the classifier.
    pub fused_dim: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<ShapePlan> {
        if self.encoder_widths.is_empty() {
            return Err(Error::InvalidConfig("encoder_widths must be non-empty".into()));
        }
        if !self.encoder_widths.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidConfig(format!(
                "encoder_widths must be strictly increasing, got {:?}",
                self.encoder_widths
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        for k in [
            self.encoder_kernel,
            self.decoder_kernel_a,
            self.decoder_kernel_b,
        ] {
            if k % 2 == 0 || k == 0 {
                return Err(Error::InvalidConfig(format!("kernel sizes must be odd, got {k}")));
            }
        }
        if self.in_channels == 0 || self.decoder_width == 0 {
            return Err(Error::InvalidConfig("channel extents must be >= 1".into()));
        }
        let (mut h, mut w) = self.input_size;
        let mut encoder_spatial = vec![(h, w)];
        for (i, _) in self.encoder_widths.iter().enumerate() {
            if h < 2 || w < 2 {
                return Err(Error::InvalidConfig(format!(
                    "spatial extent collapses at encoder stage {}: {}x{}",
                    i + 1,
                    h,
                    w
                )));
            }
            h = pool_out_extent(h, POOL_KERNEL, POOL_STRIDE, true);
            w = pool_out_extent(w, POOL_KERNEL, POOL_STRIDE, true);
            encoder_spatial.push((h, w));
        }
        let mut decoder_spatial = Vec::new();
        let (mut dh, mut dw) = (h, w);
        for _ in 0..self.variant.decoder_stages() {
            dh *= UPSAMPLE_FACTOR;
            dw *= UPSAMPLE_FACTOR;
            decoder_spatial.push((dh, dw));
        }
        let enc_width = *self.encoder_widths.last().unwrap();
        let fused_dim = match self.variant {
            Variant::EncoderOnly => enc_width,
            _ => enc_width + self.decoder_width,
        };
        Ok(ShapePlan {
            encoder_spatial,
            decoder_spatial,
            fused_dim,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub config: ModelConfig,
    pub encoder: Vec<SepConvBlock<S>>,
    pub decoder: Vec<SepConvBlock<S>>,
    pub branch5: Option<SepConvBlock<S>>,
    pub fc_weight: Tensor<S>,
    pub fc_bias: Tensor<S>,
}

/// One mini-batch: images stacked on the leading axis plus class labels.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub images: Tensor<S>,
    pub labels: Vec<usize>,
}

/// Gradients for every trainable tensor, in canonical parameter order.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    pub slots: Vec<Tensor<S>>,
}

pub struct StepOutput<S> {
    pub loss: f64,
    pub correct: usize,
    pub probs: Tensor<S>,
    pub grads: Gradients<S>,
    pub bn_updates: Vec<BnUpdate<S>>,
}

struct EncStageCtx<S> {
    conv: SepConvCtx<S>,
    pool: PoolCtx,
    drop: DropoutCtx,
}

struct DecStageCtx<S> {
    conv: SepConvCtx<S>,
    drop: DropoutCtx,
}

pub struct EncoderCtx<S> {
    stages: Vec<EncStageCtx<S>>,
    /// Post-dropout stage outputs; the last entry is the pooled bottleneck.
    outputs: Vec<Tensor<S>>,
    /// sigmoid(GAP(pooled)), one value per (batch, channel).
    gate: Tensor<S>,
}

impl<S: Scalar> EncoderCtx<S> {
    pub fn pooled(&self) -> &Tensor<S> {
        self.outputs.last().expect("encoder has stages")
    }

    pub fn gate(&self) -> &Tensor<S> {
        &self.gate
    }
}

pub struct DecoderCtx<S> {
    stages: Vec<DecStageCtx<S>>,
    /// Post-dropout stage outputs; the last entry is the 3x3-path map.
    outputs: Vec<Tensor<S>>,
    branch: SepConvCtx<S>,
    map5: Tensor<S>,
}

impl<S: Scalar> DecoderCtx<S> {
    pub fn map3(&self) -> &Tensor<S> {
        self.outputs.last().expect("decoder has stages")
    }

    pub fn map5(&self) -> &Tensor<S> {
        &self.map5
    }
}

pub struct ForwardCtx<S> {
    pub mode: Mode,
    pub enc: EncoderCtx<S>,
    latent_mask: Option<Vec<bool>>,
    dec: Option<DecoderCtx<S>>,
    fused: Tensor<S>,
    pub probs: Tensor<S>,
}

impl<S: Scalar> ForwardCtx<S> {
    pub fn fused(&self) -> &Tensor<S> {
        &self.fused
    }
}

impl<S: Scalar> Model<S> {
    /// Deterministic build: the same config (seed included) always produces
    /// the same weights and layer names.
    pub fn build(config: ModelConfig) -> Result<Self> {
        let plan = config.validate()?;
        let mut rng = Rng::derive(config.seed, "init", &[]);
        let mut encoder = Vec::with_capacity(config.encoder_widths.len());
        let mut c_in = config.in_channels;
        for (i, &width) in config.encoder_widths.iter().enumerate() {
            encoder.push(SepConvBlock::new(
                format!("enc{}", i + 1),
                c_in,
                width,
                config.encoder_kernel,
                config.bn_order,
                &mut rng,
            ));
            c_in = width;
        }
        let mut decoder = Vec::new();
        let mut branch5 = None;
        if config.variant != Variant::EncoderOnly {
            let mut dc_in = *config.encoder_widths.last().unwrap();
            for j in 0..config.variant.decoder_stages() {
                decoder.push(SepConvBlock::new(
                    format!("dec{}", j + 1),
                    dc_in,
                    config.decoder_width,
                    config.decoder_kernel_a,
                    config.bn_order,
                    &mut rng,
                ));
                dc_in = config.decoder_width;
            }
            branch5 = Some(SepConvBlock::new(
                "branch5",
                config.decoder_width,
                config.decoder_width,
                config.decoder_kernel_b,
                config.bn_order,
                &mut rng,
            ));
        }
        let fused = plan.fused_dim;
        let fc_weight = Tensor::he_uniform(vec![fused, config.num_classes], fused, &mut rng);
        let fc_bias = Tensor::zeros(vec![config.num_classes]);
        Ok(Model {
            config,
            encoder,
            decoder,
            branch5,
            fc_weight,
            fc_bias,
        })
    }

    pub fn plan(&self) -> ShapePlan {
        self.config.validate().expect("config was validated at build")
    }

    fn blocks(&self) -> Vec<&SepConvBlock<S>> {
        let mut all: Vec<&SepConvBlock<S>> = self.encoder.iter().collect();
        all.extend(self.decoder.iter());
        if let Some(b) = &self.branch5 {
            all.push(b);
        }
        all
    }

    /// Stage names accepted as Grad-CAM targets.
    pub fn layer_names(&self) -> Vec<String> {
        self.blocks().iter().map(|b| b.name.clone()).collect()
    }

    /// Default Grad-CAM target: the last encoder stage.
    pub fn default_cam_layer(&self) -> String {
        self.encoder.last().expect("encoder has stages").name.clone()
    }

    // -- parameter enumeration ----------------------------------------------

    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<S>, bool)) {
        for b in self.blocks() {
            f(format!("{}.dw", b.name), &b.dw, true);
            f(format!("{}.pw", b.name), &b.pw, true);
            f(format!("{}.bias", b.name), &b.bias, true);
            f(format!("{}.bn.gamma", b.name), &b.bn.gamma, true);
            f(format!("{}.bn.beta", b.name), &b.bn.beta, true);
            f(format!("{}.bn.running_mean", b.name), &b.bn.running_mean, false);
            f(format!("{}.bn.running_var", b.name), &b.bn.running_var, false);
        }
        f("fc.weight".into(), &self.fc_weight, true);
        f("fc.bias".into(), &self.fc_bias, true);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>, bool)) {
        let mut blocks: Vec<&mut SepConvBlock<S>> = self.encoder.iter_mut().collect();
        blocks.extend(self.decoder.iter_mut());
        if let Some(b) = &mut self.branch5 {
            blocks.push(b);
        }
        for b in blocks {
            f(format!("{}.dw", b.name), &mut b.dw, true);
            f(format!("{}.pw", b.name), &mut b.pw, true);
            f(format!("{}.bias", b.name), &mut b.bias, true);
            f(format!("{}.bn.gamma", b.name), &mut b.bn.gamma, true);
            f(format!("{}.bn.beta", b.name), &mut b.bn.beta, true);
            f(format!("{}.bn.running_mean", b.name), &mut b.bn.running_mean, false);
            f(format!("{}.bn.running_var", b.name), &mut b.bn.running_var, false);
        }
        f("fc.weight".into(), &mut self.fc_weight, true);
        f("fc.bias".into(), &mut self.fc_bias, true);
    }

    pub fn trainable_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t, trainable| {
            if trainable {
                out.push((name, t.shape().to_vec()));
            }
        });
        out
    }

    pub fn trainable_flat(&self) -> Vec<S> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, t, trainable| {
            if trainable {
                out.extend_from_slice(t.data());
            }
        });
        out
    }

    pub fn set_trainable_flat(&mut self, values: &[S]) {
        let mut offset = 0;
        self.visit_params_mut(&mut |_, t, trainable| {
            if trainable {
                let n = t.len();
                t.data_mut().copy_from_slice(&values[offset..offset + n]);
                offset += n;
            }
        });
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    // -- forward -------------------------------------------------------------

    /// Encoder stages (sepconv -> average pool -> dropout) plus the sigmoid
    /// gate: returns the pooled bottleneck, the gated map, and the contexts.
    pub fn encoder_forward(
        &self,
        x: &Tensor<S>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        exec: Exec,
    ) -> Result<(Tensor<S>, Tensor<S>, EncoderCtx<S>)> {
        let (h, w) = self.config.input_size;
        if x.rank() != 4
            || x.shape()[1] != self.config.in_channels
            || x.shape()[2] != h
            || x.shape()[3] != w
        {
            return Err(Error::ShapeMismatch(format!(
                "model expects (N, {}, {}, {}) input, got {:?}",
                self.config.in_channels,
                h,
                w,
                x.shape()
            )));
        }
        let mut cur = x.clone();
        let mut stages = Vec::with_capacity(self.encoder.len());
        let mut outputs = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (conv_out, conv_ctx) = block.forward(&cur, mode, exec)?;
            let (pooled, pool_ctx) = average_pool2d(&conv_out, POOL_KERNEL, POOL_STRIDE, true)?;
            let (dropped, drop_ctx) = match (&mut rng, mode) {
                (Some(r), Mode::Train) => {
                    dropout_forward(&pooled, self.config.dropout_rate, mode, r)?
                }
                _ => {
                    let mut unused = Rng::seed(0);
                    dropout_forward(&pooled, self.config.dropout_rate, Mode::Infer, &mut unused)?
                }
            };
            stages.push(EncStageCtx {
                conv: conv_ctx,
                pool: pool_ctx,
                drop: drop_ctx,
            });
            outputs.push(dropped.clone());
            cur = dropped;
        }
        let pooled = cur;
        let (gap, _) = global_average_pool(&pooled)?;
        let gate = sigmoid(&gap);
        let gated = channel_scale(&pooled, &gate)?;
        Ok((
            pooled,
            gated,
            EncoderCtx {
                stages,
                outputs,
                gate,
            },
        ))
    }

    /// Flatten -> ReLU -> reshape; a pure nonlinearity with no parameters.
    pub fn latent_forward(gated: &Tensor<S>) -> Result<(Tensor<S>, Vec<bool>)> {
        let shape = gated.shape().to_vec();
        let n = shape[0];
        let flat_len: usize = shape[1..].iter().product();
        let flat = gated.clone().reshape(vec![n, flat_len])?;
        let mask = relu_mask(&flat);
        let activated = crate::layers::act::relu(&flat);
        Ok((activated.reshape(shape)?, mask))
    }

    /// Decoder stages (upsample -> sepconv -> dropout) and the wider-kernel
    /// branch: returns the 3x3-path map, the 5x5-path map, and the contexts.
    pub fn decoder_forward(
        &self,
        latent: &Tensor<S>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        exec: Exec,
    ) -> Result<(Tensor<S>, Tensor<S>, DecoderCtx<S>)> {
        let mut cur = latent.clone();
        let mut stages = Vec::with_capacity(self.decoder.len());
        let mut outputs = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            let up = nearest_upsample(&cur, UPSAMPLE_FACTOR)?;
            let (conv_out, conv_ctx) = block.forward(&up, mode, exec)?;
            let (dropped, drop_ctx) = match (&mut rng, mode) {
                (Some(r), Mode::Train) => {
                    dropout_forward(&conv_out, self.config.dropout_rate, mode, r)?
                }
                _ => {
                    let mut unused = Rng::seed(0);
                    dropout_forward(&conv_out, self.config.dropout_rate, Mode::Infer, &mut unused)?
                }
            };
            stages.push(DecStageCtx {
                conv: conv_ctx,
                drop: drop_ctx,
            });
            outputs.push(dropped.clone());
            cur = dropped;
        }
        let branch = self
            .branch5
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("variant has no decoder".into()))?;
        let (map5, branch_ctx) = branch.forward(&cur, mode, exec)?;
        Ok((
            cur,
            map5.clone(),
            DecoderCtx {
                stages,
                outputs,
                branch: branch_ctx,
                map5,
            },
        ))
    }

    /// GAP fusion and classification: the two decoder GAPs are added, the
    /// encoder GAP joins through the residual path, and the concatenated
    /// vector feeds the linear head and softmax.
    pub fn fuse_and_classify(
        &self,
        pooled: &Tensor<S>,
        map3: &Tensor<S>,
        map5: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>)> {
        let (ge, _) = global_average_pool(pooled)?;
        let (g3, _) = global_average_pool(map3)?;
        let (g5, _) = global_average_pool(map5)?;
        let fde = g3.add(&g5)?;
        let fused = concat_channels(&ge, &fde)?;
        let logits = linear_forward(&fused, &self.fc_weight, &self.fc_bias)?;
        Ok((softmax(&logits), fused))
    }

    /// Full forward pass with contexts for backpropagation. Train mode needs
    /// an RNG for the dropout masks.
    pub fn forward_ctx(
        &self,
        x: &Tensor<S>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        exec: Exec,
    ) -> Result<(Tensor<S>, ForwardCtx<S>)> {
        let (pooled, gated, enc_ctx) =
            self.encoder_forward(x, mode, rng.as_deref_mut(), exec)?;
        match self.config.variant {
            Variant::EncoderOnly => {
                let (ge, _) = global_average_pool(&pooled)?;
                let logits = linear_forward(&ge, &self.fc_weight, &self.fc_bias)?;
                let probs = softmax(&logits);
                probs.debug_check_finite("probs");
                Ok((
                    probs.clone(),
                    ForwardCtx {
                        mode,
                        enc: enc_ctx,
                        latent_mask: None,
                        dec: None,
                        fused: ge,
                        probs,
                    },
                ))
            }
            _ => {
                let (latent, latent_mask) = Self::latent_forward(&gated)?;
                let (map3, map5, dec_ctx) = self.decoder_forward(&latent, mode, rng, exec)?;
                let (probs, fused) = self.fuse_and_classify(&pooled, &map3, &map5)?;
                probs.debug_check_finite("probs");
                Ok((
                    probs.clone(),
                    ForwardCtx {
                        mode,
                        enc: enc_ctx,
                        latent_mask: Some(latent_mask),
                        dec: Some(dec_ctx),
                        fused,
                        probs,
                    },
                ))
            }
        }
    }

    /// Inference-mode class probabilities.
    pub fn predict(&self, x: &Tensor<S>, exec: Exec) -> Result<Tensor<S>> {
        Ok(self.forward_ctx(x, Mode::Infer, None, exec)?.0)
    }

    // -- backward ------------------------------------------------------------

    /// Backpropagates a gradient at the logits through the whole network.
    /// Returns gradients in canonical trainable order and, when `capture`
    /// names a stage, the gradient at that stage's output.
    pub fn backward(
        &self,
        ctx: &ForwardCtx<S>,
        glogits: &Tensor<S>,
        exec: Exec,
        capture: Option<&str>,
    ) -> Result<(Gradients<S>, Option<Tensor<S>>)> {
        let mut captured = None;
        let (g_fused, g_fcw, g_fcb) =
            linear_backward(&ctx.fused, &self.fc_weight, glogits)?;

        let enc_width = *self.config.encoder_widths.last().unwrap();
        let mut slots = Vec::new();
        match self.config.variant {
            Variant::EncoderOnly => {
                let pooled = ctx.enc.pooled();
                let spatial = (pooled.shape()[2], pooled.shape()[3]);
                let g_pooled = global_average_pool_backward(&g_fused, spatial);
                let enc_grads =
                    self.encoder_backward(&ctx.enc, g_pooled, exec, capture, &mut captured)?;
                slots.extend(enc_grads);
            }
            _ => {
                let dec_ctx = ctx
                    .dec
                    .as_ref()
                    .ok_or_else(|| Error::ContextMismatch("missing decoder context".into()))?;
                let (g_ge, g_fde) = split_channels(&g_fused, enc_width)?;

                // dual-GAP fusion: the sum fans the gradient to both maps
                let map5 = dec_ctx.map5();
                let spatial5 = (map5.shape()[2], map5.shape()[3]);
                let g_map5 = global_average_pool_backward(&g_fde, spatial5);
                if capture == Some("branch5") {
                    captured = Some(g_map5.clone());
                }
                let branch = self.branch5.as_ref().expect("variant has branch");
                let (g_map3_branch, bg) = branch.backward(&dec_ctx.branch, &g_map5, exec)?;

                let map3 = dec_ctx.map3();
                let spatial3 = (map3.shape()[2], map3.shape()[3]);
                let mut g = global_average_pool_backward(&g_fde, spatial3);
                g.add_assign(&g_map3_branch);

                // decoder stages in reverse
                let mut dec_grads_rev = Vec::new();
                for (j, (block, stage)) in self
                    .decoder
                    .iter()
                    .zip(&dec_ctx.stages)
                    .enumerate()
                    .rev()
                {
                    if capture == Some(block.name.as_str()) {
                        captured = Some(g.clone());
                    }
                    let g_conv = dropout_backward(&stage.drop, &g);
                    let (g_up, grads) = block.backward(&stage.conv, &g_conv, exec)?;
                    g = nearest_upsample_backward(&g_up, UPSAMPLE_FACTOR)?;
                    dec_grads_rev.push((j, grads));
                }

                // latent: reshape -> ReLU mask -> reshape
                let mask = ctx
                    .latent_mask
                    .as_ref()
                    .ok_or_else(|| Error::ContextMismatch("missing latent context".into()))?;
                let g_latent = g;
                let shape = g_latent.shape().to_vec();
                let n = shape[0];
                let flat_len: usize = shape[1..].iter().product();
                let g_flat = g_latent.reshape(vec![n, flat_len])?;
                let g_gated = relu_backward(mask, &g_flat).reshape(shape)?;

                // gate: gated = pooled (x) sigmoid(GAP(pooled)) — product rule
                let pooled = ctx.enc.pooled();
                let gate = ctx.enc.gate();
                let spatial_b = (pooled.shape()[2], pooled.shape()[3]);
                let hw = spatial_b.0 * spatial_b.1;
                let c = enc_width;
                let batch = pooled.shape()[0];
                let mut g_pooled = channel_scale(&g_gated, gate)?;
                let mut g_gate = Tensor::zeros(vec![batch, c]);
                for ni in 0..batch {
                    for ci in 0..c {
                        let base = (ni * c + ci) * hw;
                        let mut acc = S::ZERO;
                        for t in 0..hw {
                            acc += g_gated.data()[base + t] * pooled.data()[base + t];
                        }
                        g_gate.data_mut()[ni * c + ci] = acc;
                    }
                }
                let g_gap = crate::layers::act::sigmoid_backward(gate, &g_gate);
                g_pooled.add_assign(&global_average_pool_backward(&g_gap, spatial_b));
                // residual path from the fusion concat
                g_pooled.add_assign(&global_average_pool_backward(&g_ge, spatial_b));

                let enc_grads =
                    self.encoder_backward(&ctx.enc, g_pooled, exec, capture, &mut captured)?;
                slots.extend(enc_grads);
                dec_grads_rev.sort_by_key(|(j, _)| *j);
                for (_, grads) in dec_grads_rev {
                    slots.extend([grads.dw, grads.pw, grads.bias, grads.gamma, grads.beta]);
                }
                slots.extend([bg.dw, bg.pw, bg.bias, bg.gamma, bg.beta]);
            }
        }
        slots.push(g_fcw);
        slots.push(g_fcb);
        if let Some(name) = capture {
            if captured.is_none() {
                return Err(Error::InvalidLayer {
                    name: name.to_string(),
                    available: self.layer_names(),
                });
            }
        }
        Ok((Gradients { slots }, captured))
    }

    fn encoder_backward(
        &self,
        enc: &EncoderCtx<S>,
        g_pooled: Tensor<S>,
        exec: Exec,
        capture: Option<&str>,
        captured: &mut Option<Tensor<S>>,
    ) -> Result<Vec<Tensor<S>>> {
        let mut g = g_pooled;
        let mut grads_rev = Vec::new();
        for (i, (block, stage)) in self.encoder.iter().zip(&enc.stages).enumerate().rev() {
            if capture == Some(block.name.as_str()) {
                *captured = Some(g.clone());
            }
            let g_pool_out = dropout_backward(&stage.drop, &g);
            let g_conv_out = average_pool2d_backward(&stage.pool, &g_pool_out)?;
            let (g_in, grads) = block.backward(&stage.conv, &g_conv_out, exec)?;
            g = g_in;
            grads_rev.push((i, grads));
        }
        grads_rev.sort_by_key(|(i, _)| *i);
        Ok(grads_rev
            .into_iter()
            .flat_map(|(_, gr)| [gr.dw, gr.pw, gr.bias, gr.gamma, gr.beta])
            .collect())
    }

    /// Train-mode forward + backward over one batch: mean cross-entropy loss,
    /// argmax hits, gradients, and the batch-norm statistics to fold in.
    pub fn loss_and_grads(
        &self,
        batch: &Batch<S>,
        rng: &mut Rng,
        exec: Exec,
    ) -> Result<StepOutput<S>> {
        let (probs, ctx) = self.forward_ctx(&batch.images, Mode::Train, Some(rng), exec)?;
        let loss = cross_entropy(&probs, &batch.labels)?;
        let correct = count_correct(&probs, &batch.labels);
        let glogits = softmax_xent_backward(&probs, &batch.labels);
        let (grads, _) = self.backward(&ctx, &glogits, exec, None)?;
        let bn_updates = collect_bn_updates(&ctx);
        Ok(StepOutput {
            loss,
            correct,
            probs,
            grads,
            bn_updates,
        })
    }

    /// Folds batch statistics (in block order, as returned by
    /// `loss_and_grads`) into the running estimates.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<S>]) {
        let mut blocks: Vec<&mut SepConvBlock<S>> = self.encoder.iter_mut().collect();
        blocks.extend(self.decoder.iter_mut());
        if let Some(b) = &mut self.branch5 {
            blocks.push(b);
        }
        debug_assert_eq!(blocks.len(), updates.len());
        for (block, update) in blocks.iter_mut().zip(updates) {
            block.bn.apply_update(update);
        }
    }
}

fn collect_bn_updates<S: Scalar>(ctx: &ForwardCtx<S>) -> Vec<BnUpdate<S>> {
    let mut updates = Vec::new();
    for stage in &ctx.enc.stages {
        if let Some(u) = stage.conv.bn_update() {
            updates.push(u.clone());
        }
    }
    if let Some(dec) = &ctx.dec {
        for stage in &dec.stages {
            if let Some(u) = stage.conv.bn_update() {
                updates.push(u.clone());
            }
        }
        if let Some(u) = dec.branch.bn_update() {
            updates.push(u.clone());
        }
    }
    updates
}

/// Argmax hits of probability rows against labels.
pub fn count_correct<S: Scalar>(probs: &Tensor<S>, labels: &[usize]) -> usize {
    let k = *probs.shape().last().unwrap();
    probs
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|&(row, &label)| argmax(row) == label)
        .count()
}

pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
