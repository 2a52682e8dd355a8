//! Model configuration, parameters, forward pass and analytic backward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{
    positional_encoding, transformer_backward, transformer_forward, AttentionHead, TransformerCache,
    TransformerParams,
};
use super::layers::{
    bn_backward, bn_forward, bn_update_running, conv_backward, conv_forward, conv_t_backward, conv_t_forward,
    relu, relu_backward, BatchNorm, BnCache, Conv, Geometry, LayerNorm, Linear, KERNEL,
};
use super::tensor::{sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::seed;

pub const DEPTH: usize = 5;
pub const STRIDES: [usize; DEPTH] = [1, 2, 2, 2, 2];
/// Total down-sampling factor of the encoder.
pub const REDUCTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bottleneck {
    /// Transformer output used as a sigmoid mask on the latent.
    Rm,
    /// Transformer output replaces the latent.
    Dm,
    /// No transformer: plain U-Net.
    Identity,
}

impl std::str::FromStr for Bottleneck {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rm" => Ok(Self::Rm),
            "dm" => Ok(Self::Dm),
            "identity" | "unet" => Ok(Self::Identity),
            _ => Err(Error::InvalidConfig(vec![format!("unknown bottleneck '{s}'")])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Window length `d`; a multiple of 16.
    pub input_len: usize,
    pub base_width: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub bottleneck: Bottleneck,
    pub seed: u64,
}

impl ModelConfig {
    /// Small widths for desk-scale runs.
    pub fn tiny(input_len: usize, bottleneck: Bottleneck) -> Self {
        Self {
            input_len,
            base_width: 8,
            heads: 4,
            ff_dim: 256,
            dropout: 0.1,
            bottleneck,
            seed: 0,
        }
    }

    /// Widths 64..1024, 8 heads, feed-forward 2048.
    pub fn paper(input_len: usize, bottleneck: Bottleneck) -> Self {
        Self {
            input_len,
            base_width: 64,
            heads: 8,
            ff_dim: 2048,
            dropout: 0.1,
            bottleneck,
            seed: 0,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.base_width * REDUCTION
    }

    /// Channels after encoder level `i`.
    pub fn width(&self, i: usize) -> usize {
        self.base_width << i
    }

    /// Length after encoder level `i`.
    pub fn length(&self, i: usize) -> usize {
        self.input_len >> i
    }

    /// `(d / 16, embed_dim)`.
    pub fn latent_shape(&self) -> (usize, usize) {
        (self.input_len / REDUCTION, self.embed_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.input_len == 0 || !self.input_len.is_multiple_of(REDUCTION) {
            errs.push(format!("input_len {} is not a positive multiple of 16", self.input_len));
        }
        if self.base_width == 0 {
            errs.push("base_width must be positive".into());
        }
        if self.heads == 0 || !self.embed_dim().is_multiple_of(self.heads) {
            errs.push(format!("embed dim {} is not divisible by {} heads", self.embed_dim(), self.heads));
        }
        if self.ff_dim == 0 {
            errs.push("ff_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub conv: Conv,
    pub bn: BatchNorm,
}

/// Transposed convolution up, then a stride-1 convolution over the
/// up-sampled features concatenated with the skip connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderBlock {
    pub up: Conv,
    pub up_bn: BatchNorm,
    pub conv: Conv,
    pub conv_bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: Vec<EncoderBlock>,
    pub transformer: TransformerParams,
    pub decoder: Vec<DecoderBlock>,
    pub head: Conv,
    /// Bumped on every in-place update; caches remember the value they saw.
    #[serde(skip)]
    pub generation: u64,
}

fn uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let a = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-a..=a)).collect())
}

impl ModelParams {
    /// Uniform `±sqrt(1 / fan_in)` weights from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::child_rng(config.seed, "nn-init", 0);
        let rng = &mut rng;
        let mut conv = |cin: usize, cout: usize, transposed: bool| {
            let shape = if transposed { [cin, cout, KERNEL] } else { [cout, cin, KERNEL] };
            Conv {
                w: uniform(rng, &shape, cin * KERNEL),
                b: uniform(rng, &[cout], cin * KERNEL),
            }
        };
        let mut encoder = Vec::with_capacity(DEPTH);
        for i in 0..DEPTH {
            let cin = if i == 0 { 1 } else { config.width(i - 1) };
            encoder.push(EncoderBlock {
                conv: conv(cin, config.width(i), false),
                bn: BatchNorm::new(config.width(i)),
            });
        }
        let mut decoder = Vec::with_capacity(DEPTH - 1);
        for level in (1..DEPTH).rev() {
            let (cin, c) = (config.width(level), config.width(level - 1));
            decoder.push(DecoderBlock {
                up: conv(cin, c, true),
                up_bn: BatchNorm::new(c),
                conv: conv(2 * c, c, false),
                conv_bn: BatchNorm::new(c),
            });
        }
        let head = conv(config.base_width, 1, true);

        let e = config.embed_dim();
        let dh = e / config.heads;
        let f = config.ff_dim;
        let heads = (0..config.heads)
            .map(|_| AttentionHead {
                w_q: uniform(rng, &[e, dh], e),
                b_q: uniform(rng, &[dh], e),
                w_k: uniform(rng, &[e, dh], e),
                b_k: uniform(rng, &[dh], e),
                w_v: uniform(rng, &[e, dh], e),
                b_v: uniform(rng, &[dh], e),
            })
            .collect();
        let transformer = TransformerParams {
            heads,
            w_o: uniform(rng, &[e, e], e),
            b_o: uniform(rng, &[e], e),
            ff1: Linear {
                w: uniform(rng, &[e, f], e),
                b: uniform(rng, &[f], e),
            },
            ff2: Linear {
                w: uniform(rng, &[f, e], f),
                b: uniform(rng, &[e], f),
            },
            ln1: LayerNorm::new(e),
            ln2: LayerNorm::new(e),
        };
        Ok(Self {
            encoder,
            transformer,
            decoder,
            head,
            generation: 0,
        })
    }

    /// Every tensor with its name; `true` marks trainable ones.
    pub fn tensors(&self) -> Vec<(String, &Tensor, bool)> {
        let mut v = Vec::new();
        for (i, e) in self.encoder.iter().enumerate() {
            conv_refs(&mut v, format!("encoder.{i}.conv"), &e.conv);
            bn_refs(&mut v, format!("encoder.{i}.bn"), &e.bn);
        }
        let t = &self.transformer;
        for (i, h) in t.heads.iter().enumerate() {
            for (n, x) in [
                ("w_q", &h.w_q),
                ("b_q", &h.b_q),
                ("w_k", &h.w_k),
                ("b_k", &h.b_k),
                ("w_v", &h.w_v),
                ("b_v", &h.b_v),
            ] {
                v.push((format!("transformer.head.{i}.{n}"), x, true));
            }
        }
        for (n, x) in [
            ("w_o", &t.w_o),
            ("b_o", &t.b_o),
            ("ff1.w", &t.ff1.w),
            ("ff1.b", &t.ff1.b),
            ("ff2.w", &t.ff2.w),
            ("ff2.b", &t.ff2.b),
            ("ln1.gamma", &t.ln1.gamma),
            ("ln1.beta", &t.ln1.beta),
            ("ln2.gamma", &t.ln2.gamma),
            ("ln2.beta", &t.ln2.beta),
        ] {
            v.push((format!("transformer.{n}"), x, true));
        }
        for (i, d) in self.decoder.iter().enumerate() {
            conv_refs(&mut v, format!("decoder.{i}.up"), &d.up);
            bn_refs(&mut v, format!("decoder.{i}.up_bn"), &d.up_bn);
            conv_refs(&mut v, format!("decoder.{i}.conv"), &d.conv);
            bn_refs(&mut v, format!("decoder.{i}.conv_bn"), &d.conv_bn);
        }
        conv_refs(&mut v, "head".into(), &self.head);
        v
    }

    /// Mutable view in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor, bool)> {
        let mut v = Vec::new();
        for (i, e) in self.encoder.iter_mut().enumerate() {
            conv_muts(&mut v, format!("encoder.{i}.conv"), &mut e.conv);
            bn_muts(&mut v, format!("encoder.{i}.bn"), &mut e.bn);
        }
        let t = &mut self.transformer;
        for (i, h) in t.heads.iter_mut().enumerate() {
            for (n, x) in [
                ("w_q", &mut h.w_q),
                ("b_q", &mut h.b_q),
                ("w_k", &mut h.w_k),
                ("b_k", &mut h.b_k),
                ("w_v", &mut h.w_v),
                ("b_v", &mut h.b_v),
            ] {
                v.push((format!("transformer.head.{i}.{n}"), x, true));
            }
        }
        for (n, x) in [
            ("w_o", &mut t.w_o),
            ("b_o", &mut t.b_o),
            ("ff1.w", &mut t.ff1.w),
            ("ff1.b", &mut t.ff1.b),
            ("ff2.w", &mut t.ff2.w),
            ("ff2.b", &mut t.ff2.b),
            ("ln1.gamma", &mut t.ln1.gamma),
            ("ln1.beta", &mut t.ln1.beta),
            ("ln2.gamma", &mut t.ln2.gamma),
            ("ln2.beta", &mut t.ln2.beta),
        ] {
            v.push((format!("transformer.{n}"), x, true));
        }
        for (i, d) in self.decoder.iter_mut().enumerate() {
            conv_muts(&mut v, format!("decoder.{i}.up"), &mut d.up);
            bn_muts(&mut v, format!("decoder.{i}.up_bn"), &mut d.up_bn);
            conv_muts(&mut v, format!("decoder.{i}.conv"), &mut d.conv);
            bn_muts(&mut v, format!("decoder.{i}.conv_bn"), &mut d.conv_bn);
        }
        conv_muts(&mut v, "head".into(), &mut self.head);
        v
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t, _) in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z.generation = 0;
        z
    }

    pub fn trainable_count(&self) -> usize {
        self.tensors().iter().filter(|t| t.2).map(|t| t.1.len()).sum()
    }

    /// Folds the batch statistics of a training pass into the running ones.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let b = cache.batch;
        for (blk, c) in self.encoder.iter_mut().zip(&cache.enc) {
            bn_update_running(&mut blk.bn, &c.bn, b * c.g.lout);
        }
        for (blk, c) in self.decoder.iter_mut().zip(&cache.dec) {
            bn_update_running(&mut blk.up_bn, &c.up_bn, b * c.gu.lout);
            bn_update_running(&mut blk.conv_bn, &c.conv_bn, b * c.gc.lout);
        }
    }
}

type Refs<'a> = Vec<(String, &'a Tensor, bool)>;
type Muts<'a> = Vec<(String, &'a mut Tensor, bool)>;

fn conv_refs<'a>(v: &mut Refs<'a>, p: String, c: &'a Conv) {
    v.push((format!("{p}.w"), &c.w, true));
    v.push((format!("{p}.b"), &c.b, true));
}

fn bn_refs<'a>(v: &mut Refs<'a>, p: String, b: &'a BatchNorm) {
    v.push((format!("{p}.gamma"), &b.gamma, true));
    v.push((format!("{p}.beta"), &b.beta, true));
    v.push((format!("{p}.running_mean"), &b.running_mean, false));
    v.push((format!("{p}.running_var"), &b.running_var, false));
}

fn conv_muts<'a>(v: &mut Muts<'a>, p: String, c: &'a mut Conv) {
    v.push((format!("{p}.w"), &mut c.w, true));
    v.push((format!("{p}.b"), &mut c.b, true));
}

fn bn_muts<'a>(v: &mut Muts<'a>, p: String, b: &'a mut BatchNorm) {
    v.push((format!("{p}.gamma"), &mut b.gamma, true));
    v.push((format!("{p}.beta"), &mut b.beta, true));
    v.push((format!("{p}.running_mean"), &mut b.running_mean, false));
    v.push((format!("{p}.running_var"), &mut b.running_var, false));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// Batch statistics, dropout masks drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
    /// Running statistics, no dropout.
    Eval,
}

#[derive(Debug, Clone)]
struct EncCache {
    input: Vec<f64>,
    bn: BnCache,
    out: Vec<f64>,
    g: Geometry,
}

#[derive(Debug, Clone)]
struct DecCache {
    input: Vec<f64>,
    up_bn: BnCache,
    up_out: Vec<f64>,
    cat: Vec<f64>,
    conv_bn: BnCache,
    out: Vec<f64>,
    gu: Geometry,
    gc: Geometry,
}

#[derive(Debug, Clone)]
struct ItemCache {
    z: Vec<f64>,
    transformer: Option<TransformerCache>,
    mask: Option<Vec<f64>>,
    out: Vec<f64>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    batch: usize,
    enc: Vec<EncCache>,
    items: Vec<ItemCache>,
    dec: Vec<DecCache>,
    head_in: Vec<f64>,
    head_g: Geometry,
}

impl ForwardCache {
    /// Latent `[d/16, embed]` of batch item `b`.
    pub fn latent(&self, b: usize) -> &[f64] {
        &self.items[b].z
    }

    /// Bottleneck output `[d/16, embed]` of batch item `b`.
    pub fn bottleneck(&self, b: usize) -> &[f64] {
        &self.items[b].out
    }

    /// Transformer output `f(z + PE)` of item `b`, if a transformer ran.
    pub fn transformer_out(&self, b: usize) -> Option<&[f64]> {
        self.items[b].transformer.as_ref().map(|t| t.out.as_slice())
    }

    /// On/off state of every ReLU, for detecting kinks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut p = Vec::new();
        for e in &self.enc {
            p.extend(e.out.iter().map(|&v| v > 0.0));
        }
        for it in &self.items {
            if let Some(t) = &it.transformer {
                p.extend(t.relu_pattern());
            }
        }
        for d in &self.dec {
            p.extend(d.up_out.iter().map(|&v| v > 0.0));
            p.extend(d.out.iter().map(|&v| v > 0.0));
        }
        p
    }
}

fn check_input(config: &ModelConfig, x: &Tensor) -> Result<usize> {
    match x.shape.as_slice() {
        [b, 1, d] if *b >= 1 && *d == config.input_len => Ok(*b),
        s => Err(Error::ShapeMismatch(format!(
            "expected [batch, 1, {}], got {s:?}",
            config.input_len
        ))),
    }
}

/// Runs the network on `x [batch, 1, d]`.
pub fn forward(params: &ModelParams, config: &ModelConfig, x: &Tensor, pass: Pass) -> Result<(Tensor, ForwardCache)> {
    let b = check_input(config, x)?;
    if params.encoder.len() != DEPTH || params.head.b.len() != 1 {
        return Err(Error::ShapeMismatch("parameter layout does not match the model".into()));
    }
    let train = matches!(pass, Pass::Train { .. });
    let mut enc = Vec::with_capacity(DEPTH);
    let mut h = x.data.clone();
    for (i, blk) in params.encoder.iter().enumerate() {
        let g = Geometry {
            batch: b,
            cin: if i == 0 { 1 } else { config.width(i - 1) },
            cout: config.width(i),
            lin: if i == 0 { config.input_len } else { config.length(i - 1) },
            lout: config.length(i),
            stride: STRIDES[i],
            offset: 3,
        };
        if blk.conv.w.shape != [g.cout, g.cin, KERNEL] {
            return Err(Error::ShapeMismatch(format!("encoder.{i}.conv.w is {:?}", blk.conv.w.shape)));
        }
        let pre = conv_forward(&h, &blk.conv, g);
        let (mut out, bn) = bn_forward(&pre, &blk.bn, b, g.cout, g.lout, train);
        relu(&mut out);
        enc.push(EncCache { input: h, bn, out: out.clone(), g });
        h = out;
    }

    let (s, e) = config.latent_shape();
    let pe = positional_encoding(s, e);
    let mut items = Vec::with_capacity(b);
    let mut bott = vec![0.0; h.len()];
    for item in 0..b {
        let src = &h[item * e * s..][..e * s];
        let mut z = vec![0.0; s * e];
        for c in 0..e {
            for t in 0..s {
                z[t * e + c] = src[c * s + t];
            }
        }
        let (transformer, mask, out) = match config.bottleneck {
            Bottleneck::Identity => (None, None, z.clone()),
            mode => {
                let u: Vec<f64> = z.iter().zip(&pe).map(|(a, p)| a + p).collect();
                let tc = match pass {
                    Pass::Train { dropout_seed } => {
                        let mut rng = seed::child_rng(dropout_seed, "dropout", item as u64);
                        transformer_forward(&params.transformer, &u, s, e, Some((config.dropout, &mut rng)))
                    }
                    Pass::Eval => transformer_forward::<rand_chacha::ChaCha8Rng>(&params.transformer, &u, s, e, None),
                };
                if mode == Bottleneck::Rm {
                    let m: Vec<f64> = tc.out.iter().map(|&v| sigmoid(v)).collect();
                    let out = m.iter().zip(&z).map(|(a, b)| a * b).collect();
                    (Some(tc), Some(m), out)
                } else {
                    let out = tc.out.clone();
                    (Some(tc), None, out)
                }
            }
        };
        let dst = &mut bott[item * e * s..][..e * s];
        for c in 0..e {
            for t in 0..s {
                dst[c * s + t] = out[t * e + c];
            }
        }
        items.push(ItemCache { z, transformer, mask, out });
    }

    h = bott;
    let mut dec = Vec::with_capacity(DEPTH - 1);
    for (j, blk) in params.decoder.iter().enumerate() {
        let level = DEPTH - 1 - j;
        let c = config.width(level - 1);
        let l = config.length(level - 1);
        let gu = Geometry {
            batch: b,
            cin: config.width(level),
            cout: c,
            lin: config.length(level),
            lout: l,
            stride: 2,
            offset: 3,
        };
        let up = conv_t_forward(&h, &blk.up, gu);
        let (mut up_out, up_bn) = bn_forward(&up, &blk.up_bn, b, c, l, train);
        relu(&mut up_out);
        let skip = &enc[level - 1].out;
        let mut cat = Vec::with_capacity(2 * up_out.len());
        for item in 0..b {
            cat.extend_from_slice(&up_out[item * c * l..][..c * l]);
            cat.extend_from_slice(&skip[item * c * l..][..c * l]);
        }
        let gc = Geometry {
            batch: b,
            cin: 2 * c,
            cout: c,
            lin: l,
            lout: l,
            stride: 1,
            offset: 3,
        };
        let pre = conv_forward(&cat, &blk.conv, gc);
        let (mut out, conv_bn) = bn_forward(&pre, &blk.conv_bn, b, c, l, train);
        relu(&mut out);
        dec.push(DecCache {
            input: h,
            up_bn,
            up_out,
            cat,
            conv_bn,
            out: out.clone(),
            gu,
            gc,
        });
        h = out;
    }
    let head_g = Geometry {
        batch: b,
        cin: config.base_width,
        cout: 1,
        lin: config.input_len,
        lout: config.input_len,
        stride: 1,
        offset: 3,
    };
    let y = conv_t_forward(&h, &params.head, head_g);
    let cache = ForwardCache {
        generation: params.generation,
        batch: b,
        enc,
        items,
        dec,
        head_in: h,
        head_g,
    };
    Ok((Tensor::from_vec(&[b, 1, config.input_len], y), cache))
}

/// Gradients of every parameter and of the input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub input: Tensor,
}

/// Back-propagates `grad_out` (same shape as the output) through `cache`.
pub fn backward(params: &ModelParams, config: &ModelConfig, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
    if cache.generation != params.generation {
        return Err(Error::StaleCache);
    }
    let b = cache.batch;
    if grad_out.shape != [b, 1, config.input_len] {
        return Err(Error::ShapeMismatch(format!("gradient shape {:?}", grad_out.shape)));
    }
    let mut grad = params.zeros_like();
    let mut d = conv_t_backward(&cache.head_in, &grad_out.data, &params.head, cache.head_g, &mut grad.head);

    let mut skip_grads: Vec<Vec<f64>> = cache.enc.iter().map(|e| vec![0.0; e.out.len()]).collect();
    for (j, (blk, c)) in params.decoder.iter().zip(&cache.dec).enumerate().rev() {
        let level = DEPTH - 1 - j;
        let g = &mut grad.decoder[j];
        relu_backward(&mut d, &c.out);
        let dpre = bn_backward(&d, &c.conv_bn, &blk.conv_bn, b, c.gc.cout, c.gc.lout, &mut g.conv_bn);
        let dcat = conv_backward(&c.cat, &dpre, &blk.conv, c.gc, &mut g.conv);
        let (ch, l) = (c.gc.cout, c.gc.lout);
        let mut dup = vec![0.0; c.up_out.len()];
        let skip = &mut skip_grads[level - 1];
        for item in 0..b {
            let src = &dcat[item * 2 * ch * l..][..2 * ch * l];
            dup[item * ch * l..][..ch * l].copy_from_slice(&src[..ch * l]);
            skip[item * ch * l..][..ch * l]
                .iter_mut()
                .zip(&src[ch * l..])
                .for_each(|(a, v)| *a += v);
        }
        relu_backward(&mut dup, &c.up_out);
        let dup = bn_backward(&dup, &c.up_bn, &blk.up_bn, b, ch, l, &mut g.up_bn);
        d = conv_t_backward(&c.input, &dup, &blk.up, c.gu, &mut g.up);
    }

    let (s, e) = config.latent_shape();
    let mut dlat = vec![0.0; d.len()];
    for (item, it) in cache.items.iter().enumerate() {
        let src = &d[item * e * s..][..e * s];
        let mut dout = vec![0.0; s * e];
        for c in 0..e {
            for t in 0..s {
                dout[t * e + c] = src[c * s + t];
            }
        }
        let dz: Vec<f64> = match (&it.transformer, &it.mask) {
            (None, _) => dout,
            (Some(tc), None) => transformer_backward(&params.transformer, tc, &dout, s, e, &mut grad.transformer),
            (Some(tc), Some(m)) => {
                let df: Vec<f64> = (0..dout.len()).map(|i| dout[i] * it.z[i] * m[i] * (1.0 - m[i])).collect();
                let du = transformer_backward(&params.transformer, tc, &df, s, e, &mut grad.transformer);
                (0..dout.len()).map(|i| dout[i] * m[i] + du[i]).collect()
            }
        };
        let dst = &mut dlat[item * e * s..][..e * s];
        for c in 0..e {
            for t in 0..s {
                dst[c * s + t] = dz[t * e + c];
            }
        }
    }

    d = dlat;
    for (i, (blk, c)) in params.encoder.iter().zip(&cache.enc).enumerate().rev() {
        if i < DEPTH - 1 {
            d.iter_mut().zip(&skip_grads[i]).for_each(|(a, v)| *a += v);
        }
        let g = &mut grad.encoder[i];
        relu_backward(&mut d, &c.out);
        let dpre = bn_backward(&d, &c.bn, &blk.bn, b, c.g.cout, c.g.lout, &mut g.bn);
        d = conv_backward(&c.input, &dpre, &blk.conv, c.g, &mut g.conv);
    }
    Ok(Gradients {
        params: grad,
        input: Tensor::from_vec(&[b, 1, config.input_len], d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(b: usize, d: usize) -> Tensor {
        Tensor::from_vec(&[b, 1, d], (0..b * d).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect())
    }

    #[test]
    fn identity_output_shape() {
        let cfg = ModelConfig::tiny(64, Bottleneck::Identity);
        let p = ModelParams::init(&cfg).unwrap();
        let (y, cache) = forward(&p, &cfg, &input(3, 64), Pass::Eval).unwrap();
        assert_eq!(y.shape, vec![3, 1, 64]);
        assert!(y.is_finite());
        assert_eq!(cache.latent(0).len(), 4 * 128);
        assert!(cache.transformer_out(0).is_none());
    }

    #[test]
    fn shape_errors() {
        let cfg = ModelConfig::tiny(32, Bottleneck::Rm);
        let p = ModelParams::init(&cfg).unwrap();
        assert!(matches!(forward(&p, &cfg, &input(1, 64), Pass::Eval), Err(Error::ShapeMismatch(_))));
        let bad = ModelConfig { input_len: 40, ..cfg.clone() };
        assert!(ModelParams::init(&bad).is_err());
        let bad = ModelConfig { heads: 3, ..cfg };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zeroed_transformer_halves_latent() {
        let cfg = ModelConfig::tiny(32, Bottleneck::Rm);
        let mut p = ModelParams::init(&cfg).unwrap();
        p.transformer.ln2.gamma.data.iter_mut().for_each(|v| *v = 0.0);
        let (_, cache) = forward(&p, &cfg, &input(2, 32), Pass::Eval).unwrap();
        for b in 0..2 {
            for (o, z) in cache.bottleneck(b).iter().zip(cache.latent(b)) {
                assert_eq!(*o, 0.5 * z);
            }
        }
    }

    #[test]
    fn eval_is_deterministic_and_train_uses_batch_stats() {
        let cfg = ModelConfig::tiny(32, Bottleneck::Dm);
        let p = ModelParams::init(&cfg).unwrap();
        let x = input(2, 32);
        let (a, _) = forward(&p, &cfg, &x, Pass::Eval).unwrap();
        let (b, _) = forward(&p, &cfg, &x, Pass::Eval).unwrap();
        assert_eq!(a, b);
        let (t1, _) = forward(&p, &cfg, &x, Pass::Train { dropout_seed: 1 }).unwrap();
        let (t2, _) = forward(&p, &cfg, &x, Pass::Train { dropout_seed: 2 }).unwrap();
        assert_ne!(t1, a);
        assert_ne!(t1, t2);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let cfg = ModelConfig::tiny(32, Bottleneck::Rm);
        let p = ModelParams::init(&cfg).unwrap();
        let (y, cache) = forward(&p, &cfg, &input(2, 32), Pass::Train { dropout_seed: 0 }).unwrap();
        let g = backward(&p, &cfg, &cache, &y.zeros_like()).unwrap();
        for (_, t, _) in g.params.tensors() {
            assert!(t.data.iter().all(|&v| v == 0.0));
        }
        assert!(g.input.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let cfg = ModelConfig::tiny(32, Bottleneck::Identity);
        let mut p = ModelParams::init(&cfg).unwrap();
        let (y, cache) = forward(&p, &cfg, &input(1, 32), Pass::Eval).unwrap();
        p.generation += 1;
        assert!(matches!(backward(&p, &cfg, &cache, &y), Err(Error::StaleCache)));
    }

    #[test]
    fn tensor_names_are_unique_and_ordered() {
        let cfg = ModelConfig::tiny(32, Bottleneck::Rm);
        let mut p = ModelParams::init(&cfg).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.0).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        let names_mut: Vec<String> = p.tensors_mut().into_iter().map(|t| t.0).collect();
        assert_eq!(names, names_mut);
        assert!(names.iter().any(|n| n == "transformer.head.3.w_q"));
    }

    #[test]
    fn saturated_mask_matches_plain_unet() {
        let rm = ModelConfig::tiny(32, Bottleneck::Rm);
        let mut p = ModelParams::init(&rm).unwrap();
        p.transformer.ln2.gamma.data.iter_mut().for_each(|v| *v = 0.0);
        p.transformer.ln2.beta.data.iter_mut().for_each(|v| *v = 20.0);
        let unet = ModelConfig { bottleneck: Bottleneck::Identity, ..rm.clone() };
        let x = input(2, 32);
        let (a, cache) = forward(&p, &rm, &x, Pass::Eval).unwrap();
        let (b, _) = forward(&p, &unet, &x, Pass::Eval).unwrap();
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-6);
        }
        assert!(cache.transformer_out(0).unwrap().iter().all(|&v| v == 20.0));
    }

    #[test]
    fn mask_is_strictly_inside_unit_interval() {
        let cfg = ModelConfig::tiny(64, Bottleneck::Rm);
        let p = ModelParams::init(&cfg).unwrap();
        let (_, cache) = forward(&p, &cfg, &input(2, 64), Pass::Eval).unwrap();
        for it in &cache.items {
            assert!(it.mask.as_ref().unwrap().iter().all(|&m| m > 0.0 && m < 1.0));
        }
    }

    #[test]
    fn widths_scale_with_base() {
        assert_eq!(ModelConfig::paper(2000, Bottleneck::Rm).latent_shape(), (125, 1024));
        assert_eq!(ModelConfig::tiny(64, Bottleneck::Rm).latent_shape(), (4, 128));
        let cfg = ModelConfig::tiny(64, Bottleneck::Identity);
        let p = ModelParams::init(&cfg).unwrap();
        let (_, cache) = forward(&p, &cfg, &input(1, 64), Pass::Eval).unwrap();
        let widths: Vec<usize> = cache.enc.iter().map(|e| e.g.cout).collect();
        let lengths: Vec<usize> = cache.enc.iter().map(|e| e.g.lout).collect();
        assert_eq!(widths, vec![8, 16, 32, 64, 128]);
        assert_eq!(lengths, vec![64, 32, 16, 8, 4]);
    }
}
