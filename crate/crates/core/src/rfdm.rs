//! Rectified flow degradation module.
//!
//! A small UNet `v(z, t)` is trained with the flow-matching loss on linear
//! paths from `x0 = x_bar + lambda * n` to a real LR image `x1`, and sampled
//! with explicit Euler steps.

use std::path::Path;

use rfdeg_autograd::{checkpoint, derive_seed, AdamState, Graph, ParamSet, RngStream, Tensor, Var};

use crate::error::{Error, Result};
use crate::fgdm::{fgdm_apply, FgdmCheckpoint};
use crate::imgio::{images_to_tensor, sample_patches, tensor_to_images, ImageF};
use crate::nn::{self, at_step, Conv, DivergenceGuard, LossLog, Padding};

pub const PREFIX: &str = "rfdm.";
/// Stream index for the noise `n` of a flow sample or a synthesis draw.
pub const NOISE_STREAM: u64 = 0x6e6f;
const TIME_STREAM: u64 = 0x7469;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityNetConfig {
    pub base_channels: usize,
    pub embed_dim: usize,
}

impl Default for VelocityNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            embed_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfdmTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub patch: usize,
    pub lambda: f64,
}

impl Default for RfdmTrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch: 8,
            learning_rate: 1e-3,
            patch: 32,
            lambda: 0.1,
        }
    }
}

/// `(x0, x1, t, x_t)` with `x0 = x_bar + lambda * n` and
/// `x_t = t * x1 + (1 - t) * x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x0: ImageF,
    pub x1: ImageF,
    pub t: f64,
    pub xt: ImageF,
}

/// Standard normal image drawn from stream `NOISE_STREAM` of `seed`, in
/// channel-last data order.
pub fn noise_like(img: &ImageF, seed: u64) -> ImageF {
    let mut rng = RngStream::new(seed, NOISE_STREAM);
    let (h, w, c) = img.dims();
    ImageF::new(h, w, c, rng.normals(h * w * c)).expect("same dims")
}

pub fn interpolate(x0: &ImageF, x1: &ImageF, t: f64) -> ImageF {
    let data = x0.data().iter().zip(x1.data()).map(|(&a, &b)| t * b + (1.0 - t) * a).collect();
    ImageF::new(x0.height(), x0.width(), x0.channels(), data).expect("same dims")
}

pub fn make_flow_sample(x_bar: &ImageF, x_real: &ImageF, lambda: f64, t: f64, seed: u64) -> Result<FlowSample> {
    x_bar.same_dims(x_real, "make_flow_sample")?;
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid("make_flow_sample", format!("lambda {lambda}, t {t}")));
    }
    let n = noise_like(x_bar, seed);
    let data = x_bar.data().iter().zip(n.data()).map(|(&b, &e)| b + lambda * e).collect();
    let x0 = ImageF::new(x_bar.height(), x_bar.width(), x_bar.channels(), data)?;
    let xt = if t == 0.0 {
        x0.clone()
    } else if t == 1.0 {
        x_real.clone()
    } else {
        interpolate(&x0, x_real, t)
    };
    Ok(FlowSample {
        x0,
        x1: x_real.clone(),
        t,
        xt,
    })
}

/// Sinusoidal embedding of `t` in `dim` values: `sin(1000 t w_i)` for the
/// first half and `cos(1000 t w_i)` for the second, `w_i = 10000^(-i / half)`.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let w = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let a = 1000.0 * t * w;
        out[i] = a.sin();
        out[half + i] = a.cos();
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Block {
    embed_w: usize,
    embed_b: usize,
    conv1: Conv,
    conv2: Conv,
}

/// Two-level UNet with per-block time conditioning.
#[derive(Debug, Clone)]
pub struct VelocityNet {
    pub cfg: VelocityNetConfig,
    pub params: ParamSet<f32>,
    in_conv: Conv,
    enc0: Block,
    down1: Conv,
    enc1: Block,
    down2: Conv,
    mid: Block,
    fuse1: Conv,
    dec1: Block,
    fuse0: Conv,
    dec0: Block,
    out_conv: Conv,
}

fn linear(params: &mut ParamSet<f32>, name: &str, out: usize, inp: usize, seed: u64) -> (usize, usize) {
    let std = (1.0 / inp as f64).sqrt();
    let mut rng = RngStream::new(derive_seed(seed, nn::fnv1a(name)), 0);
    let data = (0..out * inp).map(|_| (std * rng.normal()) as f32).collect();
    let w = params.add(format!("{name}.w"), Tensor::new(&[out, inp], data).expect("shape"));
    let b = params.add(format!("{name}.b"), Tensor::zeros(&[out]));
    (w, b)
}

fn block(params: &mut ParamSet<f32>, name: &str, ch: usize, embed: usize, seed: u64) -> Block {
    let (embed_w, embed_b) = linear(params, &format!("{name}.embed"), ch, embed, seed);
    Block {
        embed_w,
        embed_b,
        conv1: nn::conv(params, &format!("{name}.conv1"), ch, ch, 3, seed, false),
        conv2: nn::conv(params, &format!("{name}.conv2"), ch, ch, 3, seed, false),
    }
}

impl Block {
    /// `x + conv2(lrelu(conv1(x) + A e))`, followed by leaky ReLU.
    fn apply(&self, g: &mut Graph<f32>, vars: &[Var], x: Var, emb: Var) -> Result<Var> {
        let e = g.linear(emb, vars[self.embed_w], vars[self.embed_b])?;
        let mut y = self.conv1.apply(g, vars, x, 1, Padding::Zero)?;
        y = g.add_per_channel(y, e)?;
        y = nn::lrelu(g, y)?;
        y = self.conv2.apply(g, vars, y, 1, Padding::Zero)?;
        let sum = g.add(x, y)?;
        nn::lrelu(g, sum)
    }
}

impl VelocityNet {
    pub fn new(cfg: VelocityNetConfig, seed: u64) -> Result<Self> {
        if cfg.base_channels == 0 || cfg.embed_dim < 2 || cfg.embed_dim % 2 != 0 {
            return Err(Error::invalid(
                "velocity_net",
                format!("base_channels {} / embed_dim {} (even, >= 2)", cfg.base_channels, cfg.embed_dim),
            ));
        }
        let (c, e) = (cfg.base_channels, cfg.embed_dim);
        let p = &mut ParamSet::new();
        let in_conv = nn::conv(p, "rfdm.in", c, 3, 3, seed, false);
        let enc0 = block(p, "rfdm.enc0", c, e, seed);
        let down1 = nn::conv(p, "rfdm.down1", 2 * c, c, 3, seed, false);
        let enc1 = block(p, "rfdm.enc1", 2 * c, e, seed);
        let down2 = nn::conv(p, "rfdm.down2", 2 * c, 2 * c, 3, seed, false);
        let mid = block(p, "rfdm.mid", 2 * c, e, seed);
        let fuse1 = nn::conv(p, "rfdm.fuse1", 2 * c, 4 * c, 3, seed, false);
        let dec1 = block(p, "rfdm.dec1", 2 * c, e, seed);
        let fuse0 = nn::conv(p, "rfdm.fuse0", c, 3 * c, 3, seed, false);
        let dec0 = block(p, "rfdm.dec0", c, e, seed);
        let out_conv = nn::conv(p, "rfdm.out", 3, c, 3, seed, true);
        Ok(Self {
            cfg,
            params: std::mem::take(p),
            in_conv,
            enc0,
            down1,
            enc1,
            down2,
            mid,
            fuse1,
            dec1,
            fuse0,
            dec0,
            out_conv,
        })
    }

    pub fn embed_tensor(&self, ts: &[f64]) -> Tensor<f32> {
        let d = self.cfg.embed_dim;
        let data = ts.iter().flat_map(|&t| time_embedding(t, d)).map(|v| v as f32).collect();
        Tensor::new(&[ts.len(), d], data).expect("shape")
    }

    /// Velocity for `x` (`[N, 3, H, W]`, H and W divisible by 4).
    pub fn forward(&self, g: &mut Graph<f32>, vars: &[Var], x: Var, emb: Var) -> Result<Var> {
        let (_, c, h, w) = g.value(x).nchw().ok_or_else(|| Error::invalid("velocity_net", "expected NCHW"))?;
        if c != 3 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::invalid(
                "velocity_net",
                format!("input {c}x{h}x{w}: need 3 channels and sides divisible by 4"),
            ));
        }
        let x0 = self.in_conv.apply(g, vars, x, 1, Padding::Zero)?;
        let x0 = nn::lrelu(g, x0)?;
        let h0 = self.enc0.apply(g, vars, x0, emb)?;
        let d1 = self.down1.apply(g, vars, h0, 2, Padding::Zero)?;
        let d1 = nn::lrelu(g, d1)?;
        let h1 = self.enc1.apply(g, vars, d1, emb)?;
        let d2 = self.down2.apply(g, vars, h1, 2, Padding::Zero)?;
        let d2 = nn::lrelu(g, d2)?;
        let m = self.mid.apply(g, vars, d2, emb)?;
        let u1 = g.upsample2x(m)?;
        let u1 = g.concat_channels(u1, h1)?;
        let u1 = self.fuse1.apply(g, vars, u1, 1, Padding::Zero)?;
        let u1 = nn::lrelu(g, u1)?;
        let u1 = self.dec1.apply(g, vars, u1, emb)?;
        let u0 = g.upsample2x(u1)?;
        let u0 = g.concat_channels(u0, h0)?;
        let u0 = self.fuse0.apply(g, vars, u0, 1, Padding::Zero)?;
        let u0 = nn::lrelu(g, u0)?;
        let u0 = self.dec0.apply(g, vars, u0, emb)?;
        self.out_conv.apply(g, vars, u0, 1, Padding::Zero)
    }

    /// Velocities for a batch of same-size images at per-image times.
    pub fn predict(&self, zs: &[ImageF], ts: &[f64]) -> Result<Vec<ImageF>> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let x = g.input(images_to_tensor(zs)?);
        let emb = g.input(self.embed_tensor(ts));
        let v = self.forward(&mut g, &vars, x, emb)?;
        tensor_to_images(g.value(v))
    }
}

/// A time-dependent vector field on images.
pub trait VelocityField {
    fn velocity(&self, z: &ImageF, t: f64) -> Result<ImageF>;
}

impl VelocityField for VelocityNet {
    fn velocity(&self, z: &ImageF, t: f64) -> Result<ImageF> {
        Ok(self.predict(std::slice::from_ref(z), &[t])?.remove(0))
    }
}

impl<F: Fn(&ImageF, f64) -> Result<ImageF>> VelocityField for F {
    fn velocity(&self, z: &ImageF, t: f64) -> Result<ImageF> {
        self(z, t)
    }
}

/// `K` explicit Euler steps from `t = 0` to `t = 1`; the result is unclamped.
pub fn euler_integrate(field: &dyn VelocityField, x0: &ImageF, k: usize) -> Result<ImageF> {
    if k == 0 {
        return Err(Error::invalid("euler_integrate", "K must be at least 1"));
    }
    let dt = 1.0 / k as f64;
    let mut x = x0.clone();
    for i in 0..k {
        let v = field.velocity(&x, i as f64 / k as f64)?;
        x.same_dims(&v, "euler_integrate")?;
        for (a, b) in x.data_mut().iter_mut().zip(v.data()) {
            *a += dt * b;
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: i });
        }
    }
    Ok(x)
}

/// Exact `E[x1 - x0 | x_t = z]` for a finite set of `(x_bar, x1)` pairs with
/// equal prior weight and `x0 = x_bar + lambda * n`.
pub fn conditional_velocity_oracle(pairs: &[(ImageF, ImageF)], lambda: f64, z: &ImageF, t: f64) -> Result<ImageF> {
    if pairs.is_empty() {
        return Err(Error::invalid("conditional_velocity_oracle", "no pairs"));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(Error::invalid("conditional_velocity_oracle", format!("t = {t} outside [0, 1)")));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("conditional_velocity_oracle", "lambda must be positive"));
    }
    for (xb, x1) in pairs {
        xb.same_dims(z, "conditional_velocity_oracle")?;
        x1.same_dims(z, "conditional_velocity_oracle")?;
    }
    let s = (1.0 - t) * lambda;
    let weights = oracle_weights(pairs, lambda, z, t);
    let mut out = vec![0.0; z.data().len()];
    for ((xb, x1), &w) in pairs.iter().zip(&weights) {
        for (i, o) in out.iter_mut().enumerate() {
            let mean = t * x1.data()[i] + (1.0 - t) * xb.data()[i];
            let noise = (z.data()[i] - mean) / s;
            *o += w * (x1.data()[i] - xb.data()[i] - lambda * noise);
        }
    }
    ImageF::new(z.height(), z.width(), z.channels(), out)
}

/// Posterior pair weights used by [`conditional_velocity_oracle`].
pub fn oracle_weights(pairs: &[(ImageF, ImageF)], lambda: f64, z: &ImageF, t: f64) -> Vec<f64> {
    let s = (1.0 - t) * lambda;
    let logits: Vec<f64> = pairs
        .iter()
        .map(|(xb, x1)| {
            let d2: f64 = z
                .data()
                .iter()
                .zip(xb.data().iter().zip(x1.data()))
                .map(|(&zv, (&b, &o))| (zv - t * o - (1.0 - t) * b).powi(2))
                .sum();
            -d2 / (2.0 * s * s)
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Flow-matching loss `mean((x1 - x0 - v(x_t, t))^2)` over a batch, on a
/// fresh graph.
fn batch_loss(net: &VelocityNet, samples: &[FlowSample], trainable: bool) -> Result<(Graph<f32>, Vec<Var>, Var)> {
    let mut g = Graph::new();
    let vars = if trainable {
        net.params.bind(&mut g)
    } else {
        net.params.bind_frozen(&mut g)
    };
    let xts: Vec<ImageF> = samples.iter().map(|s| s.xt.clone()).collect();
    let targets: Vec<ImageF> = samples
        .iter()
        .map(|s| {
            let d = s.x1.data().iter().zip(s.x0.data()).map(|(a, b)| a - b).collect();
            ImageF::new(s.x1.height(), s.x1.width(), s.x1.channels(), d)
        })
        .collect::<Result<_>>()?;
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let x = g.input(images_to_tensor(&xts)?);
    let emb = g.input(net.embed_tensor(&ts));
    let v = net.forward(&mut g, &vars, x, emb)?;
    let target = g.input(images_to_tensor(&targets)?);
    let loss = g.mse(v, target)?;
    Ok((g, vars, loss))
}

/// Flow loss of a batch with the current network, no gradients.
pub fn flow_loss(net: &VelocityNet, samples: &[FlowSample]) -> Result<f64> {
    let (g, _, loss) = batch_loss(net, samples, false)?;
    Ok(f64::from(g.value(loss).item()))
}

#[derive(Debug, Clone)]
pub struct RfdmCheckpoint {
    pub net: VelocityNet,
    pub lambda: f64,
    pub steps: usize,
    pub loss_tail: Vec<f64>,
}

const TAIL: usize = 200;

fn meta(name: &str, values: Vec<f32>) -> (String, Tensor<f32>) {
    let n = values.len();
    (format!("{PREFIX}meta.{name}"), Tensor::new(&[n], values).expect("1-D"))
}

fn find<'a>(entries: &'a [(String, Tensor<f32>)], name: &str) -> Result<&'a Tensor<f32>> {
    entries
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Data(format!("checkpoint lacks `{name}`")))
}

impl RfdmCheckpoint {
    /// Untrained checkpoint: the velocity is identically zero.
    pub fn zero_field(cfg: VelocityNetConfig, lambda: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            net: VelocityNet::new(cfg, seed)?,
            lambda,
            steps: 0,
            loss_tail: Vec::new(),
        })
    }

    pub fn to_entries(&self) -> Vec<(String, Tensor<f32>)> {
        let mut entries = vec![
            meta("arch", vec![self.net.cfg.base_channels as f32, self.net.cfg.embed_dim as f32]),
            meta("lambda", vec![self.lambda as f32]),
            meta("steps", vec![self.steps as f32]),
        ];
        if !self.loss_tail.is_empty() {
            entries.push(meta("loss_tail", self.loss_tail.iter().map(|&v| v as f32).collect()));
        }
        entries.extend(self.net.params.to_entries());
        entries
    }

    pub fn from_entries(entries: &[(String, Tensor<f32>)]) -> Result<Self> {
        let arch = find(entries, "rfdm.meta.arch")?.data();
        if arch.len() != 2 {
            return Err(Error::Data("malformed rfdm metadata".into()));
        }
        let cfg = VelocityNetConfig {
            base_channels: arch[0] as usize,
            embed_dim: arch[1] as usize,
        };
        let mut net = VelocityNet::new(cfg, 0)?;
        let params: Vec<(String, Tensor<f32>)> = entries
            .iter()
            .filter(|(n, _)| n.starts_with(PREFIX) && !n.starts_with("rfdm.meta."))
            .cloned()
            .collect();
        net.params.load_from(&params)?;
        Ok(Self {
            net,
            lambda: f64::from(find(entries, "rfdm.meta.lambda")?.data()[0]),
            steps: find(entries, "rfdm.meta.steps")?.data()[0] as usize,
            loss_tail: find(entries, "rfdm.meta.loss_tail")
                .map(|t| t.data().iter().map(|&v| f64::from(v)).collect())
                .unwrap_or_default(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.to_entries())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound { path: path.to_path_buf() });
        }
        Self::from_entries(&checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct RfdmTrainOutput {
    pub checkpoint: RfdmCheckpoint,
    pub log: LossLog,
}

/// Generic flow-matching loop. `pairs(step)` supplies the batch of
/// `(x_bar, x1)`; times and noise are drawn from `seed`.
pub fn train_flow(
    net_cfg: VelocityNetConfig,
    train: &RfdmTrainConfig,
    seed: u64,
    mut pairs: impl FnMut(usize) -> Result<Vec<(ImageF, ImageF)>>,
) -> Result<RfdmTrainOutput> {
    let mut net = VelocityNet::new(net_cfg, derive_seed(seed, 0x7f00))?;
    let mut adam = AdamState::new(train.learning_rate as f32);
    let mut guard = DivergenceGuard::default();
    let mut log = LossLog::default();
    let sample_seed = derive_seed(seed, 0x7f01);
    for step in 0..train.steps {
        let step_seed = derive_seed(sample_seed, step as u64);
        let mut trng = RngStream::new(step_seed, TIME_STREAM);
        let batch = pairs(step)?;
        let samples = batch
            .iter()
            .enumerate()
            .map(|(b, (xb, x1))| make_flow_sample(xb, x1, train.lambda, trng.uniform(), derive_seed(step_seed, b as u64)))
            .collect::<Result<Vec<_>>>()?;
        let step_result = (|| -> Result<f64> {
            let (mut g, vars, loss) = batch_loss(&net, &samples, true)?;
            let value = f64::from(g.value(loss).item());
            g.backward(loss)?;
            net.params.zero_grad();
            net.params.accumulate_grads(&g, &vars);
            adam.step(&mut net.params)?;
            Ok(value)
        })();
        let value = step_result.map_err(|e| at_step(step, e))?;
        guard.observe(step, value)?;
        log.push(value);
    }
    let tail_from = log.losses.len().saturating_sub(TAIL);
    Ok(RfdmTrainOutput {
        checkpoint: RfdmCheckpoint {
            net,
            lambda: train.lambda,
            steps: train.steps,
            loss_tail: log.losses[tail_from..].to_vec(),
        },
        log,
    })
}

/// Trains the velocity net on real LR patches and their frozen FGDM outputs.
pub fn rfdm_train(
    lr_corpus: &[ImageF],
    fgdm: &FgdmCheckpoint,
    net_cfg: VelocityNetConfig,
    train: &RfdmTrainConfig,
    seed: u64,
) -> Result<RfdmTrainOutput> {
    if lr_corpus.is_empty() {
        return Err(Error::Data("rfdm training needs at least one LR image".into()));
    }
    if train.batch == 0 || train.patch % 4 != 0 || train.patch % fgdm.dtlr.scale != 0 {
        return Err(Error::invalid(
            "rfdm_train",
            format!("batch {} / patch {} (patch must be divisible by 4 and the DT-LR scale)", train.batch, train.patch),
        ));
    }
    let patch_seed = derive_seed(seed, 0x7f02);
    train_flow(net_cfg, train, seed, |step| {
        let x1s = sample_patches(lr_corpus, train.batch, train.patch, patch_seed, step as u64)?;
        x1s.into_iter()
            .map(|x1| Ok((fgdm_apply(&x1, fgdm, &fgdm.dtlr)?, x1)))
            .collect()
    })
}

/// Synthesis: `x0 = lr_bar + lambda * n` with `n` from `seed`, then `K`
/// Euler steps through the learned field. Unclamped.
pub fn rfdm_apply(lr_bar: &ImageF, ckpt: &RfdmCheckpoint, lambda: f64, k: usize, seed: u64) -> Result<ImageF> {
    let n = noise_like(lr_bar, seed);
    let data = lr_bar.data().iter().zip(n.data()).map(|(&b, &e)| b + lambda * e).collect();
    let x0 = ImageF::new(lr_bar.height(), lr_bar.width(), lr_bar.channels(), data)?;
    euler_integrate(&ckpt.net, &x0, k)
}
