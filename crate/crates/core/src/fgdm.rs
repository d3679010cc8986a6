//! Fourier prior guided degradation module.
//!
//! AENet enhances the amplitude spectrum of a DT-LR image; the enhanced
//! amplitude is recombined with a guide phase and inverted back to an image.

use std::path::Path;

use rfdeg_autograd::{checkpoint, derive_seed, AdamState, CustomOp, Element, Graph, ParamSet, Tensor, Var};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{amp_phase, fft2, fft2_plane, ifft2, ifft2_plane_complex, mirror_index, phase_of, polar_plane, recombine};
use crate::imgio::{sample_patches, ImageF};
use crate::nn::{self, at_step, Conv, DivergenceGuard, LossLog, Padding};
use crate::resample::{dtlr, DtlrSpec, FilterKind};

pub const PREFIX: &str = "fgdm.";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AenetConfig {
    pub base_channels: usize,
    pub residual_blocks: usize,
    pub kernel_size: usize,
    /// Feed the radial frequency of each bin as a second input channel.
    pub frequency_channel: bool,
}

impl Default for AenetConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            residual_blocks: 3,
            kernel_size: 3,
            frequency_channel: false,
        }
    }
}

impl AenetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.residual_blocks == 0 {
            return Err(Error::invalid("aenet", "base_channels and residual_blocks must be positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid("aenet", format!("kernel_size {} must be odd", self.kernel_size)));
        }
        Ok(())
    }

    fn input_channels(&self) -> usize {
        1 + usize::from(self.frequency_channel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgdmTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub patch: usize,
}

impl Default for FgdmTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 8,
            learning_rate: 1e-4,
            patch: 32,
        }
    }
}

/// Amplitude enhancement network: circular-padded convolutions over the
/// log-amplitude plane, residual blocks, zero-initialized output layer.
#[derive(Debug, Clone)]
pub struct Aenet {
    pub cfg: AenetConfig,
    pub params: ParamSet<f32>,
    head: Conv,
    blocks: Vec<(Conv, Conv)>,
    tail: Conv,
}

impl Aenet {
    pub fn new(cfg: AenetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let (c, k) = (cfg.base_channels, cfg.kernel_size);
        let head = nn::conv(&mut params, "fgdm.head", c, cfg.input_channels(), k, seed, false);
        let blocks = (0..cfg.residual_blocks)
            .map(|i| {
                (
                    nn::conv(&mut params, &format!("fgdm.block{i}.conv1"), c, c, k, seed, false),
                    nn::conv(&mut params, &format!("fgdm.block{i}.conv2"), c, c, k, seed, false),
                )
            })
            .collect();
        let tail = nn::conv(&mut params, "fgdm.tail", 1, c, k, seed, true);
        Ok(Self {
            cfg,
            params,
            head,
            blocks,
            tail,
        })
    }

    /// Network input `[N, 1 or 2, H, W]`: `ln(1 + A)` and optionally the
    /// radial frequency `2 * |(u, v)|` with wrapped, normalized coordinates.
    pub fn input_tensor(&self, amps: &[Vec<f64>], h: usize, w: usize) -> Result<Tensor<f32>> {
        let cin = self.cfg.input_channels();
        let mut data = Vec::with_capacity(amps.len() * cin * h * w);
        for a in amps {
            if let Some(v) = a.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::invalid("aenet", format!("negative amplitude {v}")));
            }
            data.extend(a.iter().map(|&v| v.ln_1p() as f32));
            if self.cfg.frequency_channel {
                data.extend(radial_frequency(h, w).into_iter().map(|v| v as f32));
            }
        }
        Ok(Tensor::new(&[amps.len(), cin, h, w], data)?)
    }

    /// Point-symmetric residual field `f` on the graph, shape `[N, 1, H, W]`.
    pub fn residual(&self, g: &mut Graph<f32>, vars: &[Var], input: Var) -> Result<Var> {
        let mut x = self.head.apply(g, vars, input, 1, Padding::Circular)?;
        x = nn::lrelu(g, x)?;
        for (c1, c2) in &self.blocks {
            let mut r = c1.apply(g, vars, x, 1, Padding::Circular)?;
            r = nn::lrelu(g, r)?;
            r = c2.apply(g, vars, r, 1, Padding::Circular)?;
            x = g.add(x, r)?;
        }
        let f = self.tail.apply(g, vars, x, 1, Padding::Circular)?;
        let reflected = g.point_reflect(f)?;
        let both = g.add(f, reflected)?;
        Ok(g.scale(both, 0.5)?)
    }

    /// Differentiable enhanced amplitude `max(0, A e^f + (e^f - 1))`, which
    /// equals `exp(ln(1 + A) + f) - 1` wherever that is nonnegative.
    pub fn enhance_var(&self, g: &mut Graph<f32>, vars: &[Var], input: Var, amp: Var) -> Result<Var> {
        let f = self.residual(g, vars, input)?;
        let ef = g.exp(f)?;
        let scaled = g.mul(amp, ef)?;
        let shift = g.expm1(f)?;
        let sum = g.add(scaled, shift)?;
        Ok(g.relu(sum)?)
    }

    /// Residual field per plane, evaluated without recording gradients.
    pub fn residual_planes(&self, amps: &[Vec<f64>], h: usize, w: usize) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let input = g.input(self.input_tensor(amps, h, w)?);
        let f = self.residual(&mut g, &vars, input)?;
        Ok(g.value(f).data().chunks(h * w).map(|p| p.iter().map(|&v| f64::from(v)).collect()).collect())
    }

    /// Enhanced amplitude planes. The final combination runs in 64-bit so a
    /// zero residual reproduces the input exactly.
    pub fn enhance(&self, amps: &[Vec<f64>], h: usize, w: usize) -> Result<Vec<Vec<f64>>> {
        let f = self.residual_planes(amps, h, w)?;
        Ok(amps
            .iter()
            .zip(&f)
            .map(|(a, f)| a.iter().zip(f).map(|(&a, &f)| (a * f.exp() + f.exp_m1()).max(0.0)).collect())
            .collect())
    }
}

/// `2 * sqrt(fu^2 + fv^2)` with `fu = min(u, H - u) / H`; symmetric under
/// `(u, v) -> (-u, -v)`.
pub fn radial_frequency(h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        let fu = u.min(h - u) as f64 / h as f64;
        for v in 0..w {
            let fv = v.min(w - v) as f64 / w as f64;
            out.push(2.0 * (fu * fu + fv * fv).sqrt());
        }
    }
    out
}

/// `x = Re(IFFT(A * exp(i phi)))` per plane with the phase held fixed.
/// The vector-Jacobian product is `dA = Re(exp(i phi) * IFFT(g))`.
struct FourierReconstruct {
    phases: Vec<Vec<f64>>,
    h: usize,
    w: usize,
}

impl FourierReconstruct {
    fn forward<T: Element>(&self, amp: &[T]) -> Vec<T> {
        let hw = self.h * self.w;
        let mut out = Vec::with_capacity(amp.len());
        for (a, phi) in amp.chunks(hw).zip(&self.phases) {
            let a: Vec<f64> = a.iter().map(|&v| v.to_f64()).collect();
            let spec = polar_plane(&a, phi);
            out.extend(ifft2_plane_complex(&spec, self.h, self.w).iter().map(|c| T::from_f64(c.re)));
        }
        out
    }
}

impl<T: Element> CustomOp<T> for FourierReconstruct {
    fn name(&self) -> &'static str {
        "fourier_reconstruct"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_output: &[T]) -> Vec<Option<Vec<T>>> {
        let hw = self.h * self.w;
        let mut grad = Vec::with_capacity(grad_output.len());
        for (g, phi) in grad_output.chunks(hw).zip(&self.phases) {
            let gc: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v.to_f64(), 0.0)).collect();
            let back = ifft2_plane_complex(&gc, self.h, self.w);
            grad.extend(
                back.iter()
                    .zip(phi)
                    .map(|(b, &p)| T::from_f64((Complex64::from_polar(1.0, p) * b).re)),
            );
        }
        vec![Some(grad)]
    }
}

/// Appends the reconstruction op for amplitude `amp` (`[N, 1, H, W]`).
pub fn reconstruct_var<T: Element>(g: &mut Graph<T>, amp: Var, phases: Vec<Vec<f64>>, h: usize, w: usize) -> Result<Var> {
    let op = FourierReconstruct { phases, h, w };
    let value = g.value(amp);
    let out = Tensor::new(value.shape(), op.forward(value.data()))?;
    Ok(g.custom(&[amp], out, Box::new(op))?)
}

/// Amplitude planes of `dtlr(x)` and phase planes of `x`, one per channel.
pub fn training_planes(x: &ImageF, spec: &DtlrSpec) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (h, w, c) = x.dims();
    let d = dtlr(x, spec)?;
    let mut amps = Vec::with_capacity(c);
    let mut phases = Vec::with_capacity(c);
    for ch in 0..c {
        amps.push(fft2_plane(&d.plane(ch), h, w).iter().map(|s| s.norm()).collect());
        phases.push(fft2_plane(&x.plane(ch), h, w).iter().map(|&s| phase_of(s)).collect());
    }
    Ok((amps, phases))
}

fn planes_tensor(planes: &[Vec<f64>], h: usize, w: usize) -> Result<Tensor<f32>> {
    let data = planes.iter().flatten().map(|&v| v as f32).collect();
    Ok(Tensor::new(&[planes.len(), 1, h, w], data)?)
}

/// L1 reconstruction loss of a batch on a fresh graph; returns the graph,
/// parameter handles and the loss node.
fn batch_loss(net: &Aenet, batch: &[ImageF], spec: &DtlrSpec, trainable: bool) -> Result<(Graph<f32>, Vec<Var>, Var)> {
    let (h, w, _) = batch[0].dims();
    let mut amps = Vec::new();
    let mut phases = Vec::new();
    let mut targets = Vec::new();
    for x in batch {
        let (a, p) = training_planes(x, spec)?;
        amps.extend(a);
        phases.extend(p);
        for ch in 0..x.channels() {
            targets.push(x.plane(ch));
        }
    }
    let mut g = Graph::new();
    let vars = if trainable {
        net.params.bind(&mut g)
    } else {
        net.params.bind_frozen(&mut g)
    };
    let input = g.input(net.input_tensor(&amps, h, w)?);
    let amp = g.input(planes_tensor(&amps, h, w)?);
    let enhanced = net.enhance_var(&mut g, &vars, input, amp)?;
    let xhat = reconstruct_var(&mut g, enhanced, phases, h, w)?;
    let target = g.input(planes_tensor(&targets, h, w)?);
    let loss = g.l1(xhat, target)?;
    Ok((g, vars, loss))
}

#[derive(Debug, Clone)]
pub struct FgdmCheckpoint {
    pub net: Aenet,
    pub dtlr: DtlrSpec,
    pub steps: usize,
    /// Last (up to 200) training losses.
    pub loss_tail: Vec<f64>,
}

const TAIL: usize = 200;

fn filter_code(f: FilterKind) -> f32 {
    match f {
        FilterKind::Bilinear => 0.0,
        FilterKind::Bicubic => 1.0,
        FilterKind::Lanczos3 => 2.0,
    }
}

fn filter_from_code(v: f32) -> Result<FilterKind> {
    match v as i64 {
        0 => Ok(FilterKind::Bilinear),
        1 => Ok(FilterKind::Bicubic),
        2 => Ok(FilterKind::Lanczos3),
        _ => Err(Error::Data(format!("checkpoint names unknown filter code {v}"))),
    }
}

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

impl FgdmCheckpoint {
    /// Untrained checkpoint: the enhancer is the identity.
    pub fn identity(cfg: AenetConfig, dtlr: DtlrSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            net: Aenet::new(cfg, seed)?,
            dtlr,
            steps: 0,
            loss_tail: Vec::new(),
        })
    }

    pub fn to_entries(&self) -> Vec<(String, Tensor<f32>)> {
        let c = &self.net.cfg;
        let mut entries = vec![
            meta(
                "arch",
                vec![
                    c.base_channels as f32,
                    c.residual_blocks as f32,
                    c.kernel_size as f32,
                    f32::from(u8::from(c.frequency_channel)),
                ],
            ),
            meta(
                "dtlr",
                vec![self.dtlr.iterations as f32, self.dtlr.scale as f32, filter_code(self.dtlr.filter)],
            ),
            meta("steps", vec![self.steps as f32]),
        ];
        if !self.loss_tail.is_empty() {
            entries.push(meta("loss_tail", self.loss_tail.iter().map(|&v| v as f32).collect()));
        }
        entries.extend(self.net.params.to_entries());
        entries
    }

    pub fn from_entries(entries: &[(String, Tensor<f32>)]) -> Result<Self> {
        let arch = find(entries, "fgdm.meta.arch")?.data();
        let dt = find(entries, "fgdm.meta.dtlr")?.data();
        if arch.len() != 4 || dt.len() != 3 {
            return Err(Error::Data("malformed fgdm metadata".into()));
        }
        let cfg = AenetConfig {
            base_channels: arch[0] as usize,
            residual_blocks: arch[1] as usize,
            kernel_size: arch[2] as usize,
            frequency_channel: arch[3] != 0.0,
        };
        let mut net = Aenet::new(cfg, 0)?;
        let params: Vec<(String, Tensor<f32>)> = entries
            .iter()
            .filter(|(n, _)| n.starts_with(PREFIX) && !n.starts_with("fgdm.meta."))
            .cloned()
            .collect();
        net.params.load_from(&params)?;
        Ok(Self {
            net,
            dtlr: DtlrSpec {
                iterations: dt[0] as usize,
                scale: dt[1] as usize,
                filter: filter_from_code(dt[2])?,
            },
            steps: find(entries, "fgdm.meta.steps")?.data()[0] as usize,
            loss_tail: find(entries, "fgdm.meta.loss_tail")
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
pub struct FgdmTrainOutput {
    pub checkpoint: FgdmCheckpoint,
    pub log: LossLog,
}

/// Trains AENet on random patches of real LR images.
pub fn fgdm_train(
    lr_corpus: &[ImageF],
    spec: &DtlrSpec,
    net_cfg: AenetConfig,
    train: &FgdmTrainConfig,
    seed: u64,
) -> Result<FgdmTrainOutput> {
    if lr_corpus.is_empty() {
        return Err(Error::Data("fgdm training needs at least one LR image".into()));
    }
    if train.batch == 0 || train.patch % spec.scale != 0 {
        return Err(Error::invalid(
            "fgdm_train",
            format!("batch {} / patch {} (must be a multiple of {})", train.batch, train.patch, spec.scale),
        ));
    }
    let mut net = Aenet::new(net_cfg, derive_seed(seed, 0xf6d0))?;
    let mut adam = AdamState::new(train.learning_rate as f32);
    let mut guard = DivergenceGuard::default();
    let mut log = LossLog::default();
    let patch_seed = derive_seed(seed, 0xf6d1);
    for step in 0..train.steps {
        let batch = sample_patches(lr_corpus, train.batch, train.patch, patch_seed, step as u64)?;
        let step_result = (|| -> Result<f64> {
            let (mut g, vars, loss) = batch_loss(&net, &batch, spec, true)?;
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
    Ok(FgdmTrainOutput {
        checkpoint: FgdmCheckpoint {
            net,
            dtlr: *spec,
            steps: train.steps,
            loss_tail: log.losses[tail_from..].to_vec(),
        },
        log,
    })
}

/// Mean L1 reconstruction loss over fixed batches, without training.
pub fn fgdm_eval_loss(ckpt: &FgdmCheckpoint, lr_corpus: &[ImageF], batches: usize, batch: usize, patch: usize, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for b in 0..batches {
        let imgs = sample_patches(lr_corpus, batch, patch, seed, b as u64)?;
        let (g, _, loss) = batch_loss(&ckpt.net, &imgs, &ckpt.dtlr, false)?;
        total += f64::from(g.value(loss).item());
    }
    Ok(total / batches as f64)
}

/// `X-bar`: DT-LR amplitude enhanced by AENet, recombined with the input's
/// phase. Output is not clamped.
pub fn fgdm_apply(lr: &ImageF, ckpt: &FgdmCheckpoint, spec: &DtlrSpec) -> Result<ImageF> {
    let (h, w, _) = lr.dims();
    let d = dtlr(lr, spec)?;
    let amps = amp_phase(&fft2(&d)?).amplitude;
    let enhanced = ckpt.net.enhance(&amps, h, w)?;
    let guide = amp_phase(&fft2(lr)?).phase;
    ifft2(&recombine(&enhanced, &guide, h, w)?)
}

/// True if `plane` is invariant under `(u, v) -> (-u, -v)`.
pub fn is_point_symmetric(plane: &[f64], h: usize, w: usize) -> bool {
    (0..h * w).all(|i| plane[i] == plane[mirror_index(i, h, w)])
}
