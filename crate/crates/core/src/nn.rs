//! Layer helpers and training plumbing shared by the two learned modules.

use rfdeg_autograd::{derive_seed, Graph, ParamSet, RngStream, Tensor, Var, LEAKY_SLOPE};

use crate::error::{Error, Result};

/// Parameter indices of a convolution with bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub kernel: usize,
}

/// Kaiming-normal weights for a leaky-ReLU network, zero bias. With `zero`
/// set, the weights are zero too.
pub fn conv(
    params: &mut ParamSet<f32>,
    name: &str,
    out_ch: usize,
    in_ch: usize,
    kernel: usize,
    seed: u64,
    zero: bool,
) -> Conv {
    let fan_in = (in_ch * kernel * kernel) as f64;
    let std = (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in)).sqrt();
    let n = out_ch * in_ch * kernel * kernel;
    let data: Vec<f32> = if zero {
        vec![0.0; n]
    } else {
        let mut rng = RngStream::new(derive_seed(seed, fnv1a(name)), 0);
        (0..n).map(|_| (std * rng.normal()) as f32).collect()
    };
    let weight = params.add(
        format!("{name}.w"),
        Tensor::new(&[out_ch, in_ch, kernel, kernel], data).expect("shape matches data"),
    );
    let bias = params.add(format!("{name}.b"), Tensor::zeros(&[out_ch]));
    Conv { weight, bias, kernel }
}

/// Stable 64-bit hash of a parameter name, used to derive per-layer seeds.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Circular,
}

impl Conv {
    pub fn apply(&self, g: &mut Graph<f32>, vars: &[Var], x: Var, stride: usize, padding: Padding) -> Result<Var> {
        let pad = self.kernel / 2;
        let y = match padding {
            Padding::Circular => {
                let padded = g.pad_circular(x, pad)?;
                g.conv2d(padded, vars[self.weight], stride, 0)?
            }
            Padding::Zero => g.conv2d(x, vars[self.weight], stride, pad)?,
        };
        Ok(g.add_channel_bias(y, vars[self.bias])?)
    }
}

pub fn lrelu(g: &mut Graph<f32>, x: Var) -> Result<Var> {
    Ok(g.leaky_relu(x, LEAKY_SLOPE as f32)?)
}

/// Number of consecutive steps above the ceiling that aborts training.
pub const DIVERGENCE_PATIENCE: usize = 100;
/// Ceiling as a multiple of the first-step loss.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Aborts training when the loss stays far above its first value.
#[derive(Debug, Clone, Default)]
pub struct DivergenceGuard {
    initial: Option<f64>,
    streak: usize,
}

impl DivergenceGuard {
    pub fn observe(&mut self, step: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                msg: format!("loss is {loss}"),
            });
        }
        let initial = *self.initial.get_or_insert(loss);
        if loss > DIVERGENCE_FACTOR * initial {
            self.streak += 1;
            if self.streak >= DIVERGENCE_PATIENCE {
                return Err(Error::Divergence {
                    step,
                    msg: format!(
                        "loss {loss:.6} above {DIVERGENCE_FACTOR}x the initial {initial:.6} for {} steps",
                        self.streak
                    ),
                });
            }
        } else {
            self.streak = 0;
        }
        Ok(())
    }
}

/// Maps numerical failures inside a training step onto a divergence error
/// carrying the step index.
pub fn at_step(step: usize, e: Error) -> Error {
    match e {
        e if e.kind() == crate::ErrorKind::Numerical && matches!(e, Error::Autograd(_)) => Error::Divergence {
            step,
            msg: e.to_string(),
        },
        other => other,
    }
}

/// Per-step training losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossLog {
    pub losses: Vec<f64>,
}

impl LossLog {
    pub fn push(&mut self, loss: f64) {
        self.losses.push(loss);
    }

    /// Mean over `[from, to)`, clipped to the recorded range.
    pub fn window_mean(&self, from: usize, to: usize) -> Option<f64> {
        let to = to.min(self.losses.len());
        if from >= to {
            return None;
        }
        Some(self.losses[from..to].iter().sum::<f64>() / (to - from) as f64)
    }

    pub fn head_mean(&self, n: usize) -> Option<f64> {
        self.window_mean(0, n)
    }

    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        self.window_mean(self.losses.len().saturating_sub(n), self.losses.len())
    }

    /// `step,loss` CSV, steps counted from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{},{:.8}\n", i + 1, l));
        }
        s
    }
}
