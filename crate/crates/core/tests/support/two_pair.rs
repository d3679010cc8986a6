//! Two 4x4 RGB pairs, a velocity net trained on them, and the probe grid
//! compared against the closed-form conditional field.

use rfdeg_autograd::RngStream;
use rfdeg_core::imgio::ImageF;
use rfdeg_core::rfdm::{conditional_velocity_oracle, train_flow, RfdmTrainConfig, VelocityField, VelocityNet, VelocityNetConfig};

pub const LAMBDA: f64 = 0.1;
pub const STEPS: usize = 5000;
pub const PROBE_TIMES: [f64; 3] = [0.1, 0.5, 0.9];
const GRID: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

fn image(f: impl Fn(usize) -> f64) -> ImageF {
    ImageF::new(4, 4, 3, (0..48).map(f).collect()).expect("4x4x3")
}

fn sign(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

/// `(x_bar, x1)` pairs whose noisy paths overlap at mid-flow: the pair means
/// are about two noise deviations apart at `t = 0.5`.
pub fn pairs() -> Vec<(ImageF, ImageF)> {
    let delta = 0.02;
    let xb0 = image(|i| 0.4 + 0.05 * ((i / 3 + i / 12) % 2) as f64);
    let x10 = image(|i| 0.45 + 0.1 * ((i / 3) % 4) as f64 / 3.0);
    let xb1 = image(|i| xb0.data()[i] + delta * sign((i / 3) % 2 == 0));
    let x11 = image(|i| x10.data()[i] - delta * sign((i / 12) % 2 == 0));
    vec![(xb0, x10), (xb1, x11)]
}

pub fn train(pairs: &[(ImageF, ImageF)]) -> VelocityNet {
    let cfg = RfdmTrainConfig {
        steps: STEPS,
        batch: 8,
        learning_rate: 1e-3,
        patch: 4,
        lambda: LAMBDA,
    };
    let net = VelocityNetConfig {
        base_channels: 16,
        embed_dim: 32,
    };
    let out = train_flow(net, &cfg, 1, |step| Ok((0..8).map(|b| pairs[(step * 8 + b) % 2].clone()).collect()))
        .expect("toy training");
    out.checkpoint.net
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// 5x5 probes at time `t`, centred between the two pair means. One axis runs
/// from one mean to the other (or +-1 noise deviation if they are closer),
/// the other spans +-1 noise deviation along a fixed orthogonal direction.
pub fn probes(pairs: &[(ImageF, ImageF)], t: f64) -> Vec<ImageF> {
    let mean = |p: &(ImageF, ImageF)| -> Vec<f64> { (0..48).map(|i| t * p.1.data()[i] + (1.0 - t) * p.0.data()[i]).collect() };
    let (m0, m1) = (mean(&pairs[0]), mean(&pairs[1]));
    let d: Vec<f64> = m1.iter().zip(&m0).map(|(a, b)| a - b).collect();
    let dn = norm(&d);
    let d: Vec<f64> = d.iter().map(|v| v / dn).collect();
    let mut e = RngStream::new(99, 0).normals(48);
    let proj: f64 = e.iter().zip(&d).map(|(a, b)| a * b).sum();
    e.iter_mut().zip(&d).for_each(|(a, b)| *a -= proj * b);
    let en = norm(&e);
    e.iter_mut().for_each(|a| *a /= en);
    let s = (1.0 - t) * LAMBDA;
    let reach = (dn / 2.0).max(s);
    let mut out = Vec::with_capacity(25);
    for a in GRID {
        for b in GRID {
            out.push(image(|i| 0.5 * (m0[i] + m1[i]) + a * reach * d[i] + b * s * e[i]));
        }
    }
    out
}

/// Mean absolute difference between the net and the oracle over the probe
/// grid at time `t`.
pub fn probe_error(net: &VelocityNet, pairs: &[(ImageF, ImageF)], t: f64) -> f64 {
    let probes = probes(pairs, t);
    let total: f64 = probes
        .iter()
        .map(|z| {
            let oracle = conditional_velocity_oracle(pairs, LAMBDA, z, t).expect("oracle");
            let v = net.velocity(z, t).expect("net");
            oracle.data().iter().zip(v.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 48.0
        })
        .sum();
    total / probes.len() as f64
}
