//! Finite-difference gradient checking and a catalogue of cases covering
//! every differentiable graph operation.

use rfdeg_autograd::{Graph, RngStream, Tensor, Var};

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-4;

pub fn random(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n = shape.iter().product();
    // Keep values away from zero so kinks (abs, leaky relu) are not straddled.
    let data = (0..n)
        .map(|_| {
            let v = rng.uniform_range(-1.0, 1.0);
            if v.abs() < 0.05 {
                v + 0.1f64.copysign(v)
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

pub type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>;

pub struct Case {
    pub name: String,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

fn case(name: impl Into<String>, inputs: Vec<Tensor<f64>>, build: impl Fn(&mut Graph<f64>, &[Var]) -> Var + 'static) -> Case {
    Case {
        name: name.into(),
        inputs,
        build: Box::new(build),
    }
}

/// Largest relative error between reverse-mode gradients of `build` and
/// central differences over every element of every input.
pub fn max_rel_error(inputs: &[Tensor<f64>], build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let eval = |vals: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[k]).expect("leaf gradient").to_vec();
        for i in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-2);
            worst = worst.max(err);
        }
    }
    worst
}

/// Weighted sum so every output element contributes a distinct gradient.
pub fn weighted_sum(g: &mut Graph<f64>, v: Var, seed: u64) -> Var {
    let shape = g.value(v).shape().to_vec();
    let mut rng = RngStream::new(seed, 99);
    let w = g.input(random(&shape, &mut rng));
    let p = g.mul(v, w).unwrap();
    g.sum(p).unwrap()
}

fn unary(name: &str, a: &Tensor<f64>, seed: u64, op: fn(&mut Graph<f64>, Var) -> Var) -> Case {
    case(name, vec![a.clone()], move |g, v| {
        let y = op(g, v[0]);
        weighted_sum(g, y, seed)
    })
}

fn binary(name: &str, a: &Tensor<f64>, b: &Tensor<f64>, seed: u64, op: fn(&mut Graph<f64>, Var, Var) -> Var) -> Case {
    case(name, vec![a.clone(), b.clone()], move |g, v| {
        let y = op(g, v[0], v[1]);
        weighted_sum(g, y, seed)
    })
}

pub fn all_cases() -> Vec<Case> {
    let mut rng = RngStream::new(1, 0);
    let a = random(&[2, 3], &mut rng);
    let b = random(&[2, 3], &mut rng);
    let mut cases = vec![
        binary("add", &a, &b, 1, |g, x, y| g.add(x, y).unwrap()),
        binary("sub", &a, &b, 2, |g, x, y| g.sub(x, y).unwrap()),
        binary("mul", &a, &b, 3, |g, x, y| g.mul(x, y).unwrap()),
        unary("scale", &a, 4, |g, x| g.scale(x, -1.7).unwrap()),
        unary("exp", &a, 5, |g, x| g.exp(x).unwrap()),
        unary("expm1", &a, 6, |g, x| g.expm1(x).unwrap()),
        unary("leaky_relu", &a, 7, |g, x| g.leaky_relu(x, 0.2).unwrap()),
        unary("relu", &a, 8, |g, x| g.relu(x).unwrap()),
        unary("abs", &a, 9, |g, x| g.abs(x).unwrap()),
        unary("reshape", &a, 10, |g, x| g.reshape(x, &[3, 2]).unwrap()),
    ];

    let mut rng = RngStream::new(2, 0);
    let a = random(&[4, 4], &mut rng);
    let b = random(&[4, 4], &mut rng);
    cases.push(case("sum", vec![a.clone()], |g, v| g.sum(v[0]).unwrap()));
    cases.push(case("mean", vec![a.clone()], |g, v| g.mean(v[0]).unwrap()));
    cases.push(case("mse", vec![a.clone(), b.clone()], |g, v| g.mse(v[0], v[1]).unwrap()));
    cases.push(case("l1", vec![a, b], |g, v| g.l1(v[0], v[1]).unwrap()));

    let mut rng = RngStream::new(3, 0);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
        let x = random(&[2, 2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        cases.push(case(format!("conv2d stride {stride} pad {pad}"), vec![x, k], move |g, v| {
            let y = g.conv2d(v[0], v[1], stride, pad).unwrap();
            weighted_sum(g, y, 11)
        }));
    }

    let mut rng = RngStream::new(4, 0);
    let x = random(&[1, 2, 4, 4], &mut rng);
    let k1 = random(&[3, 2, 3, 3], &mut rng);
    let b1 = random(&[3], &mut rng);
    let k2 = random(&[1, 3, 3, 3], &mut rng);
    cases.push(case("conv2d + bias + leaky_relu + mean", vec![x, k1, b1, k2], |g, v| {
        let h = g.conv2d(v[0], v[1], 1, 1).unwrap();
        let h = g.add_channel_bias(h, v[2]).unwrap();
        let h = g.leaky_relu(h, 0.2).unwrap();
        let y = g.conv2d(h, v[3], 2, 1).unwrap();
        let sq = g.mul(y, y).unwrap();
        g.mean(sq).unwrap()
    }));

    let mut rng = RngStream::new(5, 0);
    let x = random(&[2, 3, 2, 2], &mut rng);
    let bias = random(&[3], &mut rng);
    let e = random(&[2, 3], &mut rng);
    cases.push(binary("add_channel_bias", &x, &bias, 12, |g, x, b| g.add_channel_bias(x, b).unwrap()));
    cases.push(binary("add_per_channel", &x, &e, 13, |g, x, e| g.add_per_channel(x, e).unwrap()));
    let inp = random(&[3, 4], &mut rng);
    let w = random(&[5, 4], &mut rng);
    let lb = random(&[5], &mut rng);
    cases.push(case("linear", vec![inp, w, lb], |g, v| {
        let y = g.linear(v[0], v[1], v[2]).unwrap();
        weighted_sum(g, y, 14)
    }));

    let mut rng = RngStream::new(6, 0);
    let x = random(&[1, 2, 3, 4], &mut rng);
    let y = random(&[1, 1, 3, 4], &mut rng);
    cases.push(unary("pad_circular", &x, 15, |g, x| g.pad_circular(x, 2).unwrap()));
    cases.push(unary("point_reflect", &x, 16, |g, x| g.point_reflect(x).unwrap()));
    cases.push(unary("upsample2x", &x, 17, |g, x| g.upsample2x(x).unwrap()));
    cases.push(binary("concat_channels", &x, &y, 18, |g, a, b| g.concat_channels(a, b).unwrap()));
    cases
}
