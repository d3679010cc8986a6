mod support;

use proptest::prelude::*;
use rfdeg_autograd::{Graph, RngStream, Tensor};
use support::{all_cases, max_rel_error, random, TOL};

#[test]
fn every_op_matches_finite_differences() {
    for c in all_cases() {
        let err = max_rel_error(&c.inputs, &c.build);
        assert!(err < TOL, "{}: relative error {err}", c.name);
    }
}

#[test]
fn gradients_are_deterministic() {
    let run = || {
        let mut rng = RngStream::new(7, 0);
        let x = random(&[2, 2, 6, 6], &mut rng).cast::<f32>();
        let k = random(&[4, 2, 3, 3], &mut rng).cast::<f32>().with_requires_grad(true);
        let mut g = Graph::new();
        let xv = g.input(x);
        let kv = g.leaf(k);
        let y = g.conv2d(xv, kv, 1, 1).unwrap();
        let y = g.leaky_relu(y, 0.2).unwrap();
        let loss = g.mean(y).unwrap();
        g.backward(loss).unwrap();
        (
            g.value(loss).item().to_bits(),
            g.grad(kv).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn large_finite_inputs_stay_finite() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_f64(&[1, 1, 3, 3], &[1e3, -1e3, 5e2, 0.0, 1e3, -7.0, 1e3, 1e3, -1e3]).unwrap());
    let k = g.input(Tensor::full(&[2, 1, 3, 3], 1e3));
    let y = g.conv2d(x, k, 1, 1).unwrap();
    let y = g.leaky_relu(y, 0.2).unwrap();
    let m = g.mean(y).unwrap();
    assert!(g.value(m).item().is_finite());
}

fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (n, c, h, w) = x.nchw().unwrap();
    let (o, ks) = (k.shape()[0], k.shape()[2]);
    let ho = (h + 2 * pad - ks) / stride + 1;
    let wo = (w + 2 * pad - ks) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ki in 0..ks {
                            for kj in 0..ks {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x.data()[((b * c + ic) * h + iy as usize) * w + ix as usize]
                                        * k.data()[((oc * c + ic) * ks + ki) * ks + kj];
                                }
                            }
                        }
                    }
                    out[((b * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

fn assert_conv_matches(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let kv = g.input(k.clone());
    let y = g.conv2d(xv, kv, stride, pad).unwrap();
    let expected = naive_conv(x, k, stride, pad);
    let got = g.value(y).data();
    assert_eq!(got.len(), expected.len());
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn conv2d_matches_nested_loop_reference() {
    let mut rng = RngStream::new(8, 0);
    let x = random(&[1, 2, 5, 5], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    assert_conv_matches(&x, &k, 2, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn conv2d_random_shapes(
        n in 1usize..3, c in 1usize..4, o in 1usize..4,
        h in 3usize..9, w in 3usize..9, ks in 1usize..4,
        stride in 1usize..3, pad in 0usize..2, seed in any::<u64>(),
    ) {
        prop_assume!(ks <= h + 2 * pad && ks <= w + 2 * pad);
        let mut rng = RngStream::new(seed, 0);
        let x = random(&[n, c, h, w], &mut rng);
        let k = random(&[o, c, ks, ks], &mut rng);
        assert_conv_matches(&x, &k, stride, pad);
    }
}
