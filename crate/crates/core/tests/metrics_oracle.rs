use proptest::prelude::*;
use rfdeg_autograd::RngStream;
use rfdeg_core::imgio::ImageF;
use rfdeg_core::metrics::{psnr, ssim};

fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageF {
    let mut rng = RngStream::new(seed, 0);
    ImageF::new(h, w, c, (0..h * w * c).map(|_| rng.uniform()).collect()).unwrap()
}

fn with_noise(img: &ImageF, sigma: f64, seed: u64) -> ImageF {
    let mut rng = RngStream::new(seed, 1);
    let data = img.data().iter().map(|v| v + sigma * rng.normal()).collect();
    ImageF::new(img.height(), img.width(), img.channels(), data).unwrap()
}

/// Explicit sliding window over the full 2-D Gaussian, no separability.
fn naive_ssim(a: &ImageF, b: &ImageF) -> f64 {
    let (h, w, c) = a.dims();
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = ((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5);
            *v = (-d2).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for ch in 0..c {
        let mut sum = 0.0;
        let mut count = 0.0;
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = win[i][j] / total;
                        ma += k * a.get(y + i, x + j, ch);
                        mb += k * b.get(y + i, x + j, ch);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = win[i][j] / total;
                        let da = a.get(y + i, x + j, ch) - ma;
                        let db = b.get(y + i, x + j, ch) - mb;
                        va += k * da * da;
                        vb += k * db * db;
                        cov += k * da * db;
                    }
                }
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        acc += sum / count;
    }
    acc / c as f64
}

#[test]
fn ssim_matches_naive_window() {
    let a = random_image(32, 32, 3, 1);
    let b = random_image(32, 32, 3, 2);
    assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-6);
    let c = with_noise(&a, 0.05, 3);
    assert!((ssim(&a, &c).unwrap() - naive_ssim(&a, &c)).abs() < 1e-6);
}

#[test]
fn psnr_matches_direct_mse() {
    let a = random_image(20, 17, 3, 4);
    let b = random_image(20, 17, 3, 5);
    let m = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    assert!((psnr(&a, &b).unwrap() + 10.0 * m.log10()).abs() < 1e-6);
}

#[test]
fn metrics_fall_with_noise_level() {
    let mut base = ImageF::filled(32, 32, 3, 0.0);
    for y in 0..32 {
        for x in 0..32 {
            for c in 0..3 {
                base.set(y, x, c, 0.5 + 0.3 * ((x as f64 * 0.4 + c as f64).sin() * (y as f64 * 0.3).cos()));
            }
        }
    }
    let mut last = (f64::INFINITY, f64::INFINITY);
    for sigma in [0.01, 0.02, 0.04] {
        let noisy = with_noise(&base, sigma, 9);
        let cur = (psnr(&base, &noisy).unwrap(), ssim(&base, &noisy).unwrap());
        assert!(cur.0 < last.0 && cur.1 < last.1);
        last = cur;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>(), h in 11usize..24, w in 11usize..24) {
        let a = random_image(h, w, 1, s1);
        let b = random_image(h, w, 1, s2);
        prop_assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-9);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!(psnr(&a, &b).unwrap() >= 0.0);
    }
}
