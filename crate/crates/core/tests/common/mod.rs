//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ferret_core::model::FerretVariant;
use ferret_core::{CenterStrategy, Image, Statistic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-pixel reconstruction straight from the definition: collect the window
/// (zero outside the image), apply the center rule, sort, reduce.
pub fn lpd_reconstruct_oracle(img: &Image<f64>, n: usize, center: CenterStrategy, stat: Statistic) -> Image<f64> {
    let r = (n / 2) as isize;
    let (c, h, w) = img.shape();
    Image::from_fn(c, h, w, |ch, y, x| {
        let mut vals = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                let v = if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                    0.0
                } else {
                    img.get(ch, yy as usize, xx as usize)
                };
                if dy == 0 && dx == 0 {
                    match center {
                        CenterStrategy::Retention => vals.push(v),
                        CenterStrategy::Exclusion => {}
                        CenterStrategy::Mask => vals.push(match stat {
                            Statistic::Max => f64::NEG_INFINITY,
                            Statistic::Min => f64::INFINITY,
                            _ => 0.0,
                        }),
                    }
                } else {
                    vals.push(v);
                }
            }
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let len = vals.len();
        match stat {
            Statistic::Median if len % 2 == 1 => vals[len / 2],
            Statistic::Median => (vals[len / 2 - 1] + vals[len / 2]) / 2.0,
            Statistic::Max => vals[len - 1],
            Statistic::Min => vals[0],
            Statistic::Avg => vals.iter().sum::<f64>() / len as f64,
        }
    })
}

/// Random image whose values are multiples of `1 / denom` in `[0, 1]`.
pub fn random_image(c: usize, h: usize, w: usize, denom: u32, rng: &mut ChaCha8Rng) -> Image<f64> {
    Image::from_fn(c, h, w, |_, _, _| rng.random_range(0..=denom) as f64 / denom as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// AP recomputed from scratch at every cut-off `k`:
/// `sum_k (recall@k - recall@k-1) * precision@k`.
pub fn ap_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=order.len() {
        let tp = order[..k].iter().filter(|&&i| labels[i] == 1).count() as f64;
        let precision = tp / k as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

fn conv_params(cin: usize, cout: usize, k: usize, groups: usize, bias: bool) -> u64 {
    (cout * (cin / groups) * k * k + if bias { cout } else { 0 }) as u64
}

/// Closed-form trainable parameter total of a FerretNet variant.
pub fn ferretnet_params_formula(v: &FerretVariant) -> u64 {
    let bn = |c: usize| 2 * c as u64;
    let c1 = v.stage_channels[0];
    let mut total = conv_params(3, c1, 3, 1, false) + bn(c1) + conv_params(c1, c1, 3, 1, false) + bn(c1);
    for (i, (&c, &blocks)) in v.stage_channels.iter().zip(&v.stage_blocks).enumerate() {
        if i > 0 {
            total += conv_params(v.stage_channels[i - 1], c, 3, 1, false) + bn(c);
        }
        let block = 2 * conv_params(c, c, 3, c, true)
            + conv_params(2 * c, c, 1, 1, false)
            + bn(c)
            + conv_params(c, c, 3, c, false)
            + bn(c)
            + conv_params(c, c, 1, 1, false)
            + bn(c);
        total += blocks as u64 * block;
    }
    let last = *v.stage_channels.last().unwrap();
    let hc = last * v.head_expansion;
    total + conv_params(last, hc, 1, 1, false) + bn(hc) + hc as u64 + 1
}

/// Closed-form FLOPs (2 x MACs) of a FerretNet variant on one square input.
pub fn ferretnet_flops_formula(v: &FerretVariant, side: usize) -> u64 {
    let half = |s: usize| s.div_ceil(2);
    let mac = |cin: usize, cout: usize, k: usize, groups: usize, s: usize| {
        2 * (cout * (cin / groups) * k * k * s * s) as u64
    };
    let c1 = v.stage_channels[0];
    let mut s = half(side);
    let mut total = mac(3, c1, 3, 1, s);
    s = half(s);
    total += mac(c1, c1, 3, 1, s);
    for (i, (&c, &blocks)) in v.stage_channels.iter().zip(&v.stage_blocks).enumerate() {
        if i > 0 {
            s = half(s);
            total += mac(v.stage_channels[i - 1], c, 3, 1, s);
        }
        let block = 2 * mac(c, c, 3, c, s) + mac(2 * c, c, 1, 1, s) + mac(c, c, 3, c, s) + mac(c, c, 1, 1, s);
        total += blocks as u64 * block;
    }
    let last = *v.stage_channels.last().unwrap();
    let hc = last * v.head_expansion;
    total + mac(last, hc, 1, 1, s) + 2 * hc as u64
}
