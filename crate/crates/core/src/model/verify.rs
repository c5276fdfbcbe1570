//! The gradient verification suite: every layer type plus a full FerretNet-S,
//! checked in double precision against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ferretnet::{FerretBlock, FerretConfig, FerretNet};
use super::variant::FerretVariant;
use crate::error::Result;
use crate::nn::gradcheck::{finite_diff_gradcheck, nudge_off_zero, quadratic_loss, GradCheckOptions};
use crate::nn::{
    bce_with_logits_loss, BatchNorm2d, Conv2d, ConvSpec, Dropout, GlobalAvgPool, Layer, Linear, Mode, Relu,
    Sequential, Tensor,
};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub coordinates: usize,
    pub worst: String,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape and data agree")
}

fn check(
    name: &str,
    layer: &mut dyn Layer<f64>,
    x: &Tensor<f64>,
    opts: GradCheckOptions,
    tolerance: f64,
    out: &mut Vec<CheckOutcome>,
) -> Result<()> {
    let loss = quadratic_loss(0xabc);
    let r = finite_diff_gradcheck(layer, x, &loss, opts)?;
    log::info!("gradcheck {name}: {:.3e} over {} coordinates", r.max_rel_error, r.coordinates);
    out.push(CheckOutcome {
        name: name.into(),
        max_rel_error: r.max_rel_error,
        tolerance,
        coordinates: r.coordinates,
        worst: r.worst,
    });
    Ok(())
}

/// Runs each layer check (tolerance 1e-4) and the full-model check
/// (tolerance 1e-3). With `sample_model` the full model checks a random
/// subset of coordinates per tensor instead of all of them.
pub fn gradcheck_suite(seed: u64, sample_model: Option<usize>) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let opts = GradCheckOptions {
        h: 1e-4,
        seed,
        ..GradCheckOptions::default()
    };
    let tol = LAYER_TOLERANCE;

    let convs = [
        ("conv3x3", ConvSpec::new(3, 4, 3).padding(1), true),
        ("conv1x1", ConvSpec::new(4, 5, 1), false),
        (
            "conv_grouped_strided_dilated",
            ConvSpec::new(4, 6, 3).groups(2).stride(2).dilation(2).padding(2),
            true,
        ),
        ("conv_depthwise_dilated", ConvSpec::depthwise(3, 3).dilation(2).padding(2), true),
        ("conv_depthwise_strided", ConvSpec::depthwise(4, 3).stride(2).padding(1), false),
    ];
    for (name, spec, bias) in convs {
        let mut conv = Conv2d::<f64>::new(name, spec, bias, &mut rng)?;
        let x = random(&[2, spec.in_channels, 7, 6], &mut rng);
        check(name, &mut conv, &x, opts, tol, &mut out)?;
    }

    let mut bn = BatchNorm2d::<f64>::new("bn", 3);
    bn.gamma.value = random(&[3], &mut rng);
    bn.beta.value = random(&[3], &mut rng);
    let x = random(&[3, 3, 4, 4], &mut rng);
    check("batchnorm_train", &mut bn, &x, opts, tol, &mut out)?;
    bn.running_mean = random(&[3], &mut rng);
    bn.running_var = random(&[3], &mut rng).map(|v| v.abs() + 0.5);
    check(
        "batchnorm_eval",
        &mut bn,
        &x,
        GradCheckOptions { mode: Mode::Eval, ..opts },
        tol,
        &mut out,
    )?;

    let x = nudge_off_zero(&random(&[2, 3, 4, 4], &mut rng), 0.05);
    check("relu", &mut Relu::new(), &x, opts, tol, &mut out)?;
    check("global_avg_pool", &mut GlobalAvgPool::new(), &x, opts, tol, &mut out)?;
    let mut drop = Dropout::new(0.3, seed)?;
    check("dropout", &mut drop, &random(&[4, 6], &mut rng), opts, tol, &mut out)?;
    let mut fc = Linear::<f64>::new("fc", 6, 3, &mut rng);
    check("linear", &mut fc, &random(&[4, 6], &mut rng), opts, tol, &mut out)?;

    let mut head = Sequential::<f64>::new()
        .with(GlobalAvgPool::new())
        .with(Linear::new("fc", 3, 2, &mut rng));
    check("sequential", &mut head, &random(&[2, 3, 4, 4], &mut rng), opts, tol, &mut out)?;

    let mut block = FerretBlock::<f64>::new("block", 4, &mut rng)?;
    let x = random(&[2, 4, 6, 6], &mut rng).map(|v| v + 2.0);
    check(
        "ferret_block",
        &mut block,
        &x,
        GradCheckOptions { h: 1e-5, ..opts },
        tol,
        &mut out,
    )?;

    let mut model = FerretNet::<f64>::new(FerretConfig::new(FerretVariant::small()), seed)?;
    let x = random(&[2, 3, 32, 32], &mut rng);
    let targets = [0.0, 1.0];
    let bce = |y: &Tensor<f64>| bce_with_logits_loss(y, &targets);
    let r = finite_diff_gradcheck(
        &mut model,
        &x,
        &bce,
        GradCheckOptions {
            h: 1e-5,
            max_per_tensor: sample_model,
            ..opts
        },
    )?;
    log::info!("gradcheck ferretnet_s: {:.3e} over {} coordinates", r.max_rel_error, r.coordinates);
    out.push(CheckOutcome {
        name: "ferretnet_s".into(),
        max_rel_error: r.max_rel_error,
        tolerance: MODEL_TOLERANCE,
        coordinates: r.coordinates,
        worst: r.worst,
    });
    Ok(out)
}
