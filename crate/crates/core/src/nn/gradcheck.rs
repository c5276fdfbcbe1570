//! Central-difference gradient verification.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::Layer;
use super::tensor::{Mode, Tensor};
use crate::error::{Error, Result};

/// Loss used to drive a check: returns `(L, dL/dy)`.
pub type LossFn<'a> = &'a dyn Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)>;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|)` seen.
    pub max_rel_error: f64,
    /// Which coordinate produced it.
    pub worst: String,
    pub coordinates: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub mode: Mode,
    /// Check at most this many coordinates per tensor (all when `None`).
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            mode: Mode::Train,
            max_per_tensor: None,
            seed: 0x5eed,
        }
    }
}

/// `0.5 * Σ (y - r)²` against a fixed pseudo-random target `r`.
pub fn quadratic_loss(seed: u64) -> impl Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
    move |y: &Tensor<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut loss = 0.0;
        let grad: Vec<f64> = y
            .data()
            .iter()
            .map(|&v| {
                let d = v - rng.random_range(-1.0..1.0);
                loss += 0.5 * d * d;
                d
            })
            .collect();
        Ok((loss, Tensor::new(y.shape(), grad)?))
    }
}

fn coordinates(len: usize, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cap {
        Some(k) if k < len => {
            let mut idx = sample(rng, len, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}

fn evaluate(
    layer: &mut dyn Layer<f64>,
    x: &Tensor<f64>,
    opts: &GradCheckOptions,
    loss: LossFn<'_>,
) -> Result<f64> {
    layer.reseed(opts.seed);
    let y = layer.forward(x, opts.mode)?;
    let (l, _) = loss(&y)?;
    if !l.is_finite() {
        return Err(Error::Shape("non-finite loss during gradient check".into()));
    }
    Ok(l)
}

/// Errors above this trigger a second difference at `h / 100`.
const RETRY_ABOVE: f64 = 1e-6;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Central difference of `f` around 0, kept from the step that agrees best
/// with `analytic`. A step that straddles a ReLU kink disagrees at `h` but
/// not at `h / 100`; a wrong gradient disagrees at both.
fn numeric(analytic: f64, h: f64, f: &mut dyn FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut diff = |h: f64| -> Result<f64> { Ok((f(h)? - f(-h)?) / (2.0 * h)) };
    let coarse = diff(h)?;
    if rel_error(analytic, coarse) <= RETRY_ABOVE {
        return Ok(coarse);
    }
    let fine = diff(h / 100.0)?;
    Ok(if rel_error(analytic, fine) < rel_error(analytic, coarse) { fine } else { coarse })
}

/// Compares backpropagated gradients of every parameter and of the input
/// against `(f(x + h) - f(x - h)) / 2h`, refined near kinks.
pub fn finite_diff_gradcheck(
    layer: &mut dyn Layer<f64>,
    input: &Tensor<f64>,
    loss: LossFn<'_>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    layer.zero_grad();
    layer.reseed(opts.seed);
    let y = layer.forward(input, opts.mode)?;
    let (_, dy) = loss(&y)?;
    let dx = layer.backward(&dy)?;
    let analytic: Vec<(String, Vec<f64>)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();
    if analytic
        .iter()
        .flat_map(|(_, g)| g)
        .chain(dx.data())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Shape("non-finite analytic gradient".into()));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        coordinates: 0,
    };
    let mut record = |name: &str, idx: usize, a: f64, num: f64| {
        let err = rel_error(a, num);
        report.coordinates += 1;
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst = format!("{name}[{idx}]: analytic {a:e}, numeric {num:e}");
        }
    };

    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for idx in coordinates(grads.len(), opts.max_per_tensor, &mut rng) {
            let orig = layer.params_mut()[pi].value.data()[idx];
            let num = numeric(grads[idx], opts.h, &mut |d| {
                layer.params_mut()[pi].value.data_mut()[idx] = orig + d;
                let l = evaluate(layer, input, &opts, loss);
                layer.params_mut()[pi].value.data_mut()[idx] = orig;
                l
            })?;
            record(name, idx, grads[idx], num);
        }
    }

    let mut x = input.clone();
    for idx in coordinates(x.len(), opts.max_per_tensor, &mut rng) {
        let orig = x.data()[idx];
        let num = numeric(dx.data()[idx], opts.h, &mut |d| {
            x.data_mut()[idx] = orig + d;
            let l = evaluate(layer, &x, &opts, loss);
            x.data_mut()[idx] = orig;
            l
        })?;
        record("input", idx, dx.data()[idx], num);
    }
    Ok(report)
}

/// Pushes values within `margin` of zero away from it so that ReLU kinks
/// stay out of reach of the finite-difference step.
pub fn nudge_off_zero(t: &Tensor<f64>, margin: f64) -> Tensor<f64> {
    t.map(|v| {
        if v.abs() < margin {
            if v < 0.0 {
                v - margin
            } else {
                v + margin
            }
        } else {
            v
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{GlobalAvgPool, Linear, Relu, Sequential};

    #[test]
    fn linear_layer_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Linear::<f64>::new("fc", 5, 3, &mut rng);
        let x = Tensor::new(&[4, 5], (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let loss = quadratic_loss(7);
        let r = finite_diff_gradcheck(&mut layer, &x, &loss, GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.coordinates, 15 + 3 + 20);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        struct Broken;
        impl Layer<f64> for Broken {
            fn forward(&mut self, x: &Tensor<f64>, _: Mode) -> Result<Tensor<f64>> {
                Ok(x.map(|v| v * v))
            }
            fn infer(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
                Ok(x.map(|v| v * v))
            }
            fn backward(&mut self, g: &Tensor<f64>) -> Result<Tensor<f64>> {
                Ok(g.clone())
            }
        }
        let x = Tensor::new(&[3], vec![0.5, 1.5, -2.0]).unwrap();
        let loss = quadratic_loss(1);
        let r = finite_diff_gradcheck(&mut Broken, &x, &loss, GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn relu_pool_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Sequential::new()
            .with(Relu::new())
            .with(GlobalAvgPool::new())
            .with(Linear::<f64>::new("fc", 3, 2, &mut rng));
        let x = Tensor::new(
            &[2, 3, 4, 4],
            (0..96).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let x = nudge_off_zero(&x, 0.01);
        let loss = quadratic_loss(3);
        let r = finite_diff_gradcheck(&mut net, &x, &loss, GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
