use super::layer::{missing_cache, Layer};
use super::tensor::{Mode, Param, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalization over `(N, H, W)`.
///
/// Training mode normalizes with the biased batch variance and folds the
/// unbiased estimate into the running variance; evaluation mode uses the
/// running statistics.
pub struct BatchNorm2d<T> {
    name: String,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: T,
    pub eps: T,
    cache: Option<BnCache<T>>,
}

struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: T::lit(BN_MOMENTUM),
            eps: T::lit(BN_EPS),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "{}: {} channels expected, got {c}",
                self.name,
                self.channels()
            )));
        }
        Ok((n, c, h * w))
    }

    /// Running-statistics normalization; returns `(y, x_hat, inv_std)`.
    fn normalize_eval(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        let (n, c, hw) = self.check(x)?;
        let inv_std: Vec<T> = self
            .running_var
            .data()
            .iter()
            .map(|&v| T::one() / (v + self.eps).sqrt())
            .collect();
        let mut out = x.data().to_vec();
        let mut x_hat = x.data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                let mean = self.running_mean.data()[ch];
                let gamma = self.gamma.value.data()[ch];
                let beta = self.beta.value.data()[ch];
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x_hat[i] - mean) * inv_std[ch];
                    x_hat[i] = xh;
                    out[i] = gamma * xh + beta;
                }
            }
        }
        Ok((Tensor::new(x.shape(), out)?, x_hat, inv_std))
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval {
            let (y, x_hat, inv_std) = self.normalize_eval(x)?;
            self.cache = Some(BnCache {
                x_hat,
                inv_std,
                shape: x.shape().to_vec(),
                batch_stats: false,
            });
            return Ok(y);
        }
        let (n, c, hw) = self.check(x)?;
        let count = n * hw;
        let m = T::from_usize(count).unwrap();
        let data = x.data();
        let mut x_hat = vec![T::zero(); data.len()];
        let mut out = vec![T::zero(); data.len()];
        let mut inv_stds = Vec::with_capacity(c);
        for ch in 0..c {
            let mut sum = T::zero();
            for b in 0..n {
                sum += data[(b * c + ch) * hw..][..hw].iter().copied().sum::<T>();
            }
            let mean = sum / m;
            let mut sq = T::zero();
            for b in 0..n {
                for &v in &data[(b * c + ch) * hw..][..hw] {
                    let d = v - mean;
                    sq += d * d;
                }
            }
            let var = sq / m;
            let inv_std = T::one() / (var + self.eps).sqrt();
            let gamma = self.gamma.value.data()[ch];
            let beta = self.beta.value.data()[ch];
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (data[i] - mean) * inv_std;
                    x_hat[i] = xh;
                    out[i] = gamma * xh + beta;
                }
            }
            let unbiased = if count > 1 {
                sq / T::from_usize(count - 1).unwrap()
            } else {
                var
            };
            let mom = self.momentum;
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (T::one() - mom) * *rm + mom * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (T::one() - mom) * *rv + mom * unbiased;
            inv_stds.push(inv_std);
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std: inv_stds,
            shape: x.shape().to_vec(),
            batch_stats: true,
        });
        Tensor::new(x.shape(), out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.normalize_eval(x)?.0)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm"))?;
        if g.shape() != &cache.shape[..] {
            return Err(Error::Shape(format!("{}: gradient shape", self.name)));
        }
        let shape = &cache.shape;
        let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
        let m = T::from_usize(n * hw).unwrap();
        let gd = g.data();
        let x_hat = &cache.x_hat;
        let mut dx = vec![T::zero(); gd.len()];
        for ch in 0..c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    sum_g += gd[i];
                    sum_gx += gd[i] * x_hat[i];
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_gx;
            self.beta.grad.data_mut()[ch] += sum_g;
            let scale = self.gamma.value.data()[ch] * cache.inv_std[ch];
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    dx[i] = if cache.batch_stats {
                        scale / m * (m * gd[i] - sum_g - x_hat[i] * sum_gx)
                    } else {
                        scale * gd[i]
                    };
                }
            }
        }
        Tensor::new(shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            (format!("{}.running_mean", self.name), &self.running_mean),
            (format!("{}.running_var", self.name), &self.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            (format!("{}.running_mean", self.name), &mut self.running_mean),
            (format!("{}.running_var", self.name), &mut self.running_var),
        ]
    }
}
