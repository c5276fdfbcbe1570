use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Mode, Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// A differentiable building block.
///
/// `forward` caches whatever `backward` needs; `infer` is the cache-free
/// evaluation-mode path and may be called concurrently through a shared
/// reference. `backward` accumulates parameter gradients and returns the
/// gradient with respect to the most recent `forward` input.
pub trait Layer<T: Scalar>: Send + Sync {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Non-trainable state that must survive a checkpoint round trip.
    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        Vec::new()
    }

    /// Resets any internal randomness (dropout masks).
    fn reseed(&mut self, _seed: u64) {}

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

pub(crate) fn missing_cache(layer: &str) -> Error {
    Error::Shape(format!("{layer}: backward called before forward"))
}

/// Kaiming-uniform fan-in initialization, gain √2.
pub fn kaiming_uniform<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).expect("init shape")
}

#[derive(Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(|v| v.max(T::zero())))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache("relu"))?;
        if mask.len() != g.len() {
            return Err(Error::Shape("relu: gradient size".into()));
        }
        let data = g
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v } else { T::zero() })
            .collect();
        Tensor::new(g.shape(), data)
    }
}

/// `(N, C, H, W) -> (N, C)` spatial mean.
#[derive(Debug, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = Layer::<T>::infer(self, x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let inv = T::one() / T::from_usize(hw).unwrap();
        let data = x
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        Tensor::new(&[n, c], data)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| missing_cache("avgpool"))?;
        let hw = shape[2] * shape[3];
        if g.len() * hw != shape.iter().product::<usize>() {
            return Err(Error::Shape("avgpool: gradient size".into()));
        }
        let inv = T::one() / T::from_usize(hw).unwrap();
        let mut data = Vec::with_capacity(g.len() * hw);
        for &v in g.data() {
            data.extend(std::iter::repeat_n(v * inv, hw));
        }
        Tensor::new(shape, data)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` during training.
#[derive(Debug)]
pub struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<bool>>,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
        }
        Ok(Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl<T: Scalar> Layer<T> for Dropout {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = Some(vec![true; x.len()]);
            return Ok(x.clone());
        }
        let p = self.p;
        let mask: Vec<bool> = (0..x.len()).map(|_| self.rng.random::<f64>() >= p).collect();
        let scale = T::lit(1.0 / (1.0 - p));
        let data = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &keep)| if keep { v * scale } else { T::zero() })
            .collect();
        self.mask = Some(mask);
        Tensor::new(x.shape(), data)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.clone())
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache("dropout"))?;
        let all_kept = mask.iter().all(|&m| m);
        if all_kept {
            return Ok(g.clone());
        }
        let scale = T::lit(1.0 / (1.0 - self.p));
        let data = g
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &keep)| if keep { v * scale } else { T::zero() })
            .collect();
        Tensor::new(g.shape(), data)
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

/// Fully connected layer on `(N, in)` inputs; weight shape `(out, in)`.
#[derive(Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                kaiming_uniform(&[out_features, in_features], in_features, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_features])),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.value.shape()[0], self.weight.value.shape()[1])
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (out_f, in_f) = self.dims();
        if x.shape().len() != 2 || x.shape()[1] != in_f {
            return Err(Error::Shape(format!(
                "linear expects (N, {in_f}), got {:?}",
                x.shape()
            )));
        }
        let n = x.shape()[0];
        let mut out = Vec::with_capacity(n * out_f);
        for _ in 0..n {
            out.extend_from_slice(self.bias.value.data());
        }
        // Y (n x out) += X (n x in) * W^T (in x out)
        T::gemm(
            n,
            in_f,
            out_f,
            T::one(),
            x.data(),
            in_f as isize,
            1,
            self.weight.value.data(),
            1,
            in_f as isize,
            T::one(),
            &mut out,
            out_f as isize,
            1,
        );
        Tensor::new(&[n, out_f], out)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("linear"))?;
        let (out_f, in_f) = self.dims();
        let n = x.shape()[0];
        if g.shape() != [n, out_f] {
            return Err(Error::Shape("linear: gradient shape".into()));
        }
        // dW (out x in) += G^T (out x n) * X (n x in)
        T::gemm(
            out_f,
            n,
            in_f,
            T::one(),
            g.data(),
            1,
            out_f as isize,
            x.data(),
            in_f as isize,
            1,
            T::one(),
            self.weight.grad.data_mut(),
            in_f as isize,
            1,
        );
        for row in g.data().chunks_exact(out_f) {
            for (b, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += v;
            }
        }
        let mut dx = vec![T::zero(); n * in_f];
        // dX (n x in) = G (n x out) * W (out x in)
        T::gemm(
            n,
            out_f,
            in_f,
            T::one(),
            g.data(),
            out_f as isize,
            1,
            self.weight.value.data(),
            in_f as isize,
            1,
            T::zero(),
            &mut dx,
            in_f as isize,
            1,
        );
        Tensor::new(&[n, in_f], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) -> &mut Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn with(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.push(layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = g.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    fn reseed(&mut self, seed: u64) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.reseed(seed.wrapping_add(i as u64));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_backward_masks() {
        let mut r = Relu::new();
        let x = Tensor::<f64>::new(&[4], vec![-1.0, 0.5, 0.0, 2.0]).unwrap();
        assert_eq!(r.forward(&x, Mode::Train).unwrap().data(), &[0.0, 0.5, 0.0, 2.0]);
        let g = r.backward(&Tensor::full(&[4], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut d = Dropout::new(0.5, 1).unwrap();
        let x = Tensor::<f32>::full(&[3, 4], 2.0);
        assert_eq!(Layer::<f32>::forward(&mut d, &x, Mode::Eval).unwrap(), x);
        assert!(Dropout::new(1.0, 0).is_err());
    }

    #[test]
    fn dropout_keep_rate() {
        let p = 0.2;
        let mut d = Dropout::new(p, 42).unwrap();
        let n = 1_000_000;
        let x = Tensor::<f32>::full(&[n], 1.0);
        let y = Layer::<f32>::forward(&mut d, &x, Mode::Train).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((kept - n as f64 * (1.0 - p)).abs() < 3.0 * sigma, "kept {kept}");
        let scale = 1.0 / (1.0 - p as f32);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == scale));
    }

    #[test]
    fn pool_averages_planes() {
        let x = Tensor::<f64>::new(&[1, 2, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let y = GlobalAvgPool::new().infer(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 6.0]);
    }

    #[test]
    fn linear_known_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Linear::<f64>::new("fc", 2, 1, &mut rng);
        l.weight.value = Tensor::new(&[1, 2], vec![2.0, -1.0]).unwrap();
        l.bias.value = Tensor::new(&[1], vec![0.5]).unwrap();
        let x = Tensor::new(&[2, 2], vec![1.0, 1.0, 3.0, 4.0]).unwrap();
        let y = l.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data(), &[1.5, 2.5]);
        let dx = l.backward(&Tensor::full(&[2, 1], 1.0)).unwrap();
        assert_eq!(dx.data(), &[2.0, -1.0, 2.0, -1.0]);
        assert_eq!(l.weight.grad.data(), &[4.0, 5.0]);
        assert_eq!(l.bias.grad.data(), &[2.0]);
    }
}
