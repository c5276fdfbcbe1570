//! 2-D convolution (cross-correlation) with stride, zero padding, dilation
//! and contiguous channel groups.
//!
//! Depthwise convolutions (one input and one output channel per group) run
//! as direct loops over the taps; everything else goes through an im2col
//! patch matrix and a GEMM per group.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{kaiming_uniform, missing_cache, Layer};
use super::tensor::{Mode, Param, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, no padding, no dilation, one group.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        Self::new(channels, channels, kernel).groups(channels)
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = p;
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.in_channels,
            self.out_channels,
            self.kernel.0,
            self.kernel.1,
            self.stride,
            self.dilation,
            self.groups,
        ];
        if positive.contains(&0) {
            return Err(Error::Config(format!("conv spec has a zero field: {self:?}")));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(Error::Config(format!(
                "groups {} must divide channels {} -> {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn weight_len(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    fn out_dim(&self, input: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = input + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }

    /// `(H', W')` for an `(H, W)` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match (self.out_dim(h, self.kernel.0), self.out_dim(w, self.kernel.1)) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::InputTooSmall(format!(
                "{h}x{w} input is smaller than the {}x{} dilated kernel",
                self.dilation * (self.kernel.0 - 1) + 1,
                self.dilation * (self.kernel.1 - 1) + 1
            ))),
        }
    }
}

/// Output positions `o` in `[lo, hi)` for which `o * stride + offset` is a
/// valid index into an axis of length `len`.
#[inline]
fn valid_range(out_len: usize, len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let last = len as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    let lo = (lo as usize).min(out_len);
    let hi = (hi as usize).min(out_len);
    (lo, hi.max(lo))
}

struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

pub struct Conv2d<T> {
    spec: ConvSpec,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: &str, spec: ConvSpec, bias: bool, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let shape = spec.weight_shape();
        let fan_in = shape[1] * shape[2] * shape[3];
        Ok(Self {
            spec,
            weight: Param::new(format!("{name}.weight"), kaiming_uniform(&shape, fan_in, rng)),
            bias: bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]))),
            input: None,
        })
    }

    /// Builds a layer around explicit weights, validating their shape.
    pub fn from_weights(spec: ConvSpec, weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        if weight.shape() != spec.weight_shape() {
            return Err(Error::Shape(format!(
                "weights {:?} do not match {:?}",
                weight.shape(),
                spec.weight_shape()
            )));
        }
        if let Some(b) = &bias {
            if b.shape() != [spec.out_channels] {
                return Err(Error::Shape(format!("bias {:?}", b.shape())));
            }
        }
        Ok(Self {
            spec,
            weight: Param::new("weight", weight),
            bias: bias.map(|b| Param::new("bias", b)),
            input: None,
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        let (oh, ow) = self.spec.output_hw(h, w)?;
        Ok(Geometry { n, h, w, oh, ow })
    }

    fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let cout = self.spec.out_channels;
        let plane = g.oh * g.ow;
        let mut out = vec![T::zero(); g.n * cout * plane];
        if let Some(b) = &self.bias {
            for (chunk, &bv) in out
                .chunks_exact_mut(plane)
                .zip(b.value.data().iter().cycle())
            {
                chunk.fill(bv);
            }
        }
        if self.spec.is_depthwise() {
            self.depthwise_forward(x.data(), &g, &mut out);
        } else {
            self.gemm_forward(x.data(), &g, &mut out);
        }
        Tensor::new(&[g.n, cout, g.oh, g.ow], out)
    }

    fn is_pointwise(&self) -> bool {
        let s = &self.spec;
        s.kernel == (1, 1) && s.stride == 1 && s.padding == 0
    }

    /// Patch matrix for one sample and group: rows `(ci, ky, kx)`, columns
    /// output positions.
    fn im2col(&self, x: &[T], g: &Geometry, sample: usize, group: usize, cols: &mut [T]) {
        let s = &self.spec;
        let cin_g = s.in_channels / s.groups;
        let (kh, kw) = s.kernel;
        let plane = g.oh * g.ow;
        for ci in 0..cin_g {
            let c = group * cin_g + ci;
            let src = &x[(sample * s.in_channels + c) * g.h * g.w..][..g.h * g.w];
            for ky in 0..kh {
                let oy_off = (ky * s.dilation) as isize - s.padding as isize;
                let (ylo, yhi) = valid_range(g.oh, g.h, s.stride, oy_off);
                for kx in 0..kw {
                    let ox_off = (kx * s.dilation) as isize - s.padding as isize;
                    let (xlo, xhi) = valid_range(g.ow, g.w, s.stride, ox_off);
                    let row = &mut cols[((ci * kh + ky) * kw + kx) * plane..][..plane];
                    row.fill(T::zero());
                    for oy in ylo..yhi {
                        let iy = (oy * s.stride) as isize + oy_off;
                        let src_row = &src[iy as usize * g.w..][..g.w];
                        let dst = &mut row[oy * g.ow..][..g.ow];
                        if s.stride == 1 {
                            let ix0 = (xlo as isize + ox_off) as usize;
                            dst[xlo..xhi].copy_from_slice(&src_row[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for ox in xlo..xhi {
                                dst[ox] = src_row[((ox * s.stride) as isize + ox_off) as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], g: &Geometry, sample: usize, group: usize, dx: &mut [T]) {
        let s = &self.spec;
        let cin_g = s.in_channels / s.groups;
        let (kh, kw) = s.kernel;
        let plane = g.oh * g.ow;
        for ci in 0..cin_g {
            let c = group * cin_g + ci;
            let dst = &mut dx[(sample * s.in_channels + c) * g.h * g.w..][..g.h * g.w];
            for ky in 0..kh {
                let oy_off = (ky * s.dilation) as isize - s.padding as isize;
                let (ylo, yhi) = valid_range(g.oh, g.h, s.stride, oy_off);
                for kx in 0..kw {
                    let ox_off = (kx * s.dilation) as isize - s.padding as isize;
                    let (xlo, xhi) = valid_range(g.ow, g.w, s.stride, ox_off);
                    let row = &cols[((ci * kh + ky) * kw + kx) * plane..][..plane];
                    for oy in ylo..yhi {
                        let iy = (oy * s.stride) as isize + oy_off;
                        let dst_row = &mut dst[iy as usize * g.w..][..g.w];
                        let src = &row[oy * g.ow..][..g.ow];
                        for ox in xlo..xhi {
                            dst_row[((ox * s.stride) as isize + ox_off) as usize] += src[ox];
                        }
                    }
                }
            }
        }
    }

    fn gemm_forward(&self, x: &[T], g: &Geometry, out: &mut [T]) {
        let s = &self.spec;
        let cin_g = s.in_channels / s.groups;
        let cout_g = s.out_channels / s.groups;
        let k = cin_g * s.kernel.0 * s.kernel.1;
        let plane = g.oh * g.ow;
        let w = self.weight.value.data();
        let mut cols = if self.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); k * plane]
        };
        for n in 0..g.n {
            for grp in 0..s.groups {
                let b: &[T] = if self.is_pointwise() {
                    &x[(n * s.in_channels + grp * cin_g) * plane..][..k * plane]
                } else {
                    self.im2col(x, g, n, grp, &mut cols);
                    &cols
                };
                let c = &mut out[(n * s.out_channels + grp * cout_g) * plane..][..cout_g * plane];
                T::gemm(
                    cout_g,
                    k,
                    plane,
                    T::one(),
                    &w[grp * cout_g * k..][..cout_g * k],
                    k as isize,
                    1,
                    b,
                    plane as isize,
                    1,
                    T::one(),
                    c,
                    plane as isize,
                    1,
                );
            }
        }
    }

    fn depthwise_forward(&self, x: &[T], g: &Geometry, out: &mut [T]) {
        let s = &self.spec;
        let (kh, kw) = s.kernel;
        let w = self.weight.value.data();
        let channels = s.in_channels;
        for n in 0..g.n {
            for c in 0..channels {
                let src = &x[(n * channels + c) * g.h * g.w..][..g.h * g.w];
                let dst = &mut out[(n * channels + c) * g.oh * g.ow..][..g.oh * g.ow];
                let taps = &w[c * kh * kw..][..kh * kw];
                for ky in 0..kh {
                    let oy_off = (ky * s.dilation) as isize - s.padding as isize;
                    let (ylo, yhi) = valid_range(g.oh, g.h, s.stride, oy_off);
                    for kx in 0..kw {
                        let tap = taps[ky * kw + kx];
                        let ox_off = (kx * s.dilation) as isize - s.padding as isize;
                        let (xlo, xhi) = valid_range(g.ow, g.w, s.stride, ox_off);
                        for oy in ylo..yhi {
                            let iy = ((oy * s.stride) as isize + oy_off) as usize;
                            let src_row = &src[iy * g.w..][..g.w];
                            let dst_row = &mut dst[oy * g.ow..][..g.ow];
                            if s.stride == 1 {
                                let ix0 = (xlo as isize + ox_off) as usize;
                                for (d, &v) in dst_row[xlo..xhi]
                                    .iter_mut()
                                    .zip(&src_row[ix0..ix0 + (xhi - xlo)])
                                {
                                    *d += tap * v;
                                }
                            } else {
                                for ox in xlo..xhi {
                                    let ix = ((ox * s.stride) as isize + ox_off) as usize;
                                    dst_row[ox] += tap * src_row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn depthwise_backward(&mut self, x: &[T], gout: &[T], g: &Geometry, dx: &mut [T]) {
        let s = self.spec;
        let (kh, kw) = s.kernel;
        let channels = s.in_channels;
        let w = self.weight.value.data().to_vec();
        let dw = self.weight.grad.data_mut();
        for n in 0..g.n {
            for c in 0..channels {
                let src = &x[(n * channels + c) * g.h * g.w..][..g.h * g.w];
                let dsrc = &mut dx[(n * channels + c) * g.h * g.w..][..g.h * g.w];
                let go = &gout[(n * channels + c) * g.oh * g.ow..][..g.oh * g.ow];
                for ky in 0..kh {
                    let oy_off = (ky * s.dilation) as isize - s.padding as isize;
                    let (ylo, yhi) = valid_range(g.oh, g.h, s.stride, oy_off);
                    for kx in 0..kw {
                        let t = c * kh * kw + ky * kw + kx;
                        let tap = w[t];
                        let ox_off = (kx * s.dilation) as isize - s.padding as isize;
                        let (xlo, xhi) = valid_range(g.ow, g.w, s.stride, ox_off);
                        let mut acc = T::zero();
                        for oy in ylo..yhi {
                            let iy = ((oy * s.stride) as isize + oy_off) as usize;
                            let go_row = &go[oy * g.ow..][..g.ow];
                            if s.stride == 1 {
                                let ix0 = (xlo as isize + ox_off) as usize;
                                let src_row = &src[iy * g.w + ix0..][..xhi - xlo];
                                let dsrc_row = &mut dsrc[iy * g.w + ix0..][..xhi - xlo];
                                for ((&gv, &xv), d) in
                                    go_row[xlo..xhi].iter().zip(src_row).zip(dsrc_row)
                                {
                                    acc += gv * xv;
                                    *d += tap * gv;
                                }
                            } else {
                                for ox in xlo..xhi {
                                    let ix = ((ox * s.stride) as isize + ox_off) as usize;
                                    acc += go_row[ox] * src[iy * g.w + ix];
                                    dsrc[iy * g.w + ix] += tap * go_row[ox];
                                }
                            }
                        }
                        dw[t] += acc;
                    }
                }
            }
        }
    }

    fn gemm_backward(&mut self, x: &[T], gout: &[T], g: &Geometry, dx: &mut [T]) {
        let s = self.spec;
        let cin_g = s.in_channels / s.groups;
        let cout_g = s.out_channels / s.groups;
        let k = cin_g * s.kernel.0 * s.kernel.1;
        let plane = g.oh * g.ow;
        let pointwise = self.is_pointwise();
        let mut cols = vec![T::zero(); if pointwise { 0 } else { k * plane }];
        let mut dcols = vec![T::zero(); if pointwise { 0 } else { k * plane }];
        for n in 0..g.n {
            for grp in 0..s.groups {
                let go = &gout[(n * s.out_channels + grp * cout_g) * plane..][..cout_g * plane];
                let xin: &[T] = if pointwise {
                    &x[(n * s.in_channels + grp * cin_g) * plane..][..k * plane]
                } else {
                    self.im2col(x, g, n, grp, &mut cols);
                    &cols
                };
                // dW_g (cout_g x k) += dY_g (cout_g x P) * cols^T (P x k)
                T::gemm(
                    cout_g,
                    plane,
                    k,
                    T::one(),
                    go,
                    plane as isize,
                    1,
                    xin,
                    1,
                    plane as isize,
                    T::one(),
                    &mut self.weight.grad.data_mut()[grp * cout_g * k..][..cout_g * k],
                    k as isize,
                    1,
                );
                // dcols (k x P) = W_g^T (k x cout_g) * dY_g (cout_g x P)
                let wg = &self.weight.value.data()[grp * cout_g * k..][..cout_g * k];
                if pointwise {
                    let dst = &mut dx[(n * s.in_channels + grp * cin_g) * plane..][..k * plane];
                    T::gemm(
                        k,
                        cout_g,
                        plane,
                        T::one(),
                        wg,
                        1,
                        k as isize,
                        go,
                        plane as isize,
                        1,
                        T::one(),
                        dst,
                        plane as isize,
                        1,
                    );
                } else {
                    T::gemm(
                        k,
                        cout_g,
                        plane,
                        T::one(),
                        wg,
                        1,
                        k as isize,
                        go,
                        plane as isize,
                        1,
                        T::zero(),
                        &mut dcols,
                        plane as isize,
                        1,
                    );
                    self.col2im(&dcols, g, n, grp, dx);
                }
            }
        }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.compute(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.compute(x)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv2d"))?;
        let g = self.geometry(&x)?;
        if grad_out.shape() != [g.n, self.spec.out_channels, g.oh, g.ow] {
            return Err(Error::Shape(format!(
                "conv2d gradient {:?}, expected {:?}",
                grad_out.shape(),
                [g.n, self.spec.out_channels, g.oh, g.ow]
            )));
        }
        let plane = g.oh * g.ow;
        if let Some(b) = &mut self.bias {
            let cout = self.spec.out_channels;
            for (i, chunk) in grad_out.data().chunks_exact(plane).enumerate() {
                b.grad.data_mut()[i % cout] += chunk.iter().copied().sum::<T>();
            }
        }
        let mut dx = vec![T::zero(); x.len()];
        if self.spec.is_depthwise() {
            self.depthwise_backward(x.data(), grad_out.data(), &g, &mut dx);
        } else {
            self.gemm_backward(x.data(), grad_out.data(), &g, &mut dx);
        }
        let shape = x.shape().to_vec();
        self.input = Some(x);
        Tensor::new(&shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Direct quadruple-loop convolution, kept for verification.
pub fn conv2d_reference<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let (n, c, h, w) = x.dims4()?;
    if c != spec.in_channels || weight.shape() != spec.weight_shape() {
        return Err(Error::Shape("reference conv operands".into()));
    }
    let (oh, ow) = spec.output_hw(h, w)?;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let (kh, kw) = spec.kernel;
    let mut out = Vec::with_capacity(n * spec.out_channels * oh * ow);
    for b in 0..n {
        for co in 0..spec.out_channels {
            let grp = co / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(T::zero(), |t| t.data()[co]);
                    for ci in 0..cin_g {
                        let cin = grp * cin_g + ci;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * spec.stride + ky * spec.dilation) as isize
                                    - spec.padding as isize;
                                let ix = (ox * spec.stride + kx * spec.dilation) as isize
                                    - spec.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((b * c + cin) * h + iy as usize) * w + ix as usize];
                                let wv = weight.data()[((co * cin_g + ci) * kh + ky) * kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::new(&[n, spec.out_channels, oh, ow], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn valid_range_edges() {
        assert_eq!(valid_range(4, 4, 1, -1), (1, 4));
        assert_eq!(valid_range(4, 4, 1, 1), (0, 3));
        assert_eq!(valid_range(2, 4, 2, -1), (1, 2));
        assert_eq!(valid_range(3, 2, 1, 5), (0, 0));
    }

    #[test]
    fn output_size_formula() {
        let s = ConvSpec::new(3, 8, 3).stride(2).padding(1);
        assert_eq!(s.output_hw(256, 256).unwrap(), (128, 128));
        let d = ConvSpec::depthwise(4, 3).dilation(2).padding(2);
        assert_eq!(d.output_hw(7, 9).unwrap(), (7, 9));
        assert!(ConvSpec::new(1, 1, 5).output_hw(3, 3).is_err());
    }

    #[test]
    fn groups_must_divide() {
        assert!(ConvSpec::new(6, 4, 3).groups(4).validate().is_err());
        assert!(ConvSpec::new(6, 4, 3).groups(2).validate().is_ok());
        assert!(ConvSpec::new(6, 4, 0).validate().is_err());
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 1, 5, 6], &mut rng);
        let conv = Conv2d::from_weights(
            ConvSpec::new(1, 1, 1),
            Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(conv.infer(&x).unwrap(), x);
    }

    #[test]
    fn zero_depthwise_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[1, 4, 6, 6], &mut rng);
        let spec = ConvSpec::depthwise(4, 3).padding(1);
        let conv = Conv2d::from_weights(spec, Tensor::zeros(&spec.weight_shape()), None).unwrap();
        assert!(conv.infer(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_box_filter() {
        let x = Tensor::new(&[1, 1, 4, 4], (0..16).map(|v| v as f64 / 15.0).collect()).unwrap();
        let spec = ConvSpec::new(1, 1, 3).padding(1);
        let conv = Conv2d::from_weights(spec, Tensor::full(&[1, 1, 3, 3], 1.0), None).unwrap();
        let y = conv.infer(&x).unwrap();
        for oy in 0..4i32 {
            for ox in 0..4i32 {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (iy, ix) = (oy + dy, ox + dx);
                        if (0..4).contains(&iy) && (0..4).contains(&ix) {
                            s += (iy * 4 + ix) as f64 / 15.0;
                        }
                    }
                }
                let got = y.data()[(oy * 4 + ox) as usize];
                assert!((got - s).abs() < 1e-12, "({oy},{ox}) {got} vs {s}");
            }
        }
    }

    #[test]
    fn matches_reference_across_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let configs = [
            ConvSpec::new(3, 5, 3).stride(2).padding(1),
            ConvSpec::new(4, 6, 3).groups(2).padding(2).dilation(2),
            ConvSpec::depthwise(3, 3).padding(1).stride(2),
            ConvSpec::depthwise(3, 3).padding(2).dilation(2),
            ConvSpec::new(4, 2, 1),
            ConvSpec::new(4, 2, 1).stride(2),
            ConvSpec::new(2, 3, 2),
        ];
        for spec in configs {
            let x = random(&[2, spec.in_channels, 7, 6], &mut rng);
            let w = random(&spec.weight_shape(), &mut rng);
            let b = random(&[spec.out_channels], &mut rng);
            let conv = Conv2d::from_weights(spec, w.clone(), Some(b.clone())).unwrap();
            let got = conv.infer(&x).unwrap();
            let want = conv2d_reference(&x, &w, Some(&b), &spec).unwrap();
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "{spec:?}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let conv = Conv2d::<f64>::new("c", ConvSpec::new(3, 2, 3), false, &mut rng).unwrap();
        assert!(conv.infer(&Tensor::zeros(&[1, 2, 5, 5])).is_err());
        assert!(conv.infer(&Tensor::zeros(&[3, 5, 5])).is_err());
    }
}
