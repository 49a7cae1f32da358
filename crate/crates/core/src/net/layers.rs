//! Forward and backward kernels for each layer kind. Activations are laid
//! out `[batch, channels, height, width]` or `[batch, features]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{Real, Tensor};

/// Same-padded, stride-1 convolution stored as a `[out, in * k * k]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv<T> {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv {
            in_channels,
            out_channels,
            kernel,
            weight: he_normal(out_channels * fan_in, fan_in, rng),
            bias: vec![T::zero(); out_channels],
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, c, h, w) = dims4(x);
        debug_assert_eq!(c, self.in_channels);
        let hw = h * w;
        let mut out = Tensor::zeros(&[b, self.out_channels, h, w]);
        let mut cols = vec![T::zero(); self.patch_len() * hw];
        for i in 0..b {
            im2col(x.item(i), c, h, w, self.kernel, &mut cols);
            let y = &mut out.data_mut()[i * self.out_channels * hw..(i + 1) * self.out_channels * hw];
            for (o, row) in y.chunks_mut(hw).enumerate() {
                row.fill(self.bias[o]);
            }
            T::gemm(
                self.out_channels,
                self.patch_len(),
                hw,
                T::one(),
                &self.weight,
                self.patch_len() as isize,
                1,
                &cols,
                hw as isize,
                1,
                T::one(),
                y,
                hw as isize,
                1,
            );
        }
        out
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        dweight: &mut [T],
        dbias: &mut [T],
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        let (b, c, h, w) = dims4(x);
        let hw = h * w;
        let plen = self.patch_len();
        let mut cols = vec![T::zero(); plen * hw];
        let mut dcols = vec![T::zero(); plen * hw];
        let mut dx = want_dx.then(|| Tensor::zeros(x.shape()));
        for i in 0..b {
            let g = dy.item(i);
            for (o, row) in g.chunks(hw).enumerate() {
                let mut s = T::zero();
                for &v in row {
                    s += v;
                }
                dbias[o] += s;
            }
            im2col(x.item(i), c, h, w, self.kernel, &mut cols);
            // dW += dY (out x hw) * cols^T (hw x plen)
            T::gemm(
                self.out_channels,
                hw,
                plen,
                T::one(),
                g,
                hw as isize,
                1,
                &cols,
                1,
                hw as isize,
                T::one(),
                dweight,
                plen as isize,
                1,
            );
            if let Some(dx) = dx.as_mut() {
                // dcols = W^T (plen x out) * dY (out x hw)
                T::gemm(
                    plen,
                    self.out_channels,
                    hw,
                    T::one(),
                    &self.weight,
                    1,
                    plen as isize,
                    g,
                    hw as isize,
                    1,
                    T::zero(),
                    &mut dcols,
                    hw as isize,
                    1,
                );
                let n = c * hw;
                col2im(&dcols, c, h, w, self.kernel, &mut dx.data_mut()[i * n..(i + 1) * n]);
            }
        }
        dx
    }
}

fn dims4<T: Real>(x: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = x.shape();
    (s[0], s[1], s[2], s[3])
}

/// Unfolds `k x k` same-padded patches into a `[c * k * k, h * w]` matrix.
fn im2col<T: Real>(img: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut row = 0;
    for ci in 0..c {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            let oy = ky as isize - pad;
            for kx in 0..k {
                let ox = kx as isize - pad;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let x0 = (-ox).max(0) as usize;
                let x1 = (w as isize - ox).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + oy;
                    let line = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    line[..x0].fill(T::zero());
                    line[x1..].fill(T::zero());
                    let sx0 = (x0 as isize + ox) as usize;
                    line[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, img: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut row = 0;
    for ci in 0..c {
        for ky in 0..k {
            let oy = ky as isize - pad;
            for kx in 0..k {
                let ox = kx as isize - pad;
                let src = &cols[row * hw..(row + 1) * hw];
                let x0 = (-ox).max(0) as usize;
                let x1 = (w as isize - ox).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + oy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let dst_off = ci * hw + sy as usize * w;
                    let sx0 = (x0 as isize + ox) as usize;
                    let dst = &mut img[dst_off + sx0..dst_off + sx0 + (x1 - x0)];
                    for (d, &s) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Fully connected layer, weight stored `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            inputs,
            outputs,
            weight: he_normal(inputs * outputs, inputs, rng),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let b = x.batch();
        debug_assert_eq!(x.item_len(), self.inputs);
        let mut y = Tensor::zeros(&[b, self.outputs]);
        for row in y.data_mut().chunks_mut(self.outputs) {
            row.copy_from_slice(&self.bias);
        }
        T::gemm(
            b,
            self.inputs,
            self.outputs,
            T::one(),
            x.data(),
            self.inputs as isize,
            1,
            &self.weight,
            1,
            self.inputs as isize,
            T::one(),
            y.data_mut(),
            self.outputs as isize,
            1,
        );
        y
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        dweight: &mut [T],
        dbias: &mut [T],
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        let b = x.batch();
        for row in dy.data().chunks(self.outputs) {
            for (d, &g) in dbias.iter_mut().zip(row) {
                *d += g;
            }
        }
        // dW += dY^T (out x b) * X (b x in)
        T::gemm(
            self.outputs,
            b,
            self.inputs,
            T::one(),
            dy.data(),
            1,
            self.outputs as isize,
            x.data(),
            self.inputs as isize,
            1,
            T::one(),
            dweight,
            self.inputs as isize,
            1,
        );
        want_dx.then(|| {
            let mut dx = Tensor::zeros(x.shape());
            T::gemm(
                b,
                self.outputs,
                self.inputs,
                T::one(),
                dy.data(),
                self.outputs as isize,
                1,
                &self.weight,
                self.inputs as isize,
                1,
                T::zero(),
                dx.data_mut(),
                self.inputs as isize,
                1,
            );
            dx
        })
    }
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

/// `y` is the forward output; the gradient passes where `y > 0`.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

/// 2x2 stride-2 max pooling; odd trailing rows/columns are dropped.
/// Returns the output and, per output element, the flat input index chosen.
pub fn maxpool_forward<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let (b, c, h, w) = dims4(x);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut arg = vec![0u32; b * c * oh * ow];
    let src = x.data();
    let dst = out.data_mut();
    let mut o = 0;
    for plane in 0..b * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let i0 = base + 2 * y * w + 2 * xx;
                let mut best = i0;
                for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[o] = src[best];
                arg[o] = best as u32;
                o += 1;
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward<T: Real>(in_shape: &[usize], arg: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    for (&i, &g) in arg.iter().zip(dy.data()) {
        d[i as usize] += g;
    }
    dx
}

/// Inverted dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`, so inference needs no rescaling.
pub fn dropout_mask<T: Real, R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

pub fn apply_mask<T: Real>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    y
}

/// Gaussian with standard deviation `sqrt(2 / fan_in)`.
fn he_normal<T: Real, R: Rng>(n: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
        .collect()
}

pub fn gaussian<T: Real, R: Rng>(n: usize, std: f64, rng: &mut R) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 4-loop convolution with explicit zero padding.
    fn naive_conv(conv: &Conv<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let (b, c, h, w) = dims4(x);
        let k = conv.kernel as isize;
        let p = k / 2;
        let mut out = vec![0.0; b * conv.out_channels * h * w];
        for bi in 0..b {
            for o in 0..conv.out_channels {
                for y in 0..h as isize {
                    for xx in 0..w as isize {
                        let mut s = conv.bias[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let (sy, sx) = (y + ky - p, xx + kx - p);
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    let wi = ((o * c + ci) * conv.kernel + ky as usize) * conv.kernel
                                        + kx as usize;
                                    let xi = ((bi * c + ci) * h + sy as usize) * w + sx as usize;
                                    s += conv.weight[wi] * x.data()[xi];
                                }
                            }
                        }
                        out[((bi * conv.out_channels + o) * h + y as usize) * w + xx as usize] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [1, 3, 5] {
            let conv = Conv::<f64>::new(2, 3, k, &mut rng);
            let mut conv = conv;
            conv.bias = gaussian(3, 1.0, &mut rng);
            let x = Tensor::from_vec(&[2, 2, 4, 7], gaussian(2 * 2 * 4 * 7, 1.0, &mut rng)).unwrap();
            let fast = conv.forward(&x);
            for (a, b) in fast.data().iter().zip(naive_conv(&conv, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, h, w, k) = (2, 3, 5, 3);
        let x: Vec<f64> = gaussian(c * h * w, 1.0, &mut rng);
        let y: Vec<f64> = gaussian(c * k * k * h * w, 1.0, &mut rng);
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, k, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pooling_floors_odd_extents() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 3, 5], (0..15).map(|v| v as f32).collect()).unwrap();
        let (y, arg) = maxpool_forward(&x);
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[6.0, 8.0]);
        assert_eq!(arg, vec![6, 8]);
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for rate in [0.2, 0.5, 0.8] {
            let mask: Vec<f64> = dropout_mask(10_000, rate, &mut rng);
            let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 10_000.0;
            assert!((zeros - rate).abs() < 0.02, "rate {rate}: {zeros}");
            let mean: f64 = mask.iter().sum::<f64>() / 10_000.0;
            assert!((mean - 1.0).abs() < 0.06, "inverted scaling keeps mean ~1: {mean}");
        }
    }
}
