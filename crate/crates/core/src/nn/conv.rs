use rand::Rng;

use super::{Layer, Module, Param, LEAKY_SLOPE};
use crate::tensor::Tensor;

/// `c = beta * c + op(a) * op(b)` for row-major operands, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`. A transposed operand is stored in its
/// untransposed shape (`k x m` / `n x k`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a zero-padded strided convolution from an `in_h x in_w` grid
/// to an `out_h x out_w` grid.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    in_h: usize,
    in_w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn conv(channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize) -> Self {
        let pad = kernel / 2;
        Self {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            pad,
            out_h: (in_h + 2 * pad - kernel) / stride + 1,
            out_w: (in_w + 2 * pad - kernel) / stride + 1,
        }
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Visits every (row, col, source offset) triple with an in-bounds source.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let ncols = self.cols();
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let row_base = row * ncols;
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let src_row = (c * self.in_h + iy as usize) * self.in_w;
                        for ox in 0..self.out_w {
                            let ix = (ox * s + kx) as isize - p;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            f(row_base + oy * self.out_w + ox, src_row + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, src: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.rows() * self.cols()];
        self.for_each(|dst, s| cols[dst] = src[s]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut img = vec![0.0; self.channels * self.in_h * self.in_w];
        self.for_each(|c, dst| img[dst] += cols[c]);
        img
    }
}

fn kaiming_bound(fan_in: f64) -> f64 {
    (6.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in)).sqrt()
}

/// Strided 2-D convolution with odd kernel and `kernel / 2` zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out, in, k, k]`
    pub weight: Param,
    pub bias: Param,
}

impl Conv2d {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        let bound = kaiming_bound((in_channels * kernel * kernel) as f64);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Param::uniform(
                format!("{name}.weight"),
                vec![out_channels, in_channels, kernel, kernel],
                bound,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![out_channels]),
        }
    }

    fn geometry(&self, x: &Tensor) -> Geometry {
        assert_eq!(x.channels(), self.in_channels, "{}: input channels", self.weight.name);
        Geometry::conv(self.in_channels, x.height(), x.width(), self.kernel, self.stride)
    }
}

impl Module for Conv2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Layer for Conv2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x);
        let cols = g.im2col(x.data());
        let n = g.cols();
        let mut out = Vec::with_capacity(self.out_channels * n);
        for &b in &self.bias.data {
            out.extend(std::iter::repeat(b).take(n));
        }
        gemm(self.out_channels, g.rows(), n, &self.weight.data, false, &cols, false, &mut out, 1.0);
        Tensor::from_vec(self.out_channels, g.out_h, g.out_w, out).expect("conv output shape")
    }

    fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Self) -> Tensor {
        let g = self.geometry(x);
        let cols = g.im2col(x.data());
        let n = g.cols();
        assert_eq!(dy.shape(), (self.out_channels, g.out_h, g.out_w));
        // dW += dY * cols^T
        gemm(self.out_channels, n, g.rows(), dy.data(), false, &cols, true, &mut grad.weight.data, 1.0);
        for (o, db) in grad.bias.data.iter_mut().enumerate() {
            *db += dy.channel(o).iter().sum::<f64>();
        }
        // dcols = W^T * dY
        let mut dcols = vec![0.0; g.rows() * n];
        gemm(g.rows(), self.out_channels, n, &self.weight.data, true, dy.data(), false, &mut dcols, 0.0);
        Tensor::from_vec(self.in_channels, x.height(), x.width(), g.col2im(&dcols)).expect("conv input shape")
    }
}

/// Transposed convolution that upsamples by exactly `stride`
/// (odd kernel, `kernel / 2` padding, `stride - 1` output padding).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[in, out, k, k]`
    pub weight: Param,
    pub bias: Param,
}

impl ConvTranspose2d {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        let fan_in = (in_channels * kernel * kernel) as f64 / (stride * stride) as f64;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Param::uniform(
                format!("{name}.weight"),
                vec![in_channels, out_channels, kernel, kernel],
                kaiming_bound(fan_in),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![out_channels]),
        }
    }

    /// Geometry of the adjoint convolution, output grid -> input grid.
    fn geometry(&self, x: &Tensor) -> Geometry {
        assert_eq!(x.channels(), self.in_channels, "{}: input channels", self.weight.name);
        let g = Geometry::conv(
            self.out_channels,
            x.height() * self.stride,
            x.width() * self.stride,
            self.kernel,
            self.stride,
        );
        debug_assert_eq!((g.out_h, g.out_w), (x.height(), x.width()));
        g
    }
}

impl Module for ConvTranspose2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x);
        let n = g.cols();
        let mut cols = vec![0.0; g.rows() * n];
        gemm(g.rows(), self.in_channels, n, &self.weight.data, true, x.data(), false, &mut cols, 0.0);
        let mut out = g.col2im(&cols);
        let plane = g.in_h * g.in_w;
        for (o, &b) in self.bias.data.iter().enumerate() {
            out[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += b);
        }
        Tensor::from_vec(self.out_channels, g.in_h, g.in_w, out).expect("transposed conv output shape")
    }

    fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Self) -> Tensor {
        let g = self.geometry(x);
        assert_eq!(dy.shape(), (self.out_channels, g.in_h, g.in_w));
        let n = g.cols();
        let dcols = g.im2col(dy.data());
        // dW += X * dcols^T
        gemm(self.in_channels, n, g.rows(), x.data(), false, &dcols, true, &mut grad.weight.data, 1.0);
        for (o, db) in grad.bias.data.iter_mut().enumerate() {
            *db += dy.channel(o).iter().sum::<f64>();
        }
        let mut dx = vec![0.0; self.in_channels * n];
        gemm(self.in_channels, g.rows(), n, &self.weight.data, false, &dcols, false, &mut dx, 0.0);
        Tensor::from_vec(self.in_channels, x.height(), x.width(), dx).expect("transposed conv input shape")
    }
}
