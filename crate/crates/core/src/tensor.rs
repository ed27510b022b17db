//! Dense channel-major 3-D tensors (`C x H x W`) and the RGB image newtype.

use std::ops::Range;

use crate::error::{Error, Result};

/// A channel-major `C x H x W` array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn expect_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Copies out the channel range `range` as a new tensor.
    pub fn slice_channels(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.channels, "channel range out of bounds");
        let n = self.plane_len();
        Self {
            channels: range.len(),
            height: self.height,
            width: self.width,
            data: self.data[range.start * n..range.end * n].to_vec(),
        }
    }

    /// Concatenates tensors along the channel axis.
    pub fn concat_channels<'a>(parts: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::Dimension("cannot concatenate zero tensors".into()))?;
        let mut out = first.clone();
        for t in iter {
            if (t.height, t.width) != (out.height, out.width) {
                return Err(Error::Dimension(format!(
                    "spatial size {}x{} does not match {}x{}",
                    t.height, t.width, out.height, out.width
                )));
            }
            out.data.extend_from_slice(&t.data);
            out.channels += t.channels;
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Mirror index for reflect padding; handles pads larger than the extent.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

impl Tensor {
    /// Reflect-pads the right and bottom edges to `height x width`.
    pub fn reflect_pad_to(&self, height: usize, width: usize) -> Self {
        assert!(height >= self.height && width >= self.width);
        if height == self.height && width == self.width {
            return self.clone();
        }
        Self::from_fn(self.channels, height, width, |c, y, x| {
            self.at(
                c,
                reflect_index(y as isize, self.height),
                reflect_index(x as isize, self.width),
            )
        })
    }

    /// Keeps the top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Self {
        self.window(0, 0, height, width)
    }

    /// The `height x width` window whose top-left corner is `(top, left)`.
    pub fn window(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        assert!(top + height <= self.height && left + width <= self.width);
        if height == self.height && width == self.width {
            return self.clone();
        }
        Self::from_fn(self.channels, height, width, |c, y, x| self.at(c, top + y, left + x))
    }
}

/// An RGB picture with every value finite and inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Tensor);

impl Image {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.channels() != 3 {
            return Err(Error::Dimension(format!(
                "image needs 3 channels, got {}",
                tensor.channels()
            )));
        }
        if tensor.height() == 0 || tensor.width() == 0 {
            return Err(Error::Dimension("image has zero extent".into()));
        }
        if !tensor.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::Dimension(
                "image values must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Self(tensor))
    }

    /// Clamps every value into `[0, 1]`; non-finite values become 0.
    pub fn from_clamped(tensor: Tensor) -> Result<Self> {
        Self::new(tensor.map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 }))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self(Tensor::filled(3, height, width, value.clamp(0.0, 1.0)))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn pixel_count(&self) -> usize {
        self.height() * self.width()
    }
}

impl AsRef<Tensor> for Image {
    fn as_ref(&self) -> &Tensor {
        &self.0
    }
}
