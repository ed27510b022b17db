//! Binary importance masks: loaded from precomputed files or derived from
//! image edges.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, GrayImage, ImageEncoder, ImageReader, Luma};
use imageproc::distance_transform::Norm;

use crate::error::{Error, Result};
use crate::tensor::Image;

/// Default edge dilation, in pixels.
pub const DEFAULT_DILATION: u32 = 2;

/// File extension of mask files (binary PGM content).
pub const MASK_EXTENSION: &str = "mask";

/// An `H x W` map of 0/1 values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Mask(format!("{} values for a {height}x{width} mask", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Mask("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, on: bool) -> Self {
        Self {
            height,
            width,
            data: vec![on as u8; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn complement(&self) -> Self {
        Self {
            data: self.data.iter().map(|&v| 1 - v).collect(),
            ..*self
        }
    }

    /// Same window of the mask as [`crate::tensor::Tensor::crop`] / a crop at `(top, left)`.
    pub fn window(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |y, x| self.get(top + y, left + x))
    }

    /// 8-bit rendering: 1 -> 255, 0 -> 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        })
    }

    /// Thresholds an 8-bit map: values `>= 128` become 1.
    pub fn from_gray(gray: &GrayImage) -> Self {
        let (w, h) = gray.dimensions();
        Self {
            height: h as usize,
            width: w as usize,
            data: gray.pixels().map(|p| (p.0[0] >= 128) as u8).collect(),
        }
    }
}

/// Mask file name for an image: `<stem>.mask`, joined onto a mask directory.
pub fn mask_file_name(image_path: &Path) -> PathBuf {
    let stem = image_path.file_stem().unwrap_or_default();
    let mut name = stem.to_os_string();
    name.push(".");
    name.push(MASK_EXTENSION);
    PathBuf::from(name)
}

/// Loads a single-channel 8-bit mask file and checks its size.
pub fn load_mask(path: &Path, expected: (usize, usize)) -> Result<BinaryMask> {
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    let decoded = reader.decode()?;
    if decoded.color() != ColorType::L8 {
        return Err(Error::Mask(format!(
            "{}: expected single-channel 8-bit data, found {:?}",
            path.display(),
            decoded.color()
        )));
    }
    let mask = BinaryMask::from_gray(&decoded.into_luma8());
    if (mask.height(), mask.width()) != expected {
        return Err(Error::Mask(format!(
            "{}: mask is {}x{}, image is {}x{}",
            path.display(),
            mask.height(),
            mask.width(),
            expected.0,
            expected.1
        )));
    }
    Ok(mask)
}

/// Writes a mask as binary PGM (0 / 255).
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let gray = mask.to_gray();
    let writer = BufWriter::new(File::create(path)?);
    PnmEncoder::new(writer)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(gray.as_raw(), gray.width(), gray.height(), ExtendedColorType::L8)?;
    Ok(())
}

/// Edge stand-in for a segmentation-derived mask: Sobel magnitude of the
/// luma, Otsu-thresholded, then dilated by `dilation_radius` (Euclidean).
pub fn edge_mask(image: &Image, dilation_radius: u32) -> BinaryMask {
    let (h, w) = (image.height(), image.width());
    let t = image.tensor();
    let luma = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let v = 0.299 * t.at(0, y, x) + 0.587 * t.at(1, y, x) + 0.114 * t.at(2, y, x);
        Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
    });
    let grad = imageproc::gradients::sobel_gradients(&luma);
    let max = grad.pixels().map(|p| p.0[0]).max().unwrap_or(0);
    if max == 0 {
        return BinaryMask::filled(h, w, false);
    }
    let scaled = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let g = grad.get_pixel(x, y).0[0] as u32;
        Luma([((g * 255 + max as u32 / 2) / max as u32) as u8])
    });
    let level = imageproc::contrast::otsu_level(&scaled);
    let edges = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if scaled.get_pixel(x, y).0[0] > level { 255 } else { 0 }])
    });
    let radius = dilation_radius.min(u8::MAX as u32) as u8;
    let dilated = if radius == 0 {
        edges
    } else {
        imageproc::morphology::dilate(&edges, Norm::L2, radius)
    };
    BinaryMask::from_gray(&dilated)
}
