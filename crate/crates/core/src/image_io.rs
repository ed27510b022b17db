//! 8-bit lossless image files (PNG, PPM/PNM) to and from [`Image`].

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageReader, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Image, Tensor};

/// Extensions accepted when scanning a directory for images.
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pnm", "pgm"];

pub fn load_image(path: &Path) -> Result<Image> {
    let rgb = ImageReader::open(path)?.with_guessed_format()?.decode()?.into_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(Tensor::from_fn(3, h as usize, w as usize, |c, y, x| {
        rgb.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0
    }))
}

/// Rounds to 8 bits; the format follows the file extension.
pub fn save_image(image: &Image, path: &Path) -> Result<()> {
    let t = image.tensor();
    let rgb = RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let px = |c| (t.at(c, y as usize, x as usize) * 255.0).round().clamp(0.0, 255.0) as u8;
        Rgb([px(0), px(1), px(2)])
    });
    rgb.save(path)?;
    Ok(())
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Config(format!("no images in {}", dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_values_survive_png_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(Tensor::from_fn(3, 5, 7, |c, y, x| ((c * 31 + y * 7 + x * 13) % 256) as f64 / 255.0)).unwrap();
        for name in ["a.png", "b.ppm"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), img);
        }
        assert_eq!(list_images(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(list_images(dir.path()).is_err());
    }
}
