//! Metrics, rate–distortion sweeps, parameter counts and the
//! difference-compression (DC) baseline.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ResidualModel};
use crate::entropy::{decode_human, decode_machine, encode_image, ScalableBitstream};
use crate::error::{Error, Result};
use crate::fusion::fuse_groups;
use crate::losses::mse;
use crate::model::{pad_input, quantize_symbols, split_groups, BaseModel, EnhancementModel, ModelConfig};
use crate::nn::Module;
use crate::tensor::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

/// `10 log10(1 / mse)` on `[0, 1]` RGB, capped at [`PSNR_CAP`].
pub fn psnr(x: &Image, x_hat: &Image) -> Result<f64> {
    let e = mse(x.tensor(), x_hat.tensor())?;
    if e == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP))
}

/// Bits per pixel of each layer of a stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bpp {
    /// Header, z and y sections.
    pub base: f64,
    /// za and ya sections.
    pub enh: f64,
    pub total: f64,
}

pub fn bpp(stream: &ScalableBitstream, width: usize, height: usize) -> Bpp {
    let px = (width * height) as f64;
    let base = 8.0 * stream.base_len() as f64 / px;
    let enh = 8.0 * stream.enhancement_len() as f64 / px;
    Bpp {
        base,
        enh,
        total: base + enh,
    }
}

/// One operating point, averaged over a test set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub lambda: f64,
    /// Enhancement groups; 0 marks a difference-compression row.
    pub m: usize,
    pub bpp_base: f64,
    pub bpp_enh: f64,
    pub bpp_total: f64,
    pub psnr_machine: f64,
    pub psnr_human: f64,
    pub count: usize,
}

pub const RD_CSV_HEADER: &str = "lambda,m,bpp_base,bpp_enh,bpp_total,psnr_machine,psnr_human,count";

pub fn write_rd_csv(points: &[RDPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    if points.is_empty() {
        w.write_record(RD_CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rd_csv(input: impl Read) -> Result<Vec<RDPoint>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != RD_CSV_HEADER {
        return Err(Error::Malformed(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<Vec<RDPoint>, _>>()?)
}

/// Metrics of one image through the real encode/decode path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub file: String,
    pub bpp_base: f64,
    pub bpp_enh: f64,
    pub bpp_total: f64,
    pub psnr_machine: f64,
    /// Equal to `psnr_machine` when no enhancement layer is coded.
    pub psnr_human: f64,
}

pub fn evaluate_image(name: &str, x: &Image, base: &BaseModel, enh: Option<&EnhancementModel>) -> Result<ImageMetrics> {
    let stream = encode_image(x, base, enh)?;
    let rate = bpp(&stream, x.width(), x.height());
    let psnr_machine = psnr(x, &decode_machine(&stream, base)?)?;
    let psnr_human = match enh {
        Some(e) => psnr(x, &decode_human(&stream, base, e)?)?,
        None => psnr_machine,
    };
    Ok(ImageMetrics {
        file: name.to_owned(),
        bpp_base: rate.base,
        bpp_enh: rate.enh,
        bpp_total: rate.total,
        psnr_machine,
        psnr_human,
    })
}

/// Averages per-image metrics into one point.
pub fn average(lambda: f64, m: usize, metrics: &[ImageMetrics]) -> Result<RDPoint> {
    if metrics.is_empty() {
        return Err(Error::Config("no test images".into()));
    }
    let n = metrics.len() as f64;
    let mean = |f: fn(&ImageMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    let bpp_base = mean(|r| r.bpp_base);
    let bpp_enh = mean(|r| r.bpp_enh);
    Ok(RDPoint {
        lambda,
        m,
        bpp_base,
        bpp_enh,
        bpp_total: bpp_base + bpp_enh,
        psnr_machine: mean(|r| r.psnr_machine),
        psnr_human: mean(|r| r.psnr_human),
        count: metrics.len(),
    })
}

/// Per-image metrics and their average for a codec pair.
pub fn evaluate_set(
    images: &[(String, Image)],
    base: &BaseModel,
    enh: Option<&EnhancementModel>,
) -> Result<(RDPoint, Vec<ImageMetrics>)> {
    let metrics = images
        .iter()
        .map(|(name, x)| evaluate_image(name, x, base, enh))
        .collect::<Result<Vec<_>>>()?;
    let lambda = enh.map_or(base.config.lambda, |e| e.config.lambda);
    let m = enh.map_or(0, |e| e.config.enh_groups);
    Ok((average(lambda, m, &metrics)?, metrics))
}

/// One JSON object per line.
pub fn write_json_lines(metrics: &[ImageMetrics], mut out: impl Write) -> Result<()> {
    for m in metrics {
        serde_json::to_writer(&mut out, m).map_err(|e| Error::Malformed(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// `x̂_t` without entropy coding; identical to what the decoder produces.
pub fn machine_reconstruction(base: &BaseModel, x: &Image) -> Result<Image> {
    let padded = pad_input(&base.config, x);
    let y_hat = split_groups(&quantize_symbols(&base.analyze_base(&padded)?), base.config.groups)?;
    Image::new(base.synth_machine(&y_hat)?.into_tensor().crop(x.height(), x.width()))
}

/// `x̂` without entropy coding; identical to what the decoder produces.
pub fn human_reconstruction(base: &BaseModel, enh: &EnhancementModel, x: &Image) -> Result<Image> {
    let padded = pad_input(&base.config, x);
    let y_hat = split_groups(&quantize_symbols(&base.analyze_base(&padded)?), base.config.groups)?;
    let ya = enh.analyze_enhancement(&padded)?;
    let ya_hat = split_groups(&quantize_symbols(&crate::model::concat_groups(&ya)?), enh.config.enh_groups)?;
    let fused = fuse_groups(&y_hat, &ya_hat)?;
    Image::new(enh.synth_human(&fused)?.into_tensor().crop(x.height(), x.width()))
}

/// Enhancement-model trainable parameters for `config`.
pub fn count_enh_params(config: &ModelConfig) -> Result<usize> {
    Ok(EnhancementModel::new(config.clone(), 0)?.param_count())
}

/// `(r + 1) / 2` for a residual `r` in `[-1, 1]`.
pub fn shift(r: f64) -> f64 {
    (r + 1.0) * 0.5
}

/// Inverse of [`shift`].
pub fn unshift(s: f64) -> f64 {
    2.0 * s - 1.0
}

/// The residual image `(x - x̂_t + 1) / 2`, in `[0, 1]`.
pub fn shift_residual(x: &Image, x_t: &Image) -> Result<Image> {
    Image::new(x.tensor().zip_map(x_t.tensor(), |a, b| shift(a - b))?)
}

/// `clamp(x̂_t + 2 r̂ - 1)`.
pub fn apply_residual(x_t: &Image, r_hat: &Image) -> Result<Image> {
    Image::from_clamped(x_t.tensor().zip_map(r_hat.tensor(), |a, s| a + unshift(s))?)
}

/// Output of the difference-compression baseline for one image.
#[derive(Clone, Debug)]
pub struct DcResult {
    pub base_stream: ScalableBitstream,
    pub residual_stream: ScalableBitstream,
    pub machine: Image,
    pub reconstruction: Image,
}

impl DcResult {
    pub fn bpp(&self) -> Bpp {
        let (w, h) = (self.machine.width(), self.machine.height());
        let base = bpp(&self.base_stream, w, h).total;
        let enh = bpp(&self.residual_stream, w, h).total;
        Bpp {
            base,
            enh,
            total: base + enh,
        }
    }
}

/// Base layer plus a separately coded residual against the decoded `x̂_t`.
pub fn dc_baseline(x: &Image, base: &BaseModel, residual: &ResidualModel) -> Result<DcResult> {
    if !residual.0.config.latent_compatible(&base.config) {
        return Err(Error::Config("residual codec differs from the base in C, n or s".into()));
    }
    let base_stream = encode_image(x, base, None)?;
    let machine = decode_machine(&base_stream, base)?;
    let residual_stream = encode_image(&shift_residual(x, &machine)?, &residual.0, None)?;
    let r_hat = decode_machine(&residual_stream, &residual.0)?;
    let reconstruction = apply_residual(&machine, &r_hat)?;
    Ok(DcResult {
        base_stream,
        residual_stream,
        machine,
        reconstruction,
    })
}

/// DC metrics over a test set, as an [`RDPoint`] with `m = 0`.
pub fn evaluate_dc(images: &[(String, Image)], base: &BaseModel, residual: &ResidualModel) -> Result<RDPoint> {
    let metrics = images
        .iter()
        .map(|(name, x)| {
            let dc = dc_baseline(x, base, residual)?;
            let rate = dc.bpp();
            Ok(ImageMetrics {
                file: name.clone(),
                bpp_base: rate.base,
                bpp_enh: rate.enh,
                bpp_total: rate.total,
                psnr_machine: psnr(x, &dc.machine)?,
                psnr_human: psnr(x, &dc.reconstruction)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    average(residual.0.config.lambda, 0, &metrics)
}

/// Fusion and DC at the same λ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcComparison {
    pub lambda: f64,
    pub fusion: RDPoint,
    pub dc: RDPoint,
}

impl DcComparison {
    /// Fusion reaches at least the DC quality for at most the DC rate.
    pub fn fusion_dominates(&self) -> bool {
        self.fusion.psnr_human >= self.dc.psnr_human && self.fusion.bpp_total <= self.dc.bpp_total
    }
}

/// Pairs each DC row (`m = 0`) with the fusion rows of the same λ.
pub fn pair_with_dc(points: &[RDPoint]) -> Vec<DcComparison> {
    let mut out = Vec::new();
    for dc in points.iter().filter(|p| p.m == 0) {
        for f in points.iter().filter(|p| p.m > 0 && p.lambda == dc.lambda) {
            out.push(DcComparison {
                lambda: dc.lambda,
                fusion: *f,
                dc: *dc,
            });
        }
    }
    out
}

/// One cell of a sweep grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub base: PathBuf,
    pub enh: PathBuf,
    /// Residual codec for a DC row at the same λ.
    #[serde(default)]
    pub residual: Option<PathBuf>,
}

/// Sweep description: test images plus one checkpoint set per grid cell.
/// λ and `m` are read from the checkpoints themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub test_dir: PathBuf,
    #[serde(rename = "cell")]
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    /// Parses a grid file; relative paths resolve against `base_dir`.
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let mut g: Self = toml::from_str(text)?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        fix(&mut g.test_dir);
        for c in &mut g.cells {
            fix(&mut c.base);
            fix(&mut c.enh);
            if let Some(r) = &mut c.residual {
                fix(r);
            }
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&fs::read_to_string(path)?, dir)
    }
}

/// One RD row per cell, plus a DC row for each cell naming a residual codec.
/// All checkpoints are checked before any evaluation starts.
pub fn rd_sweep(grid: &SweepGrid, images: &[(String, Image)]) -> Result<Vec<RDPoint>> {
    for c in &grid.cells {
        for p in [Some(&c.base), Some(&c.enh), c.residual.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::MissingCheckpoint(p.display().to_string()));
            }
        }
    }
    let mut out = Vec::new();
    for c in &grid.cells {
        let base = BaseModel::load(&c.base)?;
        let enh = EnhancementModel::load(&c.enh)?;
        out.push(evaluate_set(images, &base, Some(&enh))?.0);
        if let Some(r) = &c.residual {
            let residual = ResidualModel::load(r)?;
            let mut dc = evaluate_dc(images, &base, &residual)?;
            dc.lambda = enh.config.lambda;
            out.push(dc);
        }
    }
    Ok(out)
}

/// Every image in `dir`, keyed by file name.
pub fn load_test_images(dir: &Path) -> Result<Vec<(String, Image)>> {
    crate::image_io::list_images(dir)?
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, crate::image_io::load_image(&p)?))
        })
        .collect()
}

/// Mean PSNR of `x̂_t` inside and outside `mask`, for checking where the base
/// codec spends its bits.
pub fn region_psnr(x: &Image, x_hat: &Image, mask: &crate::mask::BinaryMask) -> Result<(f64, f64)> {
    let (h, w) = (x.height(), x.width());
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::Dimension("mask and image sizes differ".into()));
    }
    let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
    for c in 0..3 {
        for y in 0..h {
            for xx in 0..w {
                let d = x.tensor().at(c, y, xx) - x_hat.tensor().at(c, y, xx);
                if mask.get(y, xx) {
                    sin += d * d;
                    nin += 1;
                } else {
                    sout += d * d;
                    nout += 1;
                }
            }
        }
    }
    let p = |s: f64, n: usize| {
        if n == 0 || s == 0.0 {
            PSNR_CAP
        } else {
            (10.0 * (n as f64 / s).log10()).min(PSNR_CAP)
        }
    };
    Ok((p(sin, nin), p(sout, nout)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{EnhancementSections, Header};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn flat(v: f64) -> Image {
        Image::filled(4, 4, v)
    }

    #[test]
    fn psnr_reference_values() {
        assert_eq!(psnr(&flat(0.3), &flat(0.3)).unwrap(), 100.0);
        assert_eq!(psnr(&flat(0.0), &flat(1.0)).unwrap(), 0.0);
        // 10 log10(1 / 0.01)
        assert!((psnr(&flat(0.5), &flat(0.6)).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&flat(0.5), &Image::filled(4, 5, 0.5)).is_err());
    }

    fn stream(enh: Option<usize>, base_payload: usize) -> ScalableBitstream {
        ScalableBitstream {
            header: Header {
                width: 1,
                height: 1,
                n: 1,
                m: enh.map_or(0, |_| 1),
                lambda_id: 0,
                model_hash: 0,
            },
            z: vec![],
            y: vec![0; base_payload],
            enhancement: enh.map(|n| EnhancementSections {
                za: vec![],
                ya: vec![0; n],
            }),
        }
    }

    #[test]
    fn bpp_arithmetic() {
        let b = bpp(&stream(None, 4096 - 29), 256, 256);
        assert_eq!(b.enh, 0.0);
        assert!((b.total - 0.5).abs() < 1e-12);
        let half = bpp(&stream(None, 4096 - 29), 512, 256);
        assert!((half.total - 0.25).abs() < 1e-12);
        let e = bpp(&stream(Some(100), 10), 16, 16);
        assert!((e.total - (e.base + e.enh)).abs() < 1e-12);
        assert!((e.enh - 8.0 * 108.0 / 256.0).abs() < 1e-12);
    }

    #[test]
    fn csv_header_and_fixed_point() {
        let pts = vec![
            RDPoint {
                lambda: 0.005,
                m: 3,
                bpp_base: 0.1,
                bpp_enh: 0.2,
                bpp_total: 0.1 + 0.2,
                psnr_machine: 20.5,
                psnr_human: 27.25,
                count: 32,
            },
            RDPoint {
                lambda: 0.05,
                m: 0,
                bpp_base: 1.0 / 3.0,
                bpp_enh: 0.0,
                bpp_total: 1.0 / 3.0,
                psnr_machine: 100.0,
                psnr_human: 100.0,
                count: 1,
            },
        ];
        let mut buf = Vec::new();
        write_rd_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{RD_CSV_HEADER}\n")));
        let back = read_rd_csv(&buf[..]).unwrap();
        assert_eq!(back, pts);
        let mut again = Vec::new();
        write_rd_csv(&back, &mut again).unwrap();
        assert_eq!(again, buf);
        assert!(read_rd_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn dc_pairs_by_lambda() {
        let p = |lambda, m| RDPoint {
            lambda,
            m,
            bpp_base: 0.0,
            bpp_enh: 0.0,
            bpp_total: 0.0,
            psnr_machine: 0.0,
            psnr_human: 0.0,
            count: 1,
        };
        let pairs = pair_with_dc(&[p(0.005, 3), p(0.005, 0), p(0.05, 3), p(0.05, 0), p(0.01, 2)]);
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|c| c.fusion.lambda == c.dc.lambda));
    }

    #[test]
    fn mid_grey_residual_is_identity() {
        let x_t = Image::new(Tensor::from_fn(3, 4, 4, |c, y, x| (c + y + x) as f64 / 12.0)).unwrap();
        assert_eq!(apply_residual(&x_t, &Image::filled(4, 4, 0.5)).unwrap(), x_t);
    }

    #[test]
    fn enh_param_count_grows_with_m() {
        let mut c = ModelConfig::toy();
        let counts: Vec<usize> = (1..=5)
            .map(|m| {
                c.enh_groups = m;
                count_enh_params(&c).unwrap()
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[1] > w[0]));
        c.enh_groups = 0;
        assert!(count_enh_params(&c).is_err());
    }

    #[test]
    fn sweep_grid_parses_and_resolves() {
        let text = "test_dir = \"test\"\n[[cell]]\nbase = \"b.ckpt\"\nenh = \"/abs/e.ckpt\"\nresidual = \"r.ckpt\"\n";
        let g = SweepGrid::from_text(text, Path::new("/grid")).unwrap();
        assert_eq!(g.test_dir, Path::new("/grid/test"));
        assert_eq!(g.cells[0].enh, Path::new("/abs/e.ckpt"));
        assert_eq!(g.cells[0].residual.as_deref(), Some(Path::new("/grid/r.ckpt")));
        assert!(matches!(rd_sweep(&g, &[]), Err(Error::MissingCheckpoint(_))));
    }

    proptest! {
        #[test]
        fn residual_shift_round_trips(k in -(1i64 << 20)..=(1i64 << 20)) {
            let r = k as f64 / (1u64 << 20) as f64;
            let s = shift(r);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(unshift(s), r);
        }
    }
}
