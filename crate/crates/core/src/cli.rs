//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
//! parse error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::entropy::{decode_human, decode_machine, encode_image, ScalableBitstream};
use crate::error::Result;
use crate::eval::{evaluate_set, load_test_images, pair_with_dc, rd_sweep, write_json_lines, write_rd_csv, SweepGrid};
use crate::image_io::{list_images, load_image, save_image};
use crate::mask::{edge_mask, mask_file_name, save_mask, DEFAULT_DILATION};
use crate::model::{BaseModel, EnhancementModel};
use crate::train::{train_base, train_enhancement, train_residual, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sicm", version, about = "Scalable image coding for machines and humans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Layer {
    Machine,
    Human,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an edge mask for every image in a directory.
    Mask {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DILATION)]
        dilate: u32,
    },
    /// Train the base (machine) codec.
    TrainBase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the enhancement codec against a frozen base.
    TrainEnh {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the residual codec of the difference-compression baseline.
    TrainResidual {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode one image into a .sicm stream.
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        enh: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode the machine or human layer of a .sicm stream.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        enh: Option<PathBuf>,
        #[arg(long, value_enum)]
        layer: Layer,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rate and quality of a codec pair over a directory of images.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        enh: Option<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
        /// Optional per-image JSON lines.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Evaluate every cell of a λ × m grid file.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Command::Decode {
        layer: Layer::Human,
        enh: None,
        ..
    } = cli.command
    {
        eprintln!("error: --layer human requires --enh");
        return EXIT_USAGE;
    }
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Mask { input, out, dilate } => {
            fs::create_dir_all(&out)?;
            let paths = list_images(&input)?;
            for p in &paths {
                save_mask(&edge_mask(&load_image(p)?, dilate), &out.join(mask_file_name(p)))?;
            }
            println!("wrote {} masks to {}", paths.len(), out.display());
        }
        Command::TrainBase { config, out } => {
            let outcome = train_base(&TrainConfig::load(&config)?)?;
            outcome.model.save(&out)?;
            report_training("base", &outcome.smoothed_loss(), &out);
        }
        Command::TrainEnh { config, base, out } => {
            let base = BaseModel::load(&base)?;
            let outcome = train_enhancement(&TrainConfig::load(&config)?, &base)?;
            outcome.model.save(&out)?;
            report_training("enhancement", &outcome.smoothed_loss(), &out);
        }
        Command::TrainResidual { config, base, out } => {
            let base = BaseModel::load(&base)?;
            let outcome = train_residual(&TrainConfig::load(&config)?, &base)?;
            outcome.model.save(&out)?;
            report_training("residual", &outcome.smoothed_loss(), &out);
        }
        Command::Encode { input, base, enh, out } => {
            let base = BaseModel::load(&base)?;
            let enh = enh.map(EnhancementModel::load).transpose()?;
            let stream = encode_image(&load_image(&input)?, &base, enh.as_ref())?;
            fs::write(&out, stream.to_bytes()?)?;
            println!("wrote {} bytes to {}", stream.len(), out.display());
        }
        Command::Decode {
            input,
            base,
            enh,
            layer,
            out,
        } => {
            let stream = ScalableBitstream::from_bytes(&fs::read(&input)?)?;
            let base = BaseModel::load(&base)?;
            let image = match layer {
                Layer::Machine => decode_machine(&stream, &base)?,
                Layer::Human => {
                    let enh = EnhancementModel::load(enh.expect("checked before dispatch"))?;
                    decode_human(&stream, &base, &enh)?
                }
            };
            save_image(&image, &out)?;
        }
        Command::Eval {
            input,
            base,
            enh,
            csv,
            jsonl,
        } => {
            let base = BaseModel::load(&base)?;
            let enh = enh.map(EnhancementModel::load).transpose()?;
            let images = load_test_images(&input)?;
            let (point, metrics) = evaluate_set(&images, &base, enh.as_ref())?;
            write_rd_csv(&[point], BufWriter::new(File::create(&csv)?))?;
            if let Some(path) = jsonl {
                write_json_lines(&metrics, BufWriter::new(File::create(path)?))?;
            }
            println!(
                "{} images: {:.4} bpp, machine {:.2} dB, human {:.2} dB",
                point.count, point.bpp_total, point.psnr_machine, point.psnr_human
            );
        }
        Command::Sweep { grid, csv } => {
            let grid = SweepGrid::load(&grid)?;
            let images = load_test_images(&grid.test_dir)?;
            let points = rd_sweep(&grid, &images)?;
            write_rd_csv(&points, BufWriter::new(File::create(&csv)?))?;
            for c in pair_with_dc(&points) {
                let verdict = if c.fusion_dominates() { "fusion ahead" } else { "warning: fusion not ahead of DC" };
                println!(
                    "lambda {} m {}: fusion {:.4} bpp / {:.2} dB, DC {:.4} bpp / {:.2} dB ({verdict})",
                    c.lambda, c.fusion.m, c.fusion.bpp_total, c.fusion.psnr_human, c.dc.bpp_total, c.dc.psnr_human
                );
            }
            println!("wrote {} rows to {}", points.len(), csv.display());
        }
    }
    Ok(())
}

fn report_training(what: &str, (first, last): &(f64, f64), out: &std::path::Path) {
    println!("{what}: smoothed loss {first:.4} -> {last:.4}, saved {}", out.display());
}
