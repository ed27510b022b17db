//! Edge masks for a folder of images, or for synthetic images when no folder
//! is given. Masks are written to `<dir>/masks/<stem>.mask`.
//!
//! ```text
//! cargo run --example edge_masks -- [dir] [dilation]
//! ```

use std::path::PathBuf;

use sicm::image_io::{list_images, load_image, save_image};
use sicm::mask::{edge_mask, mask_file_name, save_mask};
use sicm::synthetic::synthetic_dataset;

fn main() -> sicm::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from);
    let dilation: u32 = args.next().map_or(2, |a| a.parse().expect("dilation"));

    let dir = match dir {
        Some(d) => d,
        None => {
            let d = std::env::temp_dir().join("sicm_edge_masks");
            std::fs::create_dir_all(&d)?;
            for (i, im) in synthetic_dataset(4, 64, 3).iter().enumerate() {
                save_image(im, &d.join(format!("synthetic_{i}.png")))?;
            }
            d
        }
    };

    let mask_dir = dir.join("masks");
    std::fs::create_dir_all(&mask_dir)?;
    for path in list_images(&dir)? {
        let image = load_image(&path)?;
        let mask = edge_mask(&image, dilation);
        let out = mask_dir.join(mask_file_name(&path));
        save_mask(&mask, &out)?;
        let coverage = mask.count_ones() as f64 / (mask.width() * mask.height()) as f64;
        println!("{} -> {} ({:.1}% marked)", path.display(), out.display(), 100.0 * coverage);
    }
    Ok(())
}
