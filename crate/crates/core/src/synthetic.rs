//! Seeded procedural images: shaded background, a few flat or textured
//! shapes. Edges give the base codec structure to keep and the textures give
//! the enhancement codec something to add.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Image, Tensor};

fn color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]
}

enum Shape {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Disc { cy: f64, cx: f64, r: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
        }
    }
}

struct Layer {
    shape: Shape,
    color: [f64; 3],
    /// amplitude, frequency y, frequency x, phase
    texture: (f64, f64, f64, f64),
}

/// One `size x size` image drawn from `rng`.
pub fn synthetic_image(size: usize, rng: &mut impl Rng) -> Image {
    let s = size as f64;
    let top = color(rng);
    let bottom = color(rng);
    let layers: Vec<Layer> = (0..rng.gen_range(2..=4))
        .map(|_| {
            let shape = if rng.gen_bool(0.5) {
                let (h, w) = (rng.gen_range(0.2..0.6) * s, rng.gen_range(0.2..0.6) * s);
                let (y0, x0) = (rng.gen_range(-0.1..0.8) * s, rng.gen_range(-0.1..0.8) * s);
                Shape::Rect { y0, x0, y1: y0 + h, x1: x0 + w }
            } else {
                Shape::Disc {
                    cy: rng.gen_range(0.1..0.9) * s,
                    cx: rng.gen_range(0.1..0.9) * s,
                    r: rng.gen_range(0.1..0.35) * s,
                }
            };
            let textured = rng.gen_bool(0.6);
            let texture = (
                if textured { rng.gen_range(0.04..0.12) } else { 0.0 },
                rng.gen_range(0.3..1.6),
                rng.gen_range(0.3..1.6),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            Layer {
                shape,
                color: color(rng),
                texture,
            }
        })
        .collect();

    let mut t = Tensor::zeros(3, size, size);
    for y in 0..size {
        for x in 0..size {
            let a = y as f64 / s;
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = top[c] * (1.0 - a) + bottom[c] * a;
            }
            for l in &layers {
                if l.shape.contains(y as f64 + 0.5, x as f64 + 0.5) {
                    let (amp, fy, fx, ph) = l.texture;
                    let tex = amp * (fy * y as f64 + fx * x as f64 + ph).sin();
                    for c in 0..3 {
                        px[c] = l.color[c] + tex;
                    }
                }
            }
            for (c, v) in px.iter().enumerate() {
                *t.at_mut(c, y, x) = v.clamp(0.0, 1.0);
            }
        }
    }
    Image::new(t).expect("values clamped into range")
}

/// `count` images from a fixed seed; the same arguments always give the same
/// images.
pub fn synthetic_dataset(count: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synthetic_image(size, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_varied() {
        let a = synthetic_dataset(4, 16, 1);
        assert_eq!(a, synthetic_dataset(4, 16, 1));
        assert_ne!(a, synthetic_dataset(4, 16, 2));
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|im| im.height() == 16 && im.width() == 16));
    }

    #[test]
    fn images_have_edges() {
        let imgs = synthetic_dataset(8, 32, 7);
        let with_edges = imgs
            .iter()
            .filter(|im| crate::mask::edge_mask(im, 0).count_ones() > 0)
            .count();
        assert!(with_edges >= 6);
    }
}
