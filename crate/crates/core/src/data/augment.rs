use super::{Example, ImageShape};
use crate::seeded;

/// Largest translation, as a fraction of each image side.
pub const MAX_SHIFT_FRACTION: f64 = 0.125;

/// One realization of the flip-and-shift augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentDraw {
    pub flip: bool,
    /// Horizontal shift in pixels (positive moves content right).
    pub dx: i64,
    /// Vertical shift in pixels (positive moves content down).
    pub dy: i64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        flip: false,
        dx: 0,
        dy: 0,
    };

    pub fn max_shift(side: usize) -> i64 {
        (side as f64 * MAX_SHIFT_FRACTION).floor() as i64
    }

    /// Flip when the uniform draw is at least 0.5, then shift uniformly in
    /// `[-floor(side/8), floor(side/8)]` per axis.
    pub fn sample<R: rand::Rng + ?Sized>(shape: ImageShape, rng: &mut R) -> Self {
        let flip = rng.random::<f64>() >= 0.5;
        let mx = Self::max_shift(shape.width);
        let my = Self::max_shift(shape.height);
        let dx = rng.random_range(-mx..=mx);
        let dy = rng.random_range(-my..=my);
        Self { flip, dx, dy }
    }

    /// Writes the augmented image into `out` (same length as `pixels`), zero-filling vacated pixels.
    pub fn apply_into<S: Copy + num_traits::Zero + From<f32>>(&self, pixels: &[f32], shape: ImageShape, out: &mut [S]) {
        let (h, w) = (shape.height as i64, shape.width as i64);
        for c in 0..shape.channels {
            let plane = c * shape.height * shape.width;
            for y in 0..h {
                let sy = y - self.dy;
                for x in 0..w {
                    let dst = plane + (y * w + x) as usize;
                    let sx = x - self.dx;
                    out[dst] = if sy < 0 || sy >= h || sx < 0 || sx >= w {
                        S::zero()
                    } else {
                        let sx = if self.flip { w - 1 - sx } else { sx };
                        S::from(pixels[plane + (sy * w + sx) as usize])
                    };
                }
            }
        }
    }
}

/// Applies a specific augmentation draw.
pub fn weak_augment_with(x: &Example, draw: AugmentDraw) -> Example {
    let mut pixels = vec![0.0f32; x.pixels.len()];
    draw.apply_into(&x.pixels, x.shape, &mut pixels);
    Example {
        pixels,
        ..x.clone()
    }
}

/// Random horizontal flip (p = 0.5) plus independent horizontal and vertical
/// translation of up to 12.5% of each side, deterministic under `seed`.
pub fn weak_augment(x: &Example, seed: u64) -> Example {
    let mut rng = seeded(seed);
    let draw = AugmentDraw::sample(x.shape, &mut rng);
    weak_augment_with(x, draw)
}
