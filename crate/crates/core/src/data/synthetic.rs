//! Small procedurally generated image datasets for tests and quick experiments.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Example, ImageShape};
use crate::{seeded, sub_seed, ClassId};

/// Parameters of a prototype-plus-noise image dataset.
#[derive(Clone, Copy, Debug)]
pub struct PrototypeImages {
    pub n_classes: usize,
    pub per_class: usize,
    pub shape: ImageShape,
    /// Standard deviation of the per-pixel Gaussian noise.
    pub noise: f32,
    /// Largest random translation (pixels) of the prototype per instance.
    pub jitter: i64,
}

impl Default for PrototypeImages {
    fn default() -> Self {
        Self {
            n_classes: 6,
            per_class: 120,
            shape: ImageShape::new(1, 12, 12),
            noise: 0.15,
            jitter: 1,
        }
    }
}

impl PrototypeImages {
    /// Every class gets a random blocky prototype (4×4 cells, each lit with p = 0.5);
    /// instances are jittered, noised copies clipped to [0, 1]. Ids are sequential and
    /// classes interleave.
    pub fn generate(&self, seed: u64) -> Vec<Example> {
        let ImageShape {
            channels,
            height,
            width,
        } = self.shape;
        let mut proto_rng = seeded(sub_seed(seed, 1));
        let cell_h = height.div_ceil(4);
        let cell_w = width.div_ceil(4);
        let prototypes: Vec<Vec<f32>> = (0..self.n_classes)
            .map(|_| {
                let cells: Vec<f32> = (0..channels * 16)
                    .map(|_| if proto_rng.random::<f64>() < 0.5 { 0.85 } else { 0.05 })
                    .collect();
                let mut img = vec![0.0; self.shape.len()];
                for c in 0..channels {
                    for y in 0..height {
                        for x in 0..width {
                            img[(c * height + y) * width + x] = cells[c * 16 + (y / cell_h) * 4 + x / cell_w];
                        }
                    }
                }
                img
            })
            .collect();

        let mut rng = seeded(sub_seed(seed, 2));
        let normal = Normal::new(0.0f32, self.noise.max(0.0)).expect("finite noise");
        let n = self.n_classes * self.per_class;
        (0..n)
            .map(|i| {
                let class = i % self.n_classes;
                let dx = rng.random_range(-self.jitter..=self.jitter);
                let dy = rng.random_range(-self.jitter..=self.jitter);
                let proto = &prototypes[class];
                let mut px = vec![0.0f32; self.shape.len()];
                for c in 0..channels {
                    for y in 0..height as i64 {
                        for x in 0..width as i64 {
                            let sy = (y - dy).clamp(0, height as i64 - 1) as usize;
                            let sx = (x - dx).clamp(0, width as i64 - 1) as usize;
                            let v = proto[(c * height + sy) * width + sx] + normal.sample(&mut rng);
                            px[(c * height + y as usize) * width + x as usize] = v.clamp(0.0, 1.0);
                        }
                    }
                }
                Example::new(i as u64, self.shape, px, Some(class as ClassId))
            })
            .collect()
    }
}

/// Gaussian blobs in `dim` dimensions, one per center, `per_class` points each,
/// packaged as 1×1×dim "images". Values are not clipped.
pub fn gaussian_blobs(centers: &[Vec<f32>], per_class: usize, std: f32, seed: u64) -> Vec<Example> {
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0f32, std).expect("finite std");
    let dim = centers.first().map_or(0, Vec::len);
    let shape = ImageShape::new(1, 1, dim);
    let mut out = Vec::with_capacity(centers.len() * per_class);
    for i in 0..per_class {
        for (class, center) in centers.iter().enumerate() {
            let px = center.iter().map(|&m| m + normal.sample(&mut rng)).collect();
            out.push(Example::new((i * centers.len() + class) as u64, shape, px, Some(class as ClassId)));
        }
    }
    out
}
