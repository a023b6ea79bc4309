//! Dataset loading, open set splits, incremental streams and weak augmentation.

mod augment;
mod idx;
mod split;
mod stream;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::{ClassId, InstanceId};

pub use augment::{weak_augment, weak_augment_with, AugmentDraw, MAX_SHIFT_FRACTION};
pub use idx::{load_idx_dataset, write_idx_dataset};
pub use split::{make_osc_split, OscSplit, SplitManifest};
pub use stream::{build_stream, ClassArrival, StreamSchedule, Window};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One image with an optional label. Pixels are channel-major (C × H × W) in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub pixels: Vec<f32>,
    pub shape: ImageShape,
    pub label: Option<ClassId>,
    pub id: InstanceId,
}

impl Example {
    pub fn new(id: InstanceId, shape: ImageShape, pixels: Vec<f32>, label: Option<ClassId>) -> Self {
        debug_assert_eq!(pixels.len(), shape.len());
        Self {
            pixels,
            shape,
            label,
            id,
        }
    }

    /// The stored label; panics on unlabeled examples, which callers rule out first.
    pub(crate) fn class(&self) -> ClassId {
        self.label.expect("labeled example")
    }
}

/// Sorted distinct labels of the labeled examples.
pub fn class_set(examples: &[Example]) -> Vec<ClassId> {
    let mut classes: Vec<ClassId> = examples.iter().filter_map(|e| e.label).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
}
