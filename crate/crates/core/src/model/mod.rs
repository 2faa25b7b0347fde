//! Domain types shared by the data engine and the attention kernel.

mod annotation;
mod geometry;
mod mask;
mod parsing;
mod pose;
mod seed;

pub use annotation::{GroupAnnotation, Person};
pub use geometry::{clamp_rect, rect_to_mask, BBox};
pub(crate) use geometry::fill_rect;
pub use mask::{mask_union, MaskGrid};
pub use parsing::{ClassMapping, ParsingMap, PartClass};
pub use pose::{Joint, Keypoint, Skeleton, LIMBS, NUM_JOINTS};
pub use seed::{mix, splitmix64, SeedSpec, GOLDEN_GAMMA};
