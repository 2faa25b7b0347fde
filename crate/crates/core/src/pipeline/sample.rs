//! One training sample: masked image, mask, target skeleton map and references.

use image::{Rgb, RgbImage};

use super::config::{PipelineConfig, ReferenceRule};
use crate::error::{Error, Result};
use crate::mask_engine::{sample_training_mask, MaskSpec, Strategy};
use crate::model::{rect_to_mask, BBox, GroupAnnotation, MaskGrid, ParsingMap, PartClass, SeedSpec, Skeleton};
use crate::skeleton::{rasterize_skeletons, SkeletonMap};

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

/// A segmented person on a white background, at source resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceImage {
    pub person_id: u32,
    pub source_bbox: BBox,
    pub pixels: RgbImage,
}

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub sample_id: String,
    pub seed: SeedSpec,
    pub masked_image: RgbImage,
    pub mask: MaskGrid,
    pub skeleton_map: SkeletonMap,
    pub references: Vec<ReferenceImage>,
    /// Full-body box mask of each reference, same order as `references`.
    pub indicator_masks: Vec<MaskGrid>,
    pub mask_spec: MaskSpec,
}

/// Copies the person's parsed pixels and paints everything else white.
pub fn prepare_reference(image: &RgbImage, parsing: &ParsingMap, person_id: u32, source_bbox: BBox) -> Result<ReferenceImage> {
    if image.dimensions() != parsing.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dimensions(),
            actual: parsing.dims(),
        });
    }
    if parsing.foreground_count() == 0 {
        return Err(Error::EmptyPerson(person_id));
    }
    let mut pixels = image.clone();
    for (p, &label) in pixels.pixels_mut().zip(parsing.labels()) {
        if label == PartClass::Background {
            *p = WHITE;
        }
    }
    Ok(ReferenceImage {
        person_id,
        source_bbox,
        pixels,
    })
}

/// Source pixels where the mask is clear, `gray` where it is set.
pub fn compose_masked(image: &RgbImage, mask: &MaskGrid, gray: [u8; 3]) -> Result<RgbImage> {
    if image.dimensions() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dimensions(),
            actual: mask.dims(),
        });
    }
    let mut out = image.clone();
    for (p, &m) in out.pixels_mut().zip(mask.bits()) {
        if m {
            *p = Rgb(gray);
        }
    }
    Ok(out)
}

/// Full-body box of a person as a mask; boxes that clamp to nothing give an empty mask.
pub fn indicator_mask(bbox: &BBox, width: u32, height: u32) -> Result<MaskGrid> {
    match rect_to_mask(bbox, width, height) {
        Err(Error::EmptyIntersection { .. }) => Ok(MaskGrid::empty(width, height)),
        other => other,
    }
}

/// Indices of persons supplied as references.
pub fn select_references(ann: &GroupAnnotation, spec: &MaskSpec, rule: ReferenceRule) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, p) in ann.persons.iter().enumerate() {
        let keep = match rule {
            ReferenceRule::All => true,
            ReferenceRule::Intersecting => {
                let coarse_target = spec.strategy == Strategy::Coarse && spec.targets.contains(&p.id);
                coarse_target || indicator_mask(&p.bbox, ann.width, ann.height)?.overlap(&spec.mask)? > 0
            }
        };
        if keep {
            out.push(i);
        }
    }
    Ok(out)
}

/// Builds one sample. The skeleton map is drawn from the original skeletons of
/// every person; augmented skeletons only widen fine masks.
pub fn generate_sample(
    sample_id: &str,
    ann: &GroupAnnotation,
    image: &RgbImage,
    parsings: &[ParsingMap],
    seed: SeedSpec,
    config: &PipelineConfig,
) -> Result<TrainingSample> {
    if image.dimensions() != (ann.width, ann.height) {
        return Err(Error::DimensionMismatch {
            expected: (ann.width, ann.height),
            actual: image.dimensions(),
        });
    }
    let spec = sample_training_mask(ann, parsings, seed, &config.engine)?;
    let masked_image = compose_masked(image, &spec.mask, config.gray)?;
    let originals: Vec<Skeleton> = ann.persons.iter().map(|p| p.skeleton.clone()).collect();
    let style = config.skeleton_style(ann.width, ann.height);
    let skeleton_map = rasterize_skeletons(&originals, ann.width, ann.height, &style);

    let chosen = select_references(ann, &spec, config.reference_rule)?;
    let mut references = Vec::with_capacity(chosen.len());
    let mut indicator_masks = Vec::with_capacity(chosen.len());
    for i in chosen {
        let p = &ann.persons[i];
        references.push(prepare_reference(image, &parsings[i], p.id, p.bbox)?);
        indicator_masks.push(indicator_mask(&p.bbox, ann.width, ann.height)?);
    }
    Ok(TrainingSample {
        sample_id: sample_id.to_string(),
        seed,
        masked_image,
        mask: spec.mask.clone(),
        skeleton_map,
        references,
        indicator_masks,
        mask_spec: spec,
    })
}

/// Twelve planar channels at one resolution:
/// 0-3 noisy-latent placeholders (zeros), 4-6 masked RGB in `[0, 1]`,
/// 7 zero padding, 8 mask, 9-11 skeleton RGB in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningStack {
    pub width: u32,
    pub height: u32,
    data: Vec<f32>,
}

impl ConditioningStack {
    pub const CHANNELS: usize = 12;
    pub const MASKED_IMAGE: usize = 4;
    pub const MASK: usize = 8;
    pub const SKELETON: usize = 9;

    pub fn channel_count(&self) -> usize {
        self.data.len() / self.plane()
    }

    fn plane(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    /// All channels, channel-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

fn nearest(dst: u32, dst_len: u32, src_len: u32) -> u32 {
    (((dst as u64 * 2 + 1) * src_len as u64) / (dst_len as u64 * 2)).min(src_len as u64 - 1) as u32
}

/// Resizes everything by nearest neighbour to `width x height` and stacks the channels.
pub fn assemble_conditioning(sample: &TrainingSample, width: u32, height: u32) -> Result<ConditioningStack> {
    let (sw, sh) = sample.mask.dims();
    if width == 0 || height == 0 || sw == 0 || sh == 0 {
        return Err(Error::invalid("conditioning resolution", format!("{width}x{height} from {sw}x{sh}")));
    }
    if sample.masked_image.dimensions() != (sw, sh) || sample.skeleton_map.dimensions() != (sw, sh) {
        return Err(Error::DimensionMismatch {
            expected: (sw, sh),
            actual: sample.masked_image.dimensions(),
        });
    }
    let n = width as usize * height as usize;
    let mut data = vec![0.0f32; ConditioningStack::CHANNELS * n];
    for y in 0..height {
        let sy = nearest(y, height, sh);
        for x in 0..width {
            let sx = nearest(x, width, sw);
            let i = y as usize * width as usize + x as usize;
            let img = sample.masked_image.get_pixel(sx, sy).0;
            let sk = sample.skeleton_map.get_pixel(sx, sy).0;
            for c in 0..3 {
                data[(ConditioningStack::MASKED_IMAGE + c) * n + i] = img[c] as f32 / 255.0;
                data[(ConditioningStack::SKELETON + c) * n + i] = sk[c] as f32 / 255.0;
            }
            if sample.mask.get(sx, sy) {
                data[ConditioningStack::MASK * n + i] = 1.0;
            }
        }
    }
    Ok(ConditioningStack { width, height, data })
}
