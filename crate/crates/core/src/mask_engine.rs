//! Training-mask recipes and the per-sample strategy sampler.
//!
//! Three recipes mimic the editing situations a user meets at inference:
//! bands along the side of a person's box (coarse interaction), the union of
//! arm regions before and after a random limb rotation (fine interaction),
//! and the lower part of a person's box (body completion). Every recipe mask
//! is optionally roughened into a brush-like shape and then has all face
//! pixels removed, in that order.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    clamp_rect, fill_rect, BBox, GroupAnnotation, MaskGrid, ParsingMap, PartClass, SeedSpec,
    Skeleton,
};
use crate::morph;
use crate::skeleton::{
    augment_skeleton, for_each_capsule_pixel, limb_region, rotate_limb, AugmentPolicy,
    AugmentRecord, LimbSelector, RegionParams, Side,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySide {
    Left,
    Right,
    Both,
}

impl BoundarySide {
    pub const ALL: [BoundarySide; 3] = [BoundarySide::Left, BoundarySide::Right, BoundarySide::Both];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Coarse,
    Fine,
    Body,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Coarse, Strategy::Fine, Strategy::Body];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Coarse => "coarse",
            Strategy::Fine => "fine",
            Strategy::Body => "body",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|st| st.name() == s.trim())
    }
}

fn check_boundary_r(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 && r < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid("r", format!("boundary ratio must lie in (0, 0.5), got {r}")))
    }
}

/// Unclamped boundary bands of `bbox`. With `column` set the bands span the
/// full image height instead of the box height.
pub fn boundary_rects(bbox: &BBox, side: BoundarySide, r: f64, column: bool, height: u32) -> Vec<BBox> {
    let half = r * bbox.width();
    let (top, bottom) = if column {
        (0.0, height as f64)
    } else {
        (bbox.y1, bbox.y2)
    };
    let left = BBox::spanning(bbox.x1 - half, top, bbox.x1 + half, bottom);
    let right = BBox::spanning(bbox.x2 - half, top, bbox.x2 + half, bottom);
    match side {
        BoundarySide::Left => vec![left],
        BoundarySide::Right => vec![right],
        BoundarySide::Both => vec![left, right],
    }
}

fn rasterize_rects(rects: &[BBox], width: u32, height: u32) -> Result<MaskGrid> {
    let mut mask = MaskGrid::empty(width, height);
    let mut any = false;
    for rect in rects {
        if let Ok(c) = clamp_rect(rect, width, height) {
            fill_rect(&mut mask, &c);
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyIntersection { width, height });
    }
    Ok(mask)
}

/// Bands of half-width `r * w` centred on the left and/or right edge of `bbox`.
pub fn coarse_boundary_mask(bbox: &BBox, side: BoundarySide, r: f64, width: u32, height: u32) -> Result<MaskGrid> {
    check_boundary_r(r)?;
    rasterize_rects(&boundary_rects(bbox, side, r, false, height), width, height)
}

/// Like [`coarse_boundary_mask`] but each band covers the whole image column.
pub fn column_extension_mask(bbox: &BBox, side: BoundarySide, r: f64, width: u32, height: u32) -> Result<MaskGrid> {
    check_boundary_r(r)?;
    rasterize_rects(&boundary_rects(bbox, side, r, true, height), width, height)
}

pub fn body_completion_rect(bbox: &BBox, r: f64) -> BBox {
    BBox::spanning(bbox.x1, bbox.y1 + r * (bbox.y2 - bbox.y1), bbox.x2, bbox.y2)
}

/// Lower part of the box, starting at fraction `r` of its height.
pub fn body_completion_mask(bbox: &BBox, r: f64, width: u32, height: u32) -> Result<MaskGrid> {
    if !(0.5..=0.9).contains(&r) {
        return Err(Error::invalid("r", format!("body ratio must lie in [0.5, 0.9], got {r}")));
    }
    rasterize_rects(&[body_completion_rect(bbox, r)], width, height)
}

/// Union of the selected limb regions of both skeletons.
pub fn fine_interaction_mask(
    orig: &Skeleton,
    aug: &Skeleton,
    limbs: &[LimbSelector],
    params: &RegionParams,
    width: u32,
    height: u32,
) -> Result<MaskGrid> {
    let mut mask = MaskGrid::empty(width, height);
    for &limb in limbs {
        for s in [orig, aug] {
            let region = limb_region(s, limb, params)?;
            if let Ok(c) = clamp_rect(&region, width, height) {
                fill_rect(&mut mask, &c);
            }
        }
    }
    Ok(mask)
}

/// Clears every pixel labelled as face in any of the parsing maps.
pub fn unmask_faces(mask: &MaskGrid, parsings: &[ParsingMap]) -> Result<MaskGrid> {
    let mut out = mask.clone();
    for p in parsings {
        if p.dims() != mask.dims() {
            return Err(Error::DimensionMismatch {
                expected: mask.dims(),
                actual: p.dims(),
            });
        }
        for (bit, &label) in out.bits_mut().iter_mut().zip(p.labels()) {
            if label == PartClass::Face {
                *bit = false;
            }
        }
    }
    Ok(out)
}

/// Brush parameters in pixels at the mask's own resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrushParams {
    pub dilate_radius: (f64, f64),
    pub stroke_count: (u32, u32),
    pub stroke_width: (f64, f64),
    /// Control points per stroke, at least 2.
    pub stroke_vertices: (u32, u32),
}

impl BrushParams {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.dilate_radius;
        let (w0, w1) = self.stroke_width;
        if !(0.0 <= r0 && r0 <= r1 && r1.is_finite()) {
            return Err(Error::invalid("dilate_radius", format!("bad range [{r0}, {r1}]")));
        }
        if !(0.0 <= w0 && w0 <= w1 && w1.is_finite()) {
            return Err(Error::invalid("stroke_width", format!("bad range [{w0}, {w1}]")));
        }
        if self.stroke_count.0 > self.stroke_count.1 {
            return Err(Error::invalid("stroke_count", "lower bound above upper bound"));
        }
        let (v0, v1) = self.stroke_vertices;
        if v0 < 2 || v0 > v1 {
            return Err(Error::invalid("stroke_vertices", format!("need 2 <= lo <= hi, got [{v0}, {v1}]")));
        }
        Ok(())
    }

    /// Largest distance an added pixel may lie from the input mask.
    pub fn reach(&self) -> f64 {
        self.dilate_radius.1 + self.stroke_width.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub width: f64,
    pub points: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushRecord {
    pub radius: f64,
    pub strokes: Vec<Stroke>,
}

/// Roughens `mask` into a brush-like shape. Pixels are only ever added.
///
/// The mask is dilated by a random radius, then thick polyline strokes are
/// drawn whose control points lie in the dilated mask. Stroke pixels farther
/// than [`BrushParams::reach`] from the input are dropped.
pub fn brush_augment(mask: &MaskGrid, seed: SeedSpec, params: &BrushParams) -> Result<(MaskGrid, BrushRecord)> {
    params.validate()?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = seed.rng();
    let radius: f64 = rng.gen_range(params.dilate_radius.0..=params.dilate_radius.1);
    let dist_sq = morph::distance_sq(mask);
    let r_sq = radius * radius;
    let bits: Vec<bool> = dist_sq.iter().map(|&d| d <= r_sq).collect();
    let (w, h) = mask.dims();
    let mut out = MaskGrid::from_bits(w, h, bits)?;
    let dilated_set: Vec<(u32, u32)> = out.iter_set().collect();
    let reach_sq = params.reach().powi(2);
    let max_step = 2.0 * params.dilate_radius.1 + params.stroke_width.1 + 1.0;

    let count = rng.gen_range(params.stroke_count.0..=params.stroke_count.1);
    let mut strokes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let width: f64 = rng.gen_range(params.stroke_width.0..=params.stroke_width.1);
        let vertices = rng.gen_range(params.stroke_vertices.0..=params.stroke_vertices.1);
        let mut points = vec![dilated_set[rng.gen_range(0..dilated_set.len())]];
        for _ in 1..vertices {
            let (px, py) = *points.last().expect("non-empty");
            let mut next = None;
            for _ in 0..8 {
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let len: f64 = rng.gen_range(1.0..=max_step);
                let nx = (px as f64 + len * angle.cos()).round();
                let ny = (py as f64 + len * angle.sin()).round();
                if nx >= 0.0 && ny >= 0.0 && nx < w as f64 && ny < h as f64 {
                    let (nx, ny) = (nx as u32, ny as u32);
                    if dist_sq[(ny * w + nx) as usize] <= r_sq {
                        next = Some((nx, ny));
                        break;
                    }
                }
            }
            match next {
                Some(p) => points.push(p),
                None => break,
            }
        }
        for pair in points.windows(2) {
            let a = (pair[0].0 as f64, pair[0].1 as f64);
            let b = (pair[1].0 as f64, pair[1].1 as f64);
            for_each_capsule_pixel(w, h, a, b, width / 2.0, |x, y| {
                if dist_sq[(y * w + x) as usize] <= reach_sq {
                    out.set(x, y, true);
                }
            });
        }
        strokes.push(Stroke { width, points });
    }
    Ok((out, BrushRecord { radius, strokes }))
}

/// Brush ranges expressed at a reference resolution and rescaled per canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrushConfig {
    pub enabled: bool,
    /// Also roughen fine-interaction masks.
    pub on_fine: bool,
    pub reference_resolution: f64,
    pub dilate_radius: (f64, f64),
    pub stroke_count: (u32, u32),
    pub stroke_width: (f64, f64),
    pub stroke_vertices: (u32, u32),
}

impl Default for BrushConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            on_fine: true,
            reference_resolution: 512.0,
            dilate_radius: (4.0, 16.0),
            stroke_count: (0, 3),
            stroke_width: (8.0, 24.0),
            stroke_vertices: (2, 5),
        }
    }
}

impl BrushConfig {
    pub fn params_for(&self, width: u32, height: u32) -> BrushParams {
        let scale = width.min(height) as f64 / self.reference_resolution;
        BrushParams {
            dilate_radius: (self.dilate_radius.0 * scale, self.dilate_radius.1 * scale),
            stroke_count: self.stroke_count,
            stroke_width: (self.stroke_width.0 * scale, self.stroke_width.1 * scale),
            stroke_vertices: self.stroke_vertices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Relative weights of coarse, fine and body strategies.
    pub strategy_weights: [f64; 3],
    pub coarse_r: (f64, f64),
    pub column_prob: f64,
    pub body_r: (f64, f64),
    /// Up to this many persons are chosen per sample (uniform count in 1..=max).
    pub max_targets: usize,
    pub region: RegionParams,
    pub augment: AugmentPolicy,
    pub brush: BrushConfig,
    pub max_attempts: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            strategy_weights: [0.4, 0.4, 0.2],
            coarse_r: (0.1, 0.2),
            column_prob: 0.3,
            body_r: (0.5, 0.9),
            max_targets: 2,
            region: RegionParams::default(),
            augment: AugmentPolicy::default(),
            brush: BrushConfig::default(),
            max_attempts: 8,
        }
    }
}

impl EngineConfig {
    pub fn weight(&self, strategy: Strategy) -> f64 {
        self.strategy_weights[strategy as usize]
    }

    /// Zeroes the weight of every strategy not listed.
    pub fn restrict_strategies(&mut self, keep: &[Strategy]) {
        for s in Strategy::ALL {
            if !keep.contains(&s) {
                self.strategy_weights[s as usize] = 0.0;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.strategy_weights.iter().sum();
        if self.strategy_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || total <= 0.0 {
            return Err(Error::invalid("strategy_weights", format!("{:?}", self.strategy_weights)));
        }
        let (c0, c1) = self.coarse_r;
        if !(0.0 < c0 && c0 <= c1 && c1 < 0.5) {
            return Err(Error::invalid("coarse_r", format!("need 0 < lo <= hi < 0.5, got [{c0}, {c1}]")));
        }
        let (b0, b1) = self.body_r;
        if !(0.5 <= b0 && b0 <= b1 && b1 <= 0.9) {
            return Err(Error::invalid("body_r", format!("need 0.5 <= lo <= hi <= 0.9, got [{b0}, {b1}]")));
        }
        if !(0.0..=1.0).contains(&self.column_prob) {
            return Err(Error::invalid("column_prob", self.column_prob.to_string()));
        }
        if self.max_targets == 0 {
            return Err(Error::invalid("max_targets", "must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts", "must be at least 1"));
        }
        self.augment.validate()?;
        self.brush.params_for(512, 512).validate()
    }
}

/// Every random draw behind one target person's recipe mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case")]
pub enum TargetDraw {
    Coarse {
        person: u32,
        side: BoundarySide,
        r: f64,
        column: bool,
    },
    Fine {
        person: u32,
        augment: AugmentRecord,
        /// Arm segments covered by the mask.
        limbs: Vec<LimbSelector>,
    },
    Body {
        person: u32,
        r: f64,
    },
}

impl TargetDraw {
    pub fn person(&self) -> u32 {
        match self {
            TargetDraw::Coarse { person, .. }
            | TargetDraw::Fine { person, .. }
            | TargetDraw::Body { person, .. } => *person,
        }
    }
}

/// Sampled mask with its complete draw record and intermediate stages.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub strategy: Strategy,
    pub targets: Vec<u32>,
    /// Attempt index that succeeded (0 = first try).
    pub attempt: u32,
    pub draws: Vec<TargetDraw>,
    pub brush: Option<BrushRecord>,
    /// Augmented skeletons per fine target, `(person id, skeleton)`.
    pub augmented: Vec<(u32, Skeleton)>,
    pub recipe_mask: MaskGrid,
    pub brushed_mask: MaskGrid,
    pub mask: MaskGrid,
}

/// Applies recorded rotations in order.
pub fn replay_augment(s: &Skeleton, record: &AugmentRecord) -> Result<Skeleton> {
    record
        .rotations
        .iter()
        .try_fold(s.clone(), |acc, rot| rotate_limb(&acc, rot.pivot, rot.angle_deg))
}

/// Prescribed (unclamped) rectangles of a coarse or body draw.
pub fn prescribed_rects(ann: &GroupAnnotation, draw: &TargetDraw) -> Result<Vec<BBox>> {
    let person = ann
        .person(draw.person())
        .ok_or_else(|| Error::invalid("person", format!("unknown person {}", draw.person())))?;
    Ok(match draw {
        TargetDraw::Coarse { side, r, column, .. } => boundary_rects(&person.bbox, *side, *r, *column, ann.height),
        TargetDraw::Body { r, .. } => vec![body_completion_rect(&person.bbox, *r)],
        TargetDraw::Fine { .. } => Vec::new(),
    })
}

/// Rebuilds the recipe mask (before brush and face removal) from recorded draws.
pub fn build_recipe_mask(ann: &GroupAnnotation, draws: &[TargetDraw], region: &RegionParams) -> Result<MaskGrid> {
    let (w, h) = (ann.width, ann.height);
    let mut mask = MaskGrid::empty(w, h);
    for draw in draws {
        let person = ann
            .person(draw.person())
            .ok_or_else(|| Error::invalid("person", format!("unknown person {}", draw.person())))?;
        let part = match draw {
            TargetDraw::Coarse { side, r, column: false, .. } => coarse_boundary_mask(&person.bbox, *side, *r, w, h)?,
            TargetDraw::Coarse { side, r, column: true, .. } => column_extension_mask(&person.bbox, *side, *r, w, h)?,
            TargetDraw::Body { r, .. } => body_completion_mask(&person.bbox, *r, w, h)?,
            TargetDraw::Fine { augment, limbs, .. } => {
                let aug = replay_augment(&person.skeleton, augment)?;
                fine_interaction_mask(&person.skeleton, &aug, limbs, region, w, h)?
            }
        };
        mask.union_in_place(&part)?;
    }
    Ok(mask)
}

const STREAM_ATTEMPT: u64 = 0x100;
const STREAM_AUGMENT: u64 = 0x200;
const STREAM_BRUSH: u64 = 0x300;

fn pick_strategy(rng: &mut impl Rng, weights: &[f64; 3]) -> Strategy {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for s in Strategy::ALL {
        acc += weights[s as usize];
        if u < acc && weights[s as usize] > 0.0 {
            return s;
        }
    }
    // u landed on the upper edge through rounding: take the last enabled strategy
    *Strategy::ALL
        .iter()
        .rev()
        .find(|s| weights[**s as usize] > 0.0)
        .expect("validated weights")
}

/// Arm segments of the rotated sides that are measurable on `s`.
fn fine_limbs(s: &Skeleton, record: &AugmentRecord) -> Vec<LimbSelector> {
    let mut sides: Vec<Side> = record.rotations.iter().map(|r| r.limb.side).collect();
    sides.sort_by_key(|s| *s as u8);
    sides.dedup();
    sides
        .into_iter()
        .flat_map(LimbSelector::arm)
        .filter(|l| {
            let (a, b) = l.endpoints();
            s.is_present(a) && s.is_present(b)
        })
        .collect()
}

fn attempt(
    ann: &GroupAnnotation,
    parsings: &[ParsingMap],
    seed: SeedSpec,
    config: &EngineConfig,
    attempt_index: u32,
) -> Result<MaskSpec> {
    let mut rng = seed.rng();
    let strategy = pick_strategy(&mut rng, &config.strategy_weights);
    let n = ann.persons.len();
    let k = if n >= 2 && config.max_targets >= 2 {
        rng.gen_range(1..=config.max_targets.min(n))
    } else {
        1
    };
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();

    let mut draws = Vec::with_capacity(k);
    let mut augmented = Vec::new();
    for &i in &chosen {
        let person = &ann.persons[i];
        match strategy {
            Strategy::Coarse => {
                let side = BoundarySide::ALL[rng.gen_range(0..3)];
                let r = rng.gen_range(config.coarse_r.0..=config.coarse_r.1);
                let column = rng.gen_bool(config.column_prob);
                draws.push(TargetDraw::Coarse {
                    person: person.id,
                    side,
                    r,
                    column,
                });
            }
            Strategy::Body => {
                let r = rng.gen_range(config.body_r.0..=config.body_r.1);
                draws.push(TargetDraw::Body { person: person.id, r });
            }
            Strategy::Fine => {
                let sub = seed.child(STREAM_AUGMENT + i as u64);
                match augment_skeleton(&person.skeleton, sub, &config.augment) {
                    Ok((aug, record)) => {
                        let limbs = fine_limbs(&person.skeleton, &record);
                        augmented.push((person.id, aug));
                        draws.push(TargetDraw::Fine {
                            person: person.id,
                            augment: record,
                            limbs,
                        });
                    }
                    Err(Error::NoRotatableLimb) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if draws.is_empty() {
        return Err(Error::NoRotatableLimb);
    }
    let targets: Vec<u32> = draws.iter().map(TargetDraw::person).collect();
    let recipe_mask = build_recipe_mask(ann, &draws, &config.region)?;
    if recipe_mask.is_empty() {
        return Err(Error::EmptyMask);
    }

    let use_brush = config.brush.enabled && (strategy != Strategy::Fine || config.brush.on_fine);
    let (brushed_mask, brush) = if use_brush {
        let params = config.brush.params_for(ann.width, ann.height);
        let (m, rec) = brush_augment(&recipe_mask, seed.child(STREAM_BRUSH), &params)?;
        (m, Some(rec))
    } else {
        (recipe_mask.clone(), None)
    };
    let mask = unmask_faces(&brushed_mask, parsings)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(MaskSpec {
        strategy,
        targets,
        attempt: attempt_index,
        draws,
        brush,
        augmented,
        recipe_mask,
        brushed_mask,
        mask,
    })
}

/// Samples one training mask for `ann`.
///
/// `parsings` holds one parsing map per person, in annotation order; faces in
/// any of them are never masked. Failed attempts are retried with derived
/// sub-seeds up to `config.max_attempts` times.
pub fn sample_training_mask(
    ann: &GroupAnnotation,
    parsings: &[ParsingMap],
    seed: SeedSpec,
    config: &EngineConfig,
) -> Result<MaskSpec> {
    config.validate()?;
    if ann.persons.is_empty() {
        return Err(Error::invalid("annotation", "no persons"));
    }
    if parsings.len() != ann.persons.len() {
        return Err(Error::shape("parsing maps", ann.persons.len(), parsings.len()));
    }
    let mut last = None;
    for a in 0..config.max_attempts {
        match attempt(ann, parsings, seed.child(STREAM_ATTEMPT + a as u64), config, a) {
            Ok(spec) => return Ok(spec),
            Err(
                e @ (Error::EmptyIntersection { .. }
                | Error::EmptyMask
                | Error::NoRotatableLimb
                | Error::MissingJoint(_)),
            ) => {
                log::debug!("mask attempt {a} failed: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationExhausted {
        attempts: config.max_attempts,
        last: last.map(|e| e.to_string()).unwrap_or_default(),
    })
}
