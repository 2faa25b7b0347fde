//! Limb rotation augmentation, limb regions and skeleton-map rendering.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, Joint, SeedSpec, Skeleton, LIMBS};

/// Rasterized skeleton conditioning image.
pub type SkeletonMap = RgbImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// shoulder to elbow
    UpperArm,
    /// elbow to wrist
    Forearm,
    /// square around the wrist
    Hand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LimbSelector {
    pub side: Side,
    pub segment: Segment,
}

impl LimbSelector {
    pub const fn new(side: Side, segment: Segment) -> Self {
        Self { side, segment }
    }

    /// Every arm segment on both sides.
    pub fn all_arm_segments() -> Vec<LimbSelector> {
        let mut out = Vec::with_capacity(6);
        for side in [Side::Left, Side::Right] {
            out.extend(Self::arm(side));
        }
        out
    }

    /// The three segments of one arm.
    pub fn arm(side: Side) -> [LimbSelector; 3] {
        [
            LimbSelector::new(side, Segment::UpperArm),
            LimbSelector::new(side, Segment::Forearm),
            LimbSelector::new(side, Segment::Hand),
        ]
    }

    fn shoulder(self) -> Joint {
        match self.side {
            Side::Left => Joint::LeftShoulder,
            Side::Right => Joint::RightShoulder,
        }
    }

    fn elbow(self) -> Joint {
        match self.side {
            Side::Left => Joint::LeftElbow,
            Side::Right => Joint::RightElbow,
        }
    }

    fn wrist(self) -> Joint {
        match self.side {
            Side::Left => Joint::LeftWrist,
            Side::Right => Joint::RightWrist,
        }
    }

    /// The two joints that define the segment. The hand is anchored on the
    /// forearm, whose length sets the hand size.
    pub fn endpoints(self) -> (Joint, Joint) {
        match self.segment {
            Segment::UpperArm => (self.shoulder(), self.elbow()),
            Segment::Forearm | Segment::Hand => (self.elbow(), self.wrist()),
        }
    }

    /// Pivot used when this segment is rotated. The hand has no keypoints of
    /// its own, so it swings with the forearm about the elbow.
    pub fn pivot(self) -> Joint {
        match self.segment {
            Segment::UpperArm => self.shoulder(),
            Segment::Forearm | Segment::Hand => self.elbow(),
        }
    }

    /// Joints that must be present to rotate this segment and to measure its region.
    pub fn required_joints(self) -> Vec<Joint> {
        let pivot = self.pivot();
        let mut joints = vec![pivot];
        joints.extend_from_slice(pivot.chain_descendants());
        let (a, b) = self.endpoints();
        for j in [a, b] {
            if !joints.contains(&j) {
                joints.push(j);
            }
        }
        joints
    }

    pub fn is_available(self, s: &Skeleton) -> bool {
        self.required_joints().iter().all(|&j| s.is_present(j))
    }
}

/// Rotates every joint downstream of `pivot` by `angle_deg` about the pivot.
///
/// Uses the standard rotation matrix in image coordinates; with y pointing
/// down, positive angles turn clockwise on screen.
pub fn rotate_limb(s: &Skeleton, pivot: Joint, angle_deg: f64) -> Result<Skeleton> {
    let (px, py) = s.position(pivot)?;
    let descendants = pivot.chain_descendants();
    for &j in descendants {
        s.position(j)?;
    }
    if angle_deg == 0.0 {
        return Ok(s.clone());
    }
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = s.clone();
    for &j in descendants {
        let kp = out.get_mut(j);
        let (dx, dy) = (kp.x - px, kp.y - py);
        kp.x = px + cos * dx - sin * dy;
        kp.y = py + sin * dx + cos * dy;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub candidates: Vec<LimbSelector>,
    /// Magnitude range in degrees; the sign is drawn separately.
    pub angle_range: (f64, f64),
    pub limb_count: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            candidates: LimbSelector::all_arm_segments(),
            angle_range: (15.0, 75.0),
            limb_count: 1,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.angle_range;
        // A zero lower bound is accepted so that [0, 0] can express "no rotation".
        if !(0.0 <= lo && lo <= hi && hi < 180.0) {
            return Err(Error::invalid(
                "angle_range",
                format!("need 0 <= lo <= hi < 180, got [{lo}, {hi}]"),
            ));
        }
        if self.limb_count == 0 {
            return Err(Error::invalid("limb_count", "must be at least 1"));
        }
        if self.candidates.is_empty() {
            return Err(Error::invalid("candidates", "no candidate limbs"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbRotation {
    pub limb: LimbSelector,
    pub pivot: Joint,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub rotations: Vec<LimbRotation>,
}

impl AugmentRecord {
    pub fn has_rotation(&self) -> bool {
        self.rotations.iter().any(|r| r.angle_deg != 0.0)
    }
}

/// Rotates `policy.limb_count` randomly chosen candidate limbs.
///
/// Draw order from `seed.rng()`, per rotated limb: the index into the
/// remaining available candidates (`gen_range(0..len)`), the magnitude
/// (`gen_range(lo..=hi)`), then the sign (`gen_bool(0.5)`, true = positive).
pub fn augment_skeleton(
    s: &Skeleton,
    seed: SeedSpec,
    policy: &AugmentPolicy,
) -> Result<(Skeleton, AugmentRecord)> {
    policy.validate()?;
    let mut available: Vec<LimbSelector> = policy
        .candidates
        .iter()
        .copied()
        .filter(|l| l.is_available(s))
        .collect();
    if available.is_empty() {
        return Err(Error::NoRotatableLimb);
    }
    let mut rng = seed.rng();
    let (lo, hi) = policy.angle_range;
    let mut out = s.clone();
    let mut record = AugmentRecord::default();
    for _ in 0..policy.limb_count.min(available.len()) {
        let limb = available.remove(rng.gen_range(0..available.len()));
        let magnitude: f64 = rng.gen_range(lo..=hi);
        let positive = rng.gen_bool(0.5);
        let angle_deg = if magnitude == 0.0 {
            0.0
        } else if positive {
            magnitude
        } else {
            -magnitude
        };
        out = rotate_limb(&out, limb.pivot(), angle_deg)?;
        record.rotations.push(LimbRotation {
            limb,
            pivot: limb.pivot(),
            angle_deg,
        });
    }
    Ok((out, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    /// Margin around arm segments as a fraction of the segment length.
    pub pad_factor: f64,
    /// Half-width of the hand square as a fraction of forearm length.
    pub hand_radius_factor: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            pad_factor: 0.25,
            hand_radius_factor: 0.4,
        }
    }
}

/// Axis-aligned region covering one limb segment.
pub fn limb_region(s: &Skeleton, limb: LimbSelector, params: &RegionParams) -> Result<BBox> {
    let (a, b) = limb.endpoints();
    let (ax, ay) = s.position(a)?;
    let (bx, by) = s.position(b)?;
    let length = (bx - ax).hypot(by - ay);
    Ok(match limb.segment {
        Segment::UpperArm | Segment::Forearm => {
            BBox::spanning(ax, ay, bx, by).expand(params.pad_factor * length)
        }
        Segment::Hand => {
            let half = params.hand_radius_factor * length;
            BBox::spanning(bx - half, by - half, bx + half, by + half)
        }
    })
}

/// OpenPose-style palette.
pub const PALETTE: [[u8; 3]; 18] = [
    [255, 0, 0],
    [255, 85, 0],
    [255, 170, 0],
    [255, 255, 0],
    [170, 255, 0],
    [85, 255, 0],
    [0, 255, 0],
    [0, 255, 85],
    [0, 255, 170],
    [0, 255, 255],
    [0, 170, 255],
    [0, 85, 255],
    [0, 0, 255],
    [85, 0, 255],
    [170, 0, 255],
    [255, 0, 255],
    [255, 0, 170],
    [255, 0, 85],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonStyle {
    /// Limb thickness in pixels; joints are discs of the same diameter.
    pub line_width: f64,
    pub limb_colors: [[u8; 3]; LIMBS.len()],
    pub joint_colors: [[u8; 3]; crate::model::NUM_JOINTS],
}

impl SkeletonStyle {
    pub const BASE_LINE_WIDTH: f64 = 4.0;
    pub const BASE_RESOLUTION: f64 = 512.0;

    pub fn with_line_width(line_width: f64) -> Self {
        let mut limb_colors = [[0; 3]; LIMBS.len()];
        limb_colors.copy_from_slice(&PALETTE[..LIMBS.len()]);
        let mut joint_colors = [[0; 3]; crate::model::NUM_JOINTS];
        joint_colors.copy_from_slice(&PALETTE[..crate::model::NUM_JOINTS]);
        Self {
            line_width,
            limb_colors,
            joint_colors,
        }
    }

    /// Base width scaled by the shorter canvas side relative to 512, never below 1 px.
    pub fn for_canvas(width: u32, height: u32, base_line_width: f64) -> Self {
        let scale = width.min(height) as f64 / Self::BASE_RESOLUTION;
        Self::with_line_width((base_line_width * scale).max(1.0))
    }
}

/// Squared distance from `(px, py)` to the segment `a`-`b`.
pub(crate) fn segment_distance_sq(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    (px - cx).powi(2) + (py - cy).powi(2)
}

/// Calls `f(x, y)` for every lattice pixel within `radius` of the segment.
pub(crate) fn for_each_capsule_pixel(
    width: u32,
    height: u32,
    a: (f64, f64),
    b: (f64, f64),
    radius: f64,
    mut f: impl FnMut(u32, u32),
) {
    let r_sq = radius * radius;
    let x0 = (a.0.min(b.0) - radius).ceil().max(0.0);
    let y0 = (a.1.min(b.1) - radius).ceil().max(0.0);
    let x1 = (a.0.max(b.0) + radius).floor().min(width as f64 - 1.0);
    let y1 = (a.1.max(b.1) + radius).floor().min(height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return;
    }
    for y in y0 as u32..=y1 as u32 {
        for x in x0 as u32..=x1 as u32 {
            if segment_distance_sq(x as f64, y as f64, a, b) <= r_sq {
                f(x, y);
            }
        }
    }
}

/// Draws one skeleton on top of `canvas`. Limbs with a missing endpoint and
/// missing joints are skipped.
pub fn draw_skeleton(canvas: &mut RgbImage, s: &Skeleton, style: &SkeletonStyle) {
    let (w, h) = canvas.dimensions();
    let radius = style.line_width / 2.0;
    for (i, &(pa, pb)) in LIMBS.iter().enumerate() {
        if let (Ok(a), Ok(b)) = (s.position(pa), s.position(pb)) {
            let color = Rgb(style.limb_colors[i]);
            for_each_capsule_pixel(w, h, a, b, radius, |x, y| canvas.put_pixel(x, y, color));
        }
    }
    for joint in Joint::ALL {
        if let Ok(p) = s.position(joint) {
            let color = Rgb(style.joint_colors[joint.index()]);
            for_each_capsule_pixel(w, h, p, p, radius, |x, y| canvas.put_pixel(x, y, color));
        }
    }
}

pub fn rasterize_skeleton(s: &Skeleton, width: u32, height: u32, style: &SkeletonStyle) -> SkeletonMap {
    rasterize_skeletons(std::slice::from_ref(s), width, height, style)
}

/// Renders several skeletons, in order, onto one black canvas.
pub fn rasterize_skeletons(
    skeletons: &[Skeleton],
    width: u32,
    height: u32,
    style: &SkeletonStyle,
) -> SkeletonMap {
    let mut canvas = RgbImage::new(width, height);
    for s in skeletons {
        draw_skeleton(&mut canvas, s, style);
    }
    canvas
}
