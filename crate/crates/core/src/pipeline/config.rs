//! Flat `key = value` configuration covering every generation default.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask_engine::{EngineConfig, Strategy};
use crate::skeleton::{LimbSelector, Segment, Side, SkeletonStyle};

/// Which persons are supplied as reference images for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceRule {
    /// Persons whose full-body box intersects the mask, plus coarse targets.
    #[default]
    Intersecting,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub engine: EngineConfig,
    /// Fill colour of masked pixels.
    pub gray: [u8; 3],
    pub reference_rule: ReferenceRule,
    /// Skeleton line width at 512 px; scaled with the canvas.
    pub skeleton_line_width: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            gray: [128, 128, 128],
            reference_rule: ReferenceRule::Intersecting,
            skeleton_line_width: SkeletonStyle::BASE_LINE_WIDTH,
        }
    }
}

pub fn limb_name(l: LimbSelector) -> &'static str {
    match (l.side, l.segment) {
        (Side::Left, Segment::UpperArm) => "left_upper_arm",
        (Side::Left, Segment::Forearm) => "left_forearm",
        (Side::Left, Segment::Hand) => "left_hand",
        (Side::Right, Segment::UpperArm) => "right_upper_arm",
        (Side::Right, Segment::Forearm) => "right_forearm",
        (Side::Right, Segment::Hand) => "right_hand",
    }
}

pub fn parse_limb(s: &str) -> Option<LimbSelector> {
    LimbSelector::all_arm_segments()
        .into_iter()
        .find(|&l| limb_name(l) == s)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if !(self.skeleton_line_width.is_finite() && self.skeleton_line_width > 0.0) {
            return Err(Error::invalid("skeleton.line_width", self.skeleton_line_width.to_string()));
        }
        Ok(())
    }

    pub fn skeleton_style(&self, width: u32, height: u32) -> SkeletonStyle {
        SkeletonStyle::for_canvas(width, height, self.skeleton_line_width)
    }

    /// Every setting as `(key, value)` in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let e = &self.engine;
        let b = &e.brush;
        let limbs: Vec<&str> = e.augment.candidates.iter().map(|&l| limb_name(l)).collect();
        let rule = match self.reference_rule {
            ReferenceRule::Intersecting => "intersecting",
            ReferenceRule::All => "all",
        };
        vec![
            ("strategy.coarse", e.strategy_weights[0].to_string()),
            ("strategy.fine", e.strategy_weights[1].to_string()),
            ("strategy.body", e.strategy_weights[2].to_string()),
            ("coarse.r_min", e.coarse_r.0.to_string()),
            ("coarse.r_max", e.coarse_r.1.to_string()),
            ("coarse.column_prob", e.column_prob.to_string()),
            ("body.r_min", e.body_r.0.to_string()),
            ("body.r_max", e.body_r.1.to_string()),
            ("targets.max", e.max_targets.to_string()),
            ("attempts.max", e.max_attempts.to_string()),
            ("region.pad_factor", e.region.pad_factor.to_string()),
            ("region.hand_radius_factor", e.region.hand_radius_factor.to_string()),
            ("augment.limbs", limbs.join(",")),
            ("augment.angle_min", e.augment.angle_range.0.to_string()),
            ("augment.angle_max", e.augment.angle_range.1.to_string()),
            ("augment.limb_count", e.augment.limb_count.to_string()),
            ("brush.enabled", b.enabled.to_string()),
            ("brush.on_fine", b.on_fine.to_string()),
            ("brush.reference_resolution", b.reference_resolution.to_string()),
            ("brush.dilate_min", b.dilate_radius.0.to_string()),
            ("brush.dilate_max", b.dilate_radius.1.to_string()),
            ("brush.strokes_min", b.stroke_count.0.to_string()),
            ("brush.strokes_max", b.stroke_count.1.to_string()),
            ("brush.width_min", b.stroke_width.0.to_string()),
            ("brush.width_max", b.stroke_width.1.to_string()),
            ("brush.vertices_min", b.stroke_vertices.0.to_string()),
            ("brush.vertices_max", b.stroke_vertices.1.to_string()),
            ("gray", format!("{},{},{}", self.gray[0], self.gray[1], self.gray[2])),
            ("references", rule.to_string()),
            ("skeleton.line_width", self.skeleton_line_width.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let e = &mut self.engine;
        match key {
            "strategy.coarse" => e.strategy_weights[Strategy::Coarse as usize] = parse_num(key, v)?,
            "strategy.fine" => e.strategy_weights[Strategy::Fine as usize] = parse_num(key, v)?,
            "strategy.body" => e.strategy_weights[Strategy::Body as usize] = parse_num(key, v)?,
            "coarse.r_min" => e.coarse_r.0 = parse_num(key, v)?,
            "coarse.r_max" => e.coarse_r.1 = parse_num(key, v)?,
            "coarse.column_prob" => e.column_prob = parse_num(key, v)?,
            "body.r_min" => e.body_r.0 = parse_num(key, v)?,
            "body.r_max" => e.body_r.1 = parse_num(key, v)?,
            "targets.max" => e.max_targets = parse_num(key, v)?,
            "attempts.max" => e.max_attempts = parse_num(key, v)?,
            "region.pad_factor" => e.region.pad_factor = parse_num(key, v)?,
            "region.hand_radius_factor" => e.region.hand_radius_factor = parse_num(key, v)?,
            "augment.limbs" => {
                e.augment.candidates = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_limb(s).ok_or_else(|| Error::Config(format!("{key}: unknown limb {s:?}"))))
                    .collect::<Result<_>>()?;
            }
            "augment.angle_min" => e.augment.angle_range.0 = parse_num(key, v)?,
            "augment.angle_max" => e.augment.angle_range.1 = parse_num(key, v)?,
            "augment.limb_count" => e.augment.limb_count = parse_num(key, v)?,
            "brush.enabled" => e.brush.enabled = parse_bool(key, v)?,
            "brush.on_fine" => e.brush.on_fine = parse_bool(key, v)?,
            "brush.reference_resolution" => e.brush.reference_resolution = parse_num(key, v)?,
            "brush.dilate_min" => e.brush.dilate_radius.0 = parse_num(key, v)?,
            "brush.dilate_max" => e.brush.dilate_radius.1 = parse_num(key, v)?,
            "brush.strokes_min" => e.brush.stroke_count.0 = parse_num(key, v)?,
            "brush.strokes_max" => e.brush.stroke_count.1 = parse_num(key, v)?,
            "brush.width_min" => e.brush.stroke_width.0 = parse_num(key, v)?,
            "brush.width_max" => e.brush.stroke_width.1 = parse_num(key, v)?,
            "brush.vertices_min" => e.brush.stroke_vertices.0 = parse_num(key, v)?,
            "brush.vertices_max" => e.brush.stroke_vertices.1 = parse_num(key, v)?,
            "gray" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                let gray = match parts.as_slice() {
                    [g] => {
                        let g = parse_num(key, g)?;
                        [g, g, g]
                    }
                    [r, g, b] => [parse_num(key, r)?, parse_num(key, g)?, parse_num(key, b)?],
                    _ => return Err(Error::Config(format!("{key}: expected 1 or 3 values, got {v:?}"))),
                };
                self.gray = gray;
            }
            "references" => {
                self.reference_rule = match v {
                    "intersecting" => ReferenceRule::Intersecting,
                    "all" => ReferenceRule::All,
                    _ => return Err(Error::Config(format!("{key}: expected intersecting or all, got {v:?}"))),
                }
            }
            "skeleton.line_width" => self.skeleton_line_width = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
