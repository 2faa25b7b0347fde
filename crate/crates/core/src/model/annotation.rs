use std::collections::HashSet;
use std::path::PathBuf;

use super::geometry::BBox;
use super::pose::Skeleton;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub id: u32,
    pub bbox: BBox,
    pub skeleton: Skeleton,
    /// Per-person parsing map (8-bit label image).
    pub parsing: PathBuf,
}

/// One group photo and its per-person labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAnnotation {
    /// File this annotation was read from, when it came from disk.
    pub source: Option<PathBuf>,
    pub image: PathBuf,
    pub width: u32,
    pub height: u32,
    pub persons: Vec<Person>,
}

impl GroupAnnotation {
    /// Checks person id uniqueness, box ordering and canvas intersection.
    pub fn validate(&self) -> Result<()> {
        let file = self.source.clone().unwrap_or_default();
        let schema = |message: String| Error::Schema {
            file: file.clone(),
            message,
        };
        if self.width == 0 || self.height == 0 {
            return Err(schema(format!(
                "canvas must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        let mut ids = HashSet::new();
        for p in &self.persons {
            if !ids.insert(p.id) {
                return Err(schema(format!("duplicate person id {}", p.id)));
            }
            let b = &p.bbox;
            if !b.is_finite() || !(b.x1 < b.x2 && b.y1 < b.y2) {
                return Err(schema(format!(
                    "person {}: bbox corners out of order ({}, {}, {}, {})",
                    p.id, b.x1, b.y1, b.x2, b.y2
                )));
            }
            if !b.intersects_canvas(self.width, self.height) {
                return Err(schema(format!(
                    "person {}: bbox lies outside the {}x{} canvas",
                    p.id, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn person(&self, id: u32) -> Option<&Person> {
        self.persons.iter().find(|p| p.id == id)
    }
}
