//! Human parsing label maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PartClass {
    Background = 0,
    Face = 1,
    Hair = 2,
    TorsoClothes = 3,
    Arms = 4,
    Hands = 5,
    LowerClothes = 6,
    Legs = 7,
    Other = 8,
}

impl PartClass {
    pub const COUNT: usize = 9;

    pub fn from_id(id: u8) -> Option<PartClass> {
        use PartClass::*;
        Some(match id {
            0 => Background,
            1 => Face,
            2 => Hair,
            3 => TorsoClothes,
            4 => Arms,
            5 => Hands,
            6 => LowerClothes,
            7 => Legs,
            8 => Other,
            _ => return None,
        })
    }

    pub fn id(self) -> u8 {
        self as u8
    }
}

/// Lookup table from a source dataset's label ids onto [`PartClass`].
///
/// The identity table accepts ids `0..=8`; richer datasets supply their own
/// table and map unlisted ids to `None` (rejected) or to a class of choice.
#[derive(Debug, Clone)]
pub struct ClassMapping {
    table: [Option<PartClass>; 256],
}

impl Default for ClassMapping {
    fn default() -> Self {
        let mut table = [None; 256];
        for (id, slot) in table.iter_mut().enumerate().take(PartClass::COUNT) {
            *slot = PartClass::from_id(id as u8);
        }
        Self { table }
    }
}

impl ClassMapping {
    pub fn from_pairs(pairs: &[(u8, PartClass)]) -> Self {
        let mut table = [None; 256];
        for &(src, dst) in pairs {
            table[src as usize] = Some(dst);
        }
        Self { table }
    }

    pub fn map(&self, raw: u8) -> Option<PartClass> {
        self.table[raw as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsingMap {
    width: u32,
    height: u32,
    labels: Vec<PartClass>,
}

impl ParsingMap {
    pub fn new(width: u32, height: u32, labels: Vec<PartClass>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(Error::shape("parsing labels", expected, labels.len()));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn background(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![PartClass::Background; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, raw: &[u8], mapping: &ClassMapping) -> Result<Self> {
        let labels = raw
            .iter()
            .map(|&v| {
                mapping
                    .map(v)
                    .ok_or_else(|| Error::invalid("parsing label", format!("undeclared class id {v}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[PartClass] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> PartClass {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, class: PartClass) {
        self.labels[y as usize * self.width as usize + x as usize] = class;
    }

    pub fn to_raw(&self) -> Vec<u8> {
        self.labels.iter().map(|c| c.id()).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&c| c != PartClass::Background)
            .count()
    }
}
