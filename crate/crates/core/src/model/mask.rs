use crate::error::{Error, Result};

/// Binary editing mask; `true` marks a pixel to be inpainted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskGrid {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl MaskGrid {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(Error::shape("mask bits", expected, bits.len()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from nested rows (`1` set, `0` clear); handy in tests.
    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        let mut bits = Vec::with_capacity((width * height) as usize);
        for row in rows {
            if row.len() as u32 != width {
                return Err(Error::shape("mask row", width, row.len()));
            }
            bits.extend(row.iter().map(|&v| v != 0));
        }
        Self::from_bits(width, height, bits)
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Iterator over `(x, y)` of every set pixel in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    fn check_dims(&self, other: &MaskGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &MaskGrid) -> Result<bool> {
        self.check_dims(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    /// Number of pixels set in both masks.
    pub fn overlap(&self, other: &MaskGrid) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn union_in_place(&mut self, other: &MaskGrid) -> Result<()> {
        self.check_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// 8-bit encoding used on disk: 0 or 255.
    pub fn to_luma_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }
}

/// Elementwise OR of two equally sized masks.
pub fn mask_union(a: &MaskGrid, b: &MaskGrid) -> Result<MaskGrid> {
    let mut out = a.clone();
    out.union_in_place(b)?;
    Ok(out)
}
