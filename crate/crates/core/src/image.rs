//! Image, map and mask types shared by every stage of the pipeline.
//!
//! All grids are row-major with index `y * width + x`. Pixel math runs in
//! `f64` on the unit range; 8-bit quantization only happens in [`crate::io`].

use std::collections::BTreeMap;
use std::ops::Deref;

use crate::error::{Error, Result};

/// Real-valued row-major grid. The only invariant is that values are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidData(format!(
                "buffer length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value at index {i}")));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Build from a closure over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    // Callers guarantee finiteness and length.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Single-channel image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage(Grid);

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_grid(Grid::new(width, height, data)?)
    }

    pub fn from_grid(grid: Grid) -> Result<Self> {
        if let Some(i) = grid.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidData(format!(
                "value {} at index {i} outside [0, 1]",
                grid.data[i]
            )));
        }
        Ok(GrayImage(grid))
    }

    /// Clamp every value into `[0, 1]`.
    pub fn from_grid_clamped(grid: Grid) -> Self {
        GrayImage(grid.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage(Grid::filled(width, height, value.clamp(0.0, 1.0)))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }
}

impl Deref for GrayImage {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.0
    }
}

/// RGB image with three planes in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    r: Vec<f64>,
    g: Vec<f64>,
    b: Vec<f64>,
}

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

impl ColorImage {
    pub fn new(width: usize, height: usize, r: Vec<f64>, g: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::InvalidData(format!(
                "channel lengths ({}, {}, {}) do not match {width}x{height}",
                r.len(),
                g.len(),
                b.len()
            )));
        }
        if r.iter().chain(&g).chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite channel value".into()));
        }
        Ok(ColorImage {
            width,
            height,
            r,
            g,
            b,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.r[i], self.g[i], self.b[i]]
    }

    /// BT.601 luma.
    pub fn to_luminance(&self) -> GrayImage {
        let data = (0..self.r.len())
            .map(|i| (self.g[i] + KR * (self.r[i] - self.g[i]) + KB * (self.b[i] - self.g[i])).clamp(0.0, 1.0))
            .collect();
        GrayImage(Grid::from_raw(self.width, self.height, data))
    }

    /// Replace the luma of this image by `luma`, keeping its BT.601 Cb/Cr.
    pub fn with_luminance(&self, luma: &GrayImage) -> Result<ColorImage> {
        Error::check_extent(self.extent(), luma.extent())?;
        let n = self.r.len();
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let y0 = KR * self.r[i] + KG * self.g[i] + KB * self.b[i];
            let cb = (self.b[i] - y0) / (2.0 * (1.0 - KB));
            let cr = (self.r[i] - y0) / (2.0 * (1.0 - KR));
            let y = luma.as_slice()[i];
            let rr = y + 2.0 * (1.0 - KR) * cr;
            let bb = y + 2.0 * (1.0 - KB) * cb;
            let gg = (y - KR * rr - KB * bb) / KG;
            r.push(rr.clamp(0.0, 1.0));
            g.push(gg.clamp(0.0, 1.0));
            b.push(bb.clamp(0.0, 1.0));
        }
        ColorImage::new(self.width, self.height, r, g, b)
    }
}

/// Text-vision relevance grid with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMap {
    grid: Grid,
    label: Option<String>,
}

impl HeatMap {
    /// Values are clamped to `[0, 1]`.
    pub fn new(grid: Grid, label: Option<String>) -> Self {
        HeatMap {
            grid: grid.map(|v| v.clamp(0.0, 1.0)),
            label,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        HeatMap {
            grid: Grid::zeros(width, height),
            label: None,
        }
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Nearest-neighbour expansion to `width x height`.
    ///
    /// Target pixel `x` samples source column `floor(x * src_w / width)`.
    pub fn upscale_nearest(&self, width: usize, height: usize) -> Result<HeatMap> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("zero-sized upscale target".into()));
        }
        let (sw, sh) = self.grid.extent();
        if sw == 0 || sh == 0 {
            return Err(Error::InvalidParameter("zero-sized heat map".into()));
        }
        let grid = Grid::from_fn(width, height, |x, y| {
            self.grid.get(x * sw / width, y * sh / height)
        });
        Ok(HeatMap {
            grid,
            label: self.label.clone(),
        })
    }
}

impl Deref for HeatMap {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.grid
    }
}

/// Binary mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InterestMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl InterestMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidData(format!(
                "mask length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(InterestMask {
            width,
            height,
            bits,
        })
    }

    /// Accepts only 0 and 1.
    pub fn from_values(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidData(format!("mask value {v} is not binary")));
        }
        Self::new(width, height, values.iter().map(|&v| v == 1).collect())
    }

    pub fn empty(width: usize, height: usize) -> Self {
        InterestMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        InterestMask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        InterestMask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_support(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> InterestMask {
        InterestMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// Pointwise OR.
    pub fn union(&self, other: &InterestMask) -> Result<InterestMask> {
        Error::check_extent(self.extent(), other.extent())?;
        Ok(InterestMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// True when every set pixel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &InterestMask) -> bool {
        self.extent() == other.extent()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_raw(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// Labeled instance segmentation. Id 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMap {
    width: usize,
    height: usize,
    ids: Vec<u16>,
    classes: BTreeMap<u16, String>,
}

impl InstanceMap {
    pub fn new(width: usize, height: usize, ids: Vec<u16>, classes: BTreeMap<u16, String>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::InvalidData(format!(
                "label length {} does not match {width}x{height}",
                ids.len()
            )));
        }
        if let Some(id) = ids.iter().find(|&&id| id != 0 && !classes.contains_key(&id)) {
            return Err(Error::InvalidData(format!("instance id {id} has no class name")));
        }
        Ok(InstanceMap {
            width,
            height,
            ids,
            classes,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        InstanceMap {
            width,
            height,
            ids: vec![0; width * height],
            classes: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn ids(&self) -> &[u16] {
        &self.ids
    }

    pub fn classes(&self) -> &BTreeMap<u16, String> {
        &self.classes
    }

    pub fn class_of(&self, id: u16) -> Option<&str> {
        self.classes.get(&id).map(String::as_str)
    }

    /// Ids that occur in the label image, ascending.
    pub fn instance_ids(&self) -> Vec<u16> {
        let mut seen = std::collections::BTreeSet::new();
        for &id in &self.ids {
            if id != 0 {
                seen.insert(id);
            }
        }
        seen.into_iter().collect()
    }

    pub fn support(&self, id: u16) -> InterestMask {
        InterestMask {
            width: self.width,
            height: self.height,
            bits: self.ids.iter().map(|&v| v == id && id != 0).collect(),
        }
    }
}

/// Multi-channel feature grid at one pyramid level.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    width: usize,
    height: usize,
    level: usize,
    channels: Vec<Grid>,
}

impl FeatureStack {
    pub fn new(channels: Vec<Grid>, level: usize) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidData("feature stack needs at least one channel".into()))?;
        let extent = first.extent();
        for c in &channels {
            Error::check_extent(extent, c.extent())?;
        }
        Ok(FeatureStack {
            width: extent.0,
            height: extent.1,
            level,
            channels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Grid] {
        &self.channels
    }
}
