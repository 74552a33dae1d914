//! Binary segmentation masks and their connected-component cleanup.
//!
//! Coordinates follow the pixel-center convention used throughout the crate:
//! the pixel at row `i`, column `j` is the point `(x = j, y = i)`.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask dimensions must be non-zero (got {width}x{height})")]
    ZeroSized { width: usize, height: usize },
    #[error("bit count {got} does not match {width}x{height}")]
    BitCount {
        width: usize,
        height: usize,
        got: usize,
    },
}

/// Row-major boolean grid; `true` marks foreground.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        if self.width * self.height <= 64 * 64 {
            for y in 0..self.height {
                let row: String = (0..self.width)
                    .map(|x| if self.get(x, y) { '#' } else { '.' })
                    .collect();
                writeln!(f, "{row}")?;
            }
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::ZeroSized { width, height });
        }
        if bits.len() != width * height {
            return Err(MaskError::BitCount {
                width,
                height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// An all-background mask.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be non-zero");
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                mask.bits[y * width + x] = f(x, y);
            }
        }
        mask
    }

    /// Parse an ASCII picture: `#` (or `1`) is foreground, anything else background.
    /// Lines are trimmed; blank lines are ignored.
    pub fn from_ascii(art: &str) -> Result<Self, MaskError> {
        let rows: Vec<&str> = art
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut bits = Vec::with_capacity(width * height);
        for row in &rows {
            bits.extend(row.chars().map(|c| c == '#' || c == '1'));
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Bounds-checked lookup with signed coordinates; outside the grid is background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates `(x, y)` in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Bounding box of the foreground, or `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let mut bbox: Option<BBox> = None;
        for (x, y) in self.foreground() {
            bbox = Some(match bbox {
                None => BBox::pixel(x, y),
                Some(b) => b.including(x, y),
            });
        }
        bbox
    }

    /// Rotate 90° clockwise as displayed (y down): pixel `(x, y)` moves to `(h - 1 - y, x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = Self::empty(h, w);
        for (x, y) in self.foreground() {
            out.set(h - 1 - y, x, true);
        }
        out
    }
}

/// Axis-aligned pixel box; `x1`/`y1` are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    fn pixel(x: usize, y: usize) -> Self {
        Self {
            x0: x,
            y0: y,
            x1: x + 1,
            y1: y + 1,
        }
    }

    fn including(self, x: usize, y: usize) -> Self {
        Self {
            x0: self.x0.min(x),
            y0: self.y0.min(y),
            x1: self.x1.max(x + 1),
            y1: self.y1.max(y + 1),
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn diagonal(&self) -> f64 {
        (self.width() as f64).hypot(self.height() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    /// 1-based label; matches the values written into [`Labeling::labels`].
    pub label: u32,
    pub area: usize,
    pub bbox: BBox,
    /// First pixel of the region in raster order, as `(row, col)`.
    pub top_left: (usize, usize),
}

/// Output of [`connected_components`]: a per-pixel label grid (0 = background)
/// and the regions sorted by area, largest first.
#[derive(Debug, Clone)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl Labeling {
    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Mask containing only the pixels carrying `label`.
    pub fn region_mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is unused so provisional labels start at 1
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let grand = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = grand;
            a = grand;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Label 8-connected foreground regions with a two-pass union-find scan.
///
/// Regions are ordered by area (descending), ties broken by the raster
/// position of each region's first pixel; labels are assigned `1..=n` in that
/// order.
pub fn connected_components(mask: &BinaryMask) -> Result<Labeling, MaskError> {
    let (w, h) = (mask.width, mask.height);
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut found: Option<u32> = None;
            let candidates = [
                (x as i64 - 1, y as i64),
                (x as i64 - 1, y as i64 - 1),
                (x as i64, y as i64 - 1),
                (x as i64 + 1, y as i64 - 1),
            ];
            for (nx, ny) in candidates {
                if mask.get_signed(nx, ny) {
                    let l = provisional[ny as usize * w + nx as usize];
                    match found {
                        None => found = Some(l),
                        Some(f) => sets.union(f, l),
                    }
                }
            }
            provisional[y * w + x] = found.unwrap_or_else(|| sets.make());
        }
    }

    struct Acc {
        area: usize,
        bbox: BBox,
        top_left: (usize, usize),
    }
    let mut by_root: HashMap<u32, Acc> = HashMap::new();
    let mut roots = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = provisional[y * w + x];
            if p == 0 {
                continue;
            }
            let root = sets.find(p);
            roots[y * w + x] = root;
            by_root
                .entry(root)
                .and_modify(|a| {
                    a.area += 1;
                    a.bbox = a.bbox.including(x, y);
                })
                .or_insert(Acc {
                    area: 1,
                    bbox: BBox::pixel(x, y),
                    top_left: (y, x),
                });
        }
    }
    if by_root.is_empty() {
        return Err(MaskError::EmptyMask);
    }

    let mut ordered: Vec<(u32, Acc)> = by_root.into_iter().collect();
    ordered.sort_by(|(_, a), (_, b)| b.area.cmp(&a.area).then(a.top_left.cmp(&b.top_left)));

    let mut relabel: HashMap<u32, u32> = HashMap::with_capacity(ordered.len());
    let regions = ordered
        .into_iter()
        .enumerate()
        .map(|(i, (root, acc))| {
            let label = i as u32 + 1;
            relabel.insert(root, label);
            Region {
                label,
                area: acc.area,
                bbox: acc.bbox,
                top_left: acc.top_left,
            }
        })
        .collect();
    let labels = roots
        .into_iter()
        .map(|r| if r == 0 { 0 } else { relabel[&r] })
        .collect();

    Ok(Labeling {
        width: w,
        height: h,
        labels,
        regions,
    })
}

/// Default relative area threshold for [`extract_foreground`].
pub const DEFAULT_MIN_AREA_FRAC: f64 = 0.01;

/// Keep the single largest 8-connected component.
///
/// Components smaller than `min_area_frac` of the largest are discarded as
/// noise first; of the survivors only the largest is retained.
pub fn extract_foreground(mask: &BinaryMask, min_area_frac: f64) -> Result<BinaryMask, MaskError> {
    let labeling = connected_components(mask)?;
    let largest = &labeling.regions[0];
    let threshold = min_area_frac * largest.area as f64;
    let survivors: Vec<&Region> = labeling
        .regions
        .iter()
        .filter(|r| r.area as f64 >= threshold)
        .collect();
    tracing::trace!(
        dropped = labeling.regions.len() - survivors.len(),
        kept_candidates = survivors.len(),
        "foreground cleanup"
    );
    Ok(labeling.region_mask(largest.label))
}
