//! Geometry of the recursive 3x3 region tree.
//!
//! All intervals are half-open. A split places its boundaries at
//! `floor(k * side / 3)` for `k` in `0..=3`, so children of a non-divisible
//! side differ by at most one pixel and always partition the parent.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageRef, CANONICAL_GRAY};

/// Axis-aligned half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bbox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Bbox {
    pub const fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Bbox { x0, y0, x1, y1 }
    }

    pub const fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub const fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub const fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub const fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn intersect(&self, other: &Bbox) -> Option<Bbox> {
        let b = Bbox {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (!b.is_empty()).then_some(b)
    }

    pub fn overlap_area(&self, other: &Bbox) -> u64 {
        self.intersect(other).map_or(0, |b| b.area())
    }

    pub fn contains(&self, other: &Bbox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }
}

/// Boundaries of a 3-way split of `[start, start + len)`.
pub fn split_bounds(start: u32, len: u32) -> [u32; 4] {
    let l = len as u64;
    [0u64, 1, 2, 3].map(|k| start + (k * l / 3) as u32)
}

/// A node of the 3x3 split tree.
///
/// Depth 0 is the whole image (empty path); the nine top-level cells sit at
/// depth 1. `path[i]` is the row-major child index chosen at depth `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    #[serde(flatten)]
    pub bbox: Bbox,
    pub depth: u32,
    pub path: Vec<u8>,
}

impl Region {
    pub fn root(width: u32, height: u32) -> Self {
        Region {
            bbox: Bbox::new(0, 0, width, height),
            depth: 0,
            path: Vec::new(),
        }
    }

    /// Rebuilds a region by replaying `path` from the full image.
    pub fn from_path(width: u32, height: u32, path: &[u8]) -> Result<Self> {
        let mut region = Region::root(width, height);
        for &k in path {
            if k > 8 {
                return Err(Error::InvalidPath(k));
            }
            region = region.child(k)?;
        }
        Ok(region)
    }

    pub fn width(&self) -> u32 {
        self.bbox.width()
    }

    pub fn height(&self) -> u32 {
        self.bbox.height()
    }

    pub fn max_side(&self) -> u32 {
        max_side(self)
    }

    pub fn can_split(&self) -> bool {
        self.width() >= 3 && self.height() >= 3
    }

    /// Row-major index of the top-level cell this region descends from.
    pub fn coarse_index(&self) -> Option<(usize, usize)> {
        self.path.first().map(|&k| (k as usize / 3, k as usize % 3))
    }

    pub fn is_ancestor_of(&self, other: &Region) -> bool {
        self.depth < other.depth && other.path.starts_with(&self.path)
    }

    fn child(&self, k: u8) -> Result<Region> {
        if !self.can_split() {
            return Err(Error::IndivisibleRegion {
                width: self.width(),
                height: self.height(),
            });
        }
        let xs = split_bounds(self.bbox.x0, self.width());
        let ys = split_bounds(self.bbox.y0, self.height());
        let (r, c) = (k as usize / 3, k as usize % 3);
        let mut path = self.path.clone();
        path.push(k);
        Ok(Region {
            bbox: Bbox::new(xs[c], ys[r], xs[c + 1], ys[r + 1]),
            depth: self.depth + 1,
            path,
        })
    }
}

/// Splits a region into its nine row-major children.
pub fn split3x3(region: &Region) -> Result<[Region; 9]> {
    if !region.can_split() {
        return Err(Error::IndivisibleRegion {
            width: region.width(),
            height: region.height(),
        });
    }
    let children: Vec<Region> = (0..9u8)
        .map(|k| region.child(k))
        .collect::<Result<_>>()?;
    Ok(children.try_into().expect("nine children"))
}

pub fn max_side(region: &Region) -> u32 {
    region.width().max(region.height())
}

/// Backbone family used to pick the minimum search unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackboneClass {
    Onevision,
    #[default]
    Other,
}

/// Leaf size for the search, chosen from the backbone and the image's long side.
pub fn min_search_unit(backbone: BackboneClass, width: u32, height: u32) -> u32 {
    let long = width.max(height);
    match backbone {
        BackboneClass::Onevision if long >= 4000 => 448,
        BackboneClass::Onevision => 112,
        BackboneClass::Other if long > 5096 => 336,
        BackboneClass::Other => 224,
    }
}

/// One `u_min x u_min` cell of the tiling lattice over a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tile {
    pub parent: Bbox,
    pub row: u32,
    pub col: u32,
    /// Source pixels covered by this tile, clipped to the parent.
    pub bbox: Bbox,
    pub u_min: u32,
}

impl Tile {
    /// Renders the tile content, gray-padded on the right and bottom.
    pub fn render(&self, image: &dyn ImageRef) -> RgbImage {
        let mut out = RgbImage::from_pixel(self.u_min, self.u_min, Rgb(CANONICAL_GRAY));
        let content = image.crop(self.bbox);
        image::imageops::replace(&mut out, &content, 0, 0);
        out
    }

    pub fn is_padded(&self) -> bool {
        self.bbox.width() < self.u_min || self.bbox.height() < self.u_min
    }
}

/// Shape of the tile lattice over a region: `(rows, cols)`.
pub fn lattice_shape(bbox: &Bbox, u_min: u32) -> (u32, u32) {
    (bbox.height().div_ceil(u_min), bbox.width().div_ceil(u_min))
}

/// Source bbox of lattice cell `(row, col)` over `parent`, clipped to the parent.
pub fn tile_bbox(parent: &Bbox, u_min: u32, row: u32, col: u32) -> Bbox {
    let x0 = parent.x0 + col * u_min;
    let y0 = parent.y0 + row * u_min;
    Bbox::new(x0, y0, (x0 + u_min).min(parent.x1), (y0 + u_min).min(parent.y1))
}

/// Row-major tile lattice covering `region` exactly once.
pub fn tile_region(region: &Region, u_min: u32) -> Vec<Tile> {
    assert!(u_min >= 1, "u_min must be positive");
    let parent = region.bbox;
    let (rows, cols) = lattice_shape(&parent, u_min);
    let mut tiles = Vec::with_capacity((rows * cols) as usize);
    for row in 0..rows {
        for col in 0..cols {
            tiles.push(Tile {
                parent,
                row,
                col,
                bbox: tile_bbox(&parent, u_min, row, col),
                u_min,
            });
        }
    }
    tiles
}
