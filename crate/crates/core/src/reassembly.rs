//! Layout-aware reassembly of selected patches onto a compact canvas.
//!
//! Each selected patch is anchored to the top-level cell its path starts in.
//! Within a cell, patches are rasterized onto a fine occupancy grid at the
//! deepest selected level, empty rows and columns are dropped, and the
//! surviving cells are cropped from the source in their original order. The
//! nine blocks are then scaled to a common slot size and placed in their
//! fixed slots of a `3H_c x 3W_c` canvas.

use std::fmt;
use std::str::FromStr;

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{split_bounds, Bbox, Region};
use crate::image::{gray_image, ImageRef};

/// Finest occupancy grid side supported, in cells per axis (3^7).
pub const MAX_MASK_SIDE: u64 = 2187;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Coarse-cell anchoring plus intra-cell compaction.
    #[default]
    GlobalRelative,
    /// One compaction over a single image-wide grid.
    RelativeOnly,
    /// Patches pasted in raster order onto a near-square grid.
    Sequential,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::GlobalRelative => "global",
            Strategy::RelativeOnly => "relative",
            Strategy::Sequential => "sequential",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" | "global_relative" => Ok(Strategy::GlobalRelative),
            "relative" | "relative_only" => Ok(Strategy::RelativeOnly),
            "sequential" => Ok(Strategy::Sequential),
            _ => Err(Error::InvalidConfig(format!("unknown strategy `{s}`"))),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// What to draw in unmarked cells that survive compaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmarkedFill {
    #[default]
    Gray,
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReassemblyOptions {
    pub strategy: Strategy,
    pub fill: UnmarkedFill,
    /// Square tile side for the sequential strategy.
    pub tile_side: u32,
}

impl Default for ReassemblyOptions {
    fn default() -> Self {
        ReassemblyOptions {
            strategy: Strategy::GlobalRelative,
            fill: UnmarkedFill::Gray,
            tile_side: 224,
        }
    }
}

/// Groups regions by the top-level cell their path starts in, as `[row][col]`.
pub fn assign_coarse(regions: &[Region]) -> [[Vec<&Region>; 3]; 3] {
    let mut out: [[Vec<&Region>; 3]; 3] = Default::default();
    for r in regions {
        let (i, j) = r
            .coarse_index()
            .expect("selected regions have depth >= 1");
        out[i][j].push(r);
    }
    out
}

/// Binary fine-grid occupancy under a tree node.
///
/// `base` is the path of the node the grid lives under (the coarse cell, or
/// the whole image), and the grid has `3^levels` cells per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMask {
    pub base: Vec<u8>,
    pub levels: u32,
    pub side: usize,
    cells: Vec<bool>,
}

impl OccupancyMask {
    pub fn from_cells(base: Vec<u8>, levels: u32, cells: Vec<Vec<bool>>) -> Self {
        let side = 3usize.pow(levels);
        assert_eq!(cells.len(), side);
        assert!(cells.iter().all(|r| r.len() == side));
        OccupancyMask {
            base,
            levels,
            side,
            cells: cells.into_iter().flatten().collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.side + c]
    }

    pub fn coarse_index(&self) -> Option<(usize, usize)> {
        self.base.first().map(|&k| (k as usize / 3, k as usize % 3))
    }

    pub fn marked(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.cells.chunks(self.side).map(|r| r.to_vec()).collect()
    }
}

/// Rasterizes patches that all descend from `base` onto a fine grid at the
/// deepest patch's level. A patch `k` levels below `base` marks a square
/// block of `3^(levels - k)` cells.
pub fn build_mask(base: &[u8], patches: &[&Region]) -> Result<OccupancyMask> {
    let b = base.len();
    let deepest = patches.iter().map(|p| p.path.len()).max().unwrap_or(b);
    let levels = (deepest - b) as u32;
    let side = 3u64.saturating_pow(levels);
    if side > MAX_MASK_SIDE {
        return Err(Error::MaskTooLarge { side });
    }
    let side = side as usize;
    let mut cells = vec![false; side * side];
    for p in patches {
        assert!(p.path.starts_with(base), "patch outside the mask's node");
        let rel = &p.path[b..];
        let (mut r0, mut c0) = (0usize, 0usize);
        for &k in rel {
            r0 = r0 * 3 + k as usize / 3;
            c0 = c0 * 3 + k as usize % 3;
        }
        let block = 3usize.pow(levels - rel.len() as u32);
        r0 *= block;
        c0 *= block;
        for r in r0..r0 + block {
            cells[r * side + c0..r * side + c0 + block].fill(true);
        }
    }
    Ok(OccupancyMask {
        base: base.to_vec(),
        levels,
        side,
        cells,
    })
}

/// A mask restricted to its non-empty rows and columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactMask {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    cells: Vec<bool>,
}

impl CompactMask {
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols.len() + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        self.cells.chunks(self.cols.len()).map(|r| r.to_vec()).collect()
    }
}

/// Drops all-zero rows and columns; `None` when nothing is marked.
pub fn compress_mask(mask: &OccupancyMask) -> Option<CompactMask> {
    compress_cells(&mask.rows())
}

/// [`compress_mask`] over a plain row-major boolean matrix.
pub fn compress_cells(m: &[Vec<bool>]) -> Option<CompactMask> {
    let ncols = m.first().map_or(0, |r| r.len());
    let rows: Vec<usize> = (0..m.len()).filter(|&r| m[r].iter().any(|&v| v)).collect();
    let cols: Vec<usize> = (0..ncols).filter(|&c| m.iter().any(|row| row[c])).collect();
    if rows.is_empty() || cols.is_empty() {
        return None;
    }
    let cells = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| m[r][c]))
        .collect();
    Some(CompactMask { rows, cols, cells })
}

/// Extents of the `3^levels` fine intervals of `[start, start + len)`.
pub fn fine_spans(start: u32, len: u32, levels: u32) -> Vec<(u32, u32)> {
    let mut spans = vec![(start, start + len)];
    for _ in 0..levels {
        spans = spans
            .iter()
            .flat_map(|&(a, b)| {
                let s = split_bounds(a, b - a);
                [(s[0], s[1]), (s[1], s[2]), (s[2], s[3])]
            })
            .collect();
    }
    spans
}

/// Offset of `v` along the concatenation of `spans`.
fn span_offset(spans: &[(u32, u32)], v: u32) -> Option<u32> {
    let mut off = 0;
    for &(a, b) in spans {
        if (a..b).contains(&v) {
            return Some(off + v - a);
        }
        off += b - a;
    }
    None
}

/// Compacted content of one coarse cell.
#[derive(Debug, Clone)]
pub struct CoarseRegionBlock {
    pub coarse: Option<(usize, usize)>,
    pub compact: CompactMask,
    /// Source y-extent of each kept row, in order.
    pub row_spans: Vec<(u32, u32)>,
    /// Source x-extent of each kept column, in order.
    pub col_spans: Vec<(u32, u32)>,
    pub image: RgbImage,
}

impl CoarseRegionBlock {
    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn is_empty(&self) -> bool {
        self.height() == 0 || self.width() == 0
    }

    /// Union of the kept source cells.
    pub fn source_bbox(&self) -> Bbox {
        Bbox::new(
            self.col_spans.first().map_or(0, |s| s.0),
            self.row_spans.first().map_or(0, |s| s.0),
            self.col_spans.last().map_or(0, |s| s.1),
            self.row_spans.last().map_or(0, |s| s.1),
        )
    }

    /// Position of source pixel `(x, y)` inside the block, if it was kept.
    pub fn locate(&self, x: u32, y: u32) -> Option<(u32, u32)> {
        Some((span_offset(&self.col_spans, x)?, span_offset(&self.row_spans, y)?))
    }
}

/// Crops the kept cells of a compacted mask out of the source, in order.
pub fn crop_block(
    image: &dyn ImageRef,
    mask: &OccupancyMask,
    compact: &CompactMask,
    fill: UnmarkedFill,
) -> Result<CoarseRegionBlock> {
    let node = Region::from_path(image.width(), image.height(), &mask.base)?;
    let ys = fine_spans(node.bbox.y0, node.height(), mask.levels);
    let xs = fine_spans(node.bbox.x0, node.width(), mask.levels);
    let row_spans: Vec<(u32, u32)> = compact.rows.iter().map(|&r| ys[r]).collect();
    let col_spans: Vec<(u32, u32)> = compact.cols.iter().map(|&c| xs[c]).collect();
    let h: u32 = row_spans.iter().map(|s| s.1 - s.0).sum();
    let w: u32 = col_spans.iter().map(|s| s.1 - s.0).sum();
    let mut out = gray_image(w, h);
    let mut y = 0;
    for (ri, &(ya, yb)) in row_spans.iter().enumerate() {
        let mut x = 0;
        for (ci, &(xa, xb)) in col_spans.iter().enumerate() {
            let bbox = Bbox::new(xa, ya, xb, yb);
            let copy = compact.get(ri, ci) || fill == UnmarkedFill::Original;
            if copy && !bbox.is_empty() {
                image::imageops::replace(&mut out, &image.crop(bbox), x as i64, y as i64);
            }
            x += xb - xa;
        }
        y += yb - ya;
    }
    Ok(CoarseRegionBlock {
        coarse: mask.coarse_index(),
        compact: compact.clone(),
        row_spans,
        col_spans,
        image: out,
    })
}

/// Where scaled content sits inside a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub scale: f64,
    pub offset_x: u32,
    pub offset_y: u32,
    pub content_width: u32,
    pub content_height: u32,
}

/// Scales `block` uniformly to fit `(height, width)`, centers it, and pads
/// the rest with gray.
pub fn resize_pad(block: &RgbImage, height: u32, width: u32) -> (RgbImage, Placement) {
    let (bw, bh) = block.dimensions();
    assert!(bw > 0 && bh > 0 && width > 0 && height > 0);
    let scale = (height as f64 / bh as f64).min(width as f64 / bw as f64);
    let cw = ((bw as f64 * scale).round() as u32).clamp(1, width);
    let ch = ((bh as f64 * scale).round() as u32).clamp(1, height);
    let offset_x = (width - cw) / 2;
    let offset_y = (height - ch) / 2;
    let mut out = gray_image(width, height);
    if (cw, ch) == (bw, bh) {
        image::imageops::replace(&mut out, block, offset_x as i64, offset_y as i64);
    } else {
        let scaled = image::imageops::resize(block, cw, ch, FilterType::Triangle);
        image::imageops::replace(&mut out, &scaled, offset_x as i64, offset_y as i64);
    }
    (
        out,
        Placement {
            scale,
            offset_x,
            offset_y,
            content_width: cw,
            content_height: ch,
        },
    )
}

/// Provenance of one occupied canvas slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotProvenance {
    /// Canvas rectangle of the slot.
    pub slot: Bbox,
    /// Top-level cell the content came from, for anchored strategies.
    pub coarse: Option<(usize, usize)>,
    pub source_bbox: Bbox,
    pub row_spans: Vec<(u32, u32)>,
    pub col_spans: Vec<(u32, u32)>,
    #[serde(flatten)]
    pub placement: Placement,
    /// Paths of the selected patches drawn in this slot.
    pub patches: Vec<Vec<u8>>,
}

impl SlotProvenance {
    fn from_block(slot: Bbox, block: &CoarseRegionBlock, placement: Placement, patches: Vec<Vec<u8>>) -> Self {
        SlotProvenance {
            slot,
            coarse: block.coarse,
            source_bbox: block.source_bbox(),
            row_spans: block.row_spans.clone(),
            col_spans: block.col_spans.clone(),
            placement,
            patches,
        }
    }

    /// Canvas position of source pixel `(x, y)`, if this slot shows it.
    pub fn locate(&self, x: u32, y: u32) -> Option<(u32, u32)> {
        let bx = span_offset(&self.col_spans, x)?;
        let by = span_offset(&self.row_spans, y)?;
        let p = &self.placement;
        let cx = ((bx as f64 * p.scale) as u32).min(p.content_width - 1);
        let cy = ((by as f64 * p.scale) as u32).min(p.content_height - 1);
        Some((self.slot.x0 + p.offset_x + cx, self.slot.y0 + p.offset_y + cy))
    }
}

/// The reassembled image and where each piece came from.
#[derive(Debug, Clone)]
pub struct Canvas {
    pub image: RgbImage,
    pub strategy: Strategy,
    /// Common slot size `(H_c, W_c)`.
    pub cell: (u32, u32),
    pub slots: Vec<SlotProvenance>,
}

#[derive(Serialize)]
struct ProvenanceDoc<'a> {
    strategy: Strategy,
    width: u32,
    height: u32,
    cell_height: u32,
    cell_width: u32,
    slots: &'a [SlotProvenance],
}

impl Canvas {
    pub fn provenance_json(&self) -> String {
        serde_json::to_string_pretty(&ProvenanceDoc {
            strategy: self.strategy,
            width: self.image.width(),
            height: self.image.height(),
            cell_height: self.cell.0,
            cell_width: self.cell.1,
            slots: &self.slots,
        })
        .expect("provenance serializes")
    }

    /// First canvas position showing source pixel `(x, y)`.
    pub fn locate(&self, x: u32, y: u32) -> Option<(u32, u32)> {
        self.slots.iter().find_map(|s| s.locate(x, y))
    }
}

fn compact_block(
    image: &dyn ImageRef,
    base: &[u8],
    patches: &[&Region],
    fill: UnmarkedFill,
) -> Result<Option<CoarseRegionBlock>> {
    let mask = build_mask(base, patches)?;
    match compress_mask(&mask) {
        None => Ok(None),
        Some(compact) => crop_block(image, &mask, &compact, fill).map(Some),
    }
}

/// Builds the canvas for `selection` under the chosen strategy.
pub fn reassemble(image: &dyn ImageRef, selection: &[Region], opts: &ReassemblyOptions) -> Result<Canvas> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(r) = selection.iter().find(|r| r.path.is_empty()) {
        return Err(Error::InvalidConfig(format!(
            "selected region {:?} has no path",
            r.bbox
        )));
    }
    match opts.strategy {
        Strategy::GlobalRelative => global_relative(image, selection, opts.fill),
        Strategy::RelativeOnly => relative_only(image, selection, opts.fill),
        Strategy::Sequential => sequential(image, selection, opts.tile_side),
    }
}

fn global_relative(image: &dyn ImageRef, selection: &[Region], fill: UnmarkedFill) -> Result<Canvas> {
    let groups = assign_coarse(selection);
    let mut blocks = Vec::new();
    for (i, row) in groups.iter().enumerate() {
        for (j, patches) in row.iter().enumerate() {
            if patches.is_empty() {
                continue;
            }
            let base = [(i * 3 + j) as u8];
            if let Some(block) = compact_block(image, &base, patches, fill)? {
                if !block.is_empty() {
                    let paths = patches.iter().map(|p| p.path.clone()).collect();
                    blocks.push((i, j, block, paths));
                }
            }
        }
    }
    let hc = blocks.iter().map(|b| b.2.height()).max().ok_or(Error::EmptySelection)?;
    let wc = blocks.iter().map(|b| b.2.width()).max().ok_or(Error::EmptySelection)?;
    let mut canvas = gray_image(3 * wc, 3 * hc);
    let mut slots = Vec::new();
    for (i, j, block, paths) in blocks {
        let (slot_img, placement) = resize_pad(&block.image, hc, wc);
        let (x0, y0) = (j as u32 * wc, i as u32 * hc);
        image::imageops::replace(&mut canvas, &slot_img, x0 as i64, y0 as i64);
        let slot = Bbox::new(x0, y0, x0 + wc, y0 + hc);
        slots.push(SlotProvenance::from_block(slot, &block, placement, paths));
    }
    Ok(Canvas {
        image: canvas,
        strategy: Strategy::GlobalRelative,
        cell: (hc, wc),
        slots,
    })
}

fn relative_only(image: &dyn ImageRef, selection: &[Region], fill: UnmarkedFill) -> Result<Canvas> {
    let patches: Vec<&Region> = selection.iter().collect();
    let block = compact_block(image, &[], &patches, fill)?.ok_or(Error::EmptySelection)?;
    let (w, h) = block.image.dimensions();
    let placement = Placement {
        scale: 1.0,
        offset_x: 0,
        offset_y: 0,
        content_width: w,
        content_height: h,
    };
    let paths = selection.iter().map(|p| p.path.clone()).collect();
    let slot = SlotProvenance::from_block(Bbox::new(0, 0, w, h), &block, placement, paths);
    Ok(Canvas {
        image: block.image,
        strategy: Strategy::RelativeOnly,
        cell: (h, w),
        slots: vec![slot],
    })
}

fn sequential(image: &dyn ImageRef, selection: &[Region], tile_side: u32) -> Result<Canvas> {
    let tile_side = tile_side.max(1);
    let mut order: Vec<&Region> = selection.iter().collect();
    order.sort_by_key(|r| (r.bbox.y0, r.bbox.x0));
    let n = order.len() as u32;
    let cols = (n as f64).sqrt().ceil() as u32;
    let rows = n.div_ceil(cols);
    let mut canvas = gray_image(cols * tile_side, rows * tile_side);
    let mut slots = Vec::new();
    for (idx, r) in order.iter().enumerate() {
        let (row, col) = (idx as u32 / cols, idx as u32 % cols);
        let (tile, placement) = resize_pad(&image.crop(r.bbox), tile_side, tile_side);
        let (x0, y0) = (col * tile_side, row * tile_side);
        image::imageops::replace(&mut canvas, &tile, x0 as i64, y0 as i64);
        slots.push(SlotProvenance {
            slot: Bbox::new(x0, y0, x0 + tile_side, y0 + tile_side),
            coarse: None,
            source_bbox: r.bbox,
            row_spans: vec![(r.bbox.y0, r.bbox.y1)],
            col_spans: vec![(r.bbox.x0, r.bbox.x1)],
            placement,
            patches: vec![r.path.clone()],
        });
    }
    Ok(Canvas {
        image: canvas,
        strategy: Strategy::Sequential,
        cell: (tile_side, tile_side),
        slots,
    })
}
