//! Recovering named regions from rendered tables and charts.
//!
//! The pipeline is classic document-image analysis: binarize, isolate long
//! rules with a line-shaped morphological opening, collect line segments and
//! connected components, then assemble a [`TableLayout`](crate::layout::TableLayout)
//! or chart candidates from them.

pub mod chart;
pub mod contours;
pub mod lines;
pub mod morph;
pub mod table;

use thiserror::Error;

use crate::raster::Raster;

pub use chart::{bar_regions_from_axis, detect_subplot_candidates, detect_plot_region};
pub use contours::{find_contours, Contour};
pub use lines::{extract_line_segments, LineSegment, MERGE_GAP};
pub use morph::{default_kernel_length, morph_open_lines};
pub use table::{infer_table_layout, infer_table_layout_with_labels, TableParams};

/// Default ink threshold: structured images are dark ink on a light ground.
pub const DEFAULT_THRESHOLD: u8 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("LayoutMismatch: detected {detected} {what}, expected {expected}")]
    LayoutMismatch { what: &'static str, detected: usize, expected: usize },
    #[error("DetectionFailed: {0}")]
    DetectionFailed(String),
    #[error("UnknownLabel: `{label}` is not an axis entry (available: {})", available.join(", "))]
    UnknownLabel { label: String, available: Vec<String> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Row-major foreground bitmap; `true` is ink.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryMask({}x{}, {} set)", self.width, self.height, self.count_ones())
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "bit count must equal width x height");
        BinaryMask { width, height, bits }
    }

    /// Parse rows of `#` (ink) and anything else (background).
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let bits = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), width, "ragged ascii mask");
                r.bytes().map(|b| b == b'#')
            })
            .collect();
        BinaryMask { width, height, bits }
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

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `self ⊆ other`, bitwise.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Index-wise AND NOT.
    pub fn minus(&self, other: &BinaryMask) -> BinaryMask {
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        BinaryMask { width: self.width, height: self.height, bits }
    }
}

/// Rounded ITU-R BT.601 luma of an RGB triple.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Foreground iff luma is strictly below `threshold`.
pub fn binarize(r: &Raster, threshold: u8) -> BinaryMask {
    let bits = r
        .as_bytes()
        .chunks_exact(4)
        .map(|p| luminance(p[0], p[1], p[2]) < threshold)
        .collect();
    BinaryMask { width: r.width() as usize, height: r.height() as usize, bits }
}
