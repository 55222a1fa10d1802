//! Deterministic table and chart renderer with exact ground truth.
//!
//! Everything here is a pure function of its spec (and the spec of its
//! seed), so corpora are reproducible byte for byte.
//!
//! Frozen style ranges:
//!
//! | style              | range                                              |
//! |--------------------|----------------------------------------------------|
//! | background         | one of [`BACKGROUNDS`] (luma >= 225)               |
//! | border             | on / off                                           |
//! | rule thickness     | 1..=2 px (border on)                               |
//! | border margin      | 4..=30 px                                          |
//! | cell padding       | 3..=8 px, 4..=8 px when borderless (gaps >= 8 px)  |
//! | font size class    | glyph scale 1 or 2 (5x7 or 10x14 px glyphs)        |
//! | row stripe         | on / off, stripe colours luma >= 210               |
//! | text / rule colour | one of [`INKS`] (luma < 100)                       |
//!
//! Charts use glyph scale 1..=2, one of [`BAR_COLORS`] and 2..=9 bars;
//! multi-subplot figures use grids from 1x2 up to 3x3.

pub mod chart;
pub mod corpus;
pub mod demo;
pub mod font;
pub mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::StructureLayout;
use crate::raster::{Color, Raster, Region};

pub use chart::{render_chart, ChartSpec, ChartStyle, Series};
pub use corpus::{make_corpus, make_subplot_corpus, make_table_corpus, synth_question, SynthItem, SynthSpec};
pub use table::{render_table, TableSpec, TableStyle};

pub const BACKGROUNDS: [Color; 5] = [
    Color::rgb(255, 255, 255),
    Color::rgb(250, 248, 240),
    Color::rgb(240, 245, 255),
    Color::rgb(245, 255, 245),
    Color::rgb(255, 250, 235),
];

pub const STRIPES: [Color; 3] = [Color::rgb(235, 235, 235), Color::rgb(225, 235, 250), Color::rgb(240, 232, 220)];

pub const INKS: [Color; 4] = [
    Color::rgb(0, 0, 0),
    Color::rgb(40, 40, 40),
    Color::rgb(20, 30, 80),
    Color::rgb(70, 50, 40),
];

pub const BAR_COLORS: [Color; 4] = [
    Color::rgb(31, 119, 180),
    Color::rgb(214, 39, 40),
    Color::rgb(44, 120, 44),
    Color::rgb(120, 70, 160),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SpecError: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBox {
    pub text: String,
    pub region: Region,
}

/// What the renderer drew, in image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub layout: StructureLayout,
    /// Table drawn without any rules.
    #[serde(default)]
    pub borderless: bool,
    /// Ink box of every text item drawn (cells, labels, titles).
    pub text_boxes: Vec<TextBox>,
    /// Filled bar rectangles, in series order.
    #[serde(default)]
    pub bars: Vec<Region>,
}

/// Draw `text` with its top-left glyph corner at `(x, y)` and return the
/// text's ink box.
pub(crate) fn draw_text(r: &mut Raster, x: i64, y: i64, text: &str, scale: usize, c: Color) -> Region {
    let (w, h) = (r.width() as i64, r.height() as i64);
    let px = [c.r, c.g, c.b, 255];
    for (dx, dy) in font::text_pixels(text, scale) {
        let (px_x, px_y) = (x + dx as i64, y + dy as i64);
        if px_x >= 0 && px_y >= 0 && px_x < w && px_y < h {
            r.put_pixel(px_x as u32, px_y as u32, px);
        }
    }
    Region::new(
        x,
        y,
        x + font::text_width(text, scale).max(1) as i64 - 1,
        y + font::text_height(scale) as i64 - 1,
    )
}
