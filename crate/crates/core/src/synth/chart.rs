use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{draw_text, font, GroundTruth, SpecError, TextBox, BACKGROUNDS, BAR_COLORS, INKS};
use crate::layout::{ChartKind, ChartLayout, NamedRegion, StructureLayout};
use crate::raster::{Color, Raster, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartStyle {
    pub background: Color,
    pub bar_color: Color,
    pub ink: Color,
    pub font_scale: u32,
}

impl Default for ChartStyle {
    fn default() -> Self {
        ChartStyle { background: Color::WHITE, bar_color: BAR_COLORS[0], ink: Color::BLACK, font_scale: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub seed: u64,
    pub kind: ChartKind,
    pub title: String,
    /// One series per subplot; bar kinds use exactly one.
    pub series: Vec<Series>,
    /// `(rows, cols)` of the subplot grid.
    #[serde(default)]
    pub grid: (usize, usize),
    pub style: ChartStyle,
}

const LABELS: &[&str] = &[
    "UK", "US", "France", "China", "Japan", "Brazil", "India", "Spain", "Italy", "Canada", "Mexico", "Kenya",
    "Chile", "Peru", "Norway", "Egypt",
];

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Series {
    let mut pool: Vec<&str> = LABELS.to_vec();
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..pool.len());
        labels.push(pool.swap_remove(i).to_string());
    }
    let values = (0..n).map(|_| rng.random_range(1..=100u32) as f64).collect();
    Series { labels, values }
}

impl ChartSpec {
    pub fn random(seed: u64, kind: ChartKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let style = ChartStyle {
            background: *BACKGROUNDS.choose(&mut rng).unwrap(),
            bar_color: *BAR_COLORS.choose(&mut rng).unwrap(),
            ink: *INKS.choose(&mut rng).unwrap(),
            font_scale: rng.random_range(1..=2),
        };
        let (grid, series) = match kind {
            ChartKind::MultiSubplot => {
                let (r, c) = loop {
                    let g = (rng.random_range(1..=3), rng.random_range(1..=3));
                    if g.0 * g.1 >= 2 {
                        break g;
                    }
                };
                let n = rng.random_range(2..=5);
                ((r, c), (0..r * c).map(|_| random_series(&mut rng, n)).collect())
            }
            _ => {
                let n = rng.random_range(2..=9);
                ((1, 1), vec![random_series(&mut rng, n)])
            }
        };
        ChartSpec { seed, kind, title: format!("Chart {}", seed % 1000), series, grid, style }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.series.is_empty() {
            return Err(SpecError("chart needs at least one series".into()));
        }
        for s in &self.series {
            if s.labels.is_empty() || s.labels.len() != s.values.len() {
                return Err(SpecError("each series needs matching, nonempty labels and values".into()));
            }
            if s.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SpecError("bar values must be finite and non-negative".into()));
            }
        }
        match self.kind {
            ChartKind::MultiSubplot => {
                if self.grid.0 * self.grid.1 != self.series.len() || self.series.len() < 2 {
                    return Err(SpecError("subplot grid must hold one series per cell, at least two".into()));
                }
            }
            _ if self.series.len() != 1 => return Err(SpecError("bar charts take exactly one series".into())),
            _ => {}
        }
        if !(1..=2).contains(&self.style.font_scale) {
            return Err(SpecError("font scale must be 1 or 2".into()));
        }
        Ok(())
    }
}

pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v:.1}")
    }
}

fn bar_len(v: f64, max: f64, full: i64) -> i64 {
    if max <= 0.0 {
        0
    } else {
        (v / max * full as f64).round() as i64
    }
}

const MARGIN: i64 = 12;
const PLOT_EXTENT: i64 = 160;

pub fn render_chart(spec: &ChartSpec) -> Result<(Raster, GroundTruth), SpecError> {
    spec.validate()?;
    match spec.kind {
        ChartKind::VerticalBar => Ok(vertical(spec)),
        ChartKind::HorizontalBar => Ok(horizontal(spec)),
        ChartKind::MultiSubplot => Ok(subplots(spec)),
    }
}

fn vertical(spec: &ChartSpec) -> (Raster, GroundTruth) {
    let st = &spec.style;
    let scale = st.font_scale as usize;
    let th = font::text_height(scale) as i64;
    let s = &spec.series[0];
    let max = s.values.iter().cloned().fold(0.0, f64::max);
    let widest = s.labels.iter().map(|l| font::text_width(l, scale)).max().unwrap_or(0) as i64;
    let slot = (widest + 10).max(28);
    let bar_w = (slot * 3 / 5).max(6);

    let plot_top = MARGIN + th + 10;
    let axis_x = MARGIN + 4;
    let axis_y = plot_top + th + 4 + PLOT_EXTENT;
    let plot_right = axis_x + slot * s.labels.len() as i64 + 6;
    let label_bottom = axis_y + 4 + th;
    let width = (plot_right + MARGIN + 1) as u32;
    let height = (label_bottom + MARGIN + 1) as u32;
    let mut img = Raster::filled(width, height, st.background);
    let mut text_boxes = vec![TextBox { text: spec.title.clone(), region: draw_text(&mut img, MARGIN, MARGIN, &spec.title, scale, st.ink) }];

    img.paint_rect(Region::new(axis_x, plot_top, axis_x, axis_y), st.ink);
    img.paint_rect(Region::new(axis_x, axis_y, plot_right, axis_y), st.ink);

    let mut bars = Vec::new();
    let mut entries = Vec::new();
    for (i, (label, &v)) in s.labels.iter().zip(&s.values).enumerate() {
        let cx = axis_x + 1 + slot * i as i64 + slot / 2;
        let h = bar_len(v, max, PLOT_EXTENT);
        let bar = Region::new(cx - bar_w / 2, axis_y - h, cx - bar_w / 2 + bar_w - 1, axis_y - 1);
        if h > 0 {
            img.paint_rect(bar, st.bar_color);
        }
        bars.push(bar);
        let vt = format_value(v);
        let vw = font::text_width(&vt, scale) as i64;
        let vbox = draw_text(&mut img, cx - vw / 2, axis_y - h - 3 - th, &vt, scale, st.ink);
        text_boxes.push(TextBox { text: vt, region: vbox });
        let lw = font::text_width(label, scale) as i64;
        let lbox = draw_text(&mut img, cx - lw / 2, axis_y + 4, label, scale, st.ink);
        text_boxes.push(TextBox { text: label.clone(), region: lbox });
        entries.push(NamedRegion::new(label.clone(), lbox));
    }
    let layout = ChartLayout {
        kind: ChartKind::VerticalBar,
        plot_region: Region::new(MARGIN, plot_top, plot_right, label_bottom),
        axis_entries: entries,
        subplots: Vec::new(),
    };
    (img, GroundTruth { layout: StructureLayout::Chart(layout), borderless: false, text_boxes, bars })
}

fn horizontal(spec: &ChartSpec) -> (Raster, GroundTruth) {
    let st = &spec.style;
    let scale = st.font_scale as usize;
    let th = font::text_height(scale) as i64;
    let s = &spec.series[0];
    let max = s.values.iter().cloned().fold(0.0, f64::max);
    let widest = s.labels.iter().map(|l| font::text_width(l, scale)).max().unwrap_or(0) as i64;
    let slot = (th + 10).max(20);
    let bar_h = (slot * 3 / 5).max(6);
    let value_room = font::text_width("000.0", scale) as i64 + 6;

    let plot_top = MARGIN + th + 10;
    let axis_x = MARGIN + widest + 6;
    let axis_y = plot_top + slot * s.labels.len() as i64 + 2;
    let plot_right = axis_x + 1 + 2 * PLOT_EXTENT + value_room;
    let width = (plot_right + MARGIN + 1) as u32;
    let height = (axis_y + MARGIN + 1) as u32;
    let mut img = Raster::filled(width, height, st.background);
    let mut text_boxes = vec![TextBox { text: spec.title.clone(), region: draw_text(&mut img, MARGIN, MARGIN, &spec.title, scale, st.ink) }];

    img.paint_rect(Region::new(axis_x, plot_top, axis_x, axis_y), st.ink);
    img.paint_rect(Region::new(axis_x, axis_y, plot_right - value_room, axis_y), st.ink);

    let mut bars = Vec::new();
    let mut entries = Vec::new();
    for (i, (label, &v)) in s.labels.iter().zip(&s.values).enumerate() {
        let cy = plot_top + slot * i as i64 + slot / 2;
        let len = bar_len(v, max, 2 * PLOT_EXTENT);
        let bar = Region::new(axis_x + 1, cy - bar_h / 2, axis_x + len, cy - bar_h / 2 + bar_h - 1);
        if len > 0 {
            img.paint_rect(bar, st.bar_color);
        }
        bars.push(bar);
        let vt = format_value(v);
        let vbox = draw_text(&mut img, axis_x + len + 4, cy - th / 2, &vt, scale, st.ink);
        text_boxes.push(TextBox { text: vt, region: vbox });
        let lw = font::text_width(label, scale) as i64;
        let lbox = draw_text(&mut img, axis_x - 4 - lw, cy - th / 2, label, scale, st.ink);
        text_boxes.push(TextBox { text: label.clone(), region: lbox });
        entries.push(NamedRegion::new(label.clone(), lbox));
    }
    let layout = ChartLayout {
        kind: ChartKind::HorizontalBar,
        plot_region: Region::new(MARGIN, plot_top, plot_right, axis_y),
        axis_entries: entries,
        subplots: Vec::new(),
    };
    (img, GroundTruth { layout: StructureLayout::Chart(layout), borderless: false, text_boxes, bars })
}

fn subplots(spec: &ChartSpec) -> (Raster, GroundTruth) {
    let st = &spec.style;
    let scale = st.font_scale as usize;
    let th = font::text_height(scale) as i64;
    let (rows, cols) = spec.grid;
    let (fw, fh) = (150i64, 110i64);
    let gap = 18 + th;
    let top = MARGIN + th + 12;
    let width = (2 * MARGIN + cols as i64 * fw + (cols as i64 - 1) * gap) as u32;
    let height = (top + rows as i64 * (fh + th + 6) + (rows as i64 - 1) * gap + MARGIN) as u32;
    let mut img = Raster::filled(width, height, st.background);
    let mut text_boxes = vec![TextBox { text: spec.title.clone(), region: draw_text(&mut img, MARGIN, MARGIN, &spec.title, scale, st.ink) }];
    let mut bars = Vec::new();
    let mut frames = Vec::new();

    for (k, s) in spec.series.iter().enumerate() {
        let (ri, ci) = ((k / cols) as i64, (k % cols) as i64);
        let x1 = MARGIN + ci * (fw + gap);
        let y1 = top + th + 6 + ri * (fh + th + 6 + gap);
        let frame = Region::new(x1, y1, x1 + fw - 1, y1 + fh - 1);
        let name = format!("({})", (b'a' + k as u8) as char);
        text_boxes.push(TextBox { text: name.clone(), region: draw_text(&mut img, x1, y1 - th - 4, &name, scale, st.ink) });
        img.paint_rect(Region::new(frame.x1, frame.y1, frame.x2, frame.y1), st.ink);
        img.paint_rect(Region::new(frame.x1, frame.y2, frame.x2, frame.y2), st.ink);
        img.paint_rect(Region::new(frame.x1, frame.y1, frame.x1, frame.y2), st.ink);
        img.paint_rect(Region::new(frame.x2, frame.y1, frame.x2, frame.y2), st.ink);

        let max = s.values.iter().cloned().fold(0.0, f64::max);
        let n = s.values.len() as i64;
        let slot = (fw - 2) / n;
        let bw = (slot * 3 / 5).max(4);
        for (i, &v) in s.values.iter().enumerate() {
            let cx = frame.x1 + 1 + slot * i as i64 + slot / 2;
            let h = bar_len(v, max, fh - 20);
            let bar = Region::new(cx - bw / 2, frame.y2 - h, cx - bw / 2 + bw - 1, frame.y2 - 1);
            if h > 0 {
                img.paint_rect(bar, st.bar_color);
            }
            bars.push(bar);
        }
        frames.push(NamedRegion::new(format!("subplot_{k}"), frame));
    }
    let layout = ChartLayout {
        kind: ChartKind::MultiSubplot,
        plot_region: Region::new(0, 0, width as i64 - 1, height as i64 - 1),
        axis_entries: Vec::new(),
        subplots: frames,
    };
    (img, GroundTruth { layout: StructureLayout::Chart(layout), borderless: false, text_boxes, bars })
}
