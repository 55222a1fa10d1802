//! Column and row recovery for rendered tables.
//!
//! Ruled tables: the grid skeleton is the union of horizontal and vertical
//! openings. The table is the skeleton component whose height matches the
//! longest vertical rule; column strips lie between consecutive full-height
//! vertical rules and row strips between consecutive full-width horizontal
//! rules. Where rules are missing (borderless styles, or frames without
//! inner rules) boundaries come from valleys in the ink projection profile.

use super::contours::find_contours;
use super::lines::{extract_line_segments, LineSegment};
use super::morph::{default_kernel_length, morph_open_lines};
use super::{binarize, BinaryMask, Orientation, StructureError, DEFAULT_THRESHOLD};
use crate::layout::{disambiguate_names, NamedRegion, TableLayout};
use crate::raster::{Raster, Region};

/// Text lines are closer together than columns, so row valleys may be narrow.
const ROW_GAP_MIN: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct TableParams {
    pub threshold: u8,
    /// Minimum run of empty projection bins that separates two columns.
    pub gap_min: usize,
    /// Rules shorter than this fraction of the table extent are ignored.
    pub rule_fraction: f64,
}

impl Default for TableParams {
    fn default() -> Self {
        TableParams { threshold: DEFAULT_THRESHOLD, gap_min: 6, rule_fraction: 0.9 }
    }
}

/// Parse a table whose rows are labelled `row_1 .. row_n`.
pub fn infer_table_layout<S: AsRef<str>>(
    r: &Raster,
    column_names: &[S],
    row_count: usize,
) -> Result<TableLayout, StructureError> {
    let labels: Vec<String> = (1..=row_count).map(|i| format!("row_{i}")).collect();
    infer_table_layout_with_labels(r, column_names, &labels, TableParams::default())
}

pub fn infer_table_layout_with_labels<S: AsRef<str>, L: AsRef<str>>(
    r: &Raster,
    column_names: &[S],
    row_labels: &[L],
    params: TableParams,
) -> Result<TableLayout, StructureError> {
    if column_names.is_empty() {
        return Err(StructureError::InvalidArgument("column_names must be nonempty".into()));
    }
    if row_labels.is_empty() {
        return Err(StructureError::InvalidArgument("row_count must be at least 1".into()));
    }
    let n_cols = column_names.len();
    let n_rows = row_labels.len();
    let mask = binarize(r, params.threshold);
    if mask.count_ones() == 0 {
        return Err(StructureError::DetectionFailed("image has no ink".into()));
    }
    // glyph strokes can pass for short rules, so a grid that does not fit
    // the requested shape falls back to the profile path
    match Grid::detect(&mask, params) {
        Some(g) => {
            let text = mask.minus(&g.skeleton);
            let cols = g.column_bounds(&text, n_cols, params);
            let rows = g.row_bounds(&text, n_rows);
            assemble(g.table, cols, rows, column_names, row_labels).or_else(|e| {
                let (table, cols, rows) = borderless(&mask, n_cols, n_rows, params).map_err(|_| e.clone())?;
                assemble(table, cols, rows, column_names, row_labels).map_err(|_| e)
            })
        }
        None => {
            let (table, cols, rows) = borderless(&mask, n_cols, n_rows, params)?;
            assemble(table, cols, rows, column_names, row_labels)
        }
    }
}

fn assemble<S: AsRef<str>, L: AsRef<str>>(
    table: Region,
    col_bounds: Bounds,
    row_bounds: Bounds,
    column_names: &[S],
    row_labels: &[L],
) -> Result<TableLayout, StructureError> {
    let (n_cols, n_rows) = (column_names.len(), row_labels.len());
    let cols = col_bounds.ok_or_else(|| mismatch("columns", n_cols))?;
    let rows = row_bounds.ok_or_else(|| mismatch("rows", n_rows))?;
    let (header, body) = if rows.len() == n_rows + 1 {
        (Some(rows[0]), &rows[1..])
    } else if rows.len() == n_rows {
        (None, &rows[..])
    } else {
        return Err(StructureError::LayoutMismatch {
            what: "rows",
            detected: rows.len().saturating_sub(1),
            expected: n_rows,
        });
    };
    if cols.len() != n_cols {
        return Err(StructureError::LayoutMismatch { what: "columns", detected: cols.len(), expected: n_cols });
    }

    let names = disambiguate_names(column_names);
    let columns = names
        .into_iter()
        .zip(&cols)
        .map(|(name, &(a, b))| NamedRegion::new(name, Region::new(a, table.y1, b, table.y2)))
        .collect();
    let rows = row_labels
        .iter()
        .zip(body)
        .map(|(l, &(a, b))| NamedRegion::new(l.as_ref(), Region::new(table.x1, a, table.x2, b)))
        .collect();
    Ok(TableLayout {
        table_region: table,
        columns,
        rows,
        header_region: header.map(|(a, b)| Region::new(table.x1, a, table.x2, b)),
    })
}

fn mismatch(what: &'static str, expected: usize) -> StructureError {
    StructureError::LayoutMismatch { what, detected: 0, expected }
}

/// Longest by length, ties broken by position.
fn longest(segs: &[LineSegment]) -> Option<&LineSegment> {
    segs.iter().min_by_key(|s| (std::cmp::Reverse(s.len()), s.position))
}

struct Grid {
    table: Region,
    skeleton: BinaryMask,
    /// Full-height vertical rule positions, ascending.
    verticals: Vec<i64>,
    /// Full-width horizontal rule positions, ascending.
    horizontals: Vec<i64>,
}

impl Grid {
    fn detect(mask: &BinaryMask, params: TableParams) -> Option<Grid> {
        let (w, h) = (mask.width(), mask.height());
        let kh = default_kernel_length(w, h, Orientation::Horizontal);
        let kv = default_kernel_length(w, h, Orientation::Vertical);
        let hmask = morph_open_lines(mask, Orientation::Horizontal, kh);
        let vmask = morph_open_lines(mask, Orientation::Vertical, kv);
        let hsegs = extract_line_segments(&hmask, Orientation::Horizontal, kh);
        let vsegs = extract_line_segments(&vmask, Orientation::Vertical, kv);
        let lv = *longest(&vsegs)?;
        let lh = *longest(&hsegs)?;

        let bits = hmask.bits().iter().zip(vmask.bits()).map(|(&a, &b)| a || b).collect();
        let skeleton = BinaryMask::from_bits(w, h, bits);
        let tol = (lv.len() as i64 / 50).max(3);
        let table = find_contours(&skeleton)
            .into_iter()
            .find(|c| (c.bbox.height() - lv.len() as i64).abs() <= tol && c.bbox.width() >= lh.len() as i64 / 2)
            .map(|c| c.bbox)
            .unwrap_or_else(|| Region::new(lh.start as i64, lv.start as i64, lh.end as i64, lv.end as i64));
        if table.width() < 4 || table.height() < 4 {
            return None;
        }

        let full = |s: &LineSegment, extent: i64| s.len() as f64 >= params.rule_fraction * extent as f64;
        let verticals: Vec<i64> = vsegs
            .iter()
            .filter(|s| full(s, table.height()))
            .map(|s| s.position as i64)
            .filter(|&p| p >= table.x1 - 2 && p <= table.x2 + 2)
            .collect();
        let horizontals: Vec<i64> = hsegs
            .iter()
            .filter(|s| full(s, table.width()))
            .map(|s| s.position as i64)
            .filter(|&p| p >= table.y1 - 2 && p <= table.y2 + 2)
            .collect();
        if verticals.len() < 2 && horizontals.len() < 2 {
            return None;
        }
        Some(Grid { table, skeleton, verticals, horizontals })
    }

    fn column_bounds(&self, text: &BinaryMask, n: usize, params: TableParams) -> Option<Vec<(i64, i64)>> {
        if self.verticals.len() == n + 1 {
            return Some(self.verticals.windows(2).map(|p| (p[0], p[1])).collect());
        }
        // frame without inner rules: split the interior by the ink profile
        let t = self.table;
        let span = Region::new(t.x1, t.y1 + 2, t.x2, t.y2 - 2);
        let cuts = profile_cuts(text, span, Orientation::Vertical, n, params.gap_min)?;
        Some(bounds_from_cuts(t.x1, t.x2, &cuts))
    }

    fn row_bounds(&self, text: &BinaryMask, n: usize) -> Option<Vec<(i64, i64)>> {
        let strips = self.horizontals.len().saturating_sub(1);
        if strips == n + 1 || strips == n {
            return Some(self.horizontals.windows(2).map(|p| (p[0], p[1])).collect());
        }
        let t = self.table;
        let span = Region::new(t.x1 + 2, t.y1, t.x2 - 2, t.y2);
        // assume a header row when the profile can supply one
        let cuts = profile_cuts(text, span, Orientation::Horizontal, n + 1, ROW_GAP_MIN)
            .or_else(|| profile_cuts(text, span, Orientation::Horizontal, n, ROW_GAP_MIN))?;
        Some(bounds_from_cuts(t.y1, t.y2, &cuts))
    }
}

/// Zero-runs of a projection profile: `(first, last)` bin, interior only.
fn valleys(profile: &[usize]) -> Vec<(usize, usize)> {
    let Some(first) = profile.iter().position(|&v| v > 0) else {
        return Vec::new();
    };
    let last = profile.iter().rposition(|&v| v > 0).unwrap();
    let mut out = Vec::new();
    let mut i = first;
    while i <= last {
        if profile[i] == 0 {
            let s = i;
            while profile[i] == 0 {
                i += 1;
            }
            out.push((s, i - 1));
        } else {
            i += 1;
        }
    }
    out
}

/// Ink count per column (`Vertical`: splits along x) or per row
/// (`Horizontal`: splits along y) within `span`.
fn profile(m: &BinaryMask, span: Region, split: Orientation) -> (Vec<usize>, i64) {
    let s = span.clamp_to(m.width() as u32, m.height() as u32).unwrap_or(Region::new(0, 0, 0, 0));
    match split {
        Orientation::Vertical => {
            let mut p = vec![0; s.width() as usize];
            for y in s.y1..=s.y2 {
                for x in s.x1..=s.x2 {
                    if m.get(x as usize, y as usize) {
                        p[(x - s.x1) as usize] += 1;
                    }
                }
            }
            (p, s.x1)
        }
        Orientation::Horizontal => {
            let mut p = vec![0; s.height() as usize];
            for y in s.y1..=s.y2 {
                for x in s.x1..=s.x2 {
                    if m.get(x as usize, y as usize) {
                        p[(y - s.y1) as usize] += 1;
                    }
                }
            }
            (p, s.y1)
        }
    }
}

/// The `parts - 1` widest valleys of at least `gap_min` bins, as absolute
/// `(first, last)` coordinates in ascending order. `None` when there are
/// too few.
fn profile_cuts(m: &BinaryMask, span: Region, split: Orientation, parts: usize, gap_min: usize) -> Option<Vec<(i64, i64)>> {
    let (p, origin) = profile(m, span, split);
    if p.iter().all(|&v| v == 0) {
        return None;
    }
    let mut vs: Vec<(usize, usize)> = valleys(&p).into_iter().filter(|(a, b)| b - a + 1 >= gap_min).collect();
    if vs.len() + 1 < parts {
        return None;
    }
    vs.sort_by_key(|&(a, b)| (std::cmp::Reverse(b - a), a));
    vs.truncate(parts - 1);
    vs.sort();
    Some(vs.into_iter().map(|(a, b)| (origin + a as i64, origin + b as i64)).collect())
}

/// Adjacent inclusive strips from `lo` to `hi`, split at valley midpoints.
fn bounds_from_cuts(lo: i64, hi: i64, cuts: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut edges = vec![lo];
    for &(a, b) in cuts {
        edges.push((a + b + 1) / 2);
    }
    let mut out = Vec::with_capacity(cuts.len() + 1);
    for (i, &e) in edges.iter().enumerate() {
        let end = edges.get(i + 1).map_or(hi, |&n| n - 1);
        out.push((e, end));
    }
    out
}

type Bounds = Option<Vec<(i64, i64)>>;

fn borderless(mask: &BinaryMask, n_cols: usize, n_rows: usize, params: TableParams) -> Result<(Region, Bounds, Bounds), StructureError> {
    let all = Region::new(0, 0, mask.width() as i64 - 1, mask.height() as i64 - 1);
    let (px, ox) = profile(mask, all, Orientation::Vertical);
    let (py, oy) = profile(mask, all, Orientation::Horizontal);
    let (Some(x0), Some(y0)) = (px.iter().position(|&v| v > 0), py.iter().position(|&v| v > 0)) else {
        return Err(StructureError::DetectionFailed("image has no ink".into()));
    };
    let ink = Region::new(
        ox + x0 as i64,
        oy + y0 as i64,
        ox + px.iter().rposition(|&v| v > 0).unwrap() as i64,
        oy + py.iter().rposition(|&v| v > 0).unwrap() as i64,
    );
    let col_cuts = profile_cuts(mask, ink, Orientation::Vertical, n_cols, params.gap_min);
    let row_cuts = profile_cuts(mask, ink, Orientation::Horizontal, n_rows + 1, ROW_GAP_MIN)
        .or_else(|| profile_cuts(mask, ink, Orientation::Horizontal, n_rows, ROW_GAP_MIN));
    if col_cuts.is_none() && row_cuts.is_none() && n_cols + n_rows > 2 {
        return Err(StructureError::DetectionFailed("no rules and no text gaps found".into()));
    }
    // cell padding estimate: half the narrowest separating gap
    let pad = col_cuts
        .iter()
        .chain(row_cuts.iter())
        .flatten()
        .map(|&(a, b)| (b - a + 1) / 2)
        .min()
        .unwrap_or(0);
    let table = Region::new(ink.x1 - pad, ink.y1 - pad, ink.x2 + pad, ink.y2 + pad)
        .clamp_to(mask.width() as u32, mask.height() as u32)
        .unwrap_or(ink);
    let cols = col_cuts.map(|c| bounds_from_cuts(table.x1, table.x2, &c));
    let rows = row_cuts.map(|c| bounds_from_cuts(table.y1, table.y2, &c));
    Ok((table, cols, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Color;

    /// Hand-built 3x(1+2) grid with 1 px rules and a few ink blobs.
    fn ruled() -> Raster {
        let mut r = Raster::filled(121, 61, Color::WHITE);
        for x in [10, 50, 80, 110] {
            r = r.fill_opaque(Region::new(x, 5, x, 55), Color::BLACK).unwrap();
        }
        for y in [5, 20, 38, 55] {
            r = r.fill_opaque(Region::new(10, y, 110, y), Color::BLACK).unwrap();
        }
        r.fill_opaque(Region::new(14, 9, 30, 15), Color::BLACK).unwrap()
    }

    #[test]
    fn ruled_grid_strips() {
        let t = infer_table_layout(&ruled(), &["A", "B", "C"], 2).unwrap();
        assert_eq!(t.table_region, Region::new(10, 5, 110, 55));
        let xs: Vec<_> = t.columns.iter().map(|c| (c.region.x1, c.region.x2)).collect();
        assert_eq!(xs, vec![(10, 50), (50, 80), (80, 110)]);
        let ys: Vec<_> = t.rows.iter().map(|c| (c.region.y1, c.region.y2)).collect();
        assert_eq!(ys, vec![(20, 38), (38, 55)]);
        assert_eq!(t.header_region, Some(Region::new(10, 5, 110, 20)));
        assert_eq!(t.rows[1].name, "row_2");
    }

    #[test]
    fn wrong_column_count_is_mismatch() {
        let err = infer_table_layout(&ruled(), &["A", "B"], 2).unwrap_err();
        assert!(matches!(err, StructureError::LayoutMismatch { what: "columns", .. }), "{err}");
        let err = infer_table_layout(&ruled(), &["A", "B", "C"], 5).unwrap_err();
        assert!(matches!(err, StructureError::LayoutMismatch { what: "rows", .. }), "{err}");
    }

    #[test]
    fn blank_image_fails_detection() {
        let r = Raster::filled(50, 50, Color::WHITE);
        assert!(matches!(infer_table_layout(&r, &["A"], 1), Err(StructureError::DetectionFailed(_))));
    }

    #[test]
    fn duplicate_column_names_disambiguated() {
        let t = infer_table_layout(&ruled(), &["Wins", "Wins", "Team"], 2).unwrap();
        let names: Vec<_> = t.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["Wins", "Wins#2", "Team"]);
    }

    #[test]
    fn valley_helpers() {
        assert_eq!(valleys(&[0, 1, 0, 0, 2, 0, 3, 0]), vec![(2, 3), (5, 5)]);
        assert_eq!(bounds_from_cuts(0, 99, &[(40, 49)]), vec![(0, 44), (45, 99)]);
    }
}
