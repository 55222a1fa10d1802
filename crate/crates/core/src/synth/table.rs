use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{draw_text, font, GroundTruth, SpecError, TextBox, BACKGROUNDS, INKS, STRIPES};
use crate::layout::{NamedRegion, StructureLayout, TableLayout};
use crate::raster::{Color, Raster, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStyle {
    pub background: Color,
    pub border: bool,
    pub rule_thickness: u32,
    pub rule_color: Color,
    pub border_margin: u32,
    pub cell_padding: u32,
    pub font_scale: u32,
    pub row_stripe: bool,
    pub stripe_color: Color,
    pub text_color: Color,
}

impl Default for TableStyle {
    fn default() -> Self {
        TableStyle {
            background: Color::WHITE,
            border: true,
            rule_thickness: 1,
            rule_color: Color::BLACK,
            border_margin: 10,
            cell_padding: 5,
            font_scale: 2,
            row_stripe: false,
            stripe_color: STRIPES[0],
            text_color: Color::BLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub seed: u64,
    pub columns: Vec<String>,
    /// Body rows, each with one text per column.
    pub cells: Vec<Vec<String>>,
    pub style: TableStyle,
}

const WORDS: &[&str] = &[
    "Alpha", "Bravo", "Delta", "Echo", "Falcon", "Granite", "Harbor", "Indigo", "Juniper", "Kestrel", "Lumen",
    "Maple", "Nimbus", "Orchid", "Pioneer", "Quartz", "Raven", "Summit", "Tundra", "Umber", "Vertex", "Willow",
    "Xenon", "Yarrow", "Zephyr", "Belgium", "Italy", "Spain", "France", "Norway", "Chile", "Kenya", "Peru",
];

const HEADERS: &[&str] = &[
    "Team", "Country", "Wins", "Year", "Rank", "Name", "Points", "City", "Score", "Total", "Club", "Club", "Goals",
    "Titles", "Votes", "Share",
];

impl TableSpec {
    /// A style-randomized table drawn from the frozen ranges.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_cols = rng.random_range(1..=6);
        let n_rows = rng.random_range(1..=8);
        let columns: Vec<String> = (0..n_cols).map(|_| HEADERS.choose(&mut rng).unwrap().to_string()).collect();
        let numeric: Vec<bool> = (0..n_cols).map(|j| j > 0 && rng.random_bool(0.5)).collect();
        let cells = (0..n_rows)
            .map(|_| {
                (0..n_cols)
                    .map(|j| {
                        if numeric[j] {
                            rng.random_range(0..5000u32).to_string()
                        } else {
                            WORDS.choose(&mut rng).unwrap().to_string()
                        }
                    })
                    .collect()
            })
            .collect();
        let border = rng.random_bool(0.6);
        let style = TableStyle {
            background: *BACKGROUNDS.choose(&mut rng).unwrap(),
            border,
            rule_thickness: rng.random_range(1..=2),
            rule_color: *INKS.choose(&mut rng).unwrap(),
            border_margin: rng.random_range(4..=30),
            cell_padding: if border { rng.random_range(3..=8) } else { rng.random_range(4..=8) },
            font_scale: rng.random_range(1..=2),
            row_stripe: rng.random_bool(0.4),
            stripe_color: *STRIPES.choose(&mut rng).unwrap(),
            text_color: *INKS.choose(&mut rng).unwrap(),
        };
        TableSpec { seed, columns, cells, style }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let s = &self.style;
        if self.columns.is_empty() {
            return Err(SpecError("table needs at least one column".into()));
        }
        if self.cells.is_empty() {
            return Err(SpecError("table needs at least one body row".into()));
        }
        if let Some(i) = self.cells.iter().position(|r| r.len() != self.columns.len()) {
            return Err(SpecError(format!("row {i} has {} cells, expected {}", self.cells[i].len(), self.columns.len())));
        }
        if !(1..=2).contains(&s.rule_thickness)
            || !(4..=30).contains(&s.border_margin)
            || !(3..=8).contains(&s.cell_padding)
            || !(1..=2).contains(&s.font_scale)
        {
            return Err(SpecError("style value outside the documented range".into()));
        }
        if !s.border && s.cell_padding < 4 {
            return Err(SpecError("borderless tables need cell padding >= 4".into()));
        }
        Ok(())
    }
}

/// Render a table and its exact layout.
///
/// Ruled tables place column boundaries on the rules, so adjacent column
/// regions share the rule pixels. Borderless tables tile the cell grid.
pub fn render_table(spec: &TableSpec) -> Result<(Raster, GroundTruth), SpecError> {
    spec.validate()?;
    let s = &spec.style;
    let scale = s.font_scale as usize;
    let pad = s.cell_padding as i64;
    let t = if s.border { s.rule_thickness as i64 } else { 0 };
    let m = s.border_margin as i64;

    let col_w: Vec<i64> = (0..spec.columns.len())
        .map(|j| {
            let widest = std::iter::once(&spec.columns[j])
                .chain(spec.cells.iter().map(|r| &r[j]))
                .map(|txt| font::text_width(txt, scale))
                .max()
                .unwrap_or(0);
            widest as i64 + 2 * pad
        })
        .collect();
    let row_h = font::text_height(scale) as i64 + 2 * pad;
    let n_strips = spec.cells.len() + 1;

    // boundary b_j is the first pixel of rule j (or of cell j when borderless)
    let mut bx = vec![m];
    for w in &col_w {
        bx.push(bx.last().unwrap() + t + w);
    }
    let mut by = vec![m];
    for _ in 0..n_strips {
        by.push(by.last().unwrap() + t + row_h);
    }
    let table = Region::new(m, m, bx.last().unwrap() + t - 1, by.last().unwrap() + t - 1);
    let width = (table.x2 + 1 + m) as u32;
    let height = (table.y2 + 1 + m) as u32;
    let mut img = Raster::filled(width, height, s.background);

    if s.row_stripe {
        for i in (2..n_strips).step_by(2) {
            img.paint_rect(Region::new(table.x1, by[i] + t, table.x2, by[i + 1] - 1), s.stripe_color);
        }
    }
    if s.border {
        for &x in &bx {
            img.paint_rect(Region::new(x, table.y1, x + t - 1, table.y2), s.rule_color);
        }
        for &y in &by {
            img.paint_rect(Region::new(table.x1, y, table.x2, y + t - 1), s.rule_color);
        }
    }

    let mut text_boxes = Vec::new();
    let rows_text = std::iter::once(&spec.columns).chain(spec.cells.iter());
    for (i, row) in rows_text.enumerate() {
        for (j, txt) in row.iter().enumerate() {
            let x = bx[j] + t + pad;
            let y = by[i] + t + pad;
            let region = draw_text(&mut img, x, y, txt, scale, s.text_color);
            text_boxes.push(TextBox { text: txt.clone(), region });
        }
    }

    // last pixel of strip j: the far rule when ruled, the pixel before the
    // next cell when borderless
    let strip_end = |b: &[i64], j: usize| if t > 0 { b[j + 1] + t - 1 } else { b[j + 1] - 1 };
    let names = crate::layout::disambiguate_names(&spec.columns);
    let columns = names
        .into_iter()
        .enumerate()
        .map(|(j, n)| NamedRegion::new(n, Region::new(bx[j], table.y1, strip_end(&bx, j), table.y2)))
        .collect();
    let rows = (1..n_strips)
        .map(|i| NamedRegion::new(format!("row_{i}"), Region::new(table.x1, by[i], table.x2, strip_end(&by, i))))
        .collect();
    let layout = TableLayout {
        table_region: table,
        columns,
        rows,
        header_region: Some(Region::new(table.x1, by[0], table.x2, strip_end(&by, 0))),
    };
    Ok((
        img,
        GroundTruth {
            layout: StructureLayout::Table(layout),
            borderless: !s.border,
            text_boxes,
            bars: Vec::new(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{binarize, DEFAULT_THRESHOLD};

    fn table_of(gt: &GroundTruth) -> &TableLayout {
        match &gt.layout {
            StructureLayout::Table(t) => t,
            _ => panic!("not a table"),
        }
    }

    #[test]
    fn same_seed_same_pixels() {
        let a = render_table(&TableSpec::random(0)).unwrap();
        let b = render_table(&TableSpec::random(0)).unwrap();
        assert_eq!(a.0.digest(), b.0.digest());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn degenerate_one_by_one() {
        let spec = TableSpec {
            seed: 0,
            columns: vec!["Wins".into()],
            cells: vec![vec!["2".into()]],
            style: TableStyle::default(),
        };
        let (_, gt) = render_table(&spec).unwrap();
        let t = table_of(&gt);
        assert_eq!(t.columns.len(), 1);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.columns[0].region, t.table_region);
    }

    #[test]
    fn zero_columns_is_spec_error() {
        let spec = TableSpec { seed: 0, columns: vec![], cells: vec![vec![]], style: TableStyle::default() };
        assert!(render_table(&spec).is_err());
    }

    #[test]
    fn borderless_marked_with_wide_gaps() {
        let spec = TableSpec {
            seed: 1,
            columns: vec!["A".into(), "B".into()],
            cells: vec![vec!["x".into(), "y".into()]],
            style: TableStyle { border: false, cell_padding: 4, ..TableStyle::default() },
        };
        let (img, gt) = render_table(&spec).unwrap();
        assert!(gt.borderless);
        // ink gap between the two columns is at least 2 * padding
        let mask = binarize(&img, DEFAULT_THRESHOLD);
        let t = table_of(&gt);
        let boundary = t.columns[1].region.x1;
        for x in boundary - 4..boundary + 4 {
            assert!((0..mask.height()).all(|y| !mask.get(x as usize, y)));
        }
    }

    #[test]
    fn rules_sit_on_ground_truth_boundaries() {
        for seed in 0..40 {
            let spec = TableSpec::random(seed);
            if !spec.style.border {
                continue;
            }
            let (img, gt) = render_table(&spec).unwrap();
            let t = table_of(&gt);
            let rule = spec.style.rule_color;
            let is_rule = |x: i64, y: i64| img.pixel(x as u32, y as u32) == [rule.r, rule.g, rule.b, 255];
            for c in &t.columns {
                for y in t.table_region.y1..=t.table_region.y2 {
                    assert!(is_rule(c.region.x1, y) && is_rule(c.region.x2, y), "seed {seed}");
                }
            }
            for r in &t.rows {
                for x in t.table_region.x1..=t.table_region.x2 {
                    assert!(is_rule(x, r.region.y1) && is_rule(x, r.region.y2), "seed {seed}");
                }
            }
        }
    }
}
