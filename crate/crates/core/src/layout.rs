//! Named-region maps recovered from an image and the canonical JSON form in
//! which they are shown to the model.
//!
//! Wire schema (keys in this order, each region `{"x1", "y1", "x2", "y2"}`):
//!
//! ```text
//! table: {"kind": "table", "table": R, "header": R?, "columns": {name: R, ..}, "rows": {label: R, ..}}
//! chart: {"kind": "horizontal_bar" | "vertical_bar" | "multi_subplot",
//!         "plot": R, "axis": {label: R, ..}, "subplots": {id: R, ..}}
//! ```

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json::to_canonical_string;
use crate::raster::Region;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedRegion {
    pub name: String,
    pub region: Region,
}

impl NamedRegion {
    pub fn new(name: impl Into<String>, region: Region) -> Self {
        NamedRegion { name: name.into(), region }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableLayout {
    pub table_region: Region,
    /// Left to right.
    pub columns: Vec<NamedRegion>,
    /// Top to bottom, header excluded.
    pub rows: Vec<NamedRegion>,
    pub header_region: Option<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    HorizontalBar,
    VerticalBar,
    MultiSubplot,
}

impl ChartKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::HorizontalBar => "horizontal_bar",
            ChartKind::VerticalBar => "vertical_bar",
            ChartKind::MultiSubplot => "multi_subplot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "horizontal_bar" | "h_bar" | "hbar" => Some(ChartKind::HorizontalBar),
            "vertical_bar" | "v_bar" | "vbar" => Some(ChartKind::VerticalBar),
            "multi_subplot" | "subplots" => Some(ChartKind::MultiSubplot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartLayout {
    pub kind: ChartKind,
    /// Chart area, caption excluded.
    pub plot_region: Region,
    /// x-value label boxes for vertical bars, y-value label boxes for
    /// horizontal bars.
    pub axis_entries: Vec<NamedRegion>,
    pub subplots: Vec<NamedRegion>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureLayout {
    Table(TableLayout),
    Chart(ChartLayout),
}

/// Which family of named regions a tool addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    Columns,
    Rows,
    BarsX,
    BarsY,
    Subplots,
}

impl TargetClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetClass::Columns => "columns",
            TargetClass::Rows => "rows",
            TargetClass::BarsX => "bars_x",
            TargetClass::BarsY => "bars_y",
            TargetClass::Subplots => "subplots",
        }
    }
}

impl fmt::Display for TargetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{class} targets are not available on a {layout} layout")]
pub struct ClassMismatch {
    pub class: TargetClass,
    pub layout: &'static str,
}

#[derive(Debug, Error)]
pub enum LayoutJsonError {
    #[error("invalid layout JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid layout: {0}")]
    Invalid(String),
}

impl StructureLayout {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StructureLayout::Table(_) => "table",
            StructureLayout::Chart(c) => c.kind.as_str(),
        }
    }

    /// Target classes a tool may address on this layout.
    pub fn target_classes(&self) -> &'static [TargetClass] {
        match self {
            StructureLayout::Table(_) => &[TargetClass::Columns, TargetClass::Rows],
            StructureLayout::Chart(c) => match c.kind {
                ChartKind::VerticalBar => &[TargetClass::BarsX],
                ChartKind::HorizontalBar => &[TargetClass::BarsY],
                ChartKind::MultiSubplot => &[TargetClass::Subplots],
            },
        }
    }

    /// The editable regions for `class`, in layout order. Bar classes yield
    /// full-height (or full-width) strips, not the raw axis label boxes.
    pub fn targets(&self, class: TargetClass) -> Result<Vec<NamedRegion>, ClassMismatch> {
        let mismatch = || ClassMismatch { class, layout: self.kind_name() };
        if !self.target_classes().contains(&class) {
            return Err(mismatch());
        }
        Ok(match (self, class) {
            (StructureLayout::Table(t), TargetClass::Columns) => t.columns.clone(),
            (StructureLayout::Table(t), TargetClass::Rows) => t.rows.clone(),
            (StructureLayout::Chart(c), TargetClass::BarsX | TargetClass::BarsY) => {
                let strips = crate::structure::chart::bar_strips(c);
                c.axis_entries
                    .iter()
                    .zip(strips)
                    .map(|(e, r)| NamedRegion::new(e.name.clone(), r))
                    .collect()
            }
            (StructureLayout::Chart(c), TargetClass::Subplots) => c.subplots.clone(),
            _ => return Err(mismatch()),
        })
    }

    /// Regions that masking must never touch.
    pub fn protected_regions(&self) -> Vec<Region> {
        match self {
            StructureLayout::Table(t) => t.header_region.into_iter().collect(),
            StructureLayout::Chart(_) => Vec::new(),
        }
    }

    fn to_wire(&self) -> WireLayout {
        let map = |v: &[NamedRegion]| -> IndexMap<String, Region> {
            v.iter().map(|n| (n.name.clone(), n.region)).collect()
        };
        match self {
            StructureLayout::Table(t) => WireLayout {
                kind: "table".into(),
                table: Some(t.table_region),
                header: t.header_region,
                columns: Some(map(&t.columns)),
                rows: Some(map(&t.rows)),
                plot: None,
                axis: None,
                subplots: None,
            },
            StructureLayout::Chart(c) => WireLayout {
                kind: c.kind.as_str().into(),
                table: None,
                header: None,
                columns: None,
                rows: None,
                plot: Some(c.plot_region),
                axis: Some(map(&c.axis_entries)),
                subplots: Some(map(&c.subplots)),
            },
        }
    }

    fn from_wire(w: WireLayout) -> Result<Self, LayoutJsonError> {
        let list = |m: Option<IndexMap<String, Region>>| -> Vec<NamedRegion> {
            m.unwrap_or_default().into_iter().map(|(k, v)| NamedRegion::new(k, v)).collect()
        };
        let missing = |f: &str| LayoutJsonError::Invalid(format!("missing field `{f}`"));
        if w.kind == "table" {
            return Ok(StructureLayout::Table(TableLayout {
                table_region: w.table.ok_or_else(|| missing("table"))?,
                columns: list(w.columns),
                rows: list(w.rows),
                header_region: w.header,
            }));
        }
        let kind = ChartKind::parse(&w.kind)
            .ok_or_else(|| LayoutJsonError::Invalid(format!("unknown layout kind `{}`", w.kind)))?;
        Ok(StructureLayout::Chart(ChartLayout {
            kind,
            plot_region: w.plot.ok_or_else(|| missing("plot"))?,
            axis_entries: list(w.axis),
            subplots: list(w.subplots),
        }))
    }

    /// Single-line canonical JSON.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(&self.to_wire())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("layout serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LayoutJsonError> {
        Self::from_wire(serde_json::from_str(s)?)
    }
}

impl Serialize for StructureLayout {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_wire().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StructureLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = WireLayout::deserialize(d)?;
        StructureLayout::from_wire(w).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct WireLayout {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    header: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    columns: Option<IndexMap<String, Region>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rows: Option<IndexMap<String, Region>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plot: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<IndexMap<String, Region>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subplots: Option<IndexMap<String, Region>>,
}

/// Suffix repeated names with their ordinal (`Wins`, `Wins#2`, ...).
pub fn disambiguate_names<S: AsRef<str>>(names: &[S]) -> Vec<String> {
    let mut seen: IndexMap<&str, usize> = IndexMap::new();
    let mut out: Vec<String> = Vec::with_capacity(names.len());
    for n in names {
        let n = n.as_ref();
        let count = seen.entry(n).or_insert(0);
        *count += 1;
        let mut candidate = if *count == 1 { n.to_string() } else { format!("{n}#{count}") };
        // a literal "X#2" already present in the input must not collide
        while out.contains(&candidate) {
            *count += 1;
            candidate = format!("{n}#{count}");
        }
        out.push(candidate);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> StructureLayout {
        StructureLayout::Table(TableLayout {
            table_region: Region::new(0, 0, 99, 49),
            columns: vec![
                NamedRegion::new("Team", Region::new(0, 0, 49, 49)),
                NamedRegion::new("Wins", Region::new(49, 0, 99, 49)),
            ],
            rows: vec![NamedRegion::new("row_1", Region::new(0, 20, 99, 49))],
            header_region: Some(Region::new(0, 0, 99, 20)),
        })
    }

    #[test]
    fn canonical_json_golden() {
        assert_eq!(
            table().to_canonical_json(),
            r#"{"kind": "table", "table": {"x1": 0, "y1": 0, "x2": 99, "y2": 49}, "header": {"x1": 0, "y1": 0, "x2": 99, "y2": 20}, "columns": {"Team": {"x1": 0, "y1": 0, "x2": 49, "y2": 49}, "Wins": {"x1": 49, "y1": 0, "x2": 99, "y2": 49}}, "rows": {"row_1": {"x1": 0, "y1": 20, "x2": 99, "y2": 49}}}"#
        );
    }

    #[test]
    fn json_round_trip_keeps_order() {
        let t = table();
        assert_eq!(StructureLayout::from_json(&t.to_canonical_json()).unwrap(), t);
        assert_eq!(StructureLayout::from_json(&t.to_json_pretty()).unwrap(), t);
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(StructureLayout::from_json(r#"{"kind":"pie","plot":{"x1":0,"y1":0,"x2":1,"y2":1}}"#).is_err());
    }

    #[test]
    fn class_mismatch() {
        let err = table().targets(TargetClass::Subplots).unwrap_err();
        assert_eq!(err.layout, "table");
    }

    #[test]
    fn duplicate_names_get_ordinals() {
        assert_eq!(disambiguate_names(&["Wins", "Team", "Wins", "Wins"]), vec!["Wins", "Team", "Wins#2", "Wins#3"]);
        assert_eq!(disambiguate_names(&["A#2", "A", "A"]), vec!["A#2", "A", "A#3"]);
    }
}
