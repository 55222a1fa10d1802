//! The fifteen editing tools: highlight, mask-keep and draw over columns,
//! rows, x-axis bars, y-axis bars and subplots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{ClassMismatch, NamedRegion, StructureLayout, TargetClass};
use crate::raster::{Color, Digest, Raster, RasterError, Region};

pub const HIGHLIGHT_COLOR: Color = Color::rgba(255, 0, 0, 50);
pub const MASK_COLOR: Color = Color::WHITE;
pub const DRAW_COLOR: Color = Color::RED;
pub const DRAW_THICKNESS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolId {
    HighlightColumns,
    MaskColumnsKeep,
    DrawColumns,
    HighlightRows,
    MaskRowsKeep,
    DrawRows,
    HighlightBarsX,
    MaskBarsXKeep,
    DrawBarsX,
    HighlightBarsY,
    MaskBarsYKeep,
    DrawBarsY,
    HighlightSubplots,
    MaskSubplotsKeep,
    DrawSubplots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    Highlight,
    MaskKeep,
    Draw,
}

impl ToolId {
    pub const ALL: [ToolId; 15] = [
        ToolId::HighlightColumns,
        ToolId::MaskColumnsKeep,
        ToolId::DrawColumns,
        ToolId::HighlightRows,
        ToolId::MaskRowsKeep,
        ToolId::DrawRows,
        ToolId::HighlightBarsX,
        ToolId::MaskBarsXKeep,
        ToolId::DrawBarsX,
        ToolId::HighlightBarsY,
        ToolId::MaskBarsYKeep,
        ToolId::DrawBarsY,
        ToolId::HighlightSubplots,
        ToolId::MaskSubplotsKeep,
        ToolId::DrawSubplots,
    ];

    pub fn effect(self) -> Effect {
        match self as usize % 3 {
            0 => Effect::Highlight,
            1 => Effect::MaskKeep,
            _ => Effect::Draw,
        }
    }

    pub fn target_class(self) -> TargetClass {
        match self as usize / 3 {
            0 => TargetClass::Columns,
            1 => TargetClass::Rows,
            2 => TargetClass::BarsX,
            3 => TargetClass::BarsY,
            _ => TargetClass::Subplots,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ToolId::HighlightColumns => "highlight_columns",
            ToolId::MaskColumnsKeep => "mask_columns_keep",
            ToolId::DrawColumns => "draw_columns",
            ToolId::HighlightRows => "highlight_rows",
            ToolId::MaskRowsKeep => "mask_rows_keep",
            ToolId::DrawRows => "draw_rows",
            ToolId::HighlightBarsX => "highlight_bars_x",
            ToolId::MaskBarsXKeep => "mask_bars_x_keep",
            ToolId::DrawBarsX => "draw_bars_x",
            ToolId::HighlightBarsY => "highlight_bars_y",
            ToolId::MaskBarsYKeep => "mask_bars_y_keep",
            ToolId::DrawBarsY => "draw_bars_y",
            ToolId::HighlightSubplots => "highlight_subplots",
            ToolId::MaskSubplotsKeep => "mask_subplots_keep",
            ToolId::DrawSubplots => "draw_subplots",
        }
    }

    pub fn parse(s: &str) -> Option<ToolId> {
        ToolId::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Function name the model writes in its pseudocode.
    pub fn surface_name(self) -> &'static str {
        REGISTRY[self as usize].surface_name
    }

    pub fn from_surface(name: &str) -> Option<ToolId> {
        REGISTRY.iter().find(|e| e.surface_name == name).map(|e| e.tool)
    }
}

impl std::fmt::Display for ToolId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegistryEntry {
    pub surface_name: &'static str,
    pub tool: ToolId,
    pub target_class: TargetClass,
    pub doc: &'static str,
}

macro_rules! entry {
    ($name:literal, $tool:ident, $class:ident, $doc:literal) => {
        RegistryEntry { surface_name: $name, tool: ToolId::$tool, target_class: TargetClass::$class, doc: $doc }
    };
}

static REGISTRY: [RegistryEntry; 15] = [
    entry!("focus_on_columns_with_highlight", HighlightColumns, Columns, "Overlay translucent red on the listed columns."),
    entry!("focus_on_columns_with_mask", MaskColumnsKeep, Columns, "Keep the listed columns and white out every other column; the header row stays."),
    entry!("focus_on_columns_with_draw", DrawColumns, Columns, "Draw a red box around each listed column."),
    entry!("focus_on_rows_with_highlight", HighlightRows, Rows, "Overlay translucent red on the listed rows."),
    entry!("focus_on_rows_with_mask", MaskRowsKeep, Rows, "Keep the listed rows and white out every other body row; the header row stays."),
    entry!("focus_on_rows_with_draw", DrawRows, Rows, "Draw a red box around each listed row."),
    entry!("focus_on_x_values_with_highlight", HighlightBarsX, BarsX, "Overlay translucent red on the bars at the listed x-axis values."),
    entry!("focus_on_x_values_with_mask", MaskBarsXKeep, BarsX, "Keep the bars at the listed x-axis values and white out the others."),
    entry!("focus_on_x_values_with_draw", DrawBarsX, BarsX, "Draw a red box around the bars at the listed x-axis values."),
    entry!("focus_on_y_values_with_highlight", HighlightBarsY, BarsY, "Overlay translucent red on the bars at the listed y-axis values."),
    entry!("focus_on_y_values_with_mask", MaskBarsYKeep, BarsY, "Keep the bars at the listed y-axis values and white out the others."),
    entry!("focus_on_y_values_with_draw", DrawBarsY, BarsY, "Draw a red box around the bars at the listed y-axis values."),
    entry!("focus_on_subplots_with_highlight", HighlightSubplots, Subplots, "Overlay translucent red on the listed subplots."),
    entry!("focus_on_subplots_with_mask", MaskSubplotsKeep, Subplots, "Keep the listed subplots and white out the others."),
    entry!("focus_on_subplots_with_draw", DrawSubplots, Subplots, "Draw a red box around each listed subplot."),
];

/// All tools in a stable order (grouped by target class).
pub fn tool_registry() -> &'static [RegistryEntry] {
    &REGISTRY
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub tool: ToolId,
    pub targets: Vec<String>,
    /// Target regions; for mask tools these are the kept regions.
    pub affected_regions: Vec<Region>,
    pub input_hash: Digest,
    pub output_hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("UnknownTarget: {label:?} is not one of {available:?}")]
    UnknownTarget { label: String, available: Vec<String> },
    #[error("EmptyTargets: {0} needs at least one target")]
    EmptyTargets(ToolId),
    #[error("TargetClassMismatch: {0}")]
    ClassMismatch(#[from] ClassMismatch),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn squash_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Match a label against the available names: exact, then ASCII/Unicode
/// case-insensitive, then whitespace-normalized (also case-insensitive).
/// A fallback only counts when it picks out a single name.
pub fn resolve_label<'a>(available: &'a [NamedRegion], label: &str) -> Option<&'a NamedRegion> {
    if let Some(e) = available.iter().find(|e| e.name == label) {
        return Some(e);
    }
    let unique = |pred: &dyn Fn(&NamedRegion) -> bool| {
        let mut hits = available.iter().filter(|e| pred(e));
        match (hits.next(), hits.next()) {
            (Some(e), None) => Some(e),
            _ => None,
        }
    };
    let lower = label.to_lowercase();
    if let Some(e) = unique(&|e| e.name.to_lowercase() == lower) {
        return Some(e);
    }
    let squashed = squash_ws(&lower);
    unique(&|e| squash_ws(&e.name.to_lowercase()) == squashed)
}

/// Resolve every target of `tool` in `layout`, deduplicated, in request
/// order.
pub fn resolve_targets<S: AsRef<str>>(
    layout: &StructureLayout,
    tool: ToolId,
    targets: &[S],
) -> Result<Vec<NamedRegion>, EditError> {
    let available = layout.targets(tool.target_class())?;
    if targets.is_empty() {
        return Err(EditError::EmptyTargets(tool));
    }
    let mut out: Vec<NamedRegion> = Vec::with_capacity(targets.len());
    for t in targets {
        let hit = resolve_label(&available, t.as_ref()).ok_or_else(|| EditError::UnknownTarget {
            label: t.as_ref().to_string(),
            available: available.iter().map(|e| e.name.clone()).collect(),
        })?;
        if !out.iter().any(|o| o.name == hit.name) {
            out.push(hit.clone());
        }
    }
    Ok(out)
}

/// Disjoint rectangles covering the union of `regions`.
fn disjoint_cover(regions: impl IntoIterator<Item = Region>) -> Vec<Region> {
    let mut pieces: Vec<Region> = Vec::new();
    for r in regions {
        let mut frags = vec![r.normalized()];
        for p in &pieces {
            frags = frags.iter().flat_map(|f| f.subtract(p)).collect();
        }
        pieces.extend(frags);
    }
    pieces
}

/// `regions` minus every rectangle in `holes`.
fn subtract_all(regions: Vec<Region>, holes: &[Region]) -> Vec<Region> {
    holes.iter().fold(regions, |acc, h| acc.iter().flat_map(|r| r.subtract(h)).collect())
}

/// Pixels a mask-keep call whites out: the other targets of the class,
/// minus the kept regions and any protected header.
pub fn mask_complement(layout: &StructureLayout, tool: ToolId, kept: &[NamedRegion]) -> Result<Vec<Region>, EditError> {
    let all = layout.targets(tool.target_class())?;
    let others = all.iter().filter(|e| !kept.iter().any(|k| k.name == e.name)).map(|e| e.region);
    let mut holes: Vec<Region> = kept.iter().map(|k| k.region).collect();
    holes.extend(layout.protected_regions());
    Ok(subtract_all(disjoint_cover(others), &holes))
}

/// Apply one tool. The input raster is never modified.
pub fn apply_tool<S: AsRef<str>>(
    r: &Raster,
    layout: &StructureLayout,
    tool: ToolId,
    targets: &[S],
) -> Result<(Raster, EditRecord), EditError> {
    let hits = resolve_targets(layout, tool, targets)?;
    let regions: Vec<Region> = hits.iter().map(|h| h.region).collect();
    let bounds = r.bounds();
    if let Some(bad) = regions.iter().find(|g| g.clamp_to(r.width(), r.height()).is_none()) {
        return Err(RasterError::EmptyRegion(*bad, bounds.width() as u32, bounds.height() as u32).into());
    }

    let out = match tool.effect() {
        Effect::Highlight => {
            // overlapping targets (shared rules) are tinted once
            let mut out = r.clone();
            for p in disjoint_cover(regions.iter().copied()) {
                out.blend_rect(p, HIGHLIGHT_COLOR);
            }
            out
        }
        Effect::MaskKeep => {
            let mut out = r.clone();
            for p in mask_complement(layout, tool, &hits)? {
                out.paint_rect(p, MASK_COLOR);
            }
            out
        }
        Effect::Draw => {
            let mut out = r.clone();
            for g in &regions {
                out = out.draw_rect_outline(*g, DRAW_COLOR, DRAW_THICKNESS)?;
            }
            out
        }
    };
    let record = EditRecord {
        tool,
        targets: hits.into_iter().map(|h| h.name).collect(),
        affected_regions: regions,
        input_hash: r.digest(),
        output_hash: out.digest(),
    };
    Ok((out, record))
}
