//! Datasets, scoring, run reports and training-record collection.

pub mod collect;
pub mod dataset;
pub mod report;
pub mod score;

use std::sync::Arc;

use thiserror::Error;

pub use collect::{collect_vcot, parse_focus_areas, record_from_episode, vcot_input, write_vcot, CollectConfig, CollectItem, CollectOutcome, VCoTRecord};
pub use dataset::{is_table_source, load_dataset, DatasetItem, SchemaError, StructureHints};
pub use report::{report, RunReport, SourceStats};
pub use score::{score, score_with, ScoreConfig, ScoreError, ScoreMode};

use crate::agent::Task;
use crate::layout::{ChartKind, ChartLayout, StructureLayout};
use crate::raster::{load_png, RasterError};
use crate::structure::chart::subplot_layout;
use crate::structure::{detect_plot_region, infer_table_layout_with_labels, StructureError, TableParams};

/// Subplot candidates offered to the model.
pub const SUBPLOT_CANDIDATES: usize = 10;

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error("{id}: {source}")]
    Raster { id: String, source: RasterError },
    #[error("{id}: {source}")]
    Structure { id: String, source: StructureError },
    #[error("{id}: missing structure hints: {what}")]
    MissingHints { id: String, what: &'static str },
}

/// Load the image and build the layout the tools will address.
pub fn prepare_task(item: &DatasetItem) -> Result<Task, PrepareError> {
    let id = item.id.clone();
    let bytes = std::fs::read(&item.image_path)
        .map_err(|e| PrepareError::Raster { id: id.clone(), source: RasterError::Io(e.to_string()) })?;
    let image = load_png(&bytes).map_err(|source| PrepareError::Raster { id: id.clone(), source })?;
    let h = &item.hints;
    let structure = |source| PrepareError::Structure { id: id.clone(), source };

    let layout = if let Some(l) = &h.layout {
        l.clone()
    } else if is_table_source(&item.source) {
        let cols = h.columns.as_ref().ok_or(PrepareError::MissingHints { id: id.clone(), what: "columns" })?;
        let rows = h.row_labels.as_ref().ok_or(PrepareError::MissingHints { id: id.clone(), what: "rows" })?;
        StructureLayout::Table(infer_table_layout_with_labels(&image, cols, rows, TableParams::default()).map_err(structure)?)
    } else if item.source == "charxiv" || h.chart_kind == Some(ChartKind::MultiSubplot) {
        StructureLayout::Chart(subplot_layout(&image, SUBPLOT_CANDIDATES))
    } else {
        let entries = h.axis_entries.clone().ok_or(PrepareError::MissingHints { id: id.clone(), what: "axis" })?;
        let kind = match (h.chart_kind, item.source.as_str()) {
            (Some(k), _) => k,
            (None, "v_bar") => ChartKind::VerticalBar,
            (None, "h_bar") => ChartKind::HorizontalBar,
            _ => return Err(PrepareError::MissingHints { id, what: "chart" }),
        };
        let plot_region = detect_plot_region(&image, &entries)
            .ok_or_else(|| structure(StructureError::DetectionFailed("no plot area found".into())))?;
        StructureLayout::Chart(ChartLayout { kind, plot_region, axis_entries: entries, subplots: Vec::new() })
    };
    Ok(Task {
        id: item.id.clone(),
        image: Arc::new(image),
        question: item.question.clone(),
        layout,
        gold_answer: item.gold_answer.clone(),
        source: item.source.clone(),
        hint: None,
    })
}
