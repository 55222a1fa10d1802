//! JSONL dataset items.
//!
//! One JSON object per line:
//!
//! | field                   | type                  | notes                                               |
//! |-------------------------|-----------------------|-----------------------------------------------------|
//! | `id`                    | string                | optional, defaults to `item-<line>`                 |
//! | `query` or `question`   | string                | required                                            |
//! | `answer`                | string or number      | gold answer, optional                               |
//! | `source`                | string                | one of [`SOURCES`]; the loader's tag fills it in    |
//! | `image` or `images`     | string / [string]     | required, relative to the JSONL file; first is used |
//! | `columns`               | [string]              | table column names                                  |
//! | `rows`                  | int                   | table body row count                                |
//! | `row_labels`            | [string]              | table row names, overrides `rows`                   |
//! | `axis`                  | {label: bbox}         | bar chart axis label boxes, in axis order           |
//! | `chart`                 | string                | `horizontal_bar`, `vertical_bar`, `multi_subplot`   |
//! | `layout`                | layout JSON           | complete layout; skips detection                    |
//!
//! Blank lines are skipped.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::layout::{ChartKind, NamedRegion, StructureLayout};
use crate::raster::Region;

pub const SOURCES: [&str; 7] = ["vwtq", "vwtq_syn", "vtabfact", "charxiv", "h_bar", "v_bar", "synth"];

pub fn is_table_source(tag: &str) -> bool {
    matches!(tag, "vwtq" | "vwtq_syn" | "vtabfact")
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("SchemaError: line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("SchemaError: {0}")]
    Io(String),
}

/// Structure annotations shipped with an item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructureHints {
    pub columns: Option<Vec<String>>,
    pub row_labels: Option<Vec<String>>,
    pub axis_entries: Option<Vec<NamedRegion>>,
    pub chart_kind: Option<ChartKind>,
    pub layout: Option<StructureLayout>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    /// Path as written in the file.
    pub image: String,
    /// `image` resolved against the dataset directory.
    pub image_path: PathBuf,
    pub question: String,
    pub gold_answer: Option<String>,
    pub source: String,
    pub hints: StructureHints,
}

#[derive(Deserialize)]
struct RawItem {
    id: Option<String>,
    #[serde(alias = "question")]
    query: Option<String>,
    answer: Option<Value>,
    source: Option<String>,
    image: Option<String>,
    images: Option<Vec<String>>,
    columns: Option<Vec<String>>,
    rows: Option<usize>,
    row_labels: Option<Vec<String>>,
    axis: Option<IndexMap<String, Region>>,
    chart: Option<String>,
    layout: Option<Value>,
}

fn parse_line(raw: RawItem, n: usize, tag: Option<&str>, base: &Path) -> Result<DatasetItem, String> {
    let question = raw.query.filter(|q| !q.trim().is_empty()).ok_or("missing query/question")?;
    let image = raw
        .image
        .or_else(|| raw.images.and_then(|v| v.into_iter().next()))
        .ok_or("missing image/images")?;
    let source = match (raw.source, tag) {
        (Some(s), Some(t)) if s != t => return Err(format!("source {s:?} does not match the requested tag {t:?}")),
        (Some(s), _) => s,
        (None, Some(t)) => t.to_string(),
        (None, None) => return Err("missing source".into()),
    };
    if !SOURCES.contains(&source.as_str()) {
        return Err(format!("unknown source {source:?}, expected one of {SOURCES:?}"));
    }
    let gold_answer = match raw.answer {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(v @ (Value::Number(_) | Value::Bool(_))) => Some(v.to_string()),
        Some(_) => return Err("answer must be a string or number".into()),
    };
    let chart_kind = match raw.chart.as_deref() {
        None => None,
        Some(k) => Some(ChartKind::parse(k).ok_or_else(|| format!("unknown chart kind {k:?}"))?),
    };
    let layout = match raw.layout {
        None => None,
        Some(v) => Some(StructureLayout::from_json(&v.to_string()).map_err(|e| e.to_string())?),
    };
    let row_labels = raw.row_labels.or_else(|| raw.rows.map(|n| (1..=n).map(|i| format!("row_{i}")).collect()));
    let image_path = base.join(&image);
    if !image_path.exists() {
        return Err(format!("image {} not found", image_path.display()));
    }
    Ok(DatasetItem {
        id: raw.id.unwrap_or_else(|| format!("item-{n}")),
        image,
        image_path,
        question,
        gold_answer,
        source,
        hints: StructureHints {
            columns: raw.columns,
            row_labels,
            axis_entries: raw.axis.map(|m| m.into_iter().map(|(k, r)| NamedRegion::new(k, r)).collect()),
            chart_kind,
            layout,
        },
    })
}

/// Read a JSONL dataset. `source_tag` fills in items without a `source`
/// and must agree with items that have one.
pub fn load_dataset(path: impl AsRef<Path>, source_tag: Option<&str>) -> Result<Vec<DatasetItem>, SchemaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(line).map_err(|e| SchemaError::Line { line: n, message: e.to_string() })?;
        out.push(parse_line(raw, n, source_tag, base).map_err(|message| SchemaError::Line { line: n, message })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{save_png, Color, Raster};

    fn dir_with_image() -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("two_col_103562.png"), save_png(&Raster::filled(4, 4, Color::WHITE))).unwrap();
        d
    }

    #[test]
    fn listing_style_item() {
        let d = dir_with_image();
        let p = d.path().join("data.jsonl");
        std::fs::write(
            &p,
            r#"{"id": "train-two_col_103562", "query": "As of 2021, how many championship titles had Ferrari won?", "answer": "16", "source": "h_bar", "images": ["two_col_103562.png"], "axis": {"Ferrari": {"x1": 0, "y1": 0, "x2": 2, "y2": 1}}}"#,
        )
        .unwrap();
        let items = load_dataset(&p, None).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].gold_answer.as_deref(), Some("16"));
        assert_eq!(items[0].hints.axis_entries.as_ref().unwrap()[0].name, "Ferrari");
    }

    #[test]
    fn empty_file_and_bad_line() {
        let d = dir_with_image();
        let p = d.path().join("e.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(load_dataset(&p, Some("vwtq")).unwrap().is_empty());
        let ok = r#"{"question": "q", "image": "two_col_103562.png", "answer": 3}"#;
        std::fs::write(&p, format!("{ok}\n{ok}\n{{not json\n")).unwrap();
        match load_dataset(&p, Some("vwtq")) {
            Err(SchemaError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, format!("{ok}\n")).unwrap();
        let items = load_dataset(&p, Some("vwtq")).unwrap();
        assert_eq!((items[0].id.as_str(), items[0].gold_answer.as_deref()), ("item-1", Some("3")));
        assert!(load_dataset(&p, None).is_err());
        assert!(load_dataset(&p, Some("nope")).is_err());
    }
}
