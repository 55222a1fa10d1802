//! Python module `refocus_py`: PNG bytes and JSON strings in, the same out.
//!
//! Every binding is a thin wrapper over a plain Rust function so the
//! conversions can be tested without an interpreter.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use refocus::agent::{run, AgentConfig, ImageStore, Task};
use refocus::dsl::extract_calls as dsl_extract;
use refocus::eval::ScoreConfig;
use refocus::layout::StructureLayout;
use refocus::llm::ScriptedClient;
use refocus::raster::{load_png, save_png, Color, Raster, Region};
use refocus::structure::chart::subplot_layout;
use refocus::structure::infer_table_layout;
use refocus::tools::{apply_tool as core_apply, tool_registry, ToolId};

type Res<T> = Result<T, String>;

fn png(bytes: &[u8]) -> Res<Raster> {
    load_png(bytes).map_err(|e| e.to_string())
}

fn layout(json: &str) -> Res<StructureLayout> {
    StructureLayout::from_json(json).map_err(|e| e.to_string())
}

pub fn overlay_impl(image: &[u8], region: (i64, i64, i64, i64), rgba: (u8, u8, u8, u8)) -> Res<Vec<u8>> {
    let r = png(image)?;
    let (x1, y1, x2, y2) = region;
    let out = r
        .composite_overlay(Region::new(x1, y1, x2, y2), Color::rgba(rgba.0, rgba.1, rgba.2, rgba.3))
        .map_err(|e| e.to_string())?;
    Ok(save_png(&out))
}

pub fn detect_table_impl(image: &[u8], columns: &[String], rows: usize) -> Res<String> {
    let t = infer_table_layout(&png(image)?, columns, rows).map_err(|e| e.to_string())?;
    Ok(StructureLayout::Table(t).to_canonical_json())
}

pub fn apply_tool_impl(image: &[u8], layout_json: &str, tool: &str, targets: &[String]) -> Res<(Vec<u8>, String)> {
    let id = ToolId::parse(tool).or_else(|| ToolId::from_surface(tool)).ok_or_else(|| format!("unknown tool {tool:?}"))?;
    let (out, rec) = core_apply(&png(image)?, &layout(layout_json)?, id, targets).map_err(|e| e.to_string())?;
    Ok((save_png(&out), serde_json::to_string(&rec).expect("record serializes")))
}

pub fn run_scripted_impl(image: &[u8], question: &str, layout_json: &str, responses: Vec<String>) -> Res<String> {
    let task = Task {
        id: "py".into(),
        image: std::sync::Arc::new(png(image)?),
        question: question.to_string(),
        layout: layout(layout_json)?,
        gold_answer: None,
        source: "synth".into(),
        hint: None,
    };
    let ep = run(&task, &ScriptedClient::single(responses), &AgentConfig::default(), &ImageStore::in_memory());
    Ok(ep.to_json())
}

fn py_err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

/// Source-over a colour onto an inclusive region; returns PNG bytes.
#[pyfunction]
fn composite_overlay<'py>(
    py: Python<'py>,
    image: &[u8],
    region: (i64, i64, i64, i64),
    rgba: (u8, u8, u8, u8),
) -> PyResult<Bound<'py, PyBytes>> {
    Ok(PyBytes::new(py, &overlay_impl(image, region, rgba).map_err(py_err)?))
}

/// Layout JSON for a table with the given column names and body rows.
#[pyfunction]
fn detect_table(image: &[u8], columns: Vec<String>, rows: usize) -> PyResult<String> {
    detect_table_impl(image, &columns, rows).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (image, k = 10))]
fn detect_subplots(image: &[u8], k: usize) -> PyResult<String> {
    let r = png(image).map_err(py_err)?;
    Ok(StructureLayout::Chart(subplot_layout(&r, k)).to_canonical_json())
}

/// Returns `(png_bytes, edit_record_json)`.
#[pyfunction]
fn apply_tool<'py>(
    py: Python<'py>,
    image: &[u8],
    layout_json: &str,
    tool: &str,
    targets: Vec<String>,
) -> PyResult<(Bound<'py, PyBytes>, String)> {
    let (bytes, rec) = apply_tool_impl(image, layout_json, tool, &targets).map_err(py_err)?;
    Ok((PyBytes::new(py, &bytes), rec))
}

/// `[(surface_name, targets), ...]` for every registered call in `text`.
#[pyfunction]
fn extract_calls(text: &str) -> Vec<(String, Vec<String>)> {
    dsl_extract(text, tool_registry()).calls.into_iter().map(|c| (c.tool.surface_name().to_string(), c.targets)).collect()
}

#[pyfunction]
fn extract_final_answer(text: &str) -> Option<String> {
    refocus::agent::extract_final_answer(text)
}

/// Score with the default rule for `source`.
#[pyfunction]
#[pyo3(signature = (prediction, gold, source = "synth"))]
fn score(prediction: &str, gold: &str, source: &str) -> PyResult<bool> {
    refocus::eval::score(prediction, gold, &ScoreConfig::for_source(source)).map_err(|e| py_err(e.to_string()))
}

/// Run the loop against a fixed list of model turns; returns episode JSON.
#[pyfunction]
fn run_scripted(image: &[u8], question: &str, layout_json: &str, responses: Vec<String>) -> PyResult<String> {
    run_scripted_impl(image, question, layout_json, responses).map_err(py_err)
}

/// `(png_bytes, layout_json, script)` for the rider table demo.
#[pyfunction]
fn demo_table(py: Python<'_>) -> (Bound<'_, PyBytes>, String, Vec<String>) {
    let (r, gt) = refocus::synth::demo::cycling_table();
    (PyBytes::new(py, &save_png(&r)), gt.layout.to_canonical_json(), refocus::synth::demo::cycling_script())
}

#[pyfunction]
fn tool_names() -> Vec<&'static str> {
    tool_registry().iter().map(|e| e.surface_name).collect()
}

#[pymodule]
fn refocus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(composite_overlay, m)?)?;
    m.add_function(wrap_pyfunction!(detect_table, m)?)?;
    m.add_function(wrap_pyfunction!(detect_subplots, m)?)?;
    m.add_function(wrap_pyfunction!(apply_tool, m)?)?;
    m.add_function(wrap_pyfunction!(extract_calls, m)?)?;
    m.add_function(wrap_pyfunction!(extract_final_answer, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted, m)?)?;
    m.add_function(wrap_pyfunction!(demo_table, m)?)?;
    m.add_function(wrap_pyfunction!(tool_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white_png() -> Vec<u8> {
        save_png(&Raster::filled(4, 4, Color::WHITE))
    }

    #[test]
    fn overlay_round_trips_png() {
        let out = overlay_impl(&white_png(), (0, 0, 1, 1), (255, 0, 0, 50)).unwrap();
        let r = load_png(&out).unwrap();
        assert_eq!(r.pixel(0, 0), [255, 205, 205, 255]);
        assert_eq!(r.pixel(3, 3), [255, 255, 255, 255]);
        assert!(overlay_impl(b"not a png", (0, 0, 1, 1), (0, 0, 0, 0)).is_err());
    }

    #[test]
    fn scripted_demo_answers() {
        let (r, gt) = refocus::synth::demo::cycling_table();
        let ep = run_scripted_impl(
            &save_png(&r),
            refocus::synth::demo::CYCLING_QUESTION,
            &gt.layout.to_canonical_json(),
            refocus::synth::demo::cycling_script(),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&ep).unwrap();
        assert_eq!(v["status"]["final_answer"], "47");
    }

    #[test]
    fn tool_errors_are_strings() {
        let (r, gt) = refocus::synth::demo::cycling_table();
        let l = gt.layout.to_canonical_json();
        assert!(apply_tool_impl(&save_png(&r), &l, "blur", &["Team".into()]).unwrap_err().contains("blur"));
        let err = apply_tool_impl(&save_png(&r), &l, "highlight_columns", &["Nation".into()]).unwrap_err();
        assert!(err.contains("UnknownTarget"));
        assert!(detect_table_impl(&white_png(), &["A".into()], 1).unwrap_err().contains("DetectionFailed"));
    }
}
