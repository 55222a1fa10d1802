//! Prompt text for the editing loop.

use indexmap::IndexMap;

use crate::json::to_canonical_string;
use crate::layout::{NamedRegion, StructureLayout, TargetClass};
use crate::raster::Region;
use crate::tools::tool_registry;

fn bbox_var(class: TargetClass) -> &'static str {
    match class {
        TargetClass::Columns => "columns_bbox",
        TargetClass::Rows => "rows_bbox",
        TargetClass::BarsX => "x_values_bbox",
        TargetClass::BarsY => "y_values_bbox",
        TargetClass::Subplots => "subplots_bbox",
    }
}

fn bbox_json(regions: &[NamedRegion]) -> String {
    let map: IndexMap<&str, Region> = regions.iter().map(|n| (n.name.as_str(), n.region)).collect();
    to_canonical_string(&map)
}

/// Role, tools usable on this layout, and the reply protocol.
pub fn system_prompt(layout: &StructureLayout) -> String {
    let classes = layout.target_classes();
    let mut s = String::from(
        "You are a multimodal assistant that answers questions about images. \
         You may edit the image to direct your own attention before answering.\n\n\
         Each turn, start with a THOUGHT about what you see. If an edit would help, follow it with an ACTION: \
         a python code block calling the functions below. The code is not run as python; \
         each call is applied to the current image and the edited image comes back as the next observation. \
         Edits stack, so later calls work on the already edited image.\n\n\
         Available functions:\n",
    );
    for e in tool_registry().iter().filter(|e| classes.contains(&e.target_class)) {
        s.push_str(&format!(
            "- {}(image, {}_to_focus_on, {}): {}\n",
            e.surface_name,
            e.target_class.as_str(),
            bbox_var(e.target_class),
            e.doc
        ));
    }
    s.push_str(
        "\nPass the names to focus on as a list of quoted strings, exactly as they appear in the bounding box maps.\n\n\
         When you know the answer to the user's request, reply with \"ANSWER: <your answer>\" and end with \"TERMINATE\". \
         Put the short final answer in FINAL ANSWER: <final answer> right before TERMINATE.",
    );
    s
}

/// Question, optional hint, and the bounding box maps.
pub fn request_text(question: &str, hint: Option<&str>, layout: &StructureLayout) -> String {
    let mut s = format!("Question: {question}\n");
    if let Some(h) = hint {
        s.push_str(&format!("Hint: {h}\n"));
    }
    s.push_str("\nBounding boxes are pixel coordinates {x1, y1, x2, y2}, inclusive.\n");
    for &class in layout.target_classes() {
        // target classes always resolve on their own layout
        let regions = layout.targets(class).unwrap_or_default();
        let shown: Vec<NamedRegion> = match (layout, class) {
            // bar maps show the axis label boxes the strips are built from
            (StructureLayout::Chart(c), TargetClass::BarsX | TargetClass::BarsY) => c.axis_entries.clone(),
            _ => regions,
        };
        s.push_str(&format!("{} = {}\n", bbox_var(class), bbox_json(&shown)));
    }
    if let StructureLayout::Table(t) = layout {
        if let Some(h) = t.header_region {
            s.push_str(&format!("header_bbox = {}\n", to_canonical_string(&h)));
        }
    }
    s.push_str("\nThink step by step. Edit the image if that helps you focus, or answer directly.");
    s
}

pub fn reask_text(question: &str) -> String {
    format!(
        "Answer the question: {question} You can read the image as text and reason step by step. \
         You may also make another edit.\n\n\
         Reply with ANSWER: <your answer>\n\n\
         Please extract the final answer in FINAL ANSWER: <final answer> and end with TERMINATE."
    )
}

pub const EDIT_OK: &str = "The edit was applied. Here is the edited image.";

pub fn nothing_to_do(question: &str) -> String {
    format!(
        "Your reply had no function call and no ANSWER. Either call one of the editing functions in a python code block, \
         or answer. {}",
        reask_text(question)
    )
}

pub fn repair_text(errors: &str) -> String {
    format!(
        "Your code could not be applied:\n{errors}\n\
         Fix the call and try again, or answer with ANSWER: <your answer> and FINAL ANSWER: <final answer> followed by TERMINATE."
    )
}
