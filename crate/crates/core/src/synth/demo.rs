//! Small hand-authored fixtures shared by tests, the CLI and examples.

use super::{render_table, GroundTruth, TableSpec, TableStyle};
use crate::llm::ScriptEntry;
use crate::raster::Raster;

pub const CYCLING_QUESTION: &str = "What is the total number of wins by Belgian riders?";
pub const CYCLING_ANSWER: &str = "47";

const CYCLING_ROWS: [[&str; 5]; 6] = [
    ["1", "Merckx", "Molteni", "Belgium", "21"],
    ["2", "Gimondi", "Salvarani", "Italy", "11"],
    ["3", "De Vlaeminck", "Flandria", "Belgium", "15"],
    ["4", "Ocana", "Bic", "Spain", "7"],
    ["5", "Maertens", "Flandria", "Belgium", "11"],
    ["6", "Zoetemelk", "Gan", "Netherlands", "9"],
];

pub fn cycling_spec() -> TableSpec {
    TableSpec {
        seed: 0,
        columns: ["Rank", "Rider", "Team", "Country", "Wins"].iter().map(|s| s.to_string()).collect(),
        cells: CYCLING_ROWS.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        style: TableStyle::default(),
    }
}

/// Rider table; the Belgian riders are `row_1`, `row_3` and `row_5`.
pub fn cycling_table() -> (Raster, GroundTruth) {
    render_table(&cycling_spec()).expect("fixture spec is valid")
}

/// Model turns for the mask-columns, draw-rows, answer trajectory.
pub fn cycling_script() -> Vec<String> {
    vec![
        "THOUGHT 0: Only the team, country and wins matter here, so I will mask the other columns.\n\
         ACTION 0:\n```python\n\
         image_1 = focus_on_columns_with_mask(image, [\"Team\", \"Country\", \"Wins\"], columns_bbox)\n```"
            .to_string(),
        "THOUGHT 1: Now I box the rows whose country is Belgium.\n\
         ACTION 1:\n```python\n\
         image_2 = focus_on_rows_with_draw(image_1, [\"row_1\", \"row_3\", \"row_5\"], rows_bbox)\n```"
            .to_string(),
        "THOUGHT 2: The boxed rows have 21, 15 and 11 wins, which adds up to 47.\n\
         ANSWER: FINAL ANSWER: 47. TERMINATE"
            .to_string(),
    ]
}

/// Questions over the rider table for the collection fixture, as
/// `(id, question, gold)`. Items 0..6 are answered right first time, 6..8
/// only after the hint and 8..10 never.
pub const COLLECT_ITEMS: [(&str, &str, &str); 10] = [
    ("riders-0", "How many wins does Merckx have?", "21"),
    ("riders-1", "How many wins does Gimondi have?", "11"),
    ("riders-2", "How many wins does Ocana have?", "7"),
    ("riders-3", "Which team does Zoetemelk ride for?", "Gan"),
    ("riders-4", "What country is Maertens from?", "Belgium"),
    ("riders-5", "How many riders are from Belgium?", "3"),
    ("riders-6", "How many wins does Zoetemelk have?", "9"),
    ("riders-7", "What is the rank of Ocana?", "4"),
    ("riders-8", "How many wins do Italian riders have in total?", "11"),
    ("riders-9", "Which rider has the fewest wins?", "Ocana"),
];

fn edit_then_answer(call: &str, answer: &str) -> Vec<String> {
    vec![
        format!("THOUGHT 0: The relevant cells are easier to read once isolated.\nACTION 0:\n```python\nimage_1 = {call}\n```"),
        format!("THOUGHT 1: Reading the marked area gives {answer}.\nANSWER: FINAL ANSWER: {answer}. TERMINATE"),
    ]
}

fn answer_only(answer: &str) -> Vec<String> {
    vec![format!("THOUGHT 0: This can be read off directly.\nANSWER: FINAL ANSWER: {answer}. TERMINATE")]
}

/// Script for [`COLLECT_ITEMS`]; hinted runs match on the hint text.
pub fn collect_script() -> Vec<ScriptEntry> {
    let e = |m: &[&str], responses: Vec<String>| ScriptEntry { matches: m.iter().map(|s| s.to_string()).collect(), responses };
    let q = |i: usize| COLLECT_ITEMS[i].1;
    let hint = "The correct answer is";
    vec![
        e(&[q(0)], edit_then_answer("focus_on_rows_with_highlight(image, [\"row_1\"], rows_bbox)", "21")),
        e(&[q(1)], edit_then_answer("focus_on_rows_with_draw(image, [\"row_2\"], rows_bbox)", "11")),
        e(&[q(2)], edit_then_answer("focus_on_columns_with_mask(image, [\"Rider\", \"Wins\"], columns_bbox)", "7")),
        e(&[q(3)], edit_then_answer("focus_on_rows_with_mask(image, [\"row_6\"], rows_bbox)", "Gan")),
        e(&[q(4)], answer_only("Belgium")),
        e(&[q(5)], answer_only("3")),
        e(&[q(6)], answer_only("6")),
        e(&[q(6), hint], edit_then_answer("focus_on_rows_with_highlight(image, [\"row_6\"], rows_bbox)", "9")),
        e(&[q(7)], answer_only("3")),
        e(&[q(7), hint], edit_then_answer("focus_on_columns_with_draw(image, [\"Rank\", \"Rider\"], columns_bbox)", "4")),
        e(&[q(8)], answer_only("12")),
        e(&[q(9)], edit_then_answer("focus_on_columns_with_highlight(image, [\"Wins\"], columns_bbox)", "Zoetemelk")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::StructureLayout;

    #[test]
    fn belgian_rows_sum_to_answer() {
        let s = cycling_spec();
        let total: u32 = s.cells.iter().filter(|r| r[3] == "Belgium").map(|r| r[4].parse::<u32>().unwrap()).sum();
        assert_eq!(total.to_string(), CYCLING_ANSWER);
        let (_, gt) = cycling_table();
        let StructureLayout::Table(t) = gt.layout else { panic!() };
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.columns[2].name, "Team");
    }
}
