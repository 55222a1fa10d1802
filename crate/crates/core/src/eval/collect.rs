//! Training-record collection: keep episodes that reach the gold answer,
//! retrying once with the gold answer as a hint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::score::{score_with, ScoreConfig};
use crate::agent::{run_batch, AgentConfig, Episode, ImageStore, Status, Task};
use crate::json::to_canonical_string;
use crate::llm::ChatClient;
use crate::raster::Region;

/// Joins the editing thought to the focus boxes in `vcot_input`.
pub const FOCUS_PREFIX: &str = " The areas to focus on in the image have bounding box coordinates: ";
/// Joins the focus boxes to the answering thought in `vcot_input`.
pub const FOCUS_SUFFIX: &str = ". Looking at these areas, ";

pub fn hint_text(gold: &str) -> String {
    format!("The correct answer is {gold}. Explain and refocus accordingly.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VCoTRecord {
    pub id: String,
    pub query: String,
    pub answer: String,
    pub source: String,
    pub images: Vec<String>,
    pub response0: String,
    pub edited_images: Vec<String>,
    pub response1: String,
    pub focus_areas: Vec<Region>,
    pub vcot_input: String,
}

/// Assemble the training target.
pub fn vcot_input(response0: &str, focus_areas: &[Region], response1: &str) -> String {
    if focus_areas.is_empty() {
        return if response0 == response1 { response1.to_string() } else { format!("{response0} {response1}") };
    }
    format!("{response0}{FOCUS_PREFIX}{}{FOCUS_SUFFIX}{response1}", to_canonical_string(&focus_areas))
}

/// Recover the focus boxes from a `vcot_input` string. `None` when it has
/// no focus section.
pub fn parse_focus_areas(vcot_input: &str) -> Option<Vec<Region>> {
    let at = vcot_input.rfind(FOCUS_PREFIX)? + FOCUS_PREFIX.len();
    let mut stream = serde_json::Deserializer::from_str(&vcot_input[at..]).into_iter::<Vec<Region>>();
    let areas = stream.next()?.ok()?;
    vcot_input[at + stream.byte_offset()..].starts_with(FOCUS_SUFFIX).then_some(areas)
}

impl VCoTRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.query.is_empty() || self.images.is_empty() {
            return Err("id, query and images are required".into());
        }
        if self.focus_areas.is_empty() != self.edited_images.is_empty() {
            return Err("focus_areas must be nonempty exactly when edited_images is".into());
        }
        if self.vcot_input != vcot_input(&self.response0, &self.focus_areas, &self.response1) {
            return Err("vcot_input does not match response0, focus_areas and response1".into());
        }
        if !self.focus_areas.is_empty() && parse_focus_areas(&self.vcot_input).as_deref() != Some(&self.focus_areas[..]) {
            return Err("focus_areas do not round-trip through vcot_input".into());
        }
        Ok(())
    }
}

/// Strip fenced code, tool-call lines, turn labels and protocol markers,
/// leaving the prose.
fn prose(text: &str) -> String {
    let mut keep = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence || line.contains("focus_on_") {
            continue;
        }
        keep.push(line);
    }
    let mut s = strip_labels(&keep.join(" "));
    s = s.replace("TERMINATE", "");
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

// drops "THOUGHT 0:" / "ACTION 1:" style labels
fn strip_labels(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    loop {
        let next = ["THOUGHT", "ACTION"].iter().filter_map(|l| rest.find(l).map(|i| (i, l.len()))).min();
        let Some((i, n)) = next else {
            out.push_str(rest);
            return out;
        };
        let after = &rest[i + n..];
        let tail = after.trim_start().trim_start_matches(|c: char| c.is_ascii_digit());
        match tail.strip_prefix(':') {
            Some(t) => {
                out.push_str(&rest[..i]);
                rest = t;
            }
            None => {
                out.push_str(&rest[..i + n]);
                rest = after;
            }
        }
    }
}

/// The answering prose: whatever precedes the final-answer marker, without
/// the `ANSWER:` label; the bare answer when nothing else is there.
fn answer_prose(text: &str, final_answer: &str) -> String {
    let upper = text.to_ascii_uppercase();
    let head = match upper.rfind("FINAL ANSWER:") {
        Some(i) => &text[..i],
        None => text,
    };
    let mut p = prose(head);
    if let Some(rest) = p.strip_prefix("ANSWER:") {
        p = rest.trim().to_string();
    }
    if p.is_empty() {
        final_answer.to_string()
    } else {
        p
    }
}

/// Reduce an answered episode to a record. `image` is the input image path.
pub fn record_from_episode(task: &Task, image: &str, ep: &Episode) -> Option<VCoTRecord> {
    let Status::Answered { final_answer, raw_answer_text } = &ep.status else {
        return None;
    };
    let (response0, edited_images, focus_areas) = match ep.turns.iter().rev().find(|t| !t.edit_records.is_empty()) {
        Some(t) => {
            let mut areas: Vec<Region> = Vec::new();
            for r in t.edit_records.iter().flat_map(|r| &r.affected_regions) {
                if !areas.contains(r) {
                    areas.push(*r);
                }
            }
            let img = t.observation_image.as_ref().map(|o| format!("{}/{o}", task.id));
            (prose(&t.assistant_text), img.into_iter().collect(), areas)
        }
        None => {
            let first = ep.turns.first()?;
            let r0 = if first.assistant_text == *raw_answer_text {
                answer_prose(raw_answer_text, final_answer)
            } else {
                prose(&first.assistant_text)
            };
            (r0, Vec::new(), Vec::new())
        }
    };
    let response1 = answer_prose(raw_answer_text, final_answer);
    Some(VCoTRecord {
        id: task.id.clone(),
        query: task.question.clone(),
        answer: task.gold_answer.clone().unwrap_or_default(),
        source: task.source.clone(),
        images: vec![image.to_string()],
        vcot_input: vcot_input(&response0, &focus_areas, &response1),
        response0,
        edited_images,
        response1,
        focus_areas,
    })
}

#[derive(Debug, Clone)]
pub struct CollectItem {
    pub task: Task,
    /// Input image path as it should appear in `images`.
    pub image: String,
}

#[derive(Debug, Clone)]
pub struct CollectConfig {
    pub agent: AgentConfig,
    /// `None` picks [`ScoreConfig::for_source`] per item.
    pub score: Option<ScoreConfig>,
    pub concurrency: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig { agent: AgentConfig::default(), score: None, concurrency: crate::agent::DEFAULT_CONCURRENCY }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectStats {
    pub items: usize,
    pub first_try: usize,
    pub with_hint: usize,
    pub discarded: usize,
    pub skipped: usize,
    pub edited_records: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CollectOutcome {
    pub records: Vec<VCoTRecord>,
    /// Items dropped for infrastructure reasons, with the failure reason.
    pub skipped: Vec<(String, String)>,
    pub stats: CollectStats,
}

fn infra_failure(ep: &Episode) -> Option<String> {
    match &ep.status {
        Status::Failed { reason, detail } if reason != "max_turns" => Some(format!("{reason}: {detail}")),
        _ => None,
    }
}

fn correct(task: &Task, ep: &Episode, cfg: &CollectConfig) -> bool {
    let (Some(pred), Some(gold)) = (ep.final_answer(), task.gold_answer.as_deref()) else {
        return false;
    };
    let sc = cfg.score.unwrap_or_else(|| ScoreConfig::for_source(&task.source));
    score_with(pred, gold, &sc, None).unwrap_or(false)
}

/// Run every item, retry misses once with a hint, keep what ends correct.
/// Records come out in item order.
pub fn collect_vcot(items: &[CollectItem], client: &dyn ChatClient, cfg: &CollectConfig, store: &ImageStore) -> CollectOutcome {
    let tasks: Vec<Task> = items.iter().map(|i| i.task.clone()).collect();
    let first = run_batch(&tasks, client, &cfg.agent, store, cfg.concurrency);

    let mut retry_idx = Vec::new();
    let mut kept: Vec<Option<(usize, Episode)>> = vec![None; items.len()];
    let mut out = CollectOutcome::default();
    out.stats.items = items.len();
    for (i, ep) in first.into_iter().enumerate() {
        if let Some(why) = infra_failure(&ep) {
            out.skipped.push((tasks[i].id.clone(), why));
        } else if correct(&tasks[i], &ep, cfg) {
            out.stats.first_try += 1;
            kept[i] = Some((i, ep));
        } else if tasks[i].gold_answer.is_some() {
            retry_idx.push(i);
        } else {
            out.stats.discarded += 1;
        }
    }

    let hinted: Vec<Task> = retry_idx
        .iter()
        .map(|&i| {
            let mut t = tasks[i].clone();
            t.hint = Some(hint_text(t.gold_answer.as_deref().unwrap_or_default()));
            t
        })
        .collect();
    let second = run_batch(&hinted, client, &cfg.agent, store, cfg.concurrency);
    for ((&i, t), ep) in retry_idx.iter().zip(&hinted).zip(second) {
        if let Some(why) = infra_failure(&ep) {
            out.skipped.push((t.id.clone(), why));
        } else if correct(t, &ep, cfg) {
            out.stats.with_hint += 1;
            kept[i] = Some((i, ep));
        } else {
            out.stats.discarded += 1;
        }
    }
    out.skipped.sort();
    out.stats.skipped = out.skipped.len();

    for (i, ep) in kept.into_iter().flatten() {
        // the record keeps the original question, not the hinted prompt
        if let Some(rec) = record_from_episode(&tasks[i], &items[i].image, &ep) {
            out.stats.edited_records += !rec.edited_images.is_empty() as usize;
            out.records.push(rec);
        }
    }
    out
}

/// Write `vcot.jsonl` plus each edited image under `<dir>/<id>/`.
pub fn write_vcot(dir: &Path, records: &[VCoTRecord], store: &ImageStore) -> std::io::Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("vcot.jsonl"))?);
    for r in records {
        r.validate().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", r.id)))?;
        writeln!(f, "{}", serde_json::to_string(r)?)?;
        for rel in &r.edited_images {
            let name = rel.rsplit('/').next().unwrap_or(rel);
            let img = store.get(name).ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, rel.clone()))?;
            let path = dir.join(rel);
            std::fs::create_dir_all(path.parent().unwrap())?;
            std::fs::write(path, crate::raster::save_png(&img))?;
        }
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vcot_input_format_and_round_trip() {
        let areas = vec![Region::new(5, 38, 795, 72)];
        let s = vcot_input("Focus on Ferrari.", &areas, "Ferrari had won 16 titles.");
        assert_eq!(
            s,
            "Focus on Ferrari. The areas to focus on in the image have bounding box coordinates: \
             [{\"x1\": 5, \"y1\": 38, \"x2\": 795, \"y2\": 72}]. Looking at these areas, Ferrari had won 16 titles."
        );
        assert_eq!(parse_focus_areas(&s), Some(areas));
        assert_eq!(vcot_input("same", &[], "same"), "same");
        assert_eq!(parse_focus_areas("same"), None);
    }

    #[test]
    fn prose_strips_code_and_labels() {
        let t = "THOUGHT 0: mask the rest.\nACTION 0:\n```python\nimage = focus_on_rows_with_draw(image, [\"row_1\"], b)\n```";
        assert_eq!(prose(t), "mask the rest.");
        assert_eq!(answer_prose("ANSWER: It is 2. FINAL ANSWER: 2. TERMINATE", "2"), "It is 2.");
        assert_eq!(answer_prose("FINAL ANSWER: 2. TERMINATE", "2"), "2");
    }
}
