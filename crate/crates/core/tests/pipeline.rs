//! Dataset on disk through layout preparation, the agent loop, scoring,
//! reporting and record/replay.

use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;

use refocus::agent::{replay_edits, run_batch, AgentConfig, ImageStore, Task};
use refocus::eval::{load_dataset, prepare_task, report, score, ScoreConfig};
use refocus::layout::StructureLayout;
use refocus::llm::{ReplayClient, ReplayStore, ScriptEntry, ScriptedClient};
use refocus::raster::Region;
use refocus::synth::{make_corpus, synth_question, SynthSpec};

fn source_of(spec: &SynthSpec, layout: &StructureLayout) -> &'static str {
    match (spec, layout) {
        (SynthSpec::Table(_), _) => "vwtq_syn",
        (_, StructureLayout::Chart(c)) if !c.subplots.is_empty() => "charxiv",
        (_, StructureLayout::Chart(c)) => match c.kind {
            refocus::layout::ChartKind::VerticalBar => "v_bar",
            _ => "h_bar",
        },
        _ => unreachable!(),
    }
}

#[derive(serde::Serialize)]
struct Line<'a> {
    id: String,
    question: &'a str,
    answer: &'a str,
    source: &'a str,
    image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    columns: Option<Vec<&'a str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<usize>,
    // an IndexMap keeps axis order on the way out
    #[serde(skip_serializing_if = "Option::is_none")]
    axis: Option<IndexMap<&'a str, Region>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chart: Option<&'a str>,
}

/// Writes `n` mixed items with structure hints only (no full layout).
fn write_dataset(dir: &Path, n: usize) -> Vec<(String, String)> {
    let items = make_corpus(n, 8);
    // ids in the question keep script matches unique when two charts share a label
    let qa: Vec<(String, String)> = items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let (q, a) = synth_question(&it.spec);
            (format!("(item{i}) {q}"), a)
        })
        .collect();
    let mut lines = Vec::new();
    for (i, (item, (q, a))) in items.iter().zip(&qa).enumerate() {
        let stem = format!("item{i}");
        item.export(dir, &stem).unwrap();
        let mut line = Line {
            id: stem.clone(),
            question: q,
            answer: a,
            source: source_of(&item.spec, &item.truth.layout),
            image: format!("{stem}.png"),
            columns: None,
            rows: None,
            axis: None,
            chart: None,
        };
        match &item.truth.layout {
            StructureLayout::Table(t) => {
                line.columns = Some(t.columns.iter().map(|c| c.name.as_str()).collect());
                line.rows = Some(t.rows.len());
            }
            StructureLayout::Chart(c) if c.subplots.is_empty() => {
                line.axis = Some(c.axis_entries.iter().map(|e| (e.name.as_str(), e.region)).collect());
                line.chart = Some(c.kind.as_str());
            }
            StructureLayout::Chart(_) => line.chart = Some("multi_subplot"),
        }
        lines.push(serde_json::to_string(&line).unwrap());
    }
    std::fs::write(dir.join("data.jsonl"), lines.join("\n")).unwrap();
    qa
}

fn answering_script(qa: &[(String, String)]) -> ScriptedClient {
    ScriptedClient::new(
        qa.iter()
            .map(|(q, a)| ScriptEntry {
                matches: vec![q.clone()],
                responses: vec![format!("THOUGHT 0: Reading it off.\nANSWER: FINAL ANSWER: {a}. TERMINATE")],
            })
            .collect(),
    )
}

fn tasks(dir: &Path) -> Vec<Task> {
    load_dataset(dir.join("data.jsonl"), None).unwrap().iter().map(|it| prepare_task(it).unwrap()).collect()
}

#[test]
fn dataset_to_report() {
    let d = tempfile::tempdir().unwrap();
    let qa = write_dataset(d.path(), 8);
    let tasks = tasks(d.path());
    assert_eq!(tasks.len(), 8);
    // every prepared layout exposes at least one target class with targets
    for t in &tasks {
        let class = t.layout.target_classes()[0];
        assert!(!t.layout.targets(class).unwrap().is_empty(), "{}", t.id);
    }
    let eps = run_batch(&tasks, &answering_script(&qa), &AgentConfig::default(), &ImageStore::in_memory(), 3);
    let scores: Vec<bool> = tasks
        .iter()
        .zip(&eps)
        .map(|(t, e)| {
            let cfg = ScoreConfig::for_source(&t.source);
            score(e.final_answer().unwrap(), t.gold_answer.as_deref().unwrap(), &cfg).unwrap()
        })
        .collect();
    let r = report(&eps, &scores);
    assert_eq!(r.overall.items, 8);
    assert_eq!(r.overall.accuracy, 1.0);
    assert_eq!(r.sources.len(), 4);
    assert_eq!(r.overall.edit_rate, 0.0);
}

#[test]
fn record_then_replay_offline() {
    let d = tempfile::tempdir().unwrap();
    let (img, gt) = refocus::synth::demo::cycling_table();
    let task = Task {
        id: "riders".into(),
        image: Arc::new(img),
        question: refocus::synth::demo::CYCLING_QUESTION.into(),
        layout: gt.layout,
        gold_answer: Some("47".into()),
        source: "synth".into(),
        hint: None,
    };
    let store_path = d.path().join("replay.jsonl");
    let images = ImageStore::with_dir(d.path().join("img"));
    let upstream = ScriptedClient::single(refocus::synth::demo::cycling_script());
    let recording = ReplayClient::recording(Arc::new(ReplayStore::open(&store_path).unwrap()), Box::new(upstream));
    let first = refocus::agent::run(&task, &recording, &AgentConfig::default(), &images);
    assert_eq!(first.final_answer(), Some("47"));

    let offline = ReplayClient::new(Arc::new(ReplayStore::open(&store_path).unwrap()));
    assert_eq!(offline.store().len(), 3);
    let second = refocus::agent::run(&task, &offline, &AgentConfig::default(), &ImageStore::in_memory());
    assert_eq!(first.to_json(), second.to_json());

    // observation files exist and re-applying the edit log reproduces them
    let names: Vec<String> = first.turns.iter().filter_map(|t| t.observation_image.clone()).collect();
    assert_eq!(names.len(), 2);
    for n in &names {
        assert!(d.path().join("img").join(n).exists(), "{n}");
    }
    assert_eq!(replay_edits(&task, &first).unwrap(), names);

    // a different question misses the store
    let mut other = task.clone();
    other.question = "How many riders are there?".into();
    let miss = refocus::agent::run(&other, &offline, &AgentConfig::default(), &ImageStore::in_memory());
    assert!(matches!(&miss.status, refocus::agent::Status::Failed { reason, .. } if reason == "replay_miss"));
}
