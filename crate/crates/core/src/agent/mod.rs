//! The edit-observe loop: ask the model, apply any tool calls to the
//! current image, send the result back, stop on a final answer.

pub mod prompt;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::dsl::{extract_calls, validate_calls, Diagnostic, ToolCall};
use crate::layout::StructureLayout;
use crate::llm::{ChatClient, ChatMessage, ChatRequest, LlmError, Part};
use crate::raster::{save_png, Digest, Raster, RasterError};
use crate::tools::{apply_tool, tool_registry, EditRecord};

pub const DEFAULT_MAX_TURNS: usize = 5;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub image: Arc<Raster>,
    pub question: String,
    pub layout: StructureLayout,
    pub gold_answer: Option<String>,
    /// Dataset tag, e.g. `vwtq` or `h_bar`.
    pub source: String,
    /// Extra line shown under the question (used for the gold-answer retry).
    pub hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_turns: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Empty means the client's default.
    pub model_name: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { max_turns: DEFAULT_MAX_TURNS, temperature: 0.0, max_output_tokens: 1024, model_name: String::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub assistant_text: String,
    pub parsed_calls: Vec<ToolCall>,
    pub edit_records: Vec<EditRecord>,
    /// `<digest>.png` of the image sent back after this turn's edits.
    pub observation_image: Option<String>,
    pub observation_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Running,
    Answered { final_answer: String, raw_answer_text: String },
    Failed { reason: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task_id: String,
    pub source: String,
    pub input_image: String,
    pub turns: Vec<Turn>,
    pub status: Status,
    pub edited: bool,
}

impl Episode {
    pub fn final_answer(&self) -> Option<&str> {
        match &self.status {
            Status::Answered { final_answer, .. } => Some(final_answer),
            _ => None,
        }
    }

    pub fn edit_records(&self) -> impl Iterator<Item = &EditRecord> {
        self.turns.iter().flat_map(|t| &t.edit_records)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("episode serializes")
    }
}

/// Content-addressed image store. With a directory every image is also
/// written there as `<digest>.png`.
#[derive(Debug, Default)]
pub struct ImageStore {
    dir: Option<PathBuf>,
    images: Mutex<HashMap<Digest, Arc<Raster>>>,
}

impl ImageStore {
    pub fn in_memory() -> Self {
        ImageStore::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        ImageStore { dir: Some(dir.into()), images: Mutex::default() }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn file_name(d: &Digest) -> String {
        format!("{}.png", d.to_hex())
    }

    pub fn put(&self, r: &Arc<Raster>) -> Result<String, RasterError> {
        let d = r.digest();
        let name = Self::file_name(&d);
        let fresh = self.images.lock().unwrap().insert(d, r.clone()).is_none();
        if let (true, Some(dir)) = (fresh, &self.dir) {
            let path = dir.join(&name);
            if !path.exists() {
                std::fs::create_dir_all(dir).map_err(|e| RasterError::Io(e.to_string()))?;
                std::fs::write(&path, save_png(r)).map_err(|e| RasterError::Io(e.to_string()))?;
            }
        }
        Ok(name)
    }

    /// Look up by `<digest>.png` or bare hex digest.
    pub fn get(&self, name: &str) -> Option<Arc<Raster>> {
        let d = Digest::from_hex(name.trim_end_matches(".png"))?;
        if let Some(r) = self.images.lock().unwrap().get(&d) {
            return Some(r.clone());
        }
        let bytes = std::fs::read(self.dir.as_ref()?.join(Self::file_name(&d))).ok()?;
        crate::raster::load_png(&bytes).ok().map(Arc::new)
    }
}

/// The answer after the last `FINAL ANSWER:` (else the last `ANSWER:`),
/// cut at `TERMINATE`, trimmed of whitespace, `*` and trailing `.,;!`.
/// Markers match case-insensitively.
pub fn extract_final_answer(text: &str) -> Option<String> {
    let upper = text.to_ascii_uppercase();
    let start = ["FINAL ANSWER:", "ANSWER:"].iter().find_map(|m| upper.rfind(m).map(|i| i + m.len()))?;
    let rest = &text[start..];
    let end = rest.to_ascii_uppercase().find("TERMINATE").unwrap_or(rest.len());
    let ans = rest[..end]
        .trim_matches(|c: char| c.is_whitespace() || c == '*')
        .trim_end_matches(|c: char| c.is_whitespace() || ".,;!*".contains(c))
        .trim();
    Some(ans.to_string())
}

fn has_answer_marker(text: &str) -> bool {
    text.to_ascii_uppercase().contains("ANSWER:")
}

/// One running episode: the conversation so far and the current image.
pub struct Session<'a> {
    task: &'a Task,
    store: &'a ImageStore,
    pub episode: Episode,
    messages: Vec<ChatMessage>,
    current: Arc<Raster>,
    repair_pending: bool,
}

pub fn build_initial_prompt(task: &Task) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(prompt::system_prompt(&task.layout)),
        ChatMessage::user(vec![
            Part::Image(task.image.clone()),
            Part::Text(prompt::request_text(&task.question, task.hint.as_deref(), &task.layout)),
        ]),
    ]
}

impl<'a> Session<'a> {
    pub fn new(task: &'a Task, store: &'a ImageStore) -> Result<Self, RasterError> {
        let input_image = store.put(&task.image)?;
        Ok(Session {
            task,
            store,
            episode: Episode {
                task_id: task.id.clone(),
                source: task.source.clone(),
                input_image,
                turns: Vec::new(),
                status: Status::Running,
                edited: false,
            },
            messages: build_initial_prompt(task),
            current: task.image.clone(),
            repair_pending: false,
        })
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn current_image(&self) -> &Arc<Raster> {
        &self.current
    }

    pub fn is_running(&self) -> bool {
        self.episode.status == Status::Running
    }

    fn fail(&mut self, reason: &str, detail: String) {
        self.episode.status = Status::Failed { reason: reason.into(), detail };
    }

    /// Consume one assistant reply.
    pub fn step(&mut self, assistant_text: &str) -> Result<(), RasterError> {
        assert!(self.is_running(), "step on a finished episode");
        self.messages.push(ChatMessage::assistant(assistant_text));
        let mut report = extract_calls(assistant_text, tool_registry());
        let mut turn = Turn {
            assistant_text: assistant_text.to_string(),
            parsed_calls: Vec::new(),
            edit_records: Vec::new(),
            observation_image: None,
            observation_text: None,
            diagnostics: Vec::new(),
        };

        if has_answer_marker(assistant_text) {
            if let Some(ans) = extract_final_answer(assistant_text).filter(|a| !a.is_empty()) {
                report.discard_calls_for_answer();
                turn.diagnostics = report.diagnostics;
                self.episode.turns.push(turn);
                self.episode.status =
                    Status::Answered { final_answer: ans, raw_answer_text: assistant_text.to_string() };
                return Ok(());
            }
        }

        let applied = validate_calls(&report, &self.task.layout).map_err(|e| e.to_string()).and_then(|calls| {
            let mut img = self.current.clone();
            let mut records = Vec::new();
            for c in &calls {
                let (out, rec) = apply_tool(&img, &self.task.layout, c.tool, &c.targets).map_err(|e| e.to_string())?;
                img = Arc::new(out);
                records.push(rec);
            }
            Ok((calls, img, records))
        });
        turn.diagnostics = report.diagnostics.clone();

        let (text, image) = match applied {
            Ok((calls, _, _)) if calls.is_empty() => {
                self.repair_pending = false;
                (prompt::nothing_to_do(&self.task.question), None)
            }
            Ok((calls, img, records)) => {
                self.repair_pending = false;
                self.current = img.clone();
                turn.parsed_calls = calls;
                turn.edit_records = records;
                turn.observation_image = Some(self.store.put(&img)?);
                self.episode.edited = true;
                (format!("{}\n{}", prompt::EDIT_OK, prompt::reask_text(&self.task.question)), Some(img))
            }
            // second failure in a row: no more repair, just ask again
            Err(_) if self.repair_pending => {
                self.repair_pending = false;
                (prompt::reask_text(&self.task.question), None)
            }
            Err(msg) => {
                self.repair_pending = true;
                (prompt::repair_text(&msg), None)
            }
        };
        turn.observation_text = Some(text.clone());
        self.episode.turns.push(turn);
        let mut parts = Vec::new();
        if let Some(img) = image {
            parts.push(Part::Image(img));
        }
        parts.push(Part::Text(text));
        self.messages.push(ChatMessage::user(parts));
        Ok(())
    }
}

fn failure_reason(e: &LlmError) -> &'static str {
    match e {
        LlmError::Auth(_) => "auth",
        LlmError::ReplayMiss { .. } => "replay_miss",
        LlmError::Storage(_) => "storage",
        _ => "transport",
    }
}

/// Run one task to an answer or to the turn limit.
pub fn run(task: &Task, client: &dyn ChatClient, config: &AgentConfig, store: &ImageStore) -> Episode {
    let mut s = match Session::new(task, store) {
        Ok(s) => s,
        Err(e) => {
            return Episode {
                task_id: task.id.clone(),
                source: task.source.clone(),
                input_image: ImageStore::file_name(&task.image.digest()),
                turns: Vec::new(),
                status: Status::Failed { reason: "storage".into(), detail: e.to_string() },
                edited: false,
            }
        }
    };
    while s.is_running() {
        if s.episode.turns.len() >= config.max_turns {
            s.fail("max_turns", format!("no answer after {} turns", config.max_turns));
            break;
        }
        let req = ChatRequest {
            messages: s.messages.clone(),
            temperature: config.temperature,
            max_output_tokens: config.max_output_tokens,
            model_name: config.model_name.clone(),
        };
        match client.complete(&req) {
            Ok(text) => {
                if let Err(e) = s.step(&text) {
                    s.fail("storage", e.to_string());
                }
            }
            Err(e) => s.fail(failure_reason(&e), e.to_string()),
        }
    }
    s.episode
}

/// Run tasks on up to `concurrency` threads; results keep input order.
pub fn run_batch(
    tasks: &[Task],
    client: &dyn ChatClient,
    config: &AgentConfig,
    store: &ImageStore,
    concurrency: usize,
) -> Vec<Episode> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Episode>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..concurrency.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let ep = run(task, client, config, store);
                *slots[i].lock().unwrap() = Some(ep);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every task ran")).collect()
}

/// Share of edited episodes per source tag.
pub fn edit_rate(episodes: &[Episode]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for e in episodes {
        let c = counts.entry(e.source.clone()).or_default();
        c.0 += e.edited as usize;
        c.1 += 1;
    }
    counts.into_iter().map(|(k, (ed, n))| (k, ed as f64 / n as f64)).collect()
}

/// Re-apply the recorded edits from the task image and return the
/// observation digest names; they should equal the stored references.
pub fn replay_edits(task: &Task, episode: &Episode) -> Result<Vec<String>, crate::tools::EditError> {
    let mut img = (*task.image).clone();
    let mut out = Vec::new();
    for t in &episode.turns {
        if t.edit_records.is_empty() {
            continue;
        }
        for r in &t.edit_records {
            img = apply_tool(&img, &task.layout, r.tool, &r.targets)?.0;
        }
        out.push(ImageStore::file_name(&img.digest()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedClient;
    use crate::synth::demo;
    use crate::tools::ToolId;

    fn cycling_task() -> Task {
        let (img, gt) = demo::cycling_table();
        Task {
            id: "cycling".into(),
            image: Arc::new(img),
            question: demo::CYCLING_QUESTION.into(),
            layout: gt.layout,
            gold_answer: Some(demo::CYCLING_ANSWER.into()),
            source: "vwtq".into(),
            hint: None,
        }
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(
            extract_final_answer("ANSWER: The number of wins Els had is 2. FINAL ANSWER: 2. TERMINATE").as_deref(),
            Some("2")
        );
        assert_eq!(extract_final_answer("so ... FINAL ANSWER: 24.75. TERMINATE").as_deref(), Some("24.75"));
        assert_eq!(extract_final_answer("**Final Answer:** Belgium").as_deref(), Some("Belgium"));
        assert_eq!(extract_final_answer("ANSWER: 12"), Some("12".into()));
        assert_eq!(extract_final_answer("nothing here"), None);
    }

    #[test]
    fn rider_trajectory() {
        let task = cycling_task();
        let client = ScriptedClient::single(demo::cycling_script());
        let store = ImageStore::in_memory();
        let ep = run(&task, &client, &AgentConfig::default(), &store);
        assert_eq!(ep.final_answer(), Some("47"));
        assert!(ep.edited);
        let tools: Vec<ToolId> = ep.edit_records().map(|r| r.tool).collect();
        assert_eq!(tools, [ToolId::MaskColumnsKeep, ToolId::DrawRows]);
        let stored: Vec<String> = ep.turns.iter().filter_map(|t| t.observation_image.clone()).collect();
        assert_eq!(replay_edits(&task, &ep).unwrap(), stored);
        // second edit composes on the first
        let recs: Vec<&EditRecord> = ep.edit_records().collect();
        assert_eq!(recs[1].input_hash, recs[0].output_hash);
        let again = run(&task, &client, &AgentConfig::default(), &ImageStore::in_memory());
        assert_eq!(again.to_json(), ep.to_json());
    }

    #[test]
    fn immediate_answer_and_turn_limit() {
        let task = cycling_task();
        let store = ImageStore::in_memory();
        let ep = run(&task, &ScriptedClient::single(vec!["FINAL ANSWER: 47. TERMINATE".into()]), &AgentConfig::default(), &store);
        assert_eq!(ep.final_answer(), Some("47"));
        assert!(!ep.edited);
        let ep = run(&task, &ScriptedClient::single(vec!["hmm".into()]), &AgentConfig::default(), &store);
        assert_eq!(ep.status, Status::Failed { reason: "max_turns".into(), detail: "no answer after 5 turns".into() });
        assert_eq!(ep.turns.len(), 5);
    }

    #[test]
    fn one_repair_then_plain_reask() {
        let task = cycling_task();
        let bad = "image = focus_on_columns_with_mask(image, [\"Nation\"], columns_bbox)".to_string();
        let client = ScriptedClient::single(vec![bad.clone(), bad, "FINAL ANSWER: 47. TERMINATE".into()]);
        let ep = run(&task, &client, &AgentConfig::default(), &ImageStore::in_memory());
        let obs: Vec<&str> = ep.turns.iter().filter_map(|t| t.observation_text.as_deref()).collect();
        assert!(obs[0].contains("UnknownTarget"));
        assert!(!obs[1].contains("UnknownTarget"));
        assert!(!ep.edited);
        assert_eq!(ep.final_answer(), Some("47"));
    }

    #[test]
    fn answer_beats_calls() {
        let task = cycling_task();
        let text = "focus_on_columns_with_mask(image, [\"Wins\"], b)\nFINAL ANSWER: 47. TERMINATE";
        let ep = run(&task, &ScriptedClient::single(vec![text.into()]), &AgentConfig::default(), &ImageStore::in_memory());
        assert!(!ep.edited);
        assert_eq!(ep.turns[0].diagnostics.len(), 1);
    }

    #[test]
    fn transport_failure() {
        struct Down;
        impl ChatClient for Down {
            fn complete(&self, _: &ChatRequest) -> Result<String, LlmError> {
                Err(LlmError::Transport("down".into()))
            }
        }
        let ep = run(&cycling_task(), &Down, &AgentConfig::default(), &ImageStore::in_memory());
        assert!(matches!(ep.status, Status::Failed { ref reason, .. } if reason == "transport"));
    }

    #[test]
    fn prompt_lists_columns_and_protocol() {
        let task = cycling_task();
        let msgs = build_initial_prompt(&task);
        let sys = msgs[0].text();
        assert!(sys.contains("FINAL ANSWER: <final answer>"));
        assert!(sys.contains("focus_on_rows_with_draw") && !sys.contains("focus_on_subplots"));
        let user = msgs[1].text();
        let StructureLayout::Table(t) = &task.layout else { panic!() };
        for c in &t.columns {
            let r = c.region;
            let frag = format!("\"{}\": {{\"x1\": {}, \"y1\": {}, \"x2\": {}, \"y2\": {}}}", c.name, r.x1, r.y1, r.x2, r.y2);
            assert!(user.contains(&frag), "{frag}");
        }
    }

    #[test]
    fn batch_keeps_order_and_rates() {
        let mut tasks = Vec::new();
        for i in 0..6 {
            let mut t = cycling_task();
            t.id = format!("t{i}");
            t.source = if i % 2 == 0 { "a".into() } else { "b".into() };
            t.question = format!("{} #{i}", t.question);
            tasks.push(t);
        }
        let client = ScriptedClient::from_json(
            r##"[{"match": [], "responses": ["FINAL ANSWER: 1. TERMINATE"]},
                {"match": ["#0"], "responses": ["focus_on_rows_with_draw(image, [\"row_1\"], b)", "FINAL ANSWER: 1. TERMINATE"]}]"##,
        )
        .unwrap();
        let eps = run_batch(&tasks, &client, &AgentConfig::default(), &ImageStore::in_memory(), 3);
        assert_eq!(eps.iter().map(|e| e.task_id.as_str()).collect::<Vec<_>>(), ["t0", "t1", "t2", "t3", "t4", "t5"]);
        let rates = edit_rate(&eps);
        assert!((rates["a"] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(rates["b"], 0.0);
    }
}
