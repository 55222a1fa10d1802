//! `refocus` command line.
//!
//! stdout carries only the payload of each subcommand (JSON, a path or
//! the final answer); everything else goes to stderr. Exit status is 0 on
//! full success, 1 when some items failed and 2 on usage or fatal errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde_json::{json, Value};

use refocus::agent::{run, run_batch, Episode, ImageStore, Status, Task};
use refocus::eval::{collect_vcot, load_dataset, prepare_task, report, score, write_vcot, CollectConfig, CollectItem, ScoreConfig};
use refocus::layout::{ChartKind, ChartLayout, NamedRegion, StructureLayout};
use refocus::llm::{ChatClient, OpenAiClient, ReplayClient, ReplayStore, ScriptEntry, ScriptedClient, ENV_API_KEY};
use refocus::raster::{load_png, save_png, Raster, Region};
use refocus::structure::chart::subplot_layout;
use refocus::structure::{detect_plot_region, infer_table_layout};
use refocus::synth::{demo, make_corpus, make_subplot_corpus, make_table_corpus, synth_question, SynthItem};
use refocus::tools::{apply_tool, ToolId};

use config::{FileConfig, FlagConfig, Settings};

#[derive(Parser)]
#[command(name = "refocus", version, about = "Edit table and chart images to focus a multimodal model's reasoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect table or chart structure and print the layout JSON.
    Detect {
        image: PathBuf,
        #[command(flatten)]
        layout: LayoutArgs,
    },
    /// Apply one editing tool and print the output PNG path.
    Edit {
        image: PathBuf,
        /// Layout JSON, as printed by `detect`.
        #[arg(long)]
        layout: PathBuf,
        /// Tool id (`mask_columns_keep`) or surface name (`focus_on_columns_with_mask`).
        #[arg(long)]
        tool: String,
        #[arg(required = true)]
        targets: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the edit-and-reason loop on one image and question.
    Run {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        question: String,
        /// Layout JSON; otherwise detected from the layout flags.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[command(flatten)]
        detect: LayoutArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Print the whole episode as JSON instead of the answer line.
        #[arg(long)]
        json: bool,
    },
    /// Run a JSONL dataset and print a report.
    Bench {
        data: PathBuf,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Also write every episode, one JSON object per line.
        #[arg(long)]
        episodes: Option<PathBuf>,
    },
    /// Collect training records: keep episodes that end correct, retrying
    /// misses once with the gold answer as a hint.
    Collect {
        data: PathBuf,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Written: `<out>/vcot.jsonl` and `<out>/<id>/<digest>.png`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic corpus with ground truth and a dataset file.
    RenderSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Kind::Mixed)]
        kind: Kind,
        /// Write the rider-table fixtures and their scripts instead.
        #[arg(long)]
        demo: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mixed,
    Table,
    Subplot,
}

#[derive(Args)]
struct LayoutArgs {
    /// Table column names, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    /// Table body row count.
    #[arg(long)]
    rows: Option<usize>,
    /// `horizontal_bar`, `vertical_bar` or `multi_subplot`.
    #[arg(long, value_parser = parse_chart)]
    chart: Option<ChartKind>,
    /// Bar charts: JSON object of axis label to bbox, in axis order.
    #[arg(long)]
    axis: Option<PathBuf>,
    /// Subplot candidates to keep.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct DatasetArgs {
    /// Source tag for items that have none.
    #[arg(long)]
    source: Option<String>,
}

#[derive(Args)]
struct BackendArgs {
    /// Answer only from this replay store; no network.
    #[arg(long, conflicts_with_all = ["script", "record"])]
    replay: Option<PathBuf>,
    /// Scripted responses (JSON list of `{"match": [...], "responses": [...]}`).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Record every response into this replay store.
    #[arg(long)]
    record: Option<PathBuf>,
    /// TOML settings file; environment and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Keep observation images in this directory.
    #[arg(long)]
    images: Option<PathBuf>,
}

/// `println!` to stdout that tolerates a closed pipe (`refocus detect | head`).
macro_rules! emit {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

fn parse_chart(s: &str) -> Result<ChartKind, String> {
    ChartKind::parse(s).ok_or_else(|| format!("unknown chart kind {s:?}"))
}

/// Usage and fatal errors; both exit 2.
type Res<T> = Result<T, String>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Detect { image, layout } => cmd_detect(&image, &layout),
        Command::Edit { image, layout, tool, targets, output } => cmd_edit(&image, &layout, &tool, &targets, output),
        Command::Run { image, question, layout, detect, backend, json } => {
            cmd_run(&image, &question, layout.as_deref(), &detect, &backend, json)
        }
        Command::Bench { data, dataset, backend, episodes } => cmd_bench(&data, &dataset, &backend, episodes.as_deref()),
        Command::Collect { data, dataset, backend, out } => cmd_collect(&data, &dataset, &backend, &out),
        Command::RenderSynth { out, n, seed, kind, demo } => cmd_render(&out, n, seed, kind, demo),
    };
    match out {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_image(path: &Path) -> Res<Raster> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    load_png(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_layout(path: &Path) -> Res<StructureLayout> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    StructureLayout::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn detect_layout(r: &Raster, a: &LayoutArgs) -> Res<StructureLayout> {
    match a.chart {
        Some(ChartKind::MultiSubplot) => {
            let l = subplot_layout(r, a.top_k);
            if l.subplots.is_empty() {
                return Err("DetectionFailed: no subplot candidates".into());
            }
            Ok(StructureLayout::Chart(l))
        }
        Some(kind) => {
            let path = a.axis.as_ref().ok_or("bar charts need --axis with the axis label boxes")?;
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let axis: IndexMap<String, Region> = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let entries: Vec<NamedRegion> = axis.into_iter().map(|(k, v)| NamedRegion::new(k, v)).collect();
            let plot_region = detect_plot_region(r, &entries).ok_or("DetectionFailed: no plot area found")?;
            Ok(StructureLayout::Chart(ChartLayout { kind, plot_region, axis_entries: entries, subplots: Vec::new() }))
        }
        None => {
            let rows = match (a.columns.is_empty(), a.rows) {
                (false, Some(n)) => n,
                _ => return Err("give --columns and --rows for a table, or --chart".into()),
            };
            infer_table_layout(r, &a.columns, rows).map(StructureLayout::Table).map_err(|e| e.to_string())
        }
    }
}

fn cmd_detect(image: &Path, a: &LayoutArgs) -> Res<ExitCode> {
    let layout = detect_layout(&read_image(image)?, a)?;
    emit!("{}", layout.to_json_pretty());
    Ok(ExitCode::SUCCESS)
}

fn cmd_edit(image: &Path, layout: &Path, tool: &str, targets: &[String], output: Option<PathBuf>) -> Res<ExitCode> {
    let tool = ToolId::parse(tool).or_else(|| ToolId::from_surface(tool)).ok_or_else(|| {
        let names: Vec<&str> = ToolId::ALL.iter().map(|t| t.as_str()).collect();
        format!("unknown tool {tool:?}; available: {}", names.join(", "))
    })?;
    let r = read_image(image)?;
    let (out, rec) = apply_tool(&r, &read_layout(layout)?, tool, targets).map_err(|e| e.to_string())?;
    let path = output.unwrap_or_else(|| {
        let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        image.with_file_name(format!("{stem}.{tool}.png"))
    });
    write_file(&path, save_png(&out))?;
    log::info!("{tool} on {:?}: {} -> {}", rec.targets, rec.input_hash.to_hex(), rec.output_hash.to_hex());
    emit!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn settings(b: &BackendArgs) -> Res<Settings> {
    let file = match &b.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = FlagConfig {
        endpoint: b.endpoint.clone(),
        model: b.model.clone(),
        temperature: b.temperature,
        max_turns: b.max_turns,
        concurrency: b.concurrency,
    };
    config::resolve(&file, |k| std::env::var(k).ok(), &flags)
}

fn client(b: &BackendArgs, s: &Settings) -> Res<Box<dyn ChatClient>> {
    let open = |p: &Path| ReplayStore::open(p).map(Arc::new).map_err(|e| e.to_string());
    if let Some(p) = &b.replay {
        return Ok(Box::new(ReplayClient::new(open(p)?)));
    }
    let base: Box<dyn ChatClient> = match &b.script {
        Some(p) => Box::new(ScriptedClient::from_file(p).map_err(|e| e.to_string())?),
        None => {
            let endpoint = s.endpoint.as_deref().ok_or("no model backend: pass --script or --replay, or set REFOCUS_ENDPOINT")?;
            let model = s.model.as_deref().ok_or("no model name: pass --model or set REFOCUS_MODEL")?;
            let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
            Box::new(OpenAiClient::new(endpoint, key, model))
        }
    };
    Ok(match &b.record {
        Some(p) => Box::new(ReplayClient::recording(open(p)?, base)),
        None => base,
    })
}

fn image_store(b: &BackendArgs) -> ImageStore {
    match &b.images {
        Some(d) => ImageStore::with_dir(d),
        None => ImageStore::in_memory(),
    }
}

fn cmd_run(image: &Path, question: &str, layout: Option<&Path>, detect: &LayoutArgs, b: &BackendArgs, as_json: bool) -> Res<ExitCode> {
    let s = settings(b)?;
    let r = read_image(image)?;
    let layout = match layout {
        Some(p) => read_layout(p)?,
        None => detect_layout(&r, detect)?,
    };
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("task").to_string();
    let task = Task {
        id: stem,
        image: Arc::new(r),
        question: question.to_string(),
        layout,
        gold_answer: None,
        source: "synth".into(),
        hint: None,
    };
    let ep = run(&task, client(b, &s)?.as_ref(), &s.agent, &image_store(b));
    if as_json {
        emit!("{}", ep.to_json());
    }
    match &ep.status {
        Status::Answered { final_answer, .. } => {
            if !as_json {
                emit!("FINAL ANSWER: {final_answer}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Status::Failed { reason, detail } => {
            eprintln!("episode failed after {} turn(s): {reason}: {detail}", ep.turns.len());
            Ok(ExitCode::from(1))
        }
        Status::Running => unreachable!("run returns a finished episode"),
    }
}

/// Load and prepare every item; unusable items are reported and counted.
fn prepare(data: &Path, d: &DatasetArgs) -> Res<(Vec<Task>, Vec<String>, usize)> {
    let items = load_dataset(data, d.source.as_deref()).map_err(|e| format!("{}: {e}", data.display()))?;
    let (mut tasks, mut images, mut bad) = (Vec::new(), Vec::new(), 0);
    for it in &items {
        match prepare_task(it) {
            Ok(t) => {
                tasks.push(t);
                images.push(it.image.clone());
            }
            Err(e) => {
                eprintln!("skipping {e}");
                bad += 1;
            }
        }
    }
    Ok((tasks, images, bad))
}

fn failed(ep: &Episode) -> bool {
    matches!(ep.status, Status::Failed { .. })
}

fn cmd_bench(data: &Path, d: &DatasetArgs, b: &BackendArgs, episodes: Option<&Path>) -> Res<ExitCode> {
    let s = settings(b)?;
    let (tasks, _, bad) = prepare(data, d)?;
    let client = client(b, &s)?;
    let eps = run_batch(&tasks, client.as_ref(), &s.agent, &image_store(b), s.concurrency);
    let scores: Vec<bool> = tasks
        .iter()
        .zip(&eps)
        .map(|(t, e)| match (e.final_answer(), t.gold_answer.as_deref()) {
            (Some(p), Some(g)) => score(p, g, &ScoreConfig::for_source(&t.source)).unwrap_or(false),
            _ => false,
        })
        .collect();
    if let Some(p) = episodes {
        let lines: String = eps.iter().map(|e| format!("{}\n", serde_json::to_string(e).expect("episode serializes"))).collect();
        write_file(p, lines)?;
    }
    let rep = report(&eps, &scores);
    eprint!("{}", rep.to_table());
    emit!("{}", rep.to_json());
    Ok(if bad > 0 || eps.iter().any(failed) { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_collect(data: &Path, d: &DatasetArgs, b: &BackendArgs, out: &Path) -> Res<ExitCode> {
    let s = settings(b)?;
    let (tasks, images, bad) = prepare(data, d)?;
    let items: Vec<CollectItem> = tasks.into_iter().zip(images).map(|(task, image)| CollectItem { task, image }).collect();
    let cfg = CollectConfig { agent: s.agent.clone(), score: None, concurrency: s.concurrency };
    let store = image_store(b);
    let outcome = collect_vcot(&items, client(b, &s)?.as_ref(), &cfg, &store);
    for (id, why) in &outcome.skipped {
        eprintln!("skipped {id}: {why}");
    }
    write_vcot(out, &outcome.records, &store).map_err(|e| format!("{}: {e}", out.display()))?;
    emit!("{}", serde_json::to_string_pretty(&outcome.stats).expect("stats serialize"));
    Ok(if bad > 0 || !outcome.skipped.is_empty() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn layout_value(l: &StructureLayout) -> Value {
    serde_json::from_str(&l.to_canonical_json()).expect("layout JSON parses")
}

fn cmd_render(out: &Path, n: usize, seed: u64, kind: Kind, demo: bool) -> Res<ExitCode> {
    if demo {
        return render_demo(out);
    }
    let corpus: Vec<SynthItem> = match kind {
        Kind::Mixed => make_corpus(n, seed),
        Kind::Table => make_table_corpus(n, seed),
        Kind::Subplot => make_subplot_corpus(n, seed),
    };
    let mut lines = String::new();
    for (i, item) in corpus.iter().enumerate() {
        let stem = format!("synth_{i:04}");
        item.export(out, &stem).map_err(|e| e.to_string())?;
        let (q, a) = synth_question(&item.spec);
        let line = json!({
            "id": stem, "question": q, "answer": a, "source": "synth",
            "image": format!("{stem}.png"), "layout": layout_value(&item.truth.layout),
        });
        lines.push_str(&format!("{line}\n"));
    }
    let path = out.join("data.jsonl");
    write_file(&path, lines)?;
    emit!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn render_demo(out: &Path) -> Res<ExitCode> {
    let (img, gt) = demo::cycling_table();
    write_file(&out.join("riders.png"), save_png(&img))?;
    write_file(&out.join("riders.layout.json"), gt.layout.to_json_pretty())?;
    let script = vec![ScriptEntry { matches: vec![], responses: demo::cycling_script() }];
    write_file(&out.join("riders.script.json"), serde_json::to_string_pretty(&script).expect("script serializes"))?;
    let layout = layout_value(&gt.layout);
    let lines: String = demo::COLLECT_ITEMS
        .iter()
        .map(|(id, q, a)| {
            let line = json!({"id": id, "question": q, "answer": a, "source": "synth", "image": "riders.png", "layout": layout});
            format!("{line}\n")
        })
        .collect();
    write_file(&out.join("collect.jsonl"), lines)?;
    let script = serde_json::to_string_pretty(&demo::collect_script()).expect("script serializes");
    write_file(&out.join("collect.script.json"), script)?;
    for f in ["riders.png", "riders.layout.json", "riders.script.json", "collect.jsonl", "collect.script.json"] {
        emit!("{}", out.join(f).display());
    }
    Ok(ExitCode::SUCCESS)
}
