//! Per-source run statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::{Episode, Status};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub items: usize,
    pub answered: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub edited: usize,
    pub edit_rate: f64,
    pub mean_turns: f64,
    /// Failure reason to count.
    pub failures: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub overall: SourceStats,
    pub sources: BTreeMap<String, SourceStats>,
}

#[derive(Default)]
struct Tally {
    items: usize,
    answered: usize,
    correct: usize,
    edited: usize,
    turns: usize,
    failures: BTreeMap<String, usize>,
}

impl Tally {
    fn add(&mut self, e: &Episode, ok: bool) {
        self.items += 1;
        self.correct += ok as usize;
        self.edited += e.edited as usize;
        self.turns += e.turns.len();
        match &e.status {
            Status::Answered { .. } => self.answered += 1,
            Status::Failed { reason, .. } => *self.failures.entry(reason.clone()).or_default() += 1,
            Status::Running => {}
        }
    }

    fn finish(self) -> SourceStats {
        let frac = |k: usize| if self.items == 0 { 0.0 } else { k as f64 / self.items as f64 };
        SourceStats {
            items: self.items,
            answered: self.answered,
            correct: self.correct,
            accuracy: frac(self.correct),
            edited: self.edited,
            edit_rate: frac(self.edited),
            mean_turns: frac(self.turns),
            failures: self.failures,
        }
    }
}

/// `scores[i]` says whether `episodes[i]` was answered correctly.
pub fn report(episodes: &[Episode], scores: &[bool]) -> RunReport {
    assert_eq!(episodes.len(), scores.len(), "episodes and scores must align");
    let mut all = Tally::default();
    let mut per: BTreeMap<String, Tally> = BTreeMap::new();
    for (e, &ok) in episodes.iter().zip(scores) {
        all.add(e, ok);
        per.entry(e.source.clone()).or_default().add(e, ok);
    }
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        overall: all.finish(),
        sources: per.into_iter().map(|(k, t)| (k, t.finish())).collect(),
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>6} {:>8} {:>9} {:>9} {:>7}  failures\n",
            "source", "items", "correct", "accuracy", "edit_rate", "turns"
        );
        let row = |name: &str, st: &SourceStats| {
            let fails: Vec<String> = st.failures.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!(
                "{:<12} {:>6} {:>8} {:>9.3} {:>9.3} {:>7.2}  {}\n",
                name,
                st.items,
                st.correct,
                st.accuracy,
                st.edit_rate,
                st.mean_turns,
                if fails.is_empty() { "-".to_string() } else { fails.join(",") }
            )
        };
        for (k, st) in &self.sources {
            s.push_str(&row(k, st));
        }
        s.push_str(&row("all", &self.overall));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(source: &str, status: Status, edited: bool) -> Episode {
        Episode { task_id: "t".into(), source: source.into(), input_image: String::new(), turns: vec![], status, edited }
    }

    #[test]
    fn accuracy_and_failures() {
        let ok = Status::Answered { final_answer: "1".into(), raw_answer_text: String::new() };
        let mut eps = Vec::new();
        let mut scores = Vec::new();
        for i in 0..100 {
            eps.push(ep("vwtq", ok.clone(), i % 2 == 0));
            scores.push(i < 77);
        }
        let r = report(&eps, &scores);
        assert_eq!(r.overall.accuracy, 0.77);
        assert_eq!(r.sources["vwtq"].edit_rate, 0.5);

        let down = Status::Failed { reason: "transport".into(), detail: String::new() };
        let eps: Vec<Episode> = (0..10).map(|_| ep("h_bar", down.clone(), false)).collect();
        let r = report(&eps, &[false; 10]);
        assert_eq!(r.overall.accuracy, 0.0);
        assert_eq!(r.overall.failures["transport"], 10);
        assert!(r.to_table().contains("transport=10"));
    }
}
