use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chart::format_value;
use super::{render_chart, render_table, ChartSpec, GroundTruth, TableSpec};
use crate::layout::ChartKind;
use crate::raster::{save_png, Raster, RasterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SynthSpec {
    Table(TableSpec),
    Chart(ChartSpec),
}

impl SynthSpec {
    pub fn seed(&self) -> u64 {
        match self {
            SynthSpec::Table(t) => t.seed,
            SynthSpec::Chart(c) => c.seed,
        }
    }

    pub fn render(&self) -> Result<(Raster, GroundTruth), super::SpecError> {
        match self {
            SynthSpec::Table(t) => render_table(t),
            SynthSpec::Chart(c) => render_chart(c),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthItem {
    pub raster: Raster,
    pub truth: GroundTruth,
    pub spec: SynthSpec,
}

impl SynthItem {
    fn from_spec(spec: SynthSpec) -> Self {
        // random specs are valid by construction
        let (raster, truth) = spec.render().expect("random spec renders");
        SynthItem { raster, truth, spec }
    }

    /// Write `<stem>.png` and `<stem>.json` (ground truth plus spec).
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(), RasterError> {
        std::fs::create_dir_all(dir).map_err(|e| RasterError::Io(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.png")), save_png(&self.raster))
            .map_err(|e| RasterError::Io(e.to_string()))?;
        let json = serde_json::json!({ "truth": self.truth, "spec": self.spec });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&json).unwrap())
            .map_err(|e| RasterError::Io(e.to_string()))
    }
}

// one child seed per item so an item does not depend on how many came before
fn item_seeds(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Mixed corpus: tables, vertical bars, horizontal bars and subplot grids in
/// rotation.
pub fn make_corpus(n: usize, seed: u64) -> Vec<SynthItem> {
    item_seeds(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let spec = match i % 4 {
                0 => SynthSpec::Table(TableSpec::random(s)),
                1 => SynthSpec::Chart(ChartSpec::random(s, ChartKind::VerticalBar)),
                2 => SynthSpec::Chart(ChartSpec::random(s, ChartKind::HorizontalBar)),
                _ => SynthSpec::Chart(ChartSpec::random(s, ChartKind::MultiSubplot)),
            };
            SynthItem::from_spec(spec)
        })
        .collect()
}

pub fn make_table_corpus(n: usize, seed: u64) -> Vec<SynthItem> {
    item_seeds(n, seed).into_iter().map(|s| SynthItem::from_spec(SynthSpec::Table(TableSpec::random(s)))).collect()
}

pub fn make_subplot_corpus(n: usize, seed: u64) -> Vec<SynthItem> {
    item_seeds(n, seed)
        .into_iter()
        .map(|s| SynthItem::from_spec(SynthSpec::Chart(ChartSpec::random(s, ChartKind::MultiSubplot))))
        .collect()
}

/// A question answerable from the rendered image, with its gold answer.
pub fn synth_question(spec: &SynthSpec) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed() ^ 0x5eed);
    match spec {
        SynthSpec::Table(t) => {
            let key = &t.columns[0];
            // rows whose first cell is unique can be named unambiguously
            let unique: Vec<usize> = (0..t.cells.len())
                .filter(|&i| t.cells.iter().filter(|r| r[0] == t.cells[i][0]).count() == 1)
                .collect();
            if t.columns.len() < 2 || unique.is_empty() {
                return ("How many rows does the table have, not counting the header?".into(), t.cells.len().to_string());
            }
            let i = unique[rng.random_range(0..unique.len())];
            let j = rng.random_range(1..t.columns.len());
            (
                format!("What is the {} of the row whose {} is {}?", t.columns[j], key, t.cells[i][0]),
                t.cells[i][j].clone(),
            )
        }
        SynthSpec::Chart(c) if c.kind == ChartKind::MultiSubplot => {
            let k = rng.random_range(0..c.series.len());
            let name = (b'a' + k as u8) as char;
            (format!("How many bars are in subplot ({name})?"), c.series[k].values.len().to_string())
        }
        SynthSpec::Chart(c) => {
            let s = &c.series[0];
            let i = rng.random_range(0..s.labels.len());
            (format!("What is the value for {}?", s.labels[i]), format_value(s.values[i]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::StructureLayout;

    #[test]
    fn corpus_is_pure_in_n_and_seed() {
        let a = make_corpus(8, 42);
        let b = make_corpus(8, 42);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.raster.digest(), y.raster.digest());
            assert_eq!(x.truth, y.truth);
        }
        // a longer corpus has the shorter one as a prefix
        let c = make_corpus(12, 42);
        assert_eq!(a[7].raster, c[7].raster);
        assert_ne!(make_corpus(1, 43)[0].raster, a[0].raster);
    }

    #[test]
    fn regions_stay_in_bounds() {
        for item in make_corpus(40, 7) {
            let b = item.raster.bounds();
            match &item.truth.layout {
                StructureLayout::Table(t) => {
                    assert!(b.encloses(&t.table_region));
                    assert!(t.columns.iter().chain(&t.rows).all(|c| b.encloses(&c.region)));
                }
                StructureLayout::Chart(c) => {
                    assert!(b.encloses(&c.plot_region));
                    assert!(c.subplots.iter().all(|s| b.encloses(&s.region)));
                }
            }
            assert!(item.truth.text_boxes.iter().all(|t| b.encloses(&t.region)), "{:?}", item.spec);
        }
    }

    #[test]
    fn questions_have_answers_in_the_spec() {
        for item in make_corpus(20, 1) {
            let (q, a) = synth_question(&item.spec);
            assert!(!q.is_empty() && !a.is_empty());
            assert_eq!(synth_question(&item.spec), (q, a));
        }
    }

    #[test]
    fn export_writes_pair() {
        let dir = tempfile::tempdir().unwrap();
        make_table_corpus(1, 0)[0].export(dir.path(), "t0").unwrap();
        let png = std::fs::read(dir.path().join("t0.png")).unwrap();
        assert_eq!(crate::raster::load_png(&png).unwrap(), make_table_corpus(1, 0)[0].raster);
        assert!(dir.path().join("t0.json").exists());
    }
}
