use std::collections::HashMap;

use super::{BinaryMask, Orientation};

/// Parallel runs whose line indices differ by at most this much, and whose
/// extents overlap, are one rule.
pub const MERGE_GAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LineSegment {
    pub orientation: Orientation,
    /// Row for horizontal segments, column for vertical ones.
    pub position: usize,
    pub start: usize,
    pub end: usize,
}

impl LineSegment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
struct Run {
    line: usize,
    start: usize,
    end: usize,
}

fn runs(m: &BinaryMask, orientation: Orientation, min_length: usize) -> Vec<Run> {
    let (count, len) = match orientation {
        Orientation::Horizontal => (m.height(), m.width()),
        Orientation::Vertical => (m.width(), m.height()),
    };
    let get = |line: usize, i: usize| match orientation {
        Orientation::Horizontal => m.get(i, line),
        Orientation::Vertical => m.get(line, i),
    };
    let mut out = Vec::new();
    for line in 0..count {
        let mut i = 0;
        while i < len {
            if !get(line, i) {
                i += 1;
                continue;
            }
            let s = i;
            while i < len && get(line, i) {
                i += 1;
            }
            if i - s >= min_length {
                out.push(Run { line, start: s, end: i - 1 });
            }
        }
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Maximal runs of at least `min_length` pixels, with near-parallel runs
/// merged into one segment at their length-weighted centre line.
pub fn extract_line_segments(m: &BinaryMask, orientation: Orientation, min_length: usize) -> Vec<LineSegment> {
    let runs = runs(m, orientation, min_length.max(2));
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    // runs are already ordered by line, then start
    let mut line_first = 0;
    for (i, r) in runs.iter().enumerate() {
        while runs[line_first].line + MERGE_GAP < r.line {
            line_first += 1;
        }
        for (j, p) in runs.iter().enumerate().take(i).skip(line_first) {
            if p.line < r.line && p.start <= r.end && r.start <= p.end {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }

    struct Acc {
        weighted: usize,
        weight: usize,
        start: usize,
        end: usize,
    }
    let mut groups: Vec<(usize, Acc)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (i, r) in runs.iter().enumerate() {
        let root = find(&mut parent, i);
        let len = r.end - r.start + 1;
        match slot.get(&root).map(|&g| &mut groups[g]) {
            Some((_, acc)) => {
                acc.weighted += r.line * len;
                acc.weight += len;
                acc.start = acc.start.min(r.start);
                acc.end = acc.end.max(r.end);
            }
            None => {
                slot.insert(root, groups.len());
                groups.push((root, Acc { weighted: r.line * len, weight: len, start: r.start, end: r.end }));
            }
        }
    }
    let mut out: Vec<LineSegment> = groups
        .into_iter()
        .map(|(_, a)| LineSegment {
            orientation,
            position: (2 * a.weighted + a.weight) / (2 * a.weight),
            start: a.start,
            end: a.end,
        })
        .collect();
    out.sort_by_key(|s| (s.position, s.start));
    out
}
