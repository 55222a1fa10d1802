//! Chart geometry: bar strips from axis-value boxes and subplot candidates.

use super::contours::{find_contours, Contour};
use super::{binarize, StructureError, DEFAULT_THRESHOLD};
use crate::layout::{ChartKind, ChartLayout, NamedRegion};
use crate::raster::{Raster, Region};

/// Candidates whose boxes overlap an earlier pick by more than this are dropped.
pub const DEDUP_IOU: f64 = 0.9;

/// Strip per axis entry, in `axis_entries` order.
///
/// Vertical bars: the entry's horizontal extent runs midpoint-to-midpoint
/// with its neighbours (mirrored at the ends and clipped to the plot) and the
/// strip spans the full plot height. Horizontal bars are the transpose.
pub(crate) fn bar_strips(layout: &ChartLayout) -> Vec<Region> {
    let p = layout.plot_region.normalized();
    let vertical = layout.kind != ChartKind::HorizontalBar;
    let center = |r: &Region| {
        let r = r.normalized();
        if vertical {
            (r.x1 + r.x2) as f64 / 2.0
        } else {
            (r.y1 + r.y2) as f64 / 2.0
        }
    };
    let (lo, hi) = if vertical { (p.x1, p.x2) } else { (p.y1, p.y2) };

    let mut order: Vec<usize> = (0..layout.axis_entries.len()).collect();
    order.sort_by(|&a, &b| {
        center(&layout.axis_entries[a].region)
            .total_cmp(&center(&layout.axis_entries[b].region))
            .then(a.cmp(&b))
    });
    let centers: Vec<f64> = order.iter().map(|&i| center(&layout.axis_entries[i].region)).collect();
    let n = centers.len();
    let mut spans = vec![(lo, hi); layout.axis_entries.len()];
    // boundary pixels at an exact midpoint belong to the right-hand strip
    for (k, &i) in order.iter().enumerate() {
        let left = if k > 0 {
            (centers[k - 1] + centers[k]) / 2.0
        } else if n > 1 {
            centers[0] - (centers[1] - centers[0]) / 2.0
        } else {
            lo as f64
        };
        let right = if k + 1 < n {
            (centers[k] + centers[k + 1]) / 2.0
        } else if n > 1 {
            centers[k] + (centers[k] - centers[k - 1]) / 2.0
        } else {
            hi as f64 + 1.0
        };
        let start = left.ceil() as i64;
        let end = right.ceil() as i64 - 1;
        spans[i] = (start.clamp(lo, hi), end.clamp(lo, hi));
    }
    spans
        .into_iter()
        .map(|(a, b)| if vertical { Region::new(a, p.y1, b, p.y2) } else { Region::new(p.x1, a, p.x2, b) })
        .collect()
}

/// Strips for the requested axis labels, in request order.
pub fn bar_regions_from_axis<S: AsRef<str>>(layout: &ChartLayout, labels: &[S]) -> Result<Vec<Region>, StructureError> {
    if layout.kind == ChartKind::MultiSubplot {
        return Err(StructureError::InvalidArgument("multi-subplot charts have no bar axis".into()));
    }
    let strips = bar_strips(layout);
    labels
        .iter()
        .map(|l| {
            let l = l.as_ref();
            layout
                .axis_entries
                .iter()
                .position(|e| e.name == l)
                .map(|i| strips[i])
                .ok_or_else(|| StructureError::UnknownLabel {
                    label: l.to_string(),
                    available: layout.axis_entries.iter().map(|e| e.name.clone()).collect(),
                })
        })
        .collect()
}

/// Top-`k` connected components by perimeter, skipping near-duplicate boxes.
pub fn detect_subplot_candidates(r: &Raster, k: usize) -> Vec<Contour> {
    let mask = binarize(r, DEFAULT_THRESHOLD);
    let mut picked: Vec<Contour> = Vec::with_capacity(k);
    for c in find_contours(&mask) {
        if picked.len() >= k {
            break;
        }
        if picked.iter().all(|p| p.bbox.iou(&c.bbox) <= DEDUP_IOU) {
            picked.push(c);
        }
    }
    picked
}

/// Chart area: the longest component (axes and the bars touching them)
/// grown to cover the supplied axis label boxes.
pub fn detect_plot_region(r: &Raster, axis_entries: &[NamedRegion]) -> Option<Region> {
    let mask = binarize(r, DEFAULT_THRESHOLD);
    let main = find_contours(&mask).first()?.bbox;
    let grown = axis_entries.iter().fold(main, |acc, e| acc.union(&e.region));
    grown.clamp_to(r.width(), r.height())
}

/// Layout for a multi-subplot figure with candidates named `subplot_<i>`.
pub fn subplot_layout(r: &Raster, k: usize) -> ChartLayout {
    let cands = detect_subplot_candidates(r, k);
    ChartLayout {
        kind: ChartKind::MultiSubplot,
        plot_region: r.bounds(),
        axis_entries: Vec::new(),
        subplots: cands
            .iter()
            .enumerate()
            .map(|(i, c)| NamedRegion::new(format!("subplot_{i}"), c.bbox))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Color;

    fn vbar3() -> ChartLayout {
        // entries centred at 50, 150, 250 on a 300 px wide plot
        ChartLayout {
            kind: ChartKind::VerticalBar,
            plot_region: Region::new(0, 0, 299, 199),
            axis_entries: ["a", "b", "c"]
                .iter()
                .enumerate()
                .map(|(i, n)| NamedRegion::new(*n, Region::new(40 + 100 * i as i64, 180, 60 + 100 * i as i64, 190)))
                .collect(),
            subplots: vec![],
        }
    }

    #[test]
    fn middle_entry_covers_middle_third() {
        let r = bar_regions_from_axis(&vbar3(), &["b"]).unwrap();
        assert_eq!(r, vec![Region::new(100, 0, 199, 199)]);
        let all = bar_regions_from_axis(&vbar3(), &["c", "a"]).unwrap();
        assert_eq!(all, vec![Region::new(200, 0, 299, 199), Region::new(0, 0, 99, 199)]);
    }

    #[test]
    fn empty_and_unknown_labels() {
        assert!(bar_regions_from_axis::<&str>(&vbar3(), &[]).unwrap().is_empty());
        match bar_regions_from_axis(&vbar3(), &["z"]) {
            Err(StructureError::UnknownLabel { label, available }) => {
                assert_eq!(label, "z");
                assert_eq!(available, ["a", "b", "c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hbar_strips_are_full_width() {
        let mut l = vbar3();
        l.kind = ChartKind::HorizontalBar;
        l.axis_entries = ["UK", "US", "France", "China"]
            .iter()
            .enumerate()
            .map(|(i, n)| NamedRegion::new(*n, Region::new(2, 20 + 40 * i as i64, 30, 30 + 40 * i as i64)))
            .collect();
        let strips = bar_regions_from_axis(&l, &["UK", "US", "France", "China"]).unwrap();
        assert_eq!(strips.len(), 4);
        assert!(strips.iter().all(|s| s.x1 == 0 && s.x2 == 299));
        assert!(strips.windows(2).all(|p| p[0].y2 + 1 == p[1].y1));
    }

    #[test]
    fn blank_image_has_no_candidates() {
        assert!(detect_subplot_candidates(&Raster::filled(40, 40, Color::WHITE), 10).is_empty());
    }

    #[test]
    fn single_frame_is_top_candidate() {
        let r = Raster::filled(100, 80, Color::WHITE)
            .draw_rect_outline(Region::new(10, 10, 89, 69), Color::BLACK, 1)
            .unwrap()
            .fill_opaque(Region::new(30, 40, 35, 69), Color::rgb(40, 80, 200))
            .unwrap()
            .fill_opaque(Region::new(3, 2, 6, 5), Color::BLACK)
            .unwrap();
        let c = detect_subplot_candidates(&r, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox, Region::new(10, 10, 89, 69));
    }
}
