//! 8-connected component labelling with outer-boundary measurements.

use super::BinaryMask;
use crate::raster::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contour {
    pub bbox: Region,
    /// Foreground pixel count.
    pub area: usize,
    /// Number of component pixels with at least one 4-neighbour outside the
    /// component (background or off-image).
    pub perimeter_length: usize,
}

/// Component label per pixel; `0` is background, components count from 1.
pub fn label_components(m: &BinaryMask) -> (Vec<u32>, u32) {
    let (w, h) = (m.width(), m.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !m.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// One contour per 8-connected component, longest perimeter first; ties by
/// top-left corner.
pub fn find_contours(m: &BinaryMask) -> Vec<Contour> {
    let (w, h) = (m.width(), m.height());
    let (labels, n) = label_components(m);
    let mut acc: Vec<Contour> = (0..n)
        .map(|_| Contour {
            bbox: Region::new(i64::MAX, i64::MAX, i64::MIN, i64::MIN),
            area: 0,
            perimeter_length: 0,
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let c = &mut acc[l as usize - 1];
            let (xi, yi) = (x as i64, y as i64);
            c.bbox.x1 = c.bbox.x1.min(xi);
            c.bbox.y1 = c.bbox.y1.min(yi);
            c.bbox.x2 = c.bbox.x2.max(xi);
            c.bbox.y2 = c.bbox.y2.max(yi);
            c.area += 1;
            let outside = |nx: usize, ny: usize| labels[ny * w + nx] != l;
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || outside(x - 1, y)
                || outside(x + 1, y)
                || outside(x, y - 1)
                || outside(x, y + 1);
            if edge {
                c.perimeter_length += 1;
            }
        }
    }
    acc.sort_by(|a, b| {
        b.perimeter_length
            .cmp(&a.perimeter_length)
            .then(a.bbox.y1.cmp(&b.bbox.y1))
            .then(a.bbox.x1.cmp(&b.bbox.x1))
    });
    acc
}
