//! Morphological opening with a line-shaped structuring element.

use super::{BinaryMask, Orientation};

/// `max(10, extent / 20)` along the orientation.
pub fn default_kernel_length(width: usize, height: usize, orientation: Orientation) -> usize {
    let extent = match orientation {
        Orientation::Horizontal => width,
        Orientation::Vertical => height,
    };
    (extent / 20).max(10)
}

/// Views a mask as independent 1-D lines along `orientation`.
struct Lines {
    count: usize,
    len: usize,
    horizontal: bool,
    width: usize,
}

impl Lines {
    fn of(m: &BinaryMask, orientation: Orientation) -> Self {
        match orientation {
            Orientation::Horizontal => Lines { count: m.height, len: m.width, horizontal: true, width: m.width },
            Orientation::Vertical => Lines { count: m.width, len: m.height, horizontal: false, width: m.width },
        }
    }

    #[inline]
    fn index(&self, line: usize, i: usize) -> usize {
        if self.horizontal {
            line * self.width + i
        } else {
            i * self.width + line
        }
    }
}

/// Set a position when every (`all = true`) or any (`all = false`) sample in
/// `[i - before, i + after]` is set. Samples outside the line count as unset.
fn window_pass(src: &[bool], dst: &mut [bool], lines: &Lines, before: usize, after: usize, all: bool) {
    let mut prefix = vec![0usize; lines.len + 1];
    for line in 0..lines.count {
        for i in 0..lines.len {
            prefix[i + 1] = prefix[i] + usize::from(src[lines.index(line, i)]);
        }
        for i in 0..lines.len {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(lines.len - 1);
            let ones = prefix[hi + 1] - prefix[lo];
            let v = if all {
                i >= before && i + after < lines.len && ones == before + after + 1
            } else {
                ones > 0
            };
            dst[lines.index(line, i)] = v;
        }
    }
}

pub fn erode_line(m: &BinaryMask, orientation: Orientation, k: usize) -> BinaryMask {
    let lines = Lines::of(m, orientation);
    let anchor = k / 2;
    let mut out = BinaryMask::new(m.width, m.height);
    if lines.len > 0 {
        window_pass(&m.bits, &mut out.bits, &lines, anchor, k - 1 - anchor, true);
    }
    out
}

pub fn dilate_line(m: &BinaryMask, orientation: Orientation, k: usize) -> BinaryMask {
    let lines = Lines::of(m, orientation);
    let anchor = k / 2;
    let mut out = BinaryMask::new(m.width, m.height);
    if lines.len > 0 {
        // reflected element
        window_pass(&m.bits, &mut out.bits, &lines, k - 1 - anchor, anchor, false);
    }
    out
}

/// Erosion then dilation with a `1 x k` (horizontal) or `k x 1` (vertical)
/// element. Only runs of at least `kernel_length` pixels survive.
pub fn morph_open_lines(m: &BinaryMask, orientation: Orientation, kernel_length: usize) -> BinaryMask {
    let k = kernel_length.max(2);
    dilate_line(&erode_line(m, orientation, k), orientation, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook set definitions: erosion keeps x when every offset of the
    /// element lands on ink; dilation sets x when some reflected offset does.
    fn oracle_open(m: &BinaryMask, o: Orientation, k: usize) -> BinaryMask {
        let (w, h) = (m.width() as i64, m.height() as i64);
        let a = (k / 2) as i64;
        let offsets: Vec<(i64, i64)> = (-a..(k as i64 - a))
            .map(|d| if o == Orientation::Horizontal { (d, 0) } else { (0, d) })
            .collect();
        let at = |mm: &BinaryMask, x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mm.get(x as usize, y as usize);
        let mut er = BinaryMask::new(m.width(), m.height());
        for y in 0..h {
            for x in 0..w {
                er.set(x as usize, y as usize, offsets.iter().all(|&(dx, dy)| at(m, x + dx, y + dy)));
            }
        }
        let mut di = BinaryMask::new(m.width(), m.height());
        for y in 0..h {
            for x in 0..w {
                di.set(x as usize, y as usize, offsets.iter().any(|&(dx, dy)| at(&er, x - dx, y - dy)));
            }
        }
        di
    }

    fn run_mask(len: usize) -> BinaryMask {
        let mut m = BinaryMask::new(40, 3);
        for x in 5..5 + len {
            m.set(x, 1, true);
        }
        m
    }

    #[test]
    fn long_run_survives_short_run_erased() {
        let m = run_mask(30);
        assert_eq!(morph_open_lines(&m, Orientation::Horizontal, 20), m);
        let short = run_mask(10);
        assert_eq!(morph_open_lines(&short, Orientation::Horizontal, 20).count_ones(), 0);
        // a horizontal run is not a vertical line
        assert_eq!(morph_open_lines(&m, Orientation::Vertical, 2).count_ones(), 0);
    }

    #[test]
    fn default_kernel_scales() {
        assert_eq!(default_kernel_length(100, 50, Orientation::Horizontal), 10);
        assert_eq!(default_kernel_length(800, 50, Orientation::Horizontal), 40);
        assert_eq!(default_kernel_length(800, 300, Orientation::Vertical), 15);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..64, 1usize..64).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.6), w * h)
                .prop_map(move |bits| BinaryMask::from_bits(w, h, bits))
        })
    }

    proptest! {
        #[test]
        fn opening_matches_brute_force(m in arb_mask(), k in 2usize..24, vertical in any::<bool>()) {
            let o = if vertical { Orientation::Vertical } else { Orientation::Horizontal };
            let got = morph_open_lines(&m, o, k);
            prop_assert_eq!(&got, &oracle_open(&m, o, k));
            prop_assert!(got.is_subset_of(&m));
        }
    }
}
