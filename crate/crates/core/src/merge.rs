//! Cross-tile unification of section split codes.

use std::collections::VecDeque;

use crate::codec::DatasetSplit;
use crate::raster::Raster;

/// Pixels eligible for the fill: exactly `{0, 0, code}` for one of the three
/// split codes. Corner overlays and natural pixels are never touched.
#[inline]
fn fill_eligible(rgb: [u8; 3]) -> bool {
    rgb[0] == 0 && rgb[1] == 0 && DatasetSplit::from_blue_code(rgb[2]).is_some()
}

/// Give every 4-connected segmentation section one split code, first come
/// first served: scanning row-major, the first pixel reached in a section
/// floods the whole section with its own code.
pub fn unify_sections(full: &Raster) -> Raster {
    let mut out = full.clone();
    unify_sections_in_place(&mut out);
    out
}

/// In-place variant of [`unify_sections`]; returns the number of pixels
/// whose code changed.
pub fn unify_sections_in_place(raster: &mut Raster) -> usize {
    let (w, h) = (raster.width(), raster.height());
    let mut done = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut changed = 0;
    for start in 0..w * h {
        if done[start] || !fill_eligible(raster.get_index(start)) {
            continue;
        }
        let code = raster.get_index(start)[2];
        done[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            if raster.get(r, c)[2] != code {
                raster.set(r, c, [0, 0, code]);
                changed += 1;
            }
            let mut visit = |j: usize| {
                if !done[j] && fill_eligible(raster.get_index(j)) {
                    done[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::blend_split;
    use crate::raster::Pixel;
    use crate::sections::extract_sections;
    use proptest::prelude::*;

    fn block(r0: usize, c0: usize, h: usize, w: usize) -> Vec<Pixel> {
        (r0..r0 + h).flat_map(|r| (c0..c0 + w).map(move |c| (r, c))).collect()
    }

    #[test]
    fn mixed_section_takes_first_code() {
        let mut t = Raster::filled(20, 10, [50, 60, 70]);
        blend_split(&mut t, &block(2, 2, 5, 5), DatasetSplit::Training).unwrap();
        blend_split(&mut t, &block(2, 7, 5, 5), DatasetSplit::Testing).unwrap();
        let u = unify_sections(&t);
        for p in block(2, 2, 5, 10) {
            assert_eq!(u.get(p.0, p.1), [0, 0, 200]);
        }
        assert_eq!(u.get(0, 0), [50, 60, 70]);
    }

    #[test]
    fn uniform_and_disjoint_sections_unchanged() {
        let mut t = Raster::new(20, 10);
        blend_split(&mut t, &block(1, 1, 3, 3), DatasetSplit::Validation).unwrap();
        blend_split(&mut t, &block(5, 10, 3, 3), DatasetSplit::Testing).unwrap();
        blend_split(&mut t, &block(1, 15, 3, 3), DatasetSplit::Training).unwrap();
        assert_eq!(unify_sections(&t), t);
    }

    #[test]
    fn first_scanned_pixel_wins_even_if_minority() {
        // An L shape whose first row-major pixel is the lone Testing pixel.
        let mut t = Raster::new(8, 8);
        blend_split(&mut t, &block(1, 1, 5, 2), DatasetSplit::Validation).unwrap();
        blend_split(&mut t, &[(0, 1)], DatasetSplit::Testing).unwrap();
        let u = unify_sections(&t);
        assert!(block(1, 1, 5, 2).iter().all(|p| u.get(p.0, p.1) == [0, 0, 220]));
    }

    proptest! {
        #[test]
        fn one_code_per_section_and_idempotent(
            cells in proptest::collection::vec(0u8..5, 24 * 24),
        ) {
            let mut t = Raster::new(24, 24);
            for (i, &v) in cells.iter().enumerate() {
                let rgb = match v {
                    0 => [0, 0, 200],
                    1 => [0, 0, 210],
                    2 => [0, 0, 220],
                    3 => [12, 0, 200], // natural pixel, not a code
                    _ => [90, 90, 90],
                };
                t.set(i / 24, i % 24, rgb);
            }
            let u = unify_sections(&t);
            for sec in extract_sections(&u) {
                let code = u.get(sec.pixels[0].0, sec.pixels[0].1)[2];
                prop_assert!(sec.pixels.iter().all(|p| u.get(p.0, p.1)[2] == code));
            }
            for i in 0..24 * 24 {
                if !fill_eligible(t.get_index(i)) {
                    prop_assert_eq!(u.get_index(i), t.get_index(i));
                }
            }
            prop_assert_eq!(unify_sections(&u), u);
        }
    }
}
