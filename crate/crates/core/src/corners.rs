//! Filing decoded corner squares onto roof sections and picking the one rim
//! pixel per square that stands for the corner in plane fitting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codec::CornerSquare;
use crate::error::{Error, Result};
use crate::raster::Pixel;
use crate::sections::RoofSection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CornerAssignment {
    pub square: CornerSquare,
    pub section_id: usize,
    pub rep_pixel: Pixel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SquareFiling {
    pub assigned: Vec<CornerAssignment>,
    /// Squares touching no section.
    pub unassigned: Vec<CornerSquare>,
}

/// File each square onto exactly one section.
///
/// A square whose center pixel lies on a section belongs to that section.
/// Otherwise it goes to the section sharing the most footprint pixels with
/// it, ties to the smaller section id. Output order follows `squares`.
pub fn assign_squares(squares: &[CornerSquare], sections: &[RoofSection]) -> SquareFiling {
    let (width, height) = frame_extent(squares, sections);
    let mut owner: HashMap<Pixel, usize> = HashMap::new();
    for (k, sec) in sections.iter().enumerate() {
        for &p in &sec.pixels {
            owner.insert(p, k);
        }
    }
    let mut filing = SquareFiling::default();
    for sq in squares {
        let centered = (sq.center.0 >= 0 && sq.center.1 >= 0)
            .then(|| owner.get(&(sq.center.0 as usize, sq.center.1 as usize)))
            .flatten()
            .copied();
        let chosen = centered.or_else(|| {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for p in sq.footprint(width, height) {
                if let Some(&k) = owner.get(&p) {
                    *counts.entry(k).or_default() += 1;
                }
            }
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(sections[b.0].id.cmp(&sections[a.0].id)))
                .map(|(k, _)| k)
        });
        match chosen {
            Some(k) => {
                let sec = &sections[k];
                let rep_pixel =
                    select_rim_pixel(sq, sec).expect("chosen section intersects the square footprint");
                filing.assigned.push(CornerAssignment {
                    square: *sq,
                    section_id: sec.id,
                    rep_pixel,
                });
            }
            None => filing.unassigned.push(*sq),
        }
    }
    filing
}

fn frame_extent(squares: &[CornerSquare], sections: &[RoofSection]) -> (usize, usize) {
    let mut w = 0;
    let mut h = 0;
    for sec in sections {
        for &(r, c) in &sec.pixels {
            h = h.max(r + 1);
            w = w.max(c + 1);
        }
    }
    for sq in squares {
        let (tr, tc) = sq.top_left();
        h = h.max((tr + sq.side as i64).max(0) as usize);
        w = w.max((tc + sq.side as i64).max(0) as usize);
    }
    (w, h)
}

fn dist2(p: Pixel, center: (i64, i64)) -> i64 {
    let dr = p.0 as i64 - center.0;
    let dc = p.1 as i64 - center.1;
    dr * dr + dc * dc
}

/// The footprint rim pixel nearest the square center (ties row-major); when
/// the footprint misses the rim, the nearest footprint pixel of the section.
pub fn select_rim_pixel(square: &CornerSquare, section: &RoofSection) -> Result<Pixel> {
    let (tr, tc) = square.top_left();
    let side = square.side as i64;
    let mut best_rim: Option<(i64, Pixel)> = None;
    let mut best_any: Option<(i64, Pixel)> = None;
    for r in tr.max(0)..tr + side {
        for c in tc.max(0)..tc + side {
            let p = (r as usize, c as usize);
            if !section.contains(p) {
                continue;
            }
            let d = dist2(p, square.center);
            // Row-major scan: strict comparison keeps the first pixel on ties.
            if best_any.is_none_or(|(bd, _)| d < bd) {
                best_any = Some((d, p));
            }
            if section.on_rim(p) && best_rim.is_none_or(|(bd, _)| d < bd) {
                best_rim = Some((d, p));
            }
        }
    }
    best_rim
        .or(best_any)
        .map(|(_, p)| p)
        .ok_or(Error::Assignment {
            section_id: section.id,
        })
}
