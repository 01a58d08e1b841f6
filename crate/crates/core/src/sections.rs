//! Roof sections: 4-connected components of segmentation pixels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::codec::{segmentation_split, DatasetSplit};
use crate::raster::{Pixel, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofSection {
    pub id: usize,
    /// Row-major sorted.
    pub pixels: Vec<Pixel>,
    pub split: DatasetSplit,
    /// Row-major sorted subset of `pixels`.
    pub rim: Vec<Pixel>,
}

impl RoofSection {
    /// Build a section from an arbitrary pixel list (sorted and deduplicated here).
    pub fn new(id: usize, mut pixels: Vec<Pixel>, split: DatasetSplit) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        let rim = rim_of_sorted(&pixels);
        Self {
            id,
            pixels,
            split,
            rim,
        }
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.pixels.binary_search(&p).is_ok()
    }

    pub fn on_rim(&self, p: Pixel) -> bool {
        self.rim.binary_search(&p).is_ok()
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Label the 4-connected components of the pixels where `is_member` holds.
///
/// Labels start at 1, are numbered in row-major order of each component's
/// first pixel, and 0 marks non-members. Returns the labels and the count.
pub fn label_components(
    width: usize,
    height: usize,
    mut is_member: impl FnMut(usize) -> bool,
) -> (Vec<u32>, u32) {
    let n = width * height;
    let member: Vec<bool> = (0..n).map(&mut is_member).collect();
    let mut labels = vec![0u32; n];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !member[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / width, i % width);
            let mut visit = |j: usize| {
                if member[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - width);
            }
            if r + 1 < height {
                visit(i + width);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < width {
                visit(i + 1);
            }
        }
    }
    (labels, next)
}

/// One section per 4-connected component of segmentation pixels. Each
/// section takes the split of its first row-major pixel.
pub fn extract_sections(blended: &Raster) -> Vec<RoofSection> {
    let (w, h) = (blended.width(), blended.height());
    let (labels, count) = label_components(w, h, |i| segmentation_split(blended.get_index(i)).is_some());
    let mut pixels: Vec<Vec<Pixel>> = vec![Vec::new(); count as usize];
    let mut splits: Vec<Option<DatasetSplit>> = vec![None; count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = (l - 1) as usize;
        if splits[k].is_none() {
            splits[k] = segmentation_split(blended.get_index(i));
        }
        pixels[k].push((i / w, i % w));
    }
    pixels
        .into_iter()
        .zip(splits)
        .enumerate()
        .map(|(id, (px, split))| {
            // Pixels were collected in row-major order already.
            let rim = rim_of_sorted(&px);
            RoofSection {
                id,
                pixels: px,
                split: split.expect("every component has a first pixel"),
                rim,
            }
        })
        .collect()
}

/// Pixels of the section with at least one 4-neighbor outside it.
pub fn section_rim(sec: &RoofSection) -> Vec<Pixel> {
    rim_of_sorted(&sec.pixels)
}

fn rim_of_sorted(pixels: &[Pixel]) -> Vec<Pixel> {
    let has = |p: Option<Pixel>| p.is_some_and(|p| pixels.binary_search(&p).is_ok());
    pixels
        .iter()
        .copied()
        .filter(|&(r, c)| {
            let up = r.checked_sub(1).map(|r| (r, c));
            let left = c.checked_sub(1).map(|c| (r, c));
            !(has(up) && has(left) && has(Some((r + 1, c))) && has(Some((r, c + 1))))
        })
        .collect()
}
