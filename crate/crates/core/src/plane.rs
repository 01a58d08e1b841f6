//! Roof-plane estimation from filed corners.
//!
//! Plane coordinates are image-aligned meters: `x = col * gsd`,
//! `y = row * gsd`, and `z` is height-to-ground.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a plane was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Interpolated through the largest triangle of `corners >= 3` corners.
    Triangle { corners: usize },
    TwoCorner,
    OneCorner,
    NoCorner,
    /// Three or more corners, all collinear.
    Degenerate,
    /// Least-squares fit to surface-model heights.
    Baseline,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Triangle { .. } => "triangle",
            Provenance::TwoCorner => "two_corner",
            Provenance::OneCorner => "one_corner",
            Provenance::NoCorner => "no_corner",
            Provenance::Degenerate => "degenerate",
            Provenance::Baseline => "baseline",
        }
    }
}

/// `z = a * x + b * y + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoofPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub provenance: Provenance,
}

impl RoofPlane {
    pub fn horizontal(z: f64, provenance: Provenance) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: z,
            provenance,
        }
    }

    #[inline]
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }
}

/// Collapse three distinct ascending heights to two values.
///
/// When `z2 < (z1 + z3) / 2` the lower pair takes its average, otherwise the
/// upper pair does. Inputs with a repeated value come back unchanged.
pub fn file_heights(z: [f64; 3]) -> Result<[f64; 3]> {
    let [z1, z2, z3] = z;
    if !(z1 <= z2 && z2 <= z3) {
        return Err(Error::Order(z));
    }
    if z1 == z2 || z2 == z3 {
        return Ok(z);
    }
    if z2 < (z1 + z3) / 2.0 {
        let m = (z1 + z2) / 2.0;
        Ok([m, m, z3])
    } else {
        let m = (z2 + z3) / 2.0;
        Ok([z1, m, m])
    }
}

/// Twice the signed area of the triangle `p, q, r`.
#[inline]
fn cross(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    (q.0 - p.0) * (r.1 - p.1) - (r.0 - p.0) * (q.1 - p.1)
}

pub fn triangle_area(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    cross(p, q, r).abs() / 2.0
}

const EXHAUSTIVE_LIMIT: usize = 12;

/// Indices of the maximum-area triangle, ties to the lexicographically
/// smallest index triple.
///
/// Up to 12 points every triple is tried. Above that only points on the
/// convex hull boundary can be vertices of a maximum triangle, so the search
/// is restricted to them.
pub fn largest_triangle(points: &[(f64, f64)]) -> Result<[usize; 3]> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let candidates: Vec<usize> = if points.len() <= EXHAUSTIVE_LIMIT {
        (0..points.len()).collect()
    } else {
        hull_boundary_indices(points)
    };
    let mut best: Option<([usize; 3], f64)> = None;
    for (x, &i) in candidates.iter().enumerate() {
        for (y, &j) in candidates.iter().enumerate().skip(x + 1) {
            for &k in &candidates[y + 1..] {
                let area = cross(points[i], points[j], points[k]).abs();
                if best.is_none_or(|(_, ba)| area > ba) {
                    best = Some(([i, j, k], area));
                }
            }
        }
    }
    match best {
        Some((triple, area)) if area > 0.0 => Ok(triple),
        _ => Err(Error::Degenerate("all points are collinear".into())),
    }
}

/// Indices (ascending) of every point lying on the convex hull boundary,
/// including points in the middle of hull edges and duplicates.
fn hull_boundary_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() < 3 {
        return (0..points.len()).collect();
    }
    // Andrew's monotone chain, strict turns.
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // Collinear set: every point is on the boundary segment.
        return (0..points.len()).collect();
    }
    let on_edge = |p: (f64, f64)| {
        (0..hull.len()).any(|e| {
            let a = points[hull[e]];
            let b = points[hull[(e + 1) % hull.len()]];
            cross(a, b, p) == 0.0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        })
    };
    (0..points.len()).filter(|&i| on_edge(points[i])).collect()
}

/// The plane through three points whose `(x, y)` projections span a triangle.
pub fn plane_from_points(p1: [f64; 3], p2: [f64; 3], p3: [f64; 3]) -> Result<RoofPlane> {
    let (dx2, dy2, dz2) = (p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]);
    let (dx3, dy3, dz3) = (p3[0] - p1[0], p3[1] - p1[1], p3[2] - p1[2]);
    let det = dx2 * dy3 - dx3 * dy2;
    let scale = (dx2.abs() + dy2.abs()) * (dx3.abs() + dy3.abs());
    if det == 0.0 || det.abs() <= 1e-12 * scale {
        return Err(Error::Degenerate("collinear plane support points".into()));
    }
    let a = (dz2 * dy3 - dz3 * dy2) / det;
    let b = (dx2 * dz3 - dx3 * dz2) / det;
    let c = p1[2] - a * p1[0] - b * p1[1];
    Ok(RoofPlane {
        a,
        b,
        c,
        provenance: Provenance::Triangle { corners: 3 },
    })
}

/// One corner filed onto a section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionCorner {
    /// Representative pixel `(row, col)`, used for triangle selection.
    pub pixel: (usize, usize),
    /// Height-to-ground, meters.
    pub z: f64,
}

/// Heights before and after filing, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilingRecord {
    pub triple: [usize; 3],
    pub before: [f64; 3],
    pub after: [f64; 3],
}

impl FilingRecord {
    pub fn altered(&self) -> bool {
        self.before != self.after
    }

    pub fn max_delta(&self) -> f64 {
        self.before
            .iter()
            .zip(&self.after)
            .map(|(b, a)| (b - a).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlane {
    pub plane: RoofPlane,
    pub filing: Option<FilingRecord>,
}

/// Plane for one section from its filed corners.
///
/// Three or more corners: the largest pixel triangle is chosen, its heights
/// filed, and the plane interpolated. One or two corners give a horizontal
/// plane at their (mean) height, none gives `default_height`. Collinear
/// corners fall back to the mean height of the two farthest-apart corners.
pub fn reconstruct_section(corners: &[SectionCorner], gsd: f64, default_height: f64) -> SectionPlane {
    let horizontal = |z: f64, p: Provenance| SectionPlane {
        plane: RoofPlane::horizontal(z, p),
        filing: None,
    };
    match corners.len() {
        0 => return horizontal(default_height, Provenance::NoCorner),
        1 => return horizontal(corners[0].z, Provenance::OneCorner),
        2 => return horizontal((corners[0].z + corners[1].z) / 2.0, Provenance::TwoCorner),
        _ => {}
    }
    let pts: Vec<(f64, f64)> = corners
        .iter()
        .map(|c| (c.pixel.0 as f64, c.pixel.1 as f64))
        .collect();
    let degenerate = || {
        let (i, j) = farthest_pair(&pts);
        horizontal((corners[i].z + corners[j].z) / 2.0, Provenance::Degenerate)
    };
    let Ok(triple) = largest_triangle(&pts) else {
        return degenerate();
    };
    // Ascending by height, stable on index.
    let mut order = triple;
    order.sort_by(|&i, &j| corners[i].z.total_cmp(&corners[j].z).then(i.cmp(&j)));
    let before = order.map(|i| corners[i].z);
    let after = file_heights(before).expect("heights sorted ascending");
    let support: Vec<[f64; 3]> = order
        .iter()
        .zip(after)
        .map(|(&i, z)| {
            let (r, c) = corners[i].pixel;
            [c as f64 * gsd, r as f64 * gsd, z]
        })
        .collect();
    match plane_from_points(support[0], support[1], support[2]) {
        Ok(mut plane) => {
            plane.provenance = Provenance::Triangle {
                corners: corners.len(),
            };
            SectionPlane {
                plane,
                filing: Some(FilingRecord {
                    triple: order,
                    before,
                    after,
                }),
            }
        }
        Err(_) => degenerate(),
    }
}

/// Farthest pair of points, ties to the smallest index pair.
fn farthest_pair(pts: &[(f64, f64)]) -> (usize, usize) {
    let mut best = (0, 1, -1.0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}
