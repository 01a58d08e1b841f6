//! DSM-fit baseline: a least-squares plane through the surface model over
//! each section, for comparison with corner-based reconstruction.

use crate::dtm::{DsmGrid, DtmGrid};
use crate::error::{Error, Result};
use crate::metrics::CompensatedSum;
use crate::plane::{Provenance, RoofPlane};
use crate::raster::Georef;
use crate::sections::RoofSection;

/// Least-squares plane `z = a x + b y + c` through `points`, fitted on
/// centered coordinates. Fewer than three points or collinear positions are
/// [`Error::Degenerate`].
pub fn fit_plane_lsq(points: &[[f64; 3]]) -> Result<RoofPlane> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} points cannot fix a plane", points.len())));
    }
    let n = points.len() as f64;
    let mean = |k: usize| {
        let mut s = CompensatedSum::default();
        points.iter().for_each(|p| s.add(p[k]));
        s.value() / n
    };
    let (mx, my, mz) = (mean(0), mean(1), mean(2));
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = Default::default();
    let sums: [&mut CompensatedSum; 5] = [&mut sxx, &mut sxy, &mut syy, &mut sxz, &mut syz];
    let [sxx, sxy, syy, sxz, syz] = sums;
    for p in points {
        let (x, y, z) = (p[0] - mx, p[1] - my, p[2] - mz);
        sxx.add(x * x);
        sxy.add(x * y);
        syy.add(y * y);
        sxz.add(x * z);
        syz.add(y * z);
    }
    let (sxx, sxy, syy, sxz, syz) = (sxx.value(), sxy.value(), syy.value(), sxz.value(), syz.value());
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * sxx * syy) {
        return Err(Error::Degenerate("collinear sample positions".into()));
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    Ok(RoofPlane {
        a,
        b,
        c: mz - a * mx - b * my,
        provenance: Provenance::Baseline,
    })
}

/// Plane through the normalized surface height (DSM minus DTM) sampled at
/// the section's pixel centers, in plane coordinates `(col * gsd, row * gsd)`.
pub fn baseline_dsm_reconstruct(
    section: &RoofSection,
    dsm: &DsmGrid,
    dtm: &DtmGrid,
    georef: &Georef,
) -> Result<RoofPlane> {
    let gsd = georef.gsd_m_per_px;
    let pts = section
        .pixels
        .iter()
        .map(|&(r, c)| {
            let (x, y) = georef.pixel_to_world(r as f64, c as f64);
            Ok([c as f64 * gsd, r as f64 * gsd, dsm.sample(x, y)? - dtm.sample(x, y)?])
        })
        .collect::<Result<Vec<_>>>()?;
    fit_plane_lsq(&pts)
}
