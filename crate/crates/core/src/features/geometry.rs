//! Box size, location and saliency statistics for one object tag.

use super::saliency::SaliencyMap;
use crate::corpus::BoundingBox;
use crate::error::{Error, Result};

/// Length of the per-tag visual feature.
pub const VISUAL_DIM: usize = 15;
/// Position of the normalized total area in the visual feature.
pub const AREA_SLOT: usize = 0;
/// Position of the mean distance to the image centre in the visual feature.
pub const CENTER_MEAN_SLOT: usize = 4;

/// `[area, ln(area + 1e-8), 12 location stats, relative saliency]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectVisualFeature(pub [f64; VISUAL_DIM]);

impl ObjectVisualFeature {
    pub fn area(&self) -> f64 {
        self.0[AREA_SLOT]
    }

    pub fn center_distance(&self) -> f64 {
        self.0[CENTER_MEAN_SLOT]
    }

    pub fn relative_saliency(&self) -> f64 {
        self.0[VISUAL_DIM - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn dist_to_interval(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        0.0
    }
}

/// Min, max and mean distance from the box's pixel centres to the image
/// centre, the vertical mid-line, the horizontal mid-line and the central
/// thirds rectangle, each divided by the image diagonal.
pub fn bbox_location_features(bbox: &BoundingBox, width: u32, height: u32) -> [f64; 12] {
    let (w, h) = (f64::from(width), f64::from(height));
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (tx0, tx1, ty0, ty1) = (w / 3.0, 2.0 * w / 3.0, h / 3.0, 2.0 * h / 3.0);
    let diag = (w * w + h * h).sqrt();
    let mut stats = [[f64::INFINITY, f64::NEG_INFINITY, 0.0]; 4];
    for y in bbox.y_min..bbox.y_max {
        let py = f64::from(y) + 0.5;
        let ddy = py - cy;
        let thirds_y = dist_to_interval(py, ty0, ty1);
        for x in bbox.x_min..bbox.x_max {
            let px = f64::from(x) + 0.5;
            let ddx = px - cx;
            let thirds_x = dist_to_interval(px, tx0, tx1);
            let d = [
                (ddx * ddx + ddy * ddy).sqrt(),
                ddx.abs(),
                ddy.abs(),
                (thirds_x * thirds_x + thirds_y * thirds_y).sqrt(),
            ];
            for (s, v) in stats.iter_mut().zip(d) {
                s[0] = s[0].min(v);
                s[1] = s[1].max(v);
                s[2] += v;
            }
        }
    }
    let n = bbox.area() as f64;
    let mut out = [0.0; 12];
    for (r, s) in stats.iter().enumerate() {
        out[3 * r] = s[0] / diag;
        out[3 * r + 1] = s[1] / diag;
        out[3 * r + 2] = s[2] / n / diag;
    }
    out
}

/// Aggregates all instances of one tag: areas add up, location statistics
/// take the minimum over instances, saliency is the mass fraction inside the
/// union of the boxes.
pub fn object_visual_features(
    instances: &[BoundingBox],
    saliency: &SaliencyMap,
    width: u32,
    height: u32,
) -> Result<ObjectVisualFeature> {
    if instances.is_empty() {
        return Err(Error::Precondition("visual features need at least one instance".into()));
    }
    if saliency.width != width as usize || saliency.height != height as usize {
        return Err(Error::argument(format!(
            "saliency map is {}x{} but the image is {width}x{height}",
            saliency.width, saliency.height
        )));
    }
    if let Some(b) = instances.iter().find(|b| !b.is_valid_in(width, height)) {
        return Err(Error::argument(format!("box {b:?} outside {width}x{height} image")));
    }
    let total_area: u64 = instances.iter().map(BoundingBox::area).sum();
    let area = (total_area as f64 / (f64::from(width) * f64::from(height))).min(1.0);

    let mut location = [f64::INFINITY; 12];
    for b in instances {
        for (l, v) in location.iter_mut().zip(bbox_location_features(b, width, height)) {
            *l = l.min(v);
        }
    }

    let (w, h) = (width as usize, height as usize);
    let mut in_union = vec![false; w * h];
    for b in instances {
        for y in b.y_min as usize..b.y_max as usize {
            in_union[y * w + b.x_min as usize..y * w + b.x_max as usize].fill(true);
        }
    }
    let inside: f64 = saliency.values.iter().zip(&in_union).filter(|(_, &m)| m).map(|(v, _)| v).sum();
    let relative = (inside / (saliency.total() + 1e-12)).clamp(0.0, 1.0);

    let mut out = [0.0; VISUAL_DIM];
    out[0] = area;
    out[1] = (area + 1e-8).ln();
    out[2..14].copy_from_slice(&location);
    out[14] = relative;
    debug_assert_eq!(h * w, saliency.values.len());
    Ok(ObjectVisualFeature(out))
}
