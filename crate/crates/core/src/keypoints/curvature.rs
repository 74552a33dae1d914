use thiserror::Error;

use super::contour::Contour;

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_ANGLE_DEG: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("contour of {len} points is too short for a window of {window}")]
pub struct ContourTooShort {
    pub len: usize,
    pub window: usize,
}

/// Turning angle in degrees at contour index `i`, between `p[i-w] -> p[i]`
/// and `p[i] -> p[i+w]` (cyclic). Zero-length legs give 0.
pub fn turning_angle(contour: &Contour, i: usize, window: usize) -> f64 {
    let i = i as isize;
    let w = window as isize;
    let (a, b, c) = (contour.at(i - w), contour.at(i), contour.at(i + w));
    let (v1, v2) = (b - a, c - b);
    let denom = v1.norm() * v2.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (v1.dot(&v2) / denom).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Contour indices whose turning angle exceeds `angle_thresh_deg`, with
/// non-maximum suppression: candidates are accepted in order of decreasing
/// angle (lower index first on ties) unless an accepted corner lies within
/// `window` samples. Returned in contour order.
pub fn curvature_corners(
    contour: &Contour,
    window: usize,
    angle_thresh_deg: f64,
) -> Result<Vec<usize>, ContourTooShort> {
    let n = contour.len();
    if window == 0 || n <= 2 * window {
        return Err(ContourTooShort { len: n, window });
    }
    let mut candidates: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, turning_angle(contour, i, window)))
        .filter(|&(_, a)| a > angle_thresh_deg)
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let cyclic = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(n - d)
    };
    let mut accepted: Vec<usize> = Vec::new();
    for (i, _) in candidates {
        if accepted.iter().all(|&j| cyclic(i, j) > window) {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}
