//! Mask moments: centroid and principal axes.

use nalgebra::{Point2, Vector2};

use crate::mask::{BinaryMask, MaskError};

/// First-order moment centroid `(M10/M00, M01/M00)`.
pub fn centroid(mask: &BinaryMask) -> Result<Point2<f64>, MaskError> {
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for (x, y) in mask.foreground() {
        m00 += 1.0;
        m10 += x as f64;
        m01 += y as f64;
    }
    if m00 == 0.0 {
        return Err(MaskError::EmptyMask);
    }
    Ok(Point2::new(m10 / m00, m01 / m00))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaAxes {
    /// Unit eigenvector of the larger eigenvalue; `x >= 0` (or `y >= 0` when `x == 0`).
    pub major: Vector2<f64>,
    /// `major` rotated by +90°.
    pub minor: Vector2<f64>,
    /// `(larger, smaller)` eigenvalues of the population covariance.
    pub eigenvalues: (f64, f64),
    /// Set when the smaller eigenvalue vanishes (single pixel or collinear pixels).
    pub degenerate: bool,
}

/// Principal axes of the foreground pixel coordinates.
pub fn pca_axes(mask: &BinaryMask) -> Result<PcaAxes, MaskError> {
    let c = centroid(mask)?;
    let (mut sxx, mut sxy, mut syy, mut n) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in mask.foreground() {
        let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        n += 1.0;
    }
    Ok(symmetric_2x2_axes(sxx / n, sxy / n, syy / n))
}

/// Closed-form eigen-decomposition of `[[a, b], [b, c]]`.
pub fn symmetric_2x2_axes(a: f64, b: f64, c: f64) -> PcaAxes {
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + radius, mean - radius);

    let mut major = if b.abs() > 1e-12 * (a.abs() + c.abs()).max(f64::MIN_POSITIVE) {
        // (l1 - c, b) and (b, l1 - a) are both eigenvectors; take the better conditioned one
        let u = Vector2::new(l1 - c, b);
        let v = Vector2::new(b, l1 - a);
        if u.norm_squared() >= v.norm_squared() { u } else { v }.normalize()
    } else if a >= c {
        Vector2::x()
    } else {
        Vector2::y()
    };
    if major.x < 0.0 || (major.x == 0.0 && major.y < 0.0) {
        major = -major;
    }
    let minor = Vector2::new(-major.y, major.x);
    let scale = l1.abs().max(1.0);
    PcaAxes {
        major,
        minor,
        eigenvalues: (l1, l2.max(0.0)),
        degenerate: l2.abs() <= 1e-12 * scale,
    }
}
