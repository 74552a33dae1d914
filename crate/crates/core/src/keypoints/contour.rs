//! Outer-boundary tracing by Moore-neighbourhood border following.

use nalgebra::Point2;

use crate::mask::{BinaryMask, MaskError};

/// Neighbour offsets in counter-clockwise order as displayed (y grows down):
/// E, NE, N, NW, W, SW, S, SE.
const RING: [(i64, i64); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn ring_index(dx: i64, dy: i64) -> usize {
    RING.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is a unit neighbour step")
}

/// Closed boundary polyline; the edge from the last point back to the first
/// is implicit. Traced counter-clockwise as displayed, which gives a negative
/// shoelace sum in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<Point2<f64>>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point at a cyclic index.
    pub fn at(&self, i: isize) -> Point2<f64> {
        let n = self.points.len() as isize;
        self.points[i.rem_euclid(n) as usize]
    }

    /// Length of the closed polyline.
    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| (self.points[(i + 1) % n] - self.points[i]).norm())
            .sum()
    }

    /// Twice the signed area (shoelace sum).
    pub fn signed_area2(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum()
    }
}

/// Trace the outer boundary of the component containing the topmost-then-leftmost
/// foreground pixel.
///
/// Thin parts are walked on both sides, so a one-pixel-wide strip yields a
/// degenerate loop that revisits interior pixels. Masks of one or two pixels
/// yield contours with fewer than three points.
pub fn trace_contour(mask: &BinaryMask) -> Result<Contour, MaskError> {
    let (sx, sy) = mask.foreground().next().ok_or(MaskError::EmptyMask)?;
    let start = (sx as i64, sy as i64);

    // Scan counter-clockwise from the backtrack direction; returns the next
    // boundary pixel and the backtrack direction relative to it.
    let step = |cur: (i64, i64), back: usize| -> Option<((i64, i64), usize)> {
        for k in 1..=8 {
            let d = (back + k) % 8;
            let n = (cur.0 + RING[d].0, cur.1 + RING[d].1);
            if mask.get_signed(n.0, n.1) {
                let prev = RING[(back + k - 1) % 8];
                let q = (cur.0 + prev.0, cur.1 + prev.1);
                return Some((n, ring_index(q.0 - n.0, q.1 - n.1)));
            }
        }
        None
    };

    let mut points = vec![Point2::new(sx as f64, sy as f64)];
    // the west neighbour of the first raster pixel is always background
    let Some((first_next, first_back)) = step(start, 4) else {
        return Ok(Contour { points });
    };
    let (mut cur, mut back) = (first_next, first_back);
    let limit = 4 * mask.width() * mask.height() + 8;
    for _ in 0..limit {
        if cur == start {
            let (next, _) = step(cur, back).expect("start pixel has a neighbour");
            if next == first_next {
                break;
            }
        }
        points.push(Point2::new(cur.0 as f64, cur.1 as f64));
        let (next, nb) = step(cur, back).expect("traced pixel has a neighbour");
        cur = next;
        back = nb;
    }
    Ok(Contour { points })
}
