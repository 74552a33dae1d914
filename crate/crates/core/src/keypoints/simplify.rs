//! Douglas–Peucker approximation of a closed contour.

use nalgebra::Point2;

use super::contour::Contour;

/// Default tolerance as a fraction of the contour perimeter.
pub const DEFAULT_EPS_FRAC: f64 = 0.02;

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Simplify a closed contour, returning indices of the kept vertices in
/// contour order.
///
/// The loop is first cut at its two mutually farthest points (lowest index
/// pair on ties); each of the two open chains is then split recursively at
/// the point farthest from its chord while that distance exceeds `eps`.
pub fn simplify_polygon(contour: &Contour, eps: f64) -> Vec<usize> {
    let pts = &contour.points;
    let n = pts.len();
    if n <= 2 {
        return (0..n).collect();
    }

    let (mut si, mut sj, mut best) = (0, 1, -1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (pts[j] - pts[i]).norm_squared();
            if d > best {
                (si, sj, best) = (i, j, d);
            }
        }
    }

    let mut keep = vec![false; n];
    keep[si] = true;
    keep[sj] = true;
    // chains are expressed in unwrapped index space [si, sj] and [sj, si + n]
    let mut stack = vec![(si, sj), (sj, si + n)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (pts[lo % n], pts[hi % n]);
        let (mut far, mut far_d) = (lo, -1.0);
        for k in (lo + 1)..hi {
            let d = point_segment_distance(pts[k % n], a, b);
            if d > far_d {
                (far, far_d) = (k, d);
            }
        }
        if far_d > eps {
            keep[far % n] = true;
            stack.push((lo, far));
            stack.push((far, hi));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// [`simplify_polygon`] with the default tolerance of 2% of the perimeter.
pub fn simplify_polygon_default(contour: &Contour) -> Vec<usize> {
    let eps = (DEFAULT_EPS_FRAC * contour.perimeter()).max(f64::MIN_POSITIVE);
    simplify_polygon(contour, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::contour::trace_contour;
    use crate::mask::BinaryMask;

    #[test]
    fn rectangle_keeps_four_corners() {
        let m = BinaryMask::from_fn(30, 20, |x, y| (5..25).contains(&x) && (4..14).contains(&y));
        let c = trace_contour(&m).unwrap();
        let kept = simplify_polygon(&c, 1.0);
        let mut corners: Vec<(i64, i64)> = kept
            .iter()
            .map(|&i| (c.points[i].x as i64, c.points[i].y as i64))
            .collect();
        corners.sort();
        assert_eq!(corners, vec![(5, 4), (5, 13), (24, 4), (24, 13)]);
    }

    #[test]
    fn collinear_segment_keeps_endpoints() {
        let c = Contour {
            points: (0..10).map(|i| Point2::new(i as f64, 0.0)).collect(),
        };
        assert_eq!(simplify_polygon(&c, 0.5), vec![0, 9]);
    }

    #[test]
    fn segment_distance_clamps_to_endpoints() {
        let d = point_segment_distance(Point2::new(3.0, 4.0), Point2::origin(), Point2::origin());
        assert_eq!(d, 5.0);
        let d = point_segment_distance(
            Point2::new(-3.0, 4.0),
            Point2::origin(),
            Point2::new(10.0, 0.0),
        );
        assert_eq!(d, 5.0);
    }
}
