use nalgebra::Point2;

/// Greedy farthest point sampling, returning indices in selection order.
///
/// The seed is the point farthest from the centroid of the set; each
/// further pick maximises the distance to the nearest already-picked point.
/// Ties go to the lowest index. Nearest-pick distances are cached, so the
/// cost is O(n·k).
pub fn farthest_point_sampling(points: &[Point2<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let centroid = points
        .iter()
        .fold(nalgebra::Vector2::zeros(), |acc, p| acc + p.coords)
        / n as f64;
    let seed = argmax((0..n).map(|i| (points[i].coords - centroid).norm_squared()));

    let mut picks = Vec::with_capacity(k.min(n));
    let mut nearest = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut next = seed;
    while picks.len() < k.min(n) {
        picks.push(next);
        taken[next] = true;
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min((points[i] - points[next]).norm_squared());
        }
        if picks.len() == k.min(n) {
            break;
        }
        next = argmax((0..n).map(|i| if taken[i] { -1.0 } else { nearest[i] }));
    }
    picks
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
