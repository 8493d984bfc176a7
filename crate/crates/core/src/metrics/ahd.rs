use super::{MetricError, Point2};

/// Above this many point pairs the nearest-point queries go through a
/// uniform grid; results are identical to the exhaustive scan.
pub const GRID_THRESHOLD: usize = 1_000_000;

/// Average Hausdorff distance:
/// `½·(mean_x min_y ‖x−y‖ + mean_y min_x ‖x−y‖)`.
///
/// Two empty sets agree vacuously (0). One empty set is an error.
pub fn ahd(x: &[Point2], y: &[Point2]) -> Result<f64, MetricError> {
    ahd_with_grid_threshold(x, y, GRID_THRESHOLD)
}

pub fn ahd_with_grid_threshold(x: &[Point2], y: &[Point2], grid_threshold: usize) -> Result<f64, MetricError> {
    match (x.is_empty(), y.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) => return Err(MetricError::UndefinedDistance("first")),
        (false, true) => return Err(MetricError::UndefinedDistance("second")),
        _ => {}
    }
    let use_grid = x.len().saturating_mul(y.len()) > grid_threshold;
    let forward = directed_mean_distance(x, y, use_grid);
    let backward = directed_mean_distance(y, x, use_grid);
    Ok(0.5 * (forward + backward))
}

/// `mean_{a∈from} min_{b∈to} ‖a−b‖`. Both sets must be nonempty.
pub fn directed_mean_distance(from: &[Point2], to: &[Point2], use_grid: bool) -> f64 {
    let sum: f64 = if use_grid {
        let grid = Grid::build(from, to);
        from.iter().map(|p| grid.nearest_sq(p).sqrt()).sum()
    } else {
        from.iter().map(|p| nearest_sq_scan(p, to).sqrt()).sum()
    };
    sum / from.len() as f64
}

#[inline]
fn sq(a: &Point2, b: &Point2) -> f64 {
    let dr = a[0] - b[0];
    let dc = a[1] - b[1];
    dr * dr + dc * dc
}

fn nearest_sq_scan(p: &Point2, to: &[Point2]) -> f64 {
    to.iter().map(|q| sq(p, q)).fold(f64::INFINITY, f64::min)
}

/// Bucketed copy of the target set covering the joint extent of both sets,
/// so every query point falls inside the grid.
struct Grid<'a> {
    origin: Point2,
    cell: f64,
    rows: usize,
    cols: usize,
    buckets: Vec<Vec<&'a Point2>>,
}

impl<'a> Grid<'a> {
    fn build(from: &[Point2], to: &'a [Point2]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in from.iter().chain(to) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let cells_per_side = ((to.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = extent / cells_per_side as f64;
        let rows = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let cols = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let mut grid = Grid {
            origin: lo,
            cell,
            rows,
            cols,
            buckets: vec![Vec::new(); rows * cols],
        };
        for q in to {
            let (r, c) = grid.cell_of(q);
            grid.buckets[r * cols + c].push(q);
        }
        grid
    }

    fn cell_of(&self, p: &Point2) -> (usize, usize) {
        let r = ((p[0] - self.origin[0]) / self.cell).floor() as usize;
        let c = ((p[1] - self.origin[1]) / self.cell).floor() as usize;
        (r.min(self.rows - 1), c.min(self.cols - 1))
    }

    fn nearest_sq(&self, p: &Point2) -> f64 {
        let (pr, pc) = self.cell_of(p);
        let mut best = f64::INFINITY;
        let max_ring = self.rows.max(self.cols);
        for ring in 0..=max_ring {
            let r0 = pr as isize - ring as isize;
            let r1 = pr as isize + ring as isize;
            let c0 = pc as isize - ring as isize;
            let c1 = pc as isize + ring as isize;
            for r in r0..=r1 {
                if r < 0 || r >= self.rows as isize {
                    continue;
                }
                let on_row_edge = r == r0 || r == r1;
                let step = if on_row_edge { 1 } else { (c1 - c0).max(1) as usize };
                let mut c = c0;
                while c <= c1 {
                    if c >= 0 && c < self.cols as isize {
                        for q in &self.buckets[r as usize * self.cols + c as usize] {
                            let d = sq(p, q);
                            if d < best {
                                best = d;
                            }
                        }
                    }
                    c += step as isize;
                }
            }
            // anything beyond this ring is at least `margin` away
            let top = self.origin[0] + r0 as f64 * self.cell;
            let bottom = self.origin[0] + (r1 + 1) as f64 * self.cell;
            let left = self.origin[1] + c0 as f64 * self.cell;
            let right = self.origin[1] + (c1 + 1) as f64 * self.cell;
            let margin = (p[0] - top).min(bottom - p[0]).min(p[1] - left).min(right - p[1]);
            if best.is_finite() && margin > 0.0 && best <= margin * margin {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive pairwise oracle, written independently of the scan above.
    fn oracle(x: &[Point2], y: &[Point2]) -> f64 {
        let d = |a: &Point2, b: &Point2| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let fwd: f64 = x
            .iter()
            .map(|a| y.iter().map(|b| d(a, b)).fold(f64::MAX, f64::min))
            .sum::<f64>()
            / x.len() as f64;
        let bwd: f64 = y
            .iter()
            .map(|b| x.iter().map(|a| d(a, b)).fold(f64::MAX, f64::min))
            .sum::<f64>()
            / y.len() as f64;
        (fwd + bwd) / 2.0
    }

    #[test]
    fn hand_values() {
        assert_eq!(ahd(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap(), 5.0);
        assert_eq!(ahd(&[[0.0, 0.0], [2.0, 0.0]], &[[0.0, 0.0]]).unwrap(), 0.5);
        let x = [[1.0, 2.0], [5.0, 5.0]];
        assert_eq!(ahd(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets() {
        assert_eq!(ahd(&[], &[]).unwrap(), 0.0);
        assert!(matches!(ahd(&[], &[[0.0, 0.0]]), Err(MetricError::UndefinedDistance(_))));
        assert!(matches!(ahd(&[[0.0, 0.0]], &[]), Err(MetricError::UndefinedDistance(_))));
    }

    #[test]
    fn grid_path_is_result_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let nx = rng.gen_range(1..300);
            let ny = rng.gen_range(1..300);
            let spread = if trial % 2 == 0 { 64.0 } else { 700.0 };
            let mut pts = |n| -> Vec<Point2> {
                (0..n)
                    .map(|_| [(rng.gen::<f64>() * spread).floor(), (rng.gen::<f64>() * spread * 0.3).floor()])
                    .collect()
            };
            let x = pts(nx);
            let y = pts(ny);
            let scan = ahd_with_grid_threshold(&x, &y, usize::MAX).unwrap();
            let grid = ahd_with_grid_threshold(&x, &y, 0).unwrap();
            assert_eq!(scan.to_bits(), grid.to_bits(), "trial {trial}");
            assert!((scan - oracle(&x, &y)).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_and_scale_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x: Vec<Point2> = (0..30).map(|_| [rng.gen_range(0..32) as f64, rng.gen_range(0..32) as f64]).collect();
            let y: Vec<Point2> = (0..17).map(|_| [rng.gen_range(0..32) as f64, rng.gen_range(0..32) as f64]).collect();
            let d = ahd(&x, &y).unwrap();
            assert_eq!(d, ahd(&y, &x).unwrap());
            assert!(d >= 0.0);
            let s = 0.5;
            let xs: Vec<Point2> = x.iter().map(|p| [p[0] * s, p[1] * s]).collect();
            let ys: Vec<Point2> = y.iter().map(|p| [p[0] * s, p[1] * s]).collect();
            assert!((ahd(&xs, &ys).unwrap() - s * d).abs() < 1e-12);
        }
    }
}
