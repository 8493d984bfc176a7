use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;

/// AHD values are reported at this resolution regardless of the source size.
pub const NORMALIZED_RESOLUTION: f64 = 256.0;

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4" => Ok(Self::Four),
            "8" => Ok(Self::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other:?}")),
        }
    }
}

/// Contour pixels of a mask in `(row, col)` order, sorted row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPointSet {
    pub points: Vec<(usize, usize)>,
    pub source_dims: (usize, usize),
}

impl BoundaryPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_real(&self) -> Vec<Point2> {
        self.points.iter().map(|&(r, c)| [r as f64, c as f64]).collect()
    }
}

/// Foreground pixels with at least one background neighbour; pixels outside
/// the image count as background.
pub fn boundary(mask: &BinaryMask, connectivity: Connectivity) -> BoundaryPointSet {
    let (h, w) = mask.dims();
    let mut points = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let on_edge = connectivity.offsets().iter().any(|&(dr, dc)| {
                let nr = r as isize + dr;
                let nc = c as isize + dc;
                nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize || !mask.get(nr as usize, nc as usize)
            });
            if on_edge {
                points.push((r, c));
            }
        }
    }
    BoundaryPointSet {
        points,
        source_dims: (h, w),
    }
}

/// Scales both axes by `256 / max(H, W)`.
pub fn normalize_points(pts: &BoundaryPointSet) -> Vec<Point2> {
    let (h, w) = pts.source_dims;
    let s = NORMALIZED_RESOLUTION / h.max(w) as f64;
    pts.points.iter().map(|&(r, c)| [r as f64 * s, c as f64 * s]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel() {
        let mut m = BinaryMask::new(5, 5).unwrap();
        m.set(2, 3, true);
        assert_eq!(boundary(&m, Connectivity::Four).points, vec![(2, 3)]);
    }

    #[test]
    fn centered_block_perimeter() {
        let m = BinaryMask::from_fn(5, 5, |r, c| (1..4).contains(&r) && (1..4).contains(&c)).unwrap();
        // oracle: block cells with some 4-neighbour outside the block
        let mut expected = Vec::new();
        for r in 1..4 {
            for c in 1..4 {
                if r == 1 || r == 3 || c == 1 || c == 3 {
                    expected.push((r, c));
                }
            }
        }
        assert_eq!(expected.len(), 8);
        assert_eq!(boundary(&m, Connectivity::Four).points, expected);
    }

    #[test]
    fn full_image_is_its_border() {
        let m = BinaryMask::full(4, 6).unwrap();
        let b = boundary(&m, Connectivity::Four);
        assert_eq!(b.len(), 2 * 6 + 2 * 2);
        assert!(b.points.iter().all(|&(r, c)| r == 0 || r == 3 || c == 0 || c == 5));
    }

    #[test]
    fn eight_connectivity_adds_diagonal_corners() {
        // a plus-shaped hole makes diagonal-only contacts
        let mut m = BinaryMask::full(5, 5).unwrap();
        m.set(2, 2, false);
        let four = boundary(&m, Connectivity::Four);
        let eight = boundary(&m, Connectivity::Eight);
        assert!(!four.points.contains(&(1, 1)));
        assert!(eight.points.contains(&(1, 1)));
        assert!(boundary(&BinaryMask::new(3, 3).unwrap(), Connectivity::Eight).is_empty());
    }

    #[test]
    fn normalization() {
        let set = |h, w, p| BoundaryPointSet {
            points: vec![p],
            source_dims: (h, w),
        };
        assert_eq!(normalize_points(&set(256, 256, (7, 9))), vec![[7.0, 9.0]]);
        assert_eq!(normalize_points(&set(512, 512, (100, 200))), vec![[50.0, 100.0]]);
        assert_eq!(normalize_points(&set(128, 512, (64, 256))), vec![[32.0, 128.0]]);
    }
}
