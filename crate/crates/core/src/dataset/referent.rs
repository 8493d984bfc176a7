//! `<attribute> <color> <kind>` referring phrases.

use super::{shape_area, DatasetError, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    Leftmost,
    Rightmost,
    Topmost,
    Bottommost,
    Largest,
    Smallest,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::Leftmost,
        Attribute::Rightmost,
        Attribute::Topmost,
        Attribute::Bottommost,
        Attribute::Largest,
        Attribute::Smallest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Leftmost => "leftmost",
            Attribute::Rightmost => "rightmost",
            Attribute::Topmost => "topmost",
            Attribute::Bottommost => "bottommost",
            Attribute::Largest => "largest",
            Attribute::Smallest => "smallest",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Score where the referent must be the strict minimum.
    fn score(self, spec: &SceneSpec, i: usize) -> f64 {
        let g = &spec.shapes[i].geometry;
        let [y, x] = g.centroid();
        match self {
            Attribute::Leftmost => x,
            Attribute::Rightmost => -x,
            Attribute::Topmost => y,
            Attribute::Bottommost => -y,
            Attribute::Largest => -(shape_area(&spec.shapes[i], spec.canvas) as f64),
            Attribute::Smallest => shape_area(&spec.shapes[i], spec.canvas) as f64,
        }
    }
}

/// Shortest phrase that picks out exactly the target shape.
pub fn referent_phrase(spec: &SceneSpec) -> Result<String, DatasetError> {
    let target = spec
        .shapes
        .get(spec.target)
        .ok_or_else(|| DatasetError::InvalidSpec(format!("target {} out of range", spec.target)))?;
    let base = format!("{} {}", target.color.name(), target.kind.name());
    let mut candidates = vec![base.clone()];
    candidates.extend(Attribute::ALL.iter().map(|a| format!("{} {base}", a.name())));
    candidates
        .into_iter()
        .find(|p| resolve_phrase(spec, p).as_deref() == Some(&[spec.target][..]))
        .ok_or(DatasetError::Ambiguous(spec.target))
}

/// Every shape in the scene that the phrase could denote. `None` if the
/// phrase does not parse.
pub fn resolve_phrase(spec: &SceneSpec, phrase: &str) -> Option<Vec<usize>> {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    let (attr, color, kind) = match words.as_slice() {
        [c, k] => (None, *c, *k),
        [a, c, k] => (Some(Attribute::parse(a)?), *c, *k),
        _ => return None,
    };
    let matching: Vec<usize> = spec
        .shapes
        .iter()
        .enumerate()
        .filter(|(_, s)| s.color.name() == color && s.kind.name() == kind)
        .map(|(i, _)| i)
        .collect();
    let Some(attr) = attr else {
        return Some(matching);
    };
    let best = matching
        .iter()
        .map(|&i| attr.score(spec, i))
        .fold(f64::INFINITY, f64::min);
    Some(matching.into_iter().filter(|&i| attr.score(spec, i) == best).collect())
}

#[cfg(test)]
mod tests {
    use super::super::{Color, Geometry, Shape, ShapeKind, Task};
    use super::*;

    fn circle(cy: f64, cx: f64, r: f64, color: Color) -> Shape {
        Shape {
            kind: ShapeKind::Circle,
            color,
            geometry: Geometry::Circle { cy, cx, r },
        }
    }

    fn scene(shapes: Vec<Shape>, target: usize) -> SceneSpec {
        SceneSpec {
            seed: 0,
            canvas: (64, 64),
            shapes,
            task: Task::Referring,
            target,
        }
    }

    #[test]
    fn unique_class_needs_no_attribute() {
        let s = scene(vec![circle(20.0, 20.0, 6.0, Color::Red), circle(40.0, 40.0, 6.0, Color::Blue)], 0);
        assert_eq!(referent_phrase(&s).unwrap(), "red circle");
    }

    #[test]
    fn leftmost_of_two() {
        let s = scene(vec![circle(30.0, 45.0, 6.0, Color::Red), circle(30.0, 15.0, 6.0, Color::Red)], 1);
        assert_eq!(referent_phrase(&s).unwrap(), "leftmost red circle");
        // disambiguation oracle over centroids
        let xs: Vec<f64> = s.shapes.iter().map(|sh| sh.geometry.centroid()[1]).collect();
        assert!(xs[1] < xs[0]);
        assert_eq!(resolve_phrase(&s, "leftmost red circle").unwrap(), vec![1]);
        assert_eq!(resolve_phrase(&s, "red circle").unwrap(), vec![0, 1]);
    }

    #[test]
    fn middle_of_three_identical_is_ambiguous() {
        let s = scene(
            vec![
                circle(10.0, 10.0, 6.0, Color::Red),
                circle(30.0, 30.0, 6.0, Color::Red),
                circle(50.0, 50.0, 6.0, Color::Red),
            ],
            1,
        );
        assert_eq!(referent_phrase(&s), Err(DatasetError::Ambiguous(1)));
        let s = scene(s.shapes.clone(), 2);
        assert_eq!(referent_phrase(&s).unwrap(), "rightmost red circle");
    }

    #[test]
    fn size_attributes() {
        let s = scene(
            vec![
                circle(10.0, 10.0, 6.0, Color::Green),
                circle(30.0, 30.0, 9.0, Color::Green),
                circle(50.0, 50.0, 6.0, Color::Green),
            ],
            1,
        );
        assert_eq!(referent_phrase(&s).unwrap(), "largest green circle");
    }

    #[test]
    fn generated_phrases_are_unique() {
        for seed in 0..300 {
            let spec = super::super::generate_scene(seed, Task::Referring, (64, 64)).unwrap();
            let phrase = referent_phrase(&spec).unwrap();
            assert_eq!(resolve_phrase(&spec, &phrase).unwrap(), vec![spec.target]);
        }
    }
}
