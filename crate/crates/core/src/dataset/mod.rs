//! Deterministic synthetic scenes: coloured shapes on a black canvas, paired
//! with an instruction and the ground-truth mask of what it names.

mod referent;
pub mod text;

pub use referent::{referent_phrase, resolve_phrase, Attribute};
pub use text::{detokenize, fill_template, tokenize_text, TEMPLATES, WORDS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mask::{BinaryMask, RgbImage};

pub const DEFAULT_CANVAS: (usize, usize) = (64, 64);
pub const MAX_SHAPES: usize = 6;
pub const MAX_RETRIES: u64 = 16;
pub const BACKGROUND: [u8; 3] = [0, 0, 0];

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("no unique referring phrase for shape {0}")]
    Ambiguous(usize),
    #[error("no valid scene for seed {seed} after {retries} attempts")]
    RetriesExhausted { seed: u64, retries: u64 },
    #[error("word {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("id {0} is not a text token")]
    UnknownTextId(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Rectangle,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Rectangle, ShapeKind::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Triangle => "triangle",
        }
    }
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [230, 40, 40],
            Color::Green => [40, 200, 60],
            Color::Blue => [40, 80, 230],
            Color::Yellow => [240, 220, 40],
        }
    }
}

/// Class id used for semantic evaluation: `color * 3 + kind`.
pub fn class_id(color: Color, kind: ShapeKind) -> u32 {
    let c = Color::ALL.iter().position(|&x| x == color).unwrap() as u32;
    let k = ShapeKind::ALL.iter().position(|&x| x == kind).unwrap() as u32;
    c * 3 + k
}

/// Geometry in pixel units; pixel `(r, c)` is sampled at its centre `(r+½, c+½)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Geometry {
    Circle { cy: f64, cx: f64, r: f64 },
    /// Half-open pixel rectangle `[top, bottom) × [left, right)`.
    Rect { top: f64, left: f64, bottom: f64, right: f64 },
    /// Vertices as `(y, x)`.
    Triangle { v: [[f64; 2]; 3] },
}

impl Geometry {
    pub fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Geometry::Circle { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Geometry::Rect {
                top,
                left,
                bottom,
                right,
            } => y >= top && y < bottom && x >= left && x < right,
            Geometry::Triangle { v } => {
                let edge = |a: [f64; 2], b: [f64; 2]| (b[1] - a[1]) * (y - a[0]) - (b[0] - a[0]) * (x - a[1]);
                let d0 = edge(v[0], v[1]);
                let d1 = edge(v[1], v[2]);
                let d2 = edge(v[2], v[0]);
                let neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
                let pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
                !(neg && pos)
            }
        }
    }

    /// Bounding box `(top, left, bottom, right)` in continuous coordinates.
    pub fn extent(&self) -> [f64; 4] {
        match *self {
            Geometry::Circle { cy, cx, r } => [cy - r, cx - r, cy + r, cx + r],
            Geometry::Rect {
                top,
                left,
                bottom,
                right,
            } => [top, left, bottom, right],
            Geometry::Triangle { v } => {
                let ys = v.map(|p| p[0]);
                let xs = v.map(|p| p[1]);
                [
                    ys.iter().copied().fold(f64::INFINITY, f64::min),
                    xs.iter().copied().fold(f64::INFINITY, f64::min),
                    ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ]
            }
        }
    }

    /// Geometric centroid `(y, x)`.
    pub fn centroid(&self) -> [f64; 2] {
        match *self {
            Geometry::Circle { cy, cx, .. } => [cy, cx],
            Geometry::Rect {
                top,
                left,
                bottom,
                right,
            } => [(top + bottom) / 2.0, (left + right) / 2.0],
            Geometry::Triangle { v } => [
                (v[0][0] + v[1][0] + v[2][0]) / 3.0,
                (v[0][1] + v[1][1] + v[2][1]) / 3.0,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub color: Color,
    pub geometry: Geometry,
}

impl Shape {
    pub fn rasterize(&self, height: usize, width: usize) -> BinaryMask {
        BinaryMask::from_fn(height, width, |r, c| self.geometry.contains(r as f64 + 0.5, c as f64 + 0.5))
            .expect("canvas is nonempty")
    }

    pub fn same_class(&self, other: &Shape) -> bool {
        self.kind == other.kind && self.color == other.color
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Semantic,
    Referring,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semantic" => Ok(Task::Semantic),
            "referring" => Ok(Task::Referring),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// A scene: shapes painted in order (later shapes on top), and the target
/// shape. For semantic scenes the target names a class (`color`, `kind`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub canvas: (usize, usize),
    pub shapes: Vec<Shape>,
    pub task: Task,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RgbImage,
    pub instruction: String,
    pub phrase: String,
    pub mask: BinaryMask,
    pub class_id: u32,
}

impl Sample {
    /// SHA-256 over image, mask and instruction.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.image.as_raw());
        h.update(self.mask.pixels());
        h.update(self.instruction.as_bytes());
        h.finalize().into()
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (h, w) = self.canvas;
        if h == 0 || w == 0 {
            return Err(DatasetError::InvalidSpec("empty canvas".into()));
        }
        if self.shapes.is_empty() || self.shapes.len() > MAX_SHAPES {
            return Err(DatasetError::InvalidSpec(format!(
                "scene needs 1..={MAX_SHAPES} shapes, has {}",
                self.shapes.len()
            )));
        }
        if self.target >= self.shapes.len() {
            return Err(DatasetError::InvalidSpec(format!("target {} out of range", self.target)));
        }
        for (i, s) in self.shapes.iter().enumerate() {
            let [t, l, b, r] = s.geometry.extent();
            if t < 0.0 || l < 0.0 || b > h as f64 || r > w as f64 {
                return Err(DatasetError::InvalidSpec(format!("shape {i} leaves the canvas")));
            }
            if shape_area(s, self.canvas) == 0 {
                return Err(DatasetError::InvalidSpec(format!("shape {i} covers no pixels")));
            }
        }
        if self.task == Task::Referring {
            if self.shapes.len() < 2 {
                return Err(DatasetError::InvalidSpec("referring scenes need at least two shapes".into()));
            }
            referent_phrase(self)?;
        }
        Ok(())
    }

    /// Index of the top-most shape at each pixel.
    fn owner_map(&self) -> Vec<Option<usize>> {
        let (h, w) = self.canvas;
        let mut owner = vec![None; h * w];
        for (i, s) in self.shapes.iter().enumerate() {
            let m = s.rasterize(h, w);
            for (o, &p) in owner.iter_mut().zip(m.pixels()) {
                if p != 0 {
                    *o = Some(i);
                }
            }
        }
        owner
    }

    pub fn phrase(&self) -> Result<String, DatasetError> {
        match self.task {
            Task::Referring => referent_phrase(self),
            Task::Semantic => {
                let t = &self.shapes[self.target];
                Ok(format!("{} {}", t.color.name(), t.kind.name()))
            }
        }
    }
}

pub(crate) fn shape_area(shape: &Shape, canvas: (usize, usize)) -> usize {
    shape.rasterize(canvas.0, canvas.1).count()
}

/// Rasterizes a scene into (image, instruction, mask).
pub fn generate_sample(spec: &SceneSpec) -> Result<Sample, DatasetError> {
    spec.validate()?;
    let (h, w) = spec.canvas;
    let owner = spec.owner_map();
    let mut image = RgbImage::new(h, w, BACKGROUND).expect("canvas is nonempty");
    let target = spec.shapes[spec.target];
    let mut mask = BinaryMask::new(h, w).expect("canvas is nonempty");
    for r in 0..h {
        for c in 0..w {
            if let Some(i) = owner[r * w + c] {
                let s = &spec.shapes[i];
                image.put(r, c, s.color.rgb());
                let hit = match spec.task {
                    Task::Referring => i == spec.target,
                    Task::Semantic => s.same_class(&target),
                };
                mask.set(r, c, hit);
            }
        }
    }
    let phrase = spec.phrase()?;
    let instruction = fill_template((spec.seed % TEMPLATES.len() as u64) as usize, &phrase);
    Ok(Sample {
        image,
        instruction,
        phrase,
        mask,
        class_id: class_id(target.color, target.kind),
    })
}

/// Draws a valid scene for `seed`, retrying with derived sub-streams.
pub fn generate_scene(seed: u64, task: Task, canvas: (usize, usize)) -> Result<SceneSpec, DatasetError> {
    with_retries(seed, MAX_RETRIES, |rng| random_scene(seed, task, canvas, rng))
}

pub(crate) fn with_retries(
    seed: u64,
    retries: u64,
    mut attempt: impl FnMut(&mut ChaCha8Rng) -> Result<SceneSpec, DatasetError>,
) -> Result<SceneSpec, DatasetError> {
    for stream in 0..retries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        if let Ok(spec) = attempt(&mut rng).and_then(|s| s.validate().map(|_| s)) {
            return Ok(spec);
        }
    }
    Err(DatasetError::RetriesExhausted { seed, retries })
}

fn random_scene(
    seed: u64,
    task: Task,
    canvas: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<SceneSpec, DatasetError> {
    let count = match task {
        Task::Referring => rng.gen_range(2..=4),
        Task::Semantic => rng.gen_range(1..=4),
    };
    let lead_kind = ShapeKind::ALL[rng.gen_range(0..3)];
    let lead_color = Color::ALL[rng.gen_range(0..4)];
    // repeated classes make attributes necessary in referring scenes
    let repeats = match rng.gen_range(0..10) {
        0..=3 => 0,
        4..=7 => 1,
        _ => 2,
    }
    .min(count - 1);

    let mut shapes: Vec<Shape> = Vec::with_capacity(count);
    for i in 0..count {
        let (kind, color) = if i <= repeats {
            (lead_kind, lead_color)
        } else {
            (ShapeKind::ALL[rng.gen_range(0..3)], Color::ALL[rng.gen_range(0..4)])
        };
        let placed = (0..200).find_map(|_| {
            let g = random_geometry(kind, canvas, rng);
            let free = shapes.iter().all(|s| !extents_overlap(&s.geometry.extent(), &g.extent(), 2.0));
            free.then_some(g)
        });
        match placed {
            Some(geometry) => shapes.push(Shape { kind, color, geometry }),
            None => break,
        }
    }
    if shapes.is_empty() {
        return Err(DatasetError::InvalidSpec("could not place any shape".into()));
    }
    let target = rng.gen_range(0..=repeats.min(shapes.len() - 1));
    Ok(SceneSpec {
        seed,
        canvas,
        shapes,
        task,
        target,
    })
}

fn extents_overlap(a: &[f64; 4], b: &[f64; 4], gap: f64) -> bool {
    a[0] < b[2] + gap && b[0] < a[2] + gap && a[1] < b[3] + gap && b[1] < a[3] + gap
}

/// Shape positions and sizes live on this pixel lattice.
pub const GEOMETRY_LATTICE: usize = 2;

/// Uniform multiple of the lattice in `[lo, hi]`.
fn on_lattice(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let step = GEOMETRY_LATTICE as f64;
    let a = (lo / step).ceil() as i64;
    let b = ((hi / step).floor() as i64).max(a);
    rng.gen_range(a..=b) as f64 * step
}

fn random_geometry(kind: ShapeKind, canvas: (usize, usize), rng: &mut ChaCha8Rng) -> Geometry {
    let (h, w) = (canvas.0 as f64, canvas.1 as f64);
    match kind {
        ShapeKind::Circle => {
            let r = on_lattice(rng, 6.0, 16.0);
            let cy = on_lattice(rng, r, h - r);
            let cx = on_lattice(rng, r, w - r);
            Geometry::Circle { cy, cx, r }
        }
        ShapeKind::Rectangle => {
            let rh = on_lattice(rng, 10.0, 32.0);
            let rw = on_lattice(rng, 10.0, 32.0);
            let top = on_lattice(rng, 0.0, h - rh);
            let left = on_lattice(rng, 0.0, w - rw);
            Geometry::Rect {
                top,
                left,
                bottom: top + rh,
                right: left + rw,
            }
        }
        ShapeKind::Triangle => {
            let th = on_lattice(rng, 12.0, 32.0);
            let tw = on_lattice(rng, 12.0, 32.0);
            let top = on_lattice(rng, 0.0, h - th);
            let left = on_lattice(rng, 0.0, w - tw);
            let apex = left + on_lattice(rng, 0.0, tw);
            Geometry::Triangle {
                v: [[top, apex], [top + th, left], [top + th, left + tw]],
            }
        }
    }
}

/// Image → `(H/p)·(W/p)` patch vectors of `p·p·3` values in `[-1, 1]`,
/// row-major over patches, channel-interleaved within a patch.
pub fn image_patches(image: &RgbImage, patch: usize) -> Vec<f32> {
    let (h, w) = image.dims();
    let (rows, cols) = (h / patch, w / patch);
    let mut out = Vec::with_capacity(rows * cols * patch * patch * 3);
    for i in 0..rows {
        for j in 0..cols {
            for r in 0..patch {
                for c in 0..patch {
                    for v in image.get(i * patch + r, j * patch + c) {
                        out.push(v as f32 / 127.5 - 1.0);
                    }
                }
            }
        }
    }
    out
}
