//! Seeded k-means codebook training.
//!
//! Duplicate training vectors are collapsed into weighted points first; mask
//! patches are dominated by all-background and all-foreground blocks, so this
//! shrinks the working set by an order of magnitude without changing the
//! clustering objective.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Codebook, CodecError, TrainingMeta};

struct WeightedPoints {
    dim: usize,
    data: Vec<f32>,
    weights: Vec<f64>,
}

impl WeightedPoints {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn point(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn dedup(vectors: &[f32], dim: usize) -> WeightedPoints {
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut data = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for v in vectors.chunks_exact(dim) {
        let key: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
        match index.get(&key) {
            Some(&i) => weights[i] += 1.0,
            None => {
                index.insert(key, weights.len());
                data.extend_from_slice(v);
                weights.push(1.0);
            }
        }
    }
    WeightedPoints { dim, data, weights }
}

/// Squared distance with eight independent lanes so the loop vectorizes.
fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    acc.iter().sum::<f32>() + tail
}

fn kmeans_pp_init(points: &WeightedPoints, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.len();
    let dim = points.dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];

    let first = sample_weighted(&points.weights, rng);
    chosen[first] = true;
    centroids.extend_from_slice(points.point(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.point(i), points.point(first)) as f64)
        .collect();

    while centroids.len() < k * dim {
        let scores: Vec<f64> = (0..n)
            .map(|i| if chosen[i] { 0.0 } else { points.weights[i] * d2[i] })
            .collect();
        let next = if scores.iter().any(|&s| s > 0.0) {
            sample_weighted(&scores, rng)
        } else {
            // every remaining point coincides with a centroid under f32 rounding
            (0..n).find(|&i| !chosen[i]).expect("enough distinct points")
        };
        chosen[next] = true;
        let c = points.point(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(points.point(i), &c) as f64;
            if nd < *d {
                *d = nd;
            }
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 && acc > target {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Assigns every point to its nearest centroid via `‖c‖² − 2·x·c`.
fn assign(points: &WeightedPoints, centroids: &[f32], k: usize, out: &mut [u32]) {
    let dim = points.dim;
    let norms: Vec<f32> = centroids.chunks_exact(dim).map(|c| c.iter().map(|v| v * v).sum()).collect();
    // blocks of points keep the dot-product buffer small
    const BLOCK: usize = 512;
    let mut dots = vec![0f32; BLOCK * k];
    for start in (0..points.len()).step_by(BLOCK) {
        let rows = BLOCK.min(points.len() - start);
        let x = &points.data[start * dim..(start + rows) * dim];
        // SAFETY: slices are sized rows×dim, k×dim (read transposed) and rows×k.
        unsafe {
            matrixmultiply::sgemm(
                rows,
                dim,
                k,
                1.0,
                x.as_ptr(),
                dim as isize,
                1,
                centroids.as_ptr(),
                1,
                dim as isize,
                0.0,
                dots.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        for r in 0..rows {
            let row = &dots[r * k..(r + 1) * k];
            let mut best = 0usize;
            let mut best_d = f32::INFINITY;
            for (c, (&dot, &norm)) in row.iter().zip(&norms).enumerate() {
                let d = norm - 2.0 * dot;
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            out[start + r] = best as u32;
        }
    }
}

/// Trains a `k`-vector codebook on flattened `dim`-vectors.
///
/// k-means++ seeding, Lloyd iterations until no assignment changes or
/// `max_iters` is reached. A cluster that loses all its points is reseeded
/// with the point lying farthest from its own centroid. Centroid sums are
/// accumulated in a fixed order so a given seed reproduces bit-exactly.
pub fn train_codebook(
    vectors: &[f32],
    dim: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Codebook, CodecError> {
    if dim == 0 || vectors.len() % dim != 0 {
        return Err(CodecError::InvalidCodebook(format!(
            "{} values do not form {dim}-vectors",
            vectors.len()
        )));
    }
    if k < 2 {
        return Err(CodecError::InvalidCodebook(format!("K must be >= 2, got {k}")));
    }
    let sample_count = vectors.len() / dim;
    let points = dedup(vectors, dim);
    if points.len() < k {
        return Err(CodecError::TooFewDistinct {
            k,
            distinct: points.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(&points, k, &mut rng);
    let n = points.len();
    let mut labels = vec![u32::MAX; n];
    let mut next = vec![0u32; n];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        assign(&points, &centroids, k, &mut next);
        let changed = next != labels;
        std::mem::swap(&mut labels, &mut next);
        if !changed {
            break;
        }

        let mut sums = vec![0f64; k * dim];
        let mut mass = vec![0f64; k];
        for i in 0..n {
            let c = labels[i] as usize;
            let w = points.weights[i];
            mass[c] += w;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(points.point(i)) {
                *s += w * x as f64;
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| mass[c] == 0.0).collect();
        for c in 0..k {
            if mass[c] > 0.0 {
                for (dst, &s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = (s / mass[c]) as f32;
                }
            }
        }
        if !empty.is_empty() {
            reseed_empty(&points, &labels, &mut centroids, &empty);
        }
    }

    let cb = Codebook::new(
        k,
        dim,
        centroids,
        TrainingMeta {
            seed,
            iterations,
            sample_count,
        },
    )?;
    Ok(cb)
}

fn reseed_empty(points: &WeightedPoints, labels: &[u32], centroids: &mut [f32], empty: &[usize]) {
    let dim = points.dim;
    let mut far: Vec<(f32, usize)> = (0..points.len())
        .map(|i| {
            let c = labels[i] as usize;
            (sq_dist(points.point(i), &centroids[c * dim..(c + 1) * dim]), i)
        })
        .collect();
    far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (&c, &(_, i)) in empty.iter().zip(&far) {
        centroids[c * dim..(c + 1) * dim].copy_from_slice(points.point(i));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::squared_distance;

    fn random_binary(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect()
    }

    #[test]
    fn two_point_clustering() {
        let dim = 16;
        let mut v = Vec::new();
        for i in 0..20 {
            let x = if i % 3 == 0 { 1.0 } else { -1.0 };
            v.extend(std::iter::repeat(x).take(dim));
        }
        let cb = train_codebook(&v, dim, 2, 100, 7).unwrap();
        let mut got: Vec<f32> = (0..2).map(|k| cb.vector(k)[0]).collect();
        got.sort_by(f32::total_cmp);
        assert_eq!(got, vec![-1.0, 1.0]);
        for k in 0..2 {
            let first = cb.vector(k)[0];
            assert!(cb.vector(k).iter().all(|&x| x == first));
        }
        assert_eq!(cb.meta.sample_count, 20);
    }

    #[test]
    fn deterministic_for_seed() {
        let v = random_binary(300, 32, 1);
        let a = train_codebook(&v, 32, 8, 50, 42).unwrap();
        let b = train_codebook(&v, 32, 8, 50, 42).unwrap();
        let bits = |cb: &Codebook| cb.as_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn beats_single_mean_vector() {
        // K=1 optimum is the mean vector; any K=16 codebook must do no worse in total.
        let dim = 64;
        let v = random_binary(1000, dim, 3);
        let cb = train_codebook(&v, dim, 16, 100, 0).unwrap();
        let mut mean = vec![0f64; dim];
        for x in v.chunks_exact(dim) {
            for (m, &xi) in mean.iter_mut().zip(x) {
                *m += xi as f64 / 1000.0;
            }
        }
        let mean32: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
        let (mut err_k, mut err_1) = (0.0, 0.0);
        for x in v.chunks_exact(dim) {
            err_k += squared_distance(x, cb.vector(cb.nearest(x)));
            err_1 += squared_distance(x, &mean32);
        }
        assert!(err_k <= err_1, "{err_k} > {err_1}");
    }

    #[test]
    fn too_few_distinct_vectors() {
        let v = vec![1.0f32; 4 * 10];
        match train_codebook(&v, 4, 2, 10, 0) {
            Err(CodecError::TooFewDistinct { k: 2, distinct: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exactly_k_distinct_points_become_the_codebook() {
        let v = random_binary(5, 8, 11);
        let cb = train_codebook(&v, 8, 5, 10, 0).unwrap();
        for x in v.chunks_exact(8) {
            assert_eq!(squared_distance(x, cb.vector(cb.nearest(x))), 0.0);
        }
    }

    #[test]
    fn reseeds_farthest_point() {
        let points = WeightedPoints {
            dim: 1,
            data: vec![0.0, 1.0, 10.0],
            weights: vec![1.0; 3],
        };
        let mut centroids = vec![0.5, 99.0];
        reseed_empty(&points, &[0, 0, 0], &mut centroids, &[1]);
        assert_eq!(centroids, vec![0.5, 10.0]);
    }
}
