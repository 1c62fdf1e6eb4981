//! Diversity-maximizing subset selection: seeded k-means over pluggable text
//! embeddings, one representative per cluster.

use crate::util::{derive_rng, stable_hash};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubsetError {
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("k ({k}) exceeds number of texts ({n})")]
    KTooLarge { k: usize, n: usize },
}

/// Pluggable text -> vector function.
pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SubsetError>;
}

/// Offline default: character-trigram feature hashing, L2-normalized.
/// Not a semantic embedding, but deterministic and good enough to separate
/// lexically distinct groups.
pub struct HashEmbedder {
    pub dims: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dims: 64 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SubsetError> {
        let mut v = vec![0.0; self.dims];
        let lowered = text.to_lowercase();
        let chars: Vec<char> = lowered.chars().collect();
        for window in chars.windows(3) {
            let gram: String = window.iter().collect();
            let h = stable_hash(gram.as_bytes()) as usize % self.dims;
            v[h] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Cluster `texts` into `k` groups (seeded k-means, k-means++ init) and pick
/// the instance nearest each centroid. Returns `k` indices, ascending.
pub fn diverse_subset(
    texts: &[String],
    k: usize,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<Vec<usize>, SubsetError> {
    let n = texts.len();
    if k > n {
        return Err(SubsetError::KTooLarge { k, n });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let points: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| embedder.embed(t))
        .collect::<Result<_, _>>()?;

    // k-means++ seeding
    let mut rng = derive_rng(seed, "diverse_subset");
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    while centroids.len() < k {
        let dists: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; take the first
            // not-yet-chosen index
            (0..n)
                .find(|i| centroids.iter().all(|c| sq_dist(&points[*i], c) > 0.0))
                .unwrap_or(centroids.len())
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in dists.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.push(points[next].clone());
    }

    // Lloyd iterations
    let dims = points[0].len();
    let mut assignment = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest_centroid(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums[assignment[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster with the point farthest from its
                // current centroid (lowest index on ties)
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assignment[a]])
                            .partial_cmp(&sq_dist(&points[b], &centroids[assignment[b]]))
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
                changed = true;
            } else {
                for (s, c_val) in sums[c].iter().zip(centroids[c].iter_mut()) {
                    *c_val = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // representative per cluster: nearest to centroid, lowest index on ties
    let mut representatives = Vec::with_capacity(k);
    for (c, centroid) in centroids.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if assignment[i] != c {
                continue;
            }
            let d = sq_dist(p, centroid);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((_, i)) = best {
            representatives.push(i);
        }
    }
    representatives.sort_unstable();
    representatives.dedup();
    // degenerate duplicate-heavy inputs can starve clusters; pad with the
    // lowest unused indices to keep the contract of exactly k indices
    let mut i = 0;
    while representatives.len() < k && i < n {
        if !representatives.contains(&i) {
            representatives.push(i);
        }
        i += 1;
    }
    representatives.sort_unstable();
    Ok(representatives)
}
