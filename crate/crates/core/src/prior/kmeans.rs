use rand::Rng;

use crate::error::{invalid, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: indices of `k` rows of the `n × d` matrix `data`.
pub fn kmeans_pp_seeds<R: Rng + ?Sized>(data: &[f64], d: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = data.len().checked_div(d).unwrap_or(0);
    if k == 0 || n < k {
        return Err(invalid(format!("k-means++ needs 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    let row = |i: usize| &data[i * d..(i + 1) * d];
    let mut seeds = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in best.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining points coincide with a seed: take the first unused index.
            (0..n).find(|i| !seeds.contains(i)).unwrap()
        };
        seeds.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(row(i), row(next)));
        }
    }
    Ok(seeds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// `k × d` centers, row-major.
    pub centers: Vec<f64>,
    pub dim: usize,
    pub assignments: Vec<usize>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centers.len() / self.dim
    }

    /// Index of the nearest center (ties → lower index).
    pub fn assign(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, center) in self.centers.chunks(self.dim).enumerate() {
            let dist = sq_dist(x, center);
            if dist < best.1 {
                best = (c, dist);
            }
        }
        best.0
    }
}

/// Lloyd iterations from k-means++ seeds.
pub fn kmeans<R: Rng + ?Sized>(data: &[f64], d: usize, k: usize, iters: usize, rng: &mut R) -> Result<KMeans> {
    let seeds = kmeans_pp_seeds(data, d, k, rng)?;
    let n = data.len() / d;
    let mut model = KMeans {
        centers: seeds.iter().flat_map(|&i| data[i * d..(i + 1) * d].iter().copied()).collect(),
        dim: d,
        assignments: vec![0; n],
    };
    for _ in 0..iters {
        let assignments: Vec<usize> = data.chunks(d).map(|x| model.assign(x)).collect();
        let changed = assignments != model.assignments;
        model.assignments = assignments;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.chunks(d).zip(&model.assignments) {
            counts[a] += 1;
            sums[a * d..(a + 1) * d].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    model.centers[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    model.assignments = data.chunks(d).map(|x| model.assign(x)).collect();
    Ok(model)
}
