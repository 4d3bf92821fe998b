//! K-means clustering (k-means++ seeding, multiple restarts) and the
//! silhouette quality score used to pick the number of clusters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    /// within-cluster sum of squared distances
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for c in 0..centroids.rows {
        let d = sq_dist(centroids.row(c), point);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ initial centroids: first uniform, then proportional to the
/// squared distance from the nearest chosen centroid.
fn kmeanspp_init(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.rows;
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining mass is zero (duplicate points): pick uniformly
            rng.gen_range(0..n)
        } else {
            let mut mark = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if mark < w {
                    pick = i;
                    break;
                }
                mark -= w;
            }
            pick
        };
        chosen.push(next);
        for i in 0..n {
            let d = sq_dist(data.row(i), data.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    let rows: Vec<&[f64]> = chosen.iter().map(|&i| data.row(i)).collect();
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn lloyd(data: &Matrix, mut centroids: Matrix, max_iters: usize) -> KMeansFit {
    let n = data.rows;
    let k = centroids.rows;
    let dim = data.cols;
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(&centroids, data.row(i));
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for j in 0..dim {
                sums.data[c * dim + j] += data.get(i, j);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its
                // current centroid (deterministic)
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), centroids.row(assignment[a]));
                        let db = sq_dist(data.row(b), centroids.row(assignment[b]));
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(data.row(far));
            } else {
                for j in 0..dim {
                    centroids.data[c * dim + j] = sums.data[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(data.row(i), centroids.row(assignment[i])))
        .sum();
    KMeansFit {
        centroids,
        assignment,
        inertia,
    }
}

/// Best of `restarts` k-means++ runs by inertia (ties keep the earliest).
pub fn kmeans(data: &Matrix, k: usize, seed: u64, restarts: usize, max_iters: usize) -> KMeansFit {
    assert!(k >= 1 && k <= data.rows, "k={k} out of range for n={}", data.rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let init = kmeanspp_init(data, k, &mut rng);
        let fit = lloyd(data, init, max_iters);
        match &best {
            Some(b) if b.inertia <= fit.inertia => {}
            _ => best = Some(fit),
        }
    }
    best.unwrap()
}

/// Mean silhouette over all points, Euclidean distance. Points in singleton
/// clusters, and points where both cohesion and separation are zero, score 0.
pub fn mean_silhouette(data: &Matrix, assignment: &[usize], k: usize) -> f64 {
    let n = data.rows;
    if n == 0 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue; // silhouette term 0
        }
        // mean distance to every cluster
        let mut dist_sum = vec![0.0f64; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            dist_sum[assignment[j]] += sq_dist(data.row(i), data.row(j)).sqrt();
        }
        let a = dist_sum[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| dist_sum[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue; // single non-empty cluster: term 0
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> Matrix {
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.01;
            rows.push(vec![t, -t]);
            rows.push(vec![5.0 + t, 5.0 - t]);
        }
        Matrix::from_rows(&rows)
    }

    #[test]
    fn separated_blobs_are_found_exactly() {
        let data = two_blobs();
        let fit = kmeans(&data, 2, 3, 10, 300);
        // even rows belong to blob 0, odd rows blob 1
        let g = fit.assignment[0];
        for i in 0..data.rows {
            let expect = if i % 2 == 0 { g } else { 1 - g };
            assert_eq!(fit.assignment[i], expect);
        }
        let sil = mean_silhouette(&data, &fit.assignment, 2);
        assert!(sil > 0.9, "silhouette {sil}");
    }

    #[test]
    fn k_equals_n_memorizes_points() {
        let data = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ]);
        let fit = kmeans(&data, 3, 5, 10, 300);
        assert!(fit.inertia < 1e-18);
    }

    #[test]
    fn identical_points_have_zero_silhouette() {
        let data = Matrix::filled(8, 2, 1.0);
        let fit = kmeans(&data, 3, 11, 10, 300);
        assert_eq!(mean_silhouette(&data, &fit.assignment, 3), 0.0);
    }

    #[test]
    fn silhouette_stays_in_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = rng.gen_range(4..20);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let data = Matrix::from_rows(&rows);
            let k = rng.gen_range(2..=3.min(n - 1).max(2));
            let fit = kmeans(&data, k, trial, 3, 100);
            let s = mean_silhouette(&data, &fit.assignment, k);
            assert!((-1.0..=1.0).contains(&s), "silhouette {s}");
        }
    }

    #[test]
    fn restarts_are_deterministic() {
        let data = two_blobs();
        let a = kmeans(&data, 3, 123, 10, 300);
        let b = kmeans(&data, 3, 123, 10, 300);
        assert_eq!(a, b);
    }

    #[test]
    fn inertia_never_increases_across_lloyd_iterations() {
        // run lloyd step-by-step by capping iterations
        let data = two_blobs();
        let mut prev = f64::INFINITY;
        for iters in 1..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let init = kmeanspp_init(&data, 3, &mut rng);
            let fit = lloyd(&data, init, iters);
            assert!(fit.inertia <= prev + 1e-12);
            prev = fit.inertia;
        }
    }
}
