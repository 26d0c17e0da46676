//! Lloyd k-means with k-means++ seeding.
//!
//! Distance evaluations are pruned with an upper bound per point and a lower
//! bound per point and group of centers (the "yinyang" scheme). Assignments
//! match plain Lloyd iterations, with ties going to the lowest center index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::dist2;

#[derive(Debug, Clone)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iter: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// k x dim, row-major. Clusters that could not be filled keep their last
    /// position.
    pub centers: Vec<f64>,
    pub dim: usize,
    /// Within-cluster sum of squares after every assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn seed_plus_plus(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = vec![false; n];
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(pt(first));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(pt(i), pt(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive mass"))
        } else {
            // fewer distinct points than clusters
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[next] = true;
        let c = pt(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(pt(i), &c));
        }
        centers.extend_from_slice(&c);
    }
    centers
}

/// Nearest and second-nearest center distances (not squared).
fn nearest_two(x: &[f64], centers: &[f64], dim: usize) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
    for (c, ctr) in centers.chunks_exact(dim).enumerate() {
        let d = dist2(x, ctr);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = c;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1.sqrt(), d2.sqrt())
}

/// Memory budget for the per-point group bounds, in f64 entries.
const GROUP_BOUND_BUDGET: usize = 50_000_000;

/// Partition the centers into groups by a few plain Lloyd passes over the
/// centers themselves; each point keeps one lower bound per group.
fn center_groups(centers: &[f64], dim: usize, k: usize, n: usize) -> Vec<Vec<usize>> {
    let g = k.div_ceil(10).min((GROUP_BOUND_BUDGET / n.max(1)).max(1)).max(1);
    if g <= 1 {
        return vec![(0..k).collect()];
    }
    let mut gc: Vec<f64> = (0..g)
        .flat_map(|j| centers[(j * k / g) * dim..(j * k / g + 1) * dim].to_vec())
        .collect();
    let mut member = vec![0usize; k];
    for _ in 0..5 {
        for (c, m) in member.iter_mut().enumerate() {
            *m = nearest_two(&centers[c * dim..(c + 1) * dim], &gc, dim).0;
        }
        let mut sums = vec![0.0; g * dim];
        let mut counts = vec![0usize; g];
        for (c, &m) in member.iter().enumerate() {
            counts[m] += 1;
            for j in 0..dim {
                sums[m * dim + j] += centers[c * dim + j];
            }
        }
        for m in 0..g {
            if counts[m] > 0 {
                for j in 0..dim {
                    gc[m * dim + j] = sums[m * dim + j] / counts[m] as f64;
                }
            }
        }
    }
    let mut groups = vec![Vec::new(); g];
    for (c, &m) in member.iter().enumerate() {
        groups[m].push(c);
    }
    groups.retain(|v| !v.is_empty());
    groups
}

/// Per-point state: assigned center, upper bound on its distance, and one
/// lower bound per center group on the distance to any other center there.
struct Bounds {
    labels: Vec<usize>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    g: usize,
    scratch: Vec<(f64, usize, f64)>,
}

impl Bounds {
    fn assign_exact(&mut self, i: usize, x: &[f64], centers: &[f64], dim: usize, groups: &[Vec<usize>]) {
        let mut best = (f64::INFINITY, usize::MAX);
        self.scratch.clear();
        for grp in groups {
            let (mut m1, mut a1, mut m2) = (f64::INFINITY, usize::MAX, f64::INFINITY);
            for &c in grp {
                let d = dist2(x, &centers[c * dim..(c + 1) * dim]);
                if d < m1 || (d == m1 && c < a1) {
                    m2 = m1;
                    m1 = d;
                    a1 = c;
                } else if d < m2 {
                    m2 = d;
                }
            }
            if m1 < best.0 || (m1 == best.0 && a1 < best.1) {
                best = (m1, a1);
            }
            self.scratch.push((m1, a1, m2));
        }
        self.labels[i] = best.1;
        self.upper[i] = best.0.sqrt();
        for (gi, &(m1, a1, m2)) in self.scratch.iter().enumerate() {
            self.lower[i * self.g + gi] = if a1 == best.1 { m2.sqrt() } else { m1.sqrt() };
        }
    }
}

/// Cluster `points` (n x dim, row-major) into `params.k` groups.
pub fn kmeans(points: &[f64], dim: usize, params: &KMeansParams) -> Result<KMeansFit> {
    let k = params.k;
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Dimension("points are not a whole number of rows".into()));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::Config(format!("kmeans needs 1 <= K <= N, got K={k}, N={n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in kmeans input".into()));
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centers = seed_plus_plus(points, dim, k, &mut rng);
    let groups = center_groups(&centers, dim, k, n);
    let g = groups.len();
    let mut group_of = vec![0usize; k];
    for (gi, grp) in groups.iter().enumerate() {
        for &c in grp {
            group_of[c] = gi;
        }
    }

    let mut b = Bounds {
        labels: vec![0; n],
        upper: vec![0.0; n],
        lower: vec![0.0; n * g],
        g,
        scratch: Vec::with_capacity(g),
    };
    for i in 0..n {
        b.assign_exact(i, pt(i), &centers, dim, &groups);
    }

    let sse = |centers: &[f64], labels: &[usize]| -> f64 {
        (0..n).map(|i| dist2(pt(i), &centers[labels[i] * dim..(labels[i] + 1) * dim])).sum()
    };
    let mut objective = vec![sse(&centers, &b.labels)];
    let mut converged = false;
    let mut iterations = 0;
    let mut scanned = vec![(0.0f64, 0usize, 0.0f64); g];
    let mut touched = vec![false; g];

    while iterations < params.max_iter {
        iterations += 1;
        // update step
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = b.labels[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(pt(i)) {
                *s += v;
            }
        }
        let old = centers.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for j in 0..dim {
                    centers[c * dim + j] = sums[c * dim + j] * inv;
                }
            }
        }
        let mut reseeded = false;
        if counts.contains(&0) {
            // move each empty center onto the point farthest from its own
            // center, taken only from clusters that keep at least one point
            let labels = &mut b.labels;
            let mut far: Vec<(f64, usize)> = (0..n)
                .map(|i| (dist2(pt(i), &centers[labels[i] * dim..(labels[i] + 1) * dim]), i))
                .collect();
            far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut cursor = 0;
            for c in 0..k {
                if counts[c] > 0 {
                    continue;
                }
                while cursor < n {
                    let (d, i) = far[cursor];
                    cursor += 1;
                    if d > 0.0 && counts[labels[i]] > 1 {
                        counts[labels[i]] -= 1;
                        counts[c] = 1;
                        labels[i] = c;
                        centers[c * dim..(c + 1) * dim].copy_from_slice(pt(i));
                        reseeded = true;
                        break;
                    }
                }
            }
        }

        // assignment step
        let mut changed = 0usize;
        if reseeded {
            let before = b.labels.clone();
            for i in 0..n {
                b.assign_exact(i, pt(i), &centers, dim, &groups);
            }
            changed = before.iter().zip(&b.labels).filter(|(x, y)| x != y).count() + 1;
        } else {
            let drift: Vec<f64> = (0..k)
                .map(|c| dist2(&old[c * dim..(c + 1) * dim], &centers[c * dim..(c + 1) * dim]).sqrt())
                .collect();
            let group_drift: Vec<f64> = groups
                .iter()
                .map(|grp| grp.iter().map(|&c| drift[c]).fold(0.0, f64::max))
                .collect();
            for i in 0..n {
                let a = b.labels[i];
                b.upper[i] += drift[a];
                let lb = &mut b.lower[i * g..(i + 1) * g];
                let mut global = f64::INFINITY;
                for (l, gd) in lb.iter_mut().zip(&group_drift) {
                    *l -= gd;
                    global = global.min(*l);
                }
                if b.upper[i] < global {
                    continue;
                }
                let x = pt(i);
                let da = dist2(x, &centers[a * dim..(a + 1) * dim]).sqrt();
                b.upper[i] = da;
                if da < global {
                    continue;
                }
                // scan every group whose bound does not rule it out
                let mut best = (da, a);
                touched.iter_mut().for_each(|t| *t = false);
                for gi in 0..g {
                    if lb[gi] > best.0 {
                        continue;
                    }
                    touched[gi] = true;
                    let (mut m1, mut a1, mut m2) = (f64::INFINITY, usize::MAX, f64::INFINITY);
                    for &c in &groups[gi] {
                        let d = if c == a { da } else { dist2(x, &centers[c * dim..(c + 1) * dim]).sqrt() };
                        if d < m1 || (d == m1 && c < a1) {
                            m2 = m1;
                            m1 = d;
                            a1 = c;
                        } else if d < m2 {
                            m2 = d;
                        }
                    }
                    scanned[gi] = (m1, a1, m2);
                    if m1 < best.0 || (m1 == best.0 && a1 < best.1) {
                        best = (m1, a1);
                    }
                }
                let nb = best.1;
                for gi in 0..g {
                    if touched[gi] {
                        let (m1, a1, m2) = scanned[gi];
                        lb[gi] = if a1 == nb { m2 } else { m1 };
                    }
                }
                if nb != a {
                    let ga = group_of[a];
                    if !touched[ga] {
                        lb[ga] = lb[ga].min(da);
                    }
                    b.labels[i] = nb;
                    changed += 1;
                }
                b.upper[i] = best.0;
            }
        }
        objective.push(sse(&centers, &b.labels));
        if changed == 0 {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit {
        labels: b.labels,
        centers,
        dim,
        objective,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force Lloyd for comparison.
    fn lloyd_step(points: &[f64], dim: usize, centers: &[f64]) -> Vec<usize> {
        points
            .chunks_exact(dim)
            .map(|x| nearest_two(x, centers, dim).0)
            .collect()
    }

    fn cloud(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * 2).map(|_| rng.random::<f64>() * 10.0).collect()
    }

    #[test]
    fn separated_clusters_recovered() {
        let mut pts = Vec::new();
        for i in 0..30 {
            let c = (i % 3) as f64 * 100.0;
            pts.extend_from_slice(&[c + (i as f64) * 0.01, c]);
        }
        let fit = kmeans(&pts, 2, &KMeansParams::new(3, 7)).unwrap();
        assert!(fit.converged);
        for i in 0..30 {
            assert_eq!(fit.labels[i], fit.labels[i % 3]);
        }
        let mut distinct = fit.labels[..3].to_vec();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn objective_is_non_increasing() {
        let pts = cloud(500, 3);
        let fit = kmeans(&pts, 2, &KMeansParams::new(20, 11)).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.objective);
        }
    }

    #[test]
    fn fixed_point_is_a_lloyd_fixed_point() {
        let pts = cloud(400, 5);
        let fit = kmeans(&pts, 2, &KMeansParams::new(15, 2)).unwrap();
        assert!(fit.converged);
        assert_eq!(lloyd_step(&pts, 2, &fit.centers), fit.labels);
    }

    #[test]
    fn deterministic_for_seed() {
        let pts = cloud(300, 9);
        let a = kmeans(&pts, 2, &KMeansParams::new(10, 4)).unwrap();
        let b = kmeans(&pts, 2, &KMeansParams::new(10, 4)).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centers, b.centers);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts = cloud(25, 1);
        let fit = kmeans(&pts, 2, &KMeansParams::new(25, 0)).unwrap();
        let mut l = fit.labels.clone();
        l.sort();
        assert_eq!(l, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_k() {
        let pts = cloud(5, 1);
        assert!(kmeans(&pts, 2, &KMeansParams::new(0, 0)).is_err());
        assert!(kmeans(&pts, 2, &KMeansParams::new(6, 0)).is_err());
    }
}
