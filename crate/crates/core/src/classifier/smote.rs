//! Synthetic minority oversampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig { k_neighbors: 5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPoint {
    pub point: Vec<f64>,
    /// Index of the minority sample the point was grown from.
    pub base: usize,
    /// Index of the neighbour it was interpolated towards.
    pub neighbor: usize,
    pub lambda: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `k` nearest other minority points of each minority point (Euclidean,
/// ties broken by index).
fn neighbours(minority: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..minority.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..minority.len())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&minority[i], &minority[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates `count` synthetic points `x + λ (x_nn − x)`. Base points are
/// visited round-robin over a fresh shuffle each pass, so every minority
/// sample is used ⌊count/m⌋ or ⌈count/m⌉ times.
pub fn smote(minority: &[Vec<f64>], count: usize, config: &SmoteConfig, rng: &mut RandomStream) -> Result<Vec<SyntheticPoint>> {
    let m = minority.len();
    let k = config.k_neighbors;
    if k < 1 || m <= k {
        return Err(Error::Config(format!(
            "SMOTE needs more minority samples ({m}) than neighbours (k = {k}), and k >= 1"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let d = minority[0].len();
    if minority.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged minority rows".into()));
    }
    let nn = neighbours(minority, k);
    let mut order: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        if s % m == 0 {
            order = (0..m).collect();
            // Fisher–Yates
            for i in (1..m).rev() {
                order.swap(i, rng.below(i + 1));
            }
        }
        let base = order[s % m];
        let neighbor = nn[base][rng.below(k)];
        let lambda = rng.uniform();
        let (x, z) = (&minority[base], &minority[neighbor]);
        let point = x
            .iter()
            .zip(z)
            .map(|(&a, &b)| (a + lambda * (b - a)).clamp(a.min(b), a.max(b)))
            .collect();
        out.push(SyntheticPoint {
            point,
            base,
            neighbor,
            lambda,
        });
    }
    Ok(out)
}

/// Synthetic points that raise the minority count to `majority_count`.
pub fn smote_balance(minority: &[Vec<f64>], majority_count: usize, config: &SmoteConfig, rng: &mut RandomStream) -> Result<Vec<SyntheticPoint>> {
    smote(minority, majority_count.saturating_sub(minority.len()), config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_points_collinear() {
        let minority = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let mut rng = RandomStream::new(1, 0);
        let s = smote(&minority, 1, &SmoteConfig { k_neighbors: 1 }, &mut rng).unwrap();
        assert_eq!(s.len(), 1);
        let p = &s[0].point;
        assert_eq!(p[0], p[1]);
        assert!((0.0..=1.0).contains(&p[0]));
    }

    #[test]
    fn balances_table_one_sizes() {
        let mut rng = RandomStream::new(2, 0);
        let minority: Vec<Vec<f64>> = (0..61).map(|_| (0..9).map(|_| rng.uniform()).collect()).collect();
        let s = smote_balance(&minority, 543, &SmoteConfig::default(), &mut rng).unwrap();
        assert_eq!(s.len(), 482);
        let mut uses = vec![0usize; 61];
        for p in &s {
            uses[p.base] += 1;
        }
        assert!(uses.iter().all(|&u| u == 7 || u == 8));
    }

    #[test]
    fn too_few_minority() {
        let minority = vec![vec![0.0], vec![1.0]];
        let mut rng = RandomStream::new(1, 0);
        assert!(matches!(
            smote(&minority, 3, &SmoteConfig { k_neighbors: 2 }, &mut rng),
            Err(Error::Config(_))
        ));
    }

    /// Point-in-hull oracle for the plane: inside (or on) every edge of the
    /// convex hull built by gift wrapping.
    fn in_hull_2d(pts: &[Vec<f64>], q: &[f64]) -> bool {
        let cross = |o: &[f64], a: &[f64], b: &[f64]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let mut sorted: Vec<&Vec<f64>> = pts.iter().collect();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        sorted.dedup();
        if sorted.len() < 3 {
            return true;
        }
        let mut hull: Vec<&Vec<f64>> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &&Vec<f64>>> =
                if pass == 0 { Box::new(sorted.iter()) } else { Box::new(sorted.iter().rev()) };
            for p in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], q) >= -1e-9)
    }

    proptest! {
        #[test]
        fn points_on_generating_segment(seed in any::<u64>(), m in 3usize..20, count in 1usize..60) {
            let mut rng = RandomStream::new(seed, 3);
            let minority: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.standard_normal(), rng.standard_normal(), rng.uniform()]).collect();
            let s = smote(&minority, count, &SmoteConfig { k_neighbors: 2 }, &mut rng).unwrap();
            prop_assert_eq!(s.len(), count);
            for p in &s {
                prop_assert!((0.0..1.0).contains(&p.lambda));
                prop_assert_ne!(p.base, p.neighbor);
                for (j, &v) in p.point.iter().enumerate() {
                    let (a, b) = (minority[p.base][j], minority[p.neighbor][j]);
                    prop_assert!(a.min(b) <= v && v <= a.max(b));
                }
            }
        }

        #[test]
        fn points_inside_minority_hull(seed in any::<u64>(), m in 4usize..12) {
            let mut rng = RandomStream::new(seed, 4);
            let minority: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.uniform() * 10.0, rng.uniform() * 10.0]).collect();
            let s = smote(&minority, 30, &SmoteConfig { k_neighbors: 3 }, &mut rng).unwrap();
            for p in &s {
                prop_assert!(in_hull_2d(&minority, &p.point));
            }
        }
    }
}
