//! Two-component PCA followed by k-means, with PD proportions per cluster.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::numcore::{stream_labels, symmetric_eigen, RandomStream, Standardizer, SymmetricMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Column scales applied after centering, when standardized.
    pub scale: Option<Vec<f64>>,
    /// Two orthonormal directions.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

impl PcaProjection {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn centered(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                let c = v - self.mean[j];
                match &self.scale {
                    Some(s) => c / s[j],
                    None => c,
                }
            })
            .collect()
    }

    pub fn project(&self, row: &[f64]) -> [f64; 2] {
        let c = self.centered(row);
        let dot = |v: &[f64]| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        [dot(&self.components[0]), dot(&self.components[1])]
    }

    pub fn project_all(&self, rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
        rows.iter().map(|r| self.project(r)).collect()
    }
}

/// Top-2 principal components of `x` (covariance with `n − 1`). Each
/// component is signed so its largest-magnitude entry is positive.
pub fn pca_fit(x: &[Vec<f64>], standardize: bool) -> Result<PcaProjection> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("PCA needs at least 3 rows, got {n}")));
    }
    let d = x[0].len();
    if d < 2 {
        return Err(Error::Shape("PCA to two components needs at least 2 columns".into()));
    }
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged feature rows".into()));
    }
    let (mean, scale) = if standardize {
        let s = Standardizer::fit(x)?;
        (s.means, Some(s.sds))
    } else {
        let mean = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        (mean, None)
    };
    let mut proj = PcaProjection {
        mean,
        scale,
        components: [vec![0.0; d], vec![0.0; d]],
        explained_variance: [0.0; 2],
    };
    let centered: Vec<Vec<f64>> = x.iter().map(|r| proj.centered(r)).collect();
    let cov = SymmetricMatrix::from_fn(d, |a, b| {
        centered.iter().map(|r| r[a] * r[b]).sum::<f64>() / (n - 1) as f64
    });
    let eig = symmetric_eigen(&cov)?;
    for k in 0..2 {
        let mut v = eig.vector(k);
        let lead = v.iter().fold(0.0f64, |m, &a| if a.abs() > m.abs() { a } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        proj.components[k] = v;
        proj.explained_variance[k] = eig.values[k].max(0.0);
    }
    Ok(proj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            k: 3,
            restarts: 10,
            max_iter: 300,
        }
    }
}

impl KmeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.restarts == 0 || self.max_iter == 0 {
            return Err(Error::Config("k, restarts and max_iter must all be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansPartition {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Index of the winning restart.
    pub restart: usize,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut RandomStream) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.below(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.below(points.len())
        };
        let c = points[pick].clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// One k-means++ seeded Lloyd run.
pub fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut RandomStream) -> KmeansPartition {
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (next, dists): (Vec<usize>, Vec<f64>) = points.iter().map(|p| nearest(p, &centers)).unzip();
        trace.push(dists.iter().sum());
        let stable = next == assignments;
        assignments = next;
        if stable || iterations >= max_iter {
            break;
        }

        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut dists = dists;
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // reseed at the point farthest from its own center
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                centers[c] = points[far].clone();
                dists[far] = 0.0;
            }
        }
    }
    let inertia = *trace.last().unwrap_or(&0.0);
    KmeansPartition {
        centers,
        assignments,
        inertia,
        iterations,
        restart: 0,
        inertia_trace: trace,
    }
}

/// Best of `restarts` seeded Lloyd runs by `(inertia, restart index)`.
/// Restart `r` draws from `rng.substream(r)`, so the result does not depend
/// on how many threads run the restarts.
pub fn kmeans(points: &[Vec<f64>], config: &KmeansConfig, rng: &RandomStream) -> Result<KmeansPartition> {
    config.validate()?;
    if points.len() < config.k {
        return Err(Error::InsufficientData(format!(
            "k-means with k = {} needs at least that many points, got {}",
            config.k,
            points.len()
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("ragged points".into()));
    }
    let runs: Vec<KmeansPartition> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.substream(r as u64);
            let mut part = lloyd(points, config.k, config.max_iter, &mut stream);
            part.restart = r;
            part
        })
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub pd_count: usize,
    pub pd_fraction: f64,
    pub center: Vec<f64>,
    pub distance_to_origin: f64,
}

/// Per-cluster PD composition, ordered by descending PD fraction (cluster
/// index breaks ties).
pub fn figure2_report(partition: &KmeansPartition, pd_labels: &[bool]) -> Result<Vec<ClusterSummary>> {
    if pd_labels.len() != partition.assignments.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} assignments",
            pd_labels.len(),
            partition.assignments.len()
        )));
    }
    let mut out: Vec<ClusterSummary> = partition
        .centers
        .iter()
        .enumerate()
        .map(|(c, center)| {
            let members = partition.assignments.iter().zip(pd_labels).filter(|(&a, _)| a == c);
            let (size, pd_count) = members.fold((0, 0), |(s, p), (_, &l)| (s + 1, p + usize::from(l)));
            ClusterSummary {
                cluster: c,
                size,
                pd_count,
                pd_fraction: if size > 0 { pd_count as f64 / size as f64 } else { 0.0 },
                center: center.clone(),
                distance_to_origin: center.iter().map(|v| v * v).sum::<f64>().sqrt(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.pd_fraction.total_cmp(&a.pd_fraction).then(a.cluster.cmp(&b.cluster)));
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterAnalysis {
    pub pca: PcaProjection,
    pub participant_ids: Vec<String>,
    pub pd_labels: Vec<bool>,
    pub points: Vec<[f64; 2]>,
    pub partition: KmeansPartition,
    pub clusters: Vec<ClusterSummary>,
}

/// PCA → k-means → report on a feature table. The k-means stream derives
/// from the master `seed`.
pub fn cluster_table(table: &FeatureTable, standardize: bool, config: &KmeansConfig, seed: u64) -> Result<ClusterAnalysis> {
    let x = table.matrix();
    let pca = pca_fit(&x, standardize)?;
    let points = pca.project_all(&x);
    let as_vecs: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let rng = RandomStream::new(seed, 0).substream(stream_labels::CLUSTER);
    let partition = kmeans(&as_vecs, config, &rng)?;
    let pd_labels = table.labels();
    let clusters = figure2_report(&partition, &pd_labels)?;
    Ok(ClusterAnalysis {
        pca,
        participant_ids: table.rows.iter().map(|r| r.participant_id.clone()).collect(),
        pd_labels,
        points,
        partition,
        clusters,
    })
}

#[derive(Serialize)]
struct ClustersJson<'a> {
    k: usize,
    standardized: bool,
    inertia: f64,
    restart: usize,
    iterations: usize,
    explained_variance: [f64; 2],
    components: &'a [Vec<f64>; 2],
    clusters: &'a [ClusterSummary],
}

impl ClusterAnalysis {
    pub fn write_points_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["participant_id", "pc1", "pc2", "cluster", "pd_label"])?;
        for i in 0..self.points.len() {
            w.write_record([
                self.participant_ids[i].clone(),
                self.points[i][0].to_string(),
                self.points[i][1].to_string(),
                self.partition.assignments[i].to_string(),
                u8::from(self.pd_labels[i]).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<figure2 points>", e))?;
        Ok(())
    }

    pub fn clusters_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ClustersJson {
            k: self.partition.centers.len(),
            standardized: self.pca.scale.is_some(),
            inertia: self.partition.inertia,
            restart: self.partition.restart,
            iterations: self.partition.iterations,
            explained_variance: self.pca.explained_variance,
            components: &self.pca.components,
            clusters: &self.clusters,
        })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian_rows(rng: &mut RandomStream, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.standard_normal()).collect()).collect()
    }

    #[test]
    fn rank_one_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0, -1.0]).collect();
        let p = pca_fit(&x, false).unwrap();
        assert!((p.components[0][0] - 1.0).abs() < 1e-12);
        assert!(p.components[0][1].abs() < 1e-12 && p.components[0][2].abs() < 1e-12);
        assert!(p.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn mean_projects_to_origin() {
        let mut rng = RandomStream::new(1, 0);
        let x = gaussian_rows(&mut rng, 30, 9);
        for standardize in [false, true] {
            let p = pca_fit(&x, standardize).unwrap();
            let m = p.project(&p.mean);
            assert!(m[0].abs() < 1e-12 && m[1].abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_ratio() {
        let mut rng = RandomStream::new(2, 0);
        let x = gaussian_rows(&mut rng, 5000, 9);
        let p = pca_fit(&x, false).unwrap();
        let r = p.explained_variance[0] / p.explained_variance[1];
        assert!((0.9..=1.15).contains(&r), "{r}");
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(pca_fit(&[vec![0.0, 1.0], vec![1.0, 0.0]], false), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn components_orthonormal_and_signed() {
        let mut rng = RandomStream::new(3, 0);
        let x = gaussian_rows(&mut rng, 50, 9);
        let p = pca_fit(&x, true).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(&p.components[0], &p.components[0]) - 1.0).abs() < 1e-10);
        assert!((dot(&p.components[1], &p.components[1]) - 1.0).abs() < 1e-10);
        assert!(dot(&p.components[0], &p.components[1]).abs() < 1e-10);
        for c in &p.components {
            let lead = c.iter().fold(0.0f64, |m, &a| if a.abs() > m.abs() { a } else { m });
            assert!(lead > 0.0);
        }
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
    }

    /// Sum of squared residuals after projecting centered rows onto the
    /// span of an orthonormal pair.
    fn reconstruction_error(centered: &[Vec<f64>], u: &[f64], v: &[f64]) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        centered
            .iter()
            .map(|r| dot(r, r) - dot(r, u).powi(2) - dot(r, v).powi(2))
            .sum()
    }

    fn random_frame(rng: &mut RandomStream) -> (Vec<f64>, Vec<f64>) {
        let norm = |a: &mut Vec<f64>| {
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            a.iter_mut().for_each(|v| *v /= n);
        };
        let mut u: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
        norm(&mut u);
        let mut v: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
        let proj: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&u).for_each(|(b, a)| *b -= proj * a);
        norm(&mut v);
        (u, v)
    }

    #[test]
    fn kmeans_single_cluster_is_centroid() {
        let mut rng = RandomStream::new(5, 0);
        let pts = gaussian_rows(&mut rng, 40, 2);
        let part = kmeans(&pts, &KmeansConfig { k: 1, ..Default::default() }, &RandomStream::new(5, 1)).unwrap();
        for j in 0..2 {
            let c = pts.iter().map(|p| p[j]).sum::<f64>() / 40.0;
            assert!((part.centers[0][j] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let part = kmeans(&pts, &KmeansConfig { k: 6, ..Default::default() }, &RandomStream::new(6, 0)).unwrap();
        assert_eq!(part.inertia, 0.0);
        let mut a = part.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn kmeans_needs_k_points() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert!(matches!(kmeans(&pts, &KmeansConfig::default(), &RandomStream::new(0, 0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn three_blobs_recovered() {
        let mut rng = RandomStream::new(7, 0);
        let centers = [[0.0, 0.0], [25.0, 0.0], [0.0, 25.0]];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for _ in 0..100 {
                pts.push(vec![c[0] + rng.standard_normal(), c[1] + rng.standard_normal()]);
                truth.push(b);
            }
        }
        let part = kmeans(&pts, &KmeansConfig::default(), &RandomStream::new(7, 1)).unwrap();
        let mut map = [usize::MAX; 3];
        for (&t, &a) in truth.iter().zip(&part.assignments) {
            if map[t] == usize::MAX {
                map[t] = a;
            }
            assert_eq!(map[t], a);
        }
        let mut scatter = 0.0;
        for b in 0..3 {
            let members: Vec<&Vec<f64>> = pts.iter().zip(&truth).filter(|(_, &t)| t == b).map(|(p, _)| p).collect();
            let m: Vec<f64> = (0..2).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
            scatter += members.iter().map(|p| sq_dist(p, &m)).sum::<f64>();
        }
        assert!((part.inertia - scatter).abs() <= 1e-9 * scatter.max(1.0));
    }

    #[test]
    fn kmeans_deterministic_across_pools() {
        let mut rng = RandomStream::new(8, 0);
        let pts = gaussian_rows(&mut rng, 120, 2);
        let base = RandomStream::new(8, 2);
        let a = kmeans(&pts, &KmeansConfig::default(), &base).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| kmeans(&pts, &KmeansConfig::default(), &base)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_fractions() {
        let part = KmeansPartition {
            centers: vec![vec![3.0, 4.0], vec![0.0, 0.0]],
            assignments: vec![0, 0, 0, 0, 1, 1],
            inertia: 0.0,
            iterations: 1,
            restart: 0,
            inertia_trace: vec![0.0],
        };
        let rep = figure2_report(&part, &[true, false, false, false, true, true]).unwrap();
        assert_eq!(rep[0].cluster, 1);
        assert_eq!(rep[0].pd_fraction, 1.0);
        assert_eq!(rep[1].pd_fraction, 0.25);
        assert_eq!(rep[1].distance_to_origin, 5.0);

        let all = figure2_report(&part, &[true; 6]).unwrap();
        assert!(all.iter().all(|c| c.pd_fraction == 1.0));
    }

    proptest! {
        #[test]
        fn pca_beats_random_frames(seed in any::<u64>(), n in 3usize..=20) {
            let mut rng = RandomStream::new(seed, 9);
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.standard_normal() * 3.0, rng.standard_normal(), rng.standard_normal() * 0.5]).collect();
            let p = pca_fit(&x, false).unwrap();
            let centered: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&p.mean).map(|(a, m)| a - m).collect()).collect();
            let best = reconstruction_error(&centered, &p.components[0], &p.components[1]);
            for _ in 0..200 {
                let (u, v) = random_frame(&mut rng);
                prop_assert!(reconstruction_error(&centered, &u, &v) >= best - 1e-6);
            }
        }

        #[test]
        fn projection_isometry(seed in any::<u64>()) {
            let mut rng = RandomStream::new(seed, 10);
            let x = gaussian_rows(&mut rng, 12, 5);
            let p = pca_fit(&x, false).unwrap();
            let pts = p.project_all(&x);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            for i in 0..x.len() {
                for j in 0..x.len() {
                    let diff: Vec<f64> = x[i].iter().zip(&x[j]).map(|(a, b)| a - b).collect();
                    let (a, b) = (dot(&diff, &p.components[0]), dot(&diff, &p.components[1]));
                    let planar = (a * a + b * b).sqrt();
                    let projected = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                    prop_assert!((planar - projected).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn lloyd_inertia_non_increasing(seed in any::<u64>(), n in 3usize..80, k in 1usize..6) {
            prop_assume!(k <= n);
            let mut rng = RandomStream::new(seed, 11);
            let pts = gaussian_rows(&mut rng, n, 2);
            let part = lloyd(&pts, k, 300, &mut rng);
            for w in part.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            for (p, &a) in pts.iter().zip(&part.assignments) {
                let (_, d) = nearest(p, &part.centers);
                prop_assert!(sq_dist(p, &part.centers[a]) <= d + 1e-12);
            }
        }
    }
}
