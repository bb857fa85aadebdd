//! Deterministic numerical primitives shared by the rest of the crate.
//!
//! Everything here is a pure function of its inputs. Matrices are small
//! (order ≤ 10 in this pipeline) and stored densely in row-major order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`), two-pass with the
/// compensating correction term.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "variance needs at least 2 values, got {n}"
        )));
    }
    let m = mean(values);
    let (ss, s) = values.iter().fold((0.0, 0.0), |(ss, s), &v| {
        let d = v - m;
        (ss + d * d, s + d)
    });
    let var = (ss - s * s / n as f64) / (n - 1) as f64;
    Ok(var.max(0.0))
}

pub fn sample_sd(values: &[f64]) -> Result<f64> {
    sample_variance(values).map(f64::sqrt)
}

/// 1-based ranks, ties receive the average of the ranks they span.
pub fn midranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("midranks of empty sequence".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidValue("NaN in rank input".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

/// Sizes of the tie groups in `values` (groups of size 1 included).
pub fn tie_group_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        out.push(j - i);
        i = j;
    }
    out
}

/// Upper tail of the standard normal, `1 - Φ(z)`, accurate far into the tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

/// Substream labels under the master seed, one per consumer.
pub mod stream_labels {
    pub const SYNTH_FEATURES: u64 = 1;
    pub const SYNTH_RECORDINGS: u64 = 2;
    pub const CLASSIFY: u64 = 3;
    pub const CLUSTER: u64 = 4;
}

/// Per-column z-scoring. Means and sample SDs are fitted on one data set and
/// applied to others; a constant column keeps SD 1 so it maps to zero.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Standardizer> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardization needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let mut means = Vec::with_capacity(d);
        let mut sds = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            means.push(mean(&col));
            let sd = sample_sd(&col)?;
            sds.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Ok(Standardizer { means, sds })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Seeded ChaCha8 stream. `(seed, stream_id)` fully determines the output
/// sequence on every platform; substreams never share state with the parent.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream labelled by `label` under this one. Depends only on
    /// `(seed, stream_id, label)`, never on how much of `self` was consumed.
    pub fn substream(&self, label: u64) -> RandomStream {
        RandomStream::new(self.seed, splitmix(self.stream_id ^ splitmix(label)))
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // reject the top partial block to avoid modulo bias
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw (Box–Muller, one value per call).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn new(order: usize, entries: Vec<f64>) -> Result<Self> {
        if order == 0 || entries.len() != order * order {
            return Err(Error::Shape(format!(
                "expected {order}x{order} entries, got {}",
                entries.len()
            )));
        }
        for i in 0..order {
            for j in 0..i {
                if entries[i * order + j] != entries[j * order + i] {
                    return Err(Error::InvalidValue(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymmetricMatrix { order, entries })
    }

    /// Builds from the lower triangle given by `f(i, j)` with `j <= i`.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; order * order];
        for i in 0..order {
            for j in 0..=i {
                let v = f(i, j);
                entries[i * order + j] = v;
                entries[j * order + i] = v;
            }
        }
        SymmetricMatrix { order, entries }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_fn(order, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Eigenpairs sorted by descending eigenvalue. `vectors` is row-major
/// `order x order` with eigenvector `k` in column `k`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub order: usize,
    pub sweeps: usize,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.order)
            .map(|i| self.vectors[i * self.order + k])
            .collect()
    }

    /// `max_k ‖m·v_k − λ_k·v_k‖₂`
    pub fn residual(&self, m: &SymmetricMatrix) -> f64 {
        let n = self.order;
        (0..n)
            .map(|k| {
                let v = self.vector(k);
                (0..n)
                    .map(|i| {
                        let mv: f64 = (0..n).map(|j| m.get(i, j) * v[j]).sum();
                        let r = mv - self.values[k] * v[i];
                        r * r
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

const JACOBI_TOL: f64 = 1e-11;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
pub fn symmetric_eigen(m: &SymmetricMatrix) -> Result<Eigen> {
    if m.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite matrix entry".into()));
    }
    let n = m.order;
    let mut a = m.entries.clone();
    let mut v = SymmetricMatrix::identity(n).entries;
    let scale = m.frobenius_norm();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS && off(&a) > JACOBI_TOL * scale.max(f64::MIN_POSITIVE) {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = idx.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in idx.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    Ok(Eigen {
        values,
        vectors,
        order: n,
        sweeps,
    })
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// when a pivot is not positive (relative to the diagonal scale).
pub fn cholesky(m: &SymmetricMatrix) -> Option<Vec<f64>> {
    let n = m.order;
    let diag_scale = (0..n).map(|i| m.get(i, i).abs()).fold(0.0, f64::max);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 1e-13 * diag_scale) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[col] = 1.0;
        let x = cholesky_solve(l, &e);
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(values: &[f64]) -> f64 {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
    }

    #[test]
    fn variance_examples() {
        assert_eq!(sample_variance(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(sample_variance(&[0.0, 5.0]).unwrap(), 12.5);
        assert!(matches!(
            sample_variance(&[1.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn midrank_examples() {
        assert_eq!(midranks(&[10.0, 20.0, 30.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            midranks(&[1.0, 2.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(midranks(&[7.0, 7.0, 7.0]).unwrap(), vec![2.0, 2.0, 2.0]);
        assert!(matches!(
            midranks(&[1.0, f64::NAN]),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn eigen_diagonal() {
        let m = SymmetricMatrix::new(2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vector(0)[0].abs(), 1.0);
        assert_eq!(e.vector(1)[1].abs(), 1.0);
    }

    #[test]
    fn eigen_two_by_two() {
        let m = SymmetricMatrix::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        let v1 = e.vector(1);
        assert!((v0[0].abs() - h).abs() < 1e-12 && v0[0] * v0[1] > 0.0);
        assert!((v1[0].abs() - h).abs() < 1e-12 && v1[0] * v1[1] < 0.0);
    }

    #[test]
    fn eigen_identity() {
        let m = SymmetricMatrix::identity(9);
        let e = symmetric_eigen(&m).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
        assert!(e.residual(&m) <= 1e-9);
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let m = SymmetricMatrix::from_fn(2, |i, j| if i == j { f64::INFINITY } else { 0.0 });
        assert!(matches!(symmetric_eigen(&m), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn symmetric_check_is_exact() {
        assert!(SymmetricMatrix::new(2, vec![1.0, 2.0, 2.0 + 1e-15, 1.0]).is_err());
    }

    #[test]
    fn substreams_reproducible_and_distinct() {
        let root = RandomStream::new(42, 0);
        let mut a = root.substream(3);
        let mut b = RandomStream::new(42, 0).substream(3);
        let mut c = root.substream(4);
        let xa: Vec<f64> = (0..16).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..16).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..16).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn substream_ignores_parent_consumption() {
        let mut root = RandomStream::new(7, 1);
        let before = root.substream(9).uniform();
        root.uniform();
        assert_eq!(before, root.substream(9).uniform());
    }

    #[test]
    fn cholesky_inverse() {
        let m = SymmetricMatrix::new(2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&m).unwrap();
        let inv = spd_inverse(&l, 2);
        let expect = [3.0 / 8.0, -2.0 / 8.0, -2.0 / 8.0, 4.0 / 8.0];
        for (a, b) in inv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let singular = SymmetricMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(cholesky(&singular).is_none());
    }

    #[test]
    fn normal_tail() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
        assert!(normal_sf(30.0) > 0.0 && normal_sf(30.0) < 1e-190);
    }

    proptest! {
        #[test]
        fn variance_affine(values in prop::collection::vec(-5.0f64..5.0, 2..40),
                           a in -10.0f64..10.0, b in -100.0f64..100.0) {
            let base = sample_variance(&values).unwrap();
            let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let got = sample_variance(&moved).unwrap();
            let want = a * a * base;
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0) * (1.0 + b.abs()));
            prop_assert!((base - two_pass(&values)).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn midranks_sum(values in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 1.5, 2.0, 3.0]), 1..50)) {
            let n = values.len() as f64;
            let s: f64 = midranks(&values).unwrap().iter().sum();
            prop_assert_eq!(s, n * (n + 1.0) / 2.0);
        }

        #[test]
        fn eigen_residual_random(order in 1usize..=9, seed in any::<u64>()) {
            let mut rng = RandomStream::new(seed, 0);
            let m = SymmetricMatrix::from_fn(order, |_, _| rng.uniform() * 4.0 - 2.0);
            let e = symmetric_eigen(&m).unwrap();
            prop_assert!(e.residual(&m) <= 1e-9 * m.frobenius_norm().max(1e-300));
            for w in e.values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            for a in 0..order {
                for b in 0..order {
                    let dot: f64 = (0..order).map(|i| e.vectors[i * order + a] * e.vectors[i * order + b]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() <= 1e-10);
                }
            }
        }
    }
}
