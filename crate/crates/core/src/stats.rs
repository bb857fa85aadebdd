//! Per-feature group comparison: Mann–Whitney U with Bonferroni adjustment
//! and group means/SDs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureTable};
use crate::numcore::{mean, midranks, normal_cdf, normal_sf, sample_sd, tie_group_sizes};

/// `Auto` enumerates exactly up to this many pooled observations.
pub const EXACT_MAX_TOTAL: usize = 12;
/// Largest pooled size accepted when exact mode is forced.
pub const EXACT_HARD_LIMIT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MwMode {
    Exact,
    NormalApprox,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U for the first sample: `R_a − n_a(n_a+1)/2`.
    pub u: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub p_two_sided: f64,
    /// One-sided p for the alternative "a tends smaller".
    pub p_less: f64,
    /// One-sided p for the alternative "a tends larger".
    pub p_greater: f64,
    pub method: MwMode,
}

impl MannWhitney {
    pub fn u_b(&self) -> f64 {
        (self.n_a * self.n_b) as f64 - self.u
    }
}

// Slack for comparing U values, which are multiples of 0.5.
const U_EPS: f64 = 1e-9;

pub fn mann_whitney_u(a: &[f64], b: &[f64], mode: MwMode) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(format!(
            "Mann-Whitney needs two non-empty samples (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled)?;
    let (n_a, n_b) = (a.len(), b.len());
    let r_a: f64 = ranks[..n_a].iter().sum();
    let u = r_a - (n_a * (n_a + 1)) as f64 / 2.0;

    let method = match mode {
        MwMode::Auto if n_a + n_b <= EXACT_MAX_TOTAL => MwMode::Exact,
        MwMode::Auto => MwMode::NormalApprox,
        MwMode::Exact if n_a + n_b > EXACT_HARD_LIMIT => {
            return Err(Error::Config(format!(
                "exact Mann-Whitney limited to {EXACT_HARD_LIMIT} observations, got {}",
                n_a + n_b
            )))
        }
        m => m,
    };
    let (p_two_sided, p_less, p_greater) = match method {
        MwMode::Exact => exact_p(&ranks, n_a, u),
        _ => normal_p(&pooled, n_a, n_b, u),
    };
    Ok(MannWhitney {
        u,
        n_a,
        n_b,
        p_two_sided,
        p_less,
        p_greater,
        method,
    })
}

/// Permutation distribution of U over all `C(n, n_a)` splits of the pooled
/// midranks, counted by dynamic programming over doubled rank sums.
fn exact_p(ranks: &[f64], n_a: usize, u_obs: f64) -> (f64, f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n_a + 1];
    counts[0][0] = 1.0;
    for (i, &r) in doubled.iter().enumerate() {
        for k in (1..=n_a.min(i + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let n_b = ranks.len() - n_a;
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;
    let mu = (n_a * n_b) as f64 / 2.0;
    let dev_obs = (u_obs - mu).abs();
    let (mut total, mut two, mut less, mut greater) = (0.0, 0.0, 0.0, 0.0);
    for (s, &c) in counts[n_a].iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let u = s as f64 / 2.0 - offset;
        total += c;
        if (u - mu).abs() >= dev_obs - U_EPS {
            two += c;
        }
        if u <= u_obs + U_EPS {
            less += c;
        }
        if u >= u_obs - U_EPS {
            greater += c;
        }
    }
    ((two / total).min(1.0), (less / total).min(1.0), (greater / total).min(1.0))
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_p(pooled: &[f64], n_a: usize, n_b: usize, u: f64) -> (f64, f64, f64) {
    let n = (n_a + n_b) as f64;
    let mu = (n_a * n_b) as f64 / 2.0;
    let ties: f64 = tie_group_sizes(pooled)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return (1.0, 1.0, 1.0);
    }
    let sd = var.sqrt();
    let z_two = ((u - mu).abs() - 0.5).max(0.0) / sd;
    let p_two = (2.0 * normal_sf(z_two)).min(1.0);
    let p_less = normal_cdf((u - mu + 0.5) / sd);
    let p_greater = normal_sf((u - mu - 0.5) / sd);
    (p_two, p_less, p_greater)
}

/// `min(1, m·p)` for each p.
pub fn bonferroni(ps: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < ps.len() || m == 0 {
        return Err(Error::Config(format!(
            "family size {m} smaller than number of p-values {}",
            ps.len()
        )));
    }
    ps.iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((m as f64 * p).min(1.0))
            } else {
                Err(Error::InvalidValue(format!("p-value {p} outside [0, 1]")))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub feature: FeatureId,
    pub pd_n: usize,
    pub nonpd_n: usize,
    pub pd_mean: f64,
    /// `None` when the group has a single member.
    pub pd_sd: Option<f64>,
    pub nonpd_mean: f64,
    pub nonpd_sd: Option<f64>,
    pub u_statistic: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub method: MwMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub family_size: usize,
    pub rows: Vec<GroupSummary>,
}

/// PD vs non-PD comparison of every feature column; the family size for the
/// Bonferroni adjustment is the number of features.
pub fn table2_analysis(table: &FeatureTable) -> Result<Table2> {
    let (pd, nonpd): (Vec<_>, Vec<_>) = table.rows.iter().partition(|r| r.pd_label);
    if pd.is_empty() || nonpd.is_empty() {
        return Err(Error::InsufficientData(format!(
            "group comparison needs both groups (PD {}, non-PD {})",
            pd.len(),
            nonpd.len()
        )));
    }
    let m = table.dimension();
    let mut rows = Vec::with_capacity(m);
    for (j, feature) in table.features.iter().enumerate() {
        let a: Vec<f64> = pd.iter().map(|r| r.values[j]).collect();
        let b: Vec<f64> = nonpd.iter().map(|r| r.values[j]).collect();
        let test = mann_whitney_u(&a, &b, MwMode::Auto)?;
        rows.push(GroupSummary {
            feature: *feature,
            pd_n: a.len(),
            nonpd_n: b.len(),
            pd_mean: mean(&a),
            pd_sd: sample_sd(&a).ok(),
            nonpd_mean: mean(&b),
            nonpd_sd: sample_sd(&b).ok(),
            u_statistic: test.u,
            raw_p: test.p_two_sided,
            adjusted_p: 0.0,
            method: test.method,
        });
    }
    let raw: Vec<f64> = rows.iter().map(|r| r.raw_p).collect();
    for (row, adj) in rows.iter_mut().zip(bonferroni(&raw, m)?) {
        row.adjusted_p = adj;
    }
    Ok(Table2 { family_size: m, rows })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Table2 {
    pub fn row(&self, name: &str) -> Option<&GroupSummary> {
        self.rows.iter().find(|r| r.feature.name() == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "feature",
            "expression",
            "au",
            "pd_n",
            "pd_mean",
            "pd_sd",
            "nonpd_n",
            "nonpd_mean",
            "nonpd_sd",
            "u_statistic",
            "raw_p",
            "adjusted_p",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.feature.name(),
                r.feature.expression.name().to_string(),
                r.feature.au.to_string(),
                r.pd_n.to_string(),
                r.pd_mean.to_string(),
                opt(r.pd_sd),
                r.nonpd_n.to_string(),
                r.nonpd_mean.to_string(),
                opt(r.nonpd_sd),
                r.u_statistic.to_string(),
                r.raw_p.to_string(),
                r.adjusted_p.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<table2 csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ExpressionAuMap, FeatureRow};
    use crate::numcore::RandomStream;
    use proptest::prelude::*;

    #[test]
    fn separated_samples_exact() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], MwMode::Exact).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p_two_sided - 0.1).abs() < 1e-15);
        assert!((r.p_less - 0.05).abs() < 1e-15);
    }

    #[test]
    fn identical_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], MwMode::Auto).unwrap();
        assert_eq!(r.u, 4.5);
        assert!(r.p_two_sided >= 0.99);
    }

    #[test]
    fn large_shift_rejects() {
        let mut rng = RandomStream::new(11, 0);
        let a: Vec<f64> = (0..5000).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..5000).map(|_| 1.0 + rng.standard_normal()).collect();
        let r = mann_whitney_u(&a, &b, MwMode::NormalApprox).unwrap();
        assert!(r.p_two_sided < 1e-10);
    }

    #[test]
    fn empty_sample_errors() {
        assert!(matches!(
            mann_whitney_u(&[], &[1.0], MwMode::Auto),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn all_tied_approx() {
        let r = mann_whitney_u(&[2.0; 10], &[2.0; 10], MwMode::NormalApprox).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
    }

    #[test]
    fn bonferroni_examples() {
        let got = bonferroni(&[0.001], 9).unwrap();
        assert!((got[0] - 0.009).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.2], 9).unwrap(), vec![1.0]);
        assert_eq!(bonferroni(&[0.0, 1.0], 9).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(bonferroni(&[1.2], 9), Err(Error::InvalidValue(_))));
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    fn table(rows: Vec<(bool, Vec<f64>)>) -> FeatureTable {
        FeatureTable {
            features: ExpressionAuMap::default().features(),
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, (l, v))| FeatureRow {
                    participant_id: format!("p{i}"),
                    pd_label: l,
                    missing_mask: vec![false; v.len()],
                    values: v,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_groups_adjust_to_one() {
        let vals = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let mut rows = Vec::new();
        for label in [true, false] {
            for &v in &vals {
                rows.push((label, vec![v; 9]));
            }
        }
        let t = table2_analysis(&table(rows)).unwrap();
        assert_eq!(t.rows.len(), 9);
        assert!(t.rows.iter().all(|r| r.adjusted_p == 1.0));
    }

    #[test]
    fn two_participant_cohort() {
        let t = table2_analysis(&table(vec![(true, vec![0.1; 9]), (false, vec![0.2; 9])])).unwrap();
        let r = &t.rows[0];
        assert_eq!(r.method, MwMode::Exact);
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.raw_p, 1.0);
        assert_eq!(r.pd_sd, None);
        assert_eq!(r.nonpd_sd, None);
    }

    #[test]
    fn one_group_errors() {
        assert!(matches!(
            table2_analysis(&table(vec![(true, vec![0.1; 9]), (true, vec![0.2; 9])])),
            Err(Error::InsufficientData(_))
        ));
    }

    fn small_sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0]), 1..7)
    }

    proptest! {
        #[test]
        fn u_symmetry(a in small_sample(), b in small_sample()) {
            let ab = mann_whitney_u(&a, &b, MwMode::Exact).unwrap();
            let ba = mann_whitney_u(&b, &a, MwMode::Exact).unwrap();
            prop_assert_eq!(ab.u + ba.u, (a.len() * b.len()) as f64);
            prop_assert_eq!(ab.u_b(), ba.u);
            prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_shift(a in small_sample(), b in small_sample(), shift in 0.0f64..3.0) {
            let base = mann_whitney_u(&a, &b, MwMode::Exact).unwrap();
            let moved: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let after = mann_whitney_u(&moved, &b, MwMode::Exact).unwrap();
            prop_assert!(after.p_greater <= base.p_greater + 1e-12);
            prop_assert!(after.p_less >= base.p_less - 1e-12);
        }

        #[test]
        fn increasing_transform_invariant(a in small_sample(), b in small_sample()) {
            let f = |v: &f64| (v * 1.7).exp() + 3.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            let r1 = mann_whitney_u(&a, &b, MwMode::Exact).unwrap();
            let r2 = mann_whitney_u(&ta, &tb, MwMode::Exact).unwrap();
            prop_assert_eq!(r1.u, r2.u);
            prop_assert_eq!(r1.p_two_sided, r2.p_two_sided);
        }

        #[test]
        fn exact_and_normal_agree(n_a in 3usize..=9, seed in any::<u64>()) {
            let mut rng = RandomStream::new(seed, 5);
            let pooled: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
            let (a, b) = pooled.split_at(n_a);
            let e = mann_whitney_u(a, b, MwMode::Exact).unwrap();
            let n = mann_whitney_u(a, b, MwMode::NormalApprox).unwrap();
            prop_assert!((e.p_two_sided - n.p_two_sided).abs() <= 0.05,
                "exact {} approx {}", e.p_two_sided, n.p_two_sided);
        }
    }
}
