//! PD / non-PD classification: z-scoring, SMOTE rebalancing, a kernel SVM,
//! and leave-one-out evaluation.
//!
//! Two evaluation modes exist. `FoldSafe` fits the scaler and SMOTE inside
//! every training fold. `PaperFaithful` oversamples the whole data set first
//! and then runs leave-one-out over the augmented set, synthetic rows
//! included; it leaks information across folds and is kept for comparison.

pub mod metrics;
pub mod smote;
pub mod svm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, roc_auc, Confusion, Metrics};
pub use smote::{smote, smote_balance, SmoteConfig, SyntheticPoint};
pub use svm::{predict, train_svm, Kernel, SvmConfig, SvmModel};

use crate::error::{Error, Result};
use crate::numcore::{mean, sample_variance, stream_labels, RandomStream, Standardizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvMode {
    FoldSafe,
    PaperFaithful,
}

impl CvMode {
    pub fn name(self) -> &'static str {
        match self {
            CvMode::FoldSafe => "fold-safe",
            CvMode::PaperFaithful => "paper-faithful",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kernel: KernelChoice,
    /// RBF width; `None` means `1 / (d · mean feature variance)` of the
    /// training matrix the SVM sees.
    pub gamma: Option<f64>,
    pub c: f64,
    pub tol: f64,
    pub smote_k: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel: KernelChoice::Rbf,
            gamma: None,
            c: 1.0,
            tol: 1e-3,
            smote_k: 5,
            standardize: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if self.smote_k < 1 {
            return Err(Error::Config("SMOTE k must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted scaler + SVM, ready to score raw feature rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub standardizer: Option<Standardizer>,
    pub model: SvmModel,
    pub gamma: Option<f64>,
    pub synthetic_count: usize,
}

impl TrainedPipeline {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let z = match &self.standardizer {
            Some(s) => s.transform_row(x),
            None => x.to_vec(),
        };
        predict(&self.model, &z).map(|(_, f)| f)
    }
}

/// Default RBF width: `1 / (d · mean column variance)`.
pub fn default_gamma(rows: &[Vec<f64>]) -> f64 {
    let d = rows.first().map_or(1, Vec::len);
    let vars: Vec<f64> = (0..d)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            sample_variance(&col).unwrap_or(0.0)
        })
        .collect();
    let mv = mean(&vars);
    if mv > 0.0 {
        1.0 / (d as f64 * mv)
    } else {
        1.0
    }
}

fn class_counts(y: &[bool]) -> (usize, usize) {
    let pos = y.iter().filter(|&&l| l).count();
    (pos, y.len() - pos)
}

/// Fits the scaler on `x`, optionally oversamples the smaller class up to the
/// larger one, and trains the SVM (PD = +1).
pub fn fit_pipeline(x: &[Vec<f64>], y: &[bool], config: &PipelineConfig, resample: bool, rng: &mut RandomStream) -> Result<TrainedPipeline> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let standardizer = if config.standardize {
        Some(Standardizer::fit(x)?)
    } else {
        None
    };
    let mut rows = match &standardizer {
        Some(s) => s.transform(x),
        None => x.to_vec(),
    };
    let mut labels = y.to_vec();

    let mut synthetic_count = 0;
    if resample {
        let (pos, neg) = class_counts(y);
        if pos != neg {
            let minority_label = pos < neg;
            let minority: Vec<Vec<f64>> = rows
                .iter()
                .zip(y)
                .filter(|(_, &l)| l == minority_label)
                .map(|(r, _)| r.clone())
                .collect();
            let synth = smote_balance(&minority, pos.max(neg), &SmoteConfig { k_neighbors: config.smote_k }, rng)?;
            synthetic_count = synth.len();
            for s in synth {
                rows.push(s.point);
                labels.push(minority_label);
            }
        }
    }

    let kernel = match config.kernel {
        KernelChoice::Linear => Kernel::Linear,
        KernelChoice::Rbf => Kernel::Rbf {
            gamma: config.gamma.unwrap_or_else(|| default_gamma(&rows)),
        },
    };
    let signed: Vec<i8> = labels.iter().map(|&l| if l { 1 } else { -1 }).collect();
    let model = train_svm(
        &rows,
        &signed,
        &SvmConfig {
            kernel,
            c: config.c,
            tol: config.tol,
            ..SvmConfig::default()
        },
    )?;
    Ok(TrainedPipeline {
        standardizer,
        model,
        gamma: match kernel {
            Kernel::Rbf { gamma } => Some(gamma),
            Kernel::Linear => None,
        },
        synthetic_count,
    })
}

/// Random stream for leave-one-out fold `fold`; depends only on the master
/// seed and the fold index.
pub fn fold_rng(seed: u64, fold: usize) -> RandomStream {
    RandomStream::new(seed, 0)
        .substream(stream_labels::CLASSIFY)
        .substream(fold as u64)
}

fn oversample_rng(seed: u64) -> RandomStream {
    RandomStream::new(seed, 0)
        .substream(stream_labels::CLASSIFY)
        .substream(u64::MAX)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub index: usize,
    pub id: String,
    pub label: bool,
    pub decision_value: f64,
    pub predicted: bool,
    pub synthetic: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub mode: CvMode,
    /// Metrics over every scored row (synthetic rows included in
    /// paper-faithful mode).
    pub metrics: Metrics,
    /// Paper-faithful mode only: metrics over the original rows.
    pub metrics_original_rows: Option<Metrics>,
    pub synthetic_rows: usize,
    pub folds: Vec<FoldRecord>,
}

/// Leave-one-out evaluation with pooled decision values.
pub fn loocv_evaluate(x: &[Vec<f64>], y: &[bool], ids: &[String], config: &PipelineConfig, mode: CvMode) -> Result<CvReport> {
    config.validate()?;
    if x.len() != y.len() || x.len() != ids.len() {
        return Err(Error::Shape(format!(
            "{} rows, {} labels, {} ids",
            x.len(),
            y.len(),
            ids.len()
        )));
    }
    let (pos, neg) = class_counts(y);
    if pos < 2 || neg < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-out needs at least 2 samples per class (PD {pos}, non-PD {neg})"
        )));
    }

    let (rows, labels, row_ids, synthetic, resample) = match mode {
        CvMode::FoldSafe => (x.to_vec(), y.to_vec(), ids.to_vec(), vec![false; x.len()], true),
        CvMode::PaperFaithful => {
            let (rows, labels, synth_ids) = oversample_everything(x, y, config)?;
            let n_synth = rows.len() - x.len();
            let mut synthetic = vec![false; x.len()];
            synthetic.extend(std::iter::repeat(true).take(n_synth));
            let mut all_ids = ids.to_vec();
            all_ids.extend(synth_ids);
            (rows, labels, all_ids, synthetic, false)
        }
    };

    let folds: Vec<Result<FoldRecord>> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let (train_x, train_y) = leave_out(&rows, &labels, i);
            let mut rng = fold_rng(config.seed, i);
            let pipeline = fit_pipeline(&train_x, &train_y, config, resample, &mut rng)?;
            let f = pipeline.decision_value(&rows[i])?;
            Ok(FoldRecord {
                index: i,
                id: row_ids[i].clone(),
                label: labels[i],
                decision_value: f,
                predicted: f >= 0.0,
                synthetic: synthetic[i],
                converged: pipeline.model.converged,
            })
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;

    let score = |keep: &dyn Fn(&FoldRecord) -> bool| -> Result<Metrics> {
        let kept: Vec<&FoldRecord> = folds.iter().filter(|f| keep(f)).collect();
        compute_metrics(
            &kept.iter().map(|f| f.label).collect::<Vec<_>>(),
            &kept.iter().map(|f| f.predicted).collect::<Vec<_>>(),
            &kept.iter().map(|f| f.decision_value).collect::<Vec<_>>(),
        )
    };
    let metrics = score(&|_| true)?;
    let metrics_original_rows = match mode {
        CvMode::PaperFaithful => Some(score(&|f| !f.synthetic)?),
        CvMode::FoldSafe => None,
    };
    Ok(CvReport {
        mode,
        metrics,
        metrics_original_rows,
        synthetic_rows: synthetic.iter().filter(|&&s| s).count(),
        folds,
    })
}

pub fn leave_out(x: &[Vec<f64>], y: &[bool], i: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let train_x = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r.clone()).collect();
    let train_y = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &l)| l).collect();
    (train_x, train_y)
}

/// SMOTE over the full data set, done in standardized space (when enabled)
/// and mapped back to raw feature units.
fn oversample_everything(x: &[Vec<f64>], y: &[bool], config: &PipelineConfig) -> Result<(Vec<Vec<f64>>, Vec<bool>, Vec<String>)> {
    let (pos, neg) = class_counts(y);
    let mut rows = x.to_vec();
    let mut labels = y.to_vec();
    let mut ids = Vec::new();
    if pos == neg {
        return Ok((rows, labels, ids));
    }
    let minority_label = pos < neg;
    let scaler = if config.standardize {
        Some(Standardizer::fit(x)?)
    } else {
        None
    };
    let minority: Vec<Vec<f64>> = x
        .iter()
        .zip(y)
        .filter(|(_, &l)| l == minority_label)
        .map(|(r, _)| match &scaler {
            Some(s) => s.transform_row(r),
            None => r.clone(),
        })
        .collect();
    let mut rng = oversample_rng(config.seed);
    let synth = smote_balance(&minority, pos.max(neg), &SmoteConfig { k_neighbors: config.smote_k }, &mut rng)?;
    for (k, s) in synth.into_iter().enumerate() {
        let raw = match &scaler {
            Some(sc) => s
                .point
                .iter()
                .zip(sc.means.iter().zip(&sc.sds))
                .map(|(z, (m, sd))| z * sd + m)
                .collect(),
            None => s.point,
        };
        rows.push(raw);
        labels.push(minority_label);
        ids.push(format!("synthetic-{k}"));
    }
    Ok((rows, labels, ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>, Vec<String>) {
        let mut rng = RandomStream::new(seed, 0);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pd = i % 4 == 0;
            let c = if pd { 4.0 } else { -4.0 };
            x.push(vec![c + 0.3 * rng.standard_normal(), c + 0.3 * rng.standard_normal(), rng.standard_normal()]);
            y.push(pd);
        }
        let ids = (0..n).map(|i| format!("p{i:03}")).collect();
        (x, y, ids)
    }

    #[test]
    fn separated_clusters_score_perfectly() {
        let (x, y, ids) = two_clusters(40, 1);
        for mode in [CvMode::FoldSafe, CvMode::PaperFaithful] {
            let r = loocv_evaluate(&x, &y, &ids, &PipelineConfig::default(), mode).unwrap();
            assert_eq!(r.metrics.accuracy, 1.0, "{mode:?}");
            assert_eq!(r.metrics.f1, Some(1.0));
            assert_eq!(r.metrics.auc, Some(1.0));
        }
    }

    #[test]
    fn paper_faithful_scores_synthetic_rows() {
        let (x, y, ids) = two_clusters(40, 2);
        let r = loocv_evaluate(&x, &y, &ids, &PipelineConfig::default(), CvMode::PaperFaithful).unwrap();
        assert_eq!(r.synthetic_rows, 20);
        assert_eq!(r.folds.len(), 60);
        assert!(r.folds[40..].iter().all(|f| f.synthetic && f.label));
        assert!(r.metrics_original_rows.is_some());
    }

    #[test]
    fn fold_has_no_access_to_held_out_row() {
        let (x, y, _) = two_clusters(30, 3);
        let cfg = PipelineConfig {
            seed: 17,
            ..Default::default()
        };
        let i = 4;
        let (tx, ty) = leave_out(&x, &y, i);
        let a = fit_pipeline(&tx, &ty, &cfg, true, &mut fold_rng(17, i)).unwrap();
        // perturbing the held-out row must not change the fold model
        let mut x2 = x.clone();
        x2[i] = vec![100.0, -100.0, 5.0];
        let (tx2, ty2) = leave_out(&x2, &y, i);
        let b = fit_pipeline(&tx2, &ty2, &cfg, true, &mut fold_rng(17, i)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn needs_two_per_class() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![true, false, false];
        let ids = vec!["a".into(), "b".into(), "c".into()];
        assert!(matches!(
            loocv_evaluate(&x, &y, &ids, &PipelineConfig::default(), CvMode::FoldSafe),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn invalid_config() {
        let cfg = PipelineConfig {
            c: -1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
