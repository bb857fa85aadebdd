//! Deterministic synthetic cohorts calibrated to published group summaries:
//! a feature table, and frame-level AU traces whose gated variances
//! reproduce it.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::features::{ExpressionAuMap, FeatureId, FeatureRow, FeatureTable};
use crate::ingest::{
    write_au_csv, AuId, AuMap, Cohort, Expression, FrameRecord, Manifest, ManifestRecording, Participant,
    VideoRecording, AU_RAW_MAX, AU_RAW_MIN,
};
use crate::numcore::{normal_sf, stream_labels, RandomStream};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTarget {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTarget {
    pub feature: FeatureId,
    pub pd: CellTarget,
    pub nonpd: CellTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_pd: usize,
    pub n_nonpd: usize,
    pub map: ExpressionAuMap,
    /// One entry per mapped feature, in the map's canonical order.
    pub targets: Vec<FeatureTarget>,
    pub fps: f64,
    /// Seconds per recording.
    pub duration: f64,
    pub bumps: usize,
    /// Plateau length of each bump, seconds.
    pub hold: f64,
    /// Raised-cosine rise (and fall) time, seconds.
    pub ramp: f64,
    /// Uniform jitter half-width on each bump centre, seconds.
    pub jitter: f64,
    pub seed: u64,
}

/// Group sizes and per-feature (PD, non-PD) mean and SD of the clinical
/// cohort, in canonical feature order.
pub const REFERENCE_SIZES: (usize, usize) = (61, 543);
pub const REFERENCE_CELLS: [((f64, f64), (f64, f64)); 9] = [
    ((0.15, 0.18), (0.07, 0.12)),
    ((0.17, 0.15), (0.25, 0.25)),
    ((0.21, 0.18), (0.27, 0.24)),
    ((0.19, 0.20), (0.26, 0.31)),
    ((0.19, 0.20), (0.24, 0.27)),
    ((0.04, 0.06), (0.04, 0.07)),
    ((0.28, 0.28), (0.27, 0.32)),
    ((0.15, 0.29), (0.12, 0.18)),
    ((0.31, 0.37), (0.40, 0.43)),
];

impl Default for CohortSpec {
    fn default() -> Self {
        let map = ExpressionAuMap::default();
        let targets = map
            .features()
            .into_iter()
            .zip(REFERENCE_CELLS)
            .map(|(feature, ((pm, ps), (nm, ns)))| FeatureTarget {
                feature,
                pd: CellTarget { mean: pm, sd: ps },
                nonpd: CellTarget { mean: nm, sd: ns },
            })
            .collect();
        CohortSpec {
            n_pd: REFERENCE_SIZES.0,
            n_nonpd: REFERENCE_SIZES.1,
            map,
            targets,
            fps: 30.0,
            duration: 11.0,
            bumps: 3,
            hold: 1.5,
            ramp: 0.4,
            jitter: 0.5,
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn with_seed(seed: u64) -> Self {
        CohortSpec {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_pd == 0 || self.n_nonpd == 0 {
            return bad("both groups need at least one participant".into());
        }
        let features = self.map.features();
        if features.len() != self.targets.len() || features.iter().zip(&self.targets).any(|(f, t)| *f != t.feature) {
            return bad("targets must list the map's features in canonical order".into());
        }
        for t in &self.targets {
            for c in [t.pd, t.nonpd] {
                if !(c.mean.is_finite() && c.mean >= 0.0 && c.sd.is_finite() && c.sd > 0.0) {
                    return bad(format!("{}: need mean >= 0 and sd > 0", t.feature.name()));
                }
            }
        }
        if !(self.fps > 0.0 && self.duration > 0.0 && self.hold >= 0.0 && self.ramp > 0.0 && self.jitter >= 0.0) {
            return bad("fps, duration and ramp must be positive; hold and jitter non-negative".into());
        }
        if self.bumps == 0 {
            return bad("at least one bump per recording".into());
        }
        let width = self.hold + 2.0 * self.ramp;
        let spacing = self.duration / self.bumps as f64;
        if spacing - 2.0 * self.jitter < width + 1.0 / self.fps {
            return bad(format!(
                "{} bumps of {width} s with ±{} s jitter do not fit in {} s",
                self.bumps, self.jitter, self.duration
            ));
        }
        if ((self.duration * self.fps).round() as usize) < 2 {
            return bad("recording shorter than two frames".into());
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_pd + self.n_nonpd
    }
}

/// Inverse Mills ratio `φ(a) / (1 − Φ(a))`, asymptotic far in the tail.
fn mills(a: f64) -> f64 {
    if a > 30.0 {
        a + 1.0 / a - 2.0 / a.powi(3)
    } else {
        let phi = (-0.5 * a * a).exp() / (2.0 * PI).sqrt();
        phi / normal_sf(a)
    }
}

/// Parent normal `(μ, σ)` whose restriction to `x > 0` has mean
/// `target.mean`, with `σ = target.sd`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl TruncatedNormal {
    pub fn calibrate(target: CellTarget) -> Self {
        let sigma = target.sd;
        let mean_of = |mu: f64| mu + sigma * mills(-mu / sigma);
        let mut hi = target.mean;
        let mut lo = target.mean - sigma;
        while mean_of(lo) >= target.mean {
            lo -= 2.0 * (hi - lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_of(mid) < target.mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        TruncatedNormal {
            mu: 0.5 * (lo + hi),
            sigma,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * mills(-self.mu / self.sigma)
    }

    /// Quantile at upper-tail probability `u ∈ (0, 1]` (so `u = 1` is 0).
    pub fn upper_quantile(&self, u: f64) -> f64 {
        let alpha = -self.mu / self.sigma;
        let z = if alpha > 30.0 {
            alpha - u.ln() / alpha
        } else {
            let tail = normal_sf(alpha);
            let std = Normal::new(0.0, 1.0).expect("unit normal");
            -std.inverse_cdf(u * tail)
        };
        (self.mu + self.sigma * z).max(0.0)
    }
}

/// Stratified draws: with a fresh permutation per column, row `i` takes
/// one draw from stratum `perm[i]` of `n` equal-probability strata.
fn stratified(dist: &TruncatedNormal, n: usize, rng: &mut RandomStream) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.below(i + 1));
    }
    perm.into_iter()
        .map(|k| {
            let u = (k as f64 + (1.0 - rng.uniform())) / n as f64;
            dist.upper_quantile(u)
        })
        .collect()
}

pub fn participant_id(index: usize) -> String {
    format!("P{:04}", index + 1)
}

/// Feature table with `n_pd + n_nonpd` rows ordered by participant id.
/// Labels are shuffled over ids; each (group, feature) column is a
/// stratified sample of its zero-truncated normal, independently permuted.
pub fn generate_features(spec: &CohortSpec) -> Result<FeatureTable> {
    spec.validate()?;
    let mut rng = RandomStream::new(spec.seed, 0).substream(stream_labels::SYNTH_FEATURES);
    let n = spec.total();
    let mut labels: Vec<bool> = (0..n).map(|i| i < spec.n_pd).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.below(i + 1));
    }
    let mut pd_cols = Vec::new();
    let mut non_cols = Vec::new();
    for t in &spec.targets {
        pd_cols.push(stratified(&TruncatedNormal::calibrate(t.pd), spec.n_pd, &mut rng));
        non_cols.push(stratified(&TruncatedNormal::calibrate(t.nonpd), spec.n_nonpd, &mut rng));
    }
    let (mut next_pd, mut next_non) = (0, 0);
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, &pd)| {
            let values = if pd {
                next_pd += 1;
                pd_cols.iter().map(|c| c[next_pd - 1]).collect()
            } else {
                next_non += 1;
                non_cols.iter().map(|c| c[next_non - 1]).collect()
            };
            FeatureRow {
                participant_id: participant_id(i),
                pd_label: pd,
                values,
                missing_mask: vec![false; spec.targets.len()],
            }
        })
        .collect();
    Ok(FeatureTable {
        features: spec.map.features(),
        rows,
    })
}

/// Intensity margin kept above zero on active frames.
const FLOOR: f64 = 0.05;
/// Bump value above which a frame counts as active.
const ACTIVE_LEVEL: f64 = 0.3;

fn bump(t: f64, centre: f64, hold: f64, ramp: f64) -> f64 {
    let u = (t - centre).abs() - hold / 2.0;
    if u <= 0.0 {
        1.0
    } else if u < ramp {
        0.5 * (1.0 + (PI * u / ramp).cos())
    } else {
        0.0
    }
}

/// Places `pattern` (over active frames) so its sample variance is
/// `variance`, inside `[FLOOR, AU_RAW_MAX]`. Returns the values and the
/// variance actually achieved.
fn shape_active(pattern: &[f64], variance: f64, rng: &mut RandomStream) -> (Vec<f64>, f64) {
    let n = pattern.len() as f64;
    let m = pattern.iter().sum::<f64>() / n;
    let sd = (pattern.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let z: Vec<f64> = pattern.iter().map(|p| (p - m) / sd).collect();
    let (zmin, zmax) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut scale = variance.sqrt();
    let room = AU_RAW_MAX - FLOOR;
    if scale * (zmax - zmin) > room {
        scale = room / (zmax - zmin);
    }
    let lowest = FLOOR - scale * zmin;
    let highest = AU_RAW_MAX - scale * zmax;
    let level = lowest.max(0.8 + 0.4 * rng.uniform()).min(highest);
    (z.iter().map(|v| level + scale * v).collect(), scale * scale)
}

#[derive(Clone, Debug)]
pub struct SyntheticCohort {
    /// Per-participant targets that the traces reproduce.
    pub features: FeatureTable,
    pub cohort: Cohort,
    pub warnings: Vec<String>,
}

fn synth_recording(
    spec: &CohortSpec,
    id: &str,
    expression: Expression,
    targets: &[(AuId, f64)],
    rng: &mut RandomStream,
    warnings: &mut Vec<String>,
) -> Result<VideoRecording> {
    let frames_n = (spec.duration * spec.fps).round() as usize;
    let ts: Vec<f64> = (0..frames_n).map(|i| i as f64 / spec.fps).collect();
    let spacing = spec.duration / spec.bumps as f64;
    let centres: Vec<f64> = (0..spec.bumps)
        .map(|b| spacing * (b as f64 + 0.5) + spec.jitter * (2.0 * rng.uniform() - 1.0))
        .collect();
    let envelope: Vec<f64> = ts
        .iter()
        .map(|&t| centres.iter().map(|&c| bump(t, c, spec.hold, spec.ramp)).fold(0.0, f64::max))
        .collect();
    let active: Vec<bool> = envelope.iter().map(|&e| e >= ACTIVE_LEVEL).collect();
    let active_idx: Vec<usize> = (0..frames_n).filter(|&i| active[i]).collect();
    // half-sine over each run of active frames: one smooth maximum per event
    let mut hump = Vec::with_capacity(active_idx.len());
    let mut start = 0;
    while start < active_idx.len() {
        let mut end = start + 1;
        while end < active_idx.len() && active_idx[end] == active_idx[end - 1] + 1 {
            end += 1;
        }
        let len = (end - start) as f64;
        hump.extend((0..end - start).map(|k| (PI * (k as f64 + 0.5) / len).sin()));
        start = end;
    }

    let mut per_au: Vec<(AuId, Vec<f64>, bool)> = Vec::new();
    for au in AuId::ALL {
        let quiet: Vec<f64> = (0..frames_n).map(|_| 0.02 + 0.03 * rng.uniform()).collect();
        match targets.iter().find(|(a, _)| *a == au) {
            Some(&(_, variance)) => {
                let pattern: Vec<f64> = hump.iter().map(|&h| h + 0.02 * rng.standard_normal()).collect();
                let (values, achieved) = shape_active(&pattern, variance, rng);
                if achieved < variance * (1.0 - 1e-9) {
                    warnings.push(format!(
                        "{id} {expression} {au}: variance {variance:.4} does not fit in [{AU_RAW_MIN}, {AU_RAW_MAX}], clipped to {achieved:.4}"
                    ));
                }
                let mut series = quiet;
                for (&i, v) in active_idx.iter().zip(values) {
                    series[i] = v;
                }
                per_au.push((au, series, true));
            }
            None => per_au.push((au, quiet, false)),
        }
    }
    let frames = (0..frames_n)
        .map(|i| {
            let mut au_raw = AuMap::new();
            let mut au_active = AuMap::new();
            for (au, series, mapped) in &per_au {
                au_raw.insert(*au, series[i]);
                au_active.insert(*au, *mapped && active[i]);
            }
            FrameRecord {
                frame: i as u64 + 1,
                timestamp: ts[i],
                confidence: 0.98,
                success: true,
                au_raw,
                au_active,
            }
        })
        .collect();
    VideoRecording::new(id, expression, frames)
}

/// Frame-level traces for every (participant, expression). Mapped AUs are
/// active during `bumps` rise–hold–fall events and trace a half-sine over
/// each active run, scaled so the active-frame variance equals the
/// participant's feature value. Unmapped AUs are low noise, never active.
pub fn generate_recordings(spec: &CohortSpec) -> Result<SyntheticCohort> {
    let features = generate_features(spec)?;
    let base = RandomStream::new(spec.seed, 0).substream(stream_labels::SYNTH_RECORDINGS);
    let expressions: Vec<Expression> = spec.map.expressions().collect();
    let per_participant: Vec<Result<(Vec<VideoRecording>, Vec<String>)>> = features
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut rng = base.substream(i as u64);
            let mut warnings = Vec::new();
            let mut recs = Vec::new();
            for &e in &expressions {
                let targets: Vec<(AuId, f64)> = features
                    .features
                    .iter()
                    .zip(&row.values)
                    .filter(|(f, _)| f.expression == e)
                    .map(|(f, &v)| (f.au, v))
                    .collect();
                recs.push(synth_recording(spec, &row.participant_id, e, &targets, &mut rng, &mut warnings)?);
            }
            Ok((recs, warnings))
        })
        .collect();
    let mut recordings = Vec::new();
    let mut warnings = Vec::new();
    for r in per_participant {
        let (recs, w) = r?;
        recordings.extend(recs);
        warnings.extend(w);
    }
    let participants = features
        .rows
        .iter()
        .map(|r| Participant::new(r.participant_id.clone(), r.pd_label))
        .collect();
    Ok(SyntheticCohort {
        cohort: Cohort::new(participants, recordings)?,
        features,
        warnings,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDINGS_DIR: &str = "recordings";
pub const TARGETS_FILE: &str = "target_features.csv";

/// Writes `manifest.json`, one OpenFace-style CSV per recording under
/// `recordings/`, and the generating feature table. Returns the manifest path.
pub fn write_synthetic_cohort(dir: &Path, synthetic: &SyntheticCohort) -> Result<PathBuf> {
    let rec_dir = dir.join(RECORDINGS_DIR);
    std::fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let entries: Vec<ManifestRecording> = synthetic
        .cohort
        .recordings
        .iter()
        .map(|r| ManifestRecording {
            participant_id: r.participant_id.clone(),
            expression: r.expression,
            csv: format!("{RECORDINGS_DIR}/{}_{}.csv", r.participant_id, r.expression.name()),
        })
        .collect();
    synthetic
        .cohort
        .recordings
        .par_iter()
        .zip(&entries)
        .try_for_each(|(r, m)| {
            let path = dir.join(&m.csv);
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_au_csv(file, &r.frames, &AuId::ALL).map_err(|e| Error::in_file(&path, e))
        })?;
    let manifest = Manifest {
        participants: synthetic.cohort.participants.clone(),
        recordings: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let targets = dir.join(TARGETS_FILE);
    let file = std::fs::File::create(&targets).map_err(|e| Error::io(&targets, e))?;
    synthetic.features.write_csv(file)?;
    Ok(path)
}
