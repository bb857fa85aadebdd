//! Activation-gated AU variance features and the three-peak QC diagnostic.
//!
//! A feature is the sample variance of one AU's intensity taken over the
//! frames where that AU's presence flag is 1. Each expression contributes
//! the three AUs it is associated with, giving nine features per person.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AuId, Cohort, Expression, VideoRecording};
use crate::numcore::sample_variance;

/// Fewest active frames for which the variance is considered defined.
pub const MIN_ACTIVE_FRAMES: usize = 2;

/// Expression → its three associated AUs, in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressionAuMap {
    entries: Vec<(Expression, [AuId; 3])>,
}

impl Default for ExpressionAuMap {
    fn default() -> Self {
        ExpressionAuMap {
            entries: vec![
                (Expression::Smile, [AuId::AU01, AuId::AU06, AuId::AU12]),
                (Expression::Disgust, [AuId::AU04, AuId::AU07, AuId::AU09]),
                (Expression::Surprise, [AuId::AU01, AuId::AU02, AuId::AU04]),
            ],
        }
    }
}

impl ExpressionAuMap {
    pub fn new(entries: Vec<(Expression, [AuId; 3])>) -> Result<Self> {
        for (i, (e, aus)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(o, _)| o == e) {
                return Err(Error::Config(format!("expression {e} listed twice")));
            }
            if aus[0] == aus[1] || aus[0] == aus[2] || aus[1] == aus[2] {
                return Err(Error::Config(format!("expression {e} repeats an AU")));
            }
        }
        Ok(ExpressionAuMap { entries })
    }

    pub fn expressions(&self) -> impl Iterator<Item = Expression> + '_ {
        self.entries.iter().map(|(e, _)| *e)
    }

    pub fn aus(&self, expression: Expression) -> Option<&[AuId; 3]> {
        self.entries.iter().find(|(e, _)| *e == expression).map(|(_, a)| a)
    }

    pub fn is_mapped(&self, expression: Expression, au: AuId) -> bool {
        self.aus(expression).is_some_and(|a| a.contains(&au))
    }

    /// The feature list in canonical order.
    pub fn features(&self) -> Vec<FeatureId> {
        self.entries
            .iter()
            .flat_map(|(e, aus)| aus.iter().map(move |&au| FeatureId { expression: *e, au }))
            .collect()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureId {
    pub expression: Expression,
    pub au: AuId,
}

impl FeatureId {
    /// Column name such as `smile_au01`.
    pub fn name(&self) -> String {
        format!("{}_au{:02}", self.expression.name(), self.au.number())
    }

    pub fn parse(name: &str) -> Result<FeatureId> {
        let bad = || Error::InvalidValue(format!("unrecognised feature column {name:?}"));
        let (expr, au) = name.split_once("_au").ok_or_else(bad)?;
        let expression = Expression::ALL
            .into_iter()
            .find(|e| e.name() == expr)
            .ok_or_else(bad)?;
        let au = AuId::new(au.parse().map_err(|_| bad())?)?;
        Ok(FeatureId { expression, au })
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ActiveVariance {
    pub value: f64,
    pub missing: bool,
    pub active_frames: usize,
}

/// Variance of `au`'s intensity over the frames where `au` is active. Fewer
/// than two active frames yields `value = 0` with `missing = true`.
pub fn active_au_variance(recording: &VideoRecording, au: AuId) -> Result<ActiveVariance> {
    let mut gated = Vec::new();
    for f in &recording.frames {
        let (raw, active) = match (f.au_raw.get(au), f.au_active.get(au)) {
            (Some(r), Some(a)) => (r, a),
            _ => {
                return Err(Error::MissingChannel(format!(
                    "{au} in {} {} frame {}",
                    recording.participant_id, recording.expression, f.frame
                )))
            }
        };
        if active {
            gated.push(raw);
        }
    }
    if gated.len() < MIN_ACTIVE_FRAMES {
        return Ok(ActiveVariance {
            value: 0.0,
            missing: true,
            active_frames: gated.len(),
        });
    }
    Ok(ActiveVariance {
        value: sample_variance(&gated)?,
        missing: false,
        active_frames: gated.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub participant_id: String,
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
}

impl FeatureVector {
    pub fn missing_count(&self) -> usize {
        self.missing_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Extraction {
    Features(FeatureVector),
    /// The participant lacks a recording for these expressions.
    Excluded(Vec<Expression>),
}

/// Builds one participant's feature vector from their recordings.
pub fn build_feature_vector(
    participant_id: &str,
    recordings: &[&VideoRecording],
    map: &ExpressionAuMap,
) -> Result<Extraction> {
    let missing: Vec<Expression> = map
        .expressions()
        .filter(|e| !recordings.iter().any(|r| r.expression == *e))
        .collect();
    if !missing.is_empty() {
        return Ok(Extraction::Excluded(missing));
    }
    let mut values = Vec::with_capacity(9);
    let mut missing_mask = Vec::with_capacity(9);
    for feature in map.features() {
        let rec = recordings
            .iter()
            .find(|r| r.expression == feature.expression)
            .expect("checked above");
        let v = active_au_variance(rec, feature.au)?;
        values.push(v.value);
        missing_mask.push(v.missing);
    }
    Ok(Extraction::Features(FeatureVector {
        participant_id: participant_id.to_string(),
        values,
        missing_mask,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub participant_id: String,
    pub pd_label: bool,
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
}

impl FeatureRow {
    pub fn missing_count(&self) -> usize {
        self.missing_mask.iter().filter(|&&m| m).count()
    }
}

/// Participants' feature vectors with their labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub features: Vec<FeatureId>,
    pub rows: Vec<FeatureRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedParticipant {
    pub participant_id: String,
    pub missing_expressions: Vec<Expression>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtraction {
    pub table: FeatureTable,
    pub excluded: Vec<ExcludedParticipant>,
}

/// Extracts every participant's features (in parallel), ordered by
/// participant id. Participants lacking an expression are excluded and listed.
pub fn extract_features(cohort: &Cohort, map: &ExpressionAuMap) -> Result<FeatureExtraction> {
    let by_participant = cohort.recordings_by_participant();
    let mut ids: Vec<&str> = cohort.participants.iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    let empty = Vec::new();
    let results: Vec<Result<(String, Extraction)>> = ids
        .par_iter()
        .map(|&id| {
            let recs = by_participant.get(id).unwrap_or(&empty);
            Ok((id.to_string(), build_feature_vector(id, recs, map)?))
        })
        .collect();

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        let (id, extraction) = r?;
        match extraction {
            Extraction::Features(fv) => {
                let p = cohort.participant(&id).expect("cohort ids");
                rows.push(FeatureRow {
                    participant_id: fv.participant_id,
                    pd_label: p.pd_label,
                    values: fv.values,
                    missing_mask: fv.missing_mask,
                });
            }
            Extraction::Excluded(missing_expressions) => excluded.push(ExcludedParticipant {
                participant_id: id,
                missing_expressions,
            }),
        }
    }
    Ok(FeatureExtraction {
        table: FeatureTable {
            features: map.features(),
            rows,
        },
        excluded,
    })
}

impl FeatureTable {
    pub fn dimension(&self) -> usize {
        self.features.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.pd_label).collect()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[j]).collect()
    }

    /// Drops rows with any never-active AU.
    pub fn without_missing(&self) -> FeatureTable {
        FeatureTable {
            features: self.features.clone(),
            rows: self.rows.iter().filter(|r| r.missing_count() == 0).cloned().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["participant_id".to_string(), "pd_label".into()];
        header.extend(self.features.iter().map(FeatureId::name));
        header.push("missing_count".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.participant_id.clone(), u8::from(row.pd_label).to_string()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            rec.push(row.missing_count().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<feature csv>", e))?;
        Ok(())
    }

    /// Reads the CSV written by [`FeatureTable::write_csv`]. The per-cell mask
    /// is not stored there; zero-valued cells are marked missing, left to
    /// right, until `missing_count` is reached.
    pub fn read_csv<R: Read>(input: R) -> Result<FeatureTable> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = r.headers()?.clone();
        let n = headers.len();
        if n < 4 || &headers[0] != "participant_id" || &headers[1] != "pd_label" || &headers[n - 1] != "missing_count" {
            return Err(Error::InvalidValue(
                "feature CSV header must be participant_id,pd_label,<features>,missing_count".into(),
            ));
        }
        let features = headers
            .iter()
            .skip(2)
            .take(n - 3)
            .map(FeatureId::parse)
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let row_err = |m: String| Error::Row { line, message: m };
            let pd_label = match &rec[1] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(row_err(format!("pd_label {other:?} is not 0/1"))),
            };
            let values = (2..n - 1)
                .map(|i| {
                    rec[i]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && *v >= 0.0)
                        .ok_or_else(|| row_err(format!("bad feature value {:?}", &rec[i])))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut remaining: usize = rec[n - 1]
                .parse()
                .map_err(|_| row_err(format!("bad missing_count {:?}", &rec[n - 1])))?;
            let missing_mask = values
                .iter()
                .map(|&v| {
                    if v == 0.0 && remaining > 0 {
                        remaining -= 1;
                        true
                    } else {
                        false
                    }
                })
                .collect();
            rows.push(FeatureRow {
                participant_id: rec[0].to_string(),
                pd_label,
                values,
                missing_mask,
            });
        }
        Ok(FeatureTable { features, rows })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Moving-average window, in frames.
    pub window: usize,
    /// Minimum prominence as a fraction of the smoothed series' range.
    pub prominence: f64,
    /// Minimum separation between kept peaks, in seconds.
    pub min_gap: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            window: 5,
            prominence: 0.2,
            min_gap: 1.0,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("peak window must be at least 1 frame".into()));
        }
        if !(self.prominence > 0.0 && self.prominence <= 1.0) {
            return Err(Error::Config(format!(
                "peak prominence fraction {} outside (0, 1]",
                self.prominence
            )));
        }
        if !(self.min_gap >= 0.0) {
            return Err(Error::Config("peak min gap must be non-negative".into()));
        }
        Ok(())
    }
}

/// Centered moving average; the window shrinks at the edges.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let back = window / 2;
    let fwd = (window - 1) / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Interior local maxima; a flat top counts once, at its middle.
fn local_maxima(s: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < s.len() {
        if s[i] > s[i - 1] {
            let mut j = i;
            while j + 1 < s.len() && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < s.len() && s[j + 1] < s[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Height above the higher of the two bases, where each base is the minimum
/// between the peak and the nearest strictly higher sample on that side.
fn prominence(s: &[f64], peak: usize) -> f64 {
    let h = s[peak];
    let mut left_min = h;
    for &v in s[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &s[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSeries {
    pub indices: Vec<usize>,
    pub timestamps: Vec<f64>,
}

impl PeakSeries {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

pub fn detect_peaks(values: &[f64], timestamps: &[f64], config: &PeakConfig) -> Result<PeakSeries> {
    config.validate()?;
    if values.len() != timestamps.len() {
        return Err(Error::Shape(format!(
            "{} values but {} timestamps",
            values.len(),
            timestamps.len()
        )));
    }
    if values.len() < config.window {
        return Err(Error::InsufficientData(format!(
            "series of {} samples shorter than window {}",
            values.len(),
            config.window
        )));
    }
    let s = moving_average(values, config.window);
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(PeakSeries {
            indices: vec![],
            timestamps: vec![],
        });
    }
    let threshold = config.prominence * range;
    let mut candidates: Vec<usize> = local_maxima(&s)
        .into_iter()
        .filter(|&p| prominence(&s, p) >= threshold)
        .collect();
    // highest first, earlier first on ties
    candidates.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|&k| (timestamps[k] - timestamps[c]).abs() >= config.min_gap)
        {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    Ok(PeakSeries {
        timestamps: kept.iter().map(|&i| timestamps[i]).collect(),
        indices: kept,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEntry {
    pub au: AuId,
    pub count: usize,
    pub timestamps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub participant_id: String,
    pub expression: Expression,
    pub entries: Vec<PeakEntry>,
}

/// Peaks for every AU channel present in the recording. Recordings shorter
/// than the window report zero peaks.
pub fn peak_report(recording: &VideoRecording, config: &PeakConfig) -> Result<PeakReport> {
    config.validate()?;
    let ts = recording.timestamps();
    let mut entries = Vec::new();
    for au in AuId::ALL {
        let Some(raw) = recording.raw_series(au) else { continue };
        let peaks = match detect_peaks(&raw, &ts, config) {
            Ok(p) => p,
            Err(Error::InsufficientData(_)) => PeakSeries {
                indices: vec![],
                timestamps: vec![],
            },
            Err(e) => return Err(e),
        };
        entries.push(PeakEntry {
            au,
            count: peaks.count(),
            timestamps: peaks.timestamps,
        });
    }
    Ok(PeakReport {
        participant_id: recording.participant_id.clone(),
        expression: recording.expression,
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcRow {
    pub expression: Expression,
    pub au: AuId,
    pub mapped: bool,
    pub recordings: usize,
    pub three_peak: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcTable {
    pub rows: Vec<QcRow>,
    pub recordings_per_expression: BTreeMap<Expression, usize>,
}

impl QcTable {
    pub fn get(&self, expression: Expression, au: AuId) -> Option<&QcRow> {
        self.rows.iter().find(|r| r.expression == expression && r.au == au)
    }
}

/// Fraction of each expression's recordings in which an AU shows exactly
/// three peaks. Diagnostic only; expressions with no recordings get no rows.
pub fn qc_expression_association(cohort: &Cohort, map: &ExpressionAuMap, config: &PeakConfig) -> Result<QcTable> {
    config.validate()?;
    let reports: Vec<PeakReport> = cohort
        .recordings
        .par_iter()
        .map(|r| peak_report(r, config))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut recordings_per_expression = BTreeMap::new();
    for expression in Expression::ALL {
        let of_expr: Vec<&PeakReport> = reports.iter().filter(|r| r.expression == expression).collect();
        recordings_per_expression.insert(expression, of_expr.len());
        if of_expr.is_empty() {
            continue;
        }
        for au in AuId::ALL {
            let with_channel: Vec<&PeakEntry> = of_expr
                .iter()
                .filter_map(|r| r.entries.iter().find(|e| e.au == au))
                .collect();
            if with_channel.is_empty() {
                continue;
            }
            let three = with_channel.iter().filter(|e| e.count == 3).count();
            rows.push(QcRow {
                expression,
                au,
                mapped: map.is_mapped(expression, au),
                recordings: with_channel.len(),
                three_peak: three,
                fraction: three as f64 / with_channel.len() as f64,
            });
        }
    }
    Ok(QcTable {
        rows,
        recordings_per_expression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AuMap, FrameRecord, Participant};

    pub(crate) fn recording(id: &str, expression: Expression, channels: &[(AuId, Vec<f64>, Vec<bool>)]) -> VideoRecording {
        let n = channels[0].1.len();
        let frames = (0..n)
            .map(|i| {
                let mut au_raw = AuMap::new();
                let mut au_active = AuMap::new();
                for (au, raw, act) in channels {
                    au_raw.insert(*au, raw[i]);
                    au_active.insert(*au, act[i]);
                }
                FrameRecord {
                    frame: i as u64 + 1,
                    timestamp: i as f64 / 30.0,
                    confidence: 1.0,
                    success: true,
                    au_raw,
                    au_active,
                }
            })
            .collect();
        VideoRecording::new(id, expression, frames).unwrap()
    }

    fn one(raw: &[f64], act: &[u8]) -> VideoRecording {
        recording(
            "p",
            Expression::Smile,
            &[(AuId::AU06, raw.to_vec(), act.iter().map(|&a| a == 1).collect())],
        )
    }

    #[test]
    fn gated_variance_examples() {
        let v = active_au_variance(&one(&[0.5, 0.5, 0.5], &[1, 1, 1]), AuId::AU06).unwrap();
        assert_eq!((v.value, v.missing, v.active_frames), (0.0, false, 3));
        let v = active_au_variance(&one(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 1, 0]), AuId::AU06).unwrap();
        assert_eq!((v.value, v.missing, v.active_frames), (1.0, false, 3));
        let v = active_au_variance(&one(&[2.0, 2.0, 2.0], &[0, 0, 0]), AuId::AU06).unwrap();
        assert_eq!((v.value, v.missing, v.active_frames), (0.0, true, 0));
    }

    #[test]
    fn single_active_frame_is_missing() {
        let v = active_au_variance(&one(&[2.0, 3.0], &[0, 1]), AuId::AU06).unwrap();
        assert!(v.missing);
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn absent_channel_errors() {
        let r = one(&[1.0, 2.0], &[1, 1]);
        assert!(matches!(active_au_variance(&r, AuId::AU12), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn default_map_matches_table() {
        let names: Vec<String> = ExpressionAuMap::default().features().iter().map(FeatureId::name).collect();
        assert_eq!(
            names,
            [
                "smile_au01",
                "smile_au06",
                "smile_au12",
                "disgust_au04",
                "disgust_au07",
                "disgust_au09",
                "surprise_au01",
                "surprise_au02",
                "surprise_au04"
            ]
        );
        assert!(ExpressionAuMap::new(vec![(Expression::Smile, [AuId::AU01, AuId::AU01, AuId::AU12])]).is_err());
    }

    fn constant_recording(id: &str, e: Expression, level: f64) -> VideoRecording {
        let channels: Vec<_> = AuId::ALL.iter().map(|&au| (au, vec![level; 40], vec![true; 40])).collect();
        recording(id, e, &channels)
    }

    #[test]
    fn constant_traces_give_zero_vector() {
        let recs: Vec<VideoRecording> = Expression::ALL.iter().map(|&e| constant_recording("p1", e, 1.5)).collect();
        let refs: Vec<&VideoRecording> = recs.iter().collect();
        match build_feature_vector("p1", &refs, &ExpressionAuMap::default()).unwrap() {
            Extraction::Features(fv) => {
                assert_eq!(fv.values, vec![0.0; 9]);
                assert_eq!(fv.missing_mask, vec![false; 9]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_expression_excludes() {
        let mut cohort_recs = vec![
            constant_recording("p1", Expression::Smile, 1.0),
            constant_recording("p1", Expression::Surprise, 1.0),
        ];
        for e in Expression::ALL {
            cohort_recs.push(constant_recording("p2", e, 1.0));
        }
        let cohort = Cohort::new(vec![Participant::new("p1", true), Participant::new("p2", false)], cohort_recs).unwrap();
        let ex = extract_features(&cohort, &ExpressionAuMap::default()).unwrap();
        assert_eq!(ex.table.rows.len(), 1);
        assert_eq!(ex.excluded.len(), 1);
        assert_eq!(ex.excluded[0].missing_expressions, vec![Expression::Disgust]);
    }

    #[test]
    fn feature_csv_round_trip() {
        let table = FeatureTable {
            features: ExpressionAuMap::default().features(),
            rows: vec![
                FeatureRow {
                    participant_id: "a".into(),
                    pd_label: true,
                    values: vec![0.1, 0.0, 0.3, 0.123456789, 0.0, 0.6, 0.7, 0.8, 0.9],
                    missing_mask: vec![false, true, false, false, false, false, false, false, false],
                },
                FeatureRow {
                    participant_id: "b".into(),
                    pd_label: false,
                    values: vec![1.0 / 3.0; 9],
                    missing_mask: vec![false; 9],
                },
            ],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("participant_id,pd_label,smile_au01,smile_au06,smile_au12,disgust_au04,disgust_au07,disgust_au09,surprise_au01,surprise_au02,surprise_au04,missing_count\n"));
        let back = FeatureTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, table);
    }

    fn bumps(centers: &[f64], sigma: f64, duration: f64, fps: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (duration * fps) as usize;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / fps).collect();
        let v = ts
            .iter()
            .map(|t| {
                centers
                    .iter()
                    .map(|c| (-(t - c) * (t - c) / (2.0 * sigma * sigma)).exp())
                    .sum()
            })
            .collect();
        (v, ts)
    }

    #[test]
    fn three_gaussian_bumps() {
        let (v, ts) = bumps(&[2.0, 5.0, 8.0], 0.4, 10.0, 30.0);
        let p = detect_peaks(&v, &ts, &PeakConfig::default()).unwrap();
        assert_eq!(p.count(), 3);
        for (got, want) in p.timestamps.iter().zip([2.0, 5.0, 8.0]) {
            assert!((got - want).abs() <= 1.0 / 30.0 + 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_series_has_no_peaks() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 / 30.0).collect();
        assert_eq!(detect_peaks(&[1.0; 50], &ts, &PeakConfig::default()).unwrap().count(), 0);
    }

    #[test]
    fn ramp_has_single_apex() {
        let n = 61;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / 30.0).collect();
        let v: Vec<f64> = (0..n).map(|i| 30.0 - (i as f64 - 30.0).abs()).collect();
        let p = detect_peaks(&v, &ts, &PeakConfig::default()).unwrap();
        assert_eq!(p.indices, vec![30]);
    }

    #[test]
    fn peaks_thinned_by_gap() {
        let (v, ts) = bumps(&[2.0, 2.6, 6.0], 0.1, 8.0, 30.0);
        let p = detect_peaks(&v, &ts, &PeakConfig::default()).unwrap();
        assert_eq!(p.count(), 2);
        for w in p.timestamps.windows(2) {
            assert!(w[1] - w[0] >= 1.0);
        }
    }

    #[test]
    fn peak_config_errors() {
        let ts = [0.0, 1.0, 2.0];
        let v = [0.0, 1.0, 0.0];
        for cfg in [
            PeakConfig { window: 0, ..Default::default() },
            PeakConfig { prominence: 0.0, ..Default::default() },
            PeakConfig { prominence: 1.5, ..Default::default() },
        ] {
            assert!(matches!(detect_peaks(&v, &ts, &cfg), Err(Error::Config(_))));
        }
        assert!(matches!(
            detect_peaks(&v, &ts, &PeakConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn qc_constant_cohort_all_zero() {
        let recs: Vec<VideoRecording> = Expression::ALL.iter().map(|&e| constant_recording("p1", e, 1.0)).collect();
        let cohort = Cohort::new(vec![Participant::new("p1", true)], recs).unwrap();
        let qc = qc_expression_association(&cohort, &ExpressionAuMap::default(), &PeakConfig::default()).unwrap();
        assert!(!qc.rows.is_empty());
        assert!(qc.rows.iter().all(|r| r.fraction == 0.0));
    }

    #[test]
    fn qc_omits_absent_expression() {
        let recs = vec![constant_recording("p1", Expression::Smile, 1.0)];
        let cohort = Cohort::new(vec![Participant::new("p1", true)], recs).unwrap();
        let qc = qc_expression_association(&cohort, &ExpressionAuMap::default(), &PeakConfig::default()).unwrap();
        assert_eq!(qc.recordings_per_expression[&Expression::Disgust], 0);
        assert!(qc.rows.iter().all(|r| r.expression == Expression::Smile));
    }
}
