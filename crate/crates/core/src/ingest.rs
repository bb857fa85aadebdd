//! OpenFace-format AU CSV parsing and cohort manifests.
//!
//! A recording file carries one row per video frame with the columns
//! `frame`, `timestamp`, `confidence`, `success` and, for every action unit,
//! an intensity column `AUnn_r` (0..5) and a presence column `AUnn_c` (0/1).
//! Expression labels are not part of OpenFace output, so they live in the
//! manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AU_RAW_MIN: f64 = 0.0;
pub const AU_RAW_MAX: f64 = 5.0;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.75;
/// Recordings shorter or longer than this range (seconds) get a warning.
pub const EXPECTED_DURATION: (f64, f64) = (8.0, 16.0);

/// A facial action unit from the set used by the expression map.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AuId(u8);

impl AuId {
    pub const AU01: AuId = AuId(1);
    pub const AU02: AuId = AuId(2);
    pub const AU04: AuId = AuId(4);
    pub const AU06: AuId = AuId(6);
    pub const AU07: AuId = AuId(7);
    pub const AU09: AuId = AuId(9);
    pub const AU12: AuId = AuId(12);

    pub const ALL: [AuId; 7] = [
        AuId::AU01,
        AuId::AU02,
        AuId::AU04,
        AuId::AU06,
        AuId::AU07,
        AuId::AU09,
        AuId::AU12,
    ];

    pub fn new(number: u8) -> Result<AuId> {
        AuId::ALL
            .iter()
            .copied()
            .find(|a| a.0 == number)
            .ok_or_else(|| Error::InvalidValue(format!("AU{number:02} is not a tracked action unit")))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Position in [`AuId::ALL`].
    pub fn index(self) -> usize {
        AuId::ALL.iter().position(|&a| a == self).expect("tracked AU")
    }

    pub fn raw_column(self) -> String {
        format!("AU{:02}_r", self.0)
    }

    pub fn active_column(self) -> String {
        format!("AU{:02}_c", self.0)
    }
}

impl fmt::Display for AuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AU{:02}", self.0)
    }
}

impl TryFrom<u8> for AuId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        AuId::new(v)
    }
}

impl From<AuId> for u8 {
    fn from(a: AuId) -> u8 {
        a.0
    }
}

/// Fixed-slot map keyed by [`AuId`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AuMap<T>([Option<T>; 7]);

impl<T: Copy> AuMap<T> {
    pub fn new() -> Self {
        AuMap([None; 7])
    }

    pub fn get(&self, au: AuId) -> Option<T> {
        self.0[au.index()]
    }

    pub fn insert(&mut self, au: AuId, value: T) {
        self.0[au.index()] = Some(value);
    }

    pub fn contains(&self, au: AuId) -> bool {
        self.0[au.index()].is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AuId, T)> + '_ {
        AuId::ALL
            .iter()
            .zip(self.0.iter())
            .filter_map(|(&a, v)| v.map(|v| (a, v)))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Smile,
    Disgust,
    Surprise,
}

impl Expression {
    pub const ALL: [Expression; 3] = [Expression::Smile, Expression::Disgust, Expression::Surprise];

    pub fn name(self) -> &'static str {
        match self {
            Expression::Smile => "smile",
            Expression::Disgust => "disgust",
            Expression::Surprise => "surprise",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame: u64,
    pub timestamp: f64,
    pub confidence: f64,
    pub success: bool,
    pub au_raw: AuMap<f64>,
    pub au_active: AuMap<bool>,
}

#[derive(Clone, Debug)]
pub struct ParseConfig {
    pub confidence_threshold: f64,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
        }
    }
}

impl ParseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseStats {
    pub rows: usize,
    pub kept: usize,
    pub dropped_unsuccessful: usize,
    pub dropped_low_confidence: usize,
    pub clamped_values: usize,
    pub warnings: Vec<String>,
}

impl ParseStats {
    pub fn dropped(&self) -> usize {
        self.dropped_unsuccessful + self.dropped_low_confidence
    }
}

#[derive(Clone, Debug)]
pub struct ParsedFrames {
    pub frames: Vec<FrameRecord>,
    pub stats: ParseStats,
}

struct Columns {
    frame: usize,
    timestamp: usize,
    confidence: usize,
    success: usize,
    aus: Vec<(AuId, usize, usize)>,
}

fn locate_columns(headers: &csv::StringRecord, required: &[AuId]) -> Result<Columns> {
    let index: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let mut aus = Vec::with_capacity(required.len());
    for &au in required {
        aus.push((au, find(&au.raw_column())?, find(&au.active_column())?));
    }
    Ok(Columns {
        frame: find("frame")?,
        timestamp: find("timestamp")?,
        confidence: find("confidence")?,
        success: find("success")?,
        aus,
    })
}

fn cell<'r>(record: &'r csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<&'r str> {
    record.get(idx).ok_or_else(|| Error::Row {
        line,
        message: format!("missing cell for {name}"),
    })
}

fn number(record: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<f64> {
    let text = cell(record, idx, line, name)?;
    let v: f64 = text.parse().map_err(|_| Error::Row {
        line,
        message: format!("cannot parse {name} value {text:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Row {
            line,
            message: format!("non-finite {name} value {text:?}"),
        });
    }
    Ok(v)
}

fn binary(record: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<bool> {
    let v = number(record, idx, line, name)?;
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::Row {
            line,
            message: format!("{name} must be 0 or 1, got {v}"),
        })
    }
}

/// Parses one OpenFace AU CSV. Rows with `success == 0` or confidence below
/// the threshold are dropped and counted; frames come back sorted by
/// timestamp.
pub fn parse_au_csv<R: Read>(input: R, required: &[AuId], config: &ParseConfig) -> Result<ParsedFrames> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = locate_columns(&headers, required)?;

    let mut stats = ParseStats::default();
    let mut frames = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        stats.rows += 1;

        let frame_text = cell(&record, cols.frame, line, "frame")?;
        let frame: u64 = frame_text
            .parse::<u64>()
            .ok()
            .or_else(|| {
                frame_text
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.fract() == 0.0 && *f >= 0.0)
                    .map(|f| f as u64)
            })
            .filter(|&f| f >= 1)
            .ok_or_else(|| Error::Row {
                line,
                message: format!("frame index {frame_text:?} is not a positive integer"),
            })?;
        let timestamp = number(&record, cols.timestamp, line, "timestamp")?;
        if timestamp < 0.0 {
            return Err(Error::Row {
                line,
                message: format!("negative timestamp {timestamp}"),
            });
        }
        let confidence = number(&record, cols.confidence, line, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Row {
                line,
                message: format!("confidence {confidence} outside [0, 1]"),
            });
        }
        let success = binary(&record, cols.success, line, "success")?;

        let mut au_raw = AuMap::new();
        let mut au_active = AuMap::new();
        let mut clamped = 0;
        for &(au, r_idx, c_idx) in &cols.aus {
            let raw = number(&record, r_idx, line, &au.raw_column())?;
            let active = binary(&record, c_idx, line, &au.active_column())?;
            let clamped_raw = raw.clamp(AU_RAW_MIN, AU_RAW_MAX);
            if clamped_raw != raw {
                clamped += 1;
            }
            au_raw.insert(au, clamped_raw);
            au_active.insert(au, active);
        }

        if !success {
            stats.dropped_unsuccessful += 1;
            continue;
        }
        if confidence < config.confidence_threshold {
            stats.dropped_low_confidence += 1;
            continue;
        }
        stats.clamped_values += clamped;
        frames.push(FrameRecord {
            frame,
            timestamp,
            confidence,
            success,
            au_raw,
            au_active,
        });
    }

    if frames.is_empty() {
        return Err(Error::EmptyRecording(format!(
            "all {} rows dropped or no data rows",
            stats.rows
        )));
    }
    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    if let Some(w) = frames.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::InvalidValue(format!(
            "timestamps not strictly increasing: duplicate {} (frames {} and {})",
            w[0].timestamp, w[0].frame, w[1].frame
        )));
    }
    stats.kept = frames.len();
    if stats.clamped_values > 0 {
        stats.warnings.push(format!(
            "{} AU intensities clamped to [{AU_RAW_MIN}, {AU_RAW_MAX}]",
            stats.clamped_values
        ));
    }
    Ok(ParsedFrames { frames, stats })
}

/// Writes frames in OpenFace column layout (`, ` separated). Only AUs present
/// in every frame are emitted.
pub fn write_au_csv<W: Write>(out: W, frames: &[FrameRecord], aus: &[AuId]) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let mut header = vec!["frame".to_string(), "face_id".into(), "timestamp".into(), "confidence".into(), "success".into()];
    header.extend(aus.iter().map(|a| a.raw_column()));
    header.extend(aus.iter().map(|a| a.active_column()));
    let io = |e| Error::io("<csv output>", e);
    writeln!(w, "{}", header.join(", ")).map_err(io)?;
    for f in frames {
        write!(
            w,
            "{}, 0, {}, {}, {}",
            f.frame,
            f.timestamp,
            f.confidence,
            u8::from(f.success)
        )
        .map_err(io)?;
        for &au in aus {
            let v = f
                .au_raw
                .get(au)
                .ok_or_else(|| Error::MissingChannel(format!("{au} intensity in frame {}", f.frame)))?;
            write!(w, ", {v}").map_err(io)?;
        }
        for &au in aus {
            let v = f
                .au_active
                .get(au)
                .ok_or_else(|| Error::MissingChannel(format!("{au} presence in frame {}", f.frame)))?;
            write!(w, ", {}", u8::from(v)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecording {
    pub participant_id: String,
    pub expression: Expression,
    pub frames: Vec<FrameRecord>,
}

impl VideoRecording {
    /// Sorts frames by timestamp and checks they are strictly increasing.
    pub fn new(participant_id: impl Into<String>, expression: Expression, mut frames: Vec<FrameRecord>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyRecording("recording has no frames".into()));
        }
        frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        if frames.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::InvalidValue("timestamps not strictly increasing".into()));
        }
        Ok(VideoRecording {
            participant_id: participant_id.into(),
            expression,
            frames,
        })
    }

    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }

    /// Mean frame rate implied by the timestamps; `None` for a single frame.
    pub fn fps(&self) -> Option<f64> {
        let d = self.duration();
        (self.frames.len() >= 2 && d > 0.0).then(|| (self.frames.len() - 1) as f64 / d)
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }

    pub fn raw_series(&self, au: AuId) -> Option<Vec<f64>> {
        self.frames.iter().map(|f| f.au_raw.get(au)).collect()
    }

    pub fn active_series(&self, au: AuId) -> Option<Vec<bool>> {
        self.frames.iter().map(|f| f.au_active.get(au)).collect()
    }

    pub fn duration_warning(&self) -> Option<String> {
        let d = self.duration();
        let (lo, hi) = EXPECTED_DURATION;
        (!(lo..=hi).contains(&d)).then(|| {
            format!(
                "{} {} lasts {d:.2} s, outside the expected {lo}-{hi} s",
                self.participant_id, self.expression
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub pd_label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub race: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

impl Participant {
    pub fn new(id: impl Into<String>, pd_label: bool) -> Self {
        Participant {
            id: id.into(),
            pd_label,
            age: None,
            gender: None,
            race: None,
            country: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecording {
    pub participant_id: String,
    pub expression: Expression,
    /// CSV path, relative paths resolve against the manifest's directory.
    pub csv: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub participants: Vec<Participant>,
    pub recordings: Vec<ManifestRecording>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::in_file(path, e.into()))
    }

    /// Participant uniqueness, referential integrity and one recording per
    /// (participant, expression).
    pub fn validate(&self) -> Result<()> {
        let ids = unique_ids(&self.participants)?;
        let mut seen = BTreeSet::new();
        for r in &self.recordings {
            if !ids.contains(r.participant_id.as_str()) {
                return Err(Error::UnknownParticipant(r.participant_id.clone()));
            }
            if !seen.insert((r.participant_id.as_str(), r.expression)) {
                return Err(Error::Conflict(format!(
                    "duplicate {} recording for {}",
                    r.expression, r.participant_id
                )));
            }
        }
        Ok(())
    }
}

fn unique_ids(participants: &[Participant]) -> Result<BTreeSet<&str>> {
    let mut ids = BTreeSet::new();
    for p in participants {
        if !ids.insert(p.id.as_str()) {
            return Err(Error::Conflict(format!("duplicate participant id {}", p.id)));
        }
    }
    Ok(ids)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileStats {
    pub participant_id: String,
    pub expression: Expression,
    pub path: String,
    #[serde(flatten)]
    pub stats: ParseStats,
}

#[derive(Clone, Debug, Default)]
pub struct Cohort {
    pub participants: Vec<Participant>,
    pub recordings: Vec<VideoRecording>,
    pub file_stats: Vec<FileStats>,
}

impl Cohort {
    pub fn new(participants: Vec<Participant>, recordings: Vec<VideoRecording>) -> Result<Cohort> {
        {
            let ids = unique_ids(&participants)?;
            let mut seen = BTreeSet::new();
            for r in &recordings {
                if !ids.contains(r.participant_id.as_str()) {
                    return Err(Error::UnknownParticipant(r.participant_id.clone()));
                }
                if !seen.insert((r.participant_id.as_str(), r.expression)) {
                    return Err(Error::Conflict(format!(
                        "duplicate {} recording for {}",
                        r.expression, r.participant_id
                    )));
                }
            }
        }
        Ok(Cohort {
            participants,
            recordings,
            file_stats: Vec::new(),
        })
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    /// Recordings grouped by participant id.
    pub fn recordings_by_participant(&self) -> BTreeMap<&str, Vec<&VideoRecording>> {
        let mut out: BTreeMap<&str, Vec<&VideoRecording>> = BTreeMap::new();
        for r in &self.recordings {
            out.entry(r.participant_id.as_str()).or_default().push(r);
        }
        out
    }

    pub fn warnings(&self) -> impl Iterator<Item = String> + '_ {
        self.file_stats
            .iter()
            .flat_map(|f| f.stats.warnings.iter().map(move |w| format!("{}: {w}", f.path)))
    }
}

fn resolve(base: &Path, csv: &str) -> PathBuf {
    let p = Path::new(csv);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a manifest and every recording it lists. CSVs are parsed in
/// parallel; results keep manifest order.
pub fn load_cohort(manifest_path: &Path, config: &ParseConfig) -> Result<Cohort> {
    config.validate()?;
    let manifest = Manifest::read(manifest_path)?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let parsed: Vec<Result<(VideoRecording, FileStats)>> = manifest
        .recordings
        .par_iter()
        .map(|entry| {
            let path = resolve(base, &entry.csv);
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let ParsedFrames { frames, mut stats } =
                parse_au_csv(file, &AuId::ALL, config).map_err(|e| Error::in_file(&path, e))?;
            let rec = VideoRecording::new(entry.participant_id.clone(), entry.expression, frames)
                .map_err(|e| Error::in_file(&path, e))?;
            if let Some(w) = rec.duration_warning() {
                stats.warnings.push(w);
            }
            Ok((
                rec,
                FileStats {
                    participant_id: entry.participant_id.clone(),
                    expression: entry.expression,
                    path: entry.csv.clone(),
                    stats,
                },
            ))
        })
        .collect();

    let mut recordings = Vec::with_capacity(parsed.len());
    let mut file_stats = Vec::with_capacity(parsed.len());
    for item in parsed {
        let (rec, stats) = item?;
        recordings.push(rec);
        file_stats.push(stats);
    }
    let mut cohort = Cohort::new(manifest.participants, recordings)?;
    cohort.file_stats = file_stats;
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "frame, face_id, timestamp, confidence, success, AU06_r, AU12_r, AU06_c, AU12_c";

    fn parse(text: &str, aus: &[AuId]) -> Result<ParsedFrames> {
        parse_au_csv(text.as_bytes(), aus, &ParseConfig::default())
    }

    #[test]
    fn maps_fields_directly() {
        let text = format!("{HEADER}\n1, 0, 0.033, 0.98, 1, 2.1, 0.4, 1, 0\n");
        let p = parse(&text, &[AuId::AU06, AuId::AU12]).unwrap();
        assert_eq!(p.frames.len(), 1);
        let f = &p.frames[0];
        assert_eq!(f.frame, 1);
        assert_eq!(f.timestamp, 0.033);
        assert_eq!(f.au_raw.get(AuId::AU06), Some(2.1));
        assert_eq!(f.au_active.get(AuId::AU06), Some(true));
        assert_eq!(f.au_active.get(AuId::AU12), Some(false));
        assert!(!f.au_raw.contains(AuId::AU01));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "frame,timestamp,confidence,success,AU12_r\n1,0,1,1,0.5\n";
        match parse(text, &[AuId::AU12]) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "AU12_c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsuccessful_rows_dropped() {
        let text = format!(
            "{HEADER}\n1, 0, 0.0, 0.98, 1, 1, 1, 1, 1\n2, 0, 0.033, 0.98, 0, 1, 1, 1, 1\n3, 0, 0.066, 0.98, 1, 1, 1, 1, 1\n"
        );
        let p = parse(&text, &[AuId::AU06, AuId::AU12]).unwrap();
        assert_eq!(p.frames.len(), 2);
        assert_eq!(p.stats.dropped(), 1);
        assert_eq!(p.stats.dropped_unsuccessful, 1);
    }

    #[test]
    fn low_confidence_dropped() {
        let text = format!("{HEADER}\n1, 0, 0.0, 0.5, 1, 1, 1, 1, 1\n2, 0, 0.033, 0.9, 1, 1, 1, 1, 1\n");
        let p = parse(&text, &[AuId::AU06]).unwrap();
        assert_eq!(p.frames.len(), 1);
        assert_eq!(p.stats.dropped_low_confidence, 1);
    }

    #[test]
    fn all_dropped_is_empty_recording() {
        let text = format!("{HEADER}\n1, 0, 0.0, 0.98, 0, 1, 1, 1, 1\n");
        assert!(matches!(parse(&text, &[AuId::AU06]), Err(Error::EmptyRecording(_))));
    }

    #[test]
    fn bad_cell_reports_line() {
        let text = format!("{HEADER}\n1, 0, 0.0, 0.98, 1, 1, 1, 1, 1\n2, 0, 0.033, 0.98, 1, abc, 1, 1, 1\n");
        match parse(&text, &[AuId::AU06]) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn presence_must_be_binary() {
        let text = format!("{HEADER}\n1, 0, 0.0, 0.98, 1, 1, 1, 0.5, 1\n");
        assert!(matches!(parse(&text, &[AuId::AU06]), Err(Error::Row { .. })));
    }

    #[test]
    fn out_of_range_intensity_clamped() {
        let text = format!("{HEADER}\n1, 0, 0.0, 0.98, 1, -0.02, 5.3, 1, 1\n");
        let p = parse(&text, &[AuId::AU06, AuId::AU12]).unwrap();
        assert_eq!(p.frames[0].au_raw.get(AuId::AU06), Some(0.0));
        assert_eq!(p.frames[0].au_raw.get(AuId::AU12), Some(5.0));
        assert_eq!(p.stats.clamped_values, 2);
        assert_eq!(p.stats.warnings.len(), 1);
    }

    #[test]
    fn frames_sorted_by_timestamp() {
        let text = format!("{HEADER}\n2, 0, 0.033, 0.98, 1, 2, 1, 1, 1\n1, 0, 0.0, 0.98, 1, 1, 1, 1, 1\n");
        let p = parse(&text, &[AuId::AU06]).unwrap();
        assert_eq!(p.frames[0].frame, 1);
        let dup = format!("{HEADER}\n1, 0, 0.0, 0.98, 1, 2, 1, 1, 1\n2, 0, 0.0, 0.98, 1, 1, 1, 1, 1\n");
        assert!(matches!(parse(&dup, &[AuId::AU06]), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn extra_columns_ignored_and_compact_separator() {
        let text = "frame,timestamp,confidence,success,AU06_r,AU06_c,AU45_r,gaze_0_x\n1,0.5,1,1,3.25,1,9.9,0.1\n";
        let p = parse(text, &[AuId::AU06]).unwrap();
        assert_eq!(p.frames[0].au_raw.get(AuId::AU06), Some(3.25));
    }

    #[test]
    fn manifest_validation() {
        let m = Manifest {
            participants: vec![Participant::new("p1", true)],
            recordings: vec![ManifestRecording {
                participant_id: "p9".into(),
                expression: Expression::Smile,
                csv: "x.csv".into(),
            }],
        };
        match m.validate() {
            Err(Error::UnknownParticipant(id)) => assert_eq!(id, "p9"),
            other => panic!("unexpected {other:?}"),
        }
        let dup = Manifest {
            participants: vec![Participant::new("p1", true)],
            recordings: vec![
                ManifestRecording {
                    participant_id: "p1".into(),
                    expression: Expression::Smile,
                    csv: "a.csv".into(),
                },
                ManifestRecording {
                    participant_id: "p1".into(),
                    expression: Expression::Smile,
                    csv: "b.csv".into(),
                },
            ],
        };
        assert!(matches!(dup.validate(), Err(Error::Conflict(_))));
    }

    #[test]
    fn au_ids() {
        assert_eq!(AuId::new(12).unwrap().raw_column(), "AU12_r");
        assert!(AuId::new(45).is_err());
        assert_eq!(AuId::AU09.to_string(), "AU09");
    }
}
