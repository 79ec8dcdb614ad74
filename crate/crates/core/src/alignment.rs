//! Phoneme segment tracks, frame-rate discretization, and the corpus format.
//!
//! Corpus files are JSON lines. The first line is a header carrying the
//! format version, frame rate, AU list and phone alphabet; each following
//! line is one [`FrameSequence`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SIL: &str = "SIL";
pub const CORPUS_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneAlphabet {
    labels: Vec<String>,
}

impl PhoneAlphabet {
    /// `labels` must be unique; SIL is moved to (or inserted at) index 0.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut out = vec![SIL.to_string()];
        for l in labels {
            let l = l.into();
            if l == SIL {
                continue;
            }
            if l.is_empty() || out.contains(&l) {
                return Err(Error::InvalidArgument(format!("duplicate or empty phone label `{l}`")));
            }
            out.push(l);
        }
        Ok(PhoneAlphabet { labels: out })
    }

    /// Takes labels verbatim; SIL must already be at index 0.
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.first().map(String::as_str) != Some(SIL) {
            return Err(Error::InvalidArgument("phone alphabet must start with SIL".into()));
        }
        let alphabet = PhoneAlphabet::new(labels.iter().cloned())?;
        if alphabet.labels.len() != labels.len() {
            return Err(Error::InvalidArgument("SIL listed twice".into()));
        }
        Ok(alphabet)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrack {
    segments: Vec<Segment>,
    total_duration: f64,
}

impl SegmentTrack {
    /// Checks ordering, positivity, non-overlap and the no-repeat rule.
    /// `total_duration` defaults to the end of the last segment.
    pub fn new(segments: Vec<Segment>, total_duration: Option<f64>) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite()) || s.start < 0.0 {
                return Err(Error::InvalidArgument(format!("segment {i}: bad bounds")));
            }
            if s.start >= s.end {
                return Err(Error::InvalidArgument(format!(
                    "segment {i} `{}`: start {} >= end {}",
                    s.label, s.start, s.end
                )));
            }
            if i > 0 {
                let prev = &segments[i - 1];
                if s.start < prev.end {
                    return Err(Error::InvalidArgument(format!(
                        "segment {i} `{}` overlaps or precedes segment {}",
                        s.label,
                        i - 1
                    )));
                }
                if s.label == prev.label {
                    return Err(Error::InvalidArgument(format!(
                        "segment {i}: label `{}` repeats consecutively",
                        s.label
                    )));
                }
            }
        }
        let last_end = segments.last().map_or(0.0, |s| s.end);
        let total_duration = total_duration.unwrap_or(last_end);
        if total_duration < last_end {
            return Err(Error::InvalidArgument("total duration ends before last segment".into()));
        }
        Ok(SegmentTrack {
            segments,
            total_duration,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    /// Label of the segment covering time `t` under half-open `[start, end)`.
    pub fn label_at(&self, t: f64) -> Option<&str> {
        let i = self.segments.partition_point(|s| s.start <= t);
        let seg = self.segments.get(i.checked_sub(1)?)?;
        (t < seg.end && t < self.total_duration).then_some(seg.label.as_str())
    }
}

/// Labels frame `t` with the segment containing its midpoint `(t + 0.5) / fps`.
/// Gaps and times past the track map to SIL.
pub fn discretize(
    track: &SegmentTrack,
    fps: f64,
    frame_count: usize,
    alphabet: &PhoneAlphabet,
) -> Result<Vec<usize>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    if frame_count == 0 {
        return Err(Error::InvalidArgument("frame_count must be at least 1".into()));
    }
    let mut ids = Vec::with_capacity(track.segments.len());
    for s in &track.segments {
        ids.push(
            alphabet
                .index_of(&s.label)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown phone label `{}`", s.label)))?,
        );
    }
    Ok((0..frame_count)
        .map(|t| {
            let mid = (t as f64 + 0.5) / fps;
            let i = track.segments.partition_point(|s| s.start <= mid);
            match i.checked_sub(1) {
                Some(k) if mid < track.segments[k].end && mid < track.total_duration => ids[k],
                _ => 0,
            }
        })
        .collect())
}

/// Parses `label,start_s,end_s` lines; `#` starts a comment.
pub fn parse_segments(text: &str, alphabet: &PhoneAlphabet, origin: &str) -> Result<SegmentTrack> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut segments = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::parse(origin, line, "expected label,start,end"));
        }
        let label = record[0].to_string();
        if alphabet.index_of(&label).is_none() {
            return Err(Error::parse(origin, line, format!("unknown phone label `{label}`")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(origin, line, format!("bad time `{s}`")))
        };
        segments.push(Segment {
            label,
            start: num(&record[1])?,
            end: num(&record[2])?,
        });
        lines.push(line);
    }
    SegmentTrack::new(segments, None).map_err(|e| {
        let line = match &e {
            Error::InvalidArgument(m) => m
                .strip_prefix("segment ")
                .and_then(|r| r.split(|c: char| !c.is_ascii_digit()).next())
                .and_then(|n| n.parse::<usize>().ok())
                .and_then(|i| lines.get(i).copied())
                .unwrap_or(0),
            _ => 0,
        };
        Error::parse(origin, line, e.to_string())
    })
}

pub fn read_segments(path: &Path, alphabet: &PhoneAlphabet) -> Result<SegmentTrack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segments(&text, alphabet, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub au_truth: Vec<u8>,
    pub phone_truth: usize,
    pub au_meas: Vec<Option<u8>>,
    pub phone_meas: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub subject_id: String,
    pub word: String,
    pub fps: f64,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub fps: f64,
    pub aus: Vec<String>,
    pub alphabet: PhoneAlphabet,
    /// Identifier of the random generator that produced the corpus, if any.
    pub rng: Option<String>,
    pub sequences: Vec<FrameSequence>,
}

impl Corpus {
    pub fn empty(fps: f64, aus: Vec<String>, alphabet: PhoneAlphabet) -> Self {
        Corpus {
            fps,
            aus,
            alphabet,
            rng: None,
            sequences: Vec::new(),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }

    /// Subject ids in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.sequences {
            if !out.contains(&s.subject_id) {
                out.push(s.subject_id.clone());
            }
        }
        out
    }

    pub fn has_phone_evidence(&self) -> bool {
        self.sequences
            .iter()
            .flat_map(|s| &s.frames)
            .any(|f| f.phone_meas.is_some())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = Header {
            format_version: CORPUS_FORMAT_VERSION.to_string(),
            fps: self.fps,
            aus: self.aus.clone(),
            alphabet: self.alphabet.labels.clone(),
            rng: self.rng.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?).unwrap();
        for seq in &self.sequences {
            let frames = seq
                .frames
                .iter()
                .map(|f| RawFrame {
                    au_truth: self.aus.iter().cloned().zip(f.au_truth.iter().map(|&v| Value::from(v))).collect(),
                    phone_truth: self.alphabet.label(f.phone_truth).to_string(),
                    au_meas: self
                        .aus
                        .iter()
                        .cloned()
                        .zip(f.au_meas.iter().map(|m| m.map_or(Value::Null, Value::from)))
                        .collect(),
                    phone_meas: f.phone_meas.map(|p| self.alphabet.label(p).to_string()),
                })
                .collect();
            let raw = RawSequence {
                subject_id: seq.subject_id.clone(),
                word: seq.word.clone(),
                frames,
            };
            writeln!(out, "{}", serde_json::to_string(&raw)?).unwrap();
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let Some((hline, htext)) = lines.next() else {
            return Ok(Corpus::empty(60.0, Vec::new(), PhoneAlphabet::new(Vec::<String>::new())?));
        };
        let header: Header =
            serde_json::from_str(htext).map_err(|e| Error::parse(origin, hline, format!("bad header: {e}")))?;
        if header.format_version != CORPUS_FORMAT_VERSION {
            return Err(Error::parse(
                origin,
                hline,
                format!("unsupported format_version `{}`", header.format_version),
            ));
        }
        if !(header.fps > 0.0) {
            return Err(Error::parse(origin, hline, "fps must be positive"));
        }
        let alphabet =
            PhoneAlphabet::from_labels(header.alphabet).map_err(|e| Error::parse(origin, hline, e.to_string()))?;
        let mut corpus = Corpus {
            fps: header.fps,
            aus: header.aus,
            alphabet,
            rng: header.rng,
            sequences: Vec::new(),
        };
        for (line, text) in lines {
            let raw: RawSequence =
                serde_json::from_str(text).map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let seq = corpus
                .convert(raw)
                .map_err(|m| Error::parse(origin, line, m))?;
            corpus.sequences.push(seq);
        }
        Ok(corpus)
    }

    fn convert(&self, raw: RawSequence) -> std::result::Result<FrameSequence, String> {
        let mut frames = Vec::with_capacity(raw.frames.len());
        for (t, f) in raw.frames.into_iter().enumerate() {
            let keys_match = |m: &BTreeMap<String, Value>| {
                m.len() == self.aus.len() && self.aus.iter().all(|a| m.contains_key(a))
            };
            if !keys_match(&f.au_truth) || !keys_match(&f.au_meas) {
                return Err(format!("frame {t}: AU keys differ from header"));
            }
            let bit = |v: &Value, au: &str| -> std::result::Result<u8, String> {
                match v.as_u64() {
                    Some(b @ (0 | 1)) => Ok(b as u8),
                    _ => Err(format!("frame {t}: AU `{au}` value {v} is not 0 or 1")),
                }
            };
            let au_truth = self
                .aus
                .iter()
                .map(|a| bit(&f.au_truth[a], a))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let au_meas = self
                .aus
                .iter()
                .map(|a| match &f.au_meas[a] {
                    Value::Null => Ok(None),
                    v => bit(v, a).map(Some),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let phone = |l: &str| {
                self.alphabet
                    .index_of(l)
                    .ok_or_else(|| format!("frame {t}: unknown phone label `{l}`"))
            };
            frames.push(FrameRecord {
                au_truth,
                phone_truth: phone(&f.phone_truth)?,
                au_meas,
                phone_meas: f.phone_meas.as_deref().map(phone).transpose()?,
            });
        }
        Ok(FrameSequence {
            subject_id: raw.subject_id,
            word: raw.word,
            fps: self.fps,
            frames,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Self::from_jsonl(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl()?.as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: String,
    fps: f64,
    aus: Vec<String>,
    alphabet: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rng: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    au_truth: BTreeMap<String, Value>,
    phone_truth: String,
    au_meas: BTreeMap<String, Value>,
    phone_meas: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    subject_id: String,
    word: String,
    frames: Vec<RawFrame>,
}
