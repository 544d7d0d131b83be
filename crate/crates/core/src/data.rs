//! Event files: JSON lines of `{"time", "event", "exogenous"}` records with
//! an optional trailing `{"horizon": T}`. A dataset is a directory holding
//! one such file per sequence.

use std::path::Path;

use ndtt_logic::{parse_ground_atom, GroundAtom, TimeMode};
use serde::{Deserialize, Serialize};

use crate::error::{NdttError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub time: f64,
    pub event: GroundAtom,
    pub exogenous: bool,
}

/// A time-sorted event stream observed on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSequence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("{source_name}:{line}: {message}")]
    Record { source_name: String, line: usize, message: String },
    #[error("{source_name}:{line}: time {time} is earlier than the previous time {previous}")]
    OutOfOrder { source_name: String, line: usize, time: f64, previous: f64 },
    #[error("{source_name}:{line}: two modeled events share time {time}")]
    SimultaneousModeled { source_name: String, line: usize, time: f64 },
    #[error("{source_name}: {message}")]
    Sequence { source_name: String, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    time: Option<f64>,
    event: Option<String>,
    exogenous: Option<bool>,
    horizon: Option<f64>,
}

#[derive(Serialize)]
struct EventRecord<'a> {
    time: f64,
    event: &'a str,
    exogenous: bool,
}

#[derive(Serialize)]
struct HorizonRecord {
    horizon: f64,
}

impl EventSequence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>, horizon: f64) -> Self {
        EventSequence { id: id.into(), tokens, horizon }
    }

    /// Number of modeled (non-exogenous) tokens.
    pub fn num_modeled(&self) -> usize {
        self.tokens.iter().filter(|t| !t.exogenous).count()
    }

    /// Serializes to the event-file format, ending with the horizon record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            let event = t.event.to_string();
            let rec = EventRecord { time: t.time, event: &event, exogenous: t.exogenous };
            out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&HorizonRecord { horizon: self.horizon }).expect("records serialize"));
        out.push('\n');
        out
    }

    /// Checks the time-grid requirements of `mode`. Discrete sequences use
    /// the steps `1..=T` with exactly one modeled token each.
    pub fn check_mode(&self, mode: TimeMode) -> Result<(), DataError> {
        if mode == TimeMode::Continuous {
            return Ok(());
        }
        let fail = |message: String| DataError::Sequence { source_name: self.id.clone(), message };
        let mut expected = 1u64;
        for t in &self.tokens {
            if t.time == 0.0 && t.exogenous {
                continue;
            }
            if t.time.fract() != 0.0 || t.time < 1.0 {
                return Err(fail(format!("discrete time {} is not a positive integer step", t.time)));
            }
            let step = t.time as u64;
            if !t.exogenous {
                if step != expected {
                    return Err(fail(format!("expected a modeled event at step {expected}, found step {step}")));
                }
                expected += 1;
            } else if step > expected {
                return Err(fail(format!("exogenous event at step {step} precedes the modeled event of step {expected}")));
            }
        }
        let steps = expected - 1;
        if self.horizon != steps as f64 {
            return Err(fail(format!("discrete horizon {} does not match {steps} steps", self.horizon)));
        }
        Ok(())
    }
}

/// Parses one event file. `source_name` labels errors and becomes the id.
pub fn parse_events(text: &str, source_name: &str) -> Result<EventSequence, DataError> {
    let err = |line: usize, message: String| DataError::Record { source_name: source_name.to_string(), line, message };
    let mut tokens: Vec<Token> = Vec::new();
    let mut horizon = None;
    let mut group_modeled = false;
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        if horizon.is_some() {
            return Err(err(line, "records after the horizon record".into()));
        }
        let rec: RawRecord = serde_json::from_str(raw_line).map_err(|e| err(line, e.to_string()))?;
        match rec {
            RawRecord { horizon: Some(h), time: None, event: None, exogenous: None } => {
                if !h.is_finite() || h < 0.0 {
                    return Err(err(line, format!("horizon {h} must be finite and non-negative")));
                }
                horizon = Some(h);
            }
            RawRecord { horizon: None, time: Some(time), event: Some(event), exogenous } => {
                if !time.is_finite() || time < 0.0 {
                    return Err(err(line, format!("time {time} must be finite and non-negative")));
                }
                let atom = parse_ground_atom(&event).map_err(|e| err(line, format!("event `{event}`: {e}")))?;
                let exogenous = exogenous.unwrap_or(false);
                match tokens.last() {
                    Some(prev) if time < prev.time => {
                        return Err(DataError::OutOfOrder {
                            source_name: source_name.to_string(),
                            line,
                            time,
                            previous: prev.time,
                        })
                    }
                    Some(prev) if time == prev.time => {
                        if !exogenous && group_modeled {
                            return Err(DataError::SimultaneousModeled {
                                source_name: source_name.to_string(),
                                line,
                                time,
                            });
                        }
                        group_modeled |= !exogenous;
                    }
                    _ => group_modeled = !exogenous,
                }
                tokens.push(Token { time, event: atom, exogenous });
            }
            _ => return Err(err(line, "expected an event record or a horizon record".into())),
        }
    }
    let last = tokens.last().map_or(0.0, |t| t.time);
    let horizon = horizon.unwrap_or(last);
    if horizon < last {
        return Err(DataError::Sequence {
            source_name: source_name.to_string(),
            message: format!("horizon {horizon} precedes the last event time {last}"),
        });
    }
    Ok(EventSequence { id: source_name.to_string(), tokens, horizon })
}

pub fn read_sequence(path: &Path) -> Result<EventSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| NdttError::io(path, e))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(parse_events(&text, &name)?)
}

/// A directory of `.jsonl` files in file-name order, or a single file.
pub fn read_dataset(path: &Path) -> Result<Vec<EventSequence>> {
    if path.is_file() {
        return Ok(vec![read_sequence(path)?]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| NdttError::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| NdttError::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "jsonl") {
            files.push(p);
        }
    }
    files.sort();
    files.iter().map(|p| read_sequence(p)).collect()
}

/// Writes sequences as `seq_00000.jsonl`, … into `dir`.
pub fn write_dataset(dir: &Path, seqs: &[EventSequence]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| NdttError::io(dir, e))?;
    for (i, s) in seqs.iter().enumerate() {
        let p = dir.join(format!("seq_{i:05}.jsonl"));
        std::fs::write(&p, s.to_jsonl()).map_err(|e| NdttError::io(&p, e))?;
    }
    Ok(())
}
