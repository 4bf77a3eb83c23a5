//! Line-oriented session files: one header line, then one record per session.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use aas_core::kernel::{ChannelState, WEIGHT_TOLERANCE};
use aas_core::SessionSnapshot;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub kind: String,
    pub channels: usize,
    pub ids: Vec<String>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
}

impl SessionHeader {
    pub fn new(ids: Vec<String>, weights: Vec<f64>, epsilon: f64) -> Self {
        Self { kind: "header".into(), channels: ids.len(), ids, weights, epsilon }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.kind != "header" {
            return Err(format!("expected a header line, found kind {:?}", self.kind));
        }
        if self.channels == 0 {
            return Err("header declares no channels".into());
        }
        if self.ids.len() != self.channels || self.weights.len() != self.channels {
            return Err(format!(
                "header declares {} channels but lists {} ids and {} weights",
                self.channels,
                self.ids.len(),
                self.weights.len()
            ));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(format!("weight {w} must be >= 0"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(format!("weight sum {sum} differs from 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(format!("epsilon {} must be > 0", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub t: u64,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Vec<String>>,
}

impl SessionRecord {
    pub fn from_snapshot(snap: &SessionSnapshot) -> Self {
        let meta = snap.metadata();
        Self {
            t: snap.t(),
            x: snap.xs(),
            r: snap.rs(),
            meta: meta.iter().any(|m| !m.is_empty()).then(|| meta.to_vec()),
        }
    }

    fn into_snapshot(self, header: &SessionHeader) -> std::result::Result<SessionSnapshot, String> {
        let m = header.channels;
        if self.x.len() != m || self.r.len() != m {
            return Err(format!("record has {} x and {} r values for {m} channels", self.x.len(), self.r.len()));
        }
        let meta = self.meta.unwrap_or_else(|| vec![String::new(); m]);
        let channels = self
            .x
            .iter()
            .zip(&self.r)
            .map(|(&x, &r)| ChannelState::new(x, r))
            .collect::<aas_core::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        SessionSnapshot::new(self.t, channels, header.weights.clone(), meta).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionFile {
    pub header: SessionHeader,
    pub snapshots: Vec<SessionSnapshot>,
}

/// Streams snapshots out of a session file, checking that `t` strictly increases.
pub struct SessionReader<R> {
    lines: io::Lines<R>,
    source: PathBuf,
    line: usize,
    header: SessionHeader,
    last_t: Option<u64>,
}

impl<R: BufRead> SessionReader<R> {
    pub fn new(reader: R, source: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = reader.lines();
        let source = source.into();
        let mut line = 0;
        let header = loop {
            line += 1;
            match lines.next() {
                None => return Err(CliError::Line { line, message: "missing header line".into() }),
                Some(Err(e)) => return Err(CliError::io(&source, e)),
                Some(Ok(text)) if text.trim().is_empty() => continue,
                Some(Ok(text)) => {
                    let header: SessionHeader = serde_json::from_str(&text)
                        .map_err(|e| CliError::Line { line, message: format!("bad header: {e}") })?;
                    header.validate().map_err(|message| CliError::Line { line, message })?;
                    break header;
                }
            }
        };
        Ok(Self { lines, source, line, header, last_t: None })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }
}

impl<R: BufRead> Iterator for SessionReader<R> {
    type Item = Result<SessionSnapshot>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            let line = self.line;
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => return Some(Err(CliError::io(&self.source, e))),
            };
            if text.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<SessionRecord>(&text)
                .map_err(|e| format!("bad record: {e}"))
                .and_then(|rec| rec.into_snapshot(&self.header))
                .and_then(|snap| match self.last_t {
                    Some(prev) if snap.t() <= prev => Err(format!("t = {} does not follow t = {prev}", snap.t())),
                    _ => Ok(snap),
                });
            return Some(match parsed {
                Ok(snap) => {
                    self.last_t = Some(snap.t());
                    Ok(snap)
                }
                Err(message) => Err(CliError::Line { line, message }),
            });
        }
    }
}

/// Read a whole session file; `-` reads standard input.
pub fn load_sessions(path: &Path) -> Result<SessionFile> {
    if path == Path::new("-") {
        return read_sessions(io::stdin().lock(), path);
    }
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_sessions(BufReader::new(file), path)
}

pub fn read_sessions(reader: impl BufRead, source: &Path) -> Result<SessionFile> {
    let mut r = SessionReader::new(reader, source)?;
    let snapshots = r.by_ref().collect::<Result<Vec<_>>>()?;
    if snapshots.is_empty() {
        return Err(CliError::validation(format!("{}: no session records", source.display())));
    }
    Ok(SessionFile { header: r.header, snapshots })
}

pub fn write_sessions(mut out: impl Write, file: &SessionFile) -> io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(&file.header)?)?;
    for snap in &file.snapshots {
        writeln!(out, "{}", serde_json::to_string(&SessionRecord::from_snapshot(snap))?)?;
    }
    out.flush()
}
