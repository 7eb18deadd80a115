//! Append-only JSON-lines trajectory: one header line, then one line per
//! evaluated candidate.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{OrchestratorError, RunConfig};
use crate::analysis::CandidateRecord;
use crate::space::SearchSpaceDef;

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub config: RunConfig,
    /// The resolved space, so the file is self-describing.
    pub space: SearchSpaceDef,
    pub space_fingerprint: u64,
}

impl RunHeader {
    pub fn new(config: RunConfig, space: SearchSpaceDef) -> Self {
        Self {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            space_fingerprint: space.fingerprint(),
            config,
            space,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RunHeader),
    Record(CandidateRecord),
}

fn storage(path: &Path, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::StorageFailure(format!("{}: {e}", path.display()))
}

fn line_of(l: &Line) -> String {
    serde_json::to_string(l).expect("trajectory line serializes")
}

/// A header plus its records, as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: RunHeader,
    pub records: Vec<CandidateRecord>,
}

impl Trajectory {
    pub fn read(path: &Path) -> Result<Self, OrchestratorError> {
        let file = File::open(path).map_err(|e| storage(path, e))?;
        let mut header = None;
        let mut records = Vec::new();
        let mut last_gen = 0;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| storage(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| storage(path, format!("line {}: {e}", i + 1)))?;
            match (parsed, header.is_some()) {
                (Line::Header(h), false) => {
                    if h.schema_version != TRAJECTORY_SCHEMA_VERSION {
                        return Err(storage(
                            path,
                            format!("unsupported schema version {}", h.schema_version),
                        ));
                    }
                    header = Some(h);
                }
                (Line::Record(r), true) => {
                    if r.generation < last_gen {
                        return Err(storage(
                            path,
                            format!("line {}: generation index decreases", i + 1),
                        ));
                    }
                    last_gen = r.generation;
                    records.push(r);
                }
                (Line::Header(_), true) => {
                    return Err(storage(path, format!("line {}: second header", i + 1)))
                }
                (Line::Record(_), false) => {
                    return Err(storage(path, "first line is not a header"))
                }
            }
        }
        let header = header.ok_or_else(|| storage(path, "empty trajectory"))?;
        Ok(Self { header, records })
    }
}

/// Writer side of a trajectory file.
pub struct TrajectoryStore {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrajectoryStore {
    pub fn create(path: &Path, header: &RunHeader) -> Result<Self, OrchestratorError> {
        let file = File::create(path).map_err(|e| storage(path, e))?;
        let mut s = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        s.write_line(&line_of(&Line::Header(header.clone())))?;
        s.flush()?;
        Ok(s)
    }

    /// Reopens an existing file, dropping any records from generation
    /// `keep_before` onwards.
    pub fn reopen(
        path: &Path,
        keep_before: usize,
    ) -> Result<(Self, Trajectory), OrchestratorError> {
        let mut t = Trajectory::read(path)?;
        t.records.retain(|r| r.generation < keep_before);
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(|e| storage(&tmp, e))?);
            let mut lines = vec![line_of(&Line::Header(t.header.clone()))];
            lines.extend(t.records.iter().map(|r| line_of(&Line::Record(r.clone()))));
            for l in lines {
                writeln!(w, "{l}").map_err(|e| storage(&tmp, e))?;
            }
            w.flush().map_err(|e| storage(&tmp, e))?;
            w.get_ref().sync_all().map_err(|e| storage(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| storage(path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| storage(path, e))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
            },
            t,
        ))
    }

    fn write_line(&mut self, l: &str) -> Result<(), OrchestratorError> {
        writeln!(self.out, "{l}").map_err(|e| storage(&self.path, e))
    }

    /// Appends a generation's records and flushes them to disk.
    pub fn append(&mut self, records: &[CandidateRecord]) -> Result<(), OrchestratorError> {
        for r in records {
            self.write_line(&line_of(&Line::Record(r.clone())))?;
        }
        self.flush()
    }

    fn flush(&mut self) -> Result<(), OrchestratorError> {
        self.out.flush().map_err(|e| storage(&self.path, e))?;
        self.out
            .get_ref()
            .sync_data()
            .map_err(|e| storage(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), OrchestratorError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(|e| storage(&tmp, e))?;
        f.write_all(contents).map_err(|e| storage(&tmp, e))?;
        f.sync_all().map_err(|e| storage(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| storage(path, e))
}
