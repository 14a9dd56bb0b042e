//! Append-only, crash-tolerant trial log.
//!
//! Every line of the store file is one JSON object carrying a format
//! version `v`. A line is either a study registration (name plus search
//! space) or a trial record. Each append is flushed and synced before the
//! call returns, so a crash can at worst leave a partial final line, which
//! is discarded (and cut from the file) on the next open.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::optimizer::{Params, SearchSpace, TrialMetadata, TrialRecord, TrialState};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: unsupported format version {version}")]
    Version { path: PathBuf, line: usize, version: u32 },
    #[error("study '{0}' is not registered")]
    UnknownStudy(String),
    #[error("study '{0}' is already registered with a different search space")]
    SpaceMismatch(String),
    #[error("trial {trial_id} already exists in study '{study}'")]
    Conflict { study: String, trial_id: u64 },
    #[error("trial parameters do not match study '{study}': {reason}")]
    Params { study: String, reason: String },
    #[error("study '{0}' has no complete trial")]
    Empty(String),
    #[error("record encoding failed: {0}")]
    Encode(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Study { name: String, space: SearchSpace },
    Trial(TrialRecord),
}

#[derive(Deserialize)]
struct Line {
    v: u32,
    #[serde(flatten)]
    entry: Entry,
}

/// Single-writer handle on a store file. Readers may open the same file
/// concurrently; they observe every record synced so far.
#[derive(Debug)]
pub struct StudyStore {
    path: PathBuf,
    file: File,
    spaces: BTreeMap<String, SearchSpace>,
    trials: Vec<TrialRecord>,
    /// `(study, trial_id)` → index into `trials`.
    index: BTreeMap<(String, u64), usize>,
}

impl StudyStore {
    /// Opens (creating if needed) the store at `path`, replaying its log.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StudyError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StudyError::Io { path: path.clone(), source };
        let mut file =
            OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(io_err)?;

        let mut store = Self {
            path: path.clone(),
            file: file.try_clone().map_err(io_err)?,
            spaces: BTreeMap::new(),
            trials: Vec::new(),
            index: BTreeMap::new(),
        };

        file.seek(SeekFrom::Start(0)).map_err(io_err)?;
        let mut reader = BufReader::new(&mut file);
        let mut good_len = 0u64;
        let mut buf = String::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io_err)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = buf.ends_with('\n');
            let text = buf.trim_end();
            if text.is_empty() && complete {
                good_len += n as u64;
                continue;
            }
            // An unterminated last line is a torn write.
            if !complete {
                break;
            }
            match serde_json::from_str::<Line>(text) {
                Ok(line) => {
                    if line.v != FORMAT_VERSION {
                        return Err(StudyError::Version { path, line: line_no, version: line.v });
                    }
                    store.apply(line.entry).map_err(|e| StudyError::Corrupt {
                        path: path.clone(),
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                    good_len += n as u64;
                }
                Err(e) => {
                    // A garbled final line is also a torn write.
                    if reader.fill_buf().map_err(io_err)?.is_empty() {
                        break;
                    }
                    return Err(StudyError::Corrupt { path, line: line_no, reason: e.to_string() });
                }
            }
        }
        drop(reader);
        if file.metadata().map_err(io_err)?.len() != good_len {
            file.set_len(good_len).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn apply(&mut self, entry: Entry) -> Result<(), StudyError> {
        match entry {
            Entry::Study { name, space } => {
                match self.spaces.get(&name) {
                    Some(old) if *old != space => return Err(StudyError::SpaceMismatch(name)),
                    Some(_) => {}
                    None => {
                        self.spaces.insert(name, space);
                    }
                }
                Ok(())
            }
            Entry::Trial(rec) => {
                self.validate(&rec)?;
                self.index.insert((rec.study.clone(), rec.trial_id), self.trials.len());
                self.trials.push(rec);
                Ok(())
            }
        }
    }

    fn validate(&self, rec: &TrialRecord) -> Result<(), StudyError> {
        let space = self.spaces.get(&rec.study).ok_or_else(|| StudyError::UnknownStudy(rec.study.clone()))?;
        if self.index.contains_key(&(rec.study.clone(), rec.trial_id)) {
            return Err(StudyError::Conflict { study: rec.study.clone(), trial_id: rec.trial_id });
        }
        space.check(&rec.params).map_err(|reason| StudyError::Params { study: rec.study.clone(), reason })?;
        if rec.state == TrialState::Complete && !rec.score.is_some_and(f64::is_finite) {
            return Err(StudyError::Params { study: rec.study.clone(), reason: "complete trial without a finite score".into() });
        }
        Ok(())
    }

    fn write(&mut self, entry: &Entry) -> Result<(), StudyError> {
        let line = serde_json::to_string(&LineRef { v: FORMAT_VERSION, entry }).map_err(|e| StudyError::Encode(e.to_string()))?;
        let io_err = |source| StudyError::Io { path: self.path.clone(), source };
        self.file.write_all(format!("{line}\n").as_bytes()).map_err(io_err)?;
        self.file.flush().map_err(io_err)?;
        self.file.sync_data().map_err(io_err)
    }

    /// Registers `name` with its search space. Re-registering the same
    /// space is a no-op; a different space is an error.
    pub fn create_study(&mut self, name: &str, space: &SearchSpace) -> Result<(), StudyError> {
        match self.spaces.get(name) {
            Some(old) if old == space => Ok(()),
            Some(_) => Err(StudyError::SpaceMismatch(name.into())),
            None => {
                let entry = Entry::Study { name: name.into(), space: space.clone() };
                self.write(&entry)?;
                self.apply(entry)
            }
        }
    }

    pub fn space(&self, study: &str) -> Option<&SearchSpace> {
        self.spaces.get(study)
    }

    pub fn studies(&self) -> impl Iterator<Item = &str> {
        self.spaces.keys().map(String::as_str)
    }

    /// Next free id of `study` (one past the largest used).
    pub fn next_trial_id(&self, study: &str) -> u64 {
        self.trials(study).map(|t| t.trial_id + 1).max().unwrap_or(0)
    }

    /// Appends a trial with the next sequential id and returns that id.
    /// Non-finite scores are stored as failed trials.
    pub fn append_trial(&mut self, study: &str, params: Params, score: f64, metadata: TrialMetadata) -> Result<u64, StudyError> {
        let id = self.next_trial_id(study);
        self.insert(TrialRecord::new(study, id, params, score, metadata))?;
        Ok(id)
    }

    /// Appends a failed trial with the next sequential id.
    pub fn append_failed(&mut self, study: &str, params: Params, metadata: TrialMetadata) -> Result<u64, StudyError> {
        let id = self.next_trial_id(study);
        self.insert(TrialRecord::failed(study, id, params, metadata))?;
        Ok(id)
    }

    /// Appends a fully formed record (its id must be unused).
    pub fn insert(&mut self, record: TrialRecord) -> Result<(), StudyError> {
        self.validate(&record)?;
        let entry = Entry::Trial(record);
        self.write(&entry)?;
        self.apply(entry)
    }

    /// All records of all studies in insertion order.
    pub fn records(&self) -> &[TrialRecord] {
        &self.trials
    }

    /// Records of `study` in insertion order.
    pub fn trials<'a>(&'a self, study: &'a str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.trials.iter().filter(move |t| t.study == study)
    }

    pub fn trial(&self, study: &str, trial_id: u64) -> Option<&TrialRecord> {
        self.index.get(&(study.to_owned(), trial_id)).map(|&i| &self.trials[i])
    }

    /// Highest-scoring complete trial; ties go to the lowest id.
    pub fn best_trial(&self, study: &str) -> Result<&TrialRecord, StudyError> {
        if !self.spaces.contains_key(study) {
            return Err(StudyError::UnknownStudy(study.into()));
        }
        best_of(self.trials.iter().filter(|t| t.study == study)).ok_or_else(|| StudyError::Empty(study.into()))
    }

    /// Writes the trials of `study` as CSV: id, state, score, wall time,
    /// seed, then one column per parameter of the study's space (empty for
    /// inactive conditional parameters).
    pub fn export_csv<W: Write>(&self, study: &str, out: W) -> Result<usize, StudyError> {
        let space = self.spaces.get(study).ok_or_else(|| StudyError::UnknownStudy(study.into()))?;
        let io = |e: csv::Error| StudyError::Io { path: self.path.clone(), source: io::Error::other(e) };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trial_id".to_string(), "state".into(), "score".into(), "wall_time_s".into(), "seed".into()];
        header.extend(space.params.iter().map(|p| p.name.clone()));
        w.write_record(&header).map_err(io)?;
        let mut n = 0;
        for t in self.trials(study) {
            let mut row = vec![
                t.trial_id.to_string(),
                t.state.to_string(),
                t.score.map(|s| s.to_string()).unwrap_or_default(),
                t.metadata.wall_time_s.to_string(),
                t.metadata.seed.to_string(),
            ];
            row.extend(space.params.iter().map(|p| t.params.get(&p.name).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&row).map_err(io)?;
            n += 1;
        }
        w.flush().map_err(|e| StudyError::Io { path: self.path.clone(), source: e })?;
        Ok(n)
    }
}

#[derive(Serialize)]
struct LineRef<'a> {
    v: u32,
    #[serde(flatten)]
    entry: &'a Entry,
}

/// Best complete record by score, ties to the lowest trial id.
pub fn best_of<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> Option<&'a TrialRecord> {
    let mut best: Option<(&TrialRecord, f64)> = None;
    for t in trials {
        if let Some(s) = t.complete_score() {
            let better = match best {
                None => true,
                Some((b, bs)) => s > bs || (s == bs && t.trial_id < b.trial_id),
            };
            if better {
                best = Some((t, s));
            }
        }
    }
    best.map(|(t, _)| t)
}
