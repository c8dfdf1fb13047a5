//! Append-only JSONL session log.
//!
//! One record per line, tagged by `event`. A `schedule` record opens a
//! session; `stimulus_delivered` and `response` records refer to trials of
//! the most recently opened session of the same subject.

use std::io::{self, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lab::{LabError, Trial, TrialSchedule, TrialSession};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogRecord {
    Schedule {
        ts: DateTime<Utc>,
        subject_id: String,
        catalog_id: String,
        pattern_ids: Vec<u32>,
        seed: u64,
        repetitions: u32,
        trials: Vec<Trial>,
    },
    StimulusDelivered {
        ts: DateTime<Utc>,
        subject_id: String,
        trial_id: u32,
        pattern_id: u32,
    },
    Response {
        ts: DateTime<Utc>,
        subject_id: String,
        trial_id: u32,
        answer: u32,
    },
}

impl LogRecord {
    pub fn schedule(session: &TrialSession) -> Self {
        LogRecord::Schedule {
            ts: session.started_at,
            subject_id: session.subject_id.clone(),
            catalog_id: session.catalog_id.clone(),
            pattern_ids: session.pattern_ids.clone(),
            seed: session.schedule.seed,
            repetitions: session.schedule.repetitions,
            trials: session.schedule.trials.clone(),
        }
    }

    pub fn delivered(session: &TrialSession, trial: Trial, ts: DateTime<Utc>) -> Self {
        LogRecord::StimulusDelivered {
            ts,
            subject_id: session.subject_id.clone(),
            trial_id: trial.trial_id,
            pattern_id: trial.pattern_id,
        }
    }

    pub fn response(session: &TrialSession, trial_id: u32, answer: u32, ts: DateTime<Utc>) -> Self {
        LogRecord::Response {
            ts,
            subject_id: session.subject_id.clone(),
            trial_id,
            answer,
        }
    }

    /// Single line, no trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

pub struct LogWriter<W: Write> {
    out: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        LogWriter { out }
    }

    pub fn append(&mut self, record: &LogRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.to_line())?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: no open session for subject {subject_id}")]
    NoSession { line: usize, subject_id: String },
    #[error("line {line}: trial {trial_id} is pattern {expected}, record says {found}")]
    PatternMismatch {
        line: usize,
        trial_id: u32,
        expected: u32,
        found: u32,
    },
    #[error("line {line}: {source}")]
    Lab { line: usize, source: LabError },
}

pub fn parse_records(text: &str) -> Result<Vec<(usize, LogRecord)>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| LogError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Replays a log into sessions, in the order their schedules appear.
pub fn read_sessions(text: &str) -> Result<Vec<TrialSession>, LogError> {
    let mut sessions: Vec<TrialSession> = Vec::new();
    let open = |sessions: &mut Vec<TrialSession>, line: usize, subject: &str| {
        sessions
            .iter()
            .rposition(|s| s.subject_id == subject)
            .ok_or_else(|| LogError::NoSession {
                line,
                subject_id: subject.to_string(),
            })
    };
    for (line, record) in parse_records(text)? {
        match record {
            LogRecord::Schedule {
                ts,
                subject_id,
                catalog_id,
                pattern_ids,
                seed,
                repetitions,
                trials,
            } => {
                let schedule = TrialSchedule {
                    trials,
                    seed,
                    repetitions,
                };
                sessions.push(TrialSession::new(
                    subject_id,
                    catalog_id,
                    pattern_ids,
                    schedule,
                    ts,
                ));
            }
            LogRecord::StimulusDelivered {
                ts,
                subject_id,
                trial_id,
                pattern_id,
            } => {
                let i = open(&mut sessions, line, &subject_id)?;
                let s = &mut sessions[i];
                let expected = s
                    .trial(trial_id)
                    .ok_or(LogError::Lab {
                        line,
                        source: LabError::UnknownTrial(trial_id),
                    })?
                    .pattern_id;
                if expected != pattern_id {
                    return Err(LogError::PatternMismatch {
                        line,
                        trial_id,
                        expected,
                        found: pattern_id,
                    });
                }
                s.mark_delivered(trial_id, ts)
                    .map_err(|source| LogError::Lab { line, source })?;
            }
            LogRecord::Response {
                ts,
                subject_id,
                trial_id,
                answer,
            } => {
                let i = open(&mut sessions, line, &subject_id)?;
                sessions[i]
                    .record_response(trial_id, answer, ts)
                    .map_err(|source| LogError::Lab { line, source })?;
            }
        }
    }
    Ok(sessions)
}

/// Full log text for a session: schedule, then each delivered trial followed
/// by its response when present.
pub fn session_log(session: &TrialSession) -> String {
    let mut out = LogWriter::new(Vec::new());
    let mut push = |r: LogRecord| out.append(&r).expect("writing to memory");
    push(LogRecord::schedule(session));
    for t in &session.schedule.trials {
        if let Some(&ts) = session.delivered.get(&t.trial_id) {
            push(LogRecord::delivered(session, *t, ts));
        }
        if let Some(r) = session.responses.get(&t.trial_id) {
            push(LogRecord::response(session, t.trial_id, r.answer, r.at));
        }
    }
    String::from_utf8(out.into_inner()).expect("records are UTF-8")
}
