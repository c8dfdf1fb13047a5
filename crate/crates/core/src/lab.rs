//! Perception experiments: randomized trial schedules, response capture,
//! confusion matrices and recognition rates.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{anova_one_way, AnovaResult, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("catalog has no patterns")]
    EmptyCatalog,
    #[error("repetitions must be >= 1")]
    InvalidRepetitions,
    #[error("pattern id {0} listed twice")]
    DuplicatePattern(u32),
    #[error("no trial with id {0}")]
    UnknownTrial(u32),
    #[error("trial {0} already answered")]
    AlreadyAnswered(u32),
    #[error("answer {0} is not a pattern id of this catalog")]
    InvalidAnswer(u32),
    #[error("session of subject {subject_id} has {missing} unanswered trials")]
    IncompleteSession { subject_id: String, missing: usize },
    #[error("session of subject {subject_id} uses catalog {found}, expected {expected}")]
    CatalogMismatch {
        subject_id: String,
        expected: String,
        found: String,
    },
    #[error("no sessions")]
    NoSessions,
    #[error("pattern {0} was never presented")]
    EmptyRow(u32),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl LabError {
    pub fn name(&self) -> &'static str {
        match self {
            LabError::EmptyCatalog => "EmptyCatalog",
            LabError::InvalidRepetitions => "InvalidRepetitions",
            LabError::DuplicatePattern(_) => "DuplicatePattern",
            LabError::UnknownTrial(_) => "UnknownTrial",
            LabError::AlreadyAnswered(_) => "AlreadyAnswered",
            LabError::InvalidAnswer(_) => "InvalidAnswer",
            LabError::IncompleteSession { .. } => "IncompleteSession",
            LabError::CatalogMismatch { .. } => "CatalogMismatch",
            LabError::NoSessions => "NoSessions",
            LabError::EmptyRow(_) => "EmptyRow",
            LabError::Stats(StatsError::InvalidDf { .. }) => "InvalidDf",
            LabError::Stats(StatsError::InvalidStatistic(_)) => "InvalidStatistic",
            LabError::Stats(StatsError::InsufficientData(_)) => "InsufficientData",
            LabError::Stats(StatsError::DegenerateData) => "DegenerateData",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: u32,
    pub pattern_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSchedule {
    pub trials: Vec<Trial>,
    pub seed: u64,
    pub repetitions: u32,
}

/// Uniform integer in `0..bound` by rejection, so no modulo bias.
fn below(rng: &mut SplitMix64, bound: u64) -> u64 {
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let r = rng.next_u64();
        if r >= threshold {
            return r % bound;
        }
    }
}

/// Every id `repetitions` times, in a seeded Fisher-Yates order.
///
/// The generator is SplitMix64 seeded with `seed` as its raw state; the
/// shuffle walks `i = n-1 .. 1` swapping `i` with `below(i + 1)`. Trial ids
/// are 1-based positions in the resulting order.
pub fn build_schedule(
    pattern_ids: &[u32],
    repetitions: u32,
    seed: u64,
) -> Result<TrialSchedule, LabError> {
    if pattern_ids.is_empty() {
        return Err(LabError::EmptyCatalog);
    }
    if repetitions == 0 {
        return Err(LabError::InvalidRepetitions);
    }
    let mut seen = std::collections::BTreeSet::new();
    for &id in pattern_ids {
        if !seen.insert(id) {
            return Err(LabError::DuplicatePattern(id));
        }
    }
    let mut order: Vec<u32> = (0..repetitions)
        .flat_map(|_| pattern_ids.iter().copied())
        .collect();
    let mut rng = SplitMix64::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = below(&mut rng, i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let trials = order
        .into_iter()
        .enumerate()
        .map(|(i, pattern_id)| Trial {
            trial_id: i as u32 + 1,
            pattern_id,
        })
        .collect();
    Ok(TrialSchedule {
        trials,
        seed,
        repetitions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub answer: u32,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSession {
    pub subject_id: String,
    pub catalog_id: String,
    pub pattern_ids: Vec<u32>,
    pub schedule: TrialSchedule,
    pub started_at: DateTime<Utc>,
    pub delivered: BTreeMap<u32, DateTime<Utc>>,
    pub responses: BTreeMap<u32, Response>,
}

impl TrialSession {
    pub fn new(
        subject_id: impl Into<String>,
        catalog_id: impl Into<String>,
        pattern_ids: Vec<u32>,
        schedule: TrialSchedule,
        started_at: DateTime<Utc>,
    ) -> Self {
        TrialSession {
            subject_id: subject_id.into(),
            catalog_id: catalog_id.into(),
            pattern_ids,
            schedule,
            started_at,
            delivered: BTreeMap::new(),
            responses: BTreeMap::new(),
        }
    }

    pub fn trial(&self, trial_id: u32) -> Option<&Trial> {
        self.schedule.trials.iter().find(|t| t.trial_id == trial_id)
    }

    /// First trial in schedule order without a response.
    pub fn next_trial(&self) -> Option<&Trial> {
        self.schedule
            .trials
            .iter()
            .find(|t| !self.responses.contains_key(&t.trial_id))
    }

    pub fn unanswered(&self) -> usize {
        self.schedule.trials.len() - self.responses.len()
    }

    pub fn is_complete(&self) -> bool {
        self.unanswered() == 0
    }

    pub fn mark_delivered(&mut self, trial_id: u32, at: DateTime<Utc>) -> Result<(), LabError> {
        if self.trial(trial_id).is_none() {
            return Err(LabError::UnknownTrial(trial_id));
        }
        self.delivered.entry(trial_id).or_insert(at);
        Ok(())
    }

    pub fn record_response(
        &mut self,
        trial_id: u32,
        answer: u32,
        at: DateTime<Utc>,
    ) -> Result<(), LabError> {
        if self.trial(trial_id).is_none() {
            return Err(LabError::UnknownTrial(trial_id));
        }
        if self.responses.contains_key(&trial_id) {
            return Err(LabError::AlreadyAnswered(trial_id));
        }
        if !self.pattern_ids.contains(&answer) {
            return Err(LabError::InvalidAnswer(answer));
        }
        self.responses.insert(trial_id, Response { answer, at });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub pattern_ids: Vec<u32>,
    /// `counts[presented][answered]`, indexed like `pattern_ids`.
    pub counts: Vec<Vec<u32>>,
    pub row_totals: Vec<u32>,
}

impl ConfusionMatrix {
    fn index(&self, id: u32) -> Option<usize> {
        self.pattern_ids.iter().position(|&p| p == id)
    }

    pub fn count(&self, presented: u32, answered: u32) -> Option<u32> {
        Some(self.counts[self.index(presented)?][self.index(answered)?])
    }

    pub fn total(&self) -> u32 {
        self.row_totals.iter().sum()
    }
}

fn check_sessions(sessions: &[TrialSession]) -> Result<&TrialSession, LabError> {
    let first = sessions.first().ok_or(LabError::NoSessions)?;
    for s in sessions {
        if s.catalog_id != first.catalog_id || s.pattern_ids != first.pattern_ids {
            return Err(LabError::CatalogMismatch {
                subject_id: s.subject_id.clone(),
                expected: first.catalog_id.clone(),
                found: s.catalog_id.clone(),
            });
        }
        if !s.is_complete() {
            return Err(LabError::IncompleteSession {
                subject_id: s.subject_id.clone(),
                missing: s.unanswered(),
            });
        }
    }
    Ok(first)
}

pub fn confusion_matrix(sessions: &[TrialSession]) -> Result<ConfusionMatrix, LabError> {
    let first = check_sessions(sessions)?;
    let k = first.pattern_ids.len();
    let mut cm = ConfusionMatrix {
        pattern_ids: first.pattern_ids.clone(),
        counts: vec![vec![0; k]; k],
        row_totals: vec![0; k],
    };
    for s in sessions {
        for t in &s.schedule.trials {
            let answer = s.responses[&t.trial_id].answer;
            let (Some(r), Some(c)) = (cm.index(t.pattern_id), cm.index(answer)) else {
                return Err(LabError::InvalidAnswer(answer));
            };
            cm.counts[r][c] += 1;
            cm.row_totals[r] += 1;
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRate {
    pub pattern_id: u32,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionRates {
    pub per_pattern: Vec<PatternRate>,
    /// Unweighted mean over patterns.
    pub mean: f64,
}

impl RecognitionRates {
    pub fn rate(&self, pattern_id: u32) -> Option<f64> {
        self.per_pattern
            .iter()
            .find(|r| r.pattern_id == pattern_id)
            .map(|r| r.rate)
    }
}

pub fn recognition_rates(cm: &ConfusionMatrix) -> Result<RecognitionRates, LabError> {
    let mut per_pattern = Vec::with_capacity(cm.pattern_ids.len());
    for (i, &pattern_id) in cm.pattern_ids.iter().enumerate() {
        if cm.row_totals[i] == 0 {
            return Err(LabError::EmptyRow(pattern_id));
        }
        let rate = f64::from(cm.counts[i][i]) / f64::from(cm.row_totals[i]);
        per_pattern.push(PatternRate { pattern_id, rate });
    }
    if per_pattern.is_empty() {
        return Err(LabError::EmptyCatalog);
    }
    let mean = per_pattern.iter().map(|r| r.rate).sum::<f64>() / per_pattern.len() as f64;
    Ok(RecognitionRates { per_pattern, mean })
}

/// One group per pattern, one observation per session: the fraction of that
/// subject's presentations of the pattern answered correctly.
pub fn per_subject_accuracy(sessions: &[TrialSession]) -> Result<Vec<Vec<f64>>, LabError> {
    let first = check_sessions(sessions)?;
    let mut groups = vec![Vec::with_capacity(sessions.len()); first.pattern_ids.len()];
    for s in sessions {
        for (g, &pid) in first.pattern_ids.iter().enumerate() {
            let trials: Vec<&Trial> = s
                .schedule
                .trials
                .iter()
                .filter(|t| t.pattern_id == pid)
                .collect();
            if trials.is_empty() {
                return Err(LabError::EmptyRow(pid));
            }
            let correct = trials
                .iter()
                .filter(|t| s.responses[&t.trial_id].answer == pid)
                .count();
            groups[g].push(correct as f64 / trials.len() as f64);
        }
    }
    Ok(groups)
}

/// One-way ANOVA across patterns on per-subject accuracy.
pub fn pattern_anova(sessions: &[TrialSession]) -> Result<AnovaResult, LabError> {
    Ok(anova_one_way(&per_subject_accuracy(sessions)?)?)
}
