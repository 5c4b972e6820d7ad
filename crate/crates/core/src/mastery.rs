//! Answer scoring, mastery scores and question scheduling.
//!
//! A question's mastery combines three factors, each in `[0, 1]`:
//!
//! * performance: weighted mean of past attempt scores, newest weighted most
//!   (`d^age`, newest weight 1);
//! * watched: mean watched fraction over the segments the question refers to;
//! * recency: `tau / (tau + elapsed)` since the last attempt, 0 if never tried.
//!
//! The combined score is a convex combination of the three. Until every
//! question has been attempted once the scheduler walks the course in order;
//! after that it offers the lowest-mastery question.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::{Course, Question};
use crate::coverage::WatchCoverage;

pub const DEFAULT_HALFLIFE_MS: u64 = 6 * 60 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub user_id: String,
    pub question_id: String,
    pub at_ms: u64,
    pub selected: Vec<bool>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("question {question_id} has {expected} options but {got} selections were sent")]
    LengthMismatch { question_id: String, expected: usize, got: usize },
    #[error("self-assessment question {question_id} needs exactly one rating, got {got}")]
    SelfRatingCount { question_id: String, got: usize },
}

/// Fraction of option positions whose selected state matches the key.
///
/// Self-assessment questions take a single rating on a five-level scale and
/// score `(level - 1) / 4`.
pub fn score_attempt(q: &Question, selected: &[bool]) -> Result<f64, ScoreError> {
    if selected.len() != q.options.len() {
        return Err(ScoreError::LengthMismatch {
            question_id: q.question_id.clone(),
            expected: q.options.len(),
            got: selected.len(),
        });
    }
    if q.is_generic() {
        let picked: Vec<usize> = selected.iter().enumerate().filter(|(_, s)| **s).map(|(i, _)| i).collect();
        let [level] = picked[..] else {
            return Err(ScoreError::SelfRatingCount { question_id: q.question_id.clone(), got: picked.len() });
        };
        let top = (q.options.len() - 1).max(1) as f64;
        return Ok(level as f64 / top);
    }
    let matches = q.options.iter().zip(selected).filter(|(o, s)| o.correct == **s).count();
    Ok(matches as f64 / q.options.len() as f64)
}

/// Whether an attempt lets the learner move on: a fully correct answer, or
/// any rating for a self-assessment question.
pub fn advances(q: &Question, score: f64) -> bool {
    q.is_generic() || score == 1.0
}

/// Score for a free-response item asking for `requested` examples.
pub fn grade_free_response(requested: u32, given: &[bool]) -> f64 {
    let correct = given.iter().filter(|c| **c).count();
    let denom = (requested.max(1) as usize).max(given.len());
    correct as f64 / denom as f64
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("mastery weights must be non-negative and finite, got ({0}, {1}, {2})")]
    NegativeWeight(f64, f64, f64),
    #[error("mastery weights must sum to 1, got {0}")]
    WeightSum(f64),
    #[error("history decay must lie in (0, 1], got {0}")]
    Decay(f64),
    #[error("recency half-life must be positive")]
    Halflife,
    #[error("review list length must be positive")]
    ReviewLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub performance_weight: f64,
    pub watched_weight: f64,
    pub recency_weight: f64,
    pub history_decay: f64,
    pub recency_halflife_ms: u64,
    pub review_list_length: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            performance_weight: 0.5,
            watched_weight: 0.3,
            recency_weight: 0.2,
            history_decay: 0.5,
            recency_halflife_ms: DEFAULT_HALFLIFE_MS,
            review_list_length: 5,
        }
    }
}

impl SchedulerConfig {
    /// Replaces the three weights with `raw / sum(raw)`.
    pub fn with_weights(mut self, performance: f64, watched: f64, recency: f64) -> Result<Self, ConfigError> {
        let all = [performance, watched, recency];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::NegativeWeight(performance, watched, recency));
        }
        let sum: f64 = all.iter().sum();
        if sum <= 0.0 {
            return Err(ConfigError::WeightSum(sum));
        }
        self.performance_weight = performance / sum;
        self.watched_weight = watched / sum;
        self.recency_weight = recency / sum;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (a, b, g) = (self.performance_weight, self.watched_weight, self.recency_weight);
        if [a, b, g].iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::NegativeWeight(a, b, g));
        }
        if (a + b + g - 1.0).abs() > 1e-9 {
            return Err(ConfigError::WeightSum(a + b + g));
        }
        if !(self.history_decay > 0.0 && self.history_decay <= 1.0) {
            return Err(ConfigError::Decay(self.history_decay));
        }
        if self.recency_halflife_ms == 0 {
            return Err(ConfigError::Halflife);
        }
        if self.review_list_length == 0 {
            return Err(ConfigError::ReviewLength);
        }
        Ok(())
    }

    pub fn recency_model(&self) -> HyperbolicDecay {
        HyperbolicDecay { halflife_ms: self.recency_halflife_ms }
    }
}

/// Weighted mean of attempt scores, oldest first in `history`; the newest
/// attempt has weight 1 and each older one is multiplied by the decay.
pub fn performance_score(history: &[AttemptRecord], cfg: &SchedulerConfig) -> f64 {
    let mut weight = 1.0;
    let (mut num, mut den) = (0.0, 0.0);
    for a in history.iter().rev() {
        num += weight * a.score;
        den += weight;
        weight *= cfg.history_decay;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// How strongly a recent attempt holds a question back from review.
pub trait RecencyModel {
    /// A value in `[0, 1]`; 0 when there has been no attempt.
    fn recency(&self, last_attempt_ms: Option<u64>, now_ms: u64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperbolicDecay {
    pub halflife_ms: u64,
}

impl RecencyModel for HyperbolicDecay {
    fn recency(&self, last_attempt_ms: Option<u64>, now_ms: u64) -> f64 {
        let Some(last) = last_attempt_ms else { return 0.0 };
        let tau = self.halflife_ms as f64;
        let dt = now_ms.saturating_sub(last) as f64;
        tau / (tau + dt)
    }
}

pub fn recency_score(last_attempt_ms: Option<u64>, now_ms: u64, cfg: &SchedulerConfig) -> f64 {
    cfg.recency_model().recency(last_attempt_ms, now_ms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasteryScore {
    pub question_id: String,
    pub performance: f64,
    pub watched: f64,
    pub recency: f64,
    pub combined: f64,
    pub computed_at_ms: u64,
}

/// Per-user study progress: attempt histories, watch coverage and the
/// pass flags derived from them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub user_id: String,
    pub attempts: BTreeMap<String, Vec<AttemptRecord>>,
    pub coverage: BTreeMap<String, WatchCoverage>,
    pub initial_pass_complete: BTreeMap<String, bool>,
}

impl StudyState {
    pub fn new(user_id: impl Into<String>, course: &Course) -> Self {
        StudyState {
            user_id: user_id.into(),
            attempts: BTreeMap::new(),
            coverage: BTreeMap::new(),
            initial_pass_complete: course.units().iter().map(|u| (u.clone(), false)).collect(),
        }
    }

    pub fn history(&self, question_id: &str) -> &[AttemptRecord] {
        self.attempts.get(question_id).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn attempted(&self, question_id: &str) -> bool {
        !self.history(question_id).is_empty()
    }

    pub fn coverage_mut(&mut self, course: &Course, video_id: &str) -> Option<&mut WatchCoverage> {
        let video = course.video(video_id)?;
        Some(
            self.coverage
                .entry(video_id.to_string())
                .or_insert_with(|| WatchCoverage::new(self.user_id.clone(), video_id, video.duration_s)),
        )
    }

    pub fn record_attempt(&mut self, course: &Course, attempt: AttemptRecord) {
        let unit = course.unit_of(&attempt.question_id).map(str::to_string);
        self.attempts.entry(attempt.question_id.clone()).or_default().push(attempt);
        if let Some(unit) = unit {
            let done = course.questions_in_unit(&unit).all(|q| self.attempted(&q.question_id));
            self.initial_pass_complete.insert(unit, done);
        }
    }

    pub fn pass_complete(&self) -> bool {
        self.initial_pass_complete.values().all(|d| *d)
    }

    /// Mean watched fraction over the segments a question refers to.
    pub fn watched(&self, course: &Course, q: &Question) -> f64 {
        if q.segment_refs.is_empty() {
            return 0.0;
        }
        let total: f64 = q
            .segment_refs
            .iter()
            .filter_map(|id| course.segment(id))
            .map(|seg| self.coverage.get(&seg.video_id).map_or(0.0, |c| c.watched_fraction(seg)))
            .sum();
        total / q.segment_refs.len() as f64
    }
}

pub fn mastery(q: &Question, course: &Course, state: &StudyState, cfg: &SchedulerConfig, now_ms: u64) -> MasteryScore {
    mastery_with(q, course, state, cfg, &cfg.recency_model(), now_ms)
}

pub fn mastery_with(
    q: &Question,
    course: &Course,
    state: &StudyState,
    cfg: &SchedulerConfig,
    recency_model: &dyn RecencyModel,
    now_ms: u64,
) -> MasteryScore {
    let history = state.history(&q.question_id);
    let performance = performance_score(history, cfg);
    let watched = state.watched(course, q).clamp(0.0, 1.0);
    let recency = recency_model.recency(history.last().map(|a| a.at_ms), now_ms).clamp(0.0, 1.0);
    let combined = cfg.performance_weight * performance + cfg.watched_weight * watched + cfg.recency_weight * recency;
    MasteryScore {
        question_id: q.question_id.clone(),
        performance,
        watched,
        recency,
        combined: combined.clamp(0.0, 1.0),
        computed_at_ms: now_ms,
    }
}

/// Question to offer next, or `None` for an empty course.
pub fn next_question(course: &Course, state: &StudyState, cfg: &SchedulerConfig, now_ms: u64) -> Option<String> {
    if let Some(q) = course.questions_in_order().find(|q| !state.attempted(&q.question_id)) {
        return Some(q.question_id.clone());
    }
    ranked(course, state, cfg, now_ms).into_iter().next().map(|(_, m)| m.question_id)
}

/// All questions ranked by combined mastery ascending, ties by study order.
fn ranked(course: &Course, state: &StudyState, cfg: &SchedulerConfig, now_ms: u64) -> Vec<(u32, MasteryScore)> {
    let mut all: Vec<(u32, MasteryScore)> =
        course.questions_in_order().map(|q| (q.order_index, mastery(q, course, state, cfg, now_ms))).collect();
    all.sort_by(|(oa, a), (ob, b)| a.combined.partial_cmp(&b.combined).unwrap_or(Ordering::Equal).then(oa.cmp(ob)));
    all
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("initial pass incomplete: {remaining} question(s) not yet attempted")]
pub struct PassIncomplete {
    pub remaining: usize,
}

/// The `review_list_length` lowest-mastery questions with their scores.
pub fn review_list(
    course: &Course,
    state: &StudyState,
    cfg: &SchedulerConfig,
    now_ms: u64,
) -> Result<Vec<MasteryScore>, PassIncomplete> {
    let remaining = course.questions_in_order().filter(|q| !state.attempted(&q.question_id)).count();
    if remaining > 0 {
        return Err(PassIncomplete { remaining });
    }
    let mut list = ranked(course, state, cfg, now_ms);
    list.truncate(cfg.review_list_length);
    Ok(list.into_iter().map(|(_, m)| m).collect())
}
