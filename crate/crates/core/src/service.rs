//! Stateful study sessions over a course and its event log.
//!
//! Every state change is written to the event log first and applied
//! through [`LearnerState::apply`], the same path replay uses, so a
//! learner's in-memory state always equals the replay of their log.
//! Commands for one learner are serialized by a per-learner lock.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::{Course, CourseManifest, QuestionKind, Segment};
use crate::coverage::{CoverageError, Region, HEARTBEAT_CAP_S};
use crate::events::{check_safe_id, replay, EventLog, InteractionEvent, LearnerState, LogError, Payload, ReplayError};
use crate::mastery::{
    advances, next_question, review_list, score_attempt, MasteryScore, PassIncomplete, SchedulerConfig, ScoreError,
};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Settable clock for tests and simulations.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown course {0}")]
    CourseNotFound(String),
    #[error("unknown session {0}")]
    SessionNotFound(String),
    #[error("unknown video {0}")]
    VideoNotFound(String),
    #[error("unknown question {0}")]
    QuestionNotFound(String),
    #[error("question {submitted} is not current; the current question is {current}")]
    StaleQuestion { submitted: String, current: String },
    #[error(transparent)]
    PassIncomplete(#[from] PassIncomplete),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("heartbeat spans {span_s}s; at most {HEARTBEAT_CAP_S}s allowed")]
    HeartbeatTooLong { span_s: u32 },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InitialPass,
    Review,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    pub course_id: String,
    pub current_question_id: String,
    pub mode: Mode,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchAction {
    Play,
    Pause,
    Seek,
    Heartbeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub score: f64,
    pub correct: bool,
    pub advanced: bool,
    pub session: Session,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub question_id: String,
    pub prompt: String,
    pub answered_correctly: bool,
    pub latest_score: f64,
    pub segment_refs: Vec<String>,
    /// Where playback last stopped, per referenced video.
    pub resume_position_s: BTreeMap<String, u32>,
    pub answered_at_ms: u64,
}

/// Question as shown to the learner: no answer key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub kind: QuestionKind,
    pub segments: Vec<Segment>,
    /// Progress-bar regions per referenced video.
    pub regions: BTreeMap<String, Vec<Region>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentQuestion {
    pub session: Session,
    pub question: QuestionView,
}

struct SessionInfo {
    user_id: String,
    course_id: String,
    created_at_ms: u64,
}

struct CourseSlot {
    course: Arc<Course>,
    log: Mutex<Box<dyn EventLog + Send>>,
    learners: Mutex<HashMap<String, Arc<Mutex<LearnerState>>>>,
}

pub struct StudyService {
    cfg: SchedulerConfig,
    clock: Arc<dyn Clock>,
    courses: HashMap<String, CourseSlot>,
    sessions: RwLock<HashMap<String, SessionInfo>>,
}

impl StudyService {
    pub fn new(cfg: SchedulerConfig, clock: Arc<dyn Clock>) -> Self {
        StudyService { cfg, clock, courses: HashMap::new(), sessions: RwLock::new(HashMap::new()) }
    }

    pub fn add_course(&mut self, course: Course, log: Box<dyn EventLog + Send>) -> Result<(), ServiceError> {
        check_safe_id(course.course_id())?;
        let slot = CourseSlot { course: Arc::new(course), log: Mutex::new(log), learners: Mutex::new(HashMap::new()) };
        self.courses.insert(slot.course.course_id().to_string(), slot);
        Ok(())
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn course(&self, course_id: &str) -> Result<&CourseManifest, ServiceError> {
        Ok(self.slot(course_id)?.course.manifest())
    }

    fn slot(&self, course_id: &str) -> Result<&CourseSlot, ServiceError> {
        self.courses.get(course_id).ok_or_else(|| ServiceError::CourseNotFound(course_id.to_string()))
    }

    fn learner(&self, slot: &CourseSlot, user_id: &str) -> Arc<Mutex<LearnerState>> {
        let mut learners = slot.learners.lock().expect("learner map poisoned");
        learners
            .entry(user_id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(LearnerState::new(user_id, &slot.course))))
            .clone()
    }

    fn lookup(&self, session_id: &str) -> Result<(&CourseSlot, String, u64), ServiceError> {
        let sessions = self.sessions.read().expect("session map poisoned");
        let info = sessions.get(session_id).ok_or_else(|| ServiceError::SessionNotFound(session_id.to_string()))?;
        Ok((self.slot(&info.course_id)?, info.user_id.clone(), info.created_at_ms))
    }

    /// Logs and applies a batch of events for one learner. The in-memory
    /// state only changes once every event is durably appended.
    fn commit(&self, slot: &CourseSlot, state: &mut LearnerState, payloads: Vec<Payload>) -> Result<(), ServiceError> {
        let now = self.clock.now_ms().max(state.last_at_ms);
        let mut next = state.clone();
        let mut events = Vec::with_capacity(payloads.len());
        for payload in payloads {
            let ev = InteractionEvent::new(next.last_event_id + 1, next.study.user_id.clone(), now, payload);
            next.apply(&slot.course, &ev)?;
            events.push(ev);
        }
        let mut log = slot.log.lock().expect("event log poisoned");
        for ev in events {
            if let Err(e) = log.append(ev) {
                // Part of the batch may be on disk; resync from the log.
                if let Ok(all) = log.events(&state.study.user_id) {
                    if let Ok(fresh) = replay(&all, &state.study.user_id, &slot.course) {
                        *state = fresh;
                    }
                }
                return Err(e.into());
            }
        }
        *state = next;
        Ok(())
    }

    fn view(&self, session_id: &str, slot: &CourseSlot, state: &LearnerState, created_at_ms: u64) -> Session {
        Session {
            session_id: session_id.to_string(),
            user_id: state.study.user_id.clone(),
            course_id: slot.course.course_id().to_string(),
            current_question_id: state.current_question.clone().unwrap_or_default(),
            mode: if state.study.pass_complete() { Mode::Review } else { Mode::InitialPass },
            created_at_ms,
        }
    }

    /// Whether the learner may move on from the current question.
    fn current_settled(slot: &CourseSlot, state: &LearnerState) -> bool {
        let Some(current) = &state.current_question else { return true };
        let Some(q) = slot.course.question(current) else { return true };
        state.study.history(current).last().is_some_and(|a| advances(q, a.score))
    }

    pub fn start_session(&self, user_id: &str, course_id: &str) -> Result<Session, ServiceError> {
        let slot = self.slot(course_id)?;
        check_safe_id(user_id)?;
        let learner = self.learner(slot, user_id);
        let mut state = learner.lock().expect("learner poisoned");

        let events = slot.log.lock().expect("event log poisoned").events(user_id)?;
        *state = replay(&events, user_id, &slot.course)?;

        let session_id = format!("{course_id}.{user_id}.{}", state.sessions_started + 1);
        let created_at_ms = self.clock.now_ms().max(state.last_at_ms);
        let mut payloads =
            vec![Payload::SessionStart { session_id: session_id.clone(), course_id: course_id.to_string() }];
        if Self::current_settled(slot, &state) {
            let next = next_question(&slot.course, &state.study, &self.cfg, created_at_ms)
                .ok_or_else(|| ServiceError::BadRequest("course has no questions".into()))?;
            if state.current_question.as_deref() != Some(next.as_str()) {
                payloads.push(Payload::QuestionShown { question_id: next });
            }
        }
        self.commit(slot, &mut state, payloads)?;

        self.sessions.write().expect("session map poisoned").insert(
            session_id.clone(),
            SessionInfo { user_id: user_id.to_string(), course_id: course_id.to_string(), created_at_ms },
        );
        Ok(self.view(&session_id, slot, &state, created_at_ms))
    }

    pub fn session(&self, session_id: &str) -> Result<Session, ServiceError> {
        let (slot, user, created) = self.lookup(session_id)?;
        let learner = self.learner(slot, &user);
        let state = learner.lock().expect("learner poisoned");
        Ok(self.view(session_id, slot, &state, created))
    }

    pub fn current_question(&self, session_id: &str) -> Result<CurrentQuestion, ServiceError> {
        let (slot, user, created) = self.lookup(session_id)?;
        let learner = self.learner(slot, &user);
        let state = learner.lock().expect("learner poisoned");
        let session = self.view(session_id, slot, &state, created);
        let q = slot
            .course
            .question(&session.current_question_id)
            .ok_or_else(|| ServiceError::QuestionNotFound(session.current_question_id.clone()))?;
        let segments: Vec<Segment> = q.segment_refs.iter().filter_map(|id| slot.course.segment(id)).cloned().collect();
        let mut regions = BTreeMap::new();
        for seg in &segments {
            if !regions.contains_key(&seg.video_id) {
                regions.insert(seg.video_id.clone(), self.regions_for(slot, &state, &seg.video_id));
            }
        }
        let question = QuestionView {
            question_id: q.question_id.clone(),
            prompt: q.prompt.clone(),
            options: q.options.iter().map(|o| o.text.clone()).collect(),
            kind: q.kind,
            segments,
            regions,
        };
        Ok(CurrentQuestion { session, question })
    }

    pub fn submit_answer(
        &self,
        session_id: &str,
        question_id: &str,
        selected: &[bool],
    ) -> Result<SubmitOutcome, ServiceError> {
        let (slot, user, created) = self.lookup(session_id)?;
        let learner = self.learner(slot, &user);
        let mut state = learner.lock().expect("learner poisoned");
        let current = state.current_question.clone().unwrap_or_default();
        if current != question_id {
            return Err(ServiceError::StaleQuestion { submitted: question_id.to_string(), current });
        }
        let q =
            slot.course.question(question_id).ok_or_else(|| ServiceError::QuestionNotFound(question_id.to_string()))?;
        let score = score_attempt(q, selected)?;
        let advanced = advances(q, score);

        self.commit(
            slot,
            &mut state,
            vec![Payload::AnswerSubmit { question_id: question_id.to_string(), selected: selected.to_vec(), score }],
        )?;
        if advanced {
            let now = state.last_at_ms;
            if let Some(next) = next_question(&slot.course, &state.study, &self.cfg, now) {
                self.commit(slot, &mut state, vec![Payload::QuestionShown { question_id: next }])?;
            }
        }
        Ok(SubmitOutcome {
            score,
            correct: score == 1.0,
            advanced,
            session: self.view(session_id, slot, &state, created),
        })
    }

    /// Records playback progress and returns fresh progress-bar regions.
    ///
    /// `play` starts playback at `from_s`. `heartbeat` and `pause` report
    /// playback over `[from_s, to_s)`; a heartbeat may span at most
    /// [`HEARTBEAT_CAP_S`] seconds. `seek` jumps from `from_s` to `to_s`.
    pub fn report_watch(
        &self,
        session_id: &str,
        video_id: &str,
        from_s: u32,
        to_s: u32,
        action: WatchAction,
    ) -> Result<Vec<Region>, ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let video = slot.course.video(video_id).ok_or_else(|| ServiceError::VideoNotFound(video_id.to_string()))?;
        let duration_s = video.duration_s;
        let within = |from_s: u32, to_s: u32| {
            if from_s.max(to_s) > duration_s {
                Err(CoverageError::OutOfBounds { from_s, to_s, duration_s })
            } else {
                Ok(())
            }
        };
        let learner = self.learner(slot, &user);
        let mut state = learner.lock().expect("learner poisoned");
        let vid = video_id.to_string();
        let playing_from = state.playheads.get(video_id).and_then(|p| p.playing_from);

        let mut payloads = Vec::new();
        match action {
            WatchAction::Play => {
                within(from_s, from_s)?;
                payloads.push(Payload::VideoPlay { video_id: vid, position_s: from_s });
            }
            WatchAction::Seek => {
                within(from_s, to_s)?;
                payloads.push(Payload::VideoSeek { video_id: vid, from_s, to_s });
            }
            WatchAction::Heartbeat | WatchAction::Pause => {
                within(from_s, to_s)?;
                if from_s > to_s {
                    return Err(CoverageError::OutOfBounds { from_s, to_s, duration_s }.into());
                }
                if action == WatchAction::Heartbeat && to_s - from_s > HEARTBEAT_CAP_S {
                    return Err(ServiceError::HeartbeatTooLong { span_s: to_s - from_s });
                }
                if playing_from != Some(from_s) {
                    payloads.push(Payload::VideoPlay { video_id: vid.clone(), position_s: from_s });
                }
                payloads.push(if action == WatchAction::Pause {
                    Payload::VideoPause { video_id: vid, position_s: to_s }
                } else {
                    Payload::VideoHeartbeat { video_id: vid, position_s: to_s }
                });
            }
        }
        self.commit(slot, &mut state, payloads)?;
        Ok(self.regions_for(slot, &state, video_id))
    }

    fn regions_for(&self, slot: &CourseSlot, state: &LearnerState, video_id: &str) -> Vec<Region> {
        let duration = slot.course.video(video_id).map_or(0, |v| v.duration_s);
        let part = state
            .current_question
            .as_deref()
            .and_then(|id| slot.course.question(id))
            .and_then(|q| {
                q.segment_refs.iter().filter_map(|id| slot.course.segment(id)).filter(|s| s.video_id == video_id).last()
            })
            .map(|s| s.start_s..s.end_s);
        match state.study.coverage.get(video_id) {
            Some(cov) => cov.regions(part),
            None => crate::coverage::WatchCoverage::new(&state.study.user_id, video_id, duration).regions(part),
        }
    }

    pub fn timeline(&self, session_id: &str) -> Result<Vec<TimelineEntry>, ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let learner = self.learner(slot, &user);
        let state = learner.lock().expect("learner poisoned");
        let mut out = Vec::with_capacity(state.timeline.len());
        for id in &state.timeline {
            let (Some(q), Some(latest)) = (slot.course.question(id), state.study.history(id).last()) else {
                continue;
            };
            let mut resume = BTreeMap::new();
            for seg in q.segment_refs.iter().filter_map(|s| slot.course.segment(s)) {
                let pos = state.study.coverage.get(&seg.video_id).map_or(seg.start_s, |c| c.last_position_s);
                resume.insert(seg.video_id.clone(), pos);
            }
            out.push(TimelineEntry {
                question_id: id.clone(),
                prompt: q.prompt.clone(),
                answered_correctly: advances(q, latest.score),
                latest_score: latest.score,
                segment_refs: q.segment_refs.clone(),
                resume_position_s: resume,
                answered_at_ms: latest.at_ms,
            });
        }
        Ok(out)
    }

    pub fn review(&self, session_id: &str) -> Result<Vec<MasteryScore>, ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let learner = self.learner(slot, &user);
        let state = learner.lock().expect("learner poisoned");
        let now = self.clock.now_ms().max(state.last_at_ms);
        Ok(review_list(&slot.course, &state.study, &self.cfg, now)?)
    }

    pub fn skip_target(&self, session_id: &str, video_id: &str, position_s: u32) -> Result<Option<u32>, ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let video = slot.course.video(video_id).ok_or_else(|| ServiceError::VideoNotFound(video_id.to_string()))?;
        if position_s > video.duration_s {
            return Err(CoverageError::PositionOutOfBounds { position_s, duration_s: video.duration_s }.into());
        }
        let learner = self.learner(slot, &user);
        let state = learner.lock().expect("learner poisoned");
        Ok(match state.study.coverage.get(video_id) {
            Some(cov) => cov.next_unseen(position_s),
            None => (position_s < video.duration_s).then_some(position_s),
        })
    }

    /// Logs that the learner used the skip-to-unseen control.
    pub fn confirm_skip(&self, session_id: &str, video_id: &str, from_s: u32, to_s: u32) -> Result<(), ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let video = slot.course.video(video_id).ok_or_else(|| ServiceError::VideoNotFound(video_id.to_string()))?;
        if from_s.max(to_s) > video.duration_s {
            return Err(CoverageError::OutOfBounds { from_s, to_s, duration_s: video.duration_s }.into());
        }
        let learner = self.learner(slot, &user);
        let mut state = learner.lock().expect("learner poisoned");
        self.commit(slot, &mut state, vec![Payload::SkipUnseenClick { video_id: video_id.to_string(), from_s, to_s }])
    }

    /// Logs that the learner opened a timeline entry.
    pub fn expand_timeline(&self, session_id: &str, question_id: &str) -> Result<(), ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        slot.course.question(question_id).ok_or_else(|| ServiceError::QuestionNotFound(question_id.to_string()))?;
        let learner = self.learner(slot, &user);
        let mut state = learner.lock().expect("learner poisoned");
        self.commit(slot, &mut state, vec![Payload::TimelineExpand { question_id: question_id.to_string() }])
    }

    /// Snapshot of the in-memory state behind a session.
    pub fn learner_state(&self, session_id: &str) -> Result<LearnerState, ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let learner = self.learner(slot, &user);
        let state = learner.lock().expect("learner poisoned");
        Ok(state.clone())
    }

    /// State rebuilt from the event log alone.
    pub fn replayed_state(&self, session_id: &str) -> Result<LearnerState, ServiceError> {
        let (slot, user, _) = self.lookup(session_id)?;
        let events = slot.log.lock().expect("event log poisoned").events(&user)?;
        Ok(replay(&events, &user, &slot.course)?)
    }

    pub fn user_events(&self, course_id: &str, user_id: &str) -> Result<Vec<InteractionEvent>, ServiceError> {
        let slot = self.slot(course_id)?;
        let events = slot.log.lock().expect("event log poisoned").events(user_id)?;
        Ok(events)
    }
}
