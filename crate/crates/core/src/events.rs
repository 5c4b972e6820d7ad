//! Append-only interaction log and state reconstruction by replay.
//!
//! On disk each learner session is one JSON Lines file,
//! `<root>/<user_id>/<session_id>.jsonl`. Every line is one
//! [`InteractionEvent`]; a closed session ends with a footer line
//! `{"footer":{"record_count":N}}`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::Course;
use crate::coverage::{CoverageError, Playhead};
use crate::mastery::{advances, AttemptRecord, StudyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: u64,
    pub user_id: String,
    pub at_ms: u64,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    SessionStart {
        #[serde(default)]
        session_id: String,
        #[serde(default)]
        course_id: String,
    },
    QuestionShown {
        question_id: String,
    },
    AnswerSubmit {
        question_id: String,
        selected: Vec<bool>,
        score: f64,
    },
    VideoPlay {
        video_id: String,
        position_s: u32,
    },
    VideoPause {
        video_id: String,
        position_s: u32,
    },
    VideoHeartbeat {
        video_id: String,
        position_s: u32,
    },
    VideoSeek {
        video_id: String,
        from_s: u32,
        to_s: u32,
    },
    TimelineExpand {
        question_id: String,
    },
    SkipUnseenClick {
        video_id: String,
        from_s: u32,
        to_s: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionStart,
    QuestionShown,
    AnswerSubmit,
    VideoPlay,
    VideoPause,
    VideoHeartbeat,
    VideoSeek,
    TimelineExpand,
    SkipUnseenClick,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::SessionStart,
        EventKind::QuestionShown,
        EventKind::AnswerSubmit,
        EventKind::VideoPlay,
        EventKind::VideoPause,
        EventKind::VideoHeartbeat,
        EventKind::VideoSeek,
        EventKind::TimelineExpand,
        EventKind::SkipUnseenClick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionStart => "session_start",
            EventKind::QuestionShown => "question_shown",
            EventKind::AnswerSubmit => "answer_submit",
            EventKind::VideoPlay => "video_play",
            EventKind::VideoPause => "video_pause",
            EventKind::VideoHeartbeat => "video_heartbeat",
            EventKind::VideoSeek => "video_seek",
            EventKind::TimelineExpand => "timeline_expand",
            EventKind::SkipUnseenClick => "skip_unseen_click",
        }
    }
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::SessionStart { .. } => EventKind::SessionStart,
            Payload::QuestionShown { .. } => EventKind::QuestionShown,
            Payload::AnswerSubmit { .. } => EventKind::AnswerSubmit,
            Payload::VideoPlay { .. } => EventKind::VideoPlay,
            Payload::VideoPause { .. } => EventKind::VideoPause,
            Payload::VideoHeartbeat { .. } => EventKind::VideoHeartbeat,
            Payload::VideoSeek { .. } => EventKind::VideoSeek,
            Payload::TimelineExpand { .. } => EventKind::TimelineExpand,
            Payload::SkipUnseenClick { .. } => EventKind::SkipUnseenClick,
        }
    }

    pub fn video_id(&self) -> Option<&str> {
        match self {
            Payload::VideoPlay { video_id, .. }
            | Payload::VideoPause { video_id, .. }
            | Payload::VideoHeartbeat { video_id, .. }
            | Payload::VideoSeek { video_id, .. }
            | Payload::SkipUnseenClick { video_id, .. } => Some(video_id),
            _ => None,
        }
    }

    fn missing_field(&self) -> Option<&'static str> {
        match self {
            Payload::QuestionShown { question_id } | Payload::TimelineExpand { question_id }
                if question_id.is_empty() =>
            {
                Some("question_id")
            }
            Payload::AnswerSubmit { question_id, .. } if question_id.is_empty() => Some("question_id"),
            Payload::AnswerSubmit { selected, .. } if selected.is_empty() => Some("selected"),
            Payload::AnswerSubmit { score, .. } if !(0.0..=1.0).contains(score) => Some("score"),
            _ => match self.video_id() {
                Some("") => Some("video_id"),
                _ => None,
            },
        }
    }
}

impl InteractionEvent {
    pub fn new(event_id: u64, user_id: impl Into<String>, at_ms: u64, payload: Payload) -> Self {
        InteractionEvent { event_id, user_id: user_id.into(), at_ms, payload }
    }

    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event {event_id} for {user_id}: id must exceed the previous id {last_id}")]
    NonMonotonicId { user_id: String, event_id: u64, last_id: u64 },
    #[error("event {event_id} for {user_id}: timestamp {at_ms} precedes {last_at_ms}")]
    NonMonotonicTime { user_id: String, event_id: u64, at_ms: u64, last_at_ms: u64 },
    #[error("event {event_id}: missing or invalid {field}")]
    IncompletePayload { event_id: u64, field: &'static str },
    #[error("event {event_id}: user id is empty")]
    MissingUser { event_id: u64 },
    #[error("identifier {0:?} may only contain ASCII letters, digits, '.', '_' and '-'")]
    UnsafeId(String),
    #[error("user {user_id}: no open session; the first event must be session_start")]
    NoOpenSession { user_id: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: footer says {expected} records but the file holds {found}")]
    Integrity { path: PathBuf, expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only store of interaction events, keyed by user.
pub trait EventLog {
    fn append(&mut self, ev: InteractionEvent) -> Result<(), LogError>;

    /// All events for a user in append order.
    fn events(&self, user_id: &str) -> Result<Vec<InteractionEvent>, LogError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tail {
    event_id: u64,
    at_ms: u64,
}

fn check_next(tail: Option<Tail>, ev: &InteractionEvent) -> Result<(), LogError> {
    if ev.user_id.is_empty() {
        return Err(LogError::MissingUser { event_id: ev.event_id });
    }
    if let Some(field) = ev.payload.missing_field() {
        return Err(LogError::IncompletePayload { event_id: ev.event_id, field });
    }
    if let Some(t) = tail {
        if ev.event_id <= t.event_id {
            return Err(LogError::NonMonotonicId {
                user_id: ev.user_id.clone(),
                event_id: ev.event_id,
                last_id: t.event_id,
            });
        }
        if ev.at_ms < t.at_ms {
            return Err(LogError::NonMonotonicTime {
                user_id: ev.user_id.clone(),
                event_id: ev.event_id,
                at_ms: ev.at_ms,
                last_at_ms: t.at_ms,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
pub struct MemoryLog {
    streams: BTreeMap<String, Vec<InteractionEvent>>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }
}

impl EventLog for MemoryLog {
    fn append(&mut self, ev: InteractionEvent) -> Result<(), LogError> {
        let stream = self.streams.entry(ev.user_id.clone()).or_default();
        let tail = stream.last().map(|e| Tail { event_id: e.event_id, at_ms: e.at_ms });
        check_next(tail, &ev)?;
        stream.push(ev);
        Ok(())
    }

    fn events(&self, user_id: &str) -> Result<Vec<InteractionEvent>, LogError> {
        Ok(self.streams.get(user_id).cloned().unwrap_or_default())
    }
}

pub fn check_safe_id(id: &str) -> Result<(), LogError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(LogError::UnsafeId(id.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FooterLine {
    footer: Footer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footer {
    pub record_count: u64,
}

/// Contents of one session file.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFile {
    pub path: PathBuf,
    pub events: Vec<InteractionEvent>,
    /// `None` when the session was never closed.
    pub footer: Option<Footer>,
}

/// Reads one session file, checking the footer count when present.
pub fn read_session_file(path: &Path) -> Result<SessionFile, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    let mut footer = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err =
            |e: serde_json::Error| LogError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() };
        if footer.is_some() {
            return Err(LogError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "record after footer".into(),
            });
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(parse_err)?;
        if value.get("footer").is_some() {
            footer = Some(serde_json::from_value::<FooterLine>(value).map_err(parse_err)?.footer);
            continue;
        }
        let ev: InteractionEvent = serde_json::from_value(value).map_err(parse_err)?;
        if let Some(field) = ev.payload.missing_field() {
            return Err(LogError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("missing or invalid {field}"),
            });
        }
        events.push(ev);
    }
    if let Some(f) = footer {
        if f.record_count != events.len() as u64 {
            return Err(LogError::Integrity {
                path: path.to_path_buf(),
                expected: f.record_count,
                found: events.len() as u64,
            });
        }
    }
    Ok(SessionFile { path: path.to_path_buf(), events, footer })
}

/// Every `*.jsonl` file below `dir`, in path order.
pub fn session_files(dir: &Path) -> Result<Vec<PathBuf>, LogError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug)]
struct OpenSession {
    path: PathBuf,
    file: File,
    records: u64,
}

/// File-backed log: one directory per user, one file per session.
#[derive(Debug)]
pub struct FileLog {
    root: PathBuf,
    tails: HashMap<String, Tail>,
    open: HashMap<String, OpenSession>,
    sync: bool,
}

impl FileLog {
    /// Opens (or creates) a log rooted at `root`. Unterminated session
    /// files are reopened for appending.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, LogError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut log = FileLog { root, tails: HashMap::new(), open: HashMap::new(), sync: true };
        for entry in fs::read_dir(&log.root)? {
            let dir = entry?.path();
            if !dir.is_dir() {
                continue;
            }
            let Some(user) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            let files = log.user_files(&user)?;
            if let Some(last) = files.last() {
                if let Some(e) = last.events.last() {
                    log.tails.insert(user.clone(), Tail { event_id: e.event_id, at_ms: e.at_ms });
                }
                if last.footer.is_none() {
                    let file = OpenOptions::new().append(true).open(&last.path)?;
                    log.open
                        .insert(user, OpenSession { path: last.path.clone(), file, records: last.events.len() as u64 });
                }
            }
        }
        Ok(log)
    }

    /// Skips the per-record fsync. Only for bulk generation and tests.
    pub fn without_sync(mut self) -> Self {
        self.sync = false;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Session files for one user ordered by their first event id.
    pub fn user_files(&self, user_id: &str) -> Result<Vec<SessionFile>, LogError> {
        let dir = self.root.join(user_id);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut files = session_files(&dir)?.iter().map(|p| read_session_file(p)).collect::<Result<Vec<_>, _>>()?;
        files.sort_by_key(|f| f.events.first().map_or(u64::MAX, |e| e.event_id));
        Ok(files)
    }

    /// Writes the footer of the user's open session, if any.
    pub fn close_session(&mut self, user_id: &str) -> Result<(), LogError> {
        if let Some(mut s) = self.open.remove(user_id) {
            let line = serde_json::to_string(&FooterLine { footer: Footer { record_count: s.records } })
                .expect("footer serializes");
            writeln!(s.file, "{line}")?;
            if self.sync {
                s.file.sync_data()?;
            }
        }
        Ok(())
    }

    pub fn open_session_path(&self, user_id: &str) -> Option<&Path> {
        self.open.get(user_id).map(|s| s.path.as_path())
    }
}

impl EventLog for FileLog {
    fn append(&mut self, ev: InteractionEvent) -> Result<(), LogError> {
        check_safe_id(&ev.user_id)?;
        check_next(self.tails.get(&ev.user_id).copied(), &ev)?;
        if let Payload::SessionStart { session_id, .. } = &ev.payload {
            self.close_session(&ev.user_id)?;
            let name = if session_id.is_empty() { format!("s{}", ev.event_id) } else { session_id.clone() };
            check_safe_id(&name)?;
            let dir = self.root.join(&ev.user_id);
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{name}.jsonl"));
            let file = OpenOptions::new().create_new(true).append(true).open(&path)?;
            self.open.insert(ev.user_id.clone(), OpenSession { path, file, records: 0 });
        }
        let Some(session) = self.open.get_mut(&ev.user_id) else {
            return Err(LogError::NoOpenSession { user_id: ev.user_id.clone() });
        };
        let line = serde_json::to_string(&ev).expect("event serializes");
        writeln!(session.file, "{line}")?;
        if self.sync {
            session.file.sync_data()?;
        }
        session.records += 1;
        self.tails.insert(ev.user_id.clone(), Tail { event_id: ev.event_id, at_ms: ev.at_ms });
        Ok(())
    }

    fn events(&self, user_id: &str) -> Result<Vec<InteractionEvent>, LogError> {
        Ok(self.user_files(user_id)?.into_iter().flat_map(|f| f.events).collect())
    }
}

impl Drop for FileLog {
    fn drop(&mut self) {
        let users: Vec<String> = self.open.keys().cloned().collect();
        for u in users {
            let _ = self.close_session(&u);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("event {event_id} belongs to user {found}, not {expected}")]
    WrongUser { event_id: u64, expected: String, found: String },
    #[error("event {event_id} refers to unknown question {question_id}")]
    UnknownQuestion { event_id: u64, question_id: String },
    #[error("event {event_id} refers to unknown video {video_id}")]
    UnknownVideo { event_id: u64, video_id: String },
    #[error("event {event_id}: answer has {got} selections, question {question_id} has {expected} options")]
    SelectionLength { event_id: u64, question_id: String, expected: usize, got: usize },
    #[error("event {event_id}: {source}")]
    Coverage { event_id: u64, source: CoverageError },
}

/// Everything replay reconstructs for one learner in one course.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub study: StudyState,
    /// Question most recently shown as the focus question.
    pub current_question: Option<String>,
    /// Questions on the timeline, most recently answered first.
    pub timeline: Vec<String>,
    pub playheads: BTreeMap<String, Playhead>,
    pub sessions_started: u64,
    pub last_event_id: u64,
    pub last_at_ms: u64,
}

impl LearnerState {
    pub fn new(user_id: impl Into<String>, course: &Course) -> Self {
        LearnerState { study: StudyState::new(user_id, course), ..Default::default() }
    }

    /// Applies one event. Live sessions and replay both go through here.
    pub fn apply(&mut self, course: &Course, ev: &InteractionEvent) -> Result<(), ReplayError> {
        if ev.user_id != self.study.user_id {
            return Err(ReplayError::WrongUser {
                event_id: ev.event_id,
                expected: self.study.user_id.clone(),
                found: ev.user_id.clone(),
            });
        }
        let id = ev.event_id;
        let unknown_question = |q: &str| ReplayError::UnknownQuestion { event_id: id, question_id: q.to_string() };
        let coverage_err = |source| ReplayError::Coverage { event_id: id, source };

        match &ev.payload {
            Payload::SessionStart { .. } => self.sessions_started += 1,
            Payload::QuestionShown { question_id } => {
                course.question(question_id).ok_or_else(|| unknown_question(question_id))?;
                self.current_question = Some(question_id.clone());
            }
            Payload::TimelineExpand { question_id } => {
                course.question(question_id).ok_or_else(|| unknown_question(question_id))?;
            }
            Payload::AnswerSubmit { question_id, selected, score } => {
                let q = course.question(question_id).ok_or_else(|| unknown_question(question_id))?;
                if selected.len() != q.options.len() {
                    return Err(ReplayError::SelectionLength {
                        event_id: id,
                        question_id: question_id.clone(),
                        expected: q.options.len(),
                        got: selected.len(),
                    });
                }
                let on_timeline = self.timeline.iter().position(|t| t == question_id);
                if let Some(i) = on_timeline {
                    self.timeline.remove(i);
                }
                if on_timeline.is_some() || advances(q, *score) {
                    self.timeline.insert(0, question_id.clone());
                }
                self.study.record_attempt(
                    course,
                    AttemptRecord {
                        user_id: ev.user_id.clone(),
                        question_id: question_id.clone(),
                        at_ms: ev.at_ms,
                        selected: selected.clone(),
                        score: *score,
                    },
                );
            }
            Payload::VideoPlay { video_id, position_s }
            | Payload::VideoPause { video_id, position_s }
            | Payload::VideoHeartbeat { video_id, position_s } => {
                let cov = self
                    .study
                    .coverage_mut(course, video_id)
                    .ok_or_else(|| ReplayError::UnknownVideo { event_id: id, video_id: video_id.clone() })?;
                let head = self.playheads.entry(video_id.clone()).or_default();
                match ev.kind() {
                    EventKind::VideoPlay => head.play(cov, *position_s),
                    EventKind::VideoPause => head.pause(cov, *position_s),
                    _ => head.heartbeat(cov, *position_s),
                }
                .map_err(coverage_err)?;
            }
            Payload::VideoSeek { video_id, from_s, to_s } => {
                let cov = self
                    .study
                    .coverage_mut(course, video_id)
                    .ok_or_else(|| ReplayError::UnknownVideo { event_id: id, video_id: video_id.clone() })?;
                let head = self.playheads.entry(video_id.clone()).or_default();
                head.seek(cov, *from_s, *to_s).map_err(coverage_err)?;
            }
            Payload::SkipUnseenClick { video_id, .. } => {
                course
                    .video(video_id)
                    .ok_or_else(|| ReplayError::UnknownVideo { event_id: id, video_id: video_id.clone() })?;
            }
        }
        self.last_event_id = ev.event_id;
        self.last_at_ms = self.last_at_ms.max(ev.at_ms);
        Ok(())
    }
}

/// Rebuilds a learner's state from their events.
pub fn replay<'a>(
    events: impl IntoIterator<Item = &'a InteractionEvent>,
    user_id: &str,
    course: &Course,
) -> Result<LearnerState, ReplayError> {
    let mut state = LearnerState::new(user_id, course);
    for ev in events.into_iter().filter(|e| e.user_id == user_id) {
        state.apply(course, ev)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub per_kind: BTreeMap<EventKind, u64>,
    pub attempts_per_question: BTreeMap<String, u64>,
    pub answer_attempts: u64,
    pub correct_attempts: u64,
    /// Attempts with score 1 over all attempts; 0 when there are none.
    pub correct_rate: f64,
    pub seeks: u64,
    pub timeline_expansions: u64,
}

pub fn event_counts<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>) -> EventCounts {
    let mut c = EventCounts { per_kind: EventKind::ALL.iter().map(|k| (*k, 0)).collect(), ..Default::default() };
    for ev in events {
        *c.per_kind.entry(ev.kind()).or_default() += 1;
        match &ev.payload {
            Payload::AnswerSubmit { question_id, score, .. } => {
                c.answer_attempts += 1;
                if *score == 1.0 {
                    c.correct_attempts += 1;
                }
                *c.attempts_per_question.entry(question_id.clone()).or_default() += 1;
            }
            Payload::VideoSeek { .. } => c.seeks += 1,
            Payload::TimelineExpand { .. } => c.timeline_expansions += 1,
            _ => {}
        }
    }
    if c.answer_attempts > 0 {
        c.correct_rate = c.correct_attempts as f64 / c.answer_attempts as f64;
    }
    c
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;
    use crate::course::{convert_course, InVideoQuizCourse, Video};

    fn start(id: u64, at: u64) -> InteractionEvent {
        InteractionEvent::new(
            id,
            "alice",
            at,
            Payload::SessionStart { session_id: format!("s{id}"), course_id: "c".into() },
        )
    }

    fn course() -> Course {
        Course::new(
            convert_course(&InVideoQuizCourse {
                course_id: "c".into(),
                videos: vec![Video {
                    video_id: "v".into(),
                    title: "v".into(),
                    duration_s: 100,
                    unit_id: "u".into(),
                    order_index: 0,
                    url: None,
                }],
                quizzes: vec![],
            })
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn append_checks_monotonic_ids_and_payloads() {
        let mut log = MemoryLog::new();
        log.append(start(1, 0)).unwrap();
        assert!(matches!(log.append(start(1, 5)), Err(LogError::NonMonotonicId { .. })));
        assert!(matches!(log.append(start(2, 0)), Ok(())));
        assert!(matches!(log.append(start(3, 0)), Ok(())));
        let mut back = start(4, 0);
        log.append(InteractionEvent::new(4, "alice", 10, Payload::TimelineExpand { question_id: "q".into() })).unwrap();
        back.event_id = 5;
        assert!(matches!(log.append(back), Err(LogError::NonMonotonicTime { .. })));
        let missing = InteractionEvent::new(
            6,
            "alice",
            10,
            Payload::AnswerSubmit { question_id: String::new(), selected: vec![true], score: 1.0 },
        );
        assert!(matches!(log.append(missing), Err(LogError::IncompletePayload { field: "question_id", .. })));
        assert_eq!(log.events("alice").unwrap().len(), 4);
    }

    #[test]
    fn line_schema_is_flat() {
        let ev =
            InteractionEvent::new(7, "alice", 1500, Payload::VideoSeek { video_id: "v".into(), from_s: 30, to_s: 100 });
        assert_eq!(
            serde_json::to_string(&ev).unwrap(),
            r#"{"event_id":7,"user_id":"alice","at_ms":1500,"kind":"video_seek","video_id":"v","from_s":30,"to_s":100}"#
        );
        let missing =
            r#"{"event_id":8,"user_id":"alice","at_ms":1,"kind":"answer_submit","selected":[true],"score":1.0}"#;
        assert!(serde_json::from_str::<InteractionEvent>(missing).is_err());
    }

    #[test]
    fn replay_play_pause() {
        let c = course();
        let events = vec![
            start(1, 0),
            InteractionEvent::new(2, "alice", 1, Payload::VideoPlay { video_id: "v".into(), position_s: 0 }),
            InteractionEvent::new(3, "alice", 2, Payload::VideoPause { video_id: "v".into(), position_s: 30 }),
        ];
        let st = replay(&events, "alice", &c).unwrap();
        assert_eq!(st.study.coverage["v"].seen.spans(), &[0..30]);
        let empty = replay(&[], "alice", &c).unwrap();
        assert_eq!(empty, LearnerState::new("alice", &c));
    }

    #[test]
    fn replay_rejects_dangling_refs() {
        let c = course();
        let ev = InteractionEvent::new(9, "alice", 1, Payload::QuestionShown { question_id: "nope".into() });
        assert_eq!(
            replay(&[ev], "alice", &c),
            Err(ReplayError::UnknownQuestion { event_id: 9, question_id: "nope".into() })
        );
        let ev = InteractionEvent::new(3, "alice", 1, Payload::VideoPlay { video_id: "x".into(), position_s: 0 });
        assert!(matches!(replay(&[ev], "alice", &c), Err(ReplayError::UnknownVideo { event_id: 3, .. })));
        let ev = InteractionEvent::new(4, "alice", 1, Payload::VideoPause { video_id: "v".into(), position_s: 101 });
        assert!(matches!(replay(&[ev], "alice", &c), Err(ReplayError::Coverage { event_id: 4, .. })));
    }

    #[test]
    fn counts_attempts() {
        assert_eq!(event_counts(&[]).answer_attempts, 0);
        assert_eq!(event_counts(&[]).correct_rate, 0.0);
        let evs: Vec<_> = [1.0, 1.0, 0.0]
            .iter()
            .enumerate()
            .map(|(i, s)| {
                InteractionEvent::new(
                    i as u64 + 1,
                    "alice",
                    0,
                    Payload::AnswerSubmit { question_id: "q".into(), selected: vec![true], score: *s },
                )
            })
            .collect();
        let c = event_counts(&evs);
        assert_eq!(c.answer_attempts, 3);
        assert!((c.correct_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.per_kind[&EventKind::AnswerSubmit], 3);
    }

    #[test]
    fn file_log_round_trip_with_footer() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut log = FileLog::open(dir.path()).unwrap().without_sync();
            assert!(matches!(
                log.append(InteractionEvent::new(1, "alice", 0, Payload::TimelineExpand { question_id: "q".into() })),
                Err(LogError::NoOpenSession { .. })
            ));
            log.append(start(1, 0)).unwrap();
            log.append(InteractionEvent::new(2, "alice", 5, Payload::QuestionShown { question_id: "q".into() }))
                .unwrap();
            log.append(start(3, 10)).unwrap();
        }
        let log = FileLog::open(dir.path()).unwrap();
        let files = log.user_files("alice").unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].footer, Some(Footer { record_count: 2 }));
        assert_eq!(files[1].footer, Some(Footer { record_count: 1 }));
        let ids: Vec<u64> = log.events("alice").unwrap().iter().map(|e| e.event_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn file_log_detects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let ev = serde_json::to_string(&start(1, 0)).unwrap();
        fs::write(&path, format!("{ev}\n{{\"footer\":{{\"record_count\":2}}}}\n")).unwrap();
        assert!(matches!(read_session_file(&path), Err(LogError::Integrity { expected: 2, found: 1, .. })));
    }

    #[test]
    fn file_log_resumes_after_crash() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = FileLog::open(dir.path()).unwrap().without_sync();
        log.append(start(1, 0)).unwrap();
        // Simulate a crash: no footer is written.
        std::mem::forget(log);
        let mut log = FileLog::open(dir.path()).unwrap().without_sync();
        assert!(log.open_session_path("alice").is_some());
        assert!(matches!(log.append(start(1, 0)), Err(LogError::NonMonotonicId { .. })));
        log.append(InteractionEvent::new(2, "alice", 1, Payload::QuestionShown { question_id: "q".into() })).unwrap();
        drop(log);
        let log = FileLog::open(dir.path()).unwrap();
        assert_eq!(log.user_files("alice").unwrap()[0].footer, Some(Footer { record_count: 2 }));
    }

    #[test]
    fn rejects_path_escaping_ids() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = FileLog::open(dir.path()).unwrap();
        let mut ev = start(1, 0);
        ev.user_id = "../evil".into();
        assert!(matches!(log.append(ev), Err(LogError::UnsafeId(_))));
    }
}
