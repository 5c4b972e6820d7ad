//! Course data model and conversion of in-video-quiz courses into
//! question-directed segment/question pairs.
//!
//! A lecture video carrying in-video quizzes is cut at each quiz position.
//! The quiz becomes the focus question of the segment that ends where the
//! quiz appears. Segments that end without a quiz (the trailing stretch of
//! a video, or a quiz-less video) get a generic self-assessment question.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prompt used for auto-inserted self-assessment questions.
pub const GENERIC_PROMPT: &str = "How well did you understand this video?";

/// Fixed five-level self-rating scale, lowest first.
pub const SELF_RATING_SCALE: [&str; 5] =
    ["1 - Not at all", "2 - A little", "3 - Somewhat", "4 - Mostly", "5 - Completely"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Video {
    pub video_id: String,
    pub title: String,
    pub duration_s: u32,
    pub unit_id: String,
    pub order_index: u32,
    /// Where the player fetches the media from; served elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

/// Half-open span `[start_s, end_s)` of one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub video_id: String,
    pub start_s: u32,
    pub end_s: u32,
}

impl Segment {
    pub fn len_s(&self) -> u32 {
        self.end_s.saturating_sub(self.start_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    /// Taken from an in-video quiz.
    Original,
    /// Hand-authored for a segment that had no quiz.
    Extra,
    /// Auto-inserted "how well did you understand" rating.
    GenericSelfAssessment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub text: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub prompt: String,
    pub options: Vec<AnswerOption>,
    /// Segments the question depends on; the last one is the segment this
    /// question focuses.
    pub segment_refs: Vec<String>,
    pub kind: QuestionKind,
    pub order_index: u32,
}

impl Question {
    /// Builds the auto-inserted self-assessment question for a segment.
    pub fn generic(question_id: String, segment_id: String, order_index: u32) -> Self {
        Question {
            question_id,
            prompt: GENERIC_PROMPT.to_string(),
            options: self_rating_options(),
            segment_refs: vec![segment_id],
            kind: QuestionKind::GenericSelfAssessment,
            order_index,
        }
    }

    pub fn focus_segment(&self) -> Option<&str> {
        self.segment_refs.last().map(String::as_str)
    }

    pub fn is_generic(&self) -> bool {
        self.kind == QuestionKind::GenericSelfAssessment
    }
}

pub fn self_rating_options() -> Vec<AnswerOption> {
    SELF_RATING_SCALE.iter().map(|text| AnswerOption { text: (*text).to_string(), correct: false }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseManifest {
    pub course_id: String,
    pub units: Vec<String>,
    pub videos: Vec<Video>,
    pub segments: Vec<Segment>,
    pub questions: Vec<Question>,
}

/// A quiz embedded at a timestamp inside a lecture video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InVideoQuiz {
    pub video_id: String,
    pub position_s: u32,
    pub prompt: String,
    pub options: Vec<AnswerOption>,
    #[serde(default = "default_quiz_kind")]
    pub kind: QuestionKind,
}

fn default_quiz_kind() -> QuestionKind {
    QuestionKind::Original
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InVideoQuizCourse {
    pub course_id: String,
    pub videos: Vec<Video>,
    pub quizzes: Vec<InVideoQuiz>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConversionError {
    #[error("video {video_id}: duration must be positive")]
    ZeroDuration { video_id: String },
    #[error("video {video_id} is listed more than once")]
    DuplicateVideo { video_id: String },
    #[error("unit {unit_id}: order_index {order_index} used by more than one video")]
    DuplicateVideoOrder { unit_id: String, order_index: u32 },
    #[error("quiz refers to unknown video {video_id}")]
    UnknownVideo { video_id: String },
    #[error("video {video_id}: more than one quiz at {position_s}s")]
    DuplicateQuizPosition { video_id: String, position_s: u32 },
    #[error("video {video_id}: quiz at {position_s}s lies outside (0, {duration_s}]")]
    QuizOutOfRange { video_id: String, position_s: u32, duration_s: u32 },
    #[error("video {video_id}: quiz at {position_s}s has no options")]
    EmptyQuiz { video_id: String, position_s: u32 },
}

pub fn segment_id_for(video_id: &str, start_s: u32) -> String {
    format!("{video_id}@{start_s}")
}

pub fn question_id_for(video_id: &str, start_s: u32) -> String {
    format!("q:{video_id}@{start_s}")
}

/// Orders videos by unit (first appearance) and then by order_index.
fn ordered_videos(videos: &[Video]) -> (Vec<String>, Vec<&Video>) {
    let mut units: Vec<String> = Vec::new();
    for v in videos {
        if !units.contains(&v.unit_id) {
            units.push(v.unit_id.clone());
        }
    }
    let rank: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut ordered: Vec<&Video> = videos.iter().collect();
    ordered.sort_by_key(|v| (rank[v.unit_id.as_str()], v.order_index));
    (units, ordered)
}

/// Converts an in-video-quiz course into a manifest of segments and focus
/// questions.
pub fn convert_course(src: &InVideoQuizCourse) -> Result<CourseManifest, ConversionError> {
    let mut seen_videos = HashSet::new();
    let mut seen_orders = HashSet::new();
    for v in &src.videos {
        if v.duration_s == 0 {
            return Err(ConversionError::ZeroDuration { video_id: v.video_id.clone() });
        }
        if !seen_videos.insert(v.video_id.as_str()) {
            return Err(ConversionError::DuplicateVideo { video_id: v.video_id.clone() });
        }
        if !seen_orders.insert((v.unit_id.as_str(), v.order_index)) {
            return Err(ConversionError::DuplicateVideoOrder {
                unit_id: v.unit_id.clone(),
                order_index: v.order_index,
            });
        }
    }

    let durations: HashMap<&str, u32> = src.videos.iter().map(|v| (v.video_id.as_str(), v.duration_s)).collect();
    let mut quizzes_by_video: HashMap<&str, BTreeMap<u32, &InVideoQuiz>> = HashMap::new();
    for quiz in &src.quizzes {
        let duration = *durations
            .get(quiz.video_id.as_str())
            .ok_or_else(|| ConversionError::UnknownVideo { video_id: quiz.video_id.clone() })?;
        if quiz.position_s == 0 || quiz.position_s > duration {
            return Err(ConversionError::QuizOutOfRange {
                video_id: quiz.video_id.clone(),
                position_s: quiz.position_s,
                duration_s: duration,
            });
        }
        if quiz.options.is_empty() {
            return Err(ConversionError::EmptyQuiz { video_id: quiz.video_id.clone(), position_s: quiz.position_s });
        }
        let slot = quizzes_by_video.entry(quiz.video_id.as_str()).or_default();
        if slot.insert(quiz.position_s, quiz).is_some() {
            return Err(ConversionError::DuplicateQuizPosition {
                video_id: quiz.video_id.clone(),
                position_s: quiz.position_s,
            });
        }
    }

    let (units, ordered) = ordered_videos(&src.videos);
    let mut segments = Vec::new();
    let mut questions = Vec::new();
    let no_quizzes = BTreeMap::new();
    for video in ordered {
        let quizzes = quizzes_by_video.get(video.video_id.as_str()).unwrap_or(&no_quizzes);
        let mut start = 0;
        let mut cuts: Vec<(u32, Option<&InVideoQuiz>)> =
            quizzes.iter().map(|(&pos, &quiz)| (pos, Some(quiz))).collect();
        if cuts.last().map(|(pos, _)| *pos) != Some(video.duration_s) {
            cuts.push((video.duration_s, None));
        }
        for (end, quiz) in cuts {
            let segment_id = segment_id_for(&video.video_id, start);
            let question_id = question_id_for(&video.video_id, start);
            let order_index = questions.len() as u32;
            let question = match quiz {
                Some(quiz) => Question {
                    question_id,
                    prompt: quiz.prompt.clone(),
                    options: quiz.options.clone(),
                    segment_refs: vec![segment_id.clone()],
                    kind: quiz.kind,
                    order_index,
                },
                None => Question::generic(question_id, segment_id.clone(), order_index),
            };
            segments.push(Segment { segment_id, video_id: video.video_id.clone(), start_s: start, end_s: end });
            questions.push(question);
            start = end;
        }
    }

    let mut videos = src.videos.clone();
    let unit_rank: HashMap<String, usize> = units.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
    videos.sort_by_key(|v| (unit_rank[&v.unit_id], v.order_index));

    Ok(CourseManifest { course_id: src.course_id.clone(), units, videos, segments, questions })
}

/// One broken manifest invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    DuplicateVideo { video_id: String },
    ZeroDuration { video_id: String },
    UnknownUnit { video_id: String, unit_id: String },
    DuplicateVideoOrder { unit_id: String, order_index: u32 },
    DuplicateSegment { segment_id: String },
    SegmentUnknownVideo { segment_id: String, video_id: String },
    SegmentBounds { segment_id: String, start_s: u32, end_s: u32, duration_s: u32 },
    SegmentOverlap { first: String, second: String },
    CoverageGap { video_id: String, start_s: u32, end_s: u32 },
    DuplicateQuestion { question_id: String },
    EmptySegmentRefs { question_id: String },
    UnresolvedSegmentRef { question_id: String, segment_id: String },
    EmptyOptions { question_id: String },
    BadSelfRatingOptions { question_id: String },
    DuplicateQuestionOrder { order_index: u32, question_id: String },
    MissingFocusQuestion { segment_id: String },
    MultipleFocusQuestions { segment_id: String, question_ids: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateVideo { video_id } => write!(f, "video {video_id}: duplicate id"),
            ZeroDuration { video_id } => write!(f, "video {video_id}: duration must be positive"),
            UnknownUnit { video_id, unit_id } => {
                write!(f, "video {video_id}: unit {unit_id} is not listed in units")
            }
            DuplicateVideoOrder { unit_id, order_index } => {
                write!(f, "unit {unit_id}: order_index {order_index} is not unique")
            }
            DuplicateSegment { segment_id } => write!(f, "segment {segment_id}: duplicate id"),
            SegmentUnknownVideo { segment_id, video_id } => {
                write!(f, "segment {segment_id}: unknown video {video_id}")
            }
            SegmentBounds { segment_id, start_s, end_s, duration_s } => {
                write!(f, "segment {segment_id}: [{start_s},{end_s}) is not within [0,{duration_s}) or is empty")
            }
            SegmentOverlap { first, second } => {
                write!(f, "segments {first} and {second} overlap")
            }
            CoverageGap { video_id, start_s, end_s } => {
                write!(f, "video {video_id}: [{start_s},{end_s}) is not covered by any segment")
            }
            DuplicateQuestion { question_id } => write!(f, "question {question_id}: duplicate id"),
            EmptySegmentRefs { question_id } => {
                write!(f, "question {question_id}: segment_refs is empty")
            }
            UnresolvedSegmentRef { question_id, segment_id } => {
                write!(f, "question {question_id}: unknown segment {segment_id}")
            }
            EmptyOptions { question_id } => write!(f, "question {question_id}: no options"),
            BadSelfRatingOptions { question_id } => {
                write!(f, "question {question_id}: self-assessment must use the fixed rating scale")
            }
            DuplicateQuestionOrder { order_index, question_id } => {
                write!(f, "question {question_id}: order_index {order_index} is not unique")
            }
            MissingFocusQuestion { segment_id } => {
                write!(f, "segment {segment_id}: no focus question")
            }
            MultipleFocusQuestions { segment_id, question_ids } => {
                write!(f, "segment {segment_id}: focused by several questions ({})", question_ids.join(", "))
            }
        }
    }
}

/// Checks every manifest invariant. An empty result means the manifest is
/// valid.
pub fn validate_manifest(m: &CourseManifest) -> Vec<Violation> {
    let mut out = Vec::new();

    let units: HashSet<&str> = m.units.iter().map(String::as_str).collect();
    let mut videos: HashMap<&str, &Video> = HashMap::new();
    let mut orders = HashSet::new();
    for v in &m.videos {
        if videos.insert(v.video_id.as_str(), v).is_some() {
            out.push(Violation::DuplicateVideo { video_id: v.video_id.clone() });
        }
        if v.duration_s == 0 {
            out.push(Violation::ZeroDuration { video_id: v.video_id.clone() });
        }
        if !units.contains(v.unit_id.as_str()) {
            out.push(Violation::UnknownUnit { video_id: v.video_id.clone(), unit_id: v.unit_id.clone() });
        }
        if !orders.insert((v.unit_id.as_str(), v.order_index)) {
            out.push(Violation::DuplicateVideoOrder { unit_id: v.unit_id.clone(), order_index: v.order_index });
        }
    }

    let mut segment_ids = HashSet::new();
    let mut per_video: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
    for s in &m.segments {
        if !segment_ids.insert(s.segment_id.as_str()) {
            out.push(Violation::DuplicateSegment { segment_id: s.segment_id.clone() });
        }
        let Some(video) = videos.get(s.video_id.as_str()) else {
            out.push(Violation::SegmentUnknownVideo { segment_id: s.segment_id.clone(), video_id: s.video_id.clone() });
            continue;
        };
        if s.start_s >= s.end_s || s.end_s > video.duration_s {
            out.push(Violation::SegmentBounds {
                segment_id: s.segment_id.clone(),
                start_s: s.start_s,
                end_s: s.end_s,
                duration_s: video.duration_s,
            });
            continue;
        }
        per_video.entry(s.video_id.as_str()).or_default().push(s);
    }

    for v in &m.videos {
        let mut segs = per_video.remove(v.video_id.as_str()).unwrap_or_default();
        segs.sort_by_key(|s| (s.start_s, s.end_s));
        let mut covered_to = 0;
        let mut last: Option<&Segment> = None;
        for s in segs {
            if let Some(prev) = last.filter(|p| s.start_s < p.end_s) {
                out.push(Violation::SegmentOverlap { first: prev.segment_id.clone(), second: s.segment_id.clone() });
            } else if s.start_s > covered_to {
                out.push(Violation::CoverageGap {
                    video_id: v.video_id.clone(),
                    start_s: covered_to,
                    end_s: s.start_s,
                });
            }
            covered_to = covered_to.max(s.end_s);
            if last.is_none_or(|p| s.end_s > p.end_s) {
                last = Some(s);
            }
        }
        if covered_to < v.duration_s {
            out.push(Violation::CoverageGap { video_id: v.video_id.clone(), start_s: covered_to, end_s: v.duration_s });
        }
    }

    let rating = self_rating_options();
    let mut question_ids = HashSet::new();
    let mut question_orders = HashSet::new();
    let mut focus: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for q in &m.questions {
        if !question_ids.insert(q.question_id.as_str()) {
            out.push(Violation::DuplicateQuestion { question_id: q.question_id.clone() });
        }
        if !question_orders.insert(q.order_index) {
            out.push(Violation::DuplicateQuestionOrder {
                order_index: q.order_index,
                question_id: q.question_id.clone(),
            });
        }
        match q.kind {
            QuestionKind::GenericSelfAssessment if q.options != rating => {
                out.push(Violation::BadSelfRatingOptions { question_id: q.question_id.clone() })
            }
            QuestionKind::Original | QuestionKind::Extra if q.options.is_empty() => {
                out.push(Violation::EmptyOptions { question_id: q.question_id.clone() })
            }
            _ => {}
        }
        if q.segment_refs.is_empty() {
            out.push(Violation::EmptySegmentRefs { question_id: q.question_id.clone() });
        }
        for r in &q.segment_refs {
            if !segment_ids.contains(r.as_str()) {
                out.push(Violation::UnresolvedSegmentRef { question_id: q.question_id.clone(), segment_id: r.clone() });
            }
        }
        if let Some(f) = q.focus_segment() {
            focus.entry(f).or_default().push(q.question_id.clone());
        }
    }

    let mut checked = BTreeSet::new();
    for s in &m.segments {
        if !checked.insert(s.segment_id.as_str()) {
            continue;
        }
        match focus.get(s.segment_id.as_str()) {
            None => out.push(Violation::MissingFocusQuestion { segment_id: s.segment_id.clone() }),
            Some(ids) if ids.len() > 1 => out.push(Violation::MultipleFocusQuestions {
                segment_id: s.segment_id.clone(),
                question_ids: ids.clone(),
            }),
            Some(_) => {}
        }
    }

    out
}

/// Index over a validated manifest for the lookups the scheduler and the
/// service need.
#[derive(Debug, Clone)]
pub struct Course {
    manifest: CourseManifest,
    videos: HashMap<String, usize>,
    segments: HashMap<String, usize>,
    questions: HashMap<String, usize>,
    /// Question indices sorted by order_index.
    study_order: Vec<usize>,
    question_unit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid course manifest: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct InvalidManifest(pub Vec<Violation>);

impl Course {
    pub fn new(manifest: CourseManifest) -> Result<Self, InvalidManifest> {
        let violations = validate_manifest(&manifest);
        if !violations.is_empty() {
            return Err(InvalidManifest(violations));
        }
        let videos = manifest.videos.iter().enumerate().map(|(i, v)| (v.video_id.clone(), i)).collect();
        let segments: HashMap<String, usize> =
            manifest.segments.iter().enumerate().map(|(i, s)| (s.segment_id.clone(), i)).collect();
        let questions = manifest.questions.iter().enumerate().map(|(i, q)| (q.question_id.clone(), i)).collect();
        let mut study_order: Vec<usize> = (0..manifest.questions.len()).collect();
        study_order.sort_by_key(|&i| manifest.questions[i].order_index);
        let video_unit: HashMap<&str, &str> =
            manifest.videos.iter().map(|v| (v.video_id.as_str(), v.unit_id.as_str())).collect();
        // A multi-segment question belongs to the unit of the segment it focuses.
        let question_unit = manifest
            .questions
            .iter()
            .map(|q| {
                let seg = &manifest.segments[segments[q.focus_segment().unwrap_or_default()]];
                video_unit[seg.video_id.as_str()].to_string()
            })
            .collect();
        Ok(Course { manifest, videos, segments, questions, study_order, question_unit })
    }

    pub fn manifest(&self) -> &CourseManifest {
        &self.manifest
    }

    pub fn course_id(&self) -> &str {
        &self.manifest.course_id
    }

    pub fn video(&self, video_id: &str) -> Option<&Video> {
        self.videos.get(video_id).map(|&i| &self.manifest.videos[i])
    }

    pub fn segment(&self, segment_id: &str) -> Option<&Segment> {
        self.segments.get(segment_id).map(|&i| &self.manifest.segments[i])
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions.get(question_id).map(|&i| &self.manifest.questions[i])
    }

    pub fn unit_of(&self, question_id: &str) -> Option<&str> {
        self.questions.get(question_id).map(|&i| self.question_unit[i].as_str())
    }

    /// Questions in study order.
    pub fn questions_in_order(&self) -> impl Iterator<Item = &Question> + '_ {
        self.study_order.iter().map(move |&i| &self.manifest.questions[i])
    }

    pub fn questions_in_unit<'a>(&'a self, unit_id: &'a str) -> impl Iterator<Item = &'a Question> + 'a {
        self.study_order
            .iter()
            .filter(move |&&i| self.question_unit[i] == unit_id)
            .map(move |&i| &self.manifest.questions[i])
    }

    pub fn units(&self) -> &[String] {
        &self.manifest.units
    }

    /// Positions of original in-video quizzes in a video, ascending.
    pub fn quiz_positions(&self, video_id: &str) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .manifest
            .questions
            .iter()
            .filter(|q| q.kind == QuestionKind::Original)
            .filter_map(|q| self.segment(q.focus_segment()?))
            .filter(|s| s.video_id == video_id)
            .map(|s| s.end_s)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}
