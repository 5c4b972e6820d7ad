//! Test-only oracles and a simulated learner.
//!
//! The oracles here deliberately avoid the library's algorithms: coverage
//! is a plain boolean array, chain grouping labels each event by counting
//! preceding threshold gaps, and histograms are recounted second by second.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use quizcram_core::course::{AnswerOption, Question, QuestionKind};
use quizcram_core::seek::{Direction, SeekChain, SeekEvent};
use quizcram_core::service::{ManualClock, StudyService, WatchAction};
use quizcram_core::{convert_course, Course, CourseManifest, EventLog, InVideoQuizCourse, SchedulerConfig, Video};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-second seen flags, updated naively.
pub struct BoolCoverage {
    pub seen: Vec<bool>,
}

impl BoolCoverage {
    pub fn new(duration_s: u32) -> Self {
        BoolCoverage { seen: vec![false; duration_s as usize] }
    }

    pub fn mark(&mut self, from_s: u32, to_s: u32) {
        for s in from_s..to_s {
            self.seen[s as usize] = true;
        }
    }

    pub fn count(&self, from_s: u32, to_s: u32) -> u32 {
        (from_s..to_s).filter(|s| self.seen[*s as usize]).count() as u32
    }

    pub fn next_unseen(&self, from_s: u32) -> Option<u32> {
        (from_s..self.seen.len() as u32).find(|s| !self.seen[*s as usize])
    }
}

/// Groups by labelling event j with the number of threshold-or-larger gaps
/// among events 1..=j.
pub fn oracle_chains(
    user: &str,
    video: &str,
    events: &[SeekEvent],
    quizzes: &[u32],
    threshold_ms: u64,
) -> (Vec<SeekChain>, usize) {
    let labels: Vec<usize> = (0..events.len())
        .map(|j| (1..=j).filter(|&k| events[k].at_ms - events[k - 1].at_ms >= threshold_ms).count())
        .collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().push(j);
    }
    let mut chains = Vec::new();
    let mut zero = 0;
    for members in groups.values() {
        let first = &events[*members.iter().min().unwrap()];
        let last = &events[*members.iter().max().unwrap()];
        if first.from_s == last.to_s {
            zero += 1;
            continue;
        }
        let (lo, hi) = (first.from_s.min(last.to_s), first.from_s.max(last.to_s));
        chains.push(SeekChain {
            user_id: user.into(),
            video_id: video.into(),
            source_s: first.from_s,
            dest_s: last.to_s,
            started_at_ms: first.at_ms,
            direction: if last.to_s > first.from_s { Direction::Forward } else { Direction::Backward },
            crossed_quizzes: quizzes.iter().copied().filter(|q| lo < *q && *q < hi).collect(),
            seeks: members.len(),
        });
    }
    (chains, zero)
}

/// Per-second count of forward chains skipping over each second.
pub fn oracle_skip_histogram(chains: &[SeekChain]) -> BTreeMap<u32, u64> {
    let mut out = BTreeMap::new();
    for c in chains.iter().filter(|c| c.direction == Direction::Forward) {
        for s in c.source_s..c.dest_s {
            *out.entry(s).or_insert(0) += 1;
        }
    }
    out
}

/// Two units, three videos, random quiz placement and one two-segment
/// question.
pub fn random_course(rng: &mut ChaCha8Rng) -> Course {
    let videos: Vec<Video> = (0..3)
        .map(|i| Video {
            video_id: format!("v{i}"),
            title: format!("Video {i}"),
            duration_s: rng.random_range(60..240),
            unit_id: if i < 2 { "unit-a".into() } else { "unit-b".into() },
            order_index: i,
            url: None,
        })
        .collect();
    let mut quizzes = Vec::new();
    for v in &videos {
        let n = rng.random_range(0..3);
        let mut positions: Vec<u32> = (0..n).map(|_| rng.random_range(1..=v.duration_s)).collect();
        positions.sort_unstable();
        positions.dedup();
        for p in positions {
            let options = (0..rng.random_range(2..5))
                .map(|k| AnswerOption { text: format!("option {k}"), correct: rng.random_bool(0.5) })
                .collect();
            quizzes.push(quizcram_core::course::InVideoQuiz {
                video_id: v.video_id.clone(),
                position_s: p,
                prompt: format!("{} quiz at {p}", v.video_id),
                options,
                kind: QuestionKind::Original,
            });
        }
    }
    let mut manifest = convert_course(&InVideoQuizCourse { course_id: "sim".into(), videos, quizzes }).unwrap();
    make_multi_segment(&mut manifest);
    Course::new(manifest).unwrap()
}

/// Turns the last generic question into an extra question that also
/// depends on the previous segment.
fn make_multi_segment(m: &mut CourseManifest) {
    let Some(pos) = m.questions.iter().rposition(|q| q.is_generic()) else { return };
    let focus = m.questions[pos].segment_refs[0].clone();
    let idx = m.segments.iter().position(|s| s.segment_id == focus).unwrap();
    if idx == 0 {
        return;
    }
    let prev = m.segments[idx - 1].segment_id.clone();
    let q: &mut Question = &mut m.questions[pos];
    q.kind = QuestionKind::Extra;
    q.prompt = "Relate the last two sections".into();
    q.segment_refs = vec![prev, focus];
    q.options =
        vec![AnswerOption { text: "yes".into(), correct: true }, AnswerOption { text: "no".into(), correct: false }];
}

pub fn key(q: &Question) -> Vec<bool> {
    q.options.iter().map(|o| o.correct).collect()
}

pub fn wrong(q: &Question) -> Vec<bool> {
    let mut k = key(q);
    k[0] = !k[0];
    k
}

/// Answer for `q` that is fully correct (or any rating for self-assessment)
/// with probability `p_correct`.
pub fn answer(q: &Question, p_correct: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    if q.is_generic() {
        let mut sel = vec![false; q.options.len()];
        let level = rng.random_range(0..sel.len());
        sel[level] = true;
        return sel;
    }
    if rng.random_bool(p_correct) {
        key(q)
    } else {
        wrong(q)
    }
}

/// Runs a randomized learner against the service and returns the session id
/// that was active at the end.
pub fn simulate_learner(
    service: &StudyService,
    course: &Course,
    clock: &ManualClock,
    user: &str,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> String {
    let course_id = course.course_id().to_string();
    let mut session = service.start_session(user, &course_id).unwrap();
    let mut playing: BTreeMap<String, u32> = BTreeMap::new();
    for _ in 0..steps {
        clock.advance(rng.random_range(0..20_000));
        let current = service.current_question(&session.session_id).unwrap();
        let q = course.question(&current.question.question_id).unwrap().clone();
        let seg = current.question.segments.last().unwrap().clone();
        let video = course.video(&seg.video_id).unwrap().clone();
        match rng.random_range(0..100) {
            0..=29 => {
                let sel = answer(&q, 0.7, rng);
                service.submit_answer(&session.session_id, &q.question_id, &sel).unwrap();
            }
            30..=39 => {
                let from = rng.random_range(seg.start_s..seg.end_s);
                service.report_watch(&session.session_id, &video.video_id, from, from, WatchAction::Play).unwrap();
                playing.insert(video.video_id.clone(), from);
            }
            40..=69 => {
                let from = *playing.get(&video.video_id).unwrap_or(&seg.start_s);
                let to = (from + rng.random_range(0..=5)).min(video.duration_s);
                service.report_watch(&session.session_id, &video.video_id, from, to, WatchAction::Heartbeat).unwrap();
                playing.insert(video.video_id.clone(), to);
            }
            70..=79 => {
                let from = *playing.get(&video.video_id).unwrap_or(&seg.start_s);
                let to = (from + rng.random_range(0..40)).min(video.duration_s);
                service.report_watch(&session.session_id, &video.video_id, from, to, WatchAction::Pause).unwrap();
                playing.remove(&video.video_id);
            }
            80..=86 => {
                let from = *playing.get(&video.video_id).unwrap_or(&0);
                let to = rng.random_range(0..=video.duration_s);
                service.report_watch(&session.session_id, &video.video_id, from, to, WatchAction::Seek).unwrap();
                if playing.contains_key(&video.video_id) {
                    playing.insert(video.video_id.clone(), to);
                }
            }
            87..=90 => {
                let pos = rng.random_range(0..=video.duration_s);
                if let Some(target) = service.skip_target(&session.session_id, &video.video_id, pos).unwrap() {
                    service.confirm_skip(&session.session_id, &video.video_id, pos, target).unwrap();
                }
            }
            91..=95 => {
                let timeline = service.timeline(&session.session_id).unwrap();
                if let Some(e) = timeline.first() {
                    service.expand_timeline(&session.session_id, &e.question_id).unwrap();
                }
            }
            _ => {
                session = service.start_session(user, &course_id).unwrap();
                playing.clear();
            }
        }
    }
    session.session_id
}

pub fn service_with(course: &Course, log: Box<dyn EventLog + Send>, clock: Arc<ManualClock>) -> StudyService {
    let mut svc = StudyService::new(SchedulerConfig::default(), clock);
    svc.add_course(course.clone(), log).unwrap();
    svc
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
