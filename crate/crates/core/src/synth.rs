//! Synthetic interaction logs with known ground truth.
//!
//! [`PlantSpec`] describes a single-quiz lecture and exact chain counts per
//! class; [`generate_planted`] turns it into session event streams whose
//! seek-chain and rewatch statistics are known in advance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::course::{AnswerOption, InVideoQuiz, InVideoQuizCourse, QuestionKind, Video};
use crate::coverage::HEARTBEAT_CAP_S;
use crate::events::{InteractionEvent, Payload};
use crate::seek::SeekEvent;

pub const PLANTED_VIDEO: &str = "lecture-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub duration_s: u32,
    pub quiz_s: u32,
    pub window_s: u32,
    pub merge_threshold_ms: u64,
    pub finished_fraction: f64,
    pub backward: u32,
    pub backward_from_quiz: u32,
    pub backward_crossing: u32,
    pub forward: u32,
    pub forward_to_window: u32,
    pub forward_crossing: u32,
    pub zero_displacement: u32,
    pub finished_users: u32,
    pub rewatch_users: u32,
    pub unfinished_users: u32,
    /// Unfinished users who open the video a second time; they must not
    /// count as rewatchers.
    pub unfinished_reopen: u32,
    pub seed: u64,
}

impl Default for PlantSpec {
    /// 40% of backward chains leave the quiz, 25% of forward chains land in
    /// the window before it, 90% of chains cross no quiz and 11% of users
    /// who finished the video open it again.
    fn default() -> Self {
        PlantSpec {
            duration_s: 600,
            quiz_s: 300,
            window_s: 10,
            merge_threshold_ms: 5_000,
            finished_fraction: 0.9,
            backward: 50,
            backward_from_quiz: 20,
            backward_crossing: 5,
            forward: 60,
            forward_to_window: 15,
            forward_crossing: 6,
            zero_displacement: 7,
            finished_users: 100,
            rewatch_users: 11,
            unfinished_users: 25,
            unfinished_reopen: 9,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedStats {
    pub backward_from_quiz_fraction: f64,
    pub forward_to_quiz_window_fraction: f64,
    pub chains_not_crossing_quiz_fraction: f64,
    pub rewatch_fraction: f64,
    pub total_chains: u64,
    pub zero_displacement_chains: u64,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<(), String> {
        let (q, w, d) = (self.quiz_s, self.window_s, self.duration_s);
        if q <= w + 2 || q + w + 2 >= d {
            return Err(format!("quiz at {q}s with a {w}s window does not fit a {d}s video"));
        }
        if self.backward_from_quiz + self.backward_crossing > self.backward {
            return Err("backward class counts exceed backward chains".into());
        }
        if self.forward_to_window + self.forward_crossing > self.forward {
            return Err("forward class counts exceed forward chains".into());
        }
        if self.rewatch_users > self.finished_users || self.unfinished_reopen > self.unfinished_users {
            return Err("reopen counts exceed user counts".into());
        }
        if self.finished_users + self.unfinished_users == 0 {
            return Err("need at least one user".into());
        }
        Ok(())
    }

    pub fn expected(&self) -> PlantedStats {
        let total = self.backward + self.forward;
        let crossing = self.backward_crossing + self.forward_crossing;
        PlantedStats {
            backward_from_quiz_fraction: f64::from(self.backward_from_quiz) / f64::from(self.backward),
            forward_to_quiz_window_fraction: f64::from(self.forward_to_window) / f64::from(self.forward),
            chains_not_crossing_quiz_fraction: f64::from(total - crossing) / f64::from(total),
            rewatch_fraction: f64::from(self.rewatch_users) / f64::from(self.finished_users),
            total_chains: total.into(),
            zero_displacement_chains: self.zero_displacement.into(),
        }
    }

    pub fn course(&self) -> InVideoQuizCourse {
        InVideoQuizCourse {
            course_id: "planted".into(),
            videos: vec![Video {
                video_id: PLANTED_VIDEO.into(),
                title: "Planted lecture".into(),
                duration_s: self.duration_s,
                unit_id: "unit-1".into(),
                order_index: 0,
                url: None,
            }],
            quizzes: vec![InVideoQuiz {
                video_id: PLANTED_VIDEO.into(),
                position_s: self.quiz_s,
                prompt: "Which statements hold?".into(),
                options: vec![
                    AnswerOption { text: "first".into(), correct: true },
                    AnswerOption { text: "second".into(), correct: false },
                ],
                kind: QuestionKind::Original,
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChainKind {
    BackwardFromQuiz,
    BackwardCrossing,
    BackwardPlain,
    ForwardToWindow,
    ForwardCrossing,
    ForwardPlain,
    Zero,
}

fn endpoints(kind: ChainKind, spec: &PlantSpec, rng: &mut ChaCha8Rng) -> (u32, u32) {
    let (q, w, d) = (spec.quiz_s, spec.window_s, spec.duration_s);
    match kind {
        ChainKind::BackwardFromQuiz => {
            let src = q + rng.random_range(0..=w);
            let dest = if src == q { rng.random_range(0..q) } else { rng.random_range(q..src) };
            (src, dest)
        }
        ChainKind::BackwardCrossing => (rng.random_range(q + w + 1..=d), rng.random_range(0..q)),
        ChainKind::BackwardPlain => {
            if rng.random_bool(0.5) {
                let src = rng.random_range(1..q);
                (src, rng.random_range(0..src))
            } else {
                let src = rng.random_range(q + w + 1..=d);
                (src, rng.random_range(q..src))
            }
        }
        ChainKind::ForwardToWindow => {
            let dest = rng.random_range(q - w..=q);
            (rng.random_range(0..dest), dest)
        }
        ChainKind::ForwardCrossing => (rng.random_range(0..q), rng.random_range(q + 1..=d)),
        ChainKind::ForwardPlain => {
            if rng.random_bool(0.5) {
                let src = rng.random_range(0..q - w - 1);
                (src, rng.random_range(src + 1..q - w))
            } else {
                let src = rng.random_range(q..d);
                (src, rng.random_range(src + 1..=d))
            }
        }
        ChainKind::Zero => {
            let p = rng.random_range(0..=d);
            (p, p)
        }
    }
}

/// Expands a chain into 1-3 seeks (at least 2 for a zero chain).
fn hops(src: u32, dest: u32, spec: &PlantSpec, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let min = if src == dest { 2 } else { 1 };
    let n = rng.random_range(min..=3);
    let mut points = vec![src];
    for _ in 1..n {
        points.push(rng.random_range(0..=spec.duration_s));
    }
    points.push(dest);
    points.windows(2).map(|p| (p[0], p[1])).collect()
}

struct Writer {
    user: String,
    next_id: u64,
    at_ms: u64,
    events: Vec<InteractionEvent>,
}

impl Writer {
    fn push(&mut self, payload: Payload) {
        self.events.push(InteractionEvent::new(self.next_id, self.user.clone(), self.at_ms, payload));
        self.next_id += 1;
    }

    fn session(&mut self, session_id: &str) {
        self.push(Payload::SessionStart { session_id: session_id.into(), course_id: "planted".into() });
    }

    /// Plays `[0, to_s)` with heartbeats, then pauses.
    fn watch(&mut self, to_s: u32) {
        let video_id = PLANTED_VIDEO.to_string();
        self.push(Payload::VideoPlay { video_id: video_id.clone(), position_s: 0 });
        let mut pos = 0;
        while to_s - pos > HEARTBEAT_CAP_S {
            pos += HEARTBEAT_CAP_S;
            self.at_ms += u64::from(HEARTBEAT_CAP_S) * 1000;
            self.push(Payload::VideoHeartbeat { video_id: video_id.clone(), position_s: pos });
        }
        self.at_ms += u64::from(to_s - pos) * 1000;
        self.push(Payload::VideoPause { video_id, position_s: to_s });
    }
}

/// One session file's events.
pub type SessionEvents = Vec<InteractionEvent>;

/// Generates session logs realizing `spec` exactly.
pub fn generate_planted(spec: &PlantSpec) -> Result<Vec<SessionEvents>, String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let threshold = spec.merge_threshold_ms;

    let mut kinds = Vec::new();
    let plain_back = spec.backward - spec.backward_from_quiz - spec.backward_crossing;
    let plain_fwd = spec.forward - spec.forward_to_window - spec.forward_crossing;
    for (kind, n) in [
        (ChainKind::BackwardFromQuiz, spec.backward_from_quiz),
        (ChainKind::BackwardCrossing, spec.backward_crossing),
        (ChainKind::BackwardPlain, plain_back),
        (ChainKind::ForwardToWindow, spec.forward_to_window),
        (ChainKind::ForwardCrossing, spec.forward_crossing),
        (ChainKind::ForwardPlain, plain_fwd),
        (ChainKind::Zero, spec.zero_displacement),
    ] {
        kinds.extend(std::iter::repeat_n(kind, n as usize));
    }
    kinds.shuffle(&mut rng);

    let users = (spec.finished_users + spec.unfinished_users) as usize;
    let mut per_user: Vec<Vec<ChainKind>> = vec![Vec::new(); users];
    for kind in kinds {
        per_user[rng.random_range(0..users)].push(kind);
    }

    let finish_from = (spec.finished_fraction * f64::from(spec.duration_s)).ceil() as u32;
    let mut sessions = Vec::new();
    for (i, chains) in per_user.into_iter().enumerate() {
        let finished = i < spec.finished_users as usize;
        let reopen = if finished {
            i < spec.rewatch_users as usize
        } else {
            i - (spec.finished_users as usize) < spec.unfinished_reopen as usize
        };
        let mut w = Writer {
            user: format!("user-{i:03}"),
            next_id: 1,
            at_ms: rng.random_range(0..86_400_000),
            events: Vec::new(),
        };
        w.session("s1");
        let watched =
            if finished { rng.random_range(finish_from..=spec.duration_s) } else { rng.random_range(1..finish_from) };
        w.watch(watched);
        for kind in chains {
            w.at_ms += if rng.random_bool(0.2) { threshold } else { rng.random_range(threshold..threshold * 12) };
            let (src, dest) = endpoints(kind, spec, &mut rng);
            for (k, (from_s, to_s)) in hops(src, dest, spec, &mut rng).into_iter().enumerate() {
                if k > 0 {
                    w.at_ms += rng.random_range(0..threshold);
                }
                w.push(Payload::VideoSeek { video_id: PLANTED_VIDEO.into(), from_s, to_s });
            }
        }
        sessions.push(std::mem::take(&mut w.events));
        if reopen {
            w.at_ms += rng.random_range(3_600_000..86_400_000);
            w.session("s2");
            w.watch(rng.random_range(1..finish_from.min(60)));
            sessions.push(std::mem::take(&mut w.events));
        }
    }
    Ok(sessions)
}

/// One user's seek stream on one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeekStream {
    pub user_id: String,
    pub video_id: String,
    pub events: Vec<SeekEvent>,
}

/// Random time-ordered seek streams totalling `total_events` events.
///
/// Gaps are drawn around the merge threshold, including the threshold
/// itself, and a share of seeks return to an earlier position so that
/// zero-displacement chains occur.
pub fn random_seek_streams(
    seed: u64,
    users: usize,
    total_events: usize,
    duration_s: u32,
    merge_threshold_ms: u64,
) -> Vec<SeekStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut streams: Vec<SeekStream> = (0..users)
        .flat_map(|u| {
            (0..2).map(move |v| SeekStream {
                user_id: format!("user-{u:03}"),
                video_id: format!("video-{v}"),
                events: Vec::new(),
            })
        })
        .collect();
    let mut clocks = vec![0u64; streams.len()];
    let mut positions = vec![0u32; streams.len()];
    for _ in 0..total_events {
        let i = rng.random_range(0..streams.len());
        let gap = match rng.random_range(0..10) {
            0 => merge_threshold_ms,
            1 => merge_threshold_ms - 1,
            2..=5 => rng.random_range(0..merge_threshold_ms),
            _ => rng.random_range(merge_threshold_ms..merge_threshold_ms * 20),
        };
        clocks[i] += gap;
        let from_s = positions[i];
        let to_s = match streams[i].events.last() {
            Some(prev) if rng.random_bool(0.15) => prev.from_s,
            _ => rng.random_range(0..=duration_s),
        };
        positions[i] = to_s;
        streams[i].events.push(SeekEvent { at_ms: clocks[i], from_s, to_s });
    }
    streams.retain(|s| !s.events.is_empty());
    streams
}
