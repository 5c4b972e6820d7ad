//! Seek-chain analysis of video interaction logs.
//!
//! A learner who wants to reach a point in a video often seeks several
//! times in quick succession. Seeks by one user on one video whose
//! wall-clock gap is below the merge threshold are grouped into a chain
//! running from the first seek's origin to the last seek's destination.
//! Chains are then related to in-video quiz positions: backward chains
//! leaving a quiz, forward chains landing just before a quiz, and chains
//! that skip across one.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MERGE_THRESHOLD_MS: u64 = 5_000;
pub const DEFAULT_QUIZ_WINDOW_S: u32 = 10;
pub const DEFAULT_FINISHED_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeekEvent {
    pub at_ms: u64,
    pub from_s: u32,
    pub to_s: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeekChain {
    pub user_id: String,
    pub video_id: String,
    pub source_s: u32,
    pub dest_s: u32,
    pub started_at_ms: u64,
    pub direction: Direction,
    /// Quiz positions strictly between the two endpoints.
    pub crossed_quizzes: Vec<u32>,
    /// Number of raw seek events merged into this chain.
    pub seeks: usize,
}

impl SeekChain {
    pub fn low(&self) -> u32 {
        self.source_s.min(self.dest_s)
    }

    pub fn high(&self) -> u32 {
        self.source_s.max(self.dest_s)
    }

    pub fn span_s(&self) -> u32 {
        self.high() - self.low()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeekError {
    #[error("seek events must be sorted by time: event {index} at {at_ms} ms follows {prev_ms} ms")]
    Unsorted { index: usize, at_ms: u64, prev_ms: u64 },
}

/// Chains built from one user's seeks on one video.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chains {
    pub chains: Vec<SeekChain>,
    /// Chains whose net displacement was zero; they carry no direction.
    pub zero_displacement: usize,
}

pub fn crossed(low: u32, high: u32, quizzes: &[u32]) -> Vec<u32> {
    let start = quizzes.partition_point(|&q| q <= low);
    quizzes[start..].iter().copied().take_while(|&q| q < high).collect()
}

/// Groups time-ordered seeks into chains. Consecutive seeks merge when
/// their gap is strictly below `merge_threshold_ms`.
pub fn build_chains(
    user_id: &str,
    video_id: &str,
    events: &[SeekEvent],
    quizzes: &[u32],
    merge_threshold_ms: u64,
) -> Result<Chains, SeekError> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].at_ms < w[0].at_ms {
            return Err(SeekError::Unsorted { index: i + 1, at_ms: w[1].at_ms, prev_ms: w[0].at_ms });
        }
    }
    let mut out = Chains::default();
    let mut rest = events;
    while let Some(first) = rest.first() {
        let len = 1 + rest.windows(2).take_while(|w| w[1].at_ms - w[0].at_ms < merge_threshold_ms).count();
        let last = rest[len - 1];
        rest = &rest[len..];
        if first.from_s == last.to_s {
            out.zero_displacement += 1;
            continue;
        }
        let direction = if last.to_s > first.from_s { Direction::Forward } else { Direction::Backward };
        let (low, high) = (first.from_s.min(last.to_s), first.from_s.max(last.to_s));
        out.chains.push(SeekChain {
            user_id: user_id.to_string(),
            video_id: video_id.to_string(),
            source_s: first.from_s,
            dest_s: last.to_s,
            started_at_ms: first.at_ms,
            direction,
            crossed_quizzes: crossed(low, high, quizzes),
            seeks: len,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainClass {
    /// Source lies at a quiz or within the window after it.
    pub starts_at_quiz: bool,
    /// Forward chain landing at a quiz or within the window before it.
    pub ends_in_quiz_window: bool,
    pub crosses_quiz: bool,
}

impl ChainClass {
    pub fn is_plain(&self) -> bool {
        !(self.starts_at_quiz || self.ends_in_quiz_window || self.crosses_quiz)
    }
}

pub fn classify_chain(c: &SeekChain, quizzes: &[u32], window_s: u32) -> ChainClass {
    let starts_at_quiz = quizzes.iter().any(|&q| c.source_s >= q && c.source_s - q <= window_s);
    let ends_in_quiz_window =
        c.direction == Direction::Forward && quizzes.iter().any(|&q| c.dest_s <= q && q - c.dest_s <= window_s);
    let crosses_quiz = !crossed(c.low(), c.high(), quizzes).is_empty();
    ChainClass { starts_at_quiz, ends_in_quiz_window, crosses_quiz }
}

/// Video opens by one user, for the rewatch statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenTally {
    pub opens: u32,
    /// Whether any single open covered the finished fraction of the video.
    pub finished: bool,
}

/// Mergeable counters behind [`SeekStats`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeekTally {
    pub total_chains: u64,
    pub zero_displacement: u64,
    pub backward: u64,
    pub backward_from_quiz: u64,
    pub forward: u64,
    pub forward_to_quiz_window: u64,
    pub crossing: u64,
    pub forward_quiz_crossings: u64,
    pub forward_seconds_skipped: u64,
    pub quizzes: u64,
    pub duration_s: u64,
    pub finished_users: u64,
    pub rewatch_users: u64,
}

impl SeekTally {
    /// Tally for one video.
    pub fn for_video(chains: &Chains, quizzes: &[u32], duration_s: u32, window_s: u32) -> Self {
        let mut t = SeekTally {
            quizzes: quizzes.len() as u64,
            duration_s: duration_s.into(),
            zero_displacement: chains.zero_displacement as u64,
            ..Default::default()
        };
        for c in &chains.chains {
            t.add_chain(c, quizzes, window_s);
        }
        t
    }

    pub fn add_chain(&mut self, c: &SeekChain, quizzes: &[u32], window_s: u32) {
        let class = classify_chain(c, quizzes, window_s);
        self.total_chains += 1;
        if class.crosses_quiz {
            self.crossing += 1;
        }
        match c.direction {
            Direction::Backward => {
                self.backward += 1;
                if class.starts_at_quiz {
                    self.backward_from_quiz += 1;
                }
            }
            Direction::Forward => {
                self.forward += 1;
                if class.ends_in_quiz_window {
                    self.forward_to_quiz_window += 1;
                }
                self.forward_quiz_crossings += c.crossed_quizzes.len() as u64;
                self.forward_seconds_skipped += u64::from(c.span_s());
            }
        }
    }

    pub fn add_opens<'a>(&mut self, opens: impl IntoIterator<Item = &'a OpenTally>) {
        for o in opens {
            if o.finished {
                self.finished_users += 1;
                if o.opens >= 2 {
                    self.rewatch_users += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &SeekTally) {
        self.total_chains += other.total_chains;
        self.zero_displacement += other.zero_displacement;
        self.backward += other.backward;
        self.backward_from_quiz += other.backward_from_quiz;
        self.forward += other.forward;
        self.forward_to_quiz_window += other.forward_to_quiz_window;
        self.crossing += other.crossing;
        self.forward_quiz_crossings += other.forward_quiz_crossings;
        self.forward_seconds_skipped += other.forward_seconds_skipped;
        self.quizzes += other.quizzes;
        self.duration_s += other.duration_s;
        self.finished_users += other.finished_users;
        self.rewatch_users += other.rewatch_users;
    }

    pub fn stats(&self) -> SeekStats {
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        let has_quizzes = self.quizzes > 0;
        let quiz_ratio = |n: u64, d: u64| if has_quizzes { ratio(n, d) } else { None };

        let per_quiz_backward_rate_ratio = if has_quizzes && self.backward > 0 && self.duration_s > 0 {
            let per_quiz = self.backward_from_quiz as f64 / self.quizzes as f64;
            let per_second = self.backward as f64 / self.duration_s as f64;
            Some(per_quiz / per_second)
        } else {
            None
        };
        let forward_cross_rate_ratio = if has_quizzes && self.forward_seconds_skipped > 0 && self.duration_s > 0 {
            let per_quiz = self.forward_quiz_crossings as f64 / self.quizzes as f64;
            let per_second = self.forward_seconds_skipped as f64 / self.duration_s as f64;
            Some(per_quiz / per_second)
        } else {
            None
        };

        SeekStats {
            total_chains: self.total_chains,
            backward_chains: self.backward,
            forward_chains: self.forward,
            zero_displacement_chains: self.zero_displacement,
            backward_from_quiz_fraction: quiz_ratio(self.backward_from_quiz, self.backward),
            forward_to_quiz_window_fraction: quiz_ratio(self.forward_to_quiz_window, self.forward),
            chains_not_crossing_quiz_fraction: quiz_ratio(self.total_chains - self.crossing, self.total_chains),
            per_quiz_backward_rate_ratio,
            forward_cross_rate_ratio,
            rewatch_fraction: ratio(self.rewatch_users, self.finished_users),
        }
    }
}

/// Summary statistics; `None` marks a field whose denominator was zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekStats {
    pub total_chains: u64,
    pub backward_chains: u64,
    pub forward_chains: u64,
    pub zero_displacement_chains: u64,
    pub backward_from_quiz_fraction: Option<f64>,
    pub forward_to_quiz_window_fraction: Option<f64>,
    pub chains_not_crossing_quiz_fraction: Option<f64>,
    /// Backward chains leaving a quiz, per quiz, over backward chains per
    /// second of video.
    pub per_quiz_backward_rate_ratio: Option<f64>,
    /// Forward chains crossing a quiz, per quiz, over forward chains
    /// skipping a second of video, per second.
    pub forward_cross_rate_ratio: Option<f64>,
    pub rewatch_fraction: Option<f64>,
}

pub fn compute_stats(
    chains: &Chains,
    quizzes: &[u32],
    video_duration_s: u32,
    opens: &[OpenTally],
    window_s: u32,
) -> SeekStats {
    let mut t = SeekTally::for_video(chains, quizzes, video_duration_s, window_s);
    t.add_opens(opens);
    t.stats()
}

/// Tables for external plotting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureData {
    pub scatter: Vec<ScatterRow>,
    pub histogram: Vec<HistogramRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub video_id: String,
    pub source_s: u32,
    pub dest_s: u32,
    pub direction: Direction,
    pub crosses_quiz: bool,
}

/// Per-second counts; only seconds with a non-zero count are listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub second: u32,
    pub seek_destinations: u64,
    pub forward_skips: u64,
}

pub fn emit_figure_data(chains: &[SeekChain], quizzes: &[u32]) -> FigureData {
    let scatter = chains
        .iter()
        .map(|c| ScatterRow {
            video_id: c.video_id.clone(),
            source_s: c.source_s,
            dest_s: c.dest_s,
            direction: c.direction,
            crosses_quiz: !crossed(c.low(), c.high(), quizzes).is_empty(),
        })
        .collect();

    let mut dest: BTreeMap<u32, u64> = BTreeMap::new();
    // Difference array of forward skips keyed by second.
    let mut delta: BTreeMap<u32, i64> = BTreeMap::new();
    for c in chains {
        *dest.entry(c.dest_s).or_default() += 1;
        if c.direction == Direction::Forward {
            *delta.entry(c.source_s).or_default() += 1;
            *delta.entry(c.dest_s).or_default() -= 1;
        }
    }

    let mut histogram = Vec::new();
    let mut keys: Vec<u32> = dest.keys().chain(delta.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let mut running: i64 = 0;
    for (i, &k) in keys.iter().enumerate() {
        running += delta.get(&k).copied().unwrap_or(0);
        let next = keys.get(i + 1).copied().unwrap_or(k + 1);
        // Seconds in [k, next) share the running skip count.
        for s in k..next {
            let d = if s == k { dest.get(&k).copied().unwrap_or(0) } else { 0 };
            if d > 0 || running > 0 {
                histogram.push(HistogramRow { second: s, seek_destinations: d, forward_skips: running as u64 });
            }
        }
    }
    FigureData { scatter, histogram }
}

impl FigureData {
    pub fn write_scatter_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["video_id", "source_s", "dest_s", "direction", "crosses_quiz"])?;
        for r in &self.scatter {
            let dir = match r.direction {
                Direction::Forward => "forward",
                Direction::Backward => "backward",
            };
            out.write_record([
                r.video_id.as_str(),
                &r.source_s.to_string(),
                &r.dest_s.to_string(),
                dir,
                if r.crosses_quiz { "1" } else { "0" },
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["second", "seek_destinations", "forward_skips"])?;
        for r in &self.histogram {
            out.write_record([r.second.to_string(), r.seek_destinations.to_string(), r.forward_skips.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
