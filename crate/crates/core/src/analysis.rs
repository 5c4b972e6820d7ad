//! Seek and rewatch analysis over a directory of session log files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::course::Course;
use crate::coverage::{Playhead, WatchCoverage};
use crate::events::{event_counts, read_session_file, session_files, EventCounts, LogError, Payload, SessionFile};
use crate::seek::{
    build_chains, emit_figure_data, FigureData, OpenTally, SeekChain, SeekError, SeekEvent, SeekStats, SeekTally,
    DEFAULT_FINISHED_FRACTION, DEFAULT_MERGE_THRESHOLD_MS, DEFAULT_QUIZ_WINDOW_S,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub merge_threshold_ms: u64,
    pub quiz_window_s: u32,
    /// Share of a video one open must cover to count as finishing it.
    pub finished_fraction: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            merge_threshold_ms: DEFAULT_MERGE_THRESHOLD_MS,
            quiz_window_s: DEFAULT_QUIZ_WINDOW_S,
            finished_fraction: DEFAULT_FINISHED_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub duration_s: u32,
    pub quizzes: Vec<u32>,
}

impl VideoInfo {
    pub fn from_course(course: &Course) -> BTreeMap<String, VideoInfo> {
        course
            .manifest()
            .videos
            .iter()
            .map(|v| {
                let info = VideoInfo { duration_s: v.duration_s, quizzes: course.quiz_positions(&v.video_id) };
                (v.video_id.clone(), info)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub params: AnalysisParams,
    pub session_files: usize,
    pub users: usize,
    /// Events naming a video that is not in the course.
    pub skipped_unknown_video: u64,
    /// Playback events with positions beyond the video end.
    pub skipped_out_of_bounds: u64,
    pub overall: SeekStats,
    pub per_video: BTreeMap<String, SeekStats>,
    pub events: EventCounts,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub chains: Vec<SeekChain>,
    pub figures: BTreeMap<String, FigureData>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Seek(#[from] SeekError),
}

#[derive(Default)]
struct PerVideo {
    /// (user, seeks) with the event id kept for a stable sort.
    seeks: BTreeMap<String, Vec<(u64, SeekEvent)>>,
    opens: BTreeMap<String, OpenTally>,
}

pub fn analyze_dir(
    dir: &Path,
    videos: &BTreeMap<String, VideoInfo>,
    params: &AnalysisParams,
) -> Result<Analysis, AnalysisError> {
    let files = session_files(dir)?.iter().map(|p| read_session_file(p)).collect::<Result<Vec<_>, _>>()?;
    analyze_sessions(&files, videos, params)
}

pub fn analyze_sessions(
    files: &[SessionFile],
    videos: &BTreeMap<String, VideoInfo>,
    params: &AnalysisParams,
) -> Result<Analysis, AnalysisError> {
    let mut per_video: BTreeMap<&str, PerVideo> = videos.keys().map(|k| (k.as_str(), PerVideo::default())).collect();
    let mut users = std::collections::BTreeSet::new();
    let mut skipped_unknown_video = 0;
    let mut skipped_out_of_bounds = 0;

    for file in files {
        // One open per (session, video): coverage gained within this file.
        let mut opened: BTreeMap<&str, (WatchCoverage, Playhead)> = BTreeMap::new();
        for ev in &file.events {
            users.insert(ev.user_id.as_str());
            let Some(video_id) = ev.payload.video_id() else { continue };
            let (Some(info), Some(slot)) = (videos.get(video_id), per_video.get_mut(video_id)) else {
                skipped_unknown_video += 1;
                continue;
            };
            let (cov, head) = opened.entry(video_id).or_insert_with(|| {
                (WatchCoverage::new(ev.user_id.as_str(), video_id, info.duration_s), Playhead::default())
            });
            let applied = match &ev.payload {
                Payload::VideoPlay { position_s, .. } => head.play(cov, *position_s),
                Payload::VideoPause { position_s, .. } => head.pause(cov, *position_s),
                Payload::VideoHeartbeat { position_s, .. } => head.heartbeat(cov, *position_s),
                Payload::VideoSeek { from_s, to_s, .. } => {
                    let r = head.seek(cov, *from_s, *to_s);
                    if r.is_ok() {
                        slot.seeks
                            .entry(ev.user_id.clone())
                            .or_default()
                            .push((ev.event_id, SeekEvent { at_ms: ev.at_ms, from_s: *from_s, to_s: *to_s }));
                    }
                    r
                }
                _ => Ok(()),
            };
            if applied.is_err() {
                skipped_out_of_bounds += 1;
            }
        }
        for (video_id, (cov, _)) in opened {
            let info = &videos[video_id];
            let finished = f64::from(cov.seen_seconds()) >= params.finished_fraction * f64::from(info.duration_s);
            let tally = per_video.get_mut(video_id).expect("known video").opens.entry(cov.user_id).or_default();
            tally.opens += 1;
            tally.finished |= finished;
        }
    }

    let mut overall = SeekTally::default();
    let mut per_video_stats = BTreeMap::new();
    let mut all_chains = Vec::new();
    let mut figures = BTreeMap::new();
    for (video_id, data) in per_video {
        let info = &videos[video_id];
        let mut tally =
            SeekTally { quizzes: info.quizzes.len() as u64, duration_s: info.duration_s.into(), ..Default::default() };
        let mut video_chains = Vec::new();
        for (user, mut seeks) in data.seeks {
            seeks.sort_by_key(|(id, s)| (s.at_ms, *id));
            let events: Vec<SeekEvent> = seeks.into_iter().map(|(_, s)| s).collect();
            let chains = build_chains(&user, video_id, &events, &info.quizzes, params.merge_threshold_ms)?;
            tally.zero_displacement += chains.zero_displacement as u64;
            for c in &chains.chains {
                tally.add_chain(c, &info.quizzes, params.quiz_window_s);
            }
            video_chains.extend(chains.chains);
        }
        tally.add_opens(data.opens.values());
        overall.merge(&tally);
        per_video_stats.insert(video_id.to_string(), tally.stats());
        figures.insert(video_id.to_string(), emit_figure_data(&video_chains, &info.quizzes));
        all_chains.extend(video_chains);
    }

    let report = AnalysisReport {
        params: *params,
        session_files: files.len(),
        users: users.len(),
        skipped_unknown_video,
        skipped_out_of_bounds,
        overall: overall.stats(),
        per_video: per_video_stats,
        events: event_counts(files.iter().flat_map(|f| &f.events)),
    };
    Ok(Analysis { report, chains: all_chains, figures })
}
