//! Per-second watch coverage for one user on one video.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::Segment;

/// Longest playhead movement a single heartbeat may report, in seconds.
pub const HEARTBEAT_CAP_S: u32 = 5;

/// Sorted, disjoint, maximal half-open intervals of whole seconds.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(u32, u32)>", into = "Vec<(u32, u32)>")]
pub struct IntervalSet {
    spans: Vec<Range<u32>>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, span: Range<u32>) {
        if span.is_empty() {
            return;
        }
        // First span whose end reaches the new start (touching spans merge).
        let lo = self.spans.partition_point(|s| s.end < span.start);
        // First span starting strictly after the new end.
        let hi = self.spans.partition_point(|s| s.start <= span.end);
        if lo == hi {
            self.spans.insert(lo, span);
            return;
        }
        let start = span.start.min(self.spans[lo].start);
        let end = span.end.max(self.spans[hi - 1].end);
        self.spans.splice(lo..hi, std::iter::once(start..end));
    }

    pub fn contains(&self, second: u32) -> bool {
        let i = self.spans.partition_point(|s| s.end <= second);
        self.spans.get(i).is_some_and(|s| s.start <= second)
    }

    /// Number of seconds covered inside `range`.
    pub fn overlap_len(&self, range: Range<u32>) -> u32 {
        let first = self.spans.partition_point(|s| s.end <= range.start);
        self.spans[first..]
            .iter()
            .take_while(|s| s.start < range.end)
            .map(|s| s.end.min(range.end) - s.start.max(range.start))
            .sum()
    }

    /// Smallest second `>= from` that is not covered.
    pub fn first_gap_from(&self, from: u32) -> u32 {
        let i = self.spans.partition_point(|s| s.end <= from);
        match self.spans.get(i) {
            Some(s) if s.start <= from => s.end,
            _ => from,
        }
    }

    pub fn total_len(&self) -> u32 {
        self.spans.iter().map(|s| s.end - s.start).sum()
    }

    pub fn spans(&self) -> &[Range<u32>] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

impl From<Vec<(u32, u32)>> for IntervalSet {
    fn from(pairs: Vec<(u32, u32)>) -> Self {
        let mut set = IntervalSet::new();
        for (a, b) in pairs {
            set.insert(a..b);
        }
        set
    }
}

impl From<IntervalSet> for Vec<(u32, u32)> {
    fn from(set: IntervalSet) -> Self {
        set.spans.into_iter().map(|s| (s.start, s.end)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("interval [{from_s},{to_s}) is not within [0,{duration_s}]")]
    OutOfBounds { from_s: u32, to_s: u32, duration_s: u32 },
    #[error("position {position_s} is beyond the video end ({duration_s}s)")]
    PositionOutOfBounds { position_s: u32, duration_s: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchCoverage {
    pub user_id: String,
    pub video_id: String,
    pub duration_s: u32,
    pub seen: IntervalSet,
    pub last_position_s: u32,
}

impl WatchCoverage {
    pub fn new(user_id: impl Into<String>, video_id: impl Into<String>, duration_s: u32) -> Self {
        WatchCoverage {
            user_id: user_id.into(),
            video_id: video_id.into(),
            duration_s,
            seen: IntervalSet::new(),
            last_position_s: 0,
        }
    }

    /// Records `[from_s, to_s)` as seen and moves the playhead to `to_s`.
    pub fn mark_watched(&mut self, from_s: u32, to_s: u32) -> Result<(), CoverageError> {
        if from_s > to_s || to_s > self.duration_s {
            return Err(CoverageError::OutOfBounds { from_s, to_s, duration_s: self.duration_s });
        }
        self.seen.insert(from_s..to_s);
        self.last_position_s = to_s;
        Ok(())
    }

    pub fn set_position(&mut self, position_s: u32) -> Result<(), CoverageError> {
        if position_s > self.duration_s {
            return Err(CoverageError::PositionOutOfBounds { position_s, duration_s: self.duration_s });
        }
        self.last_position_s = position_s;
        Ok(())
    }

    pub fn seen_seconds(&self) -> u32 {
        self.seen.total_len()
    }

    /// Fraction of `[start_s, end_s)` already seen; 0 for an empty span.
    pub fn fraction_of(&self, start_s: u32, end_s: u32) -> f64 {
        let end_s = end_s.min(self.duration_s);
        if start_s >= end_s {
            return 0.0;
        }
        f64::from(self.seen.overlap_len(start_s..end_s)) / f64::from(end_s - start_s)
    }

    pub fn watched_fraction(&self, seg: &Segment) -> f64 {
        debug_assert_eq!(seg.video_id, self.video_id);
        self.fraction_of(seg.start_s, seg.end_s)
    }

    /// Target of the "skip to unseen" control: the first unseen second at
    /// or after `from_s`.
    pub fn next_unseen(&self, from_s: u32) -> Option<u32> {
        let s = self.seen.first_gap_from(from_s);
        (s < self.duration_s).then_some(s)
    }

    /// Progress-bar regions with `current_part` as the relevant overlay.
    pub fn coverage_regions(&self, current_part: &Segment) -> Vec<Region> {
        debug_assert_eq!(current_part.video_id, self.video_id);
        self.regions(Some(current_part.start_s..current_part.end_s))
    }

    /// Partition of `[0, duration_s)` into seen/unseen runs, followed by the
    /// relevant overlay when a current part is given.
    pub fn regions(&self, current_part: Option<Range<u32>>) -> Vec<Region> {
        let part = current_part.clone().unwrap_or(0..0);
        let mut cuts = vec![0, self.duration_s];
        for s in self.seen.spans() {
            cuts.push(s.start);
            cuts.push(s.end);
        }
        if !part.is_empty() {
            cuts.push(part.start.min(self.duration_s));
            cuts.push(part.end.min(self.duration_s));
        }
        cuts.sort_unstable();
        cuts.dedup();

        let mut out: Vec<Region> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let tag = if !self.seen.contains(a) {
                RegionTag::Unseen
            } else if part.contains(&a) {
                RegionTag::SeenCurrentPart
            } else {
                RegionTag::SeenPriorParts
            };
            match out.last_mut() {
                Some(r) if r.tag == tag && r.end_s == a => r.end_s = b,
                _ => out.push(Region { start_s: a, end_s: b, tag }),
            }
        }
        if let Some(p) = current_part.filter(|p| !p.is_empty()) {
            out.push(Region { start_s: p.start, end_s: p.end, tag: RegionTag::Relevant });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    SeenPriorParts,
    SeenCurrentPart,
    Unseen,
    Relevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub start_s: u32,
    pub end_s: u32,
    pub tag: RegionTag,
}

/// Derives coverage from a stream of playback reports.
///
/// While playing, each heartbeat, pause or seek marks the span between the
/// previous playhead report and the new position. A seek ends the current
/// span at its origin and, if playback was running, restarts it at the
/// destination.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Playhead {
    pub playing_from: Option<u32>,
}

impl Playhead {
    pub fn play(&mut self, cov: &mut WatchCoverage, position_s: u32) -> Result<(), CoverageError> {
        cov.set_position(position_s)?;
        self.playing_from = Some(position_s);
        Ok(())
    }

    pub fn heartbeat(&mut self, cov: &mut WatchCoverage, position_s: u32) -> Result<(), CoverageError> {
        self.advance(cov, position_s)?;
        self.playing_from = Some(position_s);
        Ok(())
    }

    pub fn pause(&mut self, cov: &mut WatchCoverage, position_s: u32) -> Result<(), CoverageError> {
        self.advance(cov, position_s)?;
        self.playing_from = None;
        Ok(())
    }

    pub fn seek(&mut self, cov: &mut WatchCoverage, from_s: u32, to_s: u32) -> Result<(), CoverageError> {
        if to_s > cov.duration_s {
            return Err(CoverageError::PositionOutOfBounds { position_s: to_s, duration_s: cov.duration_s });
        }
        self.advance(cov, from_s)?;
        cov.set_position(to_s)?;
        if self.playing_from.is_some() {
            self.playing_from = Some(to_s);
        }
        Ok(())
    }

    /// Seconds the playhead would cover if it moved to `position_s` now.
    pub fn pending_span(&self, position_s: u32) -> Option<u32> {
        self.playing_from.map(|p| position_s.saturating_sub(p))
    }

    fn advance(&mut self, cov: &mut WatchCoverage, position_s: u32) -> Result<(), CoverageError> {
        match self.playing_from {
            Some(p) if p <= position_s => cov.mark_watched(p, position_s),
            _ => cov.set_position(position_s),
        }
    }
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;

    fn seg(start_s: u32, end_s: u32) -> Segment {
        Segment { segment_id: format!("v@{start_s}"), video_id: "v".into(), start_s, end_s }
    }

    fn cov(duration_s: u32) -> WatchCoverage {
        WatchCoverage::new("u", "v", duration_s)
    }

    #[test]
    fn mark_counts_seconds() {
        let mut c = cov(30);
        c.mark_watched(10, 20).unwrap();
        assert_eq!(c.seen_seconds(), 10);
        assert!((c.fraction_of(0, 30) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.last_position_s, 20);
    }

    #[test]
    fn overlapping_marks_union() {
        let mut c = cov(30);
        c.mark_watched(0, 10).unwrap();
        c.mark_watched(5, 15).unwrap();
        assert_eq!(c.seen_seconds(), 15);
        assert_eq!(c.seen.spans(), &[0..15]);
    }

    #[test]
    fn empty_mark_leaves_seen_unchanged() {
        let mut c = cov(30);
        c.mark_watched(7, 7).unwrap();
        assert!(c.seen.is_empty());
    }

    #[test]
    fn out_of_bounds_mark_rejected() {
        let mut c = cov(30);
        assert!(c.mark_watched(20, 31).is_err());
        assert!(c.mark_watched(20, 10).is_err());
        assert!(c.seen.is_empty());
    }

    #[test]
    fn adjacent_spans_merge() {
        let mut set = IntervalSet::new();
        set.insert(0..5);
        set.insert(10..15);
        set.insert(5..10);
        assert_eq!(set.spans(), &[0..15]);
        set.insert(20..25);
        set.insert(3..22);
        assert_eq!(set.spans(), &[0..25]);
    }

    #[test]
    fn watched_fraction_extremes() {
        let mut c = cov(100);
        c.mark_watched(0, 50).unwrap();
        assert_eq!(c.watched_fraction(&seg(10, 40)), 1.0);
        assert_eq!(c.watched_fraction(&seg(50, 100)), 0.0);
    }

    #[test]
    fn next_unseen_examples() {
        let mut c = cov(90);
        c.mark_watched(0, 60).unwrap();
        assert_eq!(c.next_unseen(30), Some(60));

        let mut full = cov(90);
        full.mark_watched(0, 90).unwrap();
        assert_eq!(full.next_unseen(0), None);
        assert_eq!(full.next_unseen(90), None);

        let mut gaps = cov(90);
        gaps.mark_watched(0, 10).unwrap();
        gaps.mark_watched(20, 30).unwrap();
        assert_eq!(gaps.next_unseen(5), Some(10));
        assert_eq!(gaps.next_unseen(12), Some(12));
    }

    fn r(start_s: u32, end_s: u32, tag: RegionTag) -> Region {
        Region { start_s, end_s, tag }
    }

    #[test]
    fn regions_with_prior_seen() {
        let mut c = cov(600);
        c.mark_watched(0, 200).unwrap();
        assert_eq!(
            c.coverage_regions(&seg(200, 450)),
            vec![
                r(0, 200, RegionTag::SeenPriorParts),
                r(200, 600, RegionTag::Unseen),
                r(200, 450, RegionTag::Relevant),
            ]
        );
    }

    #[test]
    fn regions_nothing_seen() {
        let c = cov(600);
        assert_eq!(
            c.coverage_regions(&seg(200, 450)),
            vec![r(0, 600, RegionTag::Unseen), r(200, 450, RegionTag::Relevant)]
        );
    }

    #[test]
    fn regions_all_seen_whole_part() {
        let mut c = cov(600);
        c.mark_watched(0, 600).unwrap();
        assert_eq!(
            c.coverage_regions(&seg(0, 600)),
            vec![r(0, 600, RegionTag::SeenCurrentPart), r(0, 600, RegionTag::Relevant)]
        );
    }

    #[test]
    fn regions_split_seen_run_at_part_boundary() {
        let mut c = cov(100);
        c.mark_watched(10, 60).unwrap();
        assert_eq!(
            c.coverage_regions(&seg(40, 80)),
            vec![
                r(0, 10, RegionTag::Unseen),
                r(10, 40, RegionTag::SeenPriorParts),
                r(40, 60, RegionTag::SeenCurrentPart),
                r(60, 100, RegionTag::Unseen),
                r(40, 80, RegionTag::Relevant),
            ]
        );
    }

    #[test]
    fn playhead_play_pause_marks_span() {
        let mut c = cov(100);
        let mut p = Playhead::default();
        p.play(&mut c, 0).unwrap();
        p.pause(&mut c, 30).unwrap();
        assert_eq!(c.seen.spans(), &[0..30]);
        assert_eq!(c.last_position_s, 30);
        assert_eq!(p.playing_from, None);
    }

    #[test]
    fn playhead_seek_ends_span_and_restarts() {
        let mut c = cov(100);
        let mut p = Playhead::default();
        p.play(&mut c, 0).unwrap();
        p.heartbeat(&mut c, 5).unwrap();
        p.seek(&mut c, 7, 50).unwrap();
        p.heartbeat(&mut c, 54).unwrap();
        assert_eq!(c.seen.spans(), &[0..7, 50..54]);
        // Seeking while paused marks nothing.
        p.pause(&mut c, 54).unwrap();
        p.seek(&mut c, 54, 90).unwrap();
        assert_eq!(c.seen.spans(), &[0..7, 50..54]);
        assert_eq!(c.last_position_s, 90);
    }

    #[test]
    fn interval_set_serializes_as_pairs() {
        let mut set = IntervalSet::new();
        set.insert(3..9);
        set.insert(12..14);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, "[[3,9],[12,14]]");
        let back: IntervalSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }
}
