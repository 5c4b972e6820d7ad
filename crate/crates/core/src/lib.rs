//! Engine for question-directed study of lecture videos.
//!
//! * [`course`]: course model and conversion of in-video-quiz courses.
//! * [`coverage`]: per-second watch coverage and progress-bar regions.
//! * [`mastery`]: answer scoring, mastery scores and review scheduling.
//! * [`events`]: append-only interaction log and replay.
//! * [`seek`] and [`analysis`]: seek-chain analytics over interaction logs.
//! * [`service`]: stateful study sessions tying the above together.
//! * [`synth`]: synthetic logs with planted statistics.

pub mod analysis;
pub mod course;
pub mod coverage;
pub mod events;
pub mod mastery;
pub mod seek;
pub mod service;
pub mod synth;

pub use course::{
    convert_course, validate_manifest, Course, CourseManifest, InVideoQuizCourse, Question, Segment, Video,
};
pub use coverage::{IntervalSet, Region, RegionTag, WatchCoverage};
pub use events::{replay, EventLog, FileLog, InteractionEvent, LearnerState, MemoryLog, Payload};
pub use mastery::{AttemptRecord, MasteryScore, SchedulerConfig, StudyState};
pub use seek::{build_chains, classify_chain, compute_stats, SeekChain, SeekStats};
pub use service::{Session, StudyService};
