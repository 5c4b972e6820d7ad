use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use quizcram_core::analysis::{analyze_dir, AnalysisParams, VideoInfo};
use quizcram_core::events::EventLog;
use quizcram_core::synth::{generate_planted, PlantSpec};
use quizcram_core::{convert_course, validate_manifest, CourseManifest, FileLog, InVideoQuizCourse};
use quizcram_server::{load_course, load_manifest, serve, ServerConfig};

#[derive(Parser)]
#[command(name = "quizcram", version, about = "Question-directed study of video lectures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an in-video quiz course into a course manifest.
    Convert {
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a course manifest and list every violation.
    Validate { manifest: PathBuf },
    /// Compute seek-chain and rewatch statistics from session logs.
    Analyze {
        /// Directory searched recursively for session files.
        #[arg(long)]
        logs: PathBuf,
        /// Course manifest or in-video quiz course providing durations and quizzes.
        #[arg(long)]
        course: PathBuf,
        #[arg(long, default_value_t = AnalysisParams::default().merge_threshold_ms)]
        merge_threshold_ms: u64,
        #[arg(long, default_value_t = AnalysisParams::default().quiz_window_s)]
        quiz_window_s: u32,
        #[arg(long, default_value_t = AnalysisParams::default().finished_fraction)]
        finished_fraction: f64,
        /// Writes report.json, scatter.csv and histogram_<video>.csv here;
        /// without it the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP study service.
    Serve {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Write synthetic session logs with known seek statistics.
    GenerateLogs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = PlantSpec::default().seed)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Convert { input, output } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let source: InVideoQuizCourse =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            let manifest = convert_course(&source)?;
            write_json(output.as_deref(), &manifest)?;
        }
        Command::Validate { manifest } => {
            let text = fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let m: CourseManifest =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest.display()))?;
            let violations = validate_manifest(&m);
            if !violations.is_empty() {
                for v in &violations {
                    println!("{v}");
                }
                return Ok(ExitCode::from(1));
            }
            println!("ok: {} videos, {} segments, {} questions", m.videos.len(), m.segments.len(), m.questions.len());
        }
        Command::Analyze { logs, course, merge_threshold_ms, quiz_window_s, finished_fraction, out } => {
            let course = load_course(&course)?;
            let params = AnalysisParams { merge_threshold_ms, quiz_window_s, finished_fraction };
            let analysis = analyze_dir(&logs, &VideoInfo::from_course(&course), &params)?;
            let Some(out) = out else {
                write_json(None, &analysis.report)?;
                return Ok(ExitCode::SUCCESS);
            };
            fs::create_dir_all(&out)?;
            write_json(Some(&out.join("report.json")), &analysis.report)?;
            let mut scatter = quizcram_core::seek::FigureData::default();
            for (video_id, fig) in &analysis.figures {
                scatter.scatter.extend(fig.scatter.iter().cloned());
                fig.write_histogram_csv(BufWriter::new(File::create(out.join(format!("histogram_{video_id}.csv")))?))?;
            }
            scatter.write_scatter_csv(BufWriter::new(File::create(out.join("scatter.csv"))?))?;
            eprintln!("wrote report and figure data to {}", out.display());
        }
        Command::Serve { config } => {
            let cfg = ServerConfig::load(&config)?;
            tokio::runtime::Runtime::new()?.block_on(serve(cfg))?;
        }
        Command::GenerateLogs { out, seed } => {
            let spec = PlantSpec { seed, ..PlantSpec::default() };
            let sessions = generate_planted(&spec).map_err(anyhow::Error::msg)?;
            fs::create_dir_all(&out)?;
            write_json(Some(&out.join("course.json")), &spec.course())?;
            let mut log = FileLog::open(out.join("logs"))?.without_sync();
            for ev in sessions.into_iter().flatten() {
                log.append(ev)?;
            }
            drop(log);
            write_json(Some(&out.join("expected.json")), &spec.expected())?;
            // Sanity check that the course file loads.
            load_manifest(&out.join("course.json"))?;
            eprintln!("wrote planted logs to {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
