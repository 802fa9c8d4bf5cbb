//! `tvbench`: batch evaluation, clip curation and fixture generation.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tvbench_core::config::{ConfigError, EngineConfig, ReportFormat};
use tvbench_core::curation::curate_clip;
use tvbench_core::eval::{evaluate_corpus, ClipTiming, CorpusError, CorpusOptions, TrackSelection};
use tvbench_core::formats::{
    load_corpus, load_detections, load_mask_dir, load_pose_dump, write_bytes, write_json, CurationManifest, FormatError,
    SCHEMA_VERSION,
};
use tvbench_core::synth::{write_corpus, write_curation_suite, CorpusSpec};

#[derive(Parser)]
#[command(name = "tvbench", version, about = "Multi-person video generation benchmark engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a corpus of clips and write a report.
    Eval {
        /// Tracks to evaluate: 1, 2, 3, a list such as 1,2, or all.
        #[arg(long, default_value = "all", value_parser = parse_track)]
        track: TrackSelection,
        /// Corpus file listing clip manifests.
        #[arg(long)]
        corpus: PathBuf,
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path; a `.csv` extension selects CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Report format, overriding the extension and the config.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Worker threads (0 = one per CPU).
        #[arg(long, env = "TVBENCH_THREADS")]
        threads: Option<usize>,
        /// Record failing clips in the report instead of aborting.
        #[arg(long)]
        skip_errors: bool,
        /// Print per-clip timings to stderr.
        #[arg(long)]
        profile: bool,
    },
    /// Run tracking, subject selection, filtering and pose assignment.
    Curate {
        /// Directory of `<clip>.jsonl` detection dumps.
        #[arg(long)]
        detections: PathBuf,
        /// Directory of `<clip>.json` pose dumps.
        #[arg(long)]
        poses: PathBuf,
        /// Directory of `<clip>/<person>/` mask directories.
        #[arg(long)]
        masks: PathBuf,
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for curation manifests.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus with known answers.
    GenFixtures {
        /// Generator seed; the same seed writes the same files.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FixtureKind::Eval)]
        kind: FixtureKind,
        /// Number of clips, overriding the kind's default.
        #[arg(long)]
        clips: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FixtureKind {
    /// Ten small clips with every input present.
    Eval,
    /// As `eval` with predictions equal to the ground truth.
    Perfect,
    /// A hundred 300-frame clips with tracks and poses.
    Throughput,
    /// Twelve curation scenes, one per acceptance rule.
    Curation,
}

fn parse_track(s: &str) -> Result<TrackSelection, String> {
    TrackSelection::parse(s).ok_or_else(|| format!("expected 1, 2, 3, a comma list of those, or all, got `{s}`"))
}

enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Data(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, Failure> {
    Ok(match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    })
}

fn print_profile(timings: &[ClipTiming]) {
    let width = timings.iter().map(|t| t.clip.len()).max().unwrap_or(4).max(4);
    eprintln!("{:<width$}  {:>10}  status", "clip", "seconds");
    for t in timings {
        eprintln!("{:<width$}  {:>10.4}  {}", t.clip, t.seconds, if t.ok { "ok" } else { "error" });
    }
    let total: f64 = timings.iter().map(|t| t.seconds).sum();
    eprintln!("{:<width$}  {:>10.4}  ({} clips)", "total", total, timings.len());
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    track: TrackSelection,
    corpus: &Path,
    config: Option<&Path>,
    out: &Path,
    format: Option<FormatArg>,
    threads: Option<usize>,
    skip_errors: bool,
    profile: bool,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let format = match format {
        Some(FormatArg::Json) => ReportFormat::Json,
        Some(FormatArg::Csv) => ReportFormat::Csv,
        None if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => ReportFormat::Csv,
        None if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => ReportFormat::Json,
        None => cfg.run.format,
    };
    let threads = threads.unwrap_or(cfg.run.threads);
    let manifests = load_corpus(corpus)?;
    let opts = CorpusOptions { tracks: track, threads, skip_errors };
    let run = evaluate_corpus(&manifests, &opts, &cfg).map_err(|e| match e {
        CorpusError::Clip { .. } => Failure::Data(e.to_string()),
        CorpusError::Pool(_) => Failure::Internal(e.to_string()),
    })?;
    if profile {
        print_profile(&run.timings);
    }
    let bytes = match format {
        ReportFormat::Json => run.report.to_json(),
        ReportFormat::Csv => run.report.to_csv(),
    };
    write_bytes(out, &bytes).map_err(|e| Failure::Internal(e.to_string()))?;
    for failure in &run.report.errors {
        eprintln!("skipped {}: {}", failure.clip, failure.message);
    }
    Ok(())
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>, Failure> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() == want_dirs)
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Serialize)]
struct VerdictIndex {
    schema_version: u32,
    clips: Vec<VerdictLine>,
}

#[derive(Serialize)]
struct VerdictLine {
    clip_id: String,
    accepted: bool,
    reasons: Vec<String>,
}

fn cmd_curate(detections: &Path, poses: &Path, masks: &Path, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let dumps: Vec<PathBuf> =
        sorted_entries(detections, false)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "jsonl")).collect();
    let mut index = Vec::new();
    for dump in dumps {
        let clip_id = dump.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let dets = load_detections(&dump)?;
        let (fps, pose_frames) = load_pose_dump(&poses.join(format!("{clip_id}.json")), cfg.pose.min_confidence)?;
        let person_masks =
            sorted_entries(&masks.join(&clip_id), true)?.iter().map(|d| load_mask_dir(d)).collect::<Result<Vec<_>, _>>()?;
        let first = person_masks
            .first()
            .and_then(|m| m.masks().first())
            .ok_or_else(|| Failure::Data(format!("clip {clip_id}: no person masks")))?;
        let dims = (first.width(), first.height());
        let outcome = curate_clip(&dets, &pose_frames, &person_masks, fps, dims, &cfg.association, &cfg.filter)
            .map_err(|e| Failure::Data(format!("clip {clip_id}: {e}")))?;
        let manifest = CurationManifest::from_outcome(&clip_id, dets.len(), &outcome);
        write_json(&out.join(format!("{clip_id}.json")), &manifest).map_err(|e| Failure::Internal(e.to_string()))?;
        let reasons: Vec<String> = outcome.verdict.reasons.iter().map(|r| r.message.clone()).collect();
        println!("{clip_id}: {}{}", if outcome.verdict.accepted { "accepted" } else { "rejected" }, if reasons.is_empty() { String::new() } else { format!(" ({})", reasons.join("; ")) });
        index.push(VerdictLine { clip_id, accepted: outcome.verdict.accepted, reasons });
    }
    write_json(&out.join("verdicts.json"), &VerdictIndex { schema_version: SCHEMA_VERSION, clips: index })
        .map_err(|e| Failure::Internal(e.to_string()))
}

fn cmd_gen(seed: u64, out: &Path, kind: FixtureKind, clips: Option<usize>) -> Result<(), Failure> {
    let internal = |e: FormatError| Failure::Internal(e.to_string());
    if kind == FixtureKind::Curation {
        let cases = write_curation_suite(out, seed).map_err(internal)?;
        println!("wrote {} curation scenes to {}", cases.len(), out.display());
        return Ok(());
    }
    let mut spec = match kind {
        FixtureKind::Throughput => CorpusSpec::throughput(),
        FixtureKind::Perfect => CorpusSpec { perfect: true, ..CorpusSpec::fixture() },
        _ => CorpusSpec::fixture(),
    };
    if let Some(n) = clips {
        spec.clips = n;
    }
    let (corpus, _) = write_corpus(out, &spec, seed).map_err(internal)?;
    println!("{}", corpus.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Eval { track, corpus, config, out, format, threads, skip_errors, profile } => {
            cmd_eval(track, &corpus, config.as_deref(), &out, format, threads, skip_errors, profile)
        }
        Command::Curate { detections, poses, masks, config, out } => {
            cmd_curate(&detections, &poses, &masks, config.as_deref(), &out)
        }
        Command::GenFixtures { seed, out, kind, clips } => cmd_gen(seed, &out, kind, clips),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(failure)) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
        Err(_) => ExitCode::from(3),
    }
}
