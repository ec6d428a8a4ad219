use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tracegt::io::{self, FormatError};
use tracegt::pipeline::{self, DeriveConfig, EvalError, EvalTask, OutputFormats, PipelineError};
use tracegt::scene::{self, SceneError, SceneScript};
use tracegt::trace::{self, TraceError};
use tracegt::tracking::DEFAULT_MAX_EXTRAPOLATION;

const EXIT_INPUT: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "tracegt", version, about = "Ground truth from recorded rendering traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene script into a trace plus its oracle ground truth.
    Generate {
        /// Scene script (TOML).
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        script: Option<PathBuf>,
        /// Built-in scene.
        #[arg(long)]
        preset: Option<String>,
        /// Output directory; must be absent or empty.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the script seed; presets default to 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Derive every annotation from a trace.
    Derive {
        #[arg(long)]
        trace: PathBuf,
        /// Output directory; must be absent or empty.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads, 0 for one per core.
        #[arg(long, env = "TRACEGT_THREADS", default_value_t = 0)]
        threads: usize,
        /// Frames a lost track is extrapolated before it is retired.
        #[arg(long, default_value_t = DEFAULT_MAX_EXTRAPOLATION)]
        max_extrapolation: u32,
        /// Also write hue-wheel flow and colored instance images.
        #[arg(long)]
        export_vis: bool,
        /// Restrict output to these formats (repeatable); all by default.
        #[arg(long, value_enum)]
        format: Vec<Format>,
        /// Extra flow pairs `(f, f + k)` for each offset `k >= 2` (repeatable).
        #[arg(long)]
        wide_baseline: Vec<usize>,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(value_enum)]
        task: Task,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Machine-readable results; defaults to `<pred>/eval_<task>.txt`.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Png,
    Flo,
    Txt,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Seg,
    Inst,
    Flow,
    Odom,
}

impl From<Task> for EvalTask {
    fn from(t: Task) -> Self {
        match t {
            Task::Seg => EvalTask::Seg,
            Task::Inst => EvalTask::Inst,
            Task::Flow => EvalTask::Flow,
            Task::Odom => EvalTask::Odom,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Input(e.to_string())
    }
}

/// Output-side format errors: I/O is exit 3, anything else is bad input.
fn output_error(e: FormatError) -> Failure {
    if e.is_io() {
        Failure::Io(e.to_string())
    } else {
        Failure::Input(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Creates `out` and removes whatever was written if `work` fails.
fn with_output_dir(out: &Path, work: impl FnOnce() -> Result<(), Failure>) -> Result<(), Failure> {
    let existed = out.exists();
    if existed {
        let mut entries = fs::read_dir(out).map_err(|e| io_error(out, e))?;
        if entries.next().is_some() {
            return Err(Failure::Input(format!("{}: output directory is not empty", out.display())));
        }
    }
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let result = work();
    if result.is_err() {
        if existed {
            if let Ok(entries) = fs::read_dir(out) {
                for e in entries.flatten() {
                    let p = e.path();
                    let _ = if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) };
                }
            }
        } else {
            let _ = fs::remove_dir_all(out);
        }
    }
    result
}

fn generate(script: Option<PathBuf>, preset: Option<String>, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let script = match (script, preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let mut s = SceneScript::from_toml(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s
        }
        (None, Some(name)) => scene::preset(&name, seed.unwrap_or(0))?,
        (None, None) => return Err(Failure::Input("one of --script or --preset is required".into())),
    };
    let (seq, truth) = scene::generate_scene(&script)?;
    with_output_dir(out, || {
        let trace_path = out.join("trace.vptr");
        trace::write_trace(&seq, &trace_path).map_err(|e| match e {
            TraceError::Io(io) => io_error(&trace_path, io),
            other => Failure::Input(other.to_string()),
        })?;
        pipeline::write_oracle(&seq, &truth, &out.join("oracle")).map_err(output_error)?;
        let manifest = out.join("manifest.toml");
        fs::write(&manifest, truth.manifest.to_toml()).map_err(|e| io_error(&manifest, e))?;
        println!(
            "wrote {} frames, {} draws ({} culled, {} depth-failed) to {}",
            truth.manifest.frames,
            truth.manifest.draws,
            truth.manifest.culled_draws,
            truth.manifest.depth_failed_draws,
            out.display()
        );
        Ok(())
    })
}

fn derive(trace_path: &Path, out: &Path, config: DeriveConfig) -> Result<(), Failure> {
    let seq = trace::load_trace(trace_path).map_err(|e| Failure::Input(format!("{}: {e}", trace_path.display())))?;
    let derived = pipeline::derive(&seq, &config)?;
    with_output_dir(out, || {
        let files = pipeline::write_outputs(&seq, &derived, out, &config).map_err(output_error)?;
        println!(
            "derived {} frames, {} flow pairs, {} tracks; {} files in {}",
            derived.frames.len(),
            derived.flows.len(),
            derived.tracks.tracks.len(),
            files.len(),
            out.display()
        );
        Ok(())
    })
}

fn evaluate(task: Task, pred: &Path, gt: &Path, results: Option<PathBuf>) -> Result<(), Failure> {
    let task = EvalTask::from(task);
    let report = pipeline::evaluate(task, pred, gt).map_err(|e| match e {
        EvalError::Format(f) => Failure::Input(f.to_string()),
        other => Failure::Input(other.to_string()),
    })?;
    let text = report.render();
    print!("{text}");
    let path = results.unwrap_or_else(|| pred.join(format!("eval_{}.txt", task.name())));
    io::write_text(&path, &text).map_err(output_error)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            script,
            preset,
            out,
            seed,
        } => generate(script, preset, &out, seed),
        Command::Derive {
            trace,
            out,
            threads,
            max_extrapolation,
            export_vis,
            format,
            wide_baseline,
        } => {
            let formats = if format.is_empty() {
                OutputFormats::ALL
            } else {
                OutputFormats {
                    png: format.iter().any(|f| matches!(f, Format::Png)),
                    flo: format.iter().any(|f| matches!(f, Format::Flo)),
                    txt: format.iter().any(|f| matches!(f, Format::Txt)),
                }
            };
            if let Some(k) = wide_baseline.iter().find(|&&k| k < 2) {
                return Err(Failure::Input(format!("--wide-baseline {k}: offsets start at 2")));
            }
            let config = DeriveConfig {
                threads,
                max_extrapolation_frames: max_extrapolation,
                wide_baseline,
                export_vis,
                formats,
            };
            derive(&trace, &out, config)
        }
        Command::Evaluate {
            task,
            pred,
            gt,
            results,
        } => evaluate(task, &pred, &gt, results),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn failing_write(out: &Path) -> Result<(), Failure> {
        with_output_dir(out, || {
            fs::create_dir_all(out.join("flow")).unwrap();
            fs::write(out.join("flow/a.flo"), b"x").unwrap();
            Err(Failure::Io("disk full".into()))
        })
    }

    #[test]
    fn failure_removes_a_created_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert_eq!(failing_write(&out).unwrap_err().code(), EXIT_IO);
        assert!(!out.exists());
    }

    #[test]
    fn failure_empties_a_pre_existing_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(failing_write(dir.path()).is_err());
        assert!(dir.path().is_dir());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn success_keeps_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        with_output_dir(&out, || {
            fs::write(out.join("a"), b"x").unwrap();
            Ok(())
        })
        .unwrap();
        assert!(out.join("a").is_file());
    }
}
