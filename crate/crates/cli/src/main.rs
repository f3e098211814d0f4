//! Batch CLI: the full pipeline plus per-stage subcommands that share the
//! same file formats, so any stage's output can be inspected or substituted.
//!
//! Exit codes: 0 ok, 2 config, 3 input, 4 degenerate data, 5 internal.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use touchmap_core::config::PipelineConfig;
use touchmap_core::error::Result;
use touchmap_core::frame::{load_sequence, save_sequence, SequenceFormat};
use touchmap_core::pipeline::run_pipeline;
use touchmap_core::plot;
use touchmap_core::preprocess::{build_detections, load_detections_csv, save_detections_csv};
use touchmap_core::render::{render, save_signal_csv};
use touchmap_core::synth::{synthesize, SynthKind, SynthParams};
use touchmap_core::tracking::{load_trajectories_csv, save_trajectories_csv, solve_tracking};
use touchmap_core::workspace::{load_selection_json, save_selection_json, search_transforms};

#[derive(Parser)]
#[command(
    name = "touchmap",
    about = "Maps recorded pressure-array touch onto a sparse actuator array",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigOpt {
    /// Pipeline config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigOpt {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(path) => PipelineConfig::load(path),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run detect, track, map, and render; write all stage artifacts.
    Pipeline {
        #[command(flatten)]
        config: ConfigOpt,
        /// Input sequence; overrides the config's input.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Artifact directory; overrides the config's out_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write the defaults-resolved config next to the artifacts.
        #[arg(long)]
        stage_dump: bool,
    },
    /// Preprocess a sequence and write the detections CSV.
    Detect {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Associate detections into trajectories.
    Track {
        #[command(flatten)]
        config: ConfigOpt,
        /// Detections CSV from `detect`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search actuator placements and select renderable trajectories.
    Map {
        #[command(flatten)]
        config: ConfigOpt,
        /// Trajectories CSV from `track`.
        #[arg(long)]
        input: PathBuf,
        /// The original sequence; defines the placement search extent.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce the per-actuator signal CSV from a selection.
    Render {
        #[command(flatten)]
        config: ConfigOpt,
        /// Selection JSON from `map`.
        #[arg(long)]
        selection: PathBuf,
        /// Trajectories CSV from `track`.
        #[arg(long)]
        trajectories: PathBuf,
        /// The original sequence.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a deterministic synthetic fixture sequence.
    Synth {
        /// stroke, tap, squeeze, or hold.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        velocity: Option<f64>,
        #[arg(long)]
        duration: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Render any stage artifact as a static SVG.
    Plot {
        /// Frames CSV/JSON, detections CSV, trajectories CSV, selection
        /// JSON, or signal CSV; the kind is sniffed from the header.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pipeline {
            config,
            input,
            out_dir,
            stage_dump,
        } => {
            let mut config = config.load()?;
            if let Some(input) = input {
                config.input = Some(input.display().to_string());
            }
            if let Some(out_dir) = out_dir {
                config.out_dir = out_dir.display().to_string();
            }
            let summary = run_pipeline(&config, stage_dump)?;
            print!("{}", summary.report());
            Ok(())
        }
        Command::Detect { config, input, out } => {
            let config = config.load()?;
            let seq = load_sequence(&input, SequenceFormat::from_path(&input))?;
            config.render.validate(seq.sample_rate())?;
            let (_, detections) = build_detections(&seq, &config.detection)?;
            save_detections_csv(&detections, &out)?;
            println!("detections: {}", detections.len());
            Ok(())
        }
        Command::Track { config, input, out } => {
            let config = config.load()?;
            let detections = load_detections_csv(&input)?;
            let trajectories = solve_tracking(&detections, &config.tracking)?;
            save_trajectories_csv(&trajectories, &out)?;
            println!("trajectories: {}", trajectories.len());
            Ok(())
        }
        Command::Map {
            config,
            input,
            frames,
            out,
        } => {
            let config = config.load()?;
            let trajectories = load_trajectories_csv(&input)?;
            let seq = load_sequence(&frames, SequenceFormat::from_path(&frames))?;
            let (extent, pixel_pitch) =
                touchmap_core::preprocess::dense_geometry(seq.layout(), config.detection.upsample);
            let arr = config.workspace.build()?;
            let grid = config.transform_grid.build(extent, &arr, pixel_pitch)?;
            let selection = search_transforms(&trajectories, &arr, &grid)?;
            save_selection_json(&selection, &out)?;
            println!(
                "selected: {} of {} (transform {:+.3}, {:+.3} mm; total score {:.6})",
                selection.chosen.len(),
                trajectories.len(),
                selection.transform.translation.x,
                selection.transform.translation.y,
                selection.total_score
            );
            Ok(())
        }
        Command::Render {
            config,
            selection,
            trajectories,
            frames,
            out,
        } => {
            let config = config.load()?;
            let selection = load_selection_json(&selection)?;
            let trajectories = load_trajectories_csv(&trajectories)?;
            let seq = load_sequence(&frames, SequenceFormat::from_path(&frames))?;
            let dense = {
                let up = touchmap_core::preprocess::upsample(&seq, config.detection.upsample)?;
                touchmap_core::preprocess::gaussian_blur(&up, config.detection.blur_sigma)?
            };
            let arr = config.workspace.build()?;
            let signal = render(&selection, &trajectories, &dense, &arr, &config.render)?;
            save_signal_csv(&signal, &out)?;
            println!(
                "signal: {} channels x {} samples",
                signal.channels.len(),
                signal.len()
            );
            Ok(())
        }
        Command::Synth {
            kind,
            out,
            seed,
            frames,
            rows,
            cols,
            amplitude,
            velocity,
            duration,
            noise,
        } => {
            let kind: SynthKind = kind.parse()?;
            let mut params = SynthParams::default();
            if let Some(v) = frames {
                params.frames = v;
            }
            if let Some(v) = rows {
                params.rows = v;
            }
            if let Some(v) = cols {
                params.cols = v;
            }
            if let Some(v) = amplitude {
                params.amplitude = v;
            }
            if let Some(v) = velocity {
                params.velocity = v;
            }
            if let Some(v) = duration {
                params.duration = v;
            }
            if let Some(v) = noise {
                params.noise = v;
            }
            let seq = synthesize(kind, &params, seed)?;
            save_sequence(&seq, &out, SequenceFormat::from_path(&out))?;
            println!("wrote {} frames to {}", seq.len(), out.display());
            Ok(())
        }
        Command::Plot { input, out } => {
            let artifact = plot::load_artifact(&input)?;
            plot::save_svg(&artifact, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("touchmap: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_opt_defaults() {
        let opt = ConfigOpt { config: None };
        let config = opt.load().unwrap();
        assert_eq!(config.detection.upsample, 7);
    }

    #[test]
    fn plot_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.csv");
        std::fs::write(&path, "what,is,this\n1,2,3\n").unwrap();
        match plot::load_artifact(&path) {
            Err(err) => assert_eq!(err.exit_code(), 3),
            Ok(_) => panic!("garbage artifact must not parse"),
        }
    }

    #[test]
    fn synth_kind_parse_errors_are_config_errors() {
        let err = "wiggle".parse::<SynthKind>().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
