//! `avgen`: data generation, training, sampling, the two-stage pipeline and
//! evaluation.
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numeric failure,
//! 5 state.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avgen_core::commands::{cmd_eval, cmd_generate_data, cmd_pipeline, cmd_sample, cmd_train, PipelineRequest, SampleOptions};
use avgen_core::config::{RunConfig, TrainMode};
use avgen_core::pipeline::Prompt;
use avgen_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avgen", version, about = "Desk-scale joint audio-video generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the synthetic corpus and write its manifest.
    GenerateData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        clips: Option<usize>,
    },
    /// Train a model; writes a checkpoint and a loss CSV beside it.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// ddpm, joint, flow or flow-v2a.
        #[arg(long)]
        mode: TrainMode,
        #[arg(long)]
        out: PathBuf,
        /// Total step budget (including steps already in a resumed checkpoint).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print every n-th step loss to stderr (0 = quiet).
        #[arg(long, default_value_t = 50)]
        log_every: usize,
    },
    /// Draw clips from a trained checkpoint.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// Fixed class; alternates between classes when omitted.
        #[arg(long)]
        class: Option<u32>,
        #[arg(long)]
        guidance: Option<f64>,
    },
    /// Two-stage prompt -> video -> audio generation.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        negative_prompt: Option<String>,
        /// Video guidance scale.
        #[arg(long, default_value_t = 3.0)]
        guidance: f64,
        #[arg(long)]
        audio_guidance: Option<f64>,
        #[arg(long)]
        video_checkpoint: PathBuf,
        #[arg(long)]
        audio_checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare a generated corpus with a real one; prints a JSON report.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(p) = out {
        std::fs::write(p, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> std::result::Result<(), (&'static str, Error)> {
    match cli.command {
        Command::GenerateData { cfg, out_dir, clips } => {
            let mut c = cfg.load().map_err(|e| ("config", e))?;
            if let Some(n) = clips {
                c.data.clips = n;
            }
            let path = cmd_generate_data(&c, &out_dir).map_err(|e| ("generate-data", e))?;
            println!("{}", path.display());
        }
        Command::Train {
            cfg,
            manifest,
            mode,
            out,
            steps,
            lr,
            batch_size,
            resume,
            log_every,
        } => {
            let mut c = cfg.load().map_err(|e| ("config", e))?;
            if let Some(s) = steps {
                c.train.steps = s;
            }
            if let Some(l) = lr {
                c.train.lr = l;
            }
            if let Some(b) = batch_size {
                c.train.batch_size = b;
            }
            let summary = cmd_train(&c, &manifest, mode, &out, resume.as_deref(), |r| {
                if log_every > 0 && r.step % log_every == 0 {
                    eprintln!("step {:>6}  loss {:.6}", r.step, r.loss);
                }
            })
            .map_err(|e| ("train", e))?;
            print_json(&summary, None).map_err(|e| ("train", e))?;
        }
        Command::Sample {
            cfg,
            checkpoint,
            out_dir,
            count,
            class,
            guidance,
        } => {
            let c = cfg.load().map_err(|e| ("config", e))?;
            let opts = SampleOptions {
                count: count.unwrap_or(c.eval.generated),
                seed: c.train.seed,
                class,
                guidance,
            };
            let path = cmd_sample(&c, &checkpoint, &opts, &out_dir).map_err(|e| ("sample", e))?;
            println!("{}", path.display());
        }
        Command::Pipeline {
            cfg,
            prompt,
            negative_prompt,
            guidance,
            audio_guidance,
            video_checkpoint,
            audio_checkpoint,
            count,
            out_dir,
        } => {
            let mut c = cfg.load().map_err(|e| ("config", e))?;
            if let Some(w) = audio_guidance {
                c.pipeline.audio_guidance = w;
            }
            let mut p = Prompt::new(prompt, guidance);
            if let Some(n) = negative_prompt {
                p = p.with_negative(n);
            }
            let req = PipelineRequest {
                prompt: p,
                seed: c.train.seed,
                count,
                video_checkpoint,
                audio_checkpoint,
            };
            let records = cmd_pipeline(&c, &req, &out_dir).map_err(|e| ("pipeline", e))?;
            print_json(&records, None).map_err(|e| ("pipeline", e))?;
        }
        Command::Eval { real, generated, out } => {
            let report = cmd_eval(&real, &generated).map_err(|e| ("eval", e))?;
            print_json(&report, out.as_deref()).map_err(|e| ("eval", e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            eprintln!("avgen {stage}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
