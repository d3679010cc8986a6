use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rfdeg_cli::commands::{self, Study, StudyResult};
use rfdeg_cli::{exit_code, RunConfig};
use rfdeg_core::Result;

#[derive(Parser)]
#[command(name = "rfdeg", about = "Learn real-world LR degradation and synthesize LR-HR training pairs")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory. For gen-corpus, the corpus root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Dtlr,
    Lambda,
    #[value(name = "K")]
    K,
    Filter,
}

#[derive(Subcommand)]
enum Command {
    /// Train FGDM, then RFDM with FGDM frozen.
    Train,
    /// Synthesize one pseudo-real LR image per HR image and write a manifest.
    Synthesize {
        /// HR input directory (defaults to the configured hr_dir).
        #[arg(long)]
        hr_dir: Option<PathBuf>,
        /// Directory holding fgdm.ckpt / rfdm.ckpt (defaults to the configured out_dir).
        #[arg(long)]
        ckpt_dir: Option<PathBuf>,
        #[arg(long)]
        skip_fgdm: bool,
        #[arg(long)]
        skip_rfdm: bool,
    },
    /// Run one of the studies over the held-out pairs.
    Study {
        #[arg(long, value_enum)]
        study: StudyArg,
        #[arg(long)]
        ckpt_dir: Option<PathBuf>,
    },
    /// Score manifest LR images against same-named reference images.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Generate the procedural desk corpus and a matching run config.
    GenCorpus,
    /// Print the version.
    Version,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let configured_out = cfg.out_dir.clone();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match cli.command {
        Command::Version => println!("rfdeg {}", env!("CARGO_PKG_VERSION")),
        Command::GenCorpus => {
            let root = cli.out.unwrap_or_else(|| PathBuf::from("corpus"));
            let path = commands::gen_corpus(&root, cfg.seed)?;
            println!("corpus written to {}; run config {}", root.display(), path.display());
        }
        Command::Train => {
            let r = commands::train(&cfg)?;
            println!(
                "trained in {:.1} s (fgdm) + {:.1} s (rfdm); checkpoints in {}",
                r.fgdm_seconds,
                r.rfdm_seconds,
                cfg.out_dir.display()
            );
        }
        Command::Synthesize {
            hr_dir,
            ckpt_dir,
            skip_fgdm,
            skip_rfdm,
        } => {
            let hr_dir = hr_dir.unwrap_or_else(|| cfg.hr_dir.clone());
            let ckpt_dir = ckpt_dir.unwrap_or(configured_out);
            let m = commands::synthesize(&cfg, &hr_dir, &ckpt_dir, skip_fgdm, skip_rfdm)?;
            println!(
                "{} pairs, {} skipped; manifest {}",
                m.rows.len(),
                m.skipped.len(),
                cfg.out_dir.join(commands::MANIFEST).display()
            );
        }
        Command::Study { study, ckpt_dir } => {
            let which = match study {
                StudyArg::Dtlr => Study::Dtlr,
                StudyArg::Lambda => Study::Lambda,
                StudyArg::K => Study::K,
                StudyArg::Filter => Study::Filter,
            };
            let ckpt_dir = ckpt_dir.unwrap_or(configured_out);
            match commands::study(&cfg, which, &ckpt_dir)? {
                StudyResult::Dtlr(rows) => {
                    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
                        println!("dtlr: {:.2} dB at i=0, {:.2} dB at i={}", first.psnr, last.psnr, last.iters);
                    }
                }
                StudyResult::Filter(tables) => {
                    for (f, rows) in tables {
                        if let Some(last) = rows.last() {
                            println!("{f}: {:.2} dB at i={}", last.psnr, last.iters);
                        }
                    }
                }
                StudyResult::Lambda(_) | StudyResult::K(_) => {}
            }
            println!("wrote {}", cfg.out_dir.join(which.csv_name()).display());
        }
        Command::Evaluate { manifest, reference } => {
            let out = cli
                .out
                .unwrap_or_else(|| manifest.parent().map(PathBuf::from).unwrap_or_default());
            let rows = commands::evaluate(&manifest, &reference, &out)?;
            match commands::mean_report(&rows) {
                Some(m) => println!("{} pairs: mean PSNR {:.4} dB, SSIM {:.4}", rows.len(), m.psnr, m.ssim),
                None => println!("empty manifest"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()) as u8)
        }
    }
}
