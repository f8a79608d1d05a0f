use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use zsfuse::eval::{emit_report, split_catalog, EvalReport, ReportFormat};
use zsfuse::fusion::calibrate_and_fuse;
use zsfuse::pipeline::{
    evaluate, read_fusion, read_scores, resolve_split, run_pipeline, score_stage, write_fusion,
    write_scores, PipelineConfig, ReportTarget,
};
use zsfuse::prompts::{
    analysis_prompt, build_prompt_batch, confirmation_prompt, generation_prompt, grouping_prompt,
    parse_grouping_response, similarity_prompt, GroupRecord,
};
use zsfuse::store::{ClassCatalog, DatasetBundle};
use zsfuse::synth::{generate_synthetic_bundle, SynthParams, DEFAULT_REFERENCE_NOISE_RATIO};
use zsfuse::{Error, Result};

#[derive(Parser)]
#[command(
    name = "zsfuse",
    version,
    about = "Confidence-weighted zero-shot fusion over precomputed embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run score, fuse and eval in one go from a pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of the config's report target.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compute raw alignment scores for each selected method.
    Score {
        #[arg(long)]
        config: PathBuf,
        /// Directory for scores_<method>.zseb files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate scores, derive confidences and fuse.
    Fuse {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Directory for probs_<method>.zseb files and fusion.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate fused probabilities against the split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Draw a seeded closed/open split of a catalog.
    Split {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "")]
        dataset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print or build prompts for reference-image generation.
    Prompts {
        #[arg(long, value_enum)]
        mode: PromptMode,
        /// Catalog supplying class names (analysis, parse, batch).
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Comma-separated class names (analysis).
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
        /// Class name (generation), or first class (similarity).
        #[arg(long)]
        class: Option<String>,
        /// Second class (similarity).
        #[arg(long)]
        other: Option<String>,
        /// Common features (generation).
        #[arg(long)]
        cc: Option<String>,
        /// Response text file (parse) or grouping records JSON (batch).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Images per prompt (batch).
        #[arg(long, default_value_t = 3)]
        images: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset bundle.
    Synth {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        samples_per_class: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Noise for text-image, clip image-image and dino image-image.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.9, 0.5])]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        refs: usize,
        #[arg(long, default_value_t = DEFAULT_REFERENCE_NOISE_RATIO)]
        ref_noise_ratio: f64,
        #[arg(long)]
        closed: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a JSON report to another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptMode {
    Analysis,
    Grouping,
    Confirmation,
    Similarity,
    Generation,
    Parse,
    Batch,
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut s = body.to_owned();
            if !s.ends_with('\n') {
                s.push('\n');
            }
            std::fs::write(path, s).map_err(|e| Error::Io {
                path: path.to_owned(),
                source: e,
            })
        }
        None => {
            println!("{}", body.trim_end_matches('\n'));
            Ok(())
        }
    }
}

fn output_report(
    report: &EvalReport,
    out: Option<PathBuf>,
    format: Option<Format>,
    target: Option<&ReportTarget>,
) -> Result<()> {
    let format = format
        .map(ReportFormat::from)
        .or(target.map(|t| t.format))
        .unwrap_or_default();
    match out.or_else(|| target.map(|t| t.path.clone())) {
        Some(path) => emit_report(report, format, path),
        None => write_or_print(None, &report.render(format)?),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            format,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            let target = cfg.report.take();
            let report = run_pipeline(&cfg)?;
            output_report(&report, out, format, target.as_ref())
        }
        Command::Score { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            cfg.validate()?;
            let bundle = DatasetBundle::load(&cfg.bundle)?;
            let scores = score_stage(&bundle, &cfg.methods)?;
            write_scores(&out, &scores, &bundle.catalog)
        }
        Command::Fuse {
            config,
            scores,
            out,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            cfg.validate()?;
            let bundle = DatasetBundle::load(&cfg.bundle)?;
            let s = read_scores(&scores, &cfg.methods, &bundle.catalog)?;
            let outcome = calibrate_and_fuse(&s, &cfg.fusion)?;
            write_fusion(&out, &outcome, &cfg.fusion, &bundle.catalog)
        }
        Command::Eval {
            config,
            probs,
            out,
            format,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let bundle = DatasetBundle::load(&cfg.bundle)?;
            let (outcome, fusion) = read_fusion(&probs, &bundle.catalog)?;
            let split = resolve_split(&cfg.split, &bundle.catalog, &cfg.dataset)?;
            let report = evaluate(&bundle, &outcome, &fusion, &split, cfg.label_space)?;
            output_report(&report, out, format, cfg.report.as_ref())
        }
        Command::Split {
            catalog,
            m,
            seed,
            dataset,
            out,
        } => {
            let cat = ClassCatalog::load(&catalog)?;
            let spec = split_catalog(&cat, m, seed)?.with_dataset(dataset);
            write_or_print(out.as_deref(), &spec.to_json()?)
        }
        Command::Prompts {
            mode,
            catalog,
            classes,
            class,
            other,
            cc,
            input,
            images,
            out,
        } => {
            let catalog = catalog.map(ClassCatalog::load).transpose()?;
            let need =
                |what: &str| Error::InvalidParameter(format!("--{what} is required for this mode"));
            let body = match mode {
                PromptMode::Analysis => {
                    let names: Vec<String> = match &catalog {
                        Some(c) if classes.is_empty() => c.names().map(str::to_owned).collect(),
                        _ => classes,
                    };
                    analysis_prompt(&names)?
                }
                PromptMode::Grouping => grouping_prompt().to_owned(),
                PromptMode::Confirmation => confirmation_prompt().to_owned(),
                PromptMode::Similarity => similarity_prompt(
                    class.as_deref().ok_or_else(|| need("class"))?,
                    other.as_deref().ok_or_else(|| need("other"))?,
                )?,
                PromptMode::Generation => generation_prompt(
                    class.as_deref().ok_or_else(|| need("class"))?,
                    cc.as_deref(),
                )?,
                PromptMode::Parse => {
                    let text = read_text(&input.ok_or_else(|| need("input"))?)?;
                    let parsed = parse_grouping_response(&text, catalog.as_ref());
                    for w in &parsed.warnings {
                        eprintln!("warning: {w}");
                    }
                    json(&parsed.records)?
                }
                PromptMode::Batch => {
                    let cat = catalog.ok_or_else(|| need("catalog"))?;
                    let groups: Vec<GroupRecord> = match input {
                        Some(p) => serde_json::from_str(&read_text(&p)?)
                            .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?,
                        None => Vec::new(),
                    };
                    json(&build_prompt_batch(&cat, &groups, images)?)?
                }
            };
            write_or_print(out.as_deref(), &body)
        }
        Command::Synth {
            classes,
            samples_per_class,
            dim,
            noise,
            refs,
            ref_noise_ratio,
            closed,
            seed,
            out,
        } => {
            let params = SynthParams {
                n_classes: classes,
                samples_per_class,
                dim,
                noise: [noise[0], noise[1], noise[2]],
                refs_per_class: refs,
                seed,
                reference_noise_ratio: ref_noise_ratio,
                closed,
            };
            let bundle = generate_synthetic_bundle(&params)?;
            let path = bundle.save(&out)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Report { input, format, out } => {
            let report = EvalReport::load(&input)?;
            output_report(&report, out, Some(format), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
