use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cochannel::assignment::{build_score_table, exhaustive_pair_search};
use cochannel::eval::harness::{train_speaker_models, CorpusSplit};
use cochannel::eval::{emit_report, synth_corpus, EvalReport, Evaluator, ExperimentConfig, Manifest};
use cochannel::features::{features_csv, MfccExtractor, ObservationSequence};
use cochannel::gmm::SpeakerSet;
use cochannel::mixer::{mix_at_tir, MixtureSpec};
use cochannel::signal::{load_wav, save_wav};
use cochannel::usable::{segments_csv, verdicts_csv, UsableDetector};
use cochannel::wavelet::{format_filters, WaveletFilters};

/// Usable-speech speaker identification for two-talker recordings.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Print the wavelet filter pair and mel filter centers, then exit.
    #[arg(long)]
    dump_filters: bool,

    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Shared by every subcommand: a config file plus individual overrides.
#[derive(Args, Clone, Default)]
struct Common {
    /// Config file, `key=value` lines or JSON.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config entry, e.g. `--set detection.amp_threshold=0.35`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("override {kv:?} is not KEY=VALUE"))?;
            config.set(k.trim(), v.trim()).with_context(|| format!("applying {kv:?}"))?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic multi-speaker corpus with a manifest.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        speakers: Option<usize>,
        #[arg(long)]
        files_per_speaker: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Train one speaker model per corpus speaker from its training files.
    Train {
        /// Corpus root (with manifest.csv, or one directory per speaker).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory for `<speaker>.gmm` files.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Mix two files at a target-to-interferer ratio.
    Mix {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        interferer: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        tir: f64,
        /// Output WAV; metadata goes to the same path with `.meta` appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target_id: Option<String>,
        #[arg(long)]
        interferer_id: Option<String>,
    },
    /// Classify frames as usable and list the usable segments.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// Per-frame verdicts CSV.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Segments CSV; printed to stdout when omitted.
        #[arg(long)]
        segments: Option<PathBuf>,
    },
    /// Write MFCC features as CSV.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only frames inside usable segments.
        #[arg(long)]
        usable_only: bool,
    },
    /// Find the speaker pair and segment labeling for one mixture.
    Assign {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assignment accuracy against random and oracle labelings at 0 dB.
    EvalAssignment(EvalArgs),
    /// Target identification rate per TIR, proposed method and baseline.
    EvalSid(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Use these trained models instead of training from the corpus.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Report CSV; the summary is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if cli.dump_filters {
        dump_filters(&cli.common.load()?)?;
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    let mut config = cli.common.load()?;
    match command {
        Command::SynthCorpus {
            out,
            seed,
            speakers,
            files_per_speaker,
            duration,
        } => {
            let synth = &mut config.synth;
            synth.n_speakers = speakers.unwrap_or(synth.n_speakers);
            synth.files_per_speaker = files_per_speaker.unwrap_or(synth.files_per_speaker);
            synth.duration_s = duration.unwrap_or(synth.duration_s);
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let manifest = synth_corpus(&out, seed, &config.synth)?;
            println!(
                "wrote {} files for {} speakers to {}",
                manifest.entries.len(),
                manifest.speakers().len(),
                out.display()
            );
        }
        Command::Train { corpus, models, seed } => {
            config.seed = seed;
            if let Some(c) = corpus {
                config.corpus_root = c;
            }
            let split = CorpusSplit::load(&config)?;
            let (set, stats) = train_speaker_models(&split, &config)?;
            set.save_dir(&models)?;
            for (model, s) in set.models().iter().zip(&stats) {
                println!(
                    "{}: {} iterations, converged {}, resets {}, log-likelihood/frame {:.4}",
                    model.speaker_id(),
                    s.iterations,
                    s.converged,
                    s.resets,
                    s.log_likelihood.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Mix {
            target,
            interferer,
            tir,
            out,
            target_id,
            interferer_id,
        } => {
            let stem = |p: &Path| p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let truth = mix_at_tir(&MixtureSpec {
                target: load_wav(&target)?,
                interferer: load_wav(&interferer)?,
                tir_db: tir,
                target_id: target_id.unwrap_or_else(|| stem(&target)),
                interferer_id: interferer_id.unwrap_or_else(|| stem(&interferer)),
            })?;
            let report = save_wav(&truth.mixture, &out)?;
            let mut meta = out.clone().into_os_string();
            meta.push(".meta");
            truth.write_metadata(&meta)?;
            println!(
                "mixed at {tir} dB (measured {:.6} dB), gain {:.6}, {} samples, {} clipped",
                truth.measured_tir_db()?,
                truth.gain_applied,
                truth.truncated_length,
                report.clipped
            );
        }
        Command::Detect { input, frames, segments } => {
            let detection = UsableDetector::new(config.detection)?.detect(&load_wav(&input)?)?;
            if let Some(path) = frames {
                write(&path, &verdicts_csv(&detection.verdicts))?;
            }
            let text = segments_csv(&detection.segments);
            match segments {
                Some(path) => write(&path, &text)?,
                None => emit(&text)?,
            }
            eprintln!(
                "{} of {} frames usable, {} segments",
                detection.verdicts.iter().filter(|v| v.usable).count(),
                detection.verdicts.len(),
                detection.segments.len()
            );
        }
        Command::Features { input, out, usable_only } => {
            let w = load_wav(&input)?;
            let ex = MfccExtractor::new(config.features, w.sample_rate)?;
            let seq = if usable_only {
                let mut all = ObservationSequence::new(config.features.n_coeffs);
                for seg in UsableDetector::new(config.detection)?.detect(&w)?.segments {
                    all.extend(&ex.segment_features(&w, &seg)?)?;
                }
                all
            } else {
                ex.waveform_features(&w)?
            };
            let text = features_csv(&seq);
            match out {
                Some(path) => write(&path, &text)?,
                None => emit(&text)?,
            }
        }
        Command::Assign { input, models, out } => {
            let text = assign(&config, &input, &models)?;
            match out {
                Some(path) => write(&path, &text)?,
                None => emit(&text)?,
            }
        }
        Command::EvalAssignment(args) => return evaluate(config, args, Evaluator::run_assignment_eval),
        Command::EvalSid(args) => return evaluate(config, args, Evaluator::run_sid_eval),
    }
    Ok(ExitCode::SUCCESS)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout; a reader that hangs up early (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn dump_filters(config: &ExperimentConfig) -> Result<()> {
    let filters = WaveletFilters::of_kind(config.detection.wavelet);
    let mut text = format!("# wavelet {} (k, low-pass, high-pass)\n", config.detection.wavelet);
    text.push_str(&format_filters(&filters));
    let ex = MfccExtractor::new(config.features, cochannel::SAMPLE_RATE)?;
    text.push_str("# mel filter centers (Hz)\n");
    for (m, c) in ex.filter_centers_hz().iter().enumerate() {
        writeln!(text, "{m},{c:.6}")?;
    }
    emit(&text)
}

fn assign(config: &ExperimentConfig, input: &Path, models: &Path) -> Result<String> {
    let speakers = SpeakerSet::load_dir(models)?;
    let w = load_wav(input)?;
    let segments = UsableDetector::new(config.detection)?.detect(&w)?.segments;
    if segments.is_empty() {
        bail!("no usable segments in {}", input.display());
    }
    let ex = MfccExtractor::new(config.features, w.sample_rate)?;
    let features = segments
        .iter()
        .map(|s| ex.segment_features(&w, s))
        .collect::<cochannel::Result<Vec<_>>>()?;
    let table = build_score_table(&speakers, &features)?;
    let result = exhaustive_pair_search(&table)?;
    let (a, b) = (speakers.id(result.speaker_i), speakers.id(result.speaker_ii));
    eprintln!("speakers: {a} and {b}, total log score {:.6}", result.total_log_score);

    let mut text = String::from("seg_index,start_sample,end_sample,label,speaker_I,speaker_II,score_I,score_II,total_log_score\n");
    for (i, seg) in segments.iter().enumerate() {
        writeln!(
            text,
            "{i},{},{},{},{a},{b},{:.10e},{:.10e},{:.10e}",
            seg.start_sample,
            seg.end_sample,
            result.labeling[i],
            table.score(i, result.speaker_i),
            table.score(i, result.speaker_ii),
            result.total_log_score
        )?;
    }
    Ok(text)
}

fn evaluate(mut config: ExperimentConfig, args: EvalArgs, run: fn(&Evaluator) -> EvalReport) -> Result<ExitCode> {
    config.seed = args.seed;
    if let Some(c) = args.corpus {
        config.corpus_root = c;
    }
    let evaluator = match &args.models {
        Some(dir) => {
            let split = CorpusSplit::from_manifest(&Manifest::open(&config.corpus_root, config.train_files)?, &config)?;
            Evaluator::new(config, split, SpeakerSet::load_dir(dir)?)?
        }
        None => Evaluator::train(config)?,
    };
    let report = run(&evaluator);
    let summary = emit_report(&report, &args.out)?;
    println!(
        "{} conditions ({} ok, {} skipped, {} failed); search {:.2}%, random {:.2}%, oracle {:.2}%",
        summary.conditions,
        summary.ok,
        summary.skipped,
        summary.failed,
        summary.search_accuracy(),
        summary.random_accuracy(),
        summary.oracle_accuracy()
    );
    for t in &summary.per_tir {
        println!(
            "  {:>6} dB: proposed {:.3} +/- {:.3}, baseline {:.3} +/- {:.3} (n = {})",
            t.tir_db,
            t.proposed_rate(),
            t.proposed_se(),
            t.baseline_rate(),
            t.baseline_se(),
            t.n
        );
    }
    Ok(if report.all_attempted_produced_rows() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
