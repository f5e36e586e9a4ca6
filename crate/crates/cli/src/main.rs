use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use prolong::config::RunConfig;
use prolong::denoiser::{load_checkpoint, save_checkpoint, train, write_loss_csv, Checkpoint};
use prolong::fusion::{fuse, sample_structure, Score};
use prolong::graph::build_graph;
use prolong::midi::write_midi;
use prolong::sampler::generate_library;
use prolong::schedule::{marginals, NoiseSchedule};
use prolong::score::{corpus_files, load_corpus, read_phrase, write_phrase, EventContent, Phrase, ScaleDegreeClass};
use prolong::theory::{PhraseLibrary, Verdict};
use prolong::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "prolong", version, about = "Phrase diffusion, screening and fusion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the command's seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus directory and write class marginals and voice stats.
    Ingest {
        /// Directory of *.phrase.json files
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the denoiser; writes checkpoint.json and loss.csv.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Sample phrases and sort them into accepted/ and rejected/.
    Generate {
        /// Defaults to checkpoint.json in the output directory
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Chain accepted phrases into a score following a background template.
    Fuse {
        /// Phrase directory; defaults to accepted/ in the output directory
        #[arg(long)]
        library: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a realized score or phrase as a MIDI file.
    Render {
        /// Score or phrase JSON
        score: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    match &common.config {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(common: &Common, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| cfg.output.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct VoiceStats {
    name: String,
    notes: usize,
    mean_midi: Option<f64>,
}

#[derive(Serialize)]
struct CorpusSummary {
    phrases: usize,
    marginals: BTreeMap<String, f64>,
    keys: BTreeMap<String, usize>,
    voice_counts: BTreeMap<usize, usize>,
    voices: Vec<VoiceStats>,
}

fn summarize(corpus: &[Phrase]) -> anyhow::Result<CorpusSummary> {
    let m = marginals::<f64>(corpus)?;
    let mut keys = BTreeMap::new();
    let mut voice_counts = BTreeMap::new();
    let mut voices: Vec<(String, usize, f64, usize)> = Vec::new();
    for p in corpus {
        *keys.entry(p.key.to_string()).or_insert(0) += 1;
        *voice_counts.entry(p.voices.len()).or_insert(0) += 1;
        for (v, name) in p.voices.iter().enumerate() {
            if voices.len() <= v {
                voices.push((name.clone(), 0, 0.0, 0));
            }
            for (_, e) in p.voice_events(v) {
                voices[v].1 += 1;
                if let EventContent::Pitch(pitch) = e.content {
                    voices[v].2 += pitch.midi() as f64;
                    voices[v].3 += 1;
                }
            }
        }
    }
    Ok(CorpusSummary {
        phrases: corpus.len(),
        marginals: ScaleDegreeClass::ALL.iter().map(|d| (d.code().to_string(), m.get(d.index()))).collect(),
        keys,
        voice_counts,
        voices: voices
            .into_iter()
            .map(|(name, notes, sum, pitched)| VoiceStats {
                name,
                notes,
                mean_midi: (pitched > 0).then(|| sum / pitched as f64),
            })
            .collect(),
    })
}

fn ingest(dir: &Path, common: &Common) -> anyhow::Result<()> {
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    let mut corpus = Vec::new();
    let mut failures = 0;
    for f in &files {
        match read_phrase(f) {
            Ok(p) => corpus.push(p),
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e}", f.display());
            }
        }
    }
    if failures > 0 {
        return Err(Error::Validation(format!("{failures} of {} phrases are invalid", files.len())).into());
    }
    let summary = summarize(&corpus)?;
    println!("{} phrases", summary.phrases);
    let out = common.out.clone().unwrap_or_else(|| dir.join("summary.json"));
    write_json(&out, &summary)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_train(common: &Common) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    cfg.require_corpus()?;
    let corpus = load_corpus(&cfg.corpus)?;
    let graphs = corpus
        .iter()
        .map(|p| build_graph::<f64>(p, cfg.denoiser.features))
        .collect::<prolong::Result<Vec<_>>>()?;
    let m = marginals::<f64>(&corpus)?;
    let schedule = NoiseSchedule::<f64>::cosine(cfg.schedule.steps, cfg.schedule.offset)?;
    let seed = common.seed.unwrap_or(cfg.seeds.train);
    let outcome = train(&graphs, &cfg.denoiser, &schedule, &m, seed)?;
    println!("parameters: {}", outcome.params.parameter_count());
    println!(
        "train/validation phrases: {}/{}",
        outcome.train_indices.len(),
        outcome.validation_indices.len()
    );
    println!("initial validation loss: {:.4}", outcome.initial_validation);
    if let Some(last) = outcome.history.last() {
        println!("epoch {}: train {:.4}, validation {:.4}", last.epoch, last.train, last.validation);
    }
    let dir = out_dir(common, &cfg)?;
    let ckpt = Checkpoint { params: outcome.params, schedule_offset: cfg.schedule.offset, marginal: m };
    save_checkpoint(&dir.join("checkpoint.json"), &ckpt)?;
    write_loss_csv(&dir.join("loss.csv"), &outcome.history)?;
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct GeneratedReport {
    file: String,
    accepted: bool,
    reasons: Vec<String>,
}

#[derive(Serialize)]
struct GenerationReport {
    total: usize,
    accepted: usize,
    rejected: usize,
    rejection_rate: f64,
    phrases: Vec<GeneratedReport>,
}

fn cmd_generate(checkpoint: Option<&Path>, common: &Common) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    cfg.require_corpus()?;
    let dir = out_dir(common, &cfg)?;
    let ckpt_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| dir.join("checkpoint.json"));
    let ckpt: Checkpoint<f64> = load_checkpoint(&ckpt_path)
        .with_context(|| format!("loading checkpoint {}", ckpt_path.display()))?;
    if ckpt.params.hyper.steps != cfg.schedule.steps || ckpt.schedule_offset != cfg.schedule.offset {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained with {} steps (offset {}), config asks for {} (offset {})",
            ckpt.params.hyper.steps, ckpt.schedule_offset, cfg.schedule.steps, cfg.schedule.offset
        ))
        .into());
    }
    let schedule = NoiseSchedule::<f64>::cosine(cfg.schedule.steps, cfg.schedule.offset)?;
    let corpus = load_corpus(&cfg.corpus)?;
    let seed = common.seed.unwrap_or(cfg.seeds.generate);
    let samples = generate_library(&ckpt.params, &schedule, &ckpt.marginal, &corpus, &cfg.library_request(), seed)?;

    let accepted_dir = dir.join("accepted");
    let rejected_dir = dir.join("rejected");
    for d in [&accepted_dir, &rejected_dir] {
        if d.exists() {
            fs::remove_dir_all(d)?;
        }
        fs::create_dir_all(d)?;
    }
    let mut phrases = Vec::new();
    for s in &samples {
        let file = format!("sample_{:03}.phrase.json", s.index);
        let (target, reasons) = match &s.verdict {
            Verdict::Accepted(_) => (&accepted_dir, Vec::new()),
            Verdict::Rejected(why) => (&rejected_dir, why.clone()),
        };
        write_phrase(&target.join(&file), &s.phrase)?;
        phrases.push(GeneratedReport { file, accepted: reasons.is_empty(), reasons });
    }
    let accepted = phrases.iter().filter(|p| p.accepted).count();
    let total = phrases.len();
    let report = GenerationReport {
        total,
        accepted,
        rejected: total - accepted,
        rejection_rate: if total == 0 { 0.0 } else { (total - accepted) as f64 / total as f64 },
        phrases,
    };
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "{total} phrases: {accepted} accepted, {} rejected (rate {:.3})",
        report.rejected, report.rejection_rate
    );
    Ok(())
}

fn cmd_fuse(library: Option<&Path>, common: &Common) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg)?;
    let lib_dir = library.map(Path::to_path_buf).unwrap_or_else(|| dir.join("accepted"));
    if !lib_dir.is_dir() {
        return Err(Error::Config(format!("library directory {} does not exist", lib_dir.display())).into());
    }
    let (lib, rejected) = PhraseLibrary::load_dir(&lib_dir, &cfg.theory)?;
    for (name, why) in &rejected {
        eprintln!("skipping {name}: {}", why.join("; "));
    }
    if lib.is_empty() {
        return Err(Error::FusionInfeasible { slot: 1 }.into());
    }
    let templates = cfg.templates()?;
    let seed = common.seed.unwrap_or(cfg.seeds.fuse);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = sample_structure(&templates, &mut rng)?;
    let profiles = cfg.profiles(lib.get(0).phrase.voices.len());
    let (score, plan) = fuse(template, &lib, &profiles, &cfg.fusion(), &mut rng)?;
    score.save(&dir.join("score.json"))?;
    write_json(&dir.join("score.plan.json"), &plan)?;
    write_midi(&dir.join("score.mid"), &score.flatten()?)?;
    println!("fused {} phrases with template {}", score.phrases.len(), template.name);
    for s in &plan.slots {
        println!("  {} in {}", s.name, s.local_key);
    }
    Ok(())
}

fn cmd_render(path: &Path, common: &Common) -> anyhow::Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let phrase = match serde_json::from_str::<Score>(&text) {
        Ok(score) if score.phrases.is_empty() => return Err(Error::EmptyPhrase.into()),
        Ok(score) if !score.is_realized() => return Err(Error::NotRealized.into()),
        Ok(score) => score.flatten()?,
        Err(_) => {
            let p: Phrase = serde_json::from_str(&text).map_err(Error::from)?;
            if !p.is_realized() {
                return Err(Error::NotRealized.into());
            }
            p
        }
    };
    let out = common.out.clone().unwrap_or_else(|| path.with_extension("mid"));
    write_midi(&out, &phrase)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// 1: bad input, 2: fusion infeasible, 3: internal failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return if err.chain().any(|c| c.is::<std::io::Error>()) { 1 } else { 3 };
    };
    match e {
        Error::FusionInfeasible { .. } => 2,
        Error::NoSupport { .. }
        | Error::Shape(_)
        | Error::InvalidDistribution(_)
        | Error::StepOutOfRange { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest { dir, common } => ingest(dir, common),
        Command::Train { common } => cmd_train(common),
        Command::Generate { checkpoint, common } => cmd_generate(checkpoint.as_deref(), common),
        Command::Fuse { library, common } => cmd_fuse(library.as_deref(), common),
        Command::Render { score, common } => cmd_render(score, common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::NotRealized) = e.downcast_ref::<Error>() {
                eprintln!("hint: run `prolong fuse` (which realizes pitches) before rendering");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
