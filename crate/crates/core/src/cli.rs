//! The `stylenet` command line.
//!
//! Exit codes: 0 on success, 1 on runtime or numeric failure, 2 on usage
//! errors (bad flags, missing input directories, unknown genres).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::corpus::{
    curate, distinct_velocities, CorpusError, DatasetManifest, GenreLabel, DEFAULT_SPLIT_RATIO, DEFAULT_THRESHOLD,
};
use crate::midi::{extract_notes, write_midi, MidiFile};
use crate::model::{
    encode_file, format_suite, load_checkpoint, load_dataset, load_midi, loss_csv, predict_performance,
    run_gradcheck_suite, save_checkpoint, Checkpoint, ModelError, TrainConfig, Trainer,
};

#[derive(Debug, Parser)]
#[command(name = "stylenet", version, about = "Genre-conditioned expressive velocity for piano scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter two genre directories into a train/validation manifest.
    Curate(CurateArgs),
    /// Summarize a MIDI file and optionally dump its matrices.
    Inspect(InspectArgs),
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Render a score with a trained genre style.
    Render(RenderArgs),
    /// Finite-difference check of every layer and the composed model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub classical: PathBuf,
    #[arg(long)]
    pub jazz: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: usize,
    #[arg(long, default_value_t = DEFAULT_SPLIT_RATIO)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Writes `<prefix>_input.csv` and `<prefix>_velocity.csv`.
    #[arg(long)]
    pub csv: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path; the loss log goes next to it as `<out>.losses.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long = "keep-prob")]
    pub keep_prob: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long = "interp-hidden")]
    pub interp_hidden: Option<usize>,
    #[arg(long = "genre-hidden")]
    pub genre_hidden: Option<usize>,
    #[arg(long = "checkpoint-every")]
    pub checkpoint_every: Option<usize>,
    #[arg(long = "masked-loss")]
    pub masked_loss: Option<bool>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub genre: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 20, hide = true)]
    pub seeds: usize,
    /// Negates one analytic gradient so the check must fail.
    #[arg(long = "inject-fault", hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownGenre { .. } => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::BadGenre(_) | CorpusError::DuplicateGenre(_) | CorpusError::BadSplitRatio(_) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn echo_config(out: &mut dyn Write, value: serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "resolved config: {value}").map_err(|e| CliError::Runtime(e.to_string()))
}

/// Parses `args` (including the program name) and runs the command, writing
/// reports to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command, out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Runtime(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs one command. The returned code is the process exit status.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<u8, CliError> {
    match command {
        Command::Curate(a) => cmd_curate(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Render(a) => cmd_render(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
    }
    .and_then(|code| out.flush().map(|_| code).map_err(|e| CliError::Runtime(e.to_string())))
}

fn w(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(line).and_then(|_| out.write_all(b"\n")).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn cmd_curate(a: &CurateArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    echo_config(
        out,
        json!({"command": "curate", "classical": a.classical, "jazz": a.jazz, "out": a.out,
               "threshold": a.threshold, "split": a.split, "seed": a.seed}),
    )?;
    for dir in [&a.classical, &a.jazz] {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
        }
    }
    let roots = [(GenreLabel::classical(), a.classical.clone()), (GenreLabel::jazz(), a.jazz.clone())];
    let manifest = curate(&roots, a.threshold, a.split, a.seed)?;
    for genre in manifest.genres() {
        let entries: Vec<_> = manifest.entries.iter().filter(|e| e.genre == genre).collect();
        let accepted = entries.iter().filter(|e| e.accepted).count();
        let mut line = format!(
            "{genre}: {} files, {accepted} accepted ({} train, {} validation), {} rejected",
            entries.len(),
            manifest.files(&genre, crate::corpus::Split::Train).count(),
            manifest.files(&genre, crate::corpus::Split::Validation).count(),
            entries.len() - accepted
        );
        for reason in ["format", "time-signature", "velocity-range"] {
            let n = entries.iter().filter(|e| e.rejection_reason.as_deref() == Some(reason)).count();
            if n > 0 {
                line.push_str(&format!(" [{reason}: {n}]"));
            }
        }
        w(out, format_args!("{line}"))?;
    }
    manifest.save(&a.out)?;
    w(out, format_args!("manifest written to {}", a.out.display()))?;
    Ok(0)
}

pub fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    echo_config(out, json!({"command": "inspect", "in": a.input, "csv": a.csv}))?;
    let file = load_midi(&a.input)?;
    let notes = extract_notes(&file);
    let signatures: Vec<String> = file
        .time_signatures()
        .iter()
        .map(|(n, d)| format!("{n}/{d}"))
        .collect();
    w(out, format_args!("format: {}", file.format))?;
    w(out, format_args!("division: {}", file.division))?;
    w(
        out,
        format_args!(
            "time signatures: {}",
            if signatures.is_empty() { "none (4/4 assumed)".to_string() } else { signatures.join(", ") }
        ),
    )?;
    w(out, format_args!("notes: {}", notes.spans.len()))?;
    w(out, format_args!("distinct velocities: {}", distinct_velocities(&notes.spans)))?;
    if let Some(prefix) = &a.csv {
        let encoded = encode_file(&file);
        w(out, format_args!("steps: {}", encoded.roll.steps()))?;
        for (suffix, body) in [("input", encoded.roll.to_csv()), ("velocity", encoded.velocities.to_csv())] {
            let path = PathBuf::from(format!("{prefix}_{suffix}.csv"));
            std::fs::write(&path, body).map_err(io_err(&path))?;
            w(out, format_args!("wrote {}", path.display()))?;
        }
    }
    Ok(0)
}

/// Loss log path for a checkpoint path.
pub fn loss_csv_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".losses.csv");
    PathBuf::from(s)
}

/// Applies flag overrides on top of `base`.
fn resolve_config(a: &TrainArgs, mut c: TrainConfig) -> TrainConfig {
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { c.$field = v; })* };
    }
    set!(epochs => epochs, lr => lr, window => window, clip => clip_norm, keep_prob => keep_prob, seed => seed,
         batch_size => batch_size, interp_hidden => interp_hidden, genre_hidden => genre_hidden,
         checkpoint_every => checkpoint_every, masked_loss => masked_loss);
    c
}

fn write_outputs(state: &Checkpoint, ckpt: &Path) -> Result<(), ModelError> {
    save_checkpoint(state, ckpt)?;
    let path = loss_csv_path(ckpt);
    std::fs::write(&path, loss_csv(&state.history)).map_err(|source| ModelError::Io { path, source })
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let resumed = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let base = resumed.as_ref().map_or_else(TrainConfig::default, |ck| ck.config.clone());
    let config = resolve_config(a, base);
    echo_config(
        out,
        json!({"command": "train", "manifest": a.manifest, "out": a.out, "resume": a.resume,
               "train": serde_json::to_value(&config).expect("config serializes")}),
    )?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if resumed.as_ref().is_some_and(|ck| ck.config.dims() != config.dims()) {
        return Err(CliError::Usage("model dimensions cannot change on resume".into()));
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let data = load_dataset(&manifest, config.window)?;
    let state = match resumed {
        Some(ck) => Checkpoint { config, ..ck },
        None => Checkpoint::fresh(config, &data.keys().cloned().collect::<Vec<_>>())?,
    };
    let every = state.config.checkpoint_every;
    let mut trainer = Trainer::new(state, data)?;
    let result = trainer.run(|s| {
        for r in s.history.iter().filter(|r| r.epoch == s.epoch) {
            match r.val_loss {
                Some(v) => log::info!("epoch {} {}: train {:.6e} val {:.6e}", r.epoch, r.genre, r.train_loss, v),
                None => log::info!("epoch {} {}: train {:.6e}", r.epoch, r.genre, r.train_loss),
            }
        }
        if s.epoch % every == 0 || s.epoch == s.config.epochs {
            write_outputs(s, &a.out)?;
        }
        Ok(())
    });
    match result {
        Ok(()) => {
            let state = trainer.into_state();
            write_outputs(&state, &a.out)?;
            for r in state.history.iter().filter(|r| r.epoch == state.epoch) {
                w(out, format_args!("epoch {} {}: train_loss {:.6e}", r.epoch, r.genre, r.train_loss))?;
            }
            w(out, format_args!("checkpoint written to {}", a.out.display()))?;
            Ok(0)
        }
        Err(ModelError::Diverged { epoch, last_good }) => {
            write_outputs(&last_good, &a.out)?;
            Err(CliError::Runtime(format!(
                "training diverged in epoch {epoch}; checkpoint from epoch {} kept at {}",
                last_good.epoch,
                a.out.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_render(a: &RenderArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    echo_config(out, json!({"command": "render", "ckpt": a.ckpt, "in": a.input, "genre": a.genre, "out": a.out}))?;
    let genre = GenreLabel::new(&a.genre)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let score: MidiFile = load_midi(&a.input)?;
    let performed = predict_performance(&ck.params, &score, &genre, ck.config.window)?;
    let bytes = write_midi(&performed).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&a.out, bytes).map_err(io_err(&a.out))?;
    w(out, format_args!("rendered {} notes as {genre} to {}", extract_notes(&performed).spans.len(), a.out.display()))?;
    Ok(0)
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    echo_config(
        out,
        json!({"command": "gradcheck", "seed": a.seed, "tolerance": a.tolerance, "seeds": a.seeds,
               "inject_fault": a.inject_fault}),
    )?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let results = run_gradcheck_suite(a.seed, a.seeds, a.inject_fault);
    out.write_all(format_suite(&results, a.tolerance).as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(if results.iter().all(|r| r.max_rel_error < a.tolerance) { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("stylenet").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_flags_rejected() {
        assert!(parse(&["gradcheck", "--bogus"]).is_err());
        assert!(parse(&["render", "--ckpt", "a", "--in", "b", "--out", "c"]).is_err());
    }

    #[test]
    fn flags_override_base_config() {
        let Command::Train(a) = parse(&["train", "--manifest", "m", "--out", "o", "--lr", "0.5", "--clip", "3"])
            .unwrap()
            .command
        else {
            panic!()
        };
        let base = TrainConfig { epochs: 7, lr: 0.1, ..TrainConfig::default() };
        let c = resolve_config(&a, base);
        assert_eq!((c.lr, c.clip_norm, c.epochs), (0.5, 3.0, 7));
    }

    #[test]
    fn loss_path() {
        assert_eq!(loss_csv_path(Path::new("run/model.ckpt")), PathBuf::from("run/model.ckpt.losses.csv"));
    }
}
