//! Command-line front end. Every command writes CSV files plus `manifest.json`
//! into `--out-dir`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 degenerate
//! probabilities encountered under `--strict`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::{hex_digest, Checkpoint, ModelConfig};
use crate::datasets::{self, GenderMode, Template, WinogradRecord};
use crate::effects::{CandidateDistribution, Metric};
use crate::error::{Error, Result};
use crate::mediation::{self, EffectKind, EffectMap, LmSubject, Mediator, Runner, Unit};
use crate::model::Model;
use crate::selection::{self, NieObjective};
use crate::tokenizer::Vocabulary;
use crate::toy;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cma", version, about = "Causal mediation analysis of gender bias in GPT2-style models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random checkpoint (and, for the toy preset, a vocabulary and corpora).
    Init(InitArgs),
    /// Per-example and population total effects.
    TotalEffect(TotalEffectArgs),
    /// Per-mediator effect maps, per-layer sweeps and the NIE-sum / NIE-all gap.
    Mediate(MediateArgs),
    /// Top-k or greedy mediator selection curves.
    Select(SelectArgs),
    /// Decomposition fit, neuron stripes, or correlation with external bias.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Toy,
    Gpt2Small,
    Gpt2Distil,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, value_enum, default_value = "toy")]
    pub preset: Preset,
    /// Seed for the weight initializer.
    #[arg(long)]
    pub seed: u64,
    /// Number of blocks for the toy preset.
    #[arg(long, default_value_t = 2)]
    pub n_layers: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Binary,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Original,
    Normdiff,
    Tv,
    Linf,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Original => Metric::Original,
            MetricArg::Normdiff => Metric::NormDiff,
            MetricArg::Tv => Metric::Tv,
            MetricArg::Linf => Metric::Linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MediatorArg {
    Neuron,
    Head,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary file (`token<TAB>id`); byte-level BPE when `--merges` is given.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub merges: Option<PathBuf>,
    /// Winograd-style corpus; selects the swap-gender experiment.
    #[arg(long, conflicts_with_all = ["templates", "professions"])]
    pub corpus: Option<PathBuf>,
    /// Templates file; defaults to the built-in templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Profession ratings; selects the set-gender experiment.
    #[arg(long)]
    pub professions: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "binary")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "original")]
    pub metric: MetricArg,
    /// Keep only examples that survive the total-effect filter.
    #[arg(long)]
    pub filter_te: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Exit with code 3 when a candidate probability underflowed.
    #[arg(long)]
    pub strict: bool,
    /// Replace the input intervention with the identity.
    #[arg(long)]
    pub null_intervention: bool,
}

#[derive(Debug, Args)]
pub struct TotalEffectArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MediatorSelection {
    #[arg(long, value_enum)]
    pub mediator: MediatorArg,
    /// Layers, e.g. `0,2-4`; neurons use 0..=L, heads 1..=L. Defaults to all.
    #[arg(long)]
    pub layers: Option<String>,
    /// Head indices, e.g. `0-5`. Defaults to all.
    #[arg(long)]
    pub heads: Option<String>,
}

#[derive(Debug, Args)]
pub struct MediateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub select: MediatorSelection,
    /// Share of each layer's neurons in the per-layer sweep.
    #[arg(long, default_value_t = 5.0)]
    pub top_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Greedy,
    Topk,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub select: MediatorSelection,
    #[arg(long, value_enum, default_value = "greedy")]
    pub method: MethodArg,
    /// Number of selection steps (default: 20 for greedy, every full block for top-k).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Mediators added per top-k step (default: 96 for neurons, 1 for heads).
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Greedy only: evaluate only the best `m` remaining mediators by individual NIE.
    #[arg(long)]
    pub candidates: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisArg {
    Decomposition,
    Stripes,
    Correlation,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub analysis: AnalysisArg,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub heads: Option<String>,
    /// Seed for the stripe permutation baseline.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Share of a layer's neurons counted as effective.
    #[arg(long, default_value_t = 0.1)]
    pub effective_fraction: f64,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
            CliError::Degenerate(m) => write!(f, "degenerate probabilities: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (including the program name), runs the command, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Init(a) => cmd_init(a),
        Command::TotalEffect(a) => cmd_total_effect(a),
        Command::Mediate(a) => cmd_mediate(a),
        Command::Select(a) => cmd_select(a),
        Command::Diagnostics(a) => cmd_diagnostics(a),
    }
}

#[derive(Debug, Serialize)]
struct FileRecord {
    role: String,
    path: String,
    sha256: String,
}

/// Provenance of one command run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    command: String,
    engine_version: &'static str,
    checkpoint: Option<FileRecord>,
    inputs: Vec<FileRecord>,
    metric: Option<Metric>,
    seed: Option<u64>,
    workers: usize,
    units: Option<usize>,
    wall_clock_seconds: f64,
    outputs: Vec<FileRecord>,
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex_digest(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn file_record(role: &str, path: &Path) -> Result<FileRecord> {
    Ok(FileRecord {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

/// Collects outputs of a run and writes the manifest last.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        self.write(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header)?;
            for r in rows {
                out.write_record(&r)?;
            }
            out.flush().map_err(|e| Error::io(name, e))?;
            Ok(())
        })
    }

    fn finish(self, mut manifest: RunManifest, started: Instant) -> Result<()> {
        for f in &self.files {
            let name = f.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            manifest.outputs.push(FileRecord {
                role: "output".into(),
                path: name,
                sha256: file_sha256(f)?,
            });
        }
        manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn parse_index_list(spec: &str, lo: usize, hi: usize, what: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || usage(format!("bad {what} list {spec:?}"));
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let v: usize = part.parse().map_err(|_| bad())?;
                (v, v)
            }
        };
        if a > b || a < lo || b > hi {
            return Err(usage(format!("{what} range {part:?} outside {lo}..={hi}")));
        }
        out.extend(a..=b);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(usage(format!("empty {what} list")));
    }
    Ok(out)
}

/// Loaded model, corpus units and provenance shared by the analysis commands.
struct Context {
    model: Model,
    units: Vec<Unit>,
    winograd: Option<Vec<WinogradRecord>>,
    inputs: Vec<FileRecord>,
    checkpoint: FileRecord,
    runner: Runner,
    notes_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CorpusKind {
    Professions,
    Winograd,
}

impl Context {
    fn corpus_kind(c: &Common) -> CliResult<CorpusKind> {
        match (&c.corpus, &c.professions) {
            (Some(_), _) => Ok(CorpusKind::Winograd),
            (None, Some(_)) => Ok(CorpusKind::Professions),
            (None, None) => Err(usage("give --corpus (Winograd) or --professions (templates)")),
        }
    }

    fn load(c: &Common) -> CliResult<Self> {
        let kind = Self::corpus_kind(c)?;
        if c.workers == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        let checkpoint = file_record("checkpoint", &c.checkpoint)?;
        let model = Model::new(Checkpoint::load(&c.checkpoint)?);
        let vocab = Vocabulary::load(&c.vocab, c.merges.as_deref())?;
        if vocab.len() > model.config().vocab_size {
            return Err(CliError::Data(Error::Vocabulary(format!(
                "vocabulary has {} tokens but the checkpoint only {}",
                vocab.len(),
                model.config().vocab_size
            ))));
        }
        let mut inputs = vec![file_record("vocab", &c.vocab)?];
        if let Some(m) = &c.merges {
            inputs.push(file_record("merges", m)?);
        }
        let mut winograd = None;
        let excluded;
        let units = match kind {
            CorpusKind::Winograd => {
                let path = c.corpus.as_ref().expect("checked");
                inputs.push(file_record("corpus", path)?);
                if c.mode == ModeArg::Neutral {
                    return Err(usage("--mode neutral applies to the professions corpus"));
                }
                let corpus = datasets::load_winograd(path, &vocab)?;
                excluded = corpus.excluded;
                let units = corpus
                    .examples
                    .iter()
                    .map(|e| Unit::from_winograd(e, &vocab, c.null_intervention))
                    .collect::<Result<Vec<_>>>()?;
                winograd = Some(corpus.records);
                units
            }
            CorpusKind::Professions => {
                let templates: Vec<Template> = match &c.templates {
                    Some(p) => {
                        inputs.push(file_record("templates", p)?);
                        datasets::load_templates(p)?
                    }
                    None => datasets::TEMPLATES.iter().map(|t| Template::parse(t)).collect::<Result<_>>()?,
                };
                let path = c.professions.as_ref().expect("checked");
                inputs.push(file_record("professions", path)?);
                let professions = datasets::load_professions(path)?;
                let mode = match c.mode {
                    ModeArg::Binary => GenderMode::Binary,
                    ModeArg::Neutral => GenderMode::Neutral,
                };
                let examples = datasets::build_professions(&templates, &professions, &vocab, mode)?;
                excluded = templates.len() * professions.len() - examples.len();
                examples
                    .iter()
                    .map(|e| Unit::from_template(e, &vocab, c.null_intervention))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if units.is_empty() {
            return Err(CliError::Data(Error::Precondition("the corpus yields no usable examples".into())));
        }
        let runner = Runner::new(c.metric.into(), c.workers)?;
        let mut ctx = Self {
            model,
            units,
            winograd,
            inputs,
            checkpoint,
            runner,
            notes_excluded: excluded,
        };
        if c.filter_te {
            let (kept, _) = ctx.te_filter()?;
            ctx.units = kept.iter().map(|&i| ctx.units[i].clone()).collect();
            if let Some(recs) = ctx.winograd.as_mut() {
                *recs = kept.iter().map(|&i| recs[i].clone()).collect();
            }
        }
        Ok(ctx)
    }

    fn kind(&self) -> CorpusKind {
        if self.winograd.is_some() {
            CorpusKind::Winograd
        } else {
            CorpusKind::Professions
        }
    }

    fn subject(&self) -> LmSubject<'_> {
        LmSubject::new(&self.model, self.units.clone())
    }

    /// Indices kept by the total-effect filter, with every unit's TE.
    fn te_filter(&self) -> CliResult<(Vec<usize>, Vec<f64>)> {
        let base = self.runner.baselines(&self.subject())?;
        let te = base
            .iter()
            .map(|[null, interv]| crate::effects::unit_effect(self.runner.metric(), interv, null))
            .collect::<Result<Vec<_>>>()?;
        Ok((datasets::filter_by_total_effect(te.len(), &te)?, te))
    }

    fn manifest(&self, command: &str, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            engine_version: env!("CARGO_PKG_VERSION"),
            checkpoint: Some(FileRecord {
                role: self.checkpoint.role.clone(),
                path: self.checkpoint.path.clone(),
                sha256: self.checkpoint.sha256.clone(),
            }),
            inputs: self
                .inputs
                .iter()
                .map(|r| FileRecord {
                    role: r.role.clone(),
                    path: r.path.clone(),
                    sha256: r.sha256.clone(),
                })
                .collect(),
            metric: Some(self.runner.metric()),
            seed,
            workers: self.runner.workers(),
            units: Some(self.units.len()),
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    fn require(&self, mediator: MediatorArg) -> CliResult<()> {
        match (mediator, self.kind()) {
            (MediatorArg::Neuron, CorpusKind::Professions) | (MediatorArg::Head, CorpusKind::Winograd) => Ok(()),
            (MediatorArg::Neuron, CorpusKind::Winograd) => {
                Err(usage("neuron mediators pair with the professions corpus (--professions)"))
            }
            (MediatorArg::Head, CorpusKind::Professions) => Err(usage("head mediators pair with the Winograd corpus (--corpus)")),
        }
    }

    fn neuron_layers(&self, spec: Option<&str>) -> CliResult<Vec<usize>> {
        let l = self.model.config().n_layers;
        spec.map_or_else(|| Ok((0..=l).collect()), |s| parse_index_list(s, 0, l, "layer"))
    }

    fn head_layers(&self, spec: Option<&str>) -> CliResult<Vec<usize>> {
        let l = self.model.config().n_layers;
        spec.map_or_else(|| Ok((1..=l).collect()), |s| parse_index_list(s, 1, l, "layer"))
    }

    fn head_indices(&self, spec: Option<&str>) -> CliResult<Vec<usize>> {
        let h = self.model.config().n_heads;
        spec.map_or_else(|| Ok((0..h).collect()), |s| parse_index_list(s, 0, h - 1, "head"))
    }

    fn mediators(&self, sel: &MediatorSelection) -> CliResult<Vec<Mediator>> {
        self.require(sel.mediator)?;
        Ok(match sel.mediator {
            MediatorArg::Neuron => {
                if sel.heads.is_some() {
                    return Err(usage("--heads applies to head mediators"));
                }
                mediation::all_neurons(&self.neuron_layers(sel.layers.as_deref())?, self.model.config().d_model)
            }
            MediatorArg::Head => mediation::all_heads(
                &self.head_layers(sel.layers.as_deref())?,
                &self.head_indices(sel.heads.as_deref())?,
            ),
        })
    }
}

fn orientation_name(u: &Unit) -> String {
    u.orientation.map_or_else(String::new, |o| o.to_string())
}

fn check_strict(strict: bool, degenerate: usize) -> CliResult<()> {
    if strict && degenerate > 0 {
        return Err(CliError::Degenerate(format!("{degenerate} example(s) hit the probability floor")));
    }
    Ok(())
}

fn cmd_init(a: &InitArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut out = Outputs::new(&a.out_dir)?;
    let ckpt = match a.preset {
        Preset::Toy => {
            if a.n_layers == 0 {
                return Err(usage("--n-layers must be at least 1"));
            }
            toy::model_checkpoint(a.n_layers, a.seed)?
        }
        Preset::Gpt2Small | Preset::Gpt2Distil => {
            let n_layers = if a.preset == Preset::Gpt2Small { 12 } else { 6 };
            Checkpoint::init_random(
                ModelConfig {
                    n_layers,
                    n_heads: 12,
                    d_model: 768,
                    d_ff: 3072,
                    vocab_size: 50257,
                    max_positions: 1024,
                },
                a.seed,
            )?
        }
    };
    out.write("checkpoint.cma1", |w| w.write_all(&ckpt.to_bytes()).map_err(|e| Error::io("checkpoint.cma1", e)))?;
    if a.preset == Preset::Toy {
        let vocab = toy::vocabulary();
        let vocab_path = a.out_dir.join("vocab.txt");
        vocab.save(&vocab_path, None)?;
        out.files.push(vocab_path);
        out.write("templates.txt", |w| {
            for t in datasets::TEMPLATES {
                writeln!(w, "{t}").map_err(|e| Error::io("templates.txt", e))?;
            }
            Ok(())
        })?;
        let prof = a.out_dir.join("professions.tsv");
        datasets::write_professions(&prof, &toy::professions(a.seed))?;
        out.files.push(prof);
        let wino = a.out_dir.join("winograd.tsv");
        datasets::write_winograd(&wino, &toy::winograd_records(40, a.seed))?;
        out.files.push(wino);
    }
    let manifest = RunManifest {
        command: "init".into(),
        engine_version: env!("CARGO_PKG_VERSION"),
        checkpoint: None,
        inputs: Vec::new(),
        metric: None,
        seed: Some(a.seed),
        workers: 1,
        units: None,
        wall_clock_seconds: 0.0,
        outputs: Vec::new(),
    };
    out.finish(manifest, started)?;
    Ok(())
}

fn cmd_total_effect(a: &TotalEffectArgs) -> CliResult<()> {
    let started = Instant::now();
    let c = &a.common;
    // The filter is applied here after scoring so that every example is reported.
    let mut unfiltered = clone_common(c);
    unfiltered.filter_te = false;
    let ctx = Context::load(&unfiltered)?;
    let base = ctx.runner.baselines(&ctx.subject())?;
    let metric = ctx.runner.metric();
    let te = base
        .iter()
        .map(|[null, interv]| crate::effects::unit_effect(metric, interv, null))
        .collect::<Result<Vec<f64>>>()?;
    let degenerate: Vec<bool> = base.iter().map(|[n, i]| n.is_degenerate() || i.is_degenerate()).collect();

    let mut out = Outputs::new(&c.out_dir)?;
    out.csv(
        "total_effect.csv",
        &[
            "unit", "label", "orientation", "included", "p_anti_null", "p_stereo_null", "p_anti_intervened",
            "p_stereo_intervened", "te", "external_bias", "degenerate",
        ],
        ctx.units.iter().enumerate().map(|(i, u)| {
            let [n, x]: [CandidateDistribution; 2] = base[i];
            vec![
                i.to_string(),
                u.label.clone(),
                orientation_name(u),
                u.included.to_string(),
                f(n.p_anti()),
                f(n.p_stereo()),
                f(x.p_anti()),
                f(x.p_stereo()),
                f(te[i]),
                f(u.external_bias),
                degenerate[i].to_string(),
            ]
        }),
    )?;
    let group = |pred: &dyn Fn(&Unit) -> bool| {
        let v: Vec<f64> = ctx
            .units
            .iter()
            .zip(&te)
            .filter(|(u, _)| u.included && pred(u))
            .map(|(_, &t)| t)
            .collect();
        (v.len(), crate::effects::mean(&v))
    };
    let mut summary = Vec::new();
    for (name, o) in [("female", datasets::Orientation::Female), ("male", datasets::Orientation::Male)] {
        let (n, m) = group(&|u: &Unit| u.orientation == Some(o));
        summary.push(vec![name.to_string(), n.to_string(), f(m)]);
    }
    let (n, m) = group(&|_| true);
    summary.push(vec!["all".to_string(), n.to_string(), f(m)]);
    out.csv("total_effect_summary.csv", &["group", "n", "te", "metric"], summary.into_iter().map(|mut r| {
        r.push(metric.to_string());
        r
    }))?;

    if c.filter_te {
        let kept = datasets::filter_by_total_effect(te.len(), &te)?;
        out.csv(
            "filtered.csv",
            &["unit", "label", "te"],
            kept.iter().map(|&i| vec![i.to_string(), ctx.units[i].label.clone(), f(te[i])]),
        )?;
        let kept_te: Vec<f64> = kept.iter().filter(|&&i| ctx.units[i].included).map(|&i| te[i]).collect();
        out.csv(
            "filtered_summary.csv",
            &["n", "te", "metric"],
            [vec![kept_te.len().to_string(), f(crate::effects::mean(&kept_te)), metric.to_string()]],
        )?;
        if let Some(recs) = &ctx.winograd {
            out.write("filtered_corpus.tsv", |w| {
                for &i in &kept {
                    writeln!(w, "{}", recs[i].to_line()).map_err(|e| Error::io("filtered_corpus.tsv", e))?;
                }
                Ok(())
            })?;
        }
    }
    let mut manifest = ctx.manifest("total-effect", None);
    manifest.units = Some(ctx.units.len());
    out.finish(manifest, started)?;
    if ctx.notes_excluded > 0 {
        eprintln!("note: {} corpus entries excluded before analysis", ctx.notes_excluded);
    }
    check_strict(c.strict, degenerate.iter().filter(|&&d| d).count())
}

fn clone_common(c: &Common) -> Common {
    Common {
        checkpoint: c.checkpoint.clone(),
        vocab: c.vocab.clone(),
        merges: c.merges.clone(),
        corpus: c.corpus.clone(),
        templates: c.templates.clone(),
        professions: c.professions.clone(),
        mode: c.mode,
        metric: c.metric,
        filter_te: c.filter_te,
        workers: c.workers,
        out_dir: c.out_dir.clone(),
        strict: c.strict,
        null_intervention: c.null_intervention,
    }
}

fn layer_rows(sweep: &[mediation::LayerEffect]) -> Vec<Vec<String>> {
    sweep
        .iter()
        .map(|l| {
            vec![
                l.layer.to_string(),
                l.mediators.len().to_string(),
                f(l.effect.effect),
                f(l.effect.sd),
                l.effect.n.to_string(),
            ]
        })
        .collect()
}

const LAYER_HEADER: [&str; 5] = ["layer", "n_mediators", "nie", "sd", "n"];

fn cmd_mediate(a: &MediateArgs) -> CliResult<()> {
    let started = Instant::now();
    let ctx = Context::load(&a.common)?;
    let mediators = ctx.mediators(&a.select)?;
    if !(a.top_percent > 0.0 && a.top_percent <= 100.0) {
        return Err(usage("--top-percent must be in (0, 100]"));
    }
    let subject = ctx.subject();
    let cfg = *ctx.model.config();
    let mut out = Outputs::new(&a.common.out_dir)?;
    let degenerate;
    match a.select.mediator {
        MediatorArg::Neuron => {
            let mut sets: Vec<Vec<Mediator>> = mediators.iter().map(|&m| vec![m]).collect();
            sets.push(mediators.clone());
            let eval = ctx.runner.evaluate(&subject, &sets, &[EffectKind::Nie])?;
            let nie_all = eval.population(&eval.nie[mediators.len()]);
            let map = EffectMap::from_evaluation(&mediators, eval)?;
            let sweep = mediation::per_layer_sweep_neurons(&ctx.runner, &subject, &map, a.top_percent)?;
            degenerate = map.evaluation.degenerate.iter().filter(|&&d| d).count();
            write_map(&mut out, &map)?;
            let grid = map.grid(EffectKind::Nie, 0, cfg.n_layers + 1, cfg.d_model);
            out.write("nie_heatmap.csv", |w| mediation::write_grid(w, 0, &grid))?;
            out.csv("layer_sweep.csv", &LAYER_HEADER, layer_rows(&sweep))?;
            let syn = mediation::nie_sum_vs_all(&map, nie_all);
            out.csv(
                "synergy.csv",
                &["nie_sum", "nie_all", "relative_gap", "te", "metric"],
                [vec![
                    f(syn.nie_sum),
                    f(syn.nie_all),
                    syn.relative_gap.map_or_else(String::new, f),
                    f(map.evaluation.te_population()),
                    map.metric.to_string(),
                ]],
            )?;
        }
        MediatorArg::Head => {
            let layers: Vec<usize> = {
                let mut l: Vec<usize> = mediators.iter().map(Mediator::layer).collect();
                l.dedup();
                l
            };
            let mut sets: Vec<Vec<Mediator>> = mediators.iter().map(|&m| vec![m]).collect();
            sets.extend(
                layers
                    .iter()
                    .map(|&l| mediators.iter().copied().filter(|m| m.layer() == l).collect()),
            );
            sets.push(mediators.clone());
            let kinds = [EffectKind::Nie, EffectKind::Nde];
            let eval = ctx.runner.evaluate(&subject, &sets, &kinds)?;
            let n_single = mediators.len();
            let all = sets.len() - 1;
            let (nie_all, nde_all) = (eval.population(&eval.nie[all]), eval.population(&eval.nde[all]));
            let sweep: Vec<Vec<String>> = layers
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let v = &eval.nie[n_single + i];
                    vec![
                        l.to_string(),
                        sets[n_single + i].len().to_string(),
                        f(eval.population(v)),
                        f(eval.population_sd(v)),
                        eval.n_included().to_string(),
                    ]
                })
                .collect();
            let per_unit: Vec<Vec<String>> = (0..ctx.units.len())
                .filter(|&u| eval.included[u])
                .flat_map(|u| {
                    let eval = &eval;
                    mediators.iter().enumerate().map(move |(i, m)| {
                        vec![
                            u.to_string(),
                            m.layer().to_string(),
                            m.index().to_string(),
                            f(eval.te[u]),
                            f(eval.nde[i][u]),
                            f(eval.nie[i][u]),
                        ]
                    })
                })
                .collect();
            let map = EffectMap::from_evaluation(&mediators, eval)?;
            degenerate = map.evaluation.degenerate.iter().filter(|&&d| d).count();
            write_map(&mut out, &map)?;
            let nie = map.grid(EffectKind::Nie, 1, cfg.n_layers, cfg.n_heads);
            let nde = map.grid(EffectKind::Nde, 1, cfg.n_layers, cfg.n_heads);
            out.write("nie_heatmap.csv", |w| mediation::write_grid(w, 1, &nie))?;
            out.write("nde_heatmap.csv", |w| mediation::write_grid(w, 1, &nde))?;
            out.csv("layer_sweep.csv", &LAYER_HEADER, sweep)?;
            out.csv("per_example.csv", &["unit", "layer", "head", "te", "nde", "nie"], per_unit)?;
            let syn = mediation::nie_sum_vs_all(&map, nie_all);
            out.csv(
                "synergy.csv",
                &["nie_sum", "nie_all", "relative_gap", "nde_all", "te", "metric"],
                [vec![
                    f(syn.nie_sum),
                    f(syn.nie_all),
                    syn.relative_gap.map_or_else(String::new, f),
                    f(nde_all),
                    f(map.evaluation.te_population()),
                    map.metric.to_string(),
                ]],
            )?;
        }
    }
    out.finish(ctx.manifest("mediate", None), started)?;
    check_strict(a.common.strict, degenerate)
}

fn write_map(out: &mut Outputs, map: &EffectMap) -> Result<()> {
    out.write("effects.csv", |w| map.write_csv(w))
}

fn cmd_select(a: &SelectArgs) -> CliResult<()> {
    let started = Instant::now();
    let ctx = Context::load(&a.common)?;
    let mediators = ctx.mediators(&a.select)?;
    let subject = ctx.subject();
    let block = a.block_size.unwrap_or(match a.select.mediator {
        MediatorArg::Neuron => 96,
        MediatorArg::Head => 1,
    });
    if block == 0 {
        return Err(usage("--block-size must be positive"));
    }
    let curve = match (a.select.mediator, a.method) {
        (MediatorArg::Neuron, MethodArg::Greedy) => {
            return Err(usage("neuron selection is top-k only (--method topk)"));
        }
        (_, MethodArg::Topk) => {
            let budget = a.budget.unwrap_or(mediators.len() / block);
            if budget * block > mediators.len() {
                return Err(usage(format!("{budget} blocks of {block} exceed the {} mediators", mediators.len())));
            }
            let values = |sets: &[Vec<Mediator>]| -> Result<Vec<f64>> {
                let eval = ctx.runner.evaluate(&subject, sets, &[EffectKind::Nie])?;
                Ok(eval.nie.iter().map(|v| eval.population(v)).collect())
            };
            let singles: Vec<Vec<Mediator>> = mediators.iter().map(|&m| vec![m]).collect();
            let individual: Vec<(Mediator, f64)> = mediators.iter().copied().zip(values(&singles)?).collect();
            selection::top_k_curve(values, &individual, block, budget)?
        }
        (MediatorArg::Head, MethodArg::Greedy) => {
            let budget = a.budget.unwrap_or(20.min(mediators.len()));
            if budget > mediators.len() {
                return Err(usage(format!("budget {budget} exceeds the {} mediators", mediators.len())));
            }
            let objective = NieObjective::new(&ctx.runner, &subject)?;
            let singles: Vec<Vec<Mediator>> = mediators.iter().map(|&m| vec![m]).collect();
            let individual: Vec<(Mediator, f64)> = match a.candidates {
                Some(_) => mediators.iter().copied().zip(objective.values(&singles)?).collect(),
                None => Vec::new(),
            };
            let limit = a.candidates.map(|m| (individual.as_slice(), m));
            ctx.runner
                .install(|| selection::select_greedy(&objective, &mediators, budget, limit))?
        }
    };
    let mut out = Outputs::new(&a.common.out_dir)?;
    out.write("selection_curve.csv", |w| curve.write_csv(w))?;
    out.finish(ctx.manifest("select", None), started)?;
    Ok(())
}

fn cmd_diagnostics(a: &DiagnosticsArgs) -> CliResult<()> {
    let started = Instant::now();
    let ctx = Context::load(&a.common)?;
    let subject = ctx.subject();
    let cfg = *ctx.model.config();
    let mut out = Outputs::new(&a.common.out_dir)?;
    let mut seed = None;
    let mut degenerate = 0;
    match a.analysis {
        AnalysisArg::Decomposition => {
            ctx.require(MediatorArg::Head)?;
            if ctx.runner.metric() != Metric::Original {
                return Err(usage("the decomposition uses --metric original"));
            }
            let heads = mediation::all_heads(&ctx.head_layers(a.layers.as_deref())?, &ctx.head_indices(a.heads.as_deref())?);
            let d = mediation::decomposition_check(&ctx.runner, &subject, &heads)?;
            out.csv(
                "decomposition.csv",
                &["unit", "included", "te", "nde", "nie", "residual"],
                (0..d.te.len()).map(|u| {
                    vec![
                        u.to_string(),
                        d.included[u].to_string(),
                        f(d.te[u]),
                        f(d.nde[u]),
                        f(d.nie[u]),
                        f(d.residual[u]),
                    ]
                }),
            )?;
            out.csv(
                "decomposition_points.csv",
                &["layer", "head", "unit", "rhs", "lhs"],
                d.points.iter().map(|p| {
                    vec![
                        p.mediator.layer().to_string(),
                        p.mediator.index().to_string(),
                        p.unit.to_string(),
                        f(p.rhs),
                        f(p.lhs),
                    ]
                }),
            )?;
            let fit = d.fit.map_or_else(
                || vec![String::new(), String::new(), String::new(), d.points.len().to_string()],
                |fit| vec![f(fit.slope), f(fit.intercept), f(fit.r_squared), fit.n.to_string()],
            );
            out.csv("decomposition_fit.csv", &["slope", "intercept", "r_squared", "n"], [fit])?;
        }
        AnalysisArg::Stripes => {
            ctx.require(MediatorArg::Neuron)?;
            let s = a.seed.ok_or_else(|| usage("--seed is required for the stripe permutation baseline"))?;
            seed = Some(s);
            let layers = ctx.neuron_layers(a.layers.as_deref())?;
            let mediators = mediation::all_neurons(&layers, cfg.d_model);
            let map = EffectMap::compute(&ctx.runner, &subject, &mediators, &[EffectKind::Nie])?;
            degenerate = map.evaluation.degenerate.iter().filter(|&&d| d).count();
            let grid: Vec<Vec<f64>> = layers
                .iter()
                .map(|&l| map.grid(EffectKind::Nie, l, 1, cfg.d_model).remove(0))
                .collect();
            if layers.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(usage("stripes need a contiguous layer range"));
            }
            let rows = mediation::stripe_analysis(&grid, layers[0], a.effective_fraction, a.trials, s)?;
            out.csv(
                "stripes.csv",
                &["layer", "next_layer", "effective", "aligned", "randomized", "trials"],
                rows.iter().map(|r| {
                    vec![
                        r.layer.to_string(),
                        (r.layer + 1).to_string(),
                        r.effective.to_string(),
                        f(r.aligned),
                        f(r.randomized),
                        r.trials.to_string(),
                    ]
                }),
            )?;
        }
        AnalysisArg::Correlation => {
            let base = ctx.runner.baselines(&subject)?;
            let metric = ctx.runner.metric();
            degenerate = base.iter().filter(|[n, i]| n.is_degenerate() || i.is_degenerate()).count();
            let included: Vec<usize> = (0..ctx.units.len()).filter(|&u| ctx.units[u].included).collect();
            let te = included
                .iter()
                .map(|&u| crate::effects::unit_effect(metric, &base[u][1], &base[u][0]))
                .collect::<Result<Vec<f64>>>()?;
            let bias: Vec<f64> = included.iter().map(|&u| ctx.units[u].external_bias).collect();
            let c = mediation::correlate_effects(&te, &bias)?;
            out.csv(
                "correlation_points.csv",
                &["unit", "external_bias", "te", "log_te"],
                included.iter().enumerate().map(|(i, &u)| {
                    let log = if te[i] > 0.0 { f(te[i].ln()) } else { String::new() };
                    vec![u.to_string(), f(bias[i]), f(te[i]), log]
                }),
            )?;
            out.csv("correlation.csv", &["r", "n", "flagged"], [vec![f(c.r), c.n.to_string(), c.flagged.to_string()]])?;
        }
    }
    out.finish(ctx.manifest("diagnostics", seed), started)?;
    check_strict(a.common.strict, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lists() {
        assert_eq!(parse_index_list("0,2-4, 3", 0, 5, "layer").unwrap(), vec![0, 2, 3, 4]);
        assert!(parse_index_list("4-2", 0, 5, "layer").is_err());
        assert!(parse_index_list("7", 0, 5, "layer").is_err());
        assert!(parse_index_list("x", 0, 5, "layer").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["cma", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["cma", "mediate", "--checkpoint", "x"]), EXIT_USAGE);
        assert_eq!(run(["cma", "--version"]), 0);
    }

    #[test]
    fn missing_files_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let code = run([
            "cma".as_ref(),
            "total-effect".as_ref(),
            "--checkpoint".as_ref(),
            dir.path().join("nope.cma1").as_os_str(),
            "--vocab".as_ref(),
            dir.path().join("nope.txt").as_os_str(),
            "--professions".as_ref(),
            dir.path().join("p.tsv").as_os_str(),
            "--out-dir".as_ref(),
            dir.path().as_os_str(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }
}
