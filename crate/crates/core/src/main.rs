use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use scmkit::corpus::{parse_dataset, parse_word_forms, write_dataset, Dataset};
use scmkit::geometry::{load_embeddings, write_embeddings, EmbeddingTable};
use scmkit::metrics::{evaluate, write_pr_curve, write_report};
use scmkit::nsd::{load_model, save_model, NsdModel, NsdTrainConfig};
use scmkit::pipeline::{ablate, fill_positions, nsd_rows, predict, train_nsd, Method, PredictOptions};
use scmkit::scm::{parse_predictions, write_predictions, RelabelMode, Spaces};
use scmkit::synth::{generate, SynthConfig};

/// Semantic change modeling over precomputed usage and gloss embeddings.
///
/// Any subcommand accepts `--config FILE` with `key = value` lines naming
/// long flags (e.g. `emb-a = space_a.tsv`); flags given on the command line
/// take precedence.
#[derive(Parser, Debug)]
#[command(name = "scmkit", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label new usages with old senses or novel cluster ids.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Fit the novel sense detector on a gold-labeled dataset.
    #[command(args_override_self = true)]
    TrainNsd(TrainArgs),
    /// Score predictions against gold labels (ARI and F1 per word).
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Average precision of single features, same-space pairs and full detectors.
    #[command(args_override_self = true)]
    Ablate(AblateArgs),
    /// Fill missing target spans from word-form lists.
    #[command(args_override_self = true)]
    Positions(PositionsArgs),
    /// Write a seeded synthetic dataset with two embedding spaces.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SpaceArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Fine-tuned space (WSD and the first feature block).
    #[arg(long)]
    emb_a: PathBuf,
    /// Base space (WSI, AggloM and the second feature block); defaults to --emb-a.
    #[arg(long)]
    emb_b: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "SCMKIT_JOBS", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    spaces: SpaceArgs,
    #[arg(long, default_value = "wsd")]
    method: Method,
    #[arg(long, default_value = "with-wsi")]
    mode: RelabelMode,
    #[arg(long)]
    nsd_model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    k_extra: usize,
    /// Replace the threshold stored in the NSD model.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    spaces: SpaceArgs,
    /// Decision threshold stored with the model.
    #[arg(long)]
    threshold: Option<f64>,
    /// Inverse regularization strength.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    spaces: SpaceArgs,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Directory for one `recall<TAB>precision` file per model.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PositionsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `lemma<TAB>form1,form2` lines; lemmas without an entry match themselves only.
    #[arg(long)]
    forms: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    words: usize,
    #[arg(long, default_value_t = 40)]
    usages: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Receives dataset.tsv, emb_a.tsv and emb_b.tsv.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Write through a sibling temp file so a failed run never leaves a partial
/// output behind.
fn write_atomic(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> scmkit::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(&buf)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Ok(parse_dataset(open(path)?, &path.display().to_string())?)
}

fn read_table(path: &Path) -> anyhow::Result<EmbeddingTable> {
    Ok(load_embeddings(open(path)?, &path.display().to_string())?)
}

struct Loaded {
    dataset: Dataset,
    a: EmbeddingTable,
    b: Option<EmbeddingTable>,
}

impl Loaded {
    fn read(args: &SpaceArgs) -> anyhow::Result<Self> {
        Ok(Loaded {
            dataset: read_dataset(&args.dataset)?,
            a: read_table(&args.emb_a)?,
            b: args.emb_b.as_deref().map(read_table).transpose()?,
        })
    }

    fn spaces(&self) -> Spaces<'_> {
        Spaces { fine_tuned: &self.a, base: self.b.as_ref().unwrap_or(&self.a) }
    }
}

fn run_predict(args: PredictArgs) -> anyhow::Result<()> {
    let model = match (&args.nsd_model, args.method) {
        (Some(path), _) => Some(load_model(open(path)?, &path.display().to_string())?),
        (None, Method::Outlier2Cluster) => bail!("--method outlier2cluster needs --nsd-model"),
        (None, _) => None,
    };
    if args.method == Method::Outlier2Cluster && args.spaces.emb_b.is_none() {
        bail!("--method outlier2cluster needs --emb-b");
    }
    let model = match (model, args.threshold) {
        (Some(m), Some(t)) => Some(m.with_threshold(t)?),
        (m, _) => m,
    };
    let data = Loaded::read(&args.spaces)?;
    let opts = PredictOptions { method: args.method, mode: args.mode, k_extra: args.k_extra, jobs: args.spaces.jobs };
    let predictions = predict(&data.dataset, data.spaces(), model.as_ref(), &opts)?;
    write_atomic(&args.out, |buf| write_predictions(&predictions, buf))
}

fn train_config(c: f64) -> anyhow::Result<NsdTrainConfig> {
    if !(c > 0.0 && c.is_finite()) {
        bail!("--c must be a positive number, got {c}");
    }
    Ok(NsdTrainConfig { c, ..NsdTrainConfig::default() })
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let data = Loaded::read(&args.spaces)?;
    let mut model: NsdModel = train_nsd(&data.dataset, data.spaces(), &train_config(args.c)?, args.spaces.jobs)?;
    if let Some(t) = args.threshold {
        model = model.with_threshold(t)?;
    }
    write_atomic(&args.out, |buf| save_model(&model, buf))
}

fn run_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let dataset = read_dataset(&args.dataset)?;
    let predictions = parse_predictions(open(&args.predictions)?, &args.predictions.display().to_string())?;
    let report = evaluate(&dataset, &predictions)?;
    write_atomic(&args.out, |buf| write_report(&report, buf))
}

fn run_ablate(args: AblateArgs) -> anyhow::Result<()> {
    let data = Loaded::read(&args.spaces)?;
    let rows = nsd_rows(&data.dataset, data.spaces(), args.spaces.jobs)?;
    let entries = ablate(&rows, &train_config(args.c)?)?;
    if let Some(dir) = &args.curves_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for e in &entries {
            write_atomic(&dir.join(format!("{}.tsv", e.name)), |buf| write_pr_curve(&e.curve, buf))?;
        }
    }
    write_atomic(&args.out, |buf| {
        writeln!(buf, "model\tap")?;
        for e in &entries {
            writeln!(buf, "{}\t{}", e.name, e.ap)?;
        }
        Ok(())
    })
}

fn run_positions(args: PositionsArgs) -> anyhow::Result<()> {
    let dataset = read_dataset(&args.dataset)?;
    let forms = match &args.forms {
        Some(path) => parse_word_forms(open(path)?, &path.display().to_string())?,
        None => BTreeMap::new(),
    };
    let (filled, summary) = fill_positions(&dataset, &forms);
    write_atomic(&args.out, |buf| write_dataset(&filled, buf))?;
    eprintln!("filled {} kept {} unmatched {}", summary.filled, summary.kept, summary.unmatched);
    Ok(())
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    let data = generate(&SynthConfig {
        n_words: args.words,
        new_usages: args.usages,
        dim: args.dim,
        seed: args.seed,
        ..SynthConfig::default()
    })?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_atomic(&args.out_dir.join("dataset.tsv"), |buf| write_dataset(&data.dataset, buf))?;
    write_atomic(&args.out_dir.join("emb_a.tsv"), |buf| write_embeddings(&data.space_a, buf))?;
    write_atomic(&args.out_dir.join("emb_b.tsv"), |buf| write_embeddings(&data.space_b, buf))
}

/// Turn `key = value` lines into `--key value` arguments.
fn config_args(path: &str) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {path}"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{path}:{}: expected key = value", i + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("{path}:{}: bad key `{key}`", i + 1);
        }
        out.push(format!("--{key}"));
        out.push(value.trim().to_string());
    }
    Ok(out)
}

/// Splice config-file arguments right after the subcommand so that later
/// command-line flags override them.
fn expand_config(raw: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut args = Vec::with_capacity(raw.len());
    let mut config = None;
    let mut it = raw.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().context("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            args.push(a);
        }
    }
    let Some(path) = config else { return Ok(args) };
    let sub = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 2).unwrap_or(args.len());
    let extra = config_args(&path)?;
    args.splice(sub..sub, extra);
    Ok(args)
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse_from(expand_config(std::env::args().collect())?);
    match cli.command {
        Command::Predict(a) => run_predict(a),
        Command::TrainNsd(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Ablate(a) => run_ablate(a),
        Command::Positions(a) => run_positions(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
