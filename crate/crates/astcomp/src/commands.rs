//! Subcommands of the `astcomp` binary.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use astcomp_core::corpus::{flatten, AstTree, PathIds};
use astcomp_core::eval::{EvalReport, DIFFICULT_TYPES};
use astcomp_core::model::{Model, ModelConfig, Task};
use astcomp_core::synth::{self, SynthConfig};
use astcomp_core::training::{
    build_report, predict, train, weight_sweep, Baseline, EpochMetrics, Fingerprints, ReportOptions, Shard,
    TrainObserver,
};
use astcomp_core::vocab::{build_type_vocab, build_value_vocab, Vocab, DEFAULT_VALUE_VOCAB};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::files::{
    create_dir, read_json, read_shard, read_vocabs, sha256_file, shard_path, write_atomic, write_json, write_shard,
    write_vocab, CorpusStats, FileEntry, JsonLines, ShardManifest, VocabKind, SHARD_FILE, SHARD_MANIFEST_FILE,
    TYPE_VOCAB_FILE, VALUE_VOCAB_FILE,
};
use crate::input::{collect_inputs, parse_partial_ast_json, read_trees, write_trees};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "astcomp", version, about = "Multi-task AST code completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flatten JSON-lines ASTs into an encoded shard, building vocabularies.
    Preprocess(PreprocessArgs),
    /// Train a model on a shard.
    Train(TrainArgs),
    /// Score a checkpoint on a shard and write an evaluation report.
    Eval(EvalArgs),
    /// Rank candidate next nodes for a partial AST.
    Complete(CompleteArgs),
    /// Train one model per loss-weight setting and tabulate accuracies.
    Sweep(SweepArgs),
    /// Write a synthetic JSON-lines corpus.
    GenSynthetic(GenSyntheticArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => preprocess(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Complete(a) => complete(&a),
        Command::Sweep(a) => sweep(&a),
        Command::GenSynthetic(a) => gen_synthetic(&a),
    }
}

fn fingerprint_map(fp: &Fingerprints) -> impl Iterator<Item = (String, String)> {
    [("types".to_string(), fp.types.clone()), ("values".to_string(), fp.values.clone())].into_iter()
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// JSON-lines files or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for the shard, vocabularies and manifests.
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse the vocabularies in this directory instead of building new ones.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Value vocabulary size, excluding special tokens.
    #[arg(long, default_value_t = DEFAULT_VALUE_VOCAB)]
    pub k: usize,
    /// Path-to-root length.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let mut manifest = RunManifest::start("preprocess");
    if a.m == 0 {
        return Err(Error::Usage("--m must be at least 1".into()));
    }
    let files = collect_inputs(&a.inputs)?;
    let mut trees: Vec<AstTree> = Vec::new();
    let mut entries = Vec::with_capacity(files.len());
    let mut corpus_hash = Sha256::new();
    for file in &files {
        let read = read_trees(file, a.strict)?;
        let sha256 = sha256_file(file)?;
        corpus_hash.update(sha256.as_bytes());
        if !read.failures.is_empty() {
            eprintln!("warning: {}: skipped {} malformed line(s)", file.display(), read.failures.len());
            for (line, e) in read.failures.iter().take(5) {
                eprintln!("  {}:{line}: {e}", file.display());
            }
        }
        entries.push(FileEntry {
            path: file.clone(),
            sha256,
            first_program: trees.len(),
            programs: read.trees.len(),
            nodes: read.trees.iter().map(AstTree::len).sum(),
            failed_lines: read.failures.iter().map(|(l, _)| *l).collect(),
        });
        trees.extend(read.trees);
    }
    if trees.is_empty() {
        return Err(astcomp_core::Error::EmptyCorpus.into());
    }
    let corpus_fp: String = corpus_hash.finalize().iter().map(|b| format!("{b:02x}")).collect();

    create_dir(&a.out)?;
    let (types, values) = match &a.vocab {
        Some(dir) => {
            manifest.input(&dir.join(TYPE_VOCAB_FILE))?;
            manifest.input(&dir.join(VALUE_VOCAB_FILE))?;
            read_vocabs(dir)?
        }
        None => (build_type_vocab(&trees)?, build_value_vocab(&trees, a.k)?),
    };
    let type_path = a.out.join(TYPE_VOCAB_FILE);
    let value_path = a.out.join(VALUE_VOCAB_FILE);
    if a.vocab.as_deref().map(fs::canonicalize).transpose().ok().flatten() != fs::canonicalize(&a.out).ok() {
        write_vocab(&type_path, &types, VocabKind::Type, &corpus_fp)?;
        write_vocab(&value_path, &values, VocabKind::Value, &corpus_fp)?;
    }

    let shard = Shard::encode(&trees, &types, &values, a.m)?;
    let shard_file = a.out.join(SHARD_FILE);
    write_shard(&shard_file, &shard)?;

    let nodes: usize = trees.iter().map(AstTree::len).sum();
    let distinct: BTreeSet<&str> = trees.iter().flat_map(|t| t.nodes().iter().map(|n| n.kind.as_str())).collect();
    let stats = CorpusStats {
        programs: trees.len(),
        nodes,
        avg_nodes: nodes as f64 / trees.len() as f64,
        max_nodes: trees.iter().map(AstTree::len).max().unwrap_or(0),
        distinct_types: distinct.len(),
        type_vocab_size: types.len(),
        value_vocab_size: values.len(),
        value_unk_rate: values.unk_rate(trees.iter().flat_map(|t| t.nodes().iter().filter_map(|n| n.value.as_deref()))),
        failed_lines: entries.iter().map(|e| e.failed_lines.len()).sum(),
    };
    let shard_manifest =
        ShardManifest { stats, path_len: a.m, fingerprints: shard.fingerprints.clone(), files: entries };
    let shard_manifest_path = a.out.join(SHARD_MANIFEST_FILE);
    write_json(&shard_manifest_path, &shard_manifest)?;

    let s = &shard_manifest.stats;
    println!(
        "{} programs, {} nodes (avg {:.1}, max {}), {} types, {} values, value UNK rate {:.4}, {} failed lines",
        s.programs,
        s.nodes,
        s.avg_nodes,
        s.max_nodes,
        s.type_vocab_size,
        s.value_vocab_size,
        s.value_unk_rate,
        s.failed_lines
    );
    for f in &files {
        manifest.input(f)?;
    }
    for p in [&shard_file, &shard_manifest_path, &type_path, &value_path] {
        manifest.output(p)?;
    }
    manifest.fingerprints.extend(fingerprint_map(&shard.fingerprints));
    manifest.fingerprints.insert("corpus".into(), corpus_fp);
    manifest.finish(&a.out)?;
    Ok(())
}

// --------------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablate {
    NoMtl,
    NoPath,
    NoRecurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Type,
    Value,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Type => Task::Type,
            TaskArg::Value => Task::Value,
        }
    }
}

/// Settings shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Training shard (file or preprocess output directory).
    #[arg(long)]
    pub train: PathBuf,
    /// Vocabulary directory; defaults to the training shard's directory.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration; defaults to $ASTCOMP_CONFIG_DIR/astcomp.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seeds both the initialization and the batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: TrainingArgs,
    /// Validation shard, scored after every epoch.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Disable a model component; may be repeated.
    #[arg(long, value_enum)]
    pub ablate: Vec<Ablate>,
    /// Task trained when MTL is disabled.
    #[arg(long, value_enum)]
    pub single_task: Option<TaskArg>,
    /// Loss weights for the type and value tasks.
    #[arg(long, num_args = 2, value_names = ["TYPE", "VALUE"])]
    pub alpha: Option<Vec<f64>>,
}

struct Prepared {
    model: ModelConfig,
    run: RunConfig,
    train: Shard,
    vocab_dir: PathBuf,
}

fn default_vocab_dir(shard: &Path) -> PathBuf {
    if shard.is_dir() {
        shard.to_owned()
    } else {
        shard.parent().map(Path::to_owned).unwrap_or_default()
    }
}

fn load_shard(path: &Path, expected: &Fingerprints, manifest: &mut RunManifest) -> Result<Shard> {
    let file = shard_path(path);
    let shard = read_shard(&file)?;
    shard.fingerprints.check(expected)?;
    manifest.input(&file)?;
    Ok(shard)
}

fn prepare(a: &TrainingArgs, manifest: &mut RunManifest) -> Result<Prepared> {
    let (mut run, config_path) = RunConfig::locate(a.config.as_deref())?;
    if let Some(p) = config_path {
        manifest.input(&p)?;
        manifest.config_paths.push(p);
    }
    let train_file = shard_path(&a.train);
    let train = read_shard(&train_file)?;
    let vocab_dir = a.vocab.clone().unwrap_or_else(|| default_vocab_dir(&a.train));
    let (types, values) = read_vocabs(&vocab_dir)?;
    let expected = Fingerprints::of(&types, &values);
    train.fingerprints.check(&expected)?;
    manifest.input(&train_file)?;

    let mut model = run.model.resolve(types.len(), values.len());
    match run.model.path_len {
        Some(m) if m != train.path_len => {
            return Err(astcomp_core::Error::Config(format!(
                "configured path_len {m} but the shard was encoded with m = {}",
                train.path_len
            ))
            .into())
        }
        _ => model.path_len = train.path_len,
    }
    if let Some(s) = a.seed {
        model.seed = s;
        run.train.seed = s;
    }
    if let Some(e) = a.epochs {
        run.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        run.train.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        run.train.learning_rate = lr;
    }
    manifest.seed = Some(run.train.seed);
    manifest.fingerprints.extend(fingerprint_map(&expected));
    Ok(Prepared { model, run, train, vocab_dir })
}

/// Copies the vocabularies into `out` so the run directory is self-contained.
fn copy_vocabs(from: &Path, out: &Path, manifest: &mut RunManifest) -> Result<()> {
    for name in [TYPE_VOCAB_FILE, VALUE_VOCAB_FILE] {
        let (src, dst) = (from.join(name), out.join(name));
        if fs::canonicalize(&src).ok() != fs::canonicalize(&dst).ok() {
            let bytes = fs::read(&src).map_err(Error::io(&src))?;
            write_atomic(&dst, |w| w.write_all(&bytes))?;
        }
        manifest.output(&dst)?;
    }
    Ok(())
}

struct RunObserver {
    metrics: JsonLines,
    dir: PathBuf,
    fingerprints: Fingerprints,
    written: Vec<PathBuf>,
}

impl RunObserver {
    fn save(&mut self, name: &str, model: &Model, epoch: usize) -> Result<()> {
        let path = self.dir.join(name);
        checkpoint::save(&path, model, &self.fingerprints, Some(epoch))?;
        if !self.written.contains(&path) {
            self.written.push(path);
        }
        Ok(())
    }
}

impl TrainObserver for RunObserver {
    fn on_epoch(&mut self, m: &EpochMetrics, model: &Model, best: bool, checkpoint: bool) -> astcomp_core::Result<()> {
        let obs = |e: Error| astcomp_core::Error::Observer(e.to_string());
        self.metrics.append(m).map_err(obs)?;
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "epoch {:>3}  loss {:.4}  type {}  value {}  valid loss {}  valid type {}  valid value {}",
            m.epoch + 1,
            m.train_loss,
            fmt(m.train_type_accuracy),
            fmt(m.train_value_accuracy),
            fmt(m.valid_loss),
            fmt(m.valid_type_accuracy),
            fmt(m.valid_value_accuracy),
        );
        if checkpoint {
            self.save(&format!("epoch-{}.ckpt", m.epoch + 1), model, m.epoch + 1).map_err(obs)?;
        }
        if best {
            self.save("best.ckpt", model, m.epoch + 1).map_err(obs)?;
        }
        Ok(())
    }
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::start("train");
    let mut p = prepare(&a.common, &mut manifest)?;
    let ablation = &mut p.run.train.ablation;
    for x in &a.ablate {
        match x {
            Ablate::NoMtl => ablation.use_mtl = false,
            Ablate::NoPath => ablation.use_path = false,
            Ablate::NoRecurrence => ablation.use_recurrence = false,
        }
    }
    if let Some(t) = a.single_task {
        ablation.single_task = t.into();
    }
    if let Some(alpha) = &a.alpha {
        p.model.alpha = [alpha[0], alpha[1]];
    }
    p.model.validate()?;
    p.run.train.validate()?;
    let expected = p.train.fingerprints.clone();
    let valid = a.valid.as_deref().map(|v| load_shard(v, &expected, &mut manifest)).transpose()?;

    let out = &a.common.out;
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    write_json(&out.join("config.json"), &RunConfig { model: p.run.model.clone(), train: p.run.train.clone() })?;
    let metrics_path = out.join("metrics.jsonl");
    let mut observer = RunObserver {
        metrics: JsonLines::create(&metrics_path)?,
        dir: ckpt_dir.clone(),
        fingerprints: expected.clone(),
        written: Vec::new(),
    };
    eprintln!(
        "training {} programs ({} queries), hidden {}, {} epochs",
        p.train.programs.len(),
        p.train.num_queries(),
        p.model.hidden(),
        p.run.train.epochs
    );
    let outcome = train(&p.model, &p.run.train, &p.train, valid.as_ref(), &mut observer)?;
    let final_path = ckpt_dir.join("final.ckpt");
    checkpoint::save(&final_path, &outcome.model, &expected, Some(outcome.log.len()))?;
    observer.written.push(final_path.clone());

    copy_vocabs(&p.vocab_dir, out, &mut manifest)?;
    manifest.output(&out.join("config.json"))?;
    manifest.output(&metrics_path)?;
    for path in &observer.written {
        manifest.output(path)?;
    }
    if let Some((epoch, _)) = &outcome.best {
        println!("best validation loss at epoch {}", epoch + 1);
    }
    println!("final checkpoint: {}", final_path.display());
    manifest.finish(out)?;
    Ok(())
}

// --------------------------------------------------------------------- sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: TrainingArgs,
    /// Shard scored for every setting.
    #[arg(long)]
    pub valid: PathBuf,
    /// Weight settings as `TYPE,VALUE`; may be repeated.
    #[arg(long = "alpha", value_parser = parse_alpha)]
    pub grid: Vec<[f64; 2]>,
}

pub const DEFAULT_GRID: [[f64; 2]; 5] = [[1.0, 0.0], [0.7, 0.3], [0.5, 0.5], [0.3, 0.7], [0.0, 1.0]];

fn parse_alpha(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected TYPE,VALUE, got `{s}`"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok([num(a)?, num(b)?])
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::start("sweep");
    let p = prepare(&a.common, &mut manifest)?;
    let valid = load_shard(&a.valid, &p.train.fingerprints, &mut manifest)?;
    let grid: Vec<[f64; 2]> = if a.grid.is_empty() { DEFAULT_GRID.to_vec() } else { a.grid.clone() };
    let rows = weight_sweep(&p.model, &p.run.train, &p.train, &valid, &grid)?;

    create_dir(&a.common.out)?;
    let json_path = a.common.out.join("sweep.json");
    write_json(&json_path, &rows)?;
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{:.1}%", 100.0 * x));
    let mut table = String::from("alpha_type,alpha_value,type,value,valid_loss\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.alpha[0],
            r.alpha[1],
            pct(r.type_accuracy),
            pct(r.value_accuracy),
            r.valid_loss
        ));
    }
    let csv_path = a.common.out.join("sweep.csv");
    write_atomic(&csv_path, |w| w.write_all(table.as_bytes()))?;
    print!("{table}");
    manifest.output(&json_path)?;
    manifest.output(&csv_path)?;
    manifest.finish(&a.common.out)?;
    Ok(())
}

// ---------------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test shard (file or preprocess output directory).
    #[arg(long)]
    pub shard: PathBuf,
    /// Vocabulary directory; defaults to the run directory of the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output directory for the report.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference accuracy as NAME=TASK:ACCURACY[@UPPER_BOUND]; may be repeated.
    #[arg(long, value_parser = parse_baseline)]
    pub baseline: Vec<Baseline>,
    /// Per-type breakdown; without a value the built-in list of difficult types is used.
    #[arg(long, num_args = 0..=1, value_delimiter = ',', value_name = "TYPES")]
    pub difficult_types: Option<Vec<String>>,
    /// Reject breakdown types missing from the vocabulary.
    #[arg(long)]
    pub strict_types: bool,
    /// Second checkpoint for significance tests, as [NAME=]PATH.
    #[arg(long)]
    pub compare: Option<String>,
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    let err = || format!("expected NAME=TASK:ACCURACY[@UPPER_BOUND], got `{s}`");
    let (name, rest) = s.split_once('=').ok_or_else(err)?;
    let (task, rest) = rest.split_once(':').ok_or_else(err)?;
    let task = match task.to_ascii_lowercase().as_str() {
        "type" => Task::Type,
        "value" => Task::Value,
        _ => return Err(format!("unknown task `{task}` (type or value)")),
    };
    let (acc, ub) = match rest.split_once('@') {
        Some((a, u)) => (a, Some(u)),
        None => (rest, None),
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok(Baseline { name: name.into(), task, accuracy: num(acc)?, upper_bound: ub.map(num).transpose()?.unwrap_or(1.0) })
}

/// Vocabulary directory of a checkpoint: beside it, or in its run directory.
fn checkpoint_vocab_dir(ckpt: &Path) -> Option<PathBuf> {
    ckpt.ancestors().skip(1).take(2).find(|d| d.join(TYPE_VOCAB_FILE).is_file()).map(Path::to_owned)
}

fn load_checkpoint_with_vocab(
    ckpt: &Path,
    vocab: Option<&Path>,
    manifest: Option<&mut RunManifest>,
) -> Result<(Checkpoint, Vocab, Vocab)> {
    let c = checkpoint::load(ckpt)?;
    let dir = match vocab {
        Some(d) => d.to_owned(),
        None => checkpoint_vocab_dir(ckpt)
            .ok_or_else(|| Error::Usage(format!("no vocabulary found next to {}; pass --vocab", ckpt.display())))?,
    };
    let (types, values) = read_vocabs(&dir)?;
    c.check_fingerprints(&Fingerprints::of(&types, &values))?;
    if let Some(m) = manifest {
        m.input(ckpt)?;
        m.input(&dir.join(TYPE_VOCAB_FILE))?;
        m.input(&dir.join(VALUE_VOCAB_FILE))?;
    }
    Ok((c, types, values))
}

fn difficult_csv(report: &EvalReport) -> String {
    let mut s = String::from("type,correct,total,accuracy\n");
    for row in report.difficult_types.iter().flatten() {
        let acc = row.accuracy.map_or("-".to_string(), |a| format!("{a:.6}"));
        s.push_str(&format!("{},{},{},{acc}\n", row.name, row.correct, row.total));
    }
    s
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut manifest = RunManifest::start("eval");
    let (ckpt, types, values) = load_checkpoint_with_vocab(&a.checkpoint, a.vocab.as_deref(), Some(&mut manifest))?;
    let expected = Fingerprints::of(&types, &values);
    let shard = load_shard(&a.shard, &expected, &mut manifest)?;
    let preds = predict(&ckpt.model, &shard, &expected)?;

    let other = match &a.compare {
        Some(arg) => {
            let (name, path) = match arg.split_once('=') {
                Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                None => ("compare".to_string(), PathBuf::from(arg)),
            };
            let c = checkpoint::load(&path)?;
            c.check_fingerprints(&expected)?;
            manifest.input(&path)?;
            Some((name, predict(&c.model, &shard, &expected)?))
        }
        None => None,
    };
    let difficult = a.difficult_types.as_ref().map(|names| {
        if names.is_empty() {
            DIFFICULT_TYPES.iter().map(|s| s.to_string()).collect()
        } else {
            names.clone()
        }
    });
    let options = ReportOptions {
        baselines: a.baseline.clone(),
        difficult_types: difficult,
        strict_types: a.strict_types,
        compare: other.as_ref().map(|(n, p)| (n.clone(), p)),
        fingerprint: sha256_file(&a.checkpoint)?,
    };
    let report = build_report(&preds, &types, &options)?;

    create_dir(&a.out)?;
    let report_path = a.out.join("report.json");
    write_json(&report_path, &report)?;
    manifest.output(&report_path)?;
    if report.difficult_types.is_some() {
        let csv_path = a.out.join("difficult_types.csv");
        let csv = difficult_csv(&report);
        write_atomic(&csv_path, |w| w.write_all(csv.as_bytes()))?;
        manifest.output(&csv_path)?;
    }
    println!(
        "type accuracy {:.4} ({}/{}), value accuracy {:.4} ({}/{}), loss {:.4}",
        report.accuracy_type,
        report.type_counts.correct,
        report.type_counts.total,
        report.accuracy_value,
        report.value_counts.correct,
        report.value_counts.total,
        report.loss
    );
    for imp in &report.normalized_improvements {
        println!("normalized improvement vs {} ({:?}): {:.3}", imp.vs, imp.task, imp.value);
    }
    manifest.fingerprints.extend(fingerprint_map(&expected));
    manifest.finish(&a.out)?;
    Ok(())
}

// ------------------------------------------------------------------ complete

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary directory; defaults to the run directory of the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Partial AST as a JSON array of nodes; `[]` for an empty file.
    #[arg(long, required_unless_present = "repl")]
    pub ast: Option<String>,
    /// Ancestor types of the cursor as a JSON array, nearest first.
    #[arg(long, default_value = "[]")]
    pub path: String,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Print suggestions as JSON.
    #[arg(long)]
    pub json: bool,
    /// Read partial ASTs from stdin, one per line; a tab may separate an
    /// ancestor path from the AST.
    #[arg(long)]
    pub repl: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    pub probability: f64,
}

/// Indices of the `k` largest entries, highest first, lower index on ties.
fn top_indices(xs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub struct Completer {
    model: Model,
    types: Vocab,
    values: Vocab,
}

impl Completer {
    pub fn new(model: Model, types: Vocab, values: Vocab) -> Self {
        Self { model, types, values }
    }

    pub fn load(checkpoint: &Path, vocab: Option<&Path>) -> Result<Self> {
        let (c, types, values) = load_checkpoint_with_vocab(checkpoint, vocab, None)?;
        Ok(Self::new(c.model, types, values))
    }

    fn encode_type(&self, name: &str, warnings: &mut Vec<String>) -> u32 {
        if !self.types.contains(name) && !warnings.iter().any(|w| w.contains(&format!("`{name}`"))) {
            warnings.push(format!("unseen type `{name}` encoded as {}", astcomp_core::corpus::UNK));
        }
        self.types.encode(name)
    }

    /// Ranked `(type, value)` pairs for the node after `ast`, with joint
    /// probability `p(type) * p(value)`. Warnings name unseen types.
    pub fn complete(&self, ast: &str, path: &str, top_k: usize) -> Result<(Vec<Suggestion>, Vec<String>)> {
        let tree = parse_partial_ast_json(ast)?;
        let path: Vec<String> = serde_json::from_str(path)
            .map_err(|e| astcomp_core::Error::Parse(format!("path must be a JSON array of type names: {e}")))?;
        let m = self.model.config().path_len;
        if path.len() > m {
            return Err(astcomp_core::Error::Domain(format!("path has {} ancestors but m = {m}", path.len())).into());
        }
        let mut warnings = Vec::new();
        let (mut type_ids, mut value_ids) = (Vec::new(), Vec::new());
        for label in tree.as_ref().map(flatten).unwrap_or_default() {
            type_ids.push(self.encode_type(&label.kind, &mut warnings));
            value_ids.push(self.values.encode(&label.value));
        }
        let mut ids = PathIds::empty(m);
        for (slot, name) in ids.ids.iter_mut().zip(&path) {
            *slot = self.encode_type(name, &mut warnings);
        }
        ids.true_length = path.len();
        let dist = self.model.next_distribution(&type_ids, &value_ids, &ids)?;

        // The k best products lie among the k best of each factor.
        let top_t = top_indices(&dist.type_probs, top_k);
        let top_v = top_indices(&dist.value_probs, top_k);
        let mut pairs: Vec<(f64, usize, usize)> = top_t
            .iter()
            .flat_map(|&t| top_v.iter().map(move |&v| (t, v)))
            .map(|(t, v)| (dist.type_probs[t] * dist.value_probs[v], t, v))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        pairs.truncate(top_k);
        let suggestions = pairs
            .into_iter()
            .map(|(p, t, v)| {
                Ok(Suggestion {
                    kind: self.types.decode(t as u32)?.to_string(),
                    value: self.values.decode(v as u32)?.to_string(),
                    probability: p,
                })
            })
            .collect::<astcomp_core::Result<Vec<_>>>()?;
        Ok((suggestions, warnings))
    }
}

fn print_suggestions(out: &mut impl Write, s: &[Suggestion], json: bool) -> io::Result<()> {
    if json {
        serde_json::to_writer(&mut *out, s)?;
        writeln!(out)
    } else {
        for (i, x) in s.iter().enumerate() {
            writeln!(out, "{}\t{:.6}\t{}\t{}", i + 1, x.probability, x.kind, x.value)?;
        }
        Ok(())
    }
}

pub fn complete(a: &CompleteArgs) -> Result<()> {
    if a.top_k == 0 {
        return Err(Error::Usage("--top-k must be at least 1".into()));
    }
    let completer = Completer::load(&a.checkpoint, a.vocab.as_deref())?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let io_err = |e: io::Error| Error::Io { path: PathBuf::from("<stdout>"), source: e };
    if !a.repl {
        let (s, warnings) = completer.complete(a.ast.as_deref().unwrap_or("[]"), &a.path, a.top_k)?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        return print_suggestions(&mut out, &s, a.json).map_err(io_err);
    }
    for line in io::stdin().lock().lines() {
        let line = line.map_err(|e| Error::Io { path: PathBuf::from("<stdin>"), source: e })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (path, ast) = match line.split_once('\t') {
            Some((p, ast)) => (p, ast),
            None => (a.path.as_str(), line),
        };
        match completer.complete(ast, path, a.top_k) {
            Ok((s, warnings)) => {
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                print_suggestions(&mut out, &s, a.json).map_err(io_err)?;
            }
            Err(e) => eprintln!("error: {e}"),
        }
        out.flush().map_err(io_err)?;
    }
    Ok(())
}

// ------------------------------------------------------------- gen-synthetic

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// Output JSON-lines file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub programs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 4)]
    pub modes: usize,
    /// Give every program its own header value.
    #[arg(long)]
    pub unique_headers: bool,
}

pub fn gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let cfg = SynthConfig {
        programs: a.programs,
        seed: a.seed,
        max_depth: a.max_depth,
        modes: a.modes,
        unique_headers: a.unique_headers,
        ..SynthConfig::default()
    };
    if cfg.programs == 0 || cfg.modes == 0 {
        return Err(Error::Usage("--programs and --modes must be positive".into()));
    }
    let trees = synth::generate(&cfg);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_trees(&a.out, &trees)?;
    let nodes: usize = trees.iter().map(AstTree::len).sum();
    println!("wrote {} programs, {nodes} nodes to {}", trees.len(), a.out.display());
    Ok(())
}

/// Reads a shard manifest written by `preprocess`.
pub fn read_shard_manifest(dir: &Path) -> Result<ShardManifest> {
    read_json(&dir.join(SHARD_MANIFEST_FILE))
}
