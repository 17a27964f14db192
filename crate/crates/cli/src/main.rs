//! `kdforge`: every pipeline stage behind one binary. JSON goes to stdout,
//! human-readable progress to stderr. Exit codes: 0 ok, 1 invalid input or
//! configuration, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kdforge::checkpoint::{hex_sha256, Checkpoint};
use kdforge::codec_loss::MelBank;
use kdforge::data::{
    exact_conditional_kl, gen_token_corpus, gen_wave_corpus, read_wave_corpus, write_wave_corpus, MarkovConfig,
    MarkovSpec, TokenCorpus, WaveSpec,
};
use kdforge::metrics::{evaluate, ExtractorConfig, ToyExtractor};
use kdforge::models::{Codec, LanguageModel, Waveform};
use kdforge::sampling::{sample, Strategy};
use kdforge::train::{
    distill_codec, distill_lm, eval_mel, stream_rng, train_codec_teacher, train_teacher, version_string, Init,
    LossFlags, MetricsLog, RunConfig, RunManifest, Task, Variant,
};
use kdforge::{Error, Real};

#[derive(Parser, Debug)]
#[command(name = "kdforge", version, about = "Distillation pipelines for token LMs and codec decoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic token corpus (plus its generating spec) or a waveform corpus.
    GenData(GenData),
    /// Train an LM teacher or a codec teacher, depending on the config's task.
    TrainTeacher(RunArgs),
    /// Distil a teacher LM into a student.
    DistillLm(DistillLm),
    /// Distil a codec teacher's decoder into a narrower student decoder.
    DistillCodec(DistillCodec),
    /// Fréchet distance and paired KL between two waveform sets.
    Eval(Eval),
    /// Print sampled loss-mixing weights as CSV rows.
    SampleWeights(SampleWeights),
    /// Finite-difference check of every kernel and loss.
    Gradcheck(Gradcheck),
    /// Describe a checkpoint file.
    InspectCheckpoint(Inspect),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataKind {
    Tokens,
    Wave,
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long, value_enum)]
    kind: DataKind,
    /// Corpus file (tokens) or directory (wave).
    #[arg(long)]
    out: PathBuf,
    /// JSON MarkovConfig (tokens) or WaveSpec (wave); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    clips: usize,
    /// Overrides the generator seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// RunConfig JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Training corpus (token file or waveform directory).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DistillLm {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Active terms, e.g. `H,S,mse` or `S/mse`.
    #[arg(long)]
    losses: Option<LossFlags>,
    /// none | s1 | s2
    #[arg(long)]
    sampling: Option<Strategy>,
    /// random | transfer
    #[arg(long, value_parser = parse_init)]
    init: Option<Init>,
    /// v1 | v2
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

#[derive(Args, Debug)]
struct DistillCodec {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Multiplier on the codec loss weights.
    #[arg(long)]
    weight_factor: Option<f64>,
    /// Held-out waveform directory for the final mel score.
    #[arg(long)]
    eval_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Eval {
    /// Reference waveform directory.
    #[arg(long)]
    reference: PathBuf,
    /// Generated waveform directory (paired with the reference by index).
    #[arg(long, conflicts_with = "codec")]
    generated: Option<PathBuf>,
    /// Codec checkpoint whose reconstructions of the reference are scored.
    #[arg(long, requires = "config")]
    codec: Option<PathBuf>,
    /// RunConfig giving the codec geometry.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = ExtractorConfig::default().seed)]
    extractor_seed: u64,
    #[arg(long, default_value_t = ExtractorConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = ExtractorConfig::default().classes)]
    classes: usize,
}

#[derive(Args, Debug)]
struct SampleWeights {
    /// s1 | s2
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of loss terms.
    #[arg(long, default_value_t = 3)]
    terms: usize,
}

#[derive(Args, Debug)]
struct Gradcheck {
    /// Check every kernel and loss.
    #[arg(long, required_unless_present = "kernel")]
    all: bool,
    /// Report a single kernel or loss.
    #[arg(long)]
    kernel: Option<String>,
    /// Number of seeded input draws.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

#[derive(Args, Debug)]
struct Inspect {
    path: PathBuf,
}

fn parse_init(s: &str) -> Result<Init, String> {
    match s.to_ascii_lowercase().as_str() {
        "random" => Ok(Init::Random),
        "transfer" | "weight-copy" => Ok(Init::Transfer),
        _ => Err(format!("unknown init `{s}` (random | transfer)")),
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s.to_ascii_lowercase().as_str() {
        "v1" => Ok(Variant::V1),
        "v2" => Ok(Variant::V2),
        _ => Err(format!("unknown variant `{s}` (v1 | v2)")),
    }
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_)
            | Error::ShapeMismatch { .. }
            | Error::OutOfRange { .. }
            | Error::Json(_)
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated(_)
            | Error::MissingTensor(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn invalid<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Invalid(msg.into()))
}

fn threads() -> Result<usize, Failure> {
    match std::env::var("KDFORGE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => invalid(format!("KDFORGE_THREADS must be a positive integer, got `{v}`")),
        },
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(v: &Value) {
    out(&format!("{}\n", serde_json::to_string_pretty(v).expect("json value serializes")));
}

/// Attaches the path to I/O failures; a missing input is invalid input.
fn at<T>(path: &Path, r: kdforge::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Failure::Invalid(format!("{}: not found", path.display()))
        }
        Error::Io(io) => Failure::Runtime(format!("{}: {io}", path.display())),
        other => match Failure::from(other) {
            Failure::Invalid(m) => Failure::Invalid(format!("{}: {m}", path.display())),
            Failure::Runtime(m) => Failure::Runtime(format!("{}: {m}", path.display())),
        },
    })
}

/// Path of the generating spec stored next to a token corpus.
fn spec_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("spec.json")
}

fn gen_data(a: GenData) -> Outcome {
    match a.kind {
        DataKind::Tokens => {
            let mut cfg: MarkovConfig = match &a.config {
                Some(p) => parse_file(p)?,
                None => MarkovConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let spec = MarkovSpec::from_config(&cfg)?;
            let corpus = gen_token_corpus(&spec, a.clips, cfg.seed);
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            corpus.write(&a.out)?;
            let spec_file = spec_path(&a.out);
            std::fs::write(&spec_file, serde_json::to_string(&spec).expect("spec serializes"))?;
            let hash = hex_sha256(&std::fs::read(&a.out)?);
            eprintln!("wrote {} token clips to {}", a.clips, a.out.display());
            emit(&json!({
                "kind": "tokens",
                "path": a.out,
                "spec": spec_file,
                "clips": a.clips,
                "seed": cfg.seed,
                "sha256": hash,
            }));
        }
        DataKind::Wave => {
            let mut spec: WaveSpec = match &a.config {
                Some(p) => parse_file(p)?,
                None => WaveSpec::default(),
            };
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            let corpus = gen_wave_corpus(&spec, a.clips)?;
            write_wave_corpus(&corpus, &a.out)?;
            eprintln!("wrote {} waveform clips to {}", a.clips, a.out.display());
            emit(&json!({
                "kind": "wave",
                "path": a.out,
                "clips": a.clips,
                "seed": spec.seed,
                "spec_hash": spec.hash(),
            }));
        }
    }
    Ok(())
}

fn parse_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

/// Prints the hash identifying a run's fully resolved inputs.
fn announce(resolved: &str) -> String {
    let hash = hex_sha256(resolved.as_bytes());
    eprintln!("config hash {hash}");
    hash
}

fn load_config(r: &RunArgs) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(&r.config).map_err(|e| Failure::Invalid(format!("{}: {e}", r.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(s) = r.seed {
        cfg.seed = s;
    }
    if let Some(n) = r.steps {
        cfg.steps = n;
    }
    if let Some(d) = &r.data {
        cfg.paths.data = Some(d.clone());
    }
    if let Some(o) = &r.out {
        cfg.paths.out = Some(o.clone());
    }
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    match p {
        Some(p) => Ok(p),
        None => invalid(format!("no {what} path: set it in the config or pass --{what}")),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = required(&cfg.paths.out, "out")?.to_path_buf();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Writes the resolved config and manifest next to the run outputs and
/// prints the manifest.
fn finish(dir: &Path, cfg: &RunConfig, manifest: &RunManifest) -> Outcome {
    std::fs::write(dir.join("config.json"), cfg.to_json())?;
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), &text)?;
    out(&format!("{text}\n"));
    Ok(())
}

fn manifest(cfg: &RunConfig, config_hash: String) -> RunManifest {
    RunManifest {
        config_hash,
        seed: cfg.seed,
        task: cfg.task,
        label: None,
        layer_mapping: None,
        teacher_hash: None,
        checkpoint_hash: None,
        final_metric: None,
        version: version_string(),
    }
}

/// Exact conditional KL of `model` if the corpus's generating spec is present.
fn lm_score(model: &LanguageModel<Real>, cfg: &RunConfig, corpus: &Path) -> Result<Option<f64>, Failure> {
    let spec_file = spec_path(corpus);
    if !spec_file.exists() {
        eprintln!("no {} next to the corpus; skipping the KL score", spec_file.display());
        return Ok(None);
    }
    let spec: MarkovSpec = parse_file(&spec_file)?;
    Ok(Some(exact_conditional_kl(model, &spec, cfg.eval_contexts, cfg.seed)?))
}

fn train_teacher_cmd(a: RunArgs) -> Outcome {
    let mut cfg = load_config(&a)?;
    if cfg.task != Task::TrainCodecTeacher {
        cfg.task = Task::TrainTeacher;
    }
    cfg.validate()?;
    let hash = announce(&cfg.to_json());
    let dir = out_dir(&cfg)?;
    let data = required(&cfg.paths.data, "data")?.to_path_buf();
    let mut log = MetricsLog::to_file(dir.join("metrics.jsonl"))?;
    let mut m = manifest(&cfg, hash);
    let ckpt = if cfg.task == Task::TrainTeacher {
        let corpus = at(&data, TokenCorpus::read(&data))?;
        eprintln!("training LM teacher for {} steps on {} clips", cfg.steps, corpus.clips.len());
        let model = train_teacher(&cfg, &corpus, &mut log)?;
        m.final_metric = lm_score(&model, &cfg, &data)?;
        Checkpoint::from_module(&model)
    } else {
        let corpus = at(&data, read_wave_corpus(&data))?;
        eprintln!("training codec teacher for {} steps on {} clips", cfg.steps, corpus.clips.len());
        let codec = train_codec_teacher(&cfg, &corpus.clips, corpus.sample_rate, &mut log)?;
        let held = match &cfg.paths.eval_data {
            Some(p) => at(p, read_wave_corpus(p))?,
            None => corpus,
        };
        let mel = MelBank::new(&cfg.mel)?;
        m.final_metric = Some(eval_mel(&codec, &held.clips, held.sample_rate, &mel, cfg.batch_size)?);
        Checkpoint::from_module(&codec)
    };
    ckpt.write(dir.join("teacher.ckpt"))?;
    m.checkpoint_hash = Some(ckpt.hash());
    finish(&dir, &cfg, &m)
}

fn distill_lm_cmd(a: DistillLm) -> Outcome {
    let mut cfg = load_config(&a.run)?;
    cfg.task = Task::DistillLm;
    if let Some(l) = a.losses {
        cfg.losses = l;
    }
    if let Some(s) = a.sampling {
        cfg.sampling = s;
    }
    if let Some(i) = a.init {
        cfg.init = i;
    }
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(t) = a.teacher {
        cfg.paths.teacher = Some(t);
    }
    cfg.validate()?;
    let hash = announce(&cfg.to_json());
    let dir = out_dir(&cfg)?;
    let data = required(&cfg.paths.data, "data")?.to_path_buf();
    let corpus = at(&data, TokenCorpus::read(&data))?;
    let mut teacher = LanguageModel::<Real>::new(&mut stream_rng(0, 0), &cfg.teacher_lm)?;
    let tpath = required(&cfg.paths.teacher, "teacher")?;
    at(tpath, Checkpoint::read(tpath).and_then(|c| c.load_into(&mut teacher)))?;
    eprintln!("distilling `{}` for {} steps", cfg.label(), cfg.steps);
    let mut log = MetricsLog::to_file(dir.join("metrics.jsonl"))?;
    let run = distill_lm(&cfg, &teacher, &corpus, &mut log)?;
    let ckpt = Checkpoint::from_module(&run.student);
    ckpt.write(dir.join("student.ckpt"))?;
    if let Some(p) = &run.projection {
        Checkpoint::from_module(p).write(dir.join("projection.ckpt"))?;
    }
    let mut m = manifest(&cfg, hash);
    m.label = Some(cfg.label());
    m.layer_mapping = Some(run.mapping.map.clone());
    m.teacher_hash = Some(run.teacher_hash.clone());
    m.checkpoint_hash = Some(ckpt.hash());
    m.final_metric = lm_score(&run.student, &cfg, &data)?;
    finish(&dir, &cfg, &m)
}

fn distill_codec_cmd(a: DistillCodec) -> Outcome {
    let mut cfg = load_config(&a.run)?;
    cfg.task = Task::DistillCodec;
    if let Some(w) = a.weight_factor {
        cfg.lambdas.weight_factor = w;
    }
    if let Some(t) = a.teacher {
        cfg.paths.teacher = Some(t);
    }
    if let Some(e) = a.eval_data {
        cfg.paths.eval_data = Some(e);
    }
    cfg.validate()?;
    let hash = announce(&cfg.to_json());
    let dir = out_dir(&cfg)?;
    let data = required(&cfg.paths.data, "data")?;
    let corpus = at(data, read_wave_corpus(data))?;
    let mut teacher = Codec::<Real>::new(&mut stream_rng(0, 0), &cfg.codec)?;
    let tpath = required(&cfg.paths.teacher, "teacher")?;
    let teacher_ckpt = at(tpath, Checkpoint::read(tpath))?;
    teacher_ckpt.load_into(&mut teacher)?;
    eprintln!(
        "distilling codec decoder (w.f. {}) for {} steps",
        cfg.lambdas.weight_factor, cfg.steps
    );
    let mut log = MetricsLog::to_file(dir.join("metrics.jsonl"))?;
    let run = distill_codec(&cfg, &teacher, &corpus.clips, corpus.sample_rate, &mut log)?;
    let ckpt = Checkpoint::from_module(&run.student);
    ckpt.write(dir.join("student.ckpt"))?;
    Checkpoint::from_module(&run.discriminator).write(dir.join("discriminator.ckpt"))?;
    let held = match &cfg.paths.eval_data {
        Some(p) => at(p, read_wave_corpus(p))?,
        None => corpus,
    };
    let mel = MelBank::new(&cfg.mel)?;
    let mut m = manifest(&cfg, hash);
    m.teacher_hash = Some(teacher_ckpt.hash());
    m.checkpoint_hash = Some(ckpt.hash());
    m.final_metric = Some(eval_mel(&run.student, &held.clips, held.sample_rate, &mel, cfg.batch_size)?);
    finish(&dir, &cfg, &m)
}

/// Codec reconstructions of `clips`, in batches.
fn reconstruct_all(codec: &Codec<Real>, clips: &[Vec<f32>], sample_rate: u32) -> Result<Vec<Vec<f32>>, Failure> {
    let mut out = Vec::with_capacity(clips.len());
    for chunk in clips.chunks(16) {
        let (y, _) = codec.reconstruct(&Waveform::from_clips(chunk, sample_rate)?)?;
        let n = chunk[0].len();
        out.extend(y.samples.to_vec().chunks(n).map(<[f32]>::to_vec));
    }
    Ok(out)
}

fn eval_cmd(a: Eval) -> Outcome {
    let threads = threads()?;
    let reference = at(&a.reference, read_wave_corpus(&a.reference))?;
    let generated = match (&a.generated, &a.codec) {
        (Some(dir), None) => at(dir, read_wave_corpus(dir))?.clips,
        (None, Some(path)) => {
            let cfg: RunConfig = RunConfig::from_json(&std::fs::read_to_string(required(&a.config, "config")?)?)?;
            let ckpt = at(path, Checkpoint::read(path))?;
            // teacher or distilled student: the decoder width is read off the checkpoint
            let geometry = match ckpt.get("decoder.conv_in.weight") {
                Some(e) if e.dims.len() == 3 => cfg.codec.student_of(e.dims[0] >> cfg.codec.strides.len()),
                _ => cfg.codec.clone(),
            };
            let mut codec = Codec::<Real>::new(&mut stream_rng(0, 0), &geometry)?;
            at(path, ckpt.load_into(&mut codec))?;
            reconstruct_all(&codec, &reference.clips, reference.sample_rate)?
        }
        _ => return invalid("pass exactly one of --generated or --codec"),
    };
    let ecfg = ExtractorConfig {
        seed: a.extractor_seed,
        dim: a.dim,
        classes: a.classes,
        ..ExtractorConfig::default()
    };
    announce(&serde_json::to_string(&json!({
        "reference": a.reference,
        "generated": a.generated,
        "codec": a.codec,
        "extractor": ecfg,
    }))
    .expect("json serializes"));
    let extractor = ToyExtractor::new(&ecfg)?;
    let report = evaluate(&extractor, &generated, &reference.clips, threads)?;
    emit(&serde_json::to_value(report).expect("report serializes"));
    Ok(())
}

fn sample_weights_cmd(a: SampleWeights) -> Outcome {
    if a.strategy == Strategy::None {
        return invalid("sample-weights needs --strategy s1 or s2");
    }
    if a.terms < 2 {
        return invalid("sample-weights needs at least two terms");
    }
    announce(&format!("sample-weights {:?} {} {} {}", a.strategy, a.count, a.seed, a.terms));
    let mut rng = stream_rng(a.seed, 0);
    let mut out = String::new();
    for _ in 0..a.count {
        let w = sample(a.strategy, &mut rng, a.terms).expect("sampling strategy draws weights");
        let row: Vec<String> = w.as_slice().iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    self::out(&out);
    Ok(())
}

fn gradcheck_cmd(a: Gradcheck) -> Outcome {
    announce(&format!("gradcheck {} {:?} {}", a.all, a.kernel, a.seeds));
    let mut report = kdforge::gradcheck_suite::run_seeds(a.seeds.max(1))?;
    if let Some(k) = &a.kernel {
        if !report.contains_key(k) {
            let known: Vec<&str> = report.keys().map(String::as_str).collect();
            return invalid(format!("unknown kernel `{k}`; known: {}", known.join(", ")));
        }
        report.retain(|name, _| name == k);
    }
    emit(&serde_json::to_value(&report).expect("report serializes"));
    let bad: Vec<&String> = report
        .iter()
        .filter(|(_, &e)| e.is_nan() || e >= kdforge::gradcheck_suite::TOLERANCE)
        .map(|(k, _)| k)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("gradient check failed for {bad:?}")))
    }
}

fn inspect_cmd(a: Inspect) -> Outcome {
    let ckpt = at(&a.path, Checkpoint::read(&a.path))?;
    announce(&a.path.display().to_string());
    let tensors: Vec<Value> = ckpt
        .entries
        .iter()
        .map(|e| {
            json!({
                "name": e.name,
                "dtype": if e.dtype == 0 { "f32" } else { "f64" },
                "shape": e.dims,
            })
        })
        .collect();
    emit(&json!({
        "path": a.path,
        "sha256": ckpt.hash(),
        "params": ckpt.param_count(),
        "tensors": tensors,
    }));
    Ok(())
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::TrainTeacher(a) => train_teacher_cmd(a),
        Command::DistillLm(a) => distill_lm_cmd(a),
        Command::DistillCodec(a) => distill_codec_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::SampleWeights(a) => sample_weights_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::InspectCheckpoint(a) => inspect_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version are successful exits; usage errors are invalid input
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
