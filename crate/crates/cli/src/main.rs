//! `tagrank` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use tagrank::cca::{
    annotate_i2t, build_text_features, fit_cca, retrieve_i2i, retrieve_t2i, CcaConfig, CcaModel, RetrievalDb,
    ScoredItem, TextFeatureMode, DEFAULT_NEIGHBORS, DEFAULT_POWER,
};
use tagrank::corpus::{
    generate_synthetic, load_dataset, load_feature_matrix, Dataset, FeatureMatrix, MatrixRole, SynonymLexicon,
    SyntheticConfig, Taxonomy,
};
use tagrank::eval::{prediction_error, run_experiment, write_outputs, ExperimentConfig};
use tagrank::features::{
    build_mrf_instance, image_saliency, read_pgm, spectral_residual_saliency, write_pgm, InstanceArchive,
};
use tagrank::measure::{
    measure_dataset, quantize_importance, read_importance_file, write_importance_file, ImportanceVector,
    MatchConfig, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_WUP_THRESHOLD,
};
use tagrank::ssvm::{binarize_levels, binary_accuracy, train_ssvm, Mode, SsvmModel, TrainConfig, DEFAULT_CAP};
use tagrank::{Error, Result};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "tagrank", version, about = "Tag importance measurement, prediction and retrieval")]
struct Cli {
    /// Seed for every random choice (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a dataset and optional feature matrices.
    Validate(ValidateArgs),
    /// Measure ground-truth tag importance from sentences.
    Measure(MeasureArgs),
    /// Build structured-prediction instances for every tagged image.
    Features(FeaturesArgs),
    /// Spectral-residual saliency of a PGM image.
    Saliency(SaliencyArgs),
    /// Train the structured importance predictor.
    TrainSsvm(TrainSsvmArgs),
    /// Predict importance with a trained predictor.
    Predict(PredictArgs),
    /// Fit the visual/textual subspace.
    TrainCca(TrainCcaArgs),
    /// Run one retrieval query.
    Retrieve(RetrieveArgs),
    /// Score predicted importance against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Run a retrieval experiment from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    visual: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    gray: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Edge list (`child<TAB>parent` per line) for taxonomy matching.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_WUP_THRESHOLD)]
    wup_threshold: f64,
}

impl MatchArgs {
    fn config(&self) -> Result<MatchConfig> {
        let lexicon = self.lexicon.as_ref().map(SynonymLexicon::load).transpose()?.unwrap_or_default();
        let taxonomy = self.taxonomy.as_ref().map(Taxonomy::load).transpose()?;
        let cfg = MatchConfig {
            alpha: self.alpha,
            beta: self.beta,
            wup_threshold: self.wup_threshold,
            ..MatchConfig::new(lexicon, taxonomy)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    matching: MatchArgs,
    /// Round every value to the nearest tenth.
    #[arg(long)]
    quantize: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Grayscale pixels for saliency; uniform saliency when absent.
    #[arg(long)]
    gray: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Ground-truth importance, stored as quantized training labels.
    #[arg(long)]
    importance: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SaliencyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Continuous,
    Binary,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => Mode::Continuous,
            ModeArg::Binary => Mode::Binary,
        }
    }
}

#[derive(Args)]
struct TrainSsvmArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Instance archive built with `features --importance`.
    #[arg(long)]
    instances: PathBuf,
    #[arg(long, value_enum, default_value = "continuous")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Largest node count solved exactly.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(short, long)]
    output: PathBuf,
    /// Training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Tags,
    Pbti,
    Pcti,
    Tbti,
    Tcti,
}

impl From<SettingArg> for TextFeatureMode {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Tags => TextFeatureMode::Tags,
            SettingArg::Pbti => TextFeatureMode::Pbti,
            SettingArg::Pcti => TextFeatureMode::Pcti,
            SettingArg::Tbti => TextFeatureMode::Tbti,
            SettingArg::Tcti => TextFeatureMode::Tcti,
        }
    }
}

#[derive(Args)]
struct TrainCcaArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    visual: PathBuf,
    /// Importance file (measured or predicted) for the non-TAGS settings.
    #[arg(long)]
    importance: Option<PathBuf>,
    #[arg(long, value_enum, ignore_case = true, default_value = "tags")]
    setting: SettingArg,
    /// Subspace dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_POWER)]
    power: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    I2i,
    T2i,
    I2t,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    visual: PathBuf,
    #[arg(long)]
    importance: Option<PathBuf>,
    #[arg(long, value_enum, ignore_case = true)]
    task: TaskArg,
    /// Query image id; it is left out of the database.
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    /// Number of results to print (all when absent).
    #[arg(long)]
    top: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings (JSON); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    for (path, role) in [
        (&a.visual, MatrixRole::VisualRetrieval),
        (&a.scene, MatrixRole::SceneVisual),
        (&a.gray, MatrixRole::SaliencyGray),
    ] {
        if let Some(p) = path {
            d.check_feature_rows(load_feature_matrix(p, role)?.rows())?;
        }
    }
    if let Some(p) = &a.lexicon {
        SynonymLexicon::load(p)?.validate(&d.vocabulary)?;
    }
    println!(
        "ok: {} images, {} object and {} scene categories",
        d.images.len(),
        d.vocabulary.objects().len(),
        d.vocabulary.scenes().len()
    );
    Ok(())
}

fn measure(a: &MeasureArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let mut imp = measure_dataset(&d, &a.matching.config()?)?;
    if a.quantize {
        imp = imp.into_iter().map(|(k, v)| (k, quantize_importance(&v))).collect();
    }
    write_importance_file(&a.output, &imp)
}

fn build_archive(d: &Dataset, a: &FeaturesArgs) -> Result<InstanceArchive> {
    let gray = a
        .gray
        .as_ref()
        .map(|p| load_feature_matrix(p, MatrixRole::SaliencyGray))
        .transpose()?;
    let scene = a
        .scene
        .as_ref()
        .map(|p| load_feature_matrix(p, MatrixRole::SceneVisual))
        .transpose()?;
    let imp = a.importance.as_ref().map(read_importance_file).transpose()?;
    let scene_dim = scene.as_ref().map_or(0, FeatureMatrix::dim);
    let built: Vec<Option<_>> = d
        .images
        .par_iter()
        .map(|im| {
            if im.tag_count() == 0 {
                return Ok(None);
            }
            let sal = image_saliency(im, gray.as_ref())?;
            let row = scene.as_ref().map(|m| m.try_row(im.feature_row)).transpose()?;
            let truth = match &imp {
                Some(m) => Some(
                    m.get(&im.id)
                        .ok_or_else(|| Error::Data(format!("no importance for image `{}`", im.id)))?,
                ),
                None => None,
            };
            build_mrf_instance(im, &sal, row, scene_dim, &d.vocabulary, truth).map(Some)
        })
        .collect::<Result<_>>()?;
    let instances: Vec<_> = built.into_iter().flatten().collect();
    let shape = match instances.first() {
        Some(i) => i.shape,
        None => return Err(Error::Data("no tagged images".into())),
    };
    Ok(InstanceArchive { shape, instances })
}

fn features(a: &FeaturesArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let archive = build_archive(&d, a)?;
    archive.save(&a.output)?;
    eprintln!("{} instances", archive.instances.len());
    Ok(())
}

fn saliency(a: &SaliencyArgs) -> Result<()> {
    let img = read_pgm(&a.input)?;
    write_pgm(&a.output, &spectral_residual_saliency(&img)?.to_gray())
}

fn train(a: &TrainSsvmArgs, seed: u64) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let archive = InstanceArchive::load(&a.instances)?;
    let mode = Mode::from(a.mode);
    let labels = archive
        .instances
        .iter()
        .map(|i| {
            let l = i
                .labels
                .as_ref()
                .ok_or_else(|| Error::Data(format!("instance `{}` has no labels", i.id)))?;
            Ok(match mode {
                Mode::Continuous => l.clone(),
                Mode::Binary => binarize_levels(l),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        c: a.c,
        epsilon: a.epsilon,
        max_iterations: a.max_iterations,
        mode,
        cap: a.cap,
        seed,
    };
    let (model, report) = train_ssvm(&archive.instances, &labels, &d.vocabulary, &cfg)?;
    model.save(&a.output)?;
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    eprintln!(
        "{} iterations, converged: {}, final violation {:e}",
        report.iterations, report.converged, report.final_violation
    );
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let model = SsvmModel::load(&a.model)?;
    let archive = InstanceArchive::load(&a.instances)?;
    let out: Vec<(String, ImportanceVector)> = archive
        .instances
        .par_iter()
        .map(|i| Ok((i.id.clone(), model.predict_importance(i, &d.vocabulary)?)))
        .collect::<Result<_>>()?;
    write_importance_file(&a.output, &out.into_iter().collect())
}

fn train_cca(a: &TrainCcaArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let visual = load_feature_matrix(&a.visual, MatrixRole::VisualRetrieval)?;
    d.check_feature_rows(visual.rows())?;
    let imp = a.importance.as_ref().map(read_importance_file).transpose()?;
    let mode = TextFeatureMode::from(a.setting);
    let tagged: Vec<_> = d.images.iter().filter(|im| im.tag_count() > 0).cloned().collect();
    let text = build_text_features(&tagged, &d.vocabulary, imp.as_ref(), mode)?;
    let rows: Vec<Vec<f64>> = tagged.iter().map(|im| visual.row(im.feature_row).to_vec()).collect();
    let vis = FeatureMatrix::from_rows(&rows, MatrixRole::VisualRetrieval)?;
    let mut model = fit_cca(
        &vis,
        &text,
        &CcaConfig {
            dim: a.dim,
            reg: a.reg,
            power: a.power,
        },
    )?;
    model.mode = Some(mode);
    model.save(&a.output)?;
    eprintln!("subspace dimension {}, leading correlation {:.6}", model.dim(), model.correlations[0]);
    Ok(())
}

fn retrieve(a: &RetrieveArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let visual = load_feature_matrix(&a.visual, MatrixRole::VisualRetrieval)?;
    d.check_feature_rows(visual.rows())?;
    let model = CcaModel::load(&a.model)?;
    let mode = model.mode.unwrap_or(TextFeatureMode::Tags);
    let imp = a.importance.as_ref().map(read_importance_file).transpose()?;
    let text = build_text_features(&d.images, &d.vocabulary, imp.as_ref(), mode)?;
    let q = d
        .images
        .iter()
        .position(|im| im.id == a.query)
        .ok_or_else(|| Error::Lookup {
            kind: "image",
            name: a.query.clone(),
        })?;
    let db_idx: Vec<usize> = (0..d.images.len()).filter(|&i| i != q).collect();
    let db = RetrievalDb::new(
        &model,
        db_idx.iter().map(|&i| d.images[i].id.clone()).collect(),
        db_idx.iter().map(|&i| visual.row(d.images[i].feature_row).to_vec()).collect(),
        Some(db_idx.iter().map(|&i| text.row(i).to_vec()).collect()),
    )?;
    let qv = visual.row(d.images[q].feature_row);
    let mut ranked: Vec<ScoredItem> = match a.task {
        TaskArg::I2i => retrieve_i2i(&model, qv, &db)?,
        TaskArg::T2i => retrieve_t2i(&model, text.row(q), &db)?,
        TaskArg::I2t => {
            let names: Vec<String> = d.vocabulary.objects().iter().chain(d.vocabulary.scenes()).cloned().collect();
            annotate_i2t(&model, qv, &db, a.neighbors, &names)?
        }
    };
    if let Some(n) = a.top {
        ranked.truncate(n);
    }
    let list: Vec<serde_json::Value> = ranked.iter().map(|s| serde_json::json!([s.id, s.score])).collect();
    write_json(a.output.as_deref(), &serde_json::Value::Array(list))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let pred = read_importance_file(&a.predicted)?;
    let truth = read_importance_file(&a.truth)?;
    let mad = prediction_error(&pred, &truth)?;
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for (id, tv) in &truth {
        for (tag, v) in tv.iter() {
            t.push(v > 0.0);
            p.push(pred[id].value(tag) > 0.0);
        }
    }
    let acc = binary_accuracy(&p, &t)?;
    write_json(
        a.output.as_deref(),
        &serde_json::json!({ "images": truth.len(), "mad": mad, "binary_accuracy": acc }),
    )
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let mut cfg: SyntheticConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => SyntheticConfig::default(),
    };
    if let Some(n) = a.images {
        cfg.images = n;
    }
    if let Some(n) = a.noise {
        cfg.noise = n;
    }
    let syn = generate_synthetic(&cfg, seed)?;
    syn.save_to_dir(&a.output)?;
    eprintln!("{} images written to {}", syn.dataset.images.len(), a.output.display());
    Ok(())
}

fn experiment(a: &ExperimentArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = a
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Argument("no output directory: pass --output or set output_dir".into()))?;
    let out = run_experiment(&cfg)?;
    write_outputs(&out, &dir)?;
    eprintln!("report written to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Measure(a) => measure(a),
        Command::Features(a) => features(a),
        Command::Saliency(a) => saliency(a),
        Command::TrainSsvm(a) => train(a, seed),
        Command::Predict(a) => predict(a),
        Command::TrainCca(a) => train_cca(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a, seed),
        Command::Experiment(a) => experiment(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("TAGRANK_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
