//! End-to-end retrieval experiment: ground truth, importance prediction,
//! one subspace per textual setting, NDCG curves per task.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{equal_importance, ideal_order, is_zero_gain, ndcg_at_k, prediction_error, relevance_rg};
use crate::cca::{
    annotate_i2t, baseline_tagging, baseline_visual_only, build_text_features, fit_cca, retrieve_i2i, retrieve_t2i,
    CcaConfig, RetrievalDb, ScoredItem, TextFeatureMode, DEFAULT_NEIGHBORS,
};
use crate::corpus::{
    generate_synthetic, load_dataset, load_feature_matrix, split_dataset, Dataset, FeatureMatrix, ImageRecord,
    MatrixRole, SynonymLexicon, SyntheticConfig, Taxonomy,
};
use crate::error::{Error, Result};
use crate::features::{build_mrf_instance, image_saliency, MrfInstance};
use crate::measure::{measure_dataset, read_importance_file, ImportanceVector, MatchConfig};
use crate::ssvm::{binary_accuracy, labels_from_importance, train_ssvm, Mode, TrainConfig};

/// Setting name used for the raw visual-feature baselines.
pub const BASELINE_SETTING: &str = "BASELINE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    I2I,
    T2I,
    I2T,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::I2I, Task::T2I, Task::I2T];

    pub fn name(self) -> &'static str {
        match self {
            Task::I2I => "I2I",
            Task::T2I => "T2I",
            Task::I2T => "I2T",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    /// Mean absolute error of predicted importance on the query images.
    Mad,
    /// Binary importance accuracy on the query images.
    Accuracy,
}

/// Ingested data files. Relative paths are resolved against the directory of
/// the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub dataset: PathBuf,
    pub visual: PathBuf,
    #[serde(default)]
    pub scene: Option<PathBuf>,
    #[serde(default)]
    pub gray: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    /// Precomputed ground-truth importance; measured from sentences if absent.
    #[serde(default)]
    pub importance: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        config: SyntheticConfig,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Files(FileSource),
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub query_fraction: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub settings: Vec<TextFeatureMode>,
    pub tasks: Vec<Task>,
    pub ks: Vec<usize>,
    pub metrics: Vec<Metric>,
    pub baselines: bool,
    pub neighbors: usize,
    pub cca: CcaConfig,
    pub ssvm: TrainConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                config: SyntheticConfig::default(),
                seed: default_seed(),
            },
            query_fraction: 0.1,
            train_fraction: 0.5,
            seed: default_seed(),
            settings: TextFeatureMode::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            ks: vec![1, 5, 10, 20, 30, 40, 50],
            metrics: vec![Metric::Ndcg],
            baselines: true,
            neighbors: DEFAULT_NEIGHBORS,
            cca: CcaConfig::default(),
            ssvm: TrainConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Files(f) = &mut cfg.source {
            fix(&mut f.dataset);
            fix(&mut f.visual);
            for p in [&mut f.scene, &mut f.gray, &mut f.lexicon, &mut f.taxonomy, &mut f.importance]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
        if let Some(p) = &mut cfg.output_dir {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::argument("k values must be >= 1"));
        }
        if self.settings.is_empty() && !self.baselines {
            return Err(Error::argument("no settings to evaluate"));
        }
        if self.tasks.is_empty() {
            return Err(Error::argument("no tasks to evaluate"));
        }
        if self.neighbors == 0 {
            return Err(Error::argument("neighbors must be positive"));
        }
        if let DataSource::Files(f) = &self.source {
            let listed = [Some(&f.dataset), Some(&f.visual), f.scene.as_ref(), f.gray.as_ref(), f.lexicon.as_ref()];
            let more = [f.taxonomy.as_ref(), f.importance.as_ref()];
            for p in listed.into_iter().chain(more).flatten() {
                if !p.exists() {
                    return Err(Error::argument(format!("file `{}` does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// One query's ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query: String,
    pub task: Task,
    pub items: Vec<ScoredItem>,
}

/// `setting -> task -> k -> mean NDCG@k`.
pub type Report = BTreeMap<String, BTreeMap<String, BTreeMap<usize, f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub mode: Mode,
    pub training_images: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_violation: f64,
    /// Mean MAD on the query images, when requested.
    pub query_mad: Option<f64>,
    /// MAD of the equal-importance baseline on the same images.
    pub equal_importance_mad: Option<f64>,
    pub query_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub images: usize,
    pub queries: usize,
    pub training: usize,
    pub database: usize,
    /// `setting -> task -> query ids` whose relevances are all zero (NDCG reported as 0).
    pub zero_gain_queries: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub predictions: BTreeMap<String, PredictionSummary>,
    /// Leading canonical correlations per setting.
    pub correlations: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: Report,
    pub diagnostics: Diagnostics,
}

impl ExperimentOutput {
    pub fn report_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report)? + "\n")
    }

    /// Curves as `setting,task,k,ndcg` rows.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("setting,task,k,ndcg\n");
        for (setting, tasks) in &self.report {
            for (task, curve) in tasks {
                for (k, v) in curve {
                    writeln!(s, "{setting},{task},{k},{v}").expect("writing to a string");
                }
            }
        }
        s
    }

    pub fn diagnostics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.diagnostics)? + "\n")
    }
}

/// Writes `report.json`, `curves.csv` and `diagnostics.json` into `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), output.report_json()?)?;
    fs::write(dir.join("curves.csv"), output.curves_csv())?;
    fs::write(dir.join("diagnostics.json"), output.diagnostics_json()?)?;
    Ok(())
}

struct Loaded {
    dataset: Dataset,
    visual: FeatureMatrix,
    scene: Option<FeatureMatrix>,
    gray: Option<FeatureMatrix>,
    truth: BTreeMap<String, ImportanceVector>,
}

fn load(source: &DataSource) -> Result<Loaded> {
    match source {
        DataSource::Synthetic { config, seed } => {
            let syn = generate_synthetic(config, *seed)?;
            let truth = measure_dataset(&syn.dataset, &MatchConfig::new(syn.lexicon.clone(), None))?;
            Ok(Loaded {
                dataset: syn.dataset,
                visual: syn.visual,
                scene: Some(syn.scene),
                gray: Some(syn.gray),
                truth,
            })
        }
        DataSource::Files(f) => {
            let dataset = load_dataset(&f.dataset)?;
            let visual = load_feature_matrix(&f.visual, MatrixRole::VisualRetrieval)?;
            dataset.check_feature_rows(visual.rows())?;
            let scene = f
                .scene
                .as_ref()
                .map(|p| load_feature_matrix(p, MatrixRole::SceneVisual))
                .transpose()?;
            let gray = f
                .gray
                .as_ref()
                .map(|p| load_feature_matrix(p, MatrixRole::SaliencyGray))
                .transpose()?;
            for m in scene.iter().chain(&gray) {
                dataset.check_feature_rows(m.rows())?;
            }
            let truth = match &f.importance {
                Some(p) => read_importance_file(p)?,
                None => {
                    let lexicon = f.lexicon.as_ref().map(SynonymLexicon::load).transpose()?.unwrap_or_default();
                    let taxonomy = f.taxonomy.as_ref().map(Taxonomy::load).transpose()?;
                    measure_dataset(&dataset, &MatchConfig::new(lexicon, taxonomy))?
                }
            };
            Ok(Loaded {
                dataset,
                visual,
                scene,
                gray,
                truth,
            })
        }
    }
}

fn truth_of<'a>(truth: &'a BTreeMap<String, ImportanceVector>, id: &str) -> Result<&'a ImportanceVector> {
    truth
        .get(id)
        .ok_or_else(|| Error::Data(format!("no ground-truth importance for image `{id}`")))
}

/// Relevance of two dense vectors, 0 when either is all-zero.
fn relevance_or_zero(a: &[f64], b: &[f64]) -> Result<f64> {
    match relevance_rg(a, b) {
        Err(Error::Precondition(_)) => Ok(0.0),
        other => other,
    }
}

struct QueryScores {
    id: String,
    ndcg: Vec<f64>,
    zero_gain: bool,
}

fn score_ranking(id: &str, ranked: &[f64], all: &[f64], ks: &[usize]) -> Result<QueryScores> {
    let ideal = ideal_order(all);
    Ok(QueryScores {
        id: id.to_string(),
        ndcg: ks.iter().map(|&k| ndcg_at_k(ranked, &ideal, k)).collect::<Result<_>>()?,
        zero_gain: is_zero_gain(all),
    })
}

fn aggregate(
    mut scores: Vec<QueryScores>,
    ks: &[usize],
    setting: &str,
    task: Task,
    report: &mut Report,
    diag: &mut Diagnostics,
) {
    scores.sort_by(|a, b| a.id.cmp(&b.id));
    let n = scores.len().max(1) as f64;
    let curve = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, scores.iter().map(|s| s.ndcg[i]).sum::<f64>() / n))
        .collect();
    report
        .entry(setting.to_string())
        .or_default()
        .insert(task.name().to_string(), curve);
    let zero: Vec<String> = scores.iter().filter(|s| s.zero_gain).map(|s| s.id.clone()).collect();
    if !zero.is_empty() {
        diag.zero_gain_queries
            .entry(setting.to_string())
            .or_default()
            .insert(task.name().to_string(), zero);
    }
}

/// Everything the per-task evaluation needs about one image.
struct Row<'a> {
    image: &'a ImageRecord,
    visual: &'a [f64],
    truth: Vec<f64>,
}

fn predict_importance(
    loaded: &Loaded,
    instances: &BTreeMap<usize, MrfInstance>,
    train: &[usize],
    queries: &[usize],
    config: &ExperimentConfig,
    mode: Mode,
) -> Result<(BTreeMap<String, ImportanceVector>, PredictionSummary)> {
    let vocab = &loaded.dataset.vocabulary;
    let images = &loaded.dataset.images;
    let mut train_inst = Vec::new();
    let mut labels = Vec::new();
    for i in train {
        if let Some(inst) = instances.get(i) {
            let imp = truth_of(&loaded.truth, &images[*i].id)?;
            labels.push(labels_from_importance(inst, vocab, imp, mode));
            train_inst.push(inst.clone());
        }
    }
    if train_inst.is_empty() {
        return Err(Error::Data("no tagged training images for the importance predictor".into()));
    }
    let train_cfg = TrainConfig { mode, ..config.ssvm };
    let (model, report) = train_ssvm(&train_inst, &labels, vocab, &train_cfg)?;
    let predicted: Vec<(String, ImportanceVector)> = images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            let v = match instances.get(&i) {
                Some(inst) => model.predict_importance(inst, vocab)?,
                None => ImportanceVector::default(),
            };
            Ok((im.id.clone(), v))
        })
        .collect::<Result<_>>()?;
    let predicted: BTreeMap<String, ImportanceVector> = predicted.into_iter().collect();

    let tagged_queries: Vec<&str> = queries
        .iter()
        .filter(|i| instances.contains_key(i))
        .map(|&i| images[i].id.as_str())
        .collect();
    let subset = |m: &BTreeMap<String, ImportanceVector>| -> BTreeMap<String, ImportanceVector> {
        tagged_queries.iter().map(|id| (id.to_string(), m[*id].clone())).collect()
    };
    let mut summary = PredictionSummary {
        mode,
        training_images: train_inst.len(),
        iterations: report.iterations,
        converged: report.converged,
        final_violation: report.final_violation,
        query_mad: None,
        equal_importance_mad: None,
        query_accuracy: None,
    };
    if !tagged_queries.is_empty() {
        let truth: BTreeMap<String, ImportanceVector> = tagged_queries
            .iter()
            .map(|id| Ok((id.to_string(), truth_of(&loaded.truth, id)?.clone())))
            .collect::<Result<_>>()?;
        if config.metrics.contains(&Metric::Mad) {
            summary.query_mad = Some(prediction_error(&subset(&predicted), &truth)?);
            let equal = truth
                .iter()
                .map(|(k, v)| Ok((k.clone(), equal_importance(v)?)))
                .collect::<Result<_>>()?;
            summary.equal_importance_mad = Some(prediction_error(&equal, &truth)?);
        }
        if config.metrics.contains(&Metric::Accuracy) {
            let (mut p, mut t) = (Vec::new(), Vec::new());
            for id in &tagged_queries {
                let truth_v = &truth[*id];
                for (tag, v) in truth_v.iter() {
                    t.push(v > 0.0);
                    p.push(predicted[*id].value(tag) > 0.0);
                }
            }
            summary.query_accuracy = Some(binary_accuracy(&p, &t)?);
        }
    }
    Ok((predicted, summary))
}

/// Runs the configured experiment. Identical configs give identical output.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let loaded = load(&config.source)?;
    let dataset = &loaded.dataset;
    let vocab = &dataset.vocabulary;
    let images = &dataset.images;
    let tag_names: Vec<String> = vocab.objects().iter().chain(vocab.scenes()).cloned().collect();
    let split = split_dataset(images, config.query_fraction, config.train_fraction, config.seed)?;
    let database = split.database();
    if split.queries.is_empty() || database.is_empty() || split.train.is_empty() {
        return Err(Error::Data("split leaves no queries, training images or database".into()));
    }
    let train: Vec<usize> = split.train.iter().copied().filter(|&i| images[i].tag_count() > 0).collect();

    let rows: Vec<Row> = images
        .iter()
        .map(|im| {
            Ok(Row {
                image: im,
                visual: loaded.visual.try_row(im.feature_row)?,
                truth: truth_of(&loaded.truth, &im.id)?.to_dense(vocab),
            })
        })
        .collect::<Result<_>>()?;

    let mut report = Report::new();
    let mut diag = Diagnostics {
        images: images.len(),
        queries: split.queries.len(),
        training: train.len(),
        database: database.len(),
        ..Default::default()
    };
    let ndcg = config.metrics.contains(&Metric::Ndcg);

    // Importance predictions, shared by the settings that use the same mode.
    let mut predicted: BTreeMap<Mode, BTreeMap<String, ImportanceVector>> = BTreeMap::new();
    let modes: Vec<Mode> = [Mode::Binary, Mode::Continuous]
        .into_iter()
        .filter(|m| {
            config
                .settings
                .iter()
                .any(|s| s.is_predicted() && (s.is_binary() == (*m == Mode::Binary)))
        })
        .collect();
    if !modes.is_empty() {
        let scene_dim = loaded.scene.as_ref().map_or(0, FeatureMatrix::dim);
        let built: Vec<Option<(usize, MrfInstance)>> = images
            .par_iter()
            .enumerate()
            .map(|(i, im)| {
                if im.tag_count() == 0 {
                    return Ok(None);
                }
                let sal = image_saliency(im, loaded.gray.as_ref())?;
                let scene_row = loaded.scene.as_ref().map(|m| m.try_row(im.feature_row)).transpose()?;
                Ok(Some((i, build_mrf_instance(im, &sal, scene_row, scene_dim, vocab, None)?)))
            })
            .collect::<Result<_>>()?;
        let instances: BTreeMap<usize, MrfInstance> = built.into_iter().flatten().collect();
        for mode in modes {
            let (p, summary) = predict_importance(&loaded, &instances, &train, &split.queries, config, mode)?;
            predicted.insert(mode, p);
            diag.predictions.insert(mode.to_string(), summary);
        }
    }

    for &setting in &config.settings {
        let importance = match setting {
            TextFeatureMode::Tags => None,
            TextFeatureMode::Tbti | TextFeatureMode::Tcti => Some(&loaded.truth),
            TextFeatureMode::Pbti => predicted.get(&Mode::Binary),
            TextFeatureMode::Pcti => predicted.get(&Mode::Continuous),
        };
        let text = build_text_features(images, vocab, importance, setting)?;
        let fit_rows = |m: &FeatureMatrix, idx: &[usize], by_feature_row: bool| -> Result<FeatureMatrix> {
            let sel: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    let r = if by_feature_row { images[i].feature_row } else { i };
                    Ok(m.try_row(r)?.to_vec())
                })
                .collect::<Result<_>>()?;
            FeatureMatrix::from_rows(&sel, m.role())
        };
        let mut model = fit_cca(
            &fit_rows(&loaded.visual, &train, true)?,
            &fit_rows(&text, &train, false)?,
            &config.cca,
        )?;
        model.mode = Some(setting);
        diag.correlations
            .insert(setting.to_string(), model.correlations.iter().take(10).copied().collect());
        if !ndcg {
            continue;
        }
        let db = RetrievalDb::new(
            &model,
            database.iter().map(|&i| images[i].id.clone()).collect(),
            database.iter().map(|&i| rows[i].visual.to_vec()).collect(),
            Some(database.iter().map(|&i| text.row(i).to_vec()).collect()),
        )?;
        let db_index: BTreeMap<&str, usize> = database.iter().map(|&i| (images[i].id.as_str(), i)).collect();
        for &task in &config.tasks {
            let scores: Vec<QueryScores> = split
                .queries
                .par_iter()
                .map(|&q| {
                    let row = &rows[q];
                    match task {
                        Task::I2I | Task::T2I => {
                            let ranked = if task == Task::I2I {
                                retrieve_i2i(&model, row.visual, &db)?
                            } else {
                                retrieve_t2i(&model, text.row(q), &db)?
                            };
                            let gains: Vec<f64> = ranked
                                .iter()
                                .map(|s| relevance_or_zero(&row.truth, &rows[db_index[s.id.as_str()]].truth))
                                .collect::<Result<_>>()?;
                            let all: Vec<f64> = database
                                .iter()
                                .map(|&d| relevance_or_zero(&row.truth, &rows[d].truth))
                                .collect::<Result<_>>()?;
                            score_ranking(&row.image.id, &gains, &all, &config.ks)
                        }
                        Task::I2T => {
                            let tags = annotate_i2t(&model, row.visual, &db, config.neighbors, &tag_names)?;
                            tag_scores(&row.image.id, &tags, &row.truth, vocab, &config.ks)
                        }
                    }
                })
                .collect::<Result<_>>()?;
            aggregate(scores, &config.ks, setting.name(), task, &mut report, &mut diag);
        }
    }

    if config.baselines && ndcg {
        let tags = build_text_features(images, vocab, None, TextFeatureMode::Tags)?;
        let db = RetrievalDb::raw(
            database.iter().map(|&i| images[i].id.clone()).collect(),
            database.iter().map(|&i| rows[i].visual.to_vec()).collect(),
            Some(database.iter().map(|&i| tags.row(i).to_vec()).collect()),
        )?;
        let db_index: BTreeMap<&str, usize> = database.iter().map(|&i| (images[i].id.as_str(), i)).collect();
        for &task in config.tasks.iter().filter(|t| **t != Task::T2I) {
            let scores: Vec<QueryScores> = split
                .queries
                .par_iter()
                .map(|&q| {
                    let row = &rows[q];
                    if task == Task::I2I {
                        let ranked = baseline_visual_only(row.visual, &db)?;
                        let gains: Vec<f64> = ranked
                            .iter()
                            .map(|s| relevance_or_zero(&row.truth, &rows[db_index[s.id.as_str()]].truth))
                            .collect::<Result<_>>()?;
                        let all: Vec<f64> = database
                            .iter()
                            .map(|&d| relevance_or_zero(&row.truth, &rows[d].truth))
                            .collect::<Result<_>>()?;
                        score_ranking(&row.image.id, &gains, &all, &config.ks)
                    } else {
                        let ranked = baseline_tagging(row.visual, &db, config.neighbors, &tag_names)?;
                        tag_scores(&row.image.id, &ranked, &row.truth, vocab, &config.ks)
                    }
                })
                .collect::<Result<_>>()?;
            aggregate(scores, &config.ks, BASELINE_SETTING, task, &mut report, &mut diag);
        }
    }

    Ok(ExperimentOutput {
        report,
        diagnostics: diag,
    })
}

/// Tag relevance is the query's true importance of that tag; the ideal
/// order runs over the whole vocabulary.
fn tag_scores(
    id: &str,
    ranked: &[ScoredItem],
    truth: &[f64],
    vocab: &crate::corpus::Vocabulary,
    ks: &[usize],
) -> Result<QueryScores> {
    let gains: Vec<f64> = ranked
        .iter()
        .map(|s| {
            vocab.tag_index(&s.id).map(|i| truth[i]).ok_or_else(|| Error::Lookup {
                kind: "tag",
                name: s.id.clone(),
            })
        })
        .collect::<Result<_>>()?;
    score_ranking(id, &gains, truth, ks)
}
