//! Seeded synthetic datasets.
//!
//! Every image receives sentences whose mention pattern realizes a known
//! importance vector under the sentence measurement, so the stored truth
//! can be recovered exactly by [`crate::measure::measure_image_importance`].
//! Visual retrieval features are the importance-weighted sum of per-tag
//! latent embeddings plus Gaussian noise; boxes grow and move toward the
//! image centre with importance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{BoundingBox, Dataset, ImageRecord, ObjectInstance, SentenceRecord, Vocabulary};
use super::matrix::{FeatureMatrix, MatrixRole};
use super::taxonomy::SynonymLexicon;
use super::tree::parse_bracketed_tree;
use crate::error::{Error, Result};
use crate::measure::{importance_to_json, ImportanceVector};

const OBJECT_NAMES: &[&str] = &[
    "person", "dog", "bicycle", "car", "cat", "chair", "sofa", "bus", "horse", "bird", "boat", "bottle", "cow",
    "sheep", "train", "table", "plant", "monitor", "kite", "frisbee", "surfboard", "umbrella", "motorbike",
    "truck", "bench", "clock", "laptop", "remote", "toilet", "sink",
];
const SCENE_NAMES: &[&str] = &[
    "beach", "street", "kitchen", "bedroom", "field", "forest", "harbor", "office", "bathroom", "yard",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub images: usize,
    pub object_categories: usize,
    pub scene_categories: usize,
    pub visual_dim: usize,
    pub scene_dim: usize,
    pub noise: f64,
    pub sentences_per_image: usize,
    pub max_tags: usize,
    pub scene_probability: f64,
    /// When set, images are drawn from this many shared tag/mention patterns.
    pub templates: Option<usize>,
    pub width: u32,
    pub height: u32,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            images: 200,
            object_categories: 8,
            scene_categories: 3,
            visual_dim: 32,
            scene_dim: 8,
            noise: 0.05,
            sentences_per_image: 5,
            max_tags: 5,
            scene_probability: 0.6,
            templates: None,
            width: 64,
            height: 48,
            alpha: crate::measure::DEFAULT_ALPHA,
            beta: crate::measure::DEFAULT_BETA,
        }
    }
}

impl SyntheticConfig {
    pub fn sized(images: usize, objects: usize, scenes: usize, visual_dim: usize) -> Self {
        Self {
            images,
            object_categories: objects,
            scene_categories: scenes,
            visual_dim,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.object_categories == 0 {
            return Err(Error::argument("synthetic data needs at least one object category"));
        }
        if self.images == 0 || self.visual_dim == 0 || self.sentences_per_image == 0 || self.max_tags == 0 {
            return Err(Error::argument("image count, visual dim, sentences and max tags must be positive"));
        }
        if self.templates == Some(0) {
            return Err(Error::argument("template count must be positive"));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::argument("synthetic images must be at least 8x8"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::argument("noise must be a finite non-negative value"));
        }
        if !(0.0..=1.0).contains(&self.scene_probability) {
            return Err(Error::argument("scene_probability must lie in [0, 1]"));
        }
        if !(self.alpha >= 0.0 && self.alpha <= self.beta) {
            return Err(Error::argument("need 0 <= alpha <= beta"));
        }
        Ok(())
    }
}

/// Generated dataset plus everything needed to run the pipeline on it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub lexicon: SynonymLexicon,
    pub visual: FeatureMatrix,
    pub scene: FeatureMatrix,
    /// Rendered grayscale images, `width * height` values per row.
    pub gray: FeatureMatrix,
    /// Unquantized ground truth, keyed by image id.
    pub truth: BTreeMap<String, ImportanceVector>,
}

impl SyntheticDataset {
    /// Writes `dataset.json`, `visual.bin`, `scene.bin`, `gray.bin`,
    /// `lexicon.tsv` and `truth.json` into `dir`.
    pub fn save_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.dataset.save(dir.join("dataset.json"))?;
        self.visual.save(dir.join("visual.bin"))?;
        self.scene.save(dir.join("scene.bin"))?;
        self.gray.save(dir.join("gray.bin"))?;
        fs::write(dir.join("lexicon.tsv"), self.lexicon.to_tsv())?;
        fs::write(dir.join("truth.json"), importance_to_json(&self.truth)?)?;
        Ok(())
    }
}

fn category_names(pool: &[&str], prefix: &str, n: usize) -> Vec<String> {
    if n <= pool.len() {
        pool[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// Which tags one sentence mentions and in which role the scene appears.
#[derive(Debug, Clone)]
struct SentencePlan {
    objects: Vec<usize>,
    /// 0 absent, 1 modifier (alpha), 2 subject (beta).
    scene_role: u8,
}

#[derive(Debug, Clone)]
struct ImagePlan {
    objects: Vec<usize>,
    scene: Option<usize>,
    sentences: Vec<SentencePlan>,
}

fn plan_image(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> ImagePlan {
    let max_tags = cfg.max_tags.min(cfg.object_categories);
    let n_tags = rng.random_range(1..=max_tags);
    let mut objects: Vec<usize> = (0..cfg.object_categories).collect();
    objects.shuffle(rng);
    objects.truncate(n_tags);
    objects.sort_unstable();
    let scene = (cfg.scene_categories > 0 && rng.random_bool(cfg.scene_probability))
        .then(|| rng.random_range(0..cfg.scene_categories));

    // Per-tag mention propensities; the first tag drawn is made prominent.
    let propensity: Vec<f64> = (0..objects.len())
        .map(|i| if i == 0 { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..0.9) })
        .collect();
    let scene_propensity: f64 = rng.random_range(0.0..1.0);
    let mut sentences = Vec::with_capacity(cfg.sentences_per_image);
    for _ in 0..cfg.sentences_per_image {
        let mentioned: Vec<usize> = (0..objects.len()).filter(|&i| rng.random_bool(propensity[i])).collect();
        let scene_role = match scene {
            Some(_) if rng.random_bool(scene_propensity) => {
                if rng.random_bool(0.5) {
                    2
                } else {
                    1
                }
            }
            _ => 0,
        };
        sentences.push(SentencePlan {
            objects: mentioned,
            scene_role,
        });
    }
    if sentences.iter().all(|s| s.objects.is_empty() && s.scene_role == 0) {
        sentences[0].objects.push(0);
    }
    ImagePlan {
        objects,
        scene,
        sentences,
    }
}

/// Truth computed straight from the plan, summing sentence credits in order.
fn plan_importance(plan: &ImagePlan, objects: &[String], scenes: &[String], cfg: &SyntheticConfig) -> ImportanceVector {
    let mut sums: BTreeMap<String, f64> = plan.objects.iter().map(|&o| (objects[o].clone(), 0.0)).collect();
    if let Some(s) = plan.scene {
        sums.insert(scenes[s].clone(), 0.0);
    }
    for s in &plan.sentences {
        let c = match s.scene_role {
            1 => cfg.alpha,
            2 => cfg.beta,
            _ => 0.0,
        };
        if !s.objects.is_empty() {
            let credit = 1.0 / (s.objects.len() as f64 * (1.0 + c));
            for &i in &s.objects {
                *sums.get_mut(&objects[plan.objects[i]]).expect("planned tag") += credit;
            }
        }
        if let Some(sc) = plan.scene {
            *sums.get_mut(&scenes[sc]).expect("planned scene") += c / (1.0 + c);
        }
    }
    let k = plan.sentences.len() as f64;
    for v in sums.values_mut() {
        *v /= k;
    }
    ImportanceVector::new(sums).expect("credits stay within [0, 1]")
}

fn noun_phrase(word: &str) -> String {
    format!("(NP (DT a) (NN {word}))")
}

fn sentence_tree(plan: &SentencePlan, object_words: &[String], scene_word: Option<&str>) -> String {
    let objects = match object_words.len() {
        0 => None,
        1 => Some(noun_phrase(&object_words[0])),
        _ => {
            let parts: Vec<String> = object_words.iter().map(|w| noun_phrase(w)).collect();
            Some(format!("(NP {})", parts.join(" (CC and) ")))
        }
    };
    let scene_np = scene_word.map(|w| format!("(NP (DT the) (NN {w}))"));
    match (plan.scene_role, objects, scene_np) {
        (2, Some(obj), Some(scene)) => format!("(S {scene} (VP (VBZ shows) {obj}))"),
        (2, None, Some(scene)) => format!("(S {scene} (VP (VBZ is) (ADJP (JJ quiet))))"),
        (1, Some(obj), Some(scene)) => format!("(S {obj} (VP (VBP sit) (PP (IN in) {scene})))"),
        (1, None, Some(scene)) => {
            format!("(S (NP (NN something)) (VP (VBZ happens) (PP (IN in) {scene})))")
        }
        (_, Some(obj), _) => format!("(S {obj} (VP (VBP appear)))"),
        _ => "(S (NP (DT a) (NN picture)) (VP (VBZ is) (ADJP (JJ blurry))))".to_string(),
    }
}

fn place_box(importance: f64, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> BoundingBox {
    let (w, h) = (f64::from(cfg.width), f64::from(cfg.height));
    let frac = (0.15 + 0.65 * importance.sqrt() * rng.random_range(0.8..1.2)).clamp(0.1, 0.95);
    let (bw, bh) = ((frac * w).max(2.0), (frac * h).max(2.0));
    let spread = 0.4 * (1.0 - importance);
    let cx = w * (0.5 + spread * rng.random_range(-1.0..1.0));
    let cy = h * (0.5 + spread * rng.random_range(-1.0..1.0));
    let x0 = (cx - bw / 2.0).clamp(0.0, w - bw).floor() as u32;
    let y0 = (cy - bh / 2.0).clamp(0.0, h - bh).floor() as u32;
    let x1 = (x0 + bw.round() as u32).min(cfg.width).max(x0 + 1);
    let y1 = (y0 + bh.round() as u32).min(cfg.height).max(y0 + 1);
    BoundingBox::new(x0, y0, x1, y1)
}

/// Generates a dataset deterministically from `seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = category_names(OBJECT_NAMES, "object", cfg.object_categories);
    let scenes = category_names(SCENE_NAMES, "scene", cfg.scene_categories);
    let vocabulary = Vocabulary::new(objects.clone(), scenes.clone())?;

    let mut lexicon = SynonymLexicon::new();
    for o in &objects {
        lexicon.insert(&format!("{o}s"), o);
    }

    let n_tags = objects.len() + scenes.len();
    let embeddings: Vec<Vec<f64>> = (0..n_tags)
        .map(|_| (0..cfg.visual_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let scene_embeddings: Vec<Vec<f64>> = (0..scenes.len())
        .map(|_| (0..cfg.scene_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::argument(e.to_string()))?;

    let templates: Option<Vec<ImagePlan>> = cfg
        .templates
        .map(|m| (0..m).map(|_| plan_image(cfg, &mut rng)).collect());

    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut images = Vec::with_capacity(cfg.images);
    let mut truth = BTreeMap::new();
    let mut visual = Vec::with_capacity(cfg.images * cfg.visual_dim);
    let mut scene_rows = Vec::with_capacity(cfg.images * cfg.scene_dim);
    let mut gray = Vec::with_capacity(cfg.images * w * h);

    for n in 0..cfg.images {
        let plan = match &templates {
            Some(ts) => ts.choose(&mut rng).expect("non-empty templates").clone(),
            None => plan_image(cfg, &mut rng),
        };
        let importance = plan_importance(&plan, &objects, &scenes, cfg);
        let id = format!("img{n:05}");

        let sentences = plan
            .sentences
            .iter()
            .map(|s| {
                let words: Vec<String> = s
                    .objects
                    .iter()
                    .map(|&i| {
                        let name = &objects[plan.objects[i]];
                        if rng.random_bool(0.3) {
                            format!("{name}s")
                        } else {
                            name.clone()
                        }
                    })
                    .collect();
                let scene_word = plan.scene.map(|sc| scenes[sc].as_str());
                let tree = parse_bracketed_tree(&sentence_tree(s, &words, scene_word))?;
                Ok(SentenceRecord::from_tree(tree))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut instances = Vec::new();
        for &o in &plan.objects {
            let imp = importance.value(&objects[o]);
            let copies = if rng.random_bool(0.25) { 2 } else { 1 };
            for _ in 0..copies {
                instances.push(ObjectInstance {
                    category: objects[o].clone(),
                    bbox: place_box(imp, cfg, &mut rng),
                });
            }
        }

        let dense = importance.to_dense(&vocabulary);
        for d in 0..cfg.visual_dim {
            let clean: f64 = dense.iter().zip(&embeddings).map(|(wt, e)| wt * e[d]).sum();
            visual.push(clean + noise.sample(&mut rng));
        }
        for d in 0..cfg.scene_dim {
            let clean = plan.scene.map_or(0.0, |sc| importance.value(&scenes[sc]) * scene_embeddings[sc][d]);
            scene_rows.push(clean + noise.sample(&mut rng));
        }

        // Rendered frame: mid-gray textured background, boxes brighter with importance.
        let mut frame: Vec<f64> = (0..w * h).map(|_| 70.0 + rng.random_range(0.0..20.0)).collect();
        for inst in &instances {
            let level = 110.0 + 140.0 * importance.value(&inst.category);
            for y in inst.bbox.y_min..inst.bbox.y_max {
                for x in inst.bbox.x_min..inst.bbox.x_max {
                    let px = &mut frame[y as usize * w + x as usize];
                    *px = px.max(level);
                }
            }
        }
        gray.extend(frame.into_iter().map(|v| v.round().clamp(0.0, 255.0)));

        images.push(ImageRecord {
            id: id.clone(),
            width: cfg.width,
            height: cfg.height,
            object_tags: plan.objects.iter().map(|&o| objects[o].clone()).collect(),
            scene_tag: plan.scene.map(|sc| scenes[sc].clone()),
            instances,
            sentences,
            feature_row: n,
        });
        truth.insert(id, importance);
    }

    let dataset = Dataset::new(vocabulary, images)?;
    Ok(SyntheticDataset {
        dataset,
        lexicon,
        visual: FeatureMatrix::new(cfg.images, cfg.visual_dim, visual, MatrixRole::VisualRetrieval)?,
        scene: FeatureMatrix::new(cfg.images, cfg.scene_dim, scene_rows, MatrixRole::SceneVisual)?,
        gray: FeatureMatrix::new(cfg.images, w * h, gray, MatrixRole::SaliencyGray)?,
        truth,
    })
}
