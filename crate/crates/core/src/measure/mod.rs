//! Ground-truth tag importance measured from sentence descriptions.
//!
//! Object tags receive discounted mention credit: a sentence naming `m` object
//! tags gives each of them `1/m`, and the credit is averaged over sentences.
//! When the image has a scene tag, each sentence also gets a scene factor
//! `c` from the grammatical role of the scene word (`0` unmentioned, `alpha` inside a
//! prepositional modifier, `beta` otherwise); objects are scaled by `1/(1+c)`
//! and the scene receives `c/(1+c)`.

mod matching;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

pub use matching::{
    match_token_to_tag, wu_palmer_similarity, MatchConfig, DEFAULT_ALPHA, DEFAULT_BETA,
    DEFAULT_WUP_THRESHOLD,
};

use crate::corpus::{Dataset, ImageRecord, ParseTree, SentenceRecord, Vocabulary};
use crate::error::{Error, Result};

/// Number of quantization levels: 0.0, 0.1, ..., 1.0.
pub const LEVELS: usize = 11;

/// Tag → importance in `[0, 1]`.
///
/// Measured vectors additionally sum to at most one; quantized and predicted
/// vectors need not (rounding and independent node predictions can push the
/// total past one).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImportanceVector {
    values: BTreeMap<String, f64>,
    quantized: bool,
}

impl ImportanceVector {
    pub fn new(values: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((t, v)) = values.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::argument(format!("importance of `{t}` is {v}, outside [0, 1]")));
        }
        Ok(Self {
            values,
            quantized: false,
        })
    }

    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|(t, v)| (t.as_ref().to_string(), *v)).collect())
    }

    pub fn get(&self, tag: &str) -> Option<f64> {
        self.values.get(tag).copied()
    }

    /// Importance of `tag`, or zero when absent.
    pub fn value(&self, tag: &str) -> f64 {
        self.get(tag).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    /// Dense `[objects ‖ scenes]` vector over the vocabulary.
    pub fn to_dense(&self, vocabulary: &Vocabulary) -> Vec<f64> {
        let mut out = vec![0.0; vocabulary.tag_count()];
        for (tag, v) in &self.values {
            if let Some(i) = vocabulary.tag_index(tag) {
                out[i] = *v;
            }
        }
        out
    }
}

/// Distinct object tags (indices into `object_tags`) named in the sentence.
pub fn sentence_tag_sets<S: AsRef<str>>(sentence: &SentenceRecord, object_tags: &[S], config: &MatchConfig) -> Vec<usize> {
    let mut hit = vec![false; object_tags.len()];
    for token in &sentence.tokens {
        if let Some(i) = match_token_to_tag(&token.to_lowercase(), object_tags, config) {
            hit[i] = true;
        }
    }
    hit.iter().enumerate().filter(|(_, h)| **h).map(|(i, _)| i).collect()
}

fn base_label(label: &str) -> &str {
    label.split(['-', '=']).next().unwrap_or(label)
}

/// Scene weight of one sentence: 0 when the scene word is absent, `alpha` when
/// its root-to-leaf path crosses a `PP` headed by a preposition (`IN`/`TO`),
/// `beta` otherwise. Only the leftmost scene mention is considered.
pub fn scene_factor(tree: &ParseTree, scene_tag: &str, config: &MatchConfig) -> f64 {
    let scene = [scene_tag];
    let Some(path) = tree.path_to_first_leaf(|tok| match_token_to_tag(&tok.to_lowercase(), &scene, config).is_some())
    else {
        return 0.0;
    };
    let in_prep_phrase = path.iter().any(|node| {
        base_label(node.label()) == "PP"
            && node
                .children()
                .first()
                .is_some_and(|c| matches!(base_label(c.label()), "IN" | "TO"))
    });
    if in_prep_phrase {
        config.alpha
    } else {
        config.beta
    }
}

// Per-sentence object credit and scene credit. Shared by the object-only and
// joint measurements so both produce bit-identical object values.
fn sentence_credit(mentioned: usize, scene_factor: f64) -> (f64, f64) {
    let object = if mentioned == 0 {
        0.0
    } else {
        1.0 / (mentioned as f64 * (1.0 + scene_factor))
    };
    (object, scene_factor / (1.0 + scene_factor))
}

/// Importance of every tag according to one sentence.
pub fn joint_sentence_importance<S: AsRef<str>>(
    sentence: &SentenceRecord,
    object_tags: &[S],
    scene_tag: Option<&str>,
    config: &MatchConfig,
) -> ImportanceVector {
    let mentioned = sentence_tag_sets(sentence, object_tags, config);
    let c = scene_tag.map_or(0.0, |s| scene_factor(&sentence.tree, s, config));
    let (obj, scene) = sentence_credit(mentioned.len(), c);
    let mut values: BTreeMap<String, f64> = object_tags.iter().map(|t| (t.as_ref().to_string(), 0.0)).collect();
    for i in mentioned {
        values.insert(object_tags[i].as_ref().to_string(), obj);
    }
    if let Some(s) = scene_tag {
        values.insert(s.to_string(), scene);
    }
    ImportanceVector {
        values,
        quantized: false,
    }
}

fn require_sentences(image: &ImageRecord) -> Result<()> {
    if image.sentences.is_empty() {
        return Err(Error::Precondition(format!(
            "image `{}` has no sentences to measure importance from",
            image.id
        )));
    }
    Ok(())
}

fn averaged<S: AsRef<str>>(
    image: &ImageRecord,
    object_tags: &[S],
    scene_tag: Option<&str>,
    config: &MatchConfig,
) -> Result<ImportanceVector> {
    require_sentences(image)?;
    let mut sums: BTreeMap<String, f64> = object_tags.iter().map(|t| (t.as_ref().to_string(), 0.0)).collect();
    if let Some(s) = scene_tag {
        sums.insert(s.to_string(), 0.0);
    }
    for sentence in &image.sentences {
        let mentioned = sentence_tag_sets(sentence, object_tags, config);
        let c = scene_tag.map_or(0.0, |s| scene_factor(&sentence.tree, s, config));
        let (obj, scene) = sentence_credit(mentioned.len(), c);
        for i in mentioned {
            *sums.get_mut(object_tags[i].as_ref()).expect("tag present") += obj;
        }
        if let Some(s) = scene_tag {
            *sums.get_mut(s).expect("scene present") += scene;
        }
    }
    let k = image.sentences.len() as f64;
    for v in sums.values_mut() {
        *v /= k;
    }
    Ok(ImportanceVector {
        values: sums,
        quantized: false,
    })
}

/// Discounted mention probability of each object tag, ignoring any scene tag.
pub fn object_importance(image: &ImageRecord, config: &MatchConfig) -> Result<ImportanceVector> {
    averaged(image, &image.object_tags, None, config)
}

/// Joint object and scene importance averaged over the image's sentences.
/// Tag ties in matching go to the earlier entry of `image.object_tags`.
pub fn measure_image_importance(image: &ImageRecord, config: &MatchConfig) -> Result<ImportanceVector> {
    averaged(image, &image.object_tags, image.scene_tag.as_deref(), config)
}

/// Measures every image (tags put in vocabulary order first). Images
/// without sentences are rejected.
pub fn measure_dataset(dataset: &Dataset, config: &MatchConfig) -> Result<BTreeMap<String, ImportanceVector>> {
    config.validate()?;
    let vocab = &dataset.vocabulary;
    dataset
        .images
        .par_iter()
        .map(|img| {
            let mut tags: Vec<&str> = img.object_tags.iter().map(String::as_str).collect();
            tags.sort_by_key(|t| vocab.object_index(t));
            let v = averaged(img, &tags, img.scene_tag.as_deref(), config)?;
            Ok((img.id.clone(), v))
        })
        .collect()
}

/// Rounds to the nearest tenth, halves rounding up.
pub fn quantize_value(v: f64) -> f64 {
    quantize_level(v) as f64 / 10.0
}

/// Level index `0..=10` nearest to `v`, halves rounding up.
pub fn quantize_level(v: f64) -> u8 {
    // The small offset absorbs representation error, e.g. 0.25*10 or 0.35*10.
    (v * 10.0 + 0.5 + 1e-9).floor().clamp(0.0, 10.0) as u8
}

pub fn quantize_importance(v: &ImportanceVector) -> ImportanceVector {
    ImportanceVector {
        values: v.values.iter().map(|(k, x)| (k.clone(), quantize_value(*x))).collect(),
        quantized: true,
    }
}

/// Reads an importance file: `{"image_id": {"tag": value, ...}, ...}`.
pub fn read_importance_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, ImportanceVector>> {
    parse_importance_json(&fs::read_to_string(path)?)
}

pub fn parse_importance_json(text: &str) -> Result<BTreeMap<String, ImportanceVector>> {
    let raw: BTreeMap<String, BTreeMap<String, f64>> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|(id, m)| {
            let v = ImportanceVector::new(m).map_err(|e| Error::validation(&id, "importance", e.to_string()))?;
            Ok((id, v))
        })
        .collect()
}

pub fn importance_to_json(map: &BTreeMap<String, ImportanceVector>) -> Result<String> {
    let raw: BTreeMap<&str, &BTreeMap<String, f64>> = map.iter().map(|(k, v)| (k.as_str(), &v.values)).collect();
    Ok(serde_json::to_string_pretty(&raw)?)
}

pub fn write_importance_file(path: impl AsRef<Path>, map: &BTreeMap<String, ImportanceVector>) -> Result<()> {
    fs::write(path, importance_to_json(map)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_bracketed_tree, SynonymLexicon};

    fn sentence(tree: &str) -> SentenceRecord {
        SentenceRecord::from_tree(parse_bracketed_tree(tree).unwrap())
    }

    /// A flat sentence naming the given words.
    fn words(ws: &[&str]) -> SentenceRecord {
        let leaves: Vec<String> = ws.iter().map(|w| format!("(NN {w})")).collect();
        sentence(&format!("(S {})", leaves.join(" ")))
    }

    fn image(tags: &[&str], scene: Option<&str>, sentences: Vec<SentenceRecord>) -> ImageRecord {
        ImageRecord {
            id: "img".into(),
            width: 10,
            height: 10,
            object_tags: tags.iter().map(|s| s.to_string()).collect(),
            scene_tag: scene.map(str::to_string),
            instances: vec![],
            sentences,
            feature_row: 0,
        }
    }

    const BEACH_SUBJECT: &str = "(NP (NP (DT A) (JJ sandy) (NN beach)) (VP (VBN covered) (PP (IN in) \
        (NP (NP (JJ white) (NNS surfboards)) (PP (IN near) (NP (DT the) (NN ocean)))))))";
    const BEACH_MODIFIER: &str = "(S (NP (NNS Surfboards)) (VP (VBP sit) (PP (IN on) (NP (NP (DT the) (NN sand)) \
        (PP (IN of) (NP (DT a) (NN beach)))))))";

    fn surf_config() -> MatchConfig {
        MatchConfig::new(SynonymLexicon::from_pairs(&[("surfboards", "surfboard")]), None)
    }

    #[test]
    fn fig4_mentions() {
        let lex = SynonymLexicon::from_pairs(&[("man", "person"), ("scooter", "motorbike")]);
        let cfg = MatchConfig::new(lex, None);
        let s = words(&["a", "man", "rides", "a", "scooter"]);
        assert_eq!(sentence_tag_sets(&s, &["person", "motorbike"], &cfg), vec![0, 1]);
        let twice = words(&["man", "and", "man"]);
        assert_eq!(sentence_tag_sets(&twice, &["person", "motorbike"], &cfg), vec![0]);
        assert!(sentence_tag_sets(&words(&["sky"]), &["person"], &cfg).is_empty());
    }

    #[test]
    fn discounted_probability_fig5() {
        let cfg = MatchConfig::default();
        let left = image(
            &["dog", "bicycle"],
            None,
            vec![
                words(&["dog", "bicycle"]),
                words(&["dog", "bicycle"]),
                words(&["bicycle", "dog"]),
                words(&["dog", "on", "bicycle"]),
                words(&["bicycle"]),
            ],
        );
        let v = object_importance(&left, &cfg).unwrap();
        assert_eq!(v.get("bicycle"), Some(0.6));
        assert_eq!(v.get("dog"), Some(0.4));
        let right = image(&["bicycle"], None, (0..5).map(|_| words(&["bicycle"])).collect());
        assert_eq!(object_importance(&right, &cfg).unwrap().get("bicycle"), Some(1.0));
    }

    #[test]
    fn fig4_pattern_person_motorbike() {
        let cfg = MatchConfig::default();
        let img = image(
            &["person", "motorbike"],
            None,
            vec![
                words(&["person", "motorbike"]),
                words(&["person", "motorbike"]),
                words(&["person"]),
                words(&["person"]),
                words(&["person"]),
            ],
        );
        let v = object_importance(&img, &cfg).unwrap();
        assert!((v.value("person") - 0.8).abs() < 1e-12);
        assert!((v.value("motorbike") - 0.2).abs() < 1e-12);
    }

    #[test]
    fn scene_factor_by_role() {
        let cfg = surf_config();
        assert_eq!(scene_factor(&parse_bracketed_tree(BEACH_MODIFIER).unwrap(), "beach", &cfg), 1.0);
        assert_eq!(scene_factor(&parse_bracketed_tree(BEACH_SUBJECT).unwrap(), "beach", &cfg), 2.0);
        assert_eq!(scene_factor(&parse_bracketed_tree("(NP (DT a) (NN dog))").unwrap(), "beach", &cfg), 0.0);
    }

    #[test]
    fn pp_without_preposition_head_counts_as_subject() {
        let tree = parse_bracketed_tree("(S (PP (RB right) (NP (NN beach))))").unwrap();
        assert_eq!(scene_factor(&tree, "beach", &MatchConfig::default()), 2.0);
        let to = parse_bracketed_tree("(S (VP (VB go) (PP-DIR (TO to) (NP (NN beach)))))").unwrap();
        assert_eq!(scene_factor(&to, "beach", &MatchConfig::default()), 1.0);
    }

    #[test]
    fn joint_sentence_traces() {
        let cfg = surf_config();
        let s1 = joint_sentence_importance(&sentence(BEACH_SUBJECT), &["surfboard"], Some("beach"), &cfg);
        assert!((s1.value("surfboard") - 1.0 / 3.0).abs() < 1e-15);
        assert!((s1.value("beach") - 2.0 / 3.0).abs() < 1e-15);
        let s2 = joint_sentence_importance(&sentence(BEACH_MODIFIER), &["surfboard"], Some("beach"), &cfg);
        assert_eq!(s2.value("surfboard"), 0.5);
        assert_eq!(s2.value("beach"), 0.5);
        let plain = joint_sentence_importance(&words(&["dog", "bicycle"]), &["dog", "bicycle"], None, &cfg);
        assert_eq!(plain.value("dog"), 0.5);
        assert_eq!(plain.value("bicycle"), 0.5);
    }

    #[test]
    fn image_average_of_two_sentences() {
        let img = image(&["surfboard"], Some("beach"), vec![sentence(BEACH_SUBJECT), sentence(BEACH_MODIFIER)]);
        let v = measure_image_importance(&img, &surf_config()).unwrap();
        assert!((v.value("beach") - 7.0 / 12.0).abs() < 1e-12);
        assert!((v.value("surfboard") - 5.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn silent_sentences_and_missing_sentences() {
        let cfg = MatchConfig::default();
        let img = image(&["dog"], Some("park"), vec![words(&["nothing"]), words(&["here"])]);
        let v = measure_image_importance(&img, &cfg).unwrap();
        assert_eq!(v.total(), 0.0);
        let empty = image(&["dog"], None, vec![]);
        assert!(matches!(measure_image_importance(&empty, &cfg), Err(Error::Precondition(_))));
        assert!(matches!(object_importance(&empty, &cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn quantization() {
        assert_eq!(quantize_value(0.58), 0.6);
        assert_eq!(quantize_value(0.25), 0.3);
        assert_eq!(quantize_value(0.35), 0.4);
        assert_eq!(quantize_value(1.0), 1.0);
        assert_eq!(quantize_value(0.0), 0.0);
        assert_eq!(quantize_value(0.04999), 0.0);
        let q = quantize_importance(&ImportanceVector::from_pairs(&[("a", 7.0 / 12.0)]).unwrap());
        assert!(q.is_quantized());
        assert_eq!(q.value("a"), 0.6);
    }

    #[test]
    fn importance_json_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("img1".to_string(), ImportanceVector::from_pairs(&[("dog", 0.4), ("bicycle", 0.6)]).unwrap());
        let back = parse_importance_json(&importance_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(parse_importance_json(r#"{"x": {"dog": 1.5}}"#).is_err());
    }
}
