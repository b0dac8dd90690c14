//! Image records, vocabulary and the JSON dataset file.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{parse_bracketed_tree, ParseTree};
use crate::error::{Error, Result};

/// Half-open pixel box `[x_min, x_max) × [y_min, y_max)` with the origin at
/// the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn is_valid_in(&self, width: u32, height: u32) -> bool {
        self.x_min < self.x_max && self.x_max <= width && self.y_min < self.y_max && self.y_max <= height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub tokens: Vec<String>,
    pub tree: ParseTree,
}

impl SentenceRecord {
    /// Builds a sentence whose tokens are read off the tree leaves.
    pub fn from_tree(tree: ParseTree) -> Self {
        let tokens = tree.tokens().into_iter().map(str::to_string).collect();
        Self { tokens, tree }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub category: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub object_tags: Vec<String>,
    pub scene_tag: Option<String>,
    pub instances: Vec<ObjectInstance>,
    pub sentences: Vec<SentenceRecord>,
    pub feature_row: usize,
}

impl ImageRecord {
    pub fn instances_of<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.instances.iter().filter(move |i| i.category == category)
    }

    /// Number of tags (objects plus the optional scene).
    pub fn tag_count(&self) -> usize {
        self.object_tags.len() + usize::from(self.scene_tag.is_some())
    }
}

/// Ordered object and scene category lists; position is the one-hot index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    objects: Vec<String>,
    scenes: Vec<String>,
    object_index: HashMap<String, usize>,
    scene_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(objects: Vec<String>, scenes: Vec<String>) -> Result<Self> {
        let object_index = index_of(&objects, "object")?;
        let scene_index = index_of(&scenes, "scene")?;
        if let Some(dup) = objects.iter().find(|o| scene_index.contains_key(*o)) {
            return Err(Error::argument(format!(
                "category `{dup}` is both an object and a scene"
            )));
        }
        Ok(Self {
            objects,
            scenes,
            object_index,
            scene_index,
        })
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn scenes(&self) -> &[String] {
        &self.scenes
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.object_index.get(name).copied()
    }

    pub fn scene_index(&self, name: &str) -> Option<usize> {
        self.scene_index.get(name).copied()
    }

    /// Index in the concatenated `[objects ‖ scenes]` tag space.
    pub fn tag_index(&self, name: &str) -> Option<usize> {
        self.object_index(name)
            .or_else(|| self.scene_index(name).map(|s| self.objects.len() + s))
    }

    /// Name at a position of the concatenated tag space.
    pub fn tag_name(&self, index: usize) -> Option<&str> {
        if index < self.objects.len() {
            Some(&self.objects[index])
        } else {
            self.scenes.get(index - self.objects.len()).map(String::as_str)
        }
    }

    pub fn tag_count(&self) -> usize {
        self.objects.len() + self.scenes.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tag_index(name).is_some()
    }
}

fn index_of(names: &[String], kind: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(Error::argument(format!("empty {kind} category name")));
        }
        if map.insert(n.clone(), i).is_some() {
            return Err(Error::argument(format!("duplicate {kind} category `{n}`")));
        }
    }
    Ok(map)
}

/// A validated dataset: vocabulary plus image records in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub images: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(vocabulary: Vocabulary, images: Vec<ImageRecord>) -> Result<Self> {
        let ds = Self { vocabulary, images };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawDataset = serde_json::from_str(text)?;
        let vocabulary = Vocabulary::new(raw.vocabulary.objects, raw.vocabulary.scenes)?;
        let images = raw
            .images
            .into_iter()
            .map(RawImage::into_record)
            .collect::<Result<Vec<_>>>()?;
        Self::new(vocabulary, images)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let raw = RawDataset {
            vocabulary: RawVocabulary {
                objects: self.vocabulary.objects.clone(),
                scenes: self.vocabulary.scenes.clone(),
            },
            images: self.images.iter().map(RawImage::from_record).collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|r| r.id == id)
    }

    /// Checks every record invariant.
    pub fn validate(&self) -> Result<()> {
        let vocab = &self.vocabulary;
        let mut ids = HashSet::new();
        for img in &self.images {
            let fail = |field: &str, msg: String| Error::validation(&img.id, field, msg);
            if img.id.is_empty() {
                return Err(fail("id", "empty image id".into()));
            }
            if !ids.insert(img.id.as_str()) {
                return Err(fail("id", "duplicate image id".into()));
            }
            if img.width == 0 || img.height == 0 {
                return Err(fail("width/height", "image dimensions must be positive".into()));
            }
            let mut seen = HashSet::new();
            for t in &img.object_tags {
                if vocab.object_index(t).is_none() {
                    return Err(fail("tags", format!("`{t}` is not an object category")));
                }
                if !seen.insert(t.as_str()) {
                    return Err(fail("tags", format!("duplicate tag `{t}`")));
                }
            }
            if let Some(s) = &img.scene_tag {
                if vocab.scene_index(s).is_none() {
                    return Err(fail("scene", format!("`{s}` is not a scene category")));
                }
            }
            for inst in &img.instances {
                if !seen.contains(inst.category.as_str()) {
                    return Err(fail(
                        "instances",
                        format!("instance category `{}` is not among the image tags", inst.category),
                    ));
                }
                if !inst.bbox.is_valid_in(img.width, img.height) {
                    let b = inst.bbox;
                    return Err(fail(
                        "instances.bbox",
                        format!(
                            "box [{}, {}, {}, {}] invalid for a {}x{} image",
                            b.x_min, b.y_min, b.x_max, b.y_max, img.width, img.height
                        ),
                    ));
                }
            }
            for (k, s) in img.sentences.iter().enumerate() {
                if s.tree.tokens() != s.tokens.iter().map(String::as_str).collect::<Vec<_>>() {
                    return Err(fail(
                        "sentences",
                        format!("sentence {k}: tree leaves do not match tokens"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fails if any record points past the end of a feature matrix.
    pub fn check_feature_rows(&self, rows: usize) -> Result<()> {
        match self.images.iter().find(|r| r.feature_row >= rows) {
            Some(r) => Err(Error::Index(format!(
                "image `{}` has feature_row {} but the matrix has {rows} rows",
                r.id, r.feature_row
            ))),
            None => Ok(()),
        }
    }
}

/// Reads and validates a dataset JSON file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_json_str(&fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    vocabulary: RawVocabulary,
    images: Vec<RawImage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVocabulary {
    objects: Vec<String>,
    #[serde(default)]
    scenes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: String,
    width: u32,
    height: u32,
    tags: Vec<String>,
    #[serde(default)]
    scene: Option<String>,
    #[serde(default)]
    instances: Vec<RawInstance>,
    #[serde(default)]
    sentences: Vec<RawSentence>,
    feature_row: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    category: String,
    bbox: [u32; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSentence {
    tokens: Vec<String>,
    tree: String,
}

impl RawImage {
    fn into_record(self) -> Result<ImageRecord> {
        let id = self.id;
        let sentences = self
            .sentences
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                let tree = parse_bracketed_tree(&s.tree).map_err(|e| {
                    Error::validation(&id, format!("sentences[{k}].tree"), e.to_string())
                })?;
                Ok(SentenceRecord {
                    tokens: s.tokens,
                    tree,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let instances = self
            .instances
            .into_iter()
            .map(|i| ObjectInstance {
                category: i.category,
                bbox: BoundingBox::new(i.bbox[0], i.bbox[1], i.bbox[2], i.bbox[3]),
            })
            .collect();
        Ok(ImageRecord {
            id,
            width: self.width,
            height: self.height,
            object_tags: self.tags,
            scene_tag: self.scene,
            instances,
            sentences,
            feature_row: self.feature_row,
        })
    }

    fn from_record(r: &ImageRecord) -> Self {
        Self {
            id: r.id.clone(),
            width: r.width,
            height: r.height,
            tags: r.object_tags.clone(),
            scene: r.scene_tag.clone(),
            instances: r
                .instances
                .iter()
                .map(|i| RawInstance {
                    category: i.category.clone(),
                    bbox: [i.bbox.x_min, i.bbox.y_min, i.bbox.x_max, i.bbox.y_max],
                })
                .collect(),
            sentences: r
                .sentences
                .iter()
                .map(|s| RawSentence {
                    tokens: s.tokens.clone(),
                    tree: s.tree.to_string(),
                })
                .collect(),
            feature_row: r.feature_row,
        }
    }
}
