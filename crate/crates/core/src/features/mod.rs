//! Semantic, visual and context features, assembled into MRF instances.
//!
//! Object nodes are ordered by vocabulary index and the scene node, when
//! present, comes last. Pair features are stored sparsely: an object pair
//! contributes one size difference and one centre-distance difference at its
//! pair slot, an object-scene pair contributes the object's total box area.

mod geometry;
mod saliency;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub use geometry::{
    bbox_location_features, object_visual_features, ObjectVisualFeature, AREA_SLOT, CENTER_MEAN_SLOT, VISUAL_DIM,
};
pub use saliency::{
    encode_pgm, parse_pgm, read_pgm, resize, spectral_residual_saliency, write_pgm, GrayImage, SaliencyMap,
    WORKING_SIDE,
};

use crate::corpus::{BoundingBox, FeatureMatrix, ImageRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};
use crate::measure::{quantize_level, ImportanceVector};

pub const INSTANCE_MAGIC: &[u8; 4] = b"TGRI";
pub const INSTANCE_VERSION: u32 = 1;

/// One-hot vector over `categories`.
pub fn semantic_onehot<S: AsRef<str>>(category: &str, categories: &[S]) -> Result<Vec<f64>> {
    let i = categories
        .iter()
        .position(|c| c.as_ref() == category)
        .ok_or_else(|| Error::Lookup {
            kind: "category",
            name: category.to_string(),
        })?;
    let mut v = vec![0.0; categories.len()];
    v[i] = 1.0;
    Ok(v)
}

/// Number of unordered object-category pairs.
pub fn object_pair_count(n_objects: usize) -> usize {
    n_objects * n_objects.saturating_sub(1) / 2
}

/// Slot of the unordered pair `{i, j}` (`i != j`) among `n` categories,
/// enumerated row by row over `i < j`.
pub fn object_pair_index(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(j < n && i != j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Slot of the (object, scene) pair.
pub fn object_scene_pair_index(object: usize, scene: usize, n_scenes: usize) -> usize {
    object * n_scenes + scene
}

fn object_id(vocab: &Vocabulary, tag: &str) -> Result<usize> {
    vocab.object_index(tag).ok_or_else(|| Error::Lookup {
        kind: "object category",
        name: tag.to_string(),
    })
}

fn scene_id(vocab: &Vocabulary, tag: &str) -> Result<usize> {
    vocab.scene_index(tag).ok_or_else(|| Error::Lookup {
        kind: "scene category",
        name: tag.to_string(),
    })
}

/// Dense object-pair context: `[(s_i - s_j) p_ij ‖ (d_i - d_j) p_ij]`, with
/// `i` the tag of smaller vocabulary index.
pub fn object_context_feature(
    tag_i: &str,
    tag_j: &str,
    visual_i: &ObjectVisualFeature,
    visual_j: &ObjectVisualFeature,
    vocab: &Vocabulary,
) -> Result<Vec<f64>> {
    if tag_i == tag_j {
        return Err(Error::argument(format!("context of `{tag_i}` with itself")));
    }
    let (a, b) = (object_id(vocab, tag_i)?, object_id(vocab, tag_j)?);
    let (va, vb) = if a < b { (visual_i, visual_j) } else { (visual_j, visual_i) };
    let n = vocab.objects().len();
    let p = object_pair_count(n);
    let slot = object_pair_index(a, b, n);
    let mut g = vec![0.0; 2 * p];
    g[slot] = va.area() - vb.area();
    g[p + slot] = va.center_distance() - vb.center_distance();
    Ok(g)
}

/// Dense object-scene context: `s_i p_is`.
pub fn object_scene_context_feature(
    tag_i: &str,
    scene: &str,
    visual_i: &ObjectVisualFeature,
    vocab: &Vocabulary,
) -> Result<Vec<f64>> {
    let (o, s) = (object_id(vocab, tag_i)?, scene_id(vocab, scene)?);
    let n_s = vocab.scenes().len();
    let mut g = vec![0.0; vocab.objects().len() * n_s];
    g[object_scene_pair_index(o, s, n_s)] = visual_i.area();
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfNode {
    /// Index into the object or scene category list.
    pub category: usize,
    pub features: Vec<f64>,
}

/// Object-object edge between node positions `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectEdge {
    pub i: usize,
    pub j: usize,
    pub pair: usize,
    pub size_diff: f64,
    pub distance_diff: f64,
}

/// Edge between object node `i` and the scene node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneEdge {
    pub i: usize,
    pub pair: usize,
    pub size: f64,
}

/// Dimensions shared by every instance built over one vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceShape {
    pub n_objects: usize,
    pub n_scenes: usize,
    pub scene_dim: usize,
}

impl InstanceShape {
    pub fn object_feature_dim(&self) -> usize {
        self.n_objects + VISUAL_DIM
    }

    pub fn scene_feature_dim(&self) -> usize {
        self.n_scenes + self.scene_dim
    }

    pub fn object_pairs(&self) -> usize {
        object_pair_count(self.n_objects)
    }

    pub fn object_scene_pairs(&self) -> usize {
        self.n_objects * self.n_scenes
    }
}

/// Per-image structured-prediction graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfInstance {
    pub id: String,
    pub shape: InstanceShape,
    pub objects: Vec<MrfNode>,
    pub scene: Option<MrfNode>,
    pub object_edges: Vec<ObjectEdge>,
    pub scene_edges: Vec<SceneEdge>,
    /// Quantized level per node (objects, then scene) when known.
    pub labels: Option<Vec<u8>>,
}

impl MrfInstance {
    pub fn node_count(&self) -> usize {
        self.objects.len() + usize::from(self.scene.is_some())
    }

    /// Tag names of the nodes in node order.
    pub fn tag_names(&self, vocab: &Vocabulary) -> Vec<String> {
        let mut names: Vec<String> = self.objects.iter().map(|n| vocab.objects()[n.category].clone()).collect();
        if let Some(s) = &self.scene {
            names.push(vocab.scenes()[s.category].clone());
        }
        names
    }

    /// Builds the instance from precomputed node inputs, filling in the
    /// complete object graph and all object-scene edges.
    pub fn assemble(
        id: impl Into<String>,
        shape: InstanceShape,
        objects: Vec<(usize, ObjectVisualFeature)>,
        scene: Option<(usize, Vec<f64>)>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let id = id.into();
        if objects.is_empty() && scene.is_none() {
            return Err(Error::Data(format!("image `{id}` has no tags; instance skipped")));
        }
        let mut objects = objects;
        objects.sort_by_key(|(c, _)| *c);
        if objects.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::argument(format!("image `{id}` repeats an object category")));
        }
        if let Some((c, _)) = objects.iter().find(|(c, _)| *c >= shape.n_objects) {
            return Err(Error::Index(format!("object category {c} in image `{id}`")));
        }
        let mut object_edges = Vec::new();
        for a in 0..objects.len() {
            for b in a + 1..objects.len() {
                let (va, vb) = (&objects[a].1, &objects[b].1);
                object_edges.push(ObjectEdge {
                    i: a,
                    j: b,
                    pair: object_pair_index(objects[a].0, objects[b].0, shape.n_objects),
                    size_diff: va.area() - vb.area(),
                    distance_diff: va.center_distance() - vb.center_distance(),
                });
            }
        }
        let scene_node = match scene {
            Some((c, visual)) => {
                if c >= shape.n_scenes {
                    return Err(Error::Index(format!("scene category {c} in image `{id}`")));
                }
                if visual.len() != shape.scene_dim {
                    return Err(Error::Data(format!(
                        "image `{id}`: scene feature has {} values, expected {}",
                        visual.len(),
                        shape.scene_dim
                    )));
                }
                let mut features = vec![0.0; shape.n_scenes];
                features[c] = 1.0;
                features.extend(visual);
                Some(MrfNode { category: c, features })
            }
            None => None,
        };
        let scene_edges = match &scene_node {
            Some(s) => objects
                .iter()
                .enumerate()
                .map(|(i, (c, v))| SceneEdge {
                    i,
                    pair: object_scene_pair_index(*c, s.category, shape.n_scenes),
                    size: v.area(),
                })
                .collect(),
            None => Vec::new(),
        };
        let objects: Vec<MrfNode> = objects
            .into_iter()
            .map(|(c, v)| {
                let mut features = vec![0.0; shape.n_objects];
                features[c] = 1.0;
                features.extend_from_slice(v.as_slice());
                MrfNode { category: c, features }
            })
            .collect();
        let inst = Self {
            id,
            shape,
            objects,
            scene: scene_node,
            object_edges,
            scene_edges,
            labels,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("instance `{}`: {msg}", self.id)));
        for n in &self.objects {
            if n.features.len() != self.shape.object_feature_dim() {
                return bad(format!("object node has {} features", n.features.len()));
            }
        }
        if let Some(s) = &self.scene {
            if s.features.len() != self.shape.scene_feature_dim() {
                return bad(format!("scene node has {} features", s.features.len()));
            }
        }
        let finite = self
            .objects
            .iter()
            .chain(&self.scene)
            .flat_map(|n| &n.features)
            .copied()
            .chain(self.object_edges.iter().flat_map(|e| [e.size_diff, e.distance_diff]))
            .chain(self.scene_edges.iter().map(|e| e.size))
            .all(f64::is_finite);
        if !finite {
            return bad("non-finite feature value".into());
        }
        if let Some(l) = &self.labels {
            if l.len() != self.node_count() {
                return bad(format!("{} labels for {} nodes", l.len(), self.node_count()));
            }
        }
        Ok(())
    }
}

/// Assembles the instance of one image. `importance`, when given, supplies
/// quantized training labels.
pub fn build_mrf_instance(
    image: &ImageRecord,
    saliency: &SaliencyMap,
    scene_row: Option<&[f64]>,
    scene_dim: usize,
    vocab: &Vocabulary,
    importance: Option<&ImportanceVector>,
) -> Result<MrfInstance> {
    let shape = InstanceShape {
        n_objects: vocab.objects().len(),
        n_scenes: vocab.scenes().len(),
        scene_dim,
    };
    let mut objects = Vec::with_capacity(image.object_tags.len());
    for tag in &image.object_tags {
        let boxes: Vec<BoundingBox> = image.instances_of(tag).map(|i| i.bbox).collect();
        let visual = object_visual_features(&boxes, saliency, image.width, image.height).map_err(|e| match e {
            Error::Precondition(_) => Error::Data(format!("image `{}`: tag `{tag}` has no boxes", image.id)),
            other => other,
        })?;
        objects.push((object_id(vocab, tag)?, visual));
    }
    let scene = match &image.scene_tag {
        Some(s) => {
            let row = scene_row
                .ok_or_else(|| Error::Data(format!("image `{}` has scene `{s}` but no scene feature", image.id)))?;
            Some((scene_id(vocab, s)?, row.to_vec()))
        }
        None => None,
    };
    objects.sort_by_key(|(c, _)| *c);
    let labels = importance.map(|imp| {
        let mut l: Vec<u8> = objects
            .iter()
            .map(|(c, _)| quantize_level(imp.value(&vocab.objects()[*c])))
            .collect();
        if let Some((c, _)) = &scene {
            l.push(quantize_level(imp.value(&vocab.scenes()[*c])));
        }
        l
    });
    MrfInstance::assemble(image.id.clone(), shape, objects, scene, labels)
}

/// Saliency of every image: from its grayscale row when `gray` is given,
/// uniform otherwise.
pub fn image_saliency(image: &ImageRecord, gray: Option<&FeatureMatrix>) -> Result<SaliencyMap> {
    let (w, h) = (image.width as usize, image.height as usize);
    match gray {
        None => Ok(SaliencyMap::uniform(w, h)),
        Some(m) => {
            let row = m.try_row(image.feature_row)?;
            if row.len() != w * h {
                return Err(Error::Data(format!(
                    "image `{}`: grayscale row has {} pixels, expected {w}x{h}",
                    image.id,
                    row.len()
                )));
            }
            spectral_residual_saliency(&GrayImage::new(w, h, row.to_vec())?)
        }
    }
}

/// Instances of a whole dataset, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceArchive {
    pub shape: InstanceShape,
    pub instances: Vec<MrfInstance>,
}

impl InstanceArchive {
    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BinWriter::new(writer);
        w.raw(INSTANCE_MAGIC)?;
        w.u32(INSTANCE_VERSION)?;
        w.usize(self.shape.n_objects)?;
        w.usize(self.shape.n_scenes)?;
        w.usize(self.shape.scene_dim)?;
        w.usize(self.instances.len())?;
        for inst in &self.instances {
            w.string(&inst.id)?;
            w.usize(inst.objects.len())?;
            for n in &inst.objects {
                w.usize(n.category)?;
                w.f64_slice(&n.features)?;
            }
            match &inst.scene {
                Some(s) => {
                    w.u8(1)?;
                    w.usize(s.category)?;
                    w.f64_slice(&s.features)?;
                }
                None => w.u8(0)?,
            }
            w.usize(inst.object_edges.len())?;
            for e in &inst.object_edges {
                w.usize(e.i)?;
                w.usize(e.j)?;
                w.usize(e.pair)?;
                w.f64(e.size_diff)?;
                w.f64(e.distance_diff)?;
            }
            w.usize(inst.scene_edges.len())?;
            for e in &inst.scene_edges {
                w.usize(e.i)?;
                w.usize(e.pair)?;
                w.f64(e.size)?;
            }
            match &inst.labels {
                Some(l) => {
                    w.u8(1)?;
                    w.raw(l)?;
                }
                None => w.u8(0)?,
            }
        }
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = BinReader::new(reader);
        r.magic(INSTANCE_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != INSTANCE_VERSION {
            return Err(Error::format(at, format!("unsupported instance archive version {version}")));
        }
        let shape = InstanceShape {
            n_objects: r.usize("object count")?,
            n_scenes: r.usize("scene count")?,
            scene_dim: r.usize("scene dimension")?,
        };
        let count = r.usize("instance count")?;
        let mut instances = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = r.string("instance id")?;
            let n = r.usize("node count")?;
            let mut objects = Vec::with_capacity(n.min(1 << 12));
            for _ in 0..n {
                let category = r.usize("object category")?;
                let features = r.f64_vec(shape.object_feature_dim(), "object features")?;
                objects.push(MrfNode { category, features });
            }
            let scene = match r.u8("scene flag")? {
                0 => None,
                1 => {
                    let category = r.usize("scene category")?;
                    let features = r.f64_vec(shape.scene_feature_dim(), "scene features")?;
                    Some(MrfNode { category, features })
                }
                f => return Err(Error::format(r.offset() - 1, format!("bad scene flag {f}"))),
            };
            let ne = r.usize("edge count")?;
            let mut object_edges = Vec::with_capacity(ne.min(1 << 12));
            for _ in 0..ne {
                object_edges.push(ObjectEdge {
                    i: r.usize("edge node")?,
                    j: r.usize("edge node")?,
                    pair: r.usize("pair slot")?,
                    size_diff: r.finite_f64("size difference")?,
                    distance_diff: r.finite_f64("distance difference")?,
                });
            }
            let ns = r.usize("scene edge count")?;
            let mut scene_edges = Vec::with_capacity(ns.min(1 << 12));
            for _ in 0..ns {
                scene_edges.push(SceneEdge {
                    i: r.usize("edge node")?,
                    pair: r.usize("pair slot")?,
                    size: r.finite_f64("object size")?,
                });
            }
            let labels = match r.u8("label flag")? {
                0 => None,
                1 => {
                    let nodes = objects.len() + usize::from(scene.is_some());
                    let mut l = Vec::with_capacity(nodes);
                    for _ in 0..nodes {
                        l.push(r.u8("label")?);
                    }
                    Some(l)
                }
                f => return Err(Error::format(r.offset() - 1, format!("bad label flag {f}"))),
            };
            let inst = MrfInstance {
                id,
                shape,
                objects,
                scene,
                object_edges,
                scene_edges,
                labels,
            };
            inst.validate()?;
            instances.push(inst);
        }
        r.finish()?;
        Ok(Self { shape, instances })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
