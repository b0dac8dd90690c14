//! Structured tag-importance predictor.
//!
//! Every node carries a level (11 importance levels, or 2 in binary mode).
//! The energy of a labeling is linear in the weights through Kronecker lifts:
//! node features are tensored with a one-hot level indicator and pair
//! features with a one-hot indicator of the level difference. Lower energy is
//! better, and `w · psi(y) = -energy(y)`.

mod inference;
mod qp;
mod ridge;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use inference::{infer, loss_augmented_infer, Inference, InferenceConfig, DEFAULT_CAP, ICM_RESTARTS};
pub use qp::{solve_working_set_qp, Constraint, QpSolution, WorkingSetQp};
pub use ridge::{train_ridge, RidgeRegressor};
pub use train::{train_ssvm, TrainConfig, TrainReport};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::features::{InstanceShape, MrfInstance};
use crate::io::{BinReader, BinWriter};
use crate::measure::{quantize_level, ImportanceVector};

pub const MODEL_MAGIC: &[u8; 8] = b"TGRKSSVM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Continuous,
    Binary,
}

impl Mode {
    /// Number of node levels `L`.
    pub fn node_levels(self) -> usize {
        match self {
            Mode::Continuous => 11,
            Mode::Binary => 2,
        }
    }

    /// Number of level differences `M = 2L - 1`.
    pub fn diff_levels(self) -> usize {
        2 * self.node_levels() - 1
    }

    pub fn value(self, level: u8) -> f64 {
        match self {
            Mode::Continuous => f64::from(level) / 10.0,
            Mode::Binary => f64::from(level),
        }
    }

    /// Level of an on-grid value.
    pub fn level_of(self, y: f64) -> Result<u8> {
        let top = (self.node_levels() - 1) as f64;
        let scaled = match self {
            Mode::Continuous => y * 10.0,
            Mode::Binary => y,
        };
        let k = scaled.round();
        if !(k >= 0.0 && k <= top && (scaled - k).abs() <= 1e-9) {
            return Err(Error::argument(format!("{y} is not a {self:?} importance level")));
        }
        Ok(k as u8)
    }

    fn code(self) -> u8 {
        match self {
            Mode::Continuous => 0,
            Mode::Binary => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Mode::Continuous),
            1 => Some(Mode::Binary),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Continuous => "continuous",
            Mode::Binary => "binary",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Mode::Continuous),
            "binary" => Ok(Mode::Binary),
            _ => Err(Error::argument(format!("unknown mode `{s}` (continuous|binary)"))),
        }
    }
}

/// One-hot level indicator of `y`.
pub fn delta_node(y: f64, mode: Mode) -> Result<Vec<f64>> {
    let mut d = vec![0.0; mode.node_levels()];
    d[mode.level_of(y)? as usize] = 1.0;
    Ok(d)
}

/// One-hot indicator of `y_i - y_j`, ordered from the most negative difference.
pub fn delta_edge(y_i: f64, y_j: f64, mode: Mode) -> Result<Vec<f64>> {
    let mut d = vec![0.0; mode.diff_levels()];
    d[diff_index(mode.level_of(y_i)?, mode.level_of(y_j)?, mode)] = 1.0;
    Ok(d)
}

#[inline]
pub(crate) fn diff_index(l_i: u8, l_j: u8, mode: Mode) -> usize {
    (l_i as usize + mode.node_levels() - 1) - l_j as usize
}

/// Offsets of the four weight blocks `[w_Vo, w_Eo, w_vs, w_Eos]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightLayout {
    pub mode: Mode,
    pub shape: InstanceShape,
}

impl WeightLayout {
    pub fn new(mode: Mode, shape: InstanceShape) -> Self {
        Self { mode, shape }
    }

    pub fn object_node_len(&self) -> usize {
        self.shape.object_feature_dim() * self.mode.node_levels()
    }

    pub fn object_edge_len(&self) -> usize {
        2 * self.shape.object_pairs() * self.mode.diff_levels()
    }

    pub fn scene_node_len(&self) -> usize {
        self.shape.scene_feature_dim() * self.mode.node_levels()
    }

    pub fn scene_edge_len(&self) -> usize {
        self.shape.object_scene_pairs() * self.mode.diff_levels()
    }

    pub fn object_edge_offset(&self) -> usize {
        self.object_node_len()
    }

    pub fn scene_node_offset(&self) -> usize {
        self.object_edge_offset() + self.object_edge_len()
    }

    pub fn scene_edge_offset(&self) -> usize {
        self.scene_node_offset() + self.scene_node_len()
    }

    pub fn dim(&self) -> usize {
        self.scene_edge_offset() + self.scene_edge_len()
    }

    fn check(&self, inst: &MrfInstance) -> Result<()> {
        if inst.shape != self.shape {
            return Err(Error::argument(format!(
                "instance `{}` has shape {:?}, weights expect {:?}",
                inst.id, inst.shape, self.shape
            )));
        }
        Ok(())
    }

    /// Visits every nonzero `(weight index, feature value)` of the lifted
    /// features of `labels` (the stacked vector whose negation is `psi`).
    pub(crate) fn for_each_lifted(&self, inst: &MrfInstance, labels: &[u8], mut f: impl FnMut(usize, f64)) {
        let (nl, ml) = (self.mode.node_levels(), self.mode.diff_levels());
        for (node, &l) in inst.objects.iter().zip(labels) {
            for (k, &x) in node.features.iter().enumerate() {
                if x != 0.0 {
                    f(k * nl + l as usize, x);
                }
            }
        }
        let eo = self.object_edge_offset();
        let p = self.shape.object_pairs();
        for e in &inst.object_edges {
            let m = diff_index(labels[e.i], labels[e.j], self.mode);
            if e.size_diff != 0.0 {
                f(eo + e.pair * ml + m, e.size_diff);
            }
            if e.distance_diff != 0.0 {
                f(eo + (p + e.pair) * ml + m, e.distance_diff);
            }
        }
        if let Some(scene) = &inst.scene {
            let ls = labels[inst.objects.len()];
            let vs = self.scene_node_offset();
            for (k, &x) in scene.features.iter().enumerate() {
                if x != 0.0 {
                    f(vs + k * nl + ls as usize, x);
                }
            }
            let es = self.scene_edge_offset();
            for e in &inst.scene_edges {
                if e.size != 0.0 {
                    f(es + e.pair * ml + diff_index(labels[e.i], ls, self.mode), e.size);
                }
            }
        }
    }

    fn check_labels(&self, inst: &MrfInstance, labels: &[u8]) -> Result<()> {
        self.check(inst)?;
        if labels.len() != inst.node_count() {
            return Err(Error::argument(format!(
                "{} labels for {} nodes of `{}`",
                labels.len(),
                inst.node_count(),
                inst.id
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= self.mode.node_levels()) {
            return Err(Error::argument(format!("level {l} outside the {:?} level set", self.mode)));
        }
        Ok(())
    }
}

/// Weights together with the layout that gives them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub layout: WeightLayout,
    pub values: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(layout: WeightLayout) -> Self {
        Self {
            values: vec![0.0; layout.dim()],
            layout,
        }
    }

    pub fn from_values(layout: WeightLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::argument(format!(
                "{} weights for a layout of dimension {}",
                values.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// Energy of `labels` (level indices, objects then scene).
pub fn energy(inst: &MrfInstance, labels: &[u8], w: &WeightVector) -> Result<f64> {
    w.layout.check_labels(inst, labels)?;
    let mut e = 0.0;
    w.layout.for_each_lifted(inst, labels, |i, x| e += w.values[i] * x);
    Ok(e)
}

/// Joint feature map; `w · psi(y) = -energy(y)` for every `w`.
pub fn psi(inst: &MrfInstance, labels: &[u8], layout: &WeightLayout) -> Result<Vec<f64>> {
    layout.check_labels(inst, labels)?;
    let mut out = vec![0.0; layout.dim()];
    layout.for_each_lifted(inst, labels, |i, x| out[i] -= x);
    Ok(out)
}

/// Mean absolute difference between two importance vectors.
pub fn loss_mad(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::argument(format!(
            "MAD of vectors of length {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Ok(0.0);
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

/// MAD between two labelings, measured on level values.
pub fn label_loss(a: &[u8], b: &[u8], mode: Mode) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (mode.value(x) - mode.value(y)).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// Training labels for `inst` from an importance vector: quantized levels,
/// or `important iff importance > 0` in binary mode.
pub fn labels_from_importance(inst: &MrfInstance, vocab: &Vocabulary, imp: &ImportanceVector, mode: Mode) -> Vec<u8> {
    inst.tag_names(vocab)
        .iter()
        .map(|t| {
            let v = imp.value(t);
            match mode {
                Mode::Continuous => quantize_level(v),
                Mode::Binary => u8::from(v > 0.0),
            }
        })
        .collect()
}

/// Continuous levels collapsed to binary (`level > 0`).
pub fn binarize_levels(levels: &[u8]) -> Vec<u8> {
    levels.iter().map(|&l| u8::from(l > 0)).collect()
}

/// Importance vector of a labeling. In binary mode the important tags share
/// the unit mass equally.
pub fn labels_to_importance(inst: &MrfInstance, vocab: &Vocabulary, labels: &[u8], mode: Mode) -> ImportanceVector {
    let names = inst.tag_names(vocab);
    let values = match mode {
        Mode::Continuous => names.into_iter().zip(labels).map(|(t, &l)| (t, mode.value(l))).collect(),
        Mode::Binary => {
            let n = labels.iter().filter(|&&l| l == 1).count();
            names
                .into_iter()
                .zip(labels)
                .map(|(t, &l)| (t, if l == 1 { 1.0 / n as f64 } else { 0.0 }))
                .collect()
        }
    };
    ImportanceVector::new(values).expect("level values lie in [0, 1]")
}

/// Fraction of agreeing binary decisions.
pub fn binary_accuracy(preds: &[bool], truths: &[bool]) -> Result<f64> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::argument(format!(
            "accuracy over {} predictions and {} truths",
            preds.len(),
            truths.len()
        )));
    }
    Ok(preds.iter().zip(truths).filter(|(a, b)| a == b).count() as f64 / preds.len() as f64)
}

/// SHA-256 of the ordered category lists.
pub fn vocabulary_hash(vocab: &Vocabulary) -> [u8; 32] {
    let mut h = Sha256::new();
    for (kind, list) in [("objects", vocab.objects()), ("scenes", vocab.scenes())] {
        h.update(kind.as_bytes());
        for c in list {
            h.update([0u8]);
            h.update(c.as_bytes());
        }
        h.update([1u8]);
    }
    h.finalize().into()
}

/// Trained structured model plus the settings it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct SsvmModel {
    pub weights: WeightVector,
    pub config: TrainConfig,
    pub vocabulary_hash: [u8; 32],
}

impl SsvmModel {
    pub fn mode(&self) -> Mode {
        self.weights.layout.mode
    }

    pub fn predict(&self, inst: &MrfInstance) -> Result<Inference> {
        infer(inst, &self.weights, &self.config.inference())
    }

    pub fn predict_importance(&self, inst: &MrfInstance, vocab: &Vocabulary) -> Result<ImportanceVector> {
        if vocabulary_hash(vocab) != self.vocabulary_hash {
            return Err(Error::Data("model was trained on a different vocabulary".into()));
        }
        let r = self.predict(inst)?;
        Ok(labels_to_importance(inst, vocab, &r.labels, self.mode()))
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BinWriter::new(writer);
        let layout = &self.weights.layout;
        w.raw(MODEL_MAGIC)?;
        w.u32(MODEL_VERSION)?;
        w.u8(layout.mode.code())?;
        w.raw(&self.vocabulary_hash)?;
        w.usize(layout.shape.n_objects)?;
        w.usize(layout.shape.n_scenes)?;
        w.usize(layout.shape.scene_dim)?;
        for len in [
            layout.object_node_len(),
            layout.object_edge_len(),
            layout.scene_node_len(),
            layout.scene_edge_len(),
        ] {
            w.usize(len)?;
        }
        w.f64(self.config.c)?;
        w.f64(self.config.epsilon)?;
        w.usize(self.config.max_iterations)?;
        w.usize(self.config.cap)?;
        w.u64(self.config.seed)?;
        w.f64_slice(&self.weights.values)?;
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = BinReader::new(reader);
        r.magic(MODEL_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != MODEL_VERSION {
            return Err(Error::format(at, format!("unsupported model version {version}")));
        }
        let at = r.offset();
        let mode = Mode::from_code(r.u8("mode")?).ok_or_else(|| Error::format(at, "unknown mode code"))?;
        let vocabulary_hash = r.bytes::<32>("vocabulary hash")?;
        let shape = InstanceShape {
            n_objects: r.usize("object count")?,
            n_scenes: r.usize("scene count")?,
            scene_dim: r.usize("scene dimension")?,
        };
        let layout = WeightLayout::new(mode, shape);
        let at = r.offset();
        let blocks = [
            r.usize("block length")?,
            r.usize("block length")?,
            r.usize("block length")?,
            r.usize("block length")?,
        ];
        let expected = [
            layout.object_node_len(),
            layout.object_edge_len(),
            layout.scene_node_len(),
            layout.scene_edge_len(),
        ];
        if blocks != expected {
            return Err(Error::format(at, format!("block lengths {blocks:?} disagree with {expected:?}")));
        }
        let config = TrainConfig {
            c: r.finite_f64("C")?,
            epsilon: r.finite_f64("epsilon")?,
            max_iterations: r.usize("iteration budget")?,
            mode,
            cap: r.usize("inference cap")?,
            seed: r.u64("seed")?,
        };
        let values = r.f64_vec(layout.dim(), "weights")?;
        r.finish()?;
        Ok(Self {
            weights: WeightVector { layout, values },
            config,
            vocabulary_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
