//! Canonical correlation between visual and textual features, the normalized
//! CCA similarity and the retrieval tasks built on it.

mod retrieval;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureMatrix, ImageRecord, MatrixRole, Vocabulary};
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};
use crate::measure::ImportanceVector;

pub use retrieval::{
    annotate_i2t, baseline_tagging, baseline_visual_only, retrieve_i2i, retrieve_t2i, RetrievalDb, ScoredItem,
    DEFAULT_NEIGHBORS,
};

pub const CCA_MAGIC: &[u8; 8] = b"TGRKCCA1";
/// Exponent applied to the canonical correlations in the similarity.
pub const DEFAULT_POWER: f64 = 4.0;
pub const MAX_DEFAULT_DIM: usize = 128;
/// Default ridge as a fraction of the mean covariance diagonal.
pub const DEFAULT_REG_SCALE: f64 = 1e-4;

/// Textual feature regime used to fit the subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TextFeatureMode {
    /// Plain 0/1 tag vector.
    Tags,
    /// Predicted binary importance.
    Pbti,
    /// Predicted continuous importance.
    Pcti,
    /// Measured binary importance.
    Tbti,
    /// Measured continuous importance.
    Tcti,
}

impl TextFeatureMode {
    pub const ALL: [TextFeatureMode; 5] = [Self::Tags, Self::Pbti, Self::Pcti, Self::Tbti, Self::Tcti];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tags => "TAGS",
            Self::Pbti => "PBTI",
            Self::Pcti => "PCTI",
            Self::Tbti => "TBTI",
            Self::Tcti => "TCTI",
        }
    }

    pub fn is_predicted(self) -> bool {
        matches!(self, Self::Pbti | Self::Pcti)
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Self::Pbti | Self::Tbti)
    }

    pub fn needs_importance(self) -> bool {
        self != Self::Tags
    }

    fn code(self) -> u8 {
        Self::ALL.iter().position(|m| *m == self).expect("listed") as u8
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for TextFeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TextFeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::argument(format!("unknown textual feature mode `{s}`")))
    }
}

/// Textual feature rows (one per image, over objects then scenes).
///
/// `importance` maps image ids to measured or predicted importance and is
/// required by every mode except [`TextFeatureMode::Tags`].
pub fn build_text_features(
    images: &[ImageRecord],
    vocab: &Vocabulary,
    importance: Option<&BTreeMap<String, ImportanceVector>>,
    mode: TextFeatureMode,
) -> Result<FeatureMatrix> {
    let dim = vocab.tag_count();
    let mut values = vec![0.0; images.len() * dim];
    for (row, image) in values.chunks_mut(dim.max(1)).zip(images) {
        if mode == TextFeatureMode::Tags {
            for tag in image.object_tags.iter().chain(&image.scene_tag) {
                let i = vocab.tag_index(tag).ok_or_else(|| Error::Lookup {
                    kind: "tag",
                    name: tag.clone(),
                })?;
                row[i] = 1.0;
            }
            continue;
        }
        let imp = importance
            .and_then(|m| m.get(&image.id))
            .ok_or_else(|| Error::Data(format!("no {mode} importance for image `{}`", image.id)))?;
        for (tag, v) in imp.iter() {
            let i = vocab.tag_index(tag).ok_or_else(|| Error::Lookup {
                kind: "tag",
                name: tag.to_string(),
            })?;
            row[i] = if mode.is_binary() { f64::from(u8::from(v > 0.0)) } else { v };
        }
    }
    FeatureMatrix::new(images.len(), dim, values, MatrixRole::Textual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Textual,
}

/// Options of [`fit_cca`]; `None` selects the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcaConfig {
    pub dim: Option<usize>,
    pub reg: Option<f64>,
    pub power: f64,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self {
            dim: None,
            reg: None,
            power: DEFAULT_POWER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    /// `D_v × c`.
    pub p_v: DMatrix<f64>,
    /// `D_t × c`.
    pub p_t: DMatrix<f64>,
    /// Canonical correlations, descending.
    pub correlations: Vec<f64>,
    pub power: f64,
    pub mean_v: Vec<f64>,
    pub mean_t: Vec<f64>,
    pub reg_v: f64,
    pub reg_t: f64,
    pub mode: Option<TextFeatureMode>,
}

fn to_matrix(m: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.dim(), m.values())
}

fn center(x: &mut DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    for (j, mean) in means.iter().enumerate() {
        x.column_mut(j).add_scalar_mut(-mean);
    }
    means
}

fn default_reg(cov: &DMatrix<f64>) -> f64 {
    DEFAULT_REG_SCALE * cov.trace() / cov.nrows() as f64
}

/// Fits the projection pair maximizing correlation between the centered
/// views under ridge-regularized whitening constraints.
pub fn fit_cca(visual: &FeatureMatrix, textual: &FeatureMatrix, config: &CcaConfig) -> Result<CcaModel> {
    let n = visual.rows();
    if textual.rows() != n {
        return Err(Error::argument(format!("{n} visual rows but {} textual rows", textual.rows())));
    }
    if n < 2 {
        return Err(Error::argument("CCA needs at least two rows"));
    }
    let (dv, dt) = (visual.dim(), textual.dim());
    if dv == 0 || dt == 0 {
        return Err(Error::argument("CCA needs non-empty feature dimensions"));
    }
    let max_dim = dv.min(dt).min(n - 1);
    let c = config.dim.unwrap_or(max_dim.min(MAX_DEFAULT_DIM));
    if c == 0 || c > max_dim {
        return Err(Error::argument(format!(
            "subspace dimension {c} outside 1..={max_dim} (min of D_v, D_t, N-1)"
        )));
    }
    if let Some(r) = config.reg {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::argument(format!("regularizer must be >= 0, got {r}")));
        }
    }
    if !config.power.is_finite() || config.power < 0.0 {
        return Err(Error::argument(format!("power must be >= 0, got {}", config.power)));
    }

    let mut x = to_matrix(visual);
    let mut y = to_matrix(textual);
    let mean_v = center(&mut x);
    let mean_t = center(&mut y);
    let mut cvv = x.transpose() * &x;
    let mut ctt = y.transpose() * &y;
    let cvt = x.transpose() * &y;
    let reg_v = config.reg.unwrap_or_else(|| default_reg(&cvv));
    let reg_t = config.reg.unwrap_or_else(|| default_reg(&ctt));
    for i in 0..dv {
        cvv[(i, i)] += reg_v;
    }
    for i in 0..dt {
        ctt[(i, i)] += reg_t;
    }
    let singular = |side: &str| {
        Error::Numeric(format!(
            "{side} covariance is singular; use a regularizer > 0"
        ))
    };
    let l = cvv.cholesky().ok_or_else(|| singular("visual"))?.l();
    let m = ctt.cholesky().ok_or_else(|| singular("textual"))?.l();
    // K = L⁻¹ C_vt M⁻ᵀ
    let a = l
        .solve_lower_triangular(&cvt)
        .ok_or_else(|| singular("visual"))?;
    let k = m
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| singular("textual"))?
        .transpose();
    let svd = k.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    order.truncate(c);

    let u_c = DMatrix::from_fn(dv, c, |r, j| u[(r, order[j])]);
    let v_c = DMatrix::from_fn(dt, c, |r, j| v_t[(order[j], r)]);
    let mut p_v = l
        .transpose()
        .solve_upper_triangular(&u_c)
        .ok_or_else(|| singular("visual"))?;
    let mut p_t = m
        .transpose()
        .solve_upper_triangular(&v_c)
        .ok_or_else(|| singular("textual"))?;
    for j in 0..c {
        let col = p_v.column(j);
        let mut best = 0;
        for r in 1..dv {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            p_v.column_mut(j).neg_mut();
            p_t.column_mut(j).neg_mut();
        }
    }
    let correlations = order.iter().map(|&i| svd.singular_values[i].clamp(0.0, 1.0)).collect();
    Ok(CcaModel {
        p_v,
        p_t,
        correlations,
        power: config.power,
        mean_v,
        mean_t,
        reg_v,
        reg_t,
        mode: None,
    })
}

impl CcaModel {
    pub fn dim(&self) -> usize {
        self.correlations.len()
    }

    pub fn visual_dim(&self) -> usize {
        self.p_v.nrows()
    }

    pub fn textual_dim(&self) -> usize {
        self.p_t.nrows()
    }

    /// Centered projection scaled componentwise by `λ_k^t`.
    pub fn project(&self, row: &[f64], modality: Modality) -> Result<Vec<f64>> {
        let (p, mean, name) = match modality {
            Modality::Visual => (&self.p_v, &self.mean_v, "visual"),
            Modality::Textual => (&self.p_t, &self.mean_t, "textual"),
        };
        if row.len() != p.nrows() {
            return Err(Error::argument(format!(
                "{name} row has length {}, model expects {}",
                row.len(),
                p.nrows()
            )));
        }
        let centered = DVector::from_iterator(row.len(), row.iter().zip(mean).map(|(x, m)| x - m));
        let z = p.tr_mul(&centered);
        Ok(z
            .iter()
            .zip(&self.correlations)
            .map(|(z, l)| z * l.powf(self.power))
            .collect())
    }

    /// Maximum deviation of `P_vᵀ(X_cᵀX_c + reg·I)P_v` (or the textual
    /// counterpart) from the identity on the given rows.
    pub fn whitening_residual(&self, rows: &FeatureMatrix, modality: Modality) -> Result<f64> {
        let (p, mean, reg) = match modality {
            Modality::Visual => (&self.p_v, &self.mean_v, self.reg_v),
            Modality::Textual => (&self.p_t, &self.mean_t, self.reg_t),
        };
        if rows.dim() != p.nrows() {
            return Err(Error::argument("dimension mismatch"));
        }
        let mut x = to_matrix(rows);
        for (j, m) in mean.iter().enumerate() {
            x.column_mut(j).add_scalar_mut(-m);
        }
        let mut cov = x.transpose() * x;
        for i in 0..cov.nrows() {
            cov[(i, i)] += reg;
        }
        let g = p.transpose() * cov * p;
        let eye = DMatrix::<f64>::identity(g.nrows(), g.ncols());
        Ok((g - eye).amax())
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BinWriter::new(writer);
        w.raw(CCA_MAGIC)?;
        w.usize(self.visual_dim())?;
        w.usize(self.textual_dim())?;
        w.usize(self.dim())?;
        w.f64(self.power)?;
        w.f64(self.reg_v)?;
        w.f64(self.reg_t)?;
        w.u8(self.mode.map_or(u8::MAX, TextFeatureMode::code))?;
        w.f64_slice(&self.mean_v)?;
        w.f64_slice(&self.mean_t)?;
        w.f64_slice(&self.correlations)?;
        for p in [&self.p_v, &self.p_t] {
            for r in 0..p.nrows() {
                for c in 0..p.ncols() {
                    w.f64(p[(r, c)])?;
                }
            }
        }
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = BinReader::new(reader);
        r.magic(CCA_MAGIC)?;
        let dv = r.usize("visual dimension")?;
        let dt = r.usize("textual dimension")?;
        let at = r.offset();
        let c = r.usize("subspace dimension")?;
        if c > dv.min(dt) {
            return Err(Error::format(at, format!("subspace dimension {c} exceeds {dv}x{dt}")));
        }
        let power = r.finite_f64("power")?;
        let reg_v = r.finite_f64("visual regularizer")?;
        let reg_t = r.finite_f64("textual regularizer")?;
        let at = r.offset();
        let code = r.u8("mode")?;
        let mode = match code {
            u8::MAX => None,
            c => Some(TextFeatureMode::from_code(c).ok_or_else(|| Error::format(at, format!("unknown mode {c}")))?),
        };
        let mean_v = r.f64_vec(dv, "visual mean")?;
        let mean_t = r.f64_vec(dt, "textual mean")?;
        let correlations = r.f64_vec(c, "correlations")?;
        let p_v = DMatrix::from_row_slice(dv, c, &r.f64_vec(dv * c, "visual projection")?);
        let p_t = DMatrix::from_row_slice(dt, c, &r.f64_vec(dt * c, "textual projection")?);
        r.finish()?;
        Ok(Self {
            p_v,
            p_t,
            correlations,
            power,
            mean_v,
            mean_t,
            reg_v,
            reg_t,
            mode,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Cosine of two scaled projections.
pub fn ncca_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::argument(format!("embeddings of length {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Precondition("similarity is undefined for a zero embedding".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
