//! Image-to-image, tag-to-image and image-to-tag retrieval in the shared
//! subspace, plus the raw-feature baselines.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{ncca_similarity, norm, CcaModel, Modality};
use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub score: f64,
}

/// Database of images with their raw visual rows, optional textual rows and
/// cached visual embeddings.
#[derive(Debug, Clone)]
pub struct RetrievalDb {
    ids: Vec<String>,
    visual: Vec<Vec<f64>>,
    textual: Option<Vec<Vec<f64>>>,
    /// Projected visual rows; `None` when the projection vanishes.
    embeddings: Vec<Option<Vec<f64>>>,
}

impl RetrievalDb {
    pub fn new(model: &CcaModel, ids: Vec<String>, visual: Vec<Vec<f64>>, textual: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let mut db = Self::raw(ids, visual, textual)?;
        db.embeddings = db
            .visual
            .iter()
            .map(|v| {
                let e = model.project(v, Modality::Visual)?;
                Ok((norm(&e) > 0.0).then_some(e))
            })
            .collect::<Result<_>>()?;
        Ok(db)
    }

    /// Database without a subspace, for the baselines.
    pub fn raw(ids: Vec<String>, visual: Vec<Vec<f64>>, textual: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::argument("retrieval database is empty"));
        }
        if ids.len() != visual.len() || textual.as_ref().is_some_and(|t| t.len() != ids.len()) {
            return Err(Error::argument("database ids and feature rows differ in length"));
        }
        Ok(Self {
            ids,
            visual,
            textual,
            embeddings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn textual(&self) -> Result<&[Vec<f64>]> {
        self.textual
            .as_deref()
            .ok_or_else(|| Error::argument("database carries no textual features"))
    }

    fn ranked_by_similarity(&self, query: &[f64]) -> Result<Vec<(usize, f64)>> {
        if self.embeddings.len() != self.ids.len() {
            return Err(Error::argument("database was built without a subspace model"));
        }
        let mut scored: Vec<(usize, f64)> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| {
                // A vanishing projection has no direction; rank it last.
                let s = match e {
                    Some(e) => ncca_similarity(query, e)?,
                    None => -1.0,
                };
                Ok((i, s))
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| desc_then(a.1, b.1, &self.ids[a.0], &self.ids[b.0]));
        Ok(scored)
    }

    fn items(&self, ranked: Vec<(usize, f64)>) -> Vec<ScoredItem> {
        ranked
            .into_iter()
            .map(|(i, score)| ScoredItem {
                id: self.ids[i].clone(),
                score,
            })
            .collect()
    }
}

fn desc_then<T: Ord>(a: f64, b: f64, ka: T, kb: T) -> Ordering {
    b.total_cmp(&a).then(ka.cmp(&kb))
}

fn embed_query(model: &CcaModel, row: &[f64], modality: Modality) -> Result<Vec<f64>> {
    let e = model.project(row, modality)?;
    if norm(&e) == 0.0 {
        return Err(Error::Precondition("query projects to the zero vector".into()));
    }
    Ok(e)
}

/// Database images by descending similarity to a visual query; ties by id.
pub fn retrieve_i2i(model: &CcaModel, query_visual: &[f64], db: &RetrievalDb) -> Result<Vec<ScoredItem>> {
    let q = embed_query(model, query_visual, Modality::Visual)?;
    Ok(db.items(db.ranked_by_similarity(&q)?))
}

/// Database images by descending similarity to a weighted tag vector.
pub fn retrieve_t2i(model: &CcaModel, query_textual: &[f64], db: &RetrievalDb) -> Result<Vec<ScoredItem>> {
    let q = embed_query(model, query_textual, Modality::Textual)?;
    Ok(db.items(db.ranked_by_similarity(&q)?))
}

fn rank_tags(mean: Vec<f64>, tag_names: &[String]) -> Result<Vec<ScoredItem>> {
    if mean.len() != tag_names.len() {
        return Err(Error::argument(format!(
            "{} tag names for {}-dimensional textual features",
            tag_names.len(),
            mean.len()
        )));
    }
    let mut order: Vec<usize> = (0..mean.len()).collect();
    order.sort_by(|&a, &b| desc_then(mean[a], mean[b], a, b));
    Ok(order
        .into_iter()
        .map(|i| ScoredItem {
            id: tag_names[i].clone(),
            score: mean[i],
        })
        .collect())
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for r in rows {
        for (s, x) in sum.iter_mut().zip(r) {
            *s += x;
        }
        count += 1;
    }
    sum.iter_mut().for_each(|s| *s /= count.max(1) as f64);
    sum
}

/// Tags ranked by the mean textual feature of the `n` most similar database
/// images (`n` is clamped to the database size); ties by vocabulary order.
pub fn annotate_i2t(
    model: &CcaModel,
    query_visual: &[f64],
    db: &RetrievalDb,
    n: usize,
    tag_names: &[String],
) -> Result<Vec<ScoredItem>> {
    if n == 0 {
        return Err(Error::argument("neighbour count must be positive"));
    }
    let textual = db.textual()?;
    let q = embed_query(model, query_visual, Modality::Visual)?;
    let ranked = db.ranked_by_similarity(&q)?;
    let mean = mean_rows(ranked.iter().take(n).map(|(i, _)| &textual[*i]), tag_names.len());
    rank_tags(mean, tag_names)
}

fn by_distance(query: &[f64], db: &RetrievalDb) -> Result<Vec<(usize, f64)>> {
    let mut d: Vec<(usize, f64)> = db
        .visual
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.len() != query.len() {
                return Err(Error::argument(format!(
                    "query has {} visual values, database row has {}",
                    query.len(),
                    v.len()
                )));
            }
            let diff: f64 = v.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((i, diff.sqrt()))
        })
        .collect::<Result<_>>()?;
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(db.ids[a.0].cmp(&db.ids[b.0])));
    Ok(d)
}

/// Database images by ascending Euclidean distance of raw visual features.
/// Scores are negated distances.
pub fn baseline_visual_only(query_visual: &[f64], db: &RetrievalDb) -> Result<Vec<ScoredItem>> {
    Ok(db.items(by_distance(query_visual, db)?.into_iter().map(|(i, d)| (i, -d)).collect()))
}

/// Tags ranked by the mean 0/1 tag vector of the `n` nearest database images
/// in raw visual space.
pub fn baseline_tagging(query_visual: &[f64], db: &RetrievalDb, n: usize, tag_names: &[String]) -> Result<Vec<ScoredItem>> {
    if n == 0 {
        return Err(Error::argument("neighbour count must be positive"));
    }
    let textual = db.textual()?;
    let ranked = by_distance(query_visual, db)?;
    let binary: Vec<Vec<f64>> = ranked
        .iter()
        .take(n)
        .map(|(i, _)| textual[*i].iter().map(|x| f64::from(u8::from(*x > 0.0))).collect())
        .collect();
    rank_tags(mean_rows(binary.iter(), tag_names.len()), tag_names)
}

#[cfg(test)]
mod tests {
    use super::super::{fit_cca, CcaConfig};
    use super::*;
    use crate::corpus::{generate_synthetic, FeatureMatrix, MatrixRole, SyntheticConfig};
    use crate::cca::{build_text_features, TextFeatureMode};
    use proptest::prelude::*;

    fn toy() -> (CcaModel, RetrievalDb, Vec<Vec<f64>>) {
        let visual: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let x = i as f64;
                vec![x.sin(), x.cos(), (0.5 * x).sin(), 0.1 * x]
            })
            .collect();
        let textual: Vec<Vec<f64>> = visual.iter().map(|v| vec![v[0] + v[1], v[2] - 0.5 * v[3], v[3]]).collect();
        let vm = FeatureMatrix::from_rows(&visual, MatrixRole::VisualRetrieval).unwrap();
        let tm = FeatureMatrix::from_rows(&textual, MatrixRole::Textual).unwrap();
        let model = fit_cca(&vm, &tm, &CcaConfig::default()).unwrap();
        let ids = (0..12).map(|i| format!("im{i:02}")).collect();
        let db = RetrievalDb::new(&model, ids, visual.clone(), Some(textual)).unwrap();
        (model, db, visual)
    }

    #[test]
    fn query_equal_to_db_image_ranks_first() {
        let (model, db, visual) = toy();
        for (i, v) in visual.iter().enumerate() {
            let r = retrieve_i2i(&model, v, &db).unwrap();
            assert_eq!(r[0].id, format!("im{i:02}"));
            assert!((r[0].score - 1.0).abs() < 1e-9);
            assert!(r.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }

    #[test]
    fn empty_database_is_rejected() {
        assert!(RetrievalDb::raw(vec![], vec![], None).is_err());
    }

    #[test]
    fn shared_tag_is_annotated_first() {
        let ids: Vec<String> = (0..5).map(|i| format!("d{i}")).collect();
        let visual: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let textual: Vec<Vec<f64>> = (0..5).map(|i| vec![f64::from(i % 2), 1.0, f64::from(i == 3)]).collect();
        let names = vec!["a".to_string(), "shared".to_string(), "c".to_string()];
        let tm = FeatureMatrix::from_rows(&textual, MatrixRole::Textual).unwrap();
        let vm = FeatureMatrix::from_rows(&visual, MatrixRole::VisualRetrieval).unwrap();
        let model = fit_cca(&vm, &tm, &CcaConfig::default()).unwrap();
        let db = RetrievalDb::new(&model, ids.clone(), visual.clone(), Some(textual.clone())).unwrap();
        let tags = annotate_i2t(&model, &visual[1], &db, DEFAULT_NEIGHBORS, &names).unwrap();
        assert_eq!(tags[0].id, "shared");
        assert_eq!(tags[0].score, 1.0);
        let base = baseline_tagging(&visual[1], &RetrievalDb::raw(ids, visual.clone(), Some(textual)).unwrap(), 100, &names).unwrap();
        assert_eq!(base[0].id, "shared");
        assert_eq!(base[0].score, 1.0);
    }

    #[test]
    fn visual_baseline() {
        let db = RetrievalDb::raw(vec!["A".into(), "B".into()], vec![vec![0.0, 0.0], vec![5.0, 5.0]], None).unwrap();
        let r = baseline_visual_only(&[1.0, 1.0], &db).unwrap();
        assert_eq!(r.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["A", "B"]);
        let r = baseline_visual_only(&[5.0, 5.0], &db).unwrap();
        assert_eq!(r[0].id, "B");
        assert_eq!(r[0].score, 0.0);
        assert!(baseline_visual_only(&[1.0], &db).is_err());
    }

    #[test]
    fn noise_free_t2i_finds_the_source_image() {
        let mut cfg = SyntheticConfig::sized(120, 6, 2, 24);
        cfg.noise = 0.0;
        let syn = generate_synthetic(&cfg, 5).unwrap();
        let d = &syn.dataset;
        let text = build_text_features(&d.images, &d.vocabulary, Some(&syn.truth), TextFeatureMode::Tcti).unwrap();
        let model = fit_cca(&syn.visual, &text, &CcaConfig { reg: Some(1e-9), ..Default::default() }).unwrap();
        let visual: Vec<Vec<f64>> = d.images.iter().map(|im| syn.visual.row(im.feature_row).to_vec()).collect();
        let ids: Vec<String> = d.images.iter().map(|im| im.id.clone()).collect();
        let db = RetrievalDb::new(&model, ids, visual, None).unwrap();
        for (i, im) in d.images.iter().enumerate().take(30) {
            let r = retrieve_t2i(&model, text.row(i), &db).unwrap();
            // Images sharing the exact importance vector tie at the top.
            let top = r[0].score;
            assert!((top - 1.0).abs() < 1e-6);
            let tied: Vec<&str> = r.iter().take_while(|s| s.score >= top - 1e-6).map(|s| s.id.as_str()).collect();
            assert!(tied.contains(&im.id.as_str()), "{} not among {:?}", im.id, tied);
        }
    }

    proptest! {
        #[test]
        fn i2i_invariant_to_db_rescaling(s in 0.1f64..10.0, q in 0usize..12) {
            let (model, db, visual) = toy();
            let base: Vec<String> = retrieve_i2i(&model, &visual[q], &db).unwrap().into_iter().map(|x| x.id).collect();
            let scaled: Vec<Vec<f64>> = visual.iter().map(|v| v.iter().map(|x| x * s).collect()).collect();
            let vm = FeatureMatrix::from_rows(&scaled, MatrixRole::VisualRetrieval).unwrap();
            let tm = FeatureMatrix::from_rows(&db.textual.clone().unwrap(), MatrixRole::Textual).unwrap();
            let m2 = fit_cca(&vm, &tm, &CcaConfig::default()).unwrap();
            let db2 = RetrievalDb::new(&m2, db.ids.clone(), scaled.clone(), None).unwrap();
            let again: Vec<String> = retrieve_i2i(&m2, &scaled[q], &db2).unwrap().into_iter().map(|x| x.id).collect();
            prop_assert_eq!(base, again);
        }
    }
}
