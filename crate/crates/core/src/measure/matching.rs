//! Mapping sentence words onto image tags.

use crate::corpus::{SynonymLexicon, Taxonomy};
use crate::error::{Error, Result};

/// Default Wu-Palmer acceptance threshold.
pub const DEFAULT_WUP_THRESHOLD: f64 = 0.9;
/// Scene weight when the scene word sits in a prepositional modifier.
pub const DEFAULT_ALPHA: f64 = 1.0;
/// Scene weight when the scene word is a main constituent.
pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct MatchConfig {
    pub lexicon: SynonymLexicon,
    pub taxonomy: Option<Taxonomy>,
    pub wup_threshold: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            lexicon: SynonymLexicon::new(),
            taxonomy: None,
            wup_threshold: DEFAULT_WUP_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }
}

impl MatchConfig {
    pub fn new(lexicon: SynonymLexicon, taxonomy: Option<Taxonomy>) -> Self {
        Self {
            lexicon,
            taxonomy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wup_threshold > 0.0 && self.wup_threshold <= 1.0) {
            return Err(Error::argument(format!(
                "Wu-Palmer threshold must lie in (0, 1], got {}",
                self.wup_threshold
            )));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::argument("scene weights must be finite and non-negative"));
        }
        if self.alpha > self.beta {
            return Err(Error::argument(format!(
                "modifier weight alpha={} exceeds subject weight beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// `2·depth(lcs) / (depth(a) + depth(b))`, with the root at depth 1.
pub fn wu_palmer_similarity(taxonomy: &Taxonomy, a: &str, b: &str) -> Result<f64> {
    let lcs = taxonomy.lowest_common_ancestor(a, b)?;
    let num = 2.0 * taxonomy.depth(lcs)? as f64;
    Ok(num / (taxonomy.depth(a)? + taxonomy.depth(b)?) as f64)
}

/// Returns the index into `tags` that `token` denotes, if any.
///
/// Precedence: exact match, then lexicon, then the most Wu-Palmer-similar tag
/// at or above the threshold. Ties go to the earliest tag in `tags`, so pass
/// tags in vocabulary order. `token` is expected lowercased.
pub fn match_token_to_tag<S: AsRef<str>>(token: &str, tags: &[S], config: &MatchConfig) -> Option<usize> {
    if let Some(i) = tags.iter().position(|t| t.as_ref().to_lowercase() == token) {
        return Some(i);
    }
    let targets = config.lexicon.targets(token);
    if !targets.is_empty() {
        if let Some(i) = tags.iter().position(|t| targets.iter().any(|c| c == t.as_ref())) {
            return Some(i);
        }
    }
    let taxonomy = config.taxonomy.as_ref()?;
    if !taxonomy.contains(token) {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in tags.iter().enumerate() {
        let Ok(sim) = wu_palmer_similarity(taxonomy, token, t.as_ref()) else {
            continue;
        };
        if sim >= config.wup_threshold && best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    best.map(|(i, _)| i)
}
