//! Concept hierarchy used for Wu-Palmer matching, and the synonym lexicon.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::dataset::Vocabulary;
use crate::error::{Error, Result};

/// Rooted concept tree. The root has depth 1.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    root: usize,
}

impl Taxonomy {
    /// Builds the tree from `(child, parent)` edges.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let mut parent_of: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (child, parent) in edges {
            let (child, parent) = (child.as_ref(), parent.as_ref());
            if child.is_empty() || parent.is_empty() {
                return Err(Error::argument("empty concept name in taxonomy"));
            }
            if child == parent {
                return Err(Error::argument(format!("`{child}` is its own parent")));
            }
            let c = intern(child, &mut names);
            let p = intern(parent, &mut names);
            parent_of.push((c, p));
        }
        let mut parent = vec![None; names.len()];
        for (c, p) in parent_of {
            if parent[c].is_some_and(|old| old != p) {
                return Err(Error::argument(format!("`{}` has more than one parent", names[c])));
            }
            parent[c] = Some(p);
        }
        let roots: Vec<usize> = (0..names.len()).filter(|&i| parent[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::argument("taxonomy has no root (cycle)")),
            _ => {
                return Err(Error::argument(format!(
                    "taxonomy has {} roots: {}",
                    roots.len(),
                    roots.iter().map(|&r| names[r].as_str()).collect::<Vec<_>>().join(", ")
                )))
            }
        };

        // Depth by walking to the root; a walk longer than the node count is a cycle.
        let mut depth = vec![0usize; names.len()];
        depth[root] = 1;
        for start in 0..names.len() {
            let mut chain = Vec::new();
            let mut cur = start;
            while depth[cur] == 0 {
                chain.push(cur);
                if chain.len() > names.len() {
                    return Err(Error::argument(format!(
                        "cycle through `{}` in taxonomy",
                        names[start]
                    )));
                }
                cur = parent[cur].expect("only the root lacks a parent");
            }
            let mut d = depth[cur];
            for &n in chain.iter().rev() {
                d += 1;
                depth[n] = d;
            }
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self {
            names,
            index,
            parent,
            depth,
            root,
        })
    }

    /// Parses `child<TAB>parent` lines; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (child, parent) = line
                .split_once('\t')
                .ok_or_else(|| Error::argument(format!("taxonomy line {}: expected child<TAB>parent", n + 1)))?;
            edges.push((child.trim().to_string(), parent.trim().to_string()));
        }
        Self::from_edges(&edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.index.contains_key(concept)
    }

    pub fn root(&self) -> &str {
        &self.names[self.root]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn id(&self, concept: &str) -> Result<usize> {
        self.index.get(concept).copied().ok_or_else(|| Error::Lookup {
            kind: "concept",
            name: concept.to_string(),
        })
    }

    pub fn depth(&self, concept: &str) -> Result<usize> {
        Ok(self.depth[self.id(concept)?])
    }

    /// Deepest common ancestor (a node counts as its own ancestor).
    pub fn lowest_common_ancestor(&self, a: &str, b: &str) -> Result<&str> {
        let (mut x, mut y) = (self.id(a)?, self.id(b)?);
        while self.depth[x] > self.depth[y] {
            x = self.parent[x].expect("non-root");
        }
        while self.depth[y] > self.depth[x] {
            y = self.parent[y].expect("non-root");
        }
        while x != y {
            x = self.parent[x].expect("non-root");
            y = self.parent[y].expect("non-root");
        }
        Ok(&self.names[x])
    }
}

/// Word → candidate tag categories. Words are stored lowercased.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    entries: HashMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, category: &str) {
        let targets = self.entries.entry(word.to_lowercase()).or_default();
        if !targets.iter().any(|c| c == category) {
            targets.push(category.to_string());
        }
    }

    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, S)]) -> Self {
        let mut lex = Self::new();
        for (w, c) in pairs {
            lex.insert(w.as_ref(), c.as_ref());
        }
        lex
    }

    /// Parses `word<TAB>category` lines; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (word, cat) = line
                .split_once('\t')
                .ok_or_else(|| Error::argument(format!("lexicon line {}: expected word<TAB>category", n + 1)))?;
            let (word, cat) = (word.trim(), cat.trim());
            if word.is_empty() || cat.is_empty() {
                return Err(Error::argument(format!("lexicon line {}: empty field", n + 1)));
            }
            lex.insert(word, cat);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Categories the (lowercased) word may denote, in insertion order.
    pub fn targets(&self, word: &str) -> &[String] {
        self.entries.get(word).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rejects entries whose target is not a vocabulary category.
    pub fn validate(&self, vocabulary: &Vocabulary) -> Result<()> {
        let mut words: Vec<_> = self.entries.iter().collect();
        words.sort();
        for (word, cats) in words {
            if let Some(bad) = cats.iter().find(|c| !vocabulary.contains(c)) {
                return Err(Error::Lookup {
                    kind: "lexicon target category",
                    name: format!("{bad} (for word `{word}`)"),
                });
            }
        }
        Ok(())
    }

    /// Serializes back to the `word<TAB>category` format, sorted by word.
    pub fn to_tsv(&self) -> String {
        let mut words: Vec<_> = self.entries.iter().collect();
        words.sort();
        let mut out = String::new();
        for (w, cats) in words {
            for c in cats {
                out.push_str(w);
                out.push('\t');
                out.push_str(c);
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depths_and_lca() {
        let t = Taxonomy::parse("a\troot\nb\ta\nc\ta\n").unwrap();
        assert_eq!(t.root(), "root");
        assert_eq!(t.depth("root").unwrap(), 1);
        assert_eq!(t.depth("b").unwrap(), 3);
        assert_eq!(t.lowest_common_ancestor("b", "c").unwrap(), "a");
        assert_eq!(t.lowest_common_ancestor("b", "root").unwrap(), "root");
        assert!(matches!(t.depth("zz"), Err(Error::Lookup { .. })));
    }

    #[test]
    fn rejects_two_roots_and_cycles() {
        assert!(Taxonomy::parse("a\tr1\nb\tr2\n").is_err());
        assert!(Taxonomy::parse("a\tb\nb\ta\nc\troot\n").is_err());
        assert!(Taxonomy::parse("a\troot\na\tother\nother\troot\n").is_err());
        assert!(Taxonomy::parse("no tab here").is_err());
    }

    #[test]
    fn lexicon_lowercases_and_validates() {
        let lex = SynonymLexicon::parse("Man\tperson\nscooter\tmotorbike\n").unwrap();
        assert_eq!(lex.targets("man"), ["person"]);
        let vocab = Vocabulary::new(vec!["person".into(), "motorbike".into()], vec![]).unwrap();
        lex.validate(&vocab).unwrap();
        let bad = SynonymLexicon::from_pairs(&[("pup", "dog")]);
        assert!(bad.validate(&vocab).is_err());
        assert_eq!(SynonymLexicon::parse(&lex.to_tsv()).unwrap().targets("scooter"), ["motorbike"]);
    }
}
