//! Penn-Treebank style bracketed constituency trees.
//!
//! A leaf is a pre-terminal `(POS token)`; an internal node is
//! `(LABEL child ...)`. The outermost node may carry an empty label, which
//! is how treebank files commonly wrap a sentence: `( (S ...))`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseTree {
    Leaf { label: String, token: String },
    Node { label: String, children: Vec<ParseTree> },
}

impl ParseTree {
    pub fn leaf(label: impl Into<String>, token: impl Into<String>) -> Self {
        ParseTree::Leaf {
            label: label.into(),
            token: token.into(),
        }
    }

    /// Builds an internal node. Panics on an empty child list, which would
    /// violate the tree invariant.
    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        assert!(!children.is_empty(), "internal nodes need at least one child");
        ParseTree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ParseTree::Leaf { label, .. } | ParseTree::Node { label, .. } => label,
        }
    }

    pub fn children(&self) -> &[ParseTree] {
        match self {
            ParseTree::Leaf { .. } => &[],
            ParseTree::Node { children, .. } => children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf { .. })
    }

    /// Leaf tokens, left to right.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ParseTree::Leaf { token, .. } => out.push(token),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_tokens(out);
                }
            }
        }
    }

    /// Root-to-leaf path (inclusive at both ends) for the first leaf, in
    /// left-to-right order, whose token satisfies `pred`.
    pub fn path_to_first_leaf<F>(&self, mut pred: F) -> Option<Vec<&ParseTree>>
    where
        F: FnMut(&str) -> bool,
    {
        let mut path = Vec::new();
        if self.find_path(&mut pred, &mut path) {
            Some(path)
        } else {
            None
        }
    }

    fn find_path<'a, F>(&'a self, pred: &mut F, path: &mut Vec<&'a ParseTree>) -> bool
    where
        F: FnMut(&str) -> bool,
    {
        path.push(self);
        let found = match self {
            ParseTree::Leaf { token, .. } => pred(token),
            ParseTree::Node { children, .. } => children.iter().any(|c| c.find_path(pred, path)),
        };
        if !found {
            path.pop();
        }
        found
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_bracketed_tree(text)
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf { label, token } => write!(f, "({label} {token})"),
            ParseTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parses one bracketed tree. Whitespace between tokens is free-form;
/// anything but whitespace after the closing parenthesis is an error.
pub fn parse_bracketed_tree(text: &str) -> Result<ParseTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let tree = p.tree()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected content after the closing parenthesis"));
    }
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::MalformedTree {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn atom(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if !b.is_ascii_whitespace() && b != b'(' && b != b')') {
            self.pos += 1;
        }
        // Atoms are delimited by ASCII bytes, so slicing stays on char boundaries.
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn tree(&mut self) -> Result<ParseTree> {
        match self.peek() {
            Some(b'(') => self.pos += 1,
            Some(_) => return Err(self.error("expected `(`")),
            None => return Err(self.error("unexpected end of input")),
        }
        self.skip_ws();
        let label = self.atom();
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b')') => Err(self.error("empty node")),
            Some(b'(') => {
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b'(') => children.push(self.tree()?),
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(ParseTree::Node { label, children });
                        }
                        None => return Err(self.error("unexpected end of input")),
                        Some(_) => {
                            return Err(self.error("bare token mixed with child constituents"))
                        }
                    }
                }
            }
            Some(_) => {
                if label.is_empty() {
                    return Err(self.error("leaf without a label"));
                }
                let token = self.atom();
                self.skip_ws();
                match self.peek() {
                    Some(b')') => {
                        self.pos += 1;
                        Ok(ParseTree::Leaf { label, token })
                    }
                    None => Err(self.error("unexpected end of input")),
                    Some(_) => Err(self.error("leaf holds more than one token")),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SURFBOARDS: &str =
        "(S (NP (NNS Surfboards)) (VP (VBP sit) (PP (IN on) (NP (DT the) (NN sand)))))";

    #[test]
    fn noun_phrase_has_two_leaves() {
        let t = parse_bracketed_tree("(NP (DT a) (NN beach))").unwrap();
        assert_eq!(t.label(), "NP");
        assert_eq!(t.children().len(), 2);
        assert!(t.children().iter().all(ParseTree::is_leaf));
        assert_eq!(t.tokens(), vec!["a", "beach"]);
    }

    #[test]
    fn path_to_sand_goes_through_pp() {
        let t = parse_bracketed_tree(SURFBOARDS).unwrap();
        assert_eq!(t.label(), "S");
        let path = t.path_to_first_leaf(|w| w == "sand").unwrap();
        let labels: Vec<_> = path.iter().map(|n| n.label()).collect();
        assert_eq!(labels, vec!["S", "VP", "PP", "NP", "NN"]);
    }

    #[test]
    fn unbalanced_input_reports_offset() {
        match parse_bracketed_tree("((NP") {
            Err(Error::MalformedTree { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_node_is_rejected() {
        assert!(matches!(
            parse_bracketed_tree("(NP ())"),
            Err(Error::MalformedTree { offset: 5, .. })
        ));
        assert!(parse_bracketed_tree("(NN)").is_err());
        assert!(parse_bracketed_tree("").is_err());
    }

    #[test]
    fn stray_closing_paren_is_rejected() {
        assert!(matches!(
            parse_bracketed_tree("(NP (DT a)))"),
            Err(Error::MalformedTree { offset: 11, .. })
        ));
    }

    #[test]
    fn serialization_round_trips_modulo_whitespace() {
        let messy = "( (S\n  (NP (NNS Surfboards))\n\t(VP (VBP sit)))  )";
        let t = parse_bracketed_tree(messy).unwrap();
        assert_eq!(t.to_string(), "( (S (NP (NNS Surfboards)) (VP (VBP sit))))");
        assert_eq!(parse_bracketed_tree(&t.to_string()).unwrap(), t);
        assert_eq!(parse_bracketed_tree(SURFBOARDS).unwrap().to_string(), SURFBOARDS);
    }
}
