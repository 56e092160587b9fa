//! Backtick tokens: column names, variables and keywords the model wraps in
//! backticks so the client can render them as distinct editable elements.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "text", rename_all = "lowercase")]
pub enum Segment {
    Literal(String),
    Token(String),
}

/// Text split into literal runs and backtick tokens.
///
/// Adjacent literals are always merged and literals are never empty, so two
/// texts that serialize to the same string tokenize to equal values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenizedText {
    pub segments: Vec<Segment>,
}

impl TokenizedText {
    pub fn parse(text: &str) -> Self {
        tokenize_backticks(text)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Token(t) => Some(t.as_str()),
            Segment::Literal(_) => None,
        })
    }

    pub fn is_blank(&self) -> bool {
        self.to_string().trim().is_empty()
    }
}

impl fmt::Display for TokenizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Literal(t) => f.write_str(t)?,
                Segment::Token(t) => write!(f, "`{t}`")?,
            }
        }
        Ok(())
    }
}

impl From<&str> for TokenizedText {
    fn from(s: &str) -> Self {
        tokenize_backticks(s)
    }
}

/// Splits `text` into literals and tokens. Backticks pair left to right; a
/// final unpaired backtick stays in the literal text.
pub fn tokenize_backticks(text: &str) -> TokenizedText {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('`') {
        let after = &rest[open + 1..];
        match after.find('`') {
            Some(close) => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Token(after[..close].to_string()));
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    TokenizedText { segments }
}

/// Byte ranges of `text` that lie inside a backtick pair (backticks included).
pub(crate) fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut offset = 0;
    let mut rest = text;
    while let Some(open) = rest.find('`') {
        let after = &rest[open + 1..];
        match after.find('`') {
            Some(close) => {
                let start = offset + open;
                let end = start + 1 + close + 1;
                spans.push((start, end));
                offset = end;
                rest = &text[end..];
            }
            None => break,
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(s: &str) -> Segment {
        Segment::Literal(s.into())
    }
    fn tok(s: &str) -> Segment {
        Segment::Token(s.into())
    }

    #[test]
    fn examples() {
        assert_eq!(
            tokenize_backticks("clean `Rating` column").segments,
            vec![lit("clean "), tok("Rating"), lit(" column")]
        );
        assert_eq!(tokenize_backticks("no tokens").segments, vec![lit("no tokens")]);
        assert_eq!(tokenize_backticks("odd ` tick").segments, vec![lit("odd ` tick")]);
    }

    #[test]
    fn adjacent_and_empty_tokens() {
        assert_eq!(tokenize_backticks("`a``b`").segments, vec![tok("a"), tok("b")]);
        assert_eq!(tokenize_backticks("``").segments, vec![tok("")]);
        assert_eq!(
            tokenize_backticks("`a` and `b").segments,
            vec![tok("a"), lit(" and `b")]
        );
        assert!(tokenize_backticks("").segments.is_empty());
    }

    #[test]
    fn serialization_round_trips() {
        for s in ["clean `Rating` column", "odd ` tick", "`x`", "a `b` c `d` e `", "``"] {
            let t = tokenize_backticks(s);
            assert_eq!(t.to_string(), s);
            assert_eq!(tokenize_backticks(&t.to_string()), t);
        }
    }

    #[test]
    fn spans_match_tokens() {
        let s = "a `b - c` d ` e";
        assert_eq!(token_spans(s), vec![(2, 9)]);
    }
}
