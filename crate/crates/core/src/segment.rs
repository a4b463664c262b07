//! Splitting completion text into tokens at a chosen granularity.
//!
//! Every token keeps its verbatim surface plus the whitespace that followed
//! it, so a [`TokenSequence`] always reconstructs the original text exactly.
//! Whitespace before the first token is kept separately in
//! [`TokenSequence::leading`].

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Granularity used to cut a completion into tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentationMode {
    /// Whitespace-delimited words.
    #[default]
    Space,
    /// Runs ending in `.`, `!` or `?` followed by whitespace.
    Sentence,
    /// Runs ending in `,` followed by whitespace, plus sentence boundaries.
    Phrase,
}

impl SegmentationMode {
    pub const ALL: [SegmentationMode; 3] = [Self::Space, Self::Sentence, Self::Phrase];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Space => "space",
            Self::Sentence => "sentence",
            Self::Phrase => "phrase",
        }
    }
}

impl fmt::Display for SegmentationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown segmentation mode `{0}` (expected space, sentence or phrase)")]
pub struct UnknownMode(pub String);

impl FromStr for SegmentationMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "space" => Ok(Self::Space),
            "sentence" => Ok(Self::Sentence),
            "phrase" => Ok(Self::Phrase),
            other => Err(UnknownMode(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    pub trailing_separator: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub generation_id: String,
    /// Whitespace preceding the first token.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub leading: String,
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surface(&self, index: usize) -> &str {
        &self.tokens[index].surface
    }

    /// Text of tokens `start..end` including each token's trailing separator.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for token in &self.tokens[start..end] {
            out.push_str(&token.surface);
            out.push_str(&token.trailing_separator);
        }
        out
    }

    /// Text of tokens `start..end` with internal separators but without the
    /// separator trailing the last token. Used as a node label.
    pub fn span_label(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for (k, token) in self.tokens[start..end].iter().enumerate() {
            if k > 0 {
                out.push_str(&self.tokens[start + k - 1].trailing_separator);
            }
            out.push_str(&token.surface);
        }
        out
    }
}

/// Whether a whitespace run directly after `prev` closes the current token.
fn ends_unit(mode: SegmentationMode, prev: char) -> bool {
    match mode {
        SegmentationMode::Space => true,
        SegmentationMode::Sentence => matches!(prev, '.' | '!' | '?'),
        SegmentationMode::Phrase => matches!(prev, ',' | '.' | '!' | '?'),
    }
}

pub fn segment(text: &str, mode: SegmentationMode) -> TokenSequence {
    segment_with_id(text, mode, "")
}

pub fn segment_with_id(text: &str, mode: SegmentationMode, generation_id: &str) -> TokenSequence {
    let leading_len = text.len() - text.trim_start().len();
    let leading = text[..leading_len].to_string();
    let body = &text[leading_len..];

    let mut tokens: Vec<Token> = Vec::new();
    let mut token_start = 0usize;
    let mut prev: Option<char> = None;
    let mut chars = body.char_indices().peekable();

    while let Some((pos, ch)) = chars.next() {
        if !ch.is_whitespace() {
            prev = Some(ch);
            continue;
        }
        // Whitespace run starting at `pos`.
        let mut run_end = pos + ch.len_utf8();
        while let Some(&(next_pos, next)) = chars.peek() {
            if !next.is_whitespace() {
                break;
            }
            run_end = next_pos + next.len_utf8();
            chars.next();
        }
        let at_end = run_end == body.len();
        let is_boundary = prev.is_some_and(|p| ends_unit(mode, p)) || at_end;
        if is_boundary {
            tokens.push(Token {
                index: tokens.len(),
                surface: body[token_start..pos].to_string(),
                trailing_separator: body[pos..run_end].to_string(),
            });
            token_start = run_end;
        }
        prev = None;
    }
    if token_start < body.len() {
        tokens.push(Token {
            index: tokens.len(),
            surface: body[token_start..].to_string(),
            trailing_separator: String::new(),
        });
    }

    TokenSequence {
        generation_id: generation_id.to_string(),
        leading,
        tokens,
    }
}

pub fn reconstruct(seq: &TokenSequence) -> String {
    let mut out = seq.leading.clone();
    out.push_str(&seq.span_text(0, seq.tokens.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(seq: &TokenSequence) -> Vec<&str> {
        seq.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    fn separators(seq: &TokenSequence) -> Vec<&str> {
        seq.tokens.iter().map(|t| t.trailing_separator.as_str()).collect()
    }

    #[test]
    fn space_mode_splits_on_whitespace() {
        let seq = segment("the cat sat", SegmentationMode::Space);
        assert_eq!(surfaces(&seq), ["the", "cat", "sat"]);
        assert_eq!(separators(&seq), [" ", " ", ""]);
        assert_eq!(seq.tokens.iter().map(|t| t.index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn sentence_mode_splits_after_terminators() {
        let seq = segment("Run! Hide? Now.", SegmentationMode::Sentence);
        assert_eq!(surfaces(&seq), ["Run!", "Hide?", "Now."]);
    }

    #[test]
    fn sentence_mode_does_not_special_case_abbreviations() {
        let seq = segment("Dr. Smith left. Bye", SegmentationMode::Sentence);
        assert_eq!(surfaces(&seq), ["Dr.", "Smith left.", "Bye"]);
    }

    #[test]
    fn sentence_mode_needs_whitespace_after_terminator() {
        let seq = segment("3.14 is pi. ok", SegmentationMode::Sentence);
        assert_eq!(surfaces(&seq), ["3.14 is pi.", "ok"]);
    }

    #[test]
    fn phrase_mode_attaches_commas() {
        let seq = segment("a, b, and c", SegmentationMode::Phrase);
        assert_eq!(surfaces(&seq), ["a,", "b,", "and c"]);
        assert_eq!(separators(&seq), [" ", " ", ""]);
    }

    #[test]
    fn phrase_mode_also_breaks_sentences() {
        let seq = segment("Yes, sure. Then go", SegmentationMode::Phrase);
        assert_eq!(surfaces(&seq), ["Yes,", "sure.", "Then go"]);
    }

    #[test]
    fn consecutive_whitespace_is_one_separator() {
        let seq = segment("x  y", SegmentationMode::Space);
        assert_eq!(surfaces(&seq), ["x", "y"]);
        assert_eq!(separators(&seq), ["  ", ""]);
        assert_eq!(reconstruct(&seq), "x  y");
    }

    #[test]
    fn leading_and_trailing_whitespace_survive() {
        let text = " \n hello world \t";
        for mode in SegmentationMode::ALL {
            let seq = segment(text, mode);
            assert_eq!(seq.leading, " \n ");
            assert_eq!(reconstruct(&seq), text);
            assert!(seq.tokens.iter().all(|t| !t.surface.is_empty()));
        }
    }

    #[test]
    fn empty_and_blank_text() {
        assert!(segment("", SegmentationMode::Space).is_empty());
        assert_eq!(reconstruct(&TokenSequence::default()), "");
        let blank = segment("   ", SegmentationMode::Sentence);
        assert!(blank.is_empty());
        assert_eq!(reconstruct(&blank), "   ");
    }

    #[test]
    fn unicode_whitespace_is_a_separator() {
        let seq = segment("über\u{3000}straße\u{a0}ok", SegmentationMode::Space);
        assert_eq!(surfaces(&seq), ["über", "straße", "ok"]);
    }

    #[test]
    fn span_label_drops_final_separator() {
        let seq = segment("a  b c ", SegmentationMode::Space);
        assert_eq!(seq.span_label(0, 2), "a  b");
        assert_eq!(seq.span_text(0, 2), "a  b ");
        assert_eq!(seq.span_label(2, 3), "c");
    }

    #[test]
    fn mode_parses() {
        assert_eq!("Phrase".parse::<SegmentationMode>().unwrap(), SegmentationMode::Phrase);
        assert!("word".parse::<SegmentationMode>().is_err());
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-zA-Z]{1,6}",
            Just(" ".to_string()),
            Just("  ".to_string()),
            Just("\n".to_string()),
            Just("\u{2003}".to_string()),
            Just(".".to_string()),
            Just(",".to_string()),
            Just("!".to_string()),
            Just("?".to_string()),
            "[é漢字🙂]{1,2}",
        ];
        prop::collection::vec(piece, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn round_trip(text in text_strategy()) {
            for mode in SegmentationMode::ALL {
                let seq = segment(&text, mode);
                prop_assert_eq!(reconstruct(&seq), text.clone());
                for (i, t) in seq.tokens.iter().enumerate() {
                    prop_assert_eq!(t.index, i);
                    prop_assert!(!t.surface.is_empty());
                    prop_assert!(t.trailing_separator.chars().all(char::is_whitespace));
                }
            }
        }

        #[test]
        fn granularity_is_monotone(text in text_strategy()) {
            let space = segment(&text, SegmentationMode::Space).len();
            let phrase = segment(&text, SegmentationMode::Phrase).len();
            let sentence = segment(&text, SegmentationMode::Sentence).len();
            prop_assert!(space >= phrase);
            prop_assert!(phrase >= sentence);
        }
    }
}
