//! Stopword membership for the function-word branch of token similarity.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

const BUILTIN: &str = include_str!("../data/stopwords.txt");

#[derive(Clone, Debug, Default)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// Parses the list format: UTF-8, one word per line, `#` starts a comment.
    pub fn parse(source: &str) -> Self {
        let words = source
            .lines()
            .map(|line| match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            })
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The shipped English list.
    pub fn english() -> &'static StopwordList {
        static LIST: OnceLock<StopwordList> = OnceLock::new();
        LIST.get_or_init(|| StopwordList::parse(BUILTIN))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, surface: &str) -> bool {
        let key = normalize(surface);
        !key.is_empty() && self.words.contains(&key)
    }
}

/// Trims leading/trailing punctuation and case-folds.
pub fn normalize(surface: &str) -> String {
    surface.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn is_stopword(surface: &str) -> bool {
    StopwordList::english().contains(surface)
}
