use serde::{Deserialize, Serialize};

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "by", "for", "from", "how", "i", "in", "is",
    "it", "of", "on", "or", "that", "the", "this", "to", "was", "what", "when", "where", "who",
    "will", "with", "you", "your",
];

/// Lowercasing tokenizer that splits on every non-alphanumeric run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    #[serde(default)]
    pub remove_stopwords: bool,
}

impl Tokenizer {
    pub fn with_stopwords() -> Self {
        Tokenizer {
            remove_stopwords: true,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| !(self.remove_stopwords && STOPWORDS.binary_search(&t.as_str()).is_ok()))
            .collect()
    }
}

/// Tokenize with the default configuration (no stopword removal).
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}
