use crate::error::{Error, Result};

/// Splits a rendered observation into sentences without their trailing period.
pub(crate) fn sentences(text: &str) -> Vec<&str> {
    text.split(". ")
        .map(|s| s.trim().trim_end_matches('.'))
        .filter(|s| !s.is_empty())
        .collect()
}

pub(crate) fn join_sentences(parts: &[String]) -> String {
    parts.iter().map(|s| format!("{s}.")).collect::<Vec<_>>().join(" ")
}

pub(crate) fn parse_index(word: &str, context: &str) -> Result<usize> {
    word.parse::<usize>()
        .map_err(|_| Error::Parse(format!("expected a number in `{context}`, found `{word}`")))
}

pub(crate) fn unexpected(sentence: &str) -> Error {
    Error::Parse(format!("unrecognized sentence `{sentence}`"))
}
