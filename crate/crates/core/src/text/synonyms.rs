use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Word -> synonym class ids. Two words are synonyms iff their class sets
/// intersect. An empty table disables the synonym stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    entries: HashMap<String, BTreeSet<String>>,
}

impl SynonymTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn classes(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(word)
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        match (self.entries.get(a), self.entries.get(b)) {
            (Some(x), Some(y)) => x.intersection(y).next().is_some(),
            _ => false,
        }
    }

    /// Parses `word<TAB>id,id,...` lines. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: HashMap<String, BTreeSet<String>> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |why: &str| Error::Parse {
                path: "<synonyms>".into(),
                line: lineno,
                column: 1,
                message: why.to_string(),
            };
            let (word, ids) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `word<TAB>class-ids`"))?;
            let word = word.trim();
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(malformed("word must be a single non-empty token"));
            }
            if word.chars().any(char::is_uppercase) {
                return Err(malformed("word must be lowercase"));
            }
            let classes: BTreeSet<String> = ids
                .split(',')
                .map(|s| s.trim().to_string())
                .collect();
            if classes.iter().any(String::is_empty) {
                return Err(malformed("empty class id"));
            }
            entries.entry(word.to_string()).or_default().extend(classes);
        }
        Ok(SynonymTable { entries })
    }
}

pub fn load_synonym_table(path: impl AsRef<Path>) -> Result<SynonymTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SynonymTable::parse(&text).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_class_lists() {
        let t = SynonymTable::parse("dog\t100,200\ncanine\t200\nbat\t7\n").unwrap();
        let dog: Vec<_> = t.classes("dog").unwrap().iter().cloned().collect();
        assert_eq!(dog, ["100", "200"]);
        assert!(t.are_synonyms("dog", "canine"));
        assert!(!t.are_synonyms("dog", "bat"));
        assert!(!t.are_synonyms("dog", "cat"));
    }

    #[test]
    fn empty_file_gives_empty_table() {
        assert!(SynonymTable::parse("").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = SynonymTable::parse("dog\t1\ncat 2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        assert!(SynonymTable::parse("dog\t1,,2").is_err());
        assert!(SynonymTable::parse("Dog\t1").is_err());
    }
}
