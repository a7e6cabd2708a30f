use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::conllu::Sentence;

/// Row 0 of the word and character tables is the unknown symbol.
pub const UNKNOWN: usize = 0;

/// Word forms with training counts, characters and dependency labels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    word_index: HashMap<String, usize>,
    chars: Vec<char>,
    char_index: HashMap<char, usize>,
    labels: Vec<String>,
    label_index: HashMap<String, usize>,
}

impl Vocab {
    /// Collect every form, character and label of a training treebank.
    /// Entries are sorted so the vocabulary does not depend on sentence
    /// order.
    pub fn build(treebank: &[Sentence]) -> Self {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut chars = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for s in treebank {
            for t in &s.tokens {
                *counts.entry(t.form.as_str()).or_default() += 1;
                chars.extend(t.form.chars());
                labels.insert(t.deprel.as_str());
            }
        }
        Vocab::from_parts(
            counts.into_iter().map(|(w, c)| (w.to_owned(), c)).collect(),
            chars.into_iter().collect(),
            labels.into_iter().map(str::to_owned).collect(),
        )
    }

    /// Rebuild from explicit entries, which exclude the unknown symbols.
    pub fn from_parts(words: Vec<(String, u64)>, chars: Vec<char>, labels: Vec<String>) -> Self {
        let mut v = Vocab {
            words: vec![String::new()],
            counts: vec![0],
            chars: vec!['\0'],
            ..Vocab::default()
        };
        for (w, c) in words {
            v.word_index.insert(w.clone(), v.words.len());
            v.words.push(w);
            v.counts.push(c);
        }
        for c in chars {
            v.char_index.insert(c, v.chars.len());
            v.chars.push(c);
        }
        for l in labels {
            v.label_index.insert(l.clone(), v.labels.len());
            v.labels.push(l);
        }
        v
    }

    /// Table rows including the unknown symbol.
    pub fn word_rows(&self) -> usize {
        self.words.len()
    }

    pub fn char_rows(&self) -> usize {
        self.chars.len()
    }

    pub fn word(&self, form: &str) -> usize {
        self.word_index.get(form).copied().unwrap_or(UNKNOWN)
    }

    pub fn count(&self, word: usize) -> u64 {
        self.counts[word]
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNKNOWN)
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, name: &str) -> Option<usize> {
        self.label_index.get(name).copied()
    }

    pub fn label_name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Known words with counts, in table order.
    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words[1..].iter().map(String::as_str).zip(self.counts[1..].iter().copied())
    }

    pub fn chars(&self) -> &[char] {
        &self.chars[1..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::tests::I_DID_THIS;
    use crate::conllu::parse_conllu;

    #[test]
    fn build_and_lookup() {
        let tb = parse_conllu(I_DID_THIS, true).unwrap();
        let v = Vocab::build(&tb);
        assert_eq!(v.word_rows(), 4);
        assert_eq!(v.word("unseen"), UNKNOWN);
        assert_eq!(v.count(v.word("did")), 1);
        assert_eq!(v.char_id('@'), UNKNOWN);
        assert_ne!(v.char_id('d'), UNKNOWN);
        assert_eq!(v.labels(), &["nsubj", "obj", "root"]);
        let rebuilt = Vocab::from_parts(
            v.words().map(|(w, c)| (w.to_owned(), c)).collect(),
            v.chars().to_vec(),
            v.labels().to_vec(),
        );
        assert_eq!(rebuilt, v);
    }
}
