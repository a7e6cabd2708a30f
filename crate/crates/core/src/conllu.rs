//! CoNLL-U reading, writing and tree validation.
//!
//! Only syntactic words are parsed into [`Token`]s. Multiword token ranges
//! (`3-4`) and empty nodes (`3.1`) are carried as opaque lines and written
//! back at their original position.

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("sentence {sentence}: {source}")]
    Tree {
        sentence: usize,
        #[source]
        source: TreeError,
    },

    #[error("invalid feature string `{0}`")]
    Feature(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Tree-shape violations found by [`Sentence::validate`].
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("token {token} has head {head} outside [0, {len}]")]
    HeadOutOfRange { token: usize, head: usize, len: usize },

    #[error("token {0} is its own head")]
    SelfLoop(usize),

    #[error("no token is attached to the root")]
    NoRoot,

    #[error("multiple root tokens: {0:?}")]
    MultipleRoots(Vec<usize>),

    #[error("cycle through token {0}")]
    Cycle(usize),

    #[error("token {0} has an empty dependency relation")]
    EmptyDeprel(usize),
}

/// Morphological features, kept in UD canonical order (case-insensitive by
/// name). Lookup is exact-match on the name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MorphFeatures {
    entries: Vec<(String, String)>,
}

impl MorphFeatures {
    pub fn new() -> Self {
        MorphFeatures::default()
    }

    pub fn parse(s: &str) -> Result<Self, ConlluError> {
        let mut feats = MorphFeatures::new();
        if s == "_" || s.is_empty() {
            return Ok(feats);
        }

        for unit in s.split('|') {
            let (name, value) = unit
                .split_once('=')
                .ok_or_else(|| ConlluError::Feature(s.to_owned()))?;
            if name.is_empty() || value.is_empty() || feats.get(name).is_some() {
                return Err(ConlluError::Feature(s.to_owned()));
            }
            feats.insert(name, value);
        }

        Ok(feats)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Insert or replace a feature, keeping canonical order.
    pub fn insert(&mut self, name: &str, value: &str) {
        if let Some(entry) = self.entries.iter_mut().find(|(n, _)| n == name) {
            entry.1 = value.to_owned();
            return;
        }
        self.entries.push((name.to_owned(), value.to_owned()));
        self.entries
            .sort_by(|(a, _), (b, _)| a.to_lowercase().cmp(&b.to_lowercase()).then(a.cmp(b)));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }
}

impl fmt::Display for MorphFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return f.write_str("_");
        }
        for (idx, (name, value)) in self.entries.iter().enumerate() {
            if idx > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}={}", name, value)?;
        }
        Ok(())
    }
}

/// Parse a FEATS column value.
pub fn parse_feats(s: &str) -> Result<MorphFeatures, ConlluError> {
    MorphFeatures::parse(s)
}

/// A syntactic word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: MorphFeatures,
    /// Governor index, 0 for the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    /// Token with `_` in every optional column.
    pub fn new(id: usize, form: &str, upos: &str, head: usize, deprel: &str) -> Self {
        Token {
            id,
            form: form.to_owned(),
            lemma: form.to_lowercase(),
            upos: upos.to_owned(),
            xpos: "_".to_owned(),
            feats: MorphFeatures::new(),
            head,
            deprel: deprel.to_owned(),
            deps: "_".to_owned(),
            misc: "_".to_owned(),
        }
    }

    pub fn with_feats(mut self, feats: &str) -> Self {
        self.feats = MorphFeatures::parse(feats).expect("invalid feature string");
        self
    }

    pub fn with_lemma(mut self, lemma: &str) -> Self {
        self.lemma = lemma.to_owned();
        self
    }

    pub fn is_verbal(&self) -> bool {
        self.upos == "VERB" || self.upos == "AUX"
    }
}

/// Universal relation of a (possibly subtyped) label: `aux:pass` -> `aux`.
pub fn base_relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

/// A sentence of syntactic words plus the lines that are not parsed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
    /// Multiword-token and empty-node lines, keyed by the number of
    /// syntactic words that precede them.
    pub passthrough: Vec<(usize, String)>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            comments: Vec::new(),
            tokens,
            passthrough: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token by 1-based id.
    pub fn token(&self, id: usize) -> &Token {
        &self.tokens[id - 1]
    }

    pub fn token_mut(&mut self, id: usize) -> &mut Token {
        &mut self.tokens[id - 1]
    }

    /// Ids of the dependents of `head` in linear order.
    pub fn children(&self, head: usize) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .filter(move |t| t.head == head)
            .map(|t| t.id)
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    /// Check that the heads form a single tree rooted at 0.
    pub fn validate(&self) -> Result<(), TreeError> {
        let n = self.tokens.len();
        let mut roots = Vec::new();
        for tok in &self.tokens {
            if tok.head > n {
                return Err(TreeError::HeadOutOfRange {
                    token: tok.id,
                    head: tok.head,
                    len: n,
                });
            }
            if tok.head == tok.id {
                return Err(TreeError::SelfLoop(tok.id));
            }
            if tok.deprel.is_empty() {
                return Err(TreeError::EmptyDeprel(tok.id));
            }
            if tok.head == 0 {
                roots.push(tok.id);
            }
        }

        if n == 0 {
            return Ok(());
        }
        match roots.len() {
            0 => return Err(TreeError::NoRoot),
            1 => {}
            _ => return Err(TreeError::MultipleRoots(roots)),
        }

        // 0 = unvisited, 1 = on current path, 2 = reaches root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = self.tokens[cur - 1].head;
            }
            if state[cur] == 1 {
                return Err(TreeError::Cycle(cur));
            }
            for node in path {
                state[node] = 2;
            }
        }

        Ok(())
    }
}

pub type Treebank = Vec<Sentence>;

fn format_err(line: usize, message: impl Into<String>) -> ConlluError {
    ConlluError::Format {
        line,
        message: message.into(),
    }
}

fn parse_token_line(line: &str, line_no: usize) -> Result<Token, ConlluError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(format_err(
            line_no,
            format!("expected 10 tab-separated columns, found {}", cols.len()),
        ));
    }

    let id = cols[0]
        .parse::<usize>()
        .map_err(|_| format_err(line_no, format!("invalid token id `{}`", cols[0])))?;
    let head = cols[6]
        .parse::<usize>()
        .map_err(|_| format_err(line_no, format!("non-integer head `{}`", cols[6])))?;
    let feats = MorphFeatures::parse(cols[5])
        .map_err(|_| format_err(line_no, format!("invalid features `{}`", cols[5])))?;

    Ok(Token {
        id,
        form: cols[1].to_owned(),
        lemma: cols[2].to_owned(),
        upos: cols[3].to_owned(),
        xpos: cols[4].to_owned(),
        feats,
        head,
        deprel: cols[7].to_owned(),
        deps: cols[8].to_owned(),
        misc: cols[9].to_owned(),
    })
}

/// Streaming reader over CoNLL-U sentences.
pub struct Reader<R> {
    read: R,
    line_no: usize,
    strict: bool,
    sentence_no: usize,
}

impl<R: BufRead> Reader<R> {
    pub fn new(read: R) -> Self {
        Reader {
            read,
            line_no: 0,
            strict: false,
            sentence_no: 0,
        }
    }

    /// Reject sentences that are not well-formed trees.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn read_sentence(&mut self) -> Result<Option<Sentence>, ConlluError> {
        let mut sentence = Sentence::default();
        let mut started = false;
        let mut buf = String::new();

        loop {
            buf.clear();
            if self.read.read_line(&mut buf)? == 0 {
                break;
            }
            self.line_no += 1;
            let line = buf.trim_end_matches(['\n', '\r']);

            if line.trim().is_empty() {
                if started {
                    break;
                }
                continue;
            }
            started = true;

            if line.starts_with('#') {
                sentence.comments.push(line.to_owned());
                continue;
            }

            let id_col = line.split('\t').next().unwrap_or("");
            if id_col.contains('-') || id_col.contains('.') {
                if line.split('\t').count() != 10 {
                    return Err(format_err(self.line_no, "expected 10 tab-separated columns"));
                }
                sentence
                    .passthrough
                    .push((sentence.tokens.len(), line.to_owned()));
                continue;
            }

            let token = parse_token_line(line, self.line_no)?;
            if token.id != sentence.tokens.len() + 1 {
                return Err(format_err(
                    self.line_no,
                    format!(
                        "token id {} out of sequence, expected {}",
                        token.id,
                        sentence.tokens.len() + 1
                    ),
                ));
            }
            sentence.tokens.push(token);
        }

        if !started {
            return Ok(None);
        }

        self.sentence_no += 1;
        if self.strict {
            sentence.validate().map_err(|source| ConlluError::Tree {
                sentence: self.sentence_no,
                source,
            })?;
        }

        Ok(Some(sentence))
    }
}

impl<R: BufRead> Iterator for Reader<R> {
    type Item = Result<Sentence, ConlluError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_sentence().transpose()
    }
}

/// Parse a whole treebank from text.
pub fn parse_conllu(text: &str, strict: bool) -> Result<Treebank, ConlluError> {
    Reader::new(text.as_bytes()).strict(strict).collect()
}

pub fn read_conllu_file(
    path: impl AsRef<std::path::Path>,
    strict: bool,
) -> Result<Treebank, ConlluError> {
    let file = std::fs::File::open(path)?;
    Reader::new(io::BufReader::new(file)).strict(strict).collect()
}

pub fn write_sentence<W: Write>(write: &mut W, sentence: &Sentence) -> io::Result<()> {
    for comment in &sentence.comments {
        writeln!(write, "{}", comment)?;
    }

    let mut extra = sentence.passthrough.iter().peekable();
    for (idx, tok) in sentence.tokens.iter().enumerate() {
        while let Some((_, line)) = extra.next_if(|(pos, _)| *pos <= idx) {
            writeln!(write, "{}", line)?;
        }
        writeln!(
            write,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            tok.id,
            tok.form,
            tok.lemma,
            tok.upos,
            tok.xpos,
            tok.feats,
            tok.head,
            tok.deprel,
            tok.deps,
            tok.misc
        )?;
    }
    for (_, line) in extra {
        writeln!(write, "{}", line)?;
    }

    writeln!(write)
}

pub fn serialize_conllu(treebank: &[Sentence]) -> String {
    let mut out = Vec::new();
    for sentence in treebank {
        write_sentence(&mut out, sentence).expect("writing to a Vec cannot fail");
    }
    String::from_utf8(out).expect("CoNLL-U fields are UTF-8")
}

pub fn write_conllu_file(path: impl AsRef<std::path::Path>, treebank: &[Sentence]) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    for sentence in treebank {
        write_sentence(&mut w, sentence)?;
    }
    w.flush()
}
