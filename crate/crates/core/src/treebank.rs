//! Extraction of finite main verbs, auxiliary verb constructions and probe
//! task labels, plus the UD to Mel'čuk-style (auxiliary-headed) transform.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::conllu::{base_relation, Sentence, TreeError};

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("sentence {sentence}: {source}")]
    Tree {
        sentence: usize,
        #[source]
        source: TreeError,
    },

    #[error("target {kind} is not defined for the {representation} representation")]
    Usage {
        kind: TargetKind,
        representation: Representation,
    },

    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },

    #[error("treebank is already MS: auxiliaries head their verb chains")]
    AlreadyMs,
}

/// How auxiliary verb constructions are annotated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    /// Main verb heads its auxiliaries.
    Ud,
    /// Outermost auxiliary heads a chain that ends in the main verb.
    Ms,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Ud => "ud",
            Representation::Ms => "ms",
        })
    }
}

impl FromStr for Representation {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ud" => Ok(Representation::Ud),
            "ms" => Ok(Representation::Ms),
            _ => Err(TreebankError::Unknown {
                what: "representation",
                value: s.to_owned(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetKind {
    Fmv,
    Nfmv,
    Maux,
    Punct,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [
        TargetKind::Fmv,
        TargetKind::Nfmv,
        TargetKind::Maux,
        TargetKind::Punct,
    ];
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Fmv => "FMV",
            TargetKind::Nfmv => "NFMV",
            TargetKind::Maux => "MAUX",
            TargetKind::Punct => "PUNCT",
        })
    }
}

impl FromStr for TargetKind {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FMV" => Ok(TargetKind::Fmv),
            "NFMV" => Ok(TargetKind::Nfmv),
            "MAUX" => Ok(TargetKind::Maux),
            "PUNCT" => Ok(TargetKind::Punct),
            _ => Err(TreebankError::Unknown {
                what: "target kind",
                value: s.to_owned(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Transitivity,
    Agreement,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Transitivity, Task::Agreement];

    pub fn code(self) -> &'static str {
        match self {
            Task::Transitivity => "T",
            Task::Agreement => "A",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Task {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t" | "transitivity" => Ok(Task::Transitivity),
            "a" | "agreement" => Ok(Task::Agreement),
            _ => Err(TreebankError::Unknown {
                what: "task",
                value: s.to_owned(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transitivity {
    Transitive,
    Intransitive,
}

impl fmt::Display for Transitivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transitivity::Transitive => "transitive",
            Transitivity::Intransitive => "intransitive",
        })
    }
}

/// Where pre-verbal dependents of a UD main verb go in the MS transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReattachPolicy {
    /// The chain element immediately to the right of the dependent.
    NearestRight,
    /// The outermost auxiliary.
    ChainTop,
}

impl FromStr for ReattachPolicy {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest-right" => Ok(ReattachPolicy::NearestRight),
            "chain-top" => Ok(ReattachPolicy::ChainTop),
            _ => Err(TreebankError::Unknown {
                what: "reattachment policy",
                value: s.to_owned(),
            }),
        }
    }
}

impl fmt::Display for ReattachPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReattachPolicy::NearestRight => "nearest-right",
            ReattachPolicy::ChainTop => "chain-top",
        })
    }
}

/// Auxiliary lemmas for Catalan AnCora, used to discard noisy `aux`
/// relations.
pub const CATALAN_AUX_LEMMAS: &[&str] = &[
    "anar", "deure", "estar", "haver", "poder", "ser", "soler", "voler",
];

#[derive(Clone, Debug)]
pub struct ExtractionOptions {
    /// When set, an `aux` relation only counts if the auxiliary's lemma is
    /// in this set.
    pub aux_lemmas: Option<HashSet<String>>,
    /// Also reject finite verbs that head `aux`/`cop` dependents.
    pub fmv_reject_aux_heads: bool,
    pub reattach: ReattachPolicy,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions {
            aux_lemmas: None,
            fmv_reject_aux_heads: true,
            reattach: ReattachPolicy::NearestRight,
        }
    }
}

impl ExtractionOptions {
    pub fn with_aux_lemmas<I, S>(mut self, lemmas: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.aux_lemmas = Some(lemmas.into_iter().map(Into::into).collect());
        self
    }

    fn lemma_allowed(&self, lemma: &str) -> bool {
        self.aux_lemmas
            .as_ref()
            .map(|set| set.contains(lemma))
            .unwrap_or(true)
    }
}

/// An auxiliary verb construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvcRecord {
    pub main_verb: usize,
    /// Auxiliaries, left to right (UD) or chain-top first (MS).
    pub auxiliaries: Vec<usize>,
    /// NFMV under UD, MAUX under MS.
    pub head: usize,
}

impl AvcRecord {
    /// Main verb and auxiliaries as a sorted id list.
    pub fn members(&self) -> Vec<usize> {
        let mut ids = self.auxiliaries.clone();
        ids.push(self.main_verb);
        ids.sort_unstable();
        ids
    }
}

fn is_aux_or_cop(deprel: &str) -> bool {
    matches!(base_relation(deprel), "aux" | "cop")
}

/// Finite verbs that are not part of a larger verbal construction.
pub fn collect_fmvs(s: &Sentence, opts: &ExtractionOptions) -> Vec<usize> {
    s.tokens
        .iter()
        .filter(|t| t.feats.get("VerbForm") == Some("Fin"))
        .filter(|t| !is_aux_or_cop(&t.deprel))
        .filter(|t| {
            !opts.fmv_reject_aux_heads
                || !s.children(t.id).any(|c| is_aux_or_cop(&s.token(c).deprel))
        })
        .map(|t| t.id)
        .collect()
}

/// Is token `dep` attached by an auxiliary relation between two verbal forms?
fn ud_aux_relation(s: &Sentence, dep: usize, opts: &ExtractionOptions) -> bool {
    let tok = s.token(dep);
    tok.head != 0
        && base_relation(&tok.deprel) == "aux"
        && tok.is_verbal()
        && s.token(tok.head).is_verbal()
        && opts.lemma_allowed(&tok.lemma)
}

/// AVCs of a UD sentence, one per main verb, in order of first auxiliary.
pub fn collect_avcs_ud(s: &Sentence, opts: &ExtractionOptions) -> Vec<AvcRecord> {
    let mut records: Vec<AvcRecord> = Vec::new();
    for tok in &s.tokens {
        if !ud_aux_relation(s, tok.id, opts) {
            continue;
        }
        match records.iter_mut().find(|r| r.main_verb == tok.head) {
            Some(record) => record.auxiliaries.push(tok.id),
            None => records.push(AvcRecord {
                main_verb: tok.head,
                auxiliaries: vec![tok.id],
                head: tok.head,
            }),
        }
    }
    records
}

/// Re-link every AVC so the auxiliaries head the verb chain.
pub fn transform_ud_to_ms(s: &Sentence, opts: &ExtractionOptions) -> Result<Sentence, TreeError> {
    s.validate()?;

    let records = collect_avcs_ud(s, opts);
    let mut out = s.clone();
    for record in &records {
        let mv = record.main_verb;
        let mut chain = record.auxiliaries.clone();
        chain.sort_unstable();
        chain.push(mv);
        let top = chain[0];

        let dependents: Vec<usize> = out
            .children(mv)
            .filter(|d| !chain.contains(d))
            .collect();

        let (old_head, old_rel) = {
            let t = out.token(mv);
            (t.head, t.deprel.clone())
        };
        {
            let t = out.token_mut(top);
            t.head = old_head;
            t.deprel = old_rel;
        }
        for link in chain.windows(2) {
            let t = out.token_mut(link[1]);
            t.head = link[0];
            t.deprel = "aux".to_owned();
        }

        for d in dependents.into_iter().filter(|&d| d < mv) {
            let new_head = match opts.reattach {
                ReattachPolicy::ChainTop => top,
                ReattachPolicy::NearestRight => *chain
                    .iter()
                    .filter(|&&e| e > d)
                    .min()
                    .expect("main verb is right of every pre-verbal dependent"),
            };
            out.token_mut(d).head = new_head;
        }
    }

    out.validate()?;
    Ok(out)
}

/// Transform a whole UD treebank. Treebanks whose auxiliary relations
/// already point down the verb chain are refused.
pub fn transform_treebank(tb: &[Sentence], opts: &ExtractionOptions) -> Result<Vec<Sentence>, TreebankError> {
    if detect_representation(tb) == Some(Representation::Ms) {
        return Err(TreebankError::AlreadyMs);
    }
    tb.iter()
        .enumerate()
        .map(|(i, s)| transform_ud_to_ms(s, opts).map_err(|source| TreebankError::Tree { sentence: i, source }))
        .collect()
}

/// Is `dep` attached by an MS-style auxiliary relation? The head is the
/// auxiliary, so the lemma filter applies to the head.
fn ms_aux_relation(s: &Sentence, dep: usize, opts: &ExtractionOptions) -> bool {
    let tok = s.token(dep);
    if tok.head == 0 || base_relation(&tok.deprel) != "aux" {
        return false;
    }
    let head = s.token(tok.head);
    tok.is_verbal() && head.is_verbal() && opts.lemma_allowed(&head.lemma)
}

/// AVCs of an MS sentence, one per auxiliary chain.
pub fn collect_avcs_ms(s: &Sentence, opts: &ExtractionOptions) -> Result<Vec<AvcRecord>, TreeError> {
    let n = s.len();
    let mut processed = HashSet::new();
    let mut records = Vec::new();

    for tok in &s.tokens {
        if !ms_aux_relation(s, tok.id, opts) || processed.contains(&tok.id) {
            continue;
        }

        let mut top = tok.head;
        let mut steps = 0;
        while ms_aux_relation(s, top, opts) {
            top = s.token(top).head;
            steps += 1;
            if steps > n {
                return Err(TreeError::Cycle(top));
            }
        }

        let mut auxiliaries = Vec::new();
        let mut node = top;
        loop {
            let next = s.children(node).find(|&c| ms_aux_relation(s, c, opts));
            match next {
                Some(child) => {
                    auxiliaries.push(node);
                    node = child;
                    if auxiliaries.len() > n {
                        return Err(TreeError::Cycle(node));
                    }
                }
                None => break,
            }
        }

        processed.extend(auxiliaries.iter().copied());
        processed.insert(node);
        records.push(AvcRecord {
            main_verb: node,
            auxiliaries,
            head: top,
        });
    }

    Ok(records)
}

/// Guess the AVC representation of a treebank from the direction of its
/// verbal `aux` relations.
pub fn detect_representation(tb: &[Sentence]) -> Option<Representation> {
    let (mut ud, mut ms) = (0usize, 0usize);
    for s in tb {
        for tok in &s.tokens {
            if tok.head == 0 || base_relation(&tok.deprel) != "aux" {
                continue;
            }
            let head = s.token(tok.head);
            let dep_heads_aux = s
                .children(tok.id)
                .any(|c| base_relation(&s.token(c).deprel) == "aux");
            if dep_heads_aux || (head.upos == "AUX" && tok.upos == "VERB") {
                ms += 1;
            } else if tok.upos == "AUX" {
                ud += 1;
            }
        }
    }
    match (ud, ms) {
        (0, 0) => None,
        (u, m) if m > u => Some(Representation::Ms),
        _ => Some(Representation::Ud),
    }
}

pub fn transitivity_label(s: &Sentence, verb: usize) -> Transitivity {
    let has_object = s
        .children(verb)
        .any(|c| matches!(base_relation(&s.token(c).deprel), "obj" | "dobj"));
    if has_object {
        Transitivity::Transitive
    } else {
        Transitivity::Intransitive
    }
}

/// `Person|Number`, or `None` when either feature is missing.
pub fn agreement_label(s: &Sentence, verb: usize) -> Option<String> {
    let feats = &s.token(verb).feats;
    Some(format!("{}|{}", feats.get("Person")?, feats.get("Number")?))
}

/// Agreement of an AVC: the first auxiliary in chain order that carries it.
pub fn avc_agreement_label(s: &Sentence, record: &AvcRecord) -> Option<String> {
    record
        .auxiliaries
        .iter()
        .find_map(|&aux| agreement_label(s, aux))
}

/// Closest `punct` child of `fmv`, right side first.
pub fn nearest_punct(s: &Sentence, fmv: usize) -> Option<usize> {
    let puncts: Vec<usize> = s
        .children(fmv)
        .filter(|&c| base_relation(&s.token(c).deprel) == "punct")
        .collect();
    puncts
        .iter()
        .copied()
        .filter(|&p| p > fmv)
        .min()
        .or_else(|| puncts.iter().copied().filter(|&p| p < fmv).max())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeInstance {
    pub sentence: usize,
    pub target: usize,
    pub kind: TargetKind,
    pub transitivity: Transitivity,
    pub agreement: Option<String>,
}

impl ProbeInstance {
    pub fn label(&self, task: Task) -> Option<String> {
        match task {
            Task::Transitivity => Some(self.transitivity.to_string()),
            Task::Agreement => self.agreement.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub task: Task,
    pub kind: TargetKind,
    pub representation: Representation,
    pub train: Vec<ProbeInstance>,
    pub dev: Vec<ProbeInstance>,
}

fn check_combination(kind: TargetKind, repr: Representation) -> Result<(), TreebankError> {
    match (kind, repr) {
        (TargetKind::Nfmv, Representation::Ms) | (TargetKind::Maux, Representation::Ud) => {
            Err(TreebankError::Usage {
                kind,
                representation: repr,
            })
        }
        _ => Ok(()),
    }
}

/// Probe instances of one sentence. Instances whose label is undefined for
/// `task` are dropped.
pub fn sentence_instances(
    s: &Sentence,
    sentence: usize,
    task: Task,
    kind: TargetKind,
    repr: Representation,
    opts: &ExtractionOptions,
) -> Result<Vec<ProbeInstance>, TreebankError> {
    check_combination(kind, repr)?;

    let mut out = Vec::new();
    match kind {
        TargetKind::Fmv | TargetKind::Punct => {
            for fmv in collect_fmvs(s, opts) {
                let target = match kind {
                    TargetKind::Fmv => fmv,
                    _ => match nearest_punct(s, fmv) {
                        Some(p) => p,
                        None => continue,
                    },
                };
                out.push(ProbeInstance {
                    sentence,
                    target,
                    kind,
                    transitivity: transitivity_label(s, fmv),
                    agreement: agreement_label(s, fmv),
                });
            }
        }
        TargetKind::Nfmv | TargetKind::Maux => {
            let records = if kind == TargetKind::Nfmv {
                collect_avcs_ud(s, opts)
            } else {
                collect_avcs_ms(s, opts)
                    .map_err(|source| TreebankError::Tree { sentence, source })?
            };
            for record in records {
                out.push(ProbeInstance {
                    sentence,
                    target: record.head,
                    kind,
                    transitivity: transitivity_label(s, record.main_verb),
                    agreement: avc_agreement_label(s, &record),
                });
            }
        }
    }

    out.retain(|inst| inst.label(task).is_some());
    out.sort_by_key(|inst| inst.target);
    Ok(out)
}

fn treebank_instances(
    tb: &[Sentence],
    task: Task,
    kind: TargetKind,
    repr: Representation,
    opts: &ExtractionOptions,
) -> Result<Vec<ProbeInstance>, TreebankError> {
    let mut out = Vec::new();
    for (idx, s) in tb.iter().enumerate() {
        out.extend(sentence_instances(s, idx, task, kind, repr, opts)?);
    }
    Ok(out)
}

pub fn build_task_dataset(
    train: &[Sentence],
    dev: &[Sentence],
    task: Task,
    kind: TargetKind,
    repr: Representation,
    opts: &ExtractionOptions,
) -> Result<TaskDataset, TreebankError> {
    check_combination(kind, repr)?;
    Ok(TaskDataset {
        task,
        kind,
        representation: repr,
        train: treebank_instances(train, task, kind, repr, opts)?,
        dev: treebank_instances(dev, task, kind, repr, opts)?,
    })
}

/// One line per instance: sentence index, target id, kind, task, label.
pub fn write_instances<W: Write>(w: &mut W, instances: &[ProbeInstance], task: Task) -> io::Result<()> {
    for inst in instances {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            inst.sentence,
            inst.target,
            inst.kind,
            task,
            inst.label(task).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// A probe instance as read back from a dataset file: the label is stored
/// for the file's task only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceRow {
    pub sentence: usize,
    pub target: usize,
    pub kind: TargetKind,
    pub task: Task,
    pub label: String,
}

pub fn read_instances(text: &str) -> Result<Vec<InstanceRow>, TreebankError> {
    let bad = |line: &str| TreebankError::Unknown {
        what: "dataset line",
        value: line.to_owned(),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad(line));
            }
            Ok(InstanceRow {
                sentence: cols[0].parse().map_err(|_| bad(line))?,
                target: cols[1].parse().map_err(|_| bad(line))?,
                kind: cols[2].parse()?,
                task: cols[3].parse()?,
                label: cols[4].to_owned(),
            })
        })
        .collect()
}
