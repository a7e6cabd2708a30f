//! Small generator of UD-annotated toy sentences: subjects agreeing with
//! finite verbs, auxiliary chains, optional objects and extraposed
//! relative clauses (which make some trees non-projective). Used by tests,
//! smoke runs and the determinism check when no real treebank is at hand.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::conllu::{Sentence, Token};
use crate::numeric::rng_from_seed;

const NOUNS: &[&str] = &["dog", "cat", "man", "child", "house", "book", "car", "idea", "river", "letter"];
const TRANSITIVE: &[&str] = &["see", "take", "make", "find", "read", "build", "want", "hold"];
const INTRANSITIVE: &[&str] = &["sleep", "run", "arrive", "laugh", "fall", "wait"];
const ADVERBS: &[&str] = &["easily", "often", "never", "quickly"];
const PRONOUNS: &[(&str, &str, &str)] = &[
    ("I", "1", "Sing"),
    ("you", "2", "Sing"),
    ("he", "3", "Sing"),
    ("she", "3", "Sing"),
    ("we", "1", "Plur"),
    ("they", "3", "Plur"),
];

struct Word {
    form: String,
    lemma: String,
    upos: &'static str,
    feats: String,
    /// Index into the word list, `None` for the root.
    head: Option<usize>,
    deprel: &'static str,
}

fn word(form: &str, lemma: &str, upos: &'static str, feats: &str) -> Word {
    Word {
        form: form.to_owned(),
        lemma: lemma.to_owned(),
        upos,
        feats: feats.to_owned(),
        head: None,
        deprel: "root",
    }
}

fn agreement(person: &str, number: &str) -> String {
    format!("Number={}|Person={}", number, person)
}

fn finite_form(lemma: &str, person: &str, number: &str, past: bool) -> String {
    if past {
        format!("{}ed", lemma)
    } else if person == "3" && number == "Sing" {
        format!("{}s", lemma)
    } else {
        lemma.to_owned()
    }
}

/// Push a determiner + noun phrase; returns the noun's index.
fn noun_phrase(words: &mut Vec<Word>, rng: &mut impl Rng, plural: bool) -> usize {
    let noun = *NOUNS.choose(rng).expect("non-empty");
    let det = if plural || rng.gen_bool(0.5) { "the" } else { "a" };
    let d = words.len();
    words.push(word(det, det, "DET", "PronType=Art"));
    let number = if plural { "Plur" } else { "Sing" };
    let form = if plural { format!("{}s", noun) } else { noun.to_owned() };
    words.push(word(&form, noun, "NOUN", &format!("Number={}", number)));
    words[d].head = Some(d + 1);
    words[d].deprel = "det";
    d + 1
}

fn sentence(rng: &mut impl Rng) -> Sentence {
    let mut words: Vec<Word> = Vec::new();

    // Subject.
    let (subject, person, number, noun_subject) = if rng.gen_bool(0.5) {
        let &(form, person, number) = PRONOUNS.choose(rng).expect("non-empty");
        let feats = format!("{}|PronType=Prs", agreement(person, number));
        words.push(word(form, &form.to_lowercase(), "PRON", &feats));
        (0, person, number, false)
    } else {
        let plural = rng.gen_bool(0.4);
        let n = noun_phrase(&mut words, rng, plural);
        (n, "3", if plural { "Plur" } else { "Sing" }, true)
    };
    let agr = agreement(person, number);

    // Verb chain.
    let transitive = rng.gen_bool(0.6);
    let lemma = *if transitive { TRANSITIVE } else { INTRANSITIVE }
        .choose(rng)
        .expect("non-empty");
    let mut auxes = Vec::new();
    let main_form;
    let main_feats;
    match rng.gen_range(0..5) {
        0 | 1 => {
            let past = rng.gen_bool(0.3);
            main_form = finite_form(lemma, person, number, past);
            main_feats = format!("{}|Tense={}|VerbForm=Fin", agr, if past { "Past" } else { "Pres" });
        }
        2 => {
            let have = if person == "3" && number == "Sing" { "has" } else { "have" };
            auxes.push(word(have, "have", "AUX", &format!("{}|VerbForm=Fin", agr)));
            main_form = format!("{}en", lemma);
            main_feats = "VerbForm=Part".to_owned();
        }
        3 => {
            let modal = *["can", "will", "must"].choose(rng).expect("non-empty");
            auxes.push(word(modal, modal, "AUX", &format!("{}|VerbForm=Fin", agr)));
            if rng.gen_bool(0.5) {
                auxes.push(word("have", "have", "AUX", "VerbForm=Inf"));
                main_form = format!("{}en", lemma);
                main_feats = "VerbForm=Part".to_owned();
            } else {
                main_form = lemma.to_owned();
                main_feats = "VerbForm=Inf".to_owned();
            }
        }
        _ => {
            let be = match (person, number) {
                ("1", "Sing") => "am",
                ("3", "Sing") => "is",
                _ => "are",
            };
            auxes.push(word(be, "be", "AUX", &format!("{}|VerbForm=Fin", agr)));
            main_form = format!("{}ing", lemma);
            main_feats = "Aspect=Prog|VerbForm=Part".to_owned();
        }
    }
    let aux_ids: Vec<usize> = auxes
        .into_iter()
        .map(|a| {
            words.push(a);
            words.len() - 1
        })
        .collect();
    let adverb = rng.gen_bool(0.25).then(|| {
        let a = *ADVERBS.choose(rng).expect("non-empty");
        words.push(word(a, a, "ADV", "_"));
        words.len() - 1
    });
    let verb = words.len();
    words.push(word(&main_form, lemma, "VERB", &main_feats));
    words[subject].head = Some(verb);
    words[subject].deprel = "nsubj";
    for a in aux_ids.into_iter().chain(adverb) {
        words[a].head = Some(verb);
        words[a].deprel = if words[a].upos == "AUX" { "aux" } else { "advmod" };
    }

    if transitive && rng.gen_bool(0.8) {
        let plural = rng.gen_bool(0.3);
        let obj = noun_phrase(&mut words, rng, plural);
        words[obj].head = Some(verb);
        words[obj].deprel = "obj";
    }

    // Relative clause on a noun subject, placed after the verb phrase.
    if noun_subject && rng.gen_bool(0.3) {
        let which = words.len();
        words.push(word("which", "which", "PRON", "PronType=Rel"));
        let rel_lemma = *INTRANSITIVE.choose(rng).expect("non-empty");
        let rel_form = finite_form(rel_lemma, "3", number, false);
        words.push(word(&rel_form, rel_lemma, "VERB", &format!("{}|Tense=Pres|VerbForm=Fin", agr)));
        words[which].head = Some(which + 1);
        words[which].deprel = "nsubj";
        words[which + 1].head = Some(subject);
        words[which + 1].deprel = "acl:relcl";
    }

    let p = words.len();
    words.push(word(".", ".", "PUNCT", "_"));
    words[p].head = Some(verb);
    words[p].deprel = "punct";

    let tokens = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            Token::new(i + 1, &w.form, w.upos, w.head.map_or(0, |h| h + 1), w.deprel)
                .with_feats(&w.feats)
                .with_lemma(&w.lemma)
        })
        .collect();
    let mut s = Sentence::new(tokens);
    s.comments.push(format!(
        "# text = {}",
        words.iter().map(|w| w.form.as_str()).collect::<Vec<_>>().join(" ")
    ));
    s
}

/// `n` sentences drawn deterministically from `seed`.
pub fn generate(n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|i| {
            let mut s = sentence(&mut rng);
            s.comments.insert(0, format!("# sent_id = synth-{}", i + 1));
            s
        })
        .collect()
}
