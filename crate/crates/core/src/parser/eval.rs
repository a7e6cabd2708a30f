use std::collections::BTreeMap;
use std::fmt;

use super::ParserError;
use crate::conllu::{base_relation, Sentence};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelScore {
    pub gold: usize,
    pub correct_head: usize,
    pub correct: usize,
}

/// Attachment scores in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub tokens: usize,
    pub las: f64,
    pub uas: f64,
    /// Keyed by gold label.
    pub per_label: BTreeMap<String, LabelScore>,
}

/// Score `pred` against `gold`. Punctuation (gold `punct` relations) counts
/// unless `include_punct` is false.
pub fn evaluate_las(gold: &[Sentence], pred: &[Sentence], include_punct: bool) -> Result<EvalReport, ParserError> {
    if gold.len() != pred.len() {
        return Err(ParserError::Alignment(format!(
            "gold has {} sentences, prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut per_label: BTreeMap<String, LabelScore> = BTreeMap::new();
    let (mut total, mut head_ok, mut both_ok) = (0usize, 0usize, 0usize);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(ParserError::Alignment(format!(
                "sentence {}: gold has {} tokens, prediction has {}",
                i + 1,
                g.len(),
                p.len()
            )));
        }
        for (gt, pt) in g.tokens.iter().zip(&p.tokens) {
            if !include_punct && base_relation(&gt.deprel) == "punct" {
                continue;
            }
            let head = gt.head == pt.head;
            let both = head && gt.deprel == pt.deprel;
            total += 1;
            head_ok += head as usize;
            both_ok += both as usize;
            let entry = per_label.entry(gt.deprel.clone()).or_default();
            entry.gold += 1;
            entry.correct_head += head as usize;
            entry.correct += both as usize;
        }
    }
    let pct = |k: usize| if total == 0 { 0.0 } else { 100.0 * k as f64 / total as f64 };
    Ok(EvalReport {
        tokens: total,
        las: pct(both_ok),
        uas: pct(head_ok),
        per_label,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tokens\t{}", self.tokens)?;
        writeln!(f, "LAS\t{:.2}", self.las)?;
        writeln!(f, "UAS\t{:.2}", self.uas)?;
        writeln!(f, "label\tgold\thead_correct\tcorrect")?;
        for (label, s) in &self.per_label {
            writeln!(f, "{}\t{}\t{}\t{}", label, s.gold, s.correct_head, s.correct)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::Token;

    fn sent(rows: &[(usize, &str)]) -> Sentence {
        Sentence::new(
            rows.iter()
                .enumerate()
                .map(|(i, (h, l))| Token::new(i + 1, "w", "X", *h, l))
                .collect(),
        )
    }

    #[test]
    fn identical_is_perfect() {
        let g = vec![sent(&[(2, "nsubj"), (0, "root"), (2, "obj")])];
        let r = evaluate_las(&g, &g, true).unwrap();
        assert_eq!((r.las, r.uas), (100.0, 100.0));
    }

    #[test]
    fn right_heads_wrong_labels() {
        let g = vec![sent(&[(2, "nsubj"), (0, "root")])];
        let p = vec![sent(&[(2, "obj"), (0, "dep")])];
        let r = evaluate_las(&g, &p, true).unwrap();
        assert_eq!((r.uas, r.las), (100.0, 0.0));
    }

    #[test]
    fn hand_scored_five_tokens() {
        // Gold:  2 nsubj, 0 root, 2 obj, 5 det, 3 nmod
        // Pred:  2 nsubj (ok), 0 root (ok), 2 iobj (head only),
        //        3 det (wrong), 3 nmod (ok)
        let g = vec![sent(&[(2, "nsubj"), (0, "root"), (2, "obj"), (5, "det"), (3, "nmod")])];
        let p = vec![sent(&[(2, "nsubj"), (0, "root"), (2, "iobj"), (3, "det"), (3, "nmod")])];
        let r = evaluate_las(&g, &p, true).unwrap();
        assert_eq!(r.tokens, 5);
        assert!((r.uas - 80.0).abs() < 1e-12);
        assert!((r.las - 60.0).abs() < 1e-12);
        assert_eq!(r.per_label["obj"], LabelScore { gold: 1, correct_head: 1, correct: 0 });
    }

    #[test]
    fn punctuation_toggle_and_alignment() {
        let g = vec![sent(&[(0, "root"), (1, "punct")])];
        let p = vec![sent(&[(0, "root"), (0, "punct")])];
        assert_eq!(evaluate_las(&g, &p, true).unwrap().las, 50.0);
        assert_eq!(evaluate_las(&g, &p, false).unwrap().las, 100.0);
        let short = vec![sent(&[(0, "root")])];
        assert!(matches!(evaluate_las(&g, &short, true), Err(ParserError::Alignment(_))));
    }
}
