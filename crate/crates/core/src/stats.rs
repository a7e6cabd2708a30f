//! Means, standard deviations, Student / Welch t-tests and the result
//! tables built from per-language probe reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::probe::{Layer, ProbeKind, ProbeResult};
use crate::treebank::{TargetKind, Task};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{0}")]
    Usage(String),
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Standard deviation with `n - 1` (sample) or `n` (population) in the
/// denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdKind {
    Sample,
    Population,
}

impl FromStr for SdKind {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sample" => Ok(SdKind::Sample),
            "population" => Ok(SdKind::Population),
            _ => Err(StatsError::Usage(format!("unknown sd kind `{}`", s))),
        }
    }
}

pub fn std_dev(xs: &[f64], kind: SdKind) -> Option<f64> {
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let denom = match kind {
        SdKind::Sample if xs.len() < 2 => return None,
        SdKind::Sample => xs.len() - 1,
        SdKind::Population => xs.len(),
    };
    Some((ss / denom as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    /// `None` when the standard error is zero.
    pub t: Option<f64>,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    /// One-sided, for the alternative that the first sample is larger.
    pub p_greater: f64,
    /// Zero variance: `p` is 0 when the means differ and 1 otherwise.
    pub degenerate: bool,
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

fn from_statistic(diff: f64, se: f64, df: f64) -> TTest {
    if se == 0.0 || !se.is_finite() {
        let differ = diff != 0.0;
        return TTest {
            t: None,
            df,
            p: if differ { 0.0 } else { 1.0 },
            p_greater: if diff > 0.0 { 0.0 } else { 1.0 },
            degenerate: true,
        };
    }
    let t = diff / se;
    let p = t_two_sided(t, df);
    TTest {
        t: Some(t),
        df,
        p,
        p_greater: if t > 0.0 { p / 2.0 } else { 1.0 - p / 2.0 },
        degenerate: false,
    }
}

pub fn paired_ttest(xs: &[f64], ys: &[f64]) -> Result<TTest, StatsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(StatsError::Usage(format!(
            "paired t-test needs two equal samples of at least 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let sd = std_dev(&d, SdKind::Sample).expect("n >= 2");
    Ok(from_statistic(mean(&d).expect("non-empty"), sd / n.sqrt(), n - 1.0))
}

/// Welch's unequal-variance test.
pub fn unpaired_ttest(xs: &[f64], ys: &[f64]) -> Result<TTest, StatsError> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(StatsError::Usage(format!(
            "unpaired t-test needs samples of at least 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let vx = std_dev(xs, SdKind::Sample).expect("n >= 2").powi(2) / nx;
    let vy = std_dev(ys, SdKind::Sample).expect("n >= 2").powi(2) / ny;
    let diff = mean(xs).expect("non-empty") - mean(ys).expect("non-empty");
    let df = if vx + vy == 0.0 {
        nx + ny - 2.0
    } else {
        (vx + vy).powi(2) / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0))
    };
    Ok(from_statistic(diff, (vx + vy).sqrt(), df))
}

/// `**` below .01, `*` below .05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// One column of a results table.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub task: Task,
    pub kind: TargetKind,
    pub layer: Layer,
    /// Parser mode, classifier or representation; free-form.
    pub setting: String,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind, self.layer, self.setting)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub majority: f64,
    pub accuracy: f64,
}

impl Cell {
    pub fn delta(&self) -> f64 {
        self.accuracy - self.majority
    }
}

/// Averages over languages of one column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub majority: f64,
    pub accuracy: f64,
    pub delta: f64,
    /// Absent with fewer than two languages.
    pub sd_majority: Option<f64>,
    pub sd_accuracy: Option<f64>,
    pub sd_delta: Option<f64>,
    /// Paired test of accuracy against majority across languages.
    pub test: Option<TTest>,
}

/// Which p-value decides the significance markers on average deltas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sidedness {
    TwoSided,
    /// Accuracy above the majority baseline.
    Greater,
}

impl FromStr for Sidedness {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two-sided" => Ok(Sidedness::TwoSided),
            "greater" => Ok(Sidedness::Greater),
            _ => Err(StatsError::Usage(format!("unknown sidedness `{}`", s))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsMatrix {
    pub languages: Vec<String>,
    pub columns: Vec<CellKey>,
    pub cells: BTreeMap<(String, CellKey), Cell>,
}

impl ResultsMatrix {
    pub fn insert(&mut self, language: &str, key: CellKey, cell: Cell) {
        if !self.languages.iter().any(|l| l == language) {
            self.languages.push(language.to_owned());
        }
        if !self.columns.contains(&key) {
            self.columns.push(key.clone());
            self.columns.sort();
        }
        self.cells.insert((language.to_owned(), key), cell);
    }

    pub fn get(&self, language: &str, key: &CellKey) -> Option<&Cell> {
        self.cells.get(&(language.to_owned(), key.clone()))
    }

    /// (language, column) pairs without a value.
    pub fn missing(&self) -> Vec<(String, CellKey)> {
        let mut out = Vec::new();
        for l in &self.languages {
            for k in &self.columns {
                if self.get(l, k).is_none() {
                    out.push((l.clone(), k.clone()));
                }
            }
        }
        out
    }

    pub fn summary(&self, key: &CellKey, sd: SdKind) -> Option<Summary> {
        let cells: Vec<&Cell> = self.languages.iter().filter_map(|l| self.get(l, key)).collect();
        let col = |f: fn(&Cell) -> f64| cells.iter().map(|c| f(c)).collect::<Vec<_>>();
        let (maj, acc, del) = (col(|c| c.majority), col(|c| c.accuracy), col(Cell::delta));
        let spread = |xs: &[f64]| if xs.len() < 2 { None } else { std_dev(xs, sd) };
        Some(Summary {
            n: cells.len(),
            majority: mean(&maj)?,
            accuracy: mean(&acc)?,
            delta: mean(&del)?,
            sd_majority: spread(&maj),
            sd_accuracy: spread(&acc),
            sd_delta: spread(&del),
            test: paired_ttest(&acc, &maj).ok(),
        })
    }
}

/// Collect per-language probe results. Each entry is (language, setting,
/// results); cells without a majority or accuracy are left out.
pub fn build_results(reports: &[(String, String, Vec<ProbeResult>)], classifier: ProbeKind) -> ResultsMatrix {
    let mut m = ResultsMatrix::default();
    for (lang, setting, results) in reports {
        if !m.languages.contains(lang) {
            m.languages.push(lang.clone());
        }
        for r in results.iter().filter(|r| r.classifier == classifier) {
            let key = CellKey {
                task: r.task,
                kind: r.kind,
                layer: r.layer,
                setting: setting.clone(),
            };
            match (r.majority, r.accuracy) {
                (Some(majority), Some(accuracy)) => m.insert(lang, key, Cell { majority, accuracy }),
                _ => {
                    if !m.columns.contains(&key) {
                        m.columns.push(key);
                        m.columns.sort();
                    }
                }
            }
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Markdown,
}

impl FromStr for Format {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "md" | "markdown" => Ok(Format::Markdown),
            _ => Err(StatsError::Usage(format!("unknown format `{}`", s))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub format: Format,
    pub sd: SdKind,
    pub sidedness: Sidedness,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            format: Format::Tsv,
            sd: SdKind::Sample,
            sidedness: Sidedness::Greater,
        }
    }
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{:.1}", v))
}

/// One block per task: language rows, then `av` (with significance
/// markers on the average delta) and `sd` rows. Every column shows
/// majority, accuracy and delta.
pub fn render(m: &ResultsMatrix, opts: &RenderOptions) -> String {
    let tasks: BTreeSet<Task> = m.columns.iter().map(|k| k.task).collect();
    let mut out = String::new();
    for task in tasks {
        let cols: Vec<&CellKey> = m.columns.iter().filter(|k| k.task == task).collect();
        let mut header = vec!["task".to_owned(), "lang".to_owned()];
        for k in &cols {
            for part in ["maj", "acc", "δ"] {
                header.push(format!("{} {}", k, part));
            }
        }
        let mut rows: Vec<Vec<String>> = Vec::new();
        for lang in &m.languages {
            let mut row = vec![task.to_string(), lang.clone()];
            for k in &cols {
                let c = m.get(lang, k);
                row.push(num(c.map(|c| c.majority)));
                row.push(num(c.map(|c| c.accuracy)));
                row.push(num(c.map(Cell::delta)));
            }
            rows.push(row);
        }
        let summaries: Vec<Option<Summary>> = cols.iter().map(|k| m.summary(k, opts.sd)).collect();
        let mut av = vec![task.to_string(), "av".to_owned()];
        for s in &summaries {
            av.push(num(s.map(|s| s.majority)));
            av.push(num(s.map(|s| s.accuracy)));
            let marker = s.and_then(|s| s.test).map_or("", |t| {
                stars(match opts.sidedness {
                    Sidedness::TwoSided => t.p,
                    Sidedness::Greater => t.p_greater,
                })
            });
            av.push(format!("{}{}", num(s.map(|s| s.delta)), marker));
        }
        rows.push(av);
        if summaries.iter().any(|s| s.is_some_and(|s| s.n >= 2)) {
            let mut sd = vec![task.to_string(), "sd".to_owned()];
            for s in &summaries {
                sd.push(num(s.and_then(|s| s.sd_majority)));
                sd.push(num(s.and_then(|s| s.sd_accuracy)));
                sd.push(num(s.and_then(|s| s.sd_delta)));
            }
            rows.push(sd);
        }

        match opts.format {
            Format::Tsv => {
                out.push_str(&header.join("\t"));
                out.push('\n');
                for r in rows {
                    out.push_str(&r.join("\t"));
                    out.push('\n');
                }
            }
            Format::Markdown => {
                writeln!(out, "| {} |", header.join(" | ")).expect("writing to a string");
                writeln!(out, "|{}", "---|".repeat(header.len())).expect("writing to a string");
                for r in rows {
                    writeln!(out, "| {} |", r.join(" | ")).expect("writing to a string");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd_kinds() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert!((std_dev(&xs, SdKind::Population).unwrap() - 2.0).abs() < 1e-12);
        assert!((std_dev(&xs, SdKind::Sample).unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(std_dev(&[1.0], SdKind::Sample), None);
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn identical_samples_are_flagged() {
        let t = paired_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(t.degenerate && t.t.is_none());
        assert_eq!(t.p, 1.0);
        let shifted = paired_ttest(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(shifted.degenerate);
        assert_eq!((shifted.p, shifted.p_greater), (0.0, 0.0));
    }

    #[test]
    fn textbook_pairs() {
        // Differences 1, 2, 3: mean 2, sd 1, t = 2 / (1 / sqrt 3).
        let t = paired_ttest(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((t.t.unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(t.df, 2.0);
        // With two degrees of freedom the tail has a closed form:
        // p = 1 - t / sqrt(2 + t^2).
        let tt = t.t.unwrap();
        assert!((t.p - (1.0 - tt / (2.0 + tt * tt).sqrt())).abs() < 1e-12);
        assert!((t.p_greater - t.p / 2.0).abs() < 1e-15);
    }

    #[test]
    fn welch_reduces_to_student_for_equal_sizes_and_variances() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 3.0, 4.0, 5.0];
        let t = unpaired_ttest(&xs, &ys).unwrap();
        assert!((t.df - 6.0).abs() < 1e-12);
        // Pooled sd = sqrt(5/3); se = sqrt(5/3 * 2/4).
        assert!((t.t.unwrap() + 1.0 / (5.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert!(unpaired_ttest(&[1.0], &ys).is_err());
        assert!(paired_ttest(&xs, &ys[..3]).is_err());
    }

    fn key(layer: Layer) -> CellKey {
        CellKey {
            task: Task::Transitivity,
            kind: TargetKind::Fmv,
            layer,
            setting: "ud".to_owned(),
        }
    }

    #[test]
    fn single_language_has_no_sd_row() {
        let mut m = ResultsMatrix::default();
        m.insert("hr", key(Layer::Token), Cell { majority: 55.9, accuracy: 79.7 });
        let text = render(&m, &RenderOptions::default());
        assert!(text.contains("hr\t55.9\t79.7\t23.8"));
        assert!(text.contains("\tav\t"));
        assert!(!text.contains("\tsd\t"));
    }

    #[test]
    fn formats_carry_the_same_numbers() {
        let mut m = ResultsMatrix::default();
        for (lang, maj, acc) in [("ca", 70.5, 88.7), ("fi", 59.2, 86.2), ("hr", 55.9, 79.7), ("nl", 61.7, 82.1)] {
            m.insert(lang, key(Layer::Token), Cell { majority: maj, accuracy: acc });
        }
        m.insert("ca", key(Layer::Type), Cell { majority: 70.5, accuracy: 79.4 });
        let tsv = render(&m, &RenderOptions::default());
        let md = render(&m, &RenderOptions { format: Format::Markdown, ..Default::default() });
        let numbers = |s: &str| -> Vec<String> {
            s.split(['\t', '|', '\n', ' '])
                .map(|w| w.trim_end_matches('*'))
                .filter(|w| w.parse::<f64>().is_ok())
                .map(str::to_owned)
                .collect()
        };
        assert_eq!(numbers(&tsv), numbers(&md));
        assert!(tsv.contains("\tav\t70.5\t79.4\t8.9\t61.8\t84.2\t22.3**\n"), "{}", tsv);
        assert_eq!(m.missing().len(), 3);
        assert!(tsv.contains("fi\t-\t-\t-\t59.2\t86.2\t27.0\n"));
    }
}
