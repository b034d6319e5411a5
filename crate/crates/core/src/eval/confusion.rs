use std::fmt::{Display, Write as _};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Square count matrix; rows are gold labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix<L> {
    labels: Vec<L>,
    counts: Vec<Vec<u64>>,
}

const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];

impl<L: Clone + PartialEq + Display> ConfusionMatrix<L> {
    pub fn new(labels: Vec<L>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Builds from (gold, predicted) pairs.
    pub fn from_pairs<I>(labels: Vec<L>, pairs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (L, L)>,
    {
        let mut m = Self::new(labels);
        for (gold, pred) in pairs {
            m.add(&gold, &pred)?;
        }
        Ok(m)
    }

    fn index(&self, label: &L) -> Result<usize, EvalError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| EvalError::UnknownLabel(label.to_string()))
    }

    pub fn add(&mut self, gold: &L, pred: &L) -> Result<(), EvalError> {
        let (g, p) = (self.index(gold)?, self.index(pred)?);
        self.counts[g][p] += 1;
        Ok(())
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, gold: &L, pred: &L) -> Result<u64, EvalError> {
        Ok(self.counts[self.index(gold)?][self.index(pred)?])
    }

    pub fn row_sum(&self, gold: &L) -> Result<u64, EvalError> {
        Ok(self.counts[self.index(gold)?].iter().sum())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Trace over total, i.e. top-1 accuracy.
    pub fn diagonal_ratio(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Aligned table; each cell shows the count and a shade for its share
    /// of the gold row.
    pub fn to_text(&self) -> String {
        let names: Vec<String> = self.labels.iter().map(ToString::to_string).collect();
        let max = self.counts.iter().flatten().copied().max().unwrap_or(0);
        let head = "gold\\pred";
        let lw = names.iter().map(String::len).chain([head.len()]).max().unwrap_or(0);
        let cw = names.iter().map(|n| n.len()).chain([max.to_string().len() + 1]).max().unwrap_or(1);
        let mut out = String::new();
        let _ = write!(out, "{head:>lw$} |");
        for n in &names {
            let _ = write!(out, " {n:>cw$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(lw + 2 + names.len() * (cw + 1)));
        for (i, n) in names.iter().enumerate() {
            let _ = write!(out, "{n:>lw$} |");
            let row: u64 = self.counts[i].iter().sum();
            for &c in &self.counts[i] {
                let shade = if c == 0 {
                    ' '
                } else {
                    let frac = c as f64 / row as f64;
                    SHADES[((frac * (SHADES.len() - 1) as f64).ceil() as usize).min(SHADES.len() - 1)]
                };
                let _ = write!(out, " {:>w$}{shade}", c, w = cw - 1);
            }
            out.push('\n');
        }
        out
    }

    /// Header row `gold\pred,<labels>`, then one row per gold label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l}");
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| gold \\ pred |");
        for l in &self.labels {
            let _ = write!(out, " {l} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.labels.len()));
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "| **{l}** |");
            for c in row {
                let _ = write!(out, " {c} |");
            }
            out.push('\n');
        }
        out
    }
}
