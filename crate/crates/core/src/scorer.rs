//! Span-level normalized precision/recall/F1, plus token-level F1.
//!
//! For predicted spans `S` and gold spans `T`, with
//! `C(s, t, h) = |chars(s) ∩ chars(t)| / h`:
//!
//! ```text
//! P = 1/|S| * sum_{s in S} sum_{t in T} C(s, t, |s|)
//! R = 1/|T| * sum_{s in S} sum_{t in T} C(s, t, |t|)
//! F1 = 2PR / (P + R)
//! ```
//!
//! Spans from different articles never overlap. Predicted spans are merged
//! to a disjoint set before scoring; gold spans are used as given. With no
//! predictions and no gold spans the score is 1 across the board.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Span};
use crate::error::{Error, Result};
use crate::spanops::merge_spans;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleScore {
    pub article_id: String,
    pub predicted: usize,
    pub gold: usize,
    pub scores: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `|S|` after merging predictions.
    pub num_predicted: usize,
    /// `|T|`
    pub num_gold: usize,
    /// Pairs of overlapping gold spans seen (scored as given).
    pub gold_overlaps: usize,
    pub per_article: Vec<ArticleScore>,
}

impl ScoreReport {
    /// CSV with a header, an `ALL` row, then one row per article.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("article_id,precision,recall,f1,num_predicted,num_gold\n");
        out.push_str(&format!(
            "ALL,{},{},{},{},{}\n",
            self.precision, self.recall, self.f1, self.num_predicted, self.num_gold
        ));
        for a in &self.per_article {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                a.article_id, a.scores.precision, a.scores.recall, a.scores.f1, a.predicted, a.gold
            ));
        }
        out
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "span-level normalized scores")?;
        writeln!(f, "  predicted spans: {}", self.num_predicted)?;
        writeln!(f, "  gold spans:      {}", self.num_gold)?;
        writeln!(f, "  precision: {:.6}", self.precision)?;
        writeln!(f, "  recall:    {:.6}", self.recall)?;
        write!(f, "  F1:        {:.6}", self.f1)?;
        if self.gold_overlaps > 0 {
            write!(f, "\n  note: {} overlapping gold span pairs scored as given", self.gold_overlaps)?;
        }
        Ok(())
    }
}

fn group(spans: &[Span]) -> BTreeMap<&str, Vec<&Span>> {
    let mut map: BTreeMap<&str, Vec<&Span>> = BTreeMap::new();
    for s in spans {
        map.entry(s.article_id.as_str()).or_default().push(s);
    }
    map
}

fn count_overlapping_pairs(spans: &[&Span]) -> usize {
    let mut n = 0;
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if a.overlap(b) > 0 {
                n += 1;
            }
        }
    }
    n
}

/// Sums of normalized overlaps `(sum C(s,t,|s|), sum C(s,t,|t|))`.
fn overlap_sums(pred: &[&Span], gold: &[&Span]) -> (f64, f64) {
    let (mut p, mut r) = (0.0, 0.0);
    for s in pred {
        for t in gold {
            let o = s.overlap(t) as f64;
            if o > 0.0 {
                p += o / s.len() as f64;
                r += o / t.len() as f64;
            }
        }
    }
    (p, r)
}

fn prf(p_sum: f64, r_sum: f64, n_pred: usize, n_gold: usize) -> Prf {
    if n_pred == 0 && n_gold == 0 {
        return Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let precision = if n_pred > 0 { p_sum / n_pred as f64 } else { 0.0 };
    let recall = if n_gold > 0 { r_sum / n_gold as f64 } else { 0.0 };
    Prf::from_pr(precision, recall)
}

pub fn span_f1(predicted: &[Span], gold: &[Span]) -> Result<ScoreReport> {
    let predicted = merge_spans(predicted);
    let pred_by = group(&predicted);
    let gold_by = group(gold);
    for spans in pred_by.values() {
        if count_overlapping_pairs(spans) > 0 {
            return Err(Error::Invalid("predicted spans overlap after normalization".into()));
        }
    }
    let mut ids: Vec<&str> = pred_by.keys().chain(gold_by.keys()).copied().collect();
    ids.sort_unstable();
    ids.dedup();

    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    let mut gold_overlaps = 0;
    let mut per_article = Vec::with_capacity(ids.len());
    let empty = Vec::new();
    for id in ids {
        let p = pred_by.get(id).unwrap_or(&empty);
        let g = gold_by.get(id).unwrap_or(&empty);
        gold_overlaps += count_overlapping_pairs(g);
        let (ps, rs) = overlap_sums(p, g);
        p_sum += ps;
        r_sum += rs;
        per_article.push(ArticleScore {
            article_id: id.to_string(),
            predicted: p.len(),
            gold: g.len(),
            scores: prf(ps, rs, p.len(), g.len()),
        });
    }
    let total = prf(p_sum, r_sum, predicted.len(), gold.len());
    Ok(ScoreReport {
        precision: total.precision,
        recall: total.recall,
        f1: total.f1,
        num_predicted: predicted.len(),
        num_gold: gold.len(),
        gold_overlaps,
        per_article,
    })
}

/// Binary precision/recall/F1 on the `Prop` class.
pub fn token_f1(predicted: &[Label], gold: &[Label]) -> Result<Prf> {
    if predicted.len() != gold.len() {
        return Err(Error::shape(
            "token_f1",
            format!("{} predicted vs {} gold labels", predicted.len(), gold.len()),
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        match (p, g) {
            (Label::Prop, Label::Prop) => tp += 1,
            (Label::Prop, Label::NonProp) => fp += 1,
            (Label::NonProp, Label::Prop) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp == 0 && tp + fn_ == 0 {
        return Ok(Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    Ok(Prf::from_pr(precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(id: &str, s: usize, e: usize) -> Span {
        Span::new(id, s, e)
    }

    #[test]
    fn exact_match_scores_one() {
        let r = span_f1(&[sp("a", 3, 9)], &[sp("a", 3, 9)]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_overlap_scores_half() {
        let r = span_f1(&[sp("a", 0, 10)], &[sp("a", 5, 15)]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn emptiness_conventions() {
        let r = span_f1(&[], &[sp("a", 0, 4)]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = span_f1(&[], &[]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = span_f1(&[sp("a", 0, 4)], &[]).unwrap();
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn different_articles_do_not_overlap() {
        let r = span_f1(&[sp("a", 0, 10)], &[sp("b", 0, 10)]).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.per_article.len(), 2);
    }

    #[test]
    fn overlapping_predictions_are_merged_first() {
        let r = span_f1(&[sp("a", 0, 6), sp("a", 4, 10)], &[sp("a", 0, 10)]).unwrap();
        assert_eq!(r.num_predicted, 1);
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn overlapping_gold_is_reported() {
        let r = span_f1(&[sp("a", 0, 10)], &[sp("a", 0, 6), sp("a", 4, 10)]).unwrap();
        assert_eq!(r.gold_overlaps, 1);
        assert!(r.to_string().contains("overlapping gold"));
    }

    #[test]
    fn csv_has_total_row() {
        let r = span_f1(&[sp("a", 0, 10)], &[sp("a", 5, 15)]).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("article_id,precision,recall,f1,num_predicted,num_gold\nALL,0.5,0.5,0.5,1,1\n"));
    }

    #[test]
    fn token_f1_basics() {
        use Label::*;
        let g = [Prop, NonProp, Prop];
        assert_eq!(token_f1(&g, &g).unwrap().f1, 1.0);
        let r = token_f1(&[NonProp; 3], &g).unwrap();
        assert_eq!(r.recall, 0.0);
        assert!(token_f1(&[Prop], &g).is_err());
    }
}
