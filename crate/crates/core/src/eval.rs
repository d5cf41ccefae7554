//! Precision/recall/F1, token and span entity scoring, Cohen's kappa,
//! annotator agreement and k-fold splitting.
//!
//! Zero denominators never abort: the affected value is 0 and a flag is
//! set on the result.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;
use std::ops::{Add, AddAssign};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EntityKind;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("length mismatch: gold has {gold} items, prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("cannot split {n} items into {k} folds")]
    TooFewItems { k: usize, n: usize },
    #[error("empty input")]
    Empty,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    /// Adds one binary decision.
    pub fn record(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn metrics(&self) -> Metrics {
        confusion_to_metrics(self)
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Which values hit a zero denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold positives (`tp + fn`).
    pub support: u64,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn confusion_to_metrics(c: &ConfusionCounts) -> Metrics {
    let (precision, dp) = ratio(c.tp, c.tp + c.fp);
    let (recall, dr) = ratio(c.tp, c.tp + c.fn_);
    let (f1, df) =
        if precision + recall > 0.0 { (2.0 * precision * recall / (precision + recall), false) } else { (0.0, true) };
    Metrics {
        precision,
        recall,
        f1,
        support: c.tp + c.fn_,
        degenerate: Degenerate { precision: dp, recall: dr, f1: df },
    }
}

/// Confusion counts per entity kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedCounts {
    pub counts: BTreeMap<EntityKind, ConfusionCounts>,
}

impl Default for TypedCounts {
    fn default() -> Self {
        Self { counts: EntityKind::ALL.iter().map(|&k| (k, ConfusionCounts::default())).collect() }
    }
}

impl TypedCounts {
    pub fn get(&self, kind: EntityKind) -> ConfusionCounts {
        self.counts.get(&kind).copied().unwrap_or_default()
    }

    pub fn get_mut(&mut self, kind: EntityKind) -> &mut ConfusionCounts {
        self.counts.entry(kind).or_default()
    }

    pub fn metrics(&self, kind: EntityKind) -> Metrics {
        confusion_to_metrics(&self.get(kind))
    }

    /// Counts summed over kinds (micro average).
    pub fn pooled(&self) -> ConfusionCounts {
        self.counts.values().fold(ConfusionCounts::default(), |a, &b| a + b)
    }

    pub fn merge(&mut self, other: &TypedCounts) {
        for (&k, &c) in &other.counts {
            *self.get_mut(k) += c;
        }
    }

    /// One row per kind plus a `micro` row.
    pub fn rows(&self) -> Vec<MetricsRow> {
        let mut rows: Vec<MetricsRow> =
            EntityKind::ALL.iter().map(|&k| MetricsRow::new(k.as_str(), &self.metrics(k))).collect();
        rows.push(MetricsRow::new("micro", &confusion_to_metrics(&self.pooled())));
        rows
    }
}

/// Token-level scoring with tags collapsed to entity kind (`None` = outside).
/// Per kind: tp when both agree on the kind, fp when only the prediction has
/// it, fn when only the gold has it.
pub fn token_level_eval(gold: &[Option<EntityKind>], pred: &[Option<EntityKind>]) -> Result<TypedCounts, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let mut out = TypedCounts::default();
    for (&g, &p) in gold.iter().zip(pred) {
        for kind in EntityKind::ALL {
            let (gk, pk) = (g == Some(kind), p == Some(kind));
            if gk || pk {
                out.get_mut(kind).record(gk, pk);
            }
        }
    }
    Ok(out)
}

/// A typed span within a named document, compared by exact equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub doc: String,
    pub kind: EntityKind,
    pub begin: usize,
    pub end: usize,
}

/// Exact-match counts of two span sets. Duplicates count once.
pub fn set_counts<K: Eq + Hash>(gold: &[K], pred: &[K]) -> ConfusionCounts {
    let g: HashSet<&K> = gold.iter().collect();
    let p: HashSet<&K> = pred.iter().collect();
    let tp = g.intersection(&p).count() as u64;
    ConfusionCounts::new(tp, 0, p.len() as u64 - tp, g.len() as u64 - tp)
}

/// Exact `(doc, kind, begin, end)` matching, per kind.
pub fn span_level_eval(gold: &[LabeledSpan], pred: &[LabeledSpan]) -> TypedCounts {
    let mut out = TypedCounts::default();
    for kind in EntityKind::ALL {
        let g: Vec<&LabeledSpan> = gold.iter().filter(|s| s.kind == kind).collect();
        let p: Vec<&LabeledSpan> = pred.iter().filter(|s| s.kind == kind).collect();
        *out.get_mut(kind) = set_counts(&g, &p);
    }
    out
}

/// Agreement of annotator `b` against annotator `a` taken as gold.
pub fn pairwise_f1<K: Eq + Hash>(a: &[K], b: &[K]) -> Metrics {
    confusion_to_metrics(&set_counts(a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1, so kappa is undefined; `value` is then 1.0
    /// for identical labelings and 0.0 otherwise.
    pub degenerate: bool,
}

pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<Kappa, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { gold: a.len(), pred: b.len() });
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let po = agree / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(Kappa { value: if a == b { 1.0 } else { 0.0 }, degenerate: true });
    }
    Ok(Kappa { value: (po - pe) / (1.0 - pe), degenerate: false })
}

/// Shuffles items with `seed` and deals them round-robin into `k` folds,
/// so fold sizes differ by at most one.
pub fn kfold_split<T: Clone>(items: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>, EvalError> {
    if k == 0 || k > items.len() {
        return Err(EvalError::TooFewItems { k, n: items.len() });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(items.len() / k + 1); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(items[idx].clone());
    }
    Ok(folds)
}

/// One line of a metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl MetricsRow {
    pub fn new(name: &str, m: &Metrics) -> Self {
        Self { name: name.to_string(), precision: m.precision, recall: m.recall, f1: m.f1, support: m.support }
    }
}

pub const METRICS_CSV_HEADER: &str = "entity_or_task,precision,recall,f1,support";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{}", r.name, r.precision, r.recall, r.f1, r.support);
    }
    out
}
