//! Domain types for finetuning evaluation traces and analysis results.
//!
//! A trace records accuracy over checkpoints for one finetuning run: one
//! in-domain series plus one series per out-of-distribution (OOD) testset.
//! Traces sharing a model/size/shots configuration are grouped into a
//! [`RunSet`], the unit all analyses operate on.
//!
//! All types here are plain immutable data. Validation is explicit and
//! returns [`Violation`]s as values rather than failing, so callers decide
//! whether a broken invariant is fatal.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a testset, e.g. `"MNLI"` or `"PAWS"`. Case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(String);

impl DatasetId {
    pub fn new(name: impl Into<String>) -> Self {
        DatasetId(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DatasetId {
    fn from(s: &str) -> Self {
        DatasetId::new(s)
    }
}

/// Accuracy (percent, `[0, 100]`) measured at a strictly increasing sequence
/// of checkpoint steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub steps: Vec<u64>,
    pub values: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(steps: Vec<u64>, values: Vec<f64>) -> Self {
        ScoreSeries { steps, values }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Value at an exact step, if that checkpoint was measured.
    pub fn value_at(&self, step: u64) -> Option<f64> {
        self.steps.binary_search(&step).ok().map(|i| self.values[i])
    }

    /// Keep only the checkpoints whose step is in `keep` (sorted ascending).
    pub fn restricted_to(&self, keep: &[u64]) -> ScoreSeries {
        let mut steps = Vec::with_capacity(keep.len());
        let mut values = Vec::with_capacity(keep.len());
        for (&s, &v) in self.steps.iter().zip(&self.values) {
            if keep.binary_search(&s).is_ok() {
                steps.push(s);
                values.push(v);
            }
        }
        ScoreSeries { steps, values }
    }
}

/// One finetuning run: the in-domain accuracy series plus one series per
/// OOD testset, all indexed by checkpoint step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTrace {
    pub run_id: String,
    pub in_domain: DatasetId,
    pub in_domain_series: ScoreSeries,
    pub ood_series: BTreeMap<DatasetId, ScoreSeries>,
}

impl EvalTrace {
    /// All series of the trace: the in-domain one first, then OOD sorted by id.
    pub fn all_series(&self) -> impl Iterator<Item = (&DatasetId, &ScoreSeries)> {
        std::iter::once((&self.in_domain, &self.in_domain_series)).chain(self.ood_series.iter())
    }
}

/// A group of runs sharing model, size, in-domain dataset and shot count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSet {
    pub label: String,
    pub in_domain: DatasetId,
    pub traces: Vec<EvalTrace>,
}

impl RunSet {
    /// OOD dataset ids, sorted. Assumes the shared-key-set invariant holds.
    pub fn ood_datasets(&self) -> Vec<DatasetId> {
        match self.traces.first() {
            Some(t) => t.ood_series.keys().cloned().collect(),
            None => Vec::new(),
        }
    }
}

/// Pooled residuals for one OOD dataset, one point per `(run, step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub dataset: DatasetId,
    pub points: Vec<ResidualPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub run_id: String,
    pub step: u64,
    pub residual: f64,
}

impl ResidualSeries {
    pub fn residuals(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.residual).collect()
    }
}

/// A correlation value; zero-variance inputs make it undefined, never NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corr {
    Defined(f64),
    Undefined,
}

impl Corr {
    pub fn value(self) -> Option<f64> {
        match self {
            Corr::Defined(v) => Some(v),
            Corr::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Corr::Defined(_))
    }
}

// Undefined entries serialize as JSON null so they stay distinct from 0.
impl Serialize for Corr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Corr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match Option::<f64>::deserialize(d)? {
            Some(v) => Corr::Defined(v),
            None => Corr::Undefined,
        })
    }
}

/// Symmetric matrix of partial correlations over OOD dataset pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrMatrix {
    pub datasets: Vec<DatasetId>,
    entries: Vec<Vec<Corr>>,
}

impl PartialCorrMatrix {
    /// All-undefined matrix over the given datasets.
    pub fn new(datasets: Vec<DatasetId>) -> Self {
        let n = datasets.len();
        PartialCorrMatrix {
            datasets,
            entries: vec![vec![Corr::Undefined; n]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Corr {
        self.entries[i][j]
    }

    /// Sets `(i, j)` and its mirror `(j, i)`, keeping the matrix symmetric.
    pub fn set_symmetric(&mut self, i: usize, j: usize, value: Corr) {
        self.entries[i][j] = value;
        self.entries[j][i] = value;
    }

    pub fn index_of(&self, dataset: &DatasetId) -> Option<usize> {
        self.datasets.iter().position(|d| d == dataset)
    }

    /// Defined upper-triangle (i < j) entries with their dataset pair.
    pub fn defined_pairs(&self) -> Vec<(&DatasetId, &DatasetId, f64)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                if let Corr::Defined(v) = self.entries[i][j] {
                    out.push((&self.datasets[i], &self.datasets[j], v));
                }
            }
        }
        out
    }
}

/// A broken invariant, reported as data. `field` names the offending field,
/// `rule` the rule it breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(field: &str, rule: &str, detail: String) -> Self {
        Violation {
            field: field.to_string(),
            rule: rule.to_string(),
            detail,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}: {}", self.field, self.rule, self.detail)
    }
}

fn validate_series(owner: &str, series: &ScoreSeries, out: &mut Vec<Violation>) {
    if series.steps.len() != series.values.len() {
        out.push(Violation::new(
            "steps",
            "length",
            format!(
                "{owner}: {} steps but {} values",
                series.steps.len(),
                series.values.len()
            ),
        ));
    }
    if series.len() < 2 {
        out.push(Violation::new(
            "steps",
            "min-length",
            format!(
                "{owner}: series has {} checkpoints, need at least 2",
                series.len()
            ),
        ));
    }
    if series.steps.windows(2).any(|w| w[0] >= w[1]) {
        out.push(Violation::new(
            "steps",
            "increasing",
            format!("{owner}: steps not strictly increasing"),
        ));
    }
    for (&step, &v) in series.steps.iter().zip(&series.values) {
        if !(0.0..=100.0).contains(&v) || v.is_nan() {
            out.push(Violation::new(
                "values",
                "range",
                format!("{owner}: accuracy {v} at step {step} outside [0, 100]"),
            ));
        }
    }
}

/// Checks every [`EvalTrace`] invariant, returning one [`Violation`] per
/// breach. An empty result means the trace is well formed.
pub fn validate_trace(trace: &EvalTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    if trace.in_domain.name().is_empty() {
        out.push(Violation::new(
            "in_domain",
            "non-empty",
            format!("run {}: empty in-domain dataset id", trace.run_id),
        ));
    }
    if trace.ood_series.contains_key(&trace.in_domain) {
        out.push(Violation::new(
            "ood_series",
            "overlap",
            format!(
                "run {}: in-domain dataset {} also listed as OOD",
                trace.run_id, trace.in_domain
            ),
        ));
    }
    if trace.ood_series.is_empty() {
        out.push(Violation::new(
            "ood_series",
            "non-empty",
            format!("run {}: no OOD series present", trace.run_id),
        ));
    }
    for (id, series) in trace.all_series() {
        if id.name().is_empty() {
            out.push(Violation::new(
                "dataset",
                "non-empty",
                format!("run {}: empty dataset id", trace.run_id),
            ));
        }
        validate_series(
            &format!("run {} dataset {}", trace.run_id, id),
            series,
            &mut out,
        );
    }
    for (id, series) in &trace.ood_series {
        if series.steps != trace.in_domain_series.steps {
            out.push(Violation::new(
                "steps",
                "alignment",
                format!(
                    "run {}: dataset {} steps differ from in-domain steps",
                    trace.run_id, id
                ),
            ));
        }
    }
    out
}

/// Checks the set-level [`RunSet`] invariants plus every member trace.
pub fn validate_runset(runset: &RunSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if runset.traces.is_empty() {
        out.push(Violation::new(
            "traces",
            "non-empty",
            "runset has no traces".to_string(),
        ));
        return out;
    }
    let mut seen = std::collections::BTreeSet::new();
    for trace in &runset.traces {
        if !seen.insert(&trace.run_id) {
            out.push(Violation::new(
                "run_id",
                "unique",
                format!("duplicate run id {}", trace.run_id),
            ));
        }
        if trace.in_domain != runset.in_domain {
            out.push(Violation::new(
                "in_domain",
                "shared",
                format!(
                    "run {} has in-domain {} but runset declares {}",
                    trace.run_id, trace.in_domain, runset.in_domain
                ),
            ));
        }
        out.extend(validate_trace(trace));
    }
    let first_keys: Vec<&DatasetId> = runset.traces[0].ood_series.keys().collect();
    for trace in &runset.traces[1..] {
        let keys: Vec<&DatasetId> = trace.ood_series.keys().collect();
        if keys != first_keys {
            out.push(Violation::new(
                "ood_series",
                "shared",
                format!("run {} covers a different OOD dataset set", trace.run_id),
            ));
        }
    }
    out
}
